//! Tensor selection by explicit name list or regular expression.

use regex::Regex;

#[derive(Debug, Clone, Default)]
pub enum TensorFilter {
    #[default]
    All,
    Names(Vec<String>),
    Pattern(Regex),
}

impl TensorFilter {
    pub fn names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TensorFilter::Names(names.into_iter().map(Into::into).collect())
    }

    pub fn pattern(re: &str) -> Result<Self, regex::Error> {
        Ok(TensorFilter::Pattern(Regex::new(re)?))
    }

    pub fn matches(&self, name: &str) -> bool {
        match self {
            TensorFilter::All => true,
            TensorFilter::Names(names) => names.iter().any(|n| n == name),
            TensorFilter::Pattern(re) => re.is_match(name),
        }
    }

    /// Names from `candidates` accepted by the filter, in candidate order.
    pub fn select<'a>(&self, candidates: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        candidates
            .into_iter()
            .filter(|n| self.matches(n))
            .map(str::to_owned)
            .collect()
    }
}
