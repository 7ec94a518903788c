//! Distillation of multi-annotator irony annotations into per-variant
//! gold-labeled datasets by majority vote (exact ties go to irony).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing column {column:?} (mapped from {field})")]
    MissingColumn { field: &'static str, column: String },
    #[error("invalid column mapping {0:?}: expected field=column pairs")]
    BadColumnMap(String),
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: u64, label: String },
    #[error("line {line}: empty {field}")]
    EmptyField { line: u64, field: &'static str },
    #[error("line {line}: annotator {annotator:?} labels sentence {sentence_id:?} twice")]
    Duplicate {
        line: u64,
        sentence_id: String,
        annotator: String,
    },
    #[error("sentence {sentence_id:?} in variant {variant:?} has conflicting texts")]
    ConflictingText { variant: String, sentence_id: String },
    #[error("majority vote over an empty vote set")]
    EmptyVotes,
}

impl DistillError {
    pub fn is_io(&self) -> bool {
        matches!(self, DistillError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Irony,
    NotIrony,
}

impl Label {
    /// Case-insensitive: `iro`/`irony` and `not`/`not_irony`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iro" | "irony" => Some(Label::Irony),
            "not" | "not_irony" => Some(Label::NotIrony),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Irony => "irony",
            Label::NotIrony => "not_irony",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub text: String,
    pub variant: String,
    pub annotator_id: String,
    pub label: Label,
}

/// Header names for each input field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub sentence_id: String,
    pub text: String,
    pub variant: String,
    pub annotator: String,
    pub label: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            sentence_id: "id_sentence".into(),
            text: "text".into(),
            variant: "variant".into(),
            annotator: "annotator".into(),
            label: "label".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `field=column` overrides, e.g. `id_sentence=sid,label=gold`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, DistillError> {
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (field, column) = pair
                .split_once('=')
                .ok_or_else(|| DistillError::BadColumnMap(pair.to_string()))?;
            let slot = match field.trim() {
                "id_sentence" | "sentence_id" => &mut self.sentence_id,
                "text" => &mut self.text,
                "variant" => &mut self.variant,
                "annotator" | "annotator_id" => &mut self.annotator,
                "label" => &mut self.label,
                _ => return Err(DistillError::BadColumnMap(pair.to_string())),
            };
            *slot = column.trim().to_string();
        }
        Ok(self)
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<AnnotationRecord>, DistillError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(std::io::BufReader::new(file), columns)
}

pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Vec<AnnotationRecord>, DistillError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DistillError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |field: &'static str, column: &str| {
        headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| DistillError::MissingColumn {
                field,
                column: column.to_string(),
            })
    };
    let i_sid = find("id_sentence", &columns.sentence_id)?;
    let i_text = find("text", &columns.text)?;
    let i_var = find("variant", &columns.variant)?;
    let i_ann = find("annotator", &columns.annotator)?;
    let i_lab = find("label", &columns.label)?;

    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| DistillError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &'static str, trim: bool| {
            let v = rec.get(i).unwrap_or("");
            let v = if trim { v.trim() } else { v };
            if v.trim().is_empty() {
                Err(DistillError::EmptyField { line, field: name })
            } else {
                Ok(v.to_string())
            }
        };
        let sentence_id = field(i_sid, "id_sentence", true)?;
        let text = field(i_text, "text", false)?;
        let variant = field(i_var, "variant", true)?;
        let annotator_id = field(i_ann, "annotator", true)?;
        let raw_label = rec.get(i_lab).unwrap_or("");
        let label = Label::parse(raw_label).ok_or_else(|| DistillError::UnknownLabel {
            line,
            label: raw_label.to_string(),
        })?;
        if !seen.insert((sentence_id.clone(), annotator_id.clone())) {
            return Err(DistillError::Duplicate {
                line,
                sentence_id,
                annotator: annotator_id,
            });
        }
        out.push(AnnotationRecord {
            sentence_id,
            text,
            variant,
            annotator_id,
            label,
        });
    }
    Ok(out)
}

/// Strict majority wins; an exact tie yields `(Irony, true)`.
pub fn majority_vote(votes: &[Label]) -> Result<(Label, bool), DistillError> {
    if votes.is_empty() {
        return Err(DistillError::EmptyVotes);
    }
    let irony = votes.iter().filter(|&&l| l == Label::Irony).count();
    let not = votes.len() - irony;
    Ok(match irony.cmp(&not) {
        std::cmp::Ordering::Greater => (Label::Irony, false),
        std::cmp::Ordering::Less => (Label::NotIrony, false),
        std::cmp::Ordering::Equal => (Label::Irony, true),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistilledItem {
    pub sentence_id: String,
    pub text: String,
    pub gold: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VariantStats {
    pub variant: String,
    pub n_items: usize,
    pub n_irony: usize,
    pub n_not: usize,
    pub n_ties_resolved: usize,
    /// Sentences of this variant whose id also occurs under another variant.
    pub n_cross_variant_duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantDataset {
    pub variant: String,
    pub items: Vec<DistilledItem>,
    pub stats: VariantStats,
}

/// Groups by `(variant, sentence_id)` and majority-votes each group. Items
/// are sorted by sentence id; the output does not depend on record order.
pub fn distill(records: &[AnnotationRecord]) -> Result<BTreeMap<String, VariantDataset>, DistillError> {
    struct Group<'a> {
        text: &'a str,
        votes: Vec<Label>,
    }
    let mut groups: BTreeMap<(&str, &str), Group> = BTreeMap::new();
    for r in records {
        let g = groups
            .entry((r.variant.as_str(), r.sentence_id.as_str()))
            .or_insert_with(|| Group {
                text: &r.text,
                votes: Vec::new(),
            });
        if g.text != r.text {
            return Err(DistillError::ConflictingText {
                variant: r.variant.clone(),
                sentence_id: r.sentence_id.clone(),
            });
        }
        g.votes.push(r.label);
    }

    let mut variants_of: HashMap<&str, usize> = HashMap::new();
    for (_, sid) in groups.keys() {
        *variants_of.entry(sid).or_default() += 1;
    }

    let mut out: BTreeMap<String, VariantDataset> = BTreeMap::new();
    for ((variant, sid), group) in &groups {
        let (gold, tie) = majority_vote(&group.votes)?;
        let ds = out
            .entry(variant.to_string())
            .or_insert_with(|| VariantDataset {
                variant: variant.to_string(),
                items: Vec::new(),
                stats: VariantStats {
                    variant: variant.to_string(),
                    ..VariantStats::default()
                },
            });
        ds.items.push(DistilledItem {
            sentence_id: sid.to_string(),
            text: group.text.to_string(),
            gold,
        });
        let s = &mut ds.stats;
        s.n_items += 1;
        match gold {
            Label::Irony => s.n_irony += 1,
            Label::NotIrony => s.n_not += 1,
        }
        if tie {
            s.n_ties_resolved += 1;
        }
        if variants_of[sid] > 1 {
            s.n_cross_variant_duplicates += 1;
        }
    }
    Ok(out)
}

/// File-name-safe form of a variant label.
pub fn variant_file_stem(variant: &str) -> String {
    variant
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn dataset_csv(ds: &VariantDataset) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["id", "text", "label"]).expect("in-memory write");
    for item in &ds.items {
        w.write_record([item.sentence_id.as_str(), item.text.as_str(), item.gold.as_str()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Writes `<variant>.csv` per dataset plus `stats.json`; returns the paths.
pub fn write_datasets(
    datasets: &BTreeMap<String, VariantDataset>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, DistillError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DistillError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for ds in datasets.values() {
        let path = out_dir.join(format!("{}.csv", variant_file_stem(&ds.variant)));
        std::fs::write(&path, dataset_csv(ds)).map_err(io(&path))?;
        written.push(path);
    }
    let stats: Vec<&VariantStats> = datasets.values().map(|d| &d.stats).collect();
    let path = out_dir.join("stats.json");
    let json = serde_json::to_string_pretty(&stats).expect("stats serialization");
    std::fs::write(&path, json + "\n").map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    fn rec(sid: &str, variant: &str, ann: &str, label: Label) -> AnnotationRecord {
        AnnotationRecord {
            sentence_id: sid.into(),
            text: format!("text of {sid}"),
            variant: variant.into(),
            annotator_id: ann.into(),
            label,
        }
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[Irony, Irony, NotIrony]).unwrap(), (Irony, false));
        assert_eq!(majority_vote(&[Irony, NotIrony]).unwrap(), (Irony, true));
        assert_eq!(
            majority_vote(&[NotIrony, NotIrony, NotIrony, Irony]).unwrap(),
            (NotIrony, false)
        );
        assert!(matches!(majority_vote(&[]), Err(DistillError::EmptyVotes)));
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!(Label::parse("IRO"), Some(Irony));
        assert_eq!(Label::parse("Irony"), Some(Irony));
        assert_eq!(Label::parse("not"), Some(NotIrony));
        assert_eq!(Label::parse("NOT_IRONY"), Some(NotIrony));
        assert_eq!(Label::parse("maybe"), None);
    }

    #[test]
    fn ingest_valid_and_invalid() {
        let csv = "id_sentence,text,variant,annotator,label\n\
                   s1,\"hello, world\",GB,a1,iro\n\
                   s1,\"hello, world\",GB,a2,not\n";
        let recs = ingest_reader(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].text, "hello, world");
        assert_eq!(recs[1].label, NotIrony);

        let bad = "id_sentence,text,variant,annotator,label\ns1,t,GB,a1,iro\ns2,t,GB,a1,maybe\n";
        match ingest_reader(bad.as_bytes(), &ColumnMap::default()) {
            Err(DistillError::UnknownLabel { line, label }) => {
                assert_eq!(line, 3);
                assert_eq!(label, "maybe");
            }
            other => panic!("unexpected {other:?}"),
        }

        let dup = "id_sentence,text,variant,annotator,label\ns1,t,GB,a1,iro\ns1,t,GB,a1,not\n";
        assert!(matches!(
            ingest_reader(dup.as_bytes(), &ColumnMap::default()),
            Err(DistillError::Duplicate { line: 3, .. })
        ));

        let missing = "id_sentence,text,variant,label\ns1,t,GB,iro\n";
        assert!(matches!(
            ingest_reader(missing.as_bytes(), &ColumnMap::default()),
            Err(DistillError::MissingColumn { field: "annotator", .. })
        ));
    }

    #[test]
    fn column_remap() {
        let map = ColumnMap::default()
            .with_overrides("id_sentence=sid, annotator=user, label=gold")
            .unwrap();
        let csv = "sid,text,variant,user,gold\nx,t,IE,u,not\n";
        let recs = ingest_reader(csv.as_bytes(), &map).unwrap();
        assert_eq!(recs[0].sentence_id, "x");
        assert_eq!(recs[0].annotator_id, "u");
        assert!(ColumnMap::default().with_overrides("bogus=x").is_err());
        assert!(ColumnMap::default().with_overrides("text").is_err());
    }

    #[test]
    fn single_tie_group() {
        let out = distill(&[rec("s", "AU", "a", Irony), rec("s", "AU", "b", NotIrony)]).unwrap();
        let ds = &out["AU"];
        assert_eq!(ds.items.len(), 1);
        assert_eq!(ds.items[0].gold, Irony);
        assert_eq!(ds.stats.n_ties_resolved, 1);
    }

    #[test]
    fn groups_by_variant() {
        let records = vec![
            rec("s2", "GB", "a", NotIrony),
            rec("s1", "GB", "b", Irony),
            rec("s1", "US", "c", NotIrony),
        ];
        let out = distill(&records).unwrap();
        assert_eq!(out.len(), 2);
        let gb = &out["GB"];
        assert_eq!(
            gb.items.iter().map(|i| i.sentence_id.as_str()).collect::<Vec<_>>(),
            vec!["s1", "s2"]
        );
        assert_eq!(gb.stats.n_cross_variant_duplicates, 1);
        assert_eq!(out["US"].stats.n_items, 1);
        assert!(distill(&[]).unwrap().is_empty());
    }

    #[test]
    fn conflicting_text_is_an_error() {
        let mut b = rec("s", "AU", "b", Irony);
        b.text = "different".into();
        assert!(matches!(
            distill(&[rec("s", "AU", "a", Irony), b]),
            Err(DistillError::ConflictingText { .. })
        ));
    }

    #[test]
    fn output_csv_quotes_when_needed() {
        let out = distill(&[AnnotationRecord {
            sentence_id: "s".into(),
            text: "a, \"quoted\" text".into(),
            variant: "IN".into(),
            annotator_id: "a".into(),
            label: NotIrony,
        }])
        .unwrap();
        assert_eq!(
            dataset_csv(&out["IN"]),
            "id,text,label\ns,\"a, \"\"quoted\"\" text\",not_irony\n"
        );
    }
}
