use std::path::Path;

use kenforge::distill::write_datasets;
use kenforge::{
    apply_masks, difference_masks, distill as distill_records, emit_overlap_table, emit_tri_panel,
    in_breadth, ingest_csv, k_sweep, pairwise_overlap, read_checkpoint, read_masks,
    reset_percentage, write_checkpoint, write_masks, Checkpoint, ColumnMap, CommandEvaluator,
    Evaluator, MaskSet, QuadraticEvaluator, ResetScope, TensorFilter,
};
use log::info;
use serde_json::{json, Value};

use crate::error::{reading, writing_checkpoint, writing_masks, CliError, CliResult};
use crate::{
    CompareArgs, DistillArgs, InbreadthArgs, PruneArgs, Scope, SweepArgs, TensorSelect, VizArgs,
};

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let c = read_checkpoint(path).map_err(|e| match e.is_io() {
        true => reading(e),
        false => reading(format!("{}: {e}", path.display())),
    })?;
    info!("{}: {} tensors", path.display(), c.tensors.len());
    Ok(c)
}

fn load_masks(path: &Path) -> CliResult<MaskSet> {
    read_masks(path).map_err(|e| match e.is_io() {
        true => reading(e),
        false => reading(format!("{}: {e}", path.display())),
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

/// Names to prune. Explicit names are passed through unchanged so that an
/// unknown name is reported rather than silently dropped.
fn prunable(select: &TensorSelect, fine: &Checkpoint) -> CliResult<Vec<String>> {
    let names = match select.filter()? {
        TensorFilter::Names(names) => names,
        filter => filter.select(fine.names()),
    };
    if names.is_empty() {
        return Err(CliError::input("no tensors selected"));
    }
    Ok(names)
}

pub fn distill(args: DistillArgs) -> CliResult<Value> {
    let columns = match &args.columns {
        Some(spec) => ColumnMap::default().with_overrides(spec)?,
        None => ColumnMap::default(),
    };
    let records = ingest_csv(&args.input, &columns).map_err(|e| match e.is_io() {
        true => reading(e),
        false => reading(format!("{}: {e}", args.input.display())),
    })?;
    info!("{} annotation rows", records.len());
    let datasets = distill_records(&records)?;
    let written = write_datasets(&datasets, &args.out_dir)?;
    info!("wrote {} files to {}", written.len(), args.out_dir.display());
    let stats: Vec<_> = datasets.values().map(|d| &d.stats).collect();
    Ok(to_json(&stats))
}

pub fn prune(args: PruneArgs) -> CliResult<Value> {
    let cfg = args.kde.config()?;
    let pre = load_checkpoint(&args.pre)?;
    let fine = load_checkpoint(&args.fine)?;
    let names = prunable(&args.select, &fine)?;
    let masks = kenforge::build_masks(&fine, &names, args.k, &cfg)?;
    let scope = match args.scope {
        Scope::Masked => ResetScope::MaskedOnly,
        Scope::All => ResetScope::AllNamed(fine.names().map(str::to_owned).collect()),
    };
    let report = reset_percentage(&masks, &fine, &scope)?;
    let pruned = apply_masks(&pre, &fine, &masks)?;
    if let Some(p) = &args.out_masks {
        write_masks(&masks, p).map_err(writing_masks)?;
    }
    if let Some(p) = &args.out_pruned {
        write_checkpoint(&pruned, p).map_err(writing_checkpoint)?;
    }
    Ok(to_json(&report))
}

pub fn sweep(args: SweepArgs) -> CliResult<Value> {
    let cfg = args.kde.config()?;
    let pre = load_checkpoint(&args.pre)?;
    let fine = load_checkpoint(&args.fine)?;
    let names = prunable(&args.select, &fine)?;
    let mut eval: Box<dyn Evaluator> = match &args.eval_cmd {
        Some(cmd) => {
            let argv = shlex::split(cmd)
                .ok_or_else(|| CliError::input(format!("--eval-cmd: unbalanced quoting in {cmd:?}")))?;
            Box::new(CommandEvaluator::new(argv).map_err(CliError::input)?)
        }
        None => Box::new(QuadraticEvaluator::new(fine.clone())),
    };
    let baseline = match args.baseline {
        Some(b) => b,
        None => {
            let b = eval.score(&fine).map_err(|e| CliError {
                exit: crate::error::Exit::Evaluator,
                message: format!("evaluator failed on the fine-tuned checkpoint: {e}"),
            })?;
            info!("baseline from fine-tuned checkpoint: {b}");
            b
        }
    };
    let outcome = k_sweep(&pre, &fine, &names, &cfg, eval.as_mut(), &args.schedule, baseline)?;
    if let Some(p) = &args.out_masks {
        write_masks(&outcome.masks, p).map_err(writing_masks)?;
    }
    if let Some(p) = &args.out_pruned {
        let pruned = apply_masks(&pre, &fine, &outcome.masks)?;
        write_checkpoint(&pruned, p).map_err(writing_checkpoint)?;
    }
    Ok(to_json(&outcome))
}

pub fn compare(args: CompareArgs) -> CliResult<Value> {
    let a = load_masks(&args.a)?;
    let b = load_masks(&args.b)?;
    let mut report = pairwise_overlap(&a, &b, &args.select.filter()?)?;
    if let Some(l) = args.label_a {
        report.label_a = l;
    }
    if let Some(l) = args.label_b {
        report.label_b = l;
    }
    report.model = args.model;
    if let Some(out) = &args.out {
        if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            emit_overlap_table(std::slice::from_ref(&report), out)?;
        } else {
            let text = serde_json::to_string_pretty(&report).expect("json report") + "\n";
            std::fs::write(out, text)
                .map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
        }
    }
    Ok(to_json(&report))
}

pub fn inbreadth(args: InbreadthArgs) -> CliResult<Value> {
    let sets = args
        .masks
        .iter()
        .map(|p| load_masks(p))
        .collect::<CliResult<Vec<_>>>()?;
    let report = in_breadth(&sets, &args.select.filter()?)?;
    Ok(report.to_json())
}

pub fn viz(args: VizArgs) -> CliResult<Value> {
    let a = load_masks(&args.a)?;
    let b = load_masks(&args.b)?;
    let parts = difference_masks(&a, &b, &args.tensor)?;
    let paths = emit_tri_panel(&parts, &args.out_prefix, args.format, args.stride)?;
    Ok(json!({
        "tensor": args.tensor,
        "shape": parts.common.shape(),
        "common": parts.common.count_ones(),
        "a_only": parts.a_only.count_ones(),
        "b_only": parts.b_only.count_ones(),
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}
