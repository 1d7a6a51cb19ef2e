//! Markdown rendering of evaluation results.
//!
//! Two tables per evaluated split: weak-source quality (coverage and
//! Macro-F1 over covered samples) and final Macro-F1 for every method.
//! Sources sharing a group also get a mean ± std row; the std is the sample
//! standard deviation across the group's sources (0 for a single source).

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::pipeline::{EvalSummary, SourceEval, SplitEval, TrainSummary};

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// `(mean, sample std)`; std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn pm(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{} ± {}", pct(m), pct(s))
}

fn grouped(sources: &[SourceEval]) -> BTreeMap<&str, Vec<&SourceEval>> {
    let mut out: BTreeMap<&str, Vec<&SourceEval>> = BTreeMap::new();
    for s in sources {
        out.entry(s.group.as_str()).or_default().push(s);
    }
    out
}

fn source_table(out: &mut String, split: &SplitEval) {
    let name = split.split.name();
    let _ = writeln!(out, "### Weak sources ({name})\n");
    let _ = writeln!(out, "| Source | Group | Coverage (%) | Macro-F1 covered (%) |");
    let _ = writeln!(out, "|---|---|---:|---:|");
    for s in &split.sources {
        let f1 = s.covered_macro_f1.map_or_else(|| "-".to_string(), pct);
        let _ = writeln!(out, "| {} | {} | {} | {} |", s.source, s.group, pct(s.coverage), f1);
    }
    for (group, members) in grouped(&split.sources) {
        if members.len() < 2 {
            continue;
        }
        let cov: Vec<f64> = members.iter().map(|s| s.coverage).collect();
        let f1: Vec<f64> = members.iter().filter_map(|s| s.covered_macro_f1).collect();
        let _ = writeln!(
            out,
            "| {group}: mean ± std over {} sources | {group} | {} | {} |",
            members.len(),
            pm(&cov),
            if f1.is_empty() { "-".into() } else { pm(&f1) }
        );
    }
    out.push('\n');
}

fn final_table(out: &mut String, split: &SplitEval) {
    let name = split.split.name();
    let _ = writeln!(out, "### Final results, Macro-F1 ({name}, n = {})\n", split.n_gold);
    let _ = writeln!(out, "| Method | Macro-F1 (%) |");
    let _ = writeln!(out, "|---|---:|");
    for s in &split.sources {
        let _ = writeln!(out, "| {} ({}) | {} |", s.source, s.group, pct(s.baseline.macro_f1));
    }
    let groups = grouped(&split.sources);
    for (group, members) in &groups {
        if members.len() < 2 {
            continue;
        }
        let f1: Vec<f64> = members.iter().map(|s| s.baseline.macro_f1).collect();
        let _ = writeln!(out, "| {group}: mean ± std over {} sources | {} |", members.len(), pm(&f1));
    }
    let _ = writeln!(out, "| Majority vote | {} |", pct(split.majority.macro_f1));
    for (group, members) in &groups {
        let f1: Vec<f64> = members.iter().filter_map(|s| s.wsm_macro_f1).collect();
        if f1.is_empty() {
            continue;
        }
        let _ = writeln!(out, "| WSM per source, {group}: mean ± std over {} sources | {} |", f1.len(), pm(&f1));
    }
    let _ = writeln!(out, "| WSM | {} |", pct(split.wsm.macro_f1));
    out.push('\n');
}

pub fn render_report(summary: &EvalSummary, train: Option<&TrainSummary>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Results: {} (seed {})\n", summary.task, summary.seed);
    let _ = writeln!(
        out,
        "Source rows in the final table count abstentions as false negatives; the weak-source table scores covered samples only.\n"
    );
    for split in &summary.splits {
        source_table(&mut out, split);
        final_table(&mut out, split);
    }
    if let Some(t) = train {
        let _ = writeln!(out, "### Training\n");
        let _ = writeln!(out, "Weakly labeled: {} of {} train samples.\n", t.covered, t.samples);
        let _ = writeln!(out, "| Round | Confident | Mean confidence | Loss |");
        let _ = writeln!(out, "|---:|---:|---:|---:|");
        for r in &t.self_training.rounds {
            let _ = writeln!(out, "| {} | {} | {:.4} | {:.4} |", r.round, r.confident, r.mean_confidence, r.loss);
        }
        if let Some(r) = t.self_training.stopped_early_at {
            let _ = writeln!(out, "\nStopped early at round {r}: empty confident set.");
        }
        for p in &t.per_source {
            if let Some(why) = &p.skipped {
                let _ = writeln!(out, "\nPer-source WSM for {} skipped: {why}", p.source);
            }
        }
        let _ = writeln!(out, "\nParameter checksum: `{}`", t.self_training.checksum);
    }
    out
}
