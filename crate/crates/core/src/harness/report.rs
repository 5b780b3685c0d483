//! Assemble the metric report for one module combination from its
//! training runs, and emit the JSON/CSV/SVG artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::read_predictions;
use super::svg::radar_chart;
use super::train::RunRecord;
use super::HarnessError;
use crate::corpus::Vocabulary;
use crate::metrics::{
    assemble_report, in_vocab_rate, MetricsReport, RunMatrix, SubsetDef, TrainSet,
};
use crate::models::{CntxKind, PredKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelRef {
    pub pred: PredKind,
    pub cntx: CntxKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub model: ModelRef,
    #[serde(flatten)]
    pub report: MetricsReport,
}

fn train_set_of(kind: &str) -> Result<TrainSet, HarnessError> {
    match kind {
        "rs" => Ok(TrainSet::Rs),
        "ms" => Ok(TrainSet::Ms),
        "ls" => Ok(TrainSet::Ls),
        other => Err(HarnessError::BadArgument(format!(
            "unknown training corpus kind {other:?}"
        ))),
    }
}

/// Build the accuracy matrix from one combination's run records. Every
/// record must use the same test subsets, counts, and step budget.
pub fn matrix_from_runs(records: &[RunRecord]) -> Result<RunMatrix, HarnessError> {
    let first = records
        .first()
        .ok_or_else(|| HarnessError::MissingRun("no runs provided".into()))?;
    let budget = first.config.steps;
    let combo = (first.config.pred, first.config.cntx);
    for rec in records {
        if (rec.config.pred, rec.config.cntx) != combo {
            return Err(HarnessError::BadArgument(format!(
                "mixed module combinations in one report: {}-{} vs {}-{}",
                combo.0, combo.1, rec.config.pred, rec.config.cntx
            )));
        }
        if rec.config.steps != budget {
            return Err(HarnessError::BudgetMismatch {
                expected: budget,
                got: rec.config.steps,
                kind: rec.train_kind.clone(),
            });
        }
    }
    let mut subsets: Vec<SubsetDef> = first
        .accuracies
        .iter()
        .map(|(name, s)| SubsetDef {
            name: name.clone(),
            in_vocab: s.label_in_vocab_share >= 0.5,
            count: s.count,
        })
        .collect();
    subsets.sort_by(|a, b| b.in_vocab.cmp(&a.in_vocab).then(a.name.cmp(&b.name)));
    let in_name = subsets
        .iter()
        .find(|s| s.in_vocab)
        .ok_or_else(|| HarnessError::MissingRun("no in-vocabulary test subset".into()))?
        .name
        .clone();
    let out_name = subsets
        .iter()
        .find(|s| !s.in_vocab)
        .ok_or_else(|| HarnessError::MissingRun("no out-of-vocabulary test subset".into()))?
        .name
        .clone();
    let mut matrix = RunMatrix::new(subsets, (&in_name, &out_name))?;

    for rec in records {
        let train = train_set_of(&rec.train_kind)?;
        for (name, s) in &rec.accuracies {
            matrix.set(train, name, s.accuracy)?;
        }
        // prediction rate against the run's training vocabulary
        let vocab_path = rec.config.data_dir.join("vocab.txt");
        if vocab_path.exists() {
            let vocab = Vocabulary::from_path(&vocab_path, "train")?;
            let mut preds = Vec::new();
            for s in rec.accuracies.values() {
                preds.extend(
                    read_predictions(&s.predictions)?
                        .into_iter()
                        .map(|p| p.pred),
                );
            }
            if !preds.is_empty() {
                matrix.set_in_vocab_rate(train, in_vocab_rate(&preds, &vocab)?);
            }
        }
    }
    Ok(matrix)
}

/// Assemble the report for a set of runs of one combination across
/// training corpora, writing `report.json`, `report.csv`, and
/// `report_radar.svg` into `out_dir`.
pub fn run_report(records: &[RunRecord], out_dir: &Path) -> Result<ReportBundle, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let matrix = matrix_from_runs(records)?;
    let report = assemble_report(&matrix)?;
    let bundle = ReportBundle {
        model: ModelRef {
            pred: records[0].config.pred,
            cntx: records[0].config.cntx,
        },
        report,
    };
    serde_json::to_writer_pretty(
        std::fs::File::create(out_dir.join("report.json"))?,
        &bundle,
    )?;
    std::fs::write(out_dir.join("report.csv"), matrix_to_csv(&matrix))?;
    let r = &bundle.report;
    let svg = radar_chart(
        &format!("{}-{}", bundle.model.pred, bundle.model.cntx),
        &[
            ("OA".into(), r.oa),
            ("VA".into(), r.va),
            ("VG".into(), r.vg.clamp(0.0, 100.0)),
            ("HM".into(), r.hm),
        ],
    );
    std::fs::write(out_dir.join("report_radar.svg"), svg)?;
    Ok(bundle)
}

/// Scan a directory of run subdirectories (each holding `run.json`) and
/// report on them.
pub fn run_report_dir(runs_dir: &Path, out_dir: &Path) -> Result<ReportBundle, HarnessError> {
    let mut records = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(runs_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        if path.join("run.json").exists() {
            records.push(super::train::load_run_record(&path)?);
        }
    }
    if records.is_empty() {
        return Err(HarnessError::MissingRun(format!(
            "no run.json found under {}",
            runs_dir.display()
        )));
    }
    run_report(&records, out_dir)
}

/// Accuracy-table CSV: metadata rows (count, in-vocab flag, gap pair),
/// then one row per training set with per-subset accuracies and the
/// gap/ngap columns.
pub fn matrix_to_csv(matrix: &RunMatrix) -> String {
    let mut out = String::new();
    let names: Vec<&str> = matrix.subsets.iter().map(|s| s.name.as_str()).collect();
    out.push_str(&format!("train,{},gap,ngap\n", names.join(",")));
    let counts: Vec<String> = matrix
        .subsets
        .iter()
        .map(|s| s.count.to_string())
        .collect();
    out.push_str(&format!("count,{},,\n", counts.join(",")));
    let flags: Vec<String> = matrix
        .subsets
        .iter()
        .map(|s| s.in_vocab.to_string())
        .collect();
    out.push_str(&format!("in_vocab,{},,\n", flags.join(",")));
    out.push_str(&format!(
        "gap_pair,{},{},,\n",
        matrix.gap_pair.0, matrix.gap_pair.1
    ));
    let report = assemble_report(matrix).ok();
    for train in [TrainSet::Rs, TrainSet::Ms, TrainSet::Ls] {
        let mut cells = Vec::new();
        let mut have_all = true;
        for s in &matrix.subsets {
            match matrix.get(train, &s.name) {
                Some(a) => cells.push(format!("{a}")),
                None => {
                    have_all = false;
                    break;
                }
            }
        }
        if !have_all {
            continue;
        }
        let (gap, ngap) = report
            .as_ref()
            .map(|r| {
                (
                    r.gap.get(train).map_or(String::new(), |v| format!("{v}")),
                    r.ngap.get(train).map_or(String::new(), |v| format!("{v}")),
                )
            })
            .unwrap_or_default();
        out.push_str(&format!("{train},{},{gap},{ngap}\n", cells.join(",")));
    }
    out
}

/// Parse [`matrix_to_csv`] output back into a matrix.
pub fn matrix_from_csv(csv: &str) -> Result<RunMatrix, HarnessError> {
    let mut lines = csv.lines();
    let bad = |m: &str| HarnessError::BadArgument(format!("csv: {m}"));
    let header = lines.next().ok_or_else(|| bad("empty"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "train" {
        return Err(bad("missing train header"));
    }
    let subset_names: Vec<String> = cols[1..cols.len() - 2]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut counts = Vec::new();
    let mut flags = Vec::new();
    let mut pair = (String::new(), String::new());
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "count" => {
                counts = fields[1..=subset_names.len()]
                    .iter()
                    .map(|v| v.parse::<u64>().map_err(|_| bad("bad count")))
                    .collect::<Result<_, _>>()?;
            }
            "in_vocab" => {
                flags = fields[1..=subset_names.len()]
                    .iter()
                    .map(|v| v.parse::<bool>().map_err(|_| bad("bad flag")))
                    .collect::<Result<_, _>>()?;
            }
            "gap_pair" => {
                pair = (fields[1].to_string(), fields[2].to_string());
            }
            train => {
                let t = train_set_of(train)?;
                let accs: Vec<f64> = fields[1..=subset_names.len()]
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|_| bad("bad accuracy")))
                    .collect::<Result<_, _>>()?;
                rows.push((t, accs));
            }
        }
    }
    if counts.len() != subset_names.len() || flags.len() != subset_names.len() {
        return Err(bad("missing count/in_vocab rows"));
    }
    let subsets: Vec<SubsetDef> = subset_names
        .iter()
        .zip(&flags)
        .zip(&counts)
        .map(|((name, &in_vocab), &count)| SubsetDef {
            name: name.clone(),
            in_vocab,
            count,
        })
        .collect();
    let mut matrix = RunMatrix::new(subsets, (&pair.0, &pair.1))?;
    for (train, accs) in rows {
        for (name, acc) in subset_names.iter().zip(accs) {
            matrix.set(train, name, acc)?;
        }
    }
    Ok(matrix)
}
