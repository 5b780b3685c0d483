//! Ratio sweeps: synthesize MS(r) for each requested ratio, train, and
//! trace accuracies, the in/out gap, and the in-vocabulary prediction
//! rate as r moves.
//!
//! All ratios share one synthesis seed, so the underlying sample streams
//! are common random numbers and only the mixing threshold moves.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::read_predictions;
use super::svg::line_chart;
use super::synth::{run_synth, SynthKind};
use super::train::{run_train, TrainConfig};
use super::HarnessError;
use crate::corpus::Vocabulary;
use crate::metrics::in_vocab_rate;
use crate::models::{CntxKind, PredKind};
use crate::render::StyleParams;
use crate::rng::derive_seed;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub pred: PredKind,
    pub cntx: CntxKind,
    pub train_count: u64,
    pub test_count: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub acc_in: f64,
    pub acc_out: f64,
    pub gap: f64,
    pub in_vocab_rate: f64,
}

pub fn run_sweep(
    cfg: &SweepConfig,
    vocab_train: &Vocabulary,
    vocab_reserve: &Vocabulary,
    out_dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    if cfg.ratios.is_empty() {
        return Err(HarnessError::BadArgument("no ratios given".into()));
    }
    for &r in &cfg.ratios {
        if !(0.0..=1.0).contains(&r) {
            return Err(HarnessError::BadArgument(format!("ratio {r} outside [0,1]")));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let style = StyleParams::default();
    let test_in = out_dir.join("test_invoc");
    let test_out = out_dir.join("test_outvoc");
    run_synth(
        SynthKind::Ls,
        0.0,
        cfg.test_count,
        derive_seed(cfg.seed, "test-in", 0),
        &test_in,
        vocab_train,
        &style,
    )?;
    run_synth(
        SynthKind::Ls,
        0.0,
        cfg.test_count,
        derive_seed(cfg.seed, "test-out", 0),
        &test_out,
        vocab_reserve,
        &style,
    )?;

    let mut rows = Vec::with_capacity(cfg.ratios.len());
    for (i, &r) in cfg.ratios.iter().enumerate() {
        let point_dir = out_dir.join(format!("r{i:02}"));
        let data_dir = point_dir.join("data");
        run_synth(
            SynthKind::Ms,
            r,
            cfg.train_count,
            derive_seed(cfg.seed, "synth", 0),
            &data_dir,
            vocab_train,
            &style,
        )?;
        let train_cfg = TrainConfig {
            pred: cfg.pred,
            cntx: cfg.cntx,
            data_dir,
            steps: cfg.steps,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: cfg.seed,
        };
        let record = run_train(
            &train_cfg,
            &point_dir.join("run"),
            &[
                ("invoc".to_string(), test_in.clone()),
                ("outvoc".to_string(), test_out.clone()),
            ],
        )?;
        let acc_in = record.accuracies["invoc"].accuracy;
        let acc_out = record.accuracies["outvoc"].accuracy;
        let mut preds = Vec::new();
        for s in record.accuracies.values() {
            preds.extend(read_predictions(&s.predictions)?.into_iter().map(|p| p.pred));
        }
        rows.push(SweepRow {
            r,
            acc_in,
            acc_out,
            gap: acc_in - acc_out,
            in_vocab_rate: in_vocab_rate(&preds, vocab_train)?,
        });
    }

    serde_json::to_writer_pretty(std::fs::File::create(out_dir.join("sweep.json"))?, &rows)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
    writeln!(csv, "r,acc_in,acc_out,gap,in_vocab_rate")?;
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            row.r, row.acc_in, row.acc_out, row.gap, row.in_vocab_rate
        )?;
    }
    drop(csv);
    let series = vec![
        (
            "acc_in".to_string(),
            rows.iter().map(|r| (r.r, r.acc_in)).collect(),
        ),
        (
            "acc_out".to_string(),
            rows.iter().map(|r| (r.r, r.acc_out)).collect(),
        ),
        (
            "gap".to_string(),
            rows.iter().map(|r| (r.r, r.gap)).collect(),
        ),
        (
            "invoc_pred_%".to_string(),
            rows.iter()
                .map(|r| (r.r, 100.0 * r.in_vocab_rate))
                .collect(),
        ),
    ];
    std::fs::write(
        out_dir.join("sweep.svg"),
        line_chart("ratio sweep", "ratio r of random-corpus data", &series),
    )?;
    Ok(rows)
}
