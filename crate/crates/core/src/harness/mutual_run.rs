//! Mutual-learning runs: train the attention/segmentation pair and emit
//! one evaluable run directory per model plus the joint training log.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::eval_model;
use super::manifest::Dataset;
use super::train::{batch_indices, RunRecord, SubsetResult, TrainConfig};
use super::HarnessError;
use crate::autodiff::{checkpoint, AdamHyper};
use crate::models::{CntxKind, Model, PredKind};
use crate::mutual::MutualPair;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MutualRunConfig {
    pub data_dir: PathBuf,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub kl_weight: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MutualStepLog {
    pub step: u64,
    pub l1: f64,
    pub l2: f64,
    pub mean_kl: f64,
}

/// Advance the pair over a step range; batches match standalone training
/// with the same seed.
pub fn train_mutual_steps(
    pair: &mut MutualPair<f32>,
    data: &Dataset,
    steps: std::ops::Range<u64>,
    batch_size: usize,
    seed: u64,
    log: &mut Vec<MutualStepLog>,
) -> Result<(), HarnessError> {
    if data.is_empty() {
        return Err(HarnessError::BadArgument("empty training dataset".into()));
    }
    for step in steps {
        let idx = batch_indices(seed, step, batch_size, data.len());
        let imgs: Vec<&crate::render::TextImage> = idx.iter().map(|&i| &data.items[i]).collect();
        let rec = pair.step(&imgs)?;
        if !rec.l1.is_finite() || !rec.l2.is_finite() || !rec.mean_kl.is_finite() {
            return Err(HarnessError::NonFiniteLoss {
                step,
                loss: rec.l1.min(rec.l2),
            });
        }
        log.push(MutualStepLog {
            step,
            l1: rec.l1,
            l2: rec.l2,
            mean_kl: rec.mean_kl,
        });
    }
    Ok(())
}

fn save_half(
    model: &Model<f32>,
    cfg: &MutualRunConfig,
    pred: PredKind,
    dir: &Path,
    test_sets: &[(String, PathBuf)],
    wall_secs: f64,
) -> Result<RunRecord, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let ckpt = dir.join("model.ckpt");
    checkpoint::save(&model.store, &ckpt)?;
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("model.json"))?, &model.config)?;
    let vocab = crate::corpus::Vocabulary::from_path(&cfg.data_dir.join("vocab.txt"), "train")?;
    let data = Dataset::load(&cfg.data_dir)?;
    let mut accuracies = std::collections::BTreeMap::new();
    for (name, test_dir) in test_sets {
        let test = Dataset::load(test_dir)?;
        let preds_path = dir.join(format!("preds_{name}.jsonl"));
        let summary = eval_model(model, &test, &preds_path)?;
        let in_share = test
            .normalized
            .iter()
            .filter(|n| vocab.contains(n))
            .count() as f64
            / test.len() as f64;
        accuracies.insert(
            name.clone(),
            SubsetResult {
                accuracy: summary.accuracy,
                count: test.len() as u64,
                label_in_vocab_share: in_share,
                predictions: preds_path,
            },
        );
    }
    let record = RunRecord {
        config: TrainConfig {
            pred,
            cntx: CntxKind::None,
            data_dir: cfg.data_dir.clone(),
            steps: cfg.steps,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: cfg.seed,
        },
        train_kind: data.meta.kind.clone(),
        checkpoint: ckpt,
        log: dir.join("../mutual_log.jsonl"),
        accuracies,
        wall_secs,
    };
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("run.json"))?, &record)?;
    Ok(record)
}

/// Full mutual run: alternating updates for the step budget, then two
/// checkpoints (`theta1/`, `theta2/`) and the joint log.
pub fn run_mutual(
    cfg: &MutualRunConfig,
    out_dir: &Path,
    test_sets: &[(String, PathBuf)],
) -> Result<(RunRecord, RunRecord), HarnessError> {
    crate::parallel::init();
    let start = std::time::Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let data = Dataset::load(&cfg.data_dir)?;
    let hyper = AdamHyper {
        lr: cfg.lr,
        ..AdamHyper::default()
    };
    let mut pair = MutualPair::<f32>::new(cfg.seed, cfg.kl_weight, hyper)?;
    let mut log = Vec::with_capacity(cfg.steps as usize);
    train_mutual_steps(&mut pair, &data, 0..cfg.steps, cfg.batch_size, cfg.seed, &mut log)?;
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join("mutual_log.jsonl"),
        )?);
        for entry in &log {
            serde_json::to_writer(&mut f, entry)?;
            f.write_all(b"\n")?;
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let r1 = save_half(
        &pair.theta1,
        cfg,
        PredKind::Attn,
        &out_dir.join("theta1"),
        test_sets,
        wall,
    )?;
    let r2 = save_half(
        &pair.theta2,
        cfg,
        PredKind::Seg,
        &out_dir.join("theta2"),
        test_sets,
        wall,
    )?;
    Ok((r1, r2))
}
