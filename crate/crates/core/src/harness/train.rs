//! Training runs: deterministic batching, the fixed step budget, loss
//! logging, checkpoint emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::eval_model;
use super::manifest::Dataset;
use super::HarnessError;
use crate::autodiff::{checkpoint, AdamHyper, Graph};
use crate::models::{CntxKind, Model, ModelConfig, PredKind};
use crate::rng::stream_rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub pred: PredKind,
    pub cntx: CntxKind,
    pub data_dir: PathBuf,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.pred, self.cntx, self.seed)
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            ..AdamHyper::default()
        }
    }
}

/// Evaluation result on one named test subset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsetResult {
    pub accuracy: f64,
    pub count: u64,
    /// Fraction of this subset's labels inside the run's training
    /// vocabulary; a subset counts as in-vocabulary when >= 0.5.
    pub label_in_vocab_share: f64,
    pub predictions: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub train_kind: String,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub accuracies: std::collections::BTreeMap<String, SubsetResult>,
    pub wall_secs: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
}

/// Uniform batch draw for one step; a pure function of `(seed, step)` so
/// independent and mutual training see identical batches.
pub fn batch_indices(seed: u64, step: u64, batch_size: usize, n: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, "batch", step);
    (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
}

/// Train `model` over `steps`, appending per-step losses to `log`.
pub fn train_model_steps(
    model: &mut Model<f32>,
    data: &Dataset,
    steps: std::ops::Range<u64>,
    batch_size: usize,
    hyper: &AdamHyper,
    seed: u64,
    log: &mut Vec<StepLog>,
) -> Result<(), HarnessError> {
    if data.is_empty() {
        return Err(HarnessError::BadArgument("empty training dataset".into()));
    }
    for step in steps {
        let idx = batch_indices(seed, step, batch_size, data.len());
        let imgs: Vec<&crate::render::TextImage> = idx.iter().map(|&i| &data.items[i]).collect();
        let batch = crate::models::Batch::from_images(&imgs)?;
        let mut g = Graph::new();
        let lease = model.store.lease(&mut g);
        let fwd = model.training_forward(&mut g, &lease, &batch)?;
        let loss = f64::from(g.value(fwd.loss()).item());
        if !loss.is_finite() {
            return Err(HarnessError::NonFiniteLoss { step, loss });
        }
        g.backward(fwd.loss())?;
        model.store.adam_step(&g, &lease, hyper);
        log.push(StepLog { step, loss });
    }
    Ok(())
}

/// One full training run: fixed step budget, checkpoint + model config +
/// loss log under `out_dir`, then evaluation on each named test set.
pub fn run_train(
    cfg: &TrainConfig,
    out_dir: &Path,
    test_sets: &[(String, PathBuf)],
) -> Result<RunRecord, HarnessError> {
    crate::parallel::init();
    let start = std::time::Instant::now();
    cfg.model_config().validate()?;
    std::fs::create_dir_all(out_dir)?;
    let data = Dataset::load(&cfg.data_dir)?;
    let mut model = Model::<f32>::new(cfg.model_config())?;
    let mut log = Vec::with_capacity(cfg.steps as usize);
    train_model_steps(
        &mut model,
        &data,
        0..cfg.steps,
        cfg.batch_size,
        &cfg.hyper(),
        cfg.seed,
        &mut log,
    )?;

    let ckpt = out_dir.join("model.ckpt");
    checkpoint::save(&model.store, &ckpt)?;
    serde_json::to_writer_pretty(
        std::fs::File::create(out_dir.join("model.json"))?,
        &model.config,
    )?;
    let log_path = out_dir.join("train_log.jsonl");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
        for entry in &log {
            serde_json::to_writer(&mut f, entry)?;
            f.write_all(b"\n")?;
        }
    }

    let vocab = crate::corpus::Vocabulary::from_path(&cfg.data_dir.join("vocab.txt"), "train")?;
    let mut accuracies = std::collections::BTreeMap::new();
    for (name, dir) in test_sets {
        let test = Dataset::load(dir)?;
        let preds_path = out_dir.join(format!("preds_{name}.jsonl"));
        let summary = eval_model(&model, &test, &preds_path)?;
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
        config: cfg.clone(),
        train_kind: data.meta.kind.clone(),
        checkpoint: ckpt,
        log: log_path,
        accuracies,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    serde_json::to_writer_pretty(std::fs::File::create(out_dir.join("run.json"))?, &record)?;
    Ok(record)
}

pub fn load_run_record(dir: &Path) -> Result<RunRecord, HarnessError> {
    Ok(serde_json::from_reader(std::fs::File::open(
        dir.join("run.json"),
    )?)?)
}

/// Rebuild a trained model from its run directory.
pub fn load_model(dir: &Path) -> Result<Model<f32>, HarnessError> {
    let config: ModelConfig =
        serde_json::from_reader(std::fs::File::open(dir.join("model.json"))?)?;
    let mut model = Model::<f32>::new(config)?;
    checkpoint::load_into(&mut model.store, &dir.join("model.ckpt"))?;
    Ok(model)
}
