//! Evaluation: free-running recognition over a dataset, prediction files,
//! accuracy.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::Dataset;
use super::HarnessError;
use crate::metrics::accuracy;
use crate::models::Model;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    pub gt: String,
    pub pred: String,
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub count: u64,
}

/// Recognize every sample (fanning out over threads; the parameter
/// snapshot is read-only) and write a JSON-lines prediction file.
pub fn eval_model(
    model: &Model<f32>,
    data: &Dataset,
    preds_out: &Path,
) -> Result<EvalSummary, HarnessError> {
    crate::parallel::init();
    if data.is_empty() {
        return Err(HarnessError::BadArgument("empty evaluation dataset".into()));
    }
    let preds: Vec<Prediction> = data
        .items
        .par_iter()
        .zip(data.ids.par_iter())
        .map(|(img, &id)| {
            let pred = model.infer(&img.pixels).unwrap_or_default();
            Prediction {
                id,
                gt: img.label.clone(),
                pred,
            }
        })
        .collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(preds_out)?);
    for p in &preds {
        serde_json::to_writer(&mut f, p)?;
        f.write_all(b"\n")?;
    }
    drop(f);
    let gts: Vec<String> = preds.iter().map(|p| p.gt.clone()).collect();
    let ps: Vec<String> = preds.iter().map(|p| p.pred.clone()).collect();
    Ok(EvalSummary {
        accuracy: accuracy(&ps, &gts)?,
        count: preds.len() as u64,
    })
}

/// Evaluate a checkpoint directory (model.json + model.ckpt) on a dataset.
pub fn run_eval(
    ckpt: &Path,
    data_dir: &Path,
    preds_out: &Path,
) -> Result<EvalSummary, HarnessError> {
    let run_dir = ckpt.parent().ok_or_else(|| {
        HarnessError::BadArgument(format!("checkpoint {} has no parent dir", ckpt.display()))
    })?;
    let model = super::train::load_model(run_dir)?;
    let data = Dataset::load(data_dir)?;
    eval_model(&model, &data, preds_out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, HarnessError> {
    use std::io::BufRead;
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Accuracy recomputed from a prediction file; must agree with the value
/// recorded at evaluation time.
pub fn accuracy_from_predictions(path: &Path) -> Result<f64, HarnessError> {
    let preds = read_predictions(path)?;
    let gts: Vec<String> = preds.iter().map(|p| p.gt.clone()).collect();
    let ps: Vec<String> = preds.iter().map(|p| p.pred.clone()).collect();
    Ok(accuracy(&ps, &gts)?)
}
