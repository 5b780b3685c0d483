//! The metric suite: accuracy, the in/out-of-vocabulary gap and its
//! normalized form, and the GA/OA/VA/VG/HM assembly over a matrix of
//! (training set, test subset) accuracies.
//!
//! All metrics are carried as percents in [0, 100]; the vocabulary
//! generalization formula `100 - (Gap_LS - Gap_RS)` lives in that space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_lossy, Vocabulary};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions and ground truths differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("accuracy {0} outside [0, 100]")]
    BadPercent(f64),
    #[error("overall accuracy must be positive to normalize a gap")]
    ZeroAccuracy,
    #[error("harmonic mean requires positive inputs, got ({0}, {1}, {2})")]
    NonPositive(f64, f64, f64),
    #[error("unknown test subset {0:?}")]
    UnknownSubset(String),
    #[error("missing accuracy cell ({0}, {1})")]
    MissingCell(TrainSet, String),
    #[error("gap pair subset {0:?} is not a declared subset")]
    BadGapPair(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSet {
    Rs,
    Ms,
    Ls,
}

impl std::fmt::Display for TrainSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainSet::Rs => "rs",
            TrainSet::Ms => "ms",
            TrainSet::Ls => "ls",
        })
    }
}

/// Exact-match accuracy in percent, case-insensitive and
/// punctuation-stripped on both sides.
pub fn accuracy(predictions: &[String], ground_truths: &[String]) -> Result<f64, MetricsError> {
    if predictions.len() != ground_truths.len() {
        return Err(MetricsError::LengthMismatch(
            predictions.len(),
            ground_truths.len(),
        ));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predictions
        .iter()
        .zip(ground_truths)
        .filter(|(p, t)| normalize_lossy(p) == normalize_lossy(t))
        .count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// InVoc minus OutVoc accuracy, in points; may be negative.
pub fn gap(acc_in: f64, acc_out: f64) -> f64 {
    acc_in - acc_out
}

/// Gap normalized by the overall accuracy on the split benchmark.
pub fn normalized_gap(gap_points: f64, acc_all: f64) -> Result<f64, MetricsError> {
    if acc_all <= 0.0 {
        return Err(MetricsError::ZeroAccuracy);
    }
    Ok(100.0 * gap_points / acc_all)
}

/// `100 - (Gap_LS - Gap_RS)`: higher is better, 100 when the LS-trained
/// model generalizes exactly as well as the RS-trained one.
pub fn vocab_generalization(gap_ls: f64, gap_rs: f64) -> f64 {
    100.0 - (gap_ls - gap_rs)
}

pub fn harmonic_mean(oa: f64, va: f64, vg: f64) -> Result<f64, MetricsError> {
    if oa <= 0.0 || va <= 0.0 || vg <= 0.0 {
        return Err(MetricsError::NonPositive(oa, va, vg));
    }
    Ok(3.0 / (1.0 / oa + 1.0 / va + 1.0 / vg))
}

/// Fraction of predictions whose normalized form is in the vocabulary.
pub fn in_vocab_rate(predictions: &[String], vocab: &Vocabulary) -> Result<f64, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predictions
        .iter()
        .filter(|p| vocab.contains(&normalize_lossy(p)))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// One named test subset: sample count and whether its labels are
/// in-vocabulary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsetDef {
    pub name: String,
    pub in_vocab: bool,
    pub count: u64,
}

/// Accuracies of one model combination per (training set, test subset),
/// plus the designated in/out pair the gaps are computed on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMatrix {
    pub subsets: Vec<SubsetDef>,
    pub gap_pair: (String, String),
    cells: BTreeMap<TrainSet, BTreeMap<String, f64>>,
    rates: BTreeMap<TrainSet, f64>,
}

impl RunMatrix {
    pub fn new(subsets: Vec<SubsetDef>, gap_pair: (&str, &str)) -> Result<Self, MetricsError> {
        for name in [gap_pair.0, gap_pair.1] {
            if !subsets.iter().any(|s| s.name == name) {
                return Err(MetricsError::BadGapPair(name.to_string()));
            }
        }
        Ok(RunMatrix {
            subsets,
            gap_pair: (gap_pair.0.to_string(), gap_pair.1.to_string()),
            cells: BTreeMap::new(),
            rates: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, train: TrainSet, subset: &str, acc: f64) -> Result<(), MetricsError> {
        if !(0.0..=100.0).contains(&acc) {
            return Err(MetricsError::BadPercent(acc));
        }
        if !self.subsets.iter().any(|s| s.name == subset) {
            return Err(MetricsError::UnknownSubset(subset.to_string()));
        }
        self.cells
            .entry(train)
            .or_default()
            .insert(subset.to_string(), acc);
        Ok(())
    }

    pub fn set_in_vocab_rate(&mut self, train: TrainSet, rate: f64) {
        self.rates.insert(train, rate);
    }

    fn cell(&self, train: TrainSet, subset: &str) -> Result<f64, MetricsError> {
        self.get(train, subset)
            .ok_or_else(|| MetricsError::MissingCell(train, subset.to_string()))
    }

    pub fn get(&self, train: TrainSet, subset: &str) -> Option<f64> {
        self.cells.get(&train).and_then(|row| row.get(subset)).copied()
    }

    fn has_row(&self, train: TrainSet) -> bool {
        self.cells.contains_key(&train)
    }

    /// Count-weighted accuracy of one training set over a subset filter.
    fn weighted(
        &self,
        train: TrainSet,
        filter: impl Fn(&SubsetDef) -> bool,
    ) -> Result<f64, MetricsError> {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for s in self.subsets.iter().filter(|s| filter(s)) {
            num += self.cell(train, &s.name)? * s.count as f64;
            den += s.count as f64;
        }
        if den == 0.0 {
            return Err(MetricsError::Empty);
        }
        Ok(num / den)
    }

    fn gap_of(&self, train: TrainSet) -> Result<f64, MetricsError> {
        Ok(gap(
            self.cell(train, &self.gap_pair.0)?,
            self.cell(train, &self.gap_pair.1)?,
        ))
    }

    fn ngap_of(&self, train: TrainSet) -> Result<f64, MetricsError> {
        let pair = [self.gap_pair.0.as_str(), self.gap_pair.1.as_str()];
        let acc_all = self.weighted(train, |s| pair.contains(&s.name.as_str()))?;
        normalized_gap(self.gap_of(train)?, acc_all)
    }
}

/// Per-training-set values; training sets not present in the matrix stay
/// `None`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PerTrain {
    pub rs: Option<f64>,
    pub ms: Option<f64>,
    pub ls: Option<f64>,
}

impl PerTrain {
    pub fn get(&self, t: TrainSet) -> Option<f64> {
        match t {
            TrainSet::Rs => self.rs,
            TrainSet::Ms => self.ms,
            TrainSet::Ls => self.ls,
        }
    }

    fn set(&mut self, t: TrainSet, v: f64) {
        match t {
            TrainSet::Rs => self.rs = Some(v),
            TrainSet::Ms => self.ms = Some(v),
            TrainSet::Ls => self.ls = Some(v),
        }
    }
}

/// GA/OA/VA/VG/HM bundle for one module combination.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ga: PerTrain,
    pub oa: f64,
    pub va: f64,
    pub vg: f64,
    pub hm: f64,
    pub gap: PerTrain,
    pub ngap: PerTrain,
    pub in_vocab_rate: PerTrain,
}

/// Assemble the report: OA is the RS row weighted over every subset, VA
/// the LS row weighted over the in-vocabulary subsets, VG and HM derived
/// from the gaps on the designated pair. RS and LS rows are required; MS
/// contributes its GA/gap columns when present.
pub fn assemble_report(matrix: &RunMatrix) -> Result<MetricsReport, MetricsError> {
    let oa = matrix.weighted(TrainSet::Rs, |_| true)?;
    let va = matrix.weighted(TrainSet::Ls, |s| s.in_vocab)?;
    let gap_ls = matrix.gap_of(TrainSet::Ls)?;
    let gap_rs = matrix.gap_of(TrainSet::Rs)?;
    let vg = vocab_generalization(gap_ls, gap_rs);
    let hm = harmonic_mean(oa, va, vg)?;

    let mut ga = PerTrain::default();
    let mut gap_pt = PerTrain::default();
    let mut ngap_pt = PerTrain::default();
    let mut rate_pt = PerTrain::default();
    for train in [TrainSet::Rs, TrainSet::Ms, TrainSet::Ls] {
        if !matrix.has_row(train) {
            continue;
        }
        ga.set(train, matrix.weighted(train, |_| true)?);
        gap_pt.set(train, matrix.gap_of(train)?);
        ngap_pt.set(train, matrix.ngap_of(train)?);
        if let Some(&r) = matrix.rates.get(&train) {
            rate_pt.set(train, r);
        }
    }

    let report = MetricsReport {
        ga,
        oa,
        va,
        vg,
        hm,
        gap: gap_pt,
        ngap: ngap_pt,
        in_vocab_rate: rate_pt,
    };
    debug_assert!(report.hm <= report.oa.max(report.va).max(report.vg) + 1e-9);
    debug_assert!(report.hm >= report.oa.min(report.va).min(report.vg) - 1e-9);
    debug_assert!(
        (report.vg - (100.0 - (gap_ls - gap_rs))).abs() < 1e-9,
        "vg identity violated"
    );
    Ok(report)
}
