//! Shared finite-difference machinery for the model-level gradient
//! oracles (also consumed by the acceptance suite).

use rand::Rng;
use vocablab_core::autodiff::AdamHyper;
use vocablab_core::corpus::{CaseKind, CorpusKind, WordSample};
use vocablab_core::models::{Batch, CntxKind, Model, ModelConfig, PredKind};
use vocablab_core::mutual::MutualPair;
use vocablab_core::render::{rasterize, StyleParams, TextImage};
use vocablab_core::rng::stream_rng;
use vocablab_core::Graph;

pub const EPS: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
/// Rounding noise of one difference quotient: ~ulp(loss)/(2*eps).
pub const FD_NOISE: f64 = 4e-9;
pub const COORDS_PER_PARAM: usize = 3;
pub const MAX_RESAMPLES: usize = 8;

pub fn tiny_batch() -> Vec<TextImage> {
    ["on", "cab"]
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let s = WordSample {
                text: text.to_string(),
                normalized: text.to_string(),
                corpus_kind: CorpusKind::Ls,
                case_kind: CaseKind::Lower,
            };
            rasterize(&s, &StyleParams::default(), 40 + i as u64).unwrap()
        })
        .collect()
}

/// Probe one coordinate; `None` when the interval straddles a kink.
pub fn smooth_fd(mut eval: impl FnMut(f64) -> f64, orig: f64) -> Option<f64> {
    let fd_at = |e: f64, eval: &mut dyn FnMut(f64) -> f64| {
        (eval(orig + e) - eval(orig - e)) / (2.0 * e)
    };
    let fd1 = fd_at(EPS, &mut eval);
    let fd2 = fd_at(EPS / 2.0, &mut eval);
    // allow both relative curvature and the quotient's rounding noise
    let allow = 1e-5 * (fd1.abs() + fd2.abs()) + FD_NOISE;
    if (fd1 - fd2).abs() > allow {
        return None;
    }
    Some(fd2)
}

pub struct FdStats {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

pub fn check_store_gradients(
    n_params: usize,
    value_of: &dyn Fn(usize) -> vocablab_core::Tensor<f64>,
    set_value: &mut dyn FnMut(usize, vocablab_core::Tensor<f64>),
    loss: &mut dyn FnMut() -> f64,
    analytic: &[Vec<f64>],
    seed: u64,
    per_param: usize,
    label: &str,
) -> FdStats {
    let mut rng = stream_rng(seed, "fd-coords", 0);
    let mut stats = FdStats {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    for pi in 0..n_params {
        let numel = value_of(pi).numel();
        let mut done = 0;
        let mut attempts = 0;
        while done < per_param.min(numel) && attempts < per_param * MAX_RESAMPLES {
            attempts += 1;
            let c = rng.gen_range(0..numel);
            let orig = value_of(pi).data()[c];
            let mut eval = |v: f64| -> f64 {
                let mut t = value_of(pi);
                t.data_mut()[c] = v;
                set_value(pi, t);
                loss()
            };
            let fd = smooth_fd(&mut eval, orig);
            // restore
            let mut t = value_of(pi);
            t.data_mut()[c] = orig;
            set_value(pi, t);
            let Some(numeric) = fd else {
                stats.skipped += 1;
                continue;
            };
            let a = analytic[pi][c];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            // the difference quotient carries ~ulp(loss)/(2*eps) of
            // rounding noise; differences under that floor are
            // indistinguishable from an exact match
            if (a - numeric).abs() <= FD_NOISE {
                stats.checked += 1;
                done += 1;
                continue;
            }
            stats.worst = stats.worst.max(err);
            assert!(
                err <= TOL,
                "{label} param {pi} coord {c}: analytic {a}, numeric {numeric}, rel {err}"
            );
            done += 1;
            stats.checked += 1;
        }
        assert!(done > 0, "{label} param {pi}: no smooth coordinate found");
    }
    stats
}

/// Sampled central-difference check of d(loss)/d(params) for one model.
pub fn check_model(pred: PredKind, cntx: CntxKind, seed: u64) -> FdStats {
    let model = std::cell::RefCell::new(
        Model::<f64>::new(ModelConfig::new(pred, cntx, seed)).unwrap(),
    );
    let imgs = tiny_batch();
    let refs: Vec<&TextImage> = imgs.iter().collect();
    let batch = Batch::from_images(&refs).unwrap();

    // analytic gradients
    let (analytic, n_params) = {
        let m = model.borrow();
        let mut g = Graph::new();
        let lease = m.store.lease(&mut g);
        let fwd = m.training_forward(&mut g, &lease, &batch).unwrap();
        g.backward(fwd.loss()).unwrap();
        let n = m.store.len();
        let grads: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let id = m.store.id_at(i);
                g.grad(lease.node(id))
                    .map(|t| t.data().to_vec())
                    .unwrap_or_else(|| vec![0.0; m.store.value(id).numel()])
            })
            .collect();
        (grads, n)
    };

    let stats = check_store_gradients(
        n_params,
        &|i| {
            let m = model.borrow();
            m.store.value(m.store.id_at(i)).clone()
        },
        &mut |i, t| {
            let mut m = model.borrow_mut();
            let id = m.store.id_at(i);
            m.store.set_value(id, t);
        },
        &mut || {
            let m = model.borrow();
            let mut g = Graph::new();
            let lease = m.store.lease(&mut g);
            let fwd = m.training_forward(&mut g, &lease, &batch).unwrap();
            g.value(fwd.loss()).item()
        },
        &analytic,
        seed,
        COORDS_PER_PARAM,
        &format!("{pred:?}-{cntx:?}"),
    );
    println!(
        "{pred:?}-{cntx:?}: {} coords checked, {} kink-contaminated skipped, worst rel err {:.2e}",
        stats.checked, stats.skipped, stats.worst
    );
    stats
}


/// KL-augmented mutual L1 gradient check; returns the stats line.
pub fn check_mutual_l1(seed: u64) -> FdStats {
    let pair = std::cell::RefCell::new(
        MutualPair::<f64>::new(seed, 1.0, AdamHyper::default()).unwrap(),
    );
    let imgs = tiny_batch();
    let refs: Vec<&TextImage> = imgs.iter().collect();
    let analytic = pair.borrow().l1_gradients(&refs).unwrap();
    let n_params = pair.borrow().theta1.store.len();

    check_store_gradients(
        n_params,
        &|i| {
            let p = pair.borrow();
            p.theta1.store.value(p.theta1.store.id_at(i)).clone()
        },
        &mut |i, t| {
            let mut p = pair.borrow_mut();
            let id = p.theta1.store.id_at(i);
            p.theta1.store.set_value(id, t);
        },
        &mut || pair.borrow().losses(&refs).unwrap().l1,
        &analytic,
        seed,
        2,
        "mutual-l1",
    )
}
