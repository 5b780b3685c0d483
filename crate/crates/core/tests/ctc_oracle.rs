//! CTC dynamic program against an exhaustive path-enumeration oracle.

use rand::Rng;
use vocablab_core::autodiff::{Graph, Tensor};
use vocablab_core::rng::stream_rng;

/// Sum of probabilities of all frame paths that collapse (remove adjacent
/// repeats, then drop blanks) to `label`.
fn brute_force_prob(probs: &[Vec<f64>], label: &[usize], blank: usize) -> f64 {
    let t = probs.len();
    let k = probs[0].len();
    let mut total = 0.0f64;
    let paths = (k as u64).pow(t as u32);
    for code in 0..paths {
        let mut c = code;
        let mut path = Vec::with_capacity(t);
        for _ in 0..t {
            path.push((c % k as u64) as usize);
            c /= k as u64;
        }
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for &s in &path {
            if s != prev && s != blank {
                collapsed.push(s);
            }
            prev = s;
        }
        if collapsed == label {
            let mut p = 1.0;
            for (frame, &s) in path.iter().enumerate() {
                p *= probs[frame][s];
            }
            total += p;
        }
    }
    total
}

fn random_log_probs(t: usize, k: usize, rng: &mut impl Rng) -> (Tensor<f64>, Vec<Vec<f64>>) {
    let mut logits = vec![0.0f64; t * k];
    for v in logits.iter_mut() {
        *v = rng.gen_range(-2.0..2.0);
    }
    let mut probs = vec![vec![0.0f64; k]; t];
    let mut logp = vec![0.0f64; t * k];
    for frame in 0..t {
        let row = &logits[frame * k..(frame + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for (j, &v) in row.iter().enumerate() {
            let p = (v - m).exp() / z;
            probs[frame][j] = p;
            logp[frame * k + j] = p.ln();
        }
    }
    (
        Tensor::from_vec(&[1, t, k], logp).unwrap(),
        probs,
    )
}

#[test]
fn dp_matches_exhaustive_enumeration() {
    let mut rng = stream_rng(2024, "ctc-oracle", 0);
    let mut checked = 0usize;
    for t in 1..=6usize {
        for k in 2..=3usize {
            let blank = k - 1;
            for label_len in 1..=3usize.min(t) {
                // all labels over the non-blank charset of this length
                let chars = k - 1;
                let label_count = (chars as u64).pow(label_len as u32);
                for code in 0..label_count {
                    let mut c = code;
                    let mut label = Vec::with_capacity(label_len);
                    for _ in 0..label_len {
                        label.push((c % chars as u64) as usize);
                        c /= chars as u64;
                    }
                    let repeats = label.windows(2).filter(|w| w[0] == w[1]).count();
                    for _ in 0..8 {
                        let (logp, probs) = random_log_probs(t, k, &mut rng);
                        let mut g = Graph::new();
                        let node = g.constant(logp);
                        let result = g.ctc_loss(node, &[label.clone()], blank);
                        let oracle = brute_force_prob(&probs, &label, blank);
                        if t < label_len + repeats {
                            assert!(
                                result.is_err(),
                                "expected infeasibility error for T={t} label {label:?}"
                            );
                            assert!(oracle == 0.0);
                            continue;
                        }
                        let loss = g.value(result.unwrap()).item();
                        let expect = -oracle.ln();
                        let rel = (loss - expect).abs() / expect.abs().max(1e-12);
                        assert!(
                            rel <= 1e-6,
                            "T={t} K={k} label {label:?}: dp {loss} vs oracle {expect} (rel {rel})"
                        );
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked >= 500, "only {checked} feasible instances checked");
    println!("ctc oracle: {checked} instances matched within 1e-6");
}

#[test]
fn uniform_logits_single_label_examples() {
    // T=1: single path, loss = ln 3; T=2: three paths of mass 1/9 each
    for (t, expect) in [(1usize, 3.0f64.ln()), (2, 3.0f64.ln())] {
        let k = 3;
        let logp = Tensor::from_vec(&[1, t, k], vec![(1.0f64 / 3.0).ln(); t * k]).unwrap();
        let mut g = Graph::new();
        let node = g.constant(logp);
        let loss = g.ctc_loss(node, &[vec![0]], 2).unwrap();
        assert!((g.value(loss).item() - expect).abs() <= 1e-12);
    }
}
