//! CTC loss: log-space forward/backward dynamic program over the
//! blank-interleaved label, with analytic gradients w.r.t. the input
//! log-probabilities. All accumulation runs in `f64`.

use super::scalar::Element;
use super::tensor::Tensor;
use super::AdError;

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        b
    } else if b == f64::NEG_INFINITY {
        a
    } else {
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

fn adjacent_repeats(label: &[usize]) -> usize {
    label.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Loss and d(loss)/d(logp) for one sample. `logp` is a row-major `T x K`
/// slice of per-frame log-probabilities.
pub(crate) fn ctc_single<R: Element>(
    logp: &[R],
    frames: usize,
    classes: usize,
    label: &[usize],
    blank: usize,
) -> Result<(f64, Vec<f64>), AdError> {
    let len = label.len();
    let repeats = adjacent_repeats(label);
    if frames < len + repeats {
        return Err(AdError::CtcInfeasible {
            label: len,
            repeats,
            frames,
        });
    }
    debug_assert!(label.iter().all(|&c| c != blank && c < classes));

    // Blank-interleaved label l': [b, l1, b, l2, ..., lL, b]
    let states = 2 * len + 1;
    let ext = |s: usize| -> usize {
        if s % 2 == 0 {
            blank
        } else {
            label[s / 2]
        }
    };
    let lp = |t: usize, k: usize| -> f64 { logp[t * classes + k].as_f64() };

    let mut alpha = vec![f64::NEG_INFINITY; frames * states];
    alpha[0] = lp(0, blank);
    if states > 1 {
        alpha[1] = lp(0, ext(1));
    }
    for t in 1..frames {
        for s in 0..states {
            let mut m = alpha[(t - 1) * states + s];
            if s >= 1 {
                m = lse2(m, alpha[(t - 1) * states + s - 1]);
            }
            if s >= 2 && ext(s) != blank && ext(s) != ext(s - 2) {
                m = lse2(m, alpha[(t - 1) * states + s - 2]);
            }
            alpha[t * states + s] = if m == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                m + lp(t, ext(s))
            };
        }
    }
    let last = (frames - 1) * states;
    let logz = if states >= 2 {
        lse2(alpha[last + states - 1], alpha[last + states - 2])
    } else {
        alpha[last + states - 1]
    };
    if !logz.is_finite() {
        return Err(AdError::CtcInfeasible {
            label: len,
            repeats,
            frames,
        });
    }

    let mut beta = vec![f64::NEG_INFINITY; frames * states];
    beta[last + states - 1] = lp(frames - 1, ext(states - 1));
    if states >= 2 {
        beta[last + states - 2] = lp(frames - 1, ext(states - 2));
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut m = beta[(t + 1) * states + s];
            if s + 1 < states {
                m = lse2(m, beta[(t + 1) * states + s + 1]);
            }
            if s + 2 < states && ext(s + 2) != blank && ext(s + 2) != ext(s) {
                m = lse2(m, beta[(t + 1) * states + s + 2]);
            }
            beta[t * states + s] = if m == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                m + lp(t, ext(s))
            };
        }
    }

    // d(-logZ)/d(logp[t,k]) = -P(path visits a state labeled k at time t)
    let mut grad = vec![0.0f64; frames * classes];
    for t in 0..frames {
        for s in 0..states {
            let joint = alpha[t * states + s] + beta[t * states + s] - lp(t, ext(s));
            if joint == f64::NEG_INFINITY {
                continue;
            }
            grad[t * classes + ext(s)] -= (joint - logz).exp();
        }
    }
    Ok((-logz, grad))
}

/// Batch mean loss and gradient tensor for `logp` of shape `(N, T, K)`.
pub(crate) fn ctc_batch<R: Element>(
    logp: &Tensor<R>,
    labels: &[Vec<usize>],
    blank: usize,
) -> Result<(f64, Tensor<R>), AdError> {
    let shape = logp.shape();
    let (n, t, k) = (shape[0], shape[1], shape[2]);
    debug_assert_eq!(labels.len(), n);
    let mut total = 0.0f64;
    let mut grad = Tensor::<R>::zeros(shape);
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let row = &logp.data()[i * t * k..(i + 1) * t * k];
        let (loss, g) = ctc_single(row, t, k, &labels[i], blank)?;
        total += loss;
        let dst = &mut grad.data_mut()[i * t * k..(i + 1) * t * k];
        for (d, gv) in dst.iter_mut().zip(&g) {
            *d = R::from_f64(gv * scale);
        }
    }
    Ok((total * scale, grad))
}
