//! Mutual learning: an attention model and a segmentation model trained
//! jointly, each regularized by the KL divergence from the other's
//! per-character distributions over the 42 shared character classes.
//!
//! The peer's distribution is a fixed target inside each half-step: the
//! attention update sees constant segmentation distributions and vice
//! versa. EOS and background have no common support, so both sides are
//! restricted to the character classes and renormalized; positions whose
//! voting region vanished are masked out of the sum.

use thiserror::Error;

use crate::autodiff::{AdamHyper, Element, Graph, NodeId, Tensor};
use crate::models::{Batch, CntxKind, HeadForward, Model, ModelConfig, ModelError, PredKind,
                    NUM_CHAR_CLASSES};
use crate::render::TextImage;

#[derive(Debug, Error)]
pub enum MutualError {
    #[error("label has no characters to align")]
    EmptyLabel,
    #[error("attention emitted {got} steps for a {need}-character label")]
    TooFewSteps { got: usize, need: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ad(#[from] crate::autodiff::AdError),
}

/// Softmax over the first `keep` entries of a score vector.
fn restrict_softmax(row: &[f64], keep: usize) -> Vec<f64> {
    let m = row[..keep].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row[..keep].iter().map(|v| (v - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= z;
    }
    out
}

/// Per-position distribution pairs over the shared character classes.
#[derive(Clone, Debug)]
pub struct AlignedDistributions {
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<Vec<f64>>,
    /// `false` positions (empty voting region) are excluded from KL sums.
    pub mask: Vec<bool>,
}

/// Align teacher-forced attention step logits with segmentation voted
/// logits for one sample: restrict both to the 42 character classes (EOS
/// and background dropped) and softmax each position.
pub fn align_logits(
    attn_step_logits: &[Vec<f64>],
    seg_voted: &[Option<Vec<f64>>],
) -> Result<AlignedDistributions, MutualError> {
    let len = seg_voted.len();
    if len == 0 {
        return Err(MutualError::EmptyLabel);
    }
    if attn_step_logits.len() < len {
        return Err(MutualError::TooFewSteps {
            got: attn_step_logits.len(),
            need: len,
        });
    }
    let mut p1 = Vec::with_capacity(len);
    let mut p2 = Vec::with_capacity(len);
    let mut mask = Vec::with_capacity(len);
    for i in 0..len {
        p1.push(restrict_softmax(&attn_step_logits[i], NUM_CHAR_CLASSES));
        match &seg_voted[i] {
            Some(voted) => {
                p2.push(restrict_softmax(voted, NUM_CHAR_CLASSES));
                mask.push(true);
            }
            None => {
                p2.push(vec![0.0; NUM_CHAR_CLASSES]);
                mask.push(false);
            }
        }
    }
    Ok(AlignedDistributions { p1, p2, mask })
}

/// `KL(q || p) = sum_k q_k ln(q_k / p_k)` with `p` floored at 1e-12.
pub fn kl_term(q: &[f64], p: &[f64]) -> f64 {
    debug_assert_eq!(q.len(), p.len());
    let mut acc = 0.0;
    for (&qk, &pk) in q.iter().zip(p) {
        if qk <= 0.0 {
            continue;
        }
        acc += qk * (qk.ln() - pk.max(1e-12).ln());
    }
    acc
}

/// Per-step losses and the mean KL term across unmasked positions.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct MutualStepRecord {
    pub l1: f64,
    pub l2: f64,
    pub mean_kl: f64,
}

/// Jointly trained attention (theta1) and segmentation (theta2) models
/// with alternating updates.
pub struct MutualPair<R: Element> {
    pub theta1: Model<R>,
    pub theta2: Model<R>,
    pub kl_weight: f64,
    pub hyper: AdamHyper,
}

/// Constant peer targets for one half-step: flattened `(n * l_max, 42)`
/// distributions plus the position mask.
struct PeerTargets<R: Element> {
    q: Tensor<R>,
    mask: Vec<bool>,
    l_max: usize,
    /// Unmasked position count, for logging means.
    positions: usize,
}

impl<R: Element> MutualPair<R> {
    /// Both models use CNTX none and share the seed; each model's init
    /// stream is keyed by its head so it matches standalone training.
    pub fn new(seed: u64, kl_weight: f64, hyper: AdamHyper) -> Result<Self, MutualError> {
        Ok(MutualPair {
            theta1: Model::new(ModelConfig::new(PredKind::Attn, CntxKind::None, seed))?,
            theta2: Model::new(ModelConfig::new(PredKind::Seg, CntxKind::None, seed))?,
            kl_weight,
            hyper,
        })
    }

    /// Forward theta2 and read its voted distributions as constants.
    fn seg_targets(&self, batch: &Batch<R>) -> Result<PeerTargets<R>, MutualError> {
        let mut g = Graph::new();
        let lease = self.theta2.store.lease(&mut g);
        let fwd = self.theta2.training_forward(&mut g, &lease, batch)?;
        let HeadForward::Seg {
            pixel_logits,
            targets,
            ..
        } = fwd
        else {
            unreachable!("theta2 is a segmentation model");
        };
        let regions: Vec<Vec<Vec<(usize, usize)>>> =
            targets.iter().map(|t| t.regions.clone()).collect();
        let voted = g.region_mean(pixel_logits, regions.clone())?;
        let val = g.value(voted);
        let l_max = val.shape()[1];
        let k = val.shape()[2];
        self.flatten_targets(batch, |n, i| {
            if i < regions[n].len() && !regions[n][i].is_empty() {
                let row: Vec<f64> = (0..k)
                    .map(|c| val.data()[(n * l_max + i) * k + c].as_f64())
                    .collect();
                Some(restrict_softmax(&row, NUM_CHAR_CLASSES))
            } else {
                None
            }
        }, l_max)
    }

    /// Forward theta1 (teacher forced) and read its step distributions.
    fn attn_targets(&self, batch: &Batch<R>) -> Result<PeerTargets<R>, MutualError> {
        let mut g = Graph::new();
        let lease = self.theta1.store.lease(&mut g);
        let fwd = self.theta1.training_forward(&mut g, &lease, batch)?;
        let HeadForward::Attn { fwd, .. } = fwd else {
            unreachable!("theta1 is an attention model");
        };
        let val = g.value(fwd.logits);
        let steps = val.shape()[1];
        let k = val.shape()[2];
        let l_max = steps - 1;
        // mask mirrors the segmentation side so both KL sums cover the
        // same positions
        let seg = batch.seg_targets(&self.theta1.classes)?;
        self.flatten_targets(batch, |n, i| {
            if i < seg[n].regions.len() && !seg[n].regions[i].is_empty() {
                let row: Vec<f64> = (0..k)
                    .map(|c| val.data()[(n * steps + i) * k + c].as_f64())
                    .collect();
                Some(restrict_softmax(&row, NUM_CHAR_CLASSES))
            } else {
                None
            }
        }, l_max)
    }

    fn flatten_targets(
        &self,
        batch: &Batch<R>,
        dist_at: impl Fn(usize, usize) -> Option<Vec<f64>>,
        l_max: usize,
    ) -> Result<PeerTargets<R>, MutualError> {
        let n = batch.len();
        let mut q = Tensor::zeros(&[n * l_max, NUM_CHAR_CLASSES]);
        let mut mask = vec![false; n * l_max];
        let mut positions = 0usize;
        for bi in 0..n {
            let len = batch.labels[bi].chars().count().min(l_max);
            for i in 0..len {
                if let Some(dist) = dist_at(bi, i) {
                    debug_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    for (c, &v) in dist.iter().enumerate() {
                        q.data_mut()[(bi * l_max + i) * NUM_CHAR_CLASSES + c] = R::from_f64(v);
                    }
                    mask[bi * l_max + i] = true;
                    positions += 1;
                }
            }
        }
        Ok(PeerTargets {
            q,
            mask,
            l_max,
            positions,
        })
    }

    /// Restricted log-probabilities of the learner, aligned with the peer
    /// target layout `(n * l_max, 42)`.
    fn learner_logp(
        g: &mut Graph<R>,
        logits: NodeId,
        l_max: usize,
    ) -> Result<NodeId, MutualError> {
        let shape = g.value(logits).shape().to_vec();
        let n = shape[0];
        let steps = g.narrow(logits, 1, 0, l_max)?;
        let chars = g.narrow(steps, 2, 0, NUM_CHAR_CLASSES)?;
        let logp = g.log_softmax(chars)?;
        Ok(g.reshape(logp, &[n * l_max, NUM_CHAR_CLASSES])?)
    }

    /// Build theta1's total loss (task + KL toward fixed seg targets),
    /// returning (total, kl sum node).
    fn build_l1(
        &self,
        g: &mut Graph<R>,
        lease: &crate::autodiff::Lease,
        batch: &Batch<R>,
        peer: Option<&PeerTargets<R>>,
    ) -> Result<(NodeId, Option<NodeId>), MutualError> {
        let fwd = self.theta1.training_forward(g, lease, batch)?;
        let HeadForward::Attn { fwd, loss } = fwd else {
            unreachable!()
        };
        let Some(peer) = peer else {
            return Ok((loss, None));
        };
        let logp = Self::learner_logp(g, fwd.logits, peer.l_max)?;
        let kl = g.kl_to_const(logp, peer.q.clone(), peer.mask.clone())?;
        let scaled = g.scale(kl, self.kl_weight / batch.len() as f64);
        let total = g.add(loss, scaled)?;
        Ok((total, Some(kl)))
    }

    /// theta2 counterpart of [`MutualPair::build_l1`].
    fn build_l2(
        &self,
        g: &mut Graph<R>,
        lease: &crate::autodiff::Lease,
        batch: &Batch<R>,
        peer: Option<&PeerTargets<R>>,
    ) -> Result<(NodeId, Option<NodeId>), MutualError> {
        let fwd = self.theta2.training_forward(g, lease, batch)?;
        let HeadForward::Seg {
            pixel_logits,
            targets,
            loss,
        } = fwd
        else {
            unreachable!()
        };
        let Some(peer) = peer else {
            return Ok((loss, None));
        };
        let regions: Vec<Vec<Vec<(usize, usize)>>> =
            targets.iter().map(|t| t.regions.clone()).collect();
        let voted = g.region_mean(pixel_logits, regions)?;
        // region_mean output length may differ from the attention l_max
        // when the longest label has empty trailing regions; pad by narrow
        let have = g.value(voted).shape()[1];
        let aligned = if have == peer.l_max {
            voted
        } else if have > peer.l_max {
            g.narrow(voted, 1, 0, peer.l_max)?
        } else {
            return Err(MutualError::TooFewSteps {
                got: have,
                need: peer.l_max,
            });
        };
        let shape = g.value(aligned).shape().to_vec();
        let n = shape[0];
        let chars = g.narrow(aligned, 2, 0, NUM_CHAR_CLASSES)?;
        let logp = g.log_softmax(chars)?;
        let logp = g.reshape(logp, &[n * peer.l_max, NUM_CHAR_CLASSES])?;
        let kl = g.kl_to_const(logp, peer.q.clone(), peer.mask.clone())?;
        let scaled = g.scale(kl, self.kl_weight / batch.len() as f64);
        let total = g.add(loss, scaled)?;
        Ok((total, Some(kl)))
    }

    /// One alternating update: forward both and update theta1 on L1, then
    /// forward both again (theta1 fresh) and update theta2 on L2.
    pub fn step(&mut self, imgs: &[&TextImage]) -> Result<MutualStepRecord, MutualError> {
        let batch = Batch::from_images(imgs)?;
        let use_kl = self.kl_weight != 0.0;

        // half-step A: theta1 learns, theta2 is the fixed target
        let seg_peer = if use_kl {
            Some(self.seg_targets(&batch)?)
        } else {
            None
        };
        let mut g1 = Graph::new();
        let lease1 = self.theta1.store.lease(&mut g1);
        let (l1_node, kl1_node) = self.build_l1(&mut g1, &lease1, &batch, seg_peer.as_ref())?;
        let l1 = g1.value(l1_node).item().as_f64();
        let kl1 = kl1_node.map_or(0.0, |n| g1.value(n).item().as_f64());
        debug_assert!(kl1 >= -1e-9, "negative KL sum {kl1}");
        assert!(l1.is_finite(), "non-finite L1");
        g1.backward(l1_node)?;
        self.theta1.store.adam_step(&g1, &lease1, &self.hyper);
        drop(g1);

        // half-step B: theta2 learns against the *updated* theta1
        let attn_peer = if use_kl {
            Some(self.attn_targets(&batch)?)
        } else {
            None
        };
        let mut g2 = Graph::new();
        let lease2 = self.theta2.store.lease(&mut g2);
        let (l2_node, kl2_node) = self.build_l2(&mut g2, &lease2, &batch, attn_peer.as_ref())?;
        let l2 = g2.value(l2_node).item().as_f64();
        let kl2 = kl2_node.map_or(0.0, |n| g2.value(n).item().as_f64());
        debug_assert!(kl2 >= -1e-9, "negative KL sum {kl2}");
        assert!(l2.is_finite(), "non-finite L2");
        g2.backward(l2_node)?;
        self.theta2.store.adam_step(&g2, &lease2, &self.hyper);

        let positions = seg_peer.map_or(0, |p| p.positions) + attn_peer.map_or(0, |p| p.positions);
        let mean_kl = if positions > 0 {
            (kl1 + kl2) / positions as f64
        } else {
            0.0
        };
        Ok(MutualStepRecord { l1, l2, mean_kl })
    }

    /// Per-parameter gradients of L1 w.r.t. theta1, the analytic side of
    /// the finite-difference check.
    pub fn l1_gradients(&self, imgs: &[&TextImage]) -> Result<Vec<Vec<f64>>, MutualError> {
        let batch = Batch::from_images(imgs)?;
        let peer = if self.kl_weight != 0.0 {
            Some(self.seg_targets(&batch)?)
        } else {
            None
        };
        let mut g = Graph::new();
        let lease = self.theta1.store.lease(&mut g);
        let (l1, _) = self.build_l1(&mut g, &lease, &batch, peer.as_ref())?;
        g.backward(l1)?;
        Ok((0..self.theta1.store.len())
            .map(|i| {
                let id = self.theta1.store.id_at(i);
                g.grad(lease.node(id))
                    .map(|t| t.data().iter().map(|v| v.as_f64()).collect())
                    .unwrap_or_else(|| vec![0.0; self.theta1.store.value(id).numel()])
            })
            .collect())
    }

    /// Loss values with the current parameters, no updates applied.
    pub fn losses(&self, imgs: &[&TextImage]) -> Result<MutualStepRecord, MutualError> {
        let batch = Batch::from_images(imgs)?;
        let use_kl = self.kl_weight != 0.0;
        let seg_peer = if use_kl {
            Some(self.seg_targets(&batch)?)
        } else {
            None
        };
        let attn_peer = if use_kl {
            Some(self.attn_targets(&batch)?)
        } else {
            None
        };
        let mut g1 = Graph::new();
        let lease1 = self.theta1.store.lease(&mut g1);
        let (l1_node, kl1_node) = self.build_l1(&mut g1, &lease1, &batch, seg_peer.as_ref())?;
        let mut g2 = Graph::new();
        let lease2 = self.theta2.store.lease(&mut g2);
        let (l2_node, kl2_node) = self.build_l2(&mut g2, &lease2, &batch, attn_peer.as_ref())?;
        let kl1 = kl1_node.map_or(0.0, |n| g1.value(n).item().as_f64());
        let kl2 = kl2_node.map_or(0.0, |n| g2.value(n).item().as_f64());
        let positions = seg_peer.as_ref().map_or(0, |p| p.positions)
            + attn_peer.as_ref().map_or(0, |p| p.positions);
        Ok(MutualStepRecord {
            l1: g1.value(l1_node).item().as_f64(),
            l2: g2.value(l2_node).item().as_f64(),
            mean_kl: if positions > 0 {
                (kl1 + kl2) / positions as f64
            } else {
                0.0
            },
        })
    }

    /// The aligned distribution pairs for one sample, computed from both
    /// models' current parameters; diagnostic counterpart of the training
    /// path.
    pub fn aligned_for(&self, img: &TextImage) -> Result<AlignedDistributions, MutualError> {
        let batch = Batch::from_images(&[img])?;
        let attn = self.attn_step_logits(&batch)?;
        let voted = self.seg_voted_logits(&batch)?;
        align_logits(&attn, &voted)
    }

    fn attn_step_logits(&self, batch: &Batch<R>) -> Result<Vec<Vec<f64>>, MutualError> {
        let mut g = Graph::new();
        let lease = self.theta1.store.lease(&mut g);
        let fwd = self.theta1.training_forward(&mut g, &lease, batch)?;
        let HeadForward::Attn { fwd, .. } = fwd else {
            unreachable!()
        };
        let val = g.value(fwd.logits);
        let (steps, k) = (val.shape()[1], val.shape()[2]);
        Ok((0..steps)
            .map(|s| (0..k).map(|c| val.data()[s * k + c].as_f64()).collect())
            .collect())
    }

    fn seg_voted_logits(&self, batch: &Batch<R>) -> Result<Vec<Option<Vec<f64>>>, MutualError> {
        let mut g = Graph::new();
        let lease = self.theta2.store.lease(&mut g);
        let fwd = self.theta2.training_forward(&mut g, &lease, batch)?;
        let HeadForward::Seg {
            pixel_logits,
            targets,
            ..
        } = fwd
        else {
            unreachable!()
        };
        let logits = g.value(pixel_logits);
        let shape = logits.shape().to_vec();
        let one = logits.reshaped(&shape[1..])?;
        Ok(crate::models::seg_vote(&one, &targets[0].regions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaseKind, CorpusKind, WordSample};
    use crate::render::{rasterize, StyleParams};

    fn render_batch(words: &[&str], seed: u64) -> Vec<TextImage> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let s = WordSample {
                    text: w.to_string(),
                    normalized: crate::corpus::normalize_lossy(w),
                    corpus_kind: CorpusKind::Ls,
                    case_kind: CaseKind::Lower,
                };
                rasterize(&s, &StyleParams::default(), seed + i as u64).unwrap()
            })
            .collect()
    }

    /// During the theta1 half-step the peer acts as a fixed target: its
    /// parameters are bit-identical before and after the update.
    #[test]
    fn theta2_is_untouched_by_the_theta1_half_step() {
        let mut pair = MutualPair::<f32>::new(5, 1.0, AdamHyper::default()).unwrap();
        let imgs = render_batch(&["cat", "dome"], 80);
        let refs: Vec<&TextImage> = imgs.iter().collect();
        let batch = Batch::from_images(&refs).unwrap();
        let before = pair.theta2.store.snapshot();
        // exactly the first half-step of the algorithm
        let peer = pair.seg_targets(&batch).unwrap();
        let mut g = Graph::new();
        let lease = pair.theta1.store.lease(&mut g);
        let (l1, _) = pair.build_l1(&mut g, &lease, &batch, Some(&peer)).unwrap();
        g.backward(l1).unwrap();
        pair.theta1.store.adam_step(&g, &lease, &AdamHyper::default());
        let after = pair.theta2.store.snapshot();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.data(), b.data(), "theta2 moved during theta1's update");
        }
    }

    /// The second forward of the step sees the freshly updated theta1.
    #[test]
    fn theta1_changes_between_the_two_forwards() {
        let mut pair = MutualPair::<f32>::new(6, 1.0, AdamHyper::default()).unwrap();
        let imgs = render_batch(&["bird", "salt"], 90);
        let refs: Vec<&TextImage> = imgs.iter().collect();
        let batch = Batch::from_images(&refs).unwrap();
        let before = pair.attn_step_logits(&batch).unwrap();
        pair.step(&refs).unwrap();
        let after = pair.attn_step_logits(&batch).unwrap();
        assert_ne!(before, after, "theta1 logits identical across the update");
    }

    #[test]
    fn kl_examples() {
        let q = [0.5, 0.5];
        assert!(kl_term(&q, &q).abs() < 1e-15);
        let p = [0.9, 0.1];
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((expect - 0.5108256).abs() < 1e-6);
        assert!((kl_term(&q, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_over_random_pairs() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(77, "kl", 0);
        for _ in 0..1000 {
            let k = rng.gen_range(2..8usize);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            };
            let q = draw(&mut rng);
            let p = draw(&mut rng);
            assert!(kl_term(&q, &p) >= -1e-12);
        }
    }

    #[test]
    fn identical_logits_align_to_identical_distributions() {
        let step: Vec<f64> = (0..43).map(|i| (i as f64 * 0.13).sin()).collect();
        let attn = vec![step.clone(), step.clone()];
        let voted = vec![Some(step.clone()), Some(step.clone())];
        let aligned = align_logits(&attn, &voted).unwrap();
        for i in 0..2 {
            assert!(aligned.mask[i]);
            for (a, b) in aligned.p1[i].iter().zip(&aligned.p2[i]) {
                assert!((a - b).abs() < 1e-12);
            }
            let s: f64 = aligned.p1[i].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!((kl_term(&aligned.p2[i], &aligned.p1[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_regions_mask_all_positions() {
        let step = vec![0.0f64; 43];
        let attn = vec![step.clone(); 3];
        let voted = vec![None, None, None];
        let aligned = align_logits(&attn, &voted).unwrap();
        assert!(aligned.mask.iter().all(|&m| !m));
        let kl: f64 = aligned
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| kl_term(&aligned.p2[i], &aligned.p1[i]))
            .sum();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn empty_label_is_an_error() {
        assert!(matches!(
            align_logits(&[], &[]),
            Err(MutualError::EmptyLabel)
        ));
    }

    #[test]
    fn restriction_matches_renormalized_full_softmax() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(3, "restrict", 0);
        for _ in 0..50 {
            let full: Vec<f64> = (0..43).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let restricted = restrict_softmax(&full, 42);
            // oracle: full softmax, drop last, renormalize
            let m = full.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = full.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = exp.iter().sum();
            let partial: f64 = exp[..42].iter().sum();
            for (i, &r) in restricted.iter().enumerate() {
                let oracle = (exp[i] / z) / (partial / z);
                assert!((r - oracle).abs() < 1e-12);
            }
        }
    }
}
