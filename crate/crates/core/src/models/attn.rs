//! Attention prediction head: GRU decoder with additive attention over the
//! frame sequence, teacher-forced during training, free-running at
//! inference.

use rand_chacha::ChaCha8Rng;

use super::init::glorot;
use super::{ClassSet, ModelError};
use crate::autodiff::{argmax, Element, Graph, Lease, NodeId, ParamId, ParamStore, Tensor};

pub struct AttnHead {
    embed: ParamId,
    att_wf: ParamId,
    att_wh: ParamId,
    att_v: ParamId,
    gru_wx_zr: ParamId,
    gru_wh_zr: ParamId,
    gru_b_zr: ParamId,
    gru_wx_n: ParamId,
    gru_wh_n: ParamId,
    gru_b_n: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    frame_dim: usize,
    hidden: usize,
    embed_dim: usize,
    att_dim: usize,
    classes: usize,
    max_steps: usize,
}

pub struct AttnForward {
    /// Teacher-forced step logits `(n, steps, k)`.
    pub logits: NodeId,
    /// Per-step attention weights `(n, t)`, for inspection.
    pub weights: Vec<NodeId>,
    pub steps: usize,
}

impl AttnHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Element>(
        store: &mut ParamStore<R>,
        frame_dim: usize,
        hidden: usize,
        embed_dim: usize,
        att_dim: usize,
        classes: usize,
        max_steps: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let vocab = classes + 1; // character classes + EOS share the table; +1 start token
        let gru_in = embed_dim + frame_dim;
        AttnHead {
            embed: store.add(
                "head.attn.embed",
                glorot(rng, vocab, embed_dim, &[vocab, embed_dim]),
            ),
            att_wf: store.add(
                "head.attn.att_wf",
                glorot(rng, frame_dim, att_dim, &[frame_dim, att_dim]),
            ),
            att_wh: store.add(
                "head.attn.att_wh",
                glorot(rng, hidden, att_dim, &[hidden, att_dim]),
            ),
            att_v: store.add("head.attn.att_v", glorot(rng, att_dim, 1, &[att_dim, 1])),
            gru_wx_zr: store.add(
                "head.attn.gru_wx_zr",
                glorot(rng, gru_in, 2 * hidden, &[gru_in, 2 * hidden]),
            ),
            gru_wh_zr: store.add(
                "head.attn.gru_wh_zr",
                glorot(rng, hidden, 2 * hidden, &[hidden, 2 * hidden]),
            ),
            gru_b_zr: store.add("head.attn.gru_b_zr", Tensor::zeros(&[2 * hidden])),
            gru_wx_n: store.add(
                "head.attn.gru_wx_n",
                glorot(rng, gru_in, hidden, &[gru_in, hidden]),
            ),
            gru_wh_n: store.add(
                "head.attn.gru_wh_n",
                glorot(rng, hidden, hidden, &[hidden, hidden]),
            ),
            gru_b_n: store.add("head.attn.gru_b_n", Tensor::zeros(&[hidden])),
            out_w: store.add(
                "head.attn.out_w",
                glorot(rng, hidden, classes, &[hidden, classes]),
            ),
            out_b: store.add("head.attn.out_b", Tensor::zeros(&[classes])),
            frame_dim,
            hidden,
            embed_dim,
            att_dim,
            classes,
            max_steps,
        }
    }

    fn start_token(&self) -> usize {
        self.classes // one past EOS in the embedding table
    }

    /// Project all frames through the attention feature matrix once.
    fn project_frames<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
    ) -> Result<NodeId, ModelError> {
        let shape = g.value(frames).shape().to_vec();
        let (n, t, d) = (shape[0], shape[1], shape[2]);
        let zero_b = g.constant(Tensor::zeros(&[self.att_dim]));
        let flat = g.reshape(frames, &[n * t, d])?;
        let proj = g.affine(flat, lease.node(self.att_wf), zero_b)?;
        Ok(g.reshape(proj, &[n, t, self.att_dim])?)
    }

    /// One decode step: attention glimpse, GRU update, output logits.
    fn step<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
        wf_frames: NodeId,
        h: NodeId,
        prev_ids: &[usize],
    ) -> Result<(NodeId, NodeId, NodeId), ModelError> {
        let shape = g.value(frames).shape().to_vec();
        let (n, t, _d) = (shape[0], shape[1], shape[2]);
        let zero_a = g.constant(Tensor::zeros(&[self.att_dim]));
        let zero_one = g.constant(Tensor::zeros(&[1]));
        let zero_2h = g.constant(Tensor::zeros(&[2 * self.hidden]));
        let zero_h = g.constant(Tensor::zeros(&[self.hidden]));

        // additive attention scores over frames
        let hproj = g.affine(h, lease.node(self.att_wh), zero_a)?;
        let hrep = g.repeat_frames(hproj, t)?;
        let mix = g.add(wf_frames, hrep)?;
        let mix = g.tanh(mix);
        let flat = g.reshape(mix, &[n * t, self.att_dim])?;
        let scores = g.affine(flat, lease.node(self.att_v), zero_one)?;
        let scores = g.reshape(scores, &[n, t])?;
        let weights = g.softmax(scores)?;
        let glimpse = g.frame_weighted_sum(frames, weights)?;

        // GRU input: previous-symbol embedding + glimpse
        let emb = g.gather_rows(lease.node(self.embed), prev_ids)?;
        let x = g.concat(&[emb, glimpse], 1)?;
        let zr_x = g.affine(x, lease.node(self.gru_wx_zr), lease.node(self.gru_b_zr))?;
        let zr_h = g.affine(h, lease.node(self.gru_wh_zr), zero_2h)?;
        let zr = g.add(zr_x, zr_h)?;
        let zr = g.sigmoid(zr);
        let z = g.narrow(zr, 1, 0, self.hidden)?;
        let r = g.narrow(zr, 1, self.hidden, self.hidden)?;
        let n_x = g.affine(x, lease.node(self.gru_wx_n), lease.node(self.gru_b_n))?;
        let n_h = g.affine(h, lease.node(self.gru_wh_n), zero_h)?;
        let n_h = g.mul(r, n_h)?;
        let n_pre = g.add(n_x, n_h)?;
        let n_act = g.tanh(n_pre);
        let keep = g.mul(z, h)?;
        let z_neg = g.scale(z, -1.0);
        let one_minus_z = g.add_scalar(z_neg, 1.0);
        let write = g.mul(one_minus_z, n_act)?;
        let h_new = g.add(keep, write)?;

        let logits = g.affine(h_new, lease.node(self.out_w), lease.node(self.out_b))?;
        Ok((h_new, logits, weights))
    }

    /// Teacher-forced forward over `labels` (character indices, no EOS):
    /// emits `max_len + 1` steps covering every label plus its EOS step.
    pub fn forward_teacher<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
        labels: &[Vec<usize>],
        eos: usize,
    ) -> Result<AttnForward, ModelError> {
        let shape = g.value(frames).shape().to_vec();
        let (n, t) = (shape[0], shape[1]);
        if t == 0 {
            return Err(ModelError::EmptyFeatures);
        }
        debug_assert_eq!(labels.len(), n);
        let steps = labels.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let wf = self.project_frames(g, lease, frames)?;
        let mut h = g.constant(Tensor::zeros(&[n, self.hidden]));
        let mut step_logits = Vec::with_capacity(steps);
        let mut weights = Vec::with_capacity(steps);
        for s in 0..steps {
            let prev: Vec<usize> = labels
                .iter()
                .map(|l| {
                    if s == 0 {
                        self.start_token()
                    } else if s - 1 < l.len() {
                        l[s - 1]
                    } else {
                        eos // padding past the label's EOS step
                    }
                })
                .collect();
            let (h_new, logits, w) = self.step(g, lease, frames, wf, h, &prev)?;
            h = h_new;
            step_logits.push(g.reshape(logits, &[n, 1, self.classes])?);
            weights.push(w);
        }
        let logits = g.concat(&step_logits, 1)?;
        Ok(AttnForward {
            logits,
            weights,
            steps,
        })
    }

    /// Mean per-step cross-entropy including each sample's EOS step; steps
    /// past a sample's EOS are masked out.
    pub fn loss<R: Element>(
        &self,
        g: &mut Graph<R>,
        fwd: &AttnForward,
        labels: &[Vec<usize>],
        eos: usize,
    ) -> Result<NodeId, ModelError> {
        let n = labels.len();
        let logp = g.log_softmax(fwd.logits)?;
        let flat = g.reshape(logp, &[n * fwd.steps, self.classes])?;
        let mut targets = Vec::with_capacity(n * fwd.steps);
        for l in labels {
            for s in 0..fwd.steps {
                targets.push(match s.cmp(&l.len()) {
                    std::cmp::Ordering::Less => Some(l[s]),
                    std::cmp::Ordering::Equal => Some(eos),
                    std::cmp::Ordering::Greater => None,
                });
            }
        }
        Ok(g.nll(flat, targets)?)
    }

    /// Free-running decode for a single sample; stops at EOS or
    /// `max_decode_steps`.
    pub fn free_run<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
        classes: &ClassSet,
    ) -> Result<String, ModelError> {
        let shape = g.value(frames).shape().to_vec();
        if shape[0] != 1 {
            return Err(ModelError::BadConfig("free_run expects batch 1".into()));
        }
        if shape[1] == 0 {
            return Err(ModelError::EmptyFeatures);
        }
        let wf = self.project_frames(g, lease, frames)?;
        let mut h = g.constant(Tensor::zeros(&[1, self.hidden]));
        let mut prev = self.start_token();
        let mut out = String::new();
        for _ in 0..self.max_steps {
            let (h_new, logits, _) = self.step(g, lease, frames, wf, h, &[prev])?;
            h = h_new;
            let best = argmax(g.value(logits).data());
            if best == classes.eos_index() {
                break;
            }
            if let Some(c) = classes.char_at(best) {
                out.push(c);
            }
            prev = best;
        }
        Ok(out)
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }
}
