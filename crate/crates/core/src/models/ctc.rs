//! CTC prediction head: frame-wise classifier, alignment-free loss, greedy
//! decoding.

use rand_chacha::ChaCha8Rng;

use super::init::glorot;
use super::{ClassSet, ModelError};
use crate::autodiff::{argmax, Element, Graph, Lease, NodeId, ParamId, ParamStore, Tensor};

pub struct CtcHead {
    w: ParamId,
    b: ParamId,
    classes: usize,
}

impl CtcHead {
    pub fn new<R: Element>(
        store: &mut ParamStore<R>,
        frame_dim: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(
            "head.ctc.w",
            glorot(rng, frame_dim, classes, &[frame_dim, classes]),
        );
        let b = store.add("head.ctc.b", Tensor::zeros(&[classes]));
        CtcHead { w, b, classes }
    }

    /// frames (n,t,d) -> per-frame log-probabilities (n,t,k).
    pub fn forward<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
    ) -> Result<NodeId, ModelError> {
        let shape = g.value(frames).shape().to_vec();
        let (n, t, d) = (shape[0], shape[1], shape[2]);
        let flat = g.reshape(frames, &[n * t, d])?;
        let logits = g.affine(flat, lease.node(self.w), lease.node(self.b))?;
        let logits = g.reshape(logits, &[n, t, self.classes])?;
        Ok(g.log_softmax(logits)?)
    }

    pub fn loss<R: Element>(
        &self,
        g: &mut Graph<R>,
        logp: NodeId,
        labels: &[Vec<usize>],
        blank: usize,
    ) -> Result<NodeId, ModelError> {
        Ok(g.ctc_loss(logp, labels, blank)?)
    }
}

/// Per-frame argmax, collapse adjacent repeats, drop blanks.
pub fn ctc_greedy_decode<R: Element>(logp: &Tensor<R>, classes: &ClassSet) -> String {
    let shape = logp.shape();
    let (t, k) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let blank = classes.blank_index();
    let mut out = String::new();
    let mut prev = usize::MAX;
    for ti in 0..t {
        let row = &logp.data()[ti * k..(ti + 1) * k];
        let best = argmax(row);
        if best != blank && best != prev {
            if let Some(c) = classes.char_at(best) {
                out.push(c);
            }
        }
        prev = best;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build a (t,k) score tensor whose per-frame argmax follows `path`.
    fn path_tensor(path: &[usize], k: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(&[path.len(), k]);
        for (i, &p) in path.iter().enumerate() {
            t.data_mut()[i * k + p] = 5.0;
        }
        t
    }

    #[test]
    fn greedy_decode_rules() {
        let cs = ClassSet::standard();
        let a = cs.index_of('a').unwrap();
        let b = cs.index_of('b').unwrap();
        let blank = cs.blank_index();
        let k = cs.num_classes();
        // [a,a,-,a,b] -> "aab"
        assert_eq!(
            ctc_greedy_decode(&path_tensor(&[a, a, blank, a, b], k), &cs),
            "aab"
        );
        // all blank -> ""
        assert_eq!(
            ctc_greedy_decode(&path_tensor(&[blank, blank, blank], k), &cs),
            ""
        );
        // [a,-,a] -> "aa": blank separates repeats
        assert_eq!(ctc_greedy_decode(&path_tensor(&[a, blank, a], k), &cs), "aa");
    }

    #[test]
    fn blank_argmax_frame_insertion_is_invariant() {
        use rand::Rng;
        let cs = ClassSet::standard();
        let k = cs.num_classes();
        let blank = cs.blank_index();
        let mut rng = crate::rng::stream_rng(5, "ctc-inv", 0);
        for _ in 0..50 {
            let t = rng.gen_range(1..8usize);
            let path: Vec<usize> = (0..t).map(|_| rng.gen_range(0..k)).collect();
            let base = ctc_greedy_decode(&path_tensor(&path, k), &cs);
            let pos = rng.gen_range(0..=t);
            let mut with_blank = path.clone();
            with_blank.insert(pos, blank);
            let inserted = ctc_greedy_decode(&path_tensor(&with_blank, k), &cs);
            assert_eq!(base, inserted, "path {path:?} + blank at {pos}");
        }
    }
}
