//! Named trainable parameters and the Adam update.

use super::graph::{Graph, NodeId};
use super::scalar::Element;
use super::tensor::Tensor;

/// Handle to a parameter registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub struct ParamEntry<R: Element> {
    pub name: String,
    pub value: Tensor<R>,
    m: Tensor<R>,
    v: Tensor<R>,
}

/// Owns parameter values and optimizer state between training steps.
/// Each step leases the parameters into a fresh [`Graph`] and applies the
/// resulting gradients with [`ParamStore::adam_step`].
pub struct ParamStore<R: Element> {
    entries: Vec<ParamEntry<R>>,
    step: u64,
}

/// Mapping from [`ParamId`] to the leaf nodes of one graph.
pub struct Lease {
    nodes: Vec<NodeId>,
}

impl Lease {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

/// Adam hyperparameters; defaults are lr 1e-3, betas (0.9, 0.999), eps 1e-8.
#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<R: Element> Default for ParamStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Element> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        let shape = value.shape().to_vec();
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<R> {
        &self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<R>) {
        debug_assert_eq!(value.shape(), self.entries[id.0].value.shape());
        self.entries[id.0].value = value;
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    /// Handle of the i-th registered parameter (registration order).
    pub fn id_at(&self, i: usize) -> ParamId {
        assert!(i < self.entries.len());
        ParamId(i)
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Inject every parameter as a trainable leaf of `g`.
    pub fn lease(&self, g: &mut Graph<R>) -> Lease {
        Lease {
            nodes: self
                .entries
                .iter()
                .map(|e| g.param(e.value.clone()))
                .collect(),
        }
    }

    /// First/second-moment update with bias correction. Parameters whose
    /// leaf received no gradient decay their moments but see a zero
    /// gradient.
    pub fn adam_step(&mut self, g: &Graph<R>, lease: &Lease, hp: &AdamHyper) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        let (b1, b2) = (R::from_f64(hp.beta1), R::from_f64(hp.beta2));
        let (ob1, ob2) = (R::from_f64(1.0 - hp.beta1), R::from_f64(1.0 - hp.beta2));
        for (i, e) in self.entries.iter_mut().enumerate() {
            let grad = g.grad(lease.nodes[i]);
            for j in 0..e.value.numel() {
                let gj = grad.map_or(R::zero(), |t| t.data()[j]);
                let m = b1 * e.m.data()[j] + ob1 * gj;
                let v = b2 * e.v.data()[j] + ob2 * gj * gj;
                e.m.data_mut()[j] = m;
                e.v.data_mut()[j] = v;
                let mhat = m.as_f64() / bc1;
                let vhat = v.as_f64() / bc2;
                let upd = hp.lr * mhat / (vhat.sqrt() + hp.eps);
                e.value.data_mut()[j] = e.value.data_mut()[j] - R::from_f64(upd);
            }
        }
    }

    /// Parameter values only (moments excluded), for snapshot comparison.
    pub fn snapshot(&self) -> Vec<Tensor<R>> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_from_fresh_state_leaves_params_unchanged() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap());
        let mut g = Graph::new();
        let lease = store.lease(&mut g);
        // no backward -> no grads
        store.adam_step(&g, &lease, &AdamHyper::default());
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap());
        let hp = AdamHyper::default();
        let mut g = Graph::new();
        let lease = store.lease(&mut g);
        // loss = 3*w[0] - 0.5*w[1]; grads (3, -0.5)
        let w = lease.node(id);
        let a = g.narrow(w, 0, 0, 1).unwrap();
        let b = g.narrow(w, 0, 1, 1).unwrap();
        let a3 = g.scale(a, 3.0);
        let bn = g.scale(b, -0.5);
        let s = g.add(a3, bn).unwrap();
        let loss = g.sum_all(s);
        g.backward(loss).unwrap();
        store.adam_step(&g, &lease, &hp);
        let v = store.value(id).data();
        assert!((v[0] + hp.lr).abs() < 1e-6, "update ~ -lr*sign(+): {}", v[0]);
        assert!((v[1] - hp.lr).abs() < 1e-6, "update ~ -lr*sign(-): {}", v[1]);
    }

    #[test]
    fn constant_grad_step_magnitude_approaches_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_vec(&[1], vec![0.0]).unwrap());
        let hp = AdamHyper::default();
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..5000 {
            let mut g = Graph::new();
            let lease = store.lease(&mut g);
            let w = lease.node(id);
            let l0 = g.scale(w, 0.37); // constant grad 0.37
            let loss = g.sum_all(l0);
            g.backward(loss).unwrap();
            store.adam_step(&g, &lease, &hp);
            let cur = store.value(id).data()[0];
            step = (cur - prev).abs();
            prev = cur;
        }
        assert!(
            (step - hp.lr).abs() < 1e-5,
            "limit step {step} vs lr {}",
            hp.lr
        );
    }
}
