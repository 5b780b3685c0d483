//! Context modules: identity (height collapse for sequence heads),
//! bidirectional LSTM over frames, and the pyramid pooling module.

use rand_chacha::ChaCha8Rng;

use super::init::glorot;
use super::{CntxKind, ModelError};
use crate::autodiff::{Element, Graph, Lease, NodeId, ParamId, ParamStore, Tensor};

pub struct LstmDir {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    hidden: usize,
}

impl LstmDir {
    fn new<R: Element>(
        store: &mut ParamStore<R>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let wx = store.add(
            format!("{prefix}.wx"),
            glorot(rng, input, 4 * hidden, &[input, 4 * hidden]),
        );
        let wh = store.add(
            format!("{prefix}.wh"),
            glorot(rng, hidden, 4 * hidden, &[hidden, 4 * hidden]),
        );
        // forget-gate bias starts at 1
        let mut bias = Tensor::zeros(&[4 * hidden]);
        for v in bias.data_mut()[hidden..2 * hidden].iter_mut() {
            *v = R::one();
        }
        let b = store.add(format!("{prefix}.b"), bias);
        LstmDir { wx, wh, b, hidden }
    }

    /// Scan frames (n,t,c) in the given order; returns per-frame hidden
    /// states (n,h) in *frame* order.
    fn scan<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        frames: NodeId,
        reverse: bool,
    ) -> Result<Vec<NodeId>, ModelError> {
        let shape = g.value(frames).shape().to_vec();
        let (n, t, c) = (shape[0], shape[1], shape[2]);
        let hd = self.hidden;
        let zero_b = g.constant(Tensor::zeros(&[4 * hd]));
        let mut h = g.constant(Tensor::zeros(&[n, hd]));
        let mut cell = g.constant(Tensor::zeros(&[n, hd]));
        let order: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        let mut out = vec![None; t];
        for ti in order {
            let xt = g.narrow(frames, 1, ti, 1)?;
            let xt = g.reshape(xt, &[n, c])?;
            let zx = g.affine(xt, lease.node(self.wx), lease.node(self.b))?;
            let zh = g.affine(h, lease.node(self.wh), zero_b)?;
            let z = g.add(zx, zh)?;
            let i_gate = g.narrow(z, 1, 0, hd)?;
            let i_gate = g.sigmoid(i_gate);
            let f_gate = g.narrow(z, 1, hd, hd)?;
            let f_gate = g.sigmoid(f_gate);
            let g_cand = g.narrow(z, 1, 2 * hd, hd)?;
            let g_cand = g.tanh(g_cand);
            let o_gate = g.narrow(z, 1, 3 * hd, hd)?;
            let o_gate = g.sigmoid(o_gate);
            let keep = g.mul(f_gate, cell)?;
            let write = g.mul(i_gate, g_cand)?;
            cell = g.add(keep, write)?;
            let ct = g.tanh(cell);
            h = g.mul(o_gate, ct)?;
            out[ti] = Some(h);
        }
        Ok(out.into_iter().map(|o| o.expect("all frames visited")).collect())
    }
}

pub enum CntxModule {
    None,
    Blstm { fwd: LstmDir, bwd: LstmDir },
    Ppm { sizes: Vec<usize> },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, ParamStore, Tensor};
    use rand::Rng;

    /// With tied direction weights, scanning a reversed sequence swaps the
    /// roles of the two directions: out(rev(x)) == rev(swap_dirs(out(x))).
    #[test]
    fn blstm_direction_symmetry_with_tied_weights() {
        let (n, t, c, hd) = (2usize, 5usize, 3usize, 4usize);
        let mut store = ParamStore::<f64>::new();
        let mut rng = crate::rng::stream_rng(9, "blstm-sym", 0);
        let cntx = CntxModule::new(&mut store, CntxKind::Blstm, c, hd, &[], &mut rng);
        let (fwd, bwd) = cntx.blstm_dirs().unwrap();
        // tie the backward direction to the forward weights
        for (a, b) in [(fwd.wx, bwd.wx), (fwd.wh, bwd.wh), (fwd.b, bwd.b)] {
            let v = store.value(a).clone();
            store.set_value(b, v);
        }

        let mut data = vec![0.0f64; n * t * c];
        for v in data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let frames = Tensor::from_vec(&[n, t, c], data.clone()).unwrap();
        let mut rev = vec![0.0f64; n * t * c];
        for ni in 0..n {
            for ti in 0..t {
                for ci in 0..c {
                    rev[(ni * t + ti) * c + ci] = data[(ni * t + (t - 1 - ti)) * c + ci];
                }
            }
        }
        let reversed = Tensor::from_vec(&[n, t, c], rev).unwrap();

        // feed frames through the scan path via a height-1 2D map whose
        // collapse is the identity: (n,t,c) laid out as (n,c,1,t)
        let to_map = |frames: &Tensor<f64>| -> Tensor<f64> {
            let mut out = Tensor::zeros(&[n, c, 1, t]);
            for ni in 0..n {
                for ti in 0..t {
                    for ci in 0..c {
                        out.data_mut()[(ni * c + ci) * t + ti] =
                            frames.data()[(ni * t + ti) * c + ci];
                    }
                }
            }
            out
        };
        let run = |input: &Tensor<f64>| -> Tensor<f64> {
            let mut g = Graph::new();
            let lease = store.lease(&mut g);
            let map_node = g.constant(to_map(input));
            let out = cntx.forward_frames(&mut g, &lease, map_node).unwrap();
            g.value(out).clone()
        };
        let straight = run(&frames);
        let flipped = run(&reversed);

        for ni in 0..n {
            for ti in 0..t {
                for hi in 0..hd {
                    let f_straight = straight.at(&[ni, t - 1 - ti, hi]);
                    let b_straight = straight.at(&[ni, t - 1 - ti, hd + hi]);
                    let f_flip = flipped.at(&[ni, ti, hi]);
                    let b_flip = flipped.at(&[ni, ti, hd + hi]);
                    // forward over reversed input == reversed backward, and
                    // vice versa
                    assert!((f_flip - b_straight).abs() < 1e-12);
                    assert!((b_flip - f_straight).abs() < 1e-12);
                }
            }
        }
    }
}

impl CntxModule {
    pub fn new<R: Element>(
        store: &mut ParamStore<R>,
        kind: CntxKind,
        in_channels: usize,
        blstm_hidden: usize,
        ppm_sizes: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        match kind {
            CntxKind::None => CntxModule::None,
            CntxKind::Blstm => CntxModule::Blstm {
                fwd: LstmDir::new(store, "cntx.blstm.fwd", in_channels, blstm_hidden, rng),
                bwd: LstmDir::new(store, "cntx.blstm.bwd", in_channels, blstm_hidden, rng),
            },
            CntxKind::Ppm => CntxModule::Ppm {
                sizes: ppm_sizes.to_vec(),
            },
        }
    }

    /// Channel count of [`CntxModule::forward_frames`] output.
    pub fn frame_dim(&self, in_channels: usize, blstm_hidden: usize) -> usize {
        match self {
            CntxModule::None => in_channels,
            CntxModule::Blstm { .. } => 2 * blstm_hidden,
            CntxModule::Ppm { sizes } => in_channels * (1 + sizes.len()),
        }
    }

    /// Channel count of [`CntxModule::forward_2d`] output.
    pub fn map_dim(&self, in_channels: usize) -> Result<usize, ModelError> {
        match self {
            CntxModule::None => Ok(in_channels),
            CntxModule::Ppm { sizes } => Ok(in_channels * (1 + sizes.len())),
            CntxModule::Blstm { .. } => Err(ModelError::SegWithBlstm),
        }
    }

    /// Sequence-head path: (n,c,h,w) -> frames (n,w,d).
    pub fn forward_frames<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        fm: NodeId,
    ) -> Result<NodeId, ModelError> {
        match self {
            CntxModule::None => Ok(g.collapse_height(fm)?),
            CntxModule::Blstm { fwd, bwd } => {
                let frames = g.collapse_height(fm)?;
                let shape = g.value(frames).shape().to_vec();
                let (n, t) = (shape[0], shape[1]);
                let hf = fwd.scan(g, lease, frames, false)?;
                let hb = bwd.scan(g, lease, frames, true)?;
                let mut steps = Vec::with_capacity(t);
                for (f, b) in hf.into_iter().zip(hb) {
                    let both = g.concat(&[f, b], 1)?;
                    let hd2 = g.value(both).shape()[1];
                    steps.push(g.reshape(both, &[n, 1, hd2])?);
                }
                Ok(g.concat(&steps, 1)?)
            }
            CntxModule::Ppm { .. } => {
                let enlarged = self.forward_2d(g, lease, fm)?;
                Ok(g.collapse_height(enlarged)?)
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn blstm_dirs(&self) -> Option<(&LstmDir, &LstmDir)> {
        match self {
            CntxModule::Blstm { fwd, bwd } => Some((fwd, bwd)),
            _ => None,
        }
    }

    /// Segmentation path: (n,c,h,w) -> (n,c',h,w). BLSTM has no 2D form.
    pub fn forward_2d<R: Element>(
        &self,
        g: &mut Graph<R>,
        _lease: &Lease,
        fm: NodeId,
    ) -> Result<NodeId, ModelError> {
        match self {
            CntxModule::None => Ok(fm),
            CntxModule::Blstm { .. } => Err(ModelError::SegWithBlstm),
            CntxModule::Ppm { sizes } => {
                let shape = g.value(fm).shape().to_vec();
                let (h, w) = (shape[2], shape[3]);
                let mut parts = vec![fm];
                for &s in sizes {
                    let pooled = g.adaptive_avg_pool(fm, s, s)?;
                    parts.push(g.bilinear_resize(pooled, h, w)?);
                }
                Ok(g.concat(&parts, 1)?)
            }
        }
    }
}
