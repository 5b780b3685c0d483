//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is a flat tape of operation records; builders run the
//! forward computation eagerly and append a node, so the tape order is a
//! topological order by construction. [`Graph::backward`] walks it in
//! exact reverse, accumulating gradients. Graphs are built fresh per
//! training step and confined to one thread; kernels may fan out
//! internally via rayon.

use rayon::prelude::*;

use super::ctc;
use super::kernels;
use super::scalar::{el, Element};
use super::tensor::Tensor;
use super::AdError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Pixel coordinates (y, x) of one voting region, per sample and label
/// position.
pub type Regions = Vec<Vec<Vec<(usize, usize)>>>;

enum Op<R: Element> {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Conv3x3 { x: NodeId, w: NodeId, b: NodeId },
    Conv1x1 { x: NodeId, w: NodeId, b: NodeId },
    MaxPool2 { x: NodeId, argmax: Vec<u32> },
    AdaptiveAvgPool { x: NodeId },
    BilinearResize { x: NodeId },
    CollapseHeight { x: NodeId },
    ChannelsLast { x: NodeId },
    Relu { x: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Softmax { x: NodeId },
    LogSoftmax { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: R },
    AddScalar { x: NodeId },
    Concat { xs: Vec<NodeId>, axis: usize },
    Narrow { x: NodeId, axis: usize, start: usize },
    Reshape { x: NodeId },
    GatherRows { table: NodeId, ids: Vec<usize> },
    RepeatFrames { x: NodeId },
    FrameWeightedSum { frames: NodeId, weights: NodeId },
    SumAll { x: NodeId },
    MeanAll { x: NodeId },
    Nll { logp: NodeId, targets: Vec<Option<usize>> },
    CtcLoss { logp: NodeId, dlogp: Tensor<R> },
    KlToConst { logp: NodeId, target: Tensor<R>, mask: Vec<bool> },
    RegionMean { x: NodeId, regions: Regions },
}

struct Node<R: Element> {
    value: Tensor<R>,
    op: Op<R>,
    needs_grad: bool,
}

/// Reverse-mode tape.
pub struct Graph<R: Element> {
    nodes: Vec<Node<R>>,
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Element> Default for Graph<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Element> Graph<R> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<R> {
        &self.nodes[id.0].value
    }

    /// Gradient populated by [`Graph::backward`]; `None` if the node was
    /// not reached or does not require gradients.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<R>> {
        self.grads[id.0].as_ref()
    }

    pub fn all_values_finite(&self) -> bool {
        self.nodes.iter().all(|n| n.value.is_finite())
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, needs_grad: bool) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite node value");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<R>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&mut self, value: Tensor<R>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    // ---- elementwise ----------------------------------------------------

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| if a > R::zero() { a } else { R::zero() });
        let ng = self.wants(x);
        self.push(v, Op::Relu { x }, ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.tanh());
        let ng = self.wants(x);
        self.push(v, Op::Tanh { x }, ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self
            .value(x)
            .map(|a| R::one() / (R::one() + (-a).exp()));
        let ng = self.wants(x);
        self.push(v, Op::Sigmoid { x }, ng)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let c = el::<R>(c);
        let v = self.value(x).map(|a| a * c);
        let ng = self.wants(x);
        self.push(v, Op::Scale { x, c }, ng)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let c = el::<R>(c);
        let v = self.value(x).map(|a| a + c);
        let ng = self.wants(x);
        self.push(v, Op::AddScalar { x }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.same_shape("add", a, b)?;
        let v = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x + y)
                .collect(),
        )?;
        let ng = self.wants(a) || self.wants(b);
        Ok(self.push(v, Op::Add { a, b }, ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.same_shape("mul", a, b)?;
        let v = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x * y)
                .collect(),
        )?;
        let ng = self.wants(a) || self.wants(b);
        Ok(self.push(v, Op::Mul { a, b }, ng))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), AdError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AdError::Shape {
                op,
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        Ok(())
    }

    // ---- softmax family (last axis, f64 accumulation) -------------------

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let t = self.value(x);
        let k = *t.shape().last().ok_or_else(|| AdError::Shape {
            op: "softmax",
            detail: "scalar input".into(),
        })?;
        let mut data = vec![R::zero(); t.numel()];
        for (row_out, row_in) in data.chunks_mut(k).zip(t.data().chunks(k)) {
            softmax_row(row_in, row_out);
        }
        let v = Tensor::from_vec(t.shape(), data)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::Softmax { x }, ng))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let t = self.value(x);
        let k = *t.shape().last().ok_or_else(|| AdError::Shape {
            op: "log_softmax",
            detail: "scalar input".into(),
        })?;
        let mut data = vec![R::zero(); t.numel()];
        for (row_out, row_in) in data.chunks_mut(k).zip(t.data().chunks(k)) {
            log_softmax_row(row_in, row_out);
        }
        let v = Tensor::from_vec(t.shape(), data)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::LogSoftmax { x }, ng))
    }

    // ---- linear / convolution -------------------------------------------

    /// x: (m,k) @ w: (k,n) + b: (n)
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
            return Err(AdError::Shape {
                op: "affine",
                detail: format!("x {:?}, w {:?}, b {:?}", xs, ws, bs),
            });
        }
        let (m, k, n) = (xs[0], xs[1], ws[1]);
        let mut out = vec![R::zero(); m * n];
        kernels::affine_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            m,
            k,
            n,
            &mut out,
        );
        let v = Tensor::from_vec(&[m, n], out)?;
        let ng = self.wants(x) || self.wants(w) || self.wants(b);
        Ok(self.push(v, Op::Affine { x, w, b }, ng))
    }

    /// x: (n,c,h,w), weights (o,c,3,3), bias (o); stride 1, zero pad 1.
    pub fn conv3x3(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if xs.len() != 4
            || ws.len() != 4
            || ws[2] != 3
            || ws[3] != 3
            || ws[1] != xs[1]
            || bs.len() != 1
            || bs[0] != ws[0]
        {
            return Err(AdError::Shape {
                op: "conv2d",
                detail: format!("x {:?}, w {:?}, b {:?}", xs, ws, bs),
            });
        }
        let (n, c, h, wd, o) = (xs[0], xs[1], xs[2], xs[3], ws[0]);
        let mut out = vec![R::zero(); n * o * h * wd];
        kernels::conv3x3_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            c,
            h,
            wd,
            o,
            &mut out,
        );
        let v = Tensor::from_vec(&[n, o, h, wd], out)?;
        let ng = self.wants(x) || self.wants(w) || self.wants(b);
        Ok(self.push(v, Op::Conv3x3 { x, w, b }, ng))
    }

    /// Pointwise channel mix: x (n,c,h,w), w (o,c), b (o).
    pub fn conv1x1(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if xs.len() != 4 || ws.len() != 2 || ws[1] != xs[1] || bs.len() != 1 || bs[0] != ws[0] {
            return Err(AdError::Shape {
                op: "conv1x1",
                detail: format!("x {:?}, w {:?}, b {:?}", xs, ws, bs),
            });
        }
        let (n, c, h, wd, o) = (xs[0], xs[1], xs[2], xs[3], ws[0]);
        let plane = h * wd;
        let mut out = vec![R::zero(); n * o * plane];
        kernels::conv1x1_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            n,
            c,
            plane,
            o,
            &mut out,
        );
        let v = Tensor::from_vec(&[n, o, h, wd], out)?;
        let ng = self.wants(x) || self.wants(w) || self.wants(b);
        Ok(self.push(v, Op::Conv1x1 { x, w, b }, ng))
    }

    // ---- pooling / resize ------------------------------------------------

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0 {
            return Err(AdError::Shape {
                op: "max_pool2d",
                detail: format!("{:?} (h, w must be even)", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![R::zero(); n * c * oh * ow];
        let mut argmax = vec![0u32; n * c * oh * ow];
        let data = self.value(x).data();
        for p in 0..n * c {
            let src = &data[p * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0u32;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (2 * oy + dy) * w + 2 * ox + dx;
                            let v = src[idx].as_f64();
                            if v > best {
                                best = v;
                                best_i = idx as u32;
                            }
                        }
                    }
                    out[(p * oh + oy) * ow + ox] = R::from_f64(best);
                    argmax[(p * oh + oy) * ow + ox] = best_i;
                }
            }
        }
        let v = Tensor::from_vec(&[n, c, oh, ow], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::MaxPool2 { x, argmax }, ng))
    }

    /// Adaptive average pooling to a (th, tw) grid.
    pub fn adaptive_avg_pool(
        &mut self,
        x: NodeId,
        th: usize,
        tw: usize,
    ) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || th == 0 || tw == 0 {
            return Err(AdError::Shape {
                op: "avg_pool2d",
                detail: format!("{:?} -> ({th},{tw})", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let mut out = vec![R::zero(); n * c * th * tw];
        let data = self.value(x).data();
        for p in 0..n * c {
            let src = &data[p * h * w..][..h * w];
            for oy in 0..th {
                let (y0, y1) = bin(oy, h, th);
                for ox in 0..tw {
                    let (x0, x1) = bin(ox, w, tw);
                    let mut acc = 0.0f64;
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            acc += src[y * w + xx].as_f64();
                        }
                    }
                    out[(p * th + oy) * tw + ox] =
                        R::from_f64(acc / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        let v = Tensor::from_vec(&[n, c, th, tw], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::AdaptiveAvgPool { x }, ng))
    }

    /// Bilinear interpolation to (oh, ow), half-pixel centers.
    pub fn bilinear_resize(&mut self, x: NodeId, oh: usize, ow: usize) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || oh == 0 || ow == 0 {
            return Err(AdError::Shape {
                op: "bilinear_resize",
                detail: format!("{:?} -> ({oh},{ow})", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let ytab = lerp_table(h, oh);
        let xtab = lerp_table(w, ow);
        let mut out = vec![R::zero(); n * c * oh * ow];
        let data = self.value(x).data();
        for p in 0..n * c {
            let src = &data[p * h * w..][..h * w];
            let dst = &mut out[p * oh * ow..][..oh * ow];
            for (oy, &(y0, y1, ty)) in ytab.iter().enumerate() {
                for (ox, &(x0, x1, tx)) in xtab.iter().enumerate() {
                    let v = (1.0 - ty) * (1.0 - tx) * src[y0 * w + x0].as_f64()
                        + (1.0 - ty) * tx * src[y0 * w + x1].as_f64()
                        + ty * (1.0 - tx) * src[y1 * w + x0].as_f64()
                        + ty * tx * src[y1 * w + x1].as_f64();
                    dst[oy * ow + ox] = R::from_f64(v);
                }
            }
        }
        let v = Tensor::from_vec(&[n, c, oh, ow], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::BilinearResize { x }, ng))
    }

    /// (n,c,h,w) -> (n,w,c): mean over the height axis, frames along width.
    pub fn collapse_height(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(AdError::Shape {
                op: "collapse_height",
                detail: format!("{:?}", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let mut out = vec![R::zero(); n * w * c];
        let data = self.value(x).data();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                for t in 0..w {
                    let mut acc = 0.0f64;
                    for y in 0..h {
                        acc += data[base + y * w + t].as_f64();
                    }
                    out[(ni * w + t) * c + ci] = R::from_f64(acc / h as f64);
                }
            }
        }
        let v = Tensor::from_vec(&[n, w, c], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::CollapseHeight { x }, ng))
    }

    /// (n,c,h,w) -> (n*h*w, c): one row of class scores per pixel.
    pub fn channels_last(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(AdError::Shape {
                op: "channels_last",
                detail: format!("{:?}", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let mut out = vec![R::zero(); n * c * h * w];
        let data = self.value(x).data();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                for p in 0..h * w {
                    out[(ni * h * w + p) * c + ci] = data[base + p];
                }
            }
        }
        let v = Tensor::from_vec(&[n * h * w, c], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::ChannelsLast { x }, ng))
    }

    // ---- structural -------------------------------------------------------

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId, AdError> {
        if xs.is_empty() {
            return Err(AdError::Shape {
                op: "concat",
                detail: "no inputs".into(),
            });
        }
        let first = self.value(xs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(AdError::Shape {
                op: "concat",
                detail: format!("axis {axis} out of range for {:?}", first),
            });
        }
        let mut total_axis = 0;
        for &id in xs {
            let s = self.value(id).shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(AdError::Shape {
                    op: "concat",
                    detail: format!("{:?} vs {:?} along axis {axis}", s, first),
                });
            }
            total_axis += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total_axis;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![R::zero(); shape.iter().product()];
        let row = total_axis * inner;
        let mut off = 0;
        for &id in xs {
            let s = self.value(id).shape()[axis];
            let data = self.value(id).data();
            for o in 0..outer {
                let src = &data[o * s * inner..][..s * inner];
                let dst = &mut out[o * row + off * inner..][..s * inner];
                dst.copy_from_slice(src);
            }
            off += s;
        }
        let v = Tensor::from_vec(&shape, out)?;
        let ng = xs.iter().any(|&id| self.wants(id));
        Ok(self.push(
            v,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn narrow(
        &mut self,
        x: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if axis >= xs.len() || start + len > xs[axis] || len == 0 {
            return Err(AdError::Shape {
                op: "narrow",
                detail: format!("{:?} axis {axis} [{start}..{}]", xs, start + len),
            });
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let mut shape = xs.clone();
        shape[axis] = len;
        let mut out = vec![R::zero(); shape.iter().product()];
        let data = self.value(x).data();
        for o in 0..outer {
            let src = &data[(o * xs[axis] + start) * inner..][..len * inner];
            out[o * len * inner..][..len * inner].copy_from_slice(src);
        }
        let v = Tensor::from_vec(&shape, out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::Narrow { x, axis, start }, ng))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, AdError> {
        let v = self.value(x).reshaped(shape)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::Reshape { x }, ng))
    }

    /// Embedding lookup: rows of `table` (v,d) selected by `ids`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, AdError> {
        let ts = self.value(table).shape().to_vec();
        if ts.len() != 2 || ids.iter().any(|&i| i >= ts[0]) {
            return Err(AdError::Shape {
                op: "gather_rows",
                detail: format!("table {:?}, max id {:?}", ts, ids.iter().max()),
            });
        }
        let d = ts[1];
        let mut out = vec![R::zero(); ids.len() * d];
        let data = self.value(table).data();
        for (r, &i) in ids.iter().enumerate() {
            out[r * d..][..d].copy_from_slice(&data[i * d..][..d]);
        }
        let v = Tensor::from_vec(&[ids.len(), d], out)?;
        let ng = self.wants(table);
        Ok(self.push(
            v,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// (n,a) -> (n,t,a) by repetition along a new middle axis.
    pub fn repeat_frames(&mut self, x: NodeId, t: usize) -> Result<NodeId, AdError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 || t == 0 {
            return Err(AdError::Shape {
                op: "repeat_frames",
                detail: format!("{:?} x {t}", xs),
            });
        }
        let (n, a) = (xs[0], xs[1]);
        let mut out = vec![R::zero(); n * t * a];
        let data = self.value(x).data();
        for ni in 0..n {
            let src = &data[ni * a..][..a];
            for ti in 0..t {
                out[(ni * t + ti) * a..][..a].copy_from_slice(src);
            }
        }
        let v = Tensor::from_vec(&[n, t, a], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::RepeatFrames { x }, ng))
    }

    /// out[n,d] = sum_t weights[n,t] * frames[n,t,d]
    pub fn frame_weighted_sum(
        &mut self,
        frames: NodeId,
        weights: NodeId,
    ) -> Result<NodeId, AdError> {
        let fs = self.value(frames).shape().to_vec();
        let ws = self.value(weights).shape().to_vec();
        if fs.len() != 3 || ws.len() != 2 || fs[0] != ws[0] || fs[1] != ws[1] {
            return Err(AdError::Shape {
                op: "frame_weighted_sum",
                detail: format!("frames {:?}, weights {:?}", fs, ws),
            });
        }
        let (n, t, d) = (fs[0], fs[1], fs[2]);
        let mut out = vec![R::zero(); n * d];
        let fd = self.value(frames).data();
        let wd = self.value(weights).data();
        for ni in 0..n {
            let dst = &mut out[ni * d..][..d];
            for ti in 0..t {
                let wv = wd[ni * t + ti];
                let src = &fd[(ni * t + ti) * d..][..d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += wv * *s;
                }
            }
        }
        let v = Tensor::from_vec(&[n, d], out)?;
        let ng = self.wants(frames) || self.wants(weights);
        Ok(self.push(v, Op::FrameWeightedSum { frames, weights }, ng))
    }

    // ---- reductions / losses ----------------------------------------------

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let acc: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        let ng = self.wants(x);
        self.push(Tensor::scalar(R::from_f64(acc)), Op::SumAll { x }, ng)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel().max(1);
        let acc: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        let ng = self.wants(x);
        self.push(
            Tensor::scalar(R::from_f64(acc / n as f64)),
            Op::MeanAll { x },
            ng,
        )
    }

    /// Mean negative log-likelihood over rows of `logp` (m,k); rows with a
    /// `None` target are masked out.
    pub fn nll(&mut self, logp: NodeId, targets: Vec<Option<usize>>) -> Result<NodeId, AdError> {
        let s = self.value(logp).shape().to_vec();
        if s.len() != 2 || targets.len() != s[0] {
            return Err(AdError::Shape {
                op: "nll",
                detail: format!("logp {:?}, {} targets", s, targets.len()),
            });
        }
        let k = s[1];
        let valid = targets.iter().flatten().count();
        if valid == 0 {
            return Err(AdError::Shape {
                op: "nll",
                detail: "no unmasked targets".into(),
            });
        }
        if let Some(&t) = targets.iter().flatten().find(|&&t| t >= k) {
            return Err(AdError::Shape {
                op: "nll",
                detail: format!("target {t} out of range {k}"),
            });
        }
        let data = self.value(logp).data();
        let mut acc = 0.0f64;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                acc -= data[r * k + t].as_f64();
            }
        }
        let ng = self.wants(logp);
        Ok(self.push(
            Tensor::scalar(R::from_f64(acc / valid as f64)),
            Op::Nll { logp, targets },
            ng,
        ))
    }

    /// CTC loss over `logp` (n,t,k) log-probabilities; mean over batch.
    pub fn ctc_loss(
        &mut self,
        logp: NodeId,
        labels: &[Vec<usize>],
        blank: usize,
    ) -> Result<NodeId, AdError> {
        let s = self.value(logp).shape().to_vec();
        if s.len() != 3 || labels.len() != s[0] || blank >= s[2] {
            return Err(AdError::Shape {
                op: "ctc_loss",
                detail: format!("logp {:?}, {} labels, blank {blank}", s, labels.len()),
            });
        }
        let (loss, dlogp) = ctc::ctc_batch(self.value(logp), labels, blank)?;
        let ng = self.wants(logp);
        Ok(self.push(
            Tensor::scalar(R::from_f64(loss)),
            Op::CtcLoss { logp, dlogp },
            ng,
        ))
    }

    /// Sum over unmasked rows of KL(target || softmax-from-logp), where the
    /// target is a constant distribution per row. logp: (m,k); target the
    /// same shape; learner probabilities floored at 1e-12.
    pub fn kl_to_const(
        &mut self,
        logp: NodeId,
        target: Tensor<R>,
        mask: Vec<bool>,
    ) -> Result<NodeId, AdError> {
        let s = self.value(logp).shape().to_vec();
        if s.len() != 2 || target.shape() != &s[..] || mask.len() != s[0] {
            return Err(AdError::Shape {
                op: "kl_to_const",
                detail: format!(
                    "logp {:?}, target {:?}, {} mask rows",
                    s,
                    target.shape(),
                    mask.len()
                ),
            });
        }
        let k = s[1];
        let floor = 1e-12f64.ln();
        let data = self.value(logp).data();
        let mut acc = 0.0f64;
        for (r, &keep) in mask.iter().enumerate() {
            if !keep {
                continue;
            }
            for c in 0..k {
                let q = target.data()[r * k + c].as_f64();
                if q <= 0.0 {
                    continue;
                }
                let lp = data[r * k + c].as_f64().max(floor);
                acc += q * (q.ln() - lp);
            }
        }
        let ng = self.wants(logp);
        Ok(self.push(
            Tensor::scalar(R::from_f64(acc)),
            Op::KlToConst { logp, target, mask },
            ng,
        ))
    }

    /// Mean of pixel score vectors over each region: x (n,k,h,w) with
    /// per-sample, per-position pixel lists -> (n, l_max, k). Positions with
    /// an empty region produce zeros (callers track the mask).
    pub fn region_mean(&mut self, x: NodeId, regions: Regions) -> Result<NodeId, AdError> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 || regions.len() != s[0] {
            return Err(AdError::Shape {
                op: "region_mean",
                detail: format!("x {:?}, {} region sets", s, regions.len()),
            });
        }
        let (n, k, h, w) = (s[0], s[1], s[2], s[3]);
        let lmax = regions.iter().map(|r| r.len()).max().unwrap_or(0).max(1);
        let mut out = vec![R::zero(); n * lmax * k];
        let data = self.value(x).data();
        for (ni, regs) in regions.iter().enumerate() {
            for (li, pix) in regs.iter().enumerate() {
                if pix.is_empty() {
                    continue;
                }
                for ki in 0..k {
                    let base = (ni * k + ki) * h * w;
                    let mut acc = 0.0f64;
                    for &(y, xx) in pix {
                        debug_assert!(y < h && xx < w);
                        acc += data[base + y * w + xx].as_f64();
                    }
                    out[(ni * lmax + li) * k + ki] = R::from_f64(acc / pix.len() as f64);
                }
            }
        }
        let v = Tensor::from_vec(&[n, lmax, k], out)?;
        let ng = self.wants(x);
        Ok(self.push(v, Op::RegionMean { x, regions }, ng))
    }

    // ---- backward ----------------------------------------------------------

    /// Populate gradients of every trainable leaf reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AdError> {
        if self.value(loss).numel() != 1 {
            return Err(AdError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for g in grads.iter_mut() {
            *g = None;
        }
        grads[loss.0] = Some(Tensor::filled(nodes[loss.0].value.shape(), R::one()));

        for i in (0..=loss.0).rev() {
            if !nodes[i].needs_grad || grads[i].is_none() {
                continue;
            }
            if matches!(nodes[i].op, Op::Leaf) {
                continue; // keep leaf grads for the optimizer
            }
            let g = grads[i].take().expect("grad present");
            back_node(nodes, grads, i, g);
        }
        Ok(())
    }
}

fn wants<R: Element>(nodes: &[Node<R>], id: NodeId) -> bool {
    nodes[id.0].needs_grad
}

fn take_buf<R: Element>(
    nodes: &[Node<R>],
    grads: &mut [Option<Tensor<R>>],
    id: NodeId,
) -> Tensor<R> {
    grads[id.0]
        .take()
        .unwrap_or_else(|| Tensor::zeros(nodes[id.0].value.shape()))
}

fn put_buf<R: Element>(grads: &mut [Option<Tensor<R>>], id: NodeId, t: Tensor<R>) {
    grads[id.0] = Some(t);
}

#[allow(clippy::too_many_lines)]
fn back_node<R: Element>(
    nodes: &[Node<R>],
    grads: &mut [Option<Tensor<R>>],
    i: usize,
    g: Tensor<R>,
) {
    let val = |id: &NodeId| -> &Tensor<R> { &nodes[id.0].value };
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Relu { x } => {
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                for ((d, &xv), &gv) in dx.data_mut().iter_mut().zip(val(x).data()).zip(g.data()) {
                    if xv > R::zero() {
                        *d += gv;
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Tanh { x } => {
            if wants(nodes, *x) {
                let y = &nodes[i].value;
                let mut dx = take_buf(nodes, grads, *x);
                for ((d, &yv), &gv) in dx.data_mut().iter_mut().zip(y.data()).zip(g.data()) {
                    *d += gv * (R::one() - yv * yv);
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Sigmoid { x } => {
            if wants(nodes, *x) {
                let y = &nodes[i].value;
                let mut dx = take_buf(nodes, grads, *x);
                for ((d, &yv), &gv) in dx.data_mut().iter_mut().zip(y.data()).zip(g.data()) {
                    *d += gv * yv * (R::one() - yv);
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Scale { x, c } => {
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                for (d, &gv) in dx.data_mut().iter_mut().zip(g.data()) {
                    *d += gv * *c;
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::AddScalar { x } => {
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                for (d, &gv) in dx.data_mut().iter_mut().zip(g.data()) {
                    *d += gv;
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Add { a, b } => {
            for id in [*a, *b] {
                if wants(nodes, id) {
                    let mut d = take_buf(nodes, grads, id);
                    for (dv, &gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *dv += gv;
                    }
                    put_buf(grads, id, d);
                }
            }
        }
        Op::Mul { a, b } => {
            if wants(nodes, *a) {
                let mut da = take_buf(nodes, grads, *a);
                for ((d, &gv), &x) in da.data_mut().iter_mut().zip(g.data()).zip(val(b).data()) {
                    *d += gv * x;
                }
                put_buf(grads, *a, da);
            }
            if wants(nodes, *b) {
                let mut db = take_buf(nodes, grads, *b);
                for ((d, &gv), &x) in db.data_mut().iter_mut().zip(g.data()).zip(val(a).data()) {
                    *d += gv * x;
                }
                put_buf(grads, *b, db);
            }
        }
        Op::Softmax { x } => {
            if wants(nodes, *x) {
                let y = &nodes[i].value;
                let k = *y.shape().last().unwrap();
                let mut dx = take_buf(nodes, grads, *x);
                for ((drow, yrow), grow) in dx
                    .data_mut()
                    .chunks_mut(k)
                    .zip(y.data().chunks(k))
                    .zip(g.data().chunks(k))
                {
                    let dot: f64 = yrow
                        .iter()
                        .zip(grow)
                        .map(|(&yv, &gv)| (yv * gv).as_f64())
                        .sum();
                    for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d += yv * (gv - R::from_f64(dot));
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::LogSoftmax { x } => {
            if wants(nodes, *x) {
                let y = &nodes[i].value;
                let k = *y.shape().last().unwrap();
                let mut dx = take_buf(nodes, grads, *x);
                for ((drow, yrow), grow) in dx
                    .data_mut()
                    .chunks_mut(k)
                    .zip(y.data().chunks(k))
                    .zip(g.data().chunks(k))
                {
                    let gsum: f64 = grow.iter().map(|v| v.as_f64()).sum();
                    for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d += gv - yv.exp() * R::from_f64(gsum);
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Affine { x, w, b } => {
            let xs = val(x).shape();
            let ws = val(w).shape();
            let (m, k, n) = (xs[0], xs[1], ws[1]);
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                // dx = g @ w^T
                let wv = val(w).data();
                let body = |(row, dxrow): (usize, &mut [R])| {
                    let grow = &g.data()[row * n..][..n];
                    for (ki, d) in dxrow.iter_mut().enumerate() {
                        let wrow = &wv[ki * n..][..n];
                        let mut acc = 0.0f64;
                        for (gv, wv) in grow.iter().zip(wrow) {
                            acc += (*gv * *wv).as_f64();
                        }
                        *d += R::from_f64(acc);
                    }
                };
                if m >= 32 {
                    dx.data_mut().par_chunks_mut(k).enumerate().for_each(body);
                } else {
                    dx.data_mut().chunks_mut(k).enumerate().for_each(body);
                }
                put_buf(grads, *x, dx);
            }
            if wants(nodes, *w) || wants(nodes, *b) {
                let mut dw = take_buf(nodes, grads, *w);
                let mut db = take_buf(nodes, grads, *b);
                let xv = val(x).data();
                for row in 0..m {
                    let xrow = &xv[row * k..][..k];
                    let grow = &g.data()[row * n..][..n];
                    for (ki, &x0) in xrow.iter().enumerate() {
                        if x0 == R::zero() {
                            continue;
                        }
                        let dwrow = &mut dw.data_mut()[ki * n..][..n];
                        for (d, gv) in dwrow.iter_mut().zip(grow) {
                            *d += x0 * *gv;
                        }
                    }
                    for (d, gv) in db.data_mut().iter_mut().zip(grow) {
                        *d += *gv;
                    }
                }
                put_buf(grads, *w, dw);
                put_buf(grads, *b, db);
            }
        }
        Op::Conv3x3 { x, w, b } => {
            let xs = val(x).shape();
            let ws = val(w).shape();
            let (n, c, h, wd, o) = (xs[0], xs[1], xs[2], xs[3], ws[0]);
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                kernels::conv3x3_backward_input(
                    val(w).data(),
                    g.data(),
                    n,
                    c,
                    h,
                    wd,
                    o,
                    dx.data_mut(),
                );
                put_buf(grads, *x, dx);
            }
            if wants(nodes, *w) || wants(nodes, *b) {
                let mut dw = take_buf(nodes, grads, *w);
                let mut db = take_buf(nodes, grads, *b);
                kernels::conv3x3_backward_params(
                    val(x).data(),
                    g.data(),
                    n,
                    c,
                    h,
                    wd,
                    o,
                    dw.data_mut(),
                    db.data_mut(),
                );
                put_buf(grads, *w, dw);
                put_buf(grads, *b, db);
            }
        }
        Op::Conv1x1 { x, w, b } => {
            let xs = val(x).shape();
            let ws = val(w).shape();
            let (n, c, h, wd, o) = (xs[0], xs[1], xs[2], xs[3], ws[0]);
            let plane = h * wd;
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                kernels::conv1x1_backward_input(
                    val(w).data(),
                    g.data(),
                    n,
                    c,
                    plane,
                    o,
                    dx.data_mut(),
                );
                put_buf(grads, *x, dx);
            }
            if wants(nodes, *w) || wants(nodes, *b) {
                let mut dw = take_buf(nodes, grads, *w);
                let mut db = take_buf(nodes, grads, *b);
                kernels::conv1x1_backward_params(
                    val(x).data(),
                    g.data(),
                    n,
                    c,
                    plane,
                    o,
                    dw.data_mut(),
                    db.data_mut(),
                );
                put_buf(grads, *w, dw);
                put_buf(grads, *b, db);
            }
        }
        Op::MaxPool2 { x, argmax } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let (h, w) = (xs[2], xs[3]);
                let (oh, ow) = (h / 2, w / 2);
                let planes = xs[0] * xs[1];
                let mut dx = take_buf(nodes, grads, *x);
                for p in 0..planes {
                    let dst = &mut dx.data_mut()[p * h * w..][..h * w];
                    let gsrc = &g.data()[p * oh * ow..][..oh * ow];
                    let asrc = &argmax[p * oh * ow..][..oh * ow];
                    for (gv, &ai) in gsrc.iter().zip(asrc) {
                        dst[ai as usize] += *gv;
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::AdaptiveAvgPool { x } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let os = nodes[i].value.shape();
                let (h, w, th, tw) = (xs[2], xs[3], os[2], os[3]);
                let planes = xs[0] * xs[1];
                let mut dx = take_buf(nodes, grads, *x);
                for p in 0..planes {
                    let dst = &mut dx.data_mut()[p * h * w..][..h * w];
                    let gsrc = &g.data()[p * th * tw..][..th * tw];
                    for oy in 0..th {
                        let (y0, y1) = bin(oy, h, th);
                        for ox in 0..tw {
                            let (x0, x1) = bin(ox, w, tw);
                            let share = gsrc[oy * tw + ox]
                                * R::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                            for y in y0..y1 {
                                for xx in x0..x1 {
                                    dst[y * w + xx] += share;
                                }
                            }
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::BilinearResize { x } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let os = nodes[i].value.shape();
                let (h, w, oh, ow) = (xs[2], xs[3], os[2], os[3]);
                let ytab = lerp_table(h, oh);
                let xtab = lerp_table(w, ow);
                let planes = xs[0] * xs[1];
                let mut dx = take_buf(nodes, grads, *x);
                for p in 0..planes {
                    let dst = &mut dx.data_mut()[p * h * w..][..h * w];
                    let gsrc = &g.data()[p * oh * ow..][..oh * ow];
                    for (oy, &(y0, y1, ty)) in ytab.iter().enumerate() {
                        for (ox, &(x0, x1, tx)) in xtab.iter().enumerate() {
                            let gv = gsrc[oy * ow + ox].as_f64();
                            dst[y0 * w + x0] += R::from_f64(gv * (1.0 - ty) * (1.0 - tx));
                            dst[y0 * w + x1] += R::from_f64(gv * (1.0 - ty) * tx);
                            dst[y1 * w + x0] += R::from_f64(gv * ty * (1.0 - tx));
                            dst[y1 * w + x1] += R::from_f64(gv * ty * tx);
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::CollapseHeight { x } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let inv = R::from_f64(1.0 / h as f64);
                let mut dx = take_buf(nodes, grads, *x);
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * h * w;
                        for t in 0..w {
                            let gv = g.data()[(ni * w + t) * c + ci] * inv;
                            for y in 0..h {
                                dx.data_mut()[base + y * w + t] += gv;
                            }
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::ChannelsLast { x } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let mut dx = take_buf(nodes, grads, *x);
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * h * w;
                        for p in 0..h * w {
                            dx.data_mut()[base + p] += g.data()[(ni * h * w + p) * c + ci];
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Concat { xs, axis } => {
            let shape = nodes[i].value.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[*axis + 1..].iter().product();
            let row = shape[*axis] * inner;
            let mut off = 0;
            for &id in xs {
                let s = nodes[id.0].value.shape()[*axis];
                if wants(nodes, id) {
                    let mut d = take_buf(nodes, grads, id);
                    for o in 0..outer {
                        let src = &g.data()[o * row + off * inner..][..s * inner];
                        let dst = &mut d.data_mut()[o * s * inner..][..s * inner];
                        for (dv, gv) in dst.iter_mut().zip(src) {
                            *dv += *gv;
                        }
                    }
                    put_buf(grads, id, d);
                }
                off += s;
            }
        }
        Op::Narrow { x, axis, start } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let len = nodes[i].value.shape()[*axis];
                let outer: usize = xs[..*axis].iter().product();
                let inner: usize = xs[*axis + 1..].iter().product();
                let axis_len = xs[*axis];
                let mut dx = take_buf(nodes, grads, *x);
                for o in 0..outer {
                    let src = &g.data()[o * len * inner..][..len * inner];
                    let dst = &mut dx.data_mut()[(o * axis_len + start) * inner..][..len * inner];
                    for (dv, gv) in dst.iter_mut().zip(src) {
                        *dv += *gv;
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Reshape { x } => {
            if wants(nodes, *x) {
                let mut dx = take_buf(nodes, grads, *x);
                for (dv, gv) in dx.data_mut().iter_mut().zip(g.data()) {
                    *dv += *gv;
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::GatherRows { table, ids } => {
            if wants(nodes, *table) {
                let d = nodes[table.0].value.shape()[1];
                let mut dt = take_buf(nodes, grads, *table);
                for (r, &id) in ids.iter().enumerate() {
                    let src = &g.data()[r * d..][..d];
                    let dst = &mut dt.data_mut()[id * d..][..d];
                    for (dv, gv) in dst.iter_mut().zip(src) {
                        *dv += *gv;
                    }
                }
                put_buf(grads, *table, dt);
            }
        }
        Op::RepeatFrames { x } => {
            if wants(nodes, *x) {
                let os = nodes[i].value.shape();
                let (n, t, a) = (os[0], os[1], os[2]);
                let mut dx = take_buf(nodes, grads, *x);
                for ni in 0..n {
                    let dst = &mut dx.data_mut()[ni * a..][..a];
                    for ti in 0..t {
                        let src = &g.data()[(ni * t + ti) * a..][..a];
                        for (dv, gv) in dst.iter_mut().zip(src) {
                            *dv += *gv;
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::FrameWeightedSum { frames, weights } => {
            let fs = val(frames).shape();
            let (n, t, d) = (fs[0], fs[1], fs[2]);
            if wants(nodes, *frames) {
                let wv = val(weights).data();
                let mut df = take_buf(nodes, grads, *frames);
                for ni in 0..n {
                    let grow = &g.data()[ni * d..][..d];
                    for ti in 0..t {
                        let w0 = wv[ni * t + ti];
                        let dst = &mut df.data_mut()[(ni * t + ti) * d..][..d];
                        for (dv, gv) in dst.iter_mut().zip(grow) {
                            *dv += w0 * *gv;
                        }
                    }
                }
                put_buf(grads, *frames, df);
            }
            if wants(nodes, *weights) {
                let fv = val(frames).data();
                let mut dw = take_buf(nodes, grads, *weights);
                for ni in 0..n {
                    let grow = &g.data()[ni * d..][..d];
                    for ti in 0..t {
                        let src = &fv[(ni * t + ti) * d..][..d];
                        let mut acc = 0.0f64;
                        for (fv0, gv) in src.iter().zip(grow) {
                            acc += (*fv0 * *gv).as_f64();
                        }
                        dw.data_mut()[ni * t + ti] += R::from_f64(acc);
                    }
                }
                put_buf(grads, *weights, dw);
            }
        }
        Op::SumAll { x } => {
            if wants(nodes, *x) {
                let gv = g.item();
                let mut dx = take_buf(nodes, grads, *x);
                for dv in dx.data_mut() {
                    *dv += gv;
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::MeanAll { x } => {
            if wants(nodes, *x) {
                let n = nodes[x.0].value.numel().max(1);
                let gv = g.item() * R::from_f64(1.0 / n as f64);
                let mut dx = take_buf(nodes, grads, *x);
                for dv in dx.data_mut() {
                    *dv += gv;
                }
                put_buf(grads, *x, dx);
            }
        }
        Op::Nll { logp, targets } => {
            if wants(nodes, *logp) {
                let k = nodes[logp.0].value.shape()[1];
                let valid = targets.iter().flatten().count().max(1);
                let gv = g.item() * R::from_f64(1.0 / valid as f64);
                let mut dx = take_buf(nodes, grads, *logp);
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = t {
                        dx.data_mut()[r * k + t] -= gv;
                    }
                }
                put_buf(grads, *logp, dx);
            }
        }
        Op::CtcLoss { logp, dlogp } => {
            if wants(nodes, *logp) {
                let gv = g.item();
                let mut dx = take_buf(nodes, grads, *logp);
                for (dv, sv) in dx.data_mut().iter_mut().zip(dlogp.data()) {
                    *dv += gv * *sv;
                }
                put_buf(grads, *logp, dx);
            }
        }
        Op::KlToConst { logp, target, mask } => {
            if wants(nodes, *logp) {
                let k = nodes[logp.0].value.shape()[1];
                let gv = g.item();
                let floor = R::from_f64(1e-12f64.ln());
                let mut dx = take_buf(nodes, grads, *logp);
                for (r, &keep) in mask.iter().enumerate() {
                    if !keep {
                        continue;
                    }
                    for c in 0..k {
                        let q = target.data()[r * k + c];
                        if q > R::zero() && val(logp).data()[r * k + c] > floor {
                            dx.data_mut()[r * k + c] -= gv * q;
                        }
                    }
                }
                put_buf(grads, *logp, dx);
            }
        }
        Op::RegionMean { x, regions } => {
            if wants(nodes, *x) {
                let xs = val(x).shape();
                let (k, h, w) = (xs[1], xs[2], xs[3]);
                let lmax = nodes[i].value.shape()[1];
                let mut dx = take_buf(nodes, grads, *x);
                for (ni, regs) in regions.iter().enumerate() {
                    for (li, pix) in regs.iter().enumerate() {
                        if pix.is_empty() {
                            continue;
                        }
                        let inv = R::from_f64(1.0 / pix.len() as f64);
                        for ki in 0..k {
                            let gv = g.data()[(ni * lmax + li) * k + ki] * inv;
                            let base = (ni * k + ki) * h * w;
                            for &(y, xx) in pix {
                                dx.data_mut()[base + y * w + xx] += gv;
                            }
                        }
                    }
                }
                put_buf(grads, *x, dx);
            }
        }
    }
}

/// Adaptive pooling bin `[start, end)` for output cell `i` of `t` over `n`.
#[inline]
fn bin(i: usize, n: usize, t: usize) -> (usize, usize) {
    let start = i * n / t;
    let end = ((i + 1) * n).div_ceil(t);
    (start, end.max(start + 1).min(n))
}

/// Per-axis bilinear interpolation table: (lo index, hi index, frac).
fn lerp_table(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let s = (o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5;
            let y0 = s.floor();
            let t = s - y0;
            let lo = (y0.max(0.0) as usize).min(n_in - 1);
            let hi = ((y0 + 1.0).max(0.0) as usize).min(n_in - 1);
            (lo, hi, t)
        })
        .collect()
}

pub(crate) fn softmax_row<R: Element>(row_in: &[R], row_out: &mut [R]) {
    let m = row_in
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0f64;
    for (o, v) in row_out.iter_mut().zip(row_in) {
        let e = (v.as_f64() - m).exp();
        z += e;
        *o = R::from_f64(e);
    }
    let inv = R::from_f64(1.0 / z);
    for o in row_out.iter_mut() {
        *o = *o * inv;
    }
}

pub(crate) fn log_softmax_row<R: Element>(row_in: &[R], row_out: &mut [R]) {
    let m = row_in
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row_in.iter().map(|v| (v.as_f64() - m).exp()).sum();
    let lz = z.ln() + m;
    for (o, v) in row_out.iter_mut().zip(row_in) {
        *o = R::from_f64(v.as_f64() - lz);
    }
}
