//! Segmentation prediction head: per-pixel character classification at
//! feature resolution, decoded through connected components, plus the
//! region voting used by mutual learning.

use rand_chacha::ChaCha8Rng;

use super::init::glorot;
use super::{ClassSet, ModelError};
use crate::autodiff::{argmax, Element, Graph, Lease, NodeId, ParamId, ParamStore, Tensor};

pub struct SegHead {
    w: ParamId,
    b: ParamId,
}

impl SegHead {
    pub fn new<R: Element>(
        store: &mut ParamStore<R>,
        in_channels: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(
            "head.seg.w",
            glorot(rng, in_channels, classes, &[classes, in_channels]),
        );
        let b = store.add("head.seg.b", Tensor::zeros(&[classes]));
        SegHead { w, b }
    }

    /// (n,c,h,w) feature map -> (n,k,h,w) pixel logits via 1x1 convolution.
    pub fn forward<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        fm: NodeId,
    ) -> Result<NodeId, ModelError> {
        let shape = g.value(fm).shape().to_vec();
        if shape.len() != 4 {
            return Err(ModelError::BadConfig(format!(
                "segmentation head needs a 2D feature map, got shape {shape:?}"
            )));
        }
        Ok(g.conv1x1(fm, lease.node(self.w), lease.node(self.b))?)
    }

    /// Mean per-pixel cross-entropy against a class map per sample.
    pub fn loss<R: Element>(
        &self,
        g: &mut Graph<R>,
        pixel_logits: NodeId,
        targets: &[Vec<usize>],
    ) -> Result<NodeId, ModelError> {
        let rows = g.channels_last(pixel_logits)?;
        let logp = g.log_softmax(rows)?;
        let flat: Vec<Option<usize>> = targets
            .iter()
            .flat_map(|m| m.iter().map(|&c| Some(c)))
            .collect();
        debug_assert_eq!(flat.len(), g.value(logp).shape()[0]);
        Ok(g.nll(logp, flat)?)
    }

}

/// A decoded character region.
#[derive(Clone, Debug)]
pub struct SegRegion {
    pub class: usize,
    pub pixels: Vec<(usize, usize)>,
    pub min_x: usize,
    pub min_y: usize,
}

/// Decode pixel logits `(k,h,w)`: per-pixel argmax, 4-connected components
/// of non-background, drop components under 2 pixels, order by min-x (ties
/// min-y, then larger area), class by mean-logit vote over the region.
pub fn seg_decode<R: Element>(
    logits: &Tensor<R>,
    classes: &ClassSet,
) -> (String, Vec<SegRegion>) {
    let shape = logits.shape();
    let (k, h, w) = (shape[0], shape[1], shape[2]);
    debug_assert_eq!(k, classes.num_classes());
    let bg = classes.background_index();
    let data = logits.data();
    let class_at = |y: usize, x: usize| -> usize {
        let mut best = 0;
        for ki in 1..k {
            if data[(ki * h + y) * w + x] > data[(best * h + y) * w + x] {
                best = ki;
            }
        }
        best
    };
    let mut fg = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            fg[y * w + x] = class_at(y, x) != bg;
        }
    }
    // flood fill 4-connected components of the foreground mask
    let mut seen = vec![false; h * w];
    let mut regions: Vec<SegRegion> = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !fg[y0 * w + x0] || seen[y0 * w + x0] {
                continue;
            }
            let mut stack = vec![(y0, x0)];
            seen[y0 * w + x0] = true;
            let mut pixels = Vec::new();
            while let Some((y, x)) = stack.pop() {
                pixels.push((y, x));
                let mut push = |yy: usize, xx: usize| {
                    if fg[yy * w + xx] && !seen[yy * w + xx] {
                        seen[yy * w + xx] = true;
                        stack.push((yy, xx));
                    }
                };
                if y > 0 {
                    push(y - 1, x);
                }
                if y + 1 < h {
                    push(y + 1, x);
                }
                if x > 0 {
                    push(y, x - 1);
                }
                if x + 1 < w {
                    push(y, x + 1);
                }
            }
            if pixels.len() < 2 {
                continue;
            }
            // vote: argmax of mean logits over the region
            let mut sums = vec![0.0f64; k];
            for &(y, x) in &pixels {
                for (ki, s) in sums.iter_mut().enumerate() {
                    *s += data[(ki * h + y) * w + x].as_f64();
                }
            }
            sums[bg] = f64::NEG_INFINITY; // regions are foreground by construction
            let class = argmax(&sums);
            let min_x = pixels.iter().map(|&(_, x)| x).min().unwrap();
            let min_y = pixels.iter().map(|&(y, _)| y).min().unwrap();
            regions.push(SegRegion {
                class,
                pixels,
                min_x,
                min_y,
            });
        }
    }
    sort_regions(&mut regions);
    let text = regions
        .iter()
        .filter_map(|r| classes.char_at(r.class))
        .collect();
    (text, regions)
}

/// Total reading order: min-x, then min-y, then larger area first, then
/// pixel list as the final disambiguator.
pub fn sort_regions(regions: &mut [SegRegion]) {
    regions.sort_by(|a, b| {
        a.min_x
            .cmp(&b.min_x)
            .then(a.min_y.cmp(&b.min_y))
            .then(b.pixels.len().cmp(&a.pixels.len()))
            .then(a.pixels.cmp(&b.pixels))
    });
}

/// Mean of the pixel logit vectors inside each ground-truth region; `None`
/// marks positions whose region is empty.
pub fn seg_vote<R: Element>(
    logits: &Tensor<R>,
    regions: &[Vec<(usize, usize)>],
) -> Vec<Option<Vec<f64>>> {
    let shape = logits.shape();
    let (k, h, w) = (shape[0], shape[1], shape[2]);
    let data = logits.data();
    regions
        .iter()
        .map(|pix| {
            if pix.is_empty() {
                return None;
            }
            let mut mean = vec![0.0f64; k];
            for &(y, x) in pix {
                for (ki, m) in mean.iter_mut().enumerate() {
                    *m += data[(ki * h + y) * w + x].as_f64();
                }
            }
            for m in mean.iter_mut() {
                *m /= pix.len() as f64;
            }
            Some(mean)
        })
        .collect()
}
