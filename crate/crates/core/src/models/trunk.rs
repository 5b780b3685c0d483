//! Shared convolutional feature extractor, fixed across every module
//! combination: four 3x3 conv+relu blocks with two 2x2 max-pool
//! downsamples, 32x128 input to a 64-channel 8x32 map.

use rand_chacha::ChaCha8Rng;

use super::init::glorot;
use super::ModelError;
use crate::autodiff::{Element, Graph, Lease, NodeId, ParamId, ParamStore, Tensor};
use crate::render::{IMAGE_H, IMAGE_W};

pub struct Trunk {
    blocks: Vec<(ParamId, ParamId)>,
    channels: [usize; 4],
}

impl Trunk {
    pub fn new<R: Element>(
        store: &mut ParamStore<R>,
        channels: [usize; 4],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut blocks = Vec::new();
        let mut c_in = 1usize;
        for (i, &c_out) in channels.iter().enumerate() {
            let w = store.add(
                format!("trunk.conv{}.w", i + 1),
                glorot(rng, c_in * 9, c_out * 9, &[c_out, c_in, 3, 3]),
            );
            let b = store.add(format!("trunk.conv{}.b", i + 1), Tensor::zeros(&[c_out]));
            blocks.push((w, b));
            c_in = c_out;
        }
        Trunk { blocks, channels }
    }

    pub fn out_channels(&self) -> usize {
        self.channels[3]
    }

    /// (n,1,32,128) in [0,1] -> (n,64,8,32).
    pub fn forward<R: Element>(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        images: NodeId,
    ) -> Result<NodeId, ModelError> {
        let s = g.value(images).shape();
        if s.len() != 4 || s[1] != 1 || s[2] != IMAGE_H || s[3] != IMAGE_W {
            return Err(ModelError::BadInputSize(s.to_vec()));
        }
        let mut x = g.add_scalar(images, -0.5);
        for (i, (w, b)) in self.blocks.iter().enumerate() {
            x = g.conv3x3(x, lease.node(*w), lease.node(*b))?;
            x = g.relu(x);
            if i < 2 {
                x = g.max_pool2(x)?;
            }
        }
        Ok(x)
    }
}
