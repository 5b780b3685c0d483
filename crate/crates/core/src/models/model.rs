//! One recognizer instance: trunk + context module + prediction head over
//! a shared parameter store.

use super::attn::{AttnForward, AttnHead};
use super::cntx::CntxModule;
use super::ctc::{ctc_greedy_decode, CtcHead};
use super::seg::{seg_decode, SegHead};
use super::trunk::Trunk;
use super::{ClassSet, ModelConfig, ModelError, PredKind};
use crate::autodiff::{Element, Graph, Lease, NodeId, ParamStore, Tensor};
use crate::render::{
    encode_label, make_seg_target, SegTarget, TextImage, DEFAULT_SHRINK, IMAGE_H, IMAGE_W,
};
use crate::rng::stream_rng;

enum Head {
    Ctc(CtcHead),
    Attn(AttnHead),
    Seg(SegHead),
}

pub struct Model<R: Element> {
    pub config: ModelConfig,
    pub classes: ClassSet,
    pub store: ParamStore<R>,
    trunk: Trunk,
    cntx: CntxModule,
    head: Head,
}

/// Images and labels prepared for one training step.
pub struct Batch<R: Element> {
    pub images: Tensor<R>,
    pub labels: Vec<String>,
    pub boxes: Vec<Vec<crate::render::CharBox>>,
}

impl<R: Element> Batch<R> {
    pub fn from_images(imgs: &[&TextImage]) -> Result<Self, ModelError> {
        if imgs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = imgs.len();
        let mut data = Vec::with_capacity(n * IMAGE_H * IMAGE_W);
        for img in imgs {
            if img.pixels.len() != IMAGE_H * IMAGE_W {
                return Err(ModelError::BadInputSize(vec![img.pixels.len()]));
            }
            data.extend(img.pixels.iter().map(|&p| R::from_f64(f64::from(p))));
        }
        Ok(Batch {
            images: Tensor::from_vec(&[n, 1, IMAGE_H, IMAGE_W], data)?,
            labels: imgs.iter().map(|i| i.label.clone()).collect(),
            boxes: imgs.iter().map(|i| i.char_boxes.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Segmentation supervision for every sample of the batch.
    pub fn seg_targets(&self, classes: &ClassSet) -> Result<Vec<SegTarget>, ModelError> {
        self.labels
            .iter()
            .zip(&self.boxes)
            .map(|(label, boxes)| {
                let img = TextImage {
                    pixels: vec![0.0; IMAGE_H * IMAGE_W],
                    label: label.clone(),
                    char_boxes: boxes.clone(),
                    corpus_kind: crate::corpus::CorpusKind::Ls,
                };
                Ok(make_seg_target(&img, classes, DEFAULT_SHRINK)?)
            })
            .collect()
    }
}

/// Head-specific handles into a training-forward graph.
pub enum HeadForward {
    Ctc {
        /// (n,t,k) per-frame log-probabilities.
        logp: NodeId,
        loss: NodeId,
    },
    Attn {
        fwd: AttnForward,
        loss: NodeId,
    },
    Seg {
        /// (n,k,h,w) pixel logits.
        pixel_logits: NodeId,
        targets: Vec<SegTarget>,
        loss: NodeId,
    },
}

impl HeadForward {
    pub fn loss(&self) -> NodeId {
        match self {
            HeadForward::Ctc { loss, .. }
            | HeadForward::Attn { loss, .. }
            | HeadForward::Seg { loss, .. } => *loss,
        }
    }
}

impl<R: Element> Model<R> {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let classes = ClassSet::standard();
        let mut store = ParamStore::new();
        let mut rng = stream_rng(config.seed, &config.init_stream(), 0);
        let d = &config.dims;
        let trunk = Trunk::new(&mut store, d.trunk_channels, &mut rng);
        let cntx = CntxModule::new(
            &mut store,
            config.cntx,
            trunk.out_channels(),
            d.blstm_hidden,
            &d.ppm_pool_sizes,
            &mut rng,
        );
        let head = match config.pred {
            PredKind::Ctc => {
                let fd = cntx.frame_dim(trunk.out_channels(), d.blstm_hidden);
                Head::Ctc(CtcHead::new(&mut store, fd, classes.num_classes(), &mut rng))
            }
            PredKind::Attn => {
                let fd = cntx.frame_dim(trunk.out_channels(), d.blstm_hidden);
                Head::Attn(AttnHead::new(
                    &mut store,
                    fd,
                    d.attn_hidden,
                    d.attn_embed,
                    d.attn_dim,
                    classes.num_classes(),
                    d.max_decode_steps,
                    &mut rng,
                ))
            }
            PredKind::Seg => {
                let md = cntx.map_dim(trunk.out_channels())?;
                Head::Seg(SegHead::new(&mut store, md, classes.num_classes(), &mut rng))
            }
        };
        Ok(Model {
            config,
            classes,
            store,
            trunk,
            cntx,
            head,
        })
    }

    /// Teacher-forced forward with the task loss; returns handles for the
    /// loss and head outputs so callers can attach auxiliary terms.
    pub fn training_forward(
        &self,
        g: &mut Graph<R>,
        lease: &Lease,
        batch: &Batch<R>,
    ) -> Result<HeadForward, ModelError> {
        let images = g.constant(batch.images.clone());
        let fm = self.trunk.forward(g, lease, images)?;
        match &self.head {
            Head::Ctc(head) => {
                let frames = self.cntx.forward_frames(g, lease, fm)?;
                let logp = head.forward(g, lease, frames)?;
                let labels: Vec<Vec<usize>> = batch
                    .labels
                    .iter()
                    .map(|l| encode_label(l, &self.classes, PredKind::Ctc))
                    .collect::<Result<_, _>>()?;
                let loss = head.loss(g, logp, &labels, self.classes.blank_index())?;
                Ok(HeadForward::Ctc { logp, loss })
            }
            Head::Attn(head) => {
                let frames = self.cntx.forward_frames(g, lease, fm)?;
                let labels: Vec<Vec<usize>> = batch
                    .labels
                    .iter()
                    .map(|l| encode_label(l, &self.classes, PredKind::Ctc)) // chars only
                    .collect::<Result<_, _>>()?;
                let fwd =
                    head.forward_teacher(g, lease, frames, &labels, self.classes.eos_index())?;
                let loss = head.loss(g, &fwd, &labels, self.classes.eos_index())?;
                Ok(HeadForward::Attn { fwd, loss })
            }
            Head::Seg(head) => {
                let fm2 = self.cntx.forward_2d(g, lease, fm)?;
                let pixel_logits = head.forward(g, lease, fm2)?;
                let targets = batch.seg_targets(&self.classes)?;
                let maps: Vec<Vec<usize>> = targets.iter().map(|t| t.map.clone()).collect();
                let loss = head.loss(g, pixel_logits, &maps)?;
                Ok(HeadForward::Seg {
                    pixel_logits,
                    targets,
                    loss,
                })
            }
        }
    }

    /// Free-running recognition of a single image.
    pub fn infer(&self, pixels: &[f32]) -> Result<String, ModelError> {
        if pixels.len() != IMAGE_H * IMAGE_W {
            return Err(ModelError::BadInputSize(vec![pixels.len()]));
        }
        let mut g = Graph::new();
        let lease = self.store.lease(&mut g);
        let data: Vec<R> = pixels.iter().map(|&p| R::from_f64(f64::from(p))).collect();
        let images = g.constant(Tensor::from_vec(&[1, 1, IMAGE_H, IMAGE_W], data)?);
        let fm = self.trunk.forward(&mut g, &lease, images)?;
        match &self.head {
            Head::Ctc(head) => {
                let frames = self.cntx.forward_frames(&mut g, &lease, fm)?;
                let logp = head.forward(&mut g, &lease, frames)?;
                Ok(ctc_greedy_decode(g.value(logp), &self.classes))
            }
            Head::Attn(head) => {
                let frames = self.cntx.forward_frames(&mut g, &lease, fm)?;
                head.free_run(&mut g, &lease, frames, &self.classes)
            }
            Head::Seg(head) => {
                let fm2 = self.cntx.forward_2d(&mut g, &lease, fm)?;
                let logits = head.forward(&mut g, &lease, fm2)?;
                let shape = g.value(logits).shape().to_vec();
                let one = g.value(logits).reshaped(&shape[1..])?;
                Ok(seg_decode(&one, &self.classes).0)
            }
        }
    }

    pub fn frame_dim(&self) -> usize {
        self.cntx
            .frame_dim(self.trunk.out_channels(), self.config.dims.blstm_hidden)
    }

    pub fn kind_label(&self) -> String {
        format!("{}-{}", self.config.pred, self.config.cntx)
    }
}
