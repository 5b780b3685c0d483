//! Model grid configuration: one prediction head crossed with one context
//! module over the fixed convolutional trunk.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredKind {
    Ctc,
    Attn,
    Seg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CntxKind {
    None,
    Blstm,
    Ppm,
}

impl std::fmt::Display for PredKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredKind::Ctc => "ctc",
            PredKind::Attn => "attn",
            PredKind::Seg => "seg",
        })
    }
}

impl std::fmt::Display for CntxKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CntxKind::None => "none",
            CntxKind::Blstm => "blstm",
            CntxKind::Ppm => "ppm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub trunk_channels: [usize; 4],
    pub blstm_hidden: usize,
    pub attn_hidden: usize,
    pub attn_embed: usize,
    pub attn_dim: usize,
    pub ppm_pool_sizes: Vec<usize>,
    pub max_decode_steps: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            trunk_channels: [16, 32, 48, 64],
            blstm_hidden: 64,
            attn_hidden: 128,
            attn_embed: 32,
            attn_dim: 64,
            ppm_pool_sizes: vec![1, 3, 4, 6],
            max_decode_steps: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pred: PredKind,
    pub cntx: CntxKind,
    #[serde(default)]
    pub dims: ModelDims,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(pred: PredKind, cntx: CntxKind, seed: u64) -> Self {
        ModelConfig {
            pred,
            cntx,
            dims: ModelDims::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.pred == PredKind::Seg && self.cntx == CntxKind::Blstm {
            return Err(ModelError::SegWithBlstm);
        }
        if self.dims.ppm_pool_sizes.is_empty() || self.dims.ppm_pool_sizes.iter().any(|&s| s == 0)
        {
            return Err(ModelError::BadConfig("ppm_pool_sizes must be nonempty and positive".into()));
        }
        if self.dims.max_decode_steps == 0 {
            return Err(ModelError::BadConfig("max_decode_steps must be positive".into()));
        }
        Ok(())
    }

    /// Stream tag making the parameter-init RNG depend only on
    /// `(seed, pred, cntx)` so a model trained alone and the same model
    /// inside a mutual pair start from identical weights.
    pub fn init_stream(&self) -> String {
        format!("model-init-{}-{}", self.pred, self.cntx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seg_with_blstm_is_rejected() {
        let cfg = ModelConfig::new(PredKind::Seg, CntxKind::Blstm, 0);
        assert!(matches!(cfg.validate(), Err(ModelError::SegWithBlstm)));
        let ok = ModelConfig::new(PredKind::Seg, CntxKind::Ppm, 0);
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn config_json_shape() {
        let cfg = ModelConfig::new(PredKind::Attn, CntxKind::None, 7);
        let json = serde_json::to_value(&cfg).unwrap();
        assert_eq!(json["pred"], "attn");
        assert_eq!(json["cntx"], "none");
        assert_eq!(json["seed"], 7);
        assert_eq!(json["dims"]["ppm_pool_sizes"], serde_json::json!([1, 3, 4, 6]));
        let back: ModelConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, cfg);
    }
}
