//! A desk-scale laboratory for studying vocabulary reliance in text
//! recognizers: controlled-vocabulary corpus synthesis, a deterministic
//! rasterizer, a small reverse-mode autodiff core, a grid of recognizer
//! module combinations (CTC / attention / segmentation heads crossed with
//! context modules), a metric suite, and a KL-coupled mutual-learning
//! training strategy.
//!
//! The [`harness`] module ties everything together behind the `vocablab`
//! CLI: `synth`, `train`, `eval`, `report`, `sweep`, and `mutual`.

pub mod autodiff;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod mutual;
pub mod parallel;
pub mod render;
pub mod rng;

pub use autodiff::{Graph, Tensor};
