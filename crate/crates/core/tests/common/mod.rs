//! Shared helpers for training-backed tests: small in-memory datasets.

use vocablab_core::corpus::{sample_ls_corpus, Vocabulary};
use vocablab_core::harness::{Dataset, DatasetMeta};
use vocablab_core::render::{rasterize, StyleParams};
use vocablab_core::rng::derive_seed;

/// Render `n` LS samples of `words` into an in-memory dataset.
#[allow(dead_code)]
pub fn tiny_dataset(words: &[&str], n: u64, seed: u64) -> Dataset {
    let vocab = Vocabulary::from_words(words, "test").unwrap();
    let style = StyleParams::default();
    let mut items = Vec::new();
    let mut ids = Vec::new();
    let mut normalized = Vec::new();
    let mut cursor = 0u64;
    while (items.len() as u64) < n {
        let s = sample_ls_corpus(&vocab, cursor + 1, seed).unwrap().pop().unwrap();
        let render_seed = derive_seed(seed, "render", cursor);
        cursor += 1;
        if let Ok(img) = rasterize(&s, &style, render_seed) {
            ids.push(items.len() as u64);
            normalized.push(s.normalized.clone());
            items.push(img);
        }
    }
    Dataset {
        dir: std::path::PathBuf::new(),
        meta: DatasetMeta {
            kind: "ls".into(),
            ratio: 0.0,
            count: n,
            seed,
            vocab_source: "test".into(),
        },
        items,
        ids,
        normalized,
    }
}

/// Exact-match accuracy of free-running recognition over a dataset.
#[allow(dead_code)]
pub fn train_set_accuracy(
    model: &vocablab_core::models::Model<f32>,
    data: &Dataset,
) -> f64 {
    let preds: Vec<String> = data
        .items
        .iter()
        .map(|img| model.infer(&img.pixels).unwrap_or_default())
        .collect();
    let gts: Vec<String> = data.items.iter().map(|i| i.label.clone()).collect();
    vocablab_core::metrics::accuracy(&preds, &gts).unwrap()
}

#[allow(dead_code)]
pub const TINY_WORDS: &[&str] = &[
    "cat", "dog", "sun", "map", "rock", "tide", "lamp", "fish", "bird", "note",
    "grape", "stone", "plain", "ridge", "cloud", "berry",
];
pub mod fd;
