//! Dataset synthesis: corpus sampling plus rendering, with deterministic
//! skipping of samples the rasterizer rejects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetMeta, ManifestRecord};
use super::HarnessError;
use crate::corpus::{
    sample_ls_corpus, CorpusMixSpec, LengthHistogram, LsCorpus, RsCorpus, SampleSource,
    Vocabulary, WordSample,
};
use crate::render::{rasterize, write_pgm, StyleParams};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Ls,
    Rs,
    Ms,
}

impl std::str::FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ls" => Ok(SynthKind::Ls),
            "rs" => Ok(SynthKind::Rs),
            "ms" => Ok(SynthKind::Ms),
            other => Err(format!("unknown corpus kind {other:?} (want ls|rs|ms)")),
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthKind::Ls => "ls",
            SynthKind::Rs => "rs",
            SynthKind::Ms => "ms",
        })
    }
}

/// Number of LS samples used to estimate the pseudoword length
/// distribution.
const HIST_SAMPLES: u64 = 3000;

fn sample_stream(
    kind: SynthKind,
    ratio: f64,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Box<dyn SampleSource>, HarnessError> {
    let ls = LsCorpus::new(vocab.clone(), derive_seed(seed, "ls", 0))?;
    match kind {
        SynthKind::Ls => Ok(Box::new(ls)),
        SynthKind::Rs | SynthKind::Ms => {
            let hist_src = sample_ls_corpus(vocab, HIST_SAMPLES, derive_seed(seed, "hist", 0))?;
            let hist = LengthHistogram::from_samples(&hist_src);
            let rs = RsCorpus::new(hist, derive_seed(seed, "rs", 0))?;
            if kind == SynthKind::Rs {
                Ok(Box::new(rs))
            } else {
                let spec = CorpusMixSpec::new(ratio, u64::MAX, derive_seed(seed, "mix", 0))?;
                Ok(Box::new(MixSource { rs, ls, spec }))
            }
        }
    }
}

struct MixSource {
    rs: RsCorpus,
    ls: LsCorpus,
    spec: CorpusMixSpec,
}

impl SampleSource for MixSource {
    fn sample_at(&self, index: u64) -> WordSample {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(self.spec.seed, "mix", index);
        if rng.gen::<f64>() < self.spec.ratio_r {
            self.rs.sample_at(index)
        } else {
            self.ls.sample_at(index)
        }
    }
}

/// Render `count` samples of the requested corpus into `out_dir`:
/// `imgs/NNNNNN.pgm` files, `manifest.jsonl`, `dataset.json`, and the
/// vocabulary export `vocab.txt`. Samples the rasterizer rejects (words
/// too wide for the canvas) are skipped deterministically.
pub fn run_synth(
    kind: SynthKind,
    ratio: f64,
    count: u64,
    seed: u64,
    out_dir: &Path,
    vocab: &Vocabulary,
    style: &StyleParams,
) -> Result<Vec<ManifestRecord>, HarnessError> {
    if kind == SynthKind::Ms && !(0.0..=1.0).contains(&ratio) {
        return Err(HarnessError::BadArgument(format!(
            "ratio {ratio} outside [0,1]"
        )));
    }
    std::fs::create_dir_all(out_dir.join("imgs"))?;
    let stream = sample_stream(kind, ratio, vocab, seed)?;
    let mut records = Vec::with_capacity(count as usize);
    let mut cursor = 0u64;
    while (records.len() as u64) < count {
        let sample = stream.sample_at(cursor);
        let render_seed = derive_seed(seed, "render", cursor);
        cursor += 1;
        let img = match rasterize(&sample, style, render_seed) {
            Ok(img) => img,
            Err(crate::render::RenderError::DoesNotFit { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let id = records.len() as u64;
        let file = format!("imgs/{id:06}.pgm");
        write_pgm(&img, &out_dir.join(&file))?;
        records.push(ManifestRecord {
            id,
            file,
            label: img.label.clone(),
            normalized: sample.normalized.clone(),
            corpus: sample.corpus_kind,
            case: sample.case_kind,
            boxes: img
                .char_boxes
                .iter()
                .map(|b| [b.x0, b.y0, b.x1, b.y1])
                .collect(),
        });
    }
    super::manifest::write_manifest(&out_dir.join("manifest.jsonl"), &records)?;
    let meta = DatasetMeta {
        kind: kind.to_string(),
        ratio: if kind == SynthKind::Ms { ratio } else { 0.0 },
        count,
        seed,
        vocab_source: vocab.source_tag.clone(),
    };
    serde_json::to_writer_pretty(std::fs::File::create(out_dir.join("dataset.json"))?, &meta)?;
    let mut vf = std::fs::File::create(out_dir.join("vocab.txt"))?;
    vocab.export(&mut vf)?;
    Ok(records)
}
