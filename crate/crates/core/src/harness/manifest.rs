//! Dataset directory layout: `dataset.json` (synthesis parameters),
//! `vocab.txt` (the generating vocabulary, normalized), `manifest.jsonl`
//! (one record per sample), and `imgs/*.pgm`.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::{CaseKind, CorpusKind};
use crate::render::{read_pgm, CharBox, TextImage};

/// One manifest line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: u64,
    pub file: String,
    pub label: String,
    pub normalized: String,
    pub corpus: CorpusKind,
    pub case: CaseKind,
    pub boxes: Vec<[usize; 4]>,
}

/// Synthesis parameters recorded next to the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: String,
    pub ratio: f64,
    pub count: u64,
    pub seed: u64,
    pub vocab_source: String,
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, HarnessError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// A dataset loaded into memory for training or evaluation.
pub struct Dataset {
    pub dir: PathBuf,
    pub meta: DatasetMeta,
    pub items: Vec<TextImage>,
    pub ids: Vec<u64>,
    pub normalized: Vec<String>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let meta: DatasetMeta =
            serde_json::from_reader(std::fs::File::open(dir.join("dataset.json"))?)?;
        let records = read_manifest(&dir.join("manifest.jsonl"))?;
        let mut items = Vec::with_capacity(records.len());
        let mut ids = Vec::with_capacity(records.len());
        let mut normalized = Vec::with_capacity(records.len());
        for r in records {
            let pixels = read_pgm(&dir.join(&r.file))?;
            items.push(TextImage {
                pixels,
                label: r.label,
                char_boxes: r
                    .boxes
                    .iter()
                    .map(|b| CharBox {
                        x0: b[0],
                        y0: b[1],
                        x1: b[2],
                        y1: b[3],
                    })
                    .collect(),
                corpus_kind: r.corpus,
            });
            ids.push(r.id);
            normalized.push(r.normalized);
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            meta,
            items,
            ids,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
