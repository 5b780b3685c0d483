//! Parameter checkpoint container.
//!
//! Layout: a little-endian `u32` header length, a JSON header listing
//! `{name, shape, dtype, byte_offset}` per parameter (offsets relative to
//! the payload that follows), then the raw little-endian float arrays.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::scalar::Element;
use super::tensor::Tensor;
use super::AdError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_offset: u64,
}

pub fn save<R: Element>(store: &ParamStore<R>, path: &Path) -> Result<(), AdError> {
    let mut metas = Vec::new();
    let mut payload = Vec::new();
    for (name, value) in store.entries() {
        metas.push(ParamMeta {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            dtype: R::DTYPE.to_string(),
            byte_offset: payload.len() as u64,
        });
        for &v in value.data() {
            v.write_le(&mut payload);
        }
    }
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION,
        params: metas,
    })
    .map_err(|e| AdError::Checkpoint(e.to_string()))?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&(header.len() as u32).to_le_bytes())?;
    f.write_all(&header)?;
    f.write_all(&payload)?;
    Ok(())
}

/// Parameters of a loaded checkpoint, in header order.
pub struct LoadedParam<R: Element> {
    pub name: String,
    pub value: Tensor<R>,
}

/// Read a checkpoint, converting the stored dtype to `R` if they differ.
pub fn load<R: Element>(path: &Path) -> Result<Vec<LoadedParam<R>>, AdError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(AdError::Checkpoint("truncated file".into()));
    }
    let hlen = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if bytes.len() < 4 + hlen {
        return Err(AdError::Checkpoint("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[4..4 + hlen])
        .map_err(|e| AdError::Checkpoint(format!("bad header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(AdError::Checkpoint(format!(
            "unsupported version {}",
            header.version
        )));
    }
    let payload = &bytes[4 + hlen..];
    let mut out = Vec::with_capacity(header.params.len());
    for meta in header.params {
        let numel: usize = meta.shape.iter().product();
        let width = match meta.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => {
                return Err(AdError::Checkpoint(format!("unknown dtype {other}")));
            }
        };
        let start = meta.byte_offset as usize;
        let end = start + numel * width;
        if end > payload.len() {
            return Err(AdError::Checkpoint(format!(
                "parameter {} extends past payload",
                meta.name
            )));
        }
        let mut data = Vec::with_capacity(numel);
        for chunk in payload[start..end].chunks(width) {
            let v = match width {
                4 => f64::from(f32::read_le(chunk)),
                _ => f64::read_le(chunk),
            };
            data.push(R::from_f64(v));
        }
        out.push(LoadedParam {
            name: meta.name,
            value: Tensor::from_vec(&meta.shape, data)?,
        });
    }
    Ok(out)
}

/// Restore checkpoint values into a store built with the same architecture.
/// Every parameter must match by name and shape.
pub fn load_into<R: Element>(store: &mut ParamStore<R>, path: &Path) -> Result<(), AdError> {
    let loaded = load::<R>(path)?;
    if loaded.len() != store.len() {
        return Err(AdError::Checkpoint(format!(
            "parameter count mismatch: checkpoint {}, model {}",
            loaded.len(),
            store.len()
        )));
    }
    for p in loaded {
        let id = store
            .find(&p.name)
            .ok_or_else(|| AdError::Checkpoint(format!("unknown parameter {}", p.name)))?;
        if store.value(id).shape() != p.value.shape() {
            return Err(AdError::Checkpoint(format!(
                "shape mismatch for {}: {:?} vs {:?}",
                p.name,
                p.value.shape(),
                store.value(id).shape()
            )));
        }
        store.set_value(id, p.value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_values_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let mut store = ParamStore::<f32>::new();
        store.add("a.w", Tensor::from_vec(&[2, 3], vec![0.1, -2.5, 3.0, 0.0, 9.125, -0.875]).unwrap());
        store.add("a.b", Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap());
        save(&store, &path).unwrap();

        let mut restored = ParamStore::<f32>::new();
        restored.add("a.w", Tensor::zeros(&[2, 3]));
        restored.add("a.b", Tensor::zeros(&[2]));
        load_into(&mut restored, &path).unwrap();
        for ((_, a), (_, b)) in store.entries().zip(restored.entries()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::zeros(&[4]));
        save(&store, &path).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.add("w", Tensor::zeros(&[5]));
        assert!(load_into(&mut other, &path).is_err());
    }
}
