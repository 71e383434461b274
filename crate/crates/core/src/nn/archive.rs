//! Weight archive: a JSON manifest followed by little-endian `f32` blobs.
//!
//! Layout on disk:
//!
//! ```text
//! b"GKWEIGHT"            8-byte magic
//! u64 (LE)               manifest length in bytes
//! manifest               UTF-8 JSON, see `Manifest`
//! blobs                  tensors back to back, f32 little-endian
//! ```
//!
//! `byte_offset` in the manifest is relative to the first blob byte.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"GKWEIGHT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    #[serde(default)]
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Ordered collection of named `f32` tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightArchive {
    pub meta: serde_json::Value,
    tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl WeightArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append (or replace) a tensor, converting to `f32`.
    pub fn insert<T: Scalar>(&mut self, name: &str, value: ArrayViewD<'_, T>) {
        let data: Vec<f32> = value.iter().map(|v| v.as_f32()).collect();
        let shape = value.shape().to_vec();
        match self.tensors.iter_mut().find(|t| t.0 == name) {
            Some(slot) => *slot = (name.to_string(), shape, data),
            None => self.tensors.push((name.to_string(), shape, data)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.0.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.0 == name)
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Option<ArrayD<T>> {
        self.tensors.iter().find(|t| t.0 == name).map(|(_, shape, data)| {
            ArrayD::from_shape_vec(IxDyn(shape), data.iter().map(|&v| T::of(v as f64)).collect())
                .expect("shape matches data")
        })
    }

    /// Like [`get`](Self::get) but with a shape check and a format error.
    pub fn require<T: Scalar>(&self, name: &str, shape: &[usize]) -> Result<ArrayD<T>> {
        let t = self
            .get::<T>(name)
            .ok_or_else(|| Error::format("<weights>", format!("missing tensor `{name}`")))?;
        if t.shape() != shape {
            return Err(Error::format(
                "<weights>",
                format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape()),
            ));
        }
        Ok(t)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.2.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, shape, data) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                dtype: "f32".into(),
                byte_offset: offset,
            });
            offset += 4 * data.len() as u64;
        }
        let manifest = serde_json::to_vec(&Manifest {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, _, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(origin, msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a weight archive (bad magic)"));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("manifest length exceeds file size"))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&format!("manifest: {e}")))?;
        let blobs = &bytes[body..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for t in manifest.tensors {
            if t.dtype != "f32" {
                return Err(bad(&format!("tensor `{}` has unsupported dtype {}", t.name, t.dtype)));
            }
            let n: usize = t.shape.iter().product();
            let start = t.byte_offset as usize;
            let end = start + 4 * n;
            if end > blobs.len() {
                return Err(bad(&format!("tensor `{}` runs past end of file", t.name)));
            }
            let data = blobs[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((t.name, t.shape, data));
        }
        Ok(WeightArchive {
            meta: manifest.meta,
            tensors,
        })
    }

    /// Write atomically (temp file in the same directory, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// SHA-256 over the whole serialized archive.
    pub fn content_hash(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }

    /// SHA-256 over the names and raw bits of tensors whose name starts
    /// with one of `prefixes`.
    pub fn checksum(&self, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        for (name, shape, data) in &self.tensors {
            if prefixes.iter().any(|p| name.starts_with(p)) {
                h.update(name.as_bytes());
                for d in shape {
                    h.update((*d as u64).to_le_bytes());
                }
                for v in data {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Temp file + rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn sample() -> WeightArchive {
        let mut a = WeightArchive::new();
        a.meta = serde_json::json!({"model": "test"});
        a.insert("enc.0.weight", Array::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f32 * 0.1 - 0.2).into_dyn().view());
        a.insert("codebook", Array::from_elem((4,), f32::MIN_POSITIVE).into_dyn().view());
        a.insert("scalar", Array::from_elem((), -0.0f32).into_dyn().view());
        a
    }

    #[test]
    fn bit_exact_round_trip() {
        let a = sample();
        let bytes = a.to_bytes();
        let b = WeightArchive::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(b.to_bytes(), bytes);
        assert_eq!(b.names().collect::<Vec<_>>(), vec!["enc.0.weight", "codebook", "scalar"]);
        let s: ArrayD<f32> = b.get("scalar").unwrap();
        assert!(s.iter().all(|v| v.to_bits() == (-0.0f32).to_bits()));
    }

    #[test]
    fn manifest_layout() {
        let bytes = sample().to_bytes();
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let m: serde_json::Value = serde_json::from_slice(&bytes[16..16 + mlen]).unwrap();
        let t = &m["tensors"];
        assert_eq!(t[0]["name"], "enc.0.weight");
        assert_eq!(t[0]["dtype"], "f32");
        assert_eq!(t[0]["shape"], serde_json::json!([2, 3]));
        assert_eq!(t[1]["byte_offset"], 24);
        assert_eq!(t[2]["byte_offset"], 40);
        assert_eq!(bytes.len(), 16 + mlen + 44);
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = sample().to_bytes();
        assert!(WeightArchive::from_bytes(&bytes[..bytes.len() - 2], Path::new("x")).is_err());
        assert!(WeightArchive::from_bytes(b"nonsense-nonsense", Path::new("x")).is_err());
    }

    #[test]
    fn checksum_covers_prefix_only() {
        let mut a = sample();
        let before = a.checksum(&["enc."]);
        a.insert("codebook", Array::from_elem((4,), 1.0f32).into_dyn().view());
        assert_eq!(a.checksum(&["enc."]), before);
        assert_ne!(a.checksum(&["codebook"]), sample().checksum(&["codebook"]));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        sample().save(&p).unwrap();
        assert_eq!(WeightArchive::load(&p).unwrap(), sample());
    }
}
