//! Binary container: an 8-byte magic, a little-endian `u64` manifest
//! length, a JSON manifest, then raw little-endian tensor data.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"BLCAPTF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    U32,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::U32 => 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    meta: Value,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
enum Data {
    F64(Vec<f64>),
    U32(Vec<u32>),
}

/// Named tensors plus free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub meta: Value,
    tensors: Vec<(String, Vec<usize>, Data)>,
}

impl TensorFile {
    pub fn new(meta: Value) -> Self {
        Self { meta, tensors: Vec::new() }
    }

    fn check_len(name: &str, shape: &[usize], len: usize) {
        assert_eq!(shape.iter().product::<usize>(), len, "tensor {name}: shape {shape:?} does not match length {len}");
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        Self::check_len(name, shape, data.len());
        self.tensors.push((name.to_owned(), shape.to_vec(), Data::F64(data)));
    }

    pub fn push_u32(&mut self, name: &str, shape: &[usize], data: Vec<u32>) {
        Self::check_len(name, shape, data.len());
        self.tensors.push((name.to_owned(), shape.to_vec(), Data::U32(data)));
    }

    fn find(&self, name: &str) -> Result<&(String, Vec<usize>, Data)> {
        self.tensors.iter().find(|t| t.0 == name).ok_or_else(|| Error::Shape(format!("missing tensor {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.0.as_str())
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.find(name)? {
            (_, shape, Data::F64(d)) => Ok((shape, d)),
            _ => Err(Error::Shape(format!("tensor {name} is not f64"))),
        }
    }

    pub fn u32(&self, name: &str) -> Result<(&[usize], &[u32])> {
        match self.find(name)? {
            (_, shape, Data::U32(d)) => Ok((shape, d)),
            _ => Err(Error::Shape(format!("tensor {name} is not u32"))),
        }
    }

    /// `f64` tensor that must have exactly `shape`.
    pub fn f64_shaped(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let (s, d) = self.f64(name)?;
        if s != shape {
            return Err(Error::Shape(format!("tensor {name}: expected {shape:?}, found {s:?}")));
        }
        Ok(d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let mut entries = Vec::new();
        for (name, shape, data) in &self.tensors {
            let dtype = match data {
                Data::F64(_) => DType::F64,
                Data::U32(_) => DType::U32,
            };
            entries.push(Entry { name: name.clone(), dtype, shape: shape.clone(), offset });
            offset += shape.iter().product::<usize>() * dtype.size();
        }
        let manifest =
            serde_json::to_vec(&Manifest { meta: self.meta.clone(), tensors: entries }).expect("manifest serialises");
        let mut out = Vec::with_capacity(16 + manifest.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, _, data) in &self.tensors {
            match data {
                Data::F64(d) => d.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                Data::U32(d) => d.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err("not a tensor file (bad magic)".into());
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or("truncated manifest")?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..body]).map_err(|e| e.to_string())?;
        let data = &bytes[body..];
        let mut tensors = Vec::new();
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let end = e.offset + n * e.dtype.size();
            let raw = data.get(e.offset..end).ok_or_else(|| format!("tensor {} out of bounds", e.name))?;
            let d = match e.dtype {
                DType::F64 => {
                    Data::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
                }
                DType::U32 => {
                    Data::U32(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
                }
            };
            tensors.push((e.name, e.shape, d));
        }
        Ok(Self { meta: manifest.meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::parse(path, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut f = TensorFile::new(serde_json::json!({"kind": "test", "k": 3}));
        f.push_f64("a", &[2, 3], vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]);
        f.push_u32("b", &[4], vec![0, 1, u32::MAX, 7]);
        f.push_f64("empty", &[0, 5], vec![]);
        let g = TensorFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.f64_shaped("a", &[2, 3]).unwrap()[5], 1e300);
        assert!(g.f64_shaped("a", &[3, 2]).is_err());
        assert!(g.u32("a").is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(TensorFile::from_bytes(b"hello").is_err());
        let mut bytes = TensorFile::new(Value::Null).to_bytes();
        bytes[8] = 200;
        assert!(TensorFile::from_bytes(&bytes).is_err());
    }
}
