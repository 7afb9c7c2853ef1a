//! Named-array blob used for network weights and tensor golden files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MVLN" | version: u32 | entry count: u32
//! per entry: name length: u16 | UTF-8 name | rank: u8 | dims: u32 x rank | f32 x prod(dims)
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BLOB_MAGIC: &[u8; 4] = b"MVLN";
pub const BLOB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Array {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "array dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }
}

impl From<&Tensor> for Array {
    fn from(t: &Tensor) -> Self {
        let s = t.shape();
        Array {
            dims: vec![s.depth as u32, s.height as u32, s.width as u32],
            data: t.data().to_vec(),
        }
    }
}

impl TryFrom<&Array> for Tensor {
    type Error = Error;

    fn try_from(a: &Array) -> Result<Tensor> {
        match a.dims_usize()[..] {
            [d, h, w] => Tensor::from_vec((d, h, w), a.data.clone()),
            _ => Err(Error::shape(format!(
                "expected rank-3 array, got {:?}",
                a.dims
            ))),
        }
    }
}

/// Ordered name -> array map. Insertion order is preserved through save/load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, array: Array) {
        self.entries.insert(name.into(), array);
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.entries.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Array> {
        self.entries.shift_remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|a| a.data.len()).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, a) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::MalformedFile(format!("entry name too long: {name}")))?;
            let rank = u8::try_from(a.dims.len())
                .map_err(|_| Error::MalformedFile(format!("rank too large for {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::MalformedFile("bad blob magic".into()));
        }
        let version = r.u32()?;
        if version != BLOB_VERSION {
            return Err(Error::MalformedFile(format!(
                "unsupported blob version {version}"
            )));
        }
        let count = r.u32()?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::MalformedFile("entry name is not UTF-8".into()))?
                .to_owned();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| Error::MalformedFile(format!("dims overflow for {name}")))?;
            let payload = r
                .take(n.checked_mul(4).ok_or_else(|| {
                    Error::MalformedFile(format!("payload overflow for {name}"))
                })?)?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if store.entries.contains_key(&name) {
                return Err(Error::DuplicateName(name));
            }
            store.entries.insert(name, Array { dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedFile(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedFile("truncated blob".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_weight_blob(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, store.to_bytes()?)?;
    Ok(())
}

pub fn load_weight_blob(path: impl AsRef<Path>) -> Result<ParamStore> {
    ParamStore::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(
            "trunk1.weight",
            Array::new(vec![2, 1, 1, 1], vec![0.5, -1.25]).unwrap(),
        );
        s.insert("scalar", Array::new(vec![], vec![3.0]).unwrap());
        s.insert("empty", Array::new(vec![0], vec![]).unwrap());
        s
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"MVLN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 13);
        assert_eq!(&bytes[14..27], b"trunk1.weight");
        assert_eq!(bytes[27], 4);
    }

    #[test]
    fn round_trip_preserves_order_and_bits() {
        let s = sample();
        let bytes = s.to_bytes().unwrap();
        let back = ParamStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let names: Vec<_> = back.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["trunk1.weight", "scalar", "empty"]);
    }

    #[test]
    fn truncation_is_malformed() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 3, 11, 20, bytes.len() - 1] {
            assert!(
                matches!(
                    ParamStore::from_bytes(&bytes[..cut]),
                    Err(Error::MalformedFile(_))
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        // Append a second copy of the "scalar" entry and bump the count.
        let mut extra = Vec::new();
        extra.extend_from_slice(&6u16.to_le_bytes());
        extra.extend_from_slice(b"scalar");
        extra.push(0);
        extra.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&extra);
        bytes[8..12].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            ParamStore::from_bytes(&bytes),
            Err(Error::DuplicateName(n)) if n == "scalar"
        ));
    }

    #[test]
    fn tensor_array_conversion() {
        let t = Tensor::from_vec((1, 2, 3), (0..6).map(|v| v as f32).collect()).unwrap();
        let a = Array::from(&t);
        assert_eq!(Tensor::try_from(&a).unwrap(), t);
    }
}
