//! A small binary container of named `f64` arrays and text entries.
//!
//! Layout (little-endian): the magic `STSCARR1`, a `u32` entry count, then per
//! entry a `u8` kind (0 = array, 1 = text), a `u32`-prefixed UTF-8 name, and
//! either `u32` rank + `u64` dims + `f64` data, or a `u32`-prefixed UTF-8 body.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"STSCARR1";

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Array(Tensor),
    Text(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArrayFile {
    entries: Vec<(String, Entry)>,
}

impl ArrayFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_array(&mut self, name: impl Into<String>, t: Tensor) {
        self.insert(name.into(), Entry::Array(t));
    }

    pub fn insert_text(&mut self, name: impl Into<String>, s: impl Into<String>) {
        self.insert(name.into(), Entry::Text(s.into()));
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, x: f64) {
        self.insert_array(name, Tensor::scalar(x));
    }

    fn insert(&mut self, name: String, e: Entry) {
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = e;
        } else {
            self.entries.push((name, e));
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find_map(|(n, e)| match e {
            Entry::Array(t) if n == name => Some(t),
            _ => None,
        })
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.entries.iter().find_map(|(n, e)| match e {
            Entry::Text(s) if n == name => Some(s.as_str()),
            _ => None,
        })
    }

    pub fn require_array(&self, name: &str, path: &Path) -> Result<&Tensor> {
        self.array(name)
            .ok_or_else(|| Error::load(path, format!("missing array `{name}`")))
    }

    pub fn require_scalar(&self, name: &str, path: &Path) -> Result<f64> {
        let t = self.require_array(name, path)?;
        if t.len() != 1 {
            return Err(Error::load(path, format!("`{name}` is not a scalar")));
        }
        Ok(t.item())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, e) in &self.entries {
            let kind: u8 = match e {
                Entry::Array(_) => 0,
                Entry::Text(_) => 1,
            };
            out.push(kind);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match e {
                Entry::Array(t) => {
                    out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
                    for &d in t.shape() {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for x in t.data() {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Entry::Text(s) => {
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = bytes;
        let bad = |what: &str| Error::load(path, format!("corrupt container: {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let count = read_u32(&mut r).ok_or_else(|| bad("entry count"))?;
        let mut file = ArrayFile::new();
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind).map_err(|_| bad("entry kind"))?;
            let name = read_string(&mut r).ok_or_else(|| bad("entry name"))?;
            match kind[0] {
                0 => {
                    let nd = read_u32(&mut r).ok_or_else(|| bad("rank"))? as usize;
                    let mut shape = Vec::with_capacity(nd);
                    for _ in 0..nd {
                        shape.push(read_u64(&mut r).ok_or_else(|| bad("dims"))? as usize);
                    }
                    let n: usize = shape.iter().product();
                    if r.len() < n * 8 {
                        return Err(bad(&format!("data of `{name}`")));
                    }
                    let (data, rest) = r.split_at(n * 8);
                    r = rest;
                    let values = data
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    file.insert_array(name, Tensor::new(shape, values)?);
                }
                1 => {
                    let s = read_string(&mut r).ok_or_else(|| bad("text body"))?;
                    file.insert_text(name, s);
                }
                k => return Err(bad(&format!("unknown entry kind {k}"))),
            }
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }
}

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Option<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8]) -> Option<String> {
    let n = read_u32(r)? as usize;
    if r.len() < n {
        return None;
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bytes_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 1..40), text in "[a-z =.]{0,30}") {
            let mut f = ArrayFile::new();
            let n = vals.len();
            f.insert_array("v", Tensor::new(vec![n], vals).unwrap());
            f.insert_text("t", text);
            f.insert_scalar("s", 0.1);
            let back = ArrayFile::from_bytes(&f.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn rejects_truncated_input() {
        let mut f = ArrayFile::new();
        f.insert_array("v", Tensor::ones(&[3]));
        let bytes = f.to_bytes();
        assert!(ArrayFile::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
        assert!(ArrayFile::from_bytes(b"NOTMAGIC", Path::new("mem")).is_err());
    }
}
