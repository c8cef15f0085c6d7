//! `XHW1` weights files: little-endian, f32 payloads.
//!
//! ```text
//! magic "XHW1" | u32 version | u32 count
//! count x { u16 name_len | name | u8 rank | rank x u32 extent | f32 data }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::Network;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"XHW1";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn save_weights<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let params = net.named_parameters();
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Format(format!("parameter name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[t.rank() as u8])?;
        for &e in t.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("file truncated while reading {what} at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

type Entries = HashMap<String, (Vec<usize>, Vec<f32>)>;

fn parse(buf: &[u8]) -> Result<Entries> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format("bad magic: not an XHW1 weights file".into()));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = HashMap::with_capacity(count);
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Format(format!("tensor {i} has a non-UTF-8 name")))?
            .to_string();
        let rank = r.u8(&name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&name)? as usize);
        }
        let n: usize = shape.iter().product();
        let data = r
            .take(n.checked_mul(4).ok_or_else(|| Error::Format(format!("{name}: extent overflow")))?, &name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if entries.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Format(format!("duplicate tensor '{name}'")));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after last tensor", buf.len() - r.pos)));
    }
    Ok(entries)
}

/// Loads weights into a copy of `template`, which fixes the expected names
/// and shapes. Nothing is returned unless every entry matches.
pub fn load_weights<T: Scalar>(template: &Network<T>, path: impl AsRef<Path>) -> Result<Network<T>> {
    let mut entries = parse(&std::fs::read(path)?)?;
    let mut net = template.clone();
    for (name, slot) in net.named_parameters_mut() {
        let (shape, data) = entries.remove(&name).ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))?;
        if shape != slot.shape() {
            return Err(Error::Format(format!("tensor '{name}' has shape {shape:?}, expected {:?}", slot.shape())));
        }
        *slot = Tensor::new(shape, data.into_iter().map(|v| T::of(v as f64)).collect())?;
    }
    if let Some(extra) = entries.keys().min() {
        return Err(Error::Format(format!("unexpected tensor '{extra}'")));
    }
    Ok(net)
}
