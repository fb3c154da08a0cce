//! Versioned flat file for named parameter tensors.
//!
//! Layout:
//!
//! ```text
//! PHENOTRAJ-PARAMS\n
//! version 1\n
//! meta <byte length>\n<metadata bytes>\n
//! count <n>\n
//! then n binary records:
//!   u32 name length, name bytes (UTF-8),
//!   u32 rank, rank x u64 extents,
//!   product(extents) x f64 values, row-major
//! ```
//!
//! All binary integers and floats are little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &str = "PHENOTRAJ-PARAMS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    /// Free-form metadata (the encoder stores its configuration here).
    pub metadata: String,
    pub params: Vec<(String, Tensor)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(bad("unexpected end of file"));
    }
    if !line.ends_with('\n') {
        return Err(bad("unterminated header line"));
    }
    line.pop();
    Ok(line)
}

fn tagged(line: &str, tag: &str) -> Result<u64> {
    line.strip_prefix(tag)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(format!("expected `{tag} <n>`, found `{line}`")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl ParamFile {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "version {FORMAT_VERSION}")?;
        writeln!(w, "meta {}", self.metadata.len())?;
        w.write_all(self.metadata.as_bytes())?;
        writeln!(w)?;
        writeln!(w, "count {}", self.params.len())?;
        for (name, t) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &e in t.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        if read_line(r)? != MAGIC {
            return Err(bad("missing magic line"));
        }
        let version = tagged(&read_line(r)?, "version")?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let meta_len = tagged(&read_line(r)?, "meta")? as usize;
        let mut meta = vec![0u8; meta_len + 1];
        r.read_exact(&mut meta)?;
        if meta.pop() != Some(b'\n') {
            return Err(bad("metadata block not newline-terminated"));
        }
        let metadata = String::from_utf8(meta).map_err(|_| bad("metadata is not UTF-8"))?;
        let count = tagged(&read_line(r)?, "count")? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("parameter name is not UTF-8"))?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(r).map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
            params.push((name, t));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after last record"));
        }
        Ok(Self { metadata, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(crate::error::open_file(path)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}
