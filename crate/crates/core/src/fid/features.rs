use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::nn::{Network, Role, Tensor};

/// `n × d` feature matrix, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    pub source: String,
}

const MAGIC: &[u8; 4] = b"FMAT";
const VERSION: u16 = 1;

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::invalid(format!(
                "feature matrix {n}×{d} needs {} values, got {}",
                n * d,
                values.len()
            )));
        }
        Ok(Self {
            n,
            d,
            values,
            source: source.into(),
        })
    }

    /// Flattens a batch tensor `[n, ...]` into rows.
    pub fn from_tensor(t: &Tensor, source: impl Into<String>) -> Result<Self> {
        Self::new(t.batch(), t.sample_len(), t.data().to_vec(), source)
    }

    pub fn from_rows_f64(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged feature rows"));
        }
        let values = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), d, values, source)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Stacks matrices with equal width.
    pub fn vstack(parts: &[&FeatureMatrix], source: impl Into<String>) -> Result<Self> {
        let d = parts.first().map_or(0, |p| p.d);
        let mut values = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.d != d {
                return Err(Error::shape(&[d], &[p.d]));
            }
            n += p.n;
            values.extend_from_slice(&p.values);
        }
        Self::new(n, d, values, source)
    }

    /// Binary layout (all little-endian):
    /// `"FMAT"`, `u16` version, `u64` n, `u64` d, `u32` tag length, tag bytes
    /// (UTF-8), then `n·d` `f32` values in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.d as u64).to_le_bytes())?;
        let tag = self.source.as_bytes();
        w.write_all(&(tag.len() as u32).to_le_bytes())?;
        w.write_all(tag)?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = ByteCursor::new(&bytes, "feature matrix");
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(cur.error(0, "bad magic, expected FMAT"));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(cur.error(4, format!("unsupported version {version}")));
        }
        let n = cur.u64()? as usize;
        let d = cur.u64()? as usize;
        let tag_len = cur.u32()? as usize;
        let tag = String::from_utf8(cur.take(tag_len)?.to_vec())
            .map_err(|_| cur.error(26, "tag is not UTF-8"))?;
        let count = n
            .checked_mul(d)
            .ok_or_else(|| cur.error(10, "dimensions overflow"))?;
        let raw = cur.take(count * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if cur.remaining() != 0 {
            return Err(cur.error(cur.pos as u64, "trailing bytes"));
        }
        Self::new(n, d, values, tag)
    }

    /// CSV with a `f0,f1,...` header; the source tag is not stored.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record((0..self.d).map(|j| format!("f{j}")))?;
        for i in 0..self.n {
            wr.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, source: impl Into<String>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let d = rd.headers()?.len();
        let mut values = Vec::new();
        let mut n = 0;
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != d {
                return Err(Error::Config {
                    line: line + 2,
                    message: format!("expected {d} columns, got {}", rec.len()),
                });
            }
            for field in rec.iter() {
                values.push(field.trim().parse::<f32>().map_err(|e| Error::Config {
                    line: line + 2,
                    message: format!("bad number '{field}': {e}"),
                })?);
            }
            n += 1;
        }
        Self::new(n, d, values, source)
    }

    /// Loads by extension: `.csv` as CSV, anything else as the binary layout.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(reader, path.display().to_string())
        } else {
            Self::read_binary(reader)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(&mut buf)?;
        } else {
            self.write_binary(&mut buf)?;
        }
        atomic_write(path, &buf)
    }
}

/// Little-endian reader that reports byte offsets on truncation.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
    what: &'static str,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub(crate) fn error(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(self.error(
                self.pos as u64,
                format!(
                    "truncated: need {len} bytes, {} available ({} missing)",
                    self.remaining(),
                    len - self.remaining()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Activations of the layer just before the discriminator's output layer,
/// flattened per sample.
pub fn extract_features(d: &Network, samples: &Tensor) -> Result<FeatureMatrix> {
    if d.layers().len() < 2 {
        return Err(Error::invalid(
            "feature extraction needs at least two layers (no hidden layer)",
        ));
    }
    const CHUNK: usize = 512;
    let n = samples.batch();
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let take = CHUNK.min(n - start);
        parts.push(d.hidden_features(&samples.slice_batch(start, take)?)?);
        start += take;
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    let all = Tensor::concat_batch(&refs)?;
    let tag = match d.role {
        Role::Discriminator => "discriminator-features",
        Role::Generator => "network-features",
    };
    FeatureMatrix::from_tensor(&all, tag)
}
