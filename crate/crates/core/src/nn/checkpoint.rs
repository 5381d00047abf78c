//! Versioned binary checkpoint: model parameters plus optional Adam state.
//! Layout is documented in `docs/format.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AdamState, Model, ModelConfig, ModelParams, Precision, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"FNETCKPT";
pub const VERSION: u32 = 1;
const CHUNK: usize = 1 << 16;

struct Counting<'a, W> {
    inner: &'a mut W,
    written: u64,
}

impl<W: Write> Counting<'_, W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.written += bytes.len() as u64;
        self.inner.write_all(bytes)
    }

    fn put_values<T: Real>(&mut self, values: &[T], buf: &mut Vec<u8>) -> std::io::Result<()> {
        for chunk in values.chunks(CHUNK) {
            buf.clear();
            T::extend_le_bytes(chunk, buf);
            self.put(buf)?;
        }
        Ok(())
    }
}

/// Serialize to any writer; returns the number of bytes written.
pub fn write_checkpoint_to<T: Real, W: Write>(model: &Model<T>, adam: Option<&AdamState<T>>, w: &mut W) -> std::io::Result<u64> {
    let mut out = Counting { inner: w, written: 0 };
    let mut buf = Vec::with_capacity(CHUNK * T::BYTES);
    out.put(MAGIC)?;
    out.put(&VERSION.to_le_bytes())?;
    out.put(&T::PRECISION.bits().to_le_bytes())?;
    let text = model.config().to_text();
    out.put(&(text.len() as u32).to_le_bytes())?;
    out.put(text.as_bytes())?;
    let tensors = &model.params().tensors;
    out.put(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.put(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.put(&(d as u64).to_le_bytes())?;
        }
        out.put_values(t.data(), &mut buf)?;
    }
    match adam {
        None => out.put(&[0u8])?,
        Some(s) => {
            out.put(&[1u8])?;
            out.put(&s.step.to_le_bytes())?;
            out.put(&s.beta1.to_le_bytes())?;
            out.put(&s.beta2.to_le_bytes())?;
            out.put(&s.eps.to_le_bytes())?;
            for m in &s.first {
                out.put_values(m, &mut buf)?;
            }
            for v in &s.second {
                out.put_values(v, &mut buf)?;
            }
        }
    }
    Ok(out.written)
}

pub fn write_checkpoint<T: Real>(model: &Model<T>, adam: Option<&AdamState<T>>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint_to(model, adam, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(Error::format(
                        self.offset + read as u64,
                        format!("unexpected end of checkpoint ({} more bytes expected)", buf.len() - read),
                    ))
                }
                Ok(k) => read += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::format(self.offset + read as u64, e.to_string())),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn values<T: Real>(&mut self, len: usize) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(len);
        let mut buf = vec![0u8; CHUNK * T::BYTES];
        let mut left = len;
        while left > 0 {
            let take = left.min(CHUNK);
            let start = self.offset;
            let bytes = &mut buf[..take * T::BYTES];
            self.fill(bytes)?;
            for (i, c) in bytes.chunks_exact(T::BYTES).enumerate() {
                let v = T::from_le_slice(c);
                if !v.is_finite() {
                    return Err(Error::format(start + (i * T::BYTES) as u64, "non-finite value"));
                }
                out.push(v);
            }
            left -= take;
        }
        Ok(out)
    }
}

/// Header fields, readable without knowing the precision.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub precision: Precision,
    pub config: ModelConfig,
}

fn read_header<R: Read>(c: &mut Cursor<R>) -> Result<CheckpointHeader> {
    let magic = c.bytes(8)?;
    if magic != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
    }
    let precision = match c.u32()? {
        32 => Precision::F32,
        64 => Precision::F64,
        other => return Err(Error::format(12, format!("unknown precision {other}"))),
    };
    let len = c.u32()? as usize;
    let at = c.offset;
    let text = String::from_utf8(c.bytes(len)?).map_err(|_| Error::format(at, "config is not UTF-8"))?;
    let config = ModelConfig::from_text(&text).map_err(|e| Error::format(at, e.to_string()))?;
    Ok(CheckpointHeader { precision, config })
}

fn open(path: &Path) -> Result<Cursor<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Cursor {
        inner: BufReader::with_capacity(1 << 20, file),
        offset: 0,
    })
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    read_header(&mut open(path)?)
}

pub fn read_checkpoint_from<T: Real, R: Read>(r: R) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let mut c = Cursor { inner: r, offset: 0 };
    let header = read_header(&mut c)?;
    if header.precision != T::PRECISION {
        return Err(Error::format(
            12,
            format!("checkpoint holds {} parameters, reader expects {}", header.precision.as_str(), T::PRECISION.as_str()),
        ));
    }
    let expected = crate::nn::model::param_shapes(&header.config)?;
    let at = c.offset;
    let count = c.u32()? as usize;
    if count != expected.len() {
        return Err(Error::format(at, format!("{count} tensors, config implies {}", expected.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for shape in &expected {
        let at = c.offset;
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != *shape {
            return Err(Error::format(at, format!("tensor shape {dims:?}, config implies {shape:?}")));
        }
        let data = c.values::<T>(shape.iter().product())?;
        tensors.push(Tensor::new(dims, data)?);
    }
    let params = ModelParams { tensors };
    let at = c.offset;
    let adam = match c.u8()? {
        0 => None,
        1 => {
            let step = c.u64()?;
            let (beta1, beta2, eps) = (c.f64()?, c.f64()?, c.f64()?);
            let lens: Vec<usize> = params.tensors.iter().map(Tensor::len).collect();
            let first = lens.iter().map(|&l| c.values::<T>(l)).collect::<Result<Vec<_>>>()?;
            let second = lens.iter().map(|&l| c.values::<T>(l)).collect::<Result<Vec<_>>>()?;
            Some(AdamState::from_parts(beta1, beta2, eps, step, first, second))
        }
        other => return Err(Error::format(at, format!("bad optimizer flag {other}"))),
    };
    let mut probe = [0u8; 1];
    let end = c.offset;
    if matches!(c.inner.read(&mut probe), Ok(k) if k > 0) {
        return Err(Error::format(end, "trailing bytes after checkpoint"));
    }
    Ok((Model::from_params(header.config, params)?, adam))
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let c = open(path)?;
    read_checkpoint_from(c.inner)
}
