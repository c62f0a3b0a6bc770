//! Binary checkpoint container. Layout is described in docs/checkpoint.md.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::params::ParamStore;
use super::{ModelConfig, Seq2Seq};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"JAYCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Data(format!("malformed checkpoint: {}", msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad("unexpected end of data"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("length does not fit in memory"))
    }
}

impl Seq2Seq {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out = Vec::with_capacity(self.params.count() * 8 + 1024);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, value) in self.params.names.iter().zip(&self.params.values) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(value.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(value.ncols() as u64).to_le_bytes());
            for v in value.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("wrong magic bytes"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = r.len()?;
        let config: ModelConfig =
            serde_json::from_slice(r.take(n)?).map_err(|e| bad(format!("config: {e}")))?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::default();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| bad("parameter name is not UTF-8"))?;
            let rows = r.len()?;
            let cols = r.len()?;
            let size = rows.checked_mul(cols).and_then(|s| s.checked_mul(8)).ok_or_else(|| bad("shape overflow"))?;
            let data: Vec<f64> = r
                .take(size)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.names.push(name);
            params.values.push(Array2::from_shape_vec((rows, cols), data).expect("size checked"));
        }
        if !r.buf.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Seq2Seq::from_params(config, params, step)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Seq2Seq {
        Seq2Seq::new(ModelConfig { max_source_len: 12, max_target_len: 6, ..ModelConfig::tiny(15) }).unwrap()
    }

    #[test]
    fn roundtrip_preserves_outputs_exactly() {
        let mut m = model();
        m.step = 42;
        let back = Seq2Seq::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.forward(&[3, 9, 4], &[7]).unwrap(), m.forward(&[3, 9, 4], &[7]).unwrap());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        m.save(&path).unwrap();
        assert_eq!(Seq2Seq::load(&path).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = model().to_bytes();
        assert!(Seq2Seq::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Seq2Seq::from_bytes(&wrong).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Seq2Seq::from_bytes(&extra).is_err());
    }
}
