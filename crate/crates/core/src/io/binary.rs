use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, ScsrError};

pub(super) struct Writer {
    pub bytes: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8]) -> Self {
        Self {
            bytes: magic.to_vec(),
        }
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn json<T: Serialize>(&mut self, value: &T) {
        let text = serde_json::to_vec(value).expect("serializable header");
        self.u64(text.len() as u64);
        self.bytes.extend_from_slice(&text);
    }

    pub fn f32s(&mut self, values: impl IntoIterator<Item = f32>) {
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub(super) struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn open(path: &'a Path, bytes: &'a [u8], magic: &'static [u8; 8]) -> Result<Self> {
        if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
            return Err(ScsrError::BadMagic {
                path: path.to_path_buf(),
                expected: std::str::from_utf8(magic).expect("ascii magic"),
            });
        }
        Ok(Self {
            path,
            bytes,
            pos: magic.len(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(ScsrError::Truncated {
                path: self.path.to_path_buf(),
                detail: format!("{what}: need {n} bytes, {remaining} left"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A length-prefixed JSON document.
    pub fn json_value(&mut self, what: &str) -> Result<serde_json::Value> {
        let len = self.u64(what)?;
        let len = usize::try_from(len).map_err(|_| self.truncated(what))?;
        let raw = self.take(len, what)?;
        serde_json::from_slice(raw)
            .map_err(|e| ScsrError::malformed(self.path, format!("{what}: {e}")))
    }

    pub fn json<T: DeserializeOwned>(&mut self, what: &str) -> Result<T> {
        let value = self.json_value(what)?;
        serde_json::from_value(value)
            .map_err(|e| ScsrError::malformed(self.path, format!("{what}: {e}")))
    }

    pub fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let n = count.checked_mul(4).ok_or_else(|| self.truncated(what))?;
        Ok(self
            .take(n, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn truncated(&self, what: &str) -> ScsrError {
        ScsrError::Truncated {
            path: self.path.to_path_buf(),
            detail: format!("{what}: declared length exceeds the file"),
        }
    }

    pub fn finish(self) -> Result<()> {
        let extra = self.bytes.len() - self.pos;
        if extra != 0 {
            return Err(ScsrError::SizeMismatch {
                path: self.path.to_path_buf(),
                detail: format!("{extra} trailing bytes after the declared payload"),
            });
        }
        Ok(())
    }
}
