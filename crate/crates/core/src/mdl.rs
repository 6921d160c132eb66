//! MDL1 parameter container: magic, u32 header length, `key=value` header
//! lines, then a little-endian f32 payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::atomic_write;

pub const MDL1_MAGIC: &[u8; 4] = b"MDL1";

/// Ordered header entries plus the raw parameter payload.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub header: Vec<(String, String)>,
    pub payload: Vec<f32>,
}

impl ModelFile {
    pub fn new() -> Self {
        Self {
            header: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::MalformedModel(format!("missing header key {key}")))
    }

    pub fn parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::MalformedModel(format!("bad value for {key}: {raw}")))
    }

    pub fn header_map(&self) -> BTreeMap<&str, &str> {
        self.header.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut text = String::new();
        for (k, v) in &self.header {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        let mut out = Vec::with_capacity(8 + text.len() + 4 * self.payload.len());
        out.extend_from_slice(MDL1_MAGIC);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for p in &self.payload {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MDL1_MAGIC {
            return Err(Error::BadMagic {
                expected: "MDL1",
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected: 8,
                found: bytes.len(),
            });
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + hlen {
            return Err(Error::Truncated {
                expected: 8 + hlen,
                found: bytes.len(),
            });
        }
        let text = std::str::from_utf8(&bytes[8..8 + hlen])
            .map_err(|_| Error::MalformedModel("header is not utf-8".into()))?;
        let mut header = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedModel(format!("header line without '=': {line}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let rest = &bytes[8 + hlen..];
        if rest.len() % 4 != 0 {
            return Err(Error::Truncated {
                expected: bytes.len() + 4 - rest.len() % 4,
                found: bytes.len(),
            });
        }
        let payload = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { header, payload })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

impl Default for ModelFile {
    fn default() -> Self {
        Self::new()
    }
}

/// Comma-separated f64 list using shortest round-trip formatting.
pub fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub fn split_f64(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::MalformedModel(format!("bad float {t}")))
        })
        .collect()
}
