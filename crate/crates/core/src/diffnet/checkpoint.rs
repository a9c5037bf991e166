//! Versioned binary container: a JSON header followed by raw little-endian
//! `f64` arrays. Floats are stored as bits, so round trips are exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::net::{DenseNet, NetSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPHB";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub kind: String,
    pub meta: Map<String, Value>,
    pub arrays: Vec<(String, Vec<f64>)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Map<String, Value>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

impl Bundle {
    pub fn new(kind: impl Into<String>) -> Self {
        Bundle {
            kind: kind.into(),
            meta: Map::new(),
            arrays: Vec::new(),
        }
    }

    pub fn push_array(&mut self, name: impl Into<String>, data: Vec<f64>) {
        self.arrays.push((name.into(), data));
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
            .ok_or_else(|| Error::Format(format!("bundle `{}` has no array `{name}`", self.kind)))
    }

    pub fn meta_value<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("bundle `{}` has no meta key `{key}`", self.kind)))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn set_meta<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!("expected a `{kind}` bundle, found `{}`", self.kind)))
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(n, d)| ArrayEntry {
                    name: n.clone(),
                    len: d.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let body: usize = self.arrays.iter().map(|(_, d)| d.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, d) in &self.arrays {
            for v in d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = || Error::Format("truncated bundle".into());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a bundle (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_bytes = bytes.get(16..16 + hlen).ok_or_else(short)?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        let mut off = 16 + hlen;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in header.arrays {
            let raw = bytes.get(off..off + e.len * 8).ok_or_else(short)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((e.name, data));
            off += e.len * 8;
        }
        if off != bytes.len() {
            return Err(Error::Format("trailing bytes after bundle".into()));
        }
        Ok(Bundle {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Bundle::from_bytes(&bytes)
    }
}

impl DenseNet {
    /// Stores this network under `name` (spec in meta, parameters as arrays).
    pub fn write_into(&self, name: &str, bundle: &mut Bundle) -> Result<()> {
        bundle.set_meta(&format!("net.{name}"), self.spec())?;
        bundle.push_array(format!("{name}.params"), self.params().to_vec());
        if let Some(k) = self.fourier_kernel() {
            bundle.push_array(format!("{name}.fourier"), k.iter().copied().collect());
        }
        Ok(())
    }

    pub fn read_from(bundle: &Bundle, name: &str) -> Result<DenseNet> {
        let spec: NetSpec = bundle.meta_value(&format!("net.{name}"))?;
        let params = bundle.array(&format!("{name}.params"))?.to_vec();
        let fourier = if spec.fourier.is_some() {
            Some(bundle.array(&format!("{name}.fourier"))?.to_vec())
        } else {
            None
        };
        DenseNet::from_parts(spec, params, fourier)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut b = Bundle::new("dense_net");
        self.write_into("net", &mut b)?;
        b.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DenseNet> {
        let b = Bundle::load(path)?;
        b.expect_kind("dense_net")?;
        DenseNet::read_from(&b, "net")
    }
}
