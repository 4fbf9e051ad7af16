//! QLS1 result container.
//!
//! Layout: the magic `QLS1`, a little-endian `u64` header length, a UTF-8
//! JSON header, then the raw little-endian array payloads. Array offsets in
//! the header are relative to the first payload byte; `c128` elements are
//! stored as interleaved `(re, im)` pairs of `f64`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QLS1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    C128(Vec<C64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::C128(_) => Dtype::C128,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

/// Header entry describing one array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    arrays: Vec<ArrayEntry>,
    config: serde_json::Value,
    diagnostics: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    /// Producing operation, e.g. `run-full`.
    pub kind: String,
    pub arrays: Vec<NamedArray>,
    pub config: serde_json::Value,
    pub diagnostics: serde_json::Value,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            arrays: Vec::new(),
            config: serde_json::Value::Null,
            diagnostics: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: ArrayData) -> Result<()> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(format_err(format!(
                "array {name:?}: shape {shape:?} holds {count} elements, data has {}",
                data.len()
            )));
        }
        if self.get(name).is_some() {
            return Err(format_err(format!("duplicate array name {name:?}")));
        }
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        Ok(())
    }

    /// One-dimensional `f64` array.
    pub fn push_f64(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let n = data.len();
        self.push(name, &[n], ArrayData::F64(data))
    }

    pub fn push_f64_2d(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<()> {
        self.push(name, &[rows, cols], ArrayData::F64(data))
    }

    pub fn push_c128(&mut self, name: &str, shape: &[usize], data: Vec<C64>) -> Result<()> {
        self.push(name, shape, ArrayData::C128(data))
    }

    /// Set a top-level diagnostics field.
    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        if let serde_json::Value::Object(m) = &mut self.diagnostics {
            m.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.arrays.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn f64_array(&self, name: &str) -> Result<&[f64]> {
        match self.get(name).map(|a| &a.data) {
            Some(ArrayData::F64(v)) => Ok(v),
            Some(ArrayData::C128(_)) => Err(format_err(format!("array {name:?} is c128, expected f64"))),
            None => Err(format_err(format!("no array named {name:?} (have {:?})", self.names()))),
        }
    }

    pub fn c128_array(&self, name: &str) -> Result<&[C64]> {
        match self.get(name).map(|a| &a.data) {
            Some(ArrayData::C128(v)) => Ok(v),
            Some(ArrayData::F64(_)) => Err(format_err(format!("array {name:?} is f64, expected c128"))),
            None => Err(format_err(format!("no array named {name:?} (have {:?})", self.names()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.arrays.len());
        let mut offset = 0u64;
        for a in &self.arrays {
            let nbytes = (a.data.len() * a.data.dtype().size()) as u64;
            entries.push(ArrayEntry {
                name: a.name.clone(),
                dtype: a.data.dtype(),
                shape: a.shape.clone(),
                offset,
                nbytes,
            });
            offset += nbytes;
        }
        let header = Header {
            format: "QLS1".into(),
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            arrays: entries,
            config: self.config.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        let text = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + text.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(&text);
        for a in &self.arrays {
            match &a.data {
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::C128(v) => v.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(format_err(format!("file too short for a QLS1 preamble ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(format_err(format!("bad magic {:?}", &bytes[..4])));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let payload_start = 12u64
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| format_err(format!("header length {hlen} exceeds file size {}", bytes.len())))?
            as usize;
        let header: Header = serde_json::from_slice(&bytes[12..payload_start])
            .map_err(|e| format_err(format!("unreadable header: {e}")))?;
        if header.format != "QLS1" {
            return Err(format_err(format!("header format {:?}", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {}", header.version)));
        }
        let payload = &bytes[payload_start..];
        let mut expected_end = 0u64;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in &header.arrays {
            let count = e
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| format_err(format!("array {:?}: shape overflows", e.name)))?;
            if count.checked_mul(e.dtype.size() as u64) != Some(e.nbytes) {
                return Err(format_err(format!(
                    "array {:?}: {} bytes do not match shape {:?} of {:?}",
                    e.name, e.nbytes, e.shape, e.dtype
                )));
            }
            if e.offset != expected_end {
                return Err(format_err(format!(
                    "array {:?}: offset {} where {} was expected",
                    e.name, e.offset, expected_end
                )));
            }
            let end = e.offset + e.nbytes;
            if end > payload.len() as u64 {
                return Err(format_err(format!(
                    "truncated payload: array {:?} ends at {end}, payload has {} bytes",
                    e.name,
                    payload.len()
                )));
            }
            let raw = &payload[e.offset as usize..end as usize];
            let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
            let data = match e.dtype {
                Dtype::F64 => ArrayData::F64(raw.chunks_exact(8).map(f).collect()),
                Dtype::C128 => ArrayData::C128(raw.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect()),
            };
            arrays.push(NamedArray {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data,
            });
            expected_end = end;
        }
        if expected_end != payload.len() as u64 {
            return Err(format_err(format!(
                "payload has {} bytes, header describes {expected_end}",
                payload.len()
            )));
        }
        Ok(Self {
            kind: header.kind,
            arrays,
            config: header.config,
            diagnostics: header.diagnostics,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
