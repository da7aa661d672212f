//! Binary feature files: `FEAT` magic, `u32` version, `u64` n, `u64` d, then
//! `n·d` little-endian `f32` row-major. A JSON sidecar at `<path>.json` holds
//! `{"ids": [...], "extractor_desc": "..."}` with one id per row.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// `n` feature vectors of dimension `d`, one per image id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    pub extractor_desc: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor_desc: Option<String>,
}

pub fn feature_sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if data.len() != n * d {
            return Err(Error::invalid(format!("{} values for a {n}x{d} feature matrix", data.len())));
        }
        if ids.len() != n {
            return Err(Error::invalid(format!("{} ids for {n} feature rows", ids.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix {
            n,
            d,
            data,
            ids,
            extractor_desc: None,
        })
    }

    /// Rows given as `f64`, narrowed to `f32` storage; ids are `"0".."n-1"`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("feature rows differ in length"));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        FeatureMatrix::new(n, d, data, (0..n).map(|i| i.to_string()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::invalid(format!("{} ids for {} feature rows", ids.len(), self.n)));
        }
        self.ids = ids;
        Ok(self)
    }

    /// Row index of every id. Duplicate ids keep the first row.
    pub fn index(&self) -> HashMap<&str, usize> {
        let mut m = HashMap::with_capacity(self.n);
        for (i, id) in self.ids.iter().enumerate() {
            m.entry(id.as_str()).or_insert(i);
        }
        m
    }

    /// New matrix made of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        FeatureMatrix {
            n: rows.len(),
            d: self.d,
            data,
            ids,
            extractor_desc: self.extractor_desc.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Writes the binary file and its sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = feature_sidecar_path(path);
        let sidecar = FeatureSidecar {
            ids: self.ids.clone(),
            extractor_desc: self.extractor_desc.clone(),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

/// Parses the binary payload; ids default to row numbers.
pub fn parse_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::malformed(path, "header", "file shorter than the feature header"));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::malformed(path, "magic", "expected \"FEAT\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FEATURE_VERSION {
        return Err(Error::malformed(path, "version", format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if n == 0 || d == 0 {
        return Err(Error::malformed(path, "n/d", format!("empty feature matrix (n={n}, d={d})")));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .filter(|&x| x == payload.len() as u64);
    if expected.is_none() {
        return Err(Error::malformed(
            path,
            "payload",
            format!("{} payload bytes for n={n}, d={d}", payload.len()),
        ));
    }
    let (n, d) = (n as usize, d as usize);
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::malformed(path, "payload", "non-finite feature value"));
    }
    Ok(FeatureMatrix {
        n,
        d,
        data,
        ids: (0..n).map(|i| i.to_string()).collect(),
        extractor_desc: None,
    })
}

/// Reads a feature file and its mandatory sidecar.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fm = parse_features(&bytes, path)?;
    let side = feature_sidecar_path(path);
    let text = std::fs::read_to_string(&side)
        .map_err(|_| Error::malformed(&side, "sidecar", "missing or unreadable feature sidecar"))?;
    let sidecar: FeatureSidecar =
        serde_json::from_str(&text).map_err(|e| Error::malformed(&side, "sidecar", e.to_string()))?;
    if sidecar.ids.len() != fm.n {
        return Err(Error::malformed(
            &side,
            "ids",
            format!("{} ids for {} rows", sidecar.ids.len(), fm.n),
        ));
    }
    fm.ids = sidecar.ids;
    fm.extractor_desc = sidecar.extractor_desc;
    Ok(fm)
}
