//! File formats: PLPC principal-component files and the CSV artifacts.
//!
//! PLPC layout, little-endian throughout:
//!
//! ```text
//! b"PLPC" | u32 version = 1 | u64 d | u64 N | N × (f64 λ, d × f64 v)
//! ```
//!
//! CSV values are written with Rust's shortest round-trip `f64` formatting,
//! so parsing a written file reproduces every value bitwise.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoisers::GmmPrior;
use crate::error::{Error, Result};
use crate::moments::DirectionalMomentSet;
use crate::spectra::PrincipalComponentSet;

pub const PLPC_MAGIC: &[u8; 4] = b"PLPC";
pub const PLPC_VERSION: u32 = 1;

/// Eigenpairs as stored in a PLPC file.
#[derive(Clone, Debug, PartialEq)]
pub struct PlpcData {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl From<&PrincipalComponentSet> for PlpcData {
    fn from(set: &PrincipalComponentSet) -> Self {
        PlpcData {
            dim: set.dim(),
            eigenvalues: set.eigenvalues.clone(),
            vectors: set.vectors.clone(),
        }
    }
}

impl PlpcData {
    /// A single component, as served per PC index.
    pub fn component(&self, i: usize) -> Option<PlpcData> {
        Some(PlpcData {
            dim: self.dim,
            eigenvalues: vec![*self.eigenvalues.get(i)?],
            vectors: vec![self.vectors.get(i)?.clone()],
        })
    }
}

pub fn encode_plpc(data: &PlpcData) -> Vec<u8> {
    let n = data.eigenvalues.len();
    let mut out = Vec::with_capacity(24 + n * 8 * (data.dim + 1));
    out.extend_from_slice(PLPC_MAGIC);
    out.extend_from_slice(&PLPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.dim as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for (l, v) in data.eigenvalues.iter().zip(&data.vectors) {
        out.extend_from_slice(&l.to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_plpc(bytes: &[u8]) -> Result<PlpcData> {
    let bad = |m: &str| Error::Protocol(format!("PLPC: {m}"));
    if bytes.len() < 24 {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != PLPC_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PLPC_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = dim
        .checked_add(1)
        .and_then(|r| r.checked_mul(n))
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(24))
        .ok_or_else(|| bad("header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(Error::Decode {
            expected,
            actual: bytes.len(),
        });
    }
    let mut vals = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for _ in 0..n {
        eigenvalues.push(vals.next().unwrap());
        vectors.push(vals.by_ref().take(dim).collect());
    }
    Ok(PlpcData {
        dim,
        eigenvalues,
        vectors,
    })
}

/// Write `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_plpc(path: &Path, data: &PlpcData) -> Result<()> {
    write_atomic(path, &encode_plpc(data))
}

pub fn read_plpc(path: &Path) -> Result<PlpcData> {
    decode_plpc(&std::fs::read(path)?)
}

/// A numeric CSV table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Protocol("CSV: empty file".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Protocol(format!("CSV line {}: {e}", n + 2)))?;
            if row.len() != header.len() {
                return Err(Error::Protocol(format!(
                    "CSV line {}: {} fields, header has {}",
                    n + 2,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Table> {
        Table::parse(&std::fs::read_to_string(path)?)
    }
}

/// Convergence trace as CSV: `iteration, pc1, pc2, …`.
pub fn convergence_table(trace: &[Vec<f64>]) -> Table {
    let n = trace.first().map_or(0, |r| r.len());
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain((1..=n).map(|i| format!("pc{i}")))
        .collect();
    let mut t = Table::new(&header);
    for (k, row) in trace.iter().enumerate() {
        t.push(std::iter::once((k + 1) as f64).chain(row.iter().copied()).collect());
    }
    t
}

pub const MOMENT_COLUMNS: [&str; 7] = ["base_point_id", "direction_id", "sigma", "mu1", "mu2", "mu3", "mu4"];

/// One row per `(base point, direction)` pair.
pub fn moments_table<'a>(rows: impl IntoIterator<Item = (usize, usize, &'a DirectionalMomentSet)>) -> Table {
    let mut t = Table::new(&MOMENT_COLUMNS);
    for (b, d, m) in rows {
        t.push(vec![
            b as f64,
            d as f64,
            m.sigma,
            m.mean,
            m.central[0],
            m.central[1],
            m.central[2],
        ]);
    }
    t
}

/// A Gaussian-mixture demo problem: prior, observation and noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmDemoConfig {
    pub prior: GmmPrior,
    pub y: Vec<f64>,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl GmmDemoConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
        let cfg: GmmDemoConfig = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.prior.dim() {
            return Err(Error::validation(format!(
                "observation has length {} but the prior has dimension {}",
                self.y.len(),
                self.prior.dim()
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plpc_round_trip_and_length_check() {
        let data = PlpcData {
            dim: 3,
            eigenvalues: vec![2.5, 1e-300],
            vectors: vec![vec![1.0, -0.0, f64::MIN_POSITIVE / 2.0], vec![0.1, 0.2, 0.3]],
        };
        let bytes = encode_plpc(&data);
        assert_eq!(bytes.len(), 24 + 2 * 4 * 8);
        let back = decode_plpc(&bytes).unwrap();
        assert_eq!(back.vectors[0][2].to_bits(), data.vectors[0][2].to_bits());
        assert_eq!(back.vectors[0][1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, data);
        assert!(matches!(
            decode_plpc(&bytes[..bytes.len() - 1]),
            Err(Error::Decode { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_plpc(&bad).is_err());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![0.1 + 0.2, -1e-310]);
        t.push(vec![1.0 / 3.0, 6.02214076e23]);
        let back = Table::parse(&t.to_csv()).unwrap();
        for (r, s) in t.rows.iter().zip(&back.rows) {
            for (x, y) in r.iter().zip(s) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn convergence_header() {
        let t = convergence_table(&[vec![0.5, 0.4], vec![0.9, 0.8]]);
        assert_eq!(t.header, ["iteration", "pc1", "pc2"]);
        assert_eq!(t.rows[1][0], 2.0);
    }
}
