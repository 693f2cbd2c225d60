//! On-disk formats: lead fields (binary and CSV), scenarios (TOML), recordings (CSV)
//! and the versioned results container.
//!
//! Binary lead-field layout, all little-endian:
//!
//! ```text
//! offset 0   8 bytes   magic "DSKF-LF1"
//! offset 8   u64       m (electrodes)
//! offset 16  u64       n (sources)
//! offset 24  m·n f64   L, row-major
//! ...        n·3 f64   source positions
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulate::Scenario;
use crate::statespace::LeadField;

pub const LEADFIELD_MAGIC: &[u8; 8] = b"DSKF-LF1";
pub const RESULTS_MAGIC: &str = "DSKF-RESULTS";
pub const RESULTS_FORMAT_VERSION: u32 = 1;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_leadfield(lf: &LeadField) -> Vec<u8> {
    let (m, n) = lf.matrix().shape();
    let mut out = Vec::with_capacity(24 + 8 * (m * n + 3 * n));
    out.extend_from_slice(LEADFIELD_MAGIC);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..m {
        for j in 0..n {
            out.extend_from_slice(&lf.matrix()[(i, j)].to_le_bytes());
        }
    }
    for p in lf.positions() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.offset < len {
            return Err(Error::Format {
                offset: self.offset as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_leadfield(bytes: &[u8]) -> Result<LeadField> {
    let mut cur = Cursor { bytes, offset: 0 };
    if cur.take(8, "magic")? != LEADFIELD_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "not a lead-field file (bad magic bytes)".into(),
        });
    }
    let m = cur.u64("electrode count")?;
    let n = cur.u64("source count")?;
    let expected = m
        .checked_mul(n)
        .and_then(|mn| mn.checked_add(n.checked_mul(3)?))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(24));
    if expected != Some(bytes.len() as u64) {
        let offset = 24.min(bytes.len()) as u64;
        return Err(Error::Format {
            offset,
            reason: format!(
                "header declares {m}x{n} but the payload holds {} bytes",
                bytes.len().saturating_sub(24)
            ),
        });
    }
    let (m, n) = (m as usize, n as usize);
    let mut values = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        values.push(cur.f64("lead-field entry")?);
    }
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push([cur.f64("position")?, cur.f64("position")?, cur.f64("position")?]);
    }
    LeadField::new(DMatrix::from_row_slice(m, n, &values), positions)
}

pub fn save_leadfield(path: &Path, lf: &LeadField) -> Result<()> {
    write(path, &encode_leadfield(lf))
}

pub fn save_leadfield_csv(path: &Path, lf: &LeadField) -> Result<()> {
    let (m, n) = lf.matrix().shape();
    let mut s = format!("{m},{n}\n");
    for row in lf.matrix().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    for p in lf.positions() {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p[0], p[1], p[2]));
    }
    write(path, s.as_bytes())
}

fn parse_row(line: &str, expected: usize, line_no: usize, offset: usize) -> Result<Vec<f64>> {
    let values: Vec<&str> = line.split(',').map(str::trim).collect();
    if values.len() != expected {
        return Err(Error::Dimension(format!(
            "line {line_no} has {} values, expected {expected}",
            values.len()
        )));
    }
    values
        .iter()
        .map(|v| {
            v.parse::<f64>().map_err(|e| Error::Format {
                offset: offset as u64,
                reason: format!("line {line_no}: '{v}': {e}"),
            })
        })
        .collect()
}

pub fn parse_leadfield_csv(text: &str) -> Result<LeadField> {
    let mut offset = 0;
    let mut lines = Vec::new();
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if !trimmed.trim().is_empty() {
            lines.push((trimmed, offset));
        }
        offset += line.len();
    }
    let Some(&(header, _)) = lines.first() else {
        return Err(Error::Format {
            offset: 0,
            reason: "empty lead-field CSV".into(),
        });
    };
    let dims: Vec<usize> = header
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format {
            offset: 0,
            reason: format!("header must be 'm,n': {e}"),
        })?;
    let [m, n] = dims[..] else {
        return Err(Error::Format {
            offset: 0,
            reason: "header must be 'm,n'".into(),
        });
    };
    if lines.len() - 1 != m + n {
        return Err(Error::Dimension(format!(
            "header declares {m} lead-field rows and {n} positions, file has {} data rows",
            lines.len() - 1
        )));
    }
    let mut values = Vec::with_capacity(m * n);
    for (k, &(line, off)) in lines[1..=m].iter().enumerate() {
        values.extend(parse_row(line, n, k + 2, off)?);
    }
    let mut positions = Vec::with_capacity(n);
    for (k, &(line, off)) in lines[m + 1..].iter().enumerate() {
        let p = parse_row(line, 3, m + k + 2, off)?;
        positions.push([p[0], p[1], p[2]]);
    }
    LeadField::new(DMatrix::from_row_slice(m, n, &values), positions)
}

/// Load either format: binary when the file starts with the magic bytes, CSV otherwise.
pub fn load_leadfield(path: &Path) -> Result<LeadField> {
    let bytes = read(path)?;
    if bytes.starts_with(LEADFIELD_MAGIC) || path.extension().is_some_and(|e| e == "bin" || e == "lf") {
        return decode_leadfield(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::Format {
        offset: e.utf8_error().valid_up_to() as u64,
        reason: "neither a binary lead field nor UTF-8 CSV".into(),
    })?;
    parse_leadfield_csv(&text)
}

pub fn scenario_to_toml(scenario: &Scenario) -> Result<String> {
    toml::to_string(scenario).map_err(|e| Error::Serde(e.to_string()))
}

pub fn scenario_from_toml(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    write(path, scenario_to_toml(scenario)?.as_bytes())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))?;
    scenario_from_toml(&text)
}

/// Recording as CSV: header `step,time_ms,ch0,…`, one row per filter step at the step
/// centre time. Values use the shortest representation that parses back exactly.
pub fn recording_to_csv(y: &DMatrix<f64>, duration_ms: f64) -> String {
    let (t_len, m) = y.shape();
    let mut s = String::from("step,time_ms");
    for c in 0..m {
        s.push_str(&format!(",ch{c}"));
    }
    s.push('\n');
    let dt = duration_ms / t_len as f64;
    for t in 0..t_len {
        s.push_str(&format!("{t},{}", (t as f64 + 0.5) * dt));
        for c in 0..m {
            s.push_str(&format!(",{}", y[(t, c)]));
        }
        s.push('\n');
    }
    s
}

pub fn save_recording_csv(path: &Path, y: &DMatrix<f64>, duration_ms: f64) -> Result<()> {
    write(path, recording_to_csv(y, duration_ms).as_bytes())
}

pub fn parse_recording_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format {
        offset: 0,
        reason: "empty recording".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "step" || cols[1] != "time_ms" {
        return Err(Error::Format {
            offset: 0,
            reason: "recording header must start with 'step,time_ms,ch0'".into(),
        });
    }
    let m = cols.len() - 2;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut offset = header.len() + 1;
    for (k, line) in lines.enumerate() {
        let row = parse_row(line, m + 2, k + 2, offset)?;
        if row[0] as usize != rows {
            return Err(Error::Format {
                offset: offset as u64,
                reason: format!("expected step {rows}, found {}", row[0]),
            });
        }
        values.extend_from_slice(&row[2..]);
        rows += 1;
        offset += line.len() + 1;
    }
    Ok(DMatrix::from_row_slice(rows, m, &values))
}

pub fn load_recording_csv(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))?;
    parse_recording_csv(&text)
}

/// Filter settings of one method as they were run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub name: String,
    pub order: usize,
    pub smoothed: bool,
    pub phi: f64,
    pub p: f64,
    pub theta: f64,
    pub diag_floor: f64,
    /// Length of one filter step in the kinematic model's time unit.
    pub model_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

/// Output of one (method, SNR, realization) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub snr_db: f64,
    pub realization: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    #[serde(flatten)]
    pub status: CellStatus,
    /// Activity block of the standardized state, one row of `n` values per step.
    pub z_activity: Vec<Vec<f64>>,
    /// Full standardized states, only kept on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_full: Option<Vec<Vec<f64>>>,
    /// Source index of the largest standardized magnitude at each step.
    pub argmax: Vec<usize>,
}

/// One scalar of a metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub table: String,
    pub method: String,
    pub snr_db: f64,
    pub statistic: String,
    /// `None` marks a gap, e.g. every run of the group failed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsContainer {
    pub format_version: u32,
    pub scenario: Scenario,
    pub leadfield_sha256: String,
    pub methods: Vec<MethodSettings>,
    pub cells: Vec<CellRecord>,
    pub tables: Vec<MetricRow>,
}

impl ResultsContainer {
    pub fn new(scenario: Scenario, leadfield_sha256: String, methods: Vec<MethodSettings>) -> Self {
        Self {
            format_version: RESULTS_FORMAT_VERSION,
            scenario,
            leadfield_sha256,
            methods,
            cells: Vec::new(),
            tables: Vec::new(),
        }
    }
}

/// `DSKF-RESULTS v<version> sha256:<hex of payload>\n` followed by the JSON payload.
pub fn encode_results(container: &ResultsContainer) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(container).map_err(|e| Error::Serde(e.to_string()))?;
    let mut out = format!(
        "{RESULTS_MAGIC} v{} sha256:{}\n",
        container.format_version,
        sha256_hex(&payload)
    )
    .into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_results(bytes: &[u8]) -> Result<ResultsContainer> {
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format {
        offset: 0,
        reason: "missing results header".into(),
    })?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Format {
        offset: 0,
        reason: "results header is not UTF-8".into(),
    })?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 || parts[0] != RESULTS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "not a results container".into(),
        });
    }
    let version: u32 = parts[1]
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format {
            offset: RESULTS_MAGIC.len() as u64 + 1,
            reason: format!("bad version field '{}'", parts[1]),
        })?;
    if version != RESULTS_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: RESULTS_FORMAT_VERSION,
        });
    }
    let stored = parts[2].strip_prefix("sha256:").unwrap_or_default();
    let payload = &bytes[newline + 1..];
    let computed = sha256_hex(payload);
    if stored != computed {
        return Err(Error::Checksum {
            stored: stored.to_string(),
            computed,
        });
    }
    let container: ResultsContainer =
        serde_json::from_slice(payload).map_err(|e| Error::Serde(e.to_string()))?;
    if container.format_version != version {
        return Err(Error::Format {
            offset: (newline + 1) as u64,
            reason: "header and payload disagree on the format version".into(),
        });
    }
    Ok(container)
}

pub fn save_results(path: &Path, container: &ResultsContainer) -> Result<()> {
    write(path, &encode_results(container)?)
}

pub fn load_results(path: &Path) -> Result<ResultsContainer> {
    decode_results(&read(path)?)
}

/// Write `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write(path, bytes)
}
