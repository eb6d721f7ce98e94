//! Ring-oscillator frequency fingerprints: device layout, per-path
//! frequency grids and their on-disk form.
//!
//! A fingerprint lives in two files sharing a stem: a JSON layout manifest
//! (`<stem>.json`) and a measurement CSV (`<stem>.csv`, header
//! `path,col,row,freq_mhz`). Frequencies are written with Rust's shortest
//! round-trip float formatting, so a write/read cycle is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ulsif::SampleVector;

pub const CSV_HEADER: &str = "path,col,row,freq_mhz";

/// Inclusive range of CLB column indices between two barriers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct ColumnGroup {
    pub start: usize,
    pub end: usize,
}

impl ColumnGroup {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, col: usize) -> bool {
        (self.start..=self.end).contains(&col)
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

impl From<[usize; 2]> for ColumnGroup {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<ColumnGroup> for [usize; 2] {
    fn from(g: ColumnGroup) -> Self {
        [g.start, g.end]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLayout {
    pub rows: usize,
    pub column_groups: Vec<ColumnGroup>,
    /// LUT input count `z`; the device exposes `2^(z-1)` paths.
    pub lut_inputs: u32,
    pub ro_stages: u32,
}

impl DeviceLayout {
    pub fn new(rows: usize, column_groups: Vec<ColumnGroup>, lut_inputs: u32, ro_stages: u32) -> Result<Self> {
        let layout = Self {
            rows,
            column_groups,
            lut_inputs,
            ro_stages,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// 14 CLB columns in four barrier-separated groups, 94 rows, 6-input
    /// LUTs: 32 paths × 1316 sites = 42,112 ROs and 10 adjacent pairs.
    pub fn reference() -> Self {
        Self {
            rows: 94,
            column_groups: vec![
                ColumnGroup::new(0, 3),
                ColumnGroup::new(5, 7),
                ColumnGroup::new(9, 12),
                ColumnGroup::new(14, 16),
            ],
            lut_inputs: 6,
            ro_stages: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::InvalidParameter("layout needs at least one row".into()));
        }
        if self.lut_inputs == 0 || self.lut_inputs > 16 {
            return Err(Error::InvalidParameter(format!(
                "lut_inputs must be in 1..=16, got {}",
                self.lut_inputs
            )));
        }
        if self.ro_stages == 0 {
            return Err(Error::InvalidParameter("ro_stages must be positive".into()));
        }
        if self.column_groups.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one column group".into()));
        }
        let mut prev_end: Option<usize> = None;
        for g in &self.column_groups {
            if g.start > g.end {
                return Err(Error::InvalidParameter(format!(
                    "column group [{}, {}] is empty",
                    g.start, g.end
                )));
            }
            if let Some(p) = prev_end {
                if g.start <= p {
                    return Err(Error::InvalidParameter(format!(
                        "column group [{}, {}] overlaps or precedes column {p}",
                        g.start, g.end
                    )));
                }
            }
            prev_end = Some(g.end);
        }
        Ok(())
    }

    pub fn path_count(&self) -> usize {
        1usize << (self.lut_inputs - 1)
    }

    pub fn column_count(&self) -> usize {
        self.column_groups.iter().map(ColumnGroup::width).sum()
    }

    /// Cells per path.
    pub fn sites(&self) -> usize {
        self.rows * self.column_count()
    }

    pub fn cell_count(&self) -> usize {
        self.sites() * self.path_count()
    }

    /// All populated column indices in ascending order.
    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.column_groups.iter().flat_map(ColumnGroup::columns)
    }

    /// One past the largest column index.
    pub fn column_span(&self) -> usize {
        self.column_groups.last().map_or(0, |g| g.end + 1)
    }

    pub fn has_column(&self, col: usize) -> bool {
        self.column_groups.iter().any(|g| g.contains(col))
    }

    fn group_of(&self, col: usize) -> Option<usize> {
        self.column_groups.iter().position(|g| g.contains(col))
    }

    /// Dense index of a populated column, counting groups left to right.
    pub fn column_slot(&self, col: usize) -> Option<usize> {
        let gi = self.group_of(col)?;
        let before: usize = self.column_groups[..gi].iter().map(ColumnGroup::width).sum();
        Some(before + col - self.column_groups[gi].start)
    }

    /// Whether `col` and `col + 1` are compared (same group).
    pub fn has_right_neighbor(&self, col: usize) -> bool {
        self.group_of(col)
            .is_some_and(|g| col < self.column_groups[g].end)
    }
}

/// Consecutive column pairs within each group; never across a barrier.
pub fn adjacent_pairs(layout: &DeviceLayout) -> Vec<(usize, usize)> {
    layout
        .column_groups
        .iter()
        .flat_map(|g| (g.start..g.end).map(|c| (c, c + 1)))
        .collect()
}

/// Frequencies of one column for one LUT path, ordered by row.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnVector {
    pub path_id: usize,
    pub col: usize,
    pub samples: SampleVector,
}

/// Per-device frequency grid, stored dense as `[path][slot][row]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyFingerprint {
    pub device_id: String,
    layout: DeviceLayout,
    freqs: Vec<f64>,
}

impl FrequencyFingerprint {
    /// Builds a fingerprint from a generator `(path, col, row) -> MHz`.
    pub fn from_fn(
        device_id: impl Into<String>,
        layout: DeviceLayout,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        layout.validate()?;
        let mut freqs = Vec::with_capacity(layout.cell_count());
        for path in 0..layout.path_count() {
            for col in layout.columns() {
                for row in 0..layout.rows {
                    freqs.push(f(path, col, row));
                }
            }
        }
        let fp = Self {
            device_id: device_id.into(),
            layout,
            freqs,
        };
        fp.check_frequencies()?;
        Ok(fp)
    }

    fn check_frequencies(&self) -> Result<()> {
        for (path, col, row, v) in self.cells() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidFrequency {
                    path_id: path,
                    col,
                    row,
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> &DeviceLayout {
        &self.layout
    }

    fn offset(&self, path: usize, col: usize) -> Result<usize> {
        if path >= self.layout.path_count() {
            return Err(Error::Index(format!(
                "path {path} out of range (device has {} paths)",
                self.layout.path_count()
            )));
        }
        let slot = self
            .layout
            .column_slot(col)
            .ok_or_else(|| Error::Index(format!("column {col} is not inside any column group")))?;
        Ok((path * self.layout.column_count() + slot) * self.layout.rows)
    }

    pub fn get(&self, path: usize, col: usize, row: usize) -> Result<f64> {
        if row >= self.layout.rows {
            return Err(Error::Index(format!("row {row} out of range")));
        }
        Ok(self.freqs[self.offset(path, col)? + row])
    }

    /// Row-ordered frequencies of one column.
    pub fn column(&self, path: usize, col: usize) -> Result<&[f64]> {
        let start = self.offset(path, col)?;
        Ok(&self.freqs[start..start + self.layout.rows])
    }

    pub fn column_vector(&self, path: usize, col: usize) -> Result<ColumnVector> {
        Ok(ColumnVector {
            path_id: path,
            col,
            samples: SampleVector::new(self.column(path, col)?.to_vec())?,
        })
    }

    /// Every cell as `(path, col, row, MHz)` in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let rows = self.layout.rows;
        let cols: Vec<usize> = self.layout.columns().collect();
        let per_path = cols.len() * rows;
        self.freqs.iter().enumerate().map(move |(i, &v)| {
            let path = i / per_path;
            let rem = i % per_path;
            (path, cols[rem / rows], rem % rows, v)
        })
    }

    /// All frequencies of one path (every column, every row).
    pub fn path_values(&self, path: usize) -> Result<&[f64]> {
        if path >= self.layout.path_count() {
            return Err(Error::Index(format!("path {path} out of range")));
        }
        let per_path = self.layout.sites();
        Ok(&self.freqs[path * per_path..(path + 1) * per_path])
    }

    /// Applies `f(path, col, row, old) -> new` to every cell.
    pub fn map_cells(&self, mut f: impl FnMut(usize, usize, usize, f64) -> f64) -> Result<Self> {
        let freqs = self
            .cells()
            .map(|(p, c, r, v)| f(p, c, r, v))
            .collect();
        let fp = Self {
            device_id: self.device_id.clone(),
            layout: self.layout.clone(),
            freqs,
        };
        fp.check_frequencies()?;
        Ok(fp)
    }

    pub fn with_device_id(mut self, id: impl Into<String>) -> Self {
        self.device_id = id.into();
        self
    }
}

/// JSON layout manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutManifest {
    pub device_id: String,
    pub rows: usize,
    pub column_groups: Vec<ColumnGroup>,
    pub lut_inputs: u32,
    pub ro_stages: u32,
}

impl LayoutManifest {
    pub fn layout(&self) -> DeviceLayout {
        DeviceLayout {
            rows: self.rows,
            column_groups: self.column_groups.clone(),
            lut_inputs: self.lut_inputs,
            ro_stages: self.ro_stages,
        }
    }
}

/// Manifest path belonging to a measurement CSV (same stem, `.json`).
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Measurement CSV path belonging to a manifest or bare stem.
pub fn measurement_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn read_layout_manifest(path: &Path) -> Result<LayoutManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedJson {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads the measurement CSV at `csv_path` together with its manifest.
pub fn read_fingerprint(csv_path: &Path) -> Result<FrequencyFingerprint> {
    let csv_path = measurement_path(csv_path);
    let file = File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let manifest_file = manifest_path(&csv_path);
    let manifest = read_layout_manifest(&manifest_file)?;
    let layout = manifest.layout();
    layout.validate().map_err(|e| Error::LayoutMismatch(format!(
        "{}: {e}",
        manifest_file.display()
    )))?;

    let malformed = |message: String| Error::MalformedCsv {
        path: csv_path.clone(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(malformed(format!(
            "expected header `{CSV_HEADER}`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != 4 {
            return Err(malformed(format!("data row {} has {} fields", line + 1, record.len())));
        }
        let idx = |k: usize, name: &str| -> Result<usize> {
            record[k].trim().parse::<usize>().map_err(|e| {
                malformed(format!("data row {}: bad {name} `{}`: {e}", line + 1, &record[k]))
            })
        };
        let path_id = idx(0, "path")?;
        let col = idx(1, "col")?;
        let row = idx(2, "row")?;
        let freq: f64 = record[3].trim().parse().map_err(|e| {
            malformed(format!("data row {}: bad freq_mhz `{}`: {e}", line + 1, &record[3]))
        })?;
        if path_id >= layout.path_count() || !layout.has_column(col) || row >= layout.rows {
            return Err(Error::LayoutMismatch(format!(
                "cell path={path_id} col={col} row={row} lies outside the manifest layout"
            )));
        }
        if !(freq.is_finite() && freq > 0.0) {
            return Err(Error::InvalidFrequency {
                path_id,
                col,
                row,
                value: freq,
            });
        }
        if cells.insert((path_id, col, row), freq).is_some() {
            return Err(Error::DuplicateCell { path_id, col, row });
        }
    }

    let mut missing = None;
    let fp = FrequencyFingerprint::from_fn(manifest.device_id, layout, |p, c, r| {
        match cells.get(&(p, c, r)) {
            Some(v) => *v,
            None => {
                missing.get_or_insert((p, c, r));
                1.0
            }
        }
    })?;
    if let Some((path_id, col, row)) = missing {
        return Err(Error::MissingCell { path_id, col, row });
    }
    Ok(fp)
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_fingerprint(fp: &FrequencyFingerprint, csv_path: &Path) -> Result<()> {
    let csv_path = measurement_path(csv_path);
    let manifest_file = manifest_path(&csv_path);
    let manifest = LayoutManifest {
        device_id: fp.device_id.clone(),
        rows: fp.layout.rows,
        column_groups: fp.layout.column_groups.clone(),
        lut_inputs: fp.layout.lut_inputs,
        ro_stages: fp.layout.ro_stages,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_file, json + "\n").map_err(|e| Error::io(&manifest_file, e))?;

    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(&csv_path, e);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for (p, c, r, v) in fp.cells() {
        writeln!(out, "{p},{c},{r},{v}").map_err(io)?;
    }
    out.flush().map_err(io)
}
