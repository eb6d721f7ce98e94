//! ROC sweeps, residual maps and the CSV/SVG artifacts built from them.
//!
//! Every renderer returns a `String` so outputs can be compared byte for
//! byte; [`write_artifact`] puts one on disk. Floats use Rust's shortest
//! round-trip formatting, so infinite thresholds print as `inf`/`-inf`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineVerdict;
use crate::detector::{DeviceScore, Verdict};
use crate::error::{Error, Result};
use crate::fingerprint::FrequencyFingerprint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by decreasing threshold, from `+inf` down to `-inf`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// Index into `points` of the best operating point.
    pub best: usize,
}

impl RocCurve {
    pub fn best_point(&self) -> RocPoint {
        self.points[self.best]
    }
}

fn fraction_above(stats: &[f64], threshold: f64) -> f64 {
    stats.iter().filter(|s| **s > threshold).count() as f64 / stats.len() as f64
}

/// Sweeps a threshold over every distinct statistic plus `±inf`. A device
/// counts as positive when its statistic is strictly above the threshold.
/// The best point maximises `TPR - FPR`, preferring the lower FPR on ties.
pub fn roc(fresh: &[f64], aged: &[f64]) -> Result<RocCurve> {
    if fresh.is_empty() || aged.is_empty() {
        return Err(Error::InvalidInput("ROC needs non-empty fresh and aged cohorts".into()));
    }
    if fresh.iter().chain(aged).any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("ROC statistics must not be NaN".into()));
    }
    let mut thresholds: Vec<f64> = fresh.iter().chain(aged).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let points: Vec<RocPoint> = std::iter::once(f64::INFINITY)
        .chain(thresholds)
        .chain(std::iter::once(f64::NEG_INFINITY))
        .map(|t| RocPoint {
            threshold: t,
            fpr: fraction_above(fresh, t),
            tpr: fraction_above(aged, t),
        })
        .collect();
    // trapezoids summed over integer counts and divided once, so that
    // perfectly separated cohorts give exactly 1
    let count = |stats: &[f64], t: f64| stats.iter().filter(|s| **s > t).count() as u128;
    let twice_area: u128 = points
        .windows(2)
        .map(|w| {
            let df = count(fresh, w[1].threshold) - count(fresh, w[0].threshold);
            df * (count(aged, w[1].threshold) + count(aged, w[0].threshold))
        })
        .sum();
    let auc = twice_area as f64 / (2 * fresh.len() as u128 * aged.len() as u128) as f64;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        let b = points[best];
        let (j, jb) = (p.tpr - p.fpr, b.tpr - b.fpr);
        if j > jb || (j == jb && p.fpr < b.fpr) {
            best = i;
        }
    }
    Ok(RocCurve { points, auc, best })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCell {
    pub col: usize,
    pub row: usize,
    pub residual_mhz: f64,
}

/// `freq(col, row) - freq(col + 1, row)` for every column with a right
/// neighbour in its group, stored at the left column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualMap {
    pub path_id: usize,
    /// Ordered by column, then row.
    pub cells: Vec<ResidualCell>,
}

impl ResidualMap {
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.col == col && c.row == row)
            .map(|c| c.residual_mhz)
    }

    /// `(min, max)` over all cells, or `None` for an empty map.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.cells.iter().map(|c| c.residual_mhz).fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

pub fn residual_map(fp: &FrequencyFingerprint, path: usize) -> Result<ResidualMap> {
    let layout = fp.layout();
    if path >= layout.path_count() {
        return Err(Error::Index(format!(
            "path {path} out of range for {} paths",
            layout.path_count()
        )));
    }
    let mut cells = Vec::new();
    for col in layout.columns().filter(|&c| layout.has_right_neighbor(c)) {
        let left = fp.column(path, col)?;
        let right = fp.column(path, col + 1)?;
        cells.extend(left.iter().zip(right).enumerate().map(|(row, (l, r))| ResidualCell {
            col,
            row,
            residual_mhz: l - r,
        }));
    }
    Ok(ResidualMap { path_id: path, cells })
}

pub const ROC_HEADER: &str = "threshold,fpr,tpr";
pub const RESIDUAL_HEADER: &str = "path,col,row,residual_mhz";
pub const SCORES_HEADER: &str = "device,path,col_left,col_right,direction,score";
pub const VERDICTS_HEADER: &str = "device,statistic,threshold,label";

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = format!("{ROC_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

pub fn residual_csv(map: &ResidualMap) -> String {
    let mut s = format!("{RESIDUAL_HEADER}\n");
    for c in &map.cells {
        let _ = writeln!(s, "{},{},{},{}", map.path_id, c.col, c.row, c.residual_mhz);
    }
    s
}

/// One row per comparison direction carrying that direction's maximum
/// score, sorted by device, path and column.
pub fn scores_csv(scores: &[DeviceScore]) -> String {
    let mut sorted: Vec<&DeviceScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.device_id.cmp(&b.device_id));
    let mut s = format!("{SCORES_HEADER}\n");
    for d in sorted {
        for c in &d.comparisons {
            for dir in c.directions() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    d.device_id,
                    c.path_id,
                    c.pair.0,
                    c.pair.1,
                    dir.direction.as_str(),
                    dir.max()
                );
            }
        }
    }
    s
}

pub fn verdicts_csv(verdicts: &[Verdict]) -> String {
    let mut s = format!("{VERDICTS_HEADER}\n");
    for v in verdicts {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            v.device_id, v.device_statistic, v.threshold, v.label
        );
    }
    s
}

/// Silhouette table with one column per tried `k`.
pub fn baseline_csv(verdicts: &[BaselineVerdict]) -> String {
    let ks: Vec<usize> = verdicts
        .first()
        .map(|v| v.silhouettes.iter().map(|(k, _)| *k).collect())
        .unwrap_or_default();
    let mut s = String::from("device,selection");
    for k in &ks {
        let _ = write!(s, ",k{k}");
    }
    s.push_str(",optimal_k,label\n");
    for v in verdicts {
        let _ = write!(s, "{},{}", v.device_id, v.selection);
        for (_, sil) in &v.silhouettes {
            let _ = write!(s, ",{sil}");
        }
        let _ = writeln!(s, ",{},{}", v.optimal_k, v.label);
    }
    s
}

const NEGATIVE_RGB: (u8, u8, u8) = (0x21, 0x66, 0xac);
const POSITIVE_RGB: (u8, u8, u8) = (0xb2, 0x18, 0x2b);

/// Diverging colour for `v` on a scale symmetric around zero: white at 0,
/// `#2166ac` at `-limit`, `#b2182b` at `+limit`, linear in between.
pub fn diverging_color(v: f64, limit: f64) -> String {
    let t = if limit > 0.0 { (v.abs() / limit).min(1.0) } else { 0.0 };
    let end = if v < 0.0 { NEGATIVE_RGB } else { POSITIVE_RGB };
    let mix = |c: u8| (255.0 + (c as f64 - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

const CELL_PX: usize = 8;

/// Paints `(col, row, value)` cells on the diverging scale with a caption
/// line underneath.
fn grid_svg(cells: &[(usize, usize, f64)], limit: f64, caption: &str) -> String {
    let max_col = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let max_row = cells.iter().map(|c| c.1).max().unwrap_or(0);
    let width = (max_col + 1) * CELL_PX;
    let height = (max_row + 1) * CELL_PX + 20;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    for &(col, row, v) in cells {
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{CELL_PX}\" height=\"{CELL_PX}\" fill=\"{}\"/>",
            col * CELL_PX,
            row * CELL_PX,
            diverging_color(v, limit)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"0\" y=\"{}\" font-size=\"10\" font-family=\"monospace\">{caption}</text>",
        height - 6
    );
    s.push_str("</svg>\n");
    s
}

pub fn residual_svg(map: &ResidualMap) -> String {
    let (lo, hi) = map.range().unwrap_or((0.0, 0.0));
    let cells: Vec<(usize, usize, f64)> = map.cells.iter().map(|c| (c.col, c.row, c.residual_mhz)).collect();
    let caption = format!("path {} min {lo:.3} MHz max {hi:.3} MHz", map.path_id);
    grid_svg(&cells, lo.abs().max(hi.abs()), &caption)
}

pub const FREQUENCY_HEADER: &str = "path,col,row,freq_mhz";

fn path_cells(fp: &FrequencyFingerprint, path: usize) -> Result<Vec<(usize, usize, f64)>> {
    let layout = fp.layout();
    if path >= layout.path_count() {
        return Err(Error::Index(format!(
            "path {path} out of range for {} paths",
            layout.path_count()
        )));
    }
    let mut cells = Vec::new();
    for col in layout.columns() {
        cells.extend(fp.column(path, col)?.iter().enumerate().map(|(row, &v)| (col, row, v)));
    }
    Ok(cells)
}

/// Raw frequencies of one path, ordered by column, then row.
pub fn frequency_csv(fp: &FrequencyFingerprint, path: usize) -> Result<String> {
    let mut s = format!("{FREQUENCY_HEADER}\n");
    for (col, row, v) in path_cells(fp, path)? {
        let _ = writeln!(s, "{path},{col},{row},{v}");
    }
    Ok(s)
}

/// Raw frequencies of one path coloured by their deviation from the path
/// mean; the caption prints the absolute range.
pub fn frequency_svg(fp: &FrequencyFingerprint, path: usize) -> Result<String> {
    let cells = path_cells(fp, path)?;
    let mean = cells.iter().map(|c| c.2).sum::<f64>() / cells.len() as f64;
    let (lo, hi) = cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.2), hi.max(c.2)));
    let centred: Vec<(usize, usize, f64)> = cells.iter().map(|&(c, r, v)| (c, r, v - mean)).collect();
    let limit = (lo - mean).abs().max((hi - mean).abs());
    let caption = format!("path {path} min {lo:.3} MHz max {hi:.3} MHz");
    Ok(grid_svg(&centred, limit, &caption))
}

pub fn roc_svg(curve: &RocCurve) -> String {
    const SIZE: f64 = 200.0;
    const PAD: f64 = 20.0;
    let px = |p: &RocPoint| (PAD + p.fpr * SIZE, PAD + (1.0 - p.tpr) * SIZE);
    let total = SIZE + 2.0 * PAD;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\" viewBox=\"0 0 {total} {total}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"#888888\"/>"
    );
    let pts: Vec<String> = curve
        .points
        .iter()
        .map(|p| {
            let (x, y) = px(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#2166ac\" stroke-width=\"2\"/>",
        pts.join(" ")
    );
    let best = curve.best_point();
    let (bx, by) = px(&best);
    let _ = writeln!(s, "<circle cx=\"{bx:.2}\" cy=\"{by:.2}\" r=\"4\" fill=\"#b2182b\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{PAD}\" y=\"14\" font-size=\"10\" font-family=\"monospace\">AUC {:.4} best FPR {:.4} TPR {:.4}</text>",
        curve.auc, best.fpr, best.tpr
    );
    s.push_str("</svg>\n");
    s
}

pub fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
