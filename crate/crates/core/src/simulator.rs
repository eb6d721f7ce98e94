//! Synthetic fingerprints with systematic + random process variation and
//! localized aging.
//!
//! Every device draws from its own `ChaCha8Rng` stream seeded with
//! [`device_seed`]. Within a stream the draw order is fixed: one uniform
//! per systematic coefficient (lot jitter), then one standard normal per
//! cell in storage order (path, column, row).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{DeviceLayout, FrequencyFingerprint};

/// One monomial `coeff · x^x_pow · y^y_pow` of the systematic surface,
/// with `x` the physical column index and `y` the row index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub x_pow: u32,
    pub y_pow: u32,
    pub coeff: f64,
}

impl PolyTerm {
    pub fn new(x_pow: u32, y_pow: u32, coeff: f64) -> Self {
        Self { x_pow, y_pow, coeff }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.coeff * x.powi(self.x_pow as i32) * y.powi(self.y_pow as i32)
    }
}

pub fn eval_poly(terms: &[PolyTerm], x: f64, y: f64) -> f64 {
    terms.iter().map(|t| t.eval(x, y)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationModel {
    pub nominal_freq_mhz: f64,
    /// Per-path offsets; empty means zero for every path.
    #[serde(default)]
    pub path_offsets_mhz: Vec<f64>,
    #[serde(default)]
    pub systematic: Vec<PolyTerm>,
    pub random_sigma_mhz: f64,
    /// Relative half-width of the uniform per-device jitter applied to each
    /// systematic coefficient.
    #[serde(default)]
    pub lot_jitter: f64,
}

impl VariationModel {
    pub fn validate(&self, layout: &DeviceLayout) -> Result<()> {
        if !(self.nominal_freq_mhz.is_finite() && self.nominal_freq_mhz > 0.0) {
            return Err(Error::InvalidParameter("nominal frequency must be positive".into()));
        }
        if !(self.random_sigma_mhz.is_finite() && self.random_sigma_mhz >= 0.0) {
            return Err(Error::InvalidParameter("random sigma must be non-negative".into()));
        }
        if !(self.lot_jitter.is_finite() && (0.0..1.0).contains(&self.lot_jitter)) {
            return Err(Error::InvalidParameter("lot jitter must be in [0, 1)".into()));
        }
        if !self.path_offsets_mhz.is_empty() && self.path_offsets_mhz.len() != layout.path_count() {
            return Err(Error::InvalidParameter(format!(
                "{} path offsets given for {} paths",
                self.path_offsets_mhz.len(),
                layout.path_count()
            )));
        }
        Ok(())
    }

    pub fn path_offset(&self, path: usize) -> f64 {
        self.path_offsets_mhz.get(path).copied().unwrap_or(0.0)
    }
}

/// Stream seed for device `index` under a cohort seed.
pub fn device_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_fresh(
    device_id: impl Into<String>,
    layout: &DeviceLayout,
    vm: &VariationModel,
    seed: u64,
) -> Result<FrequencyFingerprint> {
    layout.validate()?;
    vm.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surface: Vec<PolyTerm> = vm
        .systematic
        .iter()
        .map(|t| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            PolyTerm {
                coeff: t.coeff * (1.0 + vm.lot_jitter * u),
                ..*t
            }
        })
        .collect();
    let sigma = vm.random_sigma_mhz;
    FrequencyFingerprint::from_fn(device_id, layout.clone(), |path, col, row| {
        let noise: f64 = rng.sample(StandardNormal);
        vm.nominal_freq_mhz
            + vm.path_offset(path)
            + eval_poly(&surface, col as f64, row as f64)
            + sigma * noise
    })
}

/// Arrhenius acceleration between stress and operating temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub activation_energy_ev: f64,
    pub boltzmann_ev_per_k: f64,
    pub t_op_kelvin: f64,
    pub t_stress_kelvin: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            activation_energy_ev: 0.5,
            boltzmann_ev_per_k: 8.62e-5,
            t_op_kelvin: 313.0,
            t_stress_kelvin: 408.0,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.activation_energy_ev,
            self.boltzmann_ev_per_k,
            self.t_op_kelvin,
            self.t_stress_kelvin,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::InvalidParameter("thermal parameters must be positive".into()));
        }
        if self.t_stress_kelvin < self.t_op_kelvin {
            return Err(Error::InvalidParameter(
                "stress temperature must not be below operating temperature".into(),
            ));
        }
        Ok(())
    }

    /// Equivalent operating days for `stress_hours` at stress temperature.
    pub fn equivalent_days(&self, stress_hours: f64) -> Result<f64> {
        Ok(stress_hours * thermal_acceleration_factor(self)? / 24.0)
    }
}

/// `exp((E_a / k) (1/T_op − 1/T_stress))`.
pub fn thermal_acceleration_factor(p: &ThermalParams) -> Result<f64> {
    p.validate()?;
    let exponent = (p.activation_energy_ev / p.boltzmann_ev_per_k) * (1.0 / p.t_op_kelvin - 1.0 / p.t_stress_kelvin);
    Ok(exponent.exp())
}

/// Inclusive rectangle in (physical column, row) coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub col_min: usize,
    pub col_max: usize,
    pub row_min: usize,
    pub row_max: usize,
}

impl Region {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        (self.col_min..=self.col_max).contains(&col) && (self.row_min..=self.row_max).contains(&row)
    }

    /// Euclidean distance from a cell to the rectangle (0 inside).
    pub fn distance(&self, col: usize, row: usize) -> f64 {
        let gap = |v: usize, lo: usize, hi: usize| {
            if v < lo {
                (lo - v) as f64
            } else if v > hi {
                (v - hi) as f64
            } else {
                0.0
            }
        };
        let dx = gap(col, self.col_min, self.col_max);
        let dy = gap(row, self.row_min, self.row_max);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Fraction of the reference-time degradation reached after `t` hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgingProfile {
    /// `clamp(t / reference_hours, 0, max_fraction)`.
    Linear { reference_hours: f64, max_fraction: f64 },
}

impl Default for AgingProfile {
    fn default() -> Self {
        AgingProfile::Linear {
            reference_hours: 6.0,
            max_fraction: 1.5,
        }
    }
}

impl AgingProfile {
    pub fn fraction(&self, hours: f64) -> f64 {
        match *self {
            AgingProfile::Linear {
                reference_hours,
                max_fraction,
            } => (hours / reference_hours).clamp(0.0, max_fraction),
        }
    }
}

fn default_magnitude() -> f64 {
    6.0
}

fn default_falloff() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingSpec {
    pub region: Region,
    pub stress_hours: f64,
    /// Drop at the region core after the profile's reference time (MHz).
    #[serde(default = "default_magnitude")]
    pub magnitude_at_6h: f64,
    /// Raised-cosine taper width in cells; 1 or less gives a sharp edge.
    #[serde(default = "default_falloff")]
    pub falloff: f64,
    #[serde(default)]
    pub profile: AgingProfile,
    /// Optional per-path multipliers on the drop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_scaling: Option<Vec<f64>>,
    /// Relative standard deviation of per-cell drop variability.
    #[serde(default)]
    pub drop_jitter: f64,
}

impl AgingSpec {
    pub fn new(region: Region, stress_hours: f64) -> Self {
        Self {
            region,
            stress_hours,
            magnitude_at_6h: default_magnitude(),
            falloff: default_falloff(),
            profile: AgingProfile::default(),
            path_scaling: None,
            drop_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.stress_hours) || !ok(self.magnitude_at_6h) || !ok(self.falloff) || !ok(self.drop_jitter) {
            return Err(Error::InvalidParameter(
                "aging hours, magnitude, falloff and jitter must be non-negative".into(),
            ));
        }
        let AgingProfile::Linear {
            reference_hours,
            max_fraction,
        } = self.profile;
        if !(reference_hours > 0.0 && ok(max_fraction)) {
            return Err(Error::InvalidParameter("bad aging profile".into()));
        }
        if self.region.col_min > self.region.col_max || self.region.row_min > self.region.row_max {
            return Err(Error::InvalidRegion(format!("{:?} is empty", self.region)));
        }
        Ok(())
    }

    /// 1 in the core, raised-cosine taper to 0 over `falloff` cells.
    pub fn spatial_weight(&self, col: usize, row: usize) -> f64 {
        let d = self.region.distance(col, row);
        if d == 0.0 {
            1.0
        } else if d < self.falloff {
            0.5 * (1.0 + (std::f64::consts::PI * d / self.falloff).cos())
        } else {
            0.0
        }
    }

    /// Deterministic drop (no jitter) at one cell.
    pub fn drop_at(&self, path: usize, col: usize, row: usize) -> f64 {
        let scale = self
            .path_scaling
            .as_ref()
            .and_then(|s| s.get(path).copied())
            .unwrap_or(1.0);
        self.profile.fraction(self.stress_hours) * self.magnitude_at_6h * self.spatial_weight(col, row) * scale
    }
}

pub fn apply_aging(fp: &FrequencyFingerprint, spec: &AgingSpec, seed: u64) -> Result<FrequencyFingerprint> {
    spec.validate()?;
    let layout = fp.layout();
    let hits = layout
        .columns()
        .any(|c| (0..layout.rows).any(|r| spec.region.contains(c, r)));
    if !hits {
        return Err(Error::InvalidRegion(format!(
            "{:?} does not intersect the device layout",
            spec.region
        )));
    }
    if let Some(s) = &spec.path_scaling {
        if s.len() != layout.path_count() || s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("path scaling must hold one non-negative value per path".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failure = None;
    let aged = fp.map_cells(|p, c, r, v| {
        let mut drop = spec.drop_at(p, c, r);
        if drop == 0.0 {
            return v;
        }
        if spec.drop_jitter > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            drop = (drop * (1.0 + spec.drop_jitter * z)).max(0.0);
        }
        let out = v - drop;
        if out <= 0.0 && failure.is_none() {
            failure = Some((p, c, r));
        }
        out
    });
    if let Some((p, c, r)) = failure {
        return Err(Error::InvalidParameter(format!(
            "aging drop exceeds the frequency at path={p} col={c} row={r}"
        )));
    }
    aged
}
