//! Simulation configs and cohort generation: a batch of fresh devices plus
//! aged copies of some of them, written as fingerprint directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::fingerprint::{read_fingerprint, write_fingerprint, DeviceLayout, FrequencyFingerprint};
use crate::simulator::{apply_aging, device_seed, generate_fresh, AgingProfile, AgingSpec, Region, VariationModel};

/// File in an aged directory listing circuit and stress time per device.
pub const COHORT_MANIFEST: &str = "cohort.json";

/// Salt that separates aging-jitter streams from device streams.
const AGING_STREAM: u64 = 0xA6E0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub name: String,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgedDeviceSpec {
    /// Index into the fresh cohort of the device that gets aged.
    pub base_device: usize,
    pub circuit: String,
    pub stress_hours: f64,
}

/// Aging parameters shared by every aged device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingDefaults {
    pub magnitude_at_6h: f64,
    pub falloff: f64,
    pub profile: AgingProfile,
    pub drop_jitter: f64,
}

impl Default for AgingDefaults {
    fn default() -> Self {
        let spec = AgingSpec::new(
            Region {
                col_min: 0,
                col_max: 0,
                row_min: 0,
                row_max: 0,
            },
            0.0,
        );
        Self {
            magnitude_at_6h: spec.magnitude_at_6h,
            falloff: spec.falloff,
            profile: spec.profile,
            drop_jitter: spec.drop_jitter,
        }
    }
}

/// How the baseline picks its ROs in `evaluate`. Unknown keys are not
/// rejected here because serde cannot combine that with flattening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineRunConfig {
    #[serde(flatten)]
    pub clustering: BaselineConfig,
    pub random_count: usize,
    pub random_seed: u64,
}

impl Default for BaselineRunConfig {
    fn default() -> Self {
        Self {
            clustering: BaselineConfig::default(),
            random_count: 265,
            random_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub layout: DeviceLayout,
    pub variation: VariationModel,
    pub fresh_devices: usize,
    #[serde(default)]
    pub aging: AgingDefaults,
    #[serde(default)]
    pub circuits: Vec<CircuitSpec>,
    #[serde(default)]
    pub aged: Vec<AgedDeviceSpec>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub baseline: BaselineRunConfig,
}

/// One entry of [`COHORT_MANIFEST`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgedRecord {
    pub device_id: String,
    pub base_device_id: String,
    pub circuit: String,
    pub stress_hours: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub fresh: Vec<FrequencyFingerprint>,
    pub aged: Vec<FrequencyFingerprint>,
    pub records: Vec<AgedRecord>,
}

/// `FPGA-01`, `FPGA-02`, ... (two digits minimum, 1-based).
pub fn device_name(index: usize) -> String {
    format!("FPGA-{:02}", index + 1)
}

/// `FPGA-01-s9234-6h` for a 6 h run of circuit `s9234` on `FPGA-01`.
pub fn aged_device_name(base: &str, circuit: &str, hours: f64) -> String {
    format!("{base}-{circuit}-{hours}h")
}

impl SimulationConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::MalformedJson {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn circuit(&self, name: &str) -> Option<&CircuitSpec> {
        self.circuits.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.variation.validate(&self.layout)?;
        self.detector.validate()?;
        if self.fresh_devices == 0 {
            return Err(Error::InvalidParameter("fresh_devices must be positive".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.circuits {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidParameter(format!("circuit `{}` defined twice", c.name)));
            }
            self.aging_spec(&c.region, 0.0).validate()?;
        }
        let mut bases = std::collections::BTreeSet::new();
        for a in &self.aged {
            if a.base_device >= self.fresh_devices {
                return Err(Error::InvalidParameter(format!(
                    "aged device base {} outside the {} fresh devices",
                    a.base_device, self.fresh_devices
                )));
            }
            if !bases.insert(a.base_device) {
                return Err(Error::InvalidParameter(format!(
                    "fresh device {} is aged twice",
                    a.base_device
                )));
            }
            if self.circuit(&a.circuit).is_none() {
                return Err(Error::InvalidParameter(format!("unknown circuit `{}`", a.circuit)));
            }
            if !(a.stress_hours.is_finite() && a.stress_hours >= 0.0) {
                return Err(Error::InvalidParameter("stress hours must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn aging_spec(&self, region: &Region, hours: f64) -> AgingSpec {
        AgingSpec {
            region: *region,
            stress_hours: hours,
            magnitude_at_6h: self.aging.magnitude_at_6h,
            falloff: self.aging.falloff,
            profile: self.aging.profile,
            path_scaling: None,
            drop_jitter: self.aging.drop_jitter,
        }
    }

    pub fn generate_fresh_device(&self, index: usize) -> Result<FrequencyFingerprint> {
        generate_fresh(
            device_name(index),
            &self.layout,
            &self.variation,
            device_seed(self.seed, index as u64),
        )
    }

    /// Fresh devices in index order, then aged copies in config order.
    pub fn generate_cohort(&self) -> Result<Cohort> {
        self.validate()?;
        let fresh = (0..self.fresh_devices)
            .map(|i| self.generate_fresh_device(i))
            .collect::<Result<Vec<_>>>()?;
        let mut aged = Vec::with_capacity(self.aged.len());
        let mut records = Vec::with_capacity(self.aged.len());
        for a in &self.aged {
            let circuit = self.circuit(&a.circuit).expect("validated");
            let spec = self.aging_spec(&circuit.region, a.stress_hours);
            let base = &fresh[a.base_device];
            let seed = device_seed(self.seed ^ AGING_STREAM, a.base_device as u64);
            let id = aged_device_name(&base.device_id, &a.circuit, a.stress_hours);
            aged.push(apply_aging(base, &spec, seed)?.with_device_id(id.clone()));
            records.push(AgedRecord {
                device_id: id,
                base_device_id: base.device_id.clone(),
                circuit: a.circuit.clone(),
                stress_hours: a.stress_hours,
            });
        }
        Ok(Cohort { fresh, aged, records })
    }
}

/// Writes `<out>/fresh/*.{csv,json}` and `<out>/aged/*.{csv,json}` plus the
/// aged cohort manifest.
pub fn write_cohort(cohort: &Cohort, out: &Path) -> Result<()> {
    let fresh_dir = out.join("fresh");
    let aged_dir = out.join("aged");
    for d in [&fresh_dir, &aged_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for fp in &cohort.fresh {
        write_fingerprint(fp, &fresh_dir.join(format!("{}.csv", fp.device_id)))?;
    }
    for fp in &cohort.aged {
        write_fingerprint(fp, &aged_dir.join(format!("{}.csv", fp.device_id)))?;
    }
    let manifest = aged_dir.join(COHORT_MANIFEST);
    let json = serde_json::to_string_pretty(&cohort.records).expect("records serialize");
    std::fs::write(&manifest, json + "\n").map_err(|e| Error::io(&manifest, e))
}

/// Measurement CSVs of a directory, sorted by file name.
pub fn list_fingerprints(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no fingerprint CSVs in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

pub fn read_fingerprint_dir(dir: &Path) -> Result<Vec<FrequencyFingerprint>> {
    list_fingerprints(dir)?.iter().map(|p| read_fingerprint(p)).collect()
}

/// Circuit name per aged device id. Without a manifest every device falls
/// into one group called `aged`.
pub fn read_aged_groups(dir: &Path, devices: &[FrequencyFingerprint]) -> Result<BTreeMap<String, String>> {
    let manifest = dir.join(COHORT_MANIFEST);
    if !manifest.exists() {
        return Ok(devices
            .iter()
            .map(|d| (d.device_id.clone(), "aged".to_string()))
            .collect());
    }
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let records: Vec<AgedRecord> = serde_json::from_str(&text).map_err(|e| Error::MalformedJson {
        path: manifest.clone(),
        message: e.to_string(),
    })?;
    let groups: BTreeMap<String, String> = records
        .into_iter()
        .map(|r| (r.device_id, r.circuit))
        .collect();
    if let Some(d) = devices.iter().find(|d| !groups.contains_key(&d.device_id)) {
        return Err(Error::InvalidInput(format!(
            "{} lists no circuit for device {}",
            manifest.display(),
            d.device_id
        )));
    }
    Ok(groups)
}
