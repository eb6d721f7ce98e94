//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on any validation or I/O error, 2 when `detect
//! --fail-on-recycled` flags the device.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_detect, BaselineConfig, RoSelection};
use crate::cohort::{read_aged_groups, read_fingerprint_dir, write_cohort, BaselineRunConfig, SimulationConfig};
use crate::detector::{classify_statistic, score_device, DetectorConfig, Direction, Label};
use crate::error::{Error, Result};
use crate::fingerprint::read_fingerprint;
use crate::pipeline::{evaluate, summary_csv, write_report, EvaluationConfig};
use crate::report::{
    baseline_csv, frequency_csv, frequency_svg, residual_csv, residual_map, residual_svg, scores_csv,
    write_artifact, VERDICTS_HEADER,
};
use crate::ulsif::UlsifModel;

/// Exit code of `detect --fail-on-recycled` when the device is flagged.
pub const EXIT_RECYCLED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ulsif-fpga", version, about = "Recycled FPGA detection from RO frequency fingerprints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a fresh and aged fingerprint cohort from a simulation config.
    Simulate(SimulateArgs),
    /// Score one fingerprint and optionally classify it.
    Detect(DetectArgs),
    /// Run the k-means++/silhouette baseline on one fingerprint.
    Baseline(BaselineArgs),
    /// Score a fresh and an aged cohort and write the report directory.
    Evaluate(EvaluateArgs),
    /// Write the frequency or residual map of one path.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; receives `fresh/` and `aged/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Fingerprint CSV (its layout JSON must sit next to it).
    #[arg(long)]
    pub fingerprint: PathBuf,
    /// Recycled iff the device statistic is strictly above this value.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Config whose `detector` section overrides the default uLSIF grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write per-comparison maximum scores to this CSV.
    #[arg(long)]
    pub dump_scores: Option<PathBuf>,
    /// Write every selected model (centers, bandwidth, lambda, alpha) to this JSON file.
    #[arg(long)]
    pub dump_model: Option<PathBuf>,
    /// Exit with code 2 when the device is classified recycled. Needs --threshold.
    #[arg(long, requires = "threshold")]
    pub fail_on_recycled: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Fingerprint CSV.
    #[arg(long)]
    pub fingerprint: PathBuf,
    /// Cluster only this many randomly chosen ROs per path. Needs --seed.
    #[arg(long, requires = "seed")]
    pub select: Option<usize>,
    /// Seed of the random RO selection.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the k-means++ initialisation.
    #[arg(long, default_value_t = 0)]
    pub kmeans_seed: u64,
    /// Smallest candidate cluster count.
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    /// Largest candidate cluster count.
    #[arg(long, default_value_t = 4)]
    pub k_max: usize,
    /// Write the silhouette table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of fresh fingerprints.
    #[arg(long)]
    pub fresh_dir: PathBuf,
    /// Directory of aged fingerprints, optionally with a cohort.json manifest.
    #[arg(long)]
    pub aged_dir: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Config whose `detector` and `baseline` sections are used; a
    /// simulation config works as is.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixed verdict threshold instead of the best point of the pooled ROC.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Also render SVG ROC curves and residual heatmaps.
    #[arg(long)]
    pub svg: bool,
    /// Skip the clustering baseline.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Fingerprint CSV.
    #[arg(long)]
    pub fingerprint: PathBuf,
    /// Path index.
    #[arg(long)]
    pub path: usize,
    /// Map left-minus-right column residuals instead of raw frequencies.
    #[arg(long)]
    pub residual: bool,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render the map as SVG to this file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// The sections of a config file the analysis subcommands read. Other
/// keys, such as those of a simulation config, are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub detector: DetectorConfig,
    pub baseline: BaselineRunConfig,
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::MalformedJson {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.detector.validate()?;
        cfg.baseline.clustering.validate()?;
        Ok(cfg)
    }

    fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[derive(Serialize)]
struct ModelDump<'a> {
    path: usize,
    col_left: usize,
    col_right: usize,
    direction: Direction,
    model: &'a UlsifModel,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Detect(a) => detect(&a),
        Command::Baseline(a) => baseline(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Heatmap(a) => heatmap(&a),
    }
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_artifact(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<i32> {
    let cfg = SimulationConfig::load(&a.config)?;
    let cohort = cfg.generate_cohort()?;
    write_cohort(&cohort, &a.out)?;
    eprintln!(
        "wrote {} fresh and {} aged fingerprints to {}",
        cohort.fresh.len(),
        cohort.aged.len(),
        a.out.display()
    );
    Ok(0)
}

fn detect(a: &DetectArgs) -> Result<i32> {
    if let Some(t) = a.threshold.filter(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("threshold must be finite, got {t}")));
    }
    let cfg = AnalysisConfig::load_or_default(a.config.as_deref())?;
    let fp = read_fingerprint(&a.fingerprint)?;
    let score = score_device(&fp, &cfg.detector)?;
    if let Some(path) = &a.dump_scores {
        write_artifact(path, &scores_csv(std::slice::from_ref(&score)))?;
    }
    if let Some(path) = &a.dump_model {
        let dumps: Vec<ModelDump> = score
            .comparisons
            .iter()
            .flat_map(|c| {
                c.directions().map(|d| ModelDump {
                    path: c.path_id,
                    col_left: c.pair.0,
                    col_right: c.pair.1,
                    direction: d.direction,
                    model: &d.model,
                })
            })
            .collect();
        let json = serde_json::to_string_pretty(&dumps).expect("models serialize");
        write_artifact(path, &(json + "\n"))?;
    }
    let mut out = String::new();
    let label = a.threshold.map(|t| classify_statistic(score.device_statistic, t));
    match (a.threshold, label) {
        (Some(t), Some(l)) => {
            let _ = writeln!(out, "{VERDICTS_HEADER}\n{},{},{t},{l}", score.device_id, score.device_statistic);
        }
        _ => {
            let _ = writeln!(out, "device,statistic\n{},{}", score.device_id, score.device_statistic);
        }
    }
    print!("{out}");
    if a.fail_on_recycled && label == Some(Label::Recycled) {
        eprintln!("{} classified recycled", score.device_id);
        return Ok(EXIT_RECYCLED);
    }
    Ok(0)
}

fn baseline(a: &BaselineArgs) -> Result<i32> {
    let cfg = BaselineConfig {
        k_min: a.k_min,
        k_max: a.k_max,
        kmeans_seed: a.kmeans_seed,
        ..BaselineConfig::default()
    };
    cfg.validate()?;
    let selection = match a.select {
        Some(count) => RoSelection::Random {
            count,
            seed: a.seed.expect("clap enforces --seed with --select"),
        },
        None => RoSelection::All,
    };
    let fp = read_fingerprint(&a.fingerprint)?;
    let verdict = baseline_detect(&fp, &selection, &cfg)?;
    emit(a.out.as_deref(), &baseline_csv(std::slice::from_ref(&verdict)))?;
    Ok(0)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<i32> {
    if let Some(t) = a.threshold.filter(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("threshold must be finite, got {t}")));
    }
    let cfg = AnalysisConfig::load_or_default(a.config.as_deref())?;
    let fresh = read_fingerprint_dir(&a.fresh_dir)?;
    let aged = read_fingerprint_dir(&a.aged_dir)?;
    let groups = read_aged_groups(&a.aged_dir, &aged)?;
    let eval_cfg = EvaluationConfig {
        detector: cfg.detector,
        baseline: (!a.no_baseline).then_some(cfg.baseline),
        threshold: a.threshold,
    };
    let report = evaluate(&fresh, &aged, &groups, &eval_cfg)?;
    write_report(&report, &aged, &a.out, a.svg)?;
    print!("{}", summary_csv(&report));
    eprintln!("report written to {}", a.out.display());
    Ok(0)
}

fn heatmap(a: &HeatmapArgs) -> Result<i32> {
    let fp = read_fingerprint(&a.fingerprint)?;
    let (csv, svg) = if a.residual {
        let map = residual_map(&fp, a.path)?;
        (residual_csv(&map), residual_svg(&map))
    } else {
        (frequency_csv(&fp, a.path)?, frequency_svg(&fp, a.path)?)
    };
    emit(a.out.as_deref(), &csv)?;
    if let Some(path) = &a.svg {
        write_artifact(path, &svg)?;
    }
    Ok(0)
}
