//! End-to-end evaluation of a fresh cohort against aged devices: uLSIF
//! scoring, ROC per circuit group, verdicts and the clustering baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::baseline::{baseline_detect, BaselineVerdict, RoSelection};
use crate::cohort::BaselineRunConfig;
use crate::detector::{classify, score_device, DetectorConfig, DeviceScore, Verdict};
use crate::error::{Error, Result};
use crate::fingerprint::FrequencyFingerprint;
use crate::report::{
    baseline_csv, residual_csv, residual_map, residual_svg, roc, roc_csv, roc_svg, scores_csv, verdicts_csv,
    write_artifact, RocCurve,
};

/// Group name used when every aged device is pooled.
pub const ALL_AGED: &str = "all";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvaluationConfig {
    pub detector: DetectorConfig,
    /// `None` skips the baseline.
    pub baseline: Option<BaselineRunConfig>,
    /// Fixed threshold for the verdicts; defaults to the best point of the
    /// pooled ROC.
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub devices: Vec<String>,
    pub roc: RocCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub fresh: Vec<DeviceScore>,
    pub aged: Vec<DeviceScore>,
    /// The pooled group first, then one entry per circuit in name order.
    pub groups: Vec<GroupSummary>,
    pub threshold: f64,
    pub verdicts: Vec<Verdict>,
    pub baseline_all: Vec<BaselineVerdict>,
    pub baseline_random: Vec<BaselineVerdict>,
}

impl EvaluationReport {
    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }
}

fn statistics(scores: &[DeviceScore]) -> Vec<f64> {
    scores.iter().map(|s| s.device_statistic).collect()
}

fn run_baseline(
    devices: &[&FrequencyFingerprint],
    selection: &RoSelection,
    cfg: &BaselineRunConfig,
) -> Result<Vec<BaselineVerdict>> {
    devices
        .par_iter()
        .map(|fp| baseline_detect(fp, selection, &cfg.clustering))
        .collect()
}

/// `groups` maps every aged device id to its circuit name.
pub fn evaluate(
    fresh: &[FrequencyFingerprint],
    aged: &[FrequencyFingerprint],
    groups: &BTreeMap<String, String>,
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    if fresh.is_empty() || aged.is_empty() {
        return Err(Error::InvalidInput("evaluation needs fresh and aged devices".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for fp in fresh.iter().chain(aged) {
        if !ids.insert(fp.device_id.as_str()) {
            return Err(Error::InvalidInput(format!("device id {} appears twice", fp.device_id)));
        }
    }
    let score_all = |devs: &[FrequencyFingerprint]| -> Result<Vec<DeviceScore>> {
        devs.iter().map(|fp| score_device(fp, &cfg.detector)).collect()
    };
    let fresh_scores = score_all(fresh)?;
    let aged_scores = score_all(aged)?;
    let fresh_stats = statistics(&fresh_scores);

    let mut members: BTreeMap<&str, Vec<&DeviceScore>> = BTreeMap::new();
    for s in &aged_scores {
        let g = groups.get(&s.device_id).ok_or_else(|| {
            Error::InvalidInput(format!("no circuit group for aged device {}", s.device_id))
        })?;
        members.entry(g.as_str()).or_default().push(s);
    }
    let mut summaries = vec![GroupSummary {
        group: ALL_AGED.to_string(),
        devices: aged_scores.iter().map(|s| s.device_id.clone()).collect(),
        roc: roc(&fresh_stats, &statistics(&aged_scores))?,
    }];
    for (g, list) in members {
        let stats: Vec<f64> = list.iter().map(|s| s.device_statistic).collect();
        summaries.push(GroupSummary {
            group: g.to_string(),
            devices: list.iter().map(|s| s.device_id.clone()).collect(),
            roc: roc(&fresh_stats, &stats)?,
        });
    }

    let threshold = match cfg.threshold {
        Some(t) => t,
        None => summaries[0].roc.best_point().threshold,
    };
    let all_scores: Vec<DeviceScore> = fresh_scores.iter().chain(&aged_scores).cloned().collect();
    let verdicts = classify(&all_scores, threshold)?;

    let (baseline_all, baseline_random) = match &cfg.baseline {
        None => (Vec::new(), Vec::new()),
        Some(b) => {
            let devices: Vec<&FrequencyFingerprint> = fresh.iter().chain(aged).collect();
            let random = RoSelection::Random {
                count: b.random_count,
                seed: b.random_seed,
            };
            (
                run_baseline(&devices, &RoSelection::All, b)?,
                run_baseline(&devices, &random, b)?,
            )
        }
    };

    Ok(EvaluationReport {
        fresh: fresh_scores,
        aged: aged_scores,
        groups: summaries,
        threshold,
        verdicts,
        baseline_all,
        baseline_random,
    })
}

pub fn summary_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("group,devices,auc,best_threshold,best_fpr,best_tpr\n");
    for g in &report.groups {
        let b = g.roc.best_point();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            g.group,
            g.devices.len(),
            g.roc.auc,
            b.threshold,
            b.fpr,
            b.tpr
        );
    }
    s
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the report directory. With `svg`, ROC curves and the residual
/// map of each aged device's highest-scoring path are rendered too.
pub fn write_report(report: &EvaluationReport, aged: &[FrequencyFingerprint], out: &Path, svg: bool) -> Result<()> {
    let scores: Vec<DeviceScore> = report.fresh.iter().chain(&report.aged).cloned().collect();
    write_artifact(&out.join("scores.csv"), &scores_csv(&scores))?;
    write_artifact(&out.join("verdicts.csv"), &verdicts_csv(&report.verdicts))?;
    write_artifact(&out.join("summary.csv"), &summary_csv(report))?;
    for g in &report.groups {
        let stem = if g.group == ALL_AGED {
            "roc".to_string()
        } else {
            format!("roc_{}", file_safe(&g.group))
        };
        write_artifact(&out.join(format!("{stem}.csv")), &roc_csv(&g.roc))?;
        if svg {
            write_artifact(&out.join(format!("{stem}.svg")), &roc_svg(&g.roc))?;
        }
    }
    if !report.baseline_all.is_empty() {
        write_artifact(&out.join("baseline_all.csv"), &baseline_csv(&report.baseline_all))?;
        write_artifact(&out.join("baseline_random.csv"), &baseline_csv(&report.baseline_random))?;
    }
    if svg {
        for (fp, score) in aged.iter().zip(&report.aged) {
            let path = score
                .path_max
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(p, _)| p)
                .unwrap_or(0);
            let map = residual_map(fp, path)?;
            let stem = format!("residual_{}_path{path}", file_safe(&fp.device_id));
            write_artifact(&out.join("heatmaps").join(format!("{stem}.csv")), &residual_csv(&map))?;
            write_artifact(&out.join("heatmaps").join(format!("{stem}.svg")), &residual_svg(&map))?;
        }
    }
    Ok(())
}
