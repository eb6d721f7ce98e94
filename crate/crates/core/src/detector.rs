//! Self-referencing detection: every adjacent column pair of every LUT path
//! is scored with uLSIF in both directions, and the device statistic is the
//! largest anomaly score seen anywhere on the die.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{adjacent_pairs, FrequencyFingerprint};
use crate::ulsif::{anomaly_scores, AnomalyScores, SampleSource, SampleVector, UlsifConfig, UlsifModel};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub ulsif: UlsifConfig,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.ulsif.validate()
    }
}

/// Which column of a pair plays the inlier role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Left column inlier, right column test.
    Forward,
    /// Right column inlier, left column test.
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

/// Scores of one direction of one comparison, with the selected model.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalScores {
    pub direction: Direction,
    pub model: UlsifModel,
    /// Inlier samples first, then test samples.
    pub scores: AnomalyScores,
}

impl DirectionalScores {
    pub fn max(&self) -> f64 {
        self.scores.max().unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonResult {
    pub path_id: usize,
    pub pair: (usize, usize),
    pub forward: DirectionalScores,
    pub reverse: DirectionalScores,
    pub max_score: f64,
}

impl ComparisonResult {
    pub fn directions(&self) -> [&DirectionalScores; 2] {
        [&self.forward, &self.reverse]
    }
}

fn score_direction(
    inlier: &SampleVector,
    test: &SampleVector,
    direction: Direction,
    cfg: &DetectorConfig,
) -> Result<DirectionalScores> {
    let model = cfg.ulsif.fit(inlier, test)?;
    let mut scores = anomaly_scores(&model, inlier.values(), SampleSource::Inlier)?;
    scores.extend(anomaly_scores(&model, test.values(), SampleSource::Test)?);
    Ok(DirectionalScores {
        direction,
        model,
        scores,
    })
}

/// Scores one adjacent pair of one path in both directions.
pub fn score_pair(
    fp: &FrequencyFingerprint,
    path: usize,
    pair: (usize, usize),
    cfg: &DetectorConfig,
) -> Result<ComparisonResult> {
    let (left, right) = pair;
    if right != left + 1 || !fp.layout().has_right_neighbor(left) {
        return Err(Error::Index(format!(
            "({left}, {right}) is not an adjacent pair inside one column group"
        )));
    }
    let l = fp.column_vector(path, left)?.samples;
    let r = fp.column_vector(path, right)?.samples;
    let forward = score_direction(&l, &r, Direction::Forward, cfg)?;
    let reverse = score_direction(&r, &l, Direction::Reverse, cfg)?;
    let max_score = forward.max().max(reverse.max());
    Ok(ComparisonResult {
        path_id: path,
        pair,
        forward,
        reverse,
        max_score,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceScore {
    pub device_id: String,
    /// Per path, the maximum over that path's comparisons.
    pub path_max: Vec<f64>,
    pub device_statistic: f64,
    /// Sorted by (path, left column).
    pub comparisons: Vec<ComparisonResult>,
}

impl DeviceScore {
    /// Rebuilds the aggregates from raw comparisons in any order.
    pub fn from_comparisons(
        device_id: impl Into<String>,
        paths: usize,
        mut comparisons: Vec<ComparisonResult>,
    ) -> Result<Self> {
        comparisons.sort_by_key(|c| (c.path_id, c.pair));
        let mut path_max = vec![f64::NEG_INFINITY; paths];
        for c in &comparisons {
            let slot = path_max.get_mut(c.path_id).ok_or_else(|| {
                Error::Index(format!("comparison for path {} beyond {paths} paths", c.path_id))
            })?;
            *slot = slot.max(c.max_score);
        }
        let device_statistic = path_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            device_id: device_id.into(),
            path_max,
            device_statistic,
            comparisons,
        })
    }
}

pub fn score_device(fp: &FrequencyFingerprint, cfg: &DetectorConfig) -> Result<DeviceScore> {
    cfg.validate()?;
    let layout = fp.layout();
    let pairs = adjacent_pairs(layout);
    if pairs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "device {} has no adjacent column pairs to compare",
            fp.device_id
        )));
    }
    let tasks: Vec<(usize, (usize, usize))> = (0..layout.path_count())
        .flat_map(|p| pairs.iter().map(move |&pair| (p, pair)))
        .collect();
    let comparisons = tasks
        .par_iter()
        .map(|&(path, pair)| score_pair(fp, path, pair, cfg))
        .collect::<Result<Vec<_>>>()?;
    DeviceScore::from_comparisons(fp.device_id.clone(), layout.path_count(), comparisons)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fresh,
    Recycled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fresh => "fresh",
            Label::Recycled => "recycled",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub device_id: String,
    pub device_statistic: f64,
    pub threshold: f64,
    pub label: Label,
}

/// Recycled iff the device statistic is strictly above `threshold`.
pub fn classify_statistic(statistic: f64, threshold: f64) -> Label {
    if statistic > threshold {
        Label::Recycled
    } else {
        Label::Fresh
    }
}

pub fn classify(scores: &[DeviceScore], threshold: f64) -> Result<Vec<Verdict>> {
    if threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold must not be NaN".into()));
    }
    Ok(scores
        .iter()
        .map(|s| Verdict {
            device_id: s.device_id.clone(),
            device_statistic: s.device_statistic,
            threshold,
            label: classify_statistic(s.device_statistic, threshold),
        })
        .collect())
}
