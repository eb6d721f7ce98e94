//! Conventional KFF-free baseline: k-means++ over raw frequencies, with the
//! cluster count chosen by mean silhouette. A device is called recycled
//! when its optimal count exceeds the fresh reference count.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Label;
use crate::error::{Error, Result};
use crate::fingerprint::FrequencyFingerprint;

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const CONVERGENCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringOutcome {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    pub silhouette: f64,
    /// Within-cluster sum of squares after seeding and after each Lloyd step.
    pub objective_history: Vec<f64>,
}

impl ClusteringOutcome {
    pub fn inertia(&self) -> f64 {
        *self.objective_history.last().expect("history is never empty")
    }
}

fn nearest(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = (x - c) * (x - c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn objective(points: &[f64], assignments: &[usize], centroids: &[f64]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(x, &a)| (x - centroids[a]) * (x - centroids[a]))
        .sum()
}

/// k-means++ seeding (D² sampling).
fn seed_centroids(points: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, d) in d2.iter().enumerate() {
            if *d <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < *d {
                break;
            }
            target -= d;
        }
        let c = points[pick.expect("distinct points remain while k <= distinct count")];
        centroids.push(c);
        for (d, x) in d2.iter_mut().zip(points) {
            *d = d.min((x - c).powi(2));
        }
    }
    centroids
}

/// Seeded k-means++ followed by Lloyd iterations, with the mean silhouette.
pub fn kmeanspp(points: &[f64], k: usize, seed: u64) -> Result<ClusteringOutcome> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    if points.len() < k {
        return Err(Error::InvalidParameter(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < k {
        return Err(Error::DegenerateClustering(format!(
            "{} distinct values cannot form {k} clusters",
            sorted.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|&x| nearest(x, &centroids)).collect();
    let mut history = vec![objective(points, &assignments, &centroids)];

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in points.iter().zip(&assignments) {
            sums[a] += x;
            counts[a] += 1;
        }
        let mut movement: f64 = 0.0;
        for j in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[j] > 0 {
                let c = sums[j] / counts[j] as f64;
                movement = movement.max((c - centroids[j]).abs());
                centroids[j] = c;
            }
        }
        for (a, &x) in assignments.iter_mut().zip(points) {
            *a = nearest(x, &centroids);
        }
        history.push(objective(points, &assignments, &centroids));
        if movement < CONVERGENCE_TOL {
            break;
        }
    }

    let silhouette = silhouette_1d(points, &assignments, k)?;
    Ok(ClusteringOutcome {
        k,
        assignments,
        centroids,
        silhouette,
        objective_history: history,
    })
}

/// Mean silhouette of a 1-D partition with absolute-difference distance.
///
/// Each cluster is sorted once with prefix sums, so the summed distance
/// from any point to a whole cluster takes one binary search. Values are
/// centred first to keep the prefix sums small. Points in singleton
/// clusters score 0.
pub fn silhouette_1d(points: &[f64], assignments: &[usize], k: usize) -> Result<f64> {
    if points.len() != assignments.len() || points.is_empty() {
        return Err(Error::InvalidInput("points and assignments must match and be non-empty".into()));
    }
    if let Some(a) = assignments.iter().find(|a| **a >= k) {
        return Err(Error::InvalidInput(format!("assignment {a} outside 0..{k}")));
    }
    let mean = points.iter().sum::<f64>() / points.len() as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (x, &a) in points.iter().zip(assignments) {
        members[a].push(x - mean);
    }
    let prefixes: Vec<Vec<f64>> = members
        .iter_mut()
        .map(|m| {
            m.sort_by(f64::total_cmp);
            let mut p = Vec::with_capacity(m.len() + 1);
            p.push(0.0);
            let mut acc = 0.0;
            for v in m.iter() {
                acc += v;
                p.push(acc);
            }
            p
        })
        .collect();
    let dist_sum = |x: f64, j: usize| {
        let m = &members[j];
        let p = &prefixes[j];
        let below = m.partition_point(|v| *v <= x);
        let n = m.len();
        (x * below as f64 - p[below]) + ((p[n] - p[below]) - x * (n - below) as f64)
    };

    let mut total = 0.0;
    for (x, &a) in points.iter().zip(assignments) {
        let x = x - mean;
        let own = members[a].len();
        if own <= 1 {
            continue;
        }
        let intra = dist_sum(x, a) / (own - 1) as f64;
        let inter = (0..k)
            .filter(|&j| j != a && !members[j].is_empty())
            .map(|j| dist_sum(x, j) / members[j].len() as f64)
            .fold(f64::INFINITY, f64::min);
        if !inter.is_finite() {
            continue;
        }
        let denom = intra.max(inter);
        if denom > 0.0 {
            total += (inter - intra) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Which ROs feed the baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RoSelection {
    All,
    /// `count` distinct sites drawn uniformly; every path of each site used.
    Random { count: usize, seed: u64 },
}

impl RoSelection {
    pub fn name(&self) -> String {
        match self {
            RoSelection::All => "all".into(),
            RoSelection::Random { count, .. } => format!("random-{count}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub fresh_reference_k: usize,
    pub kmeans_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 4,
            fresh_reference_k: 2,
            kmeans_seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(Error::InvalidParameter(format!(
                "bad k range {}..={}",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineVerdict {
    pub device_id: String,
    pub selection: String,
    /// `(k, mean silhouette)` for every tried k.
    pub silhouettes: Vec<(usize, f64)>,
    pub optimal_k: usize,
    pub reference_k: usize,
    pub label: Label,
}

/// Flat frequency vector for a selection: per path, the selected sites in
/// storage order.
pub fn selected_frequencies(fp: &FrequencyFingerprint, selection: &RoSelection) -> Result<Vec<f64>> {
    let layout = fp.layout();
    let sites = layout.sites();
    let chosen: Vec<usize> = match *selection {
        RoSelection::All => (0..sites).collect(),
        RoSelection::Random { count, seed } => {
            if count == 0 || count > sites {
                return Err(Error::InvalidParameter(format!(
                    "cannot select {count} of {sites} RO sites"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, sites, count).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let mut out = Vec::with_capacity(chosen.len() * layout.path_count());
    for path in 0..layout.path_count() {
        let values = fp.path_values(path)?;
        out.extend(chosen.iter().map(|&i| values[i]));
    }
    Ok(out)
}

pub fn baseline_detect(
    fp: &FrequencyFingerprint,
    selection: &RoSelection,
    cfg: &BaselineConfig,
) -> Result<BaselineVerdict> {
    cfg.validate()?;
    let points = selected_frequencies(fp, selection)?;
    let mut silhouettes = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in cfg.k_min..=cfg.k_max {
        let s = kmeanspp(&points, k, cfg.kmeans_seed)?.silhouette;
        silhouettes.push((k, s));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    let optimal_k = best.expect("non-empty k range").0;
    Ok(BaselineVerdict {
        device_id: fp.device_id.clone(),
        selection: selection.name(),
        silhouettes,
        optimal_k,
        reference_k: cfg.fresh_reference_k,
        label: if optimal_k > cfg.fresh_reference_k {
            Label::Recycled
        } else {
            Label::Fresh
        },
    })
}
