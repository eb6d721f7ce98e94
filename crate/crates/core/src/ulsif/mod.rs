//! Direct density-ratio estimation by unconstrained least-squares importance
//! fitting (uLSIF) over scalar samples.
//!
//! Given inlier samples `f` (density `p`) and test samples `f'` (density
//! `p'`), the ratio `r = p'/p` is modelled as a non-negative combination of
//! Gaussian kernels centred on test samples:
//!
//! ```text
//! r̂(x) = Σ_l α_l K(x, c_l),      K(x, c) = exp(-(x - c)² / 2w²)
//! α̃    = (Ĥ + λI)⁻¹ ĥ,           α = max(0, α̃)
//! Ĥ    = mean_i K(f_i, c)K(f_i, c)ᵀ,   ĥ = mean_j K(f'_j, c)
//! ```
//!
//! The anomaly score of a sample is `-ln r̂(x)`, with `r̂` floored at
//! [`RATIO_FLOOR`] so scores stay finite. Kernel width and ridge weight are
//! chosen by leave-one-out cross-validation of the squared-error criterion
//! (see [`loocv`]).

pub mod loocv;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loocv::{loocv_scores, select_model};

/// Lower bound applied to `r̂` before taking the logarithm.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Default cap on the number of kernel centres.
pub const DEFAULT_MAX_CENTERS: usize = 50;

/// Design-matrix entries below this are stored as zero. Subnormal Gram
/// entries break the symmetric eigensolver, and anything this small is far
/// beneath [`RATIO_FLOOR`] once multiplied by any sane coefficient.
pub const KERNEL_FLUSH: f64 = 1e-60;

/// Bandwidth used when every pooled sample coincides.
pub const DEGENERATE_BANDWIDTH: f64 = 1.0;

/// A vector of at least two finite samples (frequencies in MHz).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleVector(Vec<f64>);

impl SampleVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "sample vector needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns a copy with `offset` added to every sample.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v + offset).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SampleVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_bandwidth(w: f64) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel bandwidth must be positive and finite, got {w}"
        )));
    }
    Ok(())
}

/// Gaussian RBF kernel `exp(-(x - c)² / 2w²)`.
pub fn rbf_kernel(x: f64, center: f64, w: f64) -> Result<f64> {
    check_bandwidth(w)?;
    if !(x.is_finite() && center.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "kernel arguments must be finite, got x={x} center={center}"
        )));
    }
    Ok(gaussian(x, center, 0.5 / (w * w)))
}

#[inline]
fn gaussian(x: f64, center: f64, inv_two_w2: f64) -> f64 {
    let d = x - center;
    (-d * d * inv_two_w2).exp()
}

/// Indices of the kernel centres taken from a test vector of length `n`:
/// all of them when `n <= max_centers`, otherwise an even stride.
pub fn center_indices(n: usize, max_centers: usize) -> Vec<usize> {
    let b = n.min(max_centers.max(1));
    (0..b).map(|i| i * n / b).collect()
}

/// Kernel bandwidth plus the centres the basis functions sit on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: f64,
    pub centers: Vec<f64>,
}

impl KernelSpec {
    pub fn new(bandwidth: f64, centers: Vec<f64>) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if centers.is_empty() {
            return Err(Error::InvalidParameter(
                "kernel needs at least one center".into(),
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite kernel center".into()));
        }
        Ok(Self { bandwidth, centers })
    }

    /// Centres drawn deterministically from the test samples.
    pub fn from_test(test: &[f64], bandwidth: f64, max_centers: usize) -> Result<Self> {
        let centers = center_indices(test.len(), max_centers)
            .into_iter()
            .map(|i| test[i])
            .collect();
        Self::new(bandwidth, centers)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Basis evaluations laid out `centers × samples`.
    pub fn design_matrix(&self, samples: &[f64]) -> DMatrix<f64> {
        let g = 0.5 / (self.bandwidth * self.bandwidth);
        DMatrix::from_fn(self.centers.len(), samples.len(), |l, i| {
            let k = gaussian(samples[i], self.centers[l], g);
            if k < KERNEL_FLUSH {
                0.0
            } else {
                k
            }
        })
    }

    /// `Σ_l α_l K(x, c_l)`.
    pub fn expand(&self, alpha: &[f64], x: f64) -> f64 {
        let g = 0.5 / (self.bandwidth * self.bandwidth);
        self.centers
            .iter()
            .zip(alpha)
            .filter(|(_, a)| **a != 0.0)
            .map(|(c, a)| a * gaussian(x, *c, g))
            .sum()
    }
}

/// Empirical second-moment matrix over inlier samples and first-moment
/// vector over test samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GramStats {
    pub h_mat: DMatrix<f64>,
    pub h_vec: DVector<f64>,
}

pub fn compute_gram_stats(inlier: &[f64], test: &[f64], kernel: &KernelSpec) -> Result<GramStats> {
    if inlier.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(
            "gram statistics need non-empty inlier and test vectors".into(),
        ));
    }
    let de = kernel.design_matrix(inlier);
    let nu = kernel.design_matrix(test);
    Ok(gram_from_design(&de, &nu))
}

pub(crate) fn gram_from_design(de: &DMatrix<f64>, nu: &DMatrix<f64>) -> GramStats {
    let mut h_mat = de * de.transpose();
    h_mat /= de.ncols() as f64;
    // gemm is not guaranteed to be bitwise symmetric
    h_mat = (&h_mat + h_mat.transpose()) * 0.5;
    let h_vec = nu.column_mean();
    GramStats { h_mat, h_vec }
}

/// Ridge solution before and after the non-negativity clamp.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSolution {
    pub raw: DVector<f64>,
    pub alpha: DVector<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge weight must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Solves `(Ĥ + λI) α̃ = ĥ` and clamps negative coefficients to zero.
pub fn solve_ridge(stats: &GramStats, lambda: f64) -> Result<RidgeSolution> {
    check_lambda(lambda)?;
    let b = stats.h_vec.len();
    if stats.h_mat.nrows() != b || stats.h_mat.ncols() != b {
        return Err(Error::InvalidInput(format!(
            "gram matrix is {}x{} but vector has length {b}",
            stats.h_mat.nrows(),
            stats.h_mat.ncols()
        )));
    }
    let mut system = stats.h_mat.clone();
    for i in 0..b {
        system[(i, i)] += lambda;
    }
    let chol = system.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "regularized gram matrix not positive definite (lambda={lambda})"
        ))
    })?;
    let raw = chol.solve(&stats.h_vec);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge solve produced non-finite values".into()));
    }
    let alpha = raw.map(|v| v.max(0.0));
    Ok(RidgeSolution { raw, alpha })
}

pub fn solve_alpha(stats: &GramStats, lambda: f64) -> Result<Vec<f64>> {
    Ok(solve_ridge(stats, lambda)?.alpha.as_slice().to_vec())
}

/// A fitted density-ratio model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlsifModel {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub loocv_score: f64,
}

impl UlsifModel {
    /// Fits coefficients for a fixed kernel and ridge weight.
    pub fn fit(inlier: &[f64], test: &[f64], kernel: KernelSpec, lambda: f64) -> Result<Self> {
        let stats = compute_gram_stats(inlier, test, &kernel)?;
        let alpha = solve_alpha(&stats, lambda)?;
        Ok(Self {
            kernel,
            lambda,
            alpha,
            loocv_score: f64::NAN,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.kernel.bandwidth
    }

    /// Estimated density ratio `r̂(x)`; never negative.
    pub fn ratio(&self, x: f64) -> f64 {
        self.kernel.expand(&self.alpha, x)
    }

    pub fn score(&self, x: f64) -> f64 {
        -self.ratio(x).max(RATIO_FLOOR).ln()
    }
}

/// Which input vector a scored sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Inlier,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnomalyScores {
    pub scores: Vec<f64>,
    pub sources: Vec<SampleSource>,
}

impl AnomalyScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn extend(&mut self, other: AnomalyScores) {
        self.scores.extend(other.scores);
        self.sources.extend(other.sources);
    }

    /// Largest score, or `None` when empty.
    pub fn max(&self) -> Option<f64> {
        self.scores.iter().copied().reduce(f64::max)
    }
}

/// `-ln max(r̂(x), ε)` for every sample.
pub fn anomaly_scores(model: &UlsifModel, samples: &[f64], source: SampleSource) -> Result<AnomalyScores> {
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
    }
    Ok(AnomalyScores {
        scores: samples.iter().map(|&x| model.score(x)).collect(),
        sources: vec![source; samples.len()],
    })
}

/// Median of all pairwise absolute differences.
pub fn median_pairwise_distance(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push((samples[i] - samples[j]).abs());
        }
    }
    let mid = d.len() / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Candidate grid scanned by model selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub bandwidths: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub max_centers: usize,
}

impl ModelGrid {
    pub fn new(bandwidths: Vec<f64>, lambdas: Vec<f64>) -> Self {
        Self {
            bandwidths,
            lambdas,
            max_centers: DEFAULT_MAX_CENTERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidParameter("model grid must be non-empty".into()));
        }
        self.bandwidths.iter().try_for_each(|&w| check_bandwidth(w))?;
        self.lambdas.iter().try_for_each(|&l| check_lambda(l))?;
        if self.max_centers == 0 {
            return Err(Error::InvalidParameter("max_centers must be positive".into()));
        }
        Ok(())
    }
}

/// Which pairwise distances feed the median heuristic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianReference {
    /// All pairs of the pooled inlier and test samples.
    Pooled,
    /// Mean of the two within-vector medians. Unlike the pooled median it
    /// does not grow with the offset between the vectors.
    #[default]
    WithinVector,
}

/// How the model grid is derived for each comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UlsifConfig {
    /// Multipliers applied to the reference median distance.
    pub bandwidth_factors: Vec<f64>,
    pub median_reference: MedianReference,
    pub lambdas: Vec<f64>,
    pub max_centers: usize,
}

impl Default for UlsifConfig {
    fn default() -> Self {
        Self {
            bandwidth_factors: vec![0.5, 1.0, 2.0, 4.0],
            median_reference: MedianReference::WithinVector,
            lambdas: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            max_centers: DEFAULT_MAX_CENTERS,
        }
    }
}

impl UlsifConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_factors.is_empty() {
            return Err(Error::InvalidParameter("bandwidth factor list is empty".into()));
        }
        if let Some(f) = self.bandwidth_factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::InvalidParameter(format!("bad bandwidth factor {f}")));
        }
        ModelGrid {
            bandwidths: vec![1.0],
            lambdas: self.lambdas.clone(),
            max_centers: self.max_centers,
        }
        .validate()
    }

    pub fn reference_distance(&self, inlier: &[f64], test: &[f64]) -> f64 {
        match self.median_reference {
            MedianReference::Pooled => {
                let pooled: Vec<f64> = inlier.iter().chain(test).copied().collect();
                median_pairwise_distance(&pooled)
            }
            MedianReference::WithinVector => {
                0.5 * (median_pairwise_distance(inlier) + median_pairwise_distance(test))
            }
        }
    }

    /// Median-heuristic grid; a zero reference distance falls back to a unit
    /// bandwidth.
    pub fn grid_for(&self, inlier: &[f64], test: &[f64]) -> ModelGrid {
        let median = self.reference_distance(inlier, test);
        let bandwidths = if median > 0.0 && median.is_finite() {
            self.bandwidth_factors.iter().map(|f| f * median).collect()
        } else {
            vec![DEGENERATE_BANDWIDTH]
        };
        ModelGrid {
            bandwidths,
            lambdas: self.lambdas.clone(),
            max_centers: self.max_centers,
        }
    }

    /// Selects a model on the median-heuristic grid.
    pub fn fit(&self, inlier: &SampleVector, test: &SampleVector) -> Result<UlsifModel> {
        let grid = self.grid_for(inlier.values(), test.values());
        select_model(inlier, test, &grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kernel_identity_and_direct_value() {
        assert_eq!(rbf_kernel(5.0, 5.0, 1.0).unwrap(), 1.0);
        assert!(close(rbf_kernel(1.0, 0.0, 1.0).unwrap(), (-0.5f64).exp(), 1e-15));
        assert!(close(rbf_kernel(1.0, 0.0, 1.0).unwrap(), 0.60653, 1e-5));
        assert_eq!(
            rbf_kernel(3.0, 0.0, 1.0).unwrap(),
            rbf_kernel(0.0, 3.0, 1.0).unwrap()
        );
    }

    #[test]
    fn kernel_rejects_bad_bandwidth() {
        for w in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(rbf_kernel(0.0, 0.0, w), Err(Error::InvalidParameter(_))));
        }
        assert!(matches!(rbf_kernel(f64::NAN, 0.0, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gram_stats_hand_values() {
        let k = KernelSpec::new(0.7, vec![0.0]).unwrap();
        let s = compute_gram_stats(&[0.0], &[0.0], &k).unwrap();
        assert_eq!(s.h_mat[(0, 0)], 1.0);
        assert_eq!(s.h_vec[0], 1.0);

        let k = KernelSpec::new(1.0, vec![0.0]).unwrap();
        let s = compute_gram_stats(&[0.0, 0.0, 0.0], &[0.0], &k).unwrap();
        assert_eq!(s.h_mat[(0, 0)], 1.0);

        // K(1,0)² = e^{-1}
        let s = compute_gram_stats(&[0.0, 1.0], &[0.0], &k).unwrap();
        let expected = (1.0 + (-1.0f64).exp()) / 2.0;
        assert!(close(s.h_mat[(0, 0)], expected, 1e-15));
        assert!(close(s.h_mat[(0, 0)], 0.68394, 1e-5));
    }

    #[test]
    fn gram_stats_reject_empty() {
        let k = KernelSpec::new(1.0, vec![0.0]).unwrap();
        assert!(matches!(compute_gram_stats(&[], &[0.0], &k), Err(Error::InvalidInput(_))));
        assert!(matches!(compute_gram_stats(&[0.0], &[], &k), Err(Error::InvalidInput(_))));
    }

    fn stats(h: &[f64], b: usize, v: &[f64]) -> GramStats {
        GramStats {
            h_mat: DMatrix::from_row_slice(b, b, h),
            h_vec: DVector::from_row_slice(v),
        }
    }

    #[test]
    fn scalar_and_diagonal_solves() {
        let a = solve_ridge(&stats(&[1.0], 1, &[1.0]), 1.0).unwrap();
        assert!(close(a.raw[0], 0.5, 1e-15));
        assert!(close(a.alpha[0], 0.5, 1e-15));

        // (1 + 0.5) α = [1, 0.2]
        let a = solve_alpha(&stats(&[1.0, 0.0, 0.0, 1.0], 2, &[1.0, 0.2]), 0.5).unwrap();
        assert!(close(a[0], 2.0 / 3.0, 1e-14));
        assert!(close(a[1], 2.0 / 15.0, 1e-14));
    }

    #[test]
    fn huge_lambda_drives_alpha_to_zero() {
        let k = KernelSpec::new(1.0, vec![0.0, 0.5, 1.0]).unwrap();
        let s = compute_gram_stats(&[0.1, 0.4, 0.9], &[0.0, 0.5, 1.0], &k).unwrap();
        let a = solve_alpha(&s, 1e12).unwrap();
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-9);
    }

    #[test]
    fn clamp_zeroes_negative_coefficients() {
        // Off-diagonal coupling forces a negative raw coefficient.
        let s = stats(&[1.0, 0.9, 0.9, 1.0], 2, &[1.0, 0.1]);
        let sol = solve_ridge(&s, 0.01).unwrap();
        assert!(sol.raw[1] < 0.0);
        assert_eq!(sol.alpha[1], 0.0);
        assert_eq!(sol.alpha[0], sol.raw[0]);
    }

    #[test]
    fn solve_rejects_bad_lambda() {
        let s = stats(&[1.0], 1, &[1.0]);
        for l in [0.0, -1.0, f64::NAN] {
            assert!(matches!(solve_alpha(&s, l), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn scores_at_unit_ratio_and_zero_alpha() {
        let kernel = KernelSpec::new(1.0, vec![2.0]).unwrap();
        let model = UlsifModel {
            kernel: kernel.clone(),
            lambda: 1.0,
            alpha: vec![1.0],
            loocv_score: 0.0,
        };
        let s = anomaly_scores(&model, &[2.0], SampleSource::Test).unwrap();
        assert_eq!(s.scores[0], 0.0);

        let zero = UlsifModel {
            alpha: vec![0.0],
            ..model
        };
        let s = anomaly_scores(&zero, &[2.0, -40.0, 1e6], SampleSource::Inlier).unwrap();
        for v in &s.scores {
            assert!(close(*v, -(RATIO_FLOOR.ln()), 1e-12));
            assert!(close(*v, 27.631, 1e-3));
        }
        assert_eq!(s.sources, vec![SampleSource::Inlier; 3]);
    }

    #[test]
    fn center_selection_strides() {
        assert_eq!(center_indices(5, 100), vec![0, 1, 2, 3, 4]);
        let idx = center_indices(1000, 100);
        assert_eq!(idx.len(), 100);
        assert_eq!(idx[1], 10);
        assert_eq!(*idx.last().unwrap(), 990);
    }

    #[test]
    fn median_distance() {
        assert_eq!(median_pairwise_distance(&[0.0, 1.0, 3.0]), 2.0);
        assert_eq!(median_pairwise_distance(&[0.0, 1.0, 2.0, 3.0]), 1.5);
        assert_eq!(median_pairwise_distance(&[4.0, 4.0, 4.0]), 0.0);
    }

    #[test]
    fn degenerate_pool_falls_back_to_unit_bandwidth() {
        let cfg = UlsifConfig::default();
        let g = cfg.grid_for(&[3.0, 3.0], &[3.0, 3.0]);
        assert_eq!(g.bandwidths, vec![DEGENERATE_BANDWIDTH]);
        let g = cfg.grid_for(&[0.0, 1.0], &[2.0, 3.0]);
        assert_eq!(g.bandwidths, vec![0.5, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn sample_vector_validation() {
        assert!(SampleVector::new(vec![1.0]).is_err());
        assert!(SampleVector::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(SampleVector::new(vec![1.0, 2.0]).unwrap().len(), 2);
    }
}
