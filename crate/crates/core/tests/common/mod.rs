//! Shared oracles and property checks. Each `prop_*` function runs its own
//! deterministic proptest runner so both the per-module test files and the
//! acceptance target can execute the same suites.
#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use ulsif_fpga::detector::{classify, score_device, DetectorConfig, DeviceScore};
use ulsif_fpga::fingerprint::{
    adjacent_pairs, read_fingerprint, write_fingerprint, ColumnGroup, DeviceLayout, FrequencyFingerprint,
};
use ulsif_fpga::report::{residual_map, roc};
use ulsif_fpga::simulator::{apply_aging, AgingProfile, AgingSpec, Region};
use ulsif_fpga::ulsif::{compute_gram_stats, rbf_kernel, solve_ridge, GramStats, KernelSpec};

pub const CASES: u32 = 128;

pub fn reference_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/reference.json")
}

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Textbook O(n²) mean silhouette; singleton clusters contribute 0.
pub fn brute_silhouette(points: &[f64], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += (points[i] - points[j]).abs();
                counts[assignments[j]] += 1;
            }
        }
        let own = assignments[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let d = a.max(b);
        if d > 0.0 {
            total += (b - a) / d;
        }
    }
    total / n as f64
}

/// Layouts with one or two groups, up to two paths and a handful of rows.
pub fn small_layout() -> impl Strategy<Value = DeviceLayout> {
    (4usize..16, 2usize..4, prop::option::of(2usize..4), 1u32..3).prop_map(|(rows, w1, w2, z)| {
        let mut groups = vec![ColumnGroup::new(0, w1 - 1)];
        if let Some(w2) = w2 {
            groups.push(ColumnGroup::new(w1 + 1, w1 + w2));
        }
        DeviceLayout::new(rows, groups, z, 3).expect("valid layout")
    })
}

/// Fingerprint with frequencies on a 1/64 MHz grid around 200 MHz, so that
/// integer offsets are added without rounding.
pub fn dyadic_fingerprint() -> impl Strategy<Value = FrequencyFingerprint> {
    small_layout().prop_flat_map(|layout| {
        let n = layout.cell_count();
        prop::collection::vec(-512i32..512, n).prop_map(move |ticks| {
            let mut it = ticks.into_iter();
            FrequencyFingerprint::from_fn("dev", layout.clone(), |_, _, _| {
                200.0 + it.next().unwrap() as f64 / 64.0
            })
            .unwrap()
        })
    })
}

pub fn prop_kernel_symmetry_bounds(cases: u32) -> Result<(), String> {
    run(cases, (-1e3f64..1e3, -1e3f64..1e3, 1e-3f64..1e3), |(x, c, w)| {
        let k = rbf_kernel(x, c, w).unwrap();
        prop_assert!((0.0..=1.0).contains(&k), "K = {k}");
        prop_assert_eq!(k, rbf_kernel(c, x, w).unwrap());
        prop_assert_eq!(rbf_kernel(x, x, w).unwrap(), 1.0);
        if ((x - c) / w).abs() < 30.0 {
            prop_assert!(k > 0.0);
        }
        Ok(())
    })
}

fn gram_input() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, usize)> {
    (
        prop::collection::vec(-5.0f64..5.0, 1..60),
        prop::collection::vec(-5.0f64..5.0, 1..60),
        0.05f64..5.0,
        1usize..40,
    )
}

fn gram(inlier: &[f64], test: &[f64], w: f64, cap: usize) -> GramStats {
    let kernel = KernelSpec::from_test(test, w, cap).unwrap();
    compute_gram_stats(inlier, test, &kernel).unwrap()
}

pub fn prop_gram_psd(cases: u32) -> Result<(), String> {
    run(cases, gram_input(), |(inlier, test, w, cap)| {
        let stats = gram(&inlier, &test, w, cap);
        let h = &stats.h_mat;
        let scale = h.amax().max(f64::MIN_POSITIVE);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                prop_assert!((h[(i, j)] - h[(j, i)]).abs() <= 1e-12 * scale);
            }
        }
        let eig = jacobi_eigenvalues(h);
        let norm = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        for e in &eig {
            prop_assert!(*e >= -1e-10 * norm, "eigenvalue {e} with norm {norm}");
        }
        for v in stats.h_vec.iter() {
            prop_assert!((0.0..=1.0).contains(v));
        }
        Ok(())
    })
}

/// Relative residual of the pre-clamp ridge solution.
pub fn ridge_residual(stats: &GramStats, lambda: f64, raw: &nalgebra::DVector<f64>) -> f64 {
    let mut system = stats.h_mat.clone();
    for i in 0..system.nrows() {
        system[(i, i)] += lambda;
    }
    (system * raw - &stats.h_vec).norm() / stats.h_vec.norm()
}

/// Random PSD system `A Aᵀ / k` with a nonnegative right-hand side.
pub fn random_psd_system() -> impl Strategy<Value = (GramStats, f64)> {
    (1usize..30, 1usize..40).prop_flat_map(|(b, k)| {
        (
            prop::collection::vec(-1.0f64..1.0, b * k),
            prop::collection::vec(0.0f64..1.0, b),
            -3.0f64..1.0,
        )
            .prop_filter("non-zero right-hand side", |(_, h, _)| h.iter().any(|v| *v > 1e-6))
            .prop_map(move |(a, h, log_lambda)| {
                let a = nalgebra::DMatrix::from_vec(b, k, a);
                let h_mat = (&a * a.transpose()) / k as f64;
                let h_mat = (&h_mat + h_mat.transpose()) * 0.5;
                (
                    GramStats {
                        h_mat,
                        h_vec: nalgebra::DVector::from_vec(h),
                    },
                    10f64.powf(log_lambda),
                )
            })
    })
}

pub fn prop_ridge_residual(cases: u32) -> Result<(), String> {
    run(cases, random_psd_system(), |(stats, lambda)| {
        let sol = solve_ridge(&stats, lambda).unwrap();
        let r = ridge_residual(&stats, lambda, &sol.raw);
        prop_assert!(r <= 1e-8, "residual {r}");
        prop_assert!(sol.alpha.iter().all(|a| *a >= 0.0));
        Ok(())
    })
}

pub fn prop_aggregation_consistency(cases: u32) -> Result<(), String> {
    run(cases, dyadic_fingerprint(), |fp| {
        let s = score_device(&fp, &DetectorConfig::default()).unwrap();
        let layout = fp.layout();
        prop_assert_eq!(s.comparisons.len(), layout.path_count() * adjacent_pairs(layout).len());
        let raw_max = s
            .comparisons
            .iter()
            .flat_map(|c| c.directions().into_iter().flat_map(|d| d.scores.scores.iter().copied()))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.device_statistic, raw_max);
        let mut shuffled = s.comparisons.clone();
        shuffled.reverse();
        let rebuilt = DeviceScore::from_comparisons(s.device_id.clone(), layout.path_count(), shuffled).unwrap();
        prop_assert_eq!(rebuilt, s);
        Ok(())
    })
}

pub fn prop_verdict_translation_invariance(cases: u32) -> Result<(), String> {
    run(cases, (dyadic_fingerprint(), -50i32..50, 0.0f64..30.0), |(fp, shift, threshold)| {
        let cfg = DetectorConfig::default();
        let moved = fp.map_cells(|_, _, _, v| v + shift as f64).unwrap();
        let a = score_device(&fp, &cfg).unwrap();
        let b = score_device(&moved, &cfg).unwrap();
        for t in [threshold, a.device_statistic] {
            let va: Vec<_> = classify(std::slice::from_ref(&a), t).unwrap().into_iter().map(|v| v.label).collect();
            let vb: Vec<_> = classify(std::slice::from_ref(&b), t).unwrap().into_iter().map(|v| v.label).collect();
            prop_assert_eq!(va, vb);
        }
        Ok(())
    })
}

fn aging_input() -> impl Strategy<Value = (Region, f64, f64, f64, f64, u64)> {
    (0usize..17, 0usize..17, 0usize..94, 0usize..94).prop_flat_map(|(c0, c1, r0, r1)| {
        let region = Region {
            col_min: c0.min(c1),
            col_max: c0.max(c1),
            row_min: r0.min(r1),
            row_max: r0.max(r1),
        };
        (Just(region), 0.0f64..10.0, 0.0f64..10.0, 0.0f64..4.0, 0.0f64..0.3, any::<u64>())
    })
}

pub fn prop_aging_monotonicity(cases: u32) -> Result<(), String> {
    let layout = DeviceLayout::new(12, vec![ColumnGroup::new(0, 16)], 1, 3).unwrap();
    let base = FrequencyFingerprint::from_fn("dev", layout, |_, c, r| 250.0 + 0.1 * c as f64 + 0.01 * r as f64).unwrap();
    run(cases, aging_input(), move |(mut region, t1, t2, falloff, jitter, seed)| {
        region.row_min %= 12;
        region.row_max = region.row_max.clamp(region.row_min, 11);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let spec = |t: f64| AgingSpec {
            falloff,
            drop_jitter: jitter,
            profile: AgingProfile::default(),
            ..AgingSpec::new(region, t)
        };
        for (_, c, r, _) in base.cells() {
            prop_assert!(spec(lo).drop_at(0, c, r) <= spec(hi).drop_at(0, c, r));
        }
        let a = apply_aging(&base, &spec(lo), seed).unwrap();
        let b = apply_aging(&base, &spec(hi), seed).unwrap();
        for ((_, _, _, fa), (_, _, _, fb)) in a.cells().zip(b.cells()) {
            prop_assert!(fb <= fa);
        }
        Ok(())
    })
}

fn cohort_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // a coarse grid makes ties between and within cohorts common
    let stat = (0u8..20).prop_map(|v| v as f64 * 1.5);
    (
        prop::collection::vec(stat.clone(), 1..40),
        prop::collection::vec(stat, 1..40),
    )
}

pub fn prop_roc_monotone_and_bounded(cases: u32) -> Result<(), String> {
    run(cases, cohort_pair(), |(fresh, aged)| {
        let c = roc(&fresh, &aged).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.auc));
        for w in c.points.windows(2) {
            prop_assert!(w[0].threshold > w[1].threshold);
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        let swapped = roc(&aged, &fresh).unwrap();
        prop_assert!((swapped.auc - (1.0 - c.auc)).abs() < 1e-12);
        let top = fresh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lifted: Vec<f64> = aged.iter().map(|a| a + top + 1.0).collect();
        prop_assert_eq!(roc(&fresh, &lifted).unwrap().auc, 1.0);
        Ok(())
    })
}

pub fn prop_residual_antisymmetry(cases: u32) -> Result<(), String> {
    run(cases, dyadic_fingerprint(), |fp| {
        let map = residual_map(&fp, 0).unwrap();
        for cell in &map.cells {
            let right_to_left = fp.get(0, cell.col + 1, cell.row).unwrap() - fp.get(0, cell.col, cell.row).unwrap();
            prop_assert_eq!(cell.residual_mhz, -right_to_left);
        }
        Ok(())
    })
}

fn arbitrary_fingerprint() -> impl Strategy<Value = FrequencyFingerprint> {
    (small_layout(), "[A-Za-z0-9_-]{1,12}").prop_flat_map(|(layout, id)| {
        let n = layout.cell_count();
        prop::collection::vec(1e-3f64..1e4, n).prop_map(move |values| {
            let mut it = values.into_iter();
            FrequencyFingerprint::from_fn(id.clone(), layout.clone(), |_, _, _| it.next().unwrap()).unwrap()
        })
    })
}

pub fn prop_serialization_round_trip(cases: u32) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("fp.csv");
    run(cases, arbitrary_fingerprint(), move |fp| {
        write_fingerprint(&fp, &path).unwrap();
        let back = read_fingerprint(&path).unwrap();
        prop_assert_eq!(back, fp);
        Ok(())
    })
}

pub fn prop_pairs_respect_groups(cases: u32) -> Result<(), String> {
    run(cases, small_layout(), |layout| {
        let pairs = adjacent_pairs(&layout);
        let expected: usize = layout.column_groups.iter().map(|g| g.width() - 1).sum();
        prop_assert_eq!(pairs.len(), expected);
        for (l, r) in pairs {
            prop_assert!(layout.column_groups.iter().any(|g| g.contains(l) && g.contains(r)));
        }
        Ok(())
    })
}

pub type Suite = fn(u32) -> Result<(), String>;

/// Every property suite of the crate, by name.
pub fn property_suites() -> Vec<(&'static str, Suite)> {
    vec![
        ("kernel symmetry and bounds", prop_kernel_symmetry_bounds),
        ("gram PSD", prop_gram_psd),
        ("ridge residual and clamp", prop_ridge_residual),
        ("aggregation consistency", prop_aggregation_consistency),
        ("verdict translation invariance", prop_verdict_translation_invariance),
        ("aging monotonicity", prop_aging_monotonicity),
        ("ROC monotonicity and AUC bounds", prop_roc_monotone_and_bounded),
        ("residual antisymmetry", prop_residual_antisymmetry),
        ("serialization round trip", prop_serialization_round_trip),
        ("adjacent pairs stay in groups", prop_pairs_respect_groups),
    ]
}
