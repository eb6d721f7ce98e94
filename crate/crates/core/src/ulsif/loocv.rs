//! Leave-one-out model selection.
//!
//! For a fixed kernel the LOO criterion has a closed form. Holding out
//! the `i`-th inlier and test sample together changes `Ĥ` by a rank-one
//! term, so every held-out solution follows from one factorisation of
//! `B = Ĥ + λ(n-1)/n · I` via Sherman-Morrison. `Ĥ` is eigendecomposed
//! once per bandwidth and the factorisation is reused across the ridge
//! grid; each ridge weight then costs one `b × b × n` product.
//!
//! With `B2[:, i]` the clamped coefficients fitted without sample `i`,
//! the criterion is
//!
//! ```text
//! LOO = 1/(2m) Σ_i r̂₋ᵢ(f_i)² − 1/m Σ_i r̂₋ᵢ(f'_i)
//! ```
//!
//! over the first `m = min(n, n')` samples of each vector. This is the
//! empirical squared-error objective with its constant term dropped.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{gram_from_design, KernelSpec, ModelGrid, SampleVector, UlsifModel};
use crate::error::{Error, Result};

/// Closed-form LOO scores for one kernel, one per entry of `lambdas`.
pub fn loocv_scores(
    inlier: &[f64],
    test: &[f64],
    kernel: &KernelSpec,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let n_de = inlier.len();
    let n_nu = test.len();
    if n_de < 2 || n_nu < 2 {
        return Err(Error::InvalidInput(
            "leave-one-out needs at least two samples per vector".into(),
        ));
    }
    let m = n_de.min(n_nu);
    let de = kernel.design_matrix(inlier);
    let nu = kernel.design_matrix(test);
    let stats = gram_from_design(&de, &nu);
    let b = kernel.len();

    let de_m = de.columns(0, m).into_owned();
    let nu_m = nu.columns(0, m).into_owned();

    // nalgebra's symmetric eigensolver can return NaN on nearly rank-one
    // matrices with many zero rows, which is what Ĥ looks like when the
    // inlier samples sit far from every centre. Decomposing the normalised
    // matrix plus the identity avoids it without changing the eigenvectors.
    let scale = stats.h_mat.amax();
    let (basis, spectrum) = if scale > 0.0 {
        let shifted = &stats.h_mat / scale + DMatrix::identity(b, b);
        let eig = SymmetricEigen::new(shifted);
        (eig.eigenvectors, eig.eigenvalues.map(|e| (e - 1.0) * scale))
    } else {
        (DMatrix::identity(b, b), DVector::zeros(b))
    };
    if spectrum.iter().chain(basis.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "eigendecomposition of the gram matrix failed at w={}",
            kernel.bandwidth
        )));
    }
    let basis_t = basis.transpose();
    let p = &basis_t * &de_m;
    let q = &basis_t * &nu_m;
    let g: DVector<f64> = &basis_t * &stats.h_vec;

    let nde = n_de as f64;
    let nnu = n_nu as f64;
    let kappa = (nde - 1.0) / (nde * (nnu - 1.0));

    let mut out = Vec::with_capacity(lambdas.len());
    let mut d = vec![0.0; b];
    let mut mixed = DMatrix::<f64>::zeros(b, m);
    for &lambda in lambdas {
        let shift = lambda * (nde - 1.0) / nde;
        for (dk, ek) in d.iter_mut().zip(spectrum.iter()) {
            let denom = ek + shift;
            if denom.is_nan() || denom <= 0.0 {
                return Err(Error::Numerical(format!(
                    "regularized gram matrix not positive definite (lambda={lambda})"
                )));
            }
            *dk = 1.0 / denom;
        }
        for i in 0..m {
            let pc = p.column(i);
            let qc = q.column(i);
            let (mut quad, mut lin, mut cross) = (0.0, 0.0, 0.0);
            for k in 0..b {
                let dp = d[k] * pc[k];
                quad += dp * pc[k];
                lin += dp * g[k];
                cross += dp * qc[k];
            }
            let denom = nde - quad;
            let t = (nnu * lin - cross) / denom;
            let mut col = mixed.column_mut(i);
            for k in 0..b {
                col[k] = d[k] * (nnu * g[k] + pc[k] * t - qc[k]);
            }
        }
        let coeffs = &basis * &mixed;
        let (mut sq, mut lin) = (0.0, 0.0);
        for i in 0..m {
            let (mut r_de, mut r_nu) = (0.0, 0.0);
            let ci = coeffs.column(i);
            let dc = de_m.column(i);
            let nc = nu_m.column(i);
            for l in 0..b {
                let a = (kappa * ci[l]).max(0.0);
                r_de += dc[l] * a;
                r_nu += nc[l] * a;
            }
            sq += r_de * r_de;
            lin += r_nu;
        }
        let mf = m as f64;
        let score = sq / (2.0 * mf) - lin / mf;
        if !score.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite LOO score at w={} lambda={lambda}",
                kernel.bandwidth
            )));
        }
        out.push(score);
    }
    Ok(out)
}

/// Scans the grid, keeps the `(w, λ)` pair with the lowest LOO score and
/// refits on all samples. Ties go to the smaller `w`, then smaller `λ`.
pub fn select_model(inlier: &SampleVector, test: &SampleVector, grid: &ModelGrid) -> Result<UlsifModel> {
    grid.validate()?;
    let mut bandwidths = grid.bandwidths.clone();
    bandwidths.sort_by(f64::total_cmp);
    let mut lambdas = grid.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);

    let mut best: Option<(f64, KernelSpec, f64)> = None;
    for &w in &bandwidths {
        let kernel = KernelSpec::from_test(test.values(), w, grid.max_centers)?;
        let scores = loocv_scores(inlier.values(), test.values(), &kernel, &lambdas)?;
        for (&lambda, &score) in lambdas.iter().zip(&scores) {
            let better = match &best {
                None => true,
                Some((s, _, _)) => score < *s,
            };
            if better {
                best = Some((score, kernel.clone(), lambda));
            }
        }
    }
    let (score, kernel, lambda) = best.expect("grid validated non-empty");
    let mut model = UlsifModel::fit(inlier.values(), test.values(), kernel, lambda)?;
    model.loocv_score = score;
    Ok(model)
}
