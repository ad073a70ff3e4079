//! Cyclic coordinate descent for the penalized `B` subproblem
//! `min_B tr[(1/n)(Y-XB)'(Y-XB) Omega] + lambda sum_jk w_jk |B_jk|`
//! at a fixed SPD precision matrix, plus ridge and OLS baselines.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::params::PenaltySpec;
use crate::{Col, Mat, Scalar};
use num_traits::Float;

/// Coordinate-descent controls.
#[derive(Debug, Clone, Copy)]
pub struct CdConfig<F = f64> {
    /// Sweep convergence threshold, relative to `max(1, max |B_jk|)`.
    pub tol: F,
    pub max_sweeps: usize,
    /// After each full sweep, iterate on the nonzero set until stable before
    /// the next full sweep.
    pub active_set: bool,
}

impl<F: Scalar> Default for CdConfig<F> {
    fn default() -> Self {
        Self { tol: F::from_f64(1e-7).unwrap(), max_sweeps: 10_000, active_set: true }
    }
}

/// Ridge baseline flavor: one shared tuning parameter or one per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeMode {
    Combined,
    Separate,
}

/// `sign(z) * max(|z| - t, 0)`; ties at the boundary return 0.
#[inline]
pub fn soft_threshold<F: Scalar>(z: F, t: F) -> F {
    let mag = Float::abs(z) - t;
    if mag > F::zero() {
        Float::signum(z) * mag
    } else {
        F::zero()
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` when the
/// matrix is not positive definite.
pub(crate) fn cholesky<F: Scalar>(a: &Mat<F>) -> Option<Mat<F>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > F::zero()) || !d.is_finite() {
            return None;
        }
        let dj = Float::sqrt(d);
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Solves `A X = B` for symmetric positive-definite `A` via Cholesky.
pub(crate) fn chol_solve<F: Scalar>(a: &Mat<F>, b: &Mat<F>) -> Option<Mat<F>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut x = b.clone();
    for c in 0..x.ncols() {
        // forward: L z = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: L' x = z
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Some(x)
}

fn check_omega<F: Scalar>(omega: &Mat<F>, q: usize) -> Result<()> {
    if omega.nrows() != q || omega.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "Omega is {}x{} but q = {q}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    let tol = F::from_f64(1e-8).unwrap();
    for j in 0..q {
        for k in (j + 1)..q {
            let d = Float::abs(omega[(j, k)] - omega[(k, j)]);
            let scale = F::one() + Float::abs(omega[(j, k)]);
            if d > tol * scale {
                return Err(Error::InvalidInput("Omega is not symmetric".into()));
            }
        }
    }
    if cholesky(omega).is_none() {
        return Err(Error::InvalidInput("Omega is not positive definite".into()));
    }
    Ok(())
}

/// Coordinate-descent solution together with its convergence status.
#[derive(Debug, Clone)]
pub struct CdSolution<F = f64> {
    pub b: Mat<F>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Minimizes the penalized subproblem by cyclic coordinate descent, warm
/// started from `b0`.
///
/// Coordinate `(j, k)` moves to
/// `soft_threshold(B_jk + G_jk / H_jk, lambda w_jk / (2 H_jk))` with
/// `H_jk = (X'X)_jj Omega_kk / n` and `G_jk = [X'(Y-XB) Omega]_jk / n`.
/// `X'X` and `X'Y` are formed once per call; a sweep maintains
/// `C = X'Y - X'X B` so one coordinate update costs `O(p + q)`.
pub fn solve_penalized_b<F: Scalar>(
    dataset: &Dataset<F>,
    omega: &Mat<F>,
    penalty: &PenaltySpec<F>,
    b0: &Mat<F>,
    cfg: &CdConfig<F>,
) -> Result<CdSolution<F>> {
    let (p, q) = (dataset.p(), dataset.q());
    check_omega(omega, q)?;
    if b0.nrows() != p || b0.ncols() != q {
        return Err(Error::DimensionMismatch("B0 shape mismatch".into()));
    }
    if b0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("B0 has non-finite entries".into()));
    }
    let n = F::from_usize(dataset.n()).unwrap();
    let xtx = dataset.x.transpose() * &dataset.x;
    let xty = dataset.x.transpose() * &dataset.y;

    let mut b = b0.clone();
    // C = X'Y - X'X B
    let mut c = &xty - &xtx * &b;
    let two = F::from_f64(2.0).unwrap();

    // One pass over the given coordinate list; returns the largest absolute
    // coordinate move.
    let sweep = |b: &mut Mat<F>, c: &mut Mat<F>, coords: Option<&[(usize, usize)]>| -> F {
        let mut max_move = F::zero();
        let mut update = |j: usize, k: usize, b: &mut Mat<F>, c: &mut Mat<F>| {
            let xjj = xtx[(j, j)];
            if xjj == F::zero() {
                // zero-variance predictor: coefficient pinned at 0
                return;
            }
            let h = xjj * omega[(k, k)] / n;
            let mut g = F::zero();
            for m in 0..q {
                g += c[(j, m)] * omega[(m, k)];
            }
            g /= n;
            let old = b[(j, k)];
            let z = old + g / h;
            let t = penalty.lambda * penalty.weight(j, k) / (two * h);
            let new = soft_threshold(z, t);
            let delta = new - old;
            if delta != F::zero() {
                b[(j, k)] = new;
                for i in 0..p {
                    c[(i, k)] -= delta * xtx[(i, j)];
                }
                let m = Float::abs(delta);
                if m > max_move {
                    max_move = m;
                }
            }
        };
        match coords {
            Some(list) => {
                for &(j, k) in list {
                    update(j, k, b, c);
                }
            }
            None => {
                for j in 0..p {
                    for k in 0..q {
                        update(j, k, b, c);
                    }
                }
            }
        }
        max_move
    };

    let mut sweeps = 0usize;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        let max_move = sweep(&mut b, &mut c, None);
        sweeps += 1;
        let bmax = b.iter().fold(F::zero(), |acc, v| Float::max(acc, Float::abs(*v)));
        if max_move < cfg.tol * Float::max(F::one(), bmax) {
            converged = true;
            break;
        }
        if cfg.active_set {
            let active: Vec<(usize, usize)> = (0..p)
                .flat_map(|j| (0..q).map(move |k| (j, k)))
                .filter(|&(j, k)| b[(j, k)] != F::zero())
                .collect();
            while sweeps < cfg.max_sweeps {
                let mv = sweep(&mut b, &mut c, Some(&active));
                sweeps += 1;
                let bmax = b.iter().fold(F::zero(), |acc, v| Float::max(acc, Float::abs(*v)));
                if mv < cfg.tol * Float::max(F::one(), bmax) {
                    break;
                }
            }
        }
    }
    Ok(CdSolution { b, converged, sweeps })
}

/// Largest violation of the subgradient optimality conditions at `B`:
/// `|-2 G_jk| <= lambda w_jk` where `B_jk = 0`, and
/// `|-2 G_jk + lambda w_jk sign(B_jk)|` elsewhere.
pub fn kkt_residual<F: Scalar>(
    dataset: &Dataset<F>,
    omega: &Mat<F>,
    penalty: &PenaltySpec<F>,
    b: &Mat<F>,
) -> Result<F> {
    let (p, q) = (dataset.p(), dataset.q());
    check_omega(omega, q)?;
    if b.nrows() != p || b.ncols() != q {
        return Err(Error::DimensionMismatch("B shape mismatch".into()));
    }
    let n = F::from_usize(dataset.n()).unwrap();
    let r = &dataset.y - &dataset.x * b;
    let g = dataset.x.transpose() * r * omega / n;
    let two = F::from_f64(2.0).unwrap();
    let mut worst = F::zero();
    for j in 0..p {
        for k in 0..q {
            let lw = penalty.lambda * penalty.weight(j, k);
            let grad = -two * g[(j, k)];
            let v = if b[(j, k)] == F::zero() {
                Float::max(Float::abs(grad) - lw, F::zero())
            } else {
                Float::abs(grad + lw * Float::signum(b[(j, k)]))
            };
            if v > worst {
                worst = v;
            }
        }
    }
    Ok(worst)
}

/// Value of the penalized subproblem objective at `B` (dense precision).
pub fn penalized_objective<F: Scalar>(
    dataset: &Dataset<F>,
    omega: &Mat<F>,
    penalty: &PenaltySpec<F>,
    b: &Mat<F>,
) -> F {
    let n = F::from_usize(dataset.n()).unwrap();
    let r = &dataset.y - &dataset.x * b;
    (r.transpose() * &r * omega).trace() / n + penalty.value(b)
}

/// Ordinary least squares, `(X'X)^{-1} X'Y`; requires `X'X` nonsingular.
pub fn ols<F: Scalar>(dataset: &Dataset<F>) -> Result<Mat<F>> {
    let xtx = dataset.x.transpose() * &dataset.x;
    let xty = dataset.x.transpose() * &dataset.y;
    chol_solve(&xtx, &xty)
        .ok_or_else(|| Error::InvalidInput("X'X is singular; OLS needs n > p and full column rank".into()))
}

/// Adaptive penalty weights `w_jk = 1 / |B_ols_jk|^r` from the OLS fit.
/// Requires `n > p + q`; exact OLS zeros get the cap 1e12.
pub fn compute_adaptive_weights<F: Scalar>(dataset: &Dataset<F>, r: F) -> Result<Mat<F>> {
    if dataset.n() <= dataset.p() + dataset.q() {
        return Err(Error::UnsupportedRegime(format!(
            "adaptive weights need n > p + q (n = {}, p = {}, q = {})",
            dataset.n(),
            dataset.p(),
            dataset.q()
        )));
    }
    if !(r > F::one()) {
        return Err(Error::InvalidInput("weight exponent r must exceed 1".into()));
    }
    let b = ols(dataset)?;
    let cap = F::from_f64(1e12).unwrap();
    Ok(b.map(|v| {
        if v == F::zero() {
            cap
        } else {
            Float::min(Float::powf(Float::abs(v), -r), cap)
        }
    }))
}

/// Per-response ridge with a single shared tuning parameter:
/// `(X'X + n lambda I)^{-1} X'Y`.
pub fn fit_ridge<F: Scalar>(dataset: &Dataset<F>, lambda: F) -> Result<Mat<F>> {
    let lambdas = Col::from_element(dataset.q(), lambda);
    fit_ridge_separate(dataset, &lambdas)
}

/// Ridge with one tuning parameter per response column.
pub fn fit_ridge_separate<F: Scalar>(dataset: &Dataset<F>, lambdas: &Col<F>) -> Result<Mat<F>> {
    if lambdas.len() != dataset.q() {
        return Err(Error::DimensionMismatch("one lambda per response required".into()));
    }
    if lambdas.iter().any(|l| *l < F::zero() || !l.is_finite()) {
        return Err(Error::InvalidInput("ridge lambdas must be nonnegative".into()));
    }
    let n = F::from_usize(dataset.n()).unwrap();
    let xtx = dataset.x.transpose() * &dataset.x;
    let xty = dataset.x.transpose() * &dataset.y;
    let p = dataset.p();
    let mut b = Mat::zeros(p, dataset.q());
    // Group identical lambdas so each distinct value costs one factorization.
    let mut done = vec![false; dataset.q()];
    for k in 0..dataset.q() {
        if done[k] {
            continue;
        }
        let group: Vec<usize> =
            (k..dataset.q()).filter(|&m| !done[m] && lambdas[m] == lambdas[k]).collect();
        let mut a = xtx.clone();
        for j in 0..p {
            a[(j, j)] += n * lambdas[k];
        }
        let rhs = xty.select_columns(group.iter());
        let sol = chol_solve(&a, &rhs).ok_or_else(|| {
            Error::InvalidInput("ridge system singular (lambda = 0 with p >= n?)".into())
        })?;
        for (c, &m) in group.iter().enumerate() {
            b.set_column(m, &sol.column(c));
            done[m] = true;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn univariate() -> Dataset<f64> {
        let x = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = Mat::from_row_slice(2, 1, &[2.0, 4.0]);
        Dataset { x, y, x_means: Col::zeros(1), y_means: Col::zeros(1), centered: true }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_relative_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_relative_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_relative_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_relative_eq!(soft_threshold(1.0, 1.0), 0.0); // boundary tie
    }

    #[test]
    fn univariate_closed_form() {
        let d = univariate();
        let omega = Mat::from_element(1, 1, 1.0);
        let pen = PenaltySpec::plain(1.0).unwrap();
        let sol =
            solve_penalized_b(&d, &omega, &pen, &Mat::zeros(1, 1), &CdConfig::default()).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.b[(0, 0)], 2.5, epsilon = 1e-10);
        assert!(kkt_residual(&d, &omega, &pen, &sol.b).unwrap() <= 1e-8);

        let pen10 = PenaltySpec::plain(10.0).unwrap();
        let sol =
            solve_penalized_b(&d, &omega, &pen10, &Mat::zeros(1, 1), &CdConfig::default()).unwrap();
        assert_relative_eq!(sol.b[(0, 0)], 0.0);
    }

    #[test]
    fn lambda_zero_recovers_least_squares_under_any_omega() {
        let x = Mat::from_row_slice(6, 2, &[1.0, 0.2, -0.3, 1.1, 0.5, -0.7, 1.4, 0.9, -1.2, 0.3, 0.8, -0.5]);
        let y = Mat::from_row_slice(6, 2, &[0.7, -0.1, 1.2, 0.4, -0.6, 0.9, 0.3, -1.0, 0.5, 0.2, -0.8, 1.1]);
        let d = Dataset { x, y, x_means: Col::zeros(2), y_means: Col::zeros(2), centered: true };
        let pen = PenaltySpec::plain(0.0).unwrap();
        let omega1 = Mat::identity(2, 2);
        let omega2 = Mat::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.5]);
        let cfg = CdConfig { tol: 1e-10, ..CdConfig::default() };
        let b1 = solve_penalized_b(&d, &omega1, &pen, &Mat::zeros(2, 2), &cfg).unwrap().b;
        let b2 = solve_penalized_b(&d, &omega2, &pen, &Mat::zeros(2, 2), &cfg).unwrap().b;
        let bls = ols(&d).unwrap();
        assert_relative_eq!(b1, bls, epsilon = 1e-6);
        assert_relative_eq!(b1, b2, epsilon = 1e-6);
        assert!(kkt_residual(&d, &omega2, &pen, &b2).unwrap() <= 1e-8);
    }

    #[test]
    fn non_spd_omega_rejected() {
        let d = univariate();
        let omega = Mat::from_element(1, 1, -1.0);
        let pen = PenaltySpec::plain(0.1).unwrap();
        assert!(solve_penalized_b(&d, &omega, &pen, &Mat::zeros(1, 1), &CdConfig::default()).is_err());
    }

    #[test]
    fn zero_variance_predictor_stays_zero() {
        let x = Mat::from_row_slice(4, 2, &[0.0, 1.0, 0.0, -0.5, 0.0, 2.0, 0.0, 0.3]);
        let y = Mat::from_row_slice(4, 1, &[1.0, -0.2, 2.1, 0.4]);
        let d = Dataset { x, y, x_means: Col::zeros(2), y_means: Col::zeros(1), centered: true };
        let pen = PenaltySpec::plain(0.01).unwrap();
        let sol = solve_penalized_b(&d, &Mat::identity(1, 1), &pen, &Mat::zeros(2, 1), &CdConfig::default())
            .unwrap();
        assert_relative_eq!(sol.b[(0, 0)], 0.0);
        assert!(sol.b[(1, 0)].abs() > 0.1);
    }

    #[test]
    fn objective_nonincreasing_per_sweep() {
        // One-sweep-at-a-time runs must descend.
        let x = Mat::from_row_slice(5, 3, &[0.4, -1.0, 0.2, 1.3, 0.5, -0.8, -0.2, 0.9, 1.1, 0.7, -0.4, 0.3, -1.5, 0.6, -0.1]);
        let y = Mat::from_row_slice(5, 2, &[1.0, -0.5, 0.2, 0.8, -1.1, 0.4, 0.6, -0.9, 0.3, 1.2]);
        let d = Dataset { x, y, x_means: Col::zeros(3), y_means: Col::zeros(2), centered: true };
        let omega = Mat::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 1.2]);
        let pen = PenaltySpec::plain(0.3).unwrap();
        let mut b = Mat::zeros(3, 2);
        let mut prev = penalized_objective(&d, &omega, &pen, &b);
        for _ in 0..20 {
            let cfg = CdConfig { max_sweeps: 1, active_set: false, ..CdConfig::default() };
            b = solve_penalized_b(&d, &omega, &pen, &b, &cfg).unwrap().b;
            let cur = penalized_objective(&d, &omega, &pen, &b);
            assert!(cur <= prev + 1e-12, "objective rose: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn adaptive_weights_formula_and_regime() {
        let x = Mat::from_row_slice(6, 1, &[1.0, -0.5, 2.0, 0.3, -1.2, 0.9]);
        let y = Mat::from_row_slice(6, 1, &[2.0, -1.0, 4.0, 0.6, -2.4, 1.8]);
        let d = Dataset { x, y, x_means: Col::zeros(1), y_means: Col::zeros(1), centered: true };
        let w = compute_adaptive_weights(&d, 2.0).unwrap();
        let b = ols(&d).unwrap();
        assert_relative_eq!(w[(0, 0)], b[(0, 0)].abs().powi(-2), epsilon = 1e-12);
        assert_relative_eq!(b[(0, 0)], 2.0, epsilon = 1e-10);
        assert_relative_eq!(w[(0, 0)], 0.25, epsilon = 1e-10);

        // n <= p + q rejected
        let x = Mat::<f64>::identity(2, 1);
        let y = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let d = Dataset { x, y, x_means: Col::zeros(1), y_means: Col::zeros(1), centered: true };
        assert!(matches!(compute_adaptive_weights(&d, 2.0), Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn ridge_scalar_formula_and_limits() {
        let d = univariate();
        let b = fit_ridge(&d, 1.0).unwrap();
        assert_relative_eq!(b[(0, 0)], 1.5, epsilon = 1e-12);
        let b0 = fit_ridge(&d, 0.0).unwrap();
        assert_relative_eq!(b0[(0, 0)], 3.0, epsilon = 1e-12);
        let bbig = fit_ridge(&d, 1e9).unwrap();
        assert!(bbig[(0, 0)].abs() < 1e-7);
    }
}
