//! Structured-likelihood kernels for equicorrelation precision matrices.
//!
//! The covariance `Sigma = eta^2 [(1-theta) I + theta 11']` has the
//! closed-form inverse
//! `Omega = 1/(eta^2 (1-theta)) [I - theta/(1 + (q-1) theta) 11']`,
//! so quadratic forms and log-determinants reduce to the Frobenius norm of
//! the residual matrix and the norm of its row sums. Every kernel here is
//! `O(nq)` and never materializes a `q x q` matrix; [`precision_dense`]
//! exists for the lasso subproblem and for test oracles.

use crate::error::{Error, Result};
use crate::params::{CovParams, CsParams, GenEqParams};
use crate::{Col, Dataset, Mat, Scalar};
use num_traits::Float;

#[inline]
fn one_minus_theta<F: Scalar>(theta: F) -> F {
    // theta < 1 strictly; the floor keeps the division finite when theta has
    // been clamped right at the ceiling.
    Float::max(F::one() - theta, F::from_f64(1e-6).unwrap())
}

fn check_finite<F: Scalar>(r: &Mat<F>) -> Result<()> {
    if r.is_empty() {
        return Err(Error::InvalidInput("residual matrix is empty".into()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("residual matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Squared norm of the vector of row sums, `||R 1_q||^2`.
pub(crate) fn row_sum_sq_norm<F: Scalar>(r: &Mat<F>) -> F {
    (0..r.nrows())
        .map(|i| {
            let s = r.row(i).iter().copied().sum::<F>();
            s * s
        })
        .sum()
}

/// `tr[R'R Omega(eta^2, theta)]`, without the `1/n` factor.
pub fn structured_trace<F: Scalar>(r: &Mat<F>, params: &CsParams<F>) -> Result<F> {
    check_finite(r)?;
    let q = F::from_usize(r.ncols()).unwrap();
    let omt = one_minus_theta(params.theta);
    let fro2 = r.iter().map(|v| *v * *v).sum::<F>();
    let rows2 = row_sum_sq_norm(r);
    Ok(fro2 / (params.eta2 * omt) - params.theta * rows2 / (params.eta2 * omt * (omt + q * params.theta)))
}

/// `tr[R'R Omega]` for the general-equicorrelation precision: scale column
/// `j` of `R` by `1/eta_j`, then apply the compound-symmetry kernel with
/// unit variance.
pub fn structured_trace_gen<F: Scalar>(r: &Mat<F>, params: &GenEqParams<F>) -> Result<F> {
    if r.ncols() != params.etas.len() {
        return Err(Error::DimensionMismatch(format!(
            "R has {} columns but params carry {} etas",
            r.ncols(),
            params.etas.len()
        )));
    }
    let mut scaled = r.clone();
    for j in 0..scaled.ncols() {
        let inv = F::one() / params.etas[j];
        scaled.column_mut(j).iter_mut().for_each(|v| *v *= inv);
    }
    structured_trace(&scaled, &CsParams { eta2: F::one(), theta: params.theta })
}

/// `log det Sigma` for either covariance family, evaluated in closed form
/// for `q` responses.
pub fn logdet_sigma<F: Scalar>(params: &CovParams<F>, q: usize) -> F {
    match params {
        CovParams::Cs(p) => logdet_sigma_cs(p, q),
        CovParams::GenEq(p) => {
            assert_eq!(p.etas.len(), q);
            let qm1 = F::from_usize(q - 1).unwrap();
            let two = F::from_f64(2.0).unwrap();
            let sum_log_eta = p.etas.iter().map(|e| Float::ln(*e)).sum::<F>();
            two * sum_log_eta
                + qm1 * Float::ln(one_minus_theta(p.theta))
                + Float::ln(F::one() + qm1 * p.theta)
        }
    }
}

/// `log det Sigma` under compound symmetry, for `q` responses.
pub fn logdet_sigma_cs<F: Scalar>(params: &CsParams<F>, q: usize) -> F {
    let qf = F::from_usize(q).unwrap();
    let qm1 = F::from_usize(q - 1).unwrap();
    qf * Float::ln(params.eta2)
        + qm1 * Float::ln(one_minus_theta(params.theta))
        + Float::ln(F::one() + qm1 * params.theta)
}

/// Dense `q x q` precision matrix `Omega`. Used by the coordinate-descent
/// subproblem and as the oracle in kernel tests.
pub fn precision_dense<F: Scalar>(params: &CovParams<F>, q: usize) -> Mat<F> {
    match params {
        CovParams::Cs(p) => {
            let qm1 = F::from_usize(q - 1).unwrap();
            let omt = one_minus_theta(p.theta);
            let scale = F::one() / (p.eta2 * omt);
            let off = p.theta / (F::one() + qm1 * p.theta);
            let mut m = Mat::from_element(q, q, -scale * off);
            for j in 0..q {
                m[(j, j)] = scale * (F::one() - off);
            }
            m
        }
        CovParams::GenEq(p) => {
            assert_eq!(p.etas.len(), q);
            let qm1 = F::from_usize(q - 1).unwrap();
            let omt = one_minus_theta(p.theta);
            let off = p.theta / (F::one() + qm1 * p.theta);
            let mut m = Mat::zeros(q, q);
            for j in 0..q {
                for k in 0..q {
                    let core = if j == k { F::one() - off } else { -off };
                    m[(j, k)] = core / (omt * p.etas[j] * p.etas[k]);
                }
            }
            m
        }
    }
}

/// Negative log-likelihood `(1/n) tr[(Y-XB)'(Y-XB) Omega] + log det Sigma`
/// on centered data.
pub fn neg_loglik<F: Scalar>(dataset: &Dataset<F>, b: &Mat<F>, params: &CovParams<F>) -> Result<F> {
    if b.nrows() != dataset.p() || b.ncols() != dataset.q() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{} but data require {}x{}",
            b.nrows(),
            b.ncols(),
            dataset.p(),
            dataset.q()
        )));
    }
    let r = &dataset.y - &dataset.x * b;
    let n = F::from_usize(dataset.n()).unwrap();
    let trace = match params {
        CovParams::Cs(p) => structured_trace(&r, p)?,
        CovParams::GenEq(p) => structured_trace_gen(&r, p)?,
    };
    let logdet = logdet_sigma(params, dataset.q());
    Ok(trace / n + logdet)
}

/// Residual matrix `Y - XB` on centered data.
pub fn residuals<F: Scalar>(dataset: &Dataset<F>, b: &Mat<F>) -> Mat<F> {
    &dataset.y - &dataset.x * b
}

/// Mean vector helper: `1 * intercept' + X B`.
pub fn predict<F: Scalar>(x: &Mat<F>, b: &Mat<F>, intercept: &Col<F>) -> Mat<F> {
    let mut yhat = x * b;
    for k in 0..yhat.ncols() {
        let c = intercept[k];
        yhat.column_mut(k).iter_mut().for_each(|v| *v += c);
    }
    yhat
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cs(eta2: f64, theta: f64) -> CsParams<f64> {
        CsParams::new(eta2, theta).unwrap()
    }

    #[test]
    fn trace_identity_precision() {
        let r = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(structured_trace(&r, &cs(1.0, 0.0)).unwrap(), 2.0);
    }

    #[test]
    fn trace_matches_hand_dense_value() {
        let r = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(
            structured_trace(&r, &cs(1.0, 0.5)).unwrap(),
            64.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn trace_diagonal_precision_scales_frobenius() {
        let r = Mat::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 4.0, 3.0, -1.0]);
        let fro2: f64 = r.iter().map(|v| v * v).sum();
        assert_relative_eq!(structured_trace(&r, &cs(2.5, 0.0)).unwrap(), fro2 / 2.5, epsilon = 1e-12);
    }

    #[test]
    fn trace_rejects_non_finite() {
        let r = Mat::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(structured_trace(&r, &cs(1.0, 0.0)).is_err());
    }

    #[test]
    fn gen_trace_reduces_to_cs_with_unit_etas() {
        let r = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = GenEqParams::new(Col::from_element(2, 1.0), 0.5).unwrap();
        assert_relative_eq!(structured_trace_gen(&r, &p).unwrap(), 64.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gen_trace_column_scaling() {
        let r = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let p = GenEqParams::new(Col::from_element(2, 2.0), 0.0).unwrap();
        assert_relative_eq!(structured_trace_gen(&r, &p).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gen_trace_matches_dense_quadratic_form() {
        let r = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = GenEqParams::new(Col::from_row_slice(&[1.0, 2.0]), 0.5).unwrap();
        let omega = precision_dense(&CovParams::GenEq(p.clone()), 2);
        let dense = (r.transpose() * &r * omega).trace();
        assert_relative_eq!(structured_trace_gen(&r, &p).unwrap(), dense, epsilon = 1e-10);
    }

    #[test]
    fn logdet_identity_is_zero() {
        for q in [2usize, 5, 9] {
            assert_relative_eq!(logdet_sigma_cs(&cs(1.0, 0.0), q), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn logdet_matches_dense_two_by_two() {
        // eta2 = 7.5, theta = 14/15: Sigma = [[7.5, 7.0], [7.0, 7.5]]
        let p = cs(7.5, 14.0 / 15.0);
        let expect = 2.0 * 7.5f64.ln() + (1.0f64 / 15.0).ln() + (29.0f64 / 15.0).ln();
        assert_relative_eq!(logdet_sigma_cs(&p, 2), expect, epsilon = 1e-12);
        let dense: f64 = (7.5f64 * 7.5 - 7.0 * 7.0).ln();
        assert_relative_eq!(logdet_sigma_cs(&p, 2), dense, epsilon = 1e-9);
    }

    #[test]
    fn logdet_gen_diagonal() {
        let p = GenEqParams::new(Col::from_row_slice(&[1.0, 2.0]), 0.0).unwrap();
        assert_relative_eq!(logdet_sigma(&CovParams::GenEq(p), 2), 2.0 * 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn precision_dense_hand_values() {
        let m = precision_dense(&CovParams::Cs(cs(1.0, 0.0)), 3);
        assert_relative_eq!(m, Mat::identity(3, 3), epsilon = 1e-14);

        let m = precision_dense(&CovParams::Cs(cs(1.0, 0.5)), 2);
        let expect = Mat::from_row_slice(2, 2, &[4.0 / 3.0, -2.0 / 3.0, -2.0 / 3.0, 4.0 / 3.0]);
        assert_relative_eq!(m, expect, epsilon = 1e-12);

        let p = GenEqParams::new(Col::from_row_slice(&[1.0, 2.0]), 0.0).unwrap();
        let m = precision_dense(&CovParams::GenEq(p), 2);
        let expect = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]);
        assert_relative_eq!(m, expect, epsilon = 1e-12);
    }

    #[test]
    fn precision_inverts_sigma() {
        // Omega * Sigma = I for both families.
        let p = cs(7.5, 14.0 / 15.0);
        let omega = precision_dense(&CovParams::Cs(p), 2);
        let sigma = Mat::from_row_slice(2, 2, &[7.5, 7.0, 7.0, 7.5]);
        assert_relative_eq!(omega * sigma, Mat::identity(2, 2), epsilon = 1e-10);

        let g = GenEqParams::new(Col::from_row_slice(&[1.0, 2.0, 0.5]), 0.4).unwrap();
        let omega = precision_dense(&CovParams::GenEq(g.clone()), 3);
        let mut sigma = Mat::zeros(3, 3);
        for j in 0..3 {
            for k in 0..3 {
                let corr = if j == k { 1.0 } else { 0.4 };
                sigma[(j, k)] = g.etas[j] * g.etas[k] * corr;
            }
        }
        assert_relative_eq!(omega * sigma, Mat::identity(3, 3), epsilon = 1e-10);
    }

    #[test]
    fn neg_loglik_zero_case_and_homogeneity() {
        let x = Mat::from_row_slice(2, 1, &[0.0, 0.0]);
        let y = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let d = Dataset { x, y, x_means: Col::zeros(1), y_means: Col::zeros(2), centered: true };
        let b = Mat::zeros(1, 2);
        assert_relative_eq!(
            neg_loglik(&d, &b, &CovParams::Cs(cs(1.0, 0.0))).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn neg_loglik_matches_dense_oracle() {
        let x = Mat::from_row_slice(4, 2, &[0.3, -1.2, 0.7, 0.1, -0.4, 0.9, 1.5, -0.6]);
        let y = Mat::from_row_slice(4, 3, &[0.2, 1.0, -0.3, 0.8, -0.5, 0.4, -1.1, 0.6, 0.9, 0.1, -0.2, 1.3]);
        let b = Mat::from_row_slice(2, 3, &[0.5, -0.2, 0.1, 0.3, 0.7, -0.4]);
        let d = Dataset { x: x.clone(), y: y.clone(), x_means: Col::zeros(2), y_means: Col::zeros(3), centered: true };
        let params = CovParams::Cs(cs(1.7, 0.35));
        let omega = precision_dense(&params, 3);
        let r = &y - &x * &b;
        let dense = (r.transpose() * &r * &omega / 4.0).trace() - omega.determinant().ln();
        assert_relative_eq!(neg_loglik(&d, &b, &params).unwrap(), dense, epsilon = 1e-10);
    }
}
