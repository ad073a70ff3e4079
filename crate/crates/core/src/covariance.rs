//! Covariance-parameter updates given a residual matrix.
//!
//! The compound-symmetry block has a closed-form minimizer through the
//! reparametrization `alpha = eta^2 (1-theta)`, `gamma = eta^2 (1+(q-1)theta)`,
//! which makes the problem separable with strictly convex scalar pieces. The
//! general-equicorrelation family updates each `eta_j` by the positive root of
//! its stationarity condition and `theta` by a bracketed golden-section
//! search.

use crate::error::{Error, Result};
use crate::kernel::row_sum_sq_norm;
use crate::params::{CsParams, THETA_CEIL};
use crate::{Col, Mat, Scalar};
use num_traits::Float;

/// Sufficient statistics of a residual matrix for the compound-symmetry
/// update: `M1 = ||R||_F^2 / n` and `M2 = ||R 1_q||^2 / n`.
#[derive(Debug, Clone, Copy)]
pub struct ResidualSummary<F = f64> {
    pub m1: F,
    pub m2: F,
    pub n: usize,
    pub q: usize,
}

impl<F: Scalar> ResidualSummary<F> {
    pub fn from_residuals(r: &Mat<F>) -> Result<Self> {
        if r.ncols() < 2 {
            return Err(Error::InvalidInput("need q >= 2 responses".into()));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("residual matrix has non-finite entries".into()));
        }
        let n = F::from_usize(r.nrows()).unwrap();
        let m1 = r.iter().map(|v| *v * *v).sum::<F>() / n;
        let m2 = row_sum_sq_norm(r) / n;
        Ok(Self { m1, m2, n: r.nrows(), q: r.ncols() })
    }
}

/// Exact minimizer of the compound-symmetry covariance block at fixed `B`.
pub fn update_cs<F: Scalar>(r: &Mat<F>) -> Result<CsParams<F>> {
    let s = ResidualSummary::from_residuals(r)?;
    update_cs_from_summary(&s)
}

pub fn update_cs_from_summary<F: Scalar>(s: &ResidualSummary<F>) -> Result<CsParams<F>> {
    if s.m1 == F::zero() {
        return Err(Error::DegenerateResiduals("residual matrix is identically zero".into()));
    }
    let q = F::from_usize(s.q).unwrap();
    let qm1 = F::from_usize(s.q - 1).unwrap();
    let alpha_raw = (q * s.m1 - s.m2) / (q * qm1);
    // Negatively correlated columns (M2 < M1) push the unconstrained theta
    // below 0; the constrained optimum then sits at theta = 0 where the
    // variance reduces to the overall mean square.
    if s.m2 / q <= alpha_raw {
        return CsParams::new(s.m1 / q, F::zero());
    }
    // Collinear residual columns drive alpha to 0; floor it so the mapped
    // theta stays below 1 and the precision matrix stays finite.
    let floor = F::from_f64(1e-10).unwrap() * Float::max(s.m1, F::epsilon());
    let alpha = Float::max(alpha_raw, floor);
    let gamma = Float::max(alpha, s.m2 / q);
    let eta2 = alpha + (gamma - alpha) / q;
    let theta = (gamma - alpha) / (gamma + qm1 * alpha);
    let theta = num_traits::clamp(theta, F::zero(), F::from_f64(THETA_CEIL).unwrap());
    CsParams::new(eta2, theta)
}

/// One-dimensional update of `eta_j` at fixed `theta`, the other etas, and
/// `B`: the unique positive root of the stationarity condition.
pub fn update_eta_j<F: Scalar>(r: &Mat<F>, etas: &Col<F>, theta: F, j: usize) -> Result<F> {
    let q = r.ncols();
    if q < 2 || etas.len() != q {
        return Err(Error::DimensionMismatch("etas length must equal q >= 2".into()));
    }
    if j >= q {
        return Err(Error::InvalidInput(format!("column index {j} out of range for q={q}")));
    }
    let n = F::from_usize(r.nrows()).unwrap();
    let qm1 = F::from_usize(q - 1).unwrap();
    let qm2 = F::from_usize(q - 2).unwrap();
    let omt = F::one() - theta;
    let opq = F::one() + qm1 * theta;

    let mut cross = F::zero();
    let mut sq = F::zero();
    for i in 0..r.nrows() {
        let eij = r[(i, j)];
        let mut s = F::zero();
        for k in 0..q {
            if k != j {
                s += r[(i, k)] / etas[k];
            }
        }
        cross += eij * s;
        sq += eij * eij;
    }
    if sq == F::zero() {
        return Err(Error::DegenerateResiduals(format!("residual column {j} is identically zero")));
    }
    let k1 = theta / (n * omt * opq) * cross;
    let k2 = (F::one() + qm2 * theta) / (n * opq * omt) * sq;
    let four = F::from_f64(4.0).unwrap();
    let two = F::from_f64(2.0).unwrap();
    Ok((-k1 + Float::sqrt(k1 * k1 + four * k2)) / two)
}

/// Covariance part of the general-equicorrelation objective as a function of
/// `theta`, at fixed scaled-residual summaries.
fn theta_objective<F: Scalar>(m1: F, m2: F, q: usize, theta: F) -> F {
    let qf = F::from_usize(q).unwrap();
    let qm1 = F::from_usize(q - 1).unwrap();
    let omt = F::one() - theta;
    m1 / omt - theta * m2 / (omt * (omt + qf * theta))
        + qm1 * Float::ln(omt)
        + Float::ln(F::one() + qm1 * theta)
}

/// Minimizes a unimodal-ish scalar function on `[a, b]` by golden-section
/// search to absolute tolerance `tol`.
fn golden_section<F: Scalar>(f: impl Fn(F) -> F, mut a: F, mut b: F, tol: F) -> F {
    let phi = F::from_f64(0.618_033_988_749_894_9).unwrap();
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let two = F::from_f64(2.0).unwrap();
    (a + b) / two
}

/// Line-search update of `theta` at fixed etas and `B`, over
/// `[0, 1 - 1e-6]`. A 101-point coarse grid brackets the minimum (the
/// objective is smooth but not guaranteed unimodal), then golden-section
/// search refines to 1e-8.
pub fn update_theta_line_search<F: Scalar>(r: &Mat<F>, etas: &Col<F>) -> Result<F> {
    let q = r.ncols();
    if q < 2 || etas.len() != q {
        return Err(Error::DimensionMismatch("etas length must equal q >= 2".into()));
    }
    let mut scaled = r.clone();
    for j in 0..q {
        let inv = F::one() / etas[j];
        scaled.column_mut(j).iter_mut().for_each(|v| *v *= inv);
    }
    let s = ResidualSummary::from_residuals(&scaled)?;
    let ceil = F::from_f64(THETA_CEIL).unwrap();
    let f = |theta: F| theta_objective(s.m1, s.m2, q, theta);

    let grid_n = 101usize;
    let mut best_i = 0usize;
    let mut best_v = F::infinity();
    for i in 0..grid_n {
        let t = ceil * F::from_usize(i).unwrap() / F::from_usize(grid_n - 1).unwrap();
        let v = f(t);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let step = ceil / F::from_usize(grid_n - 1).unwrap();
    let lo = Float::max(F::zero(), step * F::from_usize(best_i.saturating_sub(1)).unwrap());
    let hi = Float::min(ceil, step * F::from_usize(best_i + 1).unwrap());
    let tol = F::from_f64(1e-8).unwrap();
    let t = golden_section(f, lo, hi, tol);
    // The refined point can only be accepted if it beats the grid winner.
    let t_grid = step * F::from_usize(best_i).unwrap();
    Ok(if f(t) <= f(t_grid) { t } else { t_grid })
}
