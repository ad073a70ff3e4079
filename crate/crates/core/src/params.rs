use crate::error::{Error, Result};
use crate::{Col, Mat, Scalar};
use num_traits::Float;

/// Upper clamp for the common correlation; `theta` must stay strictly below 1
/// or the structured kernels divide by zero.
pub const THETA_CEIL: f64 = 1.0 - 1e-6;

/// Compound-symmetry covariance parameters: common error variance `eta2` and
/// common correlation `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsParams<F = f64> {
    pub eta2: F,
    pub theta: F,
}

impl<F: Scalar> CsParams<F> {
    pub fn new(eta2: F, theta: F) -> Result<Self> {
        if !(eta2 > F::zero() && eta2.is_finite()) {
            return Err(Error::InvalidInput(format!("eta2 must be positive, got {eta2}")));
        }
        if !(theta >= F::zero() && theta < F::one()) {
            return Err(Error::InvalidInput(format!("theta must lie in [0, 1), got {theta}")));
        }
        Ok(Self { eta2, theta })
    }

    /// Identity covariance, the starting point of the exact algorithms.
    pub fn identity() -> Self {
        Self { eta2: F::one(), theta: F::zero() }
    }
}

/// General-equicorrelation parameters: per-response error standard deviations
/// `etas[j]` and common correlation `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEqParams<F = f64> {
    pub etas: Col<F>,
    pub theta: F,
}

impl<F: Scalar> GenEqParams<F> {
    pub fn new(etas: Col<F>, theta: F) -> Result<Self> {
        if etas.iter().any(|e| !(*e > F::zero() && e.is_finite())) {
            return Err(Error::InvalidInput("every eta must be positive and finite".into()));
        }
        if !(theta >= F::zero() && theta < F::one()) {
            return Err(Error::InvalidInput(format!("theta must lie in [0, 1), got {theta}")));
        }
        Ok(Self { etas, theta })
    }

    pub fn identity(q: usize) -> Self {
        Self { etas: Col::from_element(q, F::one()), theta: F::zero() }
    }
}

/// Either covariance family; what a fitted model carries.
#[derive(Debug, Clone, PartialEq)]
pub enum CovParams<F = f64> {
    Cs(CsParams<F>),
    GenEq(GenEqParams<F>),
}

impl<F: Scalar> CovParams<F> {
    pub fn as_cs(&self) -> Option<&CsParams<F>> {
        match self {
            CovParams::Cs(p) => Some(p),
            CovParams::GenEq(_) => None,
        }
    }

    pub fn as_gen(&self) -> Option<&GenEqParams<F>> {
        match self {
            CovParams::Cs(_) => None,
            CovParams::GenEq(p) => Some(p),
        }
    }
}

/// L1 penalty: tuning parameter `lambda` and optional `p x q` adaptive
/// weights (unit weights when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec<F = f64> {
    pub lambda: F,
    pub weights: Option<Mat<F>>,
}

impl<F: Scalar> PenaltySpec<F> {
    pub fn plain(lambda: F) -> Result<Self> {
        Self::new(lambda, None)
    }

    pub fn new(lambda: F, weights: Option<Mat<F>>) -> Result<Self> {
        if !(lambda >= F::zero() && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
        }
        if let Some(w) = &weights {
            if w.iter().any(|x| !(*x >= F::zero() && x.is_finite())) {
                return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
            }
        }
        Ok(Self { lambda, weights })
    }

    /// Weight for coordinate `(j, k)`; 1 when no weight matrix is set.
    #[inline]
    pub fn weight(&self, j: usize, k: usize) -> F {
        match &self.weights {
            Some(w) => w[(j, k)],
            None => F::one(),
        }
    }

    /// Penalty term `lambda * sum_jk w_jk |B_jk|`.
    pub fn value(&self, b: &Mat<F>) -> F {
        let mut s = F::zero();
        for j in 0..b.nrows() {
            for k in 0..b.ncols() {
                s += self.weight(j, k) * Float::abs(b[(j, k)]);
            }
        }
        self.lambda * s
    }
}

/// Output of the model fitters.
#[derive(Debug, Clone)]
pub struct FitResult<F = f64> {
    /// Estimated `p x q` coefficient matrix.
    pub b: Mat<F>,
    /// Intercept recovered from the centering means, `ybar - B' xbar`.
    pub intercept: Col<F>,
    pub cov: CovParams<F>,
    pub lambda: F,
    /// Penalized objective after each outer iteration (first entry is the
    /// value at the initializer).
    pub objective_trace: Vec<F>,
    pub outer_iters: usize,
    pub converged: bool,
}
