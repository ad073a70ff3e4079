use crate::error::{Error, Result};
use crate::{Col, Mat, Scalar};

/// Predictor/response pair with centering metadata.
///
/// The fitters work on centered data (no intercept column); the intercept is
/// recovered afterwards from the stored column means.
#[derive(Debug, Clone)]
pub struct Dataset<F = f64> {
    pub x: Mat<F>,
    pub y: Mat<F>,
    pub x_means: Col<F>,
    pub y_means: Col<F>,
    pub centered: bool,
}

impl<F: Scalar> Dataset<F> {
    /// Wraps raw (uncentered) matrices; centering means are set to zero.
    pub fn new(x: Mat<F>, y: Mat<F>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidInput("need at least 2 observations".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("X and Y must be finite".into()));
        }
        let p = x.ncols();
        let q = y.ncols();
        Ok(Self { x, y, x_means: Col::zeros(p), y_means: Col::zeros(q), centered: false })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Returns a centered copy; column means of the raw inputs are recorded so
    /// the intercept can be reconstructed.
    pub fn centered(&self) -> Self {
        if self.centered {
            return self.clone();
        }
        let n = F::from_usize(self.n()).unwrap();
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        let x_means = Col::from_iterator(self.p(), self.x.column_iter().map(|c| c.iter().copied().sum::<F>() / n));
        let y_means = Col::from_iterator(self.q(), self.y.column_iter().map(|c| c.iter().copied().sum::<F>() / n));
        for j in 0..x.ncols() {
            let m = x_means[j];
            x.column_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        for k in 0..y.ncols() {
            let m = y_means[k];
            y.column_mut(k).iter_mut().for_each(|v| *v -= m);
        }
        Self { x, y, x_means, y_means, centered: true }
    }

    /// Subset of rows, in the given order, with raw (uncentered) values and
    /// zeroed means. Used to carve cross-validation folds out of raw data.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows.iter());
        let y = self.y.select_rows(rows.iter());
        Self {
            x,
            y,
            x_means: Col::zeros(self.p()),
            y_means: Col::zeros(self.q()),
            centered: self.centered,
        }
    }

    /// Intercept implied by a coefficient matrix fitted on the centered data.
    pub fn intercept_for(&self, b: &Mat<F>) -> Col<F> {
        &self.y_means - b.transpose() * &self.x_means
    }

    /// `tr(Y'Y)/n` on the centered responses; the outer-loop stopping scale.
    pub fn response_scale(&self) -> F {
        let n = F::from_usize(self.n()).unwrap();
        self.y.iter().map(|v| *v * *v).sum::<F>() / n
    }
}
