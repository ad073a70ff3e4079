//! K-fold cross validation on the approximate Gaussian validation
//! likelihood: held-out loss `tr[n^-1 R'R Omega_hat]` without the
//! log-determinant term, with `Omega_hat` taken from the one-step
//! compound-symmetry estimate on each training fold (for all four
//! equicorrelation methods). Baselines tune on plain squared prediction
//! error.

use crate::covariance::update_cs;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{precision_dense, predict, residuals, structured_trace};
use crate::lasso::{fit_ridge, CdConfig};
use crate::params::{CovParams, CsParams, PenaltySpec};
use crate::solvers::{
    ap_mrgcs_cov, default_lambda_grid, fit_mrcs, fit_mrgcs, init_b, SolverConfig,
};
use crate::{Col, Mat};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cross-validation plan: fold count, descending tuning grid, and the seed
/// that fixes the fold assignment.
#[derive(Debug, Clone)]
pub struct CvPlan {
    pub k: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self { k: 5, grid: default_lambda_grid(), seed: 0 }
    }
}

/// Methods tuned on the approximate validation likelihood.
#[derive(Debug, Clone)]
pub enum Method {
    Mrcs,
    ApMrcs,
    Mrgcs,
    ApMrgcs,
    /// True precision supplied; it replaces `Omega_hat` in the validation
    /// loss as well.
    Oracle(Mat<f64>),
}

/// Baselines tuned on held-out squared prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    LassoCombined,
    LassoSeparate,
    RidgeCombined,
    RidgeSeparate,
}

/// Tuning parameter selection for a baseline: one shared value or one per
/// response.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineSelection {
    Single(f64),
    PerResponse(Col<f64>),
}

/// Deterministic fold assignment: a seeded permutation of `0..n` split into
/// `k` near-equal blocks. Depends only on `(n, k, seed)`.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidPlan(format!("need at least 2 folds, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::InvalidPlan(format!(
            "{n} rows cannot form {k} folds of at least 2 rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0usize;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(order[at..at + len].to_vec());
        at += len;
    }
    Ok(folds)
}

/// Held-out validation likelihood without the log-determinant:
/// `tr[n^-1 (Y_k - 1 c' - X_k B)'(Y_k - 1 c' - X_k B) Omega_hat]` with `n`
/// the fold size and `c` the intercept from the training-fold means.
pub fn validation_loss(
    y_k: &Mat<f64>,
    x_k: &Mat<f64>,
    b: &Mat<f64>,
    intercept: &Col<f64>,
    params: &CsParams<f64>,
) -> Result<f64> {
    if y_k.nrows() != x_k.nrows() || b.nrows() != x_k.ncols() || b.ncols() != y_k.ncols() {
        return Err(Error::DimensionMismatch("validation fold shapes disagree".into()));
    }
    let r = y_k - predict(x_k, b, intercept);
    Ok(structured_trace(&r, params)? / y_k.nrows() as f64)
}

/// Dense-precision variant used when the true precision is supplied.
fn validation_loss_dense(
    y_k: &Mat<f64>,
    x_k: &Mat<f64>,
    b: &Mat<f64>,
    intercept: &Col<f64>,
    omega: &Mat<f64>,
) -> f64 {
    let r = y_k - predict(x_k, b, intercept);
    (r.transpose() * &r * omega).trace() / y_k.nrows() as f64
}

fn prepare_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidPlan("empty tuning grid".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidPlan("grid values must be positive and finite".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.partial_cmp(a).unwrap());
    g.dedup();
    Ok(g)
}

/// Largest-lambda argmin over a descending table (ties keep the earlier,
/// larger entry).
fn argmin_descending(table: &[(f64, f64)]) -> f64 {
    let mut best = table[0];
    for &(l, v) in &table[1..] {
        if v < best.1 {
            best = (l, v);
        }
    }
    best.0
}

/// Cross-validated tuning for the equicorrelation methods per the validation
/// likelihood rule. Returns the selected lambda and the per-lambda summed
/// losses, descending in lambda.
pub fn cross_validate(
    dataset: &Dataset<f64>,
    method: &Method,
    plan: &CvPlan,
    cfg: &SolverConfig,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let grid = prepare_grid(&plan.grid)?;
    let folds = fold_indices(dataset.n(), plan.k, plan.seed)?;
    let mut losses = vec![0.0f64; grid.len()];
    for (fi, fold) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..dataset.n()).filter(|i| !fold.contains(i)).collect();
        let train = dataset.select_rows(&train_rows);
        let train_c = train.centered();
        let valid = dataset.select_rows(fold);

        // One-step compound-symmetry covariance at the lasso initializer,
        // shared across the whole grid and across all four methods.
        let seed = plan.seed.wrapping_add(fi as u64 + 1);
        let b_init = init_b(&train_c, cfg.init_folds, &cfg.init_grid, cfg.initializer, seed, &cfg.cd)?;
        let cov_fold = update_cs(&residuals(&train_c, &b_init))?;

        // The one-shot methods and the oracle hold their precision fixed at
        // the initializer across the whole grid; compute it once per fold.
        let fixed_omega = match method {
            Method::ApMrcs => Some(precision_dense(&CovParams::Cs(cov_fold), train_c.q())),
            Method::ApMrgcs => {
                let params = ap_mrgcs_cov(&train_c, &b_init, cfg)?;
                Some(precision_dense(&CovParams::GenEq(params), train_c.q()))
            }
            Method::Oracle(omega) => Some(omega.clone()),
            Method::Mrcs | Method::Mrgcs => None,
        };

        // Descending grid with warm starts: each fit starts from the
        // previous lambda's solution.
        let mut warm = b_init.clone();
        for (g, &lambda) in grid.iter().enumerate() {
            let (b, intercept) = match (&fixed_omega, method) {
                (Some(omega), _) => {
                    let pen = PenaltySpec::plain(lambda)?;
                    warm = crate::lasso::solve_penalized_b(&train_c, omega, &pen, &warm, &cfg.cd)?.b;
                    (warm.clone(), train_c.intercept_for(&warm))
                }
                (None, Method::Mrcs) => {
                    let f = fit_mrcs(&train_c, lambda, cfg, Some(&warm))?;
                    warm = f.b.clone();
                    (f.b, f.intercept)
                }
                (None, Method::Mrgcs) => {
                    let f = fit_mrgcs(&train_c, lambda, cfg, Some(&warm))?;
                    warm = f.b.clone();
                    (f.b, f.intercept)
                }
                (None, _) => unreachable!(),
            };
            losses[g] += match method {
                Method::Oracle(omega) => {
                    validation_loss_dense(&valid.y, &valid.x, &b, &intercept, omega)
                }
                _ => validation_loss(&valid.y, &valid.x, &b, &intercept, &cov_fold)?,
            };
        }
    }
    let table: Vec<(f64, f64)> = grid.iter().copied().zip(losses).collect();
    Ok((argmin_descending(&table), table))
}

/// Cross-validated tuning for the lasso/ridge baselines on held-out squared
/// prediction error. Separate modes select per response.
pub fn cv_baselines(
    dataset: &Dataset<f64>,
    method: BaselineMethod,
    plan: &CvPlan,
    cd: &CdConfig<f64>,
) -> Result<BaselineSelection> {
    let grid = prepare_grid(&plan.grid)?;
    let folds = fold_indices(dataset.n(), plan.k, plan.seed)?;
    let q = dataset.q();
    // err[(g, k)]: held-out squared error for grid point g, response k
    let mut err = Mat::<f64>::zeros(grid.len(), q);
    for fold in &folds {
        let train_rows: Vec<usize> = (0..dataset.n()).filter(|i| !fold.contains(i)).collect();
        let train = dataset.select_rows(&train_rows).centered();
        let valid = dataset.select_rows(fold);
        let identity = Mat::identity(q, q);
        let mut warm = Mat::zeros(train.p(), q);
        for (g, &lambda) in grid.iter().enumerate() {
            let b = match method {
                BaselineMethod::LassoCombined | BaselineMethod::LassoSeparate => {
                    let pen = PenaltySpec::plain(lambda)?;
                    warm = crate::lasso::solve_penalized_b(&train, &identity, &pen, &warm, cd)?.b;
                    warm.clone()
                }
                BaselineMethod::RidgeCombined | BaselineMethod::RidgeSeparate => {
                    fit_ridge(&train, lambda)?
                }
            };
            let intercept = train.intercept_for(&b);
            let r = &valid.y - predict(&valid.x, &b, &intercept);
            for k in 0..q {
                err[(g, k)] += r.column(k).iter().map(|v| v * v).sum::<f64>();
            }
        }
    }
    match method {
        BaselineMethod::LassoCombined | BaselineMethod::RidgeCombined => {
            let table: Vec<(f64, f64)> =
                grid.iter().enumerate().map(|(g, &l)| (l, err.row(g).iter().sum())).collect();
            Ok(BaselineSelection::Single(argmin_descending(&table)))
        }
        BaselineMethod::LassoSeparate | BaselineMethod::RidgeSeparate => {
            let mut lambdas = Col::zeros(q);
            for k in 0..q {
                let table: Vec<(f64, f64)> =
                    grid.iter().enumerate().map(|(g, &l)| (l, err[(g, k)])).collect();
                lambdas[k] = argmin_descending(&table);
            }
            Ok(BaselineSelection::PerResponse(lambdas))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn folds_partition_and_are_deterministic() {
        let f1 = fold_indices(23, 5, 42).unwrap();
        let f2 = fold_indices(23, 5, 42).unwrap();
        assert_eq!(f1, f2);
        let mut all: Vec<usize> = f1.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = f1.iter().map(|f| f.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_ne!(fold_indices(23, 5, 43).unwrap(), f1);
    }

    #[test]
    fn fold_plan_rejections() {
        assert!(fold_indices(10, 1, 0).is_err());
        assert!(fold_indices(5, 3, 0).is_err()); // would give a 1-row fold
    }

    #[test]
    fn validation_loss_perfect_fit_and_identity() {
        let x = Mat::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let b = Mat::from_element(1, 2, 2.0);
        let y = {
            let mut y = &x * &b;
            y.column_mut(0).iter_mut().for_each(|v| *v += 1.0);
            y.column_mut(1).iter_mut().for_each(|v| *v += 5.0);
            y
        };
        let intercept = Col::from_row_slice(&[1.0, 5.0]);
        let p = CsParams::new(1.0, 0.0).unwrap();
        assert_relative_eq!(validation_loss(&y, &x, &b, &intercept, &p).unwrap(), 0.0);

        // theta = 0, eta2 = 1: loss is the fold mean squared residual sum
        let b0 = Mat::zeros(1, 2);
        let c0 = Col::zeros(2);
        let mse: f64 = y.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert_relative_eq!(validation_loss(&y, &x, &b0, &c0, &p).unwrap(), mse, epsilon = 1e-12);
    }

    #[test]
    fn validation_loss_matches_dense_omega() {
        let x = Mat::from_row_slice(4, 2, &[0.5, -0.2, 1.1, 0.7, -0.9, 0.4, 0.3, -1.3]);
        let y = Mat::from_row_slice(4, 2, &[1.0, 0.2, -0.4, 0.8, 0.6, -1.0, 0.1, 0.9]);
        let b = Mat::from_row_slice(2, 2, &[0.4, -0.6, 0.2, 0.9]);
        let c = Col::from_row_slice(&[0.1, -0.3]);
        let p = CsParams::new(1.4, 0.6).unwrap();
        let omega = crate::kernel::precision_dense(&crate::params::CovParams::Cs(p), 2);
        assert_relative_eq!(
            validation_loss(&y, &x, &b, &c, &p).unwrap(),
            validation_loss_dense(&y, &x, &b, &c, &omega),
            epsilon = 1e-10
        );
    }

    #[test]
    fn argmin_tie_breaks_to_larger_lambda() {
        let table = vec![(1.0, 5.0), (0.1, 2.0), (0.01, 2.0)];
        assert_relative_eq!(argmin_descending(&table), 0.1);
    }

    #[test]
    fn grid_is_deduplicated_and_single_value_returned() {
        let g = prepare_grid(&[0.5, 0.5, 0.1]).unwrap();
        assert_eq!(g, vec![0.5, 0.1]);
        let g1 = prepare_grid(&[0.3]).unwrap();
        assert_eq!(argmin_descending(&[(g1[0], 7.0)]), 0.3);
    }
}
