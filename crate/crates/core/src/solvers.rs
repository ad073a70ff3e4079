//! Blockwise coordinate-descent fitters: MRCS and MRGCS alternate a
//! covariance-block update with the penalized `B` subproblem until the
//! objective stalls; the `ap.` variants estimate the covariance once at the
//! initializer and solve for `B` a single time. An oracle fitter takes the
//! true precision as given.

use crate::covariance::{update_cs, update_eta_j, update_theta_line_search};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{logdet_sigma, precision_dense, residuals, structured_trace, structured_trace_gen};
use crate::lasso::{solve_penalized_b, CdConfig};
use crate::params::{CovParams, CsParams, FitResult, GenEqParams, PenaltySpec};
use crate::tuning::fold_indices;
use crate::{Col, Mat};

/// How the starting `B` for the alternating algorithms is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initializer {
    /// q lasso regressions sharing one cross-validated tuning parameter.
    CombinedLasso,
    /// q lasso regressions, each with its own cross-validated parameter.
    SeparateLasso,
    Zero,
}

/// Controls for the outer (and, for ap.MRGCS, inner) loops.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Outer stop: `|F change| < epsilon * tr(Y'Y) / n`.
    pub epsilon: f64,
    pub max_outer: usize,
    /// ap.MRGCS inner loop: relative covariance-objective change threshold.
    pub inner_tol: f64,
    pub inner_max: usize,
    pub initializer: Initializer,
    pub cd: CdConfig<f64>,
    /// Cross-validation settings for the lasso initializer.
    pub init_folds: usize,
    pub init_grid: Vec<f64>,
    pub init_seed: u64,
}

/// The paper's default tuning grid, `10^(-4 + 0.5 k)` for `k = 0..=14`,
/// sorted descending.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=14).rev().map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            max_outer: 500,
            inner_tol: 1e-8,
            inner_max: 1000,
            initializer: Initializer::CombinedLasso,
            cd: CdConfig::default(),
            init_folds: 5,
            init_grid: default_lambda_grid(),
            init_seed: 0,
        }
    }
}

/// Lasso-path fit of one response column over a descending grid with warm
/// starts; returns B columns for each lambda.
fn lasso_path_column(
    train: &Dataset<f64>,
    grid: &[f64],
    cfg: &CdConfig<f64>,
) -> Result<Vec<Mat<f64>>> {
    let identity = Mat::identity(train.q(), train.q());
    let mut b = Mat::zeros(train.p(), train.q());
    let mut path = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let pen = PenaltySpec::plain(lambda)?;
        b = solve_penalized_b(train, &identity, &pen, &b, cfg)?.b;
        path.push(b.clone());
    }
    Ok(path)
}

/// Lasso initializer (combined or separate mode): selects the tuning
/// parameter(s) by K-fold validation squared prediction error, then fits the
/// full data at the winner. Deterministic in `(n, K, seed)`.
pub fn init_b(
    dataset: &Dataset<f64>,
    k_folds: usize,
    grid: &[f64],
    mode: Initializer,
    seed: u64,
    cd: &CdConfig<f64>,
) -> Result<Mat<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if mode == Initializer::Zero {
        return Ok(Mat::zeros(dataset.p(), dataset.q()));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    grid.dedup();

    let q = dataset.q();
    let folds = fold_indices(dataset.n(), k_folds, seed)?;
    // err[(g, k)]: held-out squared error of grid point g on response k
    let mut err = Mat::<f64>::zeros(grid.len(), q);
    for fold in &folds {
        let hold: Vec<usize> = fold.clone();
        let train_rows: Vec<usize> =
            (0..dataset.n()).filter(|i| !hold.contains(i)).collect();
        let train = dataset.select_rows(&train_rows).centered();
        let valid = dataset.select_rows(&hold);
        let path = lasso_path_column(&train, &grid, cd)?;
        for (g, b) in path.iter().enumerate() {
            // validation residuals centered with training-fold means
            let intercept = train.intercept_for(b);
            let yhat = crate::kernel::predict(&valid.x, b, &intercept);
            let r = &valid.y - yhat;
            for k in 0..q {
                err[(g, k)] += r.column(k).iter().map(|v| v * v).sum::<f64>();
            }
        }
    }

    let centered = dataset.centered();
    match mode {
        Initializer::CombinedLasso => {
            let mut best = 0usize;
            let mut best_v = f64::INFINITY;
            for g in 0..grid.len() {
                let tot: f64 = err.row(g).iter().sum();
                if tot < best_v {
                    best_v = tot;
                    best = g;
                }
            }
            let pen = PenaltySpec::plain(grid[best])?;
            let identity = Mat::identity(q, q);
            Ok(solve_penalized_b(&centered, &identity, &pen, &Mat::zeros(centered.p(), q), cd)?.b)
        }
        Initializer::SeparateLasso => {
            let mut b = Mat::zeros(centered.p(), q);
            for k in 0..q {
                let mut best = 0usize;
                let mut best_v = f64::INFINITY;
                for g in 0..grid.len() {
                    if err[(g, k)] < best_v {
                        best_v = err[(g, k)];
                        best = g;
                    }
                }
                let yk = Mat::from_columns(&[centered.y.column(k)]);
                let dk = Dataset {
                    x: centered.x.clone(),
                    y: yk,
                    x_means: centered.x_means.clone(),
                    y_means: Col::from_element(1, centered.y_means[k]),
                    centered: true,
                };
                let pen = PenaltySpec::plain(grid[best])?;
                let one = Mat::identity(1, 1);
                let sol = solve_penalized_b(&dk, &one, &pen, &Mat::zeros(centered.p(), 1), cd)?;
                b.set_column(k, &sol.b.column(0));
            }
            Ok(b)
        }
        Initializer::Zero => unreachable!(),
    }
}

fn starting_b(
    dataset: &Dataset<f64>,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<Mat<f64>> {
    match b0 {
        Some(b) => Ok(b.clone()),
        None => init_b(dataset, cfg.init_folds, &cfg.init_grid, cfg.initializer, cfg.init_seed, &cfg.cd),
    }
}

/// Penalized objective under compound symmetry, including the penalty term.
pub fn objective_cs(
    d: &Dataset<f64>,
    b: &Mat<f64>,
    params: &CsParams<f64>,
    pen: &PenaltySpec<f64>,
) -> Result<f64> {
    let r = residuals(d, b);
    let n = d.n() as f64;
    Ok(structured_trace(&r, params)? / n
        + logdet_sigma(&CovParams::Cs(*params), d.q())
        + pen.value(b))
}

/// Penalized objective under general equicorrelation.
pub fn objective_gen(
    d: &Dataset<f64>,
    b: &Mat<f64>,
    params: &GenEqParams<f64>,
    pen: &PenaltySpec<f64>,
) -> Result<f64> {
    let r = residuals(d, b);
    let n = d.n() as f64;
    Ok(structured_trace_gen(&r, params)? / n
        + logdet_sigma(&CovParams::GenEq(params.clone()), d.q())
        + pen.value(b))
}

fn require_low_dim(dataset: &Dataset<f64>, method: &str) -> Result<()> {
    if dataset.p() >= dataset.n() {
        return Err(Error::UnsupportedRegime(format!(
            "{method} needs p < n (p = {}, n = {}); use the ap.{method} variant",
            dataset.p(),
            dataset.n()
        )));
    }
    Ok(())
}

fn require_multiresponse(dataset: &Dataset<f64>) -> Result<()> {
    if dataset.q() < 2 {
        return Err(Error::InvalidInput("need q >= 2 responses".into()));
    }
    Ok(())
}

/// Exact compound-symmetry fit (Algorithm: alternate the closed-form
/// covariance update with the penalized `B` solve until the objective
/// change drops below `epsilon * tr(Y'Y)/n`).
pub fn fit_mrcs(
    dataset: &Dataset<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<FitResult<f64>> {
    let pen = PenaltySpec::plain(lambda)?;
    fit_mrcs_penalized(dataset, &pen, cfg, b0)
}

/// Compound-symmetry fit with an arbitrary (possibly weighted) penalty.
pub fn fit_mrcs_penalized(
    dataset: &Dataset<f64>,
    pen: &PenaltySpec<f64>,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<FitResult<f64>> {
    require_multiresponse(dataset)?;
    require_low_dim(dataset, "MRCS")?;
    let d = dataset.centered();
    let mut b = starting_b(&d, cfg, b0)?;
    let mut params = CsParams::identity();
    let scale = d.response_scale();
    let mut trace = vec![objective_cs(&d, &b, &params, &pen)?];
    let mut converged = false;
    let mut iters = 0usize;
    while iters < cfg.max_outer {
        params = update_cs(&residuals(&d, &b))?;
        let omega = precision_dense(&CovParams::Cs(params), d.q());
        b = solve_penalized_b(&d, &omega, &pen, &b, &cfg.cd)?.b;
        let f = objective_cs(&d, &b, &params, &pen)?;
        let prev = *trace.last().unwrap();
        trace.push(f);
        iters += 1;
        if (f - prev).abs() < cfg.epsilon * scale {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        intercept: d.intercept_for(&b),
        b,
        cov: CovParams::Cs(params),
        lambda: pen.lambda,
        objective_trace: trace,
        outer_iters: iters,
        converged,
    })
}

/// One-shot compound-symmetry fit: covariance from the initializer's
/// residuals, then a single `B` solve.
pub fn fit_ap_mrcs(
    dataset: &Dataset<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<FitResult<f64>> {
    require_multiresponse(dataset)?;
    let d = dataset.centered();
    let pen = PenaltySpec::plain(lambda)?;
    let binit = starting_b(&d, cfg, b0)?;
    let params = update_cs(&residuals(&d, &binit))?;
    let mut trace = vec![objective_cs(&d, &binit, &params, &pen)?];
    let omega = precision_dense(&CovParams::Cs(params), d.q());
    let b = solve_penalized_b(&d, &omega, &pen, &binit, &cfg.cd)?.b;
    trace.push(objective_cs(&d, &b, &params, &pen)?);
    Ok(FitResult {
        intercept: d.intercept_for(&b),
        b,
        cov: CovParams::Cs(params),
        lambda,
        objective_trace: trace,
        outer_iters: 1,
        converged: true,
    })
}

/// One cycle of the general-equicorrelation covariance block: each `eta_j`
/// in order using freshest values, then the `theta` line search.
fn gen_cov_cycle(r: &Mat<f64>, etas: &mut Col<f64>, theta: &mut f64) -> Result<()> {
    for j in 0..r.ncols() {
        etas[j] = update_eta_j(r, etas, *theta, j)?;
    }
    *theta = update_theta_line_search(r, etas)?;
    Ok(())
}

/// Exact general-equicorrelation fit: single covariance cycle per outer
/// iteration, then the `B` solve.
pub fn fit_mrgcs(
    dataset: &Dataset<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<FitResult<f64>> {
    require_multiresponse(dataset)?;
    require_low_dim(dataset, "MRGCS")?;
    let d = dataset.centered();
    let pen = PenaltySpec::plain(lambda)?;
    let mut b = starting_b(&d, cfg, b0)?;
    let mut etas = Col::from_element(d.q(), 1.0);
    let mut theta = 0.0f64;
    let scale = d.response_scale();
    let params0 = GenEqParams { etas: etas.clone(), theta };
    let mut trace = vec![objective_gen(&d, &b, &params0, &pen)?];
    let mut converged = false;
    let mut iters = 0usize;
    while iters < cfg.max_outer {
        let r = residuals(&d, &b);
        gen_cov_cycle(&r, &mut etas, &mut theta)?;
        let params = GenEqParams { etas: etas.clone(), theta };
        let omega = precision_dense(&CovParams::GenEq(params.clone()), d.q());
        b = solve_penalized_b(&d, &omega, &pen, &b, &cfg.cd)?.b;
        let f = objective_gen(&d, &b, &params, &pen)?;
        let prev = *trace.last().unwrap();
        trace.push(f);
        iters += 1;
        if (f - prev).abs() < cfg.epsilon * scale {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        intercept: d.intercept_for(&b),
        b,
        cov: CovParams::GenEq(GenEqParams { etas, theta }),
        lambda,
        objective_trace: trace,
        outer_iters: iters,
        converged,
    })
}

/// Covariance half of the one-shot general-equicorrelation fit: the cycle
/// runs to inner convergence on the residuals at a fixed `B`.
pub fn ap_mrgcs_cov(
    d: &Dataset<f64>,
    b: &Mat<f64>,
    cfg: &SolverConfig,
) -> Result<GenEqParams<f64>> {
    let r = residuals(d, b);
    let mut etas = Col::from_element(d.q(), 1.0);
    let mut theta = 0.0f64;
    let nopen = PenaltySpec::plain(0.0)?;
    let mut prev = objective_gen(d, b, &GenEqParams { etas: etas.clone(), theta }, &nopen)?;
    for _ in 0..cfg.inner_max {
        gen_cov_cycle(&r, &mut etas, &mut theta)?;
        let f = objective_gen(d, b, &GenEqParams { etas: etas.clone(), theta }, &nopen)?;
        let done = (prev - f).abs() < cfg.inner_tol * f.abs().max(1.0);
        prev = f;
        if done {
            break;
        }
    }
    Ok(GenEqParams { etas, theta })
}

/// One-shot general-equicorrelation fit: the covariance cycle runs to inner
/// convergence at the initializer, then a single `B` solve.
pub fn fit_ap_mrgcs(
    dataset: &Dataset<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    b0: Option<&Mat<f64>>,
) -> Result<FitResult<f64>> {
    require_multiresponse(dataset)?;
    let d = dataset.centered();
    let pen = PenaltySpec::plain(lambda)?;
    let binit = starting_b(&d, cfg, b0)?;
    let params = ap_mrgcs_cov(&d, &binit, cfg)?;
    let mut trace = vec![objective_gen(&d, &binit, &params, &pen)?];
    let omega = precision_dense(&CovParams::GenEq(params.clone()), d.q());
    let b = solve_penalized_b(&d, &omega, &pen, &binit, &cfg.cd)?.b;
    trace.push(objective_gen(&d, &b, &params, &pen)?);
    Ok(FitResult {
        intercept: d.intercept_for(&b),
        b,
        cov: CovParams::GenEq(params),
        lambda,
        objective_trace: trace,
        outer_iters: 1,
        converged: true,
    })
}

/// `B` fit with the true precision supplied (the oracle reference).
pub fn fit_oracle(
    dataset: &Dataset<f64>,
    lambda: f64,
    omega_true: &Mat<f64>,
    b0: Option<&Mat<f64>>,
    cd: &CdConfig<f64>,
) -> Result<Mat<f64>> {
    let d = dataset.centered();
    let pen = PenaltySpec::plain(lambda)?;
    let start = match b0 {
        Some(b) => b.clone(),
        None => Mat::zeros(d.p(), d.q()),
    };
    Ok(solve_penalized_b(&d, omega_true, &pen, &start, cd)?.b)
}

/// Combined lasso at a fixed tuning parameter (identity precision).
pub fn fit_lasso_combined(
    dataset: &Dataset<f64>,
    lambda: f64,
    cd: &CdConfig<f64>,
) -> Result<Mat<f64>> {
    let d = dataset.centered();
    let identity = Mat::identity(d.q(), d.q());
    let pen = PenaltySpec::plain(lambda)?;
    Ok(solve_penalized_b(&d, &identity, &pen, &Mat::zeros(d.p(), d.q()), cd)?.b)
}

/// Separate lasso: one tuning parameter per response column.
pub fn fit_lasso_separate(
    dataset: &Dataset<f64>,
    lambdas: &Col<f64>,
    cd: &CdConfig<f64>,
) -> Result<Mat<f64>> {
    let d = dataset.centered();
    if lambdas.len() != d.q() {
        return Err(Error::DimensionMismatch("one lambda per response required".into()));
    }
    let mut b = Mat::zeros(d.p(), d.q());
    let one = Mat::identity(1, 1);
    for k in 0..d.q() {
        let yk = Mat::from_columns(&[d.y.column(k)]);
        let dk = Dataset {
            x: d.x.clone(),
            y: yk,
            x_means: d.x_means.clone(),
            y_means: Col::from_element(1, d.y_means[k]),
            centered: true,
        };
        let pen = PenaltySpec::plain(lambdas[k])?;
        let sol = solve_penalized_b(&dk, &one, &pen, &Mat::zeros(d.p(), 1), cd)?;
        b.set_column(k, &sol.b.column(0));
    }
    Ok(b)
}
