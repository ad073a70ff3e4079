//! Data generation for the simulation designs, evaluation metrics, and the
//! Monte Carlo harness for the large-sample behavior of the adaptive-weight
//! estimator.
//!
//! All randomness flows through a counter-based generator (ChaCha8) whose
//! stream key is a hash of purpose labels and the replication index, so
//! replications are reproducible independently of scheduling.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{compute_adaptive_weights, ols};
use crate::params::{CsParams, PenaltySpec};
use crate::solvers::{
    fit_ap_mrcs, fit_ap_mrgcs, fit_lasso_combined, fit_lasso_separate, fit_mrcs,
    fit_mrcs_penalized, fit_mrgcs, fit_oracle, SolverConfig,
};
use crate::tuning::{cross_validate, cv_baselines, BaselineMethod, BaselineSelection, CvPlan, Method};
use crate::{Col, Mat};
use nalgebra::SymmetricEigen;
use rand::distributions::{Bernoulli, Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// RNG substreams

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for a named sub-stream of a master seed. The stream key hashes
/// the purpose label and replication index, so `("x-train", 3)` always
/// yields the same draws for a given seed, regardless of evaluation order.
pub fn substream_rng(seed: u64, label: &str, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = label.as_bytes().to_vec();
    bytes.extend_from_slice(&rep.to_le_bytes());
    rng.set_stream(fnv1a(&bytes));
    rng
}

// ---------------------------------------------------------------------------
// Scenario description

/// Marginal error standard deviations for the generated covariance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum EtaSpec {
    /// All etas equal to the given value.
    Constant(f64),
    /// Explicit length-q vector.
    Explicit(Vec<f64>),
    /// The asymmetric block patterns used for q = 50, 20, 80.
    AsymmetricPreset,
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Constant(1.0)
    }
}

/// Error covariance family for data generation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum CovFamily {
    /// `eta^2 [(1-theta) I + theta 11']` with eta from the eta spec.
    CompoundSymmetry,
    /// `diag(eta) [(1-theta) I + theta 11'] diag(eta)`.
    GeneralEquicorrelation,
    /// `(1-omega) 0.5 CS(theta=0.9) + omega V D V'` with random orthogonal
    /// `V` and two-point diagonal `D` (value `a` with probability `prob`,
    /// else `b`).
    Corrupted { omega: f64, prob: f64, a: f64, b: f64 },
}

impl Default for CovFamily {
    fn default() -> Self {
        CovFamily::CompoundSymmetry
    }
}

/// Coefficient-matrix family.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum BFamily {
    /// `B = W * K * Q` elementwise: `W` standard normal, `K` iid
    /// Bernoulli(s1), and a per-predictor all-ones/all-zeros row mask with
    /// row proportion s2.
    BernoulliMask,
    /// Dense iid Uniform(-bound, bound) entries.
    UniformDense { bound: f64 },
}

impl Default for BFamily {
    fn default() -> Self {
        BFamily::BernoulliMask
    }
}

fn default_test_n() -> usize {
    200
}

/// A full simulation design.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default = "one")]
    pub s1: f64,
    #[serde(default = "one")]
    pub s2: f64,
    pub theta: f64,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default)]
    pub cov_family: CovFamily,
    #[serde(default)]
    pub b_family: BFamily,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    pub seed: u64,
    /// Methods to compare in the simulation driver; defaults to every
    /// method valid for the dimensions.
    #[serde(default)]
    pub methods: Option<Vec<MethodName>>,
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 || self.q == 0 || self.test_n == 0 {
            return Err(Error::InvalidInput("scenario dimensions must be positive (n >= 2)".into()));
        }
        for (name, v) in [("s1", self.s1), ("s2", self.s2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!("theta must lie in [0,1), got {}", self.theta)));
        }
        if let CovFamily::Corrupted { omega, prob, a, b } = &self.cov_family {
            if !(0.0..=1.0).contains(omega) || !(0.0..=1.0).contains(prob) {
                return Err(Error::InvalidInput("corruption omega and prob must lie in [0,1]".into()));
            }
            if !(*a > 0.0 && *b > 0.0) {
                return Err(Error::InvalidInput("two-point values must be positive".into()));
            }
        }
        if let BFamily::UniformDense { bound } = &self.b_family {
            if !(*bound > 0.0) {
                return Err(Error::InvalidInput("uniform bound must be positive".into()));
            }
        }
        if let EtaSpec::Explicit(v) = &self.eta {
            if v.len() != self.q || v.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::InvalidInput("explicit etas must be q positive values".into()));
            }
        }
        if matches!(self.eta, EtaSpec::AsymmetricPreset) && ![20, 50, 80].contains(&self.q) {
            return Err(Error::InvalidInput("asymmetric eta preset exists for q in {20, 50, 80}".into()));
        }
        Ok(())
    }

    /// Marginal error standard deviations implied by the eta spec.
    pub fn etas(&self) -> Result<Col<f64>> {
        self.validate()?;
        Ok(match &self.eta {
            EtaSpec::Constant(e) => Col::from_element(self.q, *e),
            EtaSpec::Explicit(v) => Col::from_row_slice(v),
            EtaSpec::AsymmetricPreset => Col::from_vec(asymmetric_etas(self.q)),
        })
    }
}

/// The asymmetric eta blocks for q = 50, 20, 80.
fn asymmetric_etas(q: usize) -> Vec<f64> {
    let blocks: Vec<(usize, f64)> = match q {
        50 => vec![(10, 0.5), (10, 1.0 / 2f64.sqrt()), (10, 1.0), (10, 3f64.sqrt()), (10, 3.0)],
        20 => vec![(4, 0.5), (4, 1.0 / 2f64.sqrt()), (4, 1.0), (4, 3f64.sqrt()), (4, 3.0)],
        80 => vec![
            (10, 0.5),
            (10, 1.0 / 2f64.sqrt()),
            (10, 1.0 / 2f64.powf(0.25)),
            (10, 1.0),
            (10, 3f64.sqrt()),
            (15, 2.0),
            (15, 3.0),
        ],
        _ => unreachable!("validated against q in {{20, 50, 80}}"),
    };
    blocks.iter().flat_map(|&(len, v)| std::iter::repeat(v).take(len)).collect()
}

// ---------------------------------------------------------------------------
// Generators

/// Sparse coefficient matrix `B = W * K * Q` (elementwise): `W` iid standard
/// normal, `K` iid Bernoulli(s1), and a per-predictor row mask with
/// proportion `s2` of all-one rows.
pub fn gen_b(p: usize, q: usize, s1: f64, s2: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let bern1 = Bernoulli::new(s1).expect("s1 in [0,1]");
    let bern2 = Bernoulli::new(s2).expect("s2 in [0,1]");
    let row_mask: Vec<bool> = (0..p).map(|_| bern2.sample(rng)).collect();
    let mut b = Mat::zeros(p, q);
    for j in 0..p {
        for k in 0..q {
            let w: f64 = rng.sample(StandardNormal);
            let keep = bern1.sample(rng);
            if row_mask[j] && keep {
                b[(j, k)] = w;
            }
        }
    }
    b
}

fn gen_b_uniform(p: usize, q: usize, bound: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let u = Uniform::new(-bound, bound);
    let mut b = Mat::zeros(p, q);
    for j in 0..p {
        for k in 0..q {
            b[(j, k)] = u.sample(rng);
        }
    }
    b
}

fn cs_matrix(q: usize, eta2: f64, theta: f64) -> Mat<f64> {
    let mut m = Mat::from_element(q, q, eta2 * theta);
    for j in 0..q {
        m[(j, j)] = eta2;
    }
    m
}

/// Gram-Schmidt with a second re-orthogonalization pass; `None` when a
/// column degenerates.
fn gram_schmidt(m: &Mat<f64>) -> Option<Mat<f64>> {
    let q = m.nrows();
    let mut v = m.clone();
    for j in 0..q {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = v.column(j).dot(&v.column(k));
                let col_k = v.column(k).clone_owned();
                v.column_mut(j).axpy(-proj, &col_k, 1.0);
            }
        }
        let norm = v.column(j).norm();
        if norm < 1e-12 {
            return None;
        }
        v.column_mut(j).scale_mut(1.0 / norm);
    }
    Some(v)
}

/// True error covariance for a scenario. Corrupted draws use the scenario's
/// `sigma` sub-stream.
pub fn gen_sigma(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<Mat<f64>> {
    scenario.validate()?;
    let q = scenario.q;
    let etas = scenario.etas()?;
    match &scenario.cov_family {
        CovFamily::CompoundSymmetry | CovFamily::GeneralEquicorrelation => {
            let base = cs_matrix(q, 1.0, scenario.theta);
            let mut sigma = base;
            for j in 0..q {
                for k in 0..q {
                    sigma[(j, k)] *= etas[j] * etas[k];
                }
            }
            Ok(sigma)
        }
        CovFamily::Corrupted { omega, prob, a, b } => {
            let base = cs_matrix(q, 0.5, 0.9);
            let bern = Bernoulli::new(*prob).expect("prob in [0,1]");
            let mut v = None;
            for _try in 0..10 {
                let mut raw = Mat::zeros(q, q);
                for j in 0..q {
                    for k in 0..q {
                        raw[(j, k)] = rng.sample(StandardNormal);
                    }
                }
                if let Some(ortho) = gram_schmidt(&raw) {
                    v = Some(ortho);
                    break;
                }
            }
            let v = v.ok_or_else(|| {
                Error::Numerical("orthogonalization failed after 10 redraws".into())
            })?;
            let d: Vec<f64> = (0..q).map(|_| if bern.sample(rng) { *a } else { *b }).collect();
            let mut vdv = Mat::zeros(q, q);
            for j in 0..q {
                for k in 0..q {
                    let mut s = 0.0;
                    for m in 0..q {
                        s += v[(j, m)] * d[m] * v[(k, m)];
                    }
                    vdv[(j, k)] = s;
                }
            }
            Ok(base * (1.0 - omega) + vdv * *omega)
        }
    }
}

/// Autoregressive predictor covariance, `(Sigma_X)_{ij} = 0.7^{|i-j|}`.
pub fn sigma_x(p: usize) -> Mat<f64> {
    Mat::from_fn(p, p, |i, j| 0.7f64.powi((i as i64 - j as i64).unsigned_abs() as i32))
}

/// Response mean vector `mu = (1, 1 + 4/(q-1), ..., 5)`.
pub fn mu_vector(q: usize) -> Col<f64> {
    if q == 1 {
        return Col::from_element(1, 1.0);
    }
    Col::from_fn(q, |j, _| 1.0 + 4.0 * j as f64 / (q as f64 - 1.0))
}

fn sample_rows(n: usize, chol_lower: &Mat<f64>, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let d = chol_lower.nrows();
    let mut m = Mat::zeros(n, d);
    for i in 0..n {
        let z = Col::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row = chol_lower * z;
        for j in 0..d {
            m[(i, j)] = row[j];
        }
    }
    m
}

/// Everything one replication of a scenario generates.
#[derive(Debug, Clone)]
pub struct SimData {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub b_true: Mat<f64>,
    pub sigma_x: Mat<f64>,
    pub sigma_true: Mat<f64>,
}

/// Generates one replication: `Y = mu + X B + E` with AR(0.7) predictors and
/// the scenario's error covariance, plus an independent test set.
pub fn gen_dataset(scenario: &Scenario, rep: u64) -> Result<SimData> {
    scenario.validate()?;
    let (n, p, q) = (scenario.n, scenario.p, scenario.q);
    let sx = sigma_x(p);
    let lx = crate::lasso::cholesky(&sx)
        .ok_or_else(|| Error::Numerical("Sigma_X not positive definite".into()))?;
    let sigma = gen_sigma(scenario, &mut substream_rng(scenario.seed, "sigma", rep))?;
    let le = crate::lasso::cholesky(&sigma)
        .ok_or_else(|| Error::Numerical("Sigma_* not positive definite".into()))?;
    let b_true = match &scenario.b_family {
        BFamily::BernoulliMask => gen_b(
            p,
            q,
            scenario.s1,
            scenario.s2,
            &mut substream_rng(scenario.seed, "b-true", rep),
        ),
        BFamily::UniformDense { bound } => {
            gen_b_uniform(p, q, *bound, &mut substream_rng(scenario.seed, "b-true", rep))
        }
    };
    let mu = mu_vector(q);

    let make = |label_x: &str, label_e: &str, rows: usize| -> Result<Dataset<f64>> {
        let x = sample_rows(rows, &lx, &mut substream_rng(scenario.seed, label_x, rep));
        let e = sample_rows(rows, &le, &mut substream_rng(scenario.seed, label_e, rep));
        let mut y = &x * &b_true + e;
        for k in 0..q {
            let m = mu[k];
            y.column_mut(k).iter_mut().for_each(|v| *v += m);
        }
        Dataset::new(x, y)
    };
    Ok(SimData {
        train: make("x-train", "e-train", n)?,
        test: make("x-test", "e-test", scenario.test_n)?,
        b_true,
        sigma_x: sx,
        sigma_true: sigma,
    })
}

/// Ratio of the largest to smallest eigenvalue of a symmetric matrix.
pub fn condition_number(m: &Mat<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi / lo
}

// ---------------------------------------------------------------------------
// Metrics

/// Evaluation report for one fitted coefficient matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `tr[(Bhat - B*)' Sigma_X (Bhat - B*)]`
    pub model_error: f64,
    /// `||Yhat - Y||_F^2` on the test set.
    pub prediction_error: f64,
    /// Prediction error divided by the number of test observations.
    pub prediction_error_per_obs: f64,
    /// Fraction of true zeros estimated as zero; `None` when `B*` has no
    /// zero entries.
    pub tnr: Option<f64>,
    /// Fraction of true nonzeros estimated as nonzero; `None` when `B*` has
    /// no nonzero entries.
    pub tpr: Option<f64>,
}

/// Computes model error, test prediction error, and support recovery rates.
pub fn metrics(
    b_hat: &Mat<f64>,
    b_true: &Mat<f64>,
    sigma_x: &Mat<f64>,
    y_test: &Mat<f64>,
    yhat_test: &Mat<f64>,
) -> Result<MetricsReport> {
    if b_hat.shape() != b_true.shape() || y_test.shape() != yhat_test.shape() {
        return Err(Error::DimensionMismatch("metrics input shapes disagree".into()));
    }
    if sigma_x.nrows() != b_hat.nrows() {
        return Err(Error::DimensionMismatch("Sigma_X must be p x p".into()));
    }
    let diff = b_hat - b_true;
    let model_error = (diff.transpose() * sigma_x * &diff).trace();
    let prediction_error: f64 = (y_test - yhat_test).iter().map(|v| v * v).sum();
    let (mut zeros, mut zero_hits, mut nonzeros, mut nonzero_hits) = (0u64, 0u64, 0u64, 0u64);
    for j in 0..b_true.nrows() {
        for k in 0..b_true.ncols() {
            if b_true[(j, k)] == 0.0 {
                zeros += 1;
                if b_hat[(j, k)] == 0.0 {
                    zero_hits += 1;
                }
            } else {
                nonzeros += 1;
                if b_hat[(j, k)] != 0.0 {
                    nonzero_hits += 1;
                }
            }
        }
    }
    Ok(MetricsReport {
        model_error,
        prediction_error,
        prediction_error_per_obs: prediction_error / y_test.nrows() as f64,
        tnr: (zeros > 0).then(|| zero_hits as f64 / zeros as f64),
        tpr: (nonzeros > 0).then(|| nonzero_hits as f64 / nonzeros as f64),
    })
}

// ---------------------------------------------------------------------------
// Limiting covariance of the covariance-parameter estimators

/// Limiting 2x2 covariance `V` of the per-observation statistics
/// `(E'E/q, E'QE/(q(q-1)))` under Gaussian compound-symmetry errors, with
/// `Q = qI - 11'`. Uses the Gaussian fourth-moment identity
/// `cov(E_j E_k, E_l E_m) = S_jl S_km + S_jm S_kl`.
pub fn limiting_v_gaussian(params: &CsParams<f64>, q: usize) -> Mat<f64> {
    let sigma = cs_matrix(q, params.eta2, params.theta);
    let qf = q as f64;
    let qm1 = qf - 1.0;
    let qmat = Mat::from_fn(q, q, |i, j| if i == j { qf - 1.0 } else { -1.0 });
    let v11 = 2.0 * sigma.iter().map(|v| v * v).sum::<f64>() / (qf * qf);
    let qs = &qmat * &sigma;
    let v22 = 2.0 * (&qs * &qs).trace() / (qf * qf * qm1 * qm1);
    let v12 = 2.0 * (&qs * &sigma).trace() / (qf * qf * qm1);
    Mat::from_row_slice(2, 2, &[v11, v12, v12, v22])
}

/// Asymptotic variance of `sqrt(n) (theta_hat - theta*)`: the delta-method
/// image of `V` under `(d, a) -> (d - a)/d`, with gradient
/// `((1-theta)/eta^2, -1/eta^2)` at the truth.
pub fn theta_limit_variance(params: &CsParams<f64>, q: usize) -> f64 {
    let v = limiting_v_gaussian(params, q);
    let g = [(1.0 - params.theta) / params.eta2, -1.0 / params.eta2];
    g[0] * g[0] * v[(0, 0)] + 2.0 * g[0] * g[1] * v[(0, 1)] + g[1] * g[1] * v[(1, 1)]
}

// ---------------------------------------------------------------------------
// Adaptive-weight asymptotics harness

/// Per-sample-size summary from the asymptotics harness.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsRow {
    pub n: usize,
    pub reps: usize,
    pub rmse_eta2: f64,
    pub rmse_theta: f64,
    pub sqrt_n_rmse_theta: f64,
    /// Empirical variance of `sqrt(n) (theta_hat - theta*)`.
    pub var_sqrt_n_theta_err: f64,
    pub mean_eta2: f64,
    pub se_mean_eta2: f64,
    /// Fraction of true-zero coefficients estimated exactly zero.
    pub zero_recovery: f64,
    /// Fraction of true-nonzero coefficients estimated nonzero.
    pub nonzero_recovery: f64,
}

/// Repeatedly fits the adaptive-weight compound-symmetry estimator on data
/// of growing size, with `lambda_n = n^{-3/4}` (which satisfies
/// `lambda sqrt(n) -> 0` and `lambda n^{(r+1)/2} -> inf` for r > 1).
///
/// The true `B` is drawn once (Bernoulli(0.5) masks, redrawn until both
/// zero and nonzero entries are present) and shared across replications and
/// sample sizes.
pub fn asymptotics_harness(
    p: usize,
    q: usize,
    theta_true: f64,
    eta2_true: f64,
    n_list: &[usize],
    reps: usize,
    r: f64,
    seed: u64,
) -> Result<Vec<AsymptoticsRow>> {
    if !(r > 1.0) {
        return Err(Error::InvalidInput("weight exponent r must exceed 1".into()));
    }
    for &n in n_list {
        if n <= p + q {
            return Err(Error::UnsupportedRegime(format!("need n > p + q, got n = {n}")));
        }
    }
    let truth = CsParams::new(eta2_true, theta_true)?;
    let mut b_true = Mat::zeros(p, q);
    {
        let mut rng = substream_rng(seed, "b-true", 0);
        for attempt in 0..100 {
            b_true = gen_b(p, q, 0.5, 0.5, &mut rng);
            let nz = b_true.iter().filter(|v| **v != 0.0).count();
            if nz > 0 && nz < p * q {
                break;
            }
            if attempt == 99 {
                return Err(Error::Numerical("could not draw a mixed-support B".into()));
            }
        }
    }
    let sx = sigma_x(p);
    let lx = crate::lasso::cholesky(&sx).expect("AR covariance is SPD");
    let sigma = cs_matrix(q, truth.eta2, truth.theta);
    let le = crate::lasso::cholesky(&sigma).expect("CS covariance is SPD");

    let cfg = SolverConfig::default();
    let mut rows = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let mut se_theta = 0.0f64;
        let mut se_eta2 = 0.0f64;
        let mut theta_errs = Vec::with_capacity(reps);
        let mut eta2_sum = 0.0f64;
        let mut eta2_sumsq = 0.0f64;
        let (mut zeros, mut zero_hits, mut nonzeros, mut nonzero_hits) = (0u64, 0u64, 0u64, 0u64);
        for rep in 0..reps {
            let tag = (ni as u64) << 32 | rep as u64;
            let x = sample_rows(n, &lx, &mut substream_rng(seed, "x", tag));
            let e = sample_rows(n, &le, &mut substream_rng(seed, "e", tag));
            let y = &x * &b_true + e;
            let d = Dataset::new(x, y)?.centered();
            let weights = compute_adaptive_weights(&d, r)?;
            let lambda = (n as f64).powf(-0.75);
            let pen = PenaltySpec::new(lambda, Some(weights))?;
            let b0 = ols(&d)?;
            let fit = fit_mrcs_penalized(&d, &pen, &cfg, Some(&b0))?;
            let est = fit.cov.as_cs().expect("MRCS returns compound symmetry");
            let te = est.theta - theta_true;
            let ee = est.eta2 - eta2_true;
            se_theta += te * te;
            se_eta2 += ee * ee;
            theta_errs.push(te * (n as f64).sqrt());
            eta2_sum += est.eta2;
            eta2_sumsq += est.eta2 * est.eta2;
            for j in 0..p {
                for k in 0..q {
                    if b_true[(j, k)] == 0.0 {
                        zeros += 1;
                        if fit.b[(j, k)] == 0.0 {
                            zero_hits += 1;
                        }
                    } else {
                        nonzeros += 1;
                        if fit.b[(j, k)] != 0.0 {
                            nonzero_hits += 1;
                        }
                    }
                }
            }
        }
        let reps_f = reps as f64;
        let mean_te = theta_errs.iter().sum::<f64>() / reps_f;
        let var_te =
            theta_errs.iter().map(|v| (v - mean_te) * (v - mean_te)).sum::<f64>() / (reps_f - 1.0);
        let mean_eta2 = eta2_sum / reps_f;
        let var_eta2 = (eta2_sumsq / reps_f - mean_eta2 * mean_eta2) * reps_f / (reps_f - 1.0);
        rows.push(AsymptoticsRow {
            n,
            reps,
            rmse_eta2: (se_eta2 / reps_f).sqrt(),
            rmse_theta: (se_theta / reps_f).sqrt(),
            sqrt_n_rmse_theta: (n as f64).sqrt() * (se_theta / reps_f).sqrt(),
            var_sqrt_n_theta_err: var_te,
            mean_eta2,
            se_mean_eta2: (var_eta2 / reps_f).sqrt(),
            zero_recovery: zero_hits as f64 / zeros.max(1) as f64,
            nonzero_recovery: nonzero_hits as f64 / nonzeros.max(1) as f64,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Method-level driver shared by the CLI and the experiment tests

/// Every fitting method the simulation driver can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Ols,
    LassoComb,
    LassoSep,
    RidgeComb,
    RidgeSep,
    Mrcs,
    ApMrcs,
    Mrgcs,
    ApMrgcs,
    Oracle,
}

impl MethodName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ols" => Self::Ols,
            "lasso-comb" => Self::LassoComb,
            "lasso-sep" => Self::LassoSep,
            "ridge-comb" => Self::RidgeComb,
            "ridge-sep" => Self::RidgeSep,
            "mrcs" => Self::Mrcs,
            "ap-mrcs" => Self::ApMrcs,
            "mrgcs" => Self::Mrgcs,
            "ap-mrgcs" => Self::ApMrgcs,
            "oracle" => Self::Oracle,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown method '{other}' (expected one of ols, lasso-comb, lasso-sep, \
                     ridge-comb, ridge-sep, mrcs, ap-mrcs, mrgcs, ap-mrgcs, oracle)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::LassoComb => "lasso-comb",
            Self::LassoSep => "lasso-sep",
            Self::RidgeComb => "ridge-comb",
            Self::RidgeSep => "ridge-sep",
            Self::Mrcs => "mrcs",
            Self::ApMrcs => "ap-mrcs",
            Self::Mrgcs => "mrgcs",
            Self::ApMrgcs => "ap-mrgcs",
            Self::Oracle => "oracle",
        }
    }

    /// Exact algorithms are refused when `p >= n`.
    pub fn needs_low_dim(&self) -> bool {
        matches!(self, Self::Ols | Self::Mrcs | Self::Mrgcs)
    }
}

/// A cross-validated fit of one method: coefficients, intercept, and the
/// selected tuning parameter(s).
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub method: MethodName,
    pub b: Mat<f64>,
    pub intercept: Col<f64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Col<f64>>,
    pub cv_table: Option<Vec<(f64, f64)>>,
    pub cov: Option<crate::params::CovParams<f64>>,
    pub converged: bool,
}

/// Fits `method` on `dataset` with cross-validated tuning. The oracle method
/// requires the true precision.
pub fn fit_with_cv(
    dataset: &Dataset<f64>,
    method: MethodName,
    plan: &CvPlan,
    cfg: &SolverConfig,
    omega_true: Option<&Mat<f64>>,
) -> Result<MethodFit> {
    let d = dataset.centered();
    let mk = |b: Mat<f64>,
              lambda: Option<f64>,
              lambdas: Option<Col<f64>>,
              table: Option<Vec<(f64, f64)>>,
              cov: Option<crate::params::CovParams<f64>>,
              converged: bool| {
        let intercept = d.intercept_for(&b);
        MethodFit { method, b, intercept, lambda, lambdas, cv_table: table, cov, converged }
    };
    match method {
        MethodName::Ols => {
            let b = ols(&d)?;
            Ok(mk(b, None, None, None, None, true))
        }
        MethodName::LassoComb | MethodName::RidgeComb => {
            let bm = if method == MethodName::LassoComb {
                BaselineMethod::LassoCombined
            } else {
                BaselineMethod::RidgeCombined
            };
            let sel = cv_baselines(dataset, bm, plan, &cfg.cd)?;
            let BaselineSelection::Single(lambda) = sel else { unreachable!() };
            let b = if method == MethodName::LassoComb {
                fit_lasso_combined(&d, lambda, &cfg.cd)?
            } else {
                crate::lasso::fit_ridge(&d, lambda)?
            };
            Ok(mk(b, Some(lambda), None, None, None, true))
        }
        MethodName::LassoSep | MethodName::RidgeSep => {
            let bm = if method == MethodName::LassoSep {
                BaselineMethod::LassoSeparate
            } else {
                BaselineMethod::RidgeSeparate
            };
            let sel = cv_baselines(dataset, bm, plan, &cfg.cd)?;
            let BaselineSelection::PerResponse(lambdas) = sel else { unreachable!() };
            let b = if method == MethodName::LassoSep {
                fit_lasso_separate(&d, &lambdas, &cfg.cd)?
            } else {
                crate::lasso::fit_ridge_separate(&d, &lambdas)?
            };
            Ok(mk(b, None, Some(lambdas), None, None, true))
        }
        MethodName::Mrcs | MethodName::ApMrcs | MethodName::Mrgcs | MethodName::ApMrgcs => {
            let m = match method {
                MethodName::Mrcs => Method::Mrcs,
                MethodName::ApMrcs => Method::ApMrcs,
                MethodName::Mrgcs => Method::Mrgcs,
                MethodName::ApMrgcs => Method::ApMrgcs,
                _ => unreachable!(),
            };
            let (lambda, table) = cross_validate(dataset, &m, plan, cfg)?;
            let fit = match method {
                MethodName::Mrcs => fit_mrcs(&d, lambda, cfg, None)?,
                MethodName::ApMrcs => fit_ap_mrcs(&d, lambda, cfg, None)?,
                MethodName::Mrgcs => fit_mrgcs(&d, lambda, cfg, None)?,
                MethodName::ApMrgcs => fit_ap_mrgcs(&d, lambda, cfg, None)?,
                _ => unreachable!(),
            };
            Ok(MethodFit {
                method,
                intercept: fit.intercept,
                b: fit.b,
                lambda: Some(lambda),
                lambdas: None,
                cv_table: Some(table),
                cov: Some(fit.cov),
                converged: fit.converged,
            })
        }
        MethodName::Oracle => {
            let omega = omega_true
                .ok_or_else(|| Error::InvalidInput("oracle method needs the true precision".into()))?;
            let (lambda, table) = cross_validate(dataset, &Method::Oracle(omega.clone()), plan, cfg)?;
            let b = fit_oracle(&d, lambda, omega, None, &cfg.cd)?;
            Ok(mk(b, Some(lambda), None, Some(table), None, true))
        }
    }
}

/// One full scenario replication: generate data, fit every requested method
/// with cross validation, evaluate on the test set. Deterministic in
/// `(scenario, rep)`.
pub fn run_replication(
    scenario: &Scenario,
    rep: u64,
    methods: &[MethodName],
    plan: &CvPlan,
    cfg: &SolverConfig,
) -> Result<(SimData, Vec<(MethodName, MetricsReport)>)> {
    let data = gen_dataset(scenario, rep)?;
    let omega_true = data
        .sigma_true
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("true covariance is singular".into()))?;
    // fold seeds vary with the replication
    let plan = CvPlan { seed: plan.seed.wrapping_add(rep.wrapping_mul(0x9e37_79b9)), ..plan.clone() };
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let fit = fit_with_cv(&data.train, m, &plan, cfg, Some(&omega_true))?;
        let yhat = crate::kernel::predict(&data.test.x, &fit.b, &fit.intercept);
        let rep_metrics = metrics(&fit.b, &data.b_true, &data.sigma_x, &data.test.y, &yhat)?;
        out.push((m, rep_metrics));
    }
    Ok((data, out))
}

/// Default method list for a scenario: every method, dropping the exact
/// algorithms (and OLS) when `p >= n`.
pub fn default_methods(scenario: &Scenario) -> Vec<MethodName> {
    use MethodName::*;
    let all = [LassoComb, LassoSep, RidgeComb, RidgeSep, Mrcs, ApMrcs, Mrgcs, ApMrgcs, Oracle];
    all.into_iter().filter(|m| !(m.needs_low_dim() && scenario.p >= scenario.n)).collect()
}

/// Median and quartiles (linear interpolation) of a sample.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| -> f64 {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            v[lo]
        } else {
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        }
    };
    (at(0.25), at(0.5), at(0.75))
}
