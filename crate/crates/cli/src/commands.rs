//! Implementations of the subcommands. All fallible work returns `CliError`,
//! which carries the process exit code.

use crate::artifact::{CovArtifact, FitArtifact, ARTIFACT_VERSION};
use crate::csvio::{read_matrix, write_atomic, write_matrix};
use equicorr::simulation::{
    asymptotics_harness, default_methods, fit_with_cv, metrics, quartiles, run_replication,
    MethodName, MetricsReport, Scenario,
};
use equicorr::solvers::{objective_cs, objective_gen};
use equicorr::{
    fit_ap_mrcs, fit_ap_mrgcs, fit_mrcs, fit_mrgcs, fit_oracle, fit_ridge, kernel, lasso,
    solvers::fit_lasso_combined, solvers::fit_lasso_separate, Col, CovParams, CvPlan, Dataset,
    Error, Mat, PenaltySpec, SolverConfig,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn lib_err(e: Error) -> CliError {
    match e {
        Error::Numerical(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn data_err(m: String) -> CliError {
    CliError::Data(m)
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("'{}' in --grid is not a number", tok.trim())))
        })
        .collect()
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// fit

pub struct FitArgs {
    pub x: PathBuf,
    pub y: PathBuf,
    pub method: String,
    pub lambda: Option<f64>,
    pub cv_folds: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub omega: Option<PathBuf>,
    pub out: PathBuf,
    pub header: bool,
    pub strict: bool,
    pub threads: usize,
    pub max_outer: Option<usize>,
}

fn objective_at(
    d: &Dataset<f64>,
    b: &Mat<f64>,
    cov: &CovParams<f64>,
    lambda: f64,
) -> Result<f64, CliError> {
    let pen = PenaltySpec::plain(lambda).map_err(lib_err)?;
    let c = d.centered();
    match cov {
        CovParams::Cs(p) => objective_cs(&c, b, p, &pen).map_err(lib_err),
        CovParams::GenEq(p) => objective_gen(&c, b, p, &pen).map_err(lib_err),
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let method = MethodName::parse(&args.method).map_err(|e| CliError::Usage(e.to_string()))?;
    let x = read_matrix(&args.x, args.header).map_err(data_err)?;
    let y = read_matrix(&args.y, args.header).map_err(data_err)?;
    let dataset = Dataset::new(x, y).map_err(lib_err)?;
    let omega = match &args.omega {
        Some(path) => Some(read_matrix(path, args.header).map_err(data_err)?),
        None => None,
    };
    if method == MethodName::Oracle && omega.is_none() {
        return Err(CliError::Usage("method 'oracle' requires --omega".into()));
    }

    let mut cfg = SolverConfig::default();
    cfg.init_grid = args.grid.clone();
    cfg.init_folds = args.cv_folds;
    cfg.init_seed = args.seed;
    if let Some(max_outer) = args.max_outer {
        cfg.max_outer = max_outer;
    }
    let plan = CvPlan { k: args.cv_folds, grid: args.grid.clone(), seed: args.seed };

    let pool = thread_pool(args.threads)?;
    let artifact = pool.install(|| -> Result<FitArtifact, CliError> {
        let d = dataset.centered();
        let (b, intercept, cov, lambda, lambdas, cv_table, converged) = match args.lambda {
            Some(lambda) => match method {
                MethodName::Mrcs | MethodName::ApMrcs | MethodName::Mrgcs | MethodName::ApMrgcs => {
                    let fit = match method {
                        MethodName::Mrcs => fit_mrcs(&d, lambda, &cfg, None),
                        MethodName::ApMrcs => fit_ap_mrcs(&d, lambda, &cfg, None),
                        MethodName::Mrgcs => fit_mrgcs(&d, lambda, &cfg, None),
                        MethodName::ApMrgcs => fit_ap_mrgcs(&d, lambda, &cfg, None),
                        _ => unreachable!(),
                    }
                    .map_err(lib_err)?;
                    (fit.b, fit.intercept, Some(fit.cov), Some(lambda), None, None, fit.converged)
                }
                MethodName::Ols => {
                    let b = lasso::ols(&d).map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, None, None, None, true)
                }
                MethodName::LassoComb => {
                    let b = fit_lasso_combined(&d, lambda, &cfg.cd).map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, Some(lambda), None, None, true)
                }
                MethodName::LassoSep => {
                    let ls = Col::from_element(d.q(), lambda);
                    let b = fit_lasso_separate(&d, &ls, &cfg.cd).map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, Some(lambda), None, None, true)
                }
                MethodName::RidgeComb => {
                    let b = fit_ridge(&d, lambda).map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, Some(lambda), None, None, true)
                }
                MethodName::RidgeSep => {
                    let ls = Col::from_element(d.q(), lambda);
                    let b = lasso::fit_ridge_separate(&d, &ls).map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, Some(lambda), None, None, true)
                }
                MethodName::Oracle => {
                    let b = fit_oracle(&d, lambda, omega.as_ref().unwrap(), None, &cfg.cd)
                        .map_err(lib_err)?;
                    let ic = d.intercept_for(&b);
                    (b, ic, None, Some(lambda), None, None, true)
                }
            },
            None => {
                let fit = fit_with_cv(&dataset, method, &plan, &cfg, omega.as_ref())
                    .map_err(lib_err)?;
                (
                    fit.b,
                    fit.intercept,
                    fit.cov,
                    fit.lambda,
                    fit.lambdas.map(|v| v.iter().copied().collect()),
                    fit.cv_table,
                    fit.converged,
                )
            }
        };
        let objective = match (&cov, lambda) {
            (Some(c), Some(l)) => Some(objective_at(&dataset, &b, c, l)?),
            _ => None,
        };
        Ok(FitArtifact {
            version: ARTIFACT_VERSION,
            method: method.as_str().to_string(),
            p: dataset.p(),
            q: dataset.q(),
            b: (0..dataset.p()).flat_map(|j| (0..dataset.q()).map(move |k| (j, k)))
                .map(|(j, k)| b[(j, k)])
                .collect(),
            intercept: intercept.iter().copied().collect(),
            covariance: cov.as_ref().map(CovArtifact::from_params),
            lambda,
            lambdas,
            cv_table,
            objective,
            seed: args.seed,
            converged,
        })
    })?;

    if args.strict && !artifact.converged {
        return Err(CliError::Numerical(
            "fit did not converge within the iteration budget (strict mode)".into(),
        ));
    }
    artifact.save(&args.out).map_err(data_err)
}

// ---------------------------------------------------------------------------
// predict

pub fn cmd_predict(fit: &Path, x: &Path, out: &Path, header: bool) -> Result<(), CliError> {
    let artifact = FitArtifact::load(fit).map_err(data_err)?;
    let x = read_matrix(x, header).map_err(data_err)?;
    if x.ncols() != artifact.p {
        return Err(CliError::Data(format!(
            "X has {} columns but the fit used {}",
            x.ncols(),
            artifact.p
        )));
    }
    let b = artifact.b_matrix().map_err(data_err)?;
    let yhat = kernel::predict(&x, &b, &artifact.intercept_vector());
    write_matrix(out, &yhat, header).map_err(data_err)
}

// ---------------------------------------------------------------------------
// eval

fn metrics_csv(m: &MetricsReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    format!(
        "model_error,prediction_error,prediction_error_per_obs,tnr,tpr\n\
         {:.16e},{:.16e},{:.16e},{},{}\n",
        m.model_error,
        m.prediction_error,
        m.prediction_error_per_obs,
        opt(m.tnr),
        opt(m.tpr)
    )
}

pub fn cmd_eval(
    fit: &Path,
    b_true: &Path,
    sigma_x: &Path,
    y_test: &Path,
    x_test: &Path,
    header: bool,
) -> Result<(), CliError> {
    let artifact = FitArtifact::load(fit).map_err(data_err)?;
    let b_hat = artifact.b_matrix().map_err(data_err)?;
    let b_true = read_matrix(b_true, header).map_err(data_err)?;
    let sigma_x = read_matrix(sigma_x, header).map_err(data_err)?;
    let y_test = read_matrix(y_test, header).map_err(data_err)?;
    let x_test = read_matrix(x_test, header).map_err(data_err)?;
    let yhat = kernel::predict(&x_test, &b_hat, &artifact.intercept_vector());
    let report = metrics(&b_hat, &b_true, &sigma_x, &y_test, &yhat).map_err(lib_err)?;
    print!("{}", metrics_csv(&report));
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "model error: {:.6}\nprediction error (total): {:.6}\nprediction error (per obs): {:.6}\n\
         true negative rate: {}\ntrue positive rate: {}",
        report.model_error,
        report.prediction_error,
        report.prediction_error_per_obs,
        opt(report.tnr),
        opt(report.tpr)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

pub struct SimulateArgs {
    pub scenario: PathBuf,
    pub reps: u64,
    pub seed: Option<u64>,
    pub cv_folds: usize,
    pub grid: Vec<f64>,
    pub out: PathBuf,
    pub header: bool,
    pub threads: usize,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.scenario.display())))?;
    let mut scenario: Scenario = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(lib_err)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let methods: Vec<MethodName> = match &scenario.methods {
        Some(list) if !list.is_empty() => list.clone(),
        _ => default_methods(&scenario),
    };
    let plan = CvPlan { k: args.cv_folds, grid: args.grid.clone(), seed: scenario.seed };
    let cfg = SolverConfig::default();

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;

    let pool = thread_pool(args.threads)?;
    let results: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        (0..args.reps)
            .into_par_iter()
            .map(|rep| run_replication(&scenario, rep, &methods, &plan, &cfg))
            .collect::<Vec<_>>()
    });

    let mut metrics_rows = String::from(
        "rep,method,model_error,prediction_error,prediction_error_per_obs,tnr,tpr\n",
    );
    let mut per_method: Vec<Vec<MetricsReport>> = vec![Vec::new(); methods.len()];
    for (rep, result) in results.into_iter().enumerate() {
        let (data, reports) = result.map_err(lib_err)?;
        let dir = if args.reps == 1 {
            args.out.clone()
        } else {
            let d = args.out.join(format!("rep{rep:03}"));
            std::fs::create_dir_all(&d)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", d.display())))?;
            d
        };
        let h = args.header;
        write_matrix(&dir.join("X_train.csv"), &data.train.x, h).map_err(data_err)?;
        write_matrix(&dir.join("Y_train.csv"), &data.train.y, h).map_err(data_err)?;
        write_matrix(&dir.join("X_test.csv"), &data.test.x, h).map_err(data_err)?;
        write_matrix(&dir.join("Y_test.csv"), &data.test.y, h).map_err(data_err)?;
        write_matrix(&dir.join("B_true.csv"), &data.b_true, h).map_err(data_err)?;
        write_matrix(&dir.join("Sigma_true.csv"), &data.sigma_true, h).map_err(data_err)?;

        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for (i, (method, report)) in reports.iter().enumerate() {
            let _ = writeln!(
                metrics_rows,
                "{rep},{},{:.16e},{:.16e},{:.16e},{},{}",
                method.as_str(),
                report.model_error,
                report.prediction_error,
                report.prediction_error_per_obs,
                opt(report.tnr),
                opt(report.tpr)
            );
            per_method[i].push(report.clone());
        }
    }
    write_atomic(&args.out.join("metrics.csv"), &metrics_rows).map_err(data_err)?;

    let mut summary = String::from("method,metric,q1,median,q3\n");
    for (i, method) in methods.iter().enumerate() {
        let pull = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
            per_method[i].iter().filter_map(|r| f(r)).collect()
        };
        let rows: [(&str, Vec<f64>); 4] = [
            ("model_error", pull(&|r| Some(r.model_error))),
            ("prediction_error_per_obs", pull(&|r| Some(r.prediction_error_per_obs))),
            ("tnr", pull(&|r| r.tnr)),
            ("tpr", pull(&|r| r.tpr)),
        ];
        for (name, values) in rows {
            if values.is_empty() {
                continue;
            }
            let (q1, med, q3) = quartiles(&values);
            let _ = writeln!(
                summary,
                "{},{name},{q1:.16e},{med:.16e},{q3:.16e}",
                method.as_str()
            );
        }
    }
    write_atomic(&args.out.join("summary.csv"), &summary).map_err(data_err)
}

// ---------------------------------------------------------------------------
// asymptotics

pub struct AsymptoticsArgs {
    pub p: usize,
    pub q: usize,
    pub theta: f64,
    pub eta2: f64,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub r: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn cmd_asymptotics(args: &AsymptoticsArgs) -> Result<(), CliError> {
    let rows = asymptotics_harness(
        args.p, args.q, args.theta, args.eta2, &args.n_list, args.reps, args.r, args.seed,
    )
    .map_err(lib_err)?;
    let mut out = String::from(
        "n,reps,rmse_eta2,rmse_theta,sqrt_n_rmse_theta,var_sqrt_n_theta_err,mean_eta2,\
         se_mean_eta2,zero_recovery,nonzero_recovery\n",
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.n,
            r.reps,
            r.rmse_eta2,
            r.rmse_theta,
            r.sqrt_n_rmse_theta,
            r.var_sqrt_n_theta_err,
            r.mean_eta2,
            r.se_mean_eta2,
            r.zero_recovery,
            r.nonzero_recovery
        );
    }
    match &args.out {
        Some(path) => write_atomic(path, &out).map_err(data_err),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
