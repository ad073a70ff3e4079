//! Cross-method consistency checks for the alternating fitters.

use approx::assert_relative_eq;
use equicorr::simulation::substream_rng;
use equicorr::{
    fit_ap_mrcs, fit_ap_mrgcs, fit_mrcs, fit_mrgcs, fit_oracle, kkt_residual, solve_penalized_b,
    CdConfig, Col, CsParams, Dataset, Error, Mat, PenaltySpec, SolverConfig,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_dataset(n: usize, p: usize, q: usize, seed: u64) -> Dataset<f64> {
    let mut rng = substream_rng(seed, "solver-behavior", 0);
    let x = Mat::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = Mat::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let e = Mat::from_fn(n, q, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let y = &x * b + e;
    Dataset::new(x, y).unwrap()
}

fn tight_config() -> SolverConfig {
    let mut cfg = SolverConfig::default();
    cfg.cd.tol = 1e-12;
    cfg.epsilon = 1e-12;
    cfg
}

#[test]
fn lambda_zero_all_methods_recover_least_squares() {
    let d = random_dataset(40, 4, 3, 1);
    let cfg = tight_config();
    let zero = Mat::zeros(4, 3);
    let b0 = Some(&zero);
    let reference = equicorr::lasso::ols(&d.centered()).unwrap();

    let fits = [
        fit_mrcs(&d, 0.0, &cfg, b0).unwrap().b,
        fit_ap_mrcs(&d, 0.0, &cfg, b0).unwrap().b,
        fit_mrgcs(&d, 0.0, &cfg, b0).unwrap().b,
        fit_ap_mrgcs(&d, 0.0, &cfg, b0).unwrap().b,
    ];
    for b in &fits {
        assert_relative_eq!(b, &reference, epsilon = 1e-6);
    }
    let omega = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
    let b = fit_oracle(&d, 0.0, &omega, None, &cfg.cd).unwrap();
    assert_relative_eq!(&b, &reference, epsilon = 1e-6);
}

#[test]
fn ap_variant_is_one_outer_iteration() {
    let d = random_dataset(35, 3, 4, 2);
    let mut cfg = tight_config();
    let zero = Mat::zeros(3, 4);
    let ap = fit_ap_mrcs(&d, 0.05, &cfg, Some(&zero)).unwrap();
    cfg.max_outer = 1;
    cfg.epsilon = f64::INFINITY; // never flags convergence; caps at one pass
    let one = fit_mrcs(&d, 0.05, &cfg, Some(&zero)).unwrap();
    assert_eq!(ap.b, one.b);
    let (a, b) = (ap.cov.as_cs().unwrap(), one.cov.as_cs().unwrap());
    assert_eq!(a.eta2, b.eta2);
    assert_eq!(a.theta, b.theta);
}

#[test]
fn response_permutation_permutes_the_fit() {
    let d = random_dataset(30, 3, 4, 3);
    let cfg = tight_config();
    let zero = Mat::zeros(3, 4);
    let fit = fit_mrcs(&d, 0.1, &cfg, Some(&zero)).unwrap();

    let perm = [2usize, 0, 3, 1];
    let y2 = Mat::from_fn(30, 4, |i, k| d.y[(i, perm[k])]);
    let d2 = Dataset::new(d.x.clone(), y2).unwrap();
    let fit2 = fit_mrcs(&d2, 0.1, &cfg, Some(&zero)).unwrap();
    for j in 0..3 {
        for k in 0..4 {
            assert_relative_eq!(fit2.b[(j, k)], fit.b[(j, perm[k])], epsilon = 1e-6);
        }
    }
    let (c1, c2) = (fit.cov.as_cs().unwrap(), fit2.cov.as_cs().unwrap());
    assert_relative_eq!(c1.eta2, c2.eta2, epsilon = 1e-10);
    assert_relative_eq!(c1.theta, c2.theta, epsilon = 1e-10);
}

#[test]
fn exact_methods_refuse_wide_designs() {
    let d = random_dataset(10, 12, 3, 4);
    let cfg = SolverConfig::default();
    let zero = Mat::zeros(12, 3);
    for res in [fit_mrcs(&d, 0.1, &cfg, Some(&zero)), fit_mrgcs(&d, 0.1, &cfg, Some(&zero))] {
        match res {
            Err(Error::UnsupportedRegime(msg)) => assert!(msg.contains("ap.")),
            other => panic!("expected an unsupported-regime error, got {other:?}"),
        }
    }
    assert!(fit_ap_mrcs(&d, 0.1, &cfg, Some(&zero)).is_ok());
    assert!(fit_ap_mrgcs(&d, 0.1, &cfg, Some(&zero)).is_ok());
}

#[test]
fn large_lambda_zeroes_everything() {
    let d = random_dataset(30, 4, 3, 5);
    let cfg = tight_config();
    let zero = Mat::zeros(4, 3);
    let fit = fit_mrcs(&d, 1e6, &cfg, Some(&zero)).unwrap();
    assert!(fit.b.iter().all(|v| *v == 0.0));
    // intercepts fall back to the response means
    let means = Col::from_fn(3, |k, _| d.y.column(k).mean());
    assert_relative_eq!(fit.intercept, means, epsilon = 1e-12);
}

#[test]
fn kkt_holds_at_the_solution_with_weights() {
    let d = random_dataset(25, 5, 3, 6).centered();
    let omega = equicorr::precision_dense(
        &equicorr::CovParams::Cs(CsParams::new(1.3, 0.4).unwrap()),
        3,
    );
    let weights = Mat::from_fn(5, 3, |j, k| 0.5 + ((j + 2 * k) % 4) as f64);
    let pen = PenaltySpec::new(0.08, Some(weights)).unwrap();
    let mut cd = CdConfig::default();
    cd.tol = 1e-12;
    let sol = solve_penalized_b(&d, &omega, &pen, &Mat::zeros(5, 3), &cd).unwrap();
    assert!(sol.converged);
    assert!(kkt_residual(&d, &omega, &pen, &sol.b).unwrap() <= 1e-8);
}

#[test]
fn intercept_reproduces_uncentered_predictions() {
    let d = random_dataset(60, 3, 2, 7);
    let cfg = tight_config();
    let fit = fit_mrcs(&d, 0.0, &cfg, Some(&Mat::zeros(3, 2))).unwrap();
    let yhat = equicorr::kernel::predict(&d.x, &fit.b, &fit.intercept);
    // least-squares predictions with intercept match an explicit augmented fit
    let mut xa = Mat::from_element(60, 4, 1.0);
    xa.view_mut((0, 1), (60, 3)).copy_from(&d.x);
    let xtx = xa.transpose() * &xa;
    let xty = xa.transpose() * &d.y;
    let coef = xtx.lu().solve(&xty).unwrap();
    let want = xa * coef;
    assert_relative_eq!(yhat, want, epsilon = 1e-6);
}
