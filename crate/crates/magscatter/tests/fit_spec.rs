//! Least-squares estimation contract tests: noiseless parameter recovery,
//! invariances the estimator must satisfy, identifiability diagnostics, and
//! input validation.

use magscatter::error::FitError;
use magscatter::fit::{
    batch_fit, levenberg_marquardt, model_db_trace, FitProblem, FreeParam, ParamHandle,
};
use magscatter::model::{
    CavityMode, Conventions, DiagonalConvention, FieldPoint, SystemModel,
};
use magscatter::sweep::linspace;

fn truth_model() -> SystemModel {
    SystemModel {
        cavity_modes: vec![CavityMode {
            f_ghz: 10.0,
            gamma_int_mhz: 4.0,
            gamma_ext_mhz: [2.5, 2.5],
            phi_ext_rad: [0.4, -1.1],
        }],
        magnons: Vec::new(),
        xi: 0.0,
        conventions: Conventions::default(),
    }
}

/// Starting point: every rate 30% high, frequency 3 MHz off.
fn start_model() -> SystemModel {
    let mut m = truth_model();
    m.cavity_modes[0].f_ghz = 10.003;
    m.cavity_modes[0].gamma_int_mhz = 5.2;
    m.cavity_modes[0].gamma_ext_mhz = [3.25, 3.25];
    m
}

fn free_params() -> Vec<FreeParam> {
    vec![
        FreeParam::new(ParamHandle::ModeFrequency(0)),
        FreeParam::new(ParamHandle::InternalRate(0)),
        FreeParam::new(ParamHandle::ExternalRateTied(0)),
    ]
}

fn roundtrip_problem() -> FitProblem {
    let field = FieldPoint::new(0.0).unwrap();
    let f = linspace(9.5, 10.5, 401);
    let observed = model_db_trace(&truth_model(), field, &f).unwrap();
    FitProblem {
        base: start_model(),
        field,
        observed,
        free: free_params(),
        weights: None,
    }
}

#[test]
fn noiseless_roundtrip_recovers_the_generating_parameters() {
    let result = levenberg_marquardt(&roundtrip_problem()).unwrap();
    assert!(result.converged, "no convergence in {} iterations", result.iterations);
    let expected = [10.0, 4.0, 2.5];
    for ((name, est), want) in result
        .param_names
        .iter()
        .zip(&result.estimates)
        .zip(expected)
    {
        let rel = ((est - want) / want).abs();
        assert!(rel < 1e-8, "{name}: estimate {est}, truth {want} (rel {rel:.2e})");
    }
    assert_eq!(result.param_names, vec!["f_c[0]", "gamma_int[0]", "gamma_ext_tied[0]"]);
    assert!(result.residual_norm < 1e-6);
    // Every recorded step was an accepted (cost-reducing) one.
    for pair in result.residual_history.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "history must not increase");
    }
    // Standard errors are finite and positive, even on a near-perfect fit.
    for (name, se) in result.param_names.iter().zip(&result.std_errors) {
        assert!(se.is_finite() && *se >= 0.0, "{name}: std error {se}");
    }
}

#[test]
fn starting_at_the_optimum_converges_immediately() {
    let mut problem = roundtrip_problem();
    problem.base = truth_model();
    let result = levenberg_marquardt(&problem).unwrap();
    assert!(result.converged);
    assert!(result.residual_norm < 1e-10);
    for (est, want) in result.estimates.iter().zip([10.0, 4.0, 2.5]) {
        assert!(((est - want) / want).abs() < 1e-10);
    }
}

#[test]
fn doubling_all_weights_changes_neither_estimates_nor_covariance() {
    let base = roundtrip_problem();
    let m = base.observed.f_ghz.len();
    let mut doubled = roundtrip_problem();
    doubled.weights = Some(vec![2.0; m]);
    let r1 = levenberg_marquardt(&base).unwrap();
    let r2 = levenberg_marquardt(&doubled).unwrap();
    for (a, b) in r1.estimates.iter().zip(&r2.estimates) {
        assert!(((a - b) / a).abs() < 1e-9, "estimates moved: {a} vs {b}");
    }
    for (row1, row2) in r1.covariance.iter().zip(&r2.covariance) {
        for (a, b) in row1.iter().zip(row2) {
            let scale = a.abs().max(b.abs()).max(1e-300);
            assert!(
                ((a - b) / scale).abs() < 1e-6,
                "covariance moved: {a} vs {b}"
            );
        }
    }
    // The weighted cost itself does double.
    let c1 = r1.residual_norm * r1.residual_norm;
    let c2 = r2.residual_norm * r2.residual_norm;
    assert!((c2 / c1.max(1e-300) - 2.0).abs() < 1e-6 || c1 < 1e-20);
}

#[test]
fn reordering_free_parameters_permutes_the_covariance() {
    let forward = roundtrip_problem();
    let mut reversed = roundtrip_problem();
    reversed.free.reverse();
    let rf = levenberg_marquardt(&forward).unwrap();
    let rr = levenberg_marquardt(&reversed).unwrap();
    let n = rf.estimates.len();
    for i in 0..n {
        let flip = n - 1 - i;
        assert_eq!(rf.param_names[i], rr.param_names[flip]);
        let (a, b) = (rf.estimates[i], rr.estimates[flip]);
        assert!(((a - b) / a).abs() < 1e-7);
        for j in 0..n {
            let (c, d) = (rf.covariance[i][j], rr.covariance[flip][n - 1 - j]);
            let scale = c.abs().max(d.abs()).max(1e-300);
            assert!(((c - d) / scale).abs() < 1e-5, "cov[{i}][{j}]: {c} vs {d}");
        }
    }
}

#[test]
fn duplicated_parameters_are_reported_as_unidentifiable() {
    let mut problem = roundtrip_problem();
    problem.free = vec![
        FreeParam::new(ParamHandle::InternalRate(0)),
        FreeParam::new(ParamHandle::InternalRate(0)),
    ];
    match levenberg_marquardt(&problem) {
        Err(FitError::RankDeficient(name)) => assert_eq!(name, "gamma_int[0]"),
        other => panic!("expected rank-deficiency, got {other:?}"),
    }
}

#[test]
fn handle_strings_round_trip() {
    for (handle, text) in [
        (ParamHandle::ModeFrequency(3), "f_c[3]"),
        (ParamHandle::InternalRate(0), "gamma_int[0]"),
        (ParamHandle::ExternalRate(0, 1), "gamma_ext[0][1]"),
        (ParamHandle::ExternalRateTied(2), "gamma_ext_tied[2]"),
    ] {
        assert_eq!(handle.to_string(), text);
        assert_eq!(text.parse::<ParamHandle>().unwrap(), handle);
    }
    assert!("gamma_bogus[0]".parse::<ParamHandle>().is_err());
    assert!("f_c[x]".parse::<ParamHandle>().is_err());
}

#[test]
fn invalid_inputs_fail_with_specific_errors() {
    let good = roundtrip_problem;

    let mut p = good();
    p.free.clear();
    assert!(matches!(levenberg_marquardt(&p), Err(FitError::NoFreeParameters)));

    let mut p = good();
    p.observed.f_ghz.clear();
    p.observed.s21_db.clear();
    assert!(matches!(levenberg_marquardt(&p), Err(FitError::NoObservations)));

    let mut p = good();
    p.weights = Some(vec![1.0; 3]);
    assert!(matches!(
        levenberg_marquardt(&p),
        Err(FitError::WeightLengthMismatch { got: 3, .. })
    ));

    let mut p = good();
    p.free[0] = FreeParam::with_bounds(ParamHandle::ModeFrequency(0), 11.0, 10.0);
    assert!(matches!(levenberg_marquardt(&p), Err(FitError::BadBounds(_))));

    let mut p = good();
    p.base.cavity_modes[0].gamma_int_mhz = 0.0;
    match levenberg_marquardt(&p) {
        Err(FitError::StartOutOfBounds { param, .. }) => assert_eq!(param, "gamma_int[0]"),
        other => panic!("zero rate cannot seed a log-scale search: {other:?}"),
    }

    let mut p = good();
    p.free[1] = FreeParam::new(ParamHandle::InternalRate(5));
    assert!(matches!(levenberg_marquardt(&p), Err(FitError::UnknownHandle(_))));

    assert!(matches!(
        batch_fit(&[], &[]),
        Err(FitError::EmptyBatch)
    ));
}

#[test]
fn a_singular_sample_is_rejected_before_fitting() {
    // Internal-only convention with zero internal loss: the response matrix
    // is singular exactly at f_c, which must surface as a non-finite sample.
    let model = SystemModel {
        cavity_modes: vec![CavityMode {
            f_ghz: 10.0,
            gamma_int_mhz: 0.0,
            gamma_ext_mhz: [2.0, 2.0],
            phi_ext_rad: [0.0, 0.0],
        }],
        magnons: Vec::new(),
        xi: 0.0,
        conventions: Conventions {
            diagonal: DiagonalConvention::InternalOnly,
            ..Conventions::default()
        },
    };
    let f = linspace(9.0, 11.0, 5);
    match model_db_trace(&model, FieldPoint::new(0.0).unwrap(), &f) {
        Err(FitError::NonFiniteResidual { sample: 2, f_ghz }) => {
            assert_eq!(f_ghz, 10.0)
        }
        other => panic!("expected a non-finite sample at f = 10, got {other:?}"),
    }
}

#[test]
fn batch_of_one_matches_the_single_fit() {
    let problem = roundtrip_problem();
    let single = levenberg_marquardt(&problem).unwrap();
    let batch = batch_fit(std::slice::from_ref(&problem), &["only".to_string()]).unwrap();
    assert_eq!(batch.labels, vec!["only"]);
    let row = batch.results[0].as_ref().unwrap();
    assert_eq!(row.estimates, single.estimates);
    assert_eq!(row.iterations, single.iterations);
    assert_eq!(batch.errors[0], None);
}

#[test]
fn batch_trend_follows_an_injected_parameter_drift() {
    let field = FieldPoint::new(0.0).unwrap();
    let f = linspace(9.5, 10.5, 401);
    let drifts = [4.0, 4.4, 4.8];
    let problems: Vec<FitProblem> = drifts
        .iter()
        .map(|&gamma| {
            let mut truth = truth_model();
            truth.cavity_modes[0].gamma_int_mhz = gamma;
            FitProblem {
                base: start_model(),
                field,
                observed: model_db_trace(&truth, field, &f).unwrap(),
                free: free_params(),
                weights: None,
            }
        })
        .collect();
    let labels: Vec<String> = drifts.iter().map(|d| format!("gamma = {d}")).collect();
    let outcome = batch_fit(&problems, &labels).unwrap();

    // gamma_int is parameter index 1; its fitted trend mirrors the drift.
    let gammas: Vec<f64> = outcome.trend.iter().map(|row| row[1].unwrap()).collect();
    assert!(gammas[0] < gammas[1] && gammas[1] < gammas[2], "trend: {gammas:?}");
    for (got, want) in gammas.iter().zip(drifts) {
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    // The mean-parameter model cannot beat any per-scenario fit.
    let mean = outcome.mean_estimates.as_ref().unwrap();
    assert!((mean[1] - 4.4).abs() < 1e-3);
    for (fitted, shared) in outcome.fitted_cost.iter().zip(&outcome.mean_parameter_cost) {
        let (fitted, shared) = (fitted.unwrap(), shared.unwrap());
        assert!(
            shared >= fitted - 1e-9,
            "shared-parameter cost {shared} beats fitted {fitted}"
        );
    }
    // And here the drift is real, so the shared model is strictly worse.
    assert!(outcome.mean_parameter_cost[0].unwrap() > 1e-3);
}
