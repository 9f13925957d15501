use super::*;
use crate::{model1, model2};

fn section7(mu: [f64; 2]) -> QueueSpec {
    QueueSpec::from_rows(
        &[vec![-5.0, 5.0], vec![5.0, -5.0]],
        vec![20.0, 10.0],
        mu.to_vec(),
    )
    .unwrap()
}

fn within(est: f64, se: f64, target: f64, k: f64) -> bool {
    (est - target).abs() <= k * se
}

#[test]
fn same_seed_same_paths() {
    let cfg = SimConfig::new(
        section7([1.0, 2.0]),
        ScalingParams::unit(),
        Model::I,
        vec![1.0, 2.0],
        0.5,
        1,
        7,
    );
    // a single replication has NaN standard errors, so compare the raw paths
    let (a, b) = (simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.lagged, b.lagged);
    assert_eq!(a.occupation, b.occupation);
    let other = SimConfig {
        seed: 8,
        ..cfg.clone()
    };
    assert_ne!(
        simulate(&cfg).unwrap().counts,
        simulate(&other).unwrap().counts
    );
}

#[test]
fn thread_count_does_not_change_results() {
    for method in [
        SimMethod::Gillespie,
        SimMethod::ConditionalPoisson,
        SimMethod::DiffusionBackground,
    ] {
        let cfg = SimConfig::new(
            section7([1.0, 2.0]),
            ScalingParams::new(10.0, 1.0).unwrap(),
            Model::II,
            vec![1.0],
            0.5,
            64,
            11,
        )
        .with_method(method);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate(&cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}

#[test]
fn rejects_inconsistent_configs() {
    let base = SimConfig::new(
        section7([1.0, 2.0]),
        ScalingParams::unit(),
        Model::I,
        vec![1.0, 2.0],
        0.5,
        10,
        1,
    );
    let short = SimConfig {
        horizon: 2.0,
        ..base.clone()
    };
    assert!(matches!(simulate(&short), Err(Error::ConfigError(_))));
    let unordered = SimConfig {
        sample_times: vec![2.0, 1.0],
        ..base.clone()
    };
    assert!(matches!(simulate(&unordered), Err(Error::ConfigError(_))));
    let empty = SimConfig {
        replications: 0,
        ..base
    };
    assert!(matches!(simulate(&empty), Err(Error::ConfigError(_))));
}

#[test]
fn auto_engine_selection() {
    let spec = section7([1.0, 2.0]);
    let cfg = |n: f64, alpha: f64| {
        SimConfig::new(
            spec.clone(),
            ScalingParams::new(n, alpha).unwrap(),
            Model::I,
            vec![40.0],
            0.0,
            1,
            0,
        )
    };
    assert_eq!(cfg(1.0, 1.0).engine(), SimMethod::Gillespie);
    assert_eq!(cfg(1e4, 0.5).engine(), SimMethod::ConditionalPoisson);
    assert_eq!(cfg(1e4, 2.0).engine(), SimMethod::DiffusionBackground);
}

#[test]
fn single_state_mean() {
    let cfg = SimConfig::new(
        QueueSpec::single(3.0, 2.0).unwrap(),
        ScalingParams::unit(),
        Model::I,
        vec![1.0],
        0.0,
        100_000,
        2024,
    );
    let batch = simulate(&cfg).unwrap();
    assert_eq!(batch.engine, SimMethod::Gillespie);
    let e = batch.estimates[0];
    let exact = 1.5 * (1.0 - (-2.0_f64).exp());
    assert!(
        within(e.mean, e.se_mean, exact, 3.0),
        "{} ± {}",
        e.mean,
        e.se_mean
    );
    // Poisson: variance equals mean
    assert!(within(e.var, e.se_var, exact, 3.0));
}

#[test]
fn section7_covariance_matches_model1() {
    let spec = section7([1.0, 2.0]);
    for method in [SimMethod::Gillespie, SimMethod::ConditionalPoisson] {
        let cfg = SimConfig::new(
            spec.clone(),
            ScalingParams::unit(),
            Model::I,
            vec![2.0],
            0.5,
            100_000,
            5,
        )
        .with_method(method);
        let e = simulate(&cfg).unwrap().estimates[0];
        let exact = model1::covariance(&spec, 2.0, 0.5).unwrap();
        assert!(
            within(e.cov, e.se_cov, exact, 3.0),
            "{method:?}: {} ± {} vs {exact}",
            e.cov,
            e.se_cov
        );
        let mean = model1::mean_trajectory(&spec, &ScalingParams::unit(), &[2.0]).unwrap()[0].sum();
        assert!(within(e.mean, e.se_mean, mean, 3.0));
    }
}

#[test]
fn section7_model2_variance() {
    let spec = section7([1.0, 2.0]);
    for method in [SimMethod::Gillespie, SimMethod::ConditionalPoisson] {
        let cfg = SimConfig::new(
            spec.clone(),
            ScalingParams::unit(),
            Model::II,
            vec![2.0],
            0.5,
            100_000,
            6,
        )
        .with_method(method);
        let e = simulate(&cfg).unwrap().estimates[0];
        let var = model2::covariance_m2(&spec, 2.0, 0.0).unwrap();
        let cov = model2::covariance_m2(&spec, 2.0, 0.5).unwrap();
        assert!(
            within(e.var, e.se_var, var, 3.0),
            "{method:?}: {} ± {} vs {var}",
            e.var,
            e.se_var
        );
        assert!(
            within(e.cov, e.se_cov, cov, 3.0),
            "{method:?}: {} ± {} vs {cov}",
            e.cov,
            e.se_cov
        );
        assert!(within(
            e.mean,
            e.se_mean,
            model2::mean_m2(&spec, 2.0).unwrap(),
            3.0
        ));
    }
}

#[test]
fn diffusion_engine_in_fast_modulation() {
    // N^α = 1e4: the background mixes within every step
    let spec = section7([1.0, 2.0]);
    let scaling = ScalingParams::new(100.0, 2.0).unwrap();
    let scaled = spec.scaled(&scaling);
    for model in [Model::I, Model::II] {
        let cfg = SimConfig::new(spec.clone(), scaling, model, vec![2.0], 0.5, 20_000, 9)
            .with_method(SimMethod::DiffusionBackground);
        let e = simulate(&cfg).unwrap().estimates[0];
        let (mean, cov) = match model {
            Model::I => (
                model1::mean_trajectory(&spec, &scaling, &[2.0]).unwrap()[0].sum(),
                model1::covariance(&scaled, 2.0, 0.5).unwrap(),
            ),
            Model::II => (
                model2::mean_m2(&scaled, 2.0).unwrap(),
                model2::covariance_m2(&scaled, 2.0, 0.5).unwrap(),
            ),
        };
        assert!(
            within(e.mean, e.se_mean, mean, 4.0),
            "{model}: {} vs {mean}",
            e.mean
        );
        assert!(
            within(e.cov, e.se_cov, cov, 4.0),
            "{model}: {} vs {cov}",
            e.cov
        );
    }
}

#[test]
fn occupation_fractions_match_pi() {
    let spec = QueueSpec::from_rows(
        &[vec![-1.0, 1.0], vec![3.0, -3.0]],
        vec![2.0, 1.0],
        vec![1.0, 2.0],
    )
    .unwrap();
    for method in [SimMethod::Gillespie, SimMethod::ConditionalPoisson] {
        let cfg = SimConfig::new(
            spec.clone(),
            ScalingParams::unit(),
            Model::II,
            vec![5.0],
            0.0,
            4000,
            3,
        )
        .with_method(method);
        let (mean, se) = simulate(&cfg).unwrap().occupation_estimate();
        for i in 0..2 {
            assert!(within(mean[i], se[i], spec.pi()[i], 4.0));
        }
    }
}

#[test]
fn models_coincide_for_single_state() {
    let spec = QueueSpec::single(3.0, 2.0).unwrap();
    let run = |model| {
        let cfg = SimConfig::new(
            spec.clone(),
            ScalingParams::unit(),
            model,
            vec![1.0],
            0.0,
            10_000,
            12 + model as u64,
        );
        let mut xs: Vec<u64> = simulate(&cfg)
            .unwrap()
            .counts
            .iter()
            .map(|c| c[0])
            .collect();
        xs.sort_unstable();
        xs
    };
    let (a, b) = (run(Model::I), run(Model::II));
    // two-sample Kolmogorov–Smirnov at the 1% level
    let n = a.len() as f64;
    let max = *a.last().unwrap().max(b.last().unwrap());
    let mut ks = 0.0_f64;
    for x in 0..=max {
        let fa = a.partition_point(|&v| v <= x) as f64 / n;
        let fb = b.partition_point(|&v| v <= x) as f64 / n;
        ks = ks.max((fa - fb).abs());
    }
    assert!(ks < 1.63 * (2.0 / n).sqrt(), "KS statistic {ks}");
}

#[test]
fn models_coincide_for_equal_service_rates() {
    let spec = section7([1.5, 1.5]);
    let est = |model| {
        let cfg = SimConfig::new(
            spec.clone(),
            ScalingParams::unit(),
            model,
            vec![2.0],
            0.5,
            50_000,
            21,
        );
        simulate(&cfg).unwrap().estimates[0]
    };
    let (a, b) = (est(Model::I), est(Model::II));
    let se = |x: f64, y: f64| (x * x + y * y).sqrt();
    assert!((a.mean - b.mean).abs() <= 3.0 * se(a.se_mean, b.se_mean));
    assert!((a.var - b.var).abs() <= 3.0 * se(a.se_var, b.se_var));
    assert!((a.cov - b.cov).abs() <= 3.0 * se(a.se_cov, b.se_cov));
}

#[test]
fn fclt_requires_enough_replications() {
    let spec = QueueSpec::single(3.0, 2.0).unwrap();
    let cfg = |r| {
        SimConfig::new(
            spec.clone(),
            ScalingParams::new(100.0, 2.0).unwrap(),
            Model::I,
            vec![2.0],
            0.0,
            r,
            1,
        )
    };
    let small = cfg(999);
    let err = fclt_diagnostics(&simulate(&small).unwrap(), &small).unwrap_err();
    assert!(matches!(
        err,
        Error::InsufficientReplications {
            got: 999,
            min: 1000
        }
    ));
    assert!(err.to_string().starts_with("InsufficientReplications"));
    let enough = cfg(1000);
    assert!(fclt_diagnostics(&simulate(&enough).unwrap(), &enough).is_ok());
}

#[test]
fn fclt_single_state_poisson_branch() {
    let spec = QueueSpec::single(3.0, 2.0).unwrap();
    let cfg = SimConfig::new(
        spec.clone(),
        ScalingParams::new(1e4, 2.0).unwrap(),
        Model::I,
        vec![2.0],
        0.5,
        10_000,
        4,
    );
    let batch = simulate(&cfg).unwrap();
    let report = fclt_diagnostics(&batch, &cfg).unwrap();
    let row = report.rows[0];
    let rho = 1.5 * (1.0 - (-4.0_f64).exp());
    assert!((row.var / rho - 1.0).abs() < 0.05, "{} vs {rho}", row.var);
    assert!(row.skewness.abs() < 0.1);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn sweep_poisson_branch_ratio() {
    let spec = QueueSpec::single(3.0, 2.0).unwrap();
    let report = variance_scaling_sweep(
        &spec,
        &SweepConfig {
            model: Model::I,
            alphas: vec![2.0],
            ns: vec![10.0, 1000.0],
            t_star: None,
            replications: 4000,
            seed: 3,
            method: SimMethod::Auto,
        },
    )
    .unwrap();
    assert_eq!(report.t_star, 20.0);
    for c in &report.cells {
        assert!((c.limit - 1.5).abs() < 1e-12);
        assert!(within(c.ratio, c.se_ratio, 1.5, 4.0), "{c:?}");
    }
}
