use proptest::prelude::*;
use vbcgcd_core::vb::{elbo, elbo_gradient, fit_all_classes, fit_class, StopReason, VariationalParams};
use vbcgcd_core::{make_gaussian, FeatureMatrix, FitConfig, ModelStore};

#[derive(Debug, Clone)]
struct Instance {
    d: usize,
    mean: Vec<f64>,
    chol_raw: Vec<f64>,
    data: FeatureMatrix,
    kl_scale: f64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=8, 1usize..=20).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-1.5..1.5f64, d),
            prop::collection::vec(-0.5..0.5f64, d * d),
            prop::collection::vec(-0.5..1.5f64, d),
            prop::collection::vec(-3.0..3.0f64, n * d),
            0.0..1.0f64,
        )
            .prop_map(move |(mean, off, diag, data, kl_scale)| {
                let mut chol_raw = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..i {
                        chol_raw[i * d + j] = off[i * d + j];
                    }
                    chol_raw[i * d + i] = diag[i];
                }
                Instance {
                    d,
                    mean,
                    chol_raw,
                    data: FeatureMatrix::new(d, data, vec![0; n]).unwrap(),
                    kl_scale,
                }
            })
    })
}

fn close(analytic: f64, numeric: f64) -> bool {
    let err = (analytic - numeric).abs();
    err <= 1e-8 || err <= 1e-4 * analytic.abs().max(numeric.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_central_differences(inst in instance()) {
        let d = inst.d;
        let params = VariationalParams::new(inst.mean.clone(), inst.chol_raw.clone()).unwrap();
        let grad = elbo_gradient(&params, &inst.data, inst.kl_scale).unwrap();
        let h = 1e-5;
        let f = |mean: Vec<f64>, raw: Vec<f64>| {
            elbo(&VariationalParams::new(mean, raw).unwrap(), &inst.data, inst.kl_scale).unwrap()
        };
        for j in 0..d {
            let (mut up, mut down) = (inst.mean.clone(), inst.mean.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (f(up, inst.chol_raw.clone()) - f(down, inst.chol_raw.clone())) / (2.0 * h);
            prop_assert!(close(grad.mean[j], fd), "mean[{}]: {} vs {}", j, grad.mean[j], fd);
        }
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                if j > i {
                    prop_assert_eq!(grad.chol_raw[k], 0.0);
                    continue;
                }
                let (mut up, mut down) = (inst.chol_raw.clone(), inst.chol_raw.clone());
                up[k] += h;
                down[k] -= h;
                let fd = (f(inst.mean.clone(), up) - f(inst.mean.clone(), down)) / (2.0 * h);
                prop_assert!(close(grad.chol_raw[k], fd), "L[{},{}]: {} vs {}", i, j, grad.chol_raw[k], fd);
            }
        }
    }
}

fn blob(d: usize, n: usize, scale: f64, shift: f64, seed: u64) -> FeatureMatrix {
    let mut cov = vec![0.0; d * d];
    for j in 0..d {
        cov[j * d + j] = scale * (1.0 + 0.3 * j as f64);
    }
    for j in 1..d {
        cov[j * d + j - 1] = 0.1 * scale;
        cov[(j - 1) * d + j] = 0.1 * scale;
    }
    let g = make_gaussian(&vec![shift; d], &cov).unwrap();
    g.sample(n, seed).with_labels(vec![0; n]).unwrap()
}

fn config(n: usize, max_steps: usize, early: bool) -> FitConfig {
    FitConfig {
        learning_rate: 0.05 / n as f64,
        max_steps,
        early_stop_enabled: early,
        ..FitConfig::default()
    }
}

#[test]
fn factor_diagonal_stays_positive_after_every_step() {
    let data = blob(4, 60, 0.2, 1.0, 3);
    for steps in 1..=40 {
        let (g, trace) = fit_class(&data, &[], &config(60, steps, false)).unwrap();
        assert_eq!(trace.records.len(), steps);
        let l = g.chol_lower();
        assert!((0..4).all(|j| l[j * 4 + j] > 0.0), "step {steps}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn early_stop_lands_on_the_band(
        d in 1usize..=5,
        scale in 0.1..6.0f64,
        shift in -1.0..1.0f64,
        refs in prop::collection::vec(-3.0..3.0f64, 1..4),
        eps in 0.0..0.2f64,
        seed in 0u64..1000,
    ) {
        let n = 80;
        let data = blob(d, n, scale, shift, seed);
        let mut cfg = config(n, 800, true);
        cfg.epsilon = eps;
        let (_, trace) = fit_class(&data, &refs, &cfg).unwrap();
        prop_assert!(trace.records.len() <= cfg.max_steps);
        prop_assert!(trace.records.iter().all(|r| r.ratio.is_some()));
        if trace.stop_reason == StopReason::EarlyStop {
            let last = trace.records.last().unwrap().ratio.unwrap();
            let prev = trace.records.len().checked_sub(2).map(|i| trace.records[i].ratio.unwrap());
            if trace.initial_ratio.unwrap() > eps {
                prop_assert!(last <= eps);
                prop_assert!(prev.is_none_or(|p| p > eps));
            } else {
                prop_assert!(last >= -eps);
                prop_assert!(prev.is_none_or(|p| p < -eps));
            }
        }
    }
}

#[test]
fn standard_data_stops_near_zero_ratio() {
    let n = 200;
    let data = make_gaussian(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        .unwrap()
        .sample(n, 11);
    let data = data.with_labels(vec![0; n]).unwrap();
    let cfg = config(n, 1000, true);
    let (_, trace) = fit_class(&data, &[0.0, 0.0], &cfg).unwrap();
    // Starting exactly at the reference, the first step already lands in the band.
    let last = trace.records.last().unwrap();
    let overshoot = (last.ratio.unwrap() - trace.initial_ratio.unwrap()).abs();
    assert!(last.ratio.unwrap().abs() <= cfg.epsilon + overshoot);
}

#[test]
fn wide_data_grows_the_determinant() {
    let n = 200;
    let data = make_gaussian(&[0.0, 0.0], &[4.0, 0.0, 0.0, 4.0]).unwrap().sample(n, 5);
    let data = data.with_labels(vec![0; n]).unwrap();
    let (_, trace) = fit_class(&data, &[], &config(n, 300, true)).unwrap();
    let series = trace.log_det_series();
    assert!(series.last().unwrap() > &series[0]);
    assert!(trace.final_elbo() > trace.initial_elbo);
}

#[test]
fn fits_are_deterministic() {
    let data = blob(3, 50, 2.0, 0.5, 8);
    let mut cfg = config(50, 500, true);
    cfg.batch_size = 16;
    cfg.seed = 77;
    let a = fit_class(&data, &[0.5], &cfg).unwrap();
    let b = fit_class(&data, &[0.5], &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batch_fit_accumulates_references() {
    let mut data = blob(2, 40, 1.0, 0.0, 1);
    data.extend(&blob(2, 40, 3.0, 4.0, 2).with_labels(vec![1; 40]).unwrap()).unwrap();
    let store = ModelStore::new(2);
    let fitted = fit_all_classes(&data, &store, &config(40, 400, true), 0, false).unwrap();
    assert_eq!(fitted.len(), 2);
    let (g0, t0) = &fitted[0];
    let (g1, t1) = &fitted[1];
    assert_eq!((g0.class_id(), g1.class_id()), (0, 1));
    assert!(t0.initial_ratio.is_none());
    assert_ne!(t0.stop_reason, StopReason::EarlyStop);
    // Class 1 references class 0 only: R = log det Σ − log det Σ₀.
    let r = t1.initial_ratio.unwrap();
    assert!((r - (0.0 - g0.log_det_cov())).abs() < 1e-12);

    assert!(fit_all_classes(&FeatureMatrix::empty(2), &store, &FitConfig::default(), 0, false)
        .unwrap()
        .is_empty());
    let five = blob(2, 10, 1.0, 0.0, 3).with_labels(vec![5; 10]).unwrap();
    let fitted = fit_all_classes(&five, &store, &config(10, 5, false), 2, false).unwrap();
    assert_eq!(fitted.len(), 1);
    assert_eq!((fitted[0].0.class_id(), fitted[0].0.learned_in_session()), (5, 2));
}

#[test]
fn default_step_size_still_moves_parameters() {
    let n = 100;
    let data = blob(2, n, 3.0, 2.0, 4);
    let cfg = FitConfig {
        max_steps: 1000,
        ..FitConfig::default()
    };
    let (g, _) = fit_class(&data, &[], &cfg).unwrap();
    assert!(g.mean().iter().all(|m| *m > 0.0));
}
