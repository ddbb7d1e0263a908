//! Cross-integrator validation, step-halving consistency under common random
//! numbers, and the uniform-moment tightness diagnostic.

use difflim::engine::{
    run_ensemble, run_ensemble_fold, simulate_path_em, simulate_path_transformed,
    simulate_path_with_driver, EnsembleSpec, SimParams, Statistic, StepPolicy,
};
use difflim::rng::{mix_seed, rng_from_seed};
use difflim::scale::{build_scale, ScaleParams};
use difflim::scenarios::{besq, periodic_k1, registry_get, zero_drift};
use difflim::stats::{ks_two_sample, EmpiricalLaw};
use rand::Rng;
use rand_distr::StandardNormal;

fn params(t_param: f64, x_max: f64) -> SimParams {
    SimParams::new(t_param, 1.0, StepPolicy::default(), x_max)
}

#[test]
fn transformed_integrator_equals_direct_for_identity_scale() {
    let sc = zero_drift();
    let p = params(100.0, 6.0);
    let tab = build_scale(&sc.drift, 100.0, &ScaleParams::new(6.0, 1e-8, 0.01)).unwrap();
    for seed in [3u64, 17, 29] {
        let direct = simulate_path_em(&sc, &p, seed).unwrap();
        let transformed = simulate_path_transformed(&sc, &tab, &p, seed).unwrap();
        assert_eq!(direct.len(), transformed.len());
        for i in 0..direct.len() {
            assert!(
                (direct.xi[i] - transformed.xi[i]).abs() < 1e-9,
                "seed {seed} step {i}: {} vs {}",
                direct.xi[i],
                transformed.xi[i]
            );
        }
    }
}

#[test]
fn transformed_path_euler_recurrence_replays() {
    let sc = besq(1.0).unwrap();
    let tab = build_scale(&sc.drift, 1000.0, &ScaleParams::new(5.0, 1e-8, 0.003)).unwrap();
    let p = params(1000.0, 5.0);
    let path = simulate_path_transformed(&sc, &tab, &p, 8).unwrap();
    let driver = path.eta_driver.as_ref().expect("transformed path stores its state");
    for i in 1..path.len() {
        let sigma = tab.fprime_lerp(path.xi[i - 1]).unwrap();
        let expect = driver[i - 1] + sigma * path.dw[i];
        assert_eq!(driver[i].to_bits(), expect.to_bits(), "step {i}");
    }
}

#[test]
fn transformed_and_direct_integrators_agree_in_law() {
    // Same stiff drift discretized two ways; marginals at t = 1 must agree.
    let sc = besq(1.0).unwrap();
    let t_param = 1000.0;
    let x_max = 5.0;
    let p = params(t_param, x_max);
    let step = ScaleParams::step_for(&sc, t_param, 0.01);
    let tab = build_scale(&sc.drift, t_param, &ScaleParams::new(x_max, 1e-8, step)).unwrap();

    let n_paths = 10_000;
    let spec = EnsembleSpec {
        n_paths,
        seed: 1001,
        probes: vec![1.0],
        stats: vec![Statistic::Xi],
    };
    let direct = run_ensemble(&sc, &p, &spec).unwrap();
    let direct_xs = direct.series(Statistic::Xi, 1.0).unwrap().to_vec();

    let mut transformed_xs = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        match simulate_path_transformed(&sc, &tab, &p, mix_seed(2002, k as u64)) {
            Ok(path) => transformed_xs.push(*path.xi.last().unwrap()),
            Err(_) => {} // rare excursions dropped, same policy as ensembles
        }
    }
    assert!(transformed_xs.len() > n_paths * 99 / 100);

    let a = EmpiricalLaw::from_samples(direct_xs).unwrap();
    let b = EmpiricalLaw::from_samples(transformed_xs).unwrap();
    let ks = ks_two_sample(&a, &b);
    assert!(ks < 0.03, "integrator mismatch: ks = {ks}");
}

#[test]
fn step_halving_shifts_statistics_less_than_monte_carlo_error() {
    // Common random numbers: the fine path's increments, pair-summed, drive
    // the coarse path, so the difference is pure discretization error.
    let sc = besq(1.0).unwrap();
    let t_param = 100.0;
    let x_max = 5.0;
    let coarse = SimParams::new(t_param, 1.0, StepPolicy::new(1e-3), x_max);
    let fine = SimParams::new(t_param, 1.0, StepPolicy::new(5e-4), x_max);
    let n_fine = 2000;

    let n_paths = 10_000;
    let mut coarse_vals = Vec::with_capacity(n_paths);
    let mut fine_vals = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        let mut rng = rng_from_seed(mix_seed(31337, k as u64));
        let sqrt_h = (0.5e-3f64).sqrt();
        let dw_fine: Vec<f64> = (0..n_fine)
            .map(|_| sqrt_h * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let dw_coarse: Vec<f64> = dw_fine.chunks(2).map(|c| c[0] + c[1]).collect();
        let pf = match simulate_path_with_driver(&sc, &fine, &dw_fine) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let pc = match simulate_path_with_driver(&sc, &coarse, &dw_coarse) {
            Ok(p) => p,
            Err(_) => continue,
        };
        fine_vals.push(*pf.zeta.last().unwrap());
        coarse_vals.push(*pc.zeta.last().unwrap());
    }
    let fine_law = EmpiricalLaw::from_samples(fine_vals).unwrap();
    let coarse_law = EmpiricalLaw::from_samples(coarse_vals).unwrap();
    let dmean = (fine_law.mean() - coarse_law.mean()).abs();
    assert!(
        dmean < coarse_law.stderr(),
        "halving the step moved the mean by {dmean} > stderr {}",
        coarse_law.stderr()
    );
}

#[test]
fn transformed_zeta_moments_bounded_along_ladder() {
    // E sup_t |zeta|^2 stays uniformly bounded in the family parameter.
    for sc in [besq(1.0).unwrap(), periodic_k1(0.5)] {
        let sup_mean = |t_param: f64, seed: u64| {
            let p = params(t_param, 6.0);
            let sups = run_ensemble_fold(
                &sc,
                &p,
                2000,
                seed,
                || 0.0f64,
                |acc, st| *acc = acc.max(st.zeta * st.zeta),
            )
            .unwrap();
            sups.iter().sum::<f64>() / sups.len() as f64
        };
        let low = sup_mean(100.0, 7);
        let high = sup_mean(10_000.0, 8);
        assert!(
            high <= 2.0 * low,
            "{}: E sup zeta^2 grew from {low} to {high}",
            sc.id
        );
    }
}

#[test]
fn transformed_process_semimartingale_decomposition_is_tight() {
    // zeta(t) - zeta(0) - int (G'a + G''/2)(xi) ds - int G'(xi) dW vanishes
    // with the step; its end-point RMS stays at the sqrt(h) scale.
    let sc = besq(1.0).unwrap();
    let t_param = 100.0;
    let p = params(t_param, 5.0);
    let n_paths = 200;
    let mut sq = 0.0;
    let mut used = 0;
    for k in 0..n_paths {
        let path = match simulate_path_em(&sc, &p, mix_seed(555, k)) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let h = path.h;
        let mut gen_part = 0.0;
        for i in 1..path.len() {
            let x = path.xi[i - 1];
            gen_part += (sc.transform.d1(t_param, x) * sc.drift.eval(t_param, x)
                + 0.5 * sc.transform.d2(t_param, x))
                * h;
        }
        let resid = path.zeta.last().unwrap() - path.zeta[0] - gen_part - path.eta.last().unwrap();
        sq += resid * resid;
        used += 1;
    }
    let rms = (sq / used as f64).sqrt();
    assert!(rms < 0.15, "decomposition residual rms = {rms}");
}

#[test]
fn registry_scenarios_simulate_cleanly() {
    for id in ["zero_drift", "const_drift(1)", "besq(1)", "oscillatory_beta1", "periodic_k1(0.5)", "delta_drift(0)", "delta_drift(0.5)"] {
        let sc = registry_get(id).unwrap();
        let p = params(1000.0, 6.0);
        let path = simulate_path_em(&sc, &p, 9).unwrap();
        assert!(path.xi.iter().all(|v| v.is_finite()), "{id}");
        assert!(path.beta_xi.iter().all(|v| v.is_finite()), "{id}");
    }
}
