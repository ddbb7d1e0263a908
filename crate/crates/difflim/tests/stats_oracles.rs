//! Statistical functionals against independent oracles: the occupation time
//! of a window under Brownian motion has a closed Gaussian-marginal integral
//! that a test-local quadrature reproduces.

use difflim::engine::{simulate_path_em, SimParams, StepPolicy};
use difflim::limits::{run_limit_ensemble, LimitStat};
use difflim::quad::IntervalUnion;
use difflim::rng::mix_seed;
use difflim::scenarios::{registry_get, ExactLaw};
use difflim::stats::{ks_two_sample, occupation_fraction, EmpiricalLaw};
use statrs::distribution::{ContinuousCDF, Normal};

/// Plain midpoint rule, independent of the library quadrature.
fn midpoint_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h) * h).sum()
}

#[test]
fn occupation_time_matches_gaussian_marginal_integral() {
    // E |{s <= 1 : |W_s| <= 0.1}| = int_0^1 (2 Phi(0.1/sqrt(s)) - 1) ds.
    let sc = registry_get("zero_drift").unwrap();
    let p = SimParams::new(100.0, 1.0, StepPolicy::default(), 6.0);
    let set = IntervalUnion::interval(-0.1, 0.1);
    let n_paths = 10_000usize;
    let mut acc = 0.0;
    let mut sq = 0.0;
    for k in 0..n_paths {
        let path = simulate_path_em(&sc, &p, mix_seed(0x0CC, k as u64)).unwrap();
        let occ = occupation_fraction(&path.times, &path.zeta, &set, 1.0);
        acc += occ;
        sq += occ * occ;
    }
    let n = n_paths as f64;
    let mean = acc / n;
    let stderr = ((sq / n - mean * mean) / n).sqrt();

    let normal = Normal::standard();
    let oracle = midpoint_integral(
        |s: f64| 2.0 * normal.cdf(0.1 / s.sqrt()) - 1.0,
        0.0,
        1.0,
        200_000,
    );
    assert!(
        (mean - oracle).abs() <= 3.0 * stderr + 1e-3,
        "occupation mean {mean} vs oracle {oracle} (stderr {stderr})"
    );
}

#[test]
fn periodic_scale_pair_limit_is_standard_normal() {
    // The driftless scale-pair limit functional for the periodic scenario is
    // the transformed endpoint itself; its law is Normal(y0, t).
    let sc = registry_get("periodic_k1(0.5)").unwrap();
    let vals =
        run_limit_ensemble(&sc, LimitStat::IThm7, 1.0, 1e-3, 10_000, 0x1170, &[1.0]).unwrap();
    let sim = EmpiricalLaw::from_samples(vals.into_iter().next().unwrap()).unwrap();
    let exact = ExactLaw::Normal { mean_rate: 0.0, var_rate: 1.0 }
        .sample(sc.limit.y0, 1.0, 10_000, 0x1171)
        .unwrap();
    let exact_law = EmpiricalLaw::from_samples(exact).unwrap();
    let ks = ks_two_sample(&sim, &exact_law);
    assert!(ks < 0.02, "ks = {ks}");
}
