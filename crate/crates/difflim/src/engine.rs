//! Explicit Euler--Maruyama simulation of the finite-parameter process with
//! pathwise accumulation of its additive and mixed functionals.
//!
//! Every stochastic integral uses left-point (Ito) evaluation and all
//! accumulators of a path share the same Wiener increments, so the discrete
//! Euler recurrence and the Ito decomposition
//! `int g dxi = int g a_T dt + int g dW` hold at floating-point exactness on
//! each path. Per-path seeds are derived from the ensemble seed with a
//! published 64-bit mix (see [`crate::rng`]), which makes ensembles
//! reproducible and independent of worker scheduling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{mix_seed, rng_from_seed};
use crate::scale::{ScaleError, ScaleTable};
use crate::scenarios::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path left the domain at step {step}: |{x}| > {x_max}")]
    Excursion { step: usize, x: f64, x_max: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("driver has {have} increments but {need} are required")]
    DriverLength { have: usize, need: usize },
    #[error("transformed state {value} outside scale range [{lo}, {hi}] at step {step}")]
    TransformedRange { step: usize, value: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{failed} of {total} paths failed (> {limit_percent}%); first: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit_percent: f64,
        first: PathError,
    },
    #[error("ensemble needs at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

/// Step-size policy: `h <= min(h_max, 0.1 / (1 + L_T^2))`, the drift-square
/// stability bound for oscillatory drifts whose magnitude grows with the
/// family parameter.
#[derive(Debug, Clone, Copy)]
pub struct StepPolicy {
    pub h_max: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { h_max: 1e-3 }
    }
}

impl StepPolicy {
    pub fn new(h_max: f64) -> Self {
        Self { h_max }
    }

    /// Step and step count for a drift bound and horizon; the step divides
    /// the horizon exactly.
    pub fn step_for(&self, drift_bound: f64, horizon: f64) -> (f64, usize) {
        let target = self.h_max.min(0.1 / (1.0 + drift_bound * drift_bound));
        let n = (horizon / target).ceil().max(1.0) as usize;
        (horizon / n as f64, n)
    }
}

/// Simulation parameters shared by all paths of an ensemble.
#[derive(Debug, Clone, Copy)]
pub struct SimParams {
    pub t_param: f64,
    pub horizon: f64,
    pub policy: StepPolicy,
    /// Paths leaving `[-x_max, x_max]` error out rather than being clamped;
    /// clamping would bias occupation statistics.
    pub x_max: f64,
}

impl SimParams {
    pub fn new(t_param: f64, horizon: f64, policy: StepPolicy, x_max: f64) -> Self {
        Self { t_param, horizon, policy, x_max }
    }
}

/// Snapshot of one path at a grid time, with all running functionals.
#[derive(Debug, Clone, Copy)]
pub struct PathState {
    pub index: usize,
    pub t: f64,
    /// Process value `xi_T(t)`.
    pub xi: f64,
    /// Transformed value `G_T(xi_T(t))`.
    pub zeta: f64,
    /// `int_0^t G_T'(xi) dW`.
    pub eta: f64,
    /// `int_0^t g_T(xi) ds` (left-point Riemann).
    pub beta1: f64,
    /// `int_0^t g_T(xi) dW` (Ito left-point).
    pub beta2: f64,
    /// `int_0^t g_T(xi) dxi` against realized increments.
    pub beta_xi: f64,
    /// `F_T(xi_T(t)) + beta2(t)`.
    pub i_t: f64,
    /// Wiener increment used to reach this state (0 at the start).
    pub dw: f64,
}

/// One fully materialized trajectory.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub t_param: f64,
    pub seed: u64,
    pub h: f64,
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub dw: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta_xi: Vec<f64>,
    pub i_t: Vec<f64>,
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Driftless transformed state when produced by the scale-transformed
    /// integrator; its own Euler recurrence holds exactly.
    pub eta_driver: Option<Vec<f64>>,
}

impl PathSample {
    fn with_capacity(t_param: f64, seed: u64, h: f64, n: usize) -> Self {
        let cap = n + 1;
        Self {
            t_param,
            seed,
            h,
            times: Vec::with_capacity(cap),
            xi: Vec::with_capacity(cap),
            dw: Vec::with_capacity(cap),
            beta1: Vec::with_capacity(cap),
            beta2: Vec::with_capacity(cap),
            beta_xi: Vec::with_capacity(cap),
            i_t: Vec::with_capacity(cap),
            zeta: Vec::with_capacity(cap),
            eta: Vec::with_capacity(cap),
            eta_driver: None,
        }
    }

    fn push(&mut self, st: &PathState) {
        self.times.push(st.t);
        self.xi.push(st.xi);
        self.dw.push(st.dw);
        self.beta1.push(st.beta1);
        self.beta2.push(st.beta2);
        self.beta_xi.push(st.beta_xi);
        self.i_t.push(st.i_t);
        self.zeta.push(st.zeta);
        self.eta.push(st.eta);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes the per-step trace as CSV `t,xi,zeta,eta,beta1,beta2,beta_xi,i_t`.
    pub fn trace_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "t,xi,zeta,eta,beta1,beta2,beta_xi,i_t")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.times[i],
                self.xi[i],
                self.zeta[i],
                self.eta[i],
                self.beta1[i],
                self.beta2[i],
                self.beta_xi[i],
                self.i_t[i]
            )?;
        }
        Ok(())
    }
}

fn initial_state(sc: &Scenario, t_param: f64) -> PathState {
    PathState {
        index: 0,
        t: 0.0,
        xi: sc.x0,
        zeta: sc.transform.value(t_param, sc.x0),
        eta: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        beta_xi: 0.0,
        i_t: sc.functional.big_f(t_param, sc.x0),
        dw: 0.0,
    }
}

/// Core Euler recurrence; `dw_source(i)` supplies the increment for step `i`
/// (1-based) and `visit` observes the state at every grid time including 0.
fn run_path(
    sc: &Scenario,
    p: &SimParams,
    mut dw_source: impl FnMut(usize) -> f64,
    mut visit: impl FnMut(&PathState),
) -> Result<(), PathError> {
    let (h, n) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let t_param = p.t_param;
    let mut st = initial_state(sc, t_param);
    visit(&st);
    for i in 1..=n {
        let a = sc.drift.eval(t_param, st.xi);
        let g = sc.functional.g(t_param, st.xi);
        let gp = sc.transform.d1(t_param, st.xi);
        let dw = dw_source(i);
        let incr = a * h + dw;
        let xi_next = st.xi + incr;
        if !xi_next.is_finite() {
            return Err(PathError::NonFinite { step: i });
        }
        if xi_next.abs() > p.x_max {
            return Err(PathError::Excursion { step: i, x: xi_next, x_max: p.x_max });
        }
        st.beta1 += g * h;
        st.beta2 += g * dw;
        st.beta_xi += g * incr;
        st.eta += gp * dw;
        st.xi = xi_next;
        st.index = i;
        st.t = i as f64 * h;
        st.dw = dw;
        st.zeta = sc.transform.value(t_param, st.xi);
        st.i_t = sc.functional.big_f(t_param, st.xi) + st.beta2;
        visit(&st);
    }
    Ok(())
}

/// Folds a visitor over one simulated path without materializing arrays.
pub fn simulate_fold<A>(
    sc: &Scenario,
    p: &SimParams,
    seed: u64,
    init: A,
    mut visit: impl FnMut(&mut A, &PathState),
) -> Result<A, PathError> {
    let (h, _) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let sqrt_h = h.sqrt();
    let mut rng = rng_from_seed(seed);
    let mut acc = init;
    run_path(
        sc,
        p,
        |_| sqrt_h * rng.sample::<f64, _>(StandardNormal),
        |st| visit(&mut acc, st),
    )?;
    Ok(acc)
}

/// Explicit Euler--Maruyama path with all accumulators, deterministic in
/// `(scenario, params, seed)`.
pub fn simulate_path_em(sc: &Scenario, p: &SimParams, seed: u64) -> Result<PathSample, PathError> {
    let (h, n) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let sqrt_h = h.sqrt();
    let mut rng = rng_from_seed(seed);
    let mut sample = PathSample::with_capacity(p.t_param, seed, h, n);
    run_path(
        sc,
        p,
        |_| sqrt_h * rng.sample::<f64, _>(StandardNormal),
        |st| sample.push(st),
    )?;
    Ok(sample)
}

/// Same recurrence with caller-supplied Wiener increments (`driver[i-1]` for
/// step `i`). Used for common-random-number comparisons such as step halving.
pub fn simulate_path_with_driver(
    sc: &Scenario,
    p: &SimParams,
    driver: &[f64],
) -> Result<PathSample, PathError> {
    let (h, n) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    if driver.len() < n {
        return Err(PathError::DriverLength { have: driver.len(), need: n });
    }
    let mut sample = PathSample::with_capacity(p.t_param, 0, h, n);
    run_path(sc, p, |i| driver[i - 1], |st| sample.push(st))?;
    Ok(sample)
}

/// Simulates the driftless transformed process `d eta = f'(phi(eta)) dW` by
/// Euler--Maruyama and maps back through the scale inverse, accumulating the
/// same functionals along the mapped path. Cross-validates the direct
/// integrator on stiff drifts.
pub fn simulate_path_transformed(
    sc: &Scenario,
    tab: &ScaleTable,
    p: &SimParams,
    seed: u64,
) -> Result<PathSample, PathError> {
    let (h, n) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let sqrt_h = h.sqrt();
    let t_param = p.t_param;
    let mut rng = rng_from_seed(seed);
    let (range_lo, range_hi) = tab.f_range();

    let mut y = tab
        .f_at(sc.x0)
        .map_err(|_| PathError::TransformedRange { step: 0, value: sc.x0, lo: range_lo, hi: range_hi })?;
    let mut st = initial_state(sc, t_param);
    let mut sample = PathSample::with_capacity(t_param, seed, h, n);
    let mut driver = Vec::with_capacity(n + 1);
    sample.push(&st);
    driver.push(y);

    for i in 1..=n {
        let sigma = tab
            .fprime_lerp(st.xi)
            .map_err(|_| PathError::NonFinite { step: i })?;
        let dw = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        let y_next = y + sigma * dw;
        if !(range_lo..=range_hi).contains(&y_next) {
            return Err(PathError::TransformedRange {
                step: i,
                value: y_next,
                lo: range_lo,
                hi: range_hi,
            });
        }
        let xi_next = tab
            .inverse_lerp(y_next)
            .map_err(|_| PathError::NonFinite { step: i })?;
        let g = sc.functional.g(t_param, st.xi);
        let gp = sc.transform.d1(t_param, st.xi);
        st.beta1 += g * h;
        st.beta2 += g * dw;
        st.beta_xi += g * (xi_next - st.xi);
        st.eta += gp * dw;
        st.xi = xi_next;
        st.index = i;
        st.t = i as f64 * h;
        st.dw = dw;
        st.zeta = sc.transform.value(t_param, st.xi);
        st.i_t = sc.functional.big_f(t_param, st.xi) + st.beta2;
        y = y_next;
        sample.push(&st);
        driver.push(y);
    }
    sample.eta_driver = Some(driver);
    Ok(sample)
}

/// Statistic of a path observable at a probe time.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Xi,
    Zeta,
    Beta1,
    Beta2,
    BetaXi,
    IT,
    Eta,
}

impl Statistic {
    pub const ALL: [Statistic; 7] = [
        Statistic::Xi,
        Statistic::Zeta,
        Statistic::Beta1,
        Statistic::Beta2,
        Statistic::BetaXi,
        Statistic::IT,
        Statistic::Eta,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Xi => "xi",
            Statistic::Zeta => "zeta",
            Statistic::Beta1 => "beta1",
            Statistic::Beta2 => "beta2",
            Statistic::BetaXi => "beta_xi",
            Statistic::IT => "i_t",
            Statistic::Eta => "eta",
        }
    }

    pub fn parse(name: &str) -> Option<Statistic> {
        Statistic::ALL.iter().copied().find(|s| s.name() == name)
    }

    pub fn of(&self, st: &PathState) -> f64 {
        match self {
            Statistic::Xi => st.xi,
            Statistic::Zeta => st.zeta,
            Statistic::Beta1 => st.beta1,
            Statistic::Beta2 => st.beta2,
            Statistic::BetaXi => st.beta_xi,
            Statistic::IT => st.i_t,
            Statistic::Eta => st.eta,
        }
    }
}

/// Ensemble request: per-path values of each statistic at each probe time.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n_paths: usize,
    pub seed: u64,
    pub probes: Vec<f64>,
    pub stats: Vec<Statistic>,
}

/// Per-path statistic values merged by path index, with failed paths dropped
/// and counted.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub probes: Vec<f64>,
    pub stats: Vec<Statistic>,
    /// `values[stat][probe]` is the vector over surviving paths.
    pub values: Vec<Vec<Vec<f64>>>,
    pub n_requested: usize,
    pub n_failed: usize,
}

impl EnsembleResult {
    pub fn series(&self, stat: Statistic, probe: f64) -> Option<&[f64]> {
        let si = self.stats.iter().position(|s| *s == stat)?;
        let pi = self
            .probes
            .iter()
            .position(|p| (p - probe).abs() <= 1e-12 * (1.0 + probe.abs()))?;
        Some(&self.values[si][pi])
    }
}

const FAILURE_LIMIT: f64 = 0.01;

/// Runs `n_paths` independent paths in parallel and gathers the requested
/// statistics. Results are keyed by path index, so they do not depend on the
/// number of worker threads. Fails when more than 1% of paths error.
pub fn run_ensemble(
    sc: &Scenario,
    p: &SimParams,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, EnsembleError> {
    if spec.n_paths < 2 {
        return Err(EnsembleError::TooFewPaths(spec.n_paths));
    }
    let (h, n) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let sqrt_h = h.sqrt();
    let probe_indices: Vec<usize> = spec
        .probes
        .iter()
        .map(|&t| ((t / h).round() as usize).min(n))
        .collect();

    let per_path: Vec<Result<Vec<f64>, PathError>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(mix_seed(spec.seed, k as u64));
            let mut captured = vec![0.0; spec.stats.len() * probe_indices.len()];
            let res = run_path(
                sc,
                p,
                |_| sqrt_h * rng.sample::<f64, _>(StandardNormal),
                |st| {
                    for (pi, &target) in probe_indices.iter().enumerate() {
                        if st.index == target {
                            for (si, stat) in spec.stats.iter().enumerate() {
                                captured[si * probe_indices.len() + pi] = stat.of(st);
                            }
                        }
                    }
                },
            );
            res.map(|()| captured)
        })
        .collect();

    let mut values =
        vec![vec![Vec::with_capacity(spec.n_paths); spec.probes.len()]; spec.stats.len()];
    let mut n_failed = 0;
    let mut first_err = None;
    for row in per_path {
        match row {
            Ok(captured) => {
                for si in 0..spec.stats.len() {
                    for pi in 0..spec.probes.len() {
                        values[si][pi].push(captured[si * spec.probes.len() + pi]);
                    }
                }
            }
            Err(e) => {
                n_failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if (n_failed as f64) > FAILURE_LIMIT * spec.n_paths as f64 {
        return Err(EnsembleError::TooManyFailures {
            failed: n_failed,
            total: spec.n_paths,
            limit_percent: FAILURE_LIMIT * 100.0,
            first: first_err.unwrap(),
        });
    }
    Ok(EnsembleResult {
        probes: spec.probes.clone(),
        stats: spec.stats.clone(),
        values,
        n_requested: spec.n_paths,
        n_failed,
    })
}

/// Parallel per-path fold: runs `n_paths` paths and returns one accumulator
/// per surviving path, ordered by path index.
pub fn run_ensemble_fold<A: Send>(
    sc: &Scenario,
    p: &SimParams,
    n_paths: usize,
    seed: u64,
    init: impl Fn() -> A + Sync,
    visit: impl Fn(&mut A, &PathState) + Sync,
) -> Result<Vec<A>, EnsembleError> {
    if n_paths < 2 {
        return Err(EnsembleError::TooFewPaths(n_paths));
    }
    let (h, _) = p.policy.step_for(sc.drift.bound(p.t_param), p.horizon);
    let sqrt_h = h.sqrt();
    let per_path: Vec<Result<A, PathError>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(mix_seed(seed, k as u64));
            let mut acc = init();
            run_path(
                sc,
                p,
                |_| sqrt_h * rng.sample::<f64, _>(StandardNormal),
                |st| visit(&mut acc, st),
            )
            .map(|()| acc)
        })
        .collect();
    let total = per_path.len();
    let mut out = Vec::with_capacity(total);
    let mut n_failed = 0;
    let mut first_err = None;
    for r in per_path {
        match r {
            Ok(a) => out.push(a),
            Err(e) => {
                n_failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if (n_failed as f64) > FAILURE_LIMIT * total as f64 {
        return Err(EnsembleError::TooManyFailures {
            failed: n_failed,
            total,
            limit_percent: FAILURE_LIMIT * 100.0,
            first: first_err.unwrap(),
        });
    }
    Ok(out)
}
