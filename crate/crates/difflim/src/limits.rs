//! Simulation of the limit diffusion `d zeta = a0(zeta) dt + sigma0(zeta) dW`
//! and construction of the limit functionals, with exact samplers where the
//! marginal law is known in closed form.
//!
//! Square-root diffusions (the squared-Bessel limits) are stepped with full
//! truncation: both coefficients are evaluated at `max(zeta, 0)`, which keeps
//! the scheme well defined without reflecting the state.

use rand::Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::quad::adaptive_simpson;
use crate::rng::{mix_seed, rng_from_seed};
use crate::scenarios::{Coeff1, ExactLaw, LimitModel, Scenario, TheoremTag};

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("non-finite limit state at step {step}")]
    NonFinite { step: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario {id} is not tagged {tag:?}")]
    NotTagged { id: String, tag: TheoremTag },
}

/// One Euler--Maruyama trajectory of the limit diffusion, carrying its own
/// model handle so functionals can reuse the path's coefficients.
#[derive(Clone)]
pub struct LimitPath {
    pub model: LimitModel,
    pub seed: u64,
    pub h: f64,
    pub times: Vec<f64>,
    pub zeta: Vec<f64>,
    pub dw: Vec<f64>,
}

impl LimitPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State the coefficients were evaluated at on step `i` (full truncation
    /// for square-root diffusions).
    pub fn coeff_state(&self, i: usize) -> f64 {
        if self.model.sqrt_diffusion {
            self.zeta[i].max(0.0)
        } else {
            self.zeta[i]
        }
    }
}

/// Euler--Maruyama path of the limit equation on `[0, horizon]` with step `h`.
pub fn simulate_limit(
    lm: &LimitModel,
    horizon: f64,
    h: f64,
    seed: u64,
) -> Result<LimitPath, LimitError> {
    if !(h > 0.0) || !(horizon > 0.0) {
        return Err(LimitError::InvalidParameter(format!(
            "horizon and step must be positive, got L={horizon}, h={h}"
        )));
    }
    let n = (horizon / h).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    let sqrt_h = h.sqrt();
    let mut rng = rng_from_seed(seed);
    let mut path = LimitPath {
        model: lm.clone(),
        seed,
        h,
        times: Vec::with_capacity(n + 1),
        zeta: Vec::with_capacity(n + 1),
        dw: Vec::with_capacity(n + 1),
    };
    let mut z = lm.y0;
    path.times.push(0.0);
    path.zeta.push(z);
    path.dw.push(0.0);
    for i in 1..=n {
        let at = if lm.sqrt_diffusion { z.max(0.0) } else { z };
        let dw = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        z += lm.a0(at) * h + lm.sigma0(at) * dw;
        if !z.is_finite() {
            return Err(LimitError::NonFinite { step: i });
        }
        path.times.push(i as f64 * h);
        path.zeta.push(z);
        path.dw.push(dw);
    }
    Ok(path)
}

/// Exact squared-Bessel marginal sampler: `n` draws of `t * X` where
/// `X ~ chi'^2(delta, y0/t)`, via the Poisson mixture of central chi-squares.
pub fn sample_besq_exact(
    delta: f64,
    y0: f64,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, LimitError> {
    if !(delta > 0.0) || !(t > 0.0) || y0 < 0.0 {
        return Err(LimitError::InvalidParameter(format!(
            "need delta > 0, t > 0, y0 >= 0; got delta={delta}, y0={y0}, t={t}"
        )));
    }
    let lambda = y0 / t;
    let mut rng = rng_from_seed(seed);
    let poisson = if lambda > 0.0 {
        Some(Poisson::new(0.5 * lambda).map_err(|e| {
            LimitError::InvalidParameter(format!("poisson mixture: {e}"))
        })?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k: f64 = poisson.as_ref().map_or(0.0, |p| rng.sample(*p));
        let df = delta + 2.0 * k;
        let gamma = Gamma::new(0.5 * df, 2.0).map_err(|e| {
            LimitError::InvalidParameter(format!("chi-square sampler: {e}"))
        })?;
        out.push(t * rng.sample::<f64, _>(gamma));
    }
    Ok(out)
}

impl ExactLaw {
    /// `n` exact draws of the limit marginal at time `t` started from `y0`.
    pub fn sample(&self, y0: f64, t: f64, n: usize, seed: u64) -> Result<Vec<f64>, LimitError> {
        match self {
            ExactLaw::Normal { mean_rate, var_rate } => {
                let mut rng = rng_from_seed(seed);
                let mean = y0 + mean_rate * t;
                let sd = (var_rate * t).sqrt();
                Ok((0..n)
                    .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            ExactLaw::Besq { delta } => sample_besq_exact(*delta, y0, t, n, seed),
        }
    }
}

/// Antiderivative of `g0` anchored at `y0`, cached on a uniform grid over the
/// observed range with per-cell Simpson corrections in between.
struct Antiderivative {
    lo: f64,
    h: f64,
    cum: Vec<f64>,
}

impl Antiderivative {
    fn build(g0: &dyn Fn(f64) -> f64, anchor: f64, lo: f64, hi: f64) -> Self {
        let span = (hi - lo).max(1e-9);
        let n = 2048usize;
        let h = span / n as f64;
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            let a = lo + i as f64 * h;
            let m = a + 0.5 * h;
            let b = a + h;
            cum[i + 1] = cum[i] + h / 6.0 * (g0(a) + 4.0 * g0(m) + g0(b));
        }
        let mut table = Self { lo, h, cum };
        let at_anchor = table.eval_raw(g0, anchor);
        for c in &mut table.cum {
            *c -= at_anchor;
        }
        table
    }

    fn eval_raw(&self, g0: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let mut j = ((x - self.lo) / self.h).floor() as isize;
        j = j.clamp(0, self.cum.len() as isize - 2);
        let j = j as usize;
        let a = self.lo + j as f64 * self.h;
        let m = 0.5 * (a + x);
        self.cum[j] + (x - a) / 6.0 * (g0(a) + 4.0 * g0(m) + g0(x))
    }
}

/// Time-average functional `int_0^t g0(zeta(s)) ds`, left-point.
pub fn limit_beta1(path: &LimitPath, g0: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..path.len() {
        acc += g0(path.zeta[i - 1]) * path.h;
        out.push(acc);
    }
    out
}

/// Averaged-integrand limit of `beta1`:
/// `2 ( int_{y0}^{zeta(t)} g0(x) dx - int_0^t g0(zeta) sigma0(zeta) dW )`,
/// with the antiderivative computed by quadrature cached over the path range.
pub fn limit_beta1_tilde(path: &LimitPath, g0: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let (mut lo, mut hi) = (path.model.y0, path.model.y0);
    for &z in &path.zeta {
        lo = lo.min(z);
        hi = hi.max(z);
    }
    let pad = 1e-6 * (1.0 + hi - lo);
    let anti = Antiderivative::build(g0, path.model.y0, lo - pad, hi + pad);
    let mut out = Vec::with_capacity(path.len());
    let mut stoch = 0.0;
    out.push(0.0);
    for i in 1..path.len() {
        let prev = path.coeff_state(i - 1);
        stoch += g0(prev) * path.model.sigma0(prev) * path.dw[i];
        out.push(2.0 * (anti.eval_raw(g0, path.zeta[i]) - stoch));
    }
    out
}

/// Stochastic-integral limit of `beta2`:
/// `int_0^t g0(zeta) dzeta - int_0^t g0(zeta) a0(zeta) ds`.
pub fn limit_beta2(path: &LimitPath, g0: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..path.len() {
        let prev = path.coeff_state(i - 1);
        acc += g0(prev) * (path.zeta[i] - path.zeta[i - 1]);
        acc -= g0(prev) * path.model.a0(prev) * path.h;
        out.push(acc);
    }
    out
}

/// Mixed-functional limit `F0(zeta(t)) + int_0^t g0(zeta) sigma0(zeta) dW`.
pub fn limit_i0(
    path: &LimitPath,
    f0: &dyn Fn(f64) -> f64,
    g0: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut stoch = 0.0;
    out.push(f0(path.zeta[0]));
    for i in 1..path.len() {
        let prev = path.coeff_state(i - 1);
        stoch += g0(prev) * path.model.sigma0(prev) * path.dw[i];
        out.push(f0(path.zeta[i]) + stoch);
    }
    out
}

/// Scale-transform limit functional `F0(zeta(t)) + int_0^t g0(zeta) dzeta`
/// along a driftless path.
pub fn limit_i_thm7(
    path: &LimitPath,
    f0: &dyn Fn(f64) -> f64,
    g0: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut stoch = 0.0;
    out.push(f0(path.zeta[0]));
    for i in 1..path.len() {
        stoch += g0(path.zeta[i - 1]) * (path.zeta[i] - path.zeta[i - 1]);
        out.push(f0(path.zeta[i]) + stoch);
    }
    out
}

/// Limit-side statistic paired with each finite-parameter theorem claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitStat {
    /// `zeta(t)` itself (transformed-process limit).
    Zeta,
    /// `zeta(t)` of the driftless equation (scale-transform limit).
    ZetaDriftless,
    /// `beta1` limit via the residual route (time average of `g0`).
    Beta1,
    /// `beta1` limit via the averaged-integrand route.
    Beta1Tilde,
    /// `beta2` limit.
    Beta2,
    /// Mixed-functional limit `I0`.
    I0,
    /// Scale-transform pair limit `I` (driftless `zeta`).
    IThm7,
}

impl LimitStat {
    fn needs_driftless(&self) -> bool {
        matches!(self, LimitStat::IThm7 | LimitStat::ZetaDriftless)
    }
}

fn functional_for(
    sc: &Scenario,
    which: LimitStat,
    path: &LimitPath,
) -> Result<Vec<f64>, LimitError> {
    let missing = |tag: TheoremTag| LimitError::NotTagged { id: sc.id.clone(), tag };
    Ok(match which {
        LimitStat::Zeta | LimitStat::ZetaDriftless => path.zeta.clone(),
        LimitStat::Beta1 => {
            let g0: Coeff1 = sc.g0_thm3.clone().ok_or(missing(TheoremTag::Thm3))?;
            limit_beta1(path, &*g0)
        }
        LimitStat::Beta1Tilde => {
            let g0: Coeff1 = sc.g0_thm4.clone().ok_or(missing(TheoremTag::Thm4))?;
            limit_beta1_tilde(path, &*g0)
        }
        LimitStat::Beta2 => limit_beta2(path, &*sc.limit.g0_fn()),
        LimitStat::I0 => limit_i0(path, &*sc.limit.f0_fn(), &*sc.limit.g0_fn()),
        LimitStat::IThm7 => {
            let spec = sc.thm7.as_ref().ok_or(missing(TheoremTag::Thm7))?;
            limit_i_thm7(path, &*spec.f0, &*spec.g0)
        }
    })
}

/// Simulated ensemble of one limit functional at the probe times:
/// `values[probe]` is the per-path vector, merged by path index.
pub fn run_limit_ensemble(
    sc: &Scenario,
    which: LimitStat,
    horizon: f64,
    h: f64,
    n_paths: usize,
    seed: u64,
    probes: &[f64],
) -> Result<Vec<Vec<f64>>, LimitError> {
    let model = if which.needs_driftless() {
        sc.limit.driftless()
    } else {
        sc.limit.clone()
    };
    let rows: Vec<Result<Vec<f64>, LimitError>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let path = simulate_limit(&model, horizon, h, mix_seed(seed, k as u64))?;
            let series = functional_for(sc, which, &path)?;
            let n = path.len() - 1;
            Ok(probes
                .iter()
                .map(|&t| series[((t / path.h).round() as usize).min(n)])
                .collect())
        })
        .collect();
    let mut out = vec![Vec::with_capacity(n_paths); probes.len()];
    for row in rows {
        let row = row?;
        for (pi, v) in row.into_iter().enumerate() {
            out[pi].push(v);
        }
    }
    Ok(out)
}

/// Deterministic antiderivative helper exposed for tests of the averaged
/// limit functional.
pub fn antiderivative_of(g0: &dyn Fn(f64) -> f64, anchor: f64, x: f64) -> f64 {
    adaptive_simpson(&|u: f64| g0(u), anchor, x, 1e-10)
}
