//! Coefficient families and the scenario registry.
//!
//! A scenario bundles a drift family `a_T`, a transform family `G_T`, a
//! functional family `(g_T, F_T)`, and the limit diffusion coefficients
//! `(a_0, sigma_0, g_0, F_0, y_0)` it is expected to converge to, together
//! with the theorem tags that state which convergence claims apply and any
//! closed-form oracles available for testing.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quad::bessel_i0;

/// Evaluator of a family member at `(t_param, x)`, where `t_param` is the
/// family parameter driven to infinity in the limit experiments.
pub type Coeff2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Scalar function of one real argument.
pub type Coeff1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn coeff2(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Coeff2 {
    Arc::new(f)
}

pub fn coeff1(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Coeff1 {
    Arc::new(f)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario id {id:?}; known ids: {known}")]
    NotFound { id: String, known: String },
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error("operation {op} requires theorem tag {tag:?} on scenario {id}")]
    NotTagged {
        op: &'static str,
        tag: TheoremTag,
        id: String,
    },
    #[error("scenario {id} is tagged {tag:?} but is missing field {field}")]
    MissingField {
        id: String,
        tag: TheoremTag,
        field: &'static str,
    },
}

/// Bounded measurable drift family `a_T(x)`.
#[derive(Clone)]
pub struct DriftFamily {
    pub id: String,
    eval: Coeff2,
    bound: Coeff1,
    feature: Coeff1,
}

impl DriftFamily {
    pub fn new(id: &str, eval: Coeff2, bound: Coeff1, feature: Coeff1) -> Self {
        Self { id: id.to_string(), eval, bound, feature }
    }

    /// Drift value `a_T(x)`.
    pub fn eval(&self, t_param: f64, x: f64) -> f64 {
        (self.eval)(t_param, x)
    }

    /// Uniform bound `L_T` with `|a_T(x)| <= L_T` for all `x`.
    pub fn bound(&self, t_param: f64) -> f64 {
        (self.bound)(t_param)
    }

    /// Smallest spatial wavelength of the drift; `+inf` for smooth families.
    pub fn feature_scale(&self, t_param: f64) -> f64 {
        (self.feature)(t_param)
    }
}

impl fmt::Debug for DriftFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftFamily").field("id", &self.id).finish()
    }
}

/// Transform family `G_T(x)` with first and a.e. second derivatives and the
/// growth constants of the lower bound `|G_T(x)| >= c |x|^alpha`.
#[derive(Clone)]
pub struct TransformFamily {
    pub id: String,
    value: Coeff2,
    d1: Coeff2,
    d2: Coeff2,
    pub growth_c: f64,
    pub growth_alpha: f64,
    feature: Coeff1,
    /// Points where `G_T''` may jump; finite-difference checks avoid them.
    pub kinks: Vec<f64>,
}

impl TransformFamily {
    pub fn new(
        id: &str,
        value: Coeff2,
        d1: Coeff2,
        d2: Coeff2,
        growth_c: f64,
        growth_alpha: f64,
        feature: Coeff1,
    ) -> Self {
        Self {
            id: id.to_string(),
            value,
            d1,
            d2,
            growth_c,
            growth_alpha,
            feature,
            kinks: Vec::new(),
        }
    }

    pub fn value(&self, t_param: f64, x: f64) -> f64 {
        (self.value)(t_param, x)
    }

    pub fn d1(&self, t_param: f64, x: f64) -> f64 {
        (self.d1)(t_param, x)
    }

    pub fn d2(&self, t_param: f64, x: f64) -> f64 {
        (self.d2)(t_param, x)
    }

    pub fn feature_scale(&self, t_param: f64) -> f64 {
        (self.feature)(t_param)
    }
}

impl fmt::Debug for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformFamily").field("id", &self.id).finish()
    }
}

/// Functional family: locally bounded `g_T` and continuous `F_T`.
#[derive(Clone)]
pub struct FunctionalFamily {
    pub id: String,
    g: Coeff2,
    big_f: Coeff2,
    local_bound: Coeff2,
    feature: Coeff1,
}

impl FunctionalFamily {
    pub fn new(id: &str, g: Coeff2, big_f: Coeff2, local_bound: Coeff2, feature: Coeff1) -> Self {
        Self { id: id.to_string(), g, big_f, local_bound, feature }
    }

    /// `g_T(x)`.
    pub fn g(&self, t_param: f64, x: f64) -> f64 {
        (self.g)(t_param, x)
    }

    /// `F_T(x)`.
    pub fn big_f(&self, t_param: f64, x: f64) -> f64 {
        (self.big_f)(t_param, x)
    }

    /// Bound of `|g_T|` on `[-n, n]`.
    pub fn local_bound(&self, t_param: f64, n: f64) -> f64 {
        (self.local_bound)(t_param, n)
    }

    pub fn feature_scale(&self, t_param: f64) -> f64 {
        (self.feature)(t_param)
    }
}

impl fmt::Debug for FunctionalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalFamily").field("id", &self.id).finish()
    }
}

/// Coefficients of the limit diffusion `d zeta = a0(zeta) dt + sigma0(zeta) dW`
/// started at `y0`, plus the limit functionals `g0` and `F0` paired with the
/// endpoint/stochastic-integral theorems.
#[derive(Clone)]
pub struct LimitModel {
    a0: Coeff1,
    sigma0: Coeff1,
    g0: Coeff1,
    f0: Coeff1,
    pub y0: f64,
    /// Square-root diffusion marker; the limit integrator then evaluates the
    /// coefficients at `max(zeta, 0)` (full truncation).
    pub sqrt_diffusion: bool,
}

impl LimitModel {
    pub fn new(a0: Coeff1, sigma0: Coeff1, g0: Coeff1, f0: Coeff1, y0: f64) -> Self {
        Self { a0, sigma0, g0, f0, y0, sqrt_diffusion: false }
    }

    pub fn with_sqrt_diffusion(mut self) -> Self {
        self.sqrt_diffusion = true;
        self
    }

    pub fn a0(&self, y: f64) -> f64 {
        (self.a0)(y)
    }

    pub fn sigma0(&self, y: f64) -> f64 {
        (self.sigma0)(y)
    }

    pub fn g0(&self, y: f64) -> f64 {
        (self.g0)(y)
    }

    pub fn f0(&self, y: f64) -> f64 {
        (self.f0)(y)
    }

    pub fn a0_fn(&self) -> Coeff1 {
        self.a0.clone()
    }

    pub fn sigma0_fn(&self) -> Coeff1 {
        self.sigma0.clone()
    }

    pub fn g0_fn(&self) -> Coeff1 {
        self.g0.clone()
    }

    pub fn f0_fn(&self) -> Coeff1 {
        self.f0.clone()
    }

    /// Driftless copy with the same diffusion coefficient and start point.
    pub fn driftless(&self) -> LimitModel {
        let mut lm = LimitModel::new(
            coeff1(|_| 0.0),
            self.sigma0.clone(),
            self.g0.clone(),
            self.f0.clone(),
            self.y0,
        );
        lm.sqrt_diffusion = self.sqrt_diffusion;
        lm
    }
}

impl fmt::Debug for LimitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitModel")
            .field("y0", &self.y0)
            .field("sqrt_diffusion", &self.sqrt_diffusion)
            .finish()
    }
}

/// Endpoint/integrand pair used by the scale-transform equivalence theorem,
/// which carries its own `F0`/`g0` (the unit normalization of the scale
/// function shifts them relative to the other theorems), plus the declared
/// two-sided bounds on `f_T'` defining the class.
#[derive(Clone)]
pub struct Thm7Spec {
    pub f0: Coeff1,
    pub g0: Coeff1,
    pub k1_lower: f64,
    pub k1_upper: f64,
}

impl fmt::Debug for Thm7Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Thm7Spec")
            .field("k1_lower", &self.k1_lower)
            .field("k1_upper", &self.k1_upper)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TheoremTag {
    Thm2,
    Thm3,
    Thm4,
    Thm5,
    Thm6,
    Thm7,
}

impl fmt::Display for TheoremTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TheoremTag::Thm2 => "thm2",
            TheoremTag::Thm3 => "thm3",
            TheoremTag::Thm4 => "thm4",
            TheoremTag::Thm5 => "thm5",
            TheoremTag::Thm6 => "thm6",
            TheoremTag::Thm7 => "thm7",
        };
        f.write_str(s)
    }
}

/// Marginal law of the limit process at time `t`, sampled exactly.
#[derive(Clone, Debug)]
pub enum ExactLaw {
    /// `zeta(t) ~ Normal(y0 + mean_rate * t, var_rate * t)`.
    Normal { mean_rate: f64, var_rate: f64 },
    /// `zeta(t) ~ t * chi'^2(delta, y0 / t)` (squared-Bessel marginal).
    Besq { delta: f64 },
}

impl ExactLaw {
    /// Mean of the law at time `t` started from `y0`.
    pub fn mean(&self, y0: f64, t: f64) -> f64 {
        match self {
            ExactLaw::Normal { mean_rate, .. } => y0 + mean_rate * t,
            ExactLaw::Besq { delta } => y0 + delta * t,
        }
    }

    /// Variance of the law at time `t` started from `y0`.
    pub fn variance(&self, y0: f64, t: f64) -> f64 {
        match self {
            ExactLaw::Normal { var_rate, .. } => var_rate * t,
            // t^2 * 2(delta + 2 y0/t)
            ExactLaw::Besq { delta } => 2.0 * t * t * (delta + 2.0 * y0 / t),
        }
    }
}

/// Analytic oracles attached to a scenario for test and acceptance use.
#[derive(Clone, Default)]
pub struct ClosedForms {
    /// Exact scale-function derivative `f_T'(x)`.
    pub fprime: Option<Coeff2>,
    /// Exact scale function `f_T(x)`.
    pub scale: Option<Coeff2>,
    /// Exact inverse `phi_T(y)`.
    pub scale_inverse: Option<Coeff2>,
    /// Exact marginal law of the limit `zeta(t)`.
    pub limit_marginal: Option<ExactLaw>,
    /// Exact value of the averaged-integrand sup check, as a function of `t_param`.
    pub a4_sup: Option<Coeff1>,
    /// Deterministic limit of `beta1(t)` per unit time, when the averaged
    /// functional collapses to `rate * t`.
    pub beta1_limit_rate: Option<f64>,
}

impl fmt::Debug for ClosedForms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForms")
            .field("fprime", &self.fprime.is_some())
            .field("limit_marginal", &self.limit_marginal)
            .finish()
    }
}

/// A fully specified experiment subject.
#[derive(Clone)]
pub struct Scenario {
    pub id: String,
    pub drift: DriftFamily,
    pub transform: TransformFamily,
    pub functional: FunctionalFamily,
    pub limit: LimitModel,
    pub x0: f64,
    /// `g0` for the time-average limit of `beta1` (residual route).
    pub g0_thm3: Option<Coeff1>,
    /// `g0` for the averaged-integrand limit of `beta1`.
    pub g0_thm4: Option<Coeff1>,
    pub thm7: Option<Thm7Spec>,
    pub closed_forms: ClosedForms,
    pub tags: BTreeSet<TheoremTag>,
    y0_of_x0: Coeff1,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("id", &self.id)
            .field("x0", &self.x0)
            .field("tags", &self.tags)
            .field("limit", &self.limit)
            .finish()
    }
}

impl Scenario {
    /// Smallest spatial wavelength among the scenario's families; grid steps
    /// must resolve it or the sup/integral checks alias the oscillations.
    pub fn feature_scale(&self, t_param: f64) -> f64 {
        self.drift
            .feature_scale(t_param)
            .min(self.transform.feature_scale(t_param))
            .min(self.functional.feature_scale(t_param))
    }

    pub fn has_tag(&self, tag: TheoremTag) -> bool {
        self.tags.contains(&tag)
    }

    fn require_tag(&self, op: &'static str, tag: TheoremTag) -> Result<(), ScenarioError> {
        if self.has_tag(tag) {
            Ok(())
        } else {
            Err(ScenarioError::NotTagged { op, tag, id: self.id.clone() })
        }
    }

    /// Drift residual `G_T' a_T + G_T''/2 - a0(G_T)` at `(t_param, x)`.
    pub fn residual_q1(&self, t_param: f64, x: f64) -> Result<f64, ScenarioError> {
        self.require_tag("residual_q1", TheoremTag::Thm2)?;
        Ok(self.residual_q1_unchecked(t_param, x))
    }

    /// Diffusion residual `(G_T')^2 - sigma0^2(G_T)` at `(t_param, x)`.
    pub fn residual_q2(&self, t_param: f64, x: f64) -> Result<f64, ScenarioError> {
        self.require_tag("residual_q2", TheoremTag::Thm2)?;
        Ok(self.residual_q2_unchecked(t_param, x))
    }

    pub(crate) fn residual_q1_unchecked(&self, t_param: f64, x: f64) -> f64 {
        self.transform.d1(t_param, x) * self.drift.eval(t_param, x)
            + 0.5 * self.transform.d2(t_param, x)
            - self.limit.a0(self.transform.value(t_param, x))
    }

    pub(crate) fn residual_q2_unchecked(&self, t_param: f64, x: f64) -> f64 {
        let d1 = self.transform.d1(t_param, x);
        let s = self.limit.sigma0(self.transform.value(t_param, x));
        d1 * d1 - s * s
    }

    /// Rebases the scenario at a different start point, updating `y0`.
    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self.limit.y0 = (self.y0_of_x0)(x0);
        self
    }

    /// Checks that every theorem tag has the fields it needs.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.has_tag(TheoremTag::Thm3) && self.g0_thm3.is_none() {
            return Err(ScenarioError::MissingField {
                id: self.id.clone(),
                tag: TheoremTag::Thm3,
                field: "g0_thm3",
            });
        }
        if self.has_tag(TheoremTag::Thm4) && self.g0_thm4.is_none() {
            return Err(ScenarioError::MissingField {
                id: self.id.clone(),
                tag: TheoremTag::Thm4,
                field: "g0_thm4",
            });
        }
        if self.has_tag(TheoremTag::Thm7) && self.thm7.is_none() {
            return Err(ScenarioError::MissingField {
                id: self.id.clone(),
                tag: TheoremTag::Thm7,
                field: "thm7",
            });
        }
        Ok(())
    }
}

fn tags(list: &[TheoremTag]) -> BTreeSet<TheoremTag> {
    list.iter().copied().collect()
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Documented scenario id patterns with their default parameters.
pub const REGISTRY_PATTERNS: &[(&str, &str)] = &[
    ("zero_drift", "driftless Brownian motion, identity transform"),
    ("const_drift(a)", "constant drift a (default 1); closed-form scale function"),
    ("besq(c0)", "drift c0*T*x/(1+x^2*T), transform x^2; squared-Bessel limit; requires c0 > -1/2 (default 1)"),
    ("oscillatory_beta1", "zero drift with g_T = 1 + sin(x*sqrt(T)); averaged beta1 limit t"),
    ("periodic_k1(alpha)", "drift alpha*sqrt(T)*cos(x*sqrt(T)); bounded scale derivative, homogenizes to unit diffusion (default 0.5)"),
    ("delta_drift(lambda)", "drift sqrt(T)*a(x*sqrt(T)) with tabulated compact profile, integral lambda (default 0)"),
];

/// Parses ids like `besq(1.5)` into the family name and optional parameter.
fn parse_id(id: &str) -> Result<(&str, Option<f64>), ScenarioError> {
    let id = id.trim();
    if let Some(open) = id.find('(') {
        if !id.ends_with(')') {
            return Err(ScenarioError::InvalidParameter(format!(
                "malformed scenario id {id:?}: missing closing parenthesis"
            )));
        }
        let name = &id[..open];
        let arg = &id[open + 1..id.len() - 1];
        let value: f64 = arg.trim().parse().map_err(|_| {
            ScenarioError::InvalidParameter(format!(
                "malformed scenario id {id:?}: {arg:?} is not a number"
            ))
        })?;
        Ok((name, Some(value)))
    } else {
        Ok((id, None))
    }
}

fn known_ids() -> String {
    REGISTRY_PATTERNS
        .iter()
        .map(|(id, _)| *id)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Looks up a scenario by id, e.g. `"besq(1)"` or `"zero_drift"`.
pub fn registry_get(id: &str) -> Result<Scenario, ScenarioError> {
    let (name, param) = parse_id(id)?;
    match name {
        "zero_drift" => Ok(zero_drift()),
        "const_drift" => Ok(const_drift(param.unwrap_or(1.0))),
        "besq" => besq(param.unwrap_or(1.0)),
        "oscillatory_beta1" => Ok(oscillatory_beta1()),
        "periodic_k1" => Ok(periodic_k1(param.unwrap_or(0.5))),
        "delta_drift" => Ok(delta_drift(param.unwrap_or(0.0))),
        _ => Err(ScenarioError::NotFound { id: id.to_string(), known: known_ids() }),
    }
}

/// The concrete default entries shown by `list-scenarios` and exercised by
/// the registry-wide invariant tests.
pub fn registry_default_entries() -> Vec<Scenario> {
    vec![
        zero_drift(),
        const_drift(1.0),
        besq(0.5).expect("valid parameter"),
        besq(1.0).expect("valid parameter"),
        besq(2.0).expect("valid parameter"),
        oscillatory_beta1(),
        periodic_k1(0.5),
        delta_drift(0.0),
    ]
}

fn identity_transform() -> TransformFamily {
    TransformFamily::new(
        "identity",
        coeff2(|_, x| x),
        coeff2(|_, _| 1.0),
        coeff2(|_, _| 0.0),
        1.0,
        1.0,
        coeff1(|_| f64::INFINITY),
    )
}

fn zero_drift_family() -> DriftFamily {
    DriftFamily::new(
        "zero",
        coeff2(|_, _| 0.0),
        coeff1(|_| 0.0),
        coeff1(|_| f64::INFINITY),
    )
}

/// Driftless Brownian motion observed through the identity transform. The
/// finite-parameter process already equals its limit, which makes this the
/// canonical smoke-test subject: every theorem applies and every quantity is
/// available in closed form.
pub fn zero_drift() -> Scenario {
    let limit = LimitModel::new(
        coeff1(|_| 0.0),
        coeff1(|_| 1.0),
        coeff1(|_| 1.0),
        coeff1(|y| -y),
        0.0,
    );
    let mut sc = Scenario {
        id: "zero_drift".to_string(),
        drift: zero_drift_family(),
        transform: identity_transform(),
        functional: FunctionalFamily::new(
            "unit",
            coeff2(|_, _| 1.0),
            coeff2(|_, x| -x),
            coeff2(|_, _| 1.0),
            coeff1(|_| f64::INFINITY),
        ),
        limit,
        x0: 0.0,
        g0_thm3: Some(coeff1(|_| 1.0)),
        g0_thm4: Some(coeff1(|y| y)),
        thm7: Some(Thm7Spec {
            f0: coeff1(|_| 0.0),
            g0: coeff1(|_| 0.0),
            k1_lower: 1.0,
            k1_upper: 1.0,
        }),
        closed_forms: ClosedForms {
            fprime: Some(coeff2(|_, _| 1.0)),
            scale: Some(coeff2(|_, x| x)),
            scale_inverse: Some(coeff2(|_, y| y)),
            limit_marginal: Some(ExactLaw::Normal { mean_rate: 0.0, var_rate: 1.0 }),
            a4_sup: None,
            beta1_limit_rate: Some(1.0),
        },
        tags: tags(&[
            TheoremTag::Thm2,
            TheoremTag::Thm3,
            TheoremTag::Thm4,
            TheoremTag::Thm5,
            TheoremTag::Thm6,
            TheoremTag::Thm7,
        ]),
        y0_of_x0: coeff1(|x0| x0),
    };
    sc.limit.y0 = sc.x0;
    sc
}

/// Constant drift `a`; the finite-parameter process is a Brownian motion with
/// drift for every `t_param` and the scale function is elementary.
pub fn const_drift(a: f64) -> Scenario {
    let limit = LimitModel::new(
        coeff1(move |_| a),
        coeff1(|_| 1.0),
        coeff1(|_| 1.0),
        coeff1(|_| 0.0),
        0.0,
    );
    let scale = move |x: f64| {
        if a == 0.0 {
            x
        } else {
            (1.0 - (-2.0 * a * x).exp()) / (2.0 * a)
        }
    };
    let mut sc = Scenario {
        id: format!("const_drift({a})"),
        drift: DriftFamily::new(
            "constant",
            coeff2(move |_, _| a),
            coeff1(move |_| a.abs()),
            coeff1(|_| f64::INFINITY),
        ),
        transform: identity_transform(),
        functional: FunctionalFamily::new(
            "unit",
            coeff2(|_, _| 1.0),
            coeff2(|_, _| 0.0),
            coeff2(|_, _| 1.0),
            coeff1(|_| f64::INFINITY),
        ),
        limit,
        x0: 0.0,
        g0_thm3: Some(coeff1(|_| 1.0)),
        g0_thm4: None,
        thm7: None,
        closed_forms: ClosedForms {
            fprime: Some(coeff2(move |_, x| (-2.0 * a * x).exp())),
            scale: Some(coeff2(move |_, x| scale(x))),
            scale_inverse: Some(coeff2(move |_, y| {
                if a == 0.0 {
                    y
                } else {
                    -(1.0 - 2.0 * a * y).ln() / (2.0 * a)
                }
            })),
            limit_marginal: Some(ExactLaw::Normal { mean_rate: a, var_rate: 1.0 }),
            a4_sup: None,
            beta1_limit_rate: Some(1.0),
        },
        tags: tags(&[
            TheoremTag::Thm2,
            TheoremTag::Thm3,
            TheoremTag::Thm5,
            TheoremTag::Thm6,
        ]),
        y0_of_x0: coeff1(|x0| x0),
    };
    sc.limit.y0 = sc.x0;
    sc
}

/// Drift `c0*T*x/(1+x^2*T)` with transform `x^2`. The transformed process
/// converges to a squared Bessel diffusion of dimension `1 + 2*c0`, which has
/// exactly sampleable (scaled noncentral chi-square) marginals.
pub fn besq(c0: f64) -> Result<Scenario, ScenarioError> {
    if !(c0 > -0.5) {
        return Err(ScenarioError::InvalidParameter(format!(
            "besq requires c0 > -1/2, got {c0}"
        )));
    }
    let delta = 1.0 + 2.0 * c0;
    let limit = LimitModel::new(
        coeff1(move |_| delta),
        coeff1(|y| 2.0 * y.max(0.0).sqrt()),
        coeff1(|_| 1.0),
        coeff1(|y| y),
        1.0,
    )
    .with_sqrt_diffusion();
    let x0 = 1.0;
    let mut sc = Scenario {
        id: format!("besq({c0})"),
        drift: DriftFamily::new(
            "besq",
            coeff2(move |t, x| c0 * t * x / (1.0 + x * x * t)),
            // |a_T| peaks at x = 1/sqrt(T) with value |c0| sqrt(T) / 2
            coeff1(move |t| 0.5 * c0.abs() * t.sqrt()),
            coeff1(|t| t.sqrt().recip()),
        ),
        transform: TransformFamily::new(
            "square",
            coeff2(|_, x| x * x),
            coeff2(|_, x| 2.0 * x),
            coeff2(|_, _| 2.0),
            1.0,
            2.0,
            coeff1(|_| f64::INFINITY),
        ),
        functional: FunctionalFamily::new(
            "square_pair",
            coeff2(|_, x| 2.0 * x),
            coeff2(|_, x| x * x),
            coeff2(|_, n: f64| 2.0 * n.abs()),
            coeff1(|_| f64::INFINITY),
        ),
        limit,
        x0,
        g0_thm3: None,
        g0_thm4: None,
        thm7: None,
        closed_forms: ClosedForms {
            fprime: Some(coeff2(move |t, x| (1.0 + x * x * t).powf(-c0))),
            scale: None,
            scale_inverse: None,
            limit_marginal: Some(ExactLaw::Besq { delta }),
            a4_sup: None,
            beta1_limit_rate: None,
        },
        tags: tags(&[TheoremTag::Thm2, TheoremTag::Thm5, TheoremTag::Thm6]),
        y0_of_x0: coeff1(|x0| x0 * x0),
    };
    sc.limit.y0 = x0 * x0;
    Ok(sc)
}

/// Zero drift with the oscillating integrand `g_T(x) = 1 + sin(x*sqrt(T))`.
/// The time average of `g_T` along the path converges to the deterministic
/// function `t`: the oscillation integrates itself away.
pub fn oscillatory_beta1() -> Scenario {
    let mut sc = Scenario {
        id: "oscillatory_beta1".to_string(),
        drift: zero_drift_family(),
        transform: identity_transform(),
        functional: FunctionalFamily::new(
            "one_plus_sin",
            coeff2(|t, x| 1.0 + (x * t.sqrt()).sin()),
            coeff2(|_, _| 0.0),
            coeff2(|_, _| 2.0),
            coeff1(|t| t.sqrt().recip()),
        ),
        limit: LimitModel::new(
            coeff1(|_| 0.0),
            coeff1(|_| 1.0),
            coeff1(|_| 0.0),
            coeff1(|_| 0.0),
            0.0,
        ),
        x0: 0.0,
        g0_thm3: Some(coeff1(|_| 1.0)),
        g0_thm4: Some(coeff1(|y| y)),
        thm7: None,
        closed_forms: ClosedForms {
            fprime: Some(coeff2(|_, _| 1.0)),
            scale: Some(coeff2(|_, x| x)),
            scale_inverse: Some(coeff2(|_, y| y)),
            limit_marginal: Some(ExactLaw::Normal { mean_rate: 0.0, var_rate: 1.0 }),
            // sup over |x| <= N of (1 - cos(x sqrt(T))) / sqrt(T), attained
            // once the cosine reaches -1 inside the window.
            a4_sup: Some(coeff1(|t| 2.0 / t.sqrt())),
            beta1_limit_rate: Some(1.0),
        },
        tags: tags(&[TheoremTag::Thm2, TheoremTag::Thm3, TheoremTag::Thm4]),
        y0_of_x0: coeff1(|x0| x0),
    };
    sc.limit.y0 = sc.x0;
    sc
}

/// Cumulative table of a smooth periodic integrand over one period, used to
/// evaluate scale-type transforms in O(1) per call.
#[derive(Debug)]
struct PeriodTable {
    /// Cumulative integral at `theta_i = i * h`, `i = 0..=n`.
    cum: Vec<f64>,
    h: f64,
    /// Integral over the full period.
    total: f64,
}

const PERIOD: f64 = 2.0 * std::f64::consts::PI;

impl PeriodTable {
    fn build(f: impl Fn(f64) -> f64, n: usize) -> Self {
        let h = PERIOD / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            let m = a + 0.5 * h;
            let b = a + h;
            acc += h / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            cum.push(acc);
        }
        let total = acc;
        Self { cum, h, total }
    }

    /// Antiderivative value at any real `theta`, exploiting periodicity; a
    /// per-cell Simpson correction keeps the result accurate between nodes.
    fn eval(&self, f: impl Fn(f64) -> f64, theta: f64) -> f64 {
        let k = (theta / PERIOD).floor();
        let r = theta - k * PERIOD;
        let mut j = (r / self.h).floor() as usize;
        if j >= self.cum.len() - 1 {
            j = self.cum.len() - 2;
        }
        let a = j as f64 * self.h;
        let local = if r > a {
            let m = 0.5 * (a + r);
            (r - a) / 6.0 * (f(a) + 4.0 * f(m) + f(r))
        } else {
            0.0
        };
        k * self.total + self.cum[j] + local
    }
}

/// Drift `alpha*sqrt(T)*cos(x*sqrt(T))`. The scale derivative
/// `exp(-2*alpha*sin(x*sqrt(T)))` stays inside fixed two-sided bounds, and its
/// period average equals that of its reciprocal, so the scale-transformed
/// process homogenizes to a standard Brownian motion.
pub fn periodic_k1(alpha: f64) -> Scenario {
    let table = Arc::new(PeriodTable::build(move |s: f64| (-2.0 * alpha * s.sin()).exp(), 4096));
    let value_table = table.clone();
    let value = coeff2(move |t: f64, x: f64| {
        let rt = t.sqrt();
        value_table.eval(|s: f64| (-2.0 * alpha * s.sin()).exp(), x * rt) / rt
    });
    let d1 = coeff2(move |t: f64, x: f64| (-2.0 * alpha * (x * t.sqrt()).sin()).exp());
    let d2 = coeff2(move |t: f64, x: f64| {
        let rt = t.sqrt();
        let drift = alpha * rt * (x * rt).cos();
        -2.0 * drift * (-2.0 * alpha * (x * rt).sin()).exp()
    });
    let i0 = bessel_i0(2.0 * alpha);
    let mut sc = Scenario {
        id: format!("periodic_k1({alpha})"),
        drift: DriftFamily::new(
            "periodic",
            coeff2(move |t, x| alpha * t.sqrt() * (x * t.sqrt()).cos()),
            coeff1(move |t| alpha.abs() * t.sqrt()),
            coeff1(|t| t.sqrt().recip()),
        ),
        transform: TransformFamily::new(
            "scale_periodic",
            value,
            d1.clone(),
            d2,
            (-2.0 * alpha.abs()).exp(),
            1.0,
            coeff1(|t| t.sqrt().recip()),
        ),
        functional: FunctionalFamily::new(
            "scale_derivative",
            d1,
            coeff2(|_, _| 0.0),
            coeff2(move |_, _| (2.0 * alpha.abs()).exp()),
            coeff1(|t| t.sqrt().recip()),
        ),
        limit: LimitModel::new(
            coeff1(|_| 0.0),
            coeff1(|_| 1.0),
            coeff1(|_| 1.0),
            coeff1(|_| 0.0),
            0.0,
        ),
        x0: 0.0,
        g0_thm3: None,
        g0_thm4: None,
        thm7: Some(Thm7Spec {
            f0: coeff1(|y| y),
            g0: coeff1(|_| 0.0),
            k1_lower: (-2.0 * alpha.abs()).exp(),
            k1_upper: (2.0 * alpha.abs()).exp(),
        }),
        closed_forms: ClosedForms {
            fprime: Some(coeff2(move |t, x| (-2.0 * alpha * (x * t.sqrt()).sin()).exp())),
            scale: None,
            scale_inverse: None,
            limit_marginal: Some(ExactLaw::Normal { mean_rate: 0.0, var_rate: 1.0 }),
            a4_sup: None,
            beta1_limit_rate: None,
        },
        tags: tags(&[
            TheoremTag::Thm2,
            TheoremTag::Thm5,
            TheoremTag::Thm6,
            TheoremTag::Thm7,
        ]),
        y0_of_x0: coeff1(move |x0| i0 * x0),
    };
    sc.limit.y0 = i0 * sc.x0;
    sc
}

/// Tabulated compactly supported drift profile on `[-1, 1]`, evaluated by
/// linear interpolation; zero outside the table. The cumulative integral of
/// the interpolant is exact (piecewise quadratic).
#[derive(Debug)]
pub struct DriftProfile {
    us: Vec<f64>,
    vals: Vec<f64>,
    cum: Vec<f64>,
    h: f64,
}

impl DriftProfile {
    /// Tabulates `f` at `n + 1` uniform nodes spanning `[-1, 1]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, n: usize) -> Self {
        let h = 2.0 / n as f64;
        let us: Vec<f64> = (0..=n).map(|i| -1.0 + i as f64 * h).collect();
        let vals: Vec<f64> = us.iter().map(|&u| f(u)).collect();
        // Exact antiderivative of the piecewise-linear interpolant, anchored
        // so that cum[i] = integral from 0 to us[i].
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            cum[i + 1] = cum[i] + 0.5 * h * (vals[i] + vals[i + 1]);
        }
        let center = cum[n / 2];
        for c in &mut cum {
            *c -= center;
        }
        Self { us, vals, cum, h }
    }

    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        let mut j = ((u + 1.0) / self.h).floor() as usize;
        if j >= self.vals.len() - 1 {
            j = self.vals.len() - 2;
        }
        let w = (u - self.us[j]) / self.h;
        self.vals[j] * (1.0 - w) + self.vals[j + 1] * w
    }

    /// Integral of the interpolant from 0 to `u` (clamped to the support for
    /// the interior part; the profile is zero outside).
    pub fn integral(&self, u: f64) -> f64 {
        let uc = u.clamp(-1.0, 1.0);
        let mut j = ((uc + 1.0) / self.h).floor() as usize;
        if j >= self.vals.len() - 1 {
            j = self.vals.len() - 2;
        }
        let du = uc - self.us[j];
        let slope = (self.vals[j + 1] - self.vals[j]) / self.h;
        self.cum[j] + self.vals[j] * du + 0.5 * slope * du * du
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Range of the antiderivative over the support.
    pub fn integral_range(&self) -> (f64, f64) {
        self.cum
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)))
    }
}

/// Drift `sqrt(T) * a(x*sqrt(T))` with `a` a tabulated compact profile of
/// integral `lambda`: `a(u) = lambda * (15/16)(1-u^2)^2 + sin(2*pi*u)` on
/// `[-1, 1]`. For `lambda = 0` the antiderivative of `a` is itself compactly
/// supported and the process converges to Brownian motion; for other lambda
/// the limit is a skewed process that this registry does not assert.
pub fn delta_drift(lambda: f64) -> Scenario {
    let profile = Arc::new(DriftProfile::tabulate(
        move |u: f64| {
            let bump = 15.0 / 16.0 * (1.0 - u * u).powi(2);
            lambda * bump + (2.0 * std::f64::consts::PI * u).sin()
        },
        2000,
    ));
    let (a_min, a_max) = profile.integral_range();
    // f' = exp(-2A(x sqrt(T))) with A the profile antiderivative.
    let p_eval = profile.clone();
    let drift_eval = coeff2(move |t: f64, x: f64| {
        let rt = t.sqrt();
        rt * p_eval.eval(x * rt)
    });
    let p_d1 = profile.clone();
    let fprime = coeff2(move |t: f64, x: f64| (-2.0 * p_d1.integral(x * t.sqrt())).exp());
    // Cumulative of f' over the support, for O(1) transform evaluation:
    // value(x) = (1/sqrt(T)) * Hhat(x*sqrt(T)) with linear tails outside.
    let n_h = 2000;
    let hh: Arc<Vec<f64>> = Arc::new({
        let h = 2.0 / n_h as f64;
        let integrand = |u: f64| (-2.0 * profile.integral(u)).exp();
        let mut cum = vec![0.0; n_h + 1];
        for i in 0..n_h {
            let a = -1.0 + i as f64 * h;
            let m = a + 0.5 * h;
            let b = a + h;
            cum[i + 1] = cum[i] + h / 6.0 * (integrand(a) + 4.0 * integrand(m) + integrand(b));
        }
        let center = cum[n_h / 2];
        for c in &mut cum {
            *c -= center;
        }
        cum
    });
    let right_slope = (-2.0 * profile.integral(1.0)).exp();
    let left_slope = (-2.0 * profile.integral(-1.0)).exp();
    let p_val = profile.clone();
    let hh_val = hh.clone();
    let value = coeff2(move |t: f64, x: f64| {
        let rt = t.sqrt();
        let u = x * rt;
        let h = 2.0 / n_h as f64;
        let inner = if u > 1.0 {
            hh_val[n_h] + right_slope * (u - 1.0)
        } else if u < -1.0 {
            hh_val[0] + left_slope * (u + 1.0)
        } else {
            let mut j = ((u + 1.0) / h).floor() as usize;
            if j >= n_h {
                j = n_h - 1;
            }
            let a = -1.0 + j as f64 * h;
            let integrand = |v: f64| (-2.0 * p_val.integral(v)).exp();
            let m = 0.5 * (a + u);
            hh_val[j] + (u - a) / 6.0 * (integrand(a) + 4.0 * integrand(m) + integrand(u))
        };
        inner / rt
    });
    let p_d2 = profile.clone();
    let d2 = coeff2(move |t: f64, x: f64| {
        let rt = t.sqrt();
        let u = x * rt;
        -2.0 * rt * p_d2.eval(u) * (-2.0 * p_d2.integral(u)).exp()
    });
    let fp_min = (-2.0 * a_max).exp();
    let fp_max = (-2.0 * a_min).exp();
    let max_abs = profile.max_abs();
    let converges = lambda == 0.0;
    let g_fam = fprime.clone();
    let mut sc = Scenario {
        id: format!("delta_drift({lambda})"),
        drift: DriftFamily::new(
            "delta_profile",
            drift_eval,
            coeff1(move |t| max_abs * t.sqrt()),
            coeff1(|t| t.sqrt().recip()),
        ),
        transform: TransformFamily::new(
            "scale_delta",
            value,
            fprime.clone(),
            d2,
            fp_min,
            1.0,
            coeff1(|t| t.sqrt().recip()),
        ),
        functional: FunctionalFamily::new(
            "scale_derivative_delta",
            g_fam,
            coeff2(|_, x| x),
            coeff2(move |_, _| fp_max),
            coeff1(|t| t.sqrt().recip()),
        ),
        limit: LimitModel::new(
            coeff1(|_| 0.0),
            coeff1(|_| 1.0),
            coeff1(|_| 1.0),
            coeff1(|y| y),
            0.0,
        ),
        x0: 0.0,
        g0_thm3: Some(coeff1(|_| 1.0)),
        g0_thm4: None,
        thm7: Some(Thm7Spec {
            f0: coeff1(|y| 2.0 * y),
            g0: coeff1(|_| 0.0),
            k1_lower: fp_min,
            k1_upper: fp_max,
        }),
        closed_forms: ClosedForms {
            fprime: Some(fprime),
            scale: None,
            scale_inverse: None,
            limit_marginal: if converges {
                Some(ExactLaw::Normal { mean_rate: 0.0, var_rate: 1.0 })
            } else {
                None
            },
            a4_sup: None,
            beta1_limit_rate: if converges { Some(1.0) } else { None },
        },
        tags: if converges {
            tags(&[
                TheoremTag::Thm2,
                TheoremTag::Thm3,
                TheoremTag::Thm5,
                TheoremTag::Thm6,
                TheoremTag::Thm7,
            ])
        } else {
            tags(&[])
        },
        y0_of_x0: coeff1(move |x0| {
            if x0 >= 0.0 {
                right_slope * x0
            } else {
                left_slope * x0
            }
        }),
    };
    sc.limit.y0 = 0.0;
    sc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn registry_knows_required_ids() {
        for id in [
            "besq(1)",
            "zero_drift",
            "oscillatory_beta1",
            "periodic_k1(0.5)",
            "delta_drift(0)",
            "const_drift(1)",
            "besq",
        ] {
            let sc = registry_get(id).unwrap();
            sc.validate().unwrap();
        }
    }

    #[test]
    fn registry_unknown_id_lists_known() {
        let err = registry_get("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("besq"), "{msg}");
        assert!(msg.contains("zero_drift"), "{msg}");
    }

    #[test]
    fn besq_rejects_shallow_exponent() {
        assert!(besq(-0.5).is_err());
        assert!(besq(-0.6).is_err());
        assert!(besq(-0.4).is_ok());
    }

    #[test]
    fn besq_residuals_match_algebra() {
        let sc = besq(1.0).unwrap();
        // -2 c0 / (1 + x^2 T) at T=100, x=1
        let q1 = sc.residual_q1(100.0, 1.0).unwrap();
        assert!((q1 - (-2.0 / 101.0)).abs() < 1e-14, "q1 = {q1}");
        for (t, x) in [(100.0, 0.3), (1e4, -2.0), (7.0, 1.7)] {
            let q2 = sc.residual_q2(t, x).unwrap();
            assert!(q2.abs() < 1e-12, "q2({t},{x}) = {q2}");
        }
    }

    #[test]
    fn zero_drift_residuals_vanish() {
        let sc = zero_drift();
        for x in [-3.0, 0.0, 0.7] {
            assert_eq!(sc.residual_q1(50.0, x).unwrap(), 0.0);
            assert_eq!(sc.residual_q2(50.0, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn residuals_require_tag() {
        let mut sc = delta_drift(0.7);
        assert!(sc.residual_q1(100.0, 0.1).is_err());
        sc.tags.insert(TheoremTag::Thm2);
        assert!(sc.residual_q1(100.0, 0.1).is_ok());
    }

    #[test]
    fn periodic_transform_matches_quadrature() {
        let sc = periodic_k1(0.5);
        let t: f64 = 400.0;
        for x in [-1.3, -0.2, 0.45, 2.0] {
            let direct = crate::quad::adaptive_simpson(
                &|v: f64| (-2.0 * 0.5 * (v * t.sqrt()).sin()).exp(),
                0.0,
                x,
                1e-11,
            );
            let fast = sc.transform.value(t, x);
            assert!((direct - fast).abs() < 1e-8, "x={x}: {direct} vs {fast}");
        }
    }

    #[test]
    fn periodic_y0_uses_period_average() {
        let sc = periodic_k1(0.5).with_x0(2.0);
        // Period average of exp(-2 alpha sin) is I0(2 alpha).
        let expect = bessel_i0(1.0) * 2.0;
        assert!((sc.limit.y0 - expect).abs() < 1e-12);
        // And the transform approaches that average for large t_param.
        let approx = sc.transform.value(1e8, 2.0);
        assert!((approx - expect).abs() < 1e-3, "{approx} vs {expect}");
    }

    #[test]
    fn delta_profile_integral_is_exact_for_linear_pieces() {
        let p = DriftProfile::tabulate(|u| u, 10);
        // integral of u from 0 to x is x^2/2 (interpolation of u is exact)
        for u in [-0.95, -0.4, 0.13, 0.77] {
            assert!((p.integral(u) - 0.5 * u * u).abs() < 1e-12);
        }
        assert!((p.integral(2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delta_drift_zero_lambda_has_compact_antiderivative() {
        let sc = delta_drift(0.0);
        // Outside the support window the scale derivative is exactly 1.
        for t in [100.0f64, 1e4] {
            for x in [2.0 / t.sqrt(), -3.0, 4.9] {
                let fp = sc.closed_forms.fprime.as_ref().unwrap()(t, x);
                assert!((fp - 1.0).abs() < 1e-12, "t={t} x={x} fp={fp}");
            }
        }
        assert!(sc.has_tag(TheoremTag::Thm7));
        assert!(!delta_drift(0.5).has_tag(TheoremTag::Thm2));
    }

    #[test]
    fn tagged_scenarios_have_their_fields() {
        for sc in registry_default_entries() {
            sc.validate().unwrap();
        }
    }

    #[test]
    fn with_x0_rebases_limit_start() {
        let sc = besq(1.0).unwrap().with_x0(2.0);
        assert_eq!(sc.limit.y0, 4.0);
    }

    proptest! {
        #[test]
        fn drift_stays_under_declared_bound(
            idx in 0usize..8,
            t_exp in 0.5f64..4.5,
            x in -5.0f64..5.0,
        ) {
            let sc = &registry_default_entries()[idx];
            let t = 10f64.powf(t_exp);
            let a = sc.drift.eval(t, x);
            let bound = sc.drift.bound(t);
            prop_assert!(a.abs() <= bound * (1.0 + 1e-12) + 1e-12,
                "{}: |a({t},{x})| = {} > {bound}", sc.id, a.abs());
        }

        #[test]
        fn drift_eval_is_deterministic(
            idx in 0usize..8,
            t_exp in 0.5f64..4.5,
            x in -5.0f64..5.0,
        ) {
            let sc = &registry_default_entries()[idx];
            let t = 10f64.powf(t_exp);
            prop_assert_eq!(sc.drift.eval(t, x).to_bits(), sc.drift.eval(t, x).to_bits());
        }

        #[test]
        fn transform_growth_lower_bound(
            idx in 0usize..8,
            t_exp in 0.5f64..4.5,
            x in -5.0f64..5.0,
        ) {
            let sc = &registry_default_entries()[idx];
            let t = 10f64.powf(t_exp);
            let g = sc.transform.value(t, x).abs();
            let floor = sc.transform.growth_c * x.abs().powf(sc.transform.growth_alpha);
            prop_assert!(g >= floor * (1.0 - 1e-9) - 1e-12,
                "{}: |G({t},{x})| = {g} < {floor}", sc.id);
        }

        #[test]
        fn transform_d1_matches_finite_difference(
            idx in 0usize..8,
            t_exp in 0.5f64..4.0,
            x in -4.0f64..4.0,
        ) {
            let sc = &registry_default_entries()[idx];
            let t = 10f64.powf(t_exp);
            let feature = sc.feature_scale(t);
            let h = if feature.is_finite() { feature * 1e-3 } else { 1e-6 };
            let fd = (sc.transform.value(t, x + h) - sc.transform.value(t, x - h)) / (2.0 * h);
            let d1 = sc.transform.d1(t, x);
            prop_assert!((fd - d1).abs() <= 1e-5 * (1.0 + d1.abs()),
                "{}: fd {fd} vs d1 {d1} at ({t},{x})", sc.id);
        }

        #[test]
        fn functional_respects_local_bound(
            idx in 0usize..8,
            t_exp in 0.5f64..4.5,
            x in -5.0f64..5.0,
        ) {
            let sc = &registry_default_entries()[idx];
            let t = 10f64.powf(t_exp);
            let n = x.abs().max(0.1);
            let g = sc.functional.g(t, x).abs();
            let bound = sc.functional.local_bound(t, n);
            prop_assert!(g <= bound * (1.0 + 1e-12) + 1e-12,
                "{}: |g({t},{x})| = {g} > {bound}", sc.id);
        }

        #[test]
        fn limit_sigma_is_nonnegative(
            idx in 0usize..8,
            y in -10.0f64..10.0,
        ) {
            let sc = &registry_default_entries()[idx];
            prop_assert!(sc.limit.sigma0(y) >= 0.0);
        }
    }
}
