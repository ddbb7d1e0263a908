//! Experiment orchestration: parses configs, pairs finite-parameter ensembles
//! with limit-law oracles along a parameter ladder, runs the condition
//! checkers, and emits machine-readable reports.
//!
//! Reports are deterministic functions of `(config, seed)`: per-path streams
//! are derived by index, merges are ordered, and rows are sorted by all key
//! columns before serialization, so the emitted bytes do not depend on the
//! worker count.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_ensemble, EnsembleError, EnsembleSpec, SimParams, Statistic, StepPolicy};
use crate::limits::{run_limit_ensemble, LimitError, LimitStat};
use crate::rng::mix_seed;
use crate::scale::{build_scale, run_checkers, CheckerRecord, ScaleError, ScaleParams, NON_TREND_CHECKERS};
use crate::scenarios::{registry_get, Scenario, ScenarioError, TheoremTag, REGISTRY_PATTERNS};
use crate::stats::{convergence_trend, convergence_trend_with_noise, ks_two_sample, EmpiricalLaw, StatsError};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("report parse error at line {line}: {msg}")]
    ReportParse { line: usize, msg: String },
}

impl RunnerError {
    fn config(field: &str, msg: impl Into<String>) -> Self {
        RunnerError::Config { field: field.to_string(), msg: msg.into() }
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_probes() -> Vec<f64> {
    vec![1.0]
}

fn default_paths() -> usize {
    10_000
}

fn default_quad_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub h_max: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { h_max: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitSimConfig {
    /// Euler step for simulated limit ensembles.
    pub h: f64,
    /// Path count for simulated limit ensembles; 0 means "same as n_paths".
    pub n_paths: usize,
}

impl Default for LimitSimConfig {
    fn default() -> Self {
        Self { h: 1e-4, n_paths: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// Scale-table and excursion half-width; `None` selects
    /// `max(5, 3*sqrt(horizon) + |x0|)`.
    pub x_max: Option<f64>,
    /// Grid step upper bound before the feature-scale refinement.
    pub max_step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// KS threshold against exactly sampled limit laws.
    pub ks: f64,
    /// KS threshold when the limit side is itself Euler-simulated.
    pub ks_two_layer: f64,
    /// Relative slack of the ladder trend test.
    pub trend_slack: f64,
    /// Additive bias allowance for mean comparisons (on top of 3 stderr).
    pub mean_tol: f64,
    /// Required shrink factor of the averaged-functional spread across the
    /// ladder (final sd at most this multiple of the first).
    pub sd_shrink: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { ks: 0.05, ks_two_layer: 0.07, trend_slack: 0.10, mean_tol: 0.05, sd_shrink: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckerConfig {
    /// Window half-width `N` of the sup-type conditions.
    pub n_bound: f64,
    /// Probe point for the pointwise scale-transform condition.
    pub probe: f64,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self { n_bound: 5.0, probe: 1.0 }
    }
}

/// One experiment: a scenario crossed with a parameter ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub t_ladder: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_probes")]
    pub probe_times: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default)]
    pub x0: Option<f64>,
    /// Extra statistics to summarize beyond what the theorem tags need.
    #[serde(default)]
    pub statistics: Vec<String>,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub limit_sim: LimitSimConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub checkers: CheckerConfig,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { x_max: None, max_step: 0.01 }
    }
}

pub const SEED_ENV: &str = "DIFFLIM_SEED";
const DEFAULT_SEED: u64 = 42;

impl ExperimentConfig {
    pub fn new(scenario: &str, t_ladder: Vec<f64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            t_ladder,
            horizon: default_horizon(),
            probe_times: default_probes(),
            n_paths: default_paths(),
            seed: None,
            quad_tol: default_quad_tol(),
            x0: None,
            statistics: Vec::new(),
            step: StepConfig::default(),
            limit_sim: LimitSimConfig::default(),
            domain: DomainConfig::default(),
            thresholds: Thresholds::default(),
            checkers: CheckerConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| RunnerError::config("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Explicit seed, then the `DIFFLIM_SEED` environment variable, then the
    /// documented default.
    pub fn resolved_seed(&self) -> u64 {
        self.seed
            .or_else(|| std::env::var(SEED_ENV).ok().and_then(|v| v.parse().ok()))
            .unwrap_or(DEFAULT_SEED)
    }

    pub fn x_max(&self, x0: f64) -> f64 {
        self.domain
            .x_max
            .unwrap_or_else(|| ScaleParams::default_halfwidth(self.horizon, x0))
    }

    fn limit_paths(&self) -> usize {
        if self.limit_sim.n_paths == 0 {
            self.n_paths
        } else {
            self.limit_sim.n_paths
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.t_ladder.is_empty() {
            return Err(RunnerError::config("t_ladder", "must be nonempty"));
        }
        for w in self.t_ladder.windows(2) {
            if !(w[1] > w[0]) {
                return Err(RunnerError::config(
                    "t_ladder",
                    format!("must be strictly increasing, got {} then {}", w[0], w[1]),
                ));
            }
        }
        if self.t_ladder.iter().any(|&t| !(t > 0.0)) {
            return Err(RunnerError::config("t_ladder", "entries must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(RunnerError::config("horizon", "must be positive"));
        }
        for &t in &self.probe_times {
            if !(0.0..=self.horizon).contains(&t) {
                return Err(RunnerError::config(
                    "probe_times",
                    format!("probe {t} outside [0, {}]", self.horizon),
                ));
            }
        }
        if self.probe_times.is_empty() {
            return Err(RunnerError::config("probe_times", "must be nonempty"));
        }
        if self.n_paths < 2 {
            return Err(RunnerError::config("n_paths", "must be at least 2"));
        }
        if !(self.quad_tol > 0.0) {
            return Err(RunnerError::config("quad_tol", "must be positive"));
        }
        if !(self.step.h_max > 0.0) {
            return Err(RunnerError::config("step.h_max", "must be positive"));
        }
        if !(self.limit_sim.h > 0.0) {
            return Err(RunnerError::config("limit_sim.h", "must be positive"));
        }
        if !(self.domain.max_step > 0.0) {
            return Err(RunnerError::config("domain.max_step", "must be positive"));
        }
        if let Some(x_max) = self.domain.x_max {
            if !(x_max > 0.0) {
                return Err(RunnerError::config("domain.x_max", "must be positive"));
            }
        }
        for s in &self.statistics {
            if Statistic::parse(s).is_none() {
                return Err(RunnerError::config(
                    "statistics",
                    format!("unknown statistic {s:?}"),
                ));
            }
        }
        for (field, v) in [
            ("thresholds.ks", self.thresholds.ks),
            ("thresholds.ks_two_layer", self.thresholds.ks_two_layer),
            ("thresholds.trend_slack", self.thresholds.trend_slack),
            ("thresholds.mean_tol", self.thresholds.mean_tol),
            ("thresholds.sd_shrink", self.thresholds.sd_shrink),
        ] {
            if !(v >= 0.0) {
                return Err(RunnerError::config(field, "must be nonnegative"));
            }
        }
        if !(self.checkers.n_bound > 0.0) {
            return Err(RunnerError::config("checkers.n_bound", "must be positive"));
        }
        Ok(())
    }
}

/// One report record; empty options serialize as empty CSV fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub theorem: String,
    pub t_param: Option<f64>,
    pub probe: Option<f64>,
    pub statistic: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.scenario
                .cmp(&b.scenario)
                .then(a.theorem.cmp(&b.theorem))
                .then(cmp_opt(a.t_param, b.t_param))
                .then(cmp_opt(a.probe, b.probe))
                .then(a.statistic.cmp(&b.statistic))
                .then(a.metric.cmp(&b.metric))
        });
    }

    /// True when every verdict-bearing row passed.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != "fail")
    }

    pub fn verdict_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.verdict.is_empty())
    }

    pub fn to_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "scenario,theorem,T,t,statistic,metric,value,stderr,verdict")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&r.scenario),
                csv_field(&r.theorem),
                opt_f64(r.t_param),
                opt_f64(r.probe),
                csv_field(&r.statistic),
                csv_field(&r.metric),
                r.value,
                opt_f64(r.stderr),
                csv_field(&r.verdict),
            )?;
        }
        Ok(())
    }

    pub fn from_csv(r: impl BufRead) -> Result<Self, RunnerError> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line != "scenario,theorem,T,t,statistic,metric,value,stderr,verdict" {
                    return Err(RunnerError::ReportParse {
                        line: 1,
                        msg: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields = split_csv(&line).map_err(|msg| RunnerError::ReportParse {
                line: i + 1,
                msg,
            })?;
            if fields.len() != 9 {
                return Err(RunnerError::ReportParse {
                    line: i + 1,
                    msg: format!("expected 9 fields, got {}", fields.len()),
                });
            }
            let parse_opt = |s: &str, what: &str| -> Result<Option<f64>, RunnerError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| RunnerError::ReportParse {
                        line: i + 1,
                        msg: format!("bad {what}: {s:?}"),
                    })
                }
            };
            rows.push(ReportRow {
                scenario: fields[0].clone(),
                theorem: fields[1].clone(),
                t_param: parse_opt(&fields[2], "T")?,
                probe: parse_opt(&fields[3], "t")?,
                statistic: fields[4].clone(),
                metric: fields[5].clone(),
                value: fields[6].parse().map_err(|_| RunnerError::ReportParse {
                    line: i + 1,
                    msg: format!("bad value: {:?}", fields[6]),
                })?,
                stderr: parse_opt(&fields[7], "stderr")?,
                verdict: fields[8].clone(),
            });
        }
        Ok(Report { rows })
    }

    pub fn to_json(&self, w: &mut impl Write) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)?;
        writeln!(w)
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if quoted {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    quoted = false;
                }
            } else {
                cur.push(c);
            }
        } else if c == '"' && cur.is_empty() {
            quoted = true;
        } else if c == ',' {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    if quoted {
        return Err("unterminated quote".to_string());
    }
    out.push(cur);
    Ok(out)
}

// Seed namespaces for the independent random streams of one experiment.
const NS_LIMIT: u64 = 0x4C49_4D49;
const NS_EXACT: u64 = 0x4558_4143;

struct LawSummary {
    law: EmpiricalLaw,
}

impl LawSummary {
    fn new(samples: Vec<f64>) -> Result<Self, RunnerError> {
        Ok(Self { law: EmpiricalLaw::from_samples(samples)? })
    }
}

/// Runs the full ladder experiment for one scenario.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, RunnerError> {
    cfg.validate()?;
    let mut sc = registry_get(&cfg.scenario)?;
    if let Some(x0) = cfg.x0 {
        sc = sc.with_x0(x0);
    }
    sc.validate()?;
    let seed = cfg.resolved_seed();
    let mut report = Report::default();
    let thresholds = &cfg.thresholds;
    let probes = cfg.probe_times.clone();
    let limit_h = cfg.limit_sim.h;
    let limit_paths = cfg.limit_paths();
    let limit_seed = mix_seed(seed, NS_LIMIT);
    let exact_seed = mix_seed(seed, NS_EXACT);

    // Statistics needed by the tagged comparisons plus user requests.
    let mut stats: BTreeSet<Statistic> = cfg
        .statistics
        .iter()
        .filter_map(|s| Statistic::parse(s))
        .collect();
    if sc.has_tag(TheoremTag::Thm2) || sc.has_tag(TheoremTag::Thm7) {
        stats.insert(Statistic::Zeta);
    }
    if sc.has_tag(TheoremTag::Thm3) || sc.has_tag(TheoremTag::Thm4) {
        stats.insert(Statistic::Beta1);
    }
    if sc.has_tag(TheoremTag::Thm5) {
        stats.insert(Statistic::Beta2);
    }
    if sc.has_tag(TheoremTag::Thm6) || sc.has_tag(TheoremTag::Thm7) {
        stats.insert(Statistic::IT);
    }
    let stats: Vec<Statistic> = stats.into_iter().collect();

    // Limit-side laws per probe, shared across the ladder.
    let limit_law = |which: LimitStat,
                     theorem: TheoremTag,
                     ns: u64|
     -> Result<Vec<LawSummary>, RunnerError> {
        let vals = run_limit_ensemble(
            &sc,
            which,
            cfg.horizon,
            limit_h,
            limit_paths,
            mix_seed(limit_seed, ns ^ theorem as u64),
            &probes,
        )?;
        vals.into_iter().map(LawSummary::new).collect()
    };

    let exact_marginal = |probe_idx: usize, t: f64| -> Result<Option<LawSummary>, RunnerError> {
        match &sc.closed_forms.limit_marginal {
            Some(law) if t > 0.0 => {
                let draws =
                    law.sample(sc.limit.y0, t, cfg.n_paths, mix_seed(exact_seed, probe_idx as u64))?;
                Ok(Some(LawSummary::new(draws)?))
            }
            _ => Ok(None),
        }
    };

    // Thm2 / Thm7 zeta laws: exact when available, Euler fallback otherwise.
    let mut zeta_limit: Vec<Option<LawSummary>> = Vec::new();
    if sc.has_tag(TheoremTag::Thm2) || sc.has_tag(TheoremTag::Thm7) {
        for (pi, &t) in probes.iter().enumerate() {
            zeta_limit.push(exact_marginal(pi, t)?);
        }
        if zeta_limit.iter().any(|l| l.is_none()) {
            let which = if sc.has_tag(TheoremTag::Thm2) {
                LimitStat::Zeta
            } else {
                LimitStat::ZetaDriftless
            };
            let simulated = limit_law(which, TheoremTag::Thm2, 1)?;
            for (slot, sim) in zeta_limit.iter_mut().zip(simulated) {
                if slot.is_none() {
                    *slot = Some(sim);
                }
            }
        }
    }
    let zeta_exact = sc.closed_forms.limit_marginal.is_some();

    let beta1_limit = if sc.has_tag(TheoremTag::Thm3) {
        Some(limit_law(LimitStat::Beta1, TheoremTag::Thm3, 2)?)
    } else {
        None
    };
    let beta2_limit = if sc.has_tag(TheoremTag::Thm5) {
        Some(limit_law(LimitStat::Beta2, TheoremTag::Thm5, 3)?)
    } else {
        None
    };
    let i0_limit = if sc.has_tag(TheoremTag::Thm6) {
        Some(limit_law(LimitStat::I0, TheoremTag::Thm6, 4)?)
    } else {
        None
    };
    let i7_limit = if sc.has_tag(TheoremTag::Thm7) {
        Some(limit_law(LimitStat::IThm7, TheoremTag::Thm7, 5)?)
    } else {
        None
    };
    // Thm4 limit mean per probe: closed-form rate when declared, otherwise
    // the simulated averaged functional.
    let beta1_tilde_mean: Option<Vec<(f64, f64)>> = if sc.has_tag(TheoremTag::Thm4) {
        if let Some(rate) = sc.closed_forms.beta1_limit_rate {
            Some(probes.iter().map(|&t| (rate * t, 0.0)).collect())
        } else {
            let laws = limit_law(LimitStat::Beta1Tilde, TheoremTag::Thm4, 6)?;
            Some(laws.iter().map(|l| (l.law.mean(), l.law.stderr())).collect())
        }
    } else {
        None
    };

    // Ladder series feeding the trend verdicts.
    let mut checker_series: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
        Default::default();
    let mut ks_series: std::collections::BTreeMap<(String, String, usize), Vec<(f64, f64)>> =
        Default::default();
    let mut beta1_sds: Vec<(f64, f64)> = Vec::new();
    let mut final_rows: Vec<ReportRow> = Vec::new();

    for (ti, &t_param) in cfg.t_ladder.iter().enumerate() {
        let x_max = cfg.x_max(sc.x0);
        let max_step = ScaleParams::step_for(&sc, t_param, cfg.domain.max_step);
        let tab = build_scale(&sc.drift, t_param, &ScaleParams::new(x_max, cfg.quad_tol, max_step))?;
        let n_bound = cfg.checkers.n_bound.min(x_max);
        let records: Vec<CheckerRecord> = run_checkers(&sc, &tab, n_bound, cfg.checkers.probe)?;
        for rec in &records {
            report.rows.push(ReportRow {
                scenario: sc.id.clone(),
                theorem: "conditions".to_string(),
                t_param: Some(t_param),
                probe: None,
                statistic: rec.checker.clone(),
                metric: "checker".to_string(),
                value: rec.value,
                stderr: None,
                verdict: String::new(),
            });
            if !NON_TREND_CHECKERS.contains(&rec.checker.as_str()) {
                checker_series
                    .entry(rec.checker.clone())
                    .or_default()
                    .push((t_param, rec.value));
            }
        }

        let params = SimParams::new(t_param, cfg.horizon, StepPolicy::new(cfg.step.h_max), x_max);
        let spec = EnsembleSpec {
            n_paths: cfg.n_paths,
            seed: mix_seed(seed, 100 + ti as u64),
            probes: probes.clone(),
            stats: stats.clone(),
        };
        let ens = run_ensemble(&sc, &params, &spec)?;

        let law_of = |stat: Statistic, pi: usize| -> Result<LawSummary, RunnerError> {
            let si = ens
                .stats
                .iter()
                .position(|s| *s == stat)
                .expect("requested statistic present");
            LawSummary::new(ens.values[si][pi].clone())
        };

        for (pi, &probe) in probes.iter().enumerate() {
            for &stat in &stats {
                let law = law_of(stat, pi)?;
                report.rows.push(ReportRow {
                    scenario: sc.id.clone(),
                    theorem: "summary".to_string(),
                    t_param: Some(t_param),
                    probe: Some(probe),
                    statistic: stat.name().to_string(),
                    metric: "mean".to_string(),
                    value: law.law.mean(),
                    stderr: Some(law.law.stderr()),
                    verdict: String::new(),
                });
            }

            let ks_row = |theorem: TheoremTag,
                              stat: Statistic,
                              target: &LawSummary,
                              rows: &mut Vec<ReportRow>,
                              series: &mut std::collections::BTreeMap<
                    (String, String, usize),
                    Vec<(f64, f64)>,
                >|
             -> Result<(), RunnerError> {
                let law = law_of(stat, pi)?;
                let d = ks_two_sample(&law.law, &target.law);
                rows.push(ReportRow {
                    scenario: sc.id.clone(),
                    theorem: theorem.to_string(),
                    t_param: Some(t_param),
                    probe: Some(probe),
                    statistic: stat.name().to_string(),
                    metric: "ks".to_string(),
                    value: d,
                    stderr: None,
                    verdict: String::new(),
                });
                series
                    .entry((theorem.to_string(), stat.name().to_string(), pi))
                    .or_default()
                    .push((t_param, d));
                Ok(())
            };

            if sc.has_tag(TheoremTag::Thm2) {
                if let Some(target) = &zeta_limit[pi] {
                    ks_row(TheoremTag::Thm2, Statistic::Zeta, target, &mut report.rows, &mut ks_series)?;
                }
                // Mean check against the limit first moment at the final T.
                if ti + 1 == cfg.t_ladder.len() {
                    let law = law_of(Statistic::Zeta, pi)?;
                    let (target_mean, target_se) = match &sc.closed_forms.limit_marginal {
                        Some(exact) => (exact.mean(sc.limit.y0, probe), 0.0),
                        None => {
                            let l = zeta_limit[pi].as_ref().unwrap();
                            (l.law.mean(), l.law.stderr())
                        }
                    };
                    let dev = (law.law.mean() - target_mean).abs();
                    let tol = 3.0 * (law.law.stderr().powi(2) + target_se.powi(2)).sqrt()
                        + thresholds.mean_tol;
                    final_rows.push(ReportRow {
                        scenario: sc.id.clone(),
                        theorem: TheoremTag::Thm2.to_string(),
                        t_param: Some(t_param),
                        probe: Some(probe),
                        statistic: "zeta".to_string(),
                        metric: "mean_dev_final".to_string(),
                        value: dev,
                        stderr: Some(law.law.stderr()),
                        verdict: if dev <= tol { "pass" } else { "fail" }.to_string(),
                    });
                }
            }
            if sc.has_tag(TheoremTag::Thm3) {
                if let Some(laws) = &beta1_limit {
                    ks_row(TheoremTag::Thm3, Statistic::Beta1, &laws[pi], &mut report.rows, &mut ks_series)?;
                }
            }
            if sc.has_tag(TheoremTag::Thm4) {
                let law = law_of(Statistic::Beta1, pi)?;
                let sd = law.law.variance().sqrt();
                report.rows.push(ReportRow {
                    scenario: sc.id.clone(),
                    theorem: TheoremTag::Thm4.to_string(),
                    t_param: Some(t_param),
                    probe: Some(probe),
                    statistic: "beta1".to_string(),
                    metric: "sd".to_string(),
                    value: sd,
                    stderr: None,
                    verdict: String::new(),
                });
                if pi == probes.len() - 1 {
                    beta1_sds.push((t_param, sd));
                }
                if ti + 1 == cfg.t_ladder.len() {
                    let (target_mean, target_se) = beta1_tilde_mean.as_ref().unwrap()[pi];
                    let dev = (law.law.mean() - target_mean).abs();
                    let tol = 3.0 * (law.law.stderr().powi(2) + target_se.powi(2)).sqrt()
                        + thresholds.mean_tol;
                    final_rows.push(ReportRow {
                        scenario: sc.id.clone(),
                        theorem: TheoremTag::Thm4.to_string(),
                        t_param: Some(t_param),
                        probe: Some(probe),
                        statistic: "beta1".to_string(),
                        metric: "mean_dev_final".to_string(),
                        value: dev,
                        stderr: Some(law.law.stderr()),
                        verdict: if dev <= tol { "pass" } else { "fail" }.to_string(),
                    });
                }
            }
            if sc.has_tag(TheoremTag::Thm5) {
                if let Some(laws) = &beta2_limit {
                    ks_row(TheoremTag::Thm5, Statistic::Beta2, &laws[pi], &mut report.rows, &mut ks_series)?;
                }
            }
            if sc.has_tag(TheoremTag::Thm6) {
                if let Some(laws) = &i0_limit {
                    ks_row(TheoremTag::Thm6, Statistic::IT, &laws[pi], &mut report.rows, &mut ks_series)?;
                }
            }
            if sc.has_tag(TheoremTag::Thm7) {
                if !sc.has_tag(TheoremTag::Thm2) {
                    if let Some(target) = &zeta_limit[pi] {
                        ks_row(TheoremTag::Thm7, Statistic::Zeta, target, &mut report.rows, &mut ks_series)?;
                    }
                }
                if let Some(laws) = &i7_limit {
                    ks_row(TheoremTag::Thm7, Statistic::IT, &laws[pi], &mut report.rows, &mut ks_series)?;
                }
            }
        }
    }

    report.rows.append(&mut final_rows);

    // Ladder verdicts: checkers must decay; KS series must decay below their
    // thresholds; averaged-functional spread must shrink.
    if cfg.t_ladder.len() >= 2 {
        for (checker, series) in &checker_series {
            let trend = convergence_trend(series, f64::INFINITY, thresholds.trend_slack);
            report.rows.push(ReportRow {
                scenario: sc.id.clone(),
                theorem: "conditions".to_string(),
                t_param: None,
                probe: None,
                statistic: checker.clone(),
                metric: "trend".to_string(),
                value: trend.slope,
                stderr: None,
                verdict: if trend.pass { "pass" } else { "fail" }.to_string(),
            });
        }
        for ((theorem, stat, pi), series) in &ks_series {
            let exact_side = (theorem == "thm2" || (theorem == "thm7" && stat == "zeta")) && zeta_exact;
            let threshold = if exact_side { thresholds.ks } else { thresholds.ks_two_layer };
            // Two-sample KS statistics between already-converged laws sit at
            // the 1/sqrt(n_eff) noise floor; tolerate inversions at that scale.
            let n_eff = (cfg.n_paths.min(limit_paths)) as f64 / 2.0;
            let noise = 1.3 / n_eff.sqrt();
            let trend = convergence_trend_with_noise(series, threshold, thresholds.trend_slack, noise);
            report.rows.push(ReportRow {
                scenario: sc.id.clone(),
                theorem: theorem.clone(),
                t_param: None,
                probe: Some(probes[*pi]),
                statistic: stat.clone(),
                metric: "ks_trend".to_string(),
                value: trend.slope,
                stderr: None,
                verdict: if trend.pass { "pass" } else { "fail" }.to_string(),
            });
        }
        if sc.has_tag(TheoremTag::Thm4) && beta1_sds.len() >= 2 {
            let first = beta1_sds.first().unwrap().1;
            let last = beta1_sds.last().unwrap().1;
            // Spreads at float-noise level (degenerate functionals) count as
            // fully shrunk.
            let ratio = if first > 1e-12 { last / first } else { 0.0 };
            report.rows.push(ReportRow {
                scenario: sc.id.clone(),
                theorem: TheoremTag::Thm4.to_string(),
                t_param: None,
                probe: Some(*probes.last().unwrap()),
                statistic: "beta1".to_string(),
                metric: "sd_ratio".to_string(),
                value: ratio,
                stderr: None,
                verdict: if ratio <= thresholds.sd_shrink { "pass" } else { "fail" }.to_string(),
            });
        }
    }

    report.sort();
    Ok(report)
}

/// Text table of the registry: id patterns, defaults, and theorem tags.
pub fn list_scenarios() -> String {
    let mut out = String::new();
    out.push_str("id pattern            | tags                          | description\n");
    out.push_str("----------------------+-------------------------------+------------\n");
    let defaults: Vec<Scenario> = crate::scenarios::registry_default_entries();
    for (pattern, desc) in REGISTRY_PATTERNS {
        let name = pattern.split('(').next().unwrap();
        let tags: String = defaults
            .iter()
            .find(|sc| sc.id.starts_with(name))
            .map(|sc| {
                sc.tags
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_default();
        out.push_str(&format!("{pattern:<22}| {tags:<30}| {desc}\n"));
    }
    out
}
