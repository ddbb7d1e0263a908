//! Command-line front end: list scenarios, run condition checkers, simulate
//! ensembles, and run full finite-vs-limit comparison experiments.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use difflim::engine::{
    run_ensemble, simulate_path_em, EnsembleSpec, SimParams, Statistic, StepPolicy,
};
use difflim::runner::{
    list_scenarios, run_experiment, ExperimentConfig, Report, RunnerError, SEED_ENV,
};
use difflim::scale::{build_scale, checker_records_to_csv, run_checkers, ScaleParams};
use difflim::scenarios::registry_get;
use difflim::stats::EmpiricalLaw;

#[derive(Parser)]
#[command(
    name = "difflim",
    about = "Monte Carlo laboratory for long-horizon limits of 1-D diffusions with nonregular drift",
    long_about = None,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for path ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct CommonRun {
    /// Scenario id, e.g. besq(1), zero_drift, periodic_k1(0.5).
    #[arg(long)]
    scenario: String,
    /// Comma-separated parameter ladder, e.g. 100,1000,10000.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    t_ladder: Vec<f64>,
    /// Paths per ensemble.
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Time horizon of each path.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Probe times (comma separated); defaults to the horizon.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<f64>>,
    /// Root seed; falls back to $DIFFLIM_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Quadrature tolerance for scale tables and checkers.
    #[arg(long, default_value_t = 1e-8)]
    quad_tol: f64,
    /// Start point override.
    #[arg(long)]
    x0: Option<f64>,
}

impl CommonRun {
    fn to_config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(&self.scenario, self.t_ladder.clone());
        cfg.n_paths = self.paths;
        cfg.horizon = self.horizon;
        cfg.probe_times = self.probes.clone().unwrap_or_else(|| vec![self.horizon]);
        cfg.seed = self.seed;
        cfg.quad_tol = self.quad_tol;
        cfg.x0 = self.x0;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the scenario registry.
    ListScenarios,
    /// Run the integral condition checkers over the ladder.
    CheckConditions {
        #[command(flatten)]
        common: CommonRun,
        /// Window half-width N of the sup conditions.
        #[arg(long, default_value_t = 5.0)]
        n_bound: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate finite-parameter ensembles and summarize the statistics.
    Simulate {
        #[command(flatten)]
        common: CommonRun,
        /// Statistics to record.
        #[arg(long, value_delimiter = ',', default_value = "zeta,beta1,beta2,i_t")]
        stats: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Dump the first path's trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pair finite-parameter ensembles with limit laws and print verdicts.
    Compare {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run a full experiment from a config file and write the report.
    Report {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

fn write_output(path: &Option<PathBuf>, bytes: &[u8]) -> Result<(), RunnerError> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_report(report: &Report, format: Format, out: &Option<PathBuf>) -> Result<(), RunnerError> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => report.to_csv(&mut buf)?,
        Format::Json => report.to_json(&mut buf)?,
    }
    write_output(out, &buf)
}

fn run(cli: Cli) -> Result<bool, RunnerError> {
    match cli.command {
        Command::ListScenarios => {
            print!("{}", list_scenarios());
            println!("\nSeed fallback: ${SEED_ENV}, then 42.");
            Ok(true)
        }
        Command::CheckConditions { common, n_bound, out } => {
            let cfg = common.to_config();
            cfg.validate()?;
            let mut sc = registry_get(&cfg.scenario)?;
            if let Some(x0) = cfg.x0 {
                sc = sc.with_x0(x0);
            }
            let mut records = Vec::new();
            for &t_param in &cfg.t_ladder {
                let x_max = cfg.x_max(sc.x0).max(n_bound);
                let step = ScaleParams::step_for(&sc, t_param, cfg.domain.max_step);
                let tab =
                    build_scale(&sc.drift, t_param, &ScaleParams::new(x_max, cfg.quad_tol, step))?;
                records.extend(run_checkers(&sc, &tab, n_bound, cfg.checkers.probe)?);
            }
            let mut buf = Vec::new();
            checker_records_to_csv(&records, &mut buf)?;
            write_output(&out, &buf)?;
            Ok(true)
        }
        Command::Simulate { common, stats, out, format, trace } => {
            let mut cfg = common.to_config();
            cfg.statistics = stats;
            cfg.validate()?;
            let mut sc = registry_get(&cfg.scenario)?;
            if let Some(x0) = cfg.x0 {
                sc = sc.with_x0(x0);
            }
            let seed = cfg.resolved_seed();
            let stats: Vec<Statistic> = cfg
                .statistics
                .iter()
                .map(|s| Statistic::parse(s).expect("validated"))
                .collect();
            let mut report = Report::default();
            for (ti, &t_param) in cfg.t_ladder.iter().enumerate() {
                let params = SimParams::new(
                    t_param,
                    cfg.horizon,
                    StepPolicy::new(cfg.step.h_max),
                    cfg.x_max(sc.x0),
                );
                if ti == 0 {
                    if let Some(trace_path) = &trace {
                        let path = simulate_path_em(&sc, &params, seed)
                            .map_err(|e| RunnerError::Config {
                                field: "trace".into(),
                                msg: e.to_string(),
                            })?;
                        let mut buf = Vec::new();
                        path.trace_csv(&mut buf)?;
                        fs::write(trace_path, buf)?;
                    }
                }
                let spec = EnsembleSpec {
                    n_paths: cfg.n_paths,
                    seed: difflim::rng::mix_seed(seed, 100 + ti as u64),
                    probes: cfg.probe_times.clone(),
                    stats: stats.clone(),
                };
                let ens = run_ensemble(&sc, &params, &spec)?;
                for (si, &stat) in ens.stats.iter().enumerate() {
                    for (pi, &probe) in ens.probes.iter().enumerate() {
                        let law = EmpiricalLaw::from_samples(ens.values[si][pi].clone())?;
                        report.rows.push(difflim::runner::ReportRow {
                            scenario: sc.id.clone(),
                            theorem: "summary".into(),
                            t_param: Some(t_param),
                            probe: Some(probe),
                            statistic: stat.name().into(),
                            metric: "mean".into(),
                            value: law.mean(),
                            stderr: Some(law.stderr()),
                            verdict: String::new(),
                        });
                    }
                }
            }
            report.sort();
            emit_report(&report, format, &out)?;
            Ok(true)
        }
        Command::Compare { common, out, format } => {
            let cfg = common.to_config();
            let report = run_experiment(&cfg)?;
            emit_report(&report, format, &out)?;
            let pass = report.all_pass();
            for row in report.verdict_rows() {
                eprintln!(
                    "{} {} {} {} -> {}",
                    row.theorem, row.statistic, row.metric, row.value, row.verdict
                );
            }
            Ok(pass)
        }
        Command::Report { config, out, format } => {
            let text = fs::read_to_string(&config)?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            let report = run_experiment(&cfg)?;
            emit_report(&report, format, &out)?;
            Ok(report.all_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("difflim: could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ RunnerError::Config { .. }) | Err(e @ RunnerError::Scenario(_)) => {
            eprintln!("difflim: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("difflim: {e}");
            ExitCode::from(1)
        }
    }
}
