//! Configuration ingestion, subcommand dispatch and report emission.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid
//! configuration or arguments, 3 domination infeasible, 4 regularity
//! certificate failed, 5 censoring budget exceeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{big_m, bound_report, gamma_from, theorem1_bound, BoundReport, PMode};
use crate::chain_model::{
    gamma0, sup_updown_product, ChainLabel, ChainSchedule, ScheduleKind, ScheduleSpec,
};
use crate::dominator::{
    dominating_sequence, feasible_p_interval, moments, DominationParams, Moments,
};
use crate::error::{Error, Result};
use crate::renewal_kernel::{
    check_condition_a, check_domination_grid, first_return_law, renewal_sequence, ConditionAReport,
};
use crate::simulator::{estimate, RepRecord, SimConfig, SimSummary, DEFAULT_CENSOR_BUDGET};

pub const SCHEMA_VERSION: &str = "v1";
pub const THREADS_ENV: &str = "RENEWAL_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CONDITION_A: i32 = 4;
pub const EXIT_CENSORED: i32 = 5;

/// Column set of the per-replication CSV.
pub const REP_COLUMNS: [&str; 6] = ["rep", "theta0_1", "theta0_2", "T", "tau_stop", "censored"];
/// Column set of the law CSV.
pub const LAW_COLUMNS: [&str; 4] = ["n", "g_n", "G_n", "u_n"];
/// Column set of the dominant CSV.
pub const DOMINANT_COLUMNS: [&str; 4] = ["n", "f_n", "g_hat_n", "G_hat_n"];
/// Column set of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 14] = [
    "axis",
    "value",
    "status",
    "c",
    "p",
    "gamma0",
    "gamma",
    "mu1_hat",
    "mu2_hat",
    "big_m",
    "bound",
    "et_mean",
    "et_upper95",
    "et_valid",
];

#[derive(Debug, Parser)]
#[command(
    name = "renewal",
    version,
    about = "Bounds and Monte Carlo checks for simultaneous renewal of birth-death chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the config replication count.
    #[arg(long, global = true)]
    pub reps: Option<u64>,

    /// Directory for report files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the bound report.
    Bound,
    /// Run the Monte Carlo estimate of E[T] and friends.
    Simulate,
    /// Run every numeric and statistical check.
    Verify,
    /// Recompute the bound over a grid of one parameter.
    Sweep {
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    P,
    AlphaLo,
    AlphaHi,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::P => "p",
            SweepAxis::AlphaLo => "alpha_lo",
            SweepAxis::AlphaHi => "alpha_hi",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_hi: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default = "default_t_max")]
    pub t_max: u64,
    /// Step horizon of laws and renewal sequences.
    #[serde(default = "default_law_horizon")]
    pub horizon: usize,
    /// Horizon for the first-hitting expectations.
    #[serde(default = "default_theta_horizon")]
    pub theta_horizon: usize,
    /// Replaces the computed gamma in the regularity certificate.
    #[serde(default)]
    pub gamma: Option<f64>,
}

fn default_t_max() -> u64 {
    50
}
fn default_law_horizon() -> usize {
    200
}
fn default_theta_horizon() -> usize {
    4000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub simulate: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write the per-replication CSV alongside the simulation summary.
    #[serde(default = "yes")]
    pub per_rep_csv: bool,
}

fn yes() -> bool {
    true
}

/// The configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub chain1: ScheduleConfig,
    pub chain2: ScheduleConfig,
    #[serde(default)]
    pub start_states: [u64; 2],
    #[serde(default)]
    pub n0: u64,
    #[serde(default = "default_p_mode")]
    pub p_mode: PMode,
    /// Simulation horizon; defaults to 100 times the general bound.
    #[serde(default)]
    pub horizon: Option<u64>,
    pub n_reps: u64,
    pub seed: u64,
    #[serde(default = "default_probes")]
    pub probe_times: Vec<u64>,
    #[serde(default = "default_censor_budget")]
    pub censor_budget: f64,
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub outputs: Option<OutputConfig>,
}

fn default_p_mode() -> PMode {
    PMode::MaxFeasible
}
fn default_probes() -> Vec<u64> {
    vec![10, 50, 100]
}
fn default_censor_budget() -> f64 {
    DEFAULT_CENSOR_BUDGET
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                self.version
            )));
        }
        if self.n_reps < 1 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if matches!(self.horizon, Some(0)) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.censor_budget >= 0.0 && self.censor_budget <= 1.0) {
            return Err(Error::Config("censor_budget must lie in [0, 1]".into()));
        }
        let cert = self.certificate();
        if cert.horizon < 1 || cert.theta_horizon < 1 {
            return Err(Error::Config(
                "certificate horizons must be positive".into(),
            ));
        }
        if let Some(g) = cert.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Config("certificate gamma must lie in (0, 1]".into()));
            }
        }
        self.schedules()?;
        Ok(())
    }

    pub fn schedules(&self) -> Result<[ChainSchedule; 2]> {
        let build = |c: &ScheduleConfig, label| -> Result<ChainSchedule> {
            let spec = ScheduleSpec::new(c.kind.clone(), c.alpha_lo, c.alpha_hi)
                .map_err(|e| Error::Config(format!("{label}: {e}")))?;
            Ok(ChainSchedule::new(spec, label))
        };
        Ok([
            build(&self.chain1, ChainLabel::First)?,
            build(&self.chain2, ChainLabel::Second)?,
        ])
    }

    pub fn certificate(&self) -> CertificateConfig {
        self.certificate.clone().unwrap_or(CertificateConfig {
            t_max: default_t_max(),
            horizon: default_law_horizon(),
            theta_horizon: default_theta_horizon(),
            gamma: None,
        })
    }

    fn apply_overrides(&mut self, cli: &Cli) {
        if let Some(seed) = cli.seed {
            self.seed = seed;
        }
        if let Some(reps) = cli.reps {
            self.n_reps = reps;
        }
    }

    fn out_dir(&self, cli: &Cli) -> Option<PathBuf> {
        cli.out
            .clone()
            .or_else(|| self.outputs.as_ref().and_then(|o| o.dir.clone()))
    }
}

/// What a command produced; `main` prints `stdout` and exits with `exit`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub exit: i32,
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InfeasibleDomination { .. } => EXIT_INFEASIBLE,
        Error::Config(_)
        | Error::InvalidSchedule(_)
        | Error::InvalidArgument(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::ZeroGamma0 => EXIT_CONFIG,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Worker count from `RENEWAL_THREADS`, defaulting to the available cores.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

/// Parses arguments, runs the command and returns the output. Errors are
/// reported on stderr and mapped to exit codes.
pub fn run(cli: &Cli) -> CommandOutput {
    match dispatch(cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            CommandOutput {
                stdout: String::new(),
                exit: exit_code_for(&e),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply_overrides(cli);
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<CommandOutput> {
    let cfg = load_config(cli)?;
    let workers = workers_from_env()?;
    match &cli.command {
        Command::Bound => cmd_bound(&cfg, cli.out_or(&cfg), cli.format.unwrap_or(Format::Json)),
        Command::Simulate => cmd_simulate(
            &cfg,
            cli.out_or(&cfg),
            cli.format.unwrap_or(Format::Json),
            workers,
        ),
        Command::Verify => cmd_verify(
            &cfg,
            cli.out_or(&cfg),
            cli.format.unwrap_or(Format::Json),
            workers,
        ),
        Command::Sweep { axis, grid } => {
            let from_cfg = cfg.sweep.as_ref();
            let axis = axis
                .or(from_cfg.map(|s| s.axis))
                .ok_or_else(|| Error::Config("sweep needs --axis or a sweep section".into()))?;
            let grid = grid
                .clone()
                .or_else(|| from_cfg.map(|s| s.grid.clone()))
                .unwrap_or_default();
            let simulate = from_cfg.is_some_and(|s| s.simulate);
            cmd_sweep(
                &cfg,
                axis,
                &grid,
                simulate,
                cli.out_or(&cfg),
                cli.format.unwrap_or(Format::Csv),
                workers,
            )
        }
    }
}

impl Cli {
    fn out_or(&self, cfg: &RunConfig) -> Option<PathBuf> {
        cfg.out_dir(self)
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Flat bound report plus the regularity certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutput {
    #[serde(flatten)]
    pub report: BoundReport,
    pub condition_a_gamma: f64,
    pub condition_a_min_u: f64,
    pub condition_a_argmin_t: u64,
    pub condition_a_argmin_n: usize,
    pub condition_a_argmin_chain: ChainLabel,
    pub condition_a_t_max: u64,
    pub condition_a_horizon: usize,
    pub condition_a_pass: bool,
}

fn bound_for(cfg: &RunConfig, schedules: &[ChainSchedule; 2]) -> Result<BoundReport> {
    bound_report(
        [&schedules[0], &schedules[1]],
        cfg.start_states,
        cfg.n0,
        cfg.p_mode,
        cfg.certificate().theta_horizon,
    )
}

fn condition_a_for(
    cfg: &RunConfig,
    schedules: &[ChainSchedule; 2],
    report: &BoundReport,
) -> Result<ConditionAReport> {
    let cert = cfg.certificate();
    check_condition_a(
        [&schedules[0], &schedules[1]],
        cert.gamma.unwrap_or(report.gamma),
        cfg.n0,
        cert.t_max,
        cert.horizon,
    )
}

/// Law table for a chain started at `0` at time `0`: `n, g_n, G_n, u_n`.
pub fn law_csv(schedule: &ChainSchedule, horizon: usize) -> Result<String> {
    let law = first_return_law(schedule, 0, horizon)?;
    let seq = renewal_sequence(schedule, 0, horizon)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LAW_COLUMNS)?;
    for n in 0..=horizon {
        w.write_record([
            n.to_string(),
            law.g[n].to_string(),
            law.tail[n].to_string(),
            seq.u[n].to_string(),
        ])?;
    }
    finish_csv(w)
}

/// Dominant table: `n, f_n, g_hat_n, G_hat_n`.
pub fn dominant_csv(p: f64, c: f64, horizon: usize) -> Result<String> {
    let dom = dominating_sequence(&DominationParams::new(p, c)?, horizon)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DOMINANT_COLUMNS)?;
    for n in 0..=horizon {
        w.write_record([
            n.to_string(),
            dom.f[n].to_string(),
            dom.g_hat[n].to_string(),
            dom.tail_hat[n].to_string(),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn key_value_csv<T: Serialize>(value: &T) -> Result<String> {
    let map: BTreeMap<String, serde_json::Value> =
        serde_json::from_value(serde_json::to_value(value)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in map {
        let v = match v {
            serde_json::Value::String(s) => s,
            serde_json::Value::Null => String::new(),
            other => other.to_string(),
        };
        w.write_record([k, v])?;
    }
    finish_csv(w)
}

pub fn cmd_bound(cfg: &RunConfig, out: Option<PathBuf>, format: Format) -> Result<CommandOutput> {
    let schedules = cfg.schedules()?;
    let report = bound_for(cfg, &schedules)?;
    let cert = condition_a_for(cfg, &schedules, &report)?;
    let output = BoundOutput {
        condition_a_gamma: cert.gamma,
        condition_a_min_u: cert.min_u,
        condition_a_argmin_t: cert.argmin_t,
        condition_a_argmin_n: cert.argmin_n,
        condition_a_argmin_chain: cert.argmin_chain,
        condition_a_t_max: cert.t_max,
        condition_a_horizon: cert.horizon,
        condition_a_pass: cert.pass,
        report,
    };
    let json = to_json(&output)?;
    if let Some(dir) = out {
        let horizon = cfg.certificate().horizon;
        write_file(&dir, "bound.json", &json)?;
        write_file(&dir, "law_chain1.csv", &law_csv(&schedules[0], horizon)?)?;
        write_file(&dir, "law_chain2.csv", &law_csv(&schedules[1], horizon)?)?;
        write_file(
            &dir,
            "dominant.csv",
            &dominant_csv(output.report.p, output.report.c, horizon)?,
        )?;
        write_file(&dir, "moments.json", &to_json(&moments(output.report.p)?)?)?;
    }
    let stdout = match format {
        Format::Json => json,
        Format::Csv => key_value_csv(&output)?,
    };
    let exit = if output.condition_a_pass {
        EXIT_OK
    } else {
        EXIT_CONDITION_A
    };
    Ok(CommandOutput { stdout, exit })
}

fn sim_config(cfg: &RunConfig, schedules: [ChainSchedule; 2], report: &BoundReport) -> SimConfig {
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| default_sim_horizon(report, &cfg.probe_times));
    let mut sim = SimConfig::new(schedules, cfg.start_states, horizon, cfg.n_reps, cfg.seed);
    sim.n0 = cfg.n0;
    sim.probe_times = cfg.probe_times.clone();
    sim.censor_budget = cfg.censor_budget;
    sim
}

/// 100 times the general bound, and past every probe time.
pub fn default_sim_horizon(report: &BoundReport, probes: &[u64]) -> u64 {
    let from_bound = (100.0 * report.bound_thm1).ceil() as u64;
    let past_probes = probes.iter().max().map_or(0, |m| 2 * m + 2);
    from_bound.max(past_probes).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub summary: SimSummary,
    /// The zero-start bound when both chains start at 0 and `n0 = 0`, else the general one.
    pub bound: f64,
    pub bound_kind: String,
    pub et_upper95: f64,
    /// `below_bound`, `exceeds_bound` or `invalid`.
    pub verdict: String,
}

fn reps_csv(records: &[RepRecord]) -> Result<String> {
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REP_COLUMNS)?;
    for r in records {
        w.write_record([
            r.rep.to_string(),
            opt(r.theta0[0]),
            opt(r.theta0[1]),
            opt(r.t),
            r.tau_stop.map(|s| s.to_string()).unwrap_or_default(),
            r.censored.to_string(),
        ])?;
    }
    finish_csv(w)
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    out: Option<PathBuf>,
    format: Format,
    workers: usize,
) -> Result<CommandOutput> {
    let schedules = cfg.schedules()?;
    let report = bound_for(cfg, &schedules)?;
    let sim = sim_config(cfg, schedules, &report);
    let outcome = estimate(&sim, workers)?;
    let (bound, bound_kind) = match report.bound_thm2 {
        Some(b) => (b, "theorem2"),
        None => (report.bound_thm1, "theorem1"),
    };
    let summary = outcome.summary;
    let et_upper95 = summary.et.upper95();
    let verdict = if !summary.valid {
        "invalid"
    } else if et_upper95 <= bound {
        "below_bound"
    } else {
        "exceeds_bound"
    };
    let sim_report = SimulationReport {
        bound,
        bound_kind: bound_kind.into(),
        et_upper95,
        verdict: verdict.into(),
        summary,
    };
    let json = to_json(&sim_report)?;
    let per_rep = cfg.outputs.as_ref().is_none_or(|o| o.per_rep_csv);
    if let Some(dir) = out {
        write_file(&dir, "simulate.json", &json)?;
        if per_rep {
            write_file(&dir, "reps.csv", &reps_csv(&outcome.records)?)?;
        }
    }
    let stdout = match format {
        Format::Json => json,
        Format::Csv => reps_csv(&outcome.records)?,
    };
    let exit = if sim_report.summary.valid {
        EXIT_OK
    } else {
        EXIT_CENSORED
    };
    Ok(CommandOutput { stdout, exit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub evidence: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Number of standard errors allowed between an estimate and its bound.
pub const STATISTICAL_SLACK: f64 = 4.0;

pub fn cmd_verify(
    cfg: &RunConfig,
    out: Option<PathBuf>,
    format: Format,
    workers: usize,
) -> Result<CommandOutput> {
    let schedules = cfg.schedules()?;
    let report = bound_for(cfg, &schedules)?;
    let cert = cfg.certificate();
    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, evidence: serde_json::Value| {
        checks.push(CheckResult {
            name: name.into(),
            pass,
            evidence,
        });
    };

    let dominant = dominating_sequence(&DominationParams::new(report.p, report.c)?, cert.horizon)?;
    for s in &schedules {
        let dom = check_domination_grid(s, &dominant, cert.t_max, cert.horizon)?;
        push(
            &format!("domination_{}", s.label),
            dom.pass,
            serde_json::to_value(&dom)?,
        );
    }

    let cond_a = condition_a_for(cfg, &schedules, &report)?;
    push("condition_a", cond_a.pass, serde_json::to_value(&cond_a)?);

    let sim = sim_config(cfg, schedules.clone(), &report);
    let outcome = estimate(&sim, workers)?;
    let summary = &outcome.summary;

    let pw = &summary.pathwise;
    push(
        "pathwise_decomposition",
        pw.checked > 0 && pw.decomposition_violations == 0,
        serde_json::to_value(pw)?,
    );
    push(
        "simultaneous_time_consistency",
        pw.t_violations == 0,
        serde_json::to_value(pw)?,
    );

    let tail_rows: Vec<serde_json::Value> = summary
        .tail_tau
        .iter()
        .map(|t| {
            let bound = (1.0 - report.gamma).powi(t.n as i32);
            serde_json::json!({
                "n": t.n, "empirical": t.prob, "std_error": t.std_error, "bound": bound,
                "pass": t.prob <= bound + STATISTICAL_SLACK * t.std_error,
            })
        })
        .collect();
    let tail_pass = tail_rows.iter().all(|r| r["pass"] == true) && summary.trace_censored == 0;
    push(
        "coupling_tail",
        tail_pass,
        serde_json::Value::Array(tail_rows),
    );

    let m = report.big_m;
    let excess_rows: Vec<serde_json::Value> = summary
        .residual
        .iter()
        .flat_map(|r| {
            [(ChainLabel::First, &r.chain1), (ChainLabel::Second, &r.chain2)].map(|(label, est)| {
                serde_json::json!({
                    "m": r.m, "chain": label, "mean": est.mean, "std_error": est.std_error, "big_m": m,
                    "pass": est.valid && est.mean <= m + STATISTICAL_SLACK * est.std_error,
                })
            })
        })
        .collect();
    let excess_pass = excess_rows.iter().all(|r| r["pass"] == true);
    push("excess", excess_pass, serde_json::Value::Array(excess_rows));

    let upper = summary.et.upper95();
    push(
        "expected_t_below_bound",
        summary.et.valid && report.e_theta_complete && upper <= report.bound_thm1,
        serde_json::json!({
            "et_mean": summary.et.mean, "et_upper95": upper, "bound_thm1": report.bound_thm1,
            "bound_thm2": report.bound_thm2, "e_theta_complete": report.e_theta_complete,
        }),
    );
    push(
        "censoring_budget",
        summary.valid,
        serde_json::json!({ "censored_reps": summary.censored_reps, "n_reps": summary.n_reps, "budget": cfg.censor_budget }),
    );

    let pass = checks.iter().all(|c| c.pass);
    let verify = VerifyReport { checks, pass };
    let json = to_json(&verify)?;
    if let Some(dir) = out {
        write_file(&dir, "verify.json", &json)?;
    }
    let stdout = match format {
        Format::Json => json,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["check", "pass", "evidence"])?;
            for c in &verify.checks {
                w.write_record([c.name.clone(), c.pass.to_string(), c.evidence.to_string()])?;
            }
            finish_csv(w)?
        }
    };
    Ok(CommandOutput {
        stdout,
        exit: if pass { EXIT_OK } else { EXIT_CHECK_FAILED },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    /// `ok` or `infeasible`.
    pub status: String,
    pub c: Option<f64>,
    pub p: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma: Option<f64>,
    pub mu1_hat: Option<f64>,
    pub mu2_hat: Option<f64>,
    pub big_m: Option<f64>,
    pub bound: Option<f64>,
    pub et_mean: Option<f64>,
    pub et_upper95: Option<f64>,
    pub et_valid: Option<bool>,
}

impl SweepRow {
    fn infeasible(axis: SweepAxis, value: f64, c: f64, gamma0: f64) -> Self {
        SweepRow {
            axis: axis.to_string(),
            value,
            status: "infeasible".into(),
            c: Some(c),
            p: None,
            gamma0: Some(gamma0),
            gamma: None,
            mu1_hat: None,
            mu2_hat: None,
            big_m: None,
            bound: None,
            et_mean: None,
            et_upper95: None,
            et_valid: None,
        }
    }
}

fn sweep_row_at_p(
    axis: SweepAxis,
    value: f64,
    p: f64,
    c: f64,
    gamma0: f64,
    cfg: &RunConfig,
    thetas: (f64, f64),
) -> Result<SweepRow> {
    let m: Moments = moments(p)?;
    let gamma = gamma_from(gamma0, m.mu1_hat)?;
    let bm = big_m(m.mu1_hat, m.mu2_hat, gamma, cfg.n0);
    Ok(SweepRow {
        axis: axis.to_string(),
        value,
        status: "ok".into(),
        c: Some(c),
        p: Some(p),
        gamma0: Some(gamma0),
        gamma: Some(gamma),
        mu1_hat: Some(m.mu1_hat),
        mu2_hat: Some(m.mu2_hat),
        big_m: Some(bm),
        bound: Some(theorem1_bound(thetas.0, thetas.1, bm, gamma)),
        et_mean: None,
        et_upper95: None,
        et_valid: None,
    })
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    grid: &[f64],
    simulate: bool,
    out: Option<PathBuf>,
    format: Format,
    workers: usize,
) -> Result<CommandOutput> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sweep grid values must be finite".into()));
    }
    let base = cfg.schedules()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let schedules = match axis {
            SweepAxis::P => base.clone(),
            SweepAxis::AlphaLo | SweepAxis::AlphaHi => {
                let adjust = |s: &ChainSchedule| -> Result<ChainSchedule> {
                    let (lo, hi) = match axis {
                        SweepAxis::AlphaLo => (value, s.spec.alpha_hi()),
                        _ => (s.spec.alpha_lo(), value),
                    };
                    let spec = s
                        .spec
                        .with_bounds(lo, hi)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    Ok(ChainSchedule::new(spec, s.label))
                };
                [adjust(&base[0])?, adjust(&base[1])?]
            }
        };
        let g0 = gamma0(&schedules[0], &schedules[1])?;
        let c = sup_updown_product(&schedules[0], &schedules[1]);
        let interval = match feasible_p_interval(c) {
            Ok(iv) => iv,
            Err(Error::InfeasibleDomination { .. }) => {
                rows.push(SweepRow::infeasible(axis, value, c, g0));
                continue;
            }
            Err(e) => return Err(e),
        };
        let report = match axis {
            SweepAxis::P => None,
            _ => Some(bound_for(cfg, &schedules)?),
        };
        let thetas = {
            let h = cfg.certificate().theta_horizon;
            let t1 = crate::bounds::expected_theta0(&schedules[0], cfg.start_states[0], h)?;
            let t2 = crate::bounds::expected_theta0(&schedules[1], cfg.start_states[1], h)?;
            (t1.value, t2.value)
        };
        let p = match (axis, &report) {
            (SweepAxis::P, _) => value,
            (_, Some(r)) => r.p,
            _ => unreachable!(),
        };
        if !interval.contains(p) {
            rows.push(SweepRow::infeasible(axis, value, c, g0));
            continue;
        }
        let mut row = sweep_row_at_p(axis, value, p, c, g0, cfg, thetas)?;
        if simulate {
            let bound_stub = report.clone().unwrap_or(bound_for(cfg, &schedules)?);
            let sim = sim_config(cfg, schedules, &bound_stub);
            let est = estimate(&sim, workers)?.summary.et;
            row.et_mean = Some(est.mean);
            row.et_upper95 = Some(est.upper95());
            row.et_valid = Some(est.valid);
        }
        rows.push(row);
    }

    let csv_text = {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_COLUMNS)?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &rows {
            w.write_record([
                r.axis.clone(),
                r.value.to_string(),
                r.status.clone(),
                f(r.c),
                f(r.p),
                f(r.gamma0),
                f(r.gamma),
                f(r.mu1_hat),
                f(r.mu2_hat),
                f(r.big_m),
                f(r.bound),
                f(r.et_mean),
                f(r.et_upper95),
                r.et_valid.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        finish_csv(w)?
    };
    if let Some(dir) = out {
        write_file(&dir, "sweep.csv", &csv_text)?;
    }
    let stdout = match format {
        Format::Csv => csv_text,
        Format::Json => to_json(&rows)?,
    };
    Ok(CommandOutput {
        stdout,
        exit: EXIT_OK,
    })
}
