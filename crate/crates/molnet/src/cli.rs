//! Command-line front end: key=value experiment configs, parameter sweeps,
//! and CSV emission.
//!
//! Output is designed for bit-exact reproducibility: floats are printed with
//! Rust's shortest round-trip formatting, rows appear in sweep order
//! regardless of scheduling, and metadata carries the fully resolved
//! configuration (no timestamps, no hidden state).

use crate::analysis::{
    error_prob_exact_with, error_prob_ook_with, error_prob_upper_with, Method,
};
use crate::detector::{compute_thresholds, DetectorThresholds};
use crate::geometry::DistanceDistribution;
use crate::interference::{InterferenceModel, InterferenceStats, SystemParams};
use crate::numerics::IntegrationSpec;
use crate::simulator::{estimate_interference_stats, run_error_trials, ExclusionMode, TrialConfig};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

/// Parameter swept by `error-sweep`, `interference`, or `thresholds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    SlotCount,
    SlotDuration,
    ParentIntensity,
    OnAmplitude,
    ClusterSpread,
    Diffusion,
    Degradation,
    LinkDistance,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SlotCount => "L",
            SweepVariable::SlotDuration => "T",
            SweepVariable::ParentIntensity => "lambda_p",
            SweepVariable::OnAmplitude => "x2",
            SweepVariable::ClusterSpread => "sigma",
            SweepVariable::Diffusion => "D",
            SweepVariable::Degradation => "mu",
            SweepVariable::LinkDistance => "y0_norm",
        }
    }

    /// Return a copy of `base` with this variable set to `value`.
    pub fn apply(self, base: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = base.clone();
        match self {
            SweepVariable::SlotCount => {
                if value < 1.0 || value.fract().abs() > 1e-9 || value > u32::MAX as f64 {
                    return Err(Error::Config(format!(
                        "slot count must be a positive integer, got {value}"
                    )));
                }
                p.slots = value as u32;
            }
            SweepVariable::SlotDuration => p.channel.slot = value,
            SweepVariable::ParentIntensity => p.lambda_p = value,
            SweepVariable::OnAmplitude => {
                if p.m() != 2 {
                    return Err(Error::Config(
                        "x2 sweep needs a binary constellation".into(),
                    ));
                }
                p.constellation[1] = value;
            }
            SweepVariable::ClusterSpread => p.sigma = value,
            SweepVariable::Diffusion => p.channel.diffusion = value,
            SweepVariable::Degradation => p.channel.degradation = value,
            SweepVariable::LinkDistance => p.y0_norm = value,
        }
        p.validate()?;
        Ok(p)
    }
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(SweepVariable::SlotCount),
            "T" => Ok(SweepVariable::SlotDuration),
            "lambda_p" => Ok(SweepVariable::ParentIntensity),
            "x2" => Ok(SweepVariable::OnAmplitude),
            "sigma" => Ok(SweepVariable::ClusterSpread),
            "D" => Ok(SweepVariable::Diffusion),
            "mu" => Ok(SweepVariable::Degradation),
            "y0_norm" => Ok(SweepVariable::LinkDistance),
            other => Err(Error::Config(format!(
                "unknown sweep variable {other:?} (expected L, T, lambda_p, x2, sigma, D, mu, or y0_norm)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Fully resolved experiment description, parsed from a flat key=value file.
///
/// The background arrival rate defaults to λ₀ = 1 s⁻¹; this is an assumption
/// (the standard parameter table leaves it open) and is therefore recorded in
/// every output file.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub sweep: Option<Sweep>,
    pub methods: Vec<Method>,
    pub trials: u64,
    pub seed: u64,
    pub box_half_width: Option<f64>,
    pub mode: ExclusionMode,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            sweep: None,
            methods: vec![Method::Exact],
            trials: 50_000,
            seed: 0,
            box_half_width: None,
            mode: ExclusionMode::AnalysisMatched,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn resolved_box_half_width(&self) -> f64 {
        self.box_half_width.unwrap_or(25.0 * self.params.r0())
    }

    /// Canonical key=value rendering; parsing it back reproduces the config.
    pub fn resolved_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "lambda_p_per_um3 = {}", p.lambda_p);
        let _ = writeln!(out, "r0_um = {}", p.channel.radius);
        let _ = writeln!(out, "y0_norm_um = {}", p.y0_norm);
        let _ = writeln!(out, "D_um2_per_s = {}", p.channel.diffusion);
        let _ = writeln!(out, "mu_per_s = {}", p.channel.degradation);
        let _ = writeln!(out, "sigma_um = {}", p.sigma);
        let _ = writeln!(out, "T_s = {}", p.channel.slot);
        let _ = writeln!(out, "L = {}", p.slots);
        let _ = writeln!(out, "constellation = {}", join_f64(&p.constellation, ","));
        let _ = writeln!(out, "lambda0_per_s = {}", p.noise_rate);
        let methods: Vec<String> = self.methods.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(out, "methods = {}", methods.join(","));
        let _ = writeln!(out, "trials = {}", self.trials);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "exclusion_mode = {}", self.mode);
        let _ = writeln!(out, "box_half_width_um = {}", self.resolved_box_half_width());
        if let Some(sweep) = &self.sweep {
            let _ = writeln!(out, "sweep_variable = {}", sweep.variable);
            let _ = writeln!(out, "sweep_values = {}", join_f64(&sweep.values, ","));
        }
        if let Some(path) = &self.output_path {
            let _ = writeln!(out, "output_path = {}", path.display());
        }
        out
    }
}

fn join_f64(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as a number")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as an integer")))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_f64(key, v.trim()))
        .collect()
}

/// Parse a flat key=value config. Blank lines and `#` comments are ignored;
/// unknown and duplicate keys are errors. Every key has a default, so the
/// empty string is a valid config describing the standard parameter table.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = HashSet::new();
    let mut sweep_variable = None;
    let mut sweep_values: Option<Vec<f64>> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {line:?}", idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {}: duplicate key {key}", idx + 1)));
        }
        match key {
            "lambda_p_per_um3" => cfg.params.lambda_p = parse_f64(key, value)?,
            "r0_um" => cfg.params.channel.radius = parse_f64(key, value)?,
            "y0_norm_um" => cfg.params.y0_norm = parse_f64(key, value)?,
            "D_um2_per_s" => cfg.params.channel.diffusion = parse_f64(key, value)?,
            "mu_per_s" => cfg.params.channel.degradation = parse_f64(key, value)?,
            "sigma_um" => cfg.params.sigma = parse_f64(key, value)?,
            "T_s" => cfg.params.channel.slot = parse_f64(key, value)?,
            "L" => {
                let v = parse_u64(key, value)?;
                cfg.params.slots = u32::try_from(v)
                    .map_err(|_| Error::Config(format!("key L: {v} too large")))?;
            }
            "constellation" => cfg.params.constellation = parse_f64_list(key, value)?,
            "lambda0_per_s" => cfg.params.noise_rate = parse_f64(key, value)?,
            "methods" => {
                cfg.methods = value
                    .split(',')
                    .map(|m| Method::from_str(m.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "trials" => cfg.trials = parse_u64(key, value)?,
            "seed" => cfg.seed = parse_u64(key, value)?,
            "exclusion_mode" => cfg.mode = value.parse()?,
            "box_half_width_um" => cfg.box_half_width = Some(parse_f64(key, value)?),
            "sweep_variable" => sweep_variable = Some(SweepVariable::from_str(value)?),
            "sweep_values" => sweep_values = Some(parse_f64_list(key, value)?),
            "output_path" => cfg.output_path = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Config(format!("line {}: unknown key {other:?}", idx + 1)))
            }
        }
    }
    cfg.sweep = match (sweep_variable, sweep_values) {
        (Some(variable), Some(values)) => {
            if values.is_empty() {
                return Err(Error::Config("sweep_values is empty".into()));
            }
            Some(Sweep { variable, values })
        }
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "sweep_variable and sweep_values must be given together".into(),
            ))
        }
    };
    if cfg.methods.is_empty() {
        return Err(Error::Config("methods must not be empty".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    cfg.params.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// What a subcommand computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ErrorSweep,
    Interference,
    Thresholds,
    DistancePdf,
    McValidate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ErrorSweep => "error-sweep",
            Task::Interference => "interference",
            Task::Thresholds => "thresholds",
            Task::DistancePdf => "distance-pdf",
            Task::McValidate => "mc-validate",
        }
    }
}

/// A fully resolved command invocation (CLI flags override config values).
#[derive(Debug, Clone)]
pub struct Invocation {
    pub task: Task,
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub methods: Option<Vec<Method>>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_path: PathBuf,
    pub rows: usize,
    /// Failed cross-checks (`mc-validate` only).
    pub failures: u64,
    pub messages: Vec<String>,
}

struct Row {
    sweep_var: String,
    value: String,
    method: String,
    p_error: Option<f64>,
    stderr: Option<f64>,
    e_intra: Option<f64>,
    e_inter: Option<f64>,
    thresholds: Option<Vec<u32>>,
    params: SystemParams,
    seed: u64,
    status: String,
}

impl Row {
    fn blank(cfg: &ExperimentConfig, params: &SystemParams, seed: u64, method: &str) -> Self {
        let _ = cfg;
        Row {
            sweep_var: String::new(),
            value: String::new(),
            method: method.to_string(),
            p_error: None,
            stderr: None,
            e_intra: None,
            e_inter: None,
            thresholds: None,
            params: params.clone(),
            seed,
            status: "ok".to_string(),
        }
    }
}

fn sanitize(message: &str) -> String {
    message.replace([',', '\n'], ";")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_header(m: usize) -> String {
    let mut header = String::from("sweep_var,value,method,p_error,stderr,e_intra,e_inter");
    for i in 1..m {
        let _ = write!(header, ",th_{i}");
    }
    header.push_str(
        ",lambda_p_per_um3,r0_um,y0_norm_um,D_um2_per_s,mu_per_s,sigma_um,T_s,L,constellation,lambda0_per_s,trials,seed,exclusion_mode,status",
    );
    header
}

fn csv_rows(cfg: &ExperimentConfig, rows: &[Row]) -> String {
    let m = cfg.params.m();
    let mut out = csv_header(m);
    out.push('\n');
    for row in rows {
        let p = &row.params;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            row.sweep_var,
            row.value,
            row.method,
            fmt_opt(row.p_error),
            fmt_opt(row.stderr),
            fmt_opt(row.e_intra),
            fmt_opt(row.e_inter),
        );
        for i in 0..m - 1 {
            let cell = row
                .thresholds
                .as_ref()
                .and_then(|th| th.get(i))
                .map(|t| t.to_string())
                .unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        let _ = write!(
            out,
            ",{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.lambda_p,
            p.channel.radius,
            p.y0_norm,
            p.channel.diffusion,
            p.channel.degradation,
            p.sigma,
            p.channel.slot,
            p.slots,
            join_f64(&p.constellation, ";"),
            p.noise_rate,
            cfg.trials,
            row.seed,
            cfg.mode,
            sanitize(&row.status),
        );
        out.push('\n');
    }
    out
}

/// Interference statistics and detector thresholds shared by every method at
/// one sweep point.
fn point_foundation(
    params: &SystemParams,
    spec: &IntegrationSpec,
) -> Result<(InterferenceModel, InterferenceStats, DetectorThresholds)> {
    let model = InterferenceModel::new(params.clone(), *spec)?;
    let stats = model.interference_stats()?;
    let th = compute_thresholds(params, &stats)?;
    Ok((model, stats, th))
}

fn point_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn method_rows(
    cfg: &ExperimentConfig,
    task: Task,
    params: &SystemParams,
    seed: u64,
    spec: &IntegrationSpec,
) -> Vec<Row> {
    let foundation = point_foundation(params, spec);
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        if task == Task::Interference
            && !matches!(method, Method::Exact | Method::MonteCarlo)
        {
            continue;
        }
        let mut row = Row::blank(cfg, params, seed, &method.to_string());
        match &foundation {
            Err(e) => row.status = e.to_string(),
            Ok((model, stats, th)) => {
                row.e_intra = Some(stats.e_intra);
                row.e_inter = Some(stats.e_inter);
                row.thresholds = Some(th.th.clone());
                match method {
                    Method::Exact | Method::UpperBound | Method::OokClosedForm
                        if task == Task::ErrorSweep || task == Task::McValidate =>
                    {
                        let report = match method {
                            Method::Exact => error_prob_exact_with(model),
                            Method::UpperBound => error_prob_upper_with(model),
                            _ => error_prob_ook_with(model),
                        };
                        match report {
                            Ok(r) => {
                                row.p_error = Some(r.total);
                                if r.derivative_budget_hit {
                                    row.status = "degraded_to_upper".to_string();
                                }
                            }
                            Err(e) => row.status = e.to_string(),
                        }
                    }
                    Method::MonteCarlo if task != Task::Thresholds => {
                        let tc = TrialConfig {
                            params: params.clone(),
                            box_half_width: cfg.resolved_box_half_width(),
                            trials: cfg.trials,
                            mode: cfg.mode,
                            seed,
                        };
                        if task == Task::Interference {
                            match estimate_interference_stats(&tc, &[]) {
                                Ok(est) => {
                                    row.e_intra = Some(est.mean_intra);
                                    row.e_inter = Some(est.mean_inter);
                                }
                                Err(e) => row.status = e.to_string(),
                            }
                        } else {
                            match run_error_trials(&tc, th, &[]) {
                                Ok(sim) => {
                                    row.p_error = Some(sim.error_rate);
                                    row.stderr = Some(sim.error_stderr);
                                    row.e_intra = Some(sim.interference.mean_intra);
                                    row.e_inter = Some(sim.interference.mean_inter);
                                }
                                Err(e) => row.status = e.to_string(),
                            }
                        }
                    }
                    // thresholds task: the shared columns are the payload
                    _ => {}
                }
            }
        }
        rows.push(row);
    }
    rows
}

fn sweep_points(cfg: &ExperimentConfig) -> Vec<(String, String, Result<SystemParams>)> {
    match &cfg.sweep {
        None => vec![(
            "none".to_string(),
            String::new(),
            Ok(cfg.params.clone()),
        )],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| {
                (
                    sweep.variable.name().to_string(),
                    v.to_string(),
                    sweep.variable.apply(&cfg.params, v),
                )
            })
            .collect(),
    }
}

/// Run every sweep point (concurrently) and assemble rows in sweep order.
fn tabulate(cfg: &ExperimentConfig, task: Task, spec: &IntegrationSpec) -> Vec<Row> {
    let points = sweep_points(cfg);
    let row_groups: Vec<Vec<Row>> = points
        .into_par_iter()
        .enumerate()
        .map(|(idx, (var, value, params))| {
            let seed = point_seed(cfg.seed, idx);
            let mut rows = match params {
                Ok(p) => method_rows(cfg, task, &p, seed, spec),
                Err(e) => {
                    let mut row =
                        Row::blank(cfg, &cfg.params, seed, "none");
                    row.status = e.to_string();
                    vec![row]
                }
            };
            for row in &mut rows {
                row.sweep_var = var.clone();
                row.value = value.clone();
            }
            rows
        })
        .collect();
    row_groups.into_iter().flatten().collect()
}

fn distance_pdf_csv(cfg: &ExperimentConfig, spec: &IntegrationSpec) -> Result<String> {
    let p = &cfg.params;
    let dist = DistanceDistribution::tcp(p.y0_norm, p.sigma, p.r0(), spec)?;
    let mut out = String::from("parent_distance_um,y_um,pdf,conditional_pdf\n");
    let steps = 240;
    for k in 0..=steps {
        let y = 6.0 * p.sigma * k as f64 / steps as f64;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.y0_norm,
            y,
            dist.pdf(y),
            dist.conditional_pdf(y)
        );
    }
    Ok(out)
}

struct Check {
    name: &'static str,
    analytic: f64,
    simulated: f64,
    stderr: f64,
}

impl Check {
    fn passed(&self) -> bool {
        if self.stderr == 0.0 {
            return self.analytic == self.simulated;
        }
        (self.analytic - self.simulated).abs() < 3.0 * self.stderr
    }

    fn message(&self) -> String {
        format!(
            "{}: analytic {:.6e} vs simulated {:.6e} (3se {:.2e}) {}",
            self.name,
            self.analytic,
            self.simulated,
            3.0 * self.stderr,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Cross-validate the analytical engine against the simulator at the config's
/// operating point: interference means, the Laplace transform at s ∈ {0.5, 1},
/// the exact error probability, and upper-bound dominance.
fn mc_validate(
    cfg: &ExperimentConfig,
    spec: &IntegrationSpec,
) -> Result<(Vec<Row>, Vec<String>, u64)> {
    let params = &cfg.params;
    let (model, stats, th) = point_foundation(params, spec)?;
    let tc = TrialConfig {
        params: params.clone(),
        box_half_width: cfg.resolved_box_half_width(),
        trials: cfg.trials,
        mode: cfg.mode,
        seed: cfg.seed,
    };
    let sim = run_error_trials(&tc, &th, &[0.5, 1.0])?;
    let exact = error_prob_exact_with(&model)?;
    let upper = error_prob_upper_with(&model)?;

    let mut checks = vec![
        Check {
            name: "expected intra-cluster interference",
            analytic: stats.e_intra,
            simulated: sim.interference.mean_intra,
            stderr: sim.interference.intra_stderr,
        },
        Check {
            name: "expected inter-cluster interference",
            analytic: stats.e_inter,
            simulated: sim.interference.mean_inter,
            stderr: sim.interference.inter_stderr,
        },
    ];
    for pt in &sim.interference.lt_points {
        checks.push(Check {
            name: if pt.s == 0.5 {
                "laplace transform at s=0.5"
            } else {
                "laplace transform at s=1"
            },
            analytic: model.lt_total(pt.s)?,
            simulated: pt.value,
            stderr: pt.stderr,
        });
    }
    checks.push(Check {
        name: "exact symbol error probability",
        analytic: exact.total,
        simulated: sim.error_rate,
        stderr: sim.error_stderr,
    });

    let mut messages: Vec<String> = checks.iter().map(Check::message).collect();
    let mut failures = checks.iter().filter(|c| !c.passed()).count() as u64;

    // the bound must sit above the simulated rate up to noise
    let dominated = upper.total >= sim.error_rate - 3.0 * sim.error_stderr;
    messages.push(format!(
        "upper bound dominance: bound {:.6e} vs simulated {:.6e} {}",
        upper.total,
        sim.error_rate,
        if dominated { "PASS" } else { "FAIL" }
    ));
    if !dominated {
        failures += 1;
    }

    let base = |method: &str| {
        let mut row = Row::blank(cfg, params, cfg.seed, method);
        row.sweep_var = "none".to_string();
        row.e_intra = Some(stats.e_intra);
        row.e_inter = Some(stats.e_inter);
        row.thresholds = Some(th.th.clone());
        row
    };
    let mut exact_row = base("exact");
    exact_row.p_error = Some(exact.total);
    let mut upper_row = base("upper");
    upper_row.p_error = Some(upper.total);
    let mut mc_row = base("mc");
    mc_row.p_error = Some(sim.error_rate);
    mc_row.stderr = Some(sim.error_stderr);
    mc_row.e_intra = Some(sim.interference.mean_intra);
    mc_row.e_inter = Some(sim.interference.mean_inter);
    Ok((vec![exact_row, upper_row, mc_row], messages, failures))
}

fn metadata_text(cfg: &ExperimentConfig, task: Task, rows: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# molnet run metadata");
    let _ = writeln!(out, "format = 1");
    let _ = writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "task = {}", task.name());
    let _ = writeln!(out, "rows = {rows}");
    let _ = writeln!(out);
    let _ = writeln!(out, "# resolved configuration");
    out.push_str(&cfg.resolved_text());
    out
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    out.with_file_name(name)
}

/// Execute one resolved invocation: load the config, apply flag overrides,
/// compute, and write the CSV plus a metadata sidecar.
pub fn run_invocation(inv: &Invocation) -> Result<RunSummary> {
    let mut cfg = load_config(&inv.config_path)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = inv.trials {
        if trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        cfg.trials = trials;
    }
    if let Some(methods) = &inv.methods {
        if methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        cfg.methods = methods.clone();
    }
    let out_path = inv
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", inv.task.name())));
    let spec = IntegrationSpec::default();

    let (csv, messages, failures, rows) = match inv.task {
        Task::DistancePdf => {
            let csv = distance_pdf_csv(&cfg, &spec)?;
            let rows = csv.lines().count() - 1;
            (csv, Vec::new(), 0, rows)
        }
        Task::McValidate => {
            let (rows, messages, failures) = mc_validate(&cfg, &spec)?;
            let n = rows.len();
            (csv_rows(&cfg, &rows), messages, failures, n)
        }
        task => {
            let rows = tabulate(&cfg, task, &spec);
            let n = rows.len();
            (csv_rows(&cfg, &rows), Vec::new(), 0, n)
        }
    };

    std::fs::write(&out_path, csv)?;
    std::fs::write(meta_path(&out_path), metadata_text(&cfg, inv.task, rows))?;
    Ok(RunSummary {
        out_path,
        rows,
        failures,
        messages,
    })
}

#[derive(Parser)]
#[command(
    name = "molnet",
    version,
    about = "Clustered molecular nanonetwork analysis and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Symbol error probability across a parameter sweep
    ErrorSweep(CommonArgs),
    /// Expected intra-/inter-cluster interference (analytic and simulated)
    Interference(CommonArgs),
    /// Detection thresholds and expected interference per sweep point
    Thresholds(CommonArgs),
    /// Member-to-receiver distance density on a radial grid
    DistancePdf(CommonArgs),
    /// Cross-check the analytical engine against the simulator
    McValidate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Key=value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (default: output_path from the config, else <task>.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's Monte Carlo trial count
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated subset of exact,upper,ook,mc
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

impl CliCommand {
    fn into_invocation(self) -> Result<Invocation> {
        let (task, args) = match self {
            CliCommand::ErrorSweep(a) => (Task::ErrorSweep, a),
            CliCommand::Interference(a) => (Task::Interference, a),
            CliCommand::Thresholds(a) => (Task::Thresholds, a),
            CliCommand::DistancePdf(a) => (Task::DistancePdf, a),
            CliCommand::McValidate(a) => (Task::McValidate, a),
        };
        let methods = args
            .methods
            .map(|ms| ms.iter().map(|m| Method::from_str(m)).collect())
            .transpose()?;
        Ok(Invocation {
            task,
            config_path: args.config,
            out: args.out,
            seed: args.seed,
            trials: args.trials,
            methods,
        })
    }
}

/// Binary entry point; exit code 1 means validation checks failed, 2 means
/// the run itself failed.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let inv = match cli.command.into_invocation() {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_invocation(&inv) {
        Ok(summary) => {
            for message in &summary.messages {
                println!("{message}");
            }
            println!(
                "wrote {} rows to {}",
                summary.rows,
                summary.out_path.display()
            );
            if summary.failures > 0 {
                eprintln!("{} cross-checks failed", summary.failures);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_standard_parameters() {
        let cfg = parse_config("").unwrap();
        let p = &cfg.params;
        assert_eq!(p.lambda_p, 2e-6);
        assert_eq!(p.channel.radius, 5.0);
        assert_eq!(p.y0_norm, 10.0);
        assert_eq!(p.channel.diffusion, 40.0);
        assert_eq!(p.channel.degradation, 0.1);
        assert_eq!(p.sigma, 20.0);
        assert_eq!(p.channel.slot, 0.5);
        assert_eq!(p.slots, 5);
        assert_eq!(p.constellation, vec![0.0, 60.0]);
        assert_eq!(p.noise_rate, 1.0);
        assert_eq!(cfg.methods, vec![Method::Exact]);
        assert_eq!(cfg.trials, 50_000);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.mode, ExclusionMode::AnalysisMatched);
        assert!(cfg.sweep.is_none());
        assert_eq!(cfg.resolved_box_half_width(), 125.0);
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "lambda_p_per_um3 = 4e-6\nsigma_um = 15\nL = 3\nmethods = exact,mc\n\
                    sweep_variable = T\nsweep_values = 0.5,1,1.5\nseed = 9\ntrials = 1234\n\
                    exclusion_mode = full_exclusion\n";
        let cfg = parse_config(text).unwrap();
        let canonical = cfg.resolved_text();
        let reparsed = parse_config(&canonical).unwrap();
        assert_eq!(canonical, reparsed.resolved_text());
        assert_eq!(reparsed.params.lambda_p, 4e-6);
        assert_eq!(reparsed.params.sigma, 15.0);
        assert_eq!(reparsed.params.slots, 3);
        assert_eq!(reparsed.methods, vec![Method::Exact, Method::MonteCarlo]);
        let sweep = reparsed.sweep.unwrap();
        assert_eq!(sweep.variable, SweepVariable::SlotDuration);
        assert_eq!(sweep.values, vec![0.5, 1.0, 1.5]);
        assert_eq!(reparsed.mode, ExclusionMode::FullExclusion);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(matches!(parse_config("no_such_key = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_config("L = 5\nL = 6"), Err(Error::Config(_))));
        assert!(matches!(parse_config("just a line"), Err(Error::Config(_))));
        assert!(matches!(
            parse_config("sweep_values = 1,2"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("sweep_variable = Q\nsweep_values = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("methods = exact,nope"),
            Err(Error::Config(_))
        ));
        assert!(matches!(parse_config("trials = 0"), Err(Error::Config(_))));
        assert!(matches!(parse_config("L = 0"), Err(Error::Domain(_))));
    }

    #[test]
    fn sweep_application_sets_the_right_field() {
        let base = SystemParams::default();
        assert_eq!(
            SweepVariable::SlotCount.apply(&base, 3.0).unwrap().slots,
            3
        );
        assert!(SweepVariable::SlotCount.apply(&base, 2.5).is_err());
        assert_eq!(
            SweepVariable::SlotDuration
                .apply(&base, 1.5)
                .unwrap()
                .channel
                .slot,
            1.5
        );
        assert_eq!(
            SweepVariable::ParentIntensity
                .apply(&base, 5e-6)
                .unwrap()
                .lambda_p,
            5e-6
        );
        assert_eq!(
            SweepVariable::OnAmplitude
                .apply(&base, 120.0)
                .unwrap()
                .constellation,
            vec![0.0, 120.0]
        );
        assert_eq!(
            SweepVariable::ClusterSpread.apply(&base, 25.0).unwrap().sigma,
            25.0
        );
        assert_eq!(
            SweepVariable::Diffusion
                .apply(&base, 10.0)
                .unwrap()
                .channel
                .diffusion,
            10.0
        );
        assert_eq!(
            SweepVariable::Degradation
                .apply(&base, 0.2)
                .unwrap()
                .channel
                .degradation,
            0.2
        );
        assert_eq!(
            SweepVariable::LinkDistance
                .apply(&base, 17.5)
                .unwrap()
                .y0_norm,
            17.5
        );
        let ternary = SystemParams {
            constellation: vec![0.0, 30.0, 60.0],
            ..SystemParams::default()
        };
        assert!(SweepVariable::OnAmplitude.apply(&ternary, 120.0).is_err());
    }

    #[test]
    fn error_sweep_emits_ordered_reproducible_csv() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("exp.conf");
        std::fs::write(
            &config_path,
            "lambda_p_per_um3 = 0\nsweep_variable = L\nsweep_values = 1,2\nmethods = exact,mc\ntrials = 400\n",
        )
        .unwrap();
        let inv = Invocation {
            task: Task::ErrorSweep,
            config_path: config_path.clone(),
            out: Some(dir.path().join("run.csv")),
            seed: Some(4),
            trials: None,
            methods: None,
        };
        let summary = run_invocation(&inv).unwrap();
        assert_eq!(summary.rows, 4);
        let text = std::fs::read_to_string(&summary.out_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("sweep_var,value,method,p_error,stderr,e_intra,e_inter,th_1,"));
        assert!(lines[0].ends_with(",status"));
        assert!(lines[1].starts_with("L,1,exact,"));
        assert!(lines[2].starts_with("L,1,mc,"));
        assert!(lines[3].starts_with("L,2,exact,"));
        assert!(lines[4].starts_with("L,2,mc,"));
        for line in &lines[1..] {
            assert!(line.ends_with(",ok"), "row not ok: {line}");
            let p_error: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&p_error));
        }
        // resolved parameters ride along on every row
        assert!(lines[1].contains(",0;60,"));
        assert!(lines[3].contains(",2,"));

        let meta = std::fs::read_to_string(meta_path(&summary.out_path)).unwrap();
        assert!(meta.contains("task = error-sweep"));
        assert!(meta.contains("lambda0_per_s = 1"));

        // byte-identical on re-run, also under a different worker count
        let rerun = run_invocation(&inv).unwrap();
        let text2 = std::fs::read_to_string(&rerun.out_path).unwrap();
        assert_eq!(text, text2);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        let third = pool.install(|| run_invocation(&inv)).unwrap();
        assert_eq!(text, std::fs::read_to_string(&third.out_path).unwrap());
    }

    #[test]
    fn ook_failure_is_recorded_per_row() {
        // defaults put the detector outside the single-threshold regime, so
        // the ook rows carry an error status while exact rows stay ok
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("exp.conf");
        std::fs::write(
            &config_path,
            "lambda_p_per_um3 = 0\nmethods = exact,ook\n",
        )
        .unwrap();
        let inv = Invocation {
            task: Task::ErrorSweep,
            config_path,
            out: Some(dir.path().join("run.csv")),
            seed: None,
            trials: None,
            methods: None,
        };
        let summary = run_invocation(&inv).unwrap();
        assert_eq!(summary.rows, 2);
        let text = std::fs::read_to_string(&summary.out_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("none,,exact,0."));
        assert!(lines[1].ends_with(",ok"));
        assert!(lines[2].starts_with("none,,ook,,"));
        assert!(lines[2].contains("regime"));
    }

    #[test]
    fn thresholds_task_tabulates_detector_design() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("exp.conf");
        std::fs::write(
            &config_path,
            "sweep_variable = x2\nsweep_values = 60,120\n",
        )
        .unwrap();
        let inv = Invocation {
            task: Task::Thresholds,
            config_path,
            out: Some(dir.path().join("th.csv")),
            seed: None,
            trials: None,
            methods: None,
        };
        let summary = run_invocation(&inv).unwrap();
        assert_eq!(summary.rows, 2);
        let text = std::fs::read_to_string(&summary.out_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let th = |line: &str| -> u32 { line.split(',').nth(7).unwrap().parse().unwrap() };
        let e_intra = |line: &str| -> f64 { line.split(',').nth(5).unwrap().parse().unwrap() };
        assert!(th(lines[2]) > th(lines[1]), "thresholds should grow with x2");
        assert!(e_intra(lines[2]) > e_intra(lines[1]));
        assert!(lines[1].ends_with(",ok"));
    }

    #[test]
    fn distance_pdf_grid_is_dense_and_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("exp.conf");
        std::fs::write(&config_path, "").unwrap();
        let inv = Invocation {
            task: Task::DistancePdf,
            config_path,
            out: Some(dir.path().join("pdf.csv")),
            seed: None,
            trials: None,
            methods: None,
        };
        let summary = run_invocation(&inv).unwrap();
        assert_eq!(summary.rows, 241);
        let text = std::fs::read_to_string(&summary.out_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "parent_distance_um,y_um,pdf,conditional_pdf"
        );
        let mut mass = 0.0;
        let step = 6.0 * 20.0 / 240.0;
        for line in lines {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells[0], 10.0);
            assert!(cells[2] >= 0.0 && cells[3] >= 0.0);
            mass += cells[2] * step;
        }
        // trapezoid-ish check that the grid really carries the density
        assert!((mass - 1.0).abs() < 0.01, "grid mass {mass}");
    }

    #[test]
    fn mc_validate_reports_checks() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("exp.conf");
        std::fs::write(&config_path, "trials = 2500\nseed = 19\n").unwrap();
        let inv = Invocation {
            task: Task::McValidate,
            config_path,
            out: Some(dir.path().join("val.csv")),
            seed: None,
            trials: None,
            methods: None,
        };
        let summary = run_invocation(&inv).unwrap();
        assert_eq!(summary.rows, 3);
        assert_eq!(summary.failures, 0, "messages: {:?}", summary.messages);
        assert_eq!(summary.messages.len(), 6);
        assert!(summary.messages.iter().all(|m| m.ends_with("PASS")));
        let text = std::fs::read_to_string(&summary.out_path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("none,,exact,"));
        assert!(text.contains("none,,upper,"));
        assert!(text.contains("none,,mc,"));
    }
}
