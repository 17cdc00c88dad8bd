//! Monte Carlo simulation of the clustered network: parent centers in a box,
//! Gaussian cluster members, per-slot transmissions, and Poisson reception.
//!
//! Each trial draws one network realization and one frame. The reported
//! interference values are the Poisson intensities seen by the receiver in
//! the detection slot, so their trial averages estimate the analytical
//! expectations directly, and `exp(-s·I)` averages estimate the Laplace
//! transform.
//!
//! Determinism: every trial seeds its own ChaCha8 stream from
//! `(seed, trial index)` and the reduction over trials is sequential, so
//! results are byte-identical regardless of how many rayon workers run the
//! trials.

use crate::channel::{p_ll, slot_observation};
use crate::detector::{decide, DetectorThresholds};
use crate::interference::SystemParams;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

const REJECTION_CAP: u64 = 1_000_000;

/// Which exclusion constraints the sampled network honors.
///
/// `AnalysisMatched` reproduces the conditioning used by the analytical
/// expressions: cluster centers thinned outside a ball of radius 2r₀ around
/// the receiver, and every transmitting member conditioned only on lying
/// outside the receiver ball of radius r₀. `FullExclusion` additionally keeps
/// centers a hard-core distance 2r₀ apart and members outside every cluster
/// ball, which is the physically complete placement the analysis
/// approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionMode {
    AnalysisMatched,
    FullExclusion,
}

impl std::fmt::Display for ExclusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExclusionMode::AnalysisMatched => "analysis_matched",
            ExclusionMode::FullExclusion => "full_exclusion",
        })
    }
}

impl std::str::FromStr for ExclusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analysis_matched" => Ok(ExclusionMode::AnalysisMatched),
            "full_exclusion" => Ok(ExclusionMode::FullExclusion),
            other => Err(Error::Config(format!(
                "unknown exclusion mode {other:?} (expected analysis_matched or full_exclusion)"
            ))),
        }
    }
}

/// One Monte Carlo campaign: network parameters plus sampling controls.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub params: SystemParams,
    /// Half the side length of the cube that carries interfering clusters.
    pub box_half_width: f64,
    pub trials: u64,
    pub mode: ExclusionMode,
    pub seed: u64,
}

impl TrialConfig {
    /// Defaults: a cube reaching 25·r₀ in every axis direction (the channel
    /// is negligible far before that) and 50 000 trials.
    pub fn new(params: SystemParams, seed: u64) -> Self {
        let half_width = 25.0 * params.r0();
        Self {
            params,
            box_half_width: half_width,
            trials: 50_000,
            mode: ExclusionMode::AnalysisMatched,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(Error::Domain("need at least one trial".into()));
        }
        if !(self.box_half_width > 2.0 * self.params.r0()) {
            return Err(Error::Domain(format!(
                "box half-width {} does not reach past the exclusion radius {}",
                self.box_half_width,
                2.0 * self.params.r0()
            )));
        }
        Ok(())
    }
}

/// Sample mean and standard error of `exp(-s·I_total)` over trials.
#[derive(Debug, Clone, Copy)]
pub struct LtEstimate {
    pub s: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Interference intensity statistics accumulated over trials.
#[derive(Debug, Clone)]
pub struct InterferenceEstimate {
    pub trials: u64,
    pub mean_intra: f64,
    pub intra_stderr: f64,
    pub mean_inter: f64,
    pub inter_stderr: f64,
    pub lt_points: Vec<LtEstimate>,
}

/// Full error-rate campaign result.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    /// Binomial standard error √(p̂(1−p̂)/n).
    pub error_stderr: f64,
    /// Error rate conditioned on each transmitted symbol (NaN if a symbol
    /// was never drawn).
    pub per_symbol_error: Vec<f64>,
    pub per_symbol_count: Vec<u64>,
    pub interference: InterferenceEstimate,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn norm_sq(a: &[f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Draw the interfering cluster centers for one trial: a Poisson number of
/// uniform points in the box, with centers closer than 2r₀ to the receiver
/// removed (`AnalysisMatched`) or re-drawn until they also keep 2r₀ from
/// each other (`FullExclusion`).
fn sample_parents(
    params: &SystemParams,
    half_width: f64,
    mode: ExclusionMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 3]>> {
    let side = 2.0 * half_width;
    let mean = params.lambda_p * side * side * side;
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(mean)
        .map_err(|e| Error::Domain(format!("invalid parent intensity: {e}")))?
        .sample(rng) as u64;
    let hard_core_sq = (2.0 * params.r0()).powi(2);
    let mut parents = Vec::with_capacity(count as usize);
    match mode {
        ExclusionMode::AnalysisMatched => {
            for _ in 0..count {
                let p = uniform_point(half_width, rng);
                if norm_sq(&p) > hard_core_sq {
                    parents.push(p);
                }
            }
        }
        ExclusionMode::FullExclusion => {
            'outer: for _ in 0..count {
                for _ in 0..REJECTION_CAP {
                    let p = uniform_point(half_width, rng);
                    if norm_sq(&p) > hard_core_sq
                        && parents.iter().all(|q| dist_sq(&p, q) > hard_core_sq)
                    {
                        parents.push(p);
                        continue 'outer;
                    }
                }
                return Err(Error::RejectionCap { cap: REJECTION_CAP });
            }
        }
    }
    Ok(parents)
}

fn uniform_point(half_width: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.gen_range(-half_width..half_width),
        rng.gen_range(-half_width..half_width),
        rng.gen_range(-half_width..half_width),
    ]
}

/// Gaussian member position around `center`, re-drawn until `accept` holds.
fn sample_member(
    center: &[f64; 3],
    sigma: f64,
    accept: impl Fn(&[f64; 3]) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 3]> {
    for _ in 0..REJECTION_CAP {
        let pos = [
            center[0] + sigma * rng.sample::<f64, _>(StandardNormal),
            center[1] + sigma * rng.sample::<f64, _>(StandardNormal),
            center[2] + sigma * rng.sample::<f64, _>(StandardNormal),
        ];
        if accept(&pos) {
            return Ok(pos);
        }
    }
    Err(Error::RejectionCap { cap: REJECTION_CAP })
}

struct TrialOutcome {
    intra: f64,
    inter: f64,
    symbol: usize,
    decided: usize,
}

struct TrialContext<'a> {
    params: &'a SystemParams,
    mode: ExclusionMode,
    half_width: f64,
    /// Signal observation probability of the reference link.
    p_ref: f64,
    noise_mean: f64,
    thresholds: Option<&'a DetectorThresholds>,
}

/// One network realization and one frame. Draw order (fixed for
/// reproducibility): cluster centers, then the reference cluster's earlier
/// slots, then every interferer slot, then the reference symbol and the
/// received count when a detector is attached.
fn simulate_trial(ctx: &TrialContext<'_>, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let params = ctx.params;
    let l = params.slots;
    let m = params.m();
    let r0_sq = params.r0() * params.r0();
    let origin = [0.0, 0.0, 0.0];

    let parents = sample_parents(params, ctx.half_width, ctx.mode, rng)?;
    let member_ok = |pos: &[f64; 3]| -> bool {
        if norm_sq(pos) <= r0_sq {
            return false;
        }
        match ctx.mode {
            ExclusionMode::AnalysisMatched => true,
            ExclusionMode::FullExclusion => {
                parents.iter().all(|q| dist_sq(pos, q) > r0_sq)
            }
        }
    };

    // reference cluster: one member per earlier slot, fresh position each
    // time, symbols uniform over the constellation
    let mut intra = 0.0;
    for i in 1..l {
        let x = params.constellation[rng.gen_range(0..m)];
        if x == 0.0 {
            continue;
        }
        let pos = sample_member(&origin, params.sigma, &member_ok, rng)?;
        let d = norm_sq(&pos).sqrt();
        intra += x * slot_observation(i, l, d, &params.channel)?;
    }

    // interfering clusters transmit in every slot, including the detection
    // slot, again from a fresh member each time
    let mut inter = 0.0;
    for parent in &parents {
        for i in 1..=l {
            let x = params.constellation[rng.gen_range(0..m)];
            if x == 0.0 {
                continue;
            }
            let pos = sample_member(parent, params.sigma, &member_ok, rng)?;
            let d = norm_sq(&pos).sqrt();
            inter += x * slot_observation(i, l, d, &params.channel)?;
        }
    }

    let (symbol, decided) = match ctx.thresholds {
        None => (0, 0),
        Some(th) => {
            let j = rng.gen_range(0..m);
            let mean = ctx.p_ref * params.constellation[j] + intra + inter + ctx.noise_mean;
            let y = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::Numerical(format!("received intensity {mean}: {e}")))?
                    .sample(rng) as u64
            } else {
                0
            };
            (j, decide(y, th))
        }
    };

    Ok(TrialOutcome {
        intra,
        inter,
        symbol,
        decided,
    })
}

fn run_trials(
    config: &TrialConfig,
    thresholds: Option<&DetectorThresholds>,
    lt_args: &[f64],
) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    for &s in lt_args {
        if !s.is_finite() {
            return Err(Error::Domain(format!("transform argument {s} not finite")));
        }
    }
    let ctx = TrialContext {
        params: &config.params,
        mode: config.mode,
        half_width: config.box_half_width,
        p_ref: p_ll(config.params.y0_norm, &config.params.channel)?,
        noise_mean: config.params.noise_rate * config.params.channel.slot,
        thresholds,
    };
    (0..config.trials)
        .into_par_iter()
        .map(|t| simulate_trial(&ctx, &mut trial_rng(config.seed, t)))
        .collect()
}

/// Sequential two-pass mean and standard error of the mean.
fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: u64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / ((n - 1) as f64 * n as f64)).sqrt())
}

fn reduce_interference(
    outcomes: &[TrialOutcome],
    lt_args: &[f64],
) -> InterferenceEstimate {
    let n = outcomes.len() as u64;
    let (mean_intra, intra_stderr) = mean_and_stderr(outcomes.iter().map(|o| o.intra), n);
    let (mean_inter, inter_stderr) = mean_and_stderr(outcomes.iter().map(|o| o.inter), n);
    let lt_points = lt_args
        .iter()
        .map(|&s| {
            let (value, stderr) =
                mean_and_stderr(outcomes.iter().map(|o| (-s * (o.intra + o.inter)).exp()), n);
            LtEstimate { s, value, stderr }
        })
        .collect();
    InterferenceEstimate {
        trials: n,
        mean_intra,
        intra_stderr,
        mean_inter,
        inter_stderr,
        lt_points,
    }
}

/// Estimate the interference intensities (and optionally the Laplace
/// transform of their sum at the given arguments) without simulating
/// detection.
pub fn estimate_interference_stats(
    config: &TrialConfig,
    lt_args: &[f64],
) -> Result<InterferenceEstimate> {
    let outcomes = run_trials(config, None, lt_args)?;
    Ok(reduce_interference(&outcomes, lt_args))
}

/// Simulate full frames against the given detector and tally symbol errors.
pub fn run_error_trials(
    config: &TrialConfig,
    thresholds: &DetectorThresholds,
    lt_args: &[f64],
) -> Result<SimResult> {
    let m = config.params.m();
    if thresholds.th.len() + 1 != m {
        return Err(Error::Config(format!(
            "{} thresholds cannot partition {} symbols",
            thresholds.th.len(),
            m
        )));
    }
    let outcomes = run_trials(config, Some(thresholds), lt_args)?;
    let n = outcomes.len() as u64;
    let mut errors = 0u64;
    let mut per_symbol_errors = vec![0u64; m];
    let mut per_symbol_count = vec![0u64; m];
    for o in &outcomes {
        per_symbol_count[o.symbol] += 1;
        if o.decided != o.symbol {
            errors += 1;
            per_symbol_errors[o.symbol] += 1;
        }
    }
    let error_rate = errors as f64 / n as f64;
    let per_symbol_error = per_symbol_errors
        .iter()
        .zip(&per_symbol_count)
        .map(|(&e, &c)| e as f64 / c as f64)
        .collect();
    Ok(SimResult {
        trials: n,
        errors,
        error_rate,
        error_stderr: (error_rate * (1.0 - error_rate) / n as f64).sqrt(),
        per_symbol_error,
        per_symbol_count,
        interference: reduce_interference(&outcomes, lt_args),
    })
}
