//! Threshold detector for the received molecule count.
//!
//! With every symbol's conditional count Poisson distributed (own signal via
//! the reference link plus mean interference plus noise), the ML rule over an
//! increasing constellation reduces to comparing the count against M−1
//! integer thresholds. The thresholds come from equating consecutive Poisson
//! likelihoods and taking the ceiling; the ON-OFF-keying regime boundary —
//! the largest amplitude for which a single-molecule threshold is optimal —
//! has a closed form in the Lambert W function.

use crate::channel::p_ll;
use crate::interference::{InterferenceStats, SystemParams};
use crate::numerics::special::{lambert_w, WBranch};
use crate::{Error, Result};

/// Decision thresholds th₁ ≤ … ≤ th_{M−1} together with the scalars they
/// were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorThresholds {
    pub th: Vec<u32>,
    /// Observation probability of the reference transmitter's slot.
    pub p_ll: f64,
    /// Expected total interference count E{I}.
    pub mean_interference: f64,
    /// Expected noise count λ₀T.
    pub noise_mean: f64,
}

impl DetectorThresholds {
    /// Background mean a = E{I} + λ₀T entering every threshold.
    pub fn background_mean(&self) -> f64 {
        self.mean_interference + self.noise_mean
    }
}

/// Thresholds from the raw scalars: for each adjacent symbol pair,
///
///   th_j = ⌈ p·(x_{j+1} − x_j) / ln((p·x_{j+1} + a) / (p·x_j + a)) ⌉
///
/// where p is the reference observation probability and a the background
/// mean. Quotients within 1e−12 (relative) of an integer are snapped to it
/// before the ceiling so quadrature noise in `a` cannot flip a threshold.
pub fn thresholds_from(p: f64, constellation: &[f64], a: f64) -> Result<Vec<u32>> {
    if !(p > 0.0) || p > 1.0 {
        return Err(Error::Domain(format!(
            "reference observation probability must lie in (0, 1], got {p}"
        )));
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("background mean must be >= 0, got {a}")));
    }
    let mut th = Vec::with_capacity(constellation.len().saturating_sub(1));
    for pair in constellation.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi == lo {
            return Err(Error::Domain(format!(
                "degenerate constellation pair ({lo}, {hi}): likelihoods coincide"
            )));
        }
        let denom = ((p * hi + a) / (p * lo + a)).ln();
        let q = p * (hi - lo) / denom;
        // denom = +inf when a = 0 and lo = 0: any nonzero count already
        // rules the low symbol out
        let q = if denom.is_infinite() { 0.0 } else { q };
        let snapped = q.round();
        let ceiled = if (q - snapped).abs() <= 1e-12 * q.abs().max(1.0) {
            snapped
        } else {
            q.ceil()
        };
        debug_assert!(ceiled < u32::MAX as f64, "threshold overflow: {ceiled}");
        th.push((ceiled.max(1.0)) as u32);
    }
    Ok(th)
}

/// Thresholds for a parameter set, with the background mean assembled from
/// the interference expectations and the noise rate.
pub fn compute_thresholds(
    params: &SystemParams,
    stats: &InterferenceStats,
) -> Result<DetectorThresholds> {
    params.validate()?;
    let p = p_ll(params.y0_norm, &params.channel)?;
    let noise_mean = params.noise_rate * params.channel.slot;
    let th = thresholds_from(p, &params.constellation, stats.e_total + noise_mean)?;
    Ok(DetectorThresholds {
        th,
        p_ll: p,
        mean_interference: stats.e_total,
        noise_mean,
    })
}

/// Decision rule: symbol index j (0-based) such that th_j ≤ y < th_{j+1},
/// with th₀ = 0 and th_M = ∞; a count equal to a threshold belongs to the
/// upper cell.
pub fn decide(y: u64, th: &DetectorThresholds) -> usize {
    th.th.iter().take_while(|&&t| t as u64 <= y).count()
}

/// ON-OFF-keying regime boundary ξ₀: with M = 2 and x₁ = 0, the detector
/// uses th₁ = 1 exactly when the ON amplitude ξ satisfies ξ < ξ₀, where
///
///   ξ₀ = −(a + W(−a e^{−a})) / p,    a = E{I} + λ₀T.
///
/// The W branch is the one giving the non-trivial root of
/// a·e^{pξ} = p·ξ + a: the non-principal branch for a < 1 (ξ₀ > 0) and the
/// principal branch for a > 1 (ξ₀ < 0: no positive amplitude keeps th₁ = 1).
/// At a = 1 both collapse to the branch point and ξ₀ = 0.
pub fn ook_regime_threshold_xi(params: &SystemParams, stats: &InterferenceStats) -> Result<f64> {
    if params.m() != 2 || params.constellation[0] != 0.0 {
        return Err(Error::Regime(
            "regime condition requires binary signaling with an OFF symbol of zero".into(),
        ));
    }
    let p = p_ll(params.y0_norm, &params.channel)?;
    let a = stats.e_total + params.noise_rate * params.channel.slot;
    if !(a > 0.0) {
        return Err(Error::Regime(
            "regime condition undefined for zero background mean".into(),
        ));
    }
    if (a - 1.0).abs() < 1e-12 {
        return Ok(0.0);
    }
    let branch = if a < 1.0 {
        WBranch::MinusOne
    } else {
        WBranch::Principal
    };
    let w = lambert_w(branch, -a * (-a).exp())
        .map_err(|e| Error::Regime(format!("regime condition undefined: {e}")))?;
    let xi = -(a + w) / p;
    // verify the defining equality a e^{p xi} = p xi + a by substitution
    let residual = (a * (p * xi).exp() - p * xi - a).abs();
    if residual > 1e-9 * a.max(1.0) {
        return Err(Error::Numerical(format!(
            "regime boundary failed the substitution check: residual {residual:e}"
        )));
    }
    Ok(xi)
}
