//! Diffusion channel: probability that a molecule released at distance d is
//! inside the receiver ball of radius r₀ after an elapsed time t, with
//! first-order degradation along the way.

use crate::numerics::special::{erf, erfc};
use crate::{Error, Result};

/// Physical channel constants, in micrometers and seconds.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    /// Diffusion coefficient D (μm²/s).
    pub diffusion: f64,
    /// Degradation rate μ (1/s).
    pub degradation: f64,
    /// Receiver (fusion center) radius r₀ (μm).
    pub radius: f64,
    /// Slot duration T (s).
    pub slot: f64,
}

impl ChannelParams {
    pub fn validate(&self) {
        assert!(self.diffusion > 0.0, "diffusion coefficient must be positive");
        assert!(self.degradation >= 0.0, "degradation rate must be non-negative");
        assert!(self.radius > 0.0, "receiver radius must be positive");
        assert!(self.slot > 0.0, "slot duration must be positive");
    }
}

/// Fraction of molecules (in expectation) found inside the receiver ball at
/// elapsed time `t` after release at distance `d` from its center:
///
/// g(t,d) = e^(−μt) · [ ½(erf((r₀−d)/2√(Dt)) + erf((r₀+d)/2√(Dt)))
///          + √(Dt/π)/d · (e^(−(r₀+d)²/4Dt) − e^(−(r₀−d)²/4Dt)) ]
///
/// i.e. the Gaussian heat kernel integrated over the ball, thinned by
/// degradation. The removable 1/d singularity is replaced by its analytic
/// limit for d below 1e−9 μm.
pub fn observation_probability_g(t: f64, d: f64, params: &ChannelParams) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("elapsed time must be positive, got {t}")));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    params.validate();
    let r0 = params.radius;
    let dt = params.diffusion * t;
    let s = 2.0 * dt.sqrt();
    let decay = (-params.degradation * t).exp();

    let raw = if d < 1e-9 {
        // d → 0 limit: erf(r₀/2√(Dt)) − r₀/√(πDt) · e^(−r₀²/4Dt)
        erf(r0 / s) - r0 / (std::f64::consts::PI * dt).sqrt() * (-r0 * r0 / (4.0 * dt)).exp()
    } else {
        let sym = if d <= r0 {
            0.5 * (erf((r0 - d) / s) + erf((r0 + d) / s))
        } else {
            // same quantity via erfc to keep relative accuracy when d ≫ r₀
            0.5 * (erfc((d - r0) / s) - erfc((d + r0) / s))
        };
        let diff = (dt / std::f64::consts::PI).sqrt() / d
            * ((-(r0 + d) * (r0 + d) / (4.0 * dt)).exp() - (-(r0 - d) * (r0 - d) / (4.0 * dt)).exp());
        sym + diff
    };

    let value = decay * raw;
    debug_assert!(value > -1e-12 && value < 1.0 + 1e-12, "g out of range: {value}");
    Ok(value.clamp(0.0, 1.0))
}

/// Observation probability for the transmission of slot `i` as seen at the
/// end of slot `L`: the elapsed time is (L − i + 1)·T. Valid for interfering
/// slots i ∈ {1, …, L−1}.
pub fn p_il(i: u32, l: u32, d: f64, params: &ChannelParams) -> Result<f64> {
    if i < 1 || i >= l {
        return Err(Error::Domain(format!(
            "interfering slot index must satisfy 1 <= i < L, got i={i}, L={l}"
        )));
    }
    slot_observation(i, l, d, params)
}

/// Observation probability for the current slot's own transmission (elapsed
/// time exactly T).
pub fn p_ll(d: f64, params: &ChannelParams) -> Result<f64> {
    observation_probability_g(params.slot, d, params)
}

/// g at the elapsed time of slot i ∈ {1, …, L} observed at the end of slot L;
/// i = L is the current slot. Shared by the interference integrals, where the
/// inter-cluster sums run over all L slots.
pub(crate) fn slot_observation(i: u32, l: u32, d: f64, params: &ChannelParams) -> Result<f64> {
    debug_assert!(i >= 1 && i <= l);
    let elapsed = (l - i + 1) as f64 * params.slot;
    observation_probability_g(elapsed, d, params)
}
