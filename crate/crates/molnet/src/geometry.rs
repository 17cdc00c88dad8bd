//! Distance distributions from a cluster's offspring points to the origin,
//! conditioned on the parent's distance: the general double-integral form for
//! any isotropic offspring density, the Gaussian (Thomas process) closed
//! form, and its Maxwell limit for the cluster at the origin.

use crate::numerics::quadrature::{integrate, integrate_semi_infinite_scaled};
use crate::numerics::IntegrationSpec;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Density of a single offspring's displacement from its parent.
#[derive(Clone)]
pub enum OffspringDensity {
    /// Isotropic Gaussian with per-axis standard deviation σ.
    Gaussian { sigma: f64 },
    /// Arbitrary density of the displacement vector. The distance-PDF
    /// machinery requires `isotropic` (density depends on the displacement
    /// only through its norm); set the flag accordingly.
    Custom {
        evaluator: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
        isotropic: bool,
    },
}

impl std::fmt::Debug for OffspringDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian { sigma } => write!(f, "Gaussian {{ sigma: {sigma} }}"),
            Self::Custom { isotropic, .. } => write!(f, "Custom {{ isotropic: {isotropic} }}"),
        }
    }
}

impl OffspringDensity {
    pub fn density(&self, y1: f64, y2: f64, y3: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => {
                let norm2 = y1 * y1 + y2 * y2 + y3 * y3;
                (-norm2 / (2.0 * sigma * sigma)).exp()
                    / ((2.0 * std::f64::consts::PI).powf(1.5) * sigma.powi(3))
            }
            Self::Custom { evaluator, .. } => evaluator(y1, y2, y3),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        match self {
            Self::Gaussian { .. } => true,
            Self::Custom { isotropic, .. } => *isotropic,
        }
    }

    /// ∫_ℝ³ f_Y via the radial integral 4π ∫ r² f(r) dr (isotropic only);
    /// `length_scale` sizes the first quadrature panel.
    pub fn normalization(&self, length_scale: f64, spec: &IntegrationSpec) -> Result<f64> {
        if !self.is_isotropic() {
            return Err(Error::Domain(
                "normalization check implemented for isotropic densities only".into(),
            ));
        }
        integrate_semi_infinite_scaled(
            |r| 4.0 * std::f64::consts::PI * r * r * self.density(r, 0.0, 0.0),
            0.0,
            8.0 * length_scale,
            spec,
        )
    }
}

/// Distance PDF of an offspring point to the origin given its parent sits at
/// distance `parent_distance`, for an arbitrary isotropic offspring density:
///
/// f_d(y | a) = ∫_{−y}^{y} ∫ [y/√(y²−z₁²−z₂²)] [f_Y(z₁−a, z₂, +z₃) + f_Y(z₁−a, z₂, −z₃)] dz₂ dz₁
///
/// with z₃ = √(y²−z₁²−z₂²). The substitution z₂ = ρ sin θ (ρ = √(y²−z₁²))
/// turns the inverse-square-root edge weight into a constant — the integrand
/// in θ is bounded and smooth, so plain adaptive quadrature applies.
pub fn distance_pdf_general(
    y: f64,
    parent_distance: f64,
    f_y: &OffspringDensity,
    spec: &IntegrationSpec,
) -> Result<f64> {
    if y < 0.0 || parent_distance < 0.0 {
        return Err(Error::Domain(format!(
            "distances must be non-negative, got y={y}, parent={parent_distance}"
        )));
    }
    if !f_y.is_isotropic() {
        return Err(Error::Domain(
            "general distance PDF requires an isotropic offspring density".into(),
        ));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let outer = integrate(
        |z1| {
            let rho = ((y - z1) * (y + z1)).max(0.0).sqrt();
            let inner = integrate(
                |theta| {
                    let z2 = rho * theta.sin();
                    let z3 = rho * theta.cos();
                    f_y.density(z1 - parent_distance, z2, z3)
                        + f_y.density(z1 - parent_distance, z2, -z3)
                },
                -half_pi,
                half_pi,
                spec,
            );
            match inner {
                Ok(v) => y * v,
                Err(_) => f64::NAN, // surfaces as a quadrature failure outside
            }
        },
        -y,
        y,
        spec,
    )?;
    Ok(outer.max(0.0))
}

/// Gaussian-cluster closed form of the distance PDF for a parent at distance
/// `parent_distance` > 0:
///
/// f_d(y | a) = y/(√(2π) σ a) · [exp(−(y−a)²/2σ²) − exp(−(y+a)²/2σ²)]
///
/// evaluated as exp(−(y−a)²/2σ²)·(1 − exp(−2ya/σ²)) so the bracket never
/// cancels and nothing overflows for y, a ≫ σ.
pub fn distance_pdf_tcp(y: f64, parent_distance: f64, sigma: f64) -> Result<f64> {
    if parent_distance <= 0.0 {
        return Err(Error::Domain(
            "closed form needs parent_distance > 0; use the origin form at 0".into(),
        ));
    }
    if !(sigma > 0.0) || y < 0.0 {
        return Err(Error::Domain(format!(
            "need sigma > 0 and y >= 0, got sigma={sigma}, y={y}"
        )));
    }
    let a = parent_distance;
    let gauss = (-(y - a) * (y - a) / (2.0 * sigma * sigma)).exp();
    let bracket = -(-2.0 * y * a / (sigma * sigma)).exp_m1();
    Ok(y / ((2.0 * std::f64::consts::PI).sqrt() * sigma * a) * gauss * bracket)
}

/// Distance PDF for the cluster centered at the origin (Maxwell form):
/// f_d(y | 0) = √(2/π) · y²/σ³ · exp(−y²/2σ²).
pub fn distance_pdf_origin_tcp(y: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || y < 0.0 {
        return Err(Error::Domain(format!(
            "need sigma > 0 and y >= 0, got sigma={sigma}, y={y}"
        )));
    }
    Ok(SQRT_2_OVER_PI * y * y / sigma.powi(3) * (-y * y / (2.0 * sigma * sigma)).exp())
}

/// Gaussian-cluster distance distribution together with the probability mass
/// lying beyond the receiver ball (offspring may not sit inside it).
#[derive(Debug, Clone)]
pub struct DistanceDistribution {
    pub parent_distance: f64,
    pub sigma: f64,
    /// Radius of the excluded ball at the origin.
    pub exclusion_radius: f64,
    /// ∫_{r₀}^∞ f_d(y | parent) dy, the conditioning constant.
    pub normalizer_beyond_r0: f64,
}

impl DistanceDistribution {
    /// Builds the distribution for a Gaussian cluster, computing the
    /// beyond-the-ball normalizer by quadrature.
    pub fn tcp(
        parent_distance: f64,
        sigma: f64,
        exclusion_radius: f64,
        spec: &IntegrationSpec,
    ) -> Result<Self> {
        if parent_distance < 0.0 || !(sigma > 0.0) || exclusion_radius < 0.0 {
            return Err(Error::Domain(format!(
                "invalid distribution parameters: parent={parent_distance}, sigma={sigma}, r0={exclusion_radius}"
            )));
        }
        let mut dist = Self {
            parent_distance,
            sigma,
            exclusion_radius,
            normalizer_beyond_r0: 1.0,
        };
        dist.normalizer_beyond_r0 = survival_beyond(exclusion_radius, &dist, spec)?;
        if dist.normalizer_beyond_r0 <= 0.0 {
            return Err(Error::Numerical(format!(
                "no probability mass beyond the exclusion ball (parent={parent_distance}, sigma={sigma})"
            )));
        }
        Ok(dist)
    }

    /// Unconditioned distance PDF.
    pub fn pdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        if self.parent_distance == 0.0 {
            distance_pdf_origin_tcp(y, self.sigma).unwrap_or(0.0)
        } else {
            distance_pdf_tcp(y, self.parent_distance, self.sigma).unwrap_or(0.0)
        }
    }

    /// PDF conditioned on the point lying outside the exclusion ball.
    pub fn conditional_pdf(&self, y: f64) -> f64 {
        if y <= self.exclusion_radius {
            0.0
        } else {
            self.pdf(y) / self.normalizer_beyond_r0
        }
    }
}

/// Tail mass ∫_r^∞ of the distance PDF.
pub fn survival_beyond(r: f64, dist: &DistanceDistribution, spec: &IntegrationSpec) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::Domain(format!("tail start must be >= 0, got {r}")));
    }
    // first panel must cover the bump at y ≈ parent_distance
    let scale = (dist.parent_distance + 8.0 * dist.sigma - r).max(dist.sigma);
    let v = integrate_semi_infinite_scaled(|y| dist.pdf(y), r, scale, spec)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Draws a distance from the cluster's offspring law conditioned on lying
/// outside the exclusion ball, by rejection from the unconditioned 3D
/// Gaussian offset sampler.
pub fn sample_distance<R: Rng + ?Sized>(dist: &DistanceDistribution, rng: &mut R) -> Result<f64> {
    const CAP: u64 = 1_000_000;
    for _ in 0..CAP {
        let dy: f64 = rng.sample::<f64, _>(StandardNormal) * dist.sigma;
        let dz: f64 = rng.sample::<f64, _>(StandardNormal) * dist.sigma;
        let dx: f64 = rng.sample::<f64, _>(StandardNormal) * dist.sigma;
        let z = dist.parent_distance + dz;
        let norm = (dx * dx + dy * dy + z * z).sqrt();
        if norm > dist.exclusion_radius {
            return Ok(norm);
        }
    }
    Err(Error::RejectionCap { cap: CAP })
}
