//! Expected interference and the Laplace transform of the interference seen
//! by the reference fusion center, with the transform's derivatives at s = 1.
//!
//! Interference splits into an intra-cluster part (the reference cluster's
//! own earlier slots still diffusing in) and an inter-cluster part (all other
//! clusters, averaged over the parent point process). Both reduce to
//! integrals of the slot observation probabilities against the offspring
//! distance distributions; the derivatives expand combinatorially over
//! compositions (product rule) and partitions (Faà di Bruno).

use crate::channel::{p_ll, slot_observation, ChannelParams};
use crate::geometry::{distance_pdf_origin_tcp, distance_pdf_tcp};
use crate::numerics::combinatorics::{
    composition_count, factorial, for_each_composition, for_each_partition_multiplicity,
    multinomial, partition_count,
};
use crate::numerics::quadrature::integrate_semi_infinite_scaled;
use crate::numerics::IntegrationSpec;
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Network-level parameters on top of the physical channel, in micrometers
/// and seconds.
#[derive(Debug, Clone)]
pub struct SystemParams {
    /// Parent (cluster center) intensity λ_p (μm⁻³).
    pub lambda_p: f64,
    /// Offspring displacement standard deviation σ (μm).
    pub sigma: f64,
    pub channel: ChannelParams,
    /// Frame length L in slots; the decision is made at the end of slot L.
    pub slots: u32,
    /// Constellation x₁ < … < x_M of per-symbol molecule counts.
    pub constellation: Vec<f64>,
    /// Noise molecule arrival rate λ₀ (1/s).
    pub noise_rate: f64,
    /// Distance of the reference transmitter from its fusion center (μm).
    pub y0_norm: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            lambda_p: 2e-6,
            sigma: 20.0,
            channel: ChannelParams {
                diffusion: 40.0,
                degradation: 0.1,
                radius: 5.0,
                slot: 0.5,
            },
            slots: 5,
            constellation: vec![0.0, 60.0],
            noise_rate: 1.0,
            y0_norm: 10.0,
        }
    }
}

impl SystemParams {
    pub fn r0(&self) -> f64 {
        self.channel.radius
    }

    /// Constellation size M.
    pub fn m(&self) -> usize {
        self.constellation.len()
    }

    /// Mean transmitted molecule count x̄ under equiprobable symbols.
    pub fn mean_symbol(&self) -> f64 {
        self.constellation.iter().sum::<f64>() / self.m() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if !(self.lambda_p >= 0.0) || !self.lambda_p.is_finite() {
            return bad(format!("parent intensity must be >= 0, got {}", self.lambda_p));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("cluster spread must be positive, got {}", self.sigma));
        }
        if self.slots < 1 {
            return bad("frame must have at least one slot".into());
        }
        if self.m() < 2 {
            return bad("constellation needs at least two symbols".into());
        }
        if self.constellation[0] < 0.0 {
            return bad("molecule counts cannot be negative".into());
        }
        if !self.constellation.windows(2).all(|w| w[0] < w[1]) {
            return bad("constellation must be strictly increasing".into());
        }
        if !(self.y0_norm > self.r0()) {
            return bad(format!(
                "reference transmitter distance {} must exceed the receiver radius {}",
                self.y0_norm,
                self.r0()
            ));
        }
        if !(self.noise_rate >= 0.0) || !self.noise_rate.is_finite() {
            return bad(format!("noise rate must be >= 0, got {}", self.noise_rate));
        }
        self.channel.validate();
        Ok(())
    }
}

/// Expected interference molecule counts at the decision instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceStats {
    pub e_intra: f64,
    pub e_inter: f64,
    pub e_total: f64,
}

/// Guard against combinatorial blow-up of the derivative expansions.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeBudget {
    pub max_order: u32,
    pub max_terms: u128,
}

impl Default for DerivativeBudget {
    fn default() -> Self {
        Self {
            max_order: 30,
            max_terms: 10_000_000,
        }
    }
}

/// Moment integrals of one cluster at parent distance x, all conditioned on
/// offspring lying beyond r₀ only via the shared `normalizer`:
///
///   b[i−1][q] = ∫_{r₀}^∞ p_i(y)^q Σ_j x_j^q e^{−s x_j p_i(y)} f_d(y|x) dy
///
/// for slots i = 1…L. Row L is only meaningful for inter-cluster terms.
///
/// `deficits[i−1]` holds M·normalizer − b[i−1][0] integrated directly via
/// expm1. Far from the receiver b[i][0]/(M·normalizer) → 1 and the
/// subtraction 1 − Π b/(M·n) loses every significant digit exactly where the
/// x² weight of the outer integral is largest; the deficit form keeps full
/// relative precision there.
struct ConditionalMoments {
    normalizer: f64,
    b: Vec<Vec<f64>>,
    deficits: Vec<f64>,
}

/// Analytic interference engine for one parameter set. Caches the moment
/// integrals keyed on the exact bits of (parent distance, transform
/// argument) so the adaptive outer integrals see a deterministic integrand
/// and repeated passes at the same abscissae are free.
pub struct InterferenceModel {
    params: SystemParams,
    outer_spec: IntegrationSpec,
    inner_spec: IntegrationSpec,
    budget: DerivativeBudget,
    moments: RwLock<HashMap<(u64, u64), Arc<ConditionalMoments>>>,
}

impl InterferenceModel {
    pub fn new(params: SystemParams, spec: IntegrationSpec) -> Result<Self> {
        params.validate()?;
        spec.validate();
        // inner integrals two decades tighter so their residual error stays
        // below what the outer adaptive pass tries to resolve
        let inner_spec = IntegrationSpec {
            abs_tol: spec.abs_tol * 1e-2,
            rel_tol: spec.rel_tol * 1e-2,
            ..spec
        };
        Ok(Self {
            params,
            outer_spec: spec,
            inner_spec,
            budget: DerivativeBudget::default(),
            moments: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn set_budget(&mut self, budget: DerivativeBudget) {
        self.budget = budget;
    }

    pub fn budget(&self) -> DerivativeBudget {
        self.budget
    }

    /// Observation probability of the reference transmitter's own slot.
    pub fn p_ll_reference(&self) -> Result<f64> {
        p_ll(self.params.y0_norm, &self.params.channel)
    }

    fn pdf_at(&self, x: f64, y: f64) -> f64 {
        if x == 0.0 {
            distance_pdf_origin_tcp(y, self.params.sigma).unwrap_or(f64::NAN)
        } else {
            distance_pdf_tcp(y, x, self.params.sigma).unwrap_or(f64::NAN)
        }
    }

    /// First quadrature panel must reach past the distance-PDF bump at y ≈ x.
    fn inner_scale(&self, x: f64) -> f64 {
        (x + 8.0 * self.params.sigma - self.params.r0()).max(self.params.sigma)
    }

    fn moment_data(&self, x: f64, s: f64, qmax: u32) -> Result<Arc<ConditionalMoments>> {
        let key = (x.to_bits(), s.to_bits());
        if let Some(hit) = self.moments.read().unwrap().get(&key) {
            if hit.b[0].len() > qmax as usize {
                return Ok(Arc::clone(hit));
            }
        }
        let p = &self.params;
        let r0 = p.r0();
        let scale = self.inner_scale(x);
        let normalizer =
            integrate_semi_infinite_scaled(|y| self.pdf_at(x, y), r0, scale, &self.inner_spec)?;
        if !(normalizer > 0.0) {
            return Err(Error::Numerical(format!(
                "distance distribution has no mass beyond the receiver at parent distance {x}"
            )));
        }
        let l = p.slots;
        let mut b = Vec::with_capacity(l as usize);
        let mut deficits = Vec::with_capacity(l as usize);
        for i in 1..=l {
            let mut row = Vec::with_capacity(qmax as usize + 1);
            for q in 0..=qmax {
                let v = integrate_semi_infinite_scaled(
                    |y| {
                        let pi = slot_observation(i, l, y, &p.channel).unwrap_or(f64::NAN);
                        let mut sum = 0.0;
                        for &xj in &p.constellation {
                            sum += xj.powi(q as i32) * (-s * xj * pi).exp();
                        }
                        self.pdf_at(x, y) * pi.powi(q as i32) * sum
                    },
                    r0,
                    scale,
                    &self.inner_spec,
                )?;
                row.push(v);
            }
            b.push(row);
            let d = integrate_semi_infinite_scaled(
                |y| {
                    let pi = slot_observation(i, l, y, &p.channel).unwrap_or(f64::NAN);
                    let mut sum = 0.0;
                    for &xj in &p.constellation {
                        sum -= (-s * xj * pi).exp_m1();
                    }
                    self.pdf_at(x, y) * sum
                },
                r0,
                scale,
                &self.inner_spec,
            )?;
            deficits.push(d);
        }
        let data = Arc::new(ConditionalMoments { normalizer, b, deficits });
        self.moments
            .write()
            .unwrap()
            .insert(key, Arc::clone(&data));
        Ok(data)
    }

    /// Expected intra-cluster interference: the reference cluster's other
    /// transmitters (mean count x̄, distance law f_d(y|0) conditioned beyond
    /// r₀) observed through the L−1 earlier slots.
    pub fn expected_intra(&self) -> Result<f64> {
        let p = &self.params;
        if p.slots == 1 {
            return Ok(0.0);
        }
        let n0 = self.moment_data(0.0, 1.0, 0)?.normalizer;
        let l = p.slots;
        let sum = integrate_semi_infinite_scaled(
            |y| {
                let mut acc = 0.0;
                for i in 1..l {
                    acc += slot_observation(i, l, y, &p.channel).unwrap_or(f64::NAN);
                }
                self.pdf_at(0.0, y) * acc
            },
            p.r0(),
            self.inner_scale(0.0),
            &self.inner_spec,
        )?;
        Ok(p.mean_symbol() * sum / n0)
    }

    /// Expected inter-cluster interference: clusters centered from 2r₀
    /// outward, every one of the L slots contributing.
    pub fn expected_inter(&self) -> Result<f64> {
        let p = &self.params;
        if p.lambda_p == 0.0 {
            return Ok(0.0);
        }
        let l = p.slots;
        let outer = integrate_semi_infinite_scaled(
            |x| {
                let scale = self.inner_scale(x);
                let n_x = integrate_semi_infinite_scaled(
                    |y| self.pdf_at(x, y),
                    p.r0(),
                    scale,
                    &self.inner_spec,
                );
                let num = integrate_semi_infinite_scaled(
                    |y| {
                        let mut acc = 0.0;
                        for i in 1..=l {
                            acc += slot_observation(i, l, y, &p.channel).unwrap_or(f64::NAN);
                        }
                        self.pdf_at(x, y) * acc
                    },
                    p.r0(),
                    scale,
                    &self.inner_spec,
                );
                match (num, n_x) {
                    (Ok(v), Ok(n)) if n > 0.0 => x * x * v / n,
                    _ => f64::NAN,
                }
            },
            2.0 * p.r0(),
            10.0 * p.sigma,
            &self.outer_spec,
        )?;
        Ok(4.0 * std::f64::consts::PI * p.lambda_p * p.mean_symbol() * outer)
    }

    pub fn interference_stats(&self) -> Result<InterferenceStats> {
        let e_intra = self.expected_intra()?;
        let e_inter = self.expected_inter()?;
        Ok(InterferenceStats {
            e_intra,
            e_inter,
            e_total: e_intra + e_inter,
        })
    }

    fn check_transform_argument(s: f64) -> Result<()> {
        // small negative s is admitted: every factor is finite there and the
        // finite-difference consistency checks need to straddle s = 0
        if !s.is_finite() || s < -0.5 {
            return Err(Error::Domain(format!(
                "transform argument must be finite and >= -0.5, got {s}"
            )));
        }
        Ok(())
    }

    /// Laplace transform of intra-cluster interference,
    /// Π_{i=1}^{L−1} E{ exp(−s x_J p_iL(y)) } with (J, y) the random symbol
    /// and conditioned distance of each co-cluster transmitter.
    pub fn lt_intra(&self, s: f64) -> Result<f64> {
        Self::check_transform_argument(s)?;
        let p = &self.params;
        if p.slots == 1 {
            return Ok(1.0);
        }
        let md = self.moment_data(0.0, s, 0)?;
        let denom = p.m() as f64 * md.normalizer;
        let mut prod = 1.0;
        for i in 0..(p.slots - 1) as usize {
            prod *= md.b[i][0] / denom;
        }
        Ok(prod)
    }

    /// Laplace transform of inter-cluster interference via the generating
    /// functional of the parent process:
    /// exp(−4πλ_p ∫_{2r₀}^∞ (1 − Π_i E{e^{−s x_J p_iL}} ) x² dx).
    pub fn lt_inter(&self, s: f64) -> Result<f64> {
        Self::check_transform_argument(s)?;
        let p = &self.params;
        if p.lambda_p == 0.0 || s == 0.0 {
            return Ok(1.0);
        }
        // 1 − Π (1 − uᵢ) telescoped as Σ uᵢ Π_{j<i} (1 − uⱼ): every addend has
        // the sign of s, so the far tail (uᵢ → 0) keeps relative precision
        // that the direct subtraction from 1 would destroy
        let exponent = self.inter_exponent_integral(|md| {
            let denom = p.m() as f64 * md.normalizer;
            let mut remaining = 1.0;
            let mut acc = 0.0;
            for &d in &md.deficits {
                let u = d / denom;
                acc += remaining * u;
                remaining *= 1.0 - u;
            }
            acc
        }, s, 0)?;
        Ok((-4.0 * std::f64::consts::PI * p.lambda_p * exponent).exp())
    }

    pub fn lt_total(&self, s: f64) -> Result<f64> {
        Ok(self.lt_intra(s)? * self.lt_inter(s)?)
    }

    /// ∫_{2r₀}^∞ x² · reduce(moments at x) dx with the moment matrix computed
    /// to order `qmax` at transform argument `s`.
    fn inter_exponent_integral<F>(&self, reduce: F, s: f64, qmax: u32) -> Result<f64>
    where
        F: Fn(&ConditionalMoments) -> f64,
    {
        let p = &self.params;
        integrate_semi_infinite_scaled(
            |x| match self.moment_data(x, s, qmax) {
                Ok(md) => x * x * reduce(&md),
                Err(_) => f64::NAN,
            },
            2.0 * p.r0(),
            10.0 * p.sigma,
            &self.outer_spec,
        )
    }

    fn check_budget(&self, k: u32, terms: u128) -> Result<()> {
        if k > self.budget.max_order || terms > self.budget.max_terms {
            return Err(Error::BudgetExceeded {
                order: k as usize,
                terms: terms as f64,
                budget: self.budget.max_terms as f64,
            });
        }
        Ok(())
    }

    /// k-th derivative of `lt_intra` at transform argument `s`, by the product
    /// rule over compositions of k into L−1 factor orders: each factor of
    /// order q contributes (−1)^q ∫ p_i^q Σ_j x_j^q e^{−s x_j p_i} f_d(y|0) dy
    /// against the common normalizer.
    pub fn lt_intra_derivatives(&self, k: u32, s: f64) -> Result<f64> {
        Self::check_transform_argument(s)?;
        let p = &self.params;
        if p.slots == 1 {
            return Ok(if k == 0 { 1.0 } else { 0.0 });
        }
        if k == 0 {
            return self.lt_intra(s);
        }
        let parts = p.slots - 1;
        self.check_budget(k, composition_count(k, parts))?;
        let md = self.moment_data(0.0, s, k)?;
        let mut total = 0.0;
        for_each_composition(k, parts, &mut |comp| {
            let mut term = multinomial(comp);
            for (i, &q) in comp.iter().enumerate() {
                term *= md.b[i][q as usize];
            }
            total += term;
        });
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let denom = (p.m() as f64 * md.normalizer).powi(parts as i32);
        Ok(sign * total / denom)
    }

    /// l-th derivative (in s) of the exponent integral of `lt_inter`,
    /// expanded over compositions of l into the L slot factors inside the
    /// parent-distance integral.
    fn exponent_derivative(&self, l_ord: u32, s: f64) -> Result<f64> {
        let p = &self.params;
        let slots = p.slots;
        let m = p.m() as f64;
        let lp = p.slots as i32;
        let value = self.inter_exponent_integral(
            |md| {
                let mut total = 0.0;
                for_each_composition(l_ord, slots, &mut |comp| {
                    let mut term = multinomial(comp);
                    for (i, &q) in comp.iter().enumerate() {
                        term *= md.b[i][q as usize];
                    }
                    total += term;
                });
                total / (m * md.normalizer).powi(lp)
            },
            s,
            l_ord,
        )?;
        let sign = if l_ord % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * 4.0 * std::f64::consts::PI * p.lambda_p * value)
    }

    /// k-th derivative of `lt_inter` at `s` by Faà di Bruno's formula over
    /// partition multiplicities, with the exponent derivatives above.
    pub fn lt_inter_derivatives(&self, k: u32, s: f64) -> Result<f64> {
        Self::check_transform_argument(s)?;
        let p = &self.params;
        if k == 0 {
            return self.lt_inter(s);
        }
        if p.lambda_p == 0.0 {
            return Ok(0.0);
        }
        let mut terms: u128 = partition_count(k) as u128;
        for l_ord in 1..=k {
            terms = terms.saturating_add(composition_count(l_ord, p.slots));
        }
        self.check_budget(k, terms)?;
        // derivatives of the full exponent −4πλ_p ∫ (1 − Π) x² dx: the outer
        // minus cancels against the one from differentiating (1 − Π)
        let mut g = vec![0.0; k as usize + 1];
        for l_ord in 1..=k {
            g[l_ord as usize] = self.exponent_derivative(l_ord, s)?;
        }
        let base = self.lt_inter(s)?;
        let mut total = 0.0;
        for_each_partition_multiplicity(k, &mut |mult| {
            let mut term = factorial(k);
            for (idx, &m_l) in mult.iter().enumerate() {
                if m_l == 0 {
                    continue;
                }
                let l_ord = idx + 1;
                term *= g[l_ord].powi(m_l as i32)
                    / (factorial(m_l) * factorial(l_ord as u32).powi(m_l as i32));
            }
            total += term;
        });
        Ok(base * total)
    }

    /// k-th derivative of the total transform (product rule over intra and
    /// inter parts).
    pub fn lt_total_derivatives(&self, k: u32, s: f64) -> Result<f64> {
        let mut total = 0.0;
        for m in 0..=k {
            let c = crate::numerics::binomial(k as u64, m as u64) as f64;
            total += c * self.lt_intra_derivatives(m, s)? * self.lt_inter_derivatives(k - m, s)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::gk15;

    fn model(params: SystemParams) -> InterferenceModel {
        InterferenceModel::new(params, IntegrationSpec::default()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn trivial_values() {
        let single_slot = model(SystemParams {
            slots: 1,
            ..SystemParams::default()
        });
        assert_eq!(single_slot.expected_intra().unwrap(), 0.0);
        assert_eq!(single_slot.lt_intra(1.0).unwrap(), 1.0);

        let no_parents = model(SystemParams {
            lambda_p: 0.0,
            ..SystemParams::default()
        });
        assert_eq!(no_parents.expected_inter().unwrap(), 0.0);
        assert_eq!(no_parents.lt_inter(1.0).unwrap(), 1.0);
        assert_eq!(no_parents.lt_inter_derivatives(3, 1.0).unwrap(), 0.0);

        let m = model(SystemParams::default());
        assert_eq!(m.lt_intra(0.0).unwrap(), 1.0);
        assert_eq!(m.lt_inter(0.0).unwrap(), 1.0);
        assert_eq!(m.lt_total(0.0).unwrap(), 1.0);
    }

    #[test]
    fn expected_intra_is_linear_in_symbol_mean() {
        let base = model(SystemParams::default());
        let doubled = model(SystemParams {
            constellation: vec![0.0, 120.0],
            ..SystemParams::default()
        });
        let a = base.expected_intra().unwrap();
        let b = doubled.expected_intra().unwrap();
        assert!(rel(b, 2.0 * a) < 1e-12, "{b} vs 2*{a}");
    }

    #[test]
    fn expected_inter_is_linear_in_parent_intensity() {
        let base = model(SystemParams::default());
        let doubled = model(SystemParams {
            lambda_p: 4e-6,
            ..SystemParams::default()
        });
        let a = base.expected_inter().unwrap();
        let b = doubled.expected_inter().unwrap();
        assert!(rel(b, 2.0 * a) < 1e-12, "{b} vs 2*{a}");
    }

    #[test]
    fn matches_dense_grid_reference_values() {
        // frozen from an independent dense fixed-grid evaluation of the same
        // integrals (64-point Gauss-Legendre multi-panel), itself validated
        // against Monte Carlo
        let m = model(SystemParams::default());
        assert!(rel(m.expected_intra().unwrap(), 0.26070397792367966) < 1e-6);
        assert!(rel(m.expected_inter().unwrap(), 0.12777757913049356) < 1e-6);
        assert!(rel(m.lt_intra(1.0).unwrap(), 0.8079724234878591) < 1e-6);
        assert!(rel(m.lt_inter(1.0).unwrap(), 0.9089839865342831) < 1e-6);
        assert!(rel(m.lt_intra(0.5).unwrap(), 0.8894902496797823) < 1e-6);
        assert!(rel(m.lt_inter(0.5).unwrap(), 0.9474245210942397) < 1e-6);
        let stats = m.interference_stats().unwrap();
        assert!((stats.e_total - stats.e_intra - stats.e_inter).abs() < 1e-15);
    }

    #[test]
    fn transform_decreases_in_s() {
        let m = model(SystemParams::default());
        let mut prev = f64::INFINITY;
        for s in [0.0, 0.5, 1.0, 2.0] {
            let v = m.lt_total(s).unwrap();
            assert!(v > 0.0 && v <= 1.0 + 1e-12);
            assert!(v < prev || s == 0.0, "lt_total({s}) = {v} not decreasing");
            prev = v;
        }
    }

    #[test]
    fn transform_slope_at_zero_is_minus_expected_interference() {
        let m = model(SystemParams::default());
        let h = 1e-4;
        let slope = (m.lt_total(h).unwrap() - m.lt_total(-h).unwrap()) / (2.0 * h);
        let e_total = m.interference_stats().unwrap().e_total;
        assert!(rel(-slope, e_total) < 1e-3, "slope {slope} vs -{e_total}");
    }

    #[test]
    fn derivatives_match_dense_grid_reference() {
        let m = model(SystemParams::default());
        assert_eq!(m.lt_intra_derivatives(0, 1.0).unwrap(), m.lt_intra(1.0).unwrap());
        let li = [
            -0.14187490560326654,
            0.07321163297119804,
            -0.059249443654021475,
            0.06470470745603664,
        ];
        for (k, want) in li.iter().enumerate() {
            let got = m.lt_intra_derivatives(k as u32 + 1, 1.0).unwrap();
            assert!(rel(got, *want) < 1e-6, "intra k={}: {got} vs {want}", k + 1);
        }
        let le = [
            -0.06765364869239208,
            0.0310757750420821,
            -0.02833528227019521,
            0.04184054341466914,
        ];
        for (k, want) in le.iter().enumerate() {
            let got = m.lt_inter_derivatives(k as u32 + 1, 1.0).unwrap();
            assert!(rel(got, *want) < 1e-6, "inter k={}: {got} vs {want}", k + 1);
        }
    }

    #[test]
    fn two_symbol_single_slot_pair_has_negative_first_derivative() {
        // L = 2: exactly one composition; the derivative is the single signed
        // moment integral, reproduced here with a direct quadrature
        let params = SystemParams {
            slots: 2,
            ..SystemParams::default()
        };
        let m = model(params.clone());
        let got = m.lt_intra_derivatives(1, 1.0).unwrap();
        assert!(got < 0.0);

        let spec = IntegrationSpec::default();
        let pdf = |y: f64| distance_pdf_origin_tcp(y, params.sigma).unwrap();
        let n0 = integrate_semi_infinite_scaled(&pdf, params.r0(), 8.0 * params.sigma, &spec).unwrap();
        let num = integrate_semi_infinite_scaled(
            |y| {
                let p1 = slot_observation(1, 2, y, &params.channel).unwrap();
                let sum: f64 = params
                    .constellation
                    .iter()
                    .map(|&xj| xj * (-xj * p1).exp())
                    .sum();
                pdf(y) * p1 * sum
            },
            params.r0(),
            8.0 * params.sigma,
            &spec,
        )
        .unwrap();
        let want = -num / (params.m() as f64 * n0);
        assert!(rel(got, want) < 1e-8, "{got} vs {want}");
    }

    /// Fixed-node composite Gauss-Kronrod evaluation of lt_intra: the
    /// abscissae never move with s, so high-order finite differences in s see
    /// a function smooth to machine precision.
    fn lt_intra_fixed_grid(params: &SystemParams, s: f64) -> f64 {
        let sigma = params.sigma;
        let r0 = params.r0();
        let l = params.slots;
        let panels = 24;
        let hi = r0 + 12.0 * sigma;
        let composite = |f: &dyn Fn(f64) -> f64| -> f64 {
            let mut total = 0.0;
            for pnl in 0..panels {
                let a = r0 + (hi - r0) * pnl as f64 / panels as f64;
                let b = r0 + (hi - r0) * (pnl + 1) as f64 / panels as f64;
                total += gk15(&|y| f(y), a, b).unwrap().0;
            }
            total
        };
        let pdf = |y: f64| distance_pdf_origin_tcp(y, sigma).unwrap();
        let n0 = composite(&pdf);
        let mut prod = 1.0;
        for i in 1..l {
            let factor = composite(&|y: f64| {
                let pi = slot_observation(i, l, y, &params.channel).unwrap();
                let sum: f64 = params
                    .constellation
                    .iter()
                    .map(|&xj| (-s * xj * pi).exp())
                    .sum();
                pdf(y) * sum
            });
            prod *= factor / (params.m() as f64 * n0);
        }
        prod
    }

    fn lt_inter_fixed_grid(params: &SystemParams, s: f64) -> f64 {
        let sigma = params.sigma;
        let r0 = params.r0();
        let l = params.slots;
        let composite = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: u32| -> f64 {
            let mut total = 0.0;
            for pnl in 0..panels {
                let lo = a + (b - a) * pnl as f64 / panels as f64;
                let hi = a + (b - a) * (pnl + 1) as f64 / panels as f64;
                total += gk15(&|y| f(y), lo, hi).unwrap().0;
            }
            total
        };
        let outer = composite(
            &|x: f64| {
                let pdf = |y: f64| distance_pdf_tcp(y, x, sigma).unwrap();
                let y_hi = x + 10.0 * sigma;
                let n_x = composite(&pdf, r0, y_hi, 24);
                let mut prod = 1.0;
                for i in 1..=l {
                    let factor = composite(
                        &|y: f64| {
                            let pi = slot_observation(i, l, y, &params.channel).unwrap();
                            let sum: f64 = params
                                .constellation
                                .iter()
                                .map(|&xj| (-s * xj * pi).exp())
                                .sum();
                            pdf(y) * sum
                        },
                        r0,
                        y_hi,
                        24,
                    );
                    prod *= factor / (params.m() as f64 * n_x);
                }
                x * x * (1.0 - prod)
            },
            2.0 * r0,
            2.0 * r0 + 30.0 * sigma,
            24,
        );
        (-4.0 * std::f64::consts::PI * params.lambda_p * outer).exp()
    }

    #[test]
    fn third_intra_derivative_matches_finite_difference() {
        let params = SystemParams::default();
        let m = model(params.clone());
        let got = m.lt_intra_derivatives(3, 1.0).unwrap();
        let h = 1e-3;
        let f = |s: f64| lt_intra_fixed_grid(&params, s);
        let fd = (-f(1.0 - 2.0 * h) + 2.0 * f(1.0 - h) - 2.0 * f(1.0 + h) + f(1.0 + 2.0 * h))
            / (2.0 * h * h * h);
        assert!(rel(got, fd) < 1e-4, "combinatorial {got} vs stencil {fd}");
    }

    #[test]
    fn second_inter_derivative_matches_finite_difference() {
        let params = SystemParams::default();
        let m = model(params.clone());
        let got = m.lt_inter_derivatives(2, 1.0).unwrap();
        let h = 1e-3;
        let f = |s: f64| lt_inter_fixed_grid(&params, s);
        let fd = (-f(1.0 - 2.0 * h) + 16.0 * f(1.0 - h) - 30.0 * f(1.0) + 16.0 * f(1.0 + h)
            - f(1.0 + 2.0 * h))
            / (12.0 * h * h);
        assert!(rel(got, fd) < 1e-4, "combinatorial {got} vs stencil {fd}");
    }

    #[test]
    fn fourth_derivative_consistency_and_sign_alternation() {
        let params = SystemParams::default();
        let m = model(params.clone());
        for s in [0.5, 1.0] {
            for k in 0..=4u32 {
                let d = m.lt_total_derivatives(k, s).unwrap();
                let signed = if k % 2 == 0 { d } else { -d };
                assert!(signed >= 0.0, "sign violation at k={k}, s={s}: {d}");
            }
        }
        // k = 4 against a fixed-grid product stencil
        let f = |s: f64| lt_intra_fixed_grid(&params, s) * lt_inter_fixed_grid(&params, s);
        let h = 0.01;
        let fd = (f(1.0 - 2.0 * h) - 4.0 * f(1.0 - h) + 6.0 * f(1.0) - 4.0 * f(1.0 + h)
            + f(1.0 + 2.0 * h))
            / h.powi(4);
        let got = m.lt_total_derivatives(4, 1.0).unwrap();
        assert!(rel(got, fd) < 1e-3, "combinatorial {got} vs stencil {fd}");
    }

    #[test]
    fn budget_guard_reports_blowup() {
        let mut m = model(SystemParams::default());
        m.set_budget(DerivativeBudget {
            max_order: 30,
            max_terms: 10,
        });
        match m.lt_intra_derivatives(8, 1.0) {
            Err(Error::BudgetExceeded { order, terms, .. }) => {
                assert_eq!(order, 8);
                assert!(terms > 10.0);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        let m2 = model(SystemParams::default());
        match m2.lt_intra_derivatives(31, 1.0) {
            Err(Error::BudgetExceeded { order, .. }) => assert_eq!(order, 31),
            other => panic!("expected order cap, got {other:?}"),
        }
    }
}
