//! Adaptive Gauss–Kronrod quadrature on finite intervals and a doubling
//! scheme for semi-infinite tails.

use super::special::CompensatedSum;
use super::IntegrationSpec;
use crate::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod estimate, error estimate, and ∫|f| over one panel. Crate-visible
/// so tests can build fixed-node composite rules whose abscissae do not move
/// with the integrand (adaptive node placement would contaminate high-order
/// finite differences).
pub(crate) fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = WGK[7] * fc.abs();
    let mut fv1 = [0.0f64; 7];
    let mut fv2 = [0.0f64; 7];
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[i] = f1;
        fv2[i] = f2;
        resk += WGK[i] * (f1 + f2);
        resabs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            resg += WG[(i - 1) / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for i in 0..7 {
        resasc += WGK[i] * ((fv1[i] - reskh).abs() + (fv2[i] - reskh).abs());
    }
    let value = resk * half;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "integrand not finite on [{a}, {b}]"
        )));
    }
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    // QUADPACK error rescaling: sharpens |K - G| while never trusting it
    // below the floor set by roundoff on resabs.
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * 1.0f64.min((200.0 * err / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((value, err))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integral of `f` over the finite interval [a, b]:
/// repeatedly bisects the panel with the largest Kronrod error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &IntegrationSpec) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return Err(Error::Domain(format!("reversed integration bounds [{a}, {b}]")));
    }
    let (value, error) = gk15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut total_value = value;
    let mut total_error = error;
    while total_error > spec.abs_tol.max(spec.rel_tol * total_value.abs()) {
        if heap.len() as u32 >= spec.max_subdivisions {
            return Err(Error::QuadratureNoConvergence {
                partial: total_value,
                estimate: total_error,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval no longer splittable in f64; accept what we have
            heap.push(worst);
            break;
        }
        let (lv, le) = gk15(&f, worst.a, mid)?;
        let (rv, re) = gk15(&f, mid, worst.b)?;
        total_value += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, error: re });
    }
    // re-sum panel contributions with compensation: the running total above
    // accumulates rounding from the +=/-= updates
    let mut acc = CompensatedSum::default();
    for p in heap {
        acc.add(p.value);
    }
    Ok(acc.value())
}

/// ∫ₐ^∞ f for decaying integrands, with the first panel of width `scale`.
///
/// The panel edge doubles its distance from `a` each step; accumulation stops
/// once two consecutive panel contributions are negligible against the total
/// (below both the absolute tolerance and the tail-mass allowance). Callers
/// must pick `scale` large enough that the bulk of the mass is not far beyond
/// the first panel — a bump at `a + 1000·scale` would otherwise be mistaken
/// for an empty tail.
pub fn integrate_semi_infinite_scaled<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    spec: &IntegrationSpec,
) -> Result<f64> {
    assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
    let mut acc = CompensatedSum::default();
    let mut lo = a;
    let mut hi = a + scale;
    let mut small_run = 0u32;
    let mut last = f64::INFINITY;
    for segment in 0..64 {
        let v = integrate(&f, lo, hi, spec)?;
        acc.add(v);
        last = v;
        let cutoff = spec
            .abs_tol
            .max(spec.rel_tol.max(spec.tail_cutoff_mass) * acc.value().abs());
        if v.abs() <= cutoff {
            small_run += 1;
        } else {
            small_run = 0;
        }
        if segment >= 2 && small_run >= 2 {
            return Ok(acc.value());
        }
        lo = hi;
        hi = a + 2.0 * (hi - a);
    }
    Err(Error::QuadratureNoConvergence {
        partial: acc.value(),
        estimate: last.abs(),
    })
}

/// ∫ₐ^∞ f with a unit first panel; see [`integrate_semi_infinite_scaled`].
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    spec: &IntegrationSpec,
) -> Result<f64> {
    integrate_semi_infinite_scaled(f, a, 1.0, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> IntegrationSpec {
        IntegrationSpec::default()
    }

    fn maxwell_pdf(y: f64, sigma: f64) -> f64 {
        (2.0 / std::f64::consts::PI).sqrt() * y * y / sigma.powi(3)
            * (-y * y / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn polynomial_and_trig() {
        let v = integrate(|x| x * x, 0.0, 1.0, &spec()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, &spec()).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 2.0, 2.0, &spec()).unwrap(), 0.0);
    }

    #[test]
    fn needs_subdivision() {
        // sharply peaked Gaussian: one GK15 panel over [-8, 8] is nowhere close
        let v = integrate(|x| (-50.0 * x * x).exp(), -8.0, 8.0, &spec()).unwrap();
        let want = (std::f64::consts::PI / 50.0).sqrt();
        assert!((v - want).abs() < 1e-12 * want);
    }

    #[test]
    fn subdivision_budget_reported() {
        let tight = IntegrationSpec { max_subdivisions: 2, ..spec() };
        let r = integrate(|x| (1000.0 * x).sin().abs(), 0.0, 1.0, &tight);
        match r {
            Err(Error::QuadratureNoConvergence { partial, estimate }) => {
                assert!(partial.is_finite());
                assert!(estimate > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn exponential_tail() {
        let v = integrate_semi_infinite(|t| (-t).exp(), 0.0, &spec()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn maxwell_normalization_and_survival() {
        let v = integrate_semi_infinite(|y| maxwell_pdf(y, 1.0), 0.0, &spec()).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        // survival beyond 1 for sigma = 1, from 50-digit quadrature:
        let v = integrate_semi_infinite(|y| maxwell_pdf(y, 1.0), 1.0, &spec()).unwrap();
        assert!((v - 0.801251956901200802).abs() < 1e-9);
    }

    #[test]
    fn scaled_variant_catches_distant_mass() {
        // unit Gaussian centered at 50: all mass far from the lower limit
        let f = |x: f64| (-(x - 50.0) * (x - 50.0) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate_semi_infinite_scaled(f, 0.0, 60.0, &spec()).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(integrate(|x| x, 1.0, 0.0, &spec()).is_err());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, &spec()).is_err());
    }
}
