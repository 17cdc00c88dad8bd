//! Error function, log-factorial, Poisson pmf in log space, Lambert W, and
//! compensated-summation primitives.

use crate::{Error, Result};
use std::sync::OnceLock;

// Rational minimax coefficients for erf/erfc (Cody's CALERF scheme: three
// regions, with the exp(-x^2) factor split to avoid rounding in the tail).
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const INV_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;

/// erfc(y) for 0.46875 < y, via the region-2/region-3 rational fits.
fn erfc_positive(y: f64) -> f64 {
    debug_assert!(y > 0.46875);
    let result = if y <= 4.0 {
        let mut xnum = ERF_C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + ERF_C[i]) * y;
            xden = (xden + ERF_D[i]) * y;
        }
        (xnum + ERF_C[7]) / (xden + ERF_D[7])
    } else if y >= 26.543 {
        return 0.0;
    } else {
        let z = 1.0 / (y * y);
        let mut xnum = ERF_P[5] * z;
        let mut xden = z;
        for i in 0..4 {
            xnum = (xnum + ERF_P[i]) * z;
            xden = (xden + ERF_Q[i]) * z;
        }
        let r = z * (xnum + ERF_P[4]) / (xden + ERF_Q[4]);
        (INV_SQRT_PI - r) / y
    };
    // exp(-y^2) split into an exactly-representable square and a remainder.
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * result
}

/// The error function 2/√π ∫₀ˣ e^(−t²) dt.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let z = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut xnum = ERF_A[4] * z;
        let mut xden = z;
        for i in 0..3 {
            xnum = (xnum + ERF_A[i]) * z;
            xden = (xden + ERF_B[i]) * z;
        }
        x * (xnum + ERF_A[3]) / (xden + ERF_B[3])
    } else {
        let r = 1.0 - erfc_positive(y);
        if x < 0.0 {
            -r
        } else {
            r
        }
    }
}

/// The complementary error function 1 − erf(x), accurate in the far tail.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        1.0 - erf(x)
    } else if x < 0.0 {
        2.0 - erfc_positive(y)
    } else {
        erfc_positive(y)
    }
}

/// ln(n!) accurate to better than 1e−12 relative error for all n.
///
/// Exact compensated accumulation of ln k for n < 1024; Stirling's series
/// beyond (whose truncation error is far below 1e−15 there).
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut v = vec![0.0f64; 1024];
        let mut acc = CompensatedSum::default();
        for k in 2..1024u64 {
            acc.add((k as f64).ln());
            v[k as usize] = acc.value();
        }
        v
    });
    if (n as usize) < table.len() {
        table[n as usize]
    } else {
        let x = n as f64;
        let inv2 = 1.0 / (x * x);
        let series = (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 - inv2 / 1680.0))) / x;
        (x + 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
    }
}

/// ln P(Y = k) for Y ~ Poisson(mean): k·ln(mean) − mean − ln(k!).
///
/// Log-space throughout so that thresholds in the hundreds stay representable.
pub fn log_poisson_pmf(k: u64, mean: f64) -> f64 {
    assert!(mean > 0.0 && mean.is_finite(), "mean must be positive");
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// Real branches of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WBranch {
    /// W₀, defined for z ≥ −1/e, with W₀(z) ≥ −1.
    Principal,
    /// W₋₁, defined for −1/e ≤ z < 0, with W₋₁(z) ≤ −1.
    MinusOne,
}

/// Series about the branch point z = −1/e in p = ±√(2(ez+1)).
fn branch_point_series(p: f64) -> f64 {
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0 + p * 769.0 / 17280.0))))
}

/// Lambert W: the solution w of w·e^w = z on the requested branch.
///
/// Halley iteration from a branch-specific seed; the result satisfies
/// |w·e^w − z| ≤ 1e−12·max(1, |z|).
pub fn lambert_w(branch: WBranch, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("lambert_w argument {z} not finite")));
    }
    let q = 2.0 * (std::f64::consts::E * z + 1.0);
    match branch {
        WBranch::Principal if q < -1e-12 => {
            return Err(Error::Domain(format!(
                "lambert_w principal branch needs z >= -1/e, got {z}"
            )));
        }
        WBranch::MinusOne if q < -1e-12 || z >= 0.0 => {
            return Err(Error::Domain(format!(
                "lambert_w branch -1 needs -1/e <= z < 0, got {z}"
            )));
        }
        _ => {}
    }
    let q = q.max(0.0);
    if q <= 1e-14 {
        return Ok(-1.0); // branch point (both branches meet)
    }

    let mut w = match branch {
        WBranch::Principal => {
            if z == 0.0 {
                return Ok(0.0);
            }
            if q <= 2e-2 {
                branch_point_series(q.sqrt())
            } else if z < 3.0 {
                // ln(1+z) is within Halley's basin everywhere on [-0.3, 3]
                (1.0 + z).ln()
            } else {
                let l1 = z.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        WBranch::MinusOne => {
            if q <= 2e-2 {
                branch_point_series(-q.sqrt())
            } else {
                let l1 = (-z).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };

    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let den = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if den == 0.0 || !den.is_finite() {
            break;
        }
        let step = f / den;
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }

    let residual = (w * w.exp() - z).abs();
    if residual <= 1e-12 * z.abs().max(1.0) {
        Ok(w)
    } else {
        Err(Error::Numerical(format!(
            "lambert_w failed to converge at z = {z}: residual {residual:e}"
        )))
    }
}

/// Neumaier-compensated summation; also tracks Σ|xᵢ| so callers can detect
/// catastrophic cancellation via [`CompensatedSum::condition`].
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    abs_sum: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Σ|xᵢ| / |Σxᵢ| — large values mean the sum lost most of its digits.
    pub fn condition(&self) -> f64 {
        self.abs_sum / self.value().abs().max(f64::MIN_POSITIVE)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Unevaluated double-double value (~31 significant digits), used when an
/// alternating sum's condition number makes plain f64 untrustworthy.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Exact product of two f64s.
    pub fn from_product(a: f64, b: f64) -> Self {
        let p = a * b;
        let e = a.mul_add(b, -p);
        Self { hi: p, lo: e }
    }

    pub fn add(self, other: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, other.hi);
        let (t1, t2) = two_sum(self.lo, other.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Self { hi, lo }
    }

    pub fn mul_f64(self, x: f64) -> Self {
        let p = self.hi * x;
        let e = self.hi.mul_add(x, -p);
        let lo = self.lo * x + e;
        let (hi, lo) = quick_two_sum(p, lo);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG_INV_E: f64 = -0.367_879_441_171_442_33;

    /// Composite Simpson's rule for the defining erf integral.
    fn erf_simpson(x: f64) -> f64 {
        let n = 4000;
        let h = x / n as f64;
        let f = |t: f64| (-t * t).exp();
        let mut s = f(0.0) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn erf_matches_defining_integral() {
        for &x in &[0.1, 0.25, 0.46875, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5] {
            let want = erf_simpson(x);
            assert!(
                (erf(x) - want).abs() < 1e-11,
                "erf({x}) = {} vs Simpson {want}",
                erf(x)
            );
        }
    }

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        // 2/sqrt(pi) * int_0^1 exp(-t^2) dt to 30 digits: 0.842700792949714869341220635083
        assert!((erf(1.0) - 0.842700792949714869).abs() < 1e-15);
        assert!((erf(10.0) - 1.0).abs() < 1e-15);
        assert!((erf(-1.0) + 0.842700792949714869).abs() < 1e-15);
    }

    #[test]
    fn erf_odd_monotone_bounded() {
        let mut prev = -1.0;
        for i in 0..=400 {
            let x = -6.0 + 12.0 * i as f64 / 400.0;
            let v = erf(x);
            assert!(v.abs() < 1.0 || x.abs() > 5.8);
            assert!(v >= prev, "erf not monotone at {x}");
            assert!((erf(-x) + v).abs() < 1e-15, "erf not odd at {x}");
            prev = v;
        }
    }

    #[test]
    fn erfc_complements_erf() {
        for i in 0..=100 {
            let x = -5.0 + 10.0 * i as f64 / 100.0;
            assert!((erf(x) + erfc(x) - 1.0).abs() < 2e-15, "at {x}");
        }
        // far tail stays positive and finite where 1 - erf would round to 0
        assert!(erfc(10.0) > 0.0 && erfc(10.0) < 3e-45);
        assert_eq!(erfc(27.0), 0.0);
    }

    #[test]
    fn ln_factorial_small_and_crossover() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-13);
        assert!((ln_factorial(20) - 2_432_902_008_176_640_000f64.ln()).abs() < 1e-12);
        // table/Stirling seam: compare Stirling at 1023 against the table
        let x = 1023f64;
        let inv2 = 1.0 / (x * x);
        let series = (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 - inv2 / 1680.0))) / x;
        let stirling = (x + 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series;
        assert!((ln_factorial(1023) - stirling).abs() / stirling < 1e-14);
    }

    #[test]
    fn log_poisson_pmf_values() {
        assert!((log_poisson_pmf(0, 1.0) + 1.0).abs() < 1e-15);
        assert!((log_poisson_pmf(1, 1.0) + 1.0).abs() < 1e-15);
        // ln(3.5^10 e^{-3.5} / 10!) evaluated with 50-digit arithmetic
        assert!((log_poisson_pmf(10, 3.5) - (-6.076782888121835338)).abs() < 1e-12);
        // pmf sums to 1
        let mean = 4.0;
        let total: f64 = (0..80).map(|k| log_poisson_pmf(k, mean).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambert_w_anchor_points() {
        assert_eq!(lambert_w(WBranch::Principal, 0.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((lambert_w(WBranch::Principal, e).unwrap() - 1.0).abs() < 1e-14);
        assert!((lambert_w(WBranch::Principal, NEG_INV_E).unwrap() + 1.0).abs() < 1e-6);
        assert!((lambert_w(WBranch::MinusOne, NEG_INV_E).unwrap() + 1.0).abs() < 1e-6);
        // W_{-1}(-2e^{-2}) hits w = -2
        let w = lambert_w(WBranch::MinusOne, -2.0 * (-2.0f64).exp()).unwrap();
        assert!((w + 2.0).abs() < 1e-12);
    }

    #[test]
    fn lambert_w_identity_random_points() {
        // xorshift so the test is self-contained and deterministic
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let u = next();
            // principal: span [-1/e, 1e6] with density near the branch point
            let z = if u < 0.5 {
                NEG_INV_E + (2.0 * u) * (2.0 * u) * 0.3678794411714423
            } else {
                (u - 0.5) * 2e6
            };
            let w = lambert_w(WBranch::Principal, z).unwrap();
            assert!(w >= -1.0 - 1e-9);
            assert!(
                (w * w.exp() - z).abs() <= 1e-12 * z.abs().max(1.0),
                "principal residual at z = {z}"
            );
        }
        for _ in 0..10_000 {
            let u = next();
            let z = NEG_INV_E * (1.0 - u * u).max(1e-12); // (-1/e, 0)
            let w = lambert_w(WBranch::MinusOne, z).unwrap();
            assert!(w <= -1.0 + 1e-9);
            assert!(
                (w * w.exp() - z).abs() <= 1e-12 * z.abs().max(1.0),
                "branch -1 residual at z = {z}"
            );
        }
    }

    #[test]
    fn lambert_w_domain_errors() {
        assert!(lambert_w(WBranch::Principal, -0.4).is_err());
        assert!(lambert_w(WBranch::MinusOne, -0.4).is_err());
        assert!(lambert_w(WBranch::MinusOne, 0.0).is_err());
        assert!(lambert_w(WBranch::MinusOne, 0.5).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::default();
        for &x in &[1e100, 1.0, -1e100] {
            acc.add(x);
        }
        assert_eq!(acc.value(), 1.0);
        assert!(acc.condition() > 1e12);
    }

    #[test]
    fn double_double_alternating_binomial() {
        // sum_k (-1)^k C(20,k) 1.3^k = (1 - 1.3)^20 = 0.3^20; condition ~1e17
        // so plain f64 summation returns garbage while double-double holds.
        let want = 0.3f64.powi(20);
        let mut naive = 0.0f64;
        let mut dd = DoubleDouble::default();
        let mut binom = 1.0f64; // C(20,k), exact in f64 for n = 20
        let mut power = 1.0f64;
        let mut power_dd = DoubleDouble::from_f64(1.0);
        for k in 0..=20u32 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            naive += sign * binom * power;
            dd = dd.add(power_dd.mul_f64(sign * binom));
            binom = binom * (20 - k) as f64 / (k + 1) as f64;
            power *= 1.3;
            power_dd = power_dd.mul_f64(1.3);
        }
        assert!((dd.to_f64() - want).abs() / want < 1e-10);
        assert!((naive - want).abs() / want > 1e-4, "naive was unexpectedly accurate");
    }
}
