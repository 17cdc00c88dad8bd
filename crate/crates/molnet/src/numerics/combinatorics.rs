//! Enumeration of integer compositions and partition multiplicity vectors,
//! plus the exact counts used to budget combinatorial expansions.

use super::special::ln_factorial;

/// An ordered tuple of non-negative integers with a fixed sum.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Composition {
    pub parts: Vec<u32>,
}

/// Multiplicity vector (m₁, …, m_k) with Σ l·m_l = k: how many parts of each
/// size appear in an integer partition of k.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionMultiplicity {
    pub mult: Vec<u32>,
}

/// Calls `f` once per ordered tuple of `parts` non-negative integers summing
/// to `k`, in ascending lexicographic order of the leading entries.
pub fn for_each_composition<F: FnMut(&[u32])>(k: u32, parts: u32, f: &mut F) {
    assert!(parts >= 1, "need at least one part");
    let mut buf = vec![0u32; parts as usize];
    fn rec<F: FnMut(&[u32])>(remaining: u32, idx: usize, buf: &mut [u32], f: &mut F) {
        if idx == buf.len() - 1 {
            buf[idx] = remaining;
            f(buf);
            return;
        }
        for v in 0..=remaining {
            buf[idx] = v;
            rec(remaining - v, idx + 1, buf, f);
        }
    }
    rec(k, 0, &mut buf, f);
}

/// All compositions of `k` into `parts` ordered non-negative parts.
pub fn compositions(k: u32, parts: u32) -> Vec<Composition> {
    let mut out = Vec::new();
    for_each_composition(k, parts, &mut |c| {
        out.push(Composition { parts: c.to_vec() })
    });
    out
}

/// Number of compositions of `k` into `parts` parts: C(k + parts − 1, parts − 1).
/// Saturates at `u128::MAX` instead of overflowing.
pub fn composition_count(k: u32, parts: u32) -> u128 {
    assert!(parts >= 1);
    binomial((k + parts - 1) as u64, (parts - 1) as u64)
}

/// Calls `f` once per multiplicity vector (m₁,…,m_k) with Σ l·m_l = k.
pub fn for_each_partition_multiplicity<F: FnMut(&[u32])>(k: u32, f: &mut F) {
    assert!(k >= 1);
    let mut buf = vec![0u32; k as usize];
    fn rec<F: FnMut(&[u32])>(part: u32, remaining: u32, buf: &mut [u32], f: &mut F) {
        if part == 1 {
            buf[0] = remaining;
            f(buf);
            buf[0] = 0;
            return;
        }
        for m in 0..=remaining / part {
            buf[(part - 1) as usize] = m;
            rec(part - 1, remaining - part * m, buf, f);
        }
        buf[(part - 1) as usize] = 0;
    }
    rec(k, k, &mut buf, f);
}

/// All multiplicity vectors for partitions of `k`; the list has exactly p(k)
/// entries (the integer-partition number).
pub fn partition_multiplicities(k: u32) -> Vec<PartitionMultiplicity> {
    let mut out = Vec::new();
    for_each_partition_multiplicity(k, &mut |m| {
        out.push(PartitionMultiplicity { mult: m.to_vec() })
    });
    out
}

/// Integer-partition number p(k) by Euler's pentagonal-number recurrence.
pub fn partition_count(k: u32) -> u64 {
    let n = k as usize;
    let mut p = vec![0u64; n + 1];
    p[0] = 1;
    for i in 1..=n {
        let mut total = 0i128;
        let mut g = 1i64;
        loop {
            let pent1 = g * (3 * g - 1) / 2;
            let pent2 = g * (3 * g + 1) / 2;
            if pent1 as usize > i && pent2 as usize > i {
                break;
            }
            let sign = if g % 2 == 1 { 1i128 } else { -1i128 };
            if pent1 as usize <= i {
                total += sign * p[i - pent1 as usize] as i128;
            }
            if pent2 as usize <= i {
                total += sign * p[i - pent2 as usize] as i128;
            }
            g += 1;
        }
        p[i] = total as u64;
    }
    p[n]
}

/// Exact binomial coefficient C(n, k), saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) is always divisible by (i + 1) here
        match r.checked_mul((n - i) as u128) {
            Some(v) => r = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    r
}

/// n! as f64; exact through 22!, correctly rounded products beyond, +∞ past
/// the f64 range (n > 170).
pub fn factorial(n: u32) -> f64 {
    if n > 170 {
        return f64::INFINITY;
    }
    (1..=n as u64).fold(1.0, |acc, i| acc * i as f64)
}

/// Multinomial coefficient k! / Π parts_i! where k = Σ parts_i, as f64.
/// Exact integer arithmetic when it fits; log-factorials otherwise.
pub fn multinomial(parts: &[u32]) -> f64 {
    let k: u32 = parts.iter().sum();
    let mut acc: u128 = 1;
    let mut seen: u64 = 0;
    for &p in parts {
        seen += p as u64;
        let b = binomial(seen, p as u64);
        match (b != u128::MAX).then(|| acc.checked_mul(b)).flatten() {
            Some(v) => acc = v,
            None => {
                let ln = ln_factorial(k as u64)
                    - parts.iter().map(|&q| ln_factorial(q as u64)).sum::<f64>();
                return ln.exp();
            }
        }
    }
    acc as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn composition_base_cases() {
        assert_eq!(compositions(0, 3), vec![Composition { parts: vec![0, 0, 0] }]);
        assert_eq!(compositions(2, 3).len(), 6);
        let c32: Vec<Vec<u32>> = compositions(3, 2).into_iter().map(|c| c.parts).collect();
        assert_eq!(c32, vec![vec![0, 3], vec![1, 2], vec![2, 1], vec![3, 0]]);
    }

    #[test]
    fn composition_counts_match_stars_and_bars() {
        for k in 0..=8u32 {
            for parts in 1..=5u32 {
                let list = compositions(k, parts);
                assert_eq!(list.len() as u128, composition_count(k, parts));
                let unique: HashSet<_> = list.iter().map(|c| c.parts.clone()).collect();
                assert_eq!(unique.len(), list.len(), "duplicates at k={k} parts={parts}");
                for c in &list {
                    assert_eq!(c.parts.iter().sum::<u32>(), k);
                }
            }
        }
    }

    #[test]
    fn multinomials_sum_to_power() {
        // sum over compositions of k into p parts of k!/prod(parts!) = p^k
        for k in 1..=7u32 {
            for p in 2..=4u32 {
                let mut total = 0.0;
                for_each_composition(k, p, &mut |c| total += multinomial(c));
                assert!((total - (p as f64).powi(k as i32)).abs() < 1e-9);
            }
        }
        assert_eq!(multinomial(&[2, 1, 0]), 3.0);
        assert_eq!(multinomial(&[1, 1, 1]), 6.0);
    }

    #[test]
    fn partition_enumeration_matches_table() {
        let table: [u64; 20] = [
            1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77, 101, 135, 176, 231, 297, 385, 490, 627,
        ];
        for (i, &want) in table.iter().enumerate() {
            let k = (i + 1) as u32;
            assert_eq!(partition_count(k), want, "p({k})");
            let list = partition_multiplicities(k);
            assert_eq!(list.len() as u64, want, "enumeration count at {k}");
            let unique: HashSet<_> = list.iter().map(|m| m.mult.clone()).collect();
            assert_eq!(unique.len(), list.len());
            for m in &list {
                let weighted: u32 = m
                    .mult
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| (j as u32 + 1) * c)
                    .sum();
                assert_eq!(weighted, k);
            }
        }
    }

    #[test]
    fn small_partition_example() {
        let set: HashSet<Vec<u32>> = partition_multiplicities(3)
            .into_iter()
            .map(|m| m.mult)
            .collect();
        let want: HashSet<Vec<u32>> =
            [vec![3, 0, 0], vec![1, 1, 0], vec![0, 0, 1]].into_iter().collect();
        assert_eq!(set, want);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(52, 26), 495_918_532_948_104);
        assert_eq!(binomial(10, 11), 0);
    }
}
