//! Property tests against independent brute-force oracles.

use std::collections::HashMap;

use chowla_core::clt_audit::mcleish_audit;
use chowla_core::energy::{
    energy, energy_cross, energy_with, EnergyConfig, ProgressionRange,
};
use chowla_core::fluctuations::{build_grid, build_prime_sets, s2_second_moment, variance_floor};
use chowla_core::sieve::factor_values;
use chowla_core::{IntPolynomial, Rational};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;

fn poly(c: &[i64]) -> IntPolynomial {
    IntPolynomial::from_i64s(c).unwrap()
}

/// Literal quadruple count of `v1 v2 = v3 v4`.
fn brute_energy(values: &[i128]) -> u64 {
    let mut count = 0;
    for &a in values {
        for &b in values {
            let ab = a * b;
            for &c in values {
                for &d in values {
                    if ab == c * d {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

fn values_on(p: &IntPolynomial, range: &ProgressionRange) -> Vec<i128> {
    range
        .members()
        .iter()
        .map(|&x| p.eval_i64(x as i64).to_i128().unwrap())
        .collect()
}

fn is_prime_naive(p: u128) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

/// Non-pure-power polynomials of degree 2 or 3 with small coefficients.
fn small_poly() -> impl Strategy<Value = IntPolynomial> {
    (prop::collection::vec(-6i64..=6, 2..=3), prop::sample::select(vec![1i64, 2, -1, 3]))
        .prop_map(|(mut c, lead)| {
            c.push(lead);
            poly(&c)
        })
        .prop_filter("admissible", |p| {
            chowla_core::classify(p).map(|c| c.clt_admissible).unwrap_or(false)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_matches_quadruple_count(p in small_poly(), n in 1u64..=24, q in 1u64..=5, a in 0u64..5) {
        let a = a % q;
        let range = ProgressionRange::new(n, q, a).unwrap();
        prop_assume!(!range.is_empty());
        let report = energy(&p, &range).unwrap();
        prop_assert_eq!(report.total, brute_energy(&values_on(&p, &range)));
        prop_assert_eq!(report.total, report.value_diagonal_baseline + report.nontrivial);
        prop_assert!(report.value_diagonal_baseline >= report.diagonal_arg);
    }

    #[test]
    fn energy_invariant_under_negation_and_scaling(p in small_poly(), n in 1u64..=30, k in 2i64..=5) {
        let range = ProgressionRange::full(n);
        let base = energy(&p, &range).unwrap().total;
        prop_assert_eq!(energy(&p.negate(), &range).unwrap().total, base);
        prop_assert_eq!(energy(&p.scale(&BigInt::from(k)).unwrap(), &range).unwrap().total, base);
    }

    #[test]
    fn self_cross_energy_is_energy(p in small_poly(), n in 1u64..=30) {
        let range = ProgressionRange::full(n);
        let cfg = EnergyConfig::default();
        prop_assert_eq!(energy_cross(&p, &p, &range, &cfg).unwrap(), energy(&p, &range).unwrap().total);
    }

    #[test]
    fn chunked_energy_matches_single_pass(p in small_poly(), n in 1u64..=40, budget in 1u64..200) {
        let range = ProgressionRange::full(n);
        let cfg = EnergyConfig { pair_budget: budget, chunked: true };
        let chunked = energy_with(&p, &range, &cfg).unwrap();
        prop_assert_eq!(chunked.total, energy(&p, &range).unwrap().total);
    }

    #[test]
    fn energy_grows_with_n(p in small_poly(), n in 1u64..=30) {
        let smaller = energy(&p, &ProgressionRange::full(n)).unwrap().total;
        let larger = energy(&p, &ProgressionRange::full(n + 1)).unwrap().total;
        prop_assert!(larger > smaller);
    }

    #[test]
    fn injective_values_have_no_value_diagonal(p in small_poly(), n in 1u64..=30) {
        let range = ProgressionRange::full(n);
        let vals = values_on(&p, &range);
        let mut sorted = vals.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assume!(sorted.len() == vals.len());
        prop_assert_eq!(energy(&p, &range).unwrap().value_diagonal, 0);
    }

    #[test]
    fn factorizations_multiply_back(p in small_poly(), n in 1u64..=300) {
        let table = factor_values(&p, n).unwrap();
        for row in table.rows() {
            let v = p.eval_i64(row.n as i64);
            prop_assert_eq!(BigInt::from(row.value), v.clone());
            if v.is_zero() {
                prop_assert!(row.is_zero());
                continue;
            }
            let mut prod = BigInt::from(1);
            for (q, e) in &row.factors {
                prop_assert!(is_prime_naive(*q));
                for _ in 0..*e {
                    prod *= BigInt::from(*q);
                }
            }
            prop_assert_eq!(prod, v.abs());
            let top = row.factors.iter().map(|(q, _)| *q).max().unwrap_or(0);
            prop_assert_eq!(row.largest_prime, top);
        }
    }
}

#[test]
fn energy_oracle_matrix_small_moduli() {
    let matrix: [&[i64]; 6] = [&[1, 0, 1], &[0, 1, 1], &[0, -6, 1], &[0, 1, 0, 1], &[1, 2, 0, 1], &[0, 1, 3, 2]];
    for c in matrix {
        let p = poly(c);
        for q in 1..=5 {
            for a in 0..q {
                for n in [1, 7, 20, 33] {
                    let range = ProgressionRange::new(n, q, a).unwrap();
                    if range.is_empty() {
                        continue;
                    }
                    let got = energy(&p, &range).unwrap().total;
                    assert_eq!(got, brute_energy(&values_on(&p, &range)), "{p} n={n} q={q} a={a}");
                }
            }
        }
    }
}

struct Groups {
    /// `|P(n)|` grouped by largest prime factor, values `> 1` only.
    by_prime: Vec<Vec<u128>>,
}

fn groups(p: &IntPolynomial, n: u64) -> Groups {
    let mut map: HashMap<u128, Vec<u128>> = HashMap::new();
    for m in 1..=n {
        let v = p.eval_i64(m as i64).abs().to_u128().unwrap();
        if v <= 1 {
            continue;
        }
        let mut rest = v;
        let mut largest = 1;
        let mut d = 2;
        while d * d <= rest {
            while rest % d == 0 {
                largest = d;
                rest /= d;
            }
            d += 1;
        }
        if rest > 1 {
            largest = largest.max(rest);
        }
        map.entry(largest).or_default().push(v);
    }
    Groups {
        by_prime: map.into_values().collect(),
    }
}

/// `Σ_{p≠q} #{n1,n2 ∈ G_p; n3,n4 ∈ G_q : rel(a1,a2,a3,a4)}`.
fn cross_count(g: &Groups, rel: impl Fn(u128, u128, u128, u128) -> bool) -> u64 {
    let mut count = 0;
    for (i, gp) in g.by_prime.iter().enumerate() {
        for (j, gq) in g.by_prime.iter().enumerate() {
            if i == j {
                continue;
            }
            for &a1 in gp {
                for &a2 in gp {
                    for &a3 in gq {
                        for &a4 in gq {
                            if rel(a1, a2, a3, a4) {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    count
}

fn within_count(g: &Groups, rel: impl Fn(u128, u128, u128, u128) -> bool) -> u64 {
    let mut count = 0;
    for gp in &g.by_prime {
        for &a1 in gp {
            for &a2 in gp {
                for &a3 in gp {
                    for &a4 in gp {
                        if rel(a1, a2, a3, a4) {
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    count
}

fn chain(a1: u128, a2: u128, a3: u128, a4: u128) -> bool {
    a2.checked_mul(a3).and_then(|t| t.checked_mul(a4)) == Some(a1)
}

#[test]
fn mcleish_counts_match_direct_enumeration() {
    for c in [&[1i64, 0, 1][..], &[3, 0, 1], &[0, -6, 1], &[1, 2, 0, 1], &[-2, 0, 1]] {
        let p = poly(c);
        let grid = [40u64, 90, 150];
        let table = factor_values(&p, 150).unwrap();
        let audit = mcleish_audit(&table, &grid).unwrap();
        for row in &audit.rows {
            let g = groups(&p, row.n);
            let repeated: u64 = g.by_prime.iter().map(|v| equal_pairs(v)).sum();
            let energy = within_count(&g, |a1, a2, a3, a4| a1 * a2 == a3 * a4);
            let within_chain = within_count(&g, chain);
            let paired = cross_count(&g, |a1, a2, a3, a4| a1 * a3 == a2 * a4);
            let cross_chain = cross_count(&g, chain);
            assert_eq!(row.counts.repeated_pairs, repeated, "{p} N={}", row.n);
            assert_eq!(row.counts.within_energy, energy, "{p} N={}", row.n);
            assert_eq!(row.counts.within_chain, within_chain, "{p} N={}", row.n);
            assert_eq!(row.counts.cross_paired, paired, "{p} N={}", row.n);
            assert_eq!(row.counts.cross_chain, cross_chain, "{p} N={}", row.n);

            let n = Rational::from_integer(row.n.into());
            let r = |v: u64| Rational::from_integer(v.into());
            assert_eq!(row.variance_sum, r(repeated) / &n);
            assert_eq!(row.lindeberg_sum, (r(3 * energy) + r(4 * within_chain)) / (r(2) * &n * &n));
            assert_eq!(row.cross_term, (r(paired) + r(2 * cross_chain)) / (&n * &n));
        }
    }
}

fn equal_pairs<T: PartialEq>(v: &[T]) -> u64 {
    v.iter().map(|a| v.iter().filter(|b| *b == a).count() as u64).sum()
}

fn divides_value(p: &IntPolynomial, n: u64, q: u128) -> bool {
    let v = p.eval_i64(n as i64);
    !v.is_zero() && (&v % BigInt::from(q)).is_zero()
}

#[test]
fn split_moments_match_direct_enumeration() {
    let mut s2_seen = 0;
    for (c, x, k, ratio) in [(&[1i64, 0, 1][..], 100u64, 3usize, 3u64), (&[1, 2, 0, 1], 100, 3, 2), (&[3, 0, 1], 150, 2, 5)] {
        let p = poly(c);
        let grid = build_grid(x, k, &Rational::from_integer(ratio.into()), 1 << 24).unwrap();
        let table = factor_values(&p, grid.top()).unwrap();
        let fam = build_prime_sets(&table, &grid).unwrap();
        for i in 1..=k {
            let xi = fam.scales[i - 1].x;
            let earlier: Vec<u128> = fam.scales[..i - 1].iter().flat_map(|s| s.a.iter().copied()).collect();
            let s2_values: Vec<BigInt> = (1..=xi)
                .filter(|&n| earlier.iter().any(|&q| divides_value(&p, n, q)))
                .map(|n| p.eval_i64(n as i64).abs())
                .collect();
            let pairs = equal_pairs(&s2_values);
            let m = s2_second_moment(&table, &fam, i).unwrap();
            assert_eq!(m.count, s2_values.len() as u64, "{p} scale {i}");
            s2_seen += m.count;
            assert_eq!(m.pair_count, pairs, "{p} scale {i}");

            let own = &fam.scales[i - 1].a;
            let mut t: HashMap<u128, Vec<BigInt>> = HashMap::new();
            for n in 1..=xi {
                if earlier.iter().any(|&q| divides_value(&p, n, q)) {
                    continue;
                }
                let hits: Vec<u128> = own.iter().copied().filter(|&q| divides_value(&p, n, q)).collect();
                assert!(hits.len() <= 1);
                if let [q] = hits[..] {
                    t.entry(q).or_default().push(p.eval_i64(n as i64).abs());
                }
            }
            let floor = variance_floor(&table, &fam, i).unwrap();
            let diag: u64 = t.values().map(|v| v.len() as u64).sum();
            let pc: u64 = t.values().map(|v| equal_pairs(v)).sum();
            assert_eq!(floor.diagonal, diag, "{p} scale {i}");
            assert_eq!(floor.pair_count, pc, "{p} scale {i}");
        }
    }
    assert!(s2_seen > 0);
}
