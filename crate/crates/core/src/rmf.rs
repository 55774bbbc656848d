//! Steinhaus random multiplicative functions.
//!
//! `f(p) = e(θ_p)` with `θ_p` uniform on `[0, 1)`, extended completely
//! multiplicatively. Angles are not stored: `θ_p` is a pure function of the
//! seed and `p`, computed by a keyed SplitMix64 cascade, so any prime up to
//! `2^128` has an angle without state or synchronization.
//!
//! `f` is evaluated on `|P(n)|`; rows with `P(n) = 0` are skipped by every
//! sum.

use std::collections::HashSet;
use std::f64::consts::TAU;

use num_complex::Complex;
use serde::Serialize;

use crate::arith::mix64;
use crate::sieve::{FactorTable, FactoredValue};
use crate::Complex64;

const PRIME_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const REPLICATE_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RmfError {
    #[error("f is undefined at 0 (P({n}) = 0)")]
    ZeroValue { n: u64 },
}

/// Derived seed of replicate `r`: `mix64(seed ^ mix64(r + K))` with the
/// fixed odd constant `K = 0xd1b54a32d192ed03`.
pub fn mix_seed(seed: u64, r: u64) -> u64 {
    mix64(seed ^ mix64(r.wrapping_add(REPLICATE_STREAM)))
}

/// Source of prime angles `θ_p ∈ [0, 1)`.
pub trait AngleSource: Sync {
    fn angle(&self, p: u128) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SteinhausSampler {
    seed: u64,
}

impl SteinhausSampler {
    pub fn new(seed: u64) -> Self {
        SteinhausSampler { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sampler for replicate `r`, seeded with [`mix_seed`].
    pub fn replicate(&self, r: u64) -> Self {
        SteinhausSampler::new(mix_seed(self.seed, r))
    }
}

impl AngleSource for SteinhausSampler {
    /// Top 53 bits of `mix64(mix64(seed ^ mix64(p_lo)) ^ (p_hi + K))`.
    fn angle(&self, p: u128) -> f64 {
        let lo = p as u64;
        let hi = (p >> 64) as u64;
        let h = mix64(mix64(self.seed ^ mix64(lo)) ^ hi.wrapping_add(PRIME_STREAM));
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Angles from `fresh` on a chosen prime set and from `frozen` elsewhere:
/// conditioning on `f(p)` for every other prime.
#[derive(Clone, Debug)]
pub struct ConditionalSampler<'a> {
    pub frozen: SteinhausSampler,
    pub fresh: SteinhausSampler,
    pub resampled: &'a HashSet<u128>,
}

impl AngleSource for ConditionalSampler<'_> {
    fn angle(&self, p: u128) -> f64 {
        if self.resampled.contains(&p) {
            self.fresh.angle(p)
        } else {
            self.frozen.angle(p)
        }
    }
}

/// `e(φ)` for a phase already reduced mod 1.
#[inline]
fn unit(phase: f64) -> Complex64 {
    let (s, c) = (TAU * phase).sin_cos();
    Complex::new(c, s)
}

#[inline]
fn accumulate(phase: f64, exponent: u32, angle: f64) -> f64 {
    (phase + exponent as f64 * angle).rem_euclid(1.0)
}

/// `f(|P(n)|) = e(Σ e_p θ_p)`. Exactly `1` when `|P(n)| = 1`.
pub fn f_of(source: &impl AngleSource, fv: &FactoredValue) -> Result<Complex64, RmfError> {
    if fv.is_zero() {
        return Err(RmfError::ZeroValue { n: fv.n });
    }
    let phase = fv
        .factors
        .iter()
        .fold(0.0, |acc, &(p, e)| accumulate(acc, e, source.angle(p)));
    Ok(unit(phase))
}

fn sum_rows<'a>(source: &impl AngleSource, rows: impl Iterator<Item = &'a FactoredValue>) -> Complex64 {
    rows.filter(|r| !r.is_zero())
        .map(|r| f_of(source, r).expect("zero rows filtered"))
        .fold(Complex64::new(0.0, 0.0), |acc, z| acc + z)
}

/// `Σ_{n <= x, P(n) != 0} f(P(n))`, summed in ascending `n`.
pub fn partial_sum(source: &impl AngleSource, table: &FactorTable, x: u64) -> Complex64 {
    assert!(x <= table.n(), "x = {x} beyond table range {}", table.n());
    sum_rows(source, table.rows_upto(x).iter())
}

/// Unnormalized piece `Σ_{n <= x, P⁺(P(n)) = p} f(P(n))`.
pub fn martingale_piece(source: &impl AngleSource, table: &FactorTable, p: u128, x: u64) -> Complex64 {
    assert!(x <= table.n(), "x = {x} beyond table range {}", table.n());
    sum_rows(
        source,
        table.rows_upto(x).iter().filter(|r| r.largest_prime == p),
    )
}

/// `Σ_{p <= n prime} f(P(p))`.
pub fn prime_subsum(source: &impl AngleSource, table: &FactorTable, n: u64) -> Complex64 {
    assert!(n <= table.n(), "N = {n} beyond table range {}", table.n());
    sum_rows(
        source,
        table
            .rows_upto(n)
            .iter()
            .filter(|r| crate::arith::is_prime(r.n as u128)),
    )
}

/// Factorizations of the nonzero rows `n <= x` flattened against an index
/// of distinct primes, so a replicate costs one angle per prime and one
/// phase accumulation per factor.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    primes: Vec<u128>,
    ns: Vec<u64>,
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl PhaseTable {
    pub fn new(table: &FactorTable, x: u64) -> Self {
        let rows: Vec<&FactoredValue> = table.rows_upto(x).iter().filter(|r| !r.is_zero()).collect();
        let mut primes: Vec<u128> = rows.iter().flat_map(|r| r.primes()).collect();
        primes.sort_unstable();
        primes.dedup();
        let mut ns = Vec::with_capacity(rows.len());
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for r in rows {
            ns.push(r.n);
            for &(p, e) in &r.factors {
                let idx = primes.binary_search(&p).expect("indexed prime");
                entries.push((idx as u32, e));
            }
            offsets.push(entries.len());
        }
        PhaseTable {
            primes,
            ns,
            offsets,
            entries,
        }
    }

    pub fn primes(&self) -> &[u128] {
        &self.primes
    }

    /// Indices of the rows, ascending.
    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    pub fn len(&self) -> usize {
        self.ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ns.is_empty()
    }

    pub fn angles(&self, source: &impl AngleSource) -> Vec<f64> {
        self.primes.iter().map(|&p| source.angle(p)).collect()
    }

    /// `f(P(n))` per row, bit-identical to [`f_of`].
    pub fn values(&self, angles: &[f64]) -> Vec<Complex64> {
        (0..self.ns.len())
            .map(|i| {
                let phase = self.entries[self.offsets[i]..self.offsets[i + 1]]
                    .iter()
                    .fold(0.0, |acc, &(k, e)| accumulate(acc, e, angles[k as usize]));
                unit(phase)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{factorize, primes_up_to};
    use crate::sieve::factor_values;
    use crate::IntPolynomial;

    fn fv(n: u128) -> FactoredValue {
        FactoredValue {
            n: 0,
            value: n as i128,
            factors: factorize(n),
            largest_prime: factorize(n).last().map_or(0, |&(p, _)| p),
        }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn angles_deterministic_and_in_range() {
        let s = SteinhausSampler::new(42);
        for p in [2u128, 3, 1_000_000_007, u128::MAX - 158] {
            let a = s.angle(p);
            assert_eq!(a, SteinhausSampler::new(42).angle(p));
            assert!((0.0..1.0).contains(&a));
        }
        assert_ne!(s.angle(2), SteinhausSampler::new(43).angle(2));
        assert_ne!(s.replicate(0).seed(), s.replicate(1).seed());
        // high words matter
        assert_ne!(s.angle(5), s.angle(5 + (1u128 << 64)));
    }

    #[test]
    fn f_of_definition() {
        let s = SteinhausSampler::new(7);
        assert_eq!(f_of(&s, &fv(1)).unwrap(), Complex64::new(1.0, 0.0));
        let fp = f_of(&s, &fv(13)).unwrap();
        assert!((fp.norm() - 1.0).abs() <= 1e-9);
        assert!(close(fp, unit(s.angle(13)), 1e-12));
        assert!(close(f_of(&s, &fv(169)).unwrap(), fp * fp, 1e-9));
        let mut neg = fv(10);
        neg.value = -10;
        assert_eq!(f_of(&s, &neg).unwrap(), f_of(&s, &fv(10)).unwrap());
        let zero = FactoredValue { n: 4, value: 0, factors: vec![], largest_prime: 0 };
        assert_eq!(f_of(&s, &zero), Err(RmfError::ZeroValue { n: 4 }));
    }

    #[test]
    fn complete_multiplicativity() {
        let s = SteinhausSampler::new(99);
        let mut state = 12345u64;
        for _ in 0..10_000 {
            state = mix64(state);
            let m = (state % 100_000 + 1) as u128;
            state = mix64(state);
            let n = (state % 100_000 + 1) as u128;
            let lhs = f_of(&s, &fv(m * n)).unwrap();
            let rhs = f_of(&s, &fv(m)).unwrap() * f_of(&s, &fv(n)).unwrap();
            assert!(close(lhs, rhs, 1e-9), "m = {m}, n = {n}");
        }
    }

    #[test]
    fn sums_on_small_tables() {
        let s = SteinhausSampler::new(3);
        let p: IntPolynomial = "x^2+1".parse().unwrap();
        let t = factor_values(&p, 3).unwrap();
        let (f2, f5, f10) = (f_of(&s, &fv(2)).unwrap(), f_of(&s, &fv(5)).unwrap(), f_of(&s, &fv(10)).unwrap());
        assert_eq!(partial_sum(&s, &t, 0), Complex64::new(0.0, 0.0));
        let ps = partial_sum(&s, &t, 3);
        assert!(close(ps, f2 + f5 + f2 * f5, 1e-9));
        assert!(ps.norm() <= 3.0);
        assert!(close(martingale_piece(&s, &t, 5, 3), f5 + f10, 1e-12));
        assert_eq!(martingale_piece(&s, &t, 7, 3), Complex64::new(0.0, 0.0));
        assert!(close(prime_subsum(&s, &t, 3), f5 + f10, 1e-12));
        assert_eq!(prime_subsum(&s, &t, 1), Complex64::new(0.0, 0.0));

        let sq = factor_values(&"x^2".parse().unwrap(), 1).unwrap();
        assert_eq!(partial_sum(&s, &sq, 1), Complex64::new(1.0, 0.0));
        let lin = factor_values(&"x".parse().unwrap(), 2).unwrap();
        assert!(close(prime_subsum(&s, &lin, 2), f2, 1e-12));
    }

    #[test]
    fn partition_identity_and_zero_skip() {
        let s = SteinhausSampler::new(11);
        for spec in ["x^2-6x", "x^3+2x+1", "x^2-2"] {
            let p: IntPolynomial = spec.parse().unwrap();
            let t = factor_values(&p, 300).unwrap();
            let pieces: Complex64 = t
                .largest_prime_groups(300)
                .keys()
                .map(|&q| martingale_piece(&s, &t, q, 300))
                .sum();
            let units = t.rows().iter().filter(|r| r.abs_value() == 1).count() as f64;
            assert!(close(pieces, partial_sum(&s, &t, 300) - units, 1e-9), "{spec}");
        }
    }

    #[test]
    fn phase_table_matches_f_of() {
        let s = SteinhausSampler::new(5);
        let p: IntPolynomial = "x^2-6x".parse().unwrap();
        let t = factor_values(&p, 200).unwrap();
        let pt = PhaseTable::new(&t, 200);
        assert_eq!(pt.len(), 199); // P(6) = 0
        let vals = pt.values(&pt.angles(&s));
        for (n, v) in pt.ns().iter().zip(&vals) {
            assert_eq!(*v, f_of(&s, t.row(*n)).unwrap());
        }
    }

    /// Upper tail of chi-square with `k` degrees of freedom via the
    /// Wilson-Hilferty cube-root normal approximation.
    fn chi_square_upper_tail(stat: f64, k: f64) -> f64 {
        let z = ((stat / k).cbrt() - (1.0 - 2.0 / (9.0 * k))) / (2.0 / (9.0 * k)).sqrt();
        1.0 - crate::stats::std_normal_cdf(z)
    }

    #[test]
    fn angles_uniform_on_first_primes() {
        let primes = primes_up_to(1_299_709); // the 100000th prime
        assert_eq!(primes.len(), 100_000);
        let s = SteinhausSampler::new(2024);
        let mut bins = [0u64; 100];
        for &p in &primes {
            bins[(s.angle(p as u128) * 100.0) as usize] += 1;
        }
        let expect = primes.len() as f64 / 100.0;
        let stat: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        assert!(chi_square_upper_tail(stat, 99.0) > 1e-6, "chi2 = {stat}");
    }

    #[test]
    fn angles_uncorrelated_across_primes() {
        let primes = primes_up_to(300_000);
        let s = SteinhausSampler::new(77);
        let xs: Vec<f64> = primes.iter().step_by(2).take(10_000).map(|&p| s.angle(p as u128)).collect();
        let ys: Vec<f64> = primes.iter().skip(1).step_by(2).take(10_000).map(|&p| s.angle(p as u128)).collect();
        let c = crate::stats::covariance(&xs, &ys).covariance;
        let corr = c / (crate::stats::SampleSummary::of(&xs).variance * crate::stats::SampleSummary::of(&ys).variance).sqrt();
        assert!(corr.abs() < 0.05, "corr = {corr}");
    }

    #[test]
    fn conditional_sampler_switches_streams() {
        let set: HashSet<u128> = [5u128, 13].into_iter().collect();
        let c = ConditionalSampler {
            frozen: SteinhausSampler::new(1),
            fresh: SteinhausSampler::new(2),
            resampled: &set,
        };
        assert_eq!(c.angle(5), SteinhausSampler::new(2).angle(5));
        assert_eq!(c.angle(7), SteinhausSampler::new(1).angle(7));
    }
}
