//! Factorization of every polynomial value `P(1), ..., P(N)`.
//!
//! Small primes (below [`arith::TRIAL_LIMIT`]) are removed by a root sieve:
//! for each such `p` the roots of `P mod p` are found once and only indices
//! `n ≡ r (mod p)` are divided. Whatever cofactor remains is split with
//! Miller-Rabin and Brent's rho.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith;
use crate::polynomial::IntPolynomial;
use crate::serde_exact;

/// Default cap on the number of rows a table may hold.
pub const DEFAULT_MAX_ROWS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SieveError {
    #[error("range must contain at least one index (N >= 1)")]
    EmptyRange,
    #[error("N = {n} exceeds the factorization budget of {limit} rows")]
    Budget { n: u64, limit: u64 },
    #[error("|P(n)| may reach {bound}, beyond the supported 127-bit range")]
    ValueTooLarge { bound: BigInt },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FactoredValue {
    pub n: u64,
    #[serde(serialize_with = "serde_exact::display")]
    pub value: i128,
    #[serde(serialize_with = "ser_factors")]
    pub factors: Vec<(u128, u32)>,
    /// `P⁺(|P(n)|)`, zero when `|P(n)| <= 1`.
    #[serde(serialize_with = "serde_exact::display")]
    pub largest_prime: u128,
}

fn ser_factors<S: serde::Serializer>(f: &[(u128, u32)], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_factors(f))
}

fn format_factors(factors: &[(u128, u32)]) -> String {
    let mut out = String::new();
    for (i, (p, e)) in factors.iter().enumerate() {
        if i > 0 {
            out.push('*');
        }
        write!(out, "{p}^{e}").expect("string write");
    }
    out
}

impl FactoredValue {
    pub fn abs_value(&self) -> u128 {
        self.value.unsigned_abs()
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn has_prime(&self, p: u128) -> bool {
        self.factors.iter().any(|&(q, _)| q == p)
    }

    pub fn primes(&self) -> impl Iterator<Item = u128> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    /// `p1^e1*p2^e2...`, empty for `|value| <= 1`.
    pub fn factor_string(&self) -> String {
        format_factors(&self.factors)
    }
}

/// Factorizations of `P(n)` for `n = 1..=N`.
#[derive(Clone, Debug)]
pub struct FactorTable {
    polynomial: IntPolynomial,
    rows: Vec<FactoredValue>,
    prime_to_indices: BTreeMap<u128, Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct SieveConfig {
    pub max_rows: u64,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig {
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

pub fn factor_values(p: &IntPolynomial, n: u64) -> Result<FactorTable, SieveError> {
    factor_values_with(p, n, &SieveConfig::default())
}

/// Checks that a table over `[1, n]` is buildable without computing it.
pub fn check_budget(p: &IntPolynomial, n: u64, config: &SieveConfig) -> Result<(), SieveError> {
    if n == 0 {
        return Err(SieveError::EmptyRange);
    }
    if n > config.max_rows {
        return Err(SieveError::Budget {
            n,
            limit: config.max_rows,
        });
    }
    let bound = p.magnitude_bound(n);
    if bound > BigInt::from(i128::MAX) {
        return Err(SieveError::ValueTooLarge { bound });
    }
    Ok(())
}

pub fn factor_values_with(
    p: &IntPolynomial,
    n: u64,
    config: &SieveConfig,
) -> Result<FactorTable, SieveError> {
    check_budget(p, n, config)?;
    let values: Vec<i128> = (1..=n)
        .into_par_iter()
        .map(|k| p.eval_i128(k as i128).expect("bounded by magnitude check"))
        .collect();
    let mut cofactors: Vec<u128> = values.iter().map(|v| v.unsigned_abs()).collect();
    let mut small: Vec<Vec<u128>> = vec![Vec::new(); n as usize];

    for &prime in arith::trial_primes() {
        if prime >= n {
            for idx in 0..n as usize {
                if cofactors[idx] != 0 && cofactors[idx] % prime as u128 == 0 {
                    strip_prime(&mut cofactors[idx], &mut small[idx], prime as u128);
                }
            }
            continue;
        }
        let residues: Vec<u64> = p
            .coeffs()
            .iter()
            .map(|c| {
                let m = BigInt::from(prime);
                ((c % &m + &m) % &m).to_u64().expect("residue below prime")
            })
            .collect();
        for r in 0..prime {
            let at_r = residues
                .iter()
                .rev()
                .fold(0u64, |acc, &c| (acc * r + c) % prime);
            if at_r != 0 {
                continue;
            }
            let mut k = if r == 0 { prime } else { r };
            while k <= n {
                let idx = (k - 1) as usize;
                strip_prime(&mut cofactors[idx], &mut small[idx], prime as u128);
                k += prime;
            }
        }
    }

    let rows: Vec<FactoredValue> = small
        .into_par_iter()
        .zip(cofactors.into_par_iter())
        .enumerate()
        .map(|(idx, (mut primes, cofactor))| {
            let value = values[idx];
            if value != 0 && cofactor > 1 {
                arith::split_large(cofactor, &mut primes);
            }
            let factors = arith::collect_powers(primes);
            let largest_prime = factors.last().map_or(0, |&(q, _)| q);
            FactoredValue {
                n: idx as u64 + 1,
                value,
                factors,
                largest_prime,
            }
        })
        .collect();

    let mut prime_to_indices: BTreeMap<u128, Vec<u64>> = BTreeMap::new();
    for row in &rows {
        for q in row.primes() {
            prime_to_indices.entry(q).or_default().push(row.n);
        }
    }
    Ok(FactorTable {
        polynomial: p.clone(),
        rows,
        prime_to_indices,
    })
}

fn strip_prime(cofactor: &mut u128, found: &mut Vec<u128>, p: u128) {
    if *cofactor == 0 {
        return;
    }
    while *cofactor % p == 0 {
        *cofactor /= p;
        found.push(p);
    }
}

impl FactorTable {
    pub fn polynomial(&self) -> &IntPolynomial {
        &self.polynomial
    }

    /// Largest index covered.
    pub fn n(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn rows(&self) -> &[FactoredValue] {
        &self.rows
    }

    /// Row for index `n` (1-based).
    pub fn row(&self, n: u64) -> &FactoredValue {
        &self.rows[(n - 1) as usize]
    }

    /// Rows with index `<= x`.
    pub fn rows_upto(&self, x: u64) -> &[FactoredValue] {
        &self.rows[..(x.min(self.n())) as usize]
    }

    pub fn prime_to_indices(&self) -> &BTreeMap<u128, Vec<u64>> {
        &self.prime_to_indices
    }

    /// Indices `n <= x` with `p | P(n)`, ascending.
    pub fn indices_of(&self, p: u128, x: u64) -> &[u64] {
        match self.prime_to_indices.get(&p) {
            Some(v) => &v[..v.partition_point(|&k| k <= x)],
            None => &[],
        }
    }

    /// True when some `P(n)` in range is negative.
    pub fn has_negative_values(&self) -> bool {
        self.rows.iter().any(|r| r.value < 0)
    }

    /// Indices in range where `P(n) = 0`.
    pub fn zero_indices(&self) -> Vec<u64> {
        self.rows.iter().filter(|r| r.is_zero()).map(|r| r.n).collect()
    }

    /// `n <= x` grouped by largest prime factor; rows with `|P(n)| <= 1`
    /// belong to no group.
    pub fn largest_prime_groups(&self, x: u64) -> BTreeMap<u128, Vec<u64>> {
        let mut groups: BTreeMap<u128, Vec<u64>> = BTreeMap::new();
        for row in self.rows_upto(x) {
            if row.largest_prime != 0 {
                groups.entry(row.largest_prime).or_default().push(row.n);
            }
        }
        groups
    }

    /// Columnar CSV: `n,value,factors,largest_prime`.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,value,factors,largest_prime")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.n, r.value, r.factor_string(), r.largest_prime)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "polynomial": self.polynomial,
            "n": self.n(),
            "rows": self.rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LpfDensity {
    pub count: u64,
    /// Indices examined: `2..=N`.
    pub considered: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub fraction: BigRational,
    #[serde(serialize_with = "serde_exact::rational")]
    pub threshold_scale: BigRational,
}

/// `1 / (2 d^2)`.
pub fn default_lpf_scale(degree: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2 * degree * degree))
}

/// Counts `2 <= n <= N` with `P⁺(P(n)) >= scale · n · ln n`.
pub fn lpf_density(table: &FactorTable, threshold_scale: &BigRational) -> LpfDensity {
    let scale = threshold_scale.to_f64().unwrap_or(f64::INFINITY);
    let rows = table.rows().iter().skip(1);
    let count = rows
        .filter(|r| {
            let n = r.n as f64;
            r.largest_prime as f64 >= scale * n * n.ln()
        })
        .count() as u64;
    let considered = table.n().saturating_sub(1);
    let fraction = if considered == 0 {
        BigRational::zero()
    } else {
        BigRational::new(count.into(), considered.into())
    };
    LpfDensity {
        count,
        considered,
        fraction,
        threshold_scale: threshold_scale.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IntPolynomial {
        s.parse().unwrap()
    }

    #[test]
    fn x2_plus_1_first_rows() {
        let t = factor_values(&ip("x^2+1"), 5).unwrap();
        let values: Vec<i128> = t.rows().iter().map(|r| r.value).collect();
        let lp: Vec<u128> = t.rows().iter().map(|r| r.largest_prime).collect();
        assert_eq!(values, vec![2, 5, 10, 17, 26]);
        assert_eq!(lp, vec![2, 5, 5, 17, 13]);
        assert_eq!(t.row(3).factors, vec![(2, 1), (5, 1)]);
        assert_eq!(t.indices_of(5, 5), &[2, 3]);
        assert_eq!(t.indices_of(5, 2), &[2]);
    }

    #[test]
    fn squares() {
        let t = factor_values(&ip("x^2"), 3).unwrap();
        let lp: Vec<u128> = t.rows().iter().map(|r| r.largest_prime).collect();
        assert_eq!(lp, vec![0, 2, 3]);
        assert!(t.row(1).factors.is_empty());
        assert_eq!(t.row(2).factors, vec![(2, 2)]);
    }

    #[test]
    fn root_of_polynomial() {
        let t = factor_values(&ip("x^2-6x"), 6).unwrap();
        let r = t.row(6);
        assert_eq!(r.value, 0);
        assert!(r.factors.is_empty());
        assert_eq!(r.largest_prime, 0);
        assert_eq!(t.row(1).value, -5);
        assert_eq!(t.row(1).factors, vec![(5, 1)]);
        assert!(t.has_negative_values());
        assert_eq!(t.zero_indices(), vec![6]);
    }

    #[test]
    fn errors() {
        assert_eq!(factor_values(&ip("x"), 0).unwrap_err(), SieveError::EmptyRange);
        let cfg = SieveConfig { max_rows: 10 };
        assert!(matches!(
            factor_values_with(&ip("x"), 11, &cfg),
            Err(SieveError::Budget { n: 11, limit: 10 })
        ));
        assert!(matches!(
            factor_values(&ip("x^30"), 100),
            Err(SieveError::ValueTooLarge { .. })
        ));
    }

    #[test]
    fn large_cofactors_split() {
        // values around 1e24 force the wide-modulus rho path
        let p = ip("x^4+x+1");
        let t = factor_values(&p, 40).unwrap();
        let top = factor_values(&ip("1000000000000x^2+7"), 3).unwrap();
        for table in [&t, &top] {
            for r in table.rows() {
                let prod = r
                    .factors
                    .iter()
                    .fold(1u128, |acc, &(q, e)| acc * q.pow(e));
                assert_eq!(prod, r.abs_value());
                assert!(r.factors.iter().all(|&(q, _)| arith::is_prime(q)));
            }
        }
    }

    #[test]
    fn lpf_density_examples() {
        let t = factor_values(&ip("x^2+1"), 10).unwrap();
        let d = lpf_density(&t, &BigRational::zero());
        assert_eq!(d.fraction, BigRational::one());
        assert_eq!(d.considered, 9);

        let sq = factor_values(&ip("x^2"), 100).unwrap();
        let d = lpf_density(&sq, &default_lpf_scale(2));
        // P⁺(n²) = P⁺(n) <= n falls below n ln n / 8 once ln n > 8
        let direct = (2..=100u64)
            .filter(|&n| {
                let lp = arith::factorize(n as u128).last().unwrap().0 as f64;
                lp >= n as f64 * (n as f64).ln() / 8.0
            })
            .count() as u64;
        assert_eq!(d.count, direct);
        assert!(d.fraction < BigRational::new(1.into(), 2.into()));

        let t = factor_values(&ip("x^2+1"), 100).unwrap();
        let d = lpf_density(&t, &default_lpf_scale(2));
        assert!(d.fraction > BigRational::zero() && d.fraction <= BigRational::one());
        // trial-division oracle, independent of the root sieve
        let naive_lpf = |mut m: u128| {
            let (mut d, mut best) = (2u128, 0u128);
            while d * d <= m {
                while m % d == 0 {
                    best = d;
                    m /= d;
                }
                d += 1;
            }
            if m > 1 { m } else { best }
        };
        let oracle = (2..=100u128)
            .filter(|&n| naive_lpf(n * n + 1) as f64 >= n as f64 * (n as f64).ln() / 8.0)
            .count() as u64;
        assert_eq!(oracle, 94);
        assert_eq!(d.count, 94);
    }

    #[test]
    fn csv_and_json_shapes() {
        let t = factor_values(&ip("x^2+1"), 3).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,value,factors,largest_prime\n1,2,2^1,2\n2,5,5^1,5\n3,10,2^1*5^1,5\n"
        );
        let j = t.to_json();
        assert_eq!(j["rows"][2]["factors"], "2^1*5^1");
        assert_eq!(j["rows"][2]["value"], "10");
        assert_eq!(j["polynomial"]["text"], "x^2+1");
    }
}
