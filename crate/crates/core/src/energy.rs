//! Exact multiplicative energy of polynomial images.
//!
//! `E(P, S)` counts ordered quadruples `(x1, x2, x1', x2') ∈ S⁴` with
//! `P(x1) P(x2) = P(x1') P(x2')`. Values are grouped first; unordered pairs
//! of distinct values carry weight `2 c_u c_v` (or `c_u²` on the diagonal),
//! the weighted products are sorted, and the count is `Σ_v m_v²` where `m_v`
//! is the ordered-pair multiplicity of the product `v`.
//!
//! When the number of stored products would exceed the budget the caller
//! can opt into chunked counting: the product space is hash-partitioned and
//! each partition is generated, sorted and counted on its own pass.

use std::cmp::Ordering;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::mix64;
use crate::polynomial::{classify, IntPolynomial, PolyError};
use crate::serde_exact;
use crate::sieve::FactorTable;
use crate::stats;

/// Default cap on stored pair products per pass.
pub const DEFAULT_PAIR_BUDGET: u64 = 80_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnergyError {
    #[error("progression [N]_(a,q) needs q >= 1 and 0 <= a < q (got q = {q}, a = {a})")]
    BadProgression { q: u64, a: u64 },
    #[error("progression has no members in [1, {n}]")]
    EmptyRange { n: u64 },
    #[error(
        "{pairs} pair products exceed the budget of {limit}; rerun with chunked counting \
         (--chunked) or raise the budget"
    )]
    Budget { pairs: u64, limit: u64 },
    #[error("{0}")]
    ExcludedForm(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("Bombieri-Pila bound needs d >= 2 and N >= 16 (got d = {d}, N = {n})")]
    BpDomain { d: usize, n: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProgressionRange {
    pub n: u64,
    pub q: u64,
    pub a: u64,
}

impl ProgressionRange {
    pub fn new(n: u64, q: u64, a: u64) -> Result<Self, EnergyError> {
        if q == 0 || a >= q {
            return Err(EnergyError::BadProgression { q, a });
        }
        Ok(ProgressionRange { n, q, a })
    }

    /// `[N]` itself.
    pub fn full(n: u64) -> Self {
        ProgressionRange { n, q: 1, a: 0 }
    }

    /// `{x ∈ [1, N] : x ≡ a (mod q)}`, ascending.
    pub fn members(&self) -> Vec<u64> {
        let start = if self.a == 0 { self.q } else { self.a };
        (start..=self.n).step_by(self.q as usize).collect()
    }

    /// `⌊(N - a)/q⌋ + [a >= 1]`, with floor division.
    pub fn len(&self) -> u64 {
        let (n, q, a) = (self.n as i128, self.q as i128, self.a as i128);
        let count = Integer::div_floor(&(n - a), &q) + i128::from(a >= 1);
        count.max(0) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 1 when `a = 0`, else 0.
    pub fn indicator_a(&self) -> u8 {
        u8::from(self.a == 0)
    }
}

#[derive(Clone, Debug)]
pub struct EnergyConfig {
    pub pair_budget: u64,
    pub chunked: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            pair_budget: DEFAULT_PAIR_BUDGET,
            chunked: false,
        }
    }
}

trait ProductKey: Ord + Clone + Send + Sync {
    fn times(&self, other: &Self) -> Self;
    fn bucket(&self, partitions: u64) -> u64;
}

impl ProductKey for i64 {
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn bucket(&self, partitions: u64) -> u64 {
        mix64(*self as u64) % partitions
    }
}

impl ProductKey for i128 {
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn bucket(&self, partitions: u64) -> u64 {
        let bits = *self as u128;
        mix64(bits as u64 ^ mix64((bits >> 64) as u64)) % partitions
    }
}

impl ProductKey for BigInt {
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn bucket(&self, partitions: u64) -> u64 {
        self.to_signed_bytes_le()
            .chunks(8)
            .fold(0u64, |h, chunk| {
                let mut word = [0u8; 8];
                word[..chunk.len()].copy_from_slice(chunk);
                mix64(h ^ u64::from_le_bytes(word))
            })
            % partitions
    }
}

/// Values in the narrowest representation whose pair products cannot
/// overflow.
enum ValueSet {
    Narrow(Vec<i64>),
    Wide(Vec<i128>),
    Big(Vec<BigInt>),
}

impl ValueSet {
    fn from_values(values: &[BigInt]) -> Self {
        let max = values.iter().map(|v| v.abs()).max().unwrap_or_default();
        let sq = &max * &max;
        if sq < BigInt::from(i64::MAX) {
            ValueSet::Narrow(values.iter().map(|v| v.to_i64().expect("fits")).collect())
        } else if sq < BigInt::from(i128::MAX) {
            ValueSet::Wide(values.iter().map(|v| v.to_i128().expect("fits")).collect())
        } else {
            ValueSet::Big(values.to_vec())
        }
    }
}

/// Distinct values with multiplicities, ascending.
fn grouped<K: Ord + Clone>(values: &[K]) -> Vec<(K, u64)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(K, u64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((u, c)) if *u == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Sorted `(product, ordered-pair multiplicity)` for products falling in
/// `partition` (all products when `partitions == 1`).
fn product_multiset<K: ProductKey>(
    distinct: &[(K, u64)],
    partition: u64,
    partitions: u64,
) -> Vec<(K, u64)> {
    let mut pairs: Vec<(K, u64)> = (0..distinct.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (u, cu) = &distinct[i];
            distinct[i..].iter().enumerate().filter_map(move |(off, (v, cv))| {
                let key = u.times(v);
                if partitions > 1 && key.bucket(partitions) != partition {
                    return None;
                }
                let weight = if off == 0 { cu * cu } else { 2 * cu * cv };
                Some((key, weight))
            })
        })
        .collect();
    pairs.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<(K, u64)> = Vec::with_capacity(pairs.len());
    for (k, w) in pairs {
        match merged.last_mut() {
            Some((u, m)) if *u == k => *m += w,
            _ => merged.push((k, w)),
        }
    }
    merged
}

fn pair_count(distinct: usize) -> u64 {
    let d = distinct as u64;
    d * (d + 1) / 2
}

fn partitions_for(pairs: u64, config: &EnergyConfig) -> Result<u64, EnergyError> {
    if pairs <= config.pair_budget {
        return Ok(1);
    }
    if !config.chunked {
        return Err(EnergyError::Budget {
            pairs,
            limit: config.pair_budget,
        });
    }
    Ok(pairs.div_ceil(config.pair_budget.max(1)))
}

fn self_energy<K: ProductKey>(values: &[K], config: &EnergyConfig) -> Result<(u64, u64), EnergyError> {
    let distinct = grouped(values);
    let parts = partitions_for(pair_count(distinct.len()), config)?;
    let total = (0..parts)
        .map(|part| {
            product_multiset(&distinct, part, parts)
                .iter()
                .map(|(_, m)| m * m)
                .sum::<u64>()
        })
        .sum();
    Ok((total, parts))
}

fn cross_energy<K: ProductKey>(
    left: &[K],
    right: &[K],
    config: &EnergyConfig,
) -> Result<(u64, u64), EnergyError> {
    let dl = grouped(left);
    let dr = grouped(right);
    let pairs = pair_count(dl.len()) + pair_count(dr.len());
    let parts = partitions_for(pairs, config)?;
    let mut total = 0u64;
    for part in 0..parts {
        let a = product_multiset(&dl, part, parts);
        let b = product_multiset(&dr, part, parts);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    total += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    Ok((total, parts))
}

/// `Σ_v m_v²` over the ordered pair products of `values`; returns the count
/// and the number of partitions used.
pub fn energy_of_values(values: &[BigInt], config: &EnergyConfig) -> Result<(u64, u64), EnergyError> {
    match ValueSet::from_values(values) {
        ValueSet::Narrow(v) => self_energy(&v, config),
        ValueSet::Wide(v) => self_energy(&v, config),
        ValueSet::Big(v) => self_energy(&v, config),
    }
}

/// Number of `(x, y, X, Y)` with `left[x] left[y] = right[X] right[Y]`.
pub fn cross_energy_of_values(
    left: &[BigInt],
    right: &[BigInt],
    config: &EnergyConfig,
) -> Result<(u64, u64), EnergyError> {
    let mut all = left.to_vec();
    all.extend_from_slice(right);
    let cut = left.len();
    match ValueSet::from_values(&all) {
        ValueSet::Narrow(v) => {
            let (a, b) = v.split_at(cut);
            cross_energy(a, b, config)
        }
        ValueSet::Wide(v) => {
            let (a, b) = v.split_at(cut);
            cross_energy(a, b, config)
        }
        ValueSet::Big(v) => {
            let (a, b) = v.split_at(cut);
            cross_energy(a, b, config)
        }
    }
}

/// Error exponent of the off-diagonal count: `5/3` for quadratics and
/// `2 - 1/(2(2d-1))` above.
pub fn error_exponent(degree: usize) -> Option<BigRational> {
    match degree {
        0 | 1 => None,
        2 => Some(BigRational::new(5.into(), 3.into())),
        d => {
            let d = d as i64;
            Some(BigRational::from_integer(2.into()) - BigRational::new(1.into(), (2 * (2 * d - 1)).into()))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub range: ProgressionRange,
    pub polynomial: IntPolynomial,
    /// `M = |[N]_{a,q}|`.
    pub members: u64,
    pub total: u64,
    /// Quadruples with `{x1, x2} = {x1', x2'}`: exactly `2M² - M`.
    pub diagonal_arg: u64,
    /// Value multisets agree but arguments do not.
    pub value_diagonal: u64,
    pub nontrivial: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub main_term: BigRational,
    /// `2N²/q²`, the leading term as stated for the asymptotic formula.
    #[serde(serialize_with = "serde_exact::rational")]
    pub asymptotic_main_term: BigRational,
    /// `2 S2² - S4` with `S_k = Σ c_v^k` over value multiplicities: every
    /// quadruple whose value multisets agree.
    pub value_diagonal_baseline: u64,
    /// Exponent of the off-diagonal bound `N^e`, when one is known for this degree.
    #[serde(serialize_with = "serde_exact::opt_rational")]
    pub error_exponent_bound: Option<BigRational>,
    /// `(total - diagonal_arg) / N^exponent` with the `o(1)` term dropped.
    pub offdiag_over_bound: Option<f64>,
    #[serde(serialize_with = "serde_exact::opt_rational")]
    pub generalized_even_center: Option<BigRational>,
    pub zero_values: u64,
    pub negative_values: u64,
    pub partitions: u64,
}

impl EnergyReport {
    pub fn offdiag(&self) -> u64 {
        self.total - self.diagonal_arg
    }
}

/// Estimated number of stored pair products for `range`.
pub fn estimated_pairs(range: &ProgressionRange) -> u64 {
    pair_count(range.len() as usize)
}

pub fn energy(p: &IntPolynomial, range: &ProgressionRange) -> Result<EnergyReport, EnergyError> {
    energy_with(p, range, &EnergyConfig::default())
}

pub fn energy_with(
    p: &IntPolynomial,
    range: &ProgressionRange,
    config: &EnergyConfig,
) -> Result<EnergyReport, EnergyError> {
    let members = range.members();
    if members.is_empty() {
        return Err(EnergyError::EmptyRange { n: range.n });
    }
    let values: Vec<BigInt> = members.par_iter().map(|&x| p.eval_i64(x as i64)).collect();
    let (total, partitions) = energy_of_values(&values, config)?;

    let m = members.len() as u64;
    let diagonal_arg = 2 * m * m - m;
    let mults = grouped(&values);
    let s2: u64 = mults.iter().map(|(_, c)| c * c).sum();
    let s4: u64 = mults.iter().map(|(_, c)| c * c * c * c).sum();
    let value_diagonal_baseline = 2 * s2 * s2 - s4;
    let value_diagonal = value_diagonal_baseline - diagonal_arg;
    let nontrivial = total - value_diagonal_baseline;

    let exponent = error_exponent(p.degree());
    let offdiag_over_bound = exponent.as_ref().map(|e| {
        let e = e.to_f64().expect("small rational");
        (total - diagonal_arg) as f64 / (range.n as f64).powf(e)
    });
    let class = classify(p)?;
    Ok(EnergyReport {
        range: *range,
        polynomial: p.clone(),
        members: m,
        total,
        diagonal_arg,
        value_diagonal,
        nontrivial,
        main_term: BigRational::from_integer(diagonal_arg.into()),
        asymptotic_main_term: BigRational::new(
            (2 * range.n as u128 * range.n as u128).into(),
            (range.q as u128 * range.q as u128).into(),
        ),
        value_diagonal_baseline,
        error_exponent_bound: exponent,
        offdiag_over_bound,
        generalized_even_center: class.generalized_even_center,
        zero_values: values.iter().filter(|v| v.is_zero()).count() as u64,
        negative_values: values.iter().filter(|v| v.is_negative()).count() as u64,
        partitions,
    })
}

/// Count of `(x, y, X, Y) ∈ S⁴` with `P1(x) P1(y) = P2(X) P2(Y)`.
pub fn energy_cross(
    p1: &IntPolynomial,
    p2: &IntPolynomial,
    range: &ProgressionRange,
    config: &EnergyConfig,
) -> Result<u64, EnergyError> {
    let members = range.members();
    if members.is_empty() {
        return Err(EnergyError::EmptyRange { n: range.n });
    }
    let left: Vec<BigInt> = members.iter().map(|&x| p1.eval_i64(x as i64)).collect();
    let right: Vec<BigInt> = members.iter().map(|&x| p2.eval_i64(x as i64)).collect();
    Ok(cross_energy_of_values(&left, &right, config)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpfMode {
    /// All four indices share the same largest prime.
    SamePrimeAllFour,
    /// `P⁺(n1) = P⁺(n2)`, `P⁺(n3) = P⁺(n4)` and `P(n1)P(n3) = P(n2)P(n4)`.
    PairedPrimes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PairedPrimeCounts {
    pub total: u64,
    /// Both pairs share one largest prime.
    pub same_prime: u64,
    pub distinct_primes: u64,
}

fn abs_groups(table: &FactorTable, x: u64) -> Vec<(u128, Vec<u128>)> {
    table
        .largest_prime_groups(x)
        .into_iter()
        .map(|(p, ns)| (p, ns.iter().map(|&n| table.row(n).abs_value()).collect()))
        .collect()
}

/// Energy counts constrained by largest prime factors, over `n <= x`.
///
/// Products compare `|P(n)|` (the argument of `f`); rows with
/// `|P(n)| <= 1` have no largest prime and are never counted.
pub fn energy_constrained_lpf(table: &FactorTable, x: u64, mode: LpfMode) -> u64 {
    match mode {
        LpfMode::SamePrimeAllFour => abs_groups(table, x)
            .iter()
            .map(|(_, vals)| {
                let vals: Vec<BigInt> = vals.iter().map(|&v| BigInt::from(v)).collect();
                energy_of_values(&vals, &EnergyConfig { pair_budget: u64::MAX, chunked: false })
                    .expect("unbounded budget")
                    .0
            })
            .sum(),
        LpfMode::PairedPrimes => paired_prime_counts(table, x).total,
    }
}

/// `a/b` in lowest terms.
pub(crate) fn reduced_ratio(a: u128, b: u128) -> (u128, u128) {
    let g = a.gcd(&b);
    (a / g, b / g)
}

pub fn paired_prime_counts(table: &FactorTable, x: u64) -> PairedPrimeCounts {
    // a1 a3 = a2 a4  <=>  a1/a2 = a4/a3, so the count is Σ_r A_r² over the
    // ratio multiplicities of same-group pairs
    let mut by_ratio: HashMap<(u128, u128), u64> = HashMap::new();
    let mut by_ratio_prime: HashMap<((u128, u128), u128), u64> = HashMap::new();
    for (p, vals) in abs_groups(table, x) {
        for &a in &vals {
            for &b in &vals {
                let r = reduced_ratio(a, b);
                *by_ratio.entry(r).or_default() += 1;
                *by_ratio_prime.entry((r, p)).or_default() += 1;
            }
        }
    }
    let total: u64 = by_ratio.values().map(|c| c * c).sum();
    let same_prime: u64 = by_ratio_prime.values().map(|c| c * c).sum();
    PairedPrimeCounts {
        total,
        same_prime,
        distinct_primes: total - same_prime,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitPoint {
    pub n: u64,
    pub offdiag: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentFit {
    #[serde(serialize_with = "serde_exact::rational")]
    pub exponent: BigRational,
    pub points: Vec<FitPoint>,
    /// Least-squares slope of `ln offdiag` against `ln N`.
    pub slope: Option<f64>,
}

/// Rejects polynomials outside the scope of the paucity bound.
pub fn require_clt_admissible(p: &IntPolynomial) -> Result<(), EnergyError> {
    let class = classify(p)?;
    if let Some(pp) = &class.pure_power {
        return Err(EnergyError::ExcludedForm(format!(
            "{p} has the excluded form w(x+c)^d with w = {}, c = {}",
            pp.w,
            serde_exact::rational_string(&pp.c)
        )));
    }
    if class.degree < 2 {
        return Err(EnergyError::ExcludedForm(format!("{p} has degree below 2")));
    }
    Ok(())
}

pub fn exponent_fit(
    p: &IntPolynomial,
    grid: &[u64],
    config: &EnergyConfig,
) -> Result<ExponentFit, EnergyError> {
    require_clt_admissible(p)?;
    let exponent = error_exponent(p.degree()).expect("degree >= 2");
    let e = exponent.to_f64().expect("small rational");
    let mut points = Vec::with_capacity(grid.len());
    for &n in grid {
        let report = energy_with(p, &ProgressionRange::full(n), config)?;
        let offdiag = report.offdiag();
        points.push(FitPoint {
            n,
            offdiag,
            ratio: offdiag as f64 / (n as f64).powf(e),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|pt| pt.offdiag > 0)
        .map(|pt| ((pt.n as f64).ln(), (pt.offdiag as f64).ln()))
        .unzip();
    Ok(ExponentFit {
        exponent,
        slope: stats::ols_slope(&xs, &ys),
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BpBound {
    pub value: f64,
    pub ln_value: f64,
    /// Whether `N >= exp(d⁶)`.
    pub precondition_holds: bool,
}

/// `N^{1/d} exp(12 sqrt(d ln N ln ln N))`.
pub fn bp_bound(d: usize, n: u64) -> Result<BpBound, EnergyError> {
    if d < 2 || n < 16 {
        return Err(EnergyError::BpDomain { d, n });
    }
    let ln_n = (n as f64).ln();
    let ln_value = ln_n / d as f64 + 12.0 * (d as f64 * ln_n * ln_n.ln()).sqrt();
    Ok(BpBound {
        value: ln_value.exp(),
        ln_value,
        precondition_holds: ln_n >= (d as f64).powi(6),
    })
}
