//! Multi-scale prime sets and split sums.
//!
//! On a grid `x_1 < ... < x_k`:
//!
//! * `E_i`: primes `p >= x_i ln x_i / (2d²)` dividing some `P(n)` with
//!   `n <= x_i` but none with `n <= x_{i-1}` (`x_0 = 0`);
//! * `F_i = E_i \ E_{i-1}`;
//! * `A_i ⊆ F_i`: greedy in ascending prime order, keeping `p` unless an
//!   already kept prime divides a common `P(n)`, `n <= x_i`.
//!
//! With `𝓐 = ∪ A_j`, each `n <= x_i` with `P(n) != 0` falls in exactly one
//! class: `S1` (its only 𝓐-prime lies in `A_i`), `S2` (some 𝓐-prime outside
//! `A_i`) or `S3` (no 𝓐-prime).
//!
//! The grid is geometric, `x_i = round(X r^{i-1})`, a desk-scale stand-in for
//! super-exponentially spaced scales.

use std::collections::{HashMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::polynomial::{classify, IntPolynomial, PolyError};
use crate::rmf::{f_of, AngleSource, ConditionalSampler, PhaseTable, SteinhausSampler};
use crate::serde_exact;
use crate::sieve::{factor_values_with, FactorTable, SieveConfig, SieveError, DEFAULT_MAX_ROWS};
use crate::stats::{self, CovarianceEstimate};
use crate::{Complex64, SampleSummary64};

/// Label attached to every report built on a geometric grid.
pub const GRID_SURROGATE: &str = "geometric grid x_i = round(X * ratio^(i-1)) replaces super-exponential scales";

/// Quantile levels reported for the max statistic.
pub const MAX_STAT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FluctError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("top grid point {top} exceeds the factorization budget of {limit} rows")]
    Budget { top: String, limit: u64 },
    #[error("{0} is not admissible: degree >= 2 without splitting into rational linear factors is required")]
    NotAdmissible(String),
    #[error("scale index {i} outside 1..={k}")]
    ScaleIndex { i: usize, k: usize },
    #[error("table covers [1, {table_n}] but the grid reaches {top}")]
    TableTooSmall { table_n: u64, top: u64 },
    #[error("at least 2 replicates are required (got {0})")]
    TooFewReplicates(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleGrid {
    pub x: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub ratio: BigRational,
    pub points: Vec<u64>,
    pub surrogate: &'static str,
}

impl ScaleGrid {
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn top(&self) -> u64 {
        *self.points.last().expect("k >= 2")
    }
}

/// `x_i = round(X · ratio^{i-1})`, `i = 1..=k`.
pub fn build_grid(x: u64, k: usize, ratio: &BigRational, max_rows: u64) -> Result<ScaleGrid, FluctError> {
    if x < 100 {
        return Err(FluctError::Grid(format!("X = {x} must be at least 100")));
    }
    if k < 2 {
        return Err(FluctError::Grid(format!("k = {k} must be at least 2")));
    }
    if *ratio < BigRational::from_integer(2.into()) {
        return Err(FluctError::Grid(format!(
            "ratio = {} must be at least 2",
            serde_exact::rational_string(ratio)
        )));
    }
    let mut points = Vec::with_capacity(k);
    let mut scale = BigRational::from_integer(x.into());
    for _ in 0..k {
        let point = scale.round().to_integer();
        match point.to_u64().filter(|&v| v <= max_rows) {
            Some(v) => points.push(v),
            None => {
                let top = (BigRational::from_integer(x.into()) * num_traits::pow(ratio.clone(), k - 1))
                    .round()
                    .to_integer();
                return Err(FluctError::Budget {
                    top: top.to_string(),
                    limit: max_rows,
                });
            }
        }
        scale *= ratio;
    }
    Ok(ScaleGrid {
        x,
        ratio: ratio.clone(),
        points,
        surrogate: GRID_SURROGATE,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleSets {
    /// 1-based scale index.
    pub index: usize,
    pub x: u64,
    /// `x ln x / (2d²)`.
    pub threshold: f64,
    #[serde(serialize_with = "ser_primes")]
    pub e: Vec<u128>,
    #[serde(serialize_with = "ser_primes")]
    pub f: Vec<u128>,
    #[serde(serialize_with = "ser_primes")]
    pub a: Vec<u128>,
    /// `|A_i| / x_i`.
    pub a_ratio: f64,
}

fn ser_primes<S: serde::Serializer>(v: &[u128], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|p| p.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct PrimeSetFamily {
    pub degree: usize,
    pub scales: Vec<ScaleSets>,
    /// Scales whose `A_i` came out empty.
    pub empty_a: Vec<usize>,
    #[serde(skip)]
    owner: HashMap<u128, usize>,
}

impl PrimeSetFamily {
    pub fn k(&self) -> usize {
        self.scales.len()
    }

    pub fn scale(&self, i: usize) -> Result<&ScaleSets, FluctError> {
        if i == 0 || i > self.k() {
            return Err(FluctError::ScaleIndex { i, k: self.k() });
        }
        Ok(&self.scales[i - 1])
    }

    /// Scale index `j` with `p ∈ A_j`.
    pub fn owner(&self, p: u128) -> Option<usize> {
        self.owner.get(&p).copied()
    }

    /// `𝓐 = ∪ A_j`.
    pub fn all_a(&self) -> HashSet<u128> {
        self.owner.keys().copied().collect()
    }
}

pub fn threshold(x: u64, degree: usize) -> f64 {
    let x = x as f64;
    x * x.ln() / (2.0 * (degree * degree) as f64)
}

pub fn build_prime_sets(table: &FactorTable, grid: &ScaleGrid) -> Result<PrimeSetFamily, FluctError> {
    if table.n() < grid.top() {
        return Err(FluctError::TableTooSmall {
            table_n: table.n(),
            top: grid.top(),
        });
    }
    let degree = table.polynomial().degree();
    let mut scales: Vec<ScaleSets> = Vec::with_capacity(grid.k());
    let mut owner = HashMap::new();
    let mut prev_e: HashSet<u128> = HashSet::new();
    let mut prev_x = 0u64;
    for (idx, &x) in grid.points.iter().enumerate() {
        let th = threshold(x, degree);
        // ascending by prime: prime_to_indices is a BTreeMap
        let e: Vec<u128> = table
            .prime_to_indices()
            .iter()
            .filter(|(&p, ns)| p as f64 >= th && ns[0] <= x && ns[0] > prev_x)
            .map(|(&p, _)| p)
            .collect();
        let f: Vec<u128> = e.iter().copied().filter(|p| !prev_e.contains(p)).collect();
        let mut blocked: HashSet<u64> = HashSet::new();
        let mut a = Vec::new();
        for &p in &f {
            let ns = table.indices_of(p, x);
            if ns.iter().any(|n| blocked.contains(n)) {
                continue;
            }
            blocked.extend(ns.iter().copied());
            owner.insert(p, idx + 1);
            a.push(p);
        }
        scales.push(ScaleSets {
            index: idx + 1,
            x,
            threshold: th,
            a_ratio: a.len() as f64 / x as f64,
            e: e.clone(),
            f,
            a,
        });
        prev_e = e.into_iter().collect();
        prev_x = x;
    }
    let empty_a = scales.iter().filter(|s| s.a.is_empty()).map(|s| s.index).collect();
    Ok(PrimeSetFamily {
        degree,
        scales,
        empty_a,
        owner,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitClass {
    S1,
    S2,
    S3,
}

/// Class of `n` at scale `i`, or `None` when `P(n) = 0`. For `S1` also the
/// prime of `A_i` dividing `P(n)`.
pub fn classify_index(table: &FactorTable, family: &PrimeSetFamily, i: usize, n: u64) -> Option<(SplitClass, Option<u128>)> {
    let row = table.row(n);
    if row.is_zero() {
        return None;
    }
    let mut own = None;
    for p in row.primes() {
        match family.owner(p) {
            Some(j) if j != i => return Some((SplitClass::S2, None)),
            Some(_) => own = Some(p),
            None => {}
        }
    }
    Some(match own {
        Some(p) => (SplitClass::S1, Some(p)),
        None => (SplitClass::S3, None),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SplitSums {
    pub index: usize,
    pub x: u64,
    pub s1: Complex64,
    pub s2: Complex64,
    pub s3: Complex64,
}

impl SplitSums {
    pub fn total(&self) -> Complex64 {
        self.s1 + self.s2 + self.s3
    }
}

pub fn split_sums(
    source: &impl AngleSource,
    table: &FactorTable,
    family: &PrimeSetFamily,
    i: usize,
) -> Result<SplitSums, FluctError> {
    let x = family.scale(i)?.x;
    let zero = Complex64::new(0.0, 0.0);
    let mut out = SplitSums { index: i, x, s1: zero, s2: zero, s3: zero };
    for n in 1..=x {
        let Some((class, _)) = classify_index(table, family, i, n) else { continue };
        let v = f_of(source, table.row(n)).expect("nonzero row");
        match class {
            SplitClass::S1 => out.s1 += v,
            SplitClass::S2 => out.s2 += v,
            SplitClass::S3 => out.s3 += v,
        }
    }
    Ok(out)
}

fn repeated_pairs(values: &mut [u128]) -> u64 {
    values.sort_unstable();
    values.chunk_by(|a, b| a == b).map(|c| (c.len() as u64).pow(2)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct S2Moment {
    pub index: usize,
    /// `#{n <= x_i : some p ∈ ∪_{j<i} A_j divides P(n)}`.
    pub count: u64,
    /// Ordered pairs of such `n` with `|P(n)| = |P(n')|`: exactly `E|S_{i,2}|²`.
    pub pair_count: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub normalized: BigRational,
    /// `Σ_{j<i} Σ_{p ∈ A_j} d (⌊x_i/p⌋ + 1)`.
    pub upper_bound: u64,
}

pub fn s2_second_moment(table: &FactorTable, family: &PrimeSetFamily, i: usize) -> Result<S2Moment, FluctError> {
    let x = family.scale(i)?.x;
    let mut values: Vec<u128> = (1..=x)
        .filter(|&n| classify_index(table, family, i, n).is_some_and(|(c, _)| c == SplitClass::S2))
        .map(|n| table.row(n).abs_value())
        .collect();
    let count = values.len() as u64;
    let d = family.degree as u64;
    let upper_bound = family.scales[..i - 1]
        .iter()
        .flat_map(|s| &s.a)
        .map(|&p| d * ((x as u128 / p) as u64 + 1))
        .sum();
    Ok(S2Moment {
        index: i,
        count,
        pair_count: repeated_pairs(&mut values),
        normalized: BigRational::new(count.into(), x.into()),
        upper_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceFloor {
    pub index: usize,
    /// `Σ_{p ∈ A_i} #{(n, n') ∈ T_p² : |P(n)| = |P(n')|}` = `E|S_{i,1}|²`.
    pub pair_count: u64,
    /// `Σ_p |T_p|`.
    pub diagonal: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub mu: BigRational,
    #[serde(serialize_with = "serde_exact::rational")]
    pub lower_bound: BigRational,
}

/// `μ_i = pair_count / (2 x_i)` with `T_p = {n <= x_i : p | P(n), no other
/// 𝓐-prime divides P(n)}`.
pub fn variance_floor(table: &FactorTable, family: &PrimeSetFamily, i: usize) -> Result<VarianceFloor, FluctError> {
    let x = family.scale(i)?.x;
    let mut by_prime: HashMap<u128, Vec<u128>> = HashMap::new();
    for n in 1..=x {
        if let Some((SplitClass::S1, Some(p))) = classify_index(table, family, i, n) {
            by_prime.entry(p).or_default().push(table.row(n).abs_value());
        }
    }
    let diagonal: u64 = by_prime.values().map(|v| v.len() as u64).sum();
    let pair_count: u64 = by_prime.values_mut().map(|v| repeated_pairs(v)).sum();
    let two_x = BigInt::from(2 * x);
    Ok(VarianceFloor {
        index: i,
        pair_count,
        diagonal,
        mu: BigRational::new(pair_count.into(), two_x.clone()),
        lower_bound: BigRational::new(diagonal.into(), two_x),
    })
}

#[derive(Clone, Debug)]
pub struct FluctConfig {
    pub x: u64,
    pub k: usize,
    pub ratio: BigRational,
    pub reps: usize,
    pub seed: u64,
    /// Freeze `f(p)` for `p ∉ 𝓐` across replicates.
    pub conditional: bool,
    pub sieve: SieveConfig,
}

impl FluctConfig {
    pub fn new(x: u64, k: usize, ratio: u64, reps: usize, seed: u64) -> Self {
        FluctConfig {
            x,
            k,
            ratio: BigRational::from_integer(ratio.into()),
            reps,
            seed,
            conditional: false,
            sieve: SieveConfig { max_rows: DEFAULT_MAX_ROWS },
        }
    }
}

/// Split sums of one replicate at every scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSplit {
    pub splits: Vec<SplitSums>,
    /// `Σ_{n <= x_i} f(P(n))` in ascending `n`.
    pub partial_sums: Vec<Complex64>,
    pub max_stat: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleSummary {
    pub index: usize,
    pub x: u64,
    pub threshold: f64,
    pub e_size: usize,
    pub f_size: usize,
    pub a_size: usize,
    pub a_ratio: f64,
    /// `|A_i| >= |F_i| / d`.
    pub greedy_bound_holds: bool,
    pub variance_floor: VarianceFloor,
    pub s2: S2Moment,
    /// Monte-Carlo `|S_{i,1}|²`, to compare with `variance_floor.pair_count`.
    pub s1_second_moment: SampleSummary64,
    pub s1_second_moment_z: f64,
    /// Empirical `Var(Re S_{i,1}) / x_i`, an estimate of `μ_i`.
    pub re_s1_variance_over_x: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceEntry {
    pub i: usize,
    pub j: usize,
    pub estimate: CovarianceEstimate<f64>,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FluctReport {
    pub polynomial: IntPolynomial,
    pub grid: ScaleGrid,
    pub reps: usize,
    pub seed: u64,
    pub conditional: bool,
    pub family: PrimeSetFamily,
    pub scales: Vec<ScaleSummary>,
    pub max_stat_quantile_levels: Vec<f64>,
    pub max_stat_quantiles: Vec<f64>,
    /// Quantiles divided by `sqrt(max(1, ln ln X))`.
    pub max_stat_normalized_quantiles: Vec<f64>,
    /// `Cov(Re S_{i,1}, Re S_{j,1})` for `i < j`.
    pub re_s1_covariances: Vec<CovarianceEntry>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateSplit>,
}

fn clamped_lnln(x: u64) -> f64 {
    (x as f64).ln().ln().max(1.0)
}

pub fn run_fluct(p: &IntPolynomial, config: &FluctConfig) -> Result<FluctReport, FluctError> {
    let class = classify(p)?;
    if !class.fluct_admissible {
        return Err(FluctError::NotAdmissible(p.to_string()));
    }
    if config.reps < 2 {
        return Err(FluctError::TooFewReplicates(config.reps));
    }
    let grid = build_grid(config.x, config.k, &config.ratio, config.sieve.max_rows)?;
    let table = factor_values_with(p, grid.top(), &config.sieve)?;
    let family = build_prime_sets(&table, &grid)?;
    run_fluct_on(&table, grid, family, config)
}

/// Per-scale class codes for the rows of `phases`: 0 beyond `x_i`, then
/// 1, 2, 3 for `S1`, `S2`, `S3`.
fn class_codes(table: &FactorTable, family: &PrimeSetFamily, phases: &PhaseTable) -> Vec<Vec<u8>> {
    family
        .scales
        .iter()
        .map(|s| {
            phases
                .ns()
                .iter()
                .map(|&n| {
                    if n > s.x {
                        return 0;
                    }
                    match classify_index(table, family, s.index, n).expect("nonzero row").0 {
                        SplitClass::S1 => 1,
                        SplitClass::S2 => 2,
                        SplitClass::S3 => 3,
                    }
                })
                .collect()
        })
        .collect()
}

fn replicate_split(
    source: &impl AngleSource,
    phases: &PhaseTable,
    codes: &[Vec<u8>],
    points: &[u64],
) -> ReplicateSplit {
    let values = phases.values(&phases.angles(source));
    let zero = Complex64::new(0.0, 0.0);
    let mut splits: Vec<SplitSums> = points
        .iter()
        .enumerate()
        .map(|(i, &x)| SplitSums { index: i + 1, x, s1: zero, s2: zero, s3: zero })
        .collect();
    let mut partial_sums = vec![zero; points.len()];
    for (row, v) in values.iter().enumerate() {
        let n = phases.ns()[row];
        for (i, split) in splits.iter_mut().enumerate() {
            if n > points[i] {
                continue;
            }
            partial_sums[i] += v;
            match codes[i][row] {
                1 => split.s1 += v,
                2 => split.s2 += v,
                _ => split.s3 += v,
            }
        }
    }
    let max_stat = partial_sums
        .iter()
        .zip(points)
        .map(|(s, &x)| s.norm() / (x as f64 * clamped_lnln(x)).sqrt())
        .fold(0.0, f64::max);
    ReplicateSplit {
        splits,
        partial_sums,
        max_stat,
    }
}

/// Monte-Carlo over a prebuilt table and family.
pub fn run_fluct_on(
    table: &FactorTable,
    grid: ScaleGrid,
    family: PrimeSetFamily,
    config: &FluctConfig,
) -> Result<FluctReport, FluctError> {
    if config.reps < 2 {
        return Err(FluctError::TooFewReplicates(config.reps));
    }
    let phases = PhaseTable::new(table, grid.top());
    let codes = class_codes(table, &family, &phases);
    let base = SteinhausSampler::new(config.seed);
    let a_set = family.all_a();
    let replicates: Vec<ReplicateSplit> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            if config.conditional {
                let source = ConditionalSampler {
                    frozen: base,
                    fresh: base.replicate(r),
                    resampled: &a_set,
                };
                replicate_split(&source, &phases, &codes, &grid.points)
            } else {
                replicate_split(&base.replicate(r), &phases, &codes, &grid.points)
            }
        })
        .collect();

    let mut scales = Vec::with_capacity(family.k());
    for s in &family.scales {
        let floor = variance_floor(table, &family, s.index)?;
        let s2 = s2_second_moment(table, &family, s.index)?;
        let s1: Vec<Complex64> = replicates.iter().map(|r| r.splits[s.index - 1].s1).collect();
        let sq: Vec<f64> = s1.iter().map(|z| z.norm_sqr()).collect();
        let re: Vec<f64> = s1.iter().map(|z| z.re).collect();
        let second = SampleSummary64::of(&sq);
        scales.push(ScaleSummary {
            index: s.index,
            x: s.x,
            threshold: s.threshold,
            e_size: s.e.len(),
            f_size: s.f.len(),
            a_size: s.a.len(),
            a_ratio: s.a_ratio,
            greedy_bound_holds: s.a.len() * family.degree >= s.f.len(),
            s1_second_moment_z: second.z_score(floor.pair_count as f64),
            s1_second_moment: second,
            re_s1_variance_over_x: SampleSummary64::of(&re).variance / s.x as f64,
            variance_floor: floor,
            s2,
        });
    }

    let mut re_s1_covariances = Vec::new();
    for i in 0..family.k() {
        for j in i + 1..family.k() {
            let xi: Vec<f64> = replicates.iter().map(|r| r.splits[i].s1.re).collect();
            let xj: Vec<f64> = replicates.iter().map(|r| r.splits[j].s1.re).collect();
            let estimate = stats::covariance(&xi, &xj);
            re_s1_covariances.push(CovarianceEntry {
                i: i + 1,
                j: j + 1,
                z: estimate.covariance / estimate.std_error,
                estimate,
            });
        }
    }

    let max_stats: Vec<f64> = replicates.iter().map(|r| r.max_stat).collect();
    let max_stat_quantiles = stats::quantiles(&max_stats, &MAX_STAT_QUANTILES);
    let norm = clamped_lnln(grid.x).sqrt();
    Ok(FluctReport {
        polynomial: table.polynomial().clone(),
        reps: config.reps,
        seed: config.seed,
        conditional: config.conditional,
        max_stat_quantile_levels: MAX_STAT_QUANTILES.to_vec(),
        max_stat_normalized_quantiles: max_stat_quantiles.iter().map(|q| q / norm).collect(),
        max_stat_quantiles,
        re_s1_covariances,
        scales,
        family,
        grid,
        replicates,
    })
}
