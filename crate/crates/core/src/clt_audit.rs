//! Central limit statistics for `X_N = N^{-1/2} Σ_{n <= N} f(P(n))` and the
//! exact martingale-condition counts behind them.
//!
//! Monte-Carlo replicates are independent and run in parallel; each one sums
//! its terms in ascending `n`, so samples are bit-identical at any thread
//! count.
//!
//! The martingale pieces are `M_p = Re (N/2)^{-1/2} Σ_{P⁺(P(n)) = p} f(P(n))`.
//! Expanding `(Re Z)^k = 2^{-k} (Z + Z̄)^k` and using
//! `E Π f(a_i)^{±1} = [Π₊ a_i = Π₋ a_i]` (all `a_i > 1`) gives, with
//! `G_p` the indices whose largest prime is `p`:
//!
//! * `Σ_p E M_p² = V / N`, `V = #{(n1, n2) : |P(n1)| = |P(n2)| > 1}`;
//! * `Σ_p E M_p⁴ = (3/2 ΣE_p + 2 ΣC_p) / N²`, with `E_p` the energy of
//!   `G_p` and `C_p = #{a1 = a2 a3 a4}` inside `G_p`;
//! * `Σ_{p≠q} E M_p² M_q² = (D + 2K) / N²`, where for `n1, n2 ∈ G_p`,
//!   `n3, n4 ∈ G_q`, `p ≠ q`, `D` counts `a1 a3 = a2 a4` and `K` counts
//!   `a1 = a2 a3 a4`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::energy::{energy_of_values, paired_prime_counts, require_clt_admissible, EnergyConfig, EnergyError};
use crate::polynomial::IntPolynomial;
use crate::rmf::{PhaseTable, SteinhausSampler};
use crate::serde_exact;
use crate::sieve::{factor_values_with, FactorTable, SieveConfig, SieveError};
use crate::stats::{self, CovarianceEstimate};
use crate::{Complex64, SampleSummary64};

/// Fewest replicates accepted by [`run_clt`].
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CltError {
    #[error("at least {MIN_REPLICATES} replicates are required (got {0})")]
    TooFewReplicates(usize),
    #[error("N must be at least 1")]
    EmptyRange,
    #[error("McLeish grid point {n} exceeds the table range {table_n}")]
    GridBeyondTable { n: u64, table_n: u64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
}

#[derive(Clone, Debug)]
pub struct CltConfig {
    pub n: u64,
    pub reps: usize,
    pub seed: u64,
    /// Compute the exact fourth moment (energy of `|P([N])|`).
    pub exact_moments: bool,
    pub keep_samples: bool,
    pub energy: EnergyConfig,
    pub sieve: SieveConfig,
}

impl CltConfig {
    pub fn new(n: u64, reps: usize, seed: u64) -> Self {
        CltConfig {
            n,
            reps,
            seed,
            exact_moments: true,
            keep_samples: false,
            energy: EnergyConfig::default(),
            sieve: SieveConfig::default(),
        }
    }
}

fn ser_samples<S: Serializer>(v: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(v) => s.collect_seq(v.iter().map(|z| [z.re, z.im])),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CltStats {
    pub mean_re: SampleSummary64,
    pub mean_im: SampleSummary64,
    pub var_re: f64,
    pub var_im: f64,
    pub cov_re_im: CovarianceEstimate<f64>,
    /// Sample summary of `|X|²`.
    pub second_moment: SampleSummary64,
    /// Sample summary of `|X|⁴`.
    pub fourth_moment: SampleSummary64,
    /// KS distances of `Re X`, `Im X` to `N(0, 1/2)`.
    pub ks_re: f64,
    pub ks_im: f64,
    /// `#{(n1, n2) : |P(n1)| = |P(n2)| != 0} / N`.
    #[serde(serialize_with = "serde_exact::rational")]
    pub exact_second_moment: BigRational,
    /// `E^×(|P([N])|) / N²` over the nonzero values.
    #[serde(serialize_with = "serde_exact::opt_rational")]
    pub exact_fourth_moment: Option<BigRational>,
    pub second_moment_z: f64,
    pub fourth_moment_z: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub polynomial: IntPolynomial,
    pub n: u64,
    pub reps: usize,
    pub seed: u64,
    /// Terms with `|P(n)| = 1`, each contributing the constant 1.
    pub degenerate_terms: u64,
    /// Roots of `P` in `[1, N]`, skipped.
    pub zero_values: u64,
    /// Some `P(n)` is negative; `f` is applied to `|P(n)|`.
    pub negative_values: bool,
    pub stats: CltStats,
    #[serde(serialize_with = "ser_samples")]
    pub samples: Option<Vec<Complex64>>,
}

/// Samples `X_N` for replicates `0..reps`, replicate `r` seeded with
/// `mix_seed(seed, r)`.
pub fn clt_samples(table: &FactorTable, n: u64, reps: usize, seed: u64) -> Vec<Complex64> {
    let phases = PhaseTable::new(table, n);
    let base = SteinhausSampler::new(seed);
    let scale = 1.0 / (n as f64).sqrt();
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let values = phases.values(&phases.angles(&base.replicate(r)));
            values.iter().fold(Complex64::new(0.0, 0.0), |acc, z| acc + z) * scale
        })
        .collect()
}

fn nonzero_abs_values(table: &FactorTable, n: u64) -> Vec<BigInt> {
    table
        .rows_upto(n)
        .iter()
        .filter(|r| !r.is_zero())
        .map(|r| BigInt::from(r.abs_value()))
        .collect()
}

/// Count of ordered pairs with equal values.
fn repeated_pairs<T: Ord + Clone>(values: &[T]) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted
        .chunk_by(|a, b| a == b)
        .map(|c| (c.len() as u64).pow(2))
        .sum()
}

pub fn run_clt(p: &IntPolynomial, config: &CltConfig) -> Result<CltReport, CltError> {
    require_clt_admissible(p)?;
    if config.reps < MIN_REPLICATES {
        return Err(CltError::TooFewReplicates(config.reps));
    }
    if config.n == 0 {
        return Err(CltError::EmptyRange);
    }
    let table = factor_values_with(p, config.n, &config.sieve)?;
    run_clt_on(&table, config)
}

/// [`run_clt`] over a prebuilt table covering `[1, config.n]`.
pub fn run_clt_on(table: &FactorTable, config: &CltConfig) -> Result<CltReport, CltError> {
    let n = config.n;
    if n > table.n() {
        return Err(CltError::GridBeyondTable { n, table_n: table.n() });
    }
    let samples = clt_samples(table, n, config.reps, config.seed);
    let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
    let im: Vec<f64> = samples.iter().map(|z| z.im).collect();
    let sq: Vec<f64> = samples.iter().map(|z| z.norm_sqr()).collect();
    let quartic: Vec<f64> = sq.iter().map(|s| s * s).collect();

    let values = nonzero_abs_values(table, n);
    let nn = BigInt::from(n);
    let exact_second_moment = BigRational::new(repeated_pairs(&values).into(), nn.clone());
    let exact_fourth_moment = if config.exact_moments {
        let (e, _) = energy_of_values(&values, &config.energy)?;
        Some(BigRational::new(e.into(), &nn * &nn))
    } else {
        None
    };

    let second_moment = SampleSummary64::of(&sq);
    let fourth_moment = SampleSummary64::of(&quartic);
    let to_f64 = |r: &BigRational| r.to_f64().expect("finite");
    let half_normal = |x: f64| stats::normal_cdf(x, 0.0, 0.5);
    let stats = CltStats {
        mean_re: SampleSummary64::of(&re),
        mean_im: SampleSummary64::of(&im),
        var_re: SampleSummary64::of(&re).variance,
        var_im: SampleSummary64::of(&im).variance,
        cov_re_im: stats::covariance(&re, &im),
        ks_re: stats::ks_distance(&re, half_normal),
        ks_im: stats::ks_distance(&im, half_normal),
        second_moment_z: second_moment.z_score(to_f64(&exact_second_moment)),
        fourth_moment_z: exact_fourth_moment.as_ref().map(|e| fourth_moment.z_score(to_f64(e))),
        second_moment,
        fourth_moment,
        exact_second_moment,
        exact_fourth_moment,
    };
    let rows = table.rows_upto(n);
    Ok(CltReport {
        polynomial: table.polynomial().clone(),
        n,
        reps: config.reps,
        seed: config.seed,
        degenerate_terms: rows.iter().filter(|r| r.abs_value() == 1).count() as u64,
        zero_values: rows.iter().filter(|r| r.is_zero()).count() as u64,
        negative_values: rows.iter().any(|r| r.value < 0),
        stats,
        samples: config.keep_samples.then_some(samples),
    })
}

/// Raw integer counts behind one audit row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct McLeishCounts {
    /// `V`: ordered pairs with equal values `> 1`.
    pub repeated_pairs: u64,
    /// `Σ_p E_p`.
    pub within_energy: u64,
    /// `Σ_p C_p`.
    pub within_chain: u64,
    /// `D`.
    pub cross_paired: u64,
    /// `K`.
    pub cross_chain: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McLeishRow {
    pub n: u64,
    #[serde(serialize_with = "serde_exact::rational")]
    pub variance_sum: BigRational,
    #[serde(serialize_with = "serde_exact::rational")]
    pub lindeberg_sum: BigRational,
    #[serde(serialize_with = "serde_exact::rational")]
    pub cross_term: BigRational,
    pub counts: McLeishCounts,
    /// `P` injective on `[N]` with every `|P(n)| > 1`.
    pub injective_nondegenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct McLeishAudit {
    pub polynomial: IntPolynomial,
    pub rows: Vec<McLeishRow>,
}

fn mcleish_counts(table: &FactorTable, n: u64) -> McLeishCounts {
    let groups: Vec<(u128, Vec<u128>)> = table
        .largest_prime_groups(n)
        .into_iter()
        .map(|(p, ns)| (p, ns.iter().map(|&m| table.row(m).abs_value()).collect()))
        .collect();

    let unbounded = EnergyConfig {
        pair_budget: u64::MAX,
        chunked: false,
    };
    let mut repeated = 0;
    let mut within_energy = 0;
    // quotient[(t, p)] = #{(n1, n2) ∈ G_p² : a1 = t a2}
    // product[(t, p)] = #{(n3, n4) ∈ G_p² : a3 a4 = t}
    let mut quotient: HashMap<(u128, u128), u64> = HashMap::new();
    let mut product: HashMap<(u128, u128), u64> = HashMap::new();
    for (p, vals) in &groups {
        repeated += repeated_pairs(vals);
        let big: Vec<BigInt> = vals.iter().map(|&v| BigInt::from(v)).collect();
        within_energy += energy_of_values(&big, &unbounded).expect("unbounded budget").0;
        for &a in vals {
            for &b in vals {
                if a % b == 0 {
                    *quotient.entry((a / b, *p)).or_default() += 1;
                }
                if let Some(t) = a.checked_mul(b) {
                    *product.entry((t, *p)).or_default() += 1;
                }
            }
        }
    }
    let mut quotient_total: HashMap<u128, u64> = HashMap::new();
    for (&(t, _), &c) in &quotient {
        *quotient_total.entry(t).or_default() += c;
    }
    let mut product_total: HashMap<u128, u64> = HashMap::new();
    for (&(t, _), &c) in &product {
        *product_total.entry(t).or_default() += c;
    }
    let within_chain: u64 = quotient
        .iter()
        .map(|(key, &c)| c * product.get(key).copied().unwrap_or(0))
        .sum();
    let all_chain: u64 = quotient_total
        .iter()
        .map(|(t, &c)| c * product_total.get(t).copied().unwrap_or(0))
        .sum();
    McLeishCounts {
        repeated_pairs: repeated,
        within_energy,
        within_chain,
        cross_paired: paired_prime_counts(table, n).distinct_primes,
        cross_chain: all_chain - within_chain,
    }
}

/// Exact McLeish sums for each `N` in `grid`.
pub fn mcleish_audit(table: &FactorTable, grid: &[u64]) -> Result<McLeishAudit, CltError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        if n == 0 {
            return Err(CltError::EmptyRange);
        }
        if n > table.n() {
            return Err(CltError::GridBeyondTable { n, table_n: table.n() });
        }
        let c = mcleish_counts(table, n);
        let nn = BigInt::from(n);
        let n2 = &nn * &nn;
        let lindeberg = BigRational::new(BigInt::from(3) * c.within_energy + BigInt::from(4) * c.within_chain, BigInt::from(2) * &n2);
        let rows_n = table.rows_upto(n);
        let injective_nondegenerate = rows_n.iter().all(|r| r.abs_value() > 1)
            && repeated_pairs(&rows_n.iter().map(|r| r.value).collect::<Vec<_>>()) == n;
        rows.push(McLeishRow {
            n,
            variance_sum: BigRational::new(c.repeated_pairs.into(), nn.clone()),
            lindeberg_sum: lindeberg,
            cross_term: BigRational::new(BigInt::from(c.cross_paired) + BigInt::from(2) * c.cross_chain, n2),
            counts: c,
            injective_nondegenerate,
        });
    }
    Ok(McLeishAudit {
        polynomial: table.polynomial().clone(),
        rows,
    })
}
