//! Desk-scale experiments on Steinhaus random multiplicative functions
//! evaluated along polynomial values `f(P(n))`.
//!
//! The crate is organized bottom-up:
//!
//! * [`poly`], [`polynomial`]: exact polynomial arithmetic, parsing and the
//!   admissibility classification (pure powers, linear factors, shifted
//!   even polynomials).
//! * [`sieve`]: factorization of every `P(n)`, `n <= N`, with largest prime
//!   factors and the prime to index relation.
//! * [`energy`]: exact multiplicative energy of `P([N]_{a,q})`, split into
//!   diagonal, value-diagonal and nontrivial solutions.
//! * [`rmf`]: reproducible Steinhaus samplers and partial sums.
//! * [`clt_audit`]: Monte-Carlo central limit statistics and exact
//!   martingale-condition counts.
//! * [`fluctuations`]: multi-scale prime sets and split sums behind the
//!   large-fluctuation experiments.
//!
//! Numeric code that does not need exactness ([`stats`]) is generic over
//! `num_traits::Float`; exact code is generic over `num_traits::Num` via
//! [`poly::Poly`]. The aliases below fix the concrete types used by the
//! experiments.

pub mod arith;
pub mod clt_audit;
pub mod energy;
pub mod fluctuations;
pub mod poly;
pub mod polynomial;
pub mod rmf;
pub mod serde_exact;
pub mod sieve;
pub mod stats;

pub use polynomial::{classify, IntPolynomial, PolyError, PolynomialClass};
pub use sieve::{FactorTable, FactoredValue};

/// Exact rational used for thresholds, moments and shifts.
pub type Rational = num_rational::BigRational;
/// Polynomial with rational coefficients.
pub type RatPoly = poly::Poly<Rational>;
/// Polynomial with big-integer coefficients (possibly zero).
pub type BigIntPoly = poly::Poly<num_bigint::BigInt>;
/// Complex values produced by the samplers.
pub type Complex64 = num_complex::Complex<f64>;
/// Summary statistics over `f64` samples.
pub type SampleSummary64 = stats::SampleSummary<f64>;
