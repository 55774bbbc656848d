//! Integer polynomials under study: parsing, exact evaluation and the
//! classification that decides which experiments a polynomial admits.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::arith;
use crate::poly::Poly;
use crate::serde_exact;
use crate::RatPoly;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    #[error("cannot parse polynomial {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("the zero polynomial is not allowed")]
    Zero,
    #[error("polynomial must have degree at least 1, got a constant")]
    Constant,
    #[error("coefficient {0} is too large for rational-root enumeration")]
    CoefficientTooLarge(BigInt),
}

/// Nonzero polynomial with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntPolynomial {
    poly: Poly<BigInt>,
}

impl IntPolynomial {
    /// Coefficients lowest degree first; trailing zeros are dropped.
    pub fn new(coeffs: Vec<BigInt>) -> Result<Self, PolyError> {
        let poly = Poly::new(coeffs);
        if poly.is_zero() {
            return Err(PolyError::Zero);
        }
        Ok(IntPolynomial { poly })
    }

    pub fn from_i64s(coeffs: &[i64]) -> Result<Self, PolyError> {
        Self::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn from_poly(poly: Poly<BigInt>) -> Result<Self, PolyError> {
        Self::new(poly.coeffs().to_vec())
    }

    pub fn degree(&self) -> usize {
        self.poly.degree().expect("nonzero by construction")
    }

    pub fn coeffs(&self) -> &[BigInt] {
        self.poly.coeffs()
    }

    pub fn leading(&self) -> &BigInt {
        self.poly.leading().expect("nonzero by construction")
    }

    pub fn as_poly(&self) -> &Poly<BigInt> {
        &self.poly
    }

    pub fn to_rational(&self) -> RatPoly {
        self.poly.map(|c| BigRational::from_integer(c.clone()))
    }

    pub fn eval(&self, n: &BigInt) -> BigInt {
        self.poly.eval(n)
    }

    pub fn eval_i64(&self, n: i64) -> BigInt {
        self.poly.eval(&BigInt::from(n))
    }

    /// Horner evaluation in `i128`, `None` on overflow.
    pub fn eval_i128(&self, n: i128) -> Option<i128> {
        let mut acc: i128 = 0;
        for c in self.poly.coeffs().iter().rev() {
            acc = acc.checked_mul(n)?.checked_add(c.to_i128()?)?;
        }
        Some(acc)
    }

    /// Upper bound on `|P(n)|` for `1 <= n <= max_n`.
    pub fn magnitude_bound(&self, max_n: u64) -> BigInt {
        let n = BigInt::from(max_n);
        self.poly
            .coeffs()
            .iter()
            .rev()
            .fold(BigInt::zero(), |acc, c| acc * &n + c.abs())
    }

    pub fn negate(&self) -> Self {
        IntPolynomial { poly: -&self.poly }
    }

    pub fn scale(&self, k: &BigInt) -> Result<Self, PolyError> {
        Self::from_poly(self.poly.scale(k))
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.poly.fmt(f)
    }
}

impl Serialize for IntPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("IntPolynomial", 3)?;
        let coeffs: Vec<String> = self.coeffs().iter().map(|c| c.to_string()).collect();
        st.serialize_field("coeffs", &coeffs)?;
        st.serialize_field("degree", &self.degree())?;
        st.serialize_field("text", &self.to_string())?;
        st.end()
    }
}

impl FromStr for IntPolynomial {
    type Err = PolyError;

    /// Accepts `"c0,c1,...,cd"` (lowest degree first) or an expression in
    /// `x` such as `"x^2+1"`, `"2x^3+3x^2+x"` or `"x(x+1)"`.
    fn from_str(s: &str) -> Result<Self, PolyError> {
        let poly = if s.contains(',') {
            parse_coeff_list(s)?
        } else {
            Parser::new(s).parse()?
        };
        IntPolynomial::from_poly(poly)
    }
}

fn parse_error(input: &str, reason: impl Into<String>) -> PolyError {
    PolyError::Parse {
        input: input.to_string(),
        reason: reason.into(),
    }
}

fn parse_coeff_list(s: &str) -> Result<Poly<BigInt>, PolyError> {
    let coeffs = s
        .split(',')
        .map(|part| {
            let t = part.trim();
            BigInt::from_str(t).map_err(|_| parse_error(s, format!("bad coefficient {t:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Poly::new(coeffs))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(BigInt),
    X,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

struct Parser<'a> {
    input: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    err: Option<PolyError>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut err = None;
        let mut chars = input.char_indices().peekable();
        while let Some((i, ch)) = chars.next() {
            match ch {
                c if c.is_whitespace() => {}
                '0'..='9' => {
                    let mut end = i + 1;
                    while let Some(&(j, d)) = chars.peek() {
                        if !d.is_ascii_digit() {
                            break;
                        }
                        end = j + 1;
                        chars.next();
                    }
                    tokens.push(Token::Num(input[i..end].parse().expect("digits")));
                }
                'x' | 'X' => tokens.push(Token::X),
                '+' => tokens.push(Token::Plus),
                '-' => tokens.push(Token::Minus),
                '*' => tokens.push(Token::Star),
                '^' => tokens.push(Token::Caret),
                '(' => tokens.push(Token::LParen),
                ')' => tokens.push(Token::RParen),
                other => {
                    err.get_or_insert(parse_error(input, format!("unexpected character {other:?}")));
                }
            }
        }
        Parser {
            input,
            tokens,
            pos: 0,
            err,
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, PolyError> {
        Err(parse_error(self.input, reason))
    }

    fn parse(mut self) -> Result<Poly<BigInt>, PolyError> {
        if let Some(e) = self.err.take() {
            return Err(e);
        }
        if self.tokens.is_empty() {
            return self.fail("empty input");
        }
        let p = self.expr()?;
        if self.pos != self.tokens.len() {
            return self.fail(format!("trailing input at token {}", self.pos));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<Poly<BigInt>, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Some(Token::Minus) => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly<BigInt>, PolyError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    acc = &acc * &self.unary()?;
                }
                Some(Token::Num(_) | Token::X | Token::LParen) => {
                    acc = &acc * &self.power()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Poly<BigInt>, PolyError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.bump();
                Ok(-&self.unary()?)
            }
            Some(Token::Plus) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Poly<BigInt>, PolyError> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.bump();
            let Some(Token::Num(e)) = self.bump() else {
                return self.fail("exponent must be a nonnegative integer literal");
            };
            let Some(e) = e.to_u32().filter(|&e| e <= 64) else {
                return self.fail("exponent too large");
            };
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly<BigInt>, PolyError> {
        match self.bump() {
            Some(Token::Num(n)) => Ok(Poly::constant(n)),
            Some(Token::X) => Ok(Poly::x()),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                if self.bump() != Some(Token::RParen) {
                    return self.fail("missing ')'");
                }
                Ok(inner)
            }
            other => self.fail(format!("unexpected token {other:?}")),
        }
    }
}

/// Witness for `P(x) = w (x + c)^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PurePower {
    #[serde(serialize_with = "serde_exact::bigint")]
    pub w: BigInt,
    #[serde(serialize_with = "serde_exact::rational")]
    pub c: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalRoot {
    #[serde(serialize_with = "serde_exact::rational")]
    pub root: BigRational,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PolynomialClass {
    pub degree: usize,
    pub pure_power: Option<PurePower>,
    /// Distinct rational roots, ascending.
    pub rational_roots: Vec<RationalRoot>,
    pub is_product_of_linear_factors: bool,
    /// `β` with `P(β - x) = P(x)`, when one exists.
    #[serde(serialize_with = "serde_exact::opt_rational")]
    pub generalized_even_center: Option<BigRational>,
    pub clt_admissible: bool,
    pub fluct_admissible: bool,
}

impl PolynomialClass {
    pub fn is_pure_power(&self) -> bool {
        self.pure_power.is_some()
    }

    /// Multiset of rational roots with repetition.
    pub fn root_multiset(&self) -> Vec<BigRational> {
        self.rational_roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.root.clone(), r.multiplicity))
            .collect()
    }
}

pub fn classify(p: &IntPolynomial) -> Result<PolynomialClass, PolyError> {
    let d = p.degree();
    if d == 0 {
        return Err(PolyError::Constant);
    }
    let pure_power = pure_power_witness(p);
    let rational_roots = rational_roots(p)?;
    let root_count: usize = rational_roots.iter().map(|r| r.multiplicity).sum();
    let is_product_of_linear_factors = root_count == d;
    let generalized_even_center = generalized_even_center(p);
    Ok(PolynomialClass {
        degree: d,
        clt_admissible: d >= 2 && pure_power.is_none(),
        fluct_admissible: d >= 2 && !is_product_of_linear_factors,
        pure_power,
        rational_roots,
        is_product_of_linear_factors,
        generalized_even_center,
    })
}

/// The only possible shift is `c = a_{d-1} / (d a_d)` and the only possible
/// scale is `w = a_d`; the witness is accepted after exact expansion.
fn pure_power_witness(p: &IntPolynomial) -> Option<PurePower> {
    let d = p.degree();
    let lead = p.leading().clone();
    let sub = p.coeffs()[d - 1].clone();
    let c = BigRational::new(sub, lead.clone() * BigInt::from(d));
    let expanded = RatPoly::new(vec![c.clone(), BigRational::one()])
        .pow(d as u32)
        .scale(&BigRational::from_integer(lead.clone()));
    (expanded == p.to_rational()).then_some(PurePower { w: lead, c })
}

fn magnitude_u128(c: &BigInt) -> Result<u128, PolyError> {
    c.abs()
        .to_u128()
        .ok_or_else(|| PolyError::CoefficientTooLarge(c.clone()))
}

/// Rational roots by exhausting `±u/v` with `u | a_0`, `v | a_d` after
/// stripping the root at zero, deflating by exact synthetic division.
fn rational_roots(p: &IntPolynomial) -> Result<Vec<RationalRoot>, PolyError> {
    let coeffs = p.coeffs();
    let zero_mult = coeffs.iter().take_while(|c| c.is_zero()).count();
    let mut roots = Vec::new();
    if zero_mult > 0 {
        roots.push(RationalRoot {
            root: BigRational::zero(),
            multiplicity: zero_mult,
        });
    }
    let stripped = &coeffs[zero_mult..];
    if stripped.len() > 1 {
        let trailing = magnitude_u128(&stripped[0])?;
        let leading = magnitude_u128(stripped.last().expect("nonempty"))?;
        let mut rest = RatPoly::new(
            stripped
                .iter()
                .map(|c| BigRational::from_integer(c.clone()))
                .collect(),
        );
        let mut candidates = Vec::new();
        for u in arith::divisors(trailing) {
            for v in arith::divisors(leading) {
                let r = BigRational::new(BigInt::from(u), BigInt::from(v));
                candidates.push(-r.clone());
                candidates.push(r);
            }
        }
        candidates.sort();
        candidates.dedup();
        for r in candidates {
            let mut multiplicity = 0;
            while rest.degree().is_some_and(|deg| deg >= 1) {
                let (quotient, rem) = rest.div_linear(&r);
                if !rem.is_zero() {
                    break;
                }
                rest = quotient;
                multiplicity += 1;
            }
            if multiplicity > 0 {
                roots.push(RationalRoot {
                    root: r,
                    multiplicity,
                });
            }
        }
    }
    roots.sort_by(|a, b| a.root.cmp(&b.root));
    Ok(roots)
}

/// Center `β` such that `P(x + β/2)` is even. Only even degrees qualify and
/// the vanishing `x^{d-1}` coefficient forces `β = -2 a_{d-1} / (d a_d)`.
fn generalized_even_center(p: &IntPolynomial) -> Option<BigRational> {
    let d = p.degree();
    if d == 0 || d % 2 == 1 {
        return None;
    }
    let beta = BigRational::new(
        -BigInt::from(2) * &p.coeffs()[d - 1],
        BigInt::from(d) * p.leading(),
    );
    let half = &beta / BigRational::from_integer(2.into());
    p.to_rational()
        .compose_linear(&BigRational::one(), &half)
        .is_even()
        .then_some(beta)
}

/// True iff `P(β - x) - P(x)` is the zero polynomial.
pub fn shifted_even_check(p: &IntPolynomial, beta: &BigRational) -> bool {
    let q = p.to_rational();
    let reflected = q.compose_linear(&-BigRational::one(), beta);
    (&reflected - &q).is_zero()
}
