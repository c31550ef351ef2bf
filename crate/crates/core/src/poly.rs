//! Exact multivariate polynomials over the rationals.
//!
//! Terms are stored densely indexed (every exponent vector has length
//! `num_vars`) in a sorted map, so equality is structural. Point evaluation
//! goes through [`CompiledPoly`], which carries each coefficient as a
//! double-double pair and sums monomials with error-free transformations
//! before rounding once.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddouble::DoubleDouble;

/// Exponent vector of a monomial.
pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable x{index} at position {pos} is out of range for {num_vars} variables")]
    VariableOutOfRange {
        index: usize,
        num_vars: usize,
        pos: usize,
    },
    #[error("negative exponent at position {pos}")]
    NegativeExponent { pos: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for {num_vars} variables")]
    IndexOutOfRange { index: usize, num_vars: usize },
    #[error("invalid coefficient {0:?}")]
    BadCoefficient(String),
    #[error("polynomials must have at least one variable")]
    NoVariables,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    num_vars: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Self {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: BigRational) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(vec![0; num_vars], c);
        p
    }

    /// The monomial `x_index`.
    pub fn variable(num_vars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= num_vars {
            return Err(PolyError::IndexOutOfRange { index, num_vars });
        }
        let mut exps = vec![0; num_vars];
        exps[index] = 1;
        let mut p = Self::zero(num_vars);
        p.add_term(exps, BigRational::one());
        Ok(p)
    }

    /// Builds a canonical polynomial from arbitrary (possibly repeated or
    /// zero) terms.
    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Exponents, BigRational)>,
    {
        let mut p = Self::zero(num_vars);
        for (exps, c) in terms {
            if exps.len() != num_vars {
                return Err(PolyError::DimensionMismatch {
                    expected: num_vars,
                    got: exps.len(),
                });
            }
            p.add_term(exps, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, exps: Exponents, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let remove = match self.terms.get_mut(&exps) {
            Some(existing) => {
                *existing += c;
                existing.is_zero()
            }
            None => {
                self.terms.insert(exps.clone(), c);
                false
            }
        };
        if remove {
            self.terms.remove(&exps);
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, BigRational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Returns the constant value if the polynomial has no variable terms.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next()?;
                e.iter().all(|&d| d == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.num_vars, other.num_vars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&-BigRational::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.num_vars);
        }
        Self {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .map(|(e, a)| (e.clone(), a * c))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.num_vars, other.num_vars);
        let mut out = Self::zero(self.num_vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.num_vars, BigRational::one());
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn partial_derivative(&self, index: usize) -> Result<Self, PolyError> {
        if index >= self.num_vars {
            return Err(PolyError::IndexOutOfRange {
                index,
                num_vars: self.num_vars,
            });
        }
        let mut out = Self::zero(self.num_vars);
        for (e, c) in &self.terms {
            let d = e[index];
            if d == 0 {
                continue;
            }
            let mut de = e.clone();
            de[index] = d - 1;
            out.add_term(de, c * BigRational::from_integer(BigInt::from(d)));
        }
        Ok(out)
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.num_vars)
            .map(|i| self.partial_derivative(i).expect("index in range"))
            .collect()
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }

    /// Evaluates at a real point; see [`CompiledPoly::eval`].
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                got: point.len(),
            });
        }
        Ok(self.compile().eval(point))
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(e, c)| TermRecord {
                coeff: format_rational(c),
                exps: e.clone(),
            })
            .collect()
    }

    pub fn from_records(num_vars: usize, records: &[TermRecord]) -> Result<Self, PolyError> {
        let terms = records
            .iter()
            .map(|r| Ok((r.exps.clone(), parse_rational(&r.coeff)?)))
            .collect::<Result<Vec<_>, PolyError>>()?;
        Self::from_terms(num_vars, terms)
    }

    /// Parses the textual grammar over variables `x0 .. x{n-1}`.
    pub fn parse(doc: &str, num_vars: usize) -> Result<Self, PolyError> {
        if num_vars == 0 {
            return Err(PolyError::NoVariables);
        }
        Parser::new(doc, num_vars).parse()
    }
}

/// One term in the structured (record list) polynomial form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub coeff: String,
    pub exps: Vec<u32>,
}

pub fn format_rational(c: &BigRational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational, PolyError> {
    let bad = || PolyError::BadCoefficient(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => parse_decimal(s).ok_or_else(bad),
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let v = BigRational::new(numer, denom);
    Some(if neg { -v } else { v })
}

impl fmt::Display for Polynomial {
    /// Graded-lex descending order; output re-parses to the same polynomial.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut order: Vec<(&Exponents, &BigRational)> = self.terms.iter().collect();
        order.sort_by(|(a, _), (b, _)| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            db.cmp(&da).then_with(|| b.cmp(a))
        });
        for (i, (e, c)) in order.into_iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(v, &d)| {
                    if d == 1 {
                        format!("x{v}")
                    } else {
                        format!("x{v}^{d}")
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{}", format_rational(&mag))?;
            } else {
                if !mag.is_one() {
                    write!(f, "{}*", format_rational(&mag))?;
                }
                write!(f, "{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Point-evaluation form of a polynomial.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    num_vars: usize,
    max_exp: Vec<u32>,
    terms: Vec<(Exponents, DoubleDouble)>,
}

impl CompiledPoly {
    fn new(p: &Polynomial) -> Self {
        let mut max_exp = vec![0u32; p.num_vars];
        let terms = p
            .terms
            .iter()
            .map(|(e, c)| {
                for (m, &d) in max_exp.iter_mut().zip(e) {
                    *m = (*m).max(d);
                }
                (e.clone(), rational_to_dd(c))
            })
            .collect();
        Self {
            num_vars: p.num_vars,
            max_exp,
            terms,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Monomials are accumulated in double-double in exponent order and the
    /// sum is rounded to `f64` once at the end.
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.num_vars);
        if self.terms.is_empty() {
            return 0.0;
        }
        // powers[v][d] = point[v]^d in double-double
        let mut powers: Vec<Vec<DoubleDouble>> = Vec::with_capacity(self.num_vars);
        for (v, &x) in point.iter().enumerate() {
            let mut row = Vec::with_capacity(self.max_exp[v] as usize + 1);
            let mut acc = DoubleDouble::from(1.0);
            row.push(acc);
            for _ in 0..self.max_exp[v] {
                acc = acc.mul_f64(x);
                row.push(acc);
            }
            powers.push(row);
        }
        let mut sum = DoubleDouble::from(0.0);
        for (e, c) in &self.terms {
            let mut mono = *c;
            for (v, &d) in e.iter().enumerate() {
                if d > 0 {
                    mono = mono.mul(powers[v][d as usize]);
                }
            }
            sum = sum.add(mono);
        }
        sum.to_f64()
    }
}

fn rational_to_dd(c: &BigRational) -> DoubleDouble {
    let hi = c.to_f64().unwrap_or(f64::NAN);
    if !hi.is_finite() {
        return DoubleDouble::from(hi);
    }
    let hi_exact = BigRational::from_float(hi).expect("finite");
    let lo = (c - hi_exact).to_f64().unwrap_or(0.0);
    DoubleDouble::new(hi, lo)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    num_vars: usize,
}

impl<'a> Parser<'a> {
    fn new(doc: &'a str, num_vars: usize) -> Self {
        Self {
            src: doc.as_bytes(),
            pos: 0,
            num_vars,
        }
    }

    fn err(&self, msg: impl Into<String>) -> PolyError {
        PolyError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Polynomial, PolyError> {
        let p = self.expr()?;
        if self.peek().is_some() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                self.term()?.neg()
            }
            Some(b'+') => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    let start = self.pos;
                    let d = self.factor()?;
                    match d.as_constant() {
                        Some(c) if !c.is_zero() => acc = acc.scale(&c.recip()),
                        Some(_) => {
                            return Err(PolyError::Syntax {
                                pos: start,
                                msg: "division by zero".into(),
                            })
                        }
                        None => {
                            return Err(PolyError::Syntax {
                                pos: start,
                                msg: "divisor must be a constant".into(),
                            })
                        }
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            if self.peek() == Some(b'-') {
                return Err(PolyError::NegativeExponent { pos: self.pos });
            }
            let k = self.uint()?;
            let k = u32::try_from(k).map_err(|_| self.err("exponent too large"))?;
            Ok(base.pow(k))
        } else {
            Ok(base)
        }
    }

    fn uint(&mut self) -> Result<u64, PolyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii")
            .parse()
            .map_err(|_| PolyError::Syntax {
                pos: start,
                msg: "integer too large".into(),
            })
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'x') => {
                let start = self.pos;
                self.pos += 1;
                let idx = self.uint()? as usize;
                if idx >= self.num_vars {
                    return Err(PolyError::VariableOutOfRange {
                        index: idx,
                        num_vars: self.num_vars,
                        pos: start,
                    });
                }
                Polynomial::variable(self.num_vars, idx)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                let c = parse_decimal(text).ok_or(PolyError::Syntax {
                    pos: start,
                    msg: format!("malformed number {text:?}"),
                })?;
                Ok(Polynomial::constant(self.num_vars, c))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}
