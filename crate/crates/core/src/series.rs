//! Truncated Laurent and Puiseux series over [`Scalar`].
//!
//! A series stores its nonzero coefficients together with an optional
//! truncation order: exponents at or above the order are unknown. `None`
//! marks an exact (finite) series. Operations that would produce infinitely
//! many terms from exact input take a `terms` budget, the relative precision
//! of the result.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::scalar::{binom_q, Monomial, Param, Poly, Scalar, ScalarError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("coordinate mismatch: `{0}` vs `{1}`")]
    CoordinateMismatch(String, String),
    #[error("leading coefficient is zero or unknown")]
    ZeroLeadingCoefficient,
    #[error("nonzero coefficient at exponent -1 cannot be integrated")]
    LogarithmicTerm,
    #[error("series is not reversible: {0}")]
    NotReversible(String),
    #[error("composition not defined: {0}")]
    NotComposable(String),
    #[error("series parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

fn min_opt(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Truncated Laurent series in one named coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSeries {
    var: Arc<str>,
    terms: BTreeMap<i64, Scalar>,
    prec: Option<i64>,
}

impl LaurentSeries {
    pub fn new(var: &str, terms: impl IntoIterator<Item = (i64, Scalar)>, prec: Option<i64>) -> Self {
        let mut s = LaurentSeries { var: Arc::from(var), terms: BTreeMap::new(), prec };
        for (k, c) in terms {
            s.add_term(k, c);
        }
        s
    }
    pub fn zero(var: &str) -> Self {
        LaurentSeries::new(var, [], None)
    }
    pub fn one(var: &str) -> Self {
        LaurentSeries::monomial(var, Scalar::one(), 0)
    }
    pub fn monomial(var: &str, c: Scalar, k: i64) -> Self {
        LaurentSeries::new(var, [(k, c)], None)
    }
    pub fn constant(var: &str, c: Scalar) -> Self {
        LaurentSeries::monomial(var, c, 0)
    }
    /// Same coordinate, given coefficients, exact.
    fn like(&self, terms: BTreeMap<i64, Scalar>, prec: Option<i64>) -> Self {
        LaurentSeries { var: self.var.clone(), terms, prec }
    }

    fn add_term(&mut self, k: i64, c: Scalar) {
        if c.is_zero() || self.prec.is_some_and(|p| k >= p) {
            return;
        }
        match self.terms.remove(&k) {
            None => {
                self.terms.insert(k, c);
            }
            Some(old) => {
                let s = &old + &c;
                if !s.is_zero() {
                    self.terms.insert(k, s);
                }
            }
        }
    }

    pub fn var(&self) -> &str {
        &self.var
    }
    pub fn with_var(&self, var: &str) -> Self {
        LaurentSeries { var: Arc::from(var), ..self.clone() }
    }
    pub fn prec(&self) -> Option<i64> {
        self.prec
    }
    pub fn is_exact(&self) -> bool {
        self.prec.is_none()
    }
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (i64, &Scalar)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }
    pub fn coeff(&self, k: i64) -> Scalar {
        self.terms.get(&k).cloned().unwrap_or_default()
    }
    /// Whether the coefficient at `k` is determined.
    pub fn is_known(&self, k: i64) -> bool {
        self.prec.is_none_or(|p| k < p)
    }
    pub fn valuation(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }
    pub fn degree(&self) -> Option<i64> {
        self.terms.keys().next_back().copied()
    }
    pub fn lead(&self) -> Option<(i64, &Scalar)> {
        self.terms.iter().next().map(|(k, c)| (*k, c))
    }
    /// Exponent below which every coefficient is known to vanish.
    pub(crate) fn floor(&self) -> Option<i64> {
        self.valuation().or(self.prec)
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn is_exact_zero(&self) -> bool {
        self.terms.is_empty() && self.prec.is_none()
    }
    /// Relative precision: number of known exponents from the valuation on.
    pub fn relative_precision(&self) -> Option<i64> {
        match (self.valuation(), self.prec) {
            (Some(v), Some(p)) => Some(p - v),
            (None, Some(_)) => Some(0),
            _ => None,
        }
    }

    fn check(&self, o: &Self) -> Result<(), SeriesError> {
        if self.var != o.var {
            return Err(SeriesError::CoordinateMismatch(self.var.to_string(), o.var.to_string()));
        }
        Ok(())
    }

    pub fn truncate(&self, p: i64) -> Self {
        let prec = min_opt(self.prec, Some(p));
        self.like(self.terms.range(..p).map(|(k, c)| (*k, c.clone())).collect(), prec)
    }
    /// Truncate at `p` only when `p` is given.
    pub fn truncate_opt(&self, p: Option<i64>) -> Self {
        match p {
            Some(p) => self.truncate(p),
            None => self.clone(),
        }
    }
    /// Keep exactly the terms with exponent below `p` as an exact series.
    pub fn part_below(&self, p: i64) -> Self {
        self.like(self.terms.range(..p).map(|(k, c)| (*k, c.clone())).collect(), None)
    }
    pub fn polar_part(&self) -> Self {
        self.part_below(0)
    }

    pub fn try_add(&self, o: &Self) -> Result<Self, SeriesError> {
        self.check(o)?;
        let mut out = self.like(BTreeMap::new(), min_opt(self.prec, o.prec));
        for (k, c) in self.terms.iter().chain(o.terms.iter()) {
            out.add_term(*k, c.clone());
        }
        Ok(out)
    }
    pub fn try_sub(&self, o: &Self) -> Result<Self, SeriesError> {
        self.try_add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        self.like(self.terms.iter().map(|(k, c)| (*k, -c)).collect(), self.prec)
    }
    pub fn scale(&self, s: &Scalar) -> Self {
        if s.is_zero() {
            return self.like(BTreeMap::new(), self.prec);
        }
        self.like(self.terms.iter().map(|(k, c)| (*k, c * s)).collect(), self.prec)
    }
    /// Multiply by `x^k`.
    pub fn shift(&self, k: i64) -> Self {
        self.like(self.terms.iter().map(|(e, c)| (e + k, c.clone())).collect(), self.prec.map(|p| p + k))
    }
    pub fn map_coeffs(&self, mut f: impl FnMut(&Scalar) -> Result<Scalar, SeriesError>) -> Result<Self, SeriesError> {
        let mut out = self.like(BTreeMap::new(), self.prec);
        for (k, c) in &self.terms {
            out.add_term(*k, f(c)?);
        }
        Ok(out)
    }

    /// Product, computed only below `cap` when given.
    pub fn mul_capped(&self, o: &Self, cap: Option<i64>) -> Result<Self, SeriesError> {
        self.check(o)?;
        let prec = match (self.floor(), o.floor()) {
            (None, _) | (_, None) => {
                // one factor is the exact zero series
                return Ok(self.like(BTreeMap::new(), None));
            }
            (Some(va), Some(vb)) => min_opt(self.prec.map(|p| p + vb), o.prec.map(|p| p + va)),
        };
        let prec = min_opt(prec, cap);
        let mut out = self.like(BTreeMap::new(), prec);
        for (i, a) in &self.terms {
            for (j, b) in &o.terms {
                if prec.is_some_and(|p| i + j >= p) {
                    break;
                }
                out.add_term(i + j, a * b);
            }
        }
        Ok(out)
    }
    pub fn try_mul(&self, o: &Self) -> Result<Self, SeriesError> {
        self.mul_capped(o, None)
    }

    /// Multiplicative inverse with relative precision at most `terms`.
    pub fn invert(&self, terms: usize) -> Result<Self, SeriesError> {
        let (v, c) = self.lead().ok_or(SeriesError::ZeroLeadingCoefficient)?;
        let c_inv = c.inv()?;
        if self.terms.len() == 1 && self.is_exact() {
            return Ok(LaurentSeries::monomial(&self.var, c_inv, -v));
        }
        let rel = match self.relative_precision() {
            Some(r) => r.min(terms as i64),
            None => terms as i64,
        };
        let mut b: Vec<Scalar> = Vec::with_capacity(rel.max(0) as usize);
        for k in 0..rel {
            if k == 0 {
                b.push(c_inv.clone());
                continue;
            }
            let mut acc = Scalar::zero();
            for (e, a) in self.terms.range(v + 1..=v + k) {
                let j = (e - v) as usize;
                let bk = &b[k as usize - j];
                if !bk.is_zero() {
                    acc = &acc + &(a * bk);
                }
            }
            b.push(-(&acc * &c_inv));
        }
        Ok(LaurentSeries::new(
            &self.var,
            b.into_iter().enumerate().map(|(k, s)| (k as i64 - v, s)),
            Some(rel - v),
        ))
    }

    /// Integer power; negative powers go through [`LaurentSeries::invert`].
    pub fn pow(&self, n: i64, terms: usize) -> Result<Self, SeriesError> {
        let base = if n < 0 { self.invert(terms)? } else { self.clone() };
        let mut acc = LaurentSeries::one(&self.var);
        let cap = base.floor().map(|v| v * n.abs() + terms as i64);
        for _ in 0..n.unsigned_abs() {
            acc = acc.mul_capped(&base, if base.is_exact() { None } else { cap })?;
        }
        Ok(acc)
    }

    pub fn derive(&self) -> Self {
        let mut out = self.like(BTreeMap::new(), self.prec.map(|p| p - 1));
        for (k, c) in &self.terms {
            out.add_term(k - 1, c.scale(&BigRational::from_integer(BigInt::from(*k))));
        }
        out
    }

    /// Antiderivative with zero constant term.
    pub fn integrate(&self) -> Result<Self, SeriesError> {
        if !self.coeff(-1).is_zero() {
            return Err(SeriesError::LogarithmicTerm);
        }
        let mut out = self.like(BTreeMap::new(), self.prec.map(|p| p + 1));
        for (k, c) in &self.terms {
            out.add_term(k + 1, c.scale(&BigRational::new(BigInt::one(), BigInt::from(k + 1))));
        }
        Ok(out)
    }

    /// `self(inner(y))`. The inner series must have positive valuation unless
    /// `self` is an exact polynomial.
    pub fn compose(&self, inner: &LaurentSeries, terms: usize) -> Result<Self, SeriesError> {
        let y = inner.var.to_string();
        let poly_outer = self.is_exact() && self.valuation().is_none_or(|v| v >= 0);
        if self.is_exact_zero() {
            return Ok(LaurentSeries::zero(&y));
        }
        if poly_outer {
            // Horner evaluation, exact whenever `inner` is.
            let deg = self.degree().unwrap_or(0);
            let mut acc = LaurentSeries::zero(&y);
            for k in (0..=deg).rev() {
                acc = acc.try_mul(inner)?.try_add(&LaurentSeries::constant(&y, self.coeff(k)))?;
            }
            return Ok(acc);
        }
        let vg = match inner.valuation() {
            Some(v) if v >= 1 => v,
            _ => return Err(SeriesError::NotComposable("inner series must have positive valuation".into())),
        };
        let vf = self.floor().expect("nonzero outer");
        let target = vf * vg + terms as i64;
        let target = min_opt(Some(target), self.prec.map(|p| p * vg)).expect("finite target");
        let mut out = LaurentSeries::new(&y, [], Some(target));
        let mut power = if vf < 0 {
            inner.invert(terms + 1)?.pow(-vf, terms + 1)?
        } else {
            inner.pow(vf, terms + 1)?
        };
        let upper = self.degree().unwrap_or(vf).min(self.prec.map_or(i64::MAX, |p| p - 1));
        let mut k = vf;
        while k <= upper {
            if power.floor().is_some_and(|f| f >= target) {
                break;
            }
            let c = self.coeff(k);
            if !c.is_zero() {
                out = out.try_add(&power.scale(&c))?;
            }
            power = power.mul_capped(inner, Some(target))?;
            k += 1;
        }
        Ok(out)
    }

    /// Compositional inverse.
    pub fn reversion(&self, terms: usize) -> Result<Self, SeriesError> {
        let x = self.var.to_string();
        if self.is_exact() && self.valuation().is_some_and(|v| v >= 0) && self.degree() == Some(1) {
            let a1 = self.coeff(1);
            let a0 = self.coeff(0);
            let inv = a1.inv()?;
            return Ok(LaurentSeries::new(&x, [(1, inv.clone()), (0, -(&a0 * &inv))], None));
        }
        if self.valuation() != Some(1) {
            return Err(SeriesError::NotReversible(format!("valuation {:?} is not 1", self.valuation())));
        }
        let c1_inv = self.coeff(1).inv()?;
        let rel = self.relative_precision().map_or(terms as i64, |r| r.min(terms as i64));
        let target = 1 + rel;
        let id = LaurentSeries::monomial(&x, Scalar::one(), 1);
        let mut b = LaurentSeries::monomial(&x, c1_inv.clone(), 1).truncate(target);
        for _ in 0..rel {
            let ab = self.compose(&b, rel as usize + 1)?.truncate(target);
            let corr = id.try_sub(&ab)?.scale(&c1_inv);
            if corr.is_zero() && corr.prec().is_none_or(|p| p >= target) {
                break;
            }
            b = b.try_add(&corr)?.truncate(target);
        }
        Ok(b)
    }

    pub fn parse(src: &str) -> Result<Self, SeriesError> {
        parse_series(src)
    }
}

fn fmt_coeff_times(c: &Scalar, mon: &str) -> String {
    if mon.is_empty() {
        let s = c.to_string();
        return if c.is_single_term() { s } else { format!("({s})") };
    }
    if c.is_one() {
        return mon.to_string();
    }
    if (-c).is_one() {
        return format!("-{mon}");
    }
    let s = c.to_string();
    if c.is_single_term() {
        format!("{s}*{mon}")
    } else {
        format!("({s})*{mon}")
    }
}

fn fmt_power(var: &str, k: i64) -> String {
    match k {
        0 => String::new(),
        1 => var.to_string(),
        _ => format!("{var}^{k}"),
    }
}

fn join_terms(parts: Vec<String>) -> String {
    let mut out = String::new();
    for (i, t) in parts.into_iter().enumerate() {
        if i == 0 {
            out.push_str(&t);
        } else if let Some(rest) = t.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(rest);
        } else {
            out.push_str(" + ");
            out.push_str(&t);
        }
    }
    out
}

impl LaurentSeries {
    fn render(&self, var: &str) -> String {
        let mut parts: Vec<String> =
            self.terms.iter().map(|(k, c)| fmt_coeff_times(c, &fmt_power(var, *k))).collect();
        if let Some(p) = self.prec {
            parts.push(format!("O({})", if p == 0 { "1".to_string() } else { fmt_power(var, p) }));
        }
        if parts.is_empty() {
            return "0".into();
        }
        join_terms(parts)
    }
}

impl fmt::Display for LaurentSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&self.var))
    }
}

impl Serialize for LaurentSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Split at top-level `+`/`-` signs, keeping the sign with the following chunk.
fn split_top_level(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    let mut prev: Option<char> = None;
    for ch in src.chars().filter(|c| !c.is_whitespace()) {
        let ch = if ch == '−' { '-' } else { ch };
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        let unary = matches!(prev, None | Some('^') | Some('*') | Some('/') | Some('('));
        if depth == 0 && (ch == '+' || ch == '-') && !unary {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(ch);
        prev = Some(ch);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_power(s: &str, var: &mut Option<String>) -> Option<i64> {
    let (name, k) = match s.split_once('^') {
        Some((n, e)) => (n, e.trim_start_matches('(').trim_end_matches(')').parse::<i64>().ok()?),
        None => (s, 1),
    };
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') || name.chars().next()?.is_ascii_digit() {
        return None;
    }
    match var {
        Some(v) if v != name => None,
        _ => {
            *var = Some(name.to_string());
            Some(k)
        }
    }
}

fn parse_series_in(src: &str, var_hint: Option<&str>) -> Result<LaurentSeries, SeriesError> {
    let mut var: Option<String> = var_hint.map(str::to_string);
    let mut terms = Vec::new();
    let mut prec = None;
    for chunk in split_top_level(src) {
        let (sign, body) = match chunk.strip_prefix('-') {
            Some(b) => (-1, b.to_string()),
            None => (1, chunk.trim_start_matches('+').to_string()),
        };
        if let Some(inner) = body.strip_prefix("O(").and_then(|b| b.strip_suffix(')')) {
            prec = Some(if inner == "1" { 0 } else { parse_power(inner, &mut var).ok_or_else(|| SeriesError::Parse(chunk.clone()))? });
            continue;
        }
        // Find the last top-level `*` factor and test it for a coordinate power.
        let mut depth = 0;
        let mut split_at = None;
        for (i, ch) in body.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                '*' if depth == 0 => split_at = Some(i),
                _ => {}
            }
        }
        let (coef_src, last) = match split_at {
            Some(i) => (&body[..i], &body[i + 1..]),
            None => ("", body.as_str()),
        };
        let mut trial = var.clone();
        let (coef, k) = match parse_power(last, &mut trial) {
            Some(k) if var.is_some() || trial.is_some() => {
                var = trial;
                let c = if coef_src.is_empty() { Scalar::one() } else { coef_src.parse::<Scalar>()? };
                (c, k)
            }
            _ => (body.parse::<Scalar>()?, 0),
        };
        terms.push((k, if sign < 0 { -coef } else { coef }));
    }
    let var = var.ok_or_else(|| SeriesError::Parse(format!("no coordinate found in `{src}`")))?;
    Ok(LaurentSeries::new(&var, terms, prec))
}

fn parse_series(src: &str) -> Result<LaurentSeries, SeriesError> {
    parse_series_in(src, None)
}

/// Parse a series whose coordinate is known in advance; parameters named like
/// the coordinate are then read as the coordinate.
pub fn parse_series_with_var(src: &str, var: &str) -> Result<LaurentSeries, SeriesError> {
    parse_series_in(src, Some(var))
}

// ---------------------------------------------------------------------------
// roots of scalars

/// Defining relation `param^degree = radicand` of a fresh root parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootRelation {
    pub param: Param,
    pub degree: u32,
    pub radicand: Scalar,
}

/// Table of fresh parameters standing for roots of scalars.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RootTable {
    relations: Vec<RootRelation>,
}

fn exact_nth_root(n: &BigInt, e: u32) -> Option<BigInt> {
    if n.is_negative() {
        if e.is_multiple_of(2) {
            return None;
        }
        return exact_nth_root(&-n, e).map(|r| -r);
    }
    let r = n.nth_root(e);
    (num_traits::pow(r.clone(), e as usize) == *n).then_some(r)
}

impl RootTable {
    pub fn new() -> Self {
        RootTable::default()
    }
    pub fn relations(&self) -> &[RootRelation] {
        &self.relations
    }
    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// An `e`-th root of `c`: exact when `c` is a perfect power monomial,
    /// otherwise a (possibly reused) fresh parameter.
    pub fn root_of(&mut self, c: &Scalar, e: u32) -> Result<Scalar, SeriesError> {
        if c.is_zero() {
            return Err(SeriesError::ZeroLeadingCoefficient);
        }
        if e == 1 {
            return Ok(c.clone());
        }
        let c = self.reduce(c);
        if let Some(r) = perfect_root(&c, e) {
            return Ok(r);
        }
        if let Some(rel) = self.relations.iter().find(|r| r.degree == e && r.radicand == c) {
            return Ok(Scalar::from_param(&rel.param));
        }
        let param = Param::new(&format!("β{}", self.relations.len() + 1));
        self.relations.push(RootRelation { param: param.clone(), degree: e, radicand: c });
        Ok(Scalar::from_param(&param))
    }

    /// Rewrite powers of root parameters below their degrees and clear them
    /// from single-term denominators.
    pub fn reduce(&self, s: &Scalar) -> Scalar {
        if self.relations.is_empty() {
            return s.clone();
        }
        let mut cur = s.clone();
        for _ in 0..16 {
            let params = cur.params();
            if !self.relations.iter().any(|r| params.contains(&r.param)) {
                return cur;
            }
            let mut changed = false;
            for rel in &self.relations {
                if !cur.params().contains(&rel.param) {
                    continue;
                }
                let n = reduce_poly(cur.numerator(), rel);
                let mut d = reduce_poly(cur.denominator(), rel);
                let mut n = n;
                if d.is_single_term() {
                    let j = d
                        .numerator()
                        .terms()
                        .next()
                        .map(|(m, _)| m.exponent(&rel.param))
                        .unwrap_or(0)
                        % rel.degree;
                    if j > 0 {
                        let f = Scalar::from_param(&rel.param).pow((rel.degree - j) as i64).expect("power");
                        n = &n * &f;
                        let df = &d * &f;
                        n = &n * &Scalar::from_poly(df.denominator().clone());
                        d = reduce_poly(df.numerator(), rel);
                    }
                }
                let next = match n.try_div(&d) {
                    Ok(v) => v,
                    Err(_) => return cur,
                };
                if next.numerator() != cur.numerator() || next.denominator() != cur.denominator() {
                    changed = true;
                }
                cur = next;
            }
            if !changed {
                break;
            }
        }
        cur
    }

    pub fn reduce_series(&self, s: &LaurentSeries) -> LaurentSeries {
        s.map_coeffs(|c| Ok(self.reduce(c))).expect("reduction is total")
    }

    /// Zero test modulo the root relations.
    pub fn is_zero(&self, s: &Scalar) -> bool {
        self.reduce(s).is_zero()
    }
    pub fn eq(&self, a: &Scalar, b: &Scalar) -> bool {
        self.is_zero(&(a - b))
    }
}

fn reduce_poly(p: &Poly, rel: &RootRelation) -> Scalar {
    let mut acc = Scalar::zero();
    for (m, c) in p.terms() {
        let n = m.exponent(&rel.param);
        let rest = m.div(&Monomial::var(rel.param.clone(), n)).expect("factor present");
        let (q, r) = (n / rel.degree, n % rel.degree);
        let mut t = Scalar::from_poly(Poly::monomial(c.clone(), rest.mul(&Monomial::var(rel.param.clone(), r))));
        if q > 0 {
            t = &t * &rel.radicand.pow(q as i64).expect("radicand nonzero");
        }
        acc = &acc + &t;
    }
    acc
}

/// Exact `e`-th root of a monomial scalar whose exponents and rational
/// coefficient are perfect `e`-th powers.
fn perfect_root(c: &Scalar, e: u32) -> Option<Scalar> {
    if c.numerator().len() != 1 || c.denominator().len() != 1 {
        return None;
    }
    let (nm, nc) = c.numerator().leading()?;
    let (dm, dc) = c.denominator().leading()?;
    let q = nc / dc;
    let rn = exact_nth_root(q.numer(), e)?;
    let rd = exact_nth_root(q.denom(), e)?;
    let root_mon = |m: &Monomial| -> Option<Monomial> {
        let mut acc = Monomial::one();
        for (p, k) in m.factors() {
            if k % e != 0 {
                return None;
            }
            acc = acc.mul(&Monomial::var(p.clone(), k / e));
        }
        Some(acc)
    };
    let n = Poly::monomial(BigRational::new(rn, rd), root_mon(nm)?);
    let d = Poly::monomial(BigRational::one(), root_mon(dm)?);
    Scalar::from_parts(n, d).ok()
}

// ---------------------------------------------------------------------------
// Puiseux series

/// Series in `u` with `u^d = t`, where `t` is the named base coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PuiseuxSeries {
    ram: u32,
    body: LaurentSeries,
}

impl PuiseuxSeries {
    /// Wrap a Laurent series in the ramified variable; the body's coordinate
    /// name is the base coordinate.
    pub fn new(ram: u32, body: LaurentSeries) -> Self {
        assert!(ram >= 1, "ramification degree must be positive");
        PuiseuxSeries { ram, body }.normalized()
    }
    pub fn from_laurent(s: LaurentSeries) -> Self {
        PuiseuxSeries { ram: 1, body: s }
    }
    pub fn zero(var: &str) -> Self {
        PuiseuxSeries::from_laurent(LaurentSeries::zero(var))
    }
    pub fn ram(&self) -> u32 {
        self.ram
    }
    pub fn body(&self) -> &LaurentSeries {
        &self.body
    }
    pub fn var(&self) -> &str {
        self.body.var()
    }
    pub fn is_zero(&self) -> bool {
        self.body.is_zero()
    }
    pub fn prec(&self) -> Option<BigRational> {
        self.body.prec().map(|p| BigRational::new(p.into(), self.ram.into()))
    }
    /// Valuation in the base coordinate.
    pub fn valuation(&self) -> Option<BigRational> {
        self.body.valuation().map(|k| BigRational::new(k.into(), self.ram.into()))
    }
    pub fn lead(&self) -> Option<(BigRational, Scalar)> {
        self.body.lead().map(|(k, c)| (BigRational::new(k.into(), self.ram.into()), c.clone()))
    }
    /// Coefficient of `t^(k/d)` for exponent given as a rational.
    pub fn coeff_at(&self, e: &BigRational) -> Scalar {
        let k = e * BigRational::from_integer(self.ram.into());
        if !k.is_integer() {
            return Scalar::zero();
        }
        self.body.coeff(num_traits::ToPrimitive::to_i64(&k.to_integer()).expect("small exponent"))
    }
    /// Pole order in the base coordinate, zero for series without polar terms.
    pub fn slope(&self) -> BigRational {
        match self.valuation() {
            Some(v) if v.is_negative() => -v,
            _ => BigRational::zero(),
        }
    }

    /// Re-express in `u'` with `u'^(d e) = t`.
    pub fn refine(&self, e: u32) -> Self {
        if e == 1 {
            return self.clone();
        }
        let e64 = e as i64;
        let body = LaurentSeries::new(
            self.body.var(),
            self.body.terms().map(|(k, c)| (k * e64, c.clone())),
            self.body.prec().map(|p| p * e64),
        );
        PuiseuxSeries { ram: self.ram * e, body }
    }

    /// Smallest ramification describing the same series.
    pub fn normalized(&self) -> Self {
        let mut g = self.ram as i64;
        for (k, _) in self.body.terms() {
            g = g.gcd(&k);
        }
        let g = g.max(1);
        if g == 1 {
            return self.clone();
        }
        let body = LaurentSeries::new(
            self.body.var(),
            self.body.terms().map(|(k, c)| (k / g, c.clone())),
            self.body.prec().map(|p| Integer::div_ceil(&p, &g)),
        );
        PuiseuxSeries { ram: self.ram / g as u32, body }
    }

    fn common(&self, o: &Self) -> (Self, Self) {
        let l = (self.ram as u64).lcm(&(o.ram as u64)) as u32;
        (self.refine(l / self.ram), o.refine(l / o.ram))
    }

    pub fn try_add(&self, o: &Self) -> Result<Self, SeriesError> {
        let (a, b) = self.common(o);
        Ok(PuiseuxSeries { ram: a.ram, body: a.body.try_add(&b.body)? }.normalized())
    }
    pub fn try_sub(&self, o: &Self) -> Result<Self, SeriesError> {
        self.try_add(&o.neg())
    }
    pub fn try_mul(&self, o: &Self) -> Result<Self, SeriesError> {
        let (a, b) = self.common(o);
        Ok(PuiseuxSeries { ram: a.ram, body: a.body.try_mul(&b.body)? }.normalized())
    }
    pub fn neg(&self) -> Self {
        PuiseuxSeries { ram: self.ram, body: self.body.neg() }
    }
    pub fn scale(&self, s: &Scalar) -> Self {
        PuiseuxSeries { ram: self.ram, body: self.body.scale(s) }.normalized()
    }
    pub fn invert(&self, terms: usize) -> Result<Self, SeriesError> {
        Ok(PuiseuxSeries { ram: self.ram, body: self.body.invert(terms)? })
    }
    pub fn truncate(&self, e: &BigRational) -> Self {
        let k = (e * BigRational::from_integer(self.ram.into())).ceil().to_integer();
        let k = num_traits::ToPrimitive::to_i64(&k).expect("small exponent");
        PuiseuxSeries { ram: self.ram, body: self.body.truncate(k) }
    }
    /// Terms with exponent strictly below `e` as an exact series.
    pub fn part_below(&self, e: &BigRational) -> Self {
        let k = (e * BigRational::from_integer(self.ram.into())).ceil().to_integer();
        let k = num_traits::ToPrimitive::to_i64(&k).expect("small exponent");
        PuiseuxSeries { ram: self.ram, body: self.body.part_below(k) }.normalized()
    }
    pub fn polar_part(&self) -> Self {
        self.part_below(&BigRational::zero())
    }
    pub fn map_coeffs(&self, f: impl FnMut(&Scalar) -> Result<Scalar, SeriesError>) -> Result<Self, SeriesError> {
        Ok(PuiseuxSeries { ram: self.ram, body: self.body.map_coeffs(f)? }.normalized())
    }

    /// `d/dt` where `t = u^d`.
    pub fn derive(&self) -> Self {
        let d = self.ram as i64;
        let body = LaurentSeries::new(
            self.body.var(),
            self.body.terms().map(|(k, c)| (k - d, c.scale(&BigRational::new(k.into(), d.into())))),
            self.body.prec().map(|p| p - d),
        );
        PuiseuxSeries { ram: self.ram, body }.normalized()
    }

    /// Antiderivative in `t` with zero constant term.
    pub fn integrate(&self) -> Result<Self, SeriesError> {
        let d = self.ram as i64;
        if !self.body.coeff(-d).is_zero() {
            return Err(SeriesError::LogarithmicTerm);
        }
        let body = LaurentSeries::new(
            self.body.var(),
            self.body.terms().map(|(k, c)| (k + d, c.scale(&BigRational::new(d.into(), (k + d).into())))),
            self.body.prec().map(|p| p + d),
        );
        Ok(PuiseuxSeries { ram: self.ram, body }.normalized())
    }

    /// Multiplicative integer power.
    pub fn pow(&self, n: i64, terms: usize) -> Result<Self, SeriesError> {
        Ok(PuiseuxSeries { ram: self.ram, body: self.body.pow(n, terms)? }.normalized())
    }

    /// Precompose with `t ↦ -t`, choosing `u ↦ ζ u` with `ζ^d = -1`; only
    /// available when no ramification is present.
    pub fn sign_flip_unramified(&self) -> Option<Self> {
        if self.ram != 1 {
            return None;
        }
        let body = LaurentSeries::new(
            self.body.var(),
            self.body.terms().map(|(k, c)| (k, if k % 2 == 0 { c.clone() } else { -c })),
            self.body.prec(),
        );
        Some(PuiseuxSeries { ram: 1, body })
    }
}

impl fmt::Display for PuiseuxSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ram == 1 {
            write!(f, "{}", self.body)
        } else {
            write!(f, "{} [u^{}={}]", self.body.render("u"), self.ram, self.body.var())
        }
    }
}

impl Serialize for PuiseuxSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// An `e`-th root of `a`, expressed in a refined ramified coordinate.
///
/// The leading coefficient's root comes from `roots`; the unit part is
/// expanded as a binomial series with at most `terms` terms.
pub fn puiseux_root(a: &PuiseuxSeries, e: u32, roots: &mut RootTable, terms: usize) -> Result<PuiseuxSeries, SeriesError> {
    let (v, c) = a.body.lead().map(|(k, c)| (k, c.clone())).ok_or(SeriesError::ZeroLeadingCoefficient)?;
    let gamma = roots.root_of(&c, e)?;
    let step = e / (v.unsigned_abs().gcd(&(e as u64)) as u32).max(1);
    let step = if v == 0 { 1 } else { step };
    let fine = a.refine(step);
    let var = a.var().to_string();
    // a = c u'^(v step) (1 + h), and the root has leading exponent v step / e
    let unit = fine.body.shift(-v * step as i64).scale(&c.inv()?);
    let terms = terms * step as usize;
    let h = unit.try_sub(&LaurentSeries::one(&var))?;
    let e_q = BigRational::new(BigInt::one(), BigInt::from(e));
    // binomial series in h; h has positive valuation in u'
    let rel_cap = match unit.prec() {
        Some(p) => (p as usize).min(terms),
        None => terms,
    };
    let mut series = LaurentSeries::new(&var, [], Some(rel_cap as i64));
    let mut hk = LaurentSeries::one(&var);
    for k in 0..=rel_cap as u32 {
        if hk.floor().is_some_and(|f| f >= rel_cap as i64) {
            break;
        }
        let b = Scalar::from_rational(binom_q(&e_q, k));
        series = series.try_add(&hk.scale(&b))?;
        hk = hk.mul_capped(&h, Some(rel_cap as i64))?;
    }
    let unit_root = if h.is_exact_zero() { LaurentSeries::one(&var) } else { series };
    let body = unit_root.scale(&gamma).shift(v * step as i64 / e as i64);
    let body = roots.reduce_series(&body);
    Ok(PuiseuxSeries { ram: fine.ram, body }.normalized())
}
