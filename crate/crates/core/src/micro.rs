//! Weyl-algebra operators and truncated microdifferential operators.
//!
//! A [`MicroOperator`] is a sum of normal-ordered terms `c * x^a * ŵ^n`
//! where `x` is the space variable of its chart (`z` near a finite point,
//! `w = 1/z` near infinity) and `ŵ` stands for `∂_z^{-1}`. Products follow
//! `ŵ^n x^p = Σ_k binom(-n, k) (∂_z^k x^p) ŵ^(n+k)`, which for integer `n`
//! covers both differential (`n < 0`) and integral (`n > 0`) powers.
//!
//! Everything is truncated in `ŵ`-order; the `E∞` chart may also truncate
//! large positive powers of `w`, with the trusted region tracked exactly.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::scalar::{binom, falling, Scalar};
use crate::series::LaurentSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicroError {
    #[error("operators live in different charts")]
    ChartMismatch,
    #[error("not formally invertible: {0}")]
    NotFormallyInvertible(String),
    #[error("membership inconclusive over the computed window:\n{0}")]
    Inconclusive(String),
    #[error("series diagnostic disagrees with the closed-form criterion: {0}")]
    OracleDisagreement(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Chart {
    /// Space variable `z`, coefficients in `C[[z]]`.
    E0,
    /// Space variable `w = 1/z`.
    EInf,
}

impl Chart {
    pub fn space_var(self) -> &'static str {
        match self {
            Chart::E0 => "z",
            Chart::EInf => "w",
        }
    }
}

/// Truncation window for products and inversions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    /// Terms with `ŵ`-order at or above this are dropped.
    pub hat: i64,
    /// In the `E∞` chart, terms with `w`-exponent at or above this are dropped.
    pub space: i64,
}

impl Default for Window {
    fn default() -> Self {
        Window { hat: 12, space: 24 }
    }
}

fn min_opt(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Truncated element of `E0` or `E∞`, keyed by `(ŵ-order, space exponent)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroOperator {
    chart: Chart,
    terms: BTreeMap<(i64, i64), Scalar>,
    hat_prec: Option<i64>,
    space_prec: Option<i64>,
}

impl MicroOperator {
    pub fn zero(chart: Chart) -> Self {
        MicroOperator { chart, terms: BTreeMap::new(), hat_prec: None, space_prec: None }
    }
    pub fn one(chart: Chart) -> Self {
        MicroOperator::term(chart, Scalar::one(), 0, 0)
    }
    /// `c * x^space * ŵ^hat`.
    pub fn term(chart: Chart, c: Scalar, space: i64, hat: i64) -> Self {
        let mut m = MicroOperator::zero(chart);
        m.add_term(hat, space, c);
        m
    }
    /// Multiplication by a function of the space variable.
    pub fn from_series(chart: Chart, s: &LaurentSeries) -> Self {
        let mut m = MicroOperator::zero(chart);
        for (k, c) in s.terms() {
            m.add_term(0, k, c.clone());
        }
        if let Some(p) = s.prec() {
            m.space_prec = Some(p);
        }
        m
    }
    /// `∂_z = ŵ^{-1}` in `E0`; `∂_w = -z^2 ∂_z = -w^{-2} ŵ^{-1}` in `E∞`.
    pub fn d_space(chart: Chart) -> Self {
        match chart {
            Chart::E0 => MicroOperator::term(chart, Scalar::one(), 0, -1),
            Chart::EInf => MicroOperator::term(chart, Scalar::from_int(-1), -2, -1),
        }
    }

    fn add_term(&mut self, hat: i64, space: i64, c: Scalar) {
        if c.is_zero() || self.hat_prec.is_some_and(|p| hat >= p) || self.space_prec.is_some_and(|p| space >= p) {
            return;
        }
        match self.terms.remove(&(hat, space)) {
            None => {
                self.terms.insert((hat, space), c);
            }
            Some(old) => {
                let s = &old + &c;
                if !s.is_zero() {
                    self.terms.insert((hat, space), s);
                }
            }
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }
    pub fn hat_prec(&self) -> Option<i64> {
        self.hat_prec
    }
    pub fn space_prec(&self) -> Option<i64> {
        self.space_prec
    }
    pub fn terms(&self) -> impl Iterator<Item = ((i64, i64), &Scalar)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }
    /// Coefficient of `x^space ŵ^hat`.
    pub fn coeff(&self, space: i64, hat: i64) -> Scalar {
        self.terms.get(&(hat, space)).cloned().unwrap_or_else(Scalar::zero)
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    /// Lowest `ŵ`-order present.
    pub fn hat_valuation(&self) -> Option<i64> {
        self.terms.keys().next().map(|k| k.0)
    }
    pub fn min_space(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.1).min()
    }
    /// True when some space exponent is negative (outside `E0`, inside the
    /// extension by negative powers).
    pub fn is_extended(&self) -> bool {
        self.terms.keys().any(|k| k.1 < 0)
    }

    pub fn truncate_hat(&self, p: i64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|k, _| k.0 < p);
        out.hat_prec = min_opt(out.hat_prec, Some(p));
        out
    }

    fn same_chart(&self, o: &Self) -> Result<(), MicroError> {
        if self.chart != o.chart {
            return Err(MicroError::ChartMismatch);
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self, MicroError> {
        self.same_chart(o)?;
        let mut out = MicroOperator {
            chart: self.chart,
            terms: BTreeMap::new(),
            hat_prec: min_opt(self.hat_prec, o.hat_prec),
            space_prec: min_opt(self.space_prec, o.space_prec),
        };
        for ((h, s), c) in self.terms.iter().chain(o.terms.iter()) {
            out.add_term(*h, *s, c.clone());
        }
        Ok(out)
    }
    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -&*c;
        }
        out
    }
    pub fn sub(&self, o: &Self) -> Result<Self, MicroError> {
        self.add(&o.neg())
    }
    pub fn scale(&self, k: &Scalar) -> Self {
        let mut out = self.clone();
        out.terms = BTreeMap::new();
        for (key, c) in &self.terms {
            out.add_term(key.0, key.1, c * k);
        }
        out
    }

    /// Normal-ordered product within the window.
    pub fn mul(&self, o: &Self, win: Window) -> Result<Self, MicroError> {
        self.same_chart(o)?;
        let chart = self.chart;
        let (Some(va), Some(vb)) = (self.hat_valuation(), o.hat_valuation()) else {
            return Ok(MicroOperator::zero(chart));
        };
        let hat_prec = min_opt(
            Some(win.hat),
            min_opt(self.hat_prec.map(|p| p + vb), o.hat_prec.map(|p| p + va)),
        );
        let space_prec = match chart {
            Chart::E0 => None,
            Chart::EInf => {
                let sa = self.min_space().expect("nonzero");
                let sb = o.min_space().expect("nonzero");
                min_opt(Some(win.space), min_opt(self.space_prec.map(|p| p + sb), o.space_prec.map(|p| p + sa)))
            }
        };
        let mut out = MicroOperator { chart, terms: BTreeMap::new(), hat_prec, space_prec };
        let hp = hat_prec.expect("window bounds the order");
        for (&(n, a), ca) in &self.terms {
            for (&(m, p), cb) in &o.terms {
                let base = ca * cb;
                let mut k: u32 = 0;
                loop {
                    let h = n + m + k as i64;
                    if h >= hp {
                        break;
                    }
                    let (space, f) = match chart {
                        Chart::E0 => (a + p - k as i64, falling(p, k)),
                        Chart::EInf => (a + p + k as i64, falling(-p, k)),
                    };
                    if chart == Chart::EInf && space_prec.is_some_and(|sp| space >= sp) {
                        break;
                    }
                    let b = binom(-n, k);
                    if b.is_zero() || f.is_zero() {
                        // both factors vanish for all larger k once they vanish
                        break;
                    }
                    let q = BigRational::from_integer(b * f);
                    out.add_term(h, space, base.scale(&q));
                    k += 1;
                }
            }
        }
        Ok(out)
    }

    /// Formal inverse, computed as `(Σ N^k) U^{-1}` where `U` is the leading
    /// `ŵ`-term, which must be a single monomial, and `N = 1 - U^{-1} A`.
    pub fn invert(&self, win: Window) -> Result<Self, MicroError> {
        let chart = self.chart;
        let i0 = self.hat_valuation().ok_or_else(|| MicroError::NotFormallyInvertible("zero operator".into()))?;
        let lead: Vec<_> = self.terms.range((i0, i64::MIN)..(i0 + 1, i64::MIN)).collect();
        if lead.len() != 1 {
            return Err(MicroError::NotFormallyInvertible(format!(
                "leading ŵ-order {i0} has {} terms; a single monomial is required",
                lead.len()
            )));
        }
        let (&(_, e), c) = lead[0];
        let c_inv = c.inv().map_err(|_| MicroError::NotFormallyInvertible("zero leading coefficient".into()))?;
        let u_inv = MicroOperator::term(chart, c_inv, 0, -i0).mul(&MicroOperator::term(chart, Scalar::one(), -e, 0), win)?;
        let one = MicroOperator::one(chart);
        let n = one.sub(&u_inv.mul(self, win)?)?;
        if n.hat_valuation().is_some_and(|v| v < 1) {
            return Err(MicroError::NotFormallyInvertible("remainder does not raise the ŵ-order".into()));
        }
        let mut sum = one.clone();
        let mut power = one;
        loop {
            power = power.mul(&n, win)?;
            if power.is_zero() {
                // keep the trusted region of the sum honest
                sum.hat_prec = min_opt(sum.hat_prec, power.hat_prec);
                sum.space_prec = min_opt(sum.space_prec, power.space_prec);
                break;
            }
            sum = sum.add(&power)?;
        }
        sum.mul(&u_inv, win)
    }

    /// Agreement on every coefficient both operators know.
    pub fn agrees_with(&self, o: &Self) -> bool {
        if self.chart != o.chart {
            return false;
        }
        let hp = min_opt(self.hat_prec, o.hat_prec);
        let sp = min_opt(self.space_prec, o.space_prec);
        let known = |&(h, s): &(i64, i64)| hp.is_none_or(|p| h < p) && sp.is_none_or(|p| s < p);
        let keys: std::collections::BTreeSet<_> = self.terms.keys().chain(o.terms.keys()).filter(|k| known(k)).collect();
        keys.into_iter().all(|&(h, s)| self.coeff(s, h) == o.coeff(s, h))
    }

    /// `ŵ`-order ↦ minimal space exponent, over the trusted window.
    pub fn profile(&self) -> Vec<(i64, i64)> {
        let mut out: BTreeMap<i64, i64> = BTreeMap::new();
        for &(h, s) in self.terms.keys() {
            out.entry(h).and_modify(|m| *m = (*m).min(s)).or_insert(s);
        }
        out.into_iter().collect()
    }

    pub fn profile_table(&self) -> String {
        let mut s = String::from("ŵ-order | min space exponent\n");
        for (h, m) in self.profile() {
            s.push_str(&format!("{h:>7} | {m}\n"));
        }
        s
    }
}

fn fmt_term(c: &Scalar, var: &str, space: i64, hat: i64) -> String {
    let mut mon = Vec::new();
    match space {
        0 => {}
        1 => mon.push(var.to_string()),
        k => mon.push(format!("{var}^{k}")),
    }
    match hat {
        0 => {}
        1 => mon.push("ŵ".to_string()),
        k => mon.push(format!("ŵ^{k}")),
    }
    let mon = mon.join("*");
    if mon.is_empty() {
        return if c.is_single_term() { c.to_string() } else { format!("({c})") };
    }
    if c.is_one() {
        mon
    } else if (-c).is_one() {
        format!("-{mon}")
    } else if c.is_single_term() {
        format!("{c}*{mon}")
    } else {
        format!("({c})*{mon}")
    }
}

impl fmt::Display for MicroOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = self.chart.space_var();
        let mut out = String::new();
        for (i, (&(h, s), c)) in self.terms.iter().enumerate() {
            let t = fmt_term(c, var, s, h);
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
        if out.is_empty() {
            out.push('0');
        }
        if let Some(p) = self.hat_prec {
            out.push_str(&format!(" + O(ŵ^{p})"));
        }
        f.write_str(&out)
    }
}

// ---------------------------------------------------------------------------
// membership

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ring {
    E0,
    /// `E∞` extended by finitely many negative powers of `w`.
    EInfExtended,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Membership {
    InRing,
    Escapes(Vec<(i64, i64)>),
}

/// Decide ring membership of a truncated operator from its support profile.
///
/// `E0` membership is read off directly: every computed space exponent must
/// be nonnegative. For the extended `E∞` ring the profile is cut into three
/// consecutive thirds. Minima that fall strictly from third to third count
/// as escaping (the minimum over a third absorbs the oscillation that
/// ramified blocks produce); a last third that does not undercut the middle
/// one counts as bounded.
pub fn membership_diagnostic(a: &MicroOperator, ring: Ring) -> Result<Membership, MicroError> {
    let profile = a.profile();
    match ring {
        Ring::E0 => {
            if profile.iter().all(|&(_, m)| m >= 0) {
                Ok(Membership::InRing)
            } else {
                Ok(Membership::Escapes(profile))
            }
        }
        Ring::EInfExtended => {
            if profile.len() < 6 {
                return Err(MicroError::Inconclusive(a.profile_table()));
            }
            let third = profile.len() / 3;
            let min_of = |s: &[(i64, i64)]| s.iter().map(|p| p.1).min().expect("nonempty");
            let m1 = min_of(&profile[..third]);
            let m2 = min_of(&profile[third..2 * third]);
            let m3 = min_of(&profile[2 * third..]);
            if m1 > m2 && m2 > m3 {
                Ok(Membership::Escapes(profile))
            } else if m3 >= m2 {
                Ok(Membership::InRing)
            } else {
                Err(MicroError::Inconclusive(a.profile_table()))
            }
        }
    }
}

/// Membership decision that must agree with an independently known answer.
pub fn checked_membership(a: &MicroOperator, ring: Ring, expect_in_ring: bool) -> Result<Membership, MicroError> {
    let m = membership_diagnostic(a, ring)?;
    let got = matches!(m, Membership::InRing);
    if got != expect_in_ring {
        return Err(MicroError::OracleDisagreement(format!(
            "profile says {}, closed form says {}\n{}",
            if got { "in ring" } else { "escapes" },
            if expect_in_ring { "in ring" } else { "escapes" },
            a.profile_table()
        )));
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Weyl algebra

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WeylChart {
    /// Generators `z`, `∂_z`.
    Z,
    /// Generators `ẑ`, `∂_ẑ`.
    ZHat,
}

impl WeylChart {
    fn dual(self) -> Self {
        match self {
            WeylChart::Z => WeylChart::ZHat,
            WeylChart::ZHat => WeylChart::Z,
        }
    }
    fn var(self) -> &'static str {
        match self {
            WeylChart::Z => "z",
            WeylChart::ZHat => "ẑ",
        }
    }
}

/// Polynomial differential operator `Σ c x^a ∂^b` in normal order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylOperator {
    chart: WeylChart,
    terms: BTreeMap<(u32, u32), Scalar>,
}

impl WeylOperator {
    pub fn zero(chart: WeylChart) -> Self {
        WeylOperator { chart, terms: BTreeMap::new() }
    }
    /// `c x^a ∂^b`.
    pub fn term(chart: WeylChart, c: Scalar, a: u32, b: u32) -> Self {
        let mut w = WeylOperator::zero(chart);
        w.add_term(a, b, c);
        w
    }
    pub fn x(chart: WeylChart) -> Self {
        WeylOperator::term(chart, Scalar::one(), 1, 0)
    }
    pub fn d(chart: WeylChart) -> Self {
        WeylOperator::term(chart, Scalar::one(), 0, 1)
    }
    pub fn constant(chart: WeylChart, c: Scalar) -> Self {
        WeylOperator::term(chart, c, 0, 0)
    }
    fn add_term(&mut self, a: u32, b: u32, c: Scalar) {
        if c.is_zero() {
            return;
        }
        let s = match self.terms.remove(&(a, b)) {
            Some(old) => &old + &c,
            None => c,
        };
        if !s.is_zero() {
            self.terms.insert((a, b), s);
        }
    }
    pub fn chart(&self) -> WeylChart {
        self.chart
    }
    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), &Scalar)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }
    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.chart, o.chart, "Weyl chart mismatch");
        let mut out = self.clone();
        for (&(a, b), c) in &o.terms {
            out.add_term(a, b, c.clone());
        }
        out
    }
    pub fn neg(&self) -> Self {
        WeylOperator { chart: self.chart, terms: self.terms.iter().map(|(k, c)| (*k, -c)).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    /// Product using `∂^b x^c = Σ_k binom(b,k) c!/(c-k)! x^(c-k) ∂^(b-k)`.
    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.chart, o.chart, "Weyl chart mismatch");
        let mut out = WeylOperator::zero(self.chart);
        for (&(a, b), ca) in &self.terms {
            for (&(c, d), cb) in &o.terms {
                let base = ca * cb;
                for k in 0..=b.min(c) {
                    let f = binom(b as i64, k) * falling(c as i64, k);
                    out.add_term(a + c - k, b + d - k, base.scale(&BigRational::from_integer(f)));
                }
            }
        }
        out
    }
    pub fn pow(&self, n: u32) -> Self {
        let mut acc = WeylOperator::constant(self.chart, Scalar::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }
    pub fn commutator(&self, o: &Self) -> Self {
        self.mul(o).sub(&o.mul(self))
    }
}

impl fmt::Display for WeylOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.chart.var();
        let mut parts = Vec::new();
        for (&(a, b), c) in &self.terms {
            let mut mon = Vec::new();
            match a {
                0 => {}
                1 => mon.push(x.to_string()),
                _ => mon.push(format!("{x}^{a}")),
            }
            match b {
                0 => {}
                1 => mon.push(format!("∂_{x}")),
                _ => mon.push(format!("∂_{x}^{b}")),
            }
            let mon = mon.join("*");
            parts.push(if mon.is_empty() {
                c.to_string()
            } else if c.is_one() {
                mon
            } else if (-c).is_one() {
                format!("-{mon}")
            } else {
                format!("({c})*{mon}")
            });
        }
        if parts.is_empty() {
            return f.write_str("0");
        }
        f.write_str(&parts.join(" + ").replace("+ -", "- "))
    }
}

/// The Fourier-Laplace map on Weyl operators: `x ↦ -∂_x̂`, `∂_x ↦ x̂`,
/// extended multiplicatively and re-normal-ordered in the dual chart.
///
/// The generator images satisfy `[x̂, -∂_x̂] = 1 = [∂_x, x]`, so the map is
/// multiplicative. Applied twice it sends `x ↦ -x` and `∂_x ↦ -∂_x`.
pub fn anti_involution(a: &WeylOperator) -> WeylOperator {
    let target = a.chart.dual();
    let img_x = WeylOperator::term(target, Scalar::from_int(-1), 0, 1);
    let img_d = WeylOperator::x(target);
    let mut out = WeylOperator::zero(target);
    for (&(p, q), c) in &a.terms {
        let t = img_x.pow(p).mul(&img_d.pow(q));
        out = out.add(&t.mul(&WeylOperator::constant(target, c.clone())));
    }
    out
}

// ---------------------------------------------------------------------------
// chart identities

/// A fixed rewriting rule between coordinate and operator alphabets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChartRule {
    pub id: &'static str,
    pub lhs: &'static str,
    pub rhs: &'static str,
}

pub const RULE_D_W: ChartRule = ChartRule { id: "d_w", lhs: "∂_w", rhs: "-z^2*∂_z" };
pub const RULE_D_ZHAT: ChartRule = ChartRule { id: "d_zhat", lhs: "∂_ẑ", rhs: "-ŵ^2*∂_ŵ" };
pub const RULE_ZHAT: ChartRule = ChartRule { id: "zhat", lhs: "ẑ", rhs: "ŵ^-1" };
pub const RULE_INV_D_Z: ChartRule = ChartRule { id: "inv_d_z", lhs: "∂_z^-1", rhs: "ŵ" };
pub const RULE_INV_D_W: ChartRule = ChartRule { id: "inv_d_w", lhs: "∂_w^-1", rhs: "-ŵ*w^2" };
pub const RULE_FOURIER_Z: ChartRule = ChartRule { id: "fourier_z", lhs: "z", rhs: "-∂_ẑ" };
pub const RULE_FOURIER_D_Z: ChartRule = ChartRule { id: "fourier_d_z", lhs: "∂_z", rhs: "ẑ" };

/// All rewriting rules the local engine may cite.
pub fn chart_identities() -> &'static [ChartRule] {
    &[RULE_D_W, RULE_D_ZHAT, RULE_ZHAT, RULE_INV_D_Z, RULE_INV_D_W, RULE_FOURIER_Z, RULE_FOURIER_D_Z]
}

/// Coefficient `(-1)^k`, handy for closed forms in tests and diagnostics.
pub fn sign(k: i64) -> BigInt {
    if k.rem_euclid(2) == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Scalar {
        x.parse().unwrap()
    }
    fn win() -> Window {
        Window { hat: 8, space: 16 }
    }

    #[test]
    fn hat_times_space_variable() {
        let what = MicroOperator::term(Chart::E0, Scalar::one(), 0, 1);
        let z = MicroOperator::term(Chart::E0, Scalar::one(), 1, 0);
        let p = what.mul(&z, win()).unwrap();
        assert_eq!(p.coeff(1, 1), s("1"));
        assert_eq!(p.coeff(0, 2), s("-1"));
        assert_eq!(p.terms().count(), 2);
        let one = MicroOperator::one(Chart::E0);
        assert!(what.mul(&one, win()).unwrap().agrees_with(&what));
    }

    #[test]
    fn commutator_with_inverse_space_variable_at_infinity() {
        let what = MicroOperator::term(Chart::EInf, Scalar::one(), 0, 1);
        let winv = MicroOperator::term(Chart::EInf, Scalar::one(), -1, 0);
        let c = what.mul(&winv, win()).unwrap().sub(&winv.mul(&what, win()).unwrap()).unwrap();
        assert_eq!(c.terms().count(), 1);
        assert_eq!(c.coeff(0, 2), s("-1"));
    }

    #[test]
    fn inverse_of_d_z() {
        let inv = MicroOperator::d_space(Chart::E0).invert(win()).unwrap();
        assert_eq!(inv.terms().count(), 1);
        assert_eq!(inv.coeff(0, 1), s("1"));
        assert_eq!(membership_diagnostic(&inv, Ring::E0).unwrap(), Membership::InRing);
    }

    #[test]
    fn inverse_with_logarithmic_term() {
        let a = MicroOperator::d_space(Chart::E0).sub(&MicroOperator::term(Chart::E0, s("λ"), -1, 0)).unwrap();
        let inv = a.invert(win()).unwrap();
        assert_eq!(inv.coeff(0, 1), s("1"));
        assert_eq!(inv.coeff(-1, 2), s("λ"));
        assert_eq!(inv.coeff(-2, 3), s("λ + λ^2"));
        let back = a.mul(&inv, win()).unwrap();
        assert!(back.agrees_with(&MicroOperator::one(Chart::E0)));
        match membership_diagnostic(&inv, Ring::E0).unwrap() {
            Membership::Escapes(p) => {
                for (h, m) in p {
                    assert_eq!(m, 1 - h);
                }
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn fourier_map_on_generators() {
        let z = WeylOperator::x(WeylChart::Z);
        let dz = WeylOperator::d(WeylChart::Z);
        assert_eq!(anti_involution(&z), WeylOperator::term(WeylChart::ZHat, s("-1"), 0, 1));
        assert_eq!(anti_involution(&dz), WeylOperator::x(WeylChart::ZHat));
        assert_eq!(anti_involution(&anti_involution(&z)), z.neg());
        assert_eq!(anti_involution(&anti_involution(&dz)), dz.neg());
        // [∂, z] = 1 is preserved
        let c = anti_involution(&dz).commutator(&anti_involution(&z));
        assert_eq!(c, WeylOperator::constant(WeylChart::ZHat, Scalar::one()));
    }
}
