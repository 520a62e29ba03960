//! Local Fourier-Laplace rules: numeric invariants, the Legendre transform of
//! exponents, closed-form rules for regular and slope-one summands,
//! microlocal ranks, and the relation solver that produces transformed
//! connection matrices.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::germ::{
    formal_decompose, merge_slopes, swan_of, ConnectionGerm, DecomposeOptions, FormalSummand, FormalType, GermError,
    Point,
};
use crate::matrix::Mat;
use crate::micro::{
    checked_membership, Chart, ChartRule, MicroError, MicroOperator, Ring, Window, RULE_D_W, RULE_D_ZHAT,
    RULE_FOURIER_D_Z, RULE_FOURIER_Z, RULE_ZHAT,
};
use crate::scalar::{Scalar, ScalarError};
use crate::series::{puiseux_root, LaurentSeries, PuiseuxSeries, RootTable, SeriesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("slope multiset {0} is outside the domain of this direction")]
    SlopeOutOfDomain(String),
    #[error("leading coefficient vanishes")]
    ZeroLeadingCoefficient,
    #[error("residue at the origin is not semisimple")]
    NonSemisimpleResidue,
    #[error("closed form and series diagnostic disagree: {0}")]
    OracleDisagreement(String),
    #[error("relations are inconsistent or outside the supported class: {0}")]
    InconsistentRelations(String),
    #[error("solver output contradicts the Legendre seed: {0}")]
    SeedMismatch(String),
    #[error(transparent)]
    Germ(#[from] GermError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Micro(#[from] MicroError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

fn int(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

// ---------------------------------------------------------------------------
// numerics

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    ZeroToInfHat,
    InfToZeroHat,
    InfToInfHat,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LocalNumerics {
    pub rank: usize,
    pub swan: u64,
    pub slopes: Vec<(BigRational, usize)>,
}

impl LocalNumerics {
    pub fn from_slopes(slopes: Vec<(BigRational, usize)>) -> Result<Self, LocalError> {
        let slopes = merge_slopes(slopes);
        let rank = slopes.iter().map(|p| p.1).sum();
        let swan = swan_of(&slopes)?;
        Ok(LocalNumerics { rank, swan, slopes })
    }
    pub fn of_formal(t: &FormalType) -> Result<Self, LocalError> {
        LocalNumerics::from_slopes(t.slopes())
    }
    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }
}

impl Serialize for LocalNumerics {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LocalNumerics", 3)?;
        st.serialize_field("rank", &self.rank)?;
        st.serialize_field("swan", &self.swan)?;
        let sl: Vec<(String, usize)> = self.slopes.iter().map(|(a, r)| (a.to_string(), *r)).collect();
        st.serialize_field("slopes", &sl)?;
        st.end()
    }
}

impl fmt::Display for LocalNumerics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sl: Vec<String> = self.slopes.iter().map(|(a, r)| format!("({a},{r})")).collect();
        write!(f, "rank {} swan {} slopes {{{}}}", self.rank, self.swan, sl.join(", "))
    }
}

/// Rank and Swan bookkeeping of the local transforms, applied per pure part.
///
/// Each part of slope `s` and rank `r` keeps its Swan conductor `r s`; the
/// ranks follow `r(1+s)`, `r(1-s)` and `r(s-1)` respectively.
pub fn numeric_local_fl(dir: Direction, n: &LocalNumerics) -> Result<LocalNumerics, LocalError> {
    let one = BigRational::one();
    let out_of_domain = || LocalError::SlopeOutOfDomain(n.to_string());
    let parts: Vec<(BigRational, usize)> = match dir {
        Direction::ZeroToInfHat => n.slopes.clone(),
        Direction::InfToZeroHat => {
            let low = n.slopes.iter().filter(|(s, _)| s < &one).count();
            if low == 0 {
                return Ok(LocalNumerics::default());
            }
            if low != n.slopes.len() {
                return Err(out_of_domain());
            }
            n.slopes.clone()
        }
        Direction::InfToInfHat => {
            let high = n.slopes.iter().filter(|(s, _)| s > &one).count();
            if high == 0 {
                return Ok(LocalNumerics::default());
            }
            if high != n.slopes.len() {
                return Err(out_of_domain());
            }
            n.slopes.clone()
        }
    };
    let mut out = Vec::new();
    for (s, r) in parts {
        let (factor, slope) = match dir {
            Direction::ZeroToInfHat => (&one + &s, &s / (&one + &s)),
            Direction::InfToZeroHat => (&one - &s, &s / (&one - &s)),
            Direction::InfToInfHat => (&s - &one, &s / (&s - &one)),
        };
        let rank = int(r) * factor;
        if !rank.is_integer() {
            return Err(out_of_domain());
        }
        out.push((slope, rank.to_integer().to_usize().expect("small rank")));
    }
    LocalNumerics::from_slopes(out)
}

// ---------------------------------------------------------------------------
// locations and transformed summands

#[derive(Clone, Debug, PartialEq)]
pub enum Location {
    Finite(Scalar),
    ZeroHat,
    InfHat,
}

impl Location {
    pub fn key(&self) -> String {
        match self {
            Location::Finite(c) => c.to_string(),
            Location::ZeroHat => "0hat".into(),
            Location::InfHat => "infhat".into(),
        }
    }
    pub fn coordinate(&self) -> &'static str {
        match self {
            Location::Finite(_) | Location::ZeroHat => "ẑ",
            Location::InfHat => "ŵ",
        }
    }
    /// The same place read as a source point of a further transform.
    pub fn as_point(&self) -> Point {
        match self {
            Location::Finite(c) => Point::Finite(c.clone()),
            Location::ZeroHat => Point::zero(),
            Location::InfHat => Point::Infinity,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Finite(c) => write!(f, "{c}"),
            Location::ZeroHat => f.write_str("0̂"),
            Location::InfHat => f.write_str("∞̂"),
        }
    }
}

impl Serialize for Location {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformedSummand {
    pub location: Location,
    pub summand: FormalSummand,
    pub provenance: String,
    /// Trivial filler that makes local ranks add up to the global rank.
    pub complement: bool,
}

// ---------------------------------------------------------------------------
// closed-form rules

/// Regular residue eigenvalues at the origin: each nonzero `λ` gives a rank-one
/// regular summand at `∞̂` with residue `λ + 1`; zero eigenvalues are killed by
/// microlocalization.
pub fn reg_sing_rule(residues: &[Scalar]) -> Vec<TransformedSummand> {
    residues
        .iter()
        .filter(|l| !l.is_zero())
        .map(|l| TransformedSummand {
            location: Location::InfHat,
            summand: FormalSummand::regular("ŵ", vec![Some(l + &Scalar::one())]),
            provenance: "reg_sing_rule".into(),
            complement: false,
        })
        .collect()
}

/// Rank-one summand at infinity with `d/dw q = (a w^{-2} + c w^{-1}) q`.
pub fn slope_one_rule(a: &Scalar, c: &Scalar) -> Result<TransformedSummand, LocalError> {
    if a.is_zero() {
        return Err(LocalError::ZeroLeadingCoefficient);
    }
    Ok(TransformedSummand {
        location: Location::Finite(-a),
        summand: FormalSummand::regular("ẑ", vec![Some(c - &Scalar::one())]),
        provenance: "slope_one_rule".into(),
        complement: false,
    })
}

/// Regular rank-one summand at infinity with residue `c`.
pub fn regular_infinity_rule(c: Option<&Scalar>) -> TransformedSummand {
    TransformedSummand {
        location: Location::ZeroHat,
        summand: FormalSummand::regular("ẑ", vec![c.map(|c| c - &Scalar::one())]),
        provenance: "regular_infinity_rule".into(),
        complement: false,
    }
}

/// Regular rank-one point at a finite location `c` with residue `ρ`, read on the
/// dual side: a slope-one summand at infinity with exponent `-c w^{-1}`.
pub fn finite_regular_rule(c: &Scalar, rho: Option<&Scalar>) -> TransformedSummand {
    let q = if c.is_zero() {
        PuiseuxSeries::zero("ŵ")
    } else {
        PuiseuxSeries::from_laurent(LaurentSeries::monomial("ŵ", -c, -1))
    };
    TransformedSummand {
        location: Location::InfHat,
        summand: FormalSummand { exponent: q, ramification: 1, rank: 1, residues: vec![rho.map(|r| r + &Scalar::one())] },
        provenance: "finite_regular_rule".into(),
        complement: false,
    }
}

// ---------------------------------------------------------------------------
// Legendre transform

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Zero,
    Infinity,
}

fn rename(s: &LaurentSeries, var: &str) -> LaurentSeries {
    s.with_var(var)
}

/// Stationary-phase transform of an exponent: solve `ẑ = dq/dz`, evaluate
/// `q - z ẑ` at the critical point, and express the result in the target
/// coordinate (`ŵ = 1/ẑ` at `∞̂`, `ẑ` at `0̂`). Slope-one exponents at infinity
/// give their finite location instead, with a zero exponent.
pub fn legendre_exponent(
    q: &PuiseuxSeries,
    source: Source,
    roots: &mut RootTable,
    terms: usize,
) -> Result<(Location, PuiseuxSeries), LocalError> {
    let s = q.slope();
    let one = BigRational::one();
    if s.is_zero() {
        return Err(LocalError::SlopeOutOfDomain("regular exponent has no Legendre transform".into()));
    }
    let target = match source {
        Source::Infinity if s == one => {
            if q.ram() != 1 || q.body().terms().any(|(k, _)| k < -1) {
                return Err(LocalError::SlopeOutOfDomain(format!("slope-one exponent {q} is not a pure pole")));
            }
            return Ok((Location::Finite(q.body().coeff(-1)), PuiseuxSeries::zero("ẑ")));
        }
        Source::Infinity if s > one => Location::InfHat,
        Source::Infinity => Location::ZeroHat,
        Source::Zero => Location::InfHat,
    };
    let d = q.ram() as i64;
    let dq = BigRational::from_integer(BigInt::from(d));
    let qu = rename(&q.body().polar_part(), "u");
    let du = qu.derive();
    // ẑ as a series in u
    let zhat = match source {
        Source::Infinity => du.shift(d + 1).scale(&Scalar::from_rational(-dq.recip())),
        Source::Zero => du.shift(1 - d).scale(&Scalar::from_rational(dq.recip())),
    };
    let budget = terms + (s * &dq).ceil().to_integer().to_usize().unwrap_or(0) + 2;
    let t_of_u = match target {
        Location::InfHat => zhat.invert(budget)?,
        _ => zhat.clone(),
    };
    let p = t_of_u.valuation().ok_or(LocalError::ZeroLeadingCoefficient)?;
    if p <= 0 {
        return Err(LocalError::SlopeOutOfDomain(format!("target coordinate has valuation {p}")));
    }
    let v_of_u = puiseux_root(&PuiseuxSeries::from_laurent(t_of_u.clone()), p as u32, roots, budget)?;
    let v_of_u = roots.reduce_series(v_of_u.body());
    let u_of_v = rename(&v_of_u.reversion(budget)?, "v");
    let u_of_v = roots.reduce_series(&u_of_v);
    let q_at = roots.reduce_series(&qu.compose(&u_of_v, budget)?);
    let v = LaurentSeries::monomial("v", Scalar::one(), 1);
    let z_at = match source {
        Source::Infinity => u_of_v.pow(-d, budget)?,
        Source::Zero => u_of_v.pow(d, budget)?,
    };
    let zhat_at = match target {
        Location::InfHat => v.pow(-p, budget)?,
        _ => v.pow(p, budget)?,
    };
    let qhat = roots.reduce_series(&q_at.try_sub(&z_at.try_mul(&zhat_at)?)?);
    if qhat.prec().is_some_and(|pr| pr < 0) {
        return Err(LocalError::Series(SeriesError::NotReversible(format!(
            "precision budget {budget} leaves the polar part of the transformed exponent unknown"
        ))));
    }
    let body = rename(&qhat.part_below(0), target.coordinate());
    Ok((target, PuiseuxSeries::new(p as u32, body)))
}

/// Whether `a(u) = b(ζ u)` for some `ζ` with `ζ^d = sign`, where `d` is the
/// common ramification. Coefficients are compared modulo the root relations.
pub fn same_orbit(a: &PuiseuxSeries, b: &PuiseuxSeries, sign: i64, roots: &RootTable) -> bool {
    if a.ram() != b.ram() {
        return false;
    }
    let d = a.ram() as i64;
    let sgn = Scalar::from_int(sign);
    let keys: std::collections::BTreeSet<i64> =
        a.body().terms().map(|t| t.0).chain(b.body().terms().map(|t| t.0)).filter(|k| *k < 0).collect();
    if keys.is_empty() {
        return true;
    }
    let Some(&k0) = keys.iter().find(|k| k.gcd(&d) == 1 && !b.body().coeff(**k).is_zero()) else {
        return false;
    };
    let (ak, bk) = (a.body().coeff(k0), b.body().coeff(k0));
    if ak.is_zero() {
        return false;
    }
    let r = roots.reduce(&(&ak / &bk));
    let lhs = roots.reduce(&r.pow(d).expect("nonzero ratio"));
    if !roots.eq(&lhs, &sgn.pow(k0).expect("unit")) {
        return false;
    }
    // m k0 = 1 + j d
    let m = (1..=d).find(|m| (m * k0 - 1).rem_euclid(d) == 0).unwrap_or(1);
    let j = (m * k0 - 1).div_euclid(d);
    let zeta = roots.reduce(&(&r.pow(m).expect("nonzero") * &sgn.pow(j).expect("unit")));
    keys.iter().all(|&k| {
        let z = roots.reduce(&zeta.pow(k).expect("nonzero"));
        roots.is_zero(&(&a.body().coeff(k) - &(&z * &b.body().coeff(k))))
    })
}

// ---------------------------------------------------------------------------
// microlocal ranks

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MicrolocalRank {
    pub rank: usize,
    pub diagnostics: Vec<String>,
}

/// Contribution of formal data to the microlocalization at the given chart.
pub fn microlocal_closed_form(t: &FormalType, chart: Chart) -> usize {
    let one = BigRational::one();
    t.summands
        .iter()
        .map(|s| match chart {
            Chart::EInf if s.slope() > one => {
                (int(s.rank) * (s.slope() - &one)).to_integer().to_usize().expect("integral contribution")
            }
            Chart::EInf => 0,
            Chart::E0 if s.is_trivial() => 0,
            Chart::E0 => s.rank + (s.swan()).to_integer().to_usize().unwrap_or(0),
        })
        .sum()
}

/// Scalar operator `L` with `E/EL` the block's cyclic module, built from an
/// upper-Hessenberg relation matrix whose superdiagonal entries are monomials.
pub fn cyclic_operator(block: &ConnectionGerm, chart: Chart, win: Window) -> Result<Option<MicroOperator>, LocalError> {
    let n = block.rank();
    let entry = |i: usize, j: usize| MicroOperator::from_series(chart, &block.entry_series(i, j).polar_part());
    for i in 0..n {
        for j in i + 2..n {
            if !block.entry_series(i, j).polar_part().is_exact_zero() {
                return Ok(None);
            }
        }
    }
    let d = MicroOperator::d_space(chart);
    let mut p: Vec<MicroOperator> = vec![MicroOperator::one(chart)];
    for i in 0..n - 1 {
        let sup = block.entry_series(i, i + 1).polar_part();
        if sup.num_terms() != 1 {
            return Ok(None);
        }
        let (e, c) = sup.lead().map(|(e, c)| (e, c.clone())).expect("single term");
        let sup_inv = MicroOperator::term(chart, c.inv()?, -e, 0);
        let mut acc = d.mul(&p[i], win)?;
        for (j, pj) in p.iter().enumerate().take(i + 1) {
            acc = acc.sub(&entry(i, j).mul(pj, win)?)?;
        }
        p.push(sup_inv.mul(&acc, win)?);
    }
    let mut l = d.mul(&p[n - 1], win)?;
    for (j, pj) in p.iter().enumerate() {
        l = l.sub(&entry(n - 1, j).mul(pj, win)?)?;
    }
    Ok(Some(l))
}

/// Largest ŵ-order the membership witness widens to when a profile is too
/// short to decide.
const MAX_DIAGNOSTIC_HAT: i64 = 24;

/// Microlocal rank of a germ at `0` (chart `E0`) or `∞` (chart `E∞`): the
/// closed form from the formal type, with every component's cyclic operator
/// inverted and its ring membership checked against the closed form.
pub fn microlocal_rank(
    g: &ConnectionGerm,
    chart: Chart,
    roots: &mut RootTable,
    opts: DecomposeOptions,
    win: Window,
) -> Result<MicrolocalRank, LocalError> {
    let polar = g.polar();
    let ring = match chart {
        Chart::E0 => Ring::E0,
        Chart::EInf => Ring::EInfExtended,
    };
    let mut rank = 0;
    let mut diagnostics = Vec::new();
    for comp in polar.components() {
        let block = polar.restrict(&comp);
        let ft = formal_decompose(&block, roots, opts)?;
        let c = microlocal_closed_form(&ft, chart);
        rank += c;
        if block.pole_order() == 0 {
            diagnostics.push(format!("generators {comp:?}: holomorphic, contributes 0"));
            continue;
        }
        let mut w = win;
        loop {
            match cyclic_operator(&block, chart, w)? {
                None => diagnostics.push(format!("generators {comp:?}: closed form {c}, no cyclic operator for this block shape")),
                Some(l) => {
                    let inv = l.invert(w)?;
                    match checked_membership(&inv, ring, c == 0) {
                        Err(MicroError::Inconclusive(_)) if w.hat < MAX_DIAGNOSTIC_HAT => {
                            w = Window { hat: w.hat + 4, space: w.space + 8 };
                            continue;
                        }
                        Err(MicroError::OracleDisagreement(s)) => {
                            return Err(LocalError::OracleDisagreement(format!("generators {comp:?}: {s}")))
                        }
                        Err(other) => return Err(LocalError::Micro(other)),
                        Ok(_) => {}
                    }
                    diagnostics.push(format!(
                        "generators {comp:?}: closed form {c}, inverse {} the ring",
                        if c == 0 { "stays in" } else { "escapes" }
                    ));
                }
            }
            break;
        }
    }
    Ok(MicrolocalRank { rank, diagnostics })
}

// ---------------------------------------------------------------------------
// relation solver

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutput {
    /// `d/dŵ q_S = B(ŵ) q_S` (or in `ẑ` for the origin chart) on surviving generators.
    pub matrix: Mat<LaurentSeries>,
    pub generators: Vec<usize>,
    /// Rewriting rules used, in order.
    pub rules: Vec<ChartRule>,
    pub notes: Vec<String>,
}

impl SolverOutput {
    pub fn dim(&self) -> usize {
        self.generators.len()
    }
    /// Coefficient matrix of `ŵ^k`.
    pub fn coeff(&self, k: i64) -> Mat<Scalar> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix.get(i, j).coeff(k))
    }
    /// Exponents whose coefficients are fully known.
    pub fn known_below(&self) -> i64 {
        self.matrix.entries().filter_map(|(_, _, e)| e.prec()).min().unwrap_or(i64::MAX)
    }
    /// The output as a germ at a point of the dual line.
    pub fn as_germ(&self, point: Point) -> Result<ConnectionGerm, GermError> {
        let kb = self.known_below().min(0);
        let mut orders: std::collections::BTreeSet<i64> = std::collections::BTreeSet::new();
        for (_, _, e) in self.matrix.entries() {
            orders.extend(e.terms().map(|t| t.0).filter(|k| *k < kb));
        }
        ConnectionGerm::new(point, self.dim(), orders.into_iter().map(|k| (k, self.coeff(k))))
    }
}

fn lp_zero(var: &str) -> LaurentSeries {
    LaurentSeries::zero(var)
}

fn is_monomial(s: &LaurentSeries) -> bool {
    s.is_exact() && s.num_terms() == 1
}

/// Transform the irregular relations `d/dw q = (C1 w^{-3} + C0 w^{-2}) q` at
/// infinity into `d/dŵ q_S = B(ŵ) q_S` at `∞̂`.
///
/// With `∂_w = -z^2 ∂_z`, `z ↦ -∂_ẑ = ŵ^2 ∂_ŵ` and `∂_z ↦ ẑ = ŵ^{-1}`, the
/// relations read `C1 ŵ^2 ∂_ŵ q + (ŵ^{-1} + C0) q = 0`. Rows without a
/// derivative are linear relations among generators and eliminate them;
/// the remaining rows are solved for `∂_ŵ` on the survivors.
pub fn normal_form_solver(g: &ConnectionGerm, terms: usize) -> Result<SolverOutput, LocalError> {
    if !g.point().is_infinity() {
        return Err(LocalError::InconsistentRelations("the ∞̂ solver takes the germ at infinity".into()));
    }
    let n = g.rank();
    let m = g.pole_order();
    if m > 3 {
        return Err(LocalError::InconsistentRelations(format!("pole order {m} exceeds the supported order 3")));
    }
    let var = "ŵ";
    let rules = vec![RULE_D_W, RULE_FOURIER_Z, RULE_FOURIER_D_Z, RULE_D_ZHAT, RULE_ZHAT];
    let c1 = g.coeff(-3);
    let c0 = g.coeff(-2);
    let (p, r) = c1.row_compress();
    let pc1 = p.mul(&c1);
    // M = ŵ^{-1} I + C0 as Laurent polynomials
    let lift = |x: &Scalar| LaurentSeries::constant(var, x.clone());
    let m_mat: Mat<LaurentSeries> = Mat::from_fn(n, n, |i, j| {
        let mut e = lift(c0.get(i, j));
        if i == j {
            e = e.try_add(&LaurentSeries::monomial(var, Scalar::one(), -1)).expect("same coordinate");
        }
        e
    });
    let pm = p.map(lift).mul(&m_mat);
    // elimination: q = T q_S
    let mut survivors: Vec<usize> = (0..n).collect();
    let mut t: Vec<Vec<LaurentSeries>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { LaurentSeries::one(var) } else { lp_zero(var) }).collect())
        .collect();
    let mut notes = Vec::new();
    for row in r..n {
        let coeffs: Vec<LaurentSeries> = (0..survivors.len())
            .map(|c| {
                let mut acc = lp_zero(var);
                for (k, tk) in t.iter().enumerate() {
                    acc = acc.try_add(&pm.get(row, k).try_mul(&tk[c]).expect("same coordinate")).expect("same coordinate");
                }
                acc
            })
            .collect();
        let nonzero: Vec<usize> = (0..coeffs.len()).filter(|&c| !coeffs[c].is_exact_zero()).collect();
        match nonzero.len() {
            0 => continue,
            1 => {
                let c = nonzero[0];
                notes.push(format!("relation forces q{} = 0", survivors[c] + 1));
                survivors.remove(c);
                for tr in &mut t {
                    tr.remove(c);
                }
            }
            _ => {
                let Some(&piv) = nonzero.iter().find(|&&c| is_monomial(&coeffs[c])) else {
                    return Err(LocalError::InconsistentRelations(
                        "linear relation has no monomial coefficient to eliminate with".into(),
                    ));
                };
                let inv = coeffs[piv].invert(1)?;
                let factors: Vec<LaurentSeries> =
                    (0..coeffs.len()).map(|c| coeffs[c].try_mul(&inv).expect("same coordinate").neg()).collect();
                notes.push(format!(
                    "relation eliminates q{} = {}",
                    survivors[piv] + 1,
                    nonzero
                        .iter()
                        .filter(|&&c| c != piv)
                        .map(|&c| format!("({})*q{}", factors[c], survivors[c] + 1))
                        .collect::<Vec<_>>()
                        .join(" + ")
                ));
                for tr in &mut t {
                    let tp = tr[piv].clone();
                    for c in 0..tr.len() {
                        if c != piv {
                            tr[c] = tr[c].try_add(&tp.try_mul(&factors[c]).expect("same")).expect("same");
                        }
                    }
                    tr.remove(piv);
                }
                survivors.remove(piv);
            }
        }
    }
    let s = survivors.len();
    if s != r {
        return Err(LocalError::InconsistentRelations(format!(
            "{r} differential relations for {s} surviving generators"
        )));
    }
    if s == 0 {
        return Ok(SolverOutput { matrix: Mat::from_rows(vec![]), generators: vec![], rules, notes });
    }
    let t_mat: Mat<LaurentSeries> = Mat::from_rows(t);
    let r_mat: Mat<LaurentSeries> = pc1.select(&(0..r).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>()).map(lift);
    let m_top: Mat<LaurentSeries> = pm.select(&(0..r).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let k_mat = r_mat.mul(&t_mat);
    let det = k_mat.det();
    if det.is_exact_zero() {
        return Err(LocalError::InconsistentRelations("derivative coefficients are singular".into()));
    }
    let det_inv = det.invert(terms)?;
    let k_inv = k_mat.adjugate().scale(&det_inv);
    let w2 = LaurentSeries::monomial(var, Scalar::one(), 2);
    let t_prime = t_mat.map(|e| e.derive());
    let rhs = m_top.mul(&t_mat).add(&r_mat.mul(&t_prime).scale(&w2));
    let g_mat = k_inv.mul(&rhs).neg();
    let b = g_mat.scale(&LaurentSeries::monomial(var, Scalar::one(), -2));
    // residual over all relations: C1 (ŵ^2 T' + T G) + M T = 0
    let c1l = c1.map(lift);
    let resid = c1l.mul(&t_prime.scale(&w2).add(&t_mat.mul(&g_mat))).add(&m_mat.mul(&t_mat));
    for (i, j, e) in resid.entries() {
        if e.terms().next().is_some() {
            return Err(LocalError::InconsistentRelations(format!("residual entry ({i},{j}) is {e}")));
        }
    }
    Ok(SolverOutput { matrix: b, generators: survivors, rules, notes })
}

/// The origin chart: `d/dw q = (C0 w^{-2} + C_{-1} w^{-1}) q` becomes
/// `(ẑ + C0) ∂_ẑ q = (C_{-1} - 1) q`. Residues are dropped, as in the
/// irregular solver, and only generators with a polar part are kept.
pub fn origin_chart_solver(g: &ConnectionGerm, terms: usize) -> Result<SolverOutput, LocalError> {
    if g.pole_order() != 2 {
        return Err(LocalError::InconsistentRelations("the origin chart handles pole order 2 only".into()));
    }
    let n = g.rank();
    let var = "ẑ";
    let c0 = g.coeff(-2);
    let lift = |x: &Scalar| LaurentSeries::constant(var, x.clone());
    let a: Mat<LaurentSeries> = c0.map(lift).add(&Mat::identity(n, &lp_zero(var)).scale(&LaurentSeries::monomial(var, Scalar::one(), 1)));
    let det = a.det();
    let det_inv = det.invert(terms)?;
    let inv = a.adjugate().scale(&det_inv);
    let b = inv.neg().map(|e| e.truncate(0));
    let keep: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| b.get(i, j).terms().next().is_some() || b.get(j, i).terms().next().is_some()))
        .collect();
    let b = b.select(&keep, &keep);
    Ok(SolverOutput {
        matrix: b,
        generators: keep,
        rules: vec![RULE_D_W, RULE_FOURIER_Z, RULE_FOURIER_D_Z],
        notes: vec!["residue term dropped".into()],
    })
}

/// Compare the solver's exponents with the Legendre transforms of the
/// residue-free exponents at infinity.
pub fn seed_check(
    out: &SolverOutput,
    g: &ConnectionGerm,
    roots: &mut RootTable,
    opts: DecomposeOptions,
) -> Result<Vec<String>, LocalError> {
    if out.dim() == 0 {
        return Ok(vec![]);
    }
    let germ = out.as_germ(Point::Infinity)?.irregular_part();
    let solved = formal_decompose(&germ, roots, opts)?;
    let free = formal_decompose(&g.irregular_part(), roots, opts)?;
    let mut seeds = Vec::new();
    for s in free.summands.iter().filter(|s| s.slope() > BigRational::one()) {
        let (_, qh) = legendre_exponent(&s.exponent, Source::Infinity, roots, opts.terms)?;
        seeds.push(qh);
    }
    let mut pending: Vec<&FormalSummand> = solved.summands.iter().collect();
    let mut lines = Vec::new();
    for seed in &seeds {
        let seed_w = PuiseuxSeries::new(seed.ram(), seed.body().with_var("w"));
        let pos = pending.iter().position(|s| same_orbit(&s.exponent, &seed_w, 1, roots)).ok_or_else(|| {
            LocalError::SeedMismatch(format!(
                "Legendre exponent {seed} not found among solver exponents [{}]",
                solved.summands.iter().map(|s| s.exponent.to_string()).collect::<Vec<_>>().join(", ")
            ))
        })?;
        lines.push(format!("Legendre exponent {seed} matches the solver output"));
        pending.remove(pos);
    }
    if let Some(extra) = pending.iter().find(|s| !s.is_regular()) {
        return Err(LocalError::SeedMismatch(format!("solver exponent {} has no Legendre seed", extra.exponent)));
    }
    Ok(lines)
}

/// Sign of a rational, as an integer, for display helpers.
pub fn rational_sign(x: &BigRational) -> i64 {
    if x.is_negative() {
        -1
    } else if x.is_zero() {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::q;

    fn s(x: &str) -> Scalar {
        x.parse().unwrap()
    }
    fn l(x: &str) -> LaurentSeries {
        LaurentSeries::parse(x).unwrap()
    }

    #[test]
    fn numerics() {
        let n = LocalNumerics::from_slopes(vec![(q(5, 3), 3)]).unwrap();
        let o = numeric_local_fl(Direction::InfToInfHat, &n).unwrap();
        assert_eq!((o.rank, o.swan, o.slopes.clone()), (2, 5, vec![(q(5, 2), 2)]));
        let n = LocalNumerics::from_slopes(vec![(q(2, 3), 3)]).unwrap();
        let o = numeric_local_fl(Direction::InfToZeroHat, &n).unwrap();
        assert_eq!((o.rank, o.swan, o.slopes.clone()), (1, 2, vec![(q(2, 1), 1)]));
        let n = LocalNumerics::from_slopes(vec![(q(1, 1), 3)]).unwrap();
        assert!(numeric_local_fl(Direction::InfToInfHat, &n).unwrap().is_zero());
        let mixed = LocalNumerics::from_slopes(vec![(q(1, 2), 2), (q(2, 1), 1)]).unwrap();
        assert!(matches!(numeric_local_fl(Direction::InfToInfHat, &mixed), Err(LocalError::SlopeOutOfDomain(_))));
    }

    #[test]
    fn legendre_of_quadratic_exponent() {
        let q0 = PuiseuxSeries::from_laurent(l("-t/2*w^-2 - b*w^-1"));
        let (loc, qh) = legendre_exponent(&q0, Source::Infinity, &mut RootTable::new(), 8).unwrap();
        assert_eq!(loc, Location::InfHat);
        let d = qh.derive();
        assert_eq!(d.body().with_var("w"), l("-1/t*w^-3 - b/t*w^-2"));
    }

    #[test]
    fn legendre_slope_one_gives_location() {
        let q0 = PuiseuxSeries::from_laurent(l("-t*w^-1"));
        let (loc, _) = legendre_exponent(&q0, Source::Infinity, &mut RootTable::new(), 8).unwrap();
        assert_eq!(loc, Location::Finite(s("-t")));
    }

    #[test]
    fn legendre_twice_flips_sign() {
        let mut roots = RootTable::new();
        let q0 = PuiseuxSeries::from_laurent(l("a*w^-2 + c*w^-1"));
        let (_, q1) = legendre_exponent(&q0, Source::Infinity, &mut roots, 8).unwrap();
        let q1 = PuiseuxSeries::new(q1.ram(), q1.body().with_var("w"));
        let (_, q2) = legendre_exponent(&q1, Source::Infinity, &mut roots, 8).unwrap();
        let q2 = PuiseuxSeries::new(q2.ram(), q2.body().with_var("w"));
        assert!(same_orbit(&q2, &q0, -1, &roots), "{q2} vs {q0}");
    }

    #[test]
    fn closed_form_rules() {
        let t = slope_one_rule(&s("t"), &s("0")).unwrap();
        assert_eq!(t.location, Location::Finite(s("-t")));
        assert_eq!(t.summand.residues, vec![Some(s("-1"))]);
        let r = reg_sing_rule(&[s("0"), s("λ2"), s("λ3")]);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].summand.residues, vec![Some(s("λ2+1"))]);
        assert!(matches!(slope_one_rule(&s("0"), &s("c")), Err(LocalError::ZeroLeadingCoefficient)));
    }
}
