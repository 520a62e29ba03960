//! Connection germs, Newton polygons and formal decompositions.
//!
//! A germ stores the relation matrix `A(τ)` of `d/dτ q = A(τ) q` in the local
//! coordinate `τ` (`z - c` at a finite point, `w = 1/z` at infinity) as a
//! finite map from exponents to constant matrices.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Mat;
use crate::scalar::{Scalar, ScalarError};
use crate::series::{puiseux_root, LaurentSeries, PuiseuxSeries, RootTable, SeriesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GermError {
    #[error("degenerate Newton polygon: {0}")]
    DegeneratePolygon(String),
    #[error("unsupported germ shape: {reason}{}", polygon.as_ref().map(|p| format!(" (polygon {p})")).unwrap_or_default())]
    UnsupportedGermShape { reason: String, polygon: Option<String> },
    #[error("Swan conductor {0} is not an integer")]
    NonIntegralSwan(String),
    #[error("malformed germ: {0}")]
    Shape(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

fn unsupported(reason: impl Into<String>, polygon: Option<&NewtonPolygon>) -> GermError {
    GermError::UnsupportedGermShape { reason: reason.into(), polygon: polygon.map(|p| p.to_string()) }
}

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

// ---------------------------------------------------------------------------
// points and germs

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Finite(Scalar),
    Infinity,
}

impl Point {
    pub fn zero() -> Self {
        Point::Finite(Scalar::zero())
    }
    pub fn coordinate(&self) -> &'static str {
        match self {
            Point::Finite(_) => "z",
            Point::Infinity => "w",
        }
    }
    pub fn is_infinity(&self) -> bool {
        matches!(self, Point::Infinity)
    }
    pub fn is_origin(&self) -> bool {
        matches!(self, Point::Finite(c) if c.is_zero())
    }
    pub fn parse(s: &str) -> Result<Self, ScalarError> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "∞") {
            return Ok(Point::Infinity);
        }
        Ok(Point::Finite(t.parse()?))
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Finite(c) => write!(f, "{c}"),
            Point::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionGerm {
    point: Point,
    rank: usize,
    coeffs: BTreeMap<i64, Mat<Scalar>>,
}

impl ConnectionGerm {
    pub fn new(point: Point, rank: usize, coeffs: impl IntoIterator<Item = (i64, Mat<Scalar>)>) -> Result<Self, GermError> {
        if rank == 0 {
            return Err(GermError::Shape("rank must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for (k, m) in coeffs {
            if m.rows() != rank || m.cols() != rank {
                return Err(GermError::Shape(format!("coefficient at order {k} is {}x{}, expected {rank}x{rank}", m.rows(), m.cols())));
            }
            if m.is_zero() {
                continue;
            }
            let slot: &mut Mat<Scalar> = map.entry(k).or_insert_with(|| Mat::scalar_zeros(rank, rank));
            *slot = slot.add(&m);
            if slot.is_zero() {
                map.remove(&k);
            }
        }
        Ok(ConnectionGerm { point, rank, coeffs: map })
    }
    pub fn point(&self) -> &Point {
        &self.point
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn coordinate(&self) -> &'static str {
        self.point.coordinate()
    }
    pub fn coeffs(&self) -> &BTreeMap<i64, Mat<Scalar>> {
        &self.coeffs
    }
    pub fn coeff(&self, k: i64) -> Mat<Scalar> {
        self.coeffs.get(&k).cloned().unwrap_or_else(|| Mat::scalar_zeros(self.rank, self.rank))
    }
    pub fn residue(&self) -> Mat<Scalar> {
        self.coeff(-1)
    }
    pub fn pole_order(&self) -> u32 {
        self.coeffs.keys().next().map_or(0, |&k| if k < 0 { (-k) as u32 } else { 0 })
    }
    pub fn with_point(&self, point: Point) -> Self {
        ConnectionGerm { point, ..self.clone() }
    }
    /// The germ restricted to orders in `range`.
    pub fn filtered(&self, keep: impl Fn(i64) -> bool) -> Self {
        ConnectionGerm {
            point: self.point.clone(),
            rank: self.rank,
            coeffs: self.coeffs.iter().filter(|(k, _)| keep(**k)).map(|(k, m)| (*k, m.clone())).collect(),
        }
    }
    pub fn polar(&self) -> Self {
        self.filtered(|k| k < 0)
    }
    /// Orders `≤ -2` only.
    pub fn irregular_part(&self) -> Self {
        self.filtered(|k| k <= -2)
    }
    pub fn entry_series(&self, i: usize, j: usize) -> LaurentSeries {
        LaurentSeries::new(self.coordinate(), self.coeffs.iter().map(|(k, m)| (*k, m.get(i, j).clone())), None)
    }
    /// Polar part as a matrix of exact Laurent polynomials.
    pub fn polar_matrix(&self) -> Mat<LaurentSeries> {
        let p = self.polar();
        Mat::from_fn(self.rank, self.rank, |i, j| p.entry_series(i, j))
    }
    pub fn map_scalars(&self, mut f: impl FnMut(&Scalar) -> Result<Scalar, ScalarError>) -> Result<Self, GermError> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, m)| Ok((*k, m.try_map(&mut f)?)))
            .collect::<Result<Vec<_>, ScalarError>>()?;
        ConnectionGerm::new(self.point.clone(), self.rank, coeffs)
    }
    /// Principal sub-germ on the given generators.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        ConnectionGerm {
            point: self.point.clone(),
            rank: idx.len(),
            coeffs: self
                .coeffs
                .iter()
                .map(|(k, m)| (*k, m.select(idx, idx)))
                .filter(|(_, m)| !m.is_zero())
                .collect(),
        }
    }

    /// Generator groups that the polar part never couples.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.rank;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (k, m) in &self.coeffs {
            if *k >= 0 {
                continue;
            }
            for (i, j) in m.support() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

// ---------------------------------------------------------------------------
// Newton polygons

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: (usize, i64),
    pub end: (usize, i64),
    /// Eigenvalue growth: roots behave like `τ^(-growth)`.
    pub growth: BigRational,
    pub length: usize,
}

impl Segment {
    /// Slope of the corresponding summands: growth minus one, clipped at zero.
    pub fn system_slope(&self) -> BigRational {
        let s = &self.growth - BigRational::one();
        if s.is_negative() {
            BigRational::zero()
        } else {
            s
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonPolygon {
    /// `(power of the eigenvalue variable, valuation of its coefficient)`.
    pub points: Vec<(usize, i64)>,
    pub segments: Vec<Segment>,
    /// Number of identically zero eigenvalues.
    pub zero_roots: usize,
}

impl fmt::Display for NewtonPolygon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pts: Vec<String> = self.points.iter().map(|(j, v)| format!("({j},{v})")).collect();
        let segs: Vec<String> = self.segments.iter().map(|s| format!("{}x{}", s.growth, s.length)).collect();
        write!(f, "points {} segments [{}] zero roots {}", pts.join(" "), segs.join(", "), self.zero_roots)
    }
}

impl NewtonPolygon {
    /// Lower hull of `(j, val c_j)` for a monic polynomial given lowest degree first.
    pub fn of_coefficients(coeffs: &[LaurentSeries]) -> Self {
        let points: Vec<(usize, i64)> =
            coeffs.iter().enumerate().filter_map(|(j, c)| c.valuation().map(|v| (j, v))).collect();
        let zero_roots = points.first().map_or(0, |p| p.0);
        let mut hull: Vec<(usize, i64)> = Vec::new();
        for &p in &points {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // keep b only if it lies strictly below the chord from a to p
                let cross = (b.1 - a.1) as i128 * (p.0 - a.0) as i128 - (p.1 - a.1) as i128 * (b.0 - a.0) as i128;
                if cross >= 0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let segments = hull
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let len = b.0 - a.0;
                Segment { start: a, end: b, growth: q(b.1 - a.1, len as i64), length: len }
            })
            .collect();
        NewtonPolygon { points, segments, zero_roots }
    }

    /// `(slope, multiplicity)` pairs, zero roots counting as slope zero.
    pub fn slope_multiset(&self) -> Vec<(BigRational, usize)> {
        let mut out: Vec<(BigRational, usize)> = Vec::new();
        if self.zero_roots > 0 {
            out.push((BigRational::zero(), self.zero_roots));
        }
        for s in &self.segments {
            out.push((s.system_slope(), s.length));
        }
        merge_slopes(out)
    }
}

/// Merge equal slopes and sort ascending.
pub fn merge_slopes(items: Vec<(BigRational, usize)>) -> Vec<(BigRational, usize)> {
    let mut m: BTreeMap<BigRational, usize> = BTreeMap::new();
    for (s, r) in items {
        if r > 0 {
            *m.entry(s).or_default() += r;
        }
    }
    m.into_iter().collect()
}

pub fn char_newton_polygon(g: &ConnectionGerm) -> Result<NewtonPolygon, GermError> {
    if g.pole_order() == 0 {
        return Err(GermError::Shape("germ has no pole".into()));
    }
    let cp = g.polar_matrix().char_poly();
    let poly = NewtonPolygon::of_coefficients(&cp);
    if poly.zero_roots == g.rank() && g.pole_order() >= 2 {
        return Err(GermError::DegeneratePolygon(format!("characteristic polynomial is X^{} with a pole of order {}", g.rank(), g.pole_order())));
    }
    Ok(poly)
}

pub fn swan_of(slopes: &[(BigRational, usize)]) -> Result<u64, GermError> {
    let total: BigRational = slopes.iter().map(|(s, r)| s * BigRational::from_integer(BigInt::from(*r))).sum();
    if !total.is_integer() {
        return Err(GermError::NonIntegralSwan(total.to_string()));
    }
    Ok(total.to_integer().to_u64().expect("nonnegative Swan"))
}

pub fn slopes(g: &ConnectionGerm) -> Result<Vec<(BigRational, usize)>, GermError> {
    Ok(char_newton_polygon(g)?.slope_multiset())
}
pub fn swan(g: &ConnectionGerm) -> Result<u64, GermError> {
    swan_of(&slopes(g)?)
}
pub fn katz(g: &ConnectionGerm) -> Result<BigRational, GermError> {
    Ok(slopes(g)?.into_iter().map(|p| p.0).max().unwrap_or_else(BigRational::zero))
}

// ---------------------------------------------------------------------------
// formal types

#[derive(Clone, Debug, PartialEq)]
pub struct FormalSummand {
    /// Irregular exponent `q`, without constant or logarithmic term.
    pub exponent: PuiseuxSeries,
    pub ramification: u32,
    pub rank: usize,
    /// Residue exponents of the regular part; `None` where undetermined.
    pub residues: Vec<Option<Scalar>>,
}

impl FormalSummand {
    pub fn regular(var: &str, residues: Vec<Option<Scalar>>) -> Self {
        FormalSummand { exponent: PuiseuxSeries::zero(var), ramification: 1, rank: residues.len(), residues }
    }
    pub fn slope(&self) -> BigRational {
        self.exponent.slope()
    }
    pub fn swan(&self) -> BigRational {
        self.slope() * BigRational::from_integer(BigInt::from(self.rank))
    }
    pub fn is_regular(&self) -> bool {
        self.exponent.is_zero()
    }
    /// Regular with every residue known to vanish.
    pub fn is_trivial(&self) -> bool {
        self.is_regular() && self.residues.iter().all(|r| r.as_ref().is_some_and(|x| x.is_zero()))
    }
}

impl Serialize for FormalSummand {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FormalSummand", 5)?;
        st.serialize_field("exponent", &self.exponent.to_string())?;
        st.serialize_field("ramification", &self.ramification)?;
        st.serialize_field("rank", &self.rank)?;
        st.serialize_field("slope", &self.slope().to_string())?;
        let res: Vec<String> = self.residues.iter().map(|r| r.as_ref().map_or("unknown".into(), |x| x.to_string())).collect();
        st.serialize_field("residues", &res)?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Default)]
pub struct FormalType {
    pub summands: Vec<FormalSummand>,
}

impl FormalType {
    pub fn rank(&self) -> usize {
        self.summands.iter().map(|s| s.rank).sum()
    }
    pub fn slopes(&self) -> Vec<(BigRational, usize)> {
        merge_slopes(self.summands.iter().map(|s| (s.slope(), s.rank)).collect())
    }
    pub fn swan(&self) -> Result<u64, GermError> {
        swan_of(&self.slopes())
    }
    pub fn katz(&self) -> BigRational {
        self.summands.iter().map(|s| s.slope()).max().unwrap_or_else(BigRational::zero)
    }
    pub fn is_regular(&self) -> bool {
        self.summands.iter().all(|s| s.is_regular())
    }
}

/// Controls for the series work inside a decomposition.
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions {
    /// Relative precision budget for root extraction and inversion.
    pub terms: usize,
    /// Newton iterations allowed before giving up.
    pub max_iterations: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { terms: 12, max_iterations: 12 }
    }
}

/// Formal decomposition for the supported class: connected blocks of the
/// polar part that are either scalar, or have a leading matrix with a single
/// eigenvalue and a shifted characteristic polynomial whose polygon segments
/// above growth one are binomial and either simple or fully ramified.
pub fn formal_decompose(g: &ConnectionGerm, roots: &mut RootTable, opts: DecomposeOptions) -> Result<FormalType, GermError> {
    let polar = g.polar();
    let var = g.coordinate();
    let mut summands = Vec::new();
    for comp in polar.components() {
        let block = polar.restrict(&comp);
        if comp.len() == 1 {
            let e = block.entry_series(0, 0);
            let q = PuiseuxSeries::from_laurent(e.part_below(-1).integrate()?);
            summands.push(FormalSummand { exponent: q, ramification: 1, rank: 1, residues: vec![Some(e.coeff(-1))] });
            continue;
        }
        summands.extend(decompose_block(&block, var, roots, opts)?);
    }
    Ok(FormalType { summands })
}

fn regular_block(block: &ConnectionGerm, var: &str) -> Vec<FormalSummand> {
    let res = block.residue();
    let upper = res.entries().all(|(i, j, v)| i >= j || v.is_zero());
    let lower = res.entries().all(|(i, j, v)| i <= j || v.is_zero());
    (0..block.rank())
        .map(|i| FormalSummand::regular(var, vec![(upper || lower).then(|| res.get(i, i).clone())]))
        .collect()
}

fn decompose_block(
    block: &ConnectionGerm,
    var: &str,
    roots: &mut RootTable,
    opts: DecomposeOptions,
) -> Result<Vec<FormalSummand>, GermError> {
    let k = block.rank();
    let m = block.pole_order() as i64;
    if m <= 1 {
        return Ok(regular_block(block, var));
    }
    let lead = block.coeff(-m);
    let a0 = lead.trace().scale(&q(1, k as i64));
    let shifted_lead = lead.sub(&Mat::scalar_identity(k).scale(&a0));
    if shifted_lead.char_poly().iter().take(k).any(|c| !c.is_zero()) {
        return Err(unsupported("leading matrix of a coupled block has several eigenvalues", None));
    }
    let base = if m >= 2 {
        PuiseuxSeries::from_laurent(LaurentSeries::monomial(var, a0.clone(), -m).integrate()?)
    } else {
        PuiseuxSeries::zero(var)
    };
    let mat = block.polar_matrix();
    let shift = Mat::identity(k, &LaurentSeries::zero(var)).scale(&LaurentSeries::monomial(var, a0, -m));
    let cp = mat.sub(&shift).char_poly();
    let poly = NewtonPolygon::of_coefficients(&cp);
    if poly.zero_roots == k {
        return Err(GermError::DegeneratePolygon(format!("shifted block is nilpotent ({poly})")));
    }
    let mut out = Vec::new();
    if poly.zero_roots > 0 {
        out.push(FormalSummand {
            exponent: base.clone(),
            ramification: 1,
            rank: poly.zero_roots,
            residues: vec![None; poly.zero_roots],
        });
    }
    for seg in &poly.segments {
        let rho = &seg.growth;
        let ell = seg.length;
        let interior = cp
            .iter()
            .enumerate()
            .filter(|(j, c)| *j > seg.start.0 && *j < seg.end.0 && !c.is_exact_zero())
            .any(|(j, c)| {
                let v = c.valuation().expect("nonzero");
                // on the segment line iff v - v_start == growth * (j - start)
                BigRational::from_integer(BigInt::from(v - seg.start.1))
                    == rho * BigRational::from_integer(BigInt::from((j - seg.start.0) as i64))
            });
        if rho <= &BigRational::one() {
            let residues = if ell == 1 && rho.is_one() {
                let r = -(cp[seg.start.0].lead().expect("nonzero").1 / cp[seg.end.0].lead().expect("nonzero").1);
                vec![Some(r)]
            } else {
                vec![None; ell]
            };
            out.push(FormalSummand { exponent: base.clone(), ramification: 1, rank: ell, residues });
            continue;
        }
        let denom = rho.denom().to_usize().expect("small denominator");
        if interior || !(ell == 1 || ell == denom) {
            return Err(unsupported(
                format!("segment of growth {rho} and length {ell} is not binomial and fully ramified"),
                Some(&poly),
            ));
        }
        let root = newton_root(&cp, seg, var, roots, opts).map_err(|e| match e {
            GermError::Series(s) => unsupported(format!("root refinement failed: {s}"), Some(&poly)),
            other => other,
        })?;
        let below = root.part_below(&-BigRational::one());
        let exponent = base.try_add(&below.integrate()?)?;
        let exponent = exponent.map_coeffs(|c| Ok(roots.reduce(c)))?;
        let residues = if ell == 1 { vec![Some(root.coeff_at(&-BigRational::one()))] } else { vec![None; ell] };
        out.push(FormalSummand { exponent, ramification: ell as u32, rank: ell, residues });
    }
    Ok(out)
}

fn eval_poly(cp: &[PuiseuxSeries], x: &PuiseuxSeries) -> Result<PuiseuxSeries, SeriesError> {
    let mut acc = PuiseuxSeries::zero(x.var());
    for c in cp.iter().rev() {
        acc = acc.try_mul(x)?.try_add(c)?;
    }
    Ok(acc)
}

/// One root of the segment's branch, refined by Newton iteration until its
/// coefficients are known up to (and including) exponent `-1`.
///
/// Every root of the characteristic polynomial differs from this one already
/// in its leading term, so each step doubles the number of correct terms.
/// The iterate is kept exact and truncated to the proven precision.
fn newton_root(
    cp: &[LaurentSeries],
    seg: &Segment,
    var: &str,
    roots: &mut RootTable,
    opts: DecomposeOptions,
) -> Result<PuiseuxSeries, GermError> {
    let (i, j) = (seg.start.0, seg.end.0);
    let ci = cp[i].lead().expect("hull point").1.clone();
    let cj = cp[j].lead().expect("hull point").1.clone();
    let radicand = LaurentSeries::monomial(var, -(&ci / &cj), seg.start.1 - seg.end.1);
    let lead = puiseux_root(&PuiseuxSeries::from_laurent(radicand), seg.length as u32, roots, 1)?;
    let d = lead.ram();
    let v = lead.body().valuation().expect("nonzero root");
    let poly: Vec<PuiseuxSeries> = cp.iter().map(|c| PuiseuxSeries::from_laurent(c.clone())).collect();
    let dpoly: Vec<PuiseuxSeries> = cp
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| PuiseuxSeries::from_laurent(c.scale(&Scalar::from_int(k as i64))))
        .collect();
    let reduce = |s: &PuiseuxSeries, roots: &RootTable| s.map_coeffs(|c| Ok(roots.reduce(c)));
    // body of the iterate in u (u^d = var), exact below `v + known`
    let mut body = lead.body().part_below(v + 1);
    let mut known: i64 = 1;
    let target = 1i64; // need exponents below 1 in u, i.e. through u^0
    for _ in 0..opts.max_iterations {
        if v + known >= target {
            let x = PuiseuxSeries::new(d, body.truncate(v + known));
            return Ok(x);
        }
        let next_known = 2 * known;
        let x = PuiseuxSeries::new(d, body.clone());
        let p = reduce(&eval_poly(&poly, &x)?, roots)?;
        let dp = reduce(&eval_poly(&dpoly, &x)?, roots)?;
        let terms = (next_known as usize).max(opts.terms);
        let step = reduce(&p.try_mul(&dp.invert(terms)?)?, roots)?;
        let new = x.try_sub(&step)?;
        let refined = new.refine(d / new.ram());
        body = refined.body().part_below(v + next_known);
        known = next_known;
    }
    Err(unsupported("Newton iteration did not reach the residue order", None))
}

// ---------------------------------------------------------------------------
// global connections

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalConnection {
    rank: usize,
    germs: Vec<ConnectionGerm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceViolation {
    pub identity: Scalar,
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sum of residue traces is {} instead of 0", self.identity)
    }
}

impl GlobalConnection {
    pub fn new(germs: Vec<ConnectionGerm>) -> Result<Self, GermError> {
        let rank = germs.first().map(|g| g.rank()).ok_or_else(|| GermError::Shape("no germs".into()))?;
        if germs.iter().any(|g| g.rank() != rank) {
            return Err(GermError::Shape("germs have different ranks".into()));
        }
        for (a, g) in germs.iter().enumerate() {
            if germs[..a].iter().any(|h| h.point() == g.point()) {
                return Err(GermError::Shape(format!("point {} listed twice", g.point())));
            }
        }
        Ok(GlobalConnection { rank, germs })
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn germs(&self) -> &[ConnectionGerm] {
        &self.germs
    }
    pub fn germ_at(&self, p: &Point) -> Option<&ConnectionGerm> {
        self.germs.iter().find(|g| g.point() == p)
    }
    pub fn map_germs(&self, f: impl FnMut(&ConnectionGerm) -> Result<ConnectionGerm, GermError>) -> Result<Self, GermError> {
        GlobalConnection::new(self.germs.iter().map(f).collect::<Result<_, _>>()?)
    }
}

/// Residue theorem on the stored relation matrices: the residue traces over
/// all listed points sum to zero.
pub fn validate_residue_trace(g: &GlobalConnection, seed: u64) -> Result<(), TraceViolation> {
    let mut total = Scalar::zero();
    for germ in g.germs() {
        total = &total + &germ.residue().trace();
    }
    match total.is_zero_checked(seed) {
        Ok(true) => Ok(()),
        _ => Err(TraceViolation { identity: total }),
    }
}

// ---------------------------------------------------------------------------
// twists

#[derive(Clone, Debug, PartialEq)]
pub enum Twist {
    /// Tensor with `d/dτ - λ/τ`: every residue exponent moves by `λ`.
    LogResidue(Scalar),
    /// Tensor with the rank-one exponent `q0` (a polar Laurent polynomial).
    Exponent(LaurentSeries),
    /// Integer bundle shift: residue exponents move by `k`.
    Integer(i64),
}

pub fn twist(g: &ConnectionGerm, by: &Twist) -> Result<ConnectionGerm, GermError> {
    let n = g.rank();
    let id = Mat::scalar_identity(n);
    let mut extra: Vec<(i64, Mat<Scalar>)> = Vec::new();
    match by {
        Twist::LogResidue(l) => extra.push((-1, id.scale(l))),
        Twist::Integer(k) => extra.push((-1, id.scale(&Scalar::from_int(*k)))),
        Twist::Exponent(q0) => {
            for (k, c) in q0.derive().terms() {
                extra.push((k, id.scale(c)));
            }
        }
    }
    ConnectionGerm::new(g.point().clone(), n, g.coeffs().iter().map(|(k, m)| (*k, m.clone())).chain(extra))
}

/// The same twist applied to formal data.
pub fn twist_formal(t: &FormalType, by: &Twist) -> Result<FormalType, GermError> {
    let mut out = t.clone();
    for s in &mut out.summands {
        match by {
            Twist::LogResidue(l) => s.residues.iter_mut().for_each(|r| *r = r.as_ref().map(|x| x + l)),
            Twist::Integer(k) => {
                let k = Scalar::from_int(*k);
                s.residues.iter_mut().for_each(|r| *r = r.as_ref().map(|x| x + &k));
            }
            Twist::Exponent(q0) => {
                let q0p = PuiseuxSeries::from_laurent(q0.part_below(0));
                s.exponent = s.exponent.try_add(&q0p)?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// documents

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientDoc {
    pub order: i64,
    pub matrix: Vec<Vec<Scalar>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GermDoc {
    pub point: String,
    pub rank: usize,
    #[serde(default)]
    pub coordinate: Option<String>,
    #[serde(default)]
    pub coefficients: Vec<CoefficientDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectionDoc {
    pub germ: Vec<GermDoc>,
}

impl GermDoc {
    pub fn from_germ(g: &ConnectionGerm) -> Self {
        GermDoc {
            point: g.point().to_string(),
            rank: g.rank(),
            coordinate: Some(g.coordinate().to_string()),
            coefficients: g
                .coeffs()
                .iter()
                .map(|(k, m)| CoefficientDoc { order: *k, matrix: (0..m.rows()).map(|i| m.row(i).to_vec()).collect() })
                .collect(),
        }
    }
    pub fn to_germ(&self) -> Result<ConnectionGerm, GermError> {
        let point = Point::parse(&self.point)?;
        if let Some(c) = &self.coordinate {
            if c != point.coordinate() {
                return Err(GermError::Shape(format!("coordinate `{c}` does not match point {point}")));
            }
        }
        let mut coeffs = Vec::new();
        for c in &self.coefficients {
            if c.matrix.len() != self.rank || c.matrix.iter().any(|r| r.len() != self.rank) {
                return Err(GermError::Shape(format!("matrix at order {} is not {}x{}", c.order, self.rank, self.rank)));
            }
            coeffs.push((c.order, Mat::from_rows(c.matrix.clone())));
        }
        ConnectionGerm::new(point, self.rank, coeffs)
    }
}

impl ConnectionDoc {
    pub fn from_connection(g: &GlobalConnection) -> Self {
        ConnectionDoc { germ: g.germs().iter().map(GermDoc::from_germ).collect() }
    }
    pub fn to_connection(&self) -> Result<GlobalConnection, GermError> {
        GlobalConnection::new(self.germ.iter().map(|g| g.to_germ()).collect::<Result<_, _>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Scalar {
        x.parse().unwrap()
    }
    fn m(rows: &[&[&str]]) -> Mat<Scalar> {
        Mat::from_rows(rows.iter().map(|r| r.iter().map(|x| s(x)).collect()).collect())
    }

    #[test]
    fn polygon_of_ramified_block() {
        let g = ConnectionGerm::new(
            Point::Infinity,
            3,
            [
                (-3, m(&[&["0", "1", "0"], &["0", "0", "0"], &["0", "0", "t"]])),
                (-2, m(&[&["0", "0", "0"], &["b", "0", "0"], &["0", "0", "0"]])),
            ],
        )
        .unwrap();
        let sl = slopes(&g).unwrap();
        assert_eq!(sl, vec![(q(3, 2), 2), (q(2, 1), 1)]);
        assert_eq!(swan(&g).unwrap(), 5);
        let mut roots = RootTable::new();
        let ft = formal_decompose(&g, &mut roots, DecomposeOptions::default()).unwrap();
        assert_eq!(ft.slopes(), sl);
        assert_eq!(ft.rank(), 3);
    }

    #[test]
    fn regular_germ_has_slope_zero() {
        let g = ConnectionGerm::new(Point::zero(), 2, [(-1, m(&[&["a", "0"], &["0", "c"]]))]).unwrap();
        assert_eq!(slopes(&g).unwrap(), vec![(BigRational::zero(), 2)]);
    }

    #[test]
    fn nilpotent_without_corner_is_degenerate() {
        let g = ConnectionGerm::new(Point::Infinity, 2, [(-2, m(&[&["0", "1"], &["0", "0"]]))]).unwrap();
        assert!(matches!(char_newton_polygon(&g), Err(GermError::DegeneratePolygon(_))));
    }

    #[test]
    fn diagonal_exponents_integrate_entries() {
        let g = ConnectionGerm::new(
            Point::Infinity,
            2,
            [(-3, m(&[&["t1", "0"], &["0", "0"]])), (-2, m(&[&["b1", "0"], &["0", "0"]])), (-1, m(&[&["c1", "0"], &["0", "c0"]]))],
        )
        .unwrap();
        let ft = formal_decompose(&g, &mut RootTable::new(), DecomposeOptions::default()).unwrap();
        let e = &ft.summands[0];
        assert_eq!(e.exponent.body(), &LaurentSeries::parse("-t1/2*w^-2 - b1*w^-1").unwrap());
        assert_eq!(e.residues, vec![Some(s("c1"))]);
        assert!(ft.summands[1].is_regular());
    }

    #[test]
    fn twists() {
        let g = ConnectionGerm::new(Point::zero(), 3, [(-1, m(&[&["l1", "0", "0"], &["0", "l2", "0"], &["0", "0", "l3"]]))]).unwrap();
        let t = twist(&g, &Twist::LogResidue(s("-l1"))).unwrap();
        assert_eq!(t.residue(), m(&[&["0", "0", "0"], &["0", "l2-l1", "0"], &["0", "0", "l3-l1"]]));
        let same = twist(&g, &Twist::Exponent(LaurentSeries::zero("z"))).unwrap();
        assert_eq!(same, g);
    }

    #[test]
    fn toml_round_trip() {
        let g = ConnectionGerm::new(Point::Infinity, 2, [(-2, m(&[&["0", "1"], &["0", "t"]]))]).unwrap();
        let doc = ConnectionDoc { germ: vec![GermDoc::from_germ(&g)] };
        let text = toml::to_string(&doc).unwrap();
        let back: ConnectionDoc = toml::from_str(&text).unwrap();
        assert_eq!(back.to_connection().unwrap().germs()[0], g);
    }
}
