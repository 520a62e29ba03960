//! Global assembly of the formal transform of a connection with singular
//! points at `0` and `∞`, together with the consistency, involutivity and
//! independence checks.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::germ::{
    formal_decompose, ConnectionGerm, DecomposeOptions, FormalSummand, FormalType, GermError, GlobalConnection, Point,
};
use crate::local_fl::{
    finite_regular_rule, legendre_exponent, microlocal_rank, normal_form_solver, numeric_local_fl, origin_chart_solver,
    reg_sing_rule, regular_infinity_rule, same_orbit, seed_check, slope_one_rule, Direction, LocalError, LocalNumerics,
    Location, SolverOutput, Source, TransformedSummand,
};
use crate::matrix::Mat;
use crate::micro::{Chart, Window};
use crate::scalar::Scalar;
use crate::series::{PuiseuxSeries, RootTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("input has no singular point")]
    EmptySingularity,
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("consistency failure: {0}")]
    ConsistencyFailure(String),
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error(transparent)]
    Germ(#[from] GermError),
}

impl DriverError {
    /// Whether the failure is a disagreement between independent computations
    /// rather than an input outside the supported class.
    pub fn is_consistency(&self) -> bool {
        matches!(
            self,
            DriverError::ConsistencyFailure(_)
                | DriverError::Local(LocalError::OracleDisagreement(_))
                | DriverError::Local(LocalError::SeedMismatch(_))
        )
    }
}

#[derive(Clone, Copy, Debug)]
#[derive(Default)]
pub struct DriverOptions {
    pub decompose: DecomposeOptions,
    pub window: Window,
    pub seed: u64,
}


impl DriverOptions {
    pub fn with_truncation(hat: u32, space: u32, seed: u64) -> Self {
        DriverOptions {
            decompose: DecomposeOptions { terms: hat as usize, ..DecomposeOptions::default() },
            window: Window { hat: hat as i64, space: space as i64 },
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// report types

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixCoeff {
    pub order: i64,
    pub matrix: Mat<Scalar>,
}

/// Polar coefficients of a transformed connection matrix. Coefficients of
/// orders `>= known_below` are not determined by the computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolarMatrix {
    pub coordinate: String,
    pub generators: Vec<usize>,
    pub coeffs: Vec<MatrixCoeff>,
    pub known_below: i64,
}

impl PolarMatrix {
    fn from_solver(out: &SolverOutput, coordinate: &str, known_below: i64) -> Self {
        let kb = out.known_below().min(known_below);
        let mut orders: Vec<i64> = out
            .matrix
            .entries()
            .flat_map(|(_, _, e)| e.terms().map(|t| t.0).collect::<Vec<_>>())
            .filter(|k| *k < kb)
            .collect();
        orders.sort_unstable();
        orders.dedup();
        PolarMatrix {
            coordinate: coordinate.into(),
            generators: out.generators.iter().map(|g| g + 1).collect(),
            coeffs: orders.into_iter().map(|k| MatrixCoeff { order: k, matrix: out.coeff(k) }).collect(),
            known_below: kb,
        }
    }
    pub fn coeff(&self, order: i64) -> Option<&Mat<Scalar>> {
        self.coeffs.iter().find(|c| c.order == order).map(|c| &c.matrix)
    }
    pub fn leading(&self, count: usize) -> Vec<&MatrixCoeff> {
        self.coeffs.iter().take(count).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointReport {
    pub location: Location,
    pub summands: Vec<TransformedSummand>,
    pub numerics: LocalNumerics,
    pub regular: bool,
    pub pole_order: u32,
    /// Rank carried by summands produced by a local rule (complements excluded).
    pub summand_rank: usize,
    pub matrix: Option<PolarMatrix>,
}

impl PointReport {
    pub fn formal_type(&self, with_complement: bool) -> FormalType {
        FormalType {
            summands: self.summands.iter().filter(|s| with_complement || !s.complement).map(|s| s.summand.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourcePoint {
    pub point: Point,
    pub pole_order: u32,
    pub numerics: LocalNumerics,
    pub formal: FormalType,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub details: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankSources {
    pub numerics: usize,
    pub microlocal: usize,
    pub solver: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformReport {
    pub rank: usize,
    pub source: Vec<SourcePoint>,
    pub rank_hat: usize,
    pub rank_sources: RankSources,
    pub points: Vec<PointReport>,
    pub checks: Vec<Check>,
}

impl TransformReport {
    pub fn point(&self, key: &str) -> Option<&PointReport> {
        self.points.iter().find(|p| p.location.key() == key)
    }
    pub fn location_keys(&self) -> Vec<String> {
        self.points.iter().map(|p| p.location.key()).collect()
    }
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for TransformReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "source rank {}", self.rank)?;
        for s in &self.source {
            writeln!(f, "  at {}: pole order {}, {}", s.point, s.pole_order, s.numerics)?;
        }
        writeln!(
            f,
            "transformed rank {} (numerics {}, microlocal {}, solver {})",
            self.rank_hat,
            self.rank_sources.numerics,
            self.rank_sources.microlocal,
            self.rank_sources.solver.map_or("n/a".into(), |s| s.to_string())
        )?;
        for p in &self.points {
            writeln!(
                f,
                "point {}: {}, pole order {}, summand rank {}, {}",
                p.location,
                if p.regular { "regular" } else { "irregular" },
                p.pole_order,
                p.summand_rank,
                p.numerics
            )?;
            for s in &p.summands {
                let res: Vec<String> =
                    s.summand.residues.iter().map(|r| r.as_ref().map_or("?".into(), |x| x.to_string())).collect();
                writeln!(
                    f,
                    "    rank {} exponent {} residues [{}]  <- {}",
                    s.summand.rank,
                    s.summand.exponent,
                    res.join(", "),
                    s.provenance
                )?;
            }
            if let Some(m) = &p.matrix {
                let mut line = String::new();
                for c in &m.coeffs {
                    let _ = write!(line, " {}^{}: {};", m.coordinate, c.order, c.matrix);
                }
                writeln!(f, "    matrix on generators {:?}:{} known below order {}", m.generators, line, m.known_below)?;
            }
        }
        for c in &self.checks {
            writeln!(f, "check {} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.details)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// formal-level rules

fn rank_of(r: &BigRational) -> usize {
    r.to_integer().to_usize().expect("nonnegative rank")
}

/// Local transforms of the formal data at one source point.
pub fn transform_point(
    point: &Point,
    ft: &FormalType,
    roots: &mut RootTable,
    opts: DecomposeOptions,
) -> Result<Vec<TransformedSummand>, DriverError> {
    let one = BigRational::one();
    let mut out = Vec::new();
    for s in &ft.summands {
        let slope = s.slope();
        let r = BigRational::from_integer(s.rank.into());
        match point {
            Point::Infinity if s.is_regular() => {
                out.extend(s.residues.iter().map(|c| regular_infinity_rule(c.as_ref())));
            }
            Point::Infinity if slope == one => {
                let (loc, _) = legendre_exponent(&s.exponent, Source::Infinity, roots, opts.terms)?;
                let Location::Finite(c) = &loc else { unreachable!("slope one lands at a finite point") };
                for res in &s.residues {
                    let mut t = slope_one_rule(&-c, res.as_ref().unwrap_or(&Scalar::zero()))?;
                    if res.is_none() {
                        t.summand.residues = vec![None];
                    }
                    out.push(t);
                }
            }
            Point::Infinity => {
                let (loc, qh) = legendre_exponent(&s.exponent, Source::Infinity, roots, opts.terms)?;
                let (rank, dir) = if slope > one {
                    (rank_of(&(&r * (&slope - &one))), "∞→∞̂")
                } else {
                    (rank_of(&(&r * (&one - &slope))), "∞→0̂")
                };
                out.push(TransformedSummand {
                    location: loc,
                    summand: FormalSummand { ramification: qh.ram(), exponent: qh, rank, residues: vec![None; rank] },
                    provenance: format!("legendre_exponent({dir})"),
                    complement: false,
                });
            }
            Point::Finite(c) if c.is_zero() => {
                if s.is_regular() {
                    for res in &s.residues {
                        match res {
                            Some(l) => out.extend(reg_sing_rule(std::slice::from_ref(l))),
                            None => out.push(TransformedSummand {
                                location: Location::InfHat,
                                summand: FormalSummand::regular("ŵ", vec![None]),
                                provenance: "reg_sing_rule".into(),
                                complement: false,
                            }),
                        }
                    }
                } else {
                    let (loc, qh) = legendre_exponent(&s.exponent, Source::Zero, roots, opts.terms)?;
                    let rank = rank_of(&(&r * (&one + &slope)));
                    out.push(TransformedSummand {
                        location: loc,
                        summand: FormalSummand { ramification: qh.ram(), exponent: qh, rank, residues: vec![None; rank] },
                        provenance: "legendre_exponent(0→∞̂)".into(),
                        complement: false,
                    });
                }
            }
            Point::Finite(c) => {
                if !s.is_regular() {
                    return Err(DriverError::Unsupported(format!("irregular summand at the finite point {c}")));
                }
                if s.is_trivial() {
                    continue;
                }
                out.extend(s.residues.iter().map(|rho| finite_regular_rule(c, rho.as_ref())));
            }
        }
    }
    Ok(out)
}

fn location_order(l: &Location) -> (u8, String) {
    match l {
        Location::ZeroHat => (0, String::new()),
        Location::Finite(c) => (1, c.to_string()),
        Location::InfHat => (2, String::new()),
    }
}

/// Group transformed summands by location, in a fixed order.
pub fn group_by_location(items: Vec<TransformedSummand>) -> Vec<(Location, Vec<TransformedSummand>)> {
    let mut map: BTreeMap<(u8, String), (Location, Vec<TransformedSummand>)> = BTreeMap::new();
    for t in items {
        map.entry(location_order(&t.location)).or_insert_with(|| (t.location.clone(), Vec::new())).1.push(t);
    }
    map.into_values().collect()
}

fn pole_order_of(ft: &FormalType) -> u32 {
    if ft.is_regular() {
        1
    } else {
        let k = ft.katz() + BigRational::one();
        k.ceil().to_integer().to_u32().expect("small pole order")
    }
}

fn check(name: &str, pass: bool, details: impl Into<String>) -> Check {
    Check { name: name.into(), pass, details: details.into() }
}

fn nontrivial(ft: &FormalType) -> FormalType {
    FormalType { summands: ft.summands.iter().filter(|s| !s.is_trivial()).cloned().collect() }
}

fn split_slopes(ft: &FormalType, keep: impl Fn(&BigRational) -> bool) -> FormalType {
    FormalType { summands: ft.summands.iter().filter(|s| keep(&s.slope())).cloned().collect() }
}

// ---------------------------------------------------------------------------
// the transform

/// Formal transform of a connection whose singular points lie in `{0, ∞}`.
pub fn fourier_transform(g: &GlobalConnection, opts: DriverOptions) -> Result<TransformReport, DriverError> {
    for germ in g.germs() {
        if !germ.point().is_infinity() && !germ.point().is_origin() {
            return Err(DriverError::Unsupported(format!("singular point {} outside {{0, ∞}}", germ.point())));
        }
    }
    if g.germs().iter().all(|germ| germ.pole_order() == 0) {
        return Err(DriverError::EmptySingularity);
    }
    let mut roots = RootTable::new();
    let dopts = opts.decompose;
    let germ0 = g.germ_at(&Point::zero()).filter(|x| x.pole_order() > 0);
    let germ_inf = g.germ_at(&Point::Infinity).filter(|x| x.pole_order() > 0);
    if let Some(g0) = germ0 {
        if g0.pole_order() == 1 && !g0.residue().is_diagonal() {
            return Err(LocalError::NonSemisimpleResidue.into());
        }
    }
    let ft0 = germ0.map(|x| formal_decompose(x, &mut roots, dopts)).transpose()?.unwrap_or_default();
    let ft_inf = germ_inf.map(|x| formal_decompose(x, &mut roots, dopts)).transpose()?.unwrap_or_default();
    let mut source = Vec::new();
    for (germ, ft) in [(germ0, &ft0), (germ_inf, &ft_inf)] {
        if let Some(germ) = germ {
            source.push(SourcePoint {
                point: germ.point().clone(),
                pole_order: germ.pole_order(),
                numerics: LocalNumerics::of_formal(ft)?,
                formal: ft.clone(),
            });
        }
    }
    let mut checks = Vec::new();
    let one = BigRational::one();

    // rank of the transform, three ways
    let n0 = LocalNumerics::of_formal(&nontrivial(&ft0))?;
    let inf_high = split_slopes(&ft_inf, |s| s > &one);
    let inf_low = split_slopes(&ft_inf, |s| s < &one);
    let inf_high_n = LocalNumerics::of_formal(&inf_high)?;
    let num_hat_from0 = numeric_local_fl(Direction::ZeroToInfHat, &n0)?;
    let num_hat_frominf = numeric_local_fl(Direction::InfToInfHat, &inf_high_n)?;
    let num_zero_hat = numeric_local_fl(Direction::InfToZeroHat, &LocalNumerics::of_formal(&inf_low)?)?;
    let rank_numerics = num_hat_from0.rank + num_hat_frominf.rank;

    let mut microlocal = 0;
    let mut micro_notes = Vec::new();
    if let Some(g0) = germ0 {
        let m = microlocal_rank(g0, Chart::E0, &mut roots, dopts, opts.window)?;
        microlocal += m.rank;
        micro_notes.extend(m.diagnostics.into_iter().map(|d| format!("at 0: {d}")));
    }
    if let Some(gi) = germ_inf {
        let m = microlocal_rank(gi, Chart::EInf, &mut roots, dopts, opts.window)?;
        microlocal += m.rank;
        micro_notes.extend(m.diagnostics.into_iter().map(|d| format!("at ∞: {d}")));
    }
    checks.push(check("microlocal ring membership", true, micro_notes.join("; ")));

    let solver = match germ_inf {
        Some(gi) if gi.pole_order() <= 3 => Some(normal_form_solver(&gi.polar(), dopts.terms)?),
        _ => None,
    };
    let rank_solver = solver.as_ref().map(|s| s.dim() + num_hat_from0.rank);
    if rank_numerics != microlocal || rank_solver.is_some_and(|r| r != rank_numerics) {
        return Err(DriverError::ConsistencyFailure(format!(
            "transformed rank: numerics {rank_numerics}, microlocal {microlocal}, solver {rank_solver:?}"
        )));
    }
    let rank_hat = rank_numerics;
    checks.push(check(
        "transformed rank agreement",
        true,
        format!("numerics {rank_numerics}, microlocal {microlocal}, solver {}", rank_solver.map_or("n/a".into(), |r| r.to_string())),
    ));
    if rank_hat == 0 {
        return Err(DriverError::Unsupported("the transform has rank zero".into()));
    }

    // local rules
    let mut items = transform_point(&Point::zero(), &ft0, &mut roots, dopts)?;
    items.extend(transform_point(&Point::Infinity, &ft_inf, &mut roots, dopts)?);
    let groups = group_by_location(items);

    let mut points = Vec::new();
    for (loc, mut summands) in groups {
        let real: usize = summands.iter().map(|s| s.summand.rank).sum();
        if real > rank_hat {
            return Err(DriverError::ConsistencyFailure(format!("rank {real} at {loc} exceeds the transformed rank {rank_hat}")));
        }
        match &loc {
            Location::InfHat if real != rank_hat => {
                return Err(DriverError::ConsistencyFailure(format!(
                    "summands at ∞̂ have total rank {real}, expected {rank_hat}"
                )));
            }
            Location::Finite(_) if real < rank_hat => summands.push(TransformedSummand {
                location: loc.clone(),
                summand: FormalSummand::regular("ẑ", vec![Some(Scalar::zero()); rank_hat - real]),
                provenance: "rank complement (trivial)".into(),
                complement: true,
            }),
            Location::ZeroHat if real < rank_hat => summands.push(TransformedSummand {
                location: loc.clone(),
                summand: FormalSummand::regular("ẑ", vec![None; rank_hat - real]),
                provenance: "rank complement".into(),
                complement: true,
            }),
            _ => {}
        }
        let all = FormalType { summands: summands.iter().map(|s| s.summand.clone()).collect() };
        let numerics = LocalNumerics::of_formal(&all)?;
        let matrix = match (&loc, &solver) {
            (Location::InfHat, Some(s)) if s.dim() > 0 && s.dim() == rank_hat => Some(PolarMatrix::from_solver(s, "ŵ", -1)),
            (Location::ZeroHat, _) => match germ_inf {
                Some(gi) if gi.pole_order() == 2 => {
                    let out = origin_chart_solver(&gi.polar(), dopts.terms)?;
                    (out.dim() == rank_hat).then(|| PolarMatrix::from_solver(&out, "ẑ", 0))
                }
                _ => None,
            },
            _ => None,
        };
        points.push(PointReport {
            regular: all.is_regular(),
            pole_order: pole_order_of(&all),
            summand_rank: real,
            location: loc,
            summands,
            numerics,
            matrix,
        });
    }

    // Swan and slope bookkeeping against the numeric rules
    let swan_at = |key: &str| points.iter().find(|p| p.location.key() == key).map_or(0, |p| p.numerics.swan);
    let inf_hat_swan = swan_at("infhat");
    let expect_inf_hat = num_hat_from0.swan + num_hat_frominf.swan;
    let zero_hat_swan = swan_at("0hat");
    let swan_ok = inf_hat_swan == expect_inf_hat && zero_hat_swan == num_zero_hat.swan;
    let swan_details = format!(
        "∞̂ Swan {inf_hat_swan} (numerics {expect_inf_hat}), 0̂ Swan {zero_hat_swan} (numerics {})",
        num_zero_hat.swan
    );
    if !swan_ok {
        return Err(DriverError::ConsistencyFailure(swan_details));
    }
    checks.push(check("Swan bookkeeping", true, swan_details));
    let mut finite = Vec::new();
    for p in &points {
        if let Location::Finite(c) = &p.location {
            finite.push(c.to_string());
            let sound = ft_inf.summands.iter().any(|s| s.slope() == one && roots.eq(&s.exponent.body().coeff(-1), c));
            if !sound {
                return Err(DriverError::ConsistencyFailure(format!("finite point {c} has no slope-one source")));
            }
        }
    }
    let finite_details = if finite.is_empty() { "no finite points".to_string() } else { finite.join(", ") };
    checks.push(check("finite points come from slope-one exponents", true, finite_details));

    if let (Some(s), Some(gi)) = (&solver, germ_inf) {
        if s.dim() > 0 {
            let solved = crate::germ::slopes(&s.as_germ(Point::Infinity)?)?;
            let predicted = num_hat_frominf.slopes.clone();
            let fmt_sl = |v: &[(BigRational, usize)]| v.iter().map(|(a, r)| format!("({a},{r})")).collect::<Vec<_>>().join(" ");
            if solved != predicted {
                return Err(DriverError::ConsistencyFailure(format!(
                    "solver slopes {} differ from predicted {}",
                    fmt_sl(&solved),
                    fmt_sl(&predicted)
                )));
            }
            checks.push(check("solver slopes match numerics", true, fmt_sl(&solved)));
            let lines = seed_check(s, &gi.polar(), &mut roots, dopts)?;
            checks.push(check("solver exponents match Legendre seeds", true, lines.join("; ")));
            let notes = if s.notes.is_empty() { "no generator eliminated".to_string() } else { s.notes.join("; ") };
            checks.push(check("solver elimination", true, notes));
        }
    }

    Ok(TransformReport { rank: g.rank(), source, rank_hat, rank_sources: RankSources { numerics: rank_numerics, microlocal, solver: rank_solver }, points, checks })
}

// ---------------------------------------------------------------------------
// double transform

/// Formal data per source point, as consumed by [`transform_formal`].
pub type FormalData = Vec<(Point, FormalType)>;

/// The formal transform of per-point formal data, without complements.
pub fn transform_formal(data: &FormalData, roots: &mut RootTable, opts: DecomposeOptions) -> Result<FormalData, DriverError> {
    let mut items = Vec::new();
    for (p, ft) in data {
        items.extend(transform_point(p, ft, roots, opts)?);
    }
    Ok(group_by_location(items)
        .into_iter()
        .map(|(loc, ts)| (loc.as_point(), FormalType { summands: ts.into_iter().map(|t| t.summand).collect() }))
        .filter(|(_, ft)| !ft.summands.is_empty())
        .collect())
}

fn strip_trivial(data: FormalData) -> FormalData {
    data.into_iter().map(|(p, ft)| (p, nontrivial(&ft))).filter(|(_, ft)| !ft.summands.is_empty()).collect()
}

fn negate(p: &Point) -> Point {
    match p {
        Point::Finite(c) => Point::Finite(-c),
        Point::Infinity => Point::Infinity,
    }
}

fn summands_match(a: &FormalSummand, b: &FormalSummand, roots: &RootTable) -> bool {
    if a.rank != b.rank || a.slope() != b.slope() {
        return false;
    }
    if !same_orbit(&a.exponent, &b.exponent, -1, roots) {
        return false;
    }
    let known_a: Vec<&Scalar> = a.residues.iter().flatten().collect();
    let known_b: Vec<&Scalar> = b.residues.iter().flatten().collect();
    if known_a.len() != a.rank || known_b.len() != b.rank {
        return true;
    }
    let mut pending = known_b.clone();
    for x in known_a {
        match pending.iter().position(|y| roots.eq(x, y)) {
            Some(i) => {
                pending.remove(i);
            }
            None => return false,
        }
    }
    true
}

/// Transform twice at the level of formal data and compare with the sign
/// flip of the original: finite locations negated, exponents precomposed
/// with `z ↦ -z`, residues unchanged where both sides know them.
pub fn double_transform_check(g: &GlobalConnection, opts: DriverOptions) -> Result<Check, DriverError> {
    let mut roots = RootTable::new();
    let mut original = Vec::new();
    for germ in g.germs().iter().filter(|x| x.pole_order() > 0) {
        original.push((germ.point().clone(), formal_decompose(germ, &mut roots, opts.decompose)?));
    }
    let original = strip_trivial(original);
    let first = strip_trivial(transform_formal(&original, &mut roots, opts.decompose)?);
    let second = strip_trivial(transform_formal(&first, &mut roots, opts.decompose)?);
    let mut diffs = Vec::new();
    for (p, ft) in &original {
        let target = negate(p);
        let Some((_, got)) = second.iter().find(|(q, _)| q == &target) else {
            diffs.push(format!("point {target} missing after two transforms"));
            continue;
        };
        let mut pending: Vec<&FormalSummand> = got.summands.iter().collect();
        for s in &ft.summands {
            match pending.iter().position(|t| summands_match(t, s, &roots)) {
                Some(i) => {
                    pending.remove(i);
                }
                None => diffs.push(format!("at {target}: no match for exponent {} of rank {}", s.exponent, s.rank)),
            }
        }
        for t in pending {
            diffs.push(format!("at {target}: unexpected exponent {} of rank {}", t.exponent, t.rank));
        }
    }
    for (q, _) in &second {
        if !original.iter().any(|(p, _)| &negate(p) == q) {
            diffs.push(format!("unexpected point {q} after two transforms"));
        }
    }
    let describe = |d: &FormalData| d.iter().map(|(p, ft)| format!("{p}: rank {}", ft.rank())).collect::<Vec<_>>().join(", ");
    Ok(if diffs.is_empty() {
        check("double transform", true, format!("first transform [{}]; second matches the sign flip", describe(&first)))
    } else {
        check("double transform", false, diffs.join("; "))
    })
}

// ---------------------------------------------------------------------------
// independence of residues and holomorphic terms

/// Changes to a connection that leave its irregular data alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Perturbation {
    /// Diagonal additions to the residue matrix at a point.
    pub residue_shifts: Vec<(Point, Vec<Scalar>)>,
    /// Added coefficient matrices of nonnegative order.
    pub tails: Vec<(Point, i64, Mat<Scalar>)>,
}

impl Perturbation {
    pub fn apply(&self, g: &GlobalConnection) -> Result<GlobalConnection, DriverError> {
        for (_, k, _) in &self.tails {
            if *k < 0 {
                return Err(DriverError::Unsupported(format!("tail of order {k} is not holomorphic")));
            }
        }
        Ok(g.map_germs(|germ| {
            let mut coeffs: Vec<(i64, Mat<Scalar>)> = germ.coeffs().iter().map(|(k, m)| (*k, m.clone())).collect();
            for (p, shifts) in &self.residue_shifts {
                if p == germ.point() {
                    coeffs.push((-1, Mat::diag(shifts.clone())));
                }
            }
            for (p, k, m) in &self.tails {
                if p == germ.point() {
                    coeffs.push((*k, m.clone()));
                }
            }
            ConnectionGerm::new(germ.point().clone(), germ.rank(), coeffs)
        })?)
    }
}

fn irregular_signature(p: &PointReport) -> Vec<(BigRational, usize, PuiseuxSeries)> {
    p.summands
        .iter()
        .filter(|s| !s.summand.is_regular())
        .map(|s| (s.summand.slope(), s.summand.rank, s.summand.exponent.clone()))
        .collect()
}

/// Transform both the connection and its perturbation and compare locations,
/// ranks, slopes, Swan conductors, irregular exponents and the two leading
/// coefficients of every reported matrix.
pub fn irregular_independence_check(g: &GlobalConnection, pert: &Perturbation, opts: DriverOptions) -> Result<Check, DriverError> {
    let base = fourier_transform(g, opts)?;
    let other = fourier_transform(&pert.apply(g)?, opts)?;
    let roots = RootTable::new();
    let mut diffs = Vec::new();
    if base.rank_hat != other.rank_hat {
        diffs.push(format!("rank {} vs {}", base.rank_hat, other.rank_hat));
    }
    if base.location_keys() != other.location_keys() {
        diffs.push(format!("locations {:?} vs {:?}", base.location_keys(), other.location_keys()));
    }
    for p in &base.points {
        let Some(q) = other.point(&p.location.key()) else { continue };
        if p.numerics.swan != q.numerics.swan || p.numerics.slopes != q.numerics.slopes || p.summand_rank != q.summand_rank {
            diffs.push(format!("at {}: {} vs {}", p.location, p.numerics, q.numerics));
        }
        let (a, b) = (irregular_signature(p), irregular_signature(q));
        let mut pending = b.clone();
        for (s, r, e) in &a {
            match pending.iter().position(|(s2, r2, e2)| s == s2 && r == r2 && same_orbit(e, e2, 1, &roots)) {
                Some(i) => {
                    pending.remove(i);
                }
                None => diffs.push(format!("at {}: exponent {e} changed", p.location)),
            }
        }
        if let (Some(m), Some(n)) = (&p.matrix, &q.matrix) {
            for (x, y) in m.leading(2).iter().zip(n.leading(2)) {
                if x.order != y.order || x.matrix != y.matrix {
                    diffs.push(format!("at {}: matrix coefficient of order {} changed", p.location, x.order));
                }
            }
        } else if p.matrix.is_some() != q.matrix.is_some() {
            diffs.push(format!("at {}: matrix availability changed", p.location));
        }
    }
    Ok(if diffs.is_empty() {
        check("irregular independence", true, format!("{} points unchanged", base.points.len()))
    } else {
        check("irregular independence", false, diffs.join("; "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Scalar {
        x.parse().unwrap()
    }

    #[test]
    fn rejects_connection_without_poles() {
        let g = GlobalConnection::new(vec![ConnectionGerm::new(Point::Infinity, 1, []).unwrap()]).unwrap();
        assert_eq!(fourier_transform(&g, DriverOptions::default()), Err(DriverError::EmptySingularity));
    }

    #[test]
    fn slope_one_monomial_round_trip() {
        // q = -t w^{-1}: d/dw q = t w^{-2}
        let germ = ConnectionGerm::new(Point::Infinity, 1, [(-2, Mat::diag(vec![s("t")]))]).unwrap();
        let g = GlobalConnection::new(vec![germ]).unwrap();
        let c = double_transform_check(&g, DriverOptions::default()).unwrap();
        assert!(c.pass, "{}", c.details);
    }
}
