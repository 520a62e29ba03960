//! The six local-form test cases, their expected transformed data, and a
//! field-by-field verification harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{fourier_transform, DriverError, DriverOptions, TransformReport};
use crate::germ::{ConnectionGerm, GermError, GlobalConnection, Point};
use crate::matrix::Mat;
use crate::scalar::{Param, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseName {
    JKTVI,
    JKTV,
    JKTIVa,
    JKTIVb,
    JKTII,
    JKTI,
}

impl CaseName {
    pub const ALL: [CaseName; 6] =
        [CaseName::JKTVI, CaseName::JKTV, CaseName::JKTIVa, CaseName::JKTIVb, CaseName::JKTII, CaseName::JKTI];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::JKTVI => "JKTVI",
            CaseName::JKTV => "JKTV",
            CaseName::JKTIVa => "JKTIVa",
            CaseName::JKTIVb => "JKTIVb",
            CaseName::JKTII => "JKTII",
            CaseName::JKTI => "JKTI",
        }
    }

    /// Free parameters of the builder, in a fixed order.
    pub fn params(self) -> &'static [&'static str] {
        match self {
            CaseName::JKTVI | CaseName::JKTV => &["t", "b0", "b1", "λ2", "λ3"],
            CaseName::JKTIVa => &["b0", "b1", "λ2", "λ3"],
            CaseName::JKTIVb => &["t1", "t2", "b1", "b2", "c0", "c1"],
            CaseName::JKTII => &["t", "b", "c0", "c1"],
            CaseName::JKTI => &["b", "c0", "c1"],
        }
    }

    /// Slope multiset at infinity of the generic variant, as (numerator, denominator, multiplicity).
    pub fn generic_slopes(self) -> &'static [(i64, i64, usize)] {
        match self {
            CaseName::JKTVI => &[(1, 1, 3)],
            CaseName::JKTV => &[(1, 2, 2), (1, 1, 1)],
            CaseName::JKTIVa => &[(2, 3, 3)],
            CaseName::JKTIVb => &[(2, 1, 3)],
            CaseName::JKTII => &[(3, 2, 2), (2, 1, 1)],
            CaseName::JKTI => &[(5, 3, 3)],
        }
    }

    fn expected_json(self) -> &'static str {
        match self {
            CaseName::JKTVI => include_str!("../data/expected/JKTVI.json"),
            CaseName::JKTV => include_str!("../data/expected/JKTV.json"),
            CaseName::JKTIVa => include_str!("../data/expected/JKTIVa.json"),
            CaseName::JKTIVb => include_str!("../data/expected/JKTIVb.json"),
            CaseName::JKTII => include_str!("../data/expected/JKTII.json"),
            CaseName::JKTI => include_str!("../data/expected/JKTI.json"),
        }
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseName {
    type Err = CatalogError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseName::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CatalogError::UnknownCase(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("parameter `{0}` is not used by this case")]
    UnknownParameter(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("expected template is malformed: {0}")]
    Template(String),
    #[error(transparent)]
    Germ(#[from] GermError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Parameter bindings; unbound parameters stay symbolic.
pub type Bindings = BTreeMap<String, Scalar>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    /// Leading terms normalized as in the catalog.
    #[default]
    Normalized,
    /// Fully symbolic diagonal leading terms; nilpotent blocks keep a zero
    /// scalar eigenvalue.
    Generic,
}

struct Params<'a> {
    binds: &'a Bindings,
}

impl Params<'_> {
    fn get(&self, name: &str) -> Scalar {
        self.binds.get(name).cloned().unwrap_or_else(|| Scalar::from_param(&Param::new(name)))
    }
}

fn mat(rows: Vec<Vec<Scalar>>) -> Mat<Scalar> {
    Mat::from_rows(rows)
}

fn z() -> Scalar {
    Scalar::zero()
}

fn one() -> Scalar {
    Scalar::one()
}

fn nonzero(name: &str, value: &Scalar) -> Result<(), CatalogError> {
    if value.is_zero() {
        return Err(CatalogError::ConstraintViolation(format!("{name} must be nonzero")));
    }
    Ok(())
}

fn distinct(a: (&str, &Scalar), b: (&str, &Scalar)) -> Result<(), CatalogError> {
    if (a.1 - b.1).is_zero() {
        return Err(CatalogError::ConstraintViolation(format!("{} and {} must differ", a.0, b.0)));
    }
    Ok(())
}

fn origin_germ(l2: &Scalar, l3: &Scalar) -> Result<ConnectionGerm, GermError> {
    ConnectionGerm::new(Point::zero(), 3, [(-1, Mat::diag(vec![z(), l2.clone(), l3.clone()]))])
}

/// Build a catalog case with the given bindings.
pub fn build_case(name: CaseName, binds: &Bindings) -> Result<GlobalConnection, CatalogError> {
    build_variant(name, binds, Variant::Normalized)
}

pub fn build_variant(name: CaseName, binds: &Bindings, variant: Variant) -> Result<GlobalConnection, CatalogError> {
    for k in binds.keys() {
        if !name.params().contains(&k.as_str()) && !(variant == Variant::Generic && k.starts_with('a')) {
            return Err(CatalogError::UnknownParameter(k.clone()));
        }
    }
    let p = Params { binds };
    let generic = variant == Variant::Generic;
    let germs = match name {
        CaseName::JKTVI => {
            let (t, b0, b1, l2, l3) = (p.get("t"), p.get("b0"), p.get("b1"), p.get("λ2"), p.get("λ3"));
            nonzero("t", &t)?;
            distinct(("t", &t), ("1", &one()))?;
            let b2 = &(&(-&(&l2 + &l3)) - &b0) - &b1;
            let lead = if generic { vec![p.get("a0"), p.get("a1"), p.get("a2")] } else { vec![z(), one(), t] };
            let inf = ConnectionGerm::new(Point::Infinity, 3, [(-2, Mat::diag(lead)), (-1, Mat::diag(vec![b0, b1, b2]))])?;
            vec![origin_germ(&l2, &l3)?, inf]
        }
        CaseName::JKTV => {
            let (t, b0, b1, l2, l3) = (p.get("t"), p.get("b0"), p.get("b1"), p.get("λ2"), p.get("λ3"));
            nonzero("t", &t)?;
            nonzero("b0", &b0)?;
            let b2 = &(-&(&l2 + &l3)) - &b1;
            let inf = ConnectionGerm::new(
                Point::Infinity,
                3,
                [
                    (-2, mat(vec![vec![z(), one(), z()], vec![z(), z(), z()], vec![z(), z(), t]])),
                    (-1, mat(vec![vec![z(), z(), z()], vec![b0, b1, z()], vec![z(), z(), b2]])),
                ],
            )?;
            vec![origin_germ(&l2, &l3)?, inf]
        }
        CaseName::JKTIVa => {
            let (b0, b1, l2, l3) = (p.get("b0"), p.get("b1"), p.get("λ2"), p.get("λ3"));
            nonzero("b0", &b0)?;
            let b2 = -&(&l2 + &l3);
            let inf = ConnectionGerm::new(
                Point::Infinity,
                3,
                [
                    (-2, mat(vec![vec![z(), one(), z()], vec![z(), z(), one()], vec![z(), z(), z()]])),
                    (-1, mat(vec![vec![z(), z(), z()], vec![z(), z(), z()], vec![b0, b1, b2]])),
                ],
            )?;
            vec![origin_germ(&l2, &l3)?, inf]
        }
        CaseName::JKTIVb => {
            let (t1, t2, b1, b2, c0, c1) = (p.get("t1"), p.get("t2"), p.get("b1"), p.get("b2"), p.get("c0"), p.get("c1"));
            nonzero("t1", &t1)?;
            nonzero("t2", &t2)?;
            distinct(("t1", &t1), ("t2", &t2))?;
            let c2 = -&(&c0 + &c1);
            let (lead, sub) = if generic {
                (vec![p.get("a0"), t1, t2], vec![p.get("a1"), b1, b2])
            } else {
                (vec![z(), t1, t2], vec![z(), b1, b2])
            };
            vec![ConnectionGerm::new(
                Point::Infinity,
                3,
                [(-3, Mat::diag(lead)), (-2, Mat::diag(sub)), (-1, Mat::diag(vec![c0, c1, c2]))],
            )?]
        }
        CaseName::JKTII => {
            let (t, b, c0, c1) = (p.get("t"), p.get("b"), p.get("c0"), p.get("c1"));
            nonzero("b", &b)?;
            nonzero("t", &t)?;
            let c2 = -&c1;
            vec![ConnectionGerm::new(
                Point::Infinity,
                3,
                [
                    (-3, mat(vec![vec![z(), one(), z()], vec![z(), z(), z()], vec![z(), z(), t]])),
                    (-2, mat(vec![vec![z(), z(), z()], vec![b, z(), z()], vec![z(), z(), z()]])),
                    (-1, mat(vec![vec![z(), z(), z()], vec![c0, c1, z()], vec![z(), z(), c2]])),
                ],
            )?]
        }
        CaseName::JKTI => {
            let (b, c0, c1) = (p.get("b"), p.get("c0"), p.get("c1"));
            nonzero("b", &b)?;
            vec![ConnectionGerm::new(
                Point::Infinity,
                3,
                [
                    (-3, mat(vec![vec![z(), one(), z()], vec![z(), z(), one()], vec![z(), z(), z()]])),
                    (-2, mat(vec![vec![z(), z(), z()], vec![z(), z(), z()], vec![b, z(), z()]])),
                    (-1, mat(vec![vec![z(), z(), z()], vec![z(), z(), z()], vec![c0, c1, z()]])),
                ],
            )?]
        }
    };
    Ok(GlobalConnection::new(germs)?)
}

// ---------------------------------------------------------------------------
// expected templates

/// A template value: a concrete value or the marker `"unknown"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field<T> {
    Known(T),
    Marker(String),
}

impl<T> Field<T> {
    pub fn known(&self) -> Option<&T> {
        match self {
            Field::Known(v) => Some(v),
            Field::Marker(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedPoint {
    pub location: String,
    #[serde(default)]
    pub regular: Option<bool>,
    #[serde(default)]
    pub swan: Option<u64>,
    #[serde(default)]
    pub pole_order: Option<u32>,
    #[serde(default)]
    pub summand_rank: Option<usize>,
    /// Residue exponents as a multiset; `"unknown"` entries are skipped.
    #[serde(default)]
    pub residues: Option<Vec<String>>,
    /// Polar matrix coefficients keyed by order.
    #[serde(default)]
    pub matrix: Option<BTreeMap<String, Vec<Vec<String>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedReport {
    pub case: CaseName,
    pub rank_hat: usize,
    /// Whether the listed points are the complete singular set.
    pub exact_point_set: bool,
    pub points: Vec<ExpectedPoint>,
}

pub fn expected_report(name: CaseName) -> Result<ExpectedReport, CatalogError> {
    serde_json::from_str(name.expected_json()).map_err(|e| CatalogError::Template(format!("{name}: {e}")))
}

// ---------------------------------------------------------------------------
// verification

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldDiff {
    pub field: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    pub case: CaseName,
    pub pass: bool,
    pub diffs: Vec<FieldDiff>,
    pub fields_checked: usize,
}

fn scalar_eq(a: &Scalar, b: &Scalar, seed: u64) -> bool {
    (a - b).is_zero_checked(seed).unwrap_or(false)
}

fn location_matches(expected: &str, actual: &str, seed: u64) -> bool {
    if expected == actual {
        return true;
    }
    if matches!(expected, "0hat" | "infhat") || matches!(actual, "0hat" | "infhat") {
        return false;
    }
    match (expected.parse::<Scalar>(), actual.parse::<Scalar>()) {
        (Ok(a), Ok(b)) => scalar_eq(&a, &b, seed),
        _ => false,
    }
}

/// Compare a report against a template; unknown fields are ignored.
pub fn compare_report(report: &TransformReport, exp: &ExpectedReport, seed: u64) -> Verification {
    let mut diffs = Vec::new();
    let mut checked = 0;
    let mut diff = |field: String, expected: String, actual: String| diffs.push(FieldDiff { field, expected, actual });
    checked += 1;
    if report.rank_hat != exp.rank_hat {
        diff("rank_hat".into(), exp.rank_hat.to_string(), report.rank_hat.to_string());
    }
    let keys = report.location_keys();
    if exp.exact_point_set {
        checked += 1;
        let matched = exp.points.len() == keys.len()
            && exp.points.iter().all(|p| keys.iter().any(|k| location_matches(&p.location, k, seed)));
        if !matched {
            diff(
                "points".into(),
                exp.points.iter().map(|p| p.location.clone()).collect::<Vec<_>>().join(", "),
                keys.join(", "),
            );
        }
    }
    for ep in &exp.points {
        let f = |name: &str| format!("points[{}].{name}", ep.location);
        let Some(p) = report.points.iter().find(|p| location_matches(&ep.location, &p.location.key(), seed)) else {
            diff(f("location"), ep.location.clone(), "missing".into());
            continue;
        };
        if let Some(r) = ep.regular {
            checked += 1;
            if r != p.regular {
                diff(f("regular"), r.to_string(), p.regular.to_string());
            }
        }
        if let Some(s) = ep.swan {
            checked += 1;
            if s != p.numerics.swan {
                diff(f("swan"), s.to_string(), p.numerics.swan.to_string());
            }
        }
        if let Some(o) = ep.pole_order {
            checked += 1;
            if o != p.pole_order {
                diff(f("pole_order"), o.to_string(), p.pole_order.to_string());
            }
        }
        if let Some(r) = ep.summand_rank {
            checked += 1;
            if r != p.summand_rank {
                diff(f("summand_rank"), r.to_string(), p.summand_rank.to_string());
            }
        }
        if let Some(res) = &ep.residues {
            let actual: Vec<Option<Scalar>> = p
                .summands
                .iter()
                .filter(|s| !s.complement)
                .flat_map(|s| s.summand.residues.iter().cloned())
                .collect();
            let shown = actual.iter().map(|r| r.as_ref().map_or("unknown".into(), |x| x.to_string())).collect::<Vec<_>>().join(", ");
            let mut pending: Vec<Option<Scalar>> = actual.clone();
            for e in res.iter().filter(|e| e.as_str() != "unknown") {
                checked += 1;
                let Ok(ev) = e.parse::<Scalar>() else {
                    diff(f("residues"), e.clone(), "unparseable template entry".into());
                    continue;
                };
                match pending.iter().position(|a| a.as_ref().is_some_and(|a| scalar_eq(a, &ev, seed))) {
                    Some(i) => {
                        pending.remove(i);
                    }
                    None => diff(f("residues"), e.clone(), shown.clone()),
                }
            }
        }
        if let Some(mats) = &ep.matrix {
            for (order, rows) in mats {
                let field = f(&format!("matrix[{order}]"));
                let Some(pm) = &p.matrix else {
                    diff(field, "present".into(), "no matrix".into());
                    continue;
                };
                let Ok(k) = order.parse::<i64>() else {
                    diff(field, order.clone(), "unparseable order".into());
                    continue;
                };
                let actual = pm.coeff(k).cloned().unwrap_or_else(|| Mat::scalar_zeros(pm.generators.len(), pm.generators.len()));
                if actual.rows() != rows.len() {
                    diff(field, format!("{} rows", rows.len()), format!("{} rows", actual.rows()));
                    continue;
                }
                for (i, row) in rows.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        if e == "unknown" {
                            continue;
                        }
                        checked += 1;
                        let ok = e.parse::<Scalar>().is_ok_and(|ev| j < actual.cols() && scalar_eq(actual.get(i, j), &ev, seed));
                        if !ok {
                            let a = if j < actual.cols() { actual.get(i, j).to_string() } else { "missing".into() };
                            diff(format!("{field}[{i}][{j}]"), e.clone(), a);
                        }
                    }
                }
            }
        }
    }
    Verification { case: exp.case, pass: diffs.is_empty(), diffs, fields_checked: checked }
}

/// Build, transform and compare one case with default parameters.
pub fn verify_case(name: CaseName, opts: DriverOptions) -> Result<Verification, CatalogError> {
    verify_against(name, &expected_report(name)?, opts)
}

pub fn verify_against(name: CaseName, exp: &ExpectedReport, opts: DriverOptions) -> Result<Verification, CatalogError> {
    let g = build_case(name, &Bindings::new())?;
    let report = fourier_transform(&g, opts)?;
    Ok(compare_report(&report, exp, opts.seed))
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({} fields)", if self.pass { "PASS" } else { "FAIL" }, self.case, self.fields_checked)?;
        for d in &self.diffs {
            write!(f, "\n    {}: expected {}, got {}", d.field, d.expected, d.actual)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::validate_residue_trace;

    #[test]
    fn builders_satisfy_residue_theorem() {
        for c in CaseName::ALL {
            let g = build_case(c, &Bindings::new()).unwrap();
            assert!(validate_residue_trace(&g, 7).is_ok(), "{c}");
        }
    }

    #[test]
    fn constraint_violations() {
        let mut b = Bindings::new();
        b.insert("b".into(), Scalar::zero());
        assert!(matches!(build_case(CaseName::JKTII, &b), Err(CatalogError::ConstraintViolation(_))));
        let mut b = Bindings::new();
        b.insert("t".into(), Scalar::one());
        assert!(matches!(build_case(CaseName::JKTVI, &b), Err(CatalogError::ConstraintViolation(_))));
        let mut b = Bindings::new();
        b.insert("t1".into(), "s".parse().unwrap());
        b.insert("t2".into(), "s".parse().unwrap());
        assert!(matches!(build_case(CaseName::JKTIVb, &b), Err(CatalogError::ConstraintViolation(_))));
    }

    #[test]
    fn templates_parse() {
        for c in CaseName::ALL {
            assert_eq!(expected_report(c).unwrap().case, c);
        }
    }
}

#[cfg(test)]
mod verify_tests {
    use super::*;
    use crate::driver::double_transform_check;

    #[test]
    fn every_case_matches_its_template() {
        for c in CaseName::ALL {
            let v = verify_case(c, DriverOptions::default()).unwrap();
            assert!(v.pass, "{v}");
        }
    }

    #[test]
    fn sabotaged_template_names_the_field() {
        let mut exp = expected_report(CaseName::JKTVI).unwrap();
        exp.points[3].residues = Some(vec!["λ2 + 2".into(), "λ3 + 1".into()]);
        let v = verify_against(CaseName::JKTVI, &exp, DriverOptions::default()).unwrap();
        assert!(!v.pass);
        assert_eq!(v.diffs.len(), 1);
        assert_eq!(v.diffs[0].field, "points[infhat].residues");
    }

    #[test]
    fn double_transform_on_every_case() {
        for c in CaseName::ALL {
            let g = build_case(c, &Bindings::new()).unwrap();
            let chk = double_transform_check(&g, DriverOptions::default()).unwrap();
            assert!(chk.pass, "{c}: {}", chk.details);
        }
    }
}
