//! Configuration and execution for the command-line front end.
//!
//! `run` never touches stdout or the process exit status itself; it returns the
//! exit code together with the fully rendered output so that callers (the
//! binary, tests) decide where it goes.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{build_case, verify_case, Bindings, CaseName, CatalogError, Verification};
use crate::driver::{fourier_transform, DriverError, DriverOptions};
use crate::germ::{ConnectionDoc, GermError, GlobalConnection};
use crate::local_fl::LocalError;
use crate::properties::{run_all, DEFAULT_CASES};
use crate::scalar::{Param, Scalar};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_UNSUPPORTED: i32 = 4;
pub const EXIT_CONSISTENCY: i32 = 5;

pub const DEFAULT_TRUNCATION: (u32, u32) = (12, 24);
pub const MIN_TRUNCATION: (u32, u32) = (8, 16);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    Case(CaseName),
    File(PathBuf),
    /// Every catalog case; only meaningful in verify mode.
    AllCases,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Structured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Transform,
    Verify,
    Properties,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: Input,
    pub params: Vec<(String, String)>,
    pub truncation: (u32, u32),
    pub seed: u64,
    pub format: Format,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub property_cases: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: Input::AllCases,
            params: Vec::new(),
            truncation: DEFAULT_TRUNCATION,
            seed: 0,
            format: Format::Text,
            mode: Mode::Transform,
            out: None,
            property_cases: DEFAULT_CASES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("parse error at {at}: {message}")]
    Parse { at: String, message: String },
    #[error("unsupported input at {at}: {message}")]
    Unsupported { at: String, message: String },
    #[error("consistency failure at {at}: {message}")]
    Consistency { at: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse { .. } => EXIT_PARSE,
            RunError::Unsupported { .. } => EXIT_UNSUPPORTED,
            RunError::Consistency { .. } => EXIT_CONSISTENCY,
        }
    }

    fn parse(at: impl Into<String>, message: impl fmt::Display) -> Self {
        RunError::Parse { at: at.into(), message: message.to_string() }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Parse { .. } => "parse",
            RunError::Unsupported { .. } => "unsupported",
            RunError::Consistency { .. } => "consistency",
        }
    }

    fn location(&self) -> &str {
        match self {
            RunError::Parse { at, .. } | RunError::Unsupported { at, .. } | RunError::Consistency { at, .. } => at,
        }
    }

    fn message(&self) -> &str {
        match self {
            RunError::Parse { message, .. }
            | RunError::Unsupported { message, .. }
            | RunError::Consistency { message, .. } => message,
        }
    }
}

fn classify_germ(at: &str, e: &GermError) -> RunError {
    let message = e.to_string();
    let at = at.to_string();
    match e {
        GermError::Shape(_) | GermError::Scalar(_) => RunError::Parse { at, message },
        GermError::DegeneratePolygon(_) | GermError::UnsupportedGermShape { .. } | GermError::NonIntegralSwan(_) => {
            RunError::Unsupported { at, message }
        }
        GermError::Series(_) => RunError::Consistency { at, message },
    }
}

fn classify_driver(at: &str, e: &DriverError) -> RunError {
    let message = e.to_string();
    let at = at.to_string();
    if e.is_consistency() {
        return RunError::Consistency { at, message };
    }
    match e {
        DriverError::Germ(g) => classify_germ(&at, g),
        DriverError::Local(LocalError::Germ(g)) => classify_germ(&at, g),
        DriverError::EmptySingularity
        | DriverError::Unsupported(_)
        | DriverError::Local(LocalError::SlopeOutOfDomain(_))
        | DriverError::Local(LocalError::ZeroLeadingCoefficient)
        | DriverError::Local(LocalError::NonSemisimpleResidue) => RunError::Unsupported { at, message },
        _ => RunError::Consistency { at, message },
    }
}

fn classify_catalog(at: &str, e: &CatalogError) -> RunError {
    match e {
        CatalogError::Germ(g) => classify_germ(at, g),
        CatalogError::Driver(d) => classify_driver(at, d),
        CatalogError::Template(_) => RunError::Consistency { at: at.into(), message: e.to_string() },
        _ => RunError::parse(at, e),
    }
}

/// Parse `N,M`, enforcing the minimum truncation.
pub fn parse_truncation(s: &str) -> Result<(u32, u32), RunError> {
    let bad = |m: &str| RunError::parse("--truncation", format!("`{s}`: {m}"));
    let (a, b) = s.split_once(',').ok_or_else(|| bad("expected N,M"))?;
    let n: u32 = a.trim().parse().map_err(|_| bad("N is not a non-negative integer"))?;
    let m: u32 = b.trim().parse().map_err(|_| bad("M is not a non-negative integer"))?;
    check_truncation((n, m))?;
    Ok((n, m))
}

fn check_truncation(t: (u32, u32)) -> Result<(), RunError> {
    if t.0 < MIN_TRUNCATION.0 || t.1 < MIN_TRUNCATION.1 {
        return Err(RunError::parse(
            "--truncation",
            format!("{},{} is below the minimum {},{}", t.0, t.1, MIN_TRUNCATION.0, MIN_TRUNCATION.1),
        ));
    }
    Ok(())
}

/// Parse `name=value`.
pub fn parse_param(s: &str) -> Result<(String, String), RunError> {
    let (k, v) = s.split_once('=').ok_or_else(|| RunError::parse("--param", format!("`{s}` is not name=value")))?;
    let k = k.trim();
    if k.is_empty() || !k.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(RunError::parse("--param", format!("`{k}` is not a parameter name")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl FromStr for Mode {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "transform" => Ok(Mode::Transform),
            "verify" => Ok(Mode::Verify),
            "properties" => Ok(Mode::Properties),
            _ => Err(RunError::parse("--mode", format!("unknown mode `{s}`"))),
        }
    }
}

impl FromStr for Format {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "text" => Ok(Format::Text),
            "structured" | "json" => Ok(Format::Structured),
            _ => Err(RunError::parse("--format", format!("unknown format `{s}`"))),
        }
    }
}

fn bindings(params: &[(String, String)]) -> Result<Bindings, RunError> {
    let mut out = Bindings::new();
    for (k, v) in params {
        let value: Scalar = v.parse().map_err(|e| RunError::parse(format!("--param {k}"), e))?;
        if out.insert(k.clone(), value).is_some() {
            return Err(RunError::parse(format!("--param {k}"), "bound twice"));
        }
    }
    Ok(out)
}

/// Read a germ-description document and substitute any bound parameters.
pub fn load_connection(text: &str, binds: &Bindings) -> Result<GlobalConnection, RunError> {
    let doc: ConnectionDoc = toml::from_str(text).map_err(|e| RunError::parse("file", e.message()))?;
    let mut germs = Vec::with_capacity(doc.germ.len());
    for (i, gd) in doc.germ.iter().enumerate() {
        let at = format!("germ[{i}] (point {})", gd.point);
        let g = gd.to_germ().map_err(|e| classify_germ(&at, &e))?;
        let subst: std::collections::BTreeMap<Param, Scalar> =
            binds.iter().map(|(k, v)| (Param::new(k), v.clone())).collect();
        let g = if subst.is_empty() {
            g
        } else {
            g.map_scalars(|s| s.substitute_all(&subst)).map_err(|e| classify_germ(&at, &e))?
        };
        germs.push(g);
    }
    GlobalConnection::new(germs).map_err(|e| classify_germ("file", &e))
}

fn connection_for(config: &RunConfig) -> Result<(String, GlobalConnection), RunError> {
    let binds = bindings(&config.params)?;
    match &config.input {
        Input::Case(c) => {
            let g = build_case(*c, &binds).map_err(|e| classify_catalog(&format!("case {c}"), &e))?;
            Ok((c.to_string(), g))
        }
        Input::File(p) => {
            let label = p.display().to_string();
            let text = std::fs::read_to_string(p).map_err(|e| RunError::parse(format!("file {label}"), e))?;
            Ok((label, load_connection(&text, &binds)?))
        }
        Input::AllCases => Err(RunError::parse("input", "transform mode needs --case or --file")),
    }
}

#[derive(Serialize)]
struct VerifyDoc<'a> {
    pass: bool,
    cases: &'a [Verification],
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: &'a str,
    at: &'a str,
    message: &'a str,
    exit_code: i32,
}

fn render_error(e: &RunError, format: Format) -> String {
    match format {
        Format::Text => format!("error[{}] {}: {}\n", e.kind(), e.location(), e.message()),
        Format::Structured => {
            let doc = ErrorDoc { error: e.kind(), at: e.location(), message: e.message(), exit_code: e.exit_code() };
            serde_json::to_string_pretty(&doc).expect("error document serializes") + "\n"
        }
    }
}

fn run_inner(config: &RunConfig) -> Result<(i32, String), RunError> {
    check_truncation(config.truncation)?;
    let opts = DriverOptions::with_truncation(config.truncation.0, config.truncation.1, config.seed);
    match config.mode {
        Mode::Transform => {
            let (label, g) = connection_for(config)?;
            let report = fourier_transform(&g, opts).map_err(|e| classify_driver(&label, &e))?;
            let text = match config.format {
                Format::Text => format!("{label}\n{report}\n"),
                Format::Structured => report.to_json() + "\n",
            };
            Ok((EXIT_OK, text))
        }
        Mode::Verify => {
            if !config.params.is_empty() {
                return Err(RunError::parse("--param", "verify mode checks the catalog templates and takes no bindings"));
            }
            let cases: Vec<CaseName> = match &config.input {
                Input::Case(c) => vec![*c],
                Input::AllCases => CaseName::ALL.to_vec(),
                Input::File(_) => return Err(RunError::parse("--file", "verify mode works on catalog cases only")),
            };
            let results: Vec<Result<Verification, RunError>> = cases
                .par_iter()
                .map(|c| verify_case(*c, opts).map_err(|e| classify_catalog(&format!("case {c}"), &e)))
                .collect();
            let results: Vec<Verification> = results.into_iter().collect::<Result<_, _>>()?;
            let pass = results.iter().all(|v| v.pass);
            let text = match config.format {
                Format::Text => results.iter().map(|v| format!("{v}\n")).collect(),
                Format::Structured => {
                    serde_json::to_string_pretty(&VerifyDoc { pass, cases: &results }).expect("verification serializes") + "\n"
                }
            };
            Ok((if pass { EXIT_OK } else { EXIT_VERIFY }, text))
        }
        Mode::Properties => {
            let outcomes = run_all(config.seed, config.property_cases);
            let pass = outcomes.iter().all(|o| o.pass());
            let text = match config.format {
                Format::Text => outcomes.iter().map(|o| o.summary() + "\n").collect(),
                Format::Structured => serde_json::to_string_pretty(&outcomes).expect("outcomes serialize") + "\n",
            };
            Ok((if pass { EXIT_OK } else { EXIT_VERIFY }, text))
        }
    }
}

/// Execute a configuration, returning the exit code and the rendered output.
/// When `out` is set the output is also written there.
pub fn run(config: &RunConfig) -> (i32, String) {
    let (code, text) = match run_inner(config) {
        Ok(r) => r,
        Err(e) => (e.exit_code(), render_error(&e, config.format)),
    };
    if let Some(path) = &config.out {
        if let Err(e) = std::fs::write(path, &text) {
            let err = RunError::parse(format!("--out {}", path.display()), e);
            return (err.exit_code(), render_error(&err, config.format));
        }
    }
    (code, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(c: CaseName) -> RunConfig {
        RunConfig { input: Input::Case(c), ..RunConfig::default() }
    }

    #[test]
    fn rank_zero_file_is_a_parse_error() {
        let doc = "[[germ]]\npoint = \"0\"\nrank = 0\n";
        let err = load_connection(doc, &Bindings::new()).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_PARSE);
    }

    #[test]
    fn truncation_floor_is_enforced() {
        assert_eq!(parse_truncation("12,24").unwrap(), (12, 24));
        assert_eq!(parse_truncation("7,24").unwrap_err().exit_code(), EXIT_PARSE);
        assert!(parse_truncation("12").is_err());
        let mut cfg = case(CaseName::JKTI);
        cfg.truncation = (8, 8);
        assert_eq!(run(&cfg).0, EXIT_PARSE);
    }

    #[test]
    fn params_parse_and_reject_garbage() {
        assert_eq!(parse_param("t = 3/2").unwrap(), ("t".into(), "3/2".into()));
        assert!(parse_param("3=4").is_err());
        assert!(parse_param("t").is_err());
        let mut cfg = case(CaseName::JKTII);
        cfg.params = vec![("zz".into(), "1".into())];
        assert_eq!(run(&cfg).0, EXIT_PARSE);
    }

    #[test]
    fn jktvi_lists_four_regular_points() {
        let mut cfg = case(CaseName::JKTVI);
        cfg.format = Format::Structured;
        let (code, out) = run(&cfg);
        assert_eq!(code, EXIT_OK, "{out}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let points = v["points"].as_array().unwrap();
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|p| p["regular"] == serde_json::Value::Bool(true)));
    }

    #[test]
    fn structured_output_is_deterministic() {
        let mut cfg = case(CaseName::JKTV);
        cfg.format = Format::Structured;
        cfg.seed = 11;
        assert_eq!(run(&cfg), run(&cfg));
    }

    #[test]
    fn file_input_matches_catalog_case() {
        let g = build_case(CaseName::JKTI, &Bindings::new()).unwrap();
        let text = toml::to_string(&ConnectionDoc::from_connection(&g)).unwrap();
        let mut b = Bindings::new();
        b.insert("b".into(), Scalar::from_int(2));
        let loaded = load_connection(&text, &b).unwrap();
        let direct = {
            let mut b = Bindings::new();
            b.insert("b".into(), Scalar::from_int(2));
            build_case(CaseName::JKTI, &b).unwrap()
        };
        let opts = DriverOptions::default();
        assert_eq!(
            fourier_transform(&loaded, opts).unwrap().to_json(),
            fourier_transform(&direct, opts).unwrap().to_json()
        );
    }

    #[test]
    fn unsupported_point_exits_four() {
        let doc = "[[germ]]\npoint = \"1\"\nrank = 1\n[[germ.coefficients]]\norder = -2\nmatrix = [[\"1\"]]\n";
        let dir = std::env::temp_dir().join(format!("formal-fl-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unsupported.toml");
        std::fs::write(&path, doc).unwrap();
        let cfg = RunConfig { input: Input::File(path), ..RunConfig::default() };
        let (code, out) = run(&cfg);
        assert_eq!(code, EXIT_UNSUPPORTED, "{out}");
        assert!(out.contains("error[unsupported]"));
    }
}
