use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use formal_fl::catalog::CaseName;
use formal_fl::cli::{parse_param, parse_truncation, run, Format, Input, Mode, RunConfig, RunError, DEFAULT_TRUNCATION};
use formal_fl::properties::DEFAULT_CASES;

/// Formal Fourier-Laplace transforms of connections on the projective line.
#[derive(Parser, Debug)]
#[command(name = "formal-fl", version)]
struct Args {
    /// Catalog case (JKTVI, JKTV, JKTIVa, JKTIVb, JKTII, JKTI).
    #[arg(long, conflicts_with = "file")]
    case: Option<String>,
    /// Germ-description file (TOML).
    #[arg(long)]
    file: Option<PathBuf>,
    /// Parameter binding `name=value`; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    /// Truncation orders `N,M` for the dual variable and the space variable.
    #[arg(long)]
    truncation: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// transform, verify or properties.
    #[arg(long, default_value = "transform")]
    mode: String,
    /// Also write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// text or structured.
    #[arg(long, default_value = "text")]
    format: String,
    /// Random cases per property suite.
    #[arg(long, default_value_t = DEFAULT_CASES)]
    cases: usize,
}

fn config(args: Args) -> Result<RunConfig, RunError> {
    let format: Format = args.format.parse()?;
    let mode: Mode = args.mode.parse()?;
    let input = match (args.case, args.file) {
        (Some(c), _) => Input::Case(
            c.parse::<CaseName>()
                .map_err(|e| RunError::Parse { at: "--case".into(), message: e.to_string() })?,
        ),
        (None, Some(p)) => Input::File(p),
        (None, None) => Input::AllCases,
    };
    let truncation = match args.truncation {
        Some(t) => parse_truncation(&t)?,
        None => DEFAULT_TRUNCATION,
    };
    let params = args.params.iter().map(|p| parse_param(p)).collect::<Result<_, _>>()?;
    Ok(RunConfig { input, params, truncation, seed: args.seed, format, mode, out: args.out, property_cases: args.cases })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (code, text) = match config(args) {
        Ok(cfg) => run(&cfg),
        Err(e) => (e.exit_code(), format!("{e}\n")),
    };
    let stream = if code == 0 || code == 2 { None } else { Some(std::io::stderr()) };
    match stream {
        Some(mut err) => {
            let _ = err.write_all(text.as_bytes());
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    ExitCode::from(code as u8)
}
