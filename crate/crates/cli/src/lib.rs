//! Command layer of the `bellsim` binary.
//!
//! Three commands: `run` simulates a scenario file, `bound` evaluates the
//! lower bound on the speed of quantum information, `before-before` checks
//! the before-before predicate for a moving trigger device.
//!
//! Exit codes: 0 success, 1 invalid input, 2 insufficient statistics.

pub mod output;
pub mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bellsim_core::engine::{run, summarize, ModelSpec, Report, ResultSet};
use bellsim_core::lhv::LhvModel;
use bellsim_core::models::StationGeometry;
use bellsim_core::spacetime::{
    balanced_lab_offset, before_before_margins, divergent_window, required_relative_speed,
    vqi_bound, vqi_bound_sweep, BoundInput, Frame, SpacetimeEvent, Vec3, C,
};
use bellsim_core::stats::SettingPair;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::output::{sci, to_json};
use crate::scenario::ScenarioFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_STATISTICS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bellsim", version, about = "Bell tests with moving devices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario file and print the summary.
    Run(RunArgs),
    /// Lower bound on the speed of quantum information, in units of c.
    Bound(BoundArgs),
    /// Before-before predicate for a station whose trigger device moves.
    BeforeBefore(BeforeBeforeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long = "length-m")]
    pub length_m: f64,
    #[arg(long = "jitter-s")]
    pub jitter_s: f64,
    /// Candidate frame speed over c.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Angle between the frame velocity and the station axis, radians.
    #[arg(long, conflicts_with = "rho_sweep", allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Sweep ρ over [0, π] with this many samples.
    #[arg(long = "rho-sweep")]
    pub rho_sweep: Option<usize>,
    /// Defaults to text for a single ρ and csv for a sweep.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BeforeBeforeArgs {
    #[arg(long = "length-m")]
    pub length_m: Option<f64>,
    /// Speed of station B's trigger device along the station axis.
    #[arg(long = "speed-mps", allow_hyphen_values = true)]
    pub speed_mps: Option<f64>,
    #[arg(long = "alignment-m")]
    pub alignment_m: Option<f64>,
    /// Take the full geometry from a scenario file instead.
    #[arg(long, conflicts_with_all = ["length_m", "speed_mps", "alignment_m"])]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bellsim_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(bellsim_core::Error::InsufficientStatistics { .. }) => EXIT_STATISTICS,
            _ => EXIT_INPUT,
        }
    }
}

/// Runs a parsed command line, writing results to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Bound(a) => cmd_bound(a, out, err),
        Command::BeforeBefore(a) => cmd_before_before(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioFile::parse(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[derive(Serialize)]
struct RunOutput<'a> {
    model: &'static str,
    seed: u64,
    #[serde(flatten)]
    report: &'a Report,
}

fn model_name(model: &ModelSpec) -> &'static str {
    match model {
        ModelSpec::Collapse(m) => m.name(),
        ModelSpec::Lhv(LhvModel::DeterministicSign) => "lhv_deterministic_sign",
        ModelSpec::Lhv(LhvModel::DetectionLoophole { .. }) => "lhv_detection_loophole",
    }
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut file = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(trials) = args.trials {
        file.trials = trials;
    }
    let scenario = file.to_scenario()?;
    let (results, failure): (ResultSet, Option<CliError>) = match run(&scenario) {
        Ok(r) => (r, None),
        Err(bellsim_core::Error::InsufficientStatistics {
            pair,
            coincidences,
            required,
            results: Some(r),
        }) => (
            *r,
            Some(CliError::Core(bellsim_core::Error::InsufficientStatistics {
                pair,
                coincidences,
                required,
                results: None,
            })),
        ),
        Err(e) => return Err(e.into()),
    };
    let report = summarize(&results);
    let text = match args.format {
        Format::Json => to_json(&RunOutput {
            model: model_name(&scenario.model),
            seed: scenario.seed,
            report: &report,
        }),
        Format::Csv => run_csv(&results, &report)?,
        Format::Text => report.to_string(),
    };
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?,
        None => out.write_all(text.as_bytes())?,
    }
    if failure.is_some() {
        writeln!(err, "warning: the report above marks undersampled setting pairs")?;
    }
    failure.map_or(Ok(()), Err)
}

fn run_csv(results: &ResultSet, report: &Report) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    let opt = |x: Option<f64>| x.map_or_else(String::new, sci);
    w.write_record(["pair", "trials", "coincidences", "n_pp", "n_pm", "n_mp", "n_mm", "e", "stderr"])
        .map_err(csv_error)?;
    for (pair, row) in SettingPair::ALL.iter().zip(&report.pairs) {
        let c = results.coincidences[pair.index()];
        w.write_record([
            row.pair.clone(),
            row.trials.to_string(),
            row.coincidences.to_string(),
            c.pp.to_string(),
            c.pm.to_string(),
            c.mp.to_string(),
            c.mm.to_string(),
            opt(row.e),
            opt(row.stderr),
        ])
        .map_err(csv_error)?;
    }
    let n = results.coincidences_total().to_string();
    w.write_record(["S", &report.trials.to_string(), &n, "", "", "", "", &opt(report.s), &opt(report.stderr)])
        .map_err(csv_error)?;
    finish_csv(w)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Usage(format!("csv output failed: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv output failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct BoundOutput {
    length_m: f64,
    jitter_s: f64,
    beta: f64,
    rho_rad: f64,
    bound_c: f64,
    divergent: bool,
}

#[derive(Serialize)]
struct SweepPointOutput {
    rho_rad: f64,
    bound_c: f64,
    divergent: bool,
}

#[derive(Serialize)]
struct SweepOutput {
    length_m: f64,
    jitter_s: f64,
    beta: f64,
    samples: usize,
    max_finite_bound_c: Option<f64>,
    max_finite_rho_rad: Option<f64>,
    divergent_samples: usize,
    divergent_window_rad: Option<[f64; 2]>,
    points: Vec<SweepPointOutput>,
}

fn cmd_bound(args: &BoundArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if !(args.length_m > 0.0) || !args.length_m.is_finite() {
        return Err(CliError::Usage(format!("--length-m must be positive, got {}", args.length_m)));
    }
    if !(args.jitter_s > 0.0) || !args.jitter_s.is_finite() {
        return Err(CliError::Usage(format!("--jitter-s must be positive, got {}", args.jitter_s)));
    }
    if !(0.0..1.0).contains(&args.beta) {
        return Err(CliError::Usage(format!("--beta must lie in [0, 1), got {}", args.beta)));
    }
    match args.rho_sweep {
        None => {
            let rho = args.rho.unwrap_or(0.0);
            let input = BoundInput {
                length: args.length_m,
                jitter: args.jitter_s,
                beta: args.beta,
                rho,
            };
            let b = vqi_bound(&input)?;
            let rec = BoundOutput {
                length_m: args.length_m,
                jitter_s: args.jitter_s,
                beta: args.beta,
                rho_rad: rho,
                bound_c: b.bound,
                divergent: b.divergent,
            };
            let text = match args.format.unwrap_or(Format::Text) {
                Format::Json => to_json(&rec),
                Format::Csv => {
                    let mut w = sweep_writer()?;
                    write_point(&mut w, rho, b.bound, b.divergent)?;
                    finish_csv(w)?
                }
                Format::Text => {
                    if b.divergent {
                        "v_QI/c >= inf (divergent: the frame can make both events simultaneous)\n".into()
                    } else {
                        format!("v_QI/c >= {}\n", sci(b.bound))
                    }
                }
            };
            out.write_all(text.as_bytes())?;
        }
        Some(samples) => {
            let points = vqi_bound_sweep(args.length_m, args.jitter_s, args.beta, samples)?;
            let finite_max = points
                .iter()
                .filter(|p| !p.divergent)
                .fold(None::<(f64, f64)>, |acc, p| match acc {
                    Some((b, _)) if b >= p.bound => acc,
                    _ => Some((p.bound, p.rho)),
                });
            let divergent_samples = points.iter().filter(|p| p.divergent).count();
            let window = divergent_window(args.length_m, args.jitter_s, args.beta);
            let summary = SweepOutput {
                length_m: args.length_m,
                jitter_s: args.jitter_s,
                beta: args.beta,
                samples,
                max_finite_bound_c: finite_max.map(|m| m.0),
                max_finite_rho_rad: finite_max.map(|m| m.1),
                divergent_samples,
                divergent_window_rad: window.map(|(lo, hi)| [lo, hi]),
                points: points
                    .iter()
                    .map(|p| SweepPointOutput {
                        rho_rad: p.rho,
                        bound_c: p.bound,
                        divergent: p.divergent,
                    })
                    .collect(),
            };
            let mut notes = String::new();
            if let Some((b, rho)) = finite_max {
                notes.push_str(&format!("max finite bound: {} c at rho = {} rad\n", sci(b), sci(rho)));
            }
            notes.push_str(&format!("divergent samples: {divergent_samples}\n"));
            match window {
                Some((lo, hi)) => {
                    notes.push_str(&format!("divergent window: [{}, {}] rad\n", sci(lo), sci(hi)))
                }
                None => notes.push_str("divergent window: none\n"),
            }
            match args.format.unwrap_or(Format::Csv) {
                Format::Json => out.write_all(to_json(&summary).as_bytes())?,
                Format::Csv => {
                    let mut w = sweep_writer()?;
                    for p in &points {
                        write_point(&mut w, p.rho, p.bound, p.divergent)?;
                    }
                    out.write_all(finish_csv(w)?.as_bytes())?;
                    err.write_all(notes.as_bytes())?;
                }
                Format::Text => out.write_all(notes.as_bytes())?,
            }
        }
    }
    Ok(())
}

fn sweep_writer() -> Result<csv::Writer<Vec<u8>>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(["rho_rad", "bound_c", "divergent"]).map_err(csv_error)?;
    Ok(w)
}

fn write_point(w: &mut csv::Writer<Vec<u8>>, rho: f64, bound: f64, divergent: bool) -> Result<(), CliError> {
    w.write_record([sci(rho), sci(bound), divergent.to_string()]).map_err(csv_error)
}

#[derive(Serialize)]
struct BeforeBeforeOutput {
    before_before: bool,
    margin_a_s: f64,
    margin_b_s: f64,
    uncertainty_s: f64,
    length_m: f64,
    required_relative_speed_mps: f64,
    speed_threshold_mps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    choice_devices_before_before: Option<bool>,
}

fn cmd_before_before(args: &BeforeBeforeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (a, b, length, uncertainty, choice) = match &args.scenario {
        Some(path) => {
            let file = load_scenario(path)?;
            let [a, b] = file.geometry.stations()?;
            let choice = before_before_margins(&a.choice_event, &b.choice_event, &a.choice_frame, &b.choice_frame)
                .holds(file.geometry.uncertainty());
            (a, b, file.geometry.separation_m, file.geometry.uncertainty(), Some(choice))
        }
        None => {
            let need = |x: Option<f64>, flag: &str| {
                x.ok_or_else(|| CliError::Usage(format!("{flag} is required without --scenario")))
            };
            let length = need(args.length_m, "--length-m")?;
            let speed = need(args.speed_mps, "--speed-mps")?;
            let alignment = need(args.alignment_m, "--alignment-m")?;
            if !(length > 0.0) || !length.is_finite() {
                return Err(CliError::Usage(format!("--length-m must be positive, got {length}")));
            }
            if !(alignment >= 0.0) || !alignment.is_finite() {
                return Err(CliError::Usage(format!("--alignment-m must be ≥ 0, got {alignment}")));
            }
            let (a, b) = wheel_geometry(length, speed, alignment / C)?;
            (a, b, length, alignment / C, None)
        }
    };
    let m = before_before_margins(&a.trigger_event, &b.trigger_event, &a.trigger_frame, &b.trigger_frame);
    let required = required_relative_speed(length, uncertainty)?;
    let rec = BeforeBeforeOutput {
        before_before: m.holds(uncertainty),
        margin_a_s: m.a_first_in_frame_a,
        margin_b_s: m.b_first_in_frame_b,
        uncertainty_s: uncertainty,
        length_m: length,
        required_relative_speed_mps: required,
        speed_threshold_mps: 2.0 * required,
        choice_devices_before_before: choice,
    };
    let text = match args.format {
        Format::Json => to_json(&rec),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
            w.write_record(["before_before", "margin_a_s", "margin_b_s", "uncertainty_s", "required_relative_speed_mps"])
                .map_err(csv_error)?;
            w.write_record([
                rec.before_before.to_string(),
                sci(rec.margin_a_s),
                sci(rec.margin_b_s),
                sci(rec.uncertainty_s),
                sci(rec.required_relative_speed_mps),
            ])
            .map_err(csv_error)?;
            finish_csv(w)?
        }
        Format::Text => {
            let mut t = format!(
                "before-before: {}\n\
                 margin A first in A's frame: {} s\n\
                 margin B first in B's frame: {} s\n\
                 timing uncertainty: {} s\n\
                 required relative speed: {} m/s\n\
                 speed threshold with balanced timing: {} m/s\n",
                if rec.before_before { "TRUE" } else { "FALSE" },
                sci(rec.margin_a_s),
                sci(rec.margin_b_s),
                sci(rec.uncertainty_s),
                sci(rec.required_relative_speed_mps),
                sci(rec.speed_threshold_mps),
            );
            if let Some(c) = choice {
                t.push_str(&format!("choice devices before-before: {}\n", if c { "TRUE" } else { "FALSE" }));
            }
            t
        }
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Station A at rest at the origin; station B at `length` with its trigger
/// device moving along the axis, timed so both margins are equal.
pub fn wheel_geometry(
    length: f64,
    speed: f64,
    uncertainty: f64,
) -> Result<(StationGeometry, StationGeometry), CliError> {
    let fb = Frame::along_x(speed)?;
    let d = balanced_lab_offset(&Vec3::new(length, 0.0, 0.0), &Frame::lab(), &fb);
    let ea = SpacetimeEvent::on_axis(0.0, 0.0);
    let eb = SpacetimeEvent::on_axis(d, length);
    Ok((
        StationGeometry::new(ea, ea, Frame::lab(), Frame::lab(), uncertainty)?,
        StationGeometry::new(eb, eb, Frame::lab(), fb, uncertainty)?,
    ))
}
