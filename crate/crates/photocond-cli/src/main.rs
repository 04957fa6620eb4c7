//! Command-line front end: intensity sweeps that regenerate the reference
//! curves, single-point evaluations and the validation suite.
//!
//! Exit codes: 0 success, 1 configuration error, 2 validation failure,
//! 3 numeric range error.

mod sweep;
mod validate;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use photocond::add::{self, PdcParams};
use photocond::detectors::DetectorModel;
use photocond::error::Error;
use photocond::outcome::OutcomeRecord;
use photocond::states::{DistributionRecord, FieldStateSpec};
use photocond::subtract::{self, BeamSplitterParams};

use sweep::{Model, OutputFormat, ProcessKind, StateTemplate, SweepConfig};

#[derive(Parser)]
#[command(
    name = "photocond",
    about = "Conditional photon subtraction and addition statistics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the beam intensity and tabulate probabilities and moments.
    Sweep(SweepArgs),
    /// Evaluate a single parameter point and print the outcome as JSON.
    Point(PointArgs),
    /// Run the invariant suite and emit a JSON report.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Figure preset: fig1, fig2, fig3 or fig4.
    #[arg(long)]
    preset: Option<String>,
    /// Process to sweep: subtract, add or sequential.
    #[arg(long)]
    process: Option<String>,
    /// Input state: coherent:N0, thermal:N0, mixed:NC,NT (the mean is
    /// rescaled along the grid, a mixed spec fixes the coherent fraction).
    #[arg(long)]
    state: Option<String>,
    /// Detector: r:K (resolving) or n:K (nonresolving); the A/E model rows
    /// and sequential detection use the threshold K.
    #[arg(long)]
    detector: Option<String>,
    /// Beam-splitter reflectivity (subtract/sequential).
    #[arg(long)]
    reflectivity: Option<f64>,
    /// Down-conversion gain (add).
    #[arg(long)]
    gain: Option<f64>,
    /// Comma-separated models: exact,A,E.
    #[arg(long)]
    models: Option<String>,
    /// Mean photon number grid MIN,MAX,POINTS (log-spaced).
    #[arg(long)]
    grid: Option<String>,
    /// Output format: csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// State-construction tolerance.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct PointArgs {
    /// Process: subtract, add or sequential.
    #[arg(long)]
    process: String,
    /// Input state: coherent:N0, thermal:N0, mixed:NC,NT or fock:M.
    #[arg(long)]
    state: String,
    /// Detector r:K or n:K; the A/E models and sequential detection only
    /// use the threshold K.
    #[arg(long)]
    detector: String,
    #[arg(long)]
    reflectivity: Option<f64>,
    #[arg(long)]
    gain: Option<f64>,
    /// Model to evaluate: exact, A or E.
    #[arg(long, default_value = "exact")]
    model: String,
    #[arg(long, default_value_t = photocond::DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Tolerance profile: default, or strict (10x tighter roundoff bounds).
    #[arg(long, default_value = "default")]
    profile: String,
    /// Output path for the JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Sweep(args) => run_sweep_command(args),
        Command::Point(args) => run_point_command(args),
        Command::Validate(args) => run_validate_command(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Range(_) | Error::TruncationLeakage { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn build_sweep_config(args: &SweepArgs) -> Result<SweepConfig, Error> {
    let mut cfg = match &args.preset {
        Some(name) => {
            if args.process.is_some() || args.state.is_some() || args.detector.is_some() {
                return Err(Error::Domain(
                    "a preset fixes process, state and detector; only --grid, --format, --out and --epsilon may be overridden".into(),
                ));
            }
            sweep::preset(name)?
        }
        None => {
            let process = ProcessKind::parse(
                args.process
                    .as_deref()
                    .ok_or_else(|| Error::Domain("--process is required without a preset".into()))?,
            )?;
            let spec: FieldStateSpec = args
                .state
                .as_deref()
                .ok_or_else(|| Error::Domain("--state is required without a preset".into()))?
                .parse()?;
            let detector: DetectorModel = args
                .detector
                .as_deref()
                .unwrap_or("n:1")
                .parse()?;
            let strength = match process {
                ProcessKind::Add => args
                    .gain
                    .ok_or_else(|| Error::Domain("--gain is required for addition sweeps".into()))?,
                _ => args.reflectivity.ok_or_else(|| {
                    Error::Domain("--reflectivity is required for subtraction sweeps".into())
                })?,
            };
            let models = match &args.models {
                Some(list) => Model::parse_list(list)?,
                None => vec![Model::Exact, Model::A, Model::E],
            };
            if process == ProcessKind::Sequential && models != vec![Model::Exact] {
                return Err(Error::Domain(
                    "sequential sweeps evaluate the exact composed map; use --models exact".into(),
                ));
            }
            let mut cfg = SweepConfig {
                process,
                state: StateTemplate::from_spec(&spec)?,
                detector_k: detector.k(),
                strength,
                grid: Vec::new(),
                models,
                epsilon: photocond::DEFAULT_EPSILON,
                compare_instantaneous: false,
            };
            cfg.grid = sweep::default_grid(cfg.intensity_scale()?);
            cfg
        }
    };
    if let Some(grid) = &args.grid {
        let parts: Vec<&str> = grid.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Domain("--grid needs MIN,MAX,POINTS".into()));
        }
        let min: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Domain(format!("bad grid minimum '{}'", parts[0])))?;
        let max: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Domain(format!("bad grid maximum '{}'", parts[1])))?;
        let points: usize = parts[2]
            .parse()
            .map_err(|_| Error::Domain(format!("bad grid point count '{}'", parts[2])))?;
        if !(min > 0.0 && max > min && points >= 2) {
            return Err(Error::Domain(
                "grid needs 0 < MIN < MAX and at least 2 points".into(),
            ));
        }
        cfg.grid = sweep::log_grid(min, max, points);
    }
    if let Some(epsilon) = args.epsilon {
        cfg.epsilon = epsilon;
    }
    Ok(cfg)
}

fn run_sweep_command(args: SweepArgs) -> Result<ExitCode, Error> {
    let format = OutputFormat::parse(&args.format)?;
    let cfg = build_sweep_config(&args)?;
    let rows = sweep::run_sweep(&cfg)?;
    let body = match format {
        OutputFormat::Csv => sweep::rows_to_csv(&rows),
        OutputFormat::Json => sweep::rows_to_json(&rows),
    };
    write_output(args.out.as_deref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

fn run_point_command(args: PointArgs) -> Result<ExitCode, Error> {
    let process = ProcessKind::parse(&args.process)?;
    let spec: FieldStateSpec = args.state.parse()?;
    let detector: DetectorModel = args.detector.parse()?;
    let dist = spec.build(args.epsilon)?;
    let n0 = spec.total_mean();

    let (strength_key, strength, scale) = match process {
        ProcessKind::Add => {
            let gain = args
                .gain
                .ok_or_else(|| Error::Domain("--gain is required for addition".into()))?;
            let pdc = PdcParams::from_gain(gain)?;
            ("gain", gain, pdc.r())
        }
        _ => {
            let r = args.reflectivity.ok_or_else(|| {
                Error::Domain("--reflectivity is required for subtraction".into())
            })?;
            ("reflectivity", r, r)
        }
    };

    let record: Result<OutcomeRecord, Error> = match (process, args.model.as_str()) {
        (ProcessKind::Subtract, "exact") => {
            let bs = BeamSplitterParams::from_reflectivity(strength)?;
            subtract::subtract_exact(&dist, &bs, &detector)
        }
        (ProcessKind::Subtract, "A") => {
            let bs = BeamSplitterParams::from_reflectivity(strength)?;
            subtract::subtract_model_a(&dist, &bs, detector.k())
        }
        (ProcessKind::Subtract, "E") => subtract::subtract_model_e(&dist, detector.k()),
        (ProcessKind::Sequential, "exact") => {
            let bs = BeamSplitterParams::from_reflectivity(strength)?;
            subtract::subtract_sequential(&dist, &bs, detector.k())
        }
        (ProcessKind::Add, "exact") => {
            let pdc = PdcParams::from_gain(strength)?;
            add::add_exact(&dist, &pdc, &detector)
        }
        (ProcessKind::Add, "A") => {
            let pdc = PdcParams::from_gain(strength)?;
            add::add_model_a(&dist, &pdc, detector.k())
        }
        (ProcessKind::Add, "E") => add::add_model_e(&dist, detector.k()),
        (_, other) => Err(Error::Domain(format!(
            "model '{other}' is not available for this process"
        ))),
    };

    let output = match record {
        Ok(record) => {
            let posterior = DistributionRecord::new(
                "posterior",
                serde_json::json!({ "of": spec.kind_name(), "params": spec.params_json() }),
                record.posterior(),
            );
            serde_json::json!({
                "process": args.process,
                "model": args.model,
                "detector": detector.to_string(),
                "state": { "kind": spec.kind_name(), "params": spec.params_json() },
                strength_key: strength,
                "n0": n0,
                "n0_times_R_or_r": n0 * scale,
                "probability": record.probability(),
                "mean_n": record.mean(),
                "second_factorial": record.second_factorial(),
                "posterior": posterior,
            })
        }
        Err(Error::ImpossibleOutcome(detail)) => serde_json::json!({
            "process": args.process,
            "model": args.model,
            "detector": detector.to_string(),
            "state": { "kind": spec.kind_name(), "params": spec.params_json() },
            strength_key: strength,
            "n0": n0,
            "n0_times_R_or_r": n0 * scale,
            "probability": 0.0,
            "mean_n": serde_json::Value::Null,
            "second_factorial": serde_json::Value::Null,
            "posterior": serde_json::Value::Null,
            "note": detail,
        }),
        Err(other) => return Err(other),
    };
    println!("{}", serde_json::to_string_pretty(&output).expect("json"));
    Ok(ExitCode::SUCCESS)
}

fn run_validate_command(args: ValidateArgs) -> Result<ExitCode, Error> {
    let profile = validate::Profile::parse(&args.profile)?;
    let report = validate::run_validate(profile);
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    write_output(args.out.as_deref(), &body)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn write_output(path: Option<&std::path::Path>, body: &str) -> Result<(), Error> {
    match path {
        Some(path) => fs::write(path, body)
            .map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
