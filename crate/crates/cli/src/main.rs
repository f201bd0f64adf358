//! `pv-sdm`: extract, simulate, validate and compare single-diode models.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Results go to
//! stdout, diagnostics to stderr.

mod params;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pv_sdm::interp::uniform_grid;
use pv_sdm::io::{
    data_dir, load_benchmarks, load_measured_curve, load_spec, render_plot, write_report,
    ExtractionReport, PlotKind, ReportDocument, Series, SeriesStyle, ValidationReport,
};
use pv_sdm::model::open_circuit_voltage;
use pv_sdm::solver::ExtractError;
use pv_sdm::validation::{rmse, simulate_curve};
use pv_sdm::{
    extract, validate_against, DatasheetSpec, ExtractionResult, FifthEquationVariant,
    MeasuredCurve, ModelParams, OperatingConditions, SolverOptions,
};

use params::{load_params, ModelKind};

const MODEL_CURVE_POINTS: usize = 200;

/// Bad invocation that clap cannot catch by itself; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "pv-sdm",
    version,
    about = "Single-diode photovoltaic model extraction and validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the five single-diode parameters from datasheet key points.
    Extract(ExtractArgs),
    /// Simulate an I-V curve for a parameter set.
    Simulate(SimulateArgs),
    /// Score one parameter set against a measured curve.
    Validate(ValidateArgs),
    /// Rank published parameter sets against a measured curve.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Proposed,
    SlopeSc,
    SlopeOc,
    Area,
}

#[derive(Args)]
struct Stamp {
    /// Write this RFC 3339 timestamp instead of the current time.
    #[arg(long, value_name = "RFC3339")]
    fixed_timestamp: Option<String>,
}

impl Stamp {
    fn resolve(&self) -> Result<String> {
        match &self.fixed_timestamp {
            Some(ts) => {
                chrono::DateTime::parse_from_rfc3339(ts)
                    .map_err(|e| anyhow!(UsageError(format!("--fixed-timestamp '{ts}': {e}"))))?;
                Ok(ts.clone())
            }
            None => Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Datasheet key points (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "proposed")]
    variant: Variant,
    /// Measured curve (CSV); selects among starts by RMSE and is required by `area`.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Directory for I-V, P-V and error plots (SVG).
    #[arg(long)]
    plots: Option<PathBuf>,
    #[command(flatten)]
    stamp: Stamp,
}

#[derive(Args)]
struct SimulateArgs {
    /// Inline `key=value,...` list, a TOML file or a JSON report.
    #[arg(long)]
    params: String,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Take cell count and temperature from a datasheet spec.
    #[arg(long, required_unless_present = "curve")]
    spec: Option<PathBuf>,
    /// Number of uniform grid points on [0, Voc].
    #[arg(long, conflicts_with = "curve", value_parser = clap::value_parser!(u32).range(1..))]
    grid: Option<u32>,
    /// Simulate at the voltages of a measured curve.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Output CSV with voltage, current and power columns.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    params: String,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    curve: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    stamp: Stamp,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Benchmark table (TOML); entries for other sources are skipped.
    #[arg(long, default_value = "benchmarks.toml")]
    benchmarks: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Directory for the overlaid absolute-error plot (SVG).
    #[arg(long)]
    plots: Option<PathBuf>,
    #[command(flatten)]
    stamp: Stamp,
}

/// Relative paths that do not exist are looked up in the data directory.
fn input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let vendored = data_dir().join(path);
    if vendored.exists() {
        vendored
    } else {
        path.to_path_buf()
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn curve_points(curve: &MeasuredCurve) -> Vec<(f64, f64)> {
    curve
        .points
        .iter()
        .map(|p| (p.voltage, p.current))
        .collect()
}

/// Model I-V samples spanning [0, Voc] and the measured range, if any.
fn model_curve(
    params: &ModelParams,
    cond: &OperatingConditions,
    curve: Option<&MeasuredCurve>,
) -> Result<Vec<(f64, f64)>> {
    let voc = open_circuit_voltage(params, cond)?;
    let (mut lo, mut hi) = (0.0_f64, voc);
    if let Some(c) = curve {
        let v = c.voltages();
        lo = lo.min(v[0]);
        hi = hi.max(v[v.len() - 1]);
    }
    let grid = uniform_grid(lo, hi, MODEL_CURVE_POINTS);
    let current = simulate_curve(params, cond, &grid)?;
    Ok(grid.into_iter().zip(current).collect())
}

fn power(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points.iter().map(|&(v, i)| (v, v * i)).collect()
}

fn write_extract_plots(
    dir: &Path,
    spec: &DatasheetSpec,
    best: &ExtractionResult,
    curve: Option<&MeasuredCurve>,
    abs_errors: Option<&[f64]>,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let params = ModelParams::Single(best.params);
    let model = model_curve(&params, &spec.conditions(), curve)?;
    let reference = match curve {
        Some(c) => Series::new(
            format!("measured ({})", c.source_label),
            SeriesStyle::Markers,
            curve_points(c),
        ),
        None => Series::new(
            "datasheet points",
            SeriesStyle::Markers,
            vec![(0.0, spec.i_sc), (spec.v_mpp, spec.i_mpp), (spec.v_oc, 0.0)],
        ),
    };
    let label = format!("model ({})", best.variant.as_str());
    let mut written = Vec::new();

    let iv = dir.join("iv.svg");
    render_plot(
        &[
            reference.clone(),
            Series::new(label.clone(), SeriesStyle::Line, model.clone()),
        ],
        PlotKind::Iv,
        &iv,
    )?;
    written.push(iv);

    let pv = dir.join("pv.svg");
    let measured_power = Series::new(
        reference.label.clone(),
        SeriesStyle::Markers,
        power(&reference.points),
    );
    render_plot(
        &[
            measured_power,
            Series::new(label.clone(), SeriesStyle::Line, power(&model)),
        ],
        PlotKind::Pv,
        &pv,
    )?;
    written.push(pv);

    if let (Some(c), Some(errors)) = (curve, abs_errors) {
        let error = dir.join("error.svg");
        let pts = c
            .voltages()
            .into_iter()
            .zip(errors.iter().copied())
            .collect();
        render_plot(
            &[Series::new(label, SeriesStyle::Line, pts)],
            PlotKind::Error,
            &error,
        )?;
        written.push(error);
    }
    Ok(written)
}

fn print_result(best: &ExtractionResult) {
    let p = &best.params;
    let condition = best
        .jacobian_condition
        .map_or("inf".to_string(), |c| format!("{c:.3e}"));
    println!("variant        {}", best.variant.as_str());
    println!("seed n         {:.2}", best.n_seed);
    println!(
        "converged      {} ({} iterations)",
        if best.converged { "yes" } else { "no" },
        best.iterations
    );
    println!("i_ph     [A]   {:.6e}", p.i_ph);
    println!("i_s      [A]   {:.6e}", p.i_s);
    println!("n        [-]   {:.6}", p.n);
    println!("r_s      [ohm] {:.6e}", p.r_s);
    println!("r_sh     [ohm] {:.6e}", p.r_sh);
    println!("residual norm  {:.3e}", best.residual_norm);
    println!(
        "jacobian rank  {} (condition {condition})",
        best.jacobian_rank
    );
    if let Some(r) = best.rmse {
        println!("rmse     [A]   {r:.6e}");
    }
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitCode> {
    if args.variant == Variant::Area && args.curve.is_none() {
        bail!(UsageError("--variant area requires --curve".into()));
    }
    let timestamp = args.stamp.resolve()?;
    let spec = load_spec(input(&args.spec))?;
    let curve = args
        .curve
        .as_deref()
        .map(|p| load_measured_curve(input(p)))
        .transpose()?;
    let variant = match args.variant {
        Variant::Proposed => FifthEquationVariant::ProposedDpdi,
        Variant::SlopeSc => FifthEquationVariant::SlopeSc,
        Variant::SlopeOc => FifthEquationVariant::SlopeOc,
        Variant::Area => FifthEquationVariant::area(curve.clone().expect("checked above")),
    };

    let mut report = ReportDocument::new(timestamp);
    report.datasets.push(args.spec.display().to_string());
    if let Some(c) = &curve {
        report.datasets.push(c.source_label.clone());
    }

    match extract(&spec, variant, &SolverOptions::default(), curve.as_ref()) {
        Ok((best, starts)) => {
            let fit = curve
                .as_ref()
                .map(|c| validate_against(&best.params, c))
                .transpose()?;
            print_result(&best);
            if let Some(dir) = &args.plots {
                let errors = fit.as_ref().map(|f| f.absolute_errors.as_slice());
                for path in write_extract_plots(dir, &spec, &best, curve.as_ref(), errors)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            report.extractions.push(ExtractionReport {
                spec,
                selected: Some(best),
                starts,
                fit,
            });
            write_report(&report, &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(ExtractError::AllStartsFailed { starts }) => {
            let err = ExtractError::AllStartsFailed {
                starts: starts.clone(),
            };
            report.extractions.push(ExtractionReport {
                spec,
                selected: None,
                starts,
                fit: None,
            });
            write_report(&report, &args.out)?;
            eprintln!("error: {err}");
            eprintln!("wrote {}", args.out.display());
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let params = load_params(&args.params, args.model)?;
    let curve = args
        .curve
        .as_deref()
        .map(|p| load_measured_curve(input(p)))
        .transpose()?;
    let cond = match (&curve, &args.spec) {
        (Some(c), _) => c.conditions(),
        (None, Some(path)) => load_spec(input(path))?.conditions(),
        (None, None) => unreachable!("clap requires --spec or --curve"),
    };
    let voltages = match &curve {
        Some(c) => c.voltages(),
        None => {
            let voc = open_circuit_voltage(&params, &cond)?;
            uniform_grid(0.0, voc, args.grid.unwrap_or(100) as usize)
        }
    };
    let currents = simulate_curve(&params, &cond, &voltages)?;

    let mut text = String::from("voltage_V,current_A,power_W\n");
    for (v, i) in voltages.iter().zip(&currents) {
        text.push_str(&format!("{v},{i},{}\n", v * i));
    }
    fs::write(&args.out, text).with_context(|| format!("cannot write {}", args.out.display()))?;

    println!("rows           {}", voltages.len());
    if let Some(c) = &curve {
        println!("rmse     [A]   {:.6e}", rmse(&c.currents(), &currents)?);
    }
    eprintln!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let timestamp = args.stamp.resolve()?;
    let params = load_params(&args.params, args.model)?;
    let curve = load_measured_curve(input(&args.curve))?;
    let fit = validate_against(&params, &curve)?;

    println!(
        "{:>12} {:>14} {:>14} {:>12}",
        "voltage_V", "measured_A", "model_A", "abs_error_A"
    );
    for ((p, sim), err) in curve
        .points
        .iter()
        .zip(&fit.simulated)
        .zip(&fit.absolute_errors)
    {
        println!(
            "{:>12.4} {:>14.6e} {:>14.6e} {:>12.4e}",
            p.voltage, p.current, sim, err
        );
    }
    println!("rmse     [A]   {:.6e}", fit.rmse);

    let mut report = ReportDocument::new(timestamp);
    report.datasets.push(curve.source_label.clone());
    report.validation = Some(ValidationReport {
        curve_label: curve.source_label,
        params,
        fit,
    });
    write_report(&report, &args.report)?;
    eprintln!("wrote {}", args.report.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let timestamp = args.stamp.resolve()?;
    let curve = load_measured_curve(input(&args.curve))?;
    let bench_path = input(&args.benchmarks);
    let all = load_benchmarks(&bench_path)?;
    let total = all.len();
    let entries: Vec<_> = all
        .into_iter()
        .filter(|e| e.source == curve.source_label)
        .collect();
    if entries.is_empty() {
        bail!(
            "{}: none of {total} entries has source '{}'",
            bench_path.display(),
            curve.source_label
        );
    }
    let table = pv_sdm::compare_benchmarks(&curve, &entries);

    println!(
        "{:>4}  {:<14} {:<7} {:>12} {:>12} {:>10}",
        "rank", "label", "model", "rmse_A", "reported_A", "deviation"
    );
    for (k, row) in table.rows.iter().enumerate() {
        match (row.rmse, row.relative_deviation) {
            (Some(r), Some(d)) => println!(
                "{:>4}  {:<14} {:<7} {:>12.4e} {:>12.4e} {:>+9.1}%",
                k + 1,
                row.label,
                row.model_kind,
                r,
                row.reported_rmse,
                100.0 * d
            ),
            _ => println!(
                "{:>4}  {:<14} {:<7} {:>12} {:>12.4e}  {}",
                k + 1,
                row.label,
                row.model_kind,
                "failed",
                row.reported_rmse,
                row.failure.as_deref().unwrap_or("")
            ),
        }
    }
    println!(
        "published ordering reproduced: {}",
        if table.reproduces_published_ranking() {
            "yes"
        } else {
            "no"
        }
    );

    if let Some(dir) = &args.plots {
        ensure_dir(dir)?;
        let voltages = curve.voltages();
        let series: Vec<Series> = table
            .rows
            .iter()
            .filter(|r| r.rmse.is_some())
            .map(|r| {
                let pts = voltages
                    .iter()
                    .copied()
                    .zip(r.absolute_errors.iter().copied())
                    .collect();
                Series::new(r.label.clone(), SeriesStyle::Line, pts)
            })
            .collect();
        let path = dir.join("compare_error.svg");
        render_plot(&series, PlotKind::Error, &path)?;
        eprintln!("wrote {}", path.display());
    }

    let mut report = ReportDocument::new(timestamp);
    report.datasets = vec![
        curve.source_label.clone(),
        args.benchmarks.display().to_string(),
    ];
    report.benchmark_table = Some(table);
    write_report(&report, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Error chain joined by ": ", skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
