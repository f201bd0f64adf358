//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pv_sdm::io::{data_dir, load_benchmarks, load_measured_curve, load_spec, read_report};
use pv_sdm::model::{
    di_dv, dp_di, dp_dv, key_points, open_circuit_voltage, solve_current, solve_current_lambertw,
    OperatingConditions,
};
use pv_sdm::system::{residual_dpdi, residual_dpdv, residual_mpp, residual_oc, residual_sc};
use pv_sdm::{
    compare_benchmarks, extract, BenchmarkEntry, DatasheetSpec, FifthEquationVariant, ModelParams,
    SingleDiodeParams, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOURCES: [(&str, &str, &str); 2] = [
    ("RTC France", "rtc_france.spec", "rtc_france.csv"),
    ("PWP-201", "pwp201.spec", "pwp201.csv"),
];

const RMSE_REL_TOL: f64 = 0.10;
const EVALUATION_BUDGET: Duration = Duration::from_secs(5);
const PWP_RMSE_MAX: f64 = 5.0e-3;
const RTC_RMSE_MAX: f64 = 1.2e-3;
const EXTRACTION_BUDGET: Duration = Duration::from_secs(1);
const SUBSTITUTION_TOL: f64 = 5e-3;
const ROUND_TRIP_CASES: usize = 25;
const ROUND_TRIP_TIGHT: f64 = 1e-4;
const ROUND_TRIP_LOOSE: f64 = 1e-2;
const ROUND_TRIP_RESIDUAL: f64 = 1e-9;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const ORACLE_DRAWS: usize = 100;
const ORACLE_VOLTAGES: usize = 20;
const ORACLE_TOL: f64 = 1e-9;
const DERIVATIVE_POINTS: usize = 20;
const DERIVATIVE_TOL: f64 = 1e-6;
const CHAIN_RULE_TOL: f64 = 1e-12;
const SHAPE_GRID: usize = 200;
const STAMP: &str = "2024-01-01T00:00:00Z";

type Check = fn() -> Outcome;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn benchmarks() -> Vec<BenchmarkEntry> {
    load_benchmarks(data_dir().join("benchmarks.toml")).expect("vendored benchmarks")
}

fn proposed_params(source: &str) -> SingleDiodeParams {
    let entry = benchmarks()
        .into_iter()
        .find(|e| e.source == source && e.label == "Proposed")
        .expect("proposed row");
    match entry.params {
        ModelParams::Single(p) => p,
        ModelParams::Double(_) => panic!("proposed row must be single-diode"),
    }
}

fn spec_of(source: &str) -> DatasheetSpec {
    let (_, spec, _) = SOURCES.iter().find(|s| s.0 == source).unwrap();
    load_spec(data_dir().join(spec)).expect("vendored spec")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rmse_reproduction() -> Outcome {
    let start = Instant::now();
    let entries = benchmarks();
    let mut notes = Vec::new();
    let mut ok = true;
    for (source, _, csv) in SOURCES {
        let curve = load_measured_curve(data_dir().join(csv)).expect("vendored curve");
        let rows: Vec<BenchmarkEntry> = entries
            .iter()
            .filter(|e| e.source == source)
            .cloned()
            .collect();
        let table = compare_benchmarks(&curve, &rows);
        for row in &table.rows {
            match row.relative_deviation {
                Some(d) if d.abs() <= RMSE_REL_TOL => {}
                Some(d) => {
                    ok = false;
                    notes.push(format!("{source}/{} {:+.1}%", row.label, 100.0 * d));
                }
                None => {
                    ok = false;
                    notes.push(format!("{source}/{} failed", row.label));
                }
            }
        }
        if !table.reproduces_published_ranking() {
            ok = false;
            notes.push(format!(
                "{source} order {:?} != published {:?}",
                table.labels(),
                table.published_order()
            ));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > EVALUATION_BUDGET {
        ok = false;
        notes.push(format!("took {elapsed:?}"));
    }
    let detail = if notes.is_empty() {
        format!("10 rows within 10%, ordering reproduced, {elapsed:.2?}")
    } else {
        notes.join("; ")
    };
    outcome(ok, detail)
}

fn run_extract(
    spec: &str,
    curve: &str,
    out: &Path,
    plots: Option<&Path>,
) -> (bool, Duration, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pv-sdm"));
    cmd.args([
        "extract",
        "--variant",
        "proposed",
        "--fixed-timestamp",
        STAMP,
    ])
    .arg("--spec")
    .arg(data_dir().join(spec))
    .arg("--curve")
    .arg(data_dir().join(curve))
    .arg("--out")
    .arg(out);
    if let Some(dir) = plots {
        cmd.arg("--plots").arg(dir);
    }
    let start = Instant::now();
    let output = cmd.output().expect("spawn pv-sdm");
    let elapsed = start.elapsed();
    (
        output.status.success(),
        elapsed,
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn extraction_rmse() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut ok = true;
    let mut notes = Vec::new();
    let mut info = Vec::new();
    for ((source, spec, csv), limit) in SOURCES.iter().zip([RTC_RMSE_MAX, PWP_RMSE_MAX]) {
        let out = dir.path().join(format!("{spec}.json"));
        let (success, elapsed, stderr) = run_extract(spec, csv, &out, None);
        if !success {
            ok = false;
            notes.push(format!("{source}: exit failure: {}", stderr.trim()));
            continue;
        }
        let best = read_report(&out)
            .ok()
            .and_then(|mut r| r.extractions.pop())
            .and_then(|x| x.selected);
        let Some(best) = best else {
            ok = false;
            notes.push(format!("{source}: no selected result"));
            continue;
        };
        let rmse = best.rmse.unwrap_or(f64::INFINITY);
        ok &= rmse <= limit && elapsed <= EXTRACTION_BUDGET;
        notes.push(format!(
            "{source} rmse {rmse:.3e} (<= {limit:.1e}) in {elapsed:.2?}"
        ));

        let published = proposed_params(source);
        let worst = best
            .params
            .to_array()
            .iter()
            .zip(published.to_array())
            .map(|(a, b)| rel(*a, b))
            .fold(0.0, f64::max);
        info.push(format!(
            "{source} max parameter deviation {:.1}%",
            100.0 * worst
        ));
    }
    println!(
        "INFO  parameter agreement with published values: {}",
        info.join("; ")
    );
    outcome(ok, notes.join("; "))
}

fn residual_substitution() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (source, _, _) in SOURCES {
        let p = proposed_params(source);
        let spec = spec_of(source);
        let rows = [
            ("sc", residual_sc(&p, &spec)),
            ("oc", residual_oc(&p, &spec)),
            ("mpp", residual_mpp(&p, &spec)),
            ("dpdv", residual_dpdv(&p, &spec)),
            ("dpdi", residual_dpdi(&p, &spec)),
        ];
        let mut bad = Vec::new();
        for (name, r) in rows {
            match r {
                Ok(r) if r.abs() < SUBSTITUTION_TOL => {}
                Ok(r) => bad.push(format!("{name}={r:.3e}")),
                Err(e) => bad.push(format!("{name}: {e}")),
            }
        }
        if bad.is_empty() {
            notes.push(format!("{source} all < {SUBSTITUTION_TOL:.0e}"));
        } else {
            ok = false;
            notes.push(format!("{source} {}", bad.join(", ")));
        }
    }
    outcome(ok, notes.join("; "))
}

/// A physically plausible module: per-cell resistances scaled by the cell count.
fn random_params(rng: &mut ChaCha8Rng) -> (SingleDiodeParams, OperatingConditions) {
    let n_series = [1u32, 36, 60][rng.gen_range(0..3)];
    let temperature = rng.gen_range(285.0..335.0);
    let cells = n_series as f64;
    let p = SingleDiodeParams {
        i_ph: rng.gen_range(0.5..9.0),
        i_s: 10f64.powf(rng.gen_range(-10.0..-6.0)),
        n: rng.gen_range(1.0..1.8),
        r_s: cells * rng.gen_range(0.001..0.05),
        r_sh: cells * rng.gen_range(20.0..800.0),
    };
    (
        p,
        OperatingConditions::new(n_series, temperature).expect("conditions"),
    )
}

fn synthetic_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5d0);
    let mut cases = Vec::new();
    while cases.len() < ROUND_TRIP_CASES {
        let (p, cond) = random_params(&mut rng);
        if let Ok(spec) = key_points(&p, &cond) {
            if spec.validate().is_ok() {
                cases.push((p, spec));
            }
        }
    }
    let mut recovered = 0;
    let mut worst_tight: f64 = 0.0;
    let mut worst_loose: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut failures = 0;
    for (truth, spec) in &cases {
        match extract(
            spec,
            FifthEquationVariant::ProposedDpdi,
            &SolverOptions::default(),
            None,
        ) {
            Ok((best, _)) => {
                let b = &best.params;
                let tight = rel(b.i_ph, truth.i_ph)
                    .max(rel(b.n, truth.n))
                    .max(rel(b.r_s, truth.r_s));
                let loose = rel(b.i_s, truth.i_s).max(rel(b.r_sh, truth.r_sh));
                worst_tight = worst_tight.max(tight);
                worst_loose = worst_loose.max(loose);
                worst_residual = worst_residual.max(best.residual_norm);
                if tight <= ROUND_TRIP_TIGHT
                    && loose <= ROUND_TRIP_LOOSE
                    && best.residual_norm < ROUND_TRIP_RESIDUAL
                {
                    recovered += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    let ok = recovered == cases.len() && elapsed <= ROUND_TRIP_BUDGET;
    outcome(
        ok,
        format!(
            "{recovered}/{} recovered, {failures} failed; worst Iph/n/Rs {worst_tight:.2e}, Is/Rsh {worst_loose:.2e}, residual {worst_residual:.1e}; {elapsed:.2?}",
            cases.len()
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3b);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..ORACLE_DRAWS {
        let (p, cond) = random_params(&mut rng);
        let Ok(voc) = open_circuit_voltage(&p, &cond) else {
            errors += 1;
            continue;
        };
        for k in 0..ORACLE_VOLTAGES {
            let v = voc * k as f64 / ORACLE_VOLTAGES as f64;
            match (
                solve_current(&p, &cond, v),
                solve_current_lambertw(&p, &cond, v),
            ) {
                (Ok(a), Ok(b)) => worst = worst.max(rel(a, b)),
                _ => errors += 1,
            }
        }
    }
    outcome(
        errors == 0 && worst <= ORACLE_TOL,
        format!(
            "{} comparisons, worst relative difference {worst:.2e}, {errors} errors",
            ORACLE_DRAWS * ORACLE_VOLTAGES
        ),
    )
}

fn derivative_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_chain: f64 = 0.0;
    let mut errors = Vec::new();
    for (source, _, _) in SOURCES {
        let p = proposed_params(source);
        let cond = spec_of(source).conditions();
        let voc = match open_circuit_voltage(&p, &cond) {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("{source}: {e}"));
                continue;
            }
        };
        let h = 1e-6 * voc;
        let current = |v: f64| solve_current(&p, &cond, v);
        for k in 0..DERIVATIVE_POINTS {
            let v = voc * (k as f64 + 0.5) / DERIVATIVE_POINTS as f64;
            let eval = || -> Result<(f64, f64), pv_sdm::ModelError> {
                let i = current(v)?;
                let (lo, hi) = (current(v - h)?, current(v + h)?);
                let (p_lo, p_hi) = ((v - h) * lo, (v + h) * hi);
                let fd = [
                    (hi - lo) / (2.0 * h),
                    (p_hi - p_lo) / (2.0 * h),
                    (p_hi - p_lo) / (hi - lo),
                ];
                let analytic = [
                    di_dv(&p, &cond, v, i)?,
                    dp_dv(&p, &cond, v, i)?,
                    dp_di(&p, &cond, v, i)?,
                ];
                // floors keep the check relative where a derivative crosses zero at the MPP
                let floors = [p.i_ph / voc, p.i_ph, voc];
                let mut err: f64 = 0.0;
                for ((a, f), floor) in analytic.iter().zip(fd).zip(floors) {
                    err = err.max((a - f).abs() / f.abs().max(floor));
                }
                let chain = (analytic[2] * analytic[0] - analytic[1]).abs()
                    / analytic[1].abs().max(i.abs());
                Ok((err, chain))
            };
            match eval() {
                Ok((e, c)) => {
                    worst = worst.max(e);
                    worst_chain = worst_chain.max(c);
                }
                Err(e) => errors.push(format!("{source} V={v}: {e}")),
            }
        }
    }
    let ok = errors.is_empty() && worst <= DERIVATIVE_TOL && worst_chain <= CHAIN_RULE_TOL;
    let mut detail =
        format!("worst finite-difference mismatch {worst:.2e}, chain rule {worst_chain:.2e}");
    if !errors.is_empty() {
        detail.push_str(&format!("; {}", errors.join("; ")));
    }
    outcome(ok, detail)
}

fn shape() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (source, _, _) in SOURCES {
        let p = proposed_params(source);
        let cond = spec_of(source).conditions();
        let curve: Result<Vec<(f64, f64)>, _> = open_circuit_voltage(&p, &cond).and_then(|voc| {
            (0..SHAPE_GRID)
                .map(|k| {
                    let v = voc * k as f64 / (SHAPE_GRID - 1) as f64;
                    solve_current(&p, &cond, v).map(|i| (v, i))
                })
                .collect()
        });
        let curve = match curve {
            Ok(c) => c,
            Err(e) => {
                ok = false;
                notes.push(format!("{source}: {e}"));
                continue;
            }
        };
        let decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
        let power: Vec<f64> = curve.iter().map(|(v, i)| v * i).collect();
        let peak = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        let single_peak = power[..=peak].windows(2).all(|w| w[1] > w[0])
            && power[peak..].windows(2).all(|w| w[1] < w[0]);
        ok &= decreasing && single_peak;
        notes.push(format!(
            "{source}: decreasing {decreasing}, single peak {single_peak} at {:.4} V",
            curve[peak].0
        ));
    }
    outcome(ok, notes.join("; "))
}

fn deterministic_artifacts() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut runs = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(format!("{run}.json"));
        let plots = dir.path().join(run);
        let (success, _, stderr) = run_extract("pwp201.spec", "pwp201.csv", &out, Some(&plots));
        if !success {
            return outcome(false, format!("{run} run failed: {}", stderr.trim()));
        }
        let mut files = vec![("report".to_string(), fs::read(&out).unwrap_or_default())];
        for name in ["iv.svg", "pv.svg", "error.svg"] {
            files.push((
                name.to_string(),
                fs::read(plots.join(name)).unwrap_or_default(),
            ));
        }
        runs.push(files);
    }
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a.1.is_empty() || a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    if differing.is_empty() {
        outcome(true, "report and 3 SVGs byte-identical")
    } else {
        outcome(
            false,
            format!("differing or missing: {}", differing.join(", ")),
        )
    }
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("RMSE reproduction (evaluation)", rmse_reproduction),
        ("RMSE reproduction (extraction)", extraction_rmse),
        ("residual substitution", residual_substitution),
        ("synthetic round-trip", synthetic_round_trip),
        ("Newton vs Lambert-W", oracle_equivalence),
        ("derivative suite", derivative_suite),
        ("unimodality and monotonicity", shape),
        ("deterministic artifacts", deterministic_artifacts),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let tag = if result.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {}. {name}: {}", k + 1, result.detail);
        if !result.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
