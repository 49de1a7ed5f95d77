//! CSV logs, SVG plots and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::controllers::{ControllerKind, SolveStatus};
use crate::error::{Error, Result};

use super::metrics::{self, series_envelope, Envelope, RunMetrics};
use super::runner::{RunResult, StepLog};
use super::scenario::Scenario;

/// Scalar columns following the `q_*`, `q_cmd_*` and `q_ref_*` blocks.
pub const SCALAR_COLUMNS: [&str; 20] = [
    "true_force_max",
    "true_force_total",
    "true_contacts",
    "est_force_max",
    "est_contacts",
    "pred_force_max",
    "pred_contacts",
    "e_lambda",
    "w",
    "tracking_error",
    "v_q_norm",
    "solver_status",
    "solver_iterations",
    "kkt_residual",
    "fault",
    "projection_gap",
    "release_drop",
    "release_bound",
    "min_signed_distance",
    "sim_iterations",
];

/// Column order of the per-run log for an `n`-joint arm.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["tick".to_string(), "time".to_string()];
    for prefix in ["q", "q_cmd", "q_ref"] {
        cols.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    cols.extend(SCALAR_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

/// Creates `dir` and checks that it accepts files.
pub fn prepare_output_dir(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    Ok(dir.to_path_buf())
}

fn row(log: &StepLog) -> Vec<String> {
    let mut r = vec![log.tick.to_string(), log.time.to_string()];
    for block in [&log.q, &log.q_cmd, &log.q_ref] {
        r.extend(block.iter().map(f64::to_string));
    }
    r.extend([
        log.true_force_max.to_string(),
        log.true_force_total.to_string(),
        log.true_contacts.to_string(),
        log.est_force_max.to_string(),
        log.est_contacts.to_string(),
        log.pred_force_max.to_string(),
        log.pred_contacts.to_string(),
        log.e_lambda.to_string(),
        log.w.to_string(),
        log.tracking_error.to_string(),
        log.v_q_norm.to_string(),
        log.solver_status.as_str().to_string(),
        log.solver_iterations.to_string(),
        log.kkt_residual.to_string(),
        u8::from(log.fault).to_string(),
        log.projection_gap.to_string(),
        log.release_drop.to_string(),
        log.release_bound.to_string(),
        log.min_signed_distance.to_string(),
        log.sim_iterations.to_string(),
    ]);
    r
}

pub fn write_log_csv(path: impl AsRef<Path>, logs: &[StepLog]) -> Result<()> {
    let n = logs.first().map_or(0, |l| l.q.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(n))?;
    for log in logs {
        w.write_record(row(log))?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, column: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {field:?} in column {column}")))
}

fn parse_status(s: &str) -> Result<SolveStatus> {
    match s {
        "direct" => Ok(SolveStatus::Direct),
        "optimal" => Ok(SolveStatus::Optimal),
        "held" => Ok(SolveStatus::Held),
        other => Err(Error::InvalidInput(format!(
            "unknown solver status {other:?}"
        ))),
    }
}

pub fn read_log_csv(path: impl AsRef<Path>) -> Result<Vec<StepLog>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let n = header
        .iter()
        .filter(|h| h.starts_with("q_") && !h.starts_with("q_cmd") && !h.starts_with("q_ref"))
        .count();
    if header != csv_header(n) {
        return Err(Error::InvalidInput("unexpected CSV header".into()));
    }
    let mut logs = Vec::new();
    for record in r.records() {
        let rec = record?;
        let f = |i: usize| -> Result<f64> { parse(&rec[i], &header[i]) };
        let u = |i: usize| -> Result<usize> { parse(&rec[i], &header[i]) };
        let block = |start: usize| -> Result<Vec<f64>> { (start..start + n).map(f).collect() };
        let s = 2 + 3 * n;
        logs.push(StepLog {
            tick: u(0)?,
            time: f(1)?,
            q: block(2)?,
            q_cmd: block(2 + n)?,
            q_ref: block(2 + 2 * n)?,
            true_force_max: f(s)?,
            true_force_total: f(s + 1)?,
            true_contacts: u(s + 2)?,
            est_force_max: f(s + 3)?,
            est_contacts: u(s + 4)?,
            pred_force_max: f(s + 5)?,
            pred_contacts: u(s + 6)?,
            e_lambda: f(s + 7)?,
            w: f(s + 8)?,
            tracking_error: f(s + 9)?,
            v_q_norm: f(s + 10)?,
            solver_status: parse_status(&rec[s + 11])?,
            solver_iterations: u(s + 12)?,
            kkt_residual: f(s + 13)?,
            fault: u(s + 14)? != 0,
            projection_gap: f(s + 15)?,
            release_drop: f(s + 16)?,
            release_bound: f(s + 17)?,
            min_signed_distance: f(s + 18)?,
            sim_iterations: u(s + 19)?,
        });
    }
    Ok(logs)
}

pub fn write_timings_csv(path: impl AsRef<Path>, seconds: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tick", "controller_seconds"])?;
    for (tick, s) in seconds.iter().enumerate() {
        w.write_record([tick.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn manifest_text(scenario: &Scenario, extra: &[(&str, String)]) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", scenario.name);
    let _ = writeln!(text, "schema_version: {}", scenario.schema_version);
    let _ = writeln!(text, "config_sha256: {}", scenario.config_hash());
    let _ = writeln!(text, "seed: {}", scenario.rng_seed);
    let _ = writeln!(text, "controller: {}", scenario.controller);
    let _ = writeln!(text, "ticks: {}", scenario.num_ticks());
    let _ = writeln!(text, "control_rate_hz: {}", scenario.control_rate);
    let _ = writeln!(
        text,
        "version: {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    for (k, v) in extra {
        let _ = writeln!(text, "{k}: {v}");
    }
    text
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Optional `(lower, upper)` band drawn behind the line.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

pub struct Threshold<'a> {
    pub label: &'a str,
    pub value: f64,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: [f64; 4] = [40.0, 20.0, 50.0, 70.0]; // top, right, bottom, left

/// A standalone SVG line chart with dashed horizontal threshold lines.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    thresholds: &[Threshold],
) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_min, x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    });
    let ys = series
        .iter()
        .flat_map(|s| {
            s.points
                .iter()
                .map(|p| p.1)
                .chain(s.band.iter().flatten().flat_map(|b| [b.1, b.2]))
        })
        .chain(thresholds.iter().map(|t| t.value))
        .filter(|y| y.is_finite());
    let (y_min, mut y_max) = ys.fold((0.0_f64, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min {
        (x_min, x_max)
    } else {
        (0.0, 1.0)
    };
    if !(y_max > y_min) {
        y_max = y_min + 1.0;
    }
    y_max += 0.05 * (y_max - y_min);

    let [top, right, bottom, left] = MARGIN;
    let pw = WIDTH - left - right;
    let ph = HEIGHT - top - bottom;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| top + (1.0 - (y - y_min) / (y_max - y_min)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x_min + (x_max - x_min) * k as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 16.0,
            tick_label(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );

    for s in series {
        if let Some(band) = &s.band {
            let mut d = String::new();
            for (i, (x, lo, _)) in band.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    sx(*x),
                    sy(*lo)
                );
            }
            for (x, _, hi) in band.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(*x), sy(*hi));
            }
            let _ = writeln!(
                svg,
                r#"<path d="{}Z" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                d, s.color
            );
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            s.color
        );
    }
    for t in thresholds {
        let y = sy(t.value);
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            left + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="gray">{}</text>"#,
            left + pw - 4.0,
            y - 4.0,
            escape(t.label)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let y = top + 14.0 + 16.0 * i as f64;
        let x = left + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
            x + 20.0,
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn series_of<'a>(
    label: &'a str,
    color: &'a str,
    logs: &[StepLog],
    field: impl Fn(&StepLog) -> f64,
) -> Series<'a> {
    Series {
        label,
        color,
        points: logs.iter().map(|l| (l.time, field(l))).collect(),
        band: None,
    }
}

/// Writes `log.csv`, `timings.csv`, `manifest.txt`, `metrics.json` and the
/// per-metric plots into `dir`. Returns the written paths.
pub fn emit_run_artifacts(result: &RunResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = prepare_output_dir(dir)?;
    let scenario = &result.scenario;
    let logs = &result.logs;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    let summary = metrics::summarize(logs, scenario.separation_window);
    put(
        "metrics.json",
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    let status = match &result.aborted {
        Some(reason) => reason.clone(),
        None => "completed".into(),
    };
    put(
        "manifest.txt",
        manifest_text(scenario, &[("status", status)]),
    )?;

    let f_threshold = scenario.sensing.f_threshold;
    let lambda_max = scenario.controller_params.lambda_max;
    let thresholds = [
        Threshold {
            label: "f_threshold",
            value: f_threshold,
        },
        Threshold {
            label: "lambda_max",
            value: lambda_max,
        },
    ];
    put(
        "force.svg",
        line_plot(
            &format!("{}: contact force ({})", scenario.name, scenario.controller),
            "time [s]",
            "force [N]",
            &[
                series_of("true max", PALETTE[0], logs, |l| l.true_force_max),
                series_of("estimated max", PALETTE[1], logs, |l| l.est_force_max),
                series_of("predicted max", PALETTE[2], logs, |l| l.pred_force_max),
            ],
            &thresholds,
        ),
    )?;
    put(
        "velocity.svg",
        line_plot(
            &format!("{}: joint velocity norm", scenario.name),
            "time [s]",
            "|v_q| [rad/s]",
            &[series_of("|v_q|", PALETTE[0], logs, |l| l.v_q_norm)],
            &[],
        ),
    )?;
    put(
        "damping.svg",
        line_plot(
            &format!("{}: force discrepancy and damping weight", scenario.name),
            "time [s]",
            "value",
            &[
                series_of("e_lambda", PALETTE[0], logs, |l| l.e_lambda),
                series_of("w", PALETTE[1], logs, |l| l.w),
            ],
            &[],
        ),
    )?;
    put(
        "tracking.svg",
        line_plot(
            &format!("{}: tracking error", scenario.name),
            "time [s]",
            "error",
            &[series_of("tracking error", PALETTE[0], logs, |l| {
                l.tracking_error
            })],
            &[],
        ),
    )?;

    let log_path = dir.join("log.csv");
    write_log_csv(&log_path, logs)?;
    written.push(log_path);
    let timing_path = dir.join("timings.csv");
    write_timings_csv(&timing_path, &result.controller_seconds)?;
    written.push(timing_path);
    Ok(written)
}

/// Per-controller aggregates of a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub controller: ControllerKind,
    pub runs: usize,
    pub aborted: usize,
    pub peak_force: Envelope,
    pub mean_contact_force: Envelope,
    pub tracking_rmse: Envelope,
    pub peak_separation_velocity: Envelope,
    pub contact_toggles: Envelope,
    pub mean_w: Envelope,
}

pub fn comparison_rows(matrix: &[(ControllerKind, Vec<RunResult>)]) -> Vec<ComparisonRow> {
    matrix
        .iter()
        .map(|(kind, runs)| {
            let m: Vec<RunMetrics> = runs
                .iter()
                .map(|r| metrics::summarize(&r.logs, r.scenario.separation_window))
                .collect();
            let env = |f: fn(&RunMetrics) -> f64| Envelope::of(m.iter().map(f));
            ComparisonRow {
                controller: *kind,
                runs: runs.len(),
                aborted: runs.iter().filter(|r| r.aborted.is_some()).count(),
                peak_force: env(|m| m.peak_force),
                mean_contact_force: env(|m| m.mean_contact_force),
                tracking_rmse: env(|m| m.tracking_rmse),
                peak_separation_velocity: env(|m| m.peak_separation_velocity),
                contact_toggles: env(|m| m.contact_toggles as f64),
                mean_w: env(|m| m.mean_w),
            }
        })
        .collect()
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let metrics = [
        "peak_force",
        "mean_contact_force",
        "tracking_rmse",
        "peak_separation_velocity",
        "contact_toggles",
        "mean_w",
    ];
    let mut header = vec![
        "controller".to_string(),
        "runs".to_string(),
        "aborted".to_string(),
    ];
    for m in metrics {
        header.extend(["min", "mean", "max"].iter().map(|s| format!("{m}_{s}")));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.controller.to_string(),
            r.runs.to_string(),
            r.aborted.to_string(),
        ];
        for e in [
            r.peak_force,
            r.mean_contact_force,
            r.tracking_rmse,
            r.peak_separation_velocity,
            r.contact_toggles,
            r.mean_w,
        ] {
            rec.extend([e.min.to_string(), e.mean.to_string(), e.max.to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn envelope_plot(
    scenario: &Scenario,
    matrix: &[(ControllerKind, Vec<RunResult>)],
    title: &str,
    y_label: &str,
    thresholds: &[Threshold],
    field: fn(&StepLog) -> f64,
) -> String {
    let labels: Vec<String> = matrix.iter().map(|(k, _)| k.to_string()).collect();
    let series: Vec<Series> = matrix
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, ((_, runs), label))| {
            let logs: Vec<&[StepLog]> = runs.iter().map(|r| r.logs.as_slice()).collect();
            let times: Vec<f64> = logs
                .first()
                .map_or(Vec::new(), |l| l.iter().map(|s| s.time).collect());
            let env = series_envelope(&logs, field);
            Series {
                label,
                color: PALETTE[i % PALETTE.len()],
                points: times.iter().zip(&env).map(|(t, e)| (*t, e.mean)).collect(),
                band: Some(
                    times
                        .iter()
                        .zip(&env)
                        .map(|(t, e)| (*t, e.min, e.max))
                        .collect(),
                ),
            }
        })
        .collect();
    line_plot(
        &format!("{}: {title}", scenario.name),
        "time [s]",
        y_label,
        &series,
        thresholds,
    )
}

/// Writes `comparison.csv`, `manifest.txt` and min/mean/max envelope plots into `dir`.
pub fn emit_comparison_artifacts(
    scenario: &Scenario,
    matrix: &[(ControllerKind, Vec<RunResult>)],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = prepare_output_dir(dir)?;
    let rows = comparison_rows(matrix);
    let csv_path = dir.join("comparison.csv");
    write_comparison_csv(&csv_path, &rows)?;
    let mut written = vec![csv_path];
    let controllers: Vec<String> = matrix.iter().map(|(k, _)| k.to_string()).collect();
    let repeats = matrix.first().map_or(0, |(_, r)| r.len());
    let manifest = manifest_text(
        scenario,
        &[
            ("controllers", controllers.join(",")),
            ("repeats", repeats.to_string()),
            (
                "seeds",
                format!(
                    "{}..{}",
                    scenario.rng_seed,
                    scenario.rng_seed.wrapping_add(repeats as u64)
                ),
            ),
        ],
    );
    let thresholds = [
        Threshold {
            label: "f_threshold",
            value: scenario.sensing.f_threshold,
        },
        Threshold {
            label: "lambda_max",
            value: scenario.controller_params.lambda_max,
        },
    ];
    let files = [
        (
            "force_envelope.svg",
            envelope_plot(
                scenario,
                matrix,
                "contact force (mean, min-max)",
                "force [N]",
                &thresholds,
                |l| l.true_force_max,
            ),
        ),
        (
            "velocity_envelope.svg",
            envelope_plot(
                scenario,
                matrix,
                "joint velocity norm (mean, min-max)",
                "|v_q| [rad/s]",
                &[],
                |l| l.v_q_norm,
            ),
        ),
        ("manifest.txt", manifest),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
