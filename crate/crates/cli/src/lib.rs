//! Subcommands behind the `serpent` binary. Each `cmd_*` returns the process
//! exit code; the `*_with` variants return structured results for tests.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use plotters::prelude::*;
use rayon::prelude::*;
use serpent_core::csv_io::{fmt_sig, read_trajectory, write_status, write_trajectory};
use serpent_core::metrics::{
    associate, error_stats, rigid_alignment, tracking_summary, ErrorReport, WaypointSummary,
};
use serpent_core::scenario::{self, ScenarioConfig};
use serpent_core::sim::ring_starts;
use serpent_core::{run_scenario, Pose2, Scenario, TrajectoryLog, Waypoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

pub const OUTPUT_DIR_ENV: &str = "SERPENT_OUTPUT_DIR";

/// Output directory override from the environment, if set and non-empty.
pub fn env_output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    scenario::load(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn resolve_dir(cfg: &ScenarioConfig, config_path: &Path, over: Option<&Path>) -> PathBuf {
    if let Some(dir) = over {
        return dir.to_path_buf();
    }
    if cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&cfg.output_dir)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn report(result: Result<bool>) -> i32 {
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub log: TrajectoryLog,
    pub summary: Vec<WaypointSummary>,
}

pub fn run_with(config: &Path, out_dir: Option<&Path>) -> Result<RunOutput> {
    let cfg = load_config(config)?;
    let dir = resolve_dir(&cfg, config, out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let log = run_scenario(&cfg.scenario)?;
    let summary = tracking_summary(&log, &cfg.scenario.waypoints);

    write_trajectory(&log, create(&dir.join("trajectory.csv"))?)?;
    write_status(&log, create(&dir.join("tracking_status.csv"))?)?;
    let mut out = create(&dir.join("summary.txt"))?;
    out.write_all(summary_text(config, &cfg, &log, &summary).as_bytes())?;
    out.flush()?;
    plot_run(&dir.join("plots.svg"), &cfg.scenario, &log)?;
    Ok(RunOutput { dir, log, summary })
}

pub fn cmd_run(config: &Path, out_dir: Option<&Path>) -> i32 {
    report(run_with(config, out_dir).map(|r| {
        let reached = r.summary.iter().filter(|w| w.reached).count();
        println!(
            "{reached}/{} waypoints reached; outputs in {}",
            r.summary.len(),
            r.dir.display()
        );
        r.log.finished
    }))
}

fn summary_text(
    config: &Path,
    cfg: &ScenarioConfig,
    log: &TrajectoryLog,
    rows: &[WaypointSummary],
) -> String {
    let mut s = String::new();
    let end = log.samples.last().map_or(0.0, |x| x.t);
    let _ = writeln!(s, "config: {}", config.display());
    let _ = writeln!(s, "seed: {}", cfg.seed);
    let _ = writeln!(s, "simulated_s: {}", fmt_sig(end));
    let _ = writeln!(s, "finished: {}", if log.finished { "yes" } else { "no" });
    let _ = writeln!(s, "drift_offset_rad: {}", fmt_sig(log.drift_offset));
    let _ = writeln!(
        s,
        "waypoint,reached,time_to_reach_s,final_distance_m,final_abs_yaw_deg,mode_switches"
    );
    for w in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            w.index,
            if w.reached { "yes" } else { "no" },
            fmt_sig(w.time_to_reach),
            fmt_sig(w.final_distance),
            fmt_sig(w.final_abs_yaw_error.to_degrees()),
            w.mode_switches
        );
    }
    let reached = rows.iter().filter(|w| w.reached).count();
    let _ = writeln!(s, "reached: {reached}/{}", rows.len());
    s
}

pub struct EvalOutput {
    pub report: ErrorReport,
    pub pairs: usize,
    pub unpaired: usize,
    pub plot: PathBuf,
}

/// Compares an estimated trajectory against a reference. The error plot goes
/// to `out_dir`, or next to the estimate file.
pub fn eval_with(
    est: &Path,
    reference: &Path,
    max_dt: f64,
    align: bool,
    out_dir: Option<&Path>,
) -> Result<EvalOutput> {
    if !(max_dt >= 0.0) {
        bail!("--max-dt must be non-negative");
    }
    let read = |p: &Path| {
        File::open(p)
            .map_err(anyhow::Error::from)
            .and_then(|f| read_trajectory(f).map_err(anyhow::Error::from))
            .with_context(|| format!("{}", p.display()))
    };
    let (mut e, r) = (read(est)?, read(reference)?);
    let assoc = associate(&e, &r, max_dt)?;
    if align {
        let (rot, t) = rigid_alignment(&assoc.pairs, &e, &r)?;
        e = e.transformed(&rot, &t);
    }
    let report = error_stats(&assoc.pairs, &e, &r);
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => est.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let plot = dir.join("eval_errors.svg");
    plot_axis_errors(&plot, &report)?;
    Ok(EvalOutput {
        report,
        pairs: assoc.pairs.len(),
        unpaired: assoc.unpaired,
        plot,
    })
}

pub fn cmd_eval(
    est: &Path,
    reference: &Path,
    max_dt: f64,
    align: bool,
    out_dir: Option<&Path>,
) -> i32 {
    report(eval_with(est, reference, max_dt, align, out_dir).map(|o| {
        println!("pairs: {} (unpaired {})", o.pairs, o.unpaired);
        println!("max: {}", fmt_sig(o.report.max_abs));
        println!("mean: {}", fmt_sig(o.report.mean));
        println!("rmse: {}", fmt_sig(o.report.rmse));
        true
    }))
}

pub struct BatchRun {
    pub start: Pose2,
    pub log: TrajectoryLog,
}

/// Start poses for a batch: the configured start for a single run, seeded
/// ring starts behind the first waypoint otherwise.
pub fn batch_starts(cfg: &ScenarioConfig, n: usize) -> Vec<Pose2> {
    if n == 1 {
        return vec![cfg.scenario.start];
    }
    let b = cfg.batch;
    ring_starts(
        n,
        cfg.seed,
        &cfg.scenario.waypoints[0],
        b.inner_radius,
        b.outer_radius,
        b.arc,
    )
}

/// Runs every start against the first waypoint, in parallel on `jobs`
/// threads. Results keep start order.
pub fn run_batch(cfg: &ScenarioConfig, n: usize, jobs: Option<usize>) -> Result<Vec<BatchRun>> {
    if n == 0 {
        bail!("--starts must be at least 1");
    }
    let target: Waypoint = cfg.scenario.waypoints[0];
    let starts = batch_starts(cfg, n);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    let runs: Result<Vec<_>, _> = pool.install(|| {
        starts
            .par_iter()
            .map(|&start| {
                let mut s = cfg.scenario.clone();
                s.waypoints = vec![target];
                s.start = start;
                run_scenario(&s).map(|log| BatchRun { start, log })
            })
            .collect()
    });
    Ok(runs?)
}

pub fn batch_with(
    config: &Path,
    n: usize,
    jobs: Option<usize>,
    out_dir: Option<&Path>,
) -> Result<(PathBuf, Vec<BatchRun>)> {
    if jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let cfg = load_config(config)?;
    let runs = run_batch(&cfg, n, jobs)?;
    let dir = resolve_dir(&cfg, config, out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut out = create(&dir.join("convergence.csv"))?;
    writeln!(out, "run,t,x,y,yaw_rad,mode,d_e,psi_e_abs,psi_e")?;
    for (k, run) in runs.iter().enumerate() {
        for rec in &run.log.status {
            let pose = run
                .log
                .sample_at_tick(rec.tick)
                .map_or(run.start, |s| s.pose);
            writeln!(
                out,
                "{k},{},{},{},{},{},{},{},{}",
                fmt_sig(rec.t),
                fmt_sig(pose.x),
                fmt_sig(pose.y),
                fmt_sig(pose.yaw),
                rec.mode.as_str(),
                fmt_sig(rec.errors.distance),
                fmt_sig(rec.errors.yaw_abs),
                fmt_sig(rec.errors.yaw)
            )?;
        }
    }
    out.flush()?;

    let mut out = create(&dir.join("batch_summary.csv"))?;
    writeln!(
        out,
        "run,start_x,start_y,start_yaw_rad,converged,time_s,final_distance_m,final_abs_yaw_rad"
    )?;
    for (k, run) in runs.iter().enumerate() {
        let last = run.log.status.last();
        writeln!(
            out,
            "{k},{},{},{},{},{},{},{}",
            fmt_sig(run.start.x),
            fmt_sig(run.start.y),
            fmt_sig(run.start.yaw),
            run.log.finished as u8,
            fmt_sig(last.map_or(0.0, |r| r.t)),
            fmt_sig(last.map_or(f64::NAN, |r| r.errors.distance)),
            fmt_sig(last.map_or(f64::NAN, |r| r.errors.yaw_abs.abs()))
        )?;
    }
    out.flush()?;
    plot_batch(&dir.join("convergence.svg"), &cfg.scenario.waypoints[0], &runs)?;
    Ok((dir, runs))
}

pub fn cmd_batch(config: &Path, n: usize, jobs: Option<usize>, out_dir: Option<&Path>) -> i32 {
    report(batch_with(config, n, jobs, out_dir).map(|(dir, runs)| {
        let ok = runs.iter().filter(|r| r.log.finished).count();
        println!("{ok}/{} runs converged; outputs in {}", runs.len(), dir.display());
        ok == runs.len()
    }))
}

type Series = Vec<(f64, f64)>;

fn bounds<'a>(series: impl Iterator<Item = &'a (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut b = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for &(x, y) in series {
        if x.is_finite() && y.is_finite() {
            b.0 = (b.0 .0.min(x), b.0 .1.max(x));
            b.1 = (b.1 .0.min(y), b.1 .1.max(y));
        }
    }
    let pad = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            return (-1.0, 1.0);
        }
        let m = ((hi - lo) * 0.05).max(1e-3);
        (lo - m, hi + m)
    };
    (pad(b.0), pad(b.1))
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    labels: (&str, &str),
    lines: &[Series],
    points: &[(f64, f64)],
    bands: &[(f64, f64)],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let (xr, yr) = bounds(lines.iter().flatten().chain(points));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(45)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(labels.0)
        .y_desc(labels.1)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    for &(a, b) in bands {
        chart
            .draw_series(std::iter::once(Rectangle::new(
                [(a, yr.0), (b, yr.1)],
                BLACK.mix(0.06).filled(),
            )))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    for (i, line) in lines.iter().enumerate() {
        chart
            .draw_series(LineSeries::new(line.iter().copied(), Palette99::pick(i)))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    chart
        .draw_series(points.iter().map(|&p| Cross::new(p, 5, RED)))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

/// XY path, distance error with alternating bands per waypoint leg, and
/// blended yaw error.
fn plot_run(path: &Path, scenario: &Scenario, log: &TrajectoryLog) -> Result<()> {
    let root = SVGBackend::new(path, (1500, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let areas = root.split_evenly((1, 3));
    let xy: Series = log.samples.iter().map(|s| (s.pose.x, s.pose.y)).collect();
    let wps: Vec<_> = scenario.waypoints.iter().map(|w| (w.x, w.y)).collect();
    let dist: Series = log.status.iter().map(|s| (s.t, s.errors.distance)).collect();
    let yaw: Series = log
        .status
        .iter()
        .map(|s| (s.t, s.errors.yaw.to_degrees()))
        .collect();

    let mut bands = Vec::new();
    let mut leg_start = 0.0;
    for rec in &log.status {
        if rec.command == serpent_core::TrackerCommand::WaypointReached {
            if rec.waypoint_index % 2 == 0 {
                bands.push((leg_start, rec.t));
            }
            leg_start = rec.t;
        }
    }

    panel(&areas[0], "trajectory", ("x [m]", "y [m]"), &[xy], &wps, &[])?;
    panel(&areas[1], "distance error", ("t [s]", "d_e [m]"), &[dist], &[], &bands)?;
    panel(&areas[2], "yaw error", ("t [s]", "psi_e [deg]"), &[yaw], &[], &bands)?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

fn plot_axis_errors(path: &Path, report: &ErrorReport) -> Result<()> {
    let root = SVGBackend::new(path, (900, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let axis = |f: fn(&(f64, f64, f64, f64)) -> f64| -> Series {
        report.per_axis.iter().map(|e| (e.0, f(e))).collect()
    };
    let lines = [axis(|e| e.1), axis(|e| e.2), axis(|e| e.3)];
    panel(&root, "error per axis (x, y, z)", ("t [s]", "error [m]"), &lines, &[], &[])?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

fn plot_batch(path: &Path, target: &Waypoint, runs: &[BatchRun]) -> Result<()> {
    let root = SVGBackend::new(path, (1500, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let areas = root.split_evenly((1, 3));
    let xy: Vec<Series> = runs
        .iter()
        .map(|r| r.log.samples.iter().step_by(10).map(|s| (s.pose.x, s.pose.y)).collect())
        .collect();
    let dist: Vec<Series> = runs
        .iter()
        .map(|r| r.log.status.iter().map(|s| (s.t, s.errors.distance)).collect())
        .collect();
    let yaw: Vec<Series> = runs
        .iter()
        .map(|r| {
            r.log
                .status
                .iter()
                .map(|s| (s.t, s.errors.yaw_abs.to_degrees()))
                .collect()
        })
        .collect();
    panel(&areas[0], "trajectories", ("x [m]", "y [m]"), &xy, &[(target.x, target.y)], &[])?;
    panel(&areas[1], "distance error", ("t [s]", "d_e [m]"), &dist, &[], &[])?;
    panel(&areas[2], "heading error", ("t [s]", "psi_abs [deg]"), &yaw, &[], &[])?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}
