//! Benchmark protocol: elliptic set points and tracking references,
//! per-episode metrics and suite aggregation.

mod export;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{
    csv_header, episode_file_name, parse_csv, write_csv, write_gnuplot_script, write_summary, CsvOptions, CsvTable,
    SummaryFile, SUMMARY_FILE, GNUPLOT_FILE,
};

use crate::controllers::{Controller, ControllerKind, Reference};
use crate::error::{Error, Result};
use crate::linalg::QpStatus;
use crate::robots::{GainSet, Robot};
use crate::sim::{run, SimConfig, Trajectory};

/// Set-point angles on the ellipse, in units of pi.
pub const THETA_GRID: [f64; 4] = [0.0, 0.5, 1.0, 1.5];
/// Tracking angular frequencies, in units of pi rad/s.
pub const OMEGA_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
/// Set-point episode length in seconds.
pub const SETPOINT_DURATION: f64 = 10.0;
/// `delta` at or below this counts as zero (the QP tolerance).
pub const DELTA_ZERO_TOL: f64 = 1e-6;
/// Slack allowed on the logged CLF decrease condition.
pub const CLF_CHECK_TOL: f64 = 1e-6;
/// Continuous QP failure longer than this marks the episode failed.
pub const MAX_INFEASIBLE_SECONDS: f64 = 1.0;

/// Ellipse in the xz-plane with semi-axes `a`, `b`, tilt `phi` and center
/// offset `c` below the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub c: f64,
}

impl EllipseParams {
    /// `a = L/3`, `b = L/8`, `phi = pi/4`, `c = reach L - b`.
    pub fn for_length(length: f64, reach: f64) -> Self {
        let b = length / 8.0;
        EllipseParams {
            a: length / 3.0,
            b,
            phi: PI / 4.0,
            c: reach * length - b,
        }
    }

    pub fn for_robot(robot: &Robot) -> Self {
        Self::for_length(robot.model.total_length(), robot.reach)
    }
}

/// `(x, z)` of the ellipse point at angle `theta`.
pub fn ellipse_point(p: &EllipseParams, theta: f64) -> (f64, f64) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let x = p.a * ct * cp - (p.b * st - p.c) * sp;
    let z = p.a * ct * sp + (p.b * st - p.c) * cp;
    (x, z)
}

fn to_task(task_dim: usize, v: (f64, f64)) -> DVector<f64> {
    if task_dim == 2 {
        DVector::from_vec(vec![v.0, v.1])
    } else {
        DVector::from_vec(vec![v.0, 0.0, v.1])
    }
}

/// Reference moving along the ellipse with `theta = omega t`.
pub fn ellipse_trajectory(p: &EllipseParams, omega: f64, t: f64, task_dim: usize) -> Reference {
    let th = omega * t;
    let (st, ct) = th.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let pos = ellipse_point(p, th);
    // d/dtheta and d2/dtheta2 of the ellipse point.
    let d1 = (-p.a * st * cp - p.b * ct * sp, -p.a * st * sp + p.b * ct * cp);
    let d2 = (-p.a * ct * cp + p.b * st * sp, -p.a * ct * sp - p.b * st * cp);
    Reference {
        y: to_task(task_dim, pos),
        dy: to_task(task_dim, (omega * d1.0, omega * d1.1)),
        ddy: to_task(task_dim, (omega * omega * d2.0, omega * omega * d2.1)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Setpoint,
    Tracking,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Setpoint => "setpoint",
            Experiment::Tracking => "tracking",
        }
    }
}

/// One benchmark episode: a set point angle or a tracking frequency, both
/// stored in units of pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub experiment: Experiment,
    pub value_pi: f64,
}

impl EpisodeSpec {
    pub fn setpoint(theta_pi: f64) -> Self {
        EpisodeSpec {
            experiment: Experiment::Setpoint,
            value_pi: theta_pi,
        }
    }

    pub fn tracking(omega_pi: f64) -> Self {
        EpisodeSpec {
            experiment: Experiment::Tracking,
            value_pi: omega_pi,
        }
    }

    /// Set points run 10 s; tracking runs two full cycles, `4 pi / omega`.
    pub fn duration(&self) -> f64 {
        match self.experiment {
            Experiment::Setpoint => SETPOINT_DURATION,
            Experiment::Tracking => 4.0 / self.value_pi,
        }
    }

    /// File-name fragment such as `theta0.5pi` or `omega0.2pi`.
    pub fn param_label(&self) -> String {
        let key = match self.experiment {
            Experiment::Setpoint => "theta",
            Experiment::Tracking => "omega",
        };
        format!("{key}{}pi", trim_float(self.value_pi))
    }

    pub fn reference(&self, ellipse: EllipseParams, task_dim: usize) -> impl Fn(f64) -> Reference {
        let spec = *self;
        move |t| match spec.experiment {
            Experiment::Setpoint => Reference::setpoint(to_task(task_dim, ellipse_point(&ellipse, spec.value_pi * PI))),
            Experiment::Tracking => ellipse_trajectory(&ellipse, spec.value_pi * PI, t, task_dim),
        }
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// The four set-point episodes.
pub fn setpoint_grid() -> Vec<EpisodeSpec> {
    THETA_GRID.iter().map(|&t| EpisodeSpec::setpoint(t)).collect()
}

/// The five tracking episodes.
pub fn tracking_grid() -> Vec<EpisodeSpec> {
    OMEGA_GRID.iter().map(|&w| EpisodeSpec::tracking(w)).collect()
}

pub fn grid(experiment: Experiment) -> Vec<EpisodeSpec> {
    match experiment {
        Experiment::Setpoint => setpoint_grid(),
        Experiment::Tracking => tracking_grid(),
    }
}

/// Checks that every set point lies within the robot's length of the base.
pub fn check_reachable(robot: &Robot) -> Result<()> {
    let p = EllipseParams::for_robot(robot);
    let l = robot.model.total_length();
    for &theta in &THETA_GRID {
        let (x, z) = ellipse_point(&p, theta * PI);
        let r = x.hypot(z);
        if r > l * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "set point theta = {theta} pi lies {r:.4} m from the base, beyond L = {l:.4} m"
            )));
        }
    }
    Ok(())
}

/// Per-episode outcome and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub spec: EpisodeSpec,
    /// `||e||` at the last sample, metres.
    pub final_error: f64,
    /// Mean of `||e||^2` over control samples, square metres.
    pub mse: f64,
    pub max_error: f64,
    pub duration: f64,
    pub samples: usize,
    /// `Some(reason)` when the episode counts as failed convergence.
    pub failure: Option<String>,
    pub optimal_steps: usize,
    pub held_steps: usize,
    pub delta_zero_steps: usize,
    /// Optimal steps where the logged decrease condition is violated.
    pub clf_violations: usize,
    /// Inputs outside the bounds (exact comparison).
    pub bound_violations: usize,
    pub saturated_steps: usize,
    pub v_initial: f64,
    pub v_final: f64,
    /// Consecutive-sample increases of `V` beyond 1e-6 while `delta = 0`.
    pub v_increases: usize,
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
}

impl EpisodeMetrics {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn delta_zero_fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.delta_zero_steps as f64 / self.samples as f64
        }
    }

    pub fn v_ratio(&self) -> f64 {
        if self.v_initial > 0.0 {
            self.v_final / self.v_initial
        } else {
            0.0
        }
    }
}

/// Computes the metrics of a finished trajectory.
pub fn episode_metrics(
    robot: &Robot,
    kind: ControllerKind,
    spec: EpisodeSpec,
    gains: &GainSet,
    control_dt: f64,
    traj: &Trajectory,
) -> EpisodeMetrics {
    let model = &robot.model;
    let l = model.total_length();
    let mut m = EpisodeMetrics {
        spec,
        final_error: f64::NAN,
        mse: f64::NAN,
        max_error: 0.0,
        duration: 0.0,
        samples: traj.samples.len(),
        failure: traj.failure.clone(),
        optimal_steps: 0,
        held_steps: 0,
        delta_zero_steps: 0,
        clf_violations: 0,
        bound_violations: 0,
        saturated_steps: 0,
        v_initial: 0.0,
        v_final: 0.0,
        v_increases: 0,
        mean_solve_time: 0.0,
        max_solve_time: 0.0,
    };
    let mut sq_sum = 0.0;
    let mut held_run = 0usize;
    let mut worst_run = 0usize;
    let mut solve_sum = 0.0;
    let mut prev_v: Option<f64> = None;
    for s in &traj.samples {
        let c = &s.control;
        let e = s.error().norm();
        sq_sum += e * e;
        m.max_error = m.max_error.max(e);
        if c.qp_status == Some(QpStatus::Optimal) {
            m.optimal_steps += 1;
            if kind.uses_clf() && c.vdot > -c.v / gains.eps + c.delta + CLF_CHECK_TOL {
                m.clf_violations += 1;
            }
        }
        if c.held {
            m.held_steps += 1;
            held_run += 1;
            worst_run = worst_run.max(held_run);
        } else {
            held_run = 0;
        }
        if c.delta <= DELTA_ZERO_TOL {
            m.delta_zero_steps += 1;
            if let Some(pv) = prev_v {
                if spec.experiment == Experiment::Setpoint && c.v > pv + 1e-6 {
                    m.v_increases += 1;
                }
            }
        }
        prev_v = Some(c.v);
        m.bound_violations += c
            .u
            .iter()
            .zip(model.u_min.iter().zip(model.u_max.iter()))
            .filter(|(&u, (&lo, &hi))| !(u >= lo && u <= hi))
            .count();
        if c.saturated.iter().any(|&b| b) {
            m.saturated_steps += 1;
        }
        solve_sum += c.solve_time;
        m.max_solve_time = m.max_solve_time.max(c.solve_time);
    }
    if let (Some(first), Some(last)) = (traj.samples.first(), traj.samples.last()) {
        m.final_error = last.error().norm();
        m.mse = sq_sum / traj.samples.len() as f64;
        m.duration = last.state.t;
        m.v_initial = first.control.v;
        m.v_final = last.control.v;
        m.mean_solve_time = solve_sum / traj.samples.len() as f64;
    }
    if m.failure.is_none() {
        if m.max_error > 2.0 * l {
            m.failure = Some(format!("task error {:.3} m exceeded 2L = {:.3} m", m.max_error, 2.0 * l));
        } else if worst_run as f64 * control_dt > MAX_INFEASIBLE_SECONDS {
            m.failure = Some(format!(
                "QP failed for {:.3} s in a row",
                worst_run as f64 * control_dt
            ));
        }
    }
    m
}

/// Runs one episode and returns its trajectory and metrics.
pub fn run_episode(
    robot: &Robot,
    kind: ControllerKind,
    gains: &GainSet,
    spec: EpisodeSpec,
    base: &SimConfig,
) -> Result<(Trajectory, EpisodeMetrics)> {
    let mut controller = Controller::new(kind, &robot.model, gains.clone())?;
    let cfg = SimConfig {
        t_end: spec.duration(),
        ..base.clone()
    };
    let reference = spec.reference(EllipseParams::for_robot(robot), robot.model.task_dim);
    let traj = run(&robot.model, &mut controller, reference, &cfg)?;
    let metrics = episode_metrics(robot, kind, spec, gains, cfg.control_dt(), &traj);
    Ok((traj, metrics))
}

/// Mean and population standard deviation over non-failed episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub values: Vec<Option<f64>>,
    pub failed: usize,
}

impl Stat {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let failed = values.len() - ok.len();
        if ok.is_empty() {
            return Stat {
                mean: None,
                std: None,
                values,
                failed,
            };
        }
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean: Some(mean),
            std: Some(var.sqrt()),
            values,
            failed,
        }
    }

    /// `mean ± std`, or `Failed Convergence` when any episode failed.
    pub fn display(&self, digits: usize) -> String {
        if self.failed > 0 {
            return "Failed Convergence".to_string();
        }
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.digits$} ± {s:.digits$}"),
            _ => "-".to_string(),
        }
    }
}

/// Table-II-style row for one robot/controller pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub robot: String,
    pub controller: ControllerKind,
    /// Final errors in cm over the set-point grid.
    pub setpoint_cm: Option<Stat>,
    /// MSE in cm^2 over the tracking grid.
    pub tracking_cm2: Option<Stat>,
    pub episodes: Vec<EpisodeMetrics>,
}

impl MetricSummary {
    pub fn from_episodes(robot: &str, controller: ControllerKind, episodes: Vec<EpisodeMetrics>) -> Self {
        let collect = |exp: Experiment, f: &dyn Fn(&EpisodeMetrics) -> f64| {
            let vals: Vec<Option<f64>> = episodes
                .iter()
                .filter(|e| e.spec.experiment == exp)
                .map(|e| (!e.failed()).then(|| f(e)))
                .collect();
            (!vals.is_empty()).then(|| Stat::from_values(vals))
        };
        MetricSummary {
            robot: robot.to_string(),
            controller,
            setpoint_cm: collect(Experiment::Setpoint, &|e| e.final_error * 100.0),
            tracking_cm2: collect(Experiment::Tracking, &|e| e.mse * 1e4),
            episodes,
        }
    }

    pub fn any_failed(&self) -> bool {
        self.episodes.iter().any(|e| e.failed())
    }
}

/// Where and how a suite writes its files.
#[derive(Debug, Clone)]
pub struct OutputOptions<'a> {
    pub dir: &'a Path,
    pub csv: CsvOptions,
}

/// Runs the given episodes in parallel and returns their metrics in input
/// order. Trajectories are written to CSV (when requested) and dropped.
pub fn run_suite(
    robot: &Robot,
    kind: ControllerKind,
    gains: &GainSet,
    episodes: &[EpisodeSpec],
    sim: &SimConfig,
    output: Option<&OutputOptions<'_>>,
) -> Result<MetricSummary> {
    if episodes.iter().any(|e| e.experiment == Experiment::Setpoint) {
        check_reachable(robot)?;
    }
    let results = episodes
        .par_iter()
        .map(|&spec| -> Result<EpisodeMetrics> {
            let (traj, metrics) = run_episode(robot, kind, gains, spec, sim)?;
            if let Some(out) = output {
                let path = out.dir.join(episode_file_name(robot.name(), kind, spec));
                write_csv(&path, &robot.model, gains, sim, &traj, &out.csv)?;
            }
            Ok(metrics)
        })
        .collect::<Vec<_>>();
    let metrics = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricSummary::from_episodes(robot.name(), kind, metrics))
}

/// One (robot, controller) cell of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkCell<'a> {
    pub robot: &'a Robot,
    pub controller: ControllerKind,
    pub gains: GainSet,
}

/// Runs every episode of every cell, flattening all episodes into one
/// parallel pass; summaries come back in cell order.
pub fn run_benchmark(
    cells: &[BenchmarkCell<'_>],
    episodes: &[EpisodeSpec],
    sim: &SimConfig,
    output: Option<&OutputOptions<'_>>,
) -> Result<Vec<MetricSummary>> {
    if episodes.iter().any(|e| e.experiment == Experiment::Setpoint) {
        for c in cells {
            check_reachable(c.robot)?;
        }
    }
    let jobs: Vec<(usize, EpisodeSpec)> = (0..cells.len())
        .flat_map(|i| episodes.iter().map(move |&s| (i, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, spec)| -> Result<(usize, EpisodeMetrics)> {
            let c = &cells[i];
            let (traj, metrics) = run_episode(c.robot, c.controller, &c.gains, spec, sim)?;
            if let Some(out) = output {
                let path = out.dir.join(episode_file_name(c.robot.name(), c.controller, spec));
                write_csv(&path, &c.robot.model, &c.gains, sim, &traj, &out.csv)?;
            }
            Ok((i, metrics))
        })
        .collect::<Vec<_>>();
    let mut per_cell: Vec<Vec<EpisodeMetrics>> = vec![Vec::new(); cells.len()];
    for r in results {
        let (i, m) = r?;
        per_cell[i].push(m);
    }
    Ok(cells
        .iter()
        .zip(per_cell)
        .map(|(c, eps)| MetricSummary::from_episodes(c.robot.name(), c.controller, eps))
        .collect())
}

/// Plain-text table with one row per summary.
pub fn format_table(rows: &[MetricSummary]) -> String {
    let mut out = format!("{:<8} {:<16} {:>24} {:>24}\n", "Robot", "Controller", "SP final error [cm]", "TT MSE [cm^2]");
    for r in rows {
        let sp = r.setpoint_cm.as_ref().map_or("-".to_string(), |s| s.display(2));
        let tt = r.tracking_cm2.as_ref().map_or("-".to_string(), |s| s.display(2));
        out.push_str(&format!("{:<8} {:<16} {:>24} {:>24}\n", r.robot, r.controller.label(), sp, tt));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finger_ellipse() -> EllipseParams {
        EllipseParams::for_length(0.24, 1.0)
    }

    #[test]
    fn finger_parameters() {
        let p = finger_ellipse();
        assert!((p.a - 0.08).abs() < 1e-15);
        assert!((p.b - 0.03).abs() < 1e-15);
        assert!((p.c - 0.21).abs() < 1e-15);
    }

    #[test]
    fn finger_points() {
        let p = finger_ellipse();
        let (x, z) = ellipse_point(&p, 0.0);
        assert!((x - 0.205061).abs() < 1e-6 && (z + 0.091924).abs() < 1e-6);
        let (x, z) = ellipse_point(&p, PI / 2.0);
        assert!((x - 0.127279).abs() < 1e-6 && (z + 0.127279).abs() < 1e-6);
    }

    #[test]
    fn periodic_in_theta() {
        let p = finger_ellipse();
        let (a, b) = ellipse_point(&p, 0.7);
        let (c, d) = ellipse_point(&p, 0.7 + 2.0 * PI);
        assert!((a - c).abs() < 1e-15 && (b - d).abs() < 1e-15);
    }

    #[test]
    fn trajectory_starts_at_theta_zero() {
        let p = finger_ellipse();
        let r = ellipse_trajectory(&p, 0.3 * PI, 0.0, 2);
        let (x, z) = ellipse_point(&p, 0.0);
        assert_eq!(r.y.as_slice(), &[x, z]);
    }

    #[test]
    fn trajectory_derivatives_match_fd() {
        let p = finger_ellipse();
        let w = 0.4 * PI;
        let h = 1e-5;
        for &t in &[0.1, 1.3, 2.9] {
            let r = ellipse_trajectory(&p, w, t, 3);
            let rp = ellipse_trajectory(&p, w, t + h, 3);
            let rm = ellipse_trajectory(&p, w, t - h, 3);
            let v = (&rp.y - &rm.y) / (2.0 * h);
            let a = (&rp.dy - &rm.dy) / (2.0 * h);
            assert!((&v - &r.dy).norm() <= 1e-6 * r.dy.norm());
            assert!((&a - &r.ddy).norm() <= 1e-6 * r.ddy.norm());
            assert_eq!(r.y[1], 0.0);
        }
    }

    #[test]
    fn acceleration_scales_with_omega_squared() {
        let p = finger_ellipse();
        let r1 = ellipse_trajectory(&p, 0.2 * PI, 1.0, 2);
        let r2 = ellipse_trajectory(&p, 0.4 * PI, 0.5, 2);
        assert!((r2.ddy.norm() - 4.0 * r1.ddy.norm()).abs() < 1e-12);
    }

    #[test]
    fn grids_and_durations() {
        assert_eq!(tracking_grid().len(), 5);
        assert_eq!(setpoint_grid().len(), 4);
        assert!((EpisodeSpec::tracking(0.2).duration() - 20.0).abs() < 1e-12);
        assert_eq!(EpisodeSpec::setpoint(1.5).duration(), 10.0);
        assert_eq!(EpisodeSpec::setpoint(0.5).param_label(), "theta0.5pi");
        assert_eq!(EpisodeSpec::tracking(0.1).param_label(), "omega0.1pi");
        assert_eq!(EpisodeSpec::setpoint(0.0).param_label(), "theta0.0pi");
    }

    #[test]
    fn empty_stat_has_no_nan() {
        let s = Stat::from_values(vec![]);
        assert_eq!(s.mean, None);
        assert_eq!(s.display(2), "-");
        let s = MetricSummary::from_episodes("finger", ControllerKind::Ic, vec![]);
        assert!(s.setpoint_cm.is_none() && s.tracking_cm2.is_none());
    }

    #[test]
    fn population_std() {
        let s = Stat::from_values(vec![Some(1.0), Some(3.0), None]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        assert_eq!(s.failed, 1);
        assert_eq!(s.display(2), "Failed Convergence");
    }
}
