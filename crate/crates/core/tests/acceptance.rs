//! Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails. Tolerances are pinned below.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::measure::*;
use common::qp::*;
use common::*;
use rand::Rng;
use nalgebra::DVector;
use softclf::controllers::ControllerKind;
use softclf::experiments::{
    episode_file_name, grid, run_benchmark, run_episode, BenchmarkCell, CsvOptions, EpisodeMetrics, EpisodeSpec,
    Experiment, MetricSummary, OutputOptions,
};
use softclf::linalg::{care_residual, solve_care_double_integrator, solve_qp, QpStatus};
use softclf::robots::Robot;
use softclf::sim::SimConfig;

const CARE_CASES: usize = 1000;
const CARE_RESIDUAL_TOL: f64 = 1e-9;
const CARE_TIME_S: f64 = 1.0;
const QP_RANDOM_CASES: usize = 200;
const QP_TOL: f64 = 1e-6;
const QP_TIME_S: f64 = 10.0;
const ENERGY_DRIFT_TOL: f64 = 1e-3;
const JACOBIAN_STATES: usize = 50;
const JACOBIAN_TOL: f64 = 1e-5;
const JACOBIAN_RATE_TOL: f64 = 1e-4;
/// Input hold used for the linearization check, seconds.
const IO_HOLD: f64 = 1e-6;
const IO_RMS_TOL: f64 = 0.02;
const DELTA_ZERO_MIN_FRACTION: f64 = 0.95;
const V_RATIO_MAX: f64 = 1e-3;
const FINGER_SETPOINT_FRACTION: f64 = 0.01;
const SOFT_SETPOINT_FRACTION: f64 = 0.10;
const SPIROB_MSE_FACTOR: f64 = 2.0;
const HELIX_EPISODE_LIMIT_S: f64 = 300.0;

const CLF_KINDS: [ControllerKind; 2] = [ControllerKind::ClfQp, ControllerKind::SoftIdClfQp];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn care() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    let mut all_pd = true;
    for _ in 0..CARE_CASES {
        let nt = rng.random_range(1..=3);
        let q = DVector::from_fn(2 * nt, |_, _| rng.random_range(0.1..100.0));
        let r = DVector::from_fn(nt, |_, _| rng.random_range(0.1..100.0));
        match solve_care_double_integrator(&q, &r) {
            Ok(pair) => {
                worst = worst.max(care_residual(&pair.p, &q, &r));
                all_pd &= pair.p.symmetric_eigenvalues().min() > 0.0;
            }
            Err(_) => all_pd = false,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= CARE_RESIDUAL_TOL && all_pd && secs < CARE_TIME_S,
        format!("{CARE_CASES} cases, worst residual {worst:.2e}, all P positive definite: {all_pd}, {secs:.3} s"),
    )
}

fn qp() -> Outcome {
    let start = Instant::now();
    let analytic = analytic_qps();
    let analytic_ok = analytic.iter().all(|(p, x)| {
        let sol = solve_qp(p);
        sol.status == QpStatus::Optimal && (&sol.x_star - dv(x)).amax() <= QP_TOL
    });
    let mut rng = rng(42);
    let mut worst: f64 = 0.0;
    let mut random_ok = true;
    for _ in 0..QP_RANDOM_CASES {
        let p = random_qp(&mut rng);
        let sol = solve_qp(&p);
        match brute_force(&p) {
            Some(x) if sol.status == QpStatus::Optimal => worst = worst.max((&sol.x_star - x).amax()),
            _ => random_ok = false,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        analytic_ok && random_ok && worst <= QP_TOL && secs < QP_TIME_S,
        format!(
            "{} analytic solved: {analytic_ok}, {QP_RANDOM_CASES} random vs enumeration worst |dx| {worst:.2e}, {secs:.2} s",
            analytic.len()
        ),
    )
}

fn dynamics() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, name) in ROBOTS.iter().enumerate() {
        let model = robot(name).model;
        let drift = energy_drift(name, 600 + i as u64);
        let j = worst_jacobian_error(&model, &mut rng(100 + i as u64), JACOBIAN_STATES);
        let dj = worst_jacobian_rate_error(&model, &mut rng(200 + i as u64), JACOBIAN_STATES);
        pass &= drift < ENERGY_DRIFT_TOL && j < JACOBIAN_TOL && dj < JACOBIAN_RATE_TOL;
        parts.push(format!("{name} drift {drift:.1e} J {j:.1e} dJ {dj:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn io_linearization() -> Outcome {
    let rms = io_linearization_rms(IO_HOLD);
    outcome(
        rms < IO_RMS_TOL,
        format!("Finger relative RMS of e'' - mu over 0.1 s with a {IO_HOLD:.0e} s input hold: {rms:.4}"),
    )
}

fn row<'a>(rows: &'a [MetricSummary], robot: &str, kind: ControllerKind) -> &'a MetricSummary {
    rows.iter()
        .find(|r| r.robot == robot && r.controller == kind)
        .unwrap_or_else(|| panic!("no benchmark row for {robot} {}", kind.name()))
}

fn of_kind(row: &MetricSummary, experiment: Experiment) -> impl Iterator<Item = &EpisodeMetrics> {
    row.episodes.iter().filter(move |e| e.spec.experiment == experiment)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn certificate(rows: &[MetricSummary]) -> Outcome {
    let clf_rows = rows.iter().filter(|r| CLF_KINDS.contains(&r.controller));
    let (mut optimal, mut violations, mut v_increases) = (0, 0, 0);
    for r in clf_rows {
        for e in &r.episodes {
            optimal += e.optimal_steps;
            violations += e.clf_violations;
            v_increases += e.v_increases;
        }
    }
    let mut pass = violations == 0 && optimal > 0;
    let mut parts = vec![format!("decrease row violated on {violations} of {optimal} optimal steps")];
    for kind in CLF_KINDS {
        let r = row(rows, "finger", kind);
        let frac = of_kind(r, Experiment::Setpoint).map(|e| e.delta_zero_fraction()).fold(1.0, f64::min);
        let ratio = of_kind(r, Experiment::Setpoint).map(|e| e.v_ratio()).fold(0.0, f64::max);
        pass &= frac >= DELTA_ZERO_MIN_FRACTION && ratio < V_RATIO_MAX;
        parts.push(format!("finger {}: min delta=0 fraction {frac:.3}, max V(10)/V(0) {ratio:.1e}", kind.name()));
    }
    parts.push(format!("V increases with delta=0: {v_increases}"));
    outcome(pass, parts.join("; "))
}

fn setpoint(rows: &[MetricSummary], robots: &[Robot]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in robots {
        let name = r.name();
        let l = r.model.total_length();
        let limit = if name == "finger" { FINGER_SETPOINT_FRACTION } else { SOFT_SETPOINT_FRACTION } * l;
        let err = mean(of_kind(row(rows, name, ControllerKind::SoftIdClfQp), Experiment::Setpoint).map(|e| e.final_error));
        pass &= err <= limit;
        parts.push(format!("{name} {:.2} cm (limit {:.2} cm)", err * 100.0, limit * 100.0));
    }
    outcome(pass, format!("Soft ID-CLF-QP mean final error: {}", parts.join(", ")))
}

fn tracking_mse(rows: &[MetricSummary], robot: &str, kind: ControllerKind) -> f64 {
    mean(of_kind(row(rows, robot, kind), Experiment::Tracking).map(|e| e.mse)) * 1e4
}

fn tracking(rows: &[MetricSummary]) -> Outcome {
    let f_soft = tracking_mse(rows, "finger", ControllerKind::SoftIdClfQp);
    let f_ic = tracking_mse(rows, "finger", ControllerKind::Ic);
    let s_soft = tracking_mse(rows, "spirob", ControllerKind::SoftIdClfQp);
    let s_icqp = tracking_mse(rows, "spirob", ControllerKind::IcQp);
    let helix_failed = row(rows, "helix", ControllerKind::ClfQp)
        .episodes
        .iter()
        .filter(|e| e.spec.experiment == Experiment::Tracking && e.failed())
        .count();
    let finger_ok = f_soft < f_ic;
    let spirob_ok = s_soft * SPIROB_MSE_FACTOR <= s_icqp;
    let helix_ok = helix_failed > 0;
    outcome(
        finger_ok && spirob_ok && helix_ok,
        format!(
            "finger soft-id {f_soft:.2} < ic {f_ic:.2} cm2: {finger_ok}; spirob soft-id {s_soft:.2} x{SPIROB_MSE_FACTOR} <= ic-qp {s_icqp:.2} cm2: {spirob_ok}; helix clf-qp failed convergence on {helix_failed} tracking episodes: {helix_ok}"
        ),
    )
}

fn bounds(runs: &[Vec<MetricSummary>]) -> Outcome {
    let episodes = runs.iter().flatten().flat_map(|r| &r.episodes);
    let (count, samples) = episodes.fold((0, 0), |(v, s), e| (v + e.bound_violations, s + e.samples));
    outcome(count == 0, format!("{count} input samples outside bounds among {samples}"))
}

fn read_outputs(dir: &Path, names: &[String]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).expect("benchmark CSV")).collect()
}

fn determinism(names: &[String], a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (read_outputs(a, names), read_outputs(b, names));
    let differing: Vec<&String> = names.iter().zip(fa.iter().zip(&fb)).filter(|(_, (x, y))| x != y).map(|(n, _)| n).collect();
    outcome(
        differing.is_empty(),
        format!("{} CSV files compared, {} differ{}", names.len(), differing.len(), match differing.first() {
            Some(n) => format!(" (first: {n})"),
            None => String::new(),
        }),
    )
}

fn throughput() -> Outcome {
    let helix = robot("helix");
    let kind = ControllerKind::SoftIdClfQp;
    let start = Instant::now();
    let result = run_episode(&helix, kind, helix.gains(kind), EpisodeSpec::setpoint(0.0), &SimConfig::default());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        result.is_ok() && secs < HELIX_EPISODE_LIMIT_S,
        format!("10 s Helix soft-id-clf-qp episode in {secs:.1} s (limit {HELIX_EPISODE_LIMIT_S:.0} s)"),
    )
}

fn full_benchmark(robots: &[Robot], dir: &Path) -> (Vec<MetricSummary>, Vec<String>, f64) {
    let cells: Vec<BenchmarkCell> = robots
        .iter()
        .flat_map(|r| {
            ControllerKind::ALL.iter().map(move |&kind| BenchmarkCell {
                robot: r,
                controller: kind,
                gains: r.gains(kind).clone(),
            })
        })
        .collect();
    let episodes = [grid(Experiment::Setpoint), grid(Experiment::Tracking)].concat();
    let out = OutputOptions {
        dir,
        csv: CsvOptions { timing: false },
    };
    let start = Instant::now();
    let rows = run_benchmark(&cells, &episodes, &SimConfig::default(), Some(&out)).expect("benchmark runs");
    let names = cells
        .iter()
        .flat_map(|c| episodes.iter().map(move |&e| episode_file_name(c.robot.name(), c.controller, e)))
        .collect();
    (rows, names, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("CARE correctness", care()),
        ("QP correctness", qp()),
        ("dynamics validity", dynamics()),
        ("IO-linearization fidelity", io_linearization()),
    ];

    let robots: Vec<Robot> = ROBOTS.iter().map(|n| robot(n)).collect();
    let dir_a = tempfile::tempdir().expect("temp dir");
    let dir_b = tempfile::tempdir().expect("temp dir");
    let (rows_a, names, secs_a) = full_benchmark(&robots, dir_a.path());
    let (rows_b, _, secs_b) = full_benchmark(&robots, dir_b.path());
    eprintln!("full benchmark: {} files, {secs_a:.1} s and {secs_b:.1} s", names.len());

    results.push(("CLF certificate", certificate(&rows_a)));
    results.push(("set-point regulation", setpoint(&rows_a, &robots)));
    results.push(("tracking ordering", tracking(&rows_a)));
    results.push(("input bounds", bounds(&[rows_a.clone(), rows_b])));
    results.push(("determinism", determinism(&names, dir_a.path(), dir_b.path())));
    results.push(("throughput", throughput()));

    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
