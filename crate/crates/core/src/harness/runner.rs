//! Fixed-rate closed loop: sensing → controller → simulator.

use std::time::Instant;

use nalgebra::DVector;

use crate::controllers::{
    clamp_command, run_controller, tracking_target, ControllerInput, ControllerKind,
    ControllerOutput, SolveStatus, TrackingObjective,
};
use crate::error::{Error, Result};
use crate::kinematics::point_position;
use crate::qp::{QpSolver, WarmStart};
use crate::quasistatic::{motion_projector, simulate_step, weighted_pseudoinverse, ContactSet};
use crate::sensing::{
    force_discrepancy, forces_of, update_damping_weight, ContactForce, ContactSensor, DampingState,
};

use super::scenario::{Reference, ReferenceSample, Scenario};

/// One control tick. Configuration-valued fields describe the state after the
/// tick's command has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub tick: usize,
    /// [s]
    pub time: f64,
    pub q: Vec<f64>,
    pub q_cmd: Vec<f64>,
    /// Joint-space target of the tracking term.
    pub q_ref: Vec<f64>,
    /// Largest true contact force magnitude [N].
    pub true_force_max: f64,
    pub true_force_total: f64,
    pub true_contacts: usize,
    pub est_force_max: f64,
    pub est_contacts: usize,
    pub pred_force_max: f64,
    pub pred_contacts: usize,
    pub e_lambda: f64,
    pub w: f64,
    /// Joint error [rad] for joint references, position error [m] for task references.
    pub tracking_error: f64,
    /// Finite-difference joint velocity norm [rad/s].
    pub v_q_norm: f64,
    pub solver_status: SolveStatus,
    pub solver_iterations: usize,
    pub kkt_residual: f64,
    pub fault: bool,
    /// `||(q_pred - q) - (I - J^{K+} J)(q_cmd_next - q)||_inf` of the controller's prediction.
    pub projection_gap: f64,
    /// Drop of the predicted max force across the tick, against its rate-bound limit.
    pub release_drop: f64,
    pub release_bound: f64,
    pub min_signed_distance: f64,
    pub sim_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// The scenario as run, with overrides applied.
    pub scenario: Scenario,
    pub logs: Vec<StepLog>,
    /// Controller compute time per tick [s]; kept apart from the logs so they stay reproducible.
    pub controller_seconds: Vec<f64>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub controller: Option<ControllerKind>,
}

impl RunOverrides {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        if let Some(seed) = self.seed {
            s.rng_seed = seed;
        }
        if let Some(kind) = self.controller {
            s.controller = kind;
        }
        s
    }
}

fn max_magnitude(forces: &[ContactForce]) -> f64 {
    forces.iter().fold(0.0, |m, f| m.max(f.magnitude.abs()))
}

fn objective_at(scenario: &Scenario, t: f64) -> TrackingObjective {
    match (&scenario.reference, scenario.reference.sample(t)) {
        (_, ReferenceSample::Joint(q_ref)) => TrackingObjective::Joint { q_ref },
        (
            Reference::Task {
                point,
                regularization,
                ..
            },
            ReferenceSample::Task(p_ref),
        ) => TrackingObjective::Task {
            point: *point,
            p_ref,
            regularization: *regularization,
        },
        _ => unreachable!("sample kind follows reference kind"),
    }
}

fn projection_gap(
    output: &ControllerOutput,
    q: &DVector<f64>,
    stiffness: &DVector<f64>,
) -> Result<f64> {
    let dq_cmd = &output.q_cmd - q;
    let moved = &output.q_pred - q;
    let gap = if output.contacts.is_empty() {
        moved - dq_cmd
    } else {
        moved - motion_projector(&output.contacts.jacobian, stiffness)? * dq_cmd
    };
    Ok(gap.amax())
}

/// `(||lambda_now||_inf - ||lambda_next||_inf, ||G J||_inf ||rate bound||_inf)` where
/// `lambda_now` is the model force at the previous command and `G J = (J^{K+})' K`.
fn release_check(
    output: &ControllerOutput,
    q: &DVector<f64>,
    q_cmd_prev: &DVector<f64>,
    scenario: &Scenario,
) -> Result<(f64, f64)> {
    if output.contacts.is_empty() {
        return Ok((0.0, 0.0));
    }
    let stiffness = scenario.robot.stiffness();
    let pinv = weighted_pseudoinverse(&output.contacts.jacobian, &stiffness)?;
    let mut gain = pinv.transpose();
    for (mut col, k) in gain.column_iter_mut().zip(stiffness.iter()) {
        col *= *k;
    }
    let now = -(&gain * (q_cmd_prev - q));
    let next = max_magnitude(&output.lambda_pred);
    let gain_norm = gain
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let rate = scenario
        .robot
        .rate_bound
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    Ok((now.amax() - next, gain_norm * rate))
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    run_scenario_with(scenario, |_| {})
}

/// Runs the loop for `duration * control_rate` ticks, calling `observer` after each tick.
///
/// Controller and simulator failures are logged as faults: the previous
/// command is held and, for simulator failures, the arm stays put. The run is
/// aborted once more than `max_fault_ticks` consecutive ticks are faulty.
pub fn run_scenario_with(
    scenario: &Scenario,
    mut observer: impl FnMut(&StepLog),
) -> Result<RunResult> {
    scenario.validate()?;
    let model = &scenario.robot;
    let scene = scenario.scene();
    let solver = QpSolver::default();
    let dt = scenario.dt();
    let stiffness = model.stiffness();

    let mut sensing = scenario.sensing.clone();
    sensing.rng_seed = scenario.rng_seed;
    let mut sensor = ContactSensor::new(sensing);

    let q_start = scenario.initial_configuration()?;
    let settled = simulate_step(
        &scene,
        model,
        &q_start,
        &q_start,
        &scenario.simulator,
        &solver,
    )?;
    let mut q = settled.q;
    let mut truth = settled.contacts;
    let mut q_cmd = q_start;
    let mut damping = DampingState::new(scenario.damping)?;
    let mut lambda_pred: Vec<ContactForce> = Vec::new();
    let mut warm_start: Option<WarmStart> = None;

    let ticks = scenario.num_ticks();
    let mut logs = Vec::with_capacity(ticks);
    let mut controller_seconds = Vec::with_capacity(ticks);
    let mut consecutive_faults = 0usize;
    let mut aborted = None;

    for tick in 0..ticks {
        let t_next = (tick + 1) as f64 * dt;
        let estimate = sensor.measure(model, &q, &truth, tick as u64)?;
        let estimated_forces = forces_of(&estimate);
        let e_lambda = force_discrepancy(&lambda_pred, &estimated_forces, damping.config.a)?;
        damping = update_damping_weight(&damping, e_lambda)?;
        let contacts = ContactSet::build(model, &q, estimate)?;

        let objective = objective_at(scenario, t_next);
        let input = ControllerInput {
            tick: tick as u64,
            model,
            q: q.clone(),
            q_cmd: q_cmd.clone(),
            objective,
            contacts,
            damping,
            lambda_pred: lambda_pred.clone(),
            warm_start: warm_start.take(),
        };
        let started = Instant::now();
        let result = run_controller(
            scenario.controller,
            &input,
            &scenario.controller_params,
            &solver,
        );
        controller_seconds.push(started.elapsed().as_secs_f64());

        let mut fault = false;
        let output = match result {
            Ok(out) => {
                fault |= out.diagnostics.status == SolveStatus::Held;
                out
            }
            Err(_) => {
                fault = true;
                let held = clamp_command(model, &q_cmd, &q_cmd);
                ControllerOutput {
                    q_pred: held.clone(),
                    q_cmd: held,
                    lambda_pred: Vec::new(),
                    contacts: ContactSet::empty(model.num_joints()),
                    diagnostics: crate::controllers::Diagnostics {
                        status: SolveStatus::Held,
                        iterations: 0,
                        kkt_residual: f64::NAN,
                        fault: Some("controller error".into()),
                        warm_start: None,
                    },
                }
            }
        };
        let projection_gap = projection_gap(&output, &q, &stiffness)?;
        let (release_drop, release_bound) = release_check(&output, &q, &q_cmd, scenario)?;

        let (q_next, truth_next, min_signed_distance, sim_iterations) = match simulate_step(
            &scene,
            model,
            &q,
            &output.q_cmd,
            &scenario.simulator,
            &solver,
        ) {
            Ok(sim) => (sim.q, sim.contacts, sim.min_signed_distance, sim.iterations),
            Err(_) => {
                fault = true;
                let msd = scene.min_signed_distance(model, &q)?;
                (
                    q.clone(),
                    truth.clone(),
                    msd,
                    scenario.simulator.max_iterations,
                )
            }
        };

        let true_forces: Vec<f64> = truth_next.all_contacts().map(|c| c.magnitude).collect();
        let target = tracking_target(&input)?;
        let tracking_error = match &input.objective {
            TrackingObjective::Joint { q_ref } => (&q_next - q_ref).norm(),
            TrackingObjective::Task { point, p_ref, .. } => {
                (point_position(model, &q_next, point)? - p_ref).norm()
            }
        };
        let log = StepLog {
            tick,
            time: t_next,
            q: q_next.iter().copied().collect(),
            q_cmd: output.q_cmd.iter().copied().collect(),
            q_ref: target.iter().copied().collect(),
            true_force_max: true_forces.iter().cloned().fold(0.0, f64::max),
            true_force_total: true_forces.iter().sum(),
            true_contacts: true_forces.len(),
            est_force_max: max_magnitude(&estimated_forces),
            est_contacts: estimated_forces.len(),
            pred_force_max: max_magnitude(&output.lambda_pred),
            pred_contacts: output.lambda_pred.len(),
            e_lambda,
            w: damping.w,
            tracking_error,
            v_q_norm: (&q_next - &q).norm() / dt,
            solver_status: output.diagnostics.status,
            solver_iterations: output.diagnostics.iterations,
            kkt_residual: output.diagnostics.kkt_residual,
            fault,
            projection_gap,
            release_drop,
            release_bound,
            min_signed_distance,
            sim_iterations,
        };
        observer(&log);
        logs.push(log);

        q = q_next;
        truth = truth_next;
        q_cmd = output.q_cmd;
        lambda_pred = output.lambda_pred;
        warm_start = output.diagnostics.warm_start;

        consecutive_faults = if fault { consecutive_faults + 1 } else { 0 };
        if consecutive_faults > scenario.max_fault_ticks {
            aborted = Some(format!(
                "aborted at tick {tick}: {consecutive_faults} consecutive faulty ticks"
            ));
            break;
        }
    }

    Ok(RunResult {
        scenario: scenario.clone(),
        logs,
        controller_seconds,
        aborted,
    })
}

/// Runs `scenario` under each controller for seeds `base_seed .. base_seed + repeats`.
/// Runs are independent and execute on separate threads.
pub fn run_matrix(
    scenario: &Scenario,
    controllers: &[ControllerKind],
    repeats: usize,
) -> Result<Vec<(ControllerKind, Vec<RunResult>)>> {
    if controllers.len() < 2 {
        return Err(Error::InvalidInput(
            "comparison needs at least two controllers".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be >= 1".into()));
    }
    let jobs: Vec<(ControllerKind, u64)> = controllers
        .iter()
        .flat_map(|&k| (0..repeats as u64).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<RunResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(kind, r)| {
                let overrides = RunOverrides {
                    seed: Some(scenario.rng_seed.wrapping_add(r)),
                    controller: Some(kind),
                };
                let s = overrides.apply(scenario);
                scope.spawn(move || run_scenario(&s))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let mut grouped: Vec<(ControllerKind, Vec<RunResult>)> =
        controllers.iter().map(|&k| (k, Vec::new())).collect();
    for ((kind, _), result) in jobs.iter().zip(results) {
        let slot = grouped
            .iter_mut()
            .find(|(k, _)| k == kind)
            .expect("controller listed");
        slot.1.push(result?);
    }
    Ok(grouped)
}
