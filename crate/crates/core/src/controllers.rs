//! The four controllers compared by the harness.
//!
//! Every controller maps the measured configuration, the previous command, a
//! tracking objective and the estimated contacts to the next joint command.
//! They differ in how contacts enter:
//!
//! - [`control_greedy`] ignores them;
//! - [`control_nullspace`] pins each contact force to a target with a
//!   stiffness-consistent projection and drops contacts the reference leaves;
//! - [`control_frictionless_qp`] and [`control_frictional_qp`] optimize over
//!   `(q_next, q_cmd_next, lambda_next)` subject to the quasistatic model, an
//!   upper bound on the contact forces and the command rate bound.
//!
//! The QP decision vector is laid out as `[q_next (n), q_cmd_next (n), lambda (m)]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Point2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{point_jacobian, point_position, BodyPoint, RobotModel};
use crate::qp::{QpProblem, QpSolver, QpStatus, WarmStart};
use crate::quasistatic::{equilibrium_step, ContactSet};
use crate::sensing::{ContactForce, DampingState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Greedy,
    Nullspace,
    FrictionlessQp,
    FrictionalQp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Greedy,
        ControllerKind::Nullspace,
        ControllerKind::FrictionlessQp,
        ControllerKind::FrictionalQp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Greedy => "greedy",
            ControllerKind::Nullspace => "nullspace",
            ControllerKind::FrictionlessQp => "frictionless_qp",
            ControllerKind::FrictionalQp => "frictional_qp",
        }
    }

    pub fn uses_qp(&self) -> bool {
        matches!(
            self,
            ControllerKind::FrictionlessQp | ControllerKind::FrictionalQp
        )
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().replace('-', "_");
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == wanted)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown controller '{s}' (expected greedy, nullspace, frictionless_qp or frictional_qp)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    /// Upper bound on every contact force magnitude [N].
    pub lambda_max: f64,
    /// Weight of the command term in the frictionless QP objective.
    pub epsilon: f64,
    /// Contact force the null-space controller regulates to; defaults to `lambda_max`.
    pub lambda_target: Option<f64>,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            lambda_max: 15.0,
            epsilon: 1e-2,
            lambda_target: None,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max.is_finite() && self.lambda_max > 0.0) {
            return Err(Error::InvalidInput("lambda_max must be > 0".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be > 0".into()));
        }
        if let Some(t) = self.lambda_target {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidInput("lambda_target must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn target_force(&self) -> f64 {
        self.lambda_target.unwrap_or(self.lambda_max)
    }
}

/// What the controller tracks at the next tick.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackingObjective {
    Joint {
        q_ref: DVector<f64>,
    },
    /// Planar position of a body point, linearized about the measured configuration.
    Task {
        point: BodyPoint,
        p_ref: Point2<f64>,
        /// Weight of `||q_cmd_next - q_cmd||^2`; keeps the cost strictly convex.
        regularization: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ControllerInput<'a> {
    pub tick: u64,
    pub model: &'a RobotModel,
    /// Measured configuration.
    pub q: DVector<f64>,
    /// Command sent at the previous tick.
    pub q_cmd: DVector<f64>,
    pub objective: TrackingObjective,
    /// Estimated contacts with their Jacobian evaluated at `q`.
    pub contacts: ContactSet,
    pub damping: DampingState,
    /// Forces predicted at the previous tick.
    pub lambda_pred: Vec<ContactForce>,
    pub warm_start: Option<WarmStart>,
}

impl ControllerInput<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.num_joints();
        check_len("q", n, self.q.len())?;
        check_len("q_cmd", n, self.q_cmd.len())?;
        check_len(
            "contact jacobian columns",
            n,
            self.contacts.jacobian.ncols(),
        )?;
        if self
            .q
            .iter()
            .chain(self.q_cmd.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("q and q_cmd must be finite".into()));
        }
        match &self.objective {
            TrackingObjective::Joint { q_ref } => {
                check_len("q_ref", n, q_ref.len())?;
                if q_ref.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("q_ref must be finite".into()));
                }
            }
            TrackingObjective::Task {
                point,
                p_ref,
                regularization,
            } => {
                self.model.check_point(point)?;
                if !(p_ref.x.is_finite() && p_ref.y.is_finite()) {
                    return Err(Error::InvalidInput("p_ref must be finite".into()));
                }
                if !(regularization.is_finite() && *regularization > 0.0) {
                    return Err(Error::InvalidInput(
                        "task regularization must be > 0".into(),
                    ));
                }
            }
        }
        self.damping.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Closed-form controller; no QP involved.
    Direct,
    Optimal,
    /// The QP failed and the previous command was kept.
    Held,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Direct => "direct",
            SolveStatus::Optimal => "optimal",
            SolveStatus::Held => "held",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub fault: Option<String>,
    pub warm_start: Option<WarmStart>,
}

impl Diagnostics {
    fn direct() -> Self {
        Self {
            status: SolveStatus::Direct,
            iterations: 0,
            kkt_residual: 0.0,
            fault: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub q_cmd: DVector<f64>,
    /// Configuration predicted by the bilateral model.
    pub q_pred: DVector<f64>,
    /// Predicted force per constrained contact; next tick's `lambda_pred`.
    pub lambda_pred: Vec<ContactForce>,
    /// Contacts the prediction was made with.
    pub contacts: ContactSet,
    pub diagnostics: Diagnostics,
}

/// `1/2 v' H v + g' v` over a joint-space vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
}

impl QuadraticCost {
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.hessian * v)) + self.gradient.dot(v)
    }

    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let chol =
            self.hessian.clone().cholesky().ok_or_else(|| {
                Error::RankDeficient("tracking cost is not strictly convex".into())
            })?;
        Ok(-chol.solve(&self.gradient))
    }
}

/// Linearized end-effector tracking cost over `q_cmd_next`:
///
/// ```text
///     ||p(q) + J_p(q) (v - q) - p_ref||^2 + rho ||v - q_cmd||^2
/// ```
pub fn assemble_task_space_objective(
    input: &ControllerInput,
    objective: &TrackingObjective,
) -> Result<QuadraticCost> {
    let TrackingObjective::Task {
        point,
        p_ref,
        regularization,
    } = objective
    else {
        return Err(Error::InvalidInput(
            "task-space cost needs a task objective".into(),
        ));
    };
    let n = input.model.num_joints();
    let p0 = point_position(input.model, &input.q, point)?;
    let jp = point_jacobian(input.model, &input.q, point)?;
    let jp = DMatrix::from_column_slice(2, n, jp.as_slice());
    let offset = p0.coords - p_ref.coords;
    let offset = DVector::from_column_slice(offset.as_slice()) - &jp * &input.q;
    let hessian = (jp.tr_mul(&jp) + DMatrix::identity(n, n) * *regularization) * 2.0;
    let gradient = (jp.tr_mul(&offset) - &input.q_cmd * *regularization) * 2.0;
    Ok(QuadraticCost { hessian, gradient })
}

/// The tracking term of the active objective, `||v - q_ref||^2` in joint mode.
pub fn tracking_cost(input: &ControllerInput) -> Result<QuadraticCost> {
    match &input.objective {
        TrackingObjective::Joint { q_ref } => {
            let n = q_ref.len();
            Ok(QuadraticCost {
                hessian: DMatrix::identity(n, n) * 2.0,
                gradient: q_ref * -2.0,
            })
        }
        task => assemble_task_space_objective(input, task),
    }
}

/// Joint configuration the tracking term alone would choose.
pub fn tracking_target(input: &ControllerInput) -> Result<DVector<f64>> {
    match &input.objective {
        TrackingObjective::Joint { q_ref } => Ok(q_ref.clone()),
        _ => tracking_cost(input)?.minimizer(),
    }
}

/// Clamps `target` into the joint limits, then into the rate window around `q_cmd`.
pub fn clamp_command(
    model: &RobotModel,
    q_cmd: &DVector<f64>,
    target: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(target.len(), |i, _| {
        let mut v = target[i];
        if let Some(limits) = &model.joint_limits {
            v = v.clamp(limits[i][0], limits[i][1]);
        }
        let step = model.rate_bound[i];
        v.clamp(q_cmd[i] - step, q_cmd[i] + step)
    })
}

fn tagged_forces(contacts: &ContactSet, lambda: &DVector<f64>) -> Vec<ContactForce> {
    contacts
        .contacts
        .iter()
        .zip(lambda.iter())
        .map(|(c, &magnitude)| ContactForce {
            id: c.id,
            magnitude,
        })
        .collect()
}

fn predicted(
    input: &ControllerInput,
    contacts: ContactSet,
    q_cmd: DVector<f64>,
    diagnostics: Diagnostics,
) -> Result<ControllerOutput> {
    let eq = equilibrium_step(&input.q, &q_cmd, &input.model.stiffness(), &contacts)?;
    Ok(ControllerOutput {
        lambda_pred: tagged_forces(&contacts, &eq.lambda),
        q_pred: eq.q_next,
        q_cmd,
        contacts,
        diagnostics,
    })
}

/// Moves the command toward the tracking target as fast as the rate bound
/// allows, ignoring contacts. The predicted forces are for logging only.
pub fn control_greedy(input: &ControllerInput) -> Result<ControllerOutput> {
    input.validate()?;
    let target = tracking_target(input)?;
    let q_cmd = clamp_command(input.model, &input.q_cmd, &target);
    predicted(input, input.contacts.clone(), q_cmd, Diagnostics::direct())
}

/// Null-space projection baseline.
///
/// Contacts the reference moves away from (`J_u,i (q_ref - q) > 0`) are
/// dropped. For the rest, the command is
///
/// ```text
///     q_cmd_next = q + (I - J^{K+} J)(q_ref - q) - K^-1 J' lambda_target
/// ```
///
/// which tracks the reference inside the contact manifold while holding every
/// contact force at `lambda_target`. The result is rate clamped.
pub fn control_nullspace(input: &ControllerInput, lambda_target: f64) -> Result<ControllerOutput> {
    input.validate()?;
    if !(lambda_target.is_finite() && lambda_target >= 0.0) {
        return Err(Error::InvalidInput("lambda_target must be >= 0".into()));
    }
    let target = tracking_target(input)?;
    let dq_ref = &target - &input.q;
    let n = input.model.num_joints();

    let rows = &input.contacts.jacobian;
    let keep: Vec<usize> = (0..rows.nrows())
        .filter(|&i| rows.row(i).dot(&dq_ref.transpose()) <= 0.0)
        .collect();
    let mut kept = ContactSet::empty(n);
    kept.contacts = keep
        .iter()
        .map(|&i| input.contacts.contacts[i].clone())
        .collect();
    kept.jacobian = DMatrix::from_fn(keep.len(), n, |r, c| rows[(keep[r], c)]);

    let raw = if kept.is_empty() {
        target
    } else {
        let stiffness = input.model.stiffness();
        let projector = crate::quasistatic::motion_projector(&kept.jacobian, &stiffness)?;
        let push = kept
            .jacobian
            .tr_mul(&DVector::from_element(keep.len(), lambda_target));
        let force_step = push.component_div(&stiffness);
        &input.q + projector * &dq_ref - force_step
    };
    let q_cmd = clamp_command(input.model, &input.q_cmd, &raw);
    predicted(input, kept, q_cmd, Diagnostics::direct())
}

/// Builds the QP shared by both optimizing controllers:
///
/// ```text
///     minimize    cost_q(q_next) + cost_cmd(q_cmd_next)
///     subject to  q_next - q_cmd_next - K^-1 J' lambda = 0
///                 J q_next = J q
///                 lambda <= lambda_max
///                 |q_cmd_next - q_cmd| <= rate bound,  joint limits on q_cmd_next
/// ```
///
/// The first equality is the stiffness balance `K (q_next - q_cmd_next) = J' lambda`
/// divided through by `K`.
pub fn build_contact_qp(
    input: &ControllerInput,
    params: &ControllerParams,
    cost_q: Option<&QuadraticCost>,
    cost_cmd: &QuadraticCost,
) -> Result<QpProblem> {
    let model = input.model;
    let n = model.num_joints();
    let j = &input.contacts.jacobian;
    let m = j.nrows();
    let dim = 2 * n + m;

    let mut p = DMatrix::zeros(dim, dim);
    let mut c = DVector::zeros(dim);
    if let Some(cost) = cost_q {
        p.view_mut((0, 0), (n, n)).copy_from(&cost.hessian);
        c.rows_mut(0, n).copy_from(&cost.gradient);
    }
    p.view_mut((n, n), (n, n)).copy_from(&cost_cmd.hessian);
    c.rows_mut(n, n).copy_from(&cost_cmd.gradient);

    let stiffness = model.stiffness();
    let mut a_eq = DMatrix::zeros(n + m, dim);
    let mut b_eq = DVector::zeros(n + m);
    for i in 0..n {
        a_eq[(i, i)] = 1.0;
        a_eq[(i, n + i)] = -1.0;
        for k in 0..m {
            a_eq[(i, 2 * n + k)] = -j[(k, i)] / stiffness[i];
        }
    }
    a_eq.view_mut((n, 0), (m, n)).copy_from(j);
    b_eq.rows_mut(n, m).copy_from(&(j * &input.q));

    let limits = model.joint_limits.as_ref();
    let rows_in = m + 2 * n + if limits.is_some() { 2 * n } else { 0 };
    let mut a_in = DMatrix::zeros(rows_in, dim);
    let mut b_in = DVector::zeros(rows_in);
    for k in 0..m {
        a_in[(k, 2 * n + k)] = 1.0;
        b_in[k] = params.lambda_max;
    }
    for i in 0..n {
        let r = m + 2 * i;
        a_in[(r, n + i)] = 1.0;
        b_in[r] = input.q_cmd[i] + model.rate_bound[i];
        a_in[(r + 1, n + i)] = -1.0;
        b_in[r + 1] = -(input.q_cmd[i] - model.rate_bound[i]);
    }
    if let Some(limits) = limits {
        for (i, [lo, hi]) in limits.iter().enumerate() {
            let r = m + 2 * n + 2 * i;
            a_in[(r, n + i)] = 1.0;
            b_in[r] = *hi;
            a_in[(r + 1, n + i)] = -1.0;
            b_in[r + 1] = -lo;
        }
    }

    let mut problem = QpProblem::new(p, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in);
    if let Some(w) = &input.warm_start {
        problem = problem.with_warm_start(w.clone());
    }
    Ok(problem)
}

fn solve_contact_qp(
    input: &ControllerInput,
    problem: &QpProblem,
    solver: &QpSolver,
) -> Result<ControllerOutput> {
    let n = input.model.num_joints();
    let m = input.contacts.len();
    let hold = |fault: String, iterations: usize, kkt_residual: f64| -> Result<ControllerOutput> {
        let q_cmd = clamp_command(input.model, &input.q_cmd, &input.q_cmd);
        let diagnostics = Diagnostics {
            status: SolveStatus::Held,
            iterations,
            kkt_residual,
            fault: Some(fault),
            warm_start: None,
        };
        predicted(input, input.contacts.clone(), q_cmd, diagnostics)
    };
    let sol = match solver.solve(problem) {
        Ok(sol) => sol,
        Err(e) => return hold(format!("qp error: {e}"), 0, f64::NAN),
    };
    if sol.status != QpStatus::Optimal {
        return hold(
            format!("qp {}", sol.status.as_str()),
            sol.iterations,
            sol.kkt_residual,
        );
    }
    let q_pred = sol.x.rows(0, n).into_owned();
    // the rate rows are satisfied to solver precision; snap them exactly
    let q_cmd = clamp_command(input.model, &input.q_cmd, &sol.x.rows(n, n).into_owned());
    let lambda = sol.x.rows(2 * n, m).into_owned();
    Ok(ControllerOutput {
        lambda_pred: tagged_forces(&input.contacts, &lambda),
        q_pred,
        q_cmd,
        contacts: input.contacts.clone(),
        diagnostics: Diagnostics {
            status: SolveStatus::Optimal,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            fault: None,
            warm_start: Some(sol.warm_start()),
        },
    })
}

/// Objective `T(q_next) + epsilon T(q_cmd_next)` for the tracking term `T`.
pub fn frictionless_qp_problem(
    input: &ControllerInput,
    params: &ControllerParams,
) -> Result<QpProblem> {
    let cost = tracking_cost(input)?;
    let cmd = QuadraticCost {
        hessian: &cost.hessian * params.epsilon,
        gradient: &cost.gradient * params.epsilon,
    };
    build_contact_qp(input, params, Some(&cost), &cmd)
}

/// Objective `T(q_cmd_next) + w ||q_cmd_next - q_cmd||^2`.
pub fn frictional_qp_problem(
    input: &ControllerInput,
    params: &ControllerParams,
) -> Result<QpProblem> {
    let mut cost = tracking_cost(input)?;
    let w = input.damping.w;
    let n = input.model.num_joints();
    cost.hessian += DMatrix::identity(n, n) * (2.0 * w);
    cost.gradient -= &input.q_cmd * (2.0 * w);
    build_contact_qp(input, params, None, &cost)
}

pub fn control_frictionless_qp(
    input: &ControllerInput,
    params: &ControllerParams,
    solver: &QpSolver,
) -> Result<ControllerOutput> {
    input.validate()?;
    params.validate()?;
    let problem = frictionless_qp_problem(input, params)?;
    solve_contact_qp(input, &problem, solver)
}

pub fn control_frictional_qp(
    input: &ControllerInput,
    params: &ControllerParams,
    solver: &QpSolver,
) -> Result<ControllerOutput> {
    input.validate()?;
    params.validate()?;
    let problem = frictional_qp_problem(input, params)?;
    solve_contact_qp(input, &problem, solver)
}

pub fn run_controller(
    kind: ControllerKind,
    input: &ControllerInput,
    params: &ControllerParams,
    solver: &QpSolver,
) -> Result<ControllerOutput> {
    match kind {
        ControllerKind::Greedy => control_greedy(input),
        ControllerKind::Nullspace => {
            params.validate()?;
            control_nullspace(input, params.target_force())
        }
        ControllerKind::FrictionlessQp => control_frictionless_qp(input, params, solver),
        ControllerKind::FrictionalQp => control_frictional_qp(input, params, solver),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::kkt_residual;
    use crate::quasistatic::{build_contact_jacobian, motion_projector};
    use crate::sensing::DampingConfig;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn arm(rate: f64) -> RobotModel {
        RobotModel::new(vec![1.0, 1.0], vec![800.0, 600.0], vec![rate; 2]).unwrap()
    }

    fn input<'a>(
        model: &'a RobotModel,
        q: DVector<f64>,
        q_ref: DVector<f64>,
        contacts: ContactSet,
    ) -> ControllerInput<'a> {
        ControllerInput {
            tick: 0,
            model,
            q_cmd: q.clone(),
            q,
            objective: TrackingObjective::Joint { q_ref },
            contacts,
            damping: DampingState::new(DampingConfig::default()).unwrap(),
            lambda_pred: Vec::new(),
            warm_start: None,
        }
    }

    /// Tip contact whose force on the arm points along `-y` (obstacle above).
    fn tip_contact(model: &RobotModel, q: &DVector<f64>) -> ContactSet {
        build_contact_jacobian(model, q, &[(model.end_effector(), -Vector2::y())]).unwrap()
    }

    const Q0: [f64; 2] = [0.3, 0.5];

    #[test]
    fn greedy_examples() {
        let m = arm(0.01);
        let inp = input(&m, dv(&Q0), dv(&[0.305, 0.495]), ContactSet::empty(2));
        assert_eq!(control_greedy(&inp).unwrap().q_cmd, dv(&[0.305, 0.495]));
        let inp = input(&m, dv(&Q0), dv(&[0.4, 0.5]), ContactSet::empty(2));
        let out = control_greedy(&inp).unwrap();
        assert_abs_diff_eq!(out.q_cmd[0] - 0.3, 0.01, epsilon = 1e-15);
        assert_eq!(out.q_cmd[1], 0.5);
    }

    #[test]
    fn greedy_force_grows_with_penetration() {
        let m = arm(1.0);
        let q = dv(&Q0);
        let set = tip_contact(&m, &q);
        // pushing the tip up into the obstacle
        let small = control_greedy(&input(&m, q.clone(), dv(&[0.31, 0.5]), set.clone())).unwrap();
        let large = control_greedy(&input(&m, q.clone(), dv(&[0.33, 0.5]), set)).unwrap();
        let (a, b) = (
            small.lambda_pred[0].magnitude,
            large.lambda_pred[0].magnitude,
        );
        assert!(a > 0.0);
        assert_abs_diff_eq!(b / a, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn nullspace_without_contacts_is_greedy() {
        let m = arm(0.01);
        let inp = input(&m, dv(&Q0), dv(&[0.4, 0.45]), ContactSet::empty(2));
        assert_eq!(
            control_nullspace(&inp, 15.0).unwrap(),
            control_greedy(&inp).unwrap()
        );
    }

    #[test]
    fn nullspace_regulates_force() {
        let m = arm(1.0);
        let q = dv(&Q0);
        let inp = input(&m, q.clone(), dv(&[0.32, 0.49]), tip_contact(&m, &q));
        let out = control_nullspace(&inp, 15.0).unwrap();
        assert_eq!(out.contacts.len(), 1);
        assert_abs_diff_eq!(out.lambda_pred[0].magnitude, 15.0, epsilon = 1e-9);
    }

    #[test]
    fn nullspace_drops_contacts_on_break_away() {
        let m = arm(1.0);
        let q = dv(&Q0);
        let set = tip_contact(&m, &q);
        // tip moves down, away from the obstacle above
        let q_ref = dv(&[0.25, 0.5]);
        assert!(set.jacobian.row(0).dot(&(&q_ref - &q).transpose()) > 0.0);
        let inp = input(&m, q, q_ref.clone(), set);
        let out = control_nullspace(&inp, 15.0).unwrap();
        assert!(out.contacts.is_empty());
        assert_eq!(out.q_cmd, q_ref);
    }

    #[test]
    fn frictionless_qp_free_space_tracks() {
        let m = arm(0.01);
        let inp = input(&m, dv(&Q0), dv(&[0.305, 0.495]), ContactSet::empty(2));
        let out = control_frictionless_qp(&inp, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert_eq!(out.diagnostics.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(out.q_cmd, dv(&[0.305, 0.495]), epsilon = 1e-8);
        assert_abs_diff_eq!(out.q_pred, dv(&[0.305, 0.495]), epsilon = 1e-8);
    }

    #[test]
    fn frictionless_qp_caps_force_and_matches_equilibrium() {
        let m = arm(0.5);
        let q = dv(&Q0);
        let inp = input(&m, q.clone(), dv(&[0.6, 0.5]), tip_contact(&m, &q));
        let params = ControllerParams::default();
        let problem = frictionless_qp_problem(&inp, &params).unwrap();
        let out = control_frictionless_qp(&inp, &params, &QpSolver::default()).unwrap();
        assert_abs_diff_eq!(out.lambda_pred[0].magnitude, 15.0, epsilon = 1e-8);
        assert!(out.diagnostics.kkt_residual <= 1e-8);
        let sol = QpSolver::default().solve(&problem).unwrap();
        assert!(kkt_residual(&problem, &sol.x, &sol.y_eq, &sol.y_in) <= 1e-8);

        let eq = equilibrium_step(&q, &out.q_cmd, &m.stiffness(), &out.contacts).unwrap();
        assert_abs_diff_eq!(eq.q_next, out.q_pred, epsilon = 1e-8);
        assert_abs_diff_eq!(eq.lambda[0], out.lambda_pred[0].magnitude, epsilon = 1e-8);

        let proj = motion_projector(&out.contacts.jacobian, &m.stiffness()).unwrap();
        let gap = (&out.q_pred - &q) - proj * (&out.q_cmd - &q);
        assert!(gap.amax() <= 1e-8);
    }

    #[test]
    fn frictional_qp_damping_limits() {
        let m = arm(0.01);
        let inp = input(&m, dv(&Q0), dv(&[0.4, 0.45]), ContactSet::empty(2));
        let out = control_frictional_qp(&inp, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert_abs_diff_eq!(
            out.q_cmd,
            control_greedy(&inp).unwrap().q_cmd,
            epsilon = 1e-8
        );

        let mut heavy = inp.clone();
        let config = DampingConfig {
            w_max: 1e6,
            ..DampingConfig::default()
        };
        heavy.damping = DampingState {
            e_prev: 1.0,
            w: 1e6,
            config,
        };
        let out = control_frictional_qp(&heavy, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert!((&out.q_cmd - &heavy.q_cmd).amax() <= 1e-3 * 0.01);
    }

    #[test]
    fn infeasible_qp_holds_command() {
        let m = arm(0.001);
        let q = dv(&Q0);
        let mut inp = input(&m, q.clone(), dv(&[0.6, 0.5]), tip_contact(&m, &q));
        // previous command already far into the obstacle: the force bound is out of reach
        inp.q_cmd = dv(&[0.4, 0.5]);
        let out = control_frictional_qp(&inp, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert_eq!(out.diagnostics.status, SolveStatus::Held);
        assert!(out.diagnostics.fault.is_some());
        assert_eq!(out.q_cmd, inp.q_cmd);
    }

    fn task_input(m: &RobotModel, q: DVector<f64>, p_ref: Point2<f64>) -> ControllerInput<'_> {
        let mut inp = input(m, q.clone(), q, ContactSet::empty(2));
        inp.objective = TrackingObjective::Task {
            point: m.end_effector(),
            p_ref,
            regularization: 1e-9,
        };
        inp
    }

    #[test]
    fn task_cost_at_target_keeps_configuration() {
        let m = arm(0.01);
        let q = dv(&Q0);
        let p = point_position(&m, &q, &m.end_effector()).unwrap();
        let target = tracking_target(&task_input(&m, q.clone(), p)).unwrap();
        assert_abs_diff_eq!(target, q, epsilon = 1e-12);
    }

    #[test]
    fn task_cost_gauss_newton_step() {
        let m = arm(0.01);
        let q = dv(&[0.0, 0.0]);
        let d = 0.01;
        // J = [[0, 0], [2, 1]] at the straight pose; minimum-norm step is (2, 1) d / 5
        let target = tracking_target(&task_input(&m, q, Point2::new(2.0, d))).unwrap();
        assert_abs_diff_eq!(target, dv(&[2.0 * d / 5.0, d / 5.0]), epsilon = 1e-8);
    }

    #[test]
    fn task_cost_is_bounded_at_singularity() {
        let m = arm(0.01);
        let mut inp = task_input(&m, dv(&[0.0, 0.0]), Point2::new(3.0, 0.0));
        inp.objective = TrackingObjective::Task {
            point: m.end_effector(),
            p_ref: Point2::new(3.0, 0.0),
            regularization: 1e-3,
        };
        let out = control_frictional_qp(&inp, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert!(out.q_cmd.iter().all(|v| v.is_finite()));
        assert!(out.q_cmd.amax() <= 0.01 + 1e-12);
    }

    #[test]
    fn outputs_respect_rate_bound() {
        let m = arm(0.01);
        let q = dv(&Q0);
        let solver = QpSolver::default();
        let params = ControllerParams::default();
        for q_ref in [dv(&[1.0, -1.0]), dv(&[0.6, 0.5]), dv(&[0.0, 0.9])] {
            let inp = input(&m, q.clone(), q_ref, tip_contact(&m, &q));
            for kind in ControllerKind::ALL {
                let out = run_controller(kind, &inp, &params, &solver).unwrap();
                assert!((&out.q_cmd - &inp.q_cmd).amax() <= 0.01 + 1e-9, "{kind}");
                if kind != ControllerKind::Greedy && out.diagnostics.status != SolveStatus::Held {
                    assert!(
                        out.lambda_pred.iter().all(|f| f.magnitude <= 15.0 + 1e-6),
                        "{kind}"
                    );
                }
            }
        }
    }

    #[test]
    fn controller_names_round_trip() {
        for kind in ControllerKind::ALL {
            assert_eq!(kind.as_str().parse::<ControllerKind>().unwrap(), kind);
        }
        assert_eq!(
            "frictional-qp".parse::<ControllerKind>().unwrap(),
            ControllerKind::FrictionalQp
        );
        assert!("pid".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn joint_limits_clamp_commands() {
        let m = arm(0.5)
            .with_joint_limits(vec![[-0.1, 0.35], [-1.0, 1.0]])
            .unwrap();
        let inp = input(&m, dv(&Q0), dv(&[0.6, 0.5]), ContactSet::empty(2));
        let out = control_frictional_qp(&inp, &ControllerParams::default(), &QpSolver::default())
            .unwrap();
        assert_abs_diff_eq!(out.q_cmd[0], 0.35, epsilon = 1e-9);
    }
}
