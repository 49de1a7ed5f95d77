//! Quasistatic dynamics of a stiffness-controlled arm.
//!
//! Under a joint stiffness controller the arm settles, after every command,
//! at the configuration that minimizes the spring energy
//! `1/2 (q_cmd - q)' K_q (q_cmd - q)` subject to its contacts. Controllers use
//! the bilateral, frictionless version of this model, in which each contact
//! row `J_u,i = u_i' J_i` freezes the arm's motion along the contact force
//! direction and the contact force magnitudes are the constraint multipliers.
//! [`simulate_step`] is the ground truth instead: unilateral non-penetration
//! against the scene, plus regularized Coulomb friction in the reported forces.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{detect_contacts, Scene};
use crate::kinematics::{forward_kinematics, jacobian_from_frames, BodyPoint, RobotModel};
use crate::qp::{independent_rows, QpProblem, QpSolution, QpSolver, QpStatus};

/// Relative tolerance of the rank filter applied to contact Jacobian rows.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// Identity of a contact: which collision point touches which obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContactId {
    pub point: usize,
    pub obstacle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub id: ContactId,
    pub body_point: BodyPoint,
    /// World position of the contact point [m].
    pub point: Point2<f64>,
    /// Unit direction of the contact force acting on the arm.
    pub direction: Vector2<f64>,
    /// Force magnitude [N].
    pub magnitude: f64,
}

impl Contact {
    pub fn force(&self) -> Vector2<f64> {
        self.direction * self.magnitude
    }
}

/// Active contacts and their stacked scalar Jacobian, one row per contact.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    /// `n_c x n_q`; row `i` is `u_i' J_i(q)`.
    pub jacobian: DMatrix<f64>,
    /// Contacts removed by the rank filter, in their original order.
    pub dropped: Vec<Contact>,
}

impl ContactSet {
    pub fn empty(num_joints: usize) -> Self {
        Self {
            contacts: Vec::new(),
            jacobian: DMatrix::zeros(0, num_joints),
            dropped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    /// Kept and dropped contacts together.
    pub fn all_contacts(&self) -> impl Iterator<Item = &Contact> {
        self.contacts.iter().chain(self.dropped.iter())
    }

    pub fn magnitudes(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.contacts.len(),
            self.contacts.iter().map(|c| c.magnitude),
        )
    }

    pub fn ids(&self) -> Vec<ContactId> {
        self.contacts.iter().map(|c| c.id).collect()
    }

    /// Builds `J_u` at `q`. Directions are normalized; rows that would make
    /// `J_u` rank deficient are moved to `dropped`, keeping the earliest.
    pub fn build(model: &RobotModel, q: &DVector<f64>, contacts: Vec<Contact>) -> Result<Self> {
        let frames = forward_kinematics(model, q)?;
        let n = model.num_joints();
        let mut rows = DMatrix::zeros(contacts.len(), n);
        let mut normalized = Vec::with_capacity(contacts.len());
        for (i, mut c) in contacts.into_iter().enumerate() {
            model.check_point(&c.body_point)?;
            let norm = c.direction.norm();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "contact {i} has a zero direction"
                )));
            }
            if !(c.magnitude.is_finite() && c.magnitude >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "contact {i} has a negative magnitude"
                )));
            }
            c.direction /= norm;
            let jac = jacobian_from_frames(&frames, &c.body_point, n);
            rows.row_mut(i).copy_from(&(c.direction.transpose() * jac));
            normalized.push(c);
        }
        let (kept, dropped_rows) = independent_rows(&rows, RANK_TOLERANCE);
        let jacobian = DMatrix::from_fn(kept.len(), n, |r, c| rows[(kept[r], c)]);
        let mut slots: Vec<Option<Contact>> = normalized.into_iter().map(Some).collect();
        let contacts = kept.iter().map(|&i| slots[i].take().unwrap()).collect();
        let dropped = dropped_rows
            .iter()
            .map(|&i| slots[i].take().unwrap())
            .collect();
        Ok(Self {
            contacts,
            jacobian,
            dropped,
        })
    }
}

/// Convenience for building contact Jacobians from (body point, direction) pairs.
pub fn build_contact_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &[(BodyPoint, Vector2<f64>)],
) -> Result<ContactSet> {
    let frames = forward_kinematics(model, q)?;
    let list = contacts
        .iter()
        .enumerate()
        .map(|(i, (bp, u))| {
            model.check_point(bp)?;
            Ok(Contact {
                id: ContactId {
                    point: i,
                    obstacle: 0,
                },
                body_point: *bp,
                point: frames[bp.link] * Point2::from(bp.offset),
                direction: *u,
                magnitude: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ContactSet::build(model, q, list)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub q_next: DVector<f64>,
    /// Contact force magnitudes along the contact directions [N].
    pub lambda: DVector<f64>,
    /// The `J_u` the prediction was made with.
    pub jacobian: DMatrix<f64>,
    pub q_now: DVector<f64>,
}

fn check_step_inputs(
    q_now: &DVector<f64>,
    q_cmd_next: &DVector<f64>,
    stiffness: &DVector<f64>,
    jacobian: &DMatrix<f64>,
) -> Result<()> {
    let n = q_now.len();
    check_len("q_cmd", n, q_cmd_next.len())?;
    check_len("stiffness", n, stiffness.len())?;
    check_len("contact jacobian columns", n, jacobian.ncols())?;
    if stiffness.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::InvalidInput("stiffness must be positive".into()));
    }
    Ok(())
}

/// Closed-form equilibrium of the bilateral frictionless model:
///
/// ```text
///     lambda = -(J K^-1 J')^-1 J (q_cmd - q)
///     q_next = q + (I - K^-1 J' (J K^-1 J')^-1 J) (q_cmd - q)
/// ```
pub fn equilibrium_step(
    q_now: &DVector<f64>,
    q_cmd_next: &DVector<f64>,
    stiffness: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<EquilibriumResult> {
    let j = &contacts.jacobian;
    check_step_inputs(q_now, q_cmd_next, stiffness, j)?;
    let k_inv = stiffness.map(|k| 1.0 / k);
    let dq_cmd = q_cmd_next - q_now;
    if j.nrows() == 0 {
        return Ok(EquilibriumResult {
            q_next: q_cmd_next.clone(),
            lambda: DVector::zeros(0),
            jacobian: j.clone(),
            q_now: q_now.clone(),
        });
    }
    let j_kinv = scale_columns(j, &k_inv);
    let gram = &j_kinv * j.transpose();
    let chol = checked_cholesky(gram, "J_u K^-1 J_u'")?;
    let lambda = -chol.solve(&(j * &dq_cmd));
    let correction = j_kinv.tr_mul(&chol.solve(&(j * &dq_cmd)));
    let q_next = q_now + (&dq_cmd - correction);
    Ok(EquilibriumResult {
        q_next,
        lambda,
        jacobian: j.clone(),
        q_now: q_now.clone(),
    })
}

/// Same equilibrium, computed through the stiffness-consistent pseudo-inverse:
///
/// ```text
///     q_next = q + (I - J^{K+} J) (q_cmd - q)
///     lambda = -(J^{K+})' K (q_cmd - q)
/// ```
pub fn projection_step(
    q_now: &DVector<f64>,
    q_cmd_next: &DVector<f64>,
    stiffness: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<EquilibriumResult> {
    let j = &contacts.jacobian;
    check_step_inputs(q_now, q_cmd_next, stiffness, j)?;
    if j.nrows() == 0 {
        return equilibrium_step(q_now, q_cmd_next, stiffness, contacts);
    }
    let n = q_now.len();
    let dq_cmd = q_cmd_next - q_now;
    let pinv = weighted_pseudoinverse(j, stiffness)?;
    let motion_projector = DMatrix::identity(n, n) - &pinv * j;
    let q_next = q_now + motion_projector * &dq_cmd;
    let spring_torque = dq_cmd.component_mul(stiffness);
    let lambda = -pinv.tr_mul(&spring_torque);
    Ok(EquilibriumResult {
        q_next,
        lambda,
        jacobian: j.clone(),
        q_now: q_now.clone(),
    })
}

/// `J^{W+} = W^-1 J' (J W^-1 J')^-1` for a positive diagonal weight `W`.
pub fn weighted_pseudoinverse(j: &DMatrix<f64>, weight: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_len("weight", j.ncols(), weight.len())?;
    if weight.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("weight must be positive".into()));
    }
    if j.nrows() == 0 {
        return Ok(DMatrix::zeros(j.ncols(), 0));
    }
    let w_inv = weight.map(|w| 1.0 / w);
    let j_winv = scale_columns(j, &w_inv);
    let gram = &j_winv * j.transpose();
    let chol = checked_cholesky(gram, "J W^-1 J'")?;
    // (J W^-1 J')^-1 is symmetric, so J^{W+} = (gram^-1 J W^-1)'
    Ok(chol.solve(&j_winv).transpose())
}

/// Torque-space projections `(P_R, P_N)`: `P_R = J' (J^{W+})'` onto the range
/// of `J'`, and `P_N = I - P_R`.
pub fn null_space_projectors(
    j: &DMatrix<f64>,
    weight: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pinv = weighted_pseudoinverse(j, weight)?;
    let n = j.ncols();
    let range = j.transpose() * pinv.transpose();
    let null = DMatrix::identity(n, n) - &range;
    Ok((range, null))
}

/// Joint-space motion projector `I - J^{K+} J` onto `N(J)` along `R(J^{K+})`.
pub fn motion_projector(j: &DMatrix<f64>, stiffness: &DVector<f64>) -> Result<DMatrix<f64>> {
    let pinv = weighted_pseudoinverse(j, stiffness)?;
    let n = j.ncols();
    Ok(DMatrix::identity(n, n) - pinv * j)
}

/// Solves the equilibrium as the QP
///
/// ```text
///     minimize   1/2 (q_cmd - q)' K (q_cmd - q)
///     subject to J (q - q_now) = 0
/// ```
///
/// The solver's equality duals follow `L = f + y'(J q - J q_now)`, while the
/// contact forces enter the Lagrangian as `- lambda' J (q - q_now)`; hence
/// `lambda = -y_eq`.
pub fn equilibrium_qp(
    q_now: &DVector<f64>,
    q_cmd_next: &DVector<f64>,
    stiffness: &DVector<f64>,
    contacts: &ContactSet,
    solver: &QpSolver,
) -> Result<(EquilibriumResult, QpSolution)> {
    let j = &contacts.jacobian;
    check_step_inputs(q_now, q_cmd_next, stiffness, j)?;
    let p = DMatrix::from_diagonal(stiffness);
    let c = -q_cmd_next.component_mul(stiffness);
    let problem = QpProblem::new(p, c).with_equalities(j.clone(), j * q_now);
    let sol = solver.solve(&problem)?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::RankDeficient(format!(
            "equilibrium QP ended {}",
            sol.status.as_str()
        )));
    }
    let result = EquilibriumResult {
        q_next: sol.x.clone(),
        lambda: -&sol.y_eq,
        jacobian: j.clone(),
        q_now: q_now.clone(),
    };
    Ok((result, sol))
}

/// Cholesky factor of a Gram matrix, rejecting numerically singular ones.
fn checked_cholesky(
    gram: DMatrix<f64>,
    what: &str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = gram.diagonal().max();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(format!("{what} is singular")))?;
    let pivot = chol.l_dirty().diagonal().min();
    if !(pivot * pivot > RANK_TOLERANCE * RANK_TOLERANCE * scale) {
        return Err(Error::RankDeficient(format!(
            "{what} is numerically singular"
        )));
    }
    Ok(chol)
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, v) in out.column_iter_mut().zip(s.iter()) {
        col *= *v;
    }
    out
}

/// Ground-truth simulator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Contacts within this distance are reported [m].
    pub activation_distance: f64,
    /// Cap on sequential-QP iterations per step.
    pub max_iterations: usize,
    /// Convergence threshold on the joint update [rad].
    pub tolerance: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            activation_distance: 1e-4,
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub q: DVector<f64>,
    /// Contacts carrying force at `q`, with the total (normal + friction) force.
    pub contacts: ContactSet,
    pub iterations: usize,
    pub min_signed_distance: f64,
}

/// Advances the ground truth by one command: finds the spring-energy minimum
/// under unilateral non-penetration by sequential QP, starting from `q_now`.
///
/// Each iteration linearizes the signed distances of every collision pair that
/// could be reached in the step and solves for the joint update; normal forces
/// are the multipliers of those constraints. Friction is applied to the
/// reported forces only: the tangential force is the regularized Coulomb
/// response `-clamp(k_t * tangential slip, mu * f_n)` with `k_t` taken from the
/// obstacle's contact stiffness.
pub fn simulate_step(
    scene: &Scene,
    model: &RobotModel,
    q_now: &DVector<f64>,
    q_cmd_next: &DVector<f64>,
    settings: &SimSettings,
    solver: &QpSolver,
) -> Result<SimOutcome> {
    let n = model.num_joints();
    check_len("q_now", n, q_now.len())?;
    check_len("q_cmd", n, q_cmd_next.len())?;
    if settings.max_iterations == 0 {
        return Err(Error::InvalidInput(
            "simulator needs at least one substep".into(),
        ));
    }
    let stiffness = model.stiffness();
    let k_ratio = stiffness.max() / stiffness.min();
    let sweep_gain = 2.0 * model.reach() * (n as f64 * k_ratio).sqrt();

    let mut q = q_now.clone();
    let mut last: Option<(Vec<crate::geometry::ContactCandidate>, QpSolution)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..settings.max_iterations {
        iterations += 1;
        let margin = settings.activation_distance + sweep_gain * (q_cmd_next - &q).norm();
        let candidates = detect_contacts(scene, model, &q, margin)?;
        let frames = forward_kinematics(model, &q)?;
        let mut a_in = DMatrix::zeros(candidates.len(), n);
        let mut b_in = DVector::zeros(candidates.len());
        for (r, cand) in candidates.iter().enumerate() {
            let jac = jacobian_from_frames(&frames, &cand.body_point, n);
            // phi + grad(phi) . dq >= 0
            a_in.row_mut(r)
                .copy_from(&(-(cand.normal.transpose() * jac)));
            b_in[r] = -cand.penetration_depth;
        }
        let p = DMatrix::from_diagonal(&stiffness);
        let c = (&q - q_cmd_next).component_mul(&stiffness);
        let problem = QpProblem::new(p, c).with_inequalities(a_in, b_in);
        let sol = solver.solve(&problem)?;
        if sol.status != QpStatus::Optimal {
            return Err(Error::SimulationDiverged(format!(
                "contact QP ended {} at iteration {iterations}",
                sol.status.as_str()
            )));
        }
        q += &sol.x;
        let step = crate::qp::max_abs(&sol.x);
        last = Some((candidates, sol));
        if step <= settings.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SimulationDiverged(format!(
            "no convergence within {} iterations",
            settings.max_iterations
        )));
    }

    let (candidates, sol) = last.expect("at least one iteration ran");
    let frames_new = forward_kinematics(model, &q)?;
    let frames_old = forward_kinematics(model, q_now)?;
    let mut contacts = Vec::new();
    for (cand, &normal_force) in candidates.iter().zip(sol.y_in.iter()) {
        if normal_force <= 1e-12 {
            continue;
        }
        let obstacle = &scene.obstacles[cand.obstacle_index];
        let p_new = frames_new[cand.body_point.link] * Point2::from(cand.body_point.offset);
        let p_old = frames_old[cand.body_point.link] * Point2::from(cand.body_point.offset);
        let normal = cand.normal;
        let tangent = Vector2::new(-normal.y, normal.x);
        let limit = obstacle.friction_coefficient * normal_force;
        let slip = tangent.dot(&(p_new - p_old));
        let tangential = -(obstacle.contact_stiffness * slip).clamp(-limit, limit);
        let force = normal * normal_force + tangent * tangential;
        let magnitude = force.norm();
        contacts.push(Contact {
            id: ContactId {
                point: cand.point_index,
                obstacle: cand.obstacle_index,
            },
            body_point: cand.body_point,
            point: p_new,
            direction: force / magnitude,
            magnitude,
        });
    }
    let contacts = ContactSet::build(model, &q, contacts)?;
    let min_signed_distance = scene.min_signed_distance(model, &q)?;
    Ok(SimOutcome {
        q,
        contacts,
        iterations,
        min_signed_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Obstacle, Shape};
    use approx::assert_abs_diff_eq;

    fn one_link() -> RobotModel {
        RobotModel::new(vec![1.0], vec![100.0], vec![0.01]).unwrap()
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn tip_contact_jacobian() {
        let m = one_link();
        let set =
            build_contact_jacobian(&m, &dv(&[0.0]), &[(m.end_effector(), Vector2::y())]).unwrap();
        assert_eq!(set.jacobian.shape(), (1, 1));
        assert_abs_diff_eq!(set.jacobian[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        let m = one_link();
        let set = build_contact_jacobian(
            &m,
            &dv(&[0.0]),
            &[
                (m.end_effector(), Vector2::y()),
                (m.end_effector(), Vector2::y()),
            ],
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.dropped.len(), 1);
        assert_eq!(set.dropped[0].id.point, 1);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let m = one_link();
        assert!(
            build_contact_jacobian(&m, &dv(&[0.0]), &[(m.end_effector(), Vector2::zeros())])
                .is_err()
        );
    }

    #[test]
    fn empty_contacts_pass_command_through() {
        let set = ContactSet::empty(2);
        let k = dv(&[800.0, 600.0]);
        let r = equilibrium_step(&dv(&[0.1, 0.2]), &dv(&[0.3, -0.4]), &k, &set).unwrap();
        assert_eq!(r.q_next, dv(&[0.3, -0.4]));
        assert_eq!(r.lambda.len(), 0);
        let r = projection_step(&dv(&[0.1, 0.2]), &dv(&[0.3, -0.4]), &k, &set).unwrap();
        assert_eq!(r.q_next, dv(&[0.3, -0.4]));
    }

    #[test]
    fn zero_stretch_means_zero_force() {
        let m = RobotModel::new(vec![1.0, 1.0], vec![800.0, 600.0], vec![0.01; 2]).unwrap();
        let q = dv(&[0.3, 0.4]);
        let set =
            build_contact_jacobian(&m, &q, &[(m.end_effector(), Vector2::new(0.6, 0.8))]).unwrap();
        let r = equilibrium_step(&q, &q, &m.stiffness(), &set).unwrap();
        assert_eq!(r.q_next, q);
        assert_abs_diff_eq!(r.lambda[0], 0.0);
    }

    #[test]
    fn pseudoinverse_examples() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = weighted_pseudoinverse(&j, &dv(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(
            p,
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            epsilon = 1e-15
        );
        // W^-1 J' (J W^-1 J')^-1 = (1, 0.25) / 1.25
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = weighted_pseudoinverse(&j, &dv(&[1.0, 4.0])).unwrap();
        assert_abs_diff_eq!(
            p,
            DMatrix::from_column_slice(2, 1, &[0.8, 0.2]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn pseudoinverse_rank_deficiency() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            weighted_pseudoinverse(&j, &dv(&[1.0, 1.0])),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn stiffness_consistent_projection() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = dv(&[800.0, 600.0]);
        let (_, p_n) = null_space_projectors(&j, &k).unwrap();
        let k_inv = DMatrix::from_diagonal(&k.map(|v| 1.0 / v));
        assert!((&j * k_inv * &p_n).amax() <= 1e-12);
        let (_, p_n) = null_space_projectors(&j, &dv(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(p_n.clone(), p_n.transpose(), epsilon = 1e-15);
    }

    fn pressing_scene(mu: f64) -> (RobotModel, Scene) {
        let m = one_link();
        // wall above the horizontal arm: solid for y > 0
        let wall = Obstacle::new(Shape::HalfPlane {
            normal: -Vector2::y(),
            offset: 0.0,
        })
        .with_friction(mu);
        // only the tip can touch, so the contact force is not shared along a flat link
        let scene = Scene {
            obstacles: vec![wall],
            collision_points: vec![m.end_effector()],
        };
        (m, scene)
    }

    #[test]
    fn free_space_reaches_command() {
        let m = one_link();
        let scene = Scene::with_sampled_points(&m, vec![], 5);
        let out = simulate_step(
            &scene,
            &m,
            &dv(&[0.0]),
            &dv(&[0.3]),
            &SimSettings::default(),
            &QpSolver::default(),
        )
        .unwrap();
        assert_eq!(out.q, dv(&[0.3]));
        assert!(out.contacts.is_empty());
    }

    #[test]
    fn pressing_force_matches_bilateral_model() {
        let (m, scene) = pressing_scene(0.0);
        let q0 = dv(&[-1e-9]);
        let qc = dv(&[0.01]);
        let out = simulate_step(
            &scene,
            &m,
            &q0,
            &qc,
            &SimSettings::default(),
            &QpSolver::default(),
        )
        .unwrap();
        assert!(out.min_signed_distance >= -1e-6);
        assert_eq!(out.contacts.len(), 1);
        let truth = &out.contacts.contacts[0];
        assert_abs_diff_eq!(truth.direction, -Vector2::y(), epsilon = 1e-12);
        let set = ContactSet::build(&m, &out.q, vec![truth.clone()]).unwrap();
        let pred = equilibrium_step(&out.q, &qc, &m.stiffness(), &set).unwrap();
        assert!((pred.lambda[0] - truth.magnitude).abs() <= 0.01 * truth.magnitude);
    }
}
