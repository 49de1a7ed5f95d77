#![allow(dead_code)]

use contact_aware::controllers::{ControllerInput, TrackingObjective};
use contact_aware::kinematics::{BodyPoint, RobotModel};
use contact_aware::qp::QpProblem;
use contact_aware::quasistatic::{Contact, ContactId, ContactSet};
use contact_aware::sensing::{DampingConfig, DampingState};
use nalgebra::{DMatrix, DVector, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> RobotModel {
    let links = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let stiffness = (0..n)
        .map(|_| 10f64.powf(rng.random_range(1.0..3.0)))
        .collect();
    RobotModel::new(links, stiffness, vec![0.05; n]).unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0))
}

/// `m` contacts on random links with random directions, rejected unless
/// `J K^-1/2` is comfortably full row rank.
pub fn random_contacts(
    rng: &mut ChaCha8Rng,
    model: &RobotModel,
    q: &DVector<f64>,
    m: usize,
) -> Option<ContactSet> {
    let n = model.num_joints();
    let contacts: Vec<Contact> = (0..m)
        .map(|i| {
            let link = rng.random_range(0..n);
            let offset = Vector2::new(
                rng.random_range(0.1..1.0) * model.link_lengths[link],
                rng.random_range(-0.05..0.05),
            );
            let angle: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Contact {
                id: ContactId {
                    point: i,
                    obstacle: 0,
                },
                body_point: BodyPoint::new(link, offset),
                point: Point2::origin(),
                direction: Vector2::new(angle.cos(), angle.sin()),
                magnitude: 0.0,
            }
        })
        .collect();
    let set = ContactSet::build(model, q, contacts).ok()?;
    if set.len() != m {
        return None;
    }
    if m == 0 {
        return Some(set);
    }
    let k = model.stiffness();
    let scaled = DMatrix::from_fn(m, n, |r, c| set.jacobian[(r, c)] / k[c].sqrt());
    let sv = scaled.singular_values();
    (sv.min() > 1e-3 * sv.max().max(1e-12)).then_some(set)
}

/// A random model, configuration and well-conditioned contact set with `m` rows.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
) -> (RobotModel, DVector<f64>, ContactSet) {
    loop {
        let model = random_model(rng, n);
        let q = random_q(rng, n);
        if let Some(set) = random_contacts(rng, &model, &q, m) {
            return (model, q, set);
        }
    }
}

pub fn damping(w: f64) -> DampingState {
    let mut d = DampingState::new(DampingConfig {
        w_max: w.max(1.0),
        ..DampingConfig::default()
    })
    .unwrap();
    d.w = w;
    d
}

/// Controller input with the previous command a small random offset from `q`
/// and a joint reference a little further away.
pub fn random_input<'a>(
    rng: &mut ChaCha8Rng,
    model: &'a RobotModel,
    q: DVector<f64>,
    contacts: ContactSet,
) -> ControllerInput<'a> {
    let n = model.num_joints();
    let q_cmd = &q + DVector::from_fn(n, |_, _| rng.random_range(-0.02..0.02));
    let q_ref = &q + DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
    ControllerInput {
        tick: 0,
        model,
        q,
        q_cmd,
        objective: TrackingObjective::Joint { q_ref },
        contacts,
        damping: damping(rng.random_range(0.0..5.0)),
        lambda_pred: Vec::new(),
        warm_start: None,
    }
}

/// Random strictly convex QP with a known feasible point.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m_eq: usize, m_in: usize) -> QpProblem {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a_eq = DMatrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &x0;
    let a_in = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m_in, |_, _| rng.random_range(0.0..0.5));
    let b_in = &a_in * &x0 + slack;
    QpProblem::new(p, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
}

/// Brute-force solution: tries every subset of inequality rows as the active
/// set, keeps the KKT points that are primal and dual feasible, and returns
/// the one with the lowest objective.
pub fn enumerate_qp(problem: &QpProblem) -> Option<DVector<f64>> {
    let n = problem.num_vars();
    let m_eq = problem.a_eq.nrows();
    let m_in = problem.a_in.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m_in) {
        let active: Vec<usize> = (0..m_in).filter(|i| mask & (1 << i) != 0).collect();
        let rows = m_eq + active.len();
        if rows > n {
            continue;
        }
        let dim = n + rows;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.p);
        rhs.rows_mut(0, n).copy_from(&(-&problem.c));
        for r in 0..m_eq {
            kkt.view_mut((n + r, 0), (1, n))
                .copy_from(&problem.a_eq.row(r));
            kkt.view_mut((0, n + r), (n, 1))
                .copy_from(&problem.a_eq.row(r).transpose());
            rhs[n + r] = problem.b_eq[r];
        }
        for (k, &i) in active.iter().enumerate() {
            let r = n + m_eq + k;
            kkt.view_mut((r, 0), (1, n)).copy_from(&problem.a_in.row(i));
            kkt.view_mut((0, r), (n, 1))
                .copy_from(&problem.a_in.row(i).transpose());
            rhs[r] = problem.b_in[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let primal_ok = (&problem.a_in * &x - &problem.b_in)
            .iter()
            .all(|s| *s <= 1e-9);
        let dual_ok = (0..active.len()).all(|k| sol[n + m_eq + k] >= -1e-9);
        if primal_ok && dual_ok {
            let f = problem.objective(&x);
            if best.as_ref().is_none_or(|(g, _)| f < *g) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

/// Central finite-difference Jacobian of `f` at `q`.
pub fn finite_difference(
    f: impl Fn(&DVector<f64>) -> Vector2<f64>,
    q: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = q.len();
    let mut out = DMatrix::zeros(2, n);
    for i in 0..n {
        let mut plus = q.clone();
        let mut minus = q.clone();
        plus[i] += h;
        minus[i] -= h;
        let d = (f(&plus) - f(&minus)) / (2.0 * h);
        out[(0, i)] = d.x;
        out[(1, i)] = d.y;
    }
    out
}
