//! Dense primal active-set solver for small convex QPs.
//!
//! Problems have the form
//!
//! ```text
//!     minimize     1/2 x' P x + c' x
//!     subject to   A_eq x  = b_eq
//!                  A_in x <= b_in
//! ```
//!
//! with Lagrangian `L = 1/2 x'Px + c'x + y_eq'(A_eq x - b_eq) + y_in'(A_in x - b_in)`,
//! so inequality duals are nonnegative at an optimum. `P` only needs to be
//! positive definite on the null space of the constraints that end up active.
//!
//! A feasible starting point is found with an elastic phase-one problem that
//! is itself solved by the same active-set iteration.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

const PHASE_ONE_WEIGHT: f64 = 1e-4;
const PHASE_ONE_ROUNDS: usize = 4;
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("qp dimension mismatch: {0}")]
    Dimension(String),
    #[error("qp data contains non-finite values")]
    NonFinite,
    #[error("singular KKT system (reduced Hessian not positive definite): {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    /// Inequality duals of a previous solve; rows with positive duals seed the working set.
    pub y_in: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub warm_start: Option<WarmStart>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `n`; add rows with the builder methods.
    pub fn new(p: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            p,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            warm_start: None,
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_warm_start(mut self, warm: WarmStart) -> Self {
        self.warm_start = Some(warm);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.c.len();
        let dim = |msg: String| Err(QpError::Dimension(msg));
        if self.p.shape() != (n, n) {
            return dim(format!("P is {:?}, expected {n}x{n}", self.p.shape()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return dim(format!(
                "A_eq is {:?} with {} right-hand sides",
                self.a_eq.shape(),
                self.b_eq.len()
            ));
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return dim(format!(
                "A_in is {:?} with {} right-hand sides",
                self.a_in.shape(),
                self.b_in.len()
            ));
        }
        let finite = self.p.iter().chain(self.c.iter()).all(|v| v.is_finite())
            && self
                .a_eq
                .iter()
                .chain(self.b_eq.iter())
                .all(|v| v.is_finite())
            && self
                .a_in
                .iter()
                .chain(self.b_in.iter())
                .all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y_eq: DVector<f64>,
    pub y_in: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpSolution {
    /// Indices of inequality rows held active at the returned point.
    pub fn active_set(&self) -> Vec<usize> {
        self.y_in
            .iter()
            .enumerate()
            .filter(|(_, y)| **y > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            y_in: Some(self.y_in.clone()),
        }
    }
}

/// Max-norm KKT residual: stationarity, primal feasibility, dual feasibility
/// and complementarity of `(x, y_eq, y_in)` for `problem`.
pub fn kkt_residual(
    problem: &QpProblem,
    x: &DVector<f64>,
    y_eq: &DVector<f64>,
    y_in: &DVector<f64>,
) -> f64 {
    let stationarity =
        &problem.p * x + &problem.c + problem.a_eq.tr_mul(y_eq) + problem.a_in.tr_mul(y_in);
    let eq = &problem.a_eq * x - &problem.b_eq;
    let slack = &problem.a_in * x - &problem.b_in;
    let mut r = max_abs(&stationarity).max(max_abs(&eq));
    for (s, y) in slack.iter().zip(y_in.iter()) {
        r = r.max(s.max(0.0)).max((-y).max(0.0)).max((s * y).abs());
    }
    r
}

/// Active-set QP solver. Holds only settings, so one instance per consumer is cheap.
#[derive(Debug, Clone)]
pub struct QpSolver {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpSolver {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl QpSolver {
    pub fn new(tolerance: f64, max_iterations: usize) -> Self {
        Self {
            tolerance,
            max_iterations,
        }
    }

    pub fn solve(&self, problem: &QpProblem) -> Result<QpSolution, QpError> {
        problem.validate()?;
        let n = problem.num_vars();
        let p = symmetrized(&problem.p);
        let tol = self.tolerance;

        let (eq_rows, eq_dropped) = independent_rows(&problem.a_eq, 1e-10);
        let a_eq = select_rows(&problem.a_eq, &eq_rows);
        let b_eq = select_entries(&problem.b_eq, &eq_rows);

        let start = match &problem.warm_start {
            Some(w) if w.x.len() == n && w.x.iter().all(|v| v.is_finite()) => w.x.clone(),
            _ => DVector::zeros(n),
        };
        let x0 = project_onto_equalities(&a_eq, &b_eq, &start)?;
        let dependent_consistent = eq_dropped
            .iter()
            .all(|&r| (problem.a_eq.row(r).dot(&x0.transpose()) - problem.b_eq[r]).abs() <= tol);
        let eq_consistent = max_abs(&(&a_eq * &x0 - &b_eq)) <= tol;
        if !(dependent_consistent && eq_consistent) {
            return Ok(self.infeasible(problem, x0, 0));
        }

        let (x_feasible, mut iterations) =
            match self.phase_one(&a_eq, &problem.a_in, &problem.b_in, x0)? {
                PhaseOne::Feasible { x, iterations } => (x, iterations),
                PhaseOne::Infeasible { x, iterations } => {
                    return Ok(self.infeasible(problem, x, iterations))
                }
            };

        let mut working = Vec::new();
        if let Some(WarmStart { y_in: Some(y), .. }) = &problem.warm_start {
            if y.len() == problem.a_in.nrows() {
                let candidates: Vec<usize> = (0..y.len())
                    .filter(|&i| {
                        y[i] > 0.0
                            && (problem.a_in.row(i).dot(&x_feasible.transpose()) - problem.b_in[i])
                                .abs()
                                <= tol
                    })
                    .collect();
                working = independent_subset(&a_eq, &problem.a_in, &candidates);
            }
        }

        let run = active_set(
            &p,
            &problem.c,
            &a_eq,
            &problem.a_in,
            &problem.b_in,
            x_feasible,
            working,
            self.max_iterations.saturating_sub(iterations),
            tol,
        )?;
        iterations += run.iterations;

        let expand = |x: &DVector<f64>, y_eq_red: &DVector<f64>, y_working: &DVector<f64>| {
            let mut y_eq = DVector::zeros(problem.a_eq.nrows());
            for (k, &r) in eq_rows.iter().enumerate() {
                y_eq[r] = y_eq_red[k];
            }
            let mut y_in = DVector::zeros(problem.a_in.nrows());
            for (k, &r) in run.working.iter().enumerate() {
                y_in[r] = y_working[k];
            }
            let residual = kkt_residual(problem, x, &y_eq, &y_in);
            (x.clone(), y_eq, y_in, residual)
        };
        let mut best = expand(&run.x, &run.y_eq, &run.y_working);
        if run.converged && best.3 > 0.0 {
            if let Some((x, y_eq_red, y_working)) = polish(
                &p,
                &problem.c,
                &a_eq,
                &b_eq,
                &problem.a_in,
                &problem.b_in,
                &run.working,
            ) {
                let candidate = expand(&x, &y_eq_red, &y_working);
                if candidate.3 < best.3 {
                    best = candidate;
                }
            }
        }
        let (x, y_eq, y_in, residual) = best;
        let status = if run.converged {
            if residual > tol {
                return Err(QpError::Degenerate(format!(
                    "converged active set leaves KKT residual {residual:.3e} above tolerance {tol:.1e}"
                )));
            }
            QpStatus::Optimal
        } else {
            QpStatus::MaxIterations
        };
        Ok(QpSolution {
            x,
            y_eq,
            y_in,
            status,
            kkt_residual: residual,
            iterations,
        })
    }

    fn infeasible(&self, problem: &QpProblem, x: DVector<f64>, iterations: usize) -> QpSolution {
        let y_eq = DVector::zeros(problem.a_eq.nrows());
        let y_in = DVector::zeros(problem.a_in.nrows());
        let kkt_residual = kkt_residual(problem, &x, &y_eq, &y_in);
        QpSolution {
            x,
            y_eq,
            y_in,
            status: QpStatus::Infeasible,
            kkt_residual,
            iterations,
        }
    }

    /// Finds a point satisfying all constraints by minimizing the largest
    /// inequality violation `t` (plus a small proximal term) from `x0`.
    fn phase_one(
        &self,
        a_eq: &DMatrix<f64>,
        a_in: &DMatrix<f64>,
        b_in: &DVector<f64>,
        mut x0: DVector<f64>,
    ) -> Result<PhaseOne, QpError> {
        let tol = self.tolerance;
        let n = x0.len();
        let m = a_in.nrows();
        let violation = |x: &DVector<f64>| {
            if m == 0 {
                0.0
            } else {
                (a_in * x - b_in).max().max(0.0)
            }
        };
        let mut iterations = 0;
        let mut v = violation(&x0);
        if v <= tol {
            return Ok(PhaseOne::Feasible { x: x0, iterations });
        }

        let mut a_eq_aux = DMatrix::zeros(a_eq.nrows(), n + 1);
        a_eq_aux.view_mut((0, 0), (a_eq.nrows(), n)).copy_from(a_eq);
        let mut a_in_aux = DMatrix::zeros(m + 1, n + 1);
        a_in_aux.view_mut((0, 0), (m, n)).copy_from(a_in);
        for i in 0..m {
            a_in_aux[(i, n)] = -1.0;
        }
        a_in_aux[(m, n)] = -1.0;
        let mut b_in_aux = DVector::zeros(m + 1);
        b_in_aux.rows_mut(0, m).copy_from(b_in);
        let p_aux = DMatrix::identity(n + 1, n + 1) * PHASE_ONE_WEIGHT;

        for _ in 0..PHASE_ONE_ROUNDS {
            let mut c_aux = DVector::zeros(n + 1);
            c_aux.rows_mut(0, n).copy_from(&(&x0 * -PHASE_ONE_WEIGHT));
            c_aux[n] = 1.0;
            let mut z = DVector::zeros(n + 1);
            z.rows_mut(0, n).copy_from(&x0);
            z[n] = v;
            let run = active_set(
                &p_aux,
                &c_aux,
                &a_eq_aux,
                &a_in_aux,
                &b_in_aux,
                z,
                Vec::new(),
                self.max_iterations.saturating_sub(iterations),
                tol,
            )?;
            iterations += run.iterations;
            let x = run.x.rows(0, n).into_owned();
            let v_new = violation(&x);
            if v_new <= tol {
                return Ok(PhaseOne::Feasible { x, iterations });
            }
            if !run.converged || v_new >= v * (1.0 - 1e-6) {
                // no progress: the constraint set admits no point within tolerance
                return Ok(PhaseOne::Infeasible { x, iterations });
            }
            x0 = x;
            v = v_new;
        }
        Ok(PhaseOne::Infeasible { x: x0, iterations })
    }
}

enum PhaseOne {
    Feasible { x: DVector<f64>, iterations: usize },
    Infeasible { x: DVector<f64>, iterations: usize },
}

struct ActiveSetRun {
    x: DVector<f64>,
    y_eq: DVector<f64>,
    working: Vec<usize>,
    y_working: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Primal active-set iteration from a feasible `x` with initial working set `working`.
#[allow(clippy::too_many_arguments)]
fn active_set(
    p: &DMatrix<f64>,
    c: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    mut x: DVector<f64>,
    mut working: Vec<usize>,
    max_iterations: usize,
    tol: f64,
) -> Result<ActiveSetRun, QpError> {
    let n = x.len();
    let m_eq = a_eq.nrows();
    let dual_tol = 1e-3 * tol;
    let mut iterations = 0;
    let mut last_y_eq: DVector<f64>;

    loop {
        let rows = m_eq + working.len();
        let dim = n + rows;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(p);
        for r in 0..m_eq {
            for j in 0..n {
                kkt[(n + r, j)] = a_eq[(r, j)];
                kkt[(j, n + r)] = a_eq[(r, j)];
            }
        }
        for (k, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + m_eq + k, j)] = a_in[(i, j)];
                kkt[(j, n + m_eq + k)] = a_in[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        let gradient = p * &x + c;
        rhs.rows_mut(0, n).copy_from(&(-gradient));
        let z = solve_kkt(&kkt, &rhs)?;
        let step = z.rows(0, n).into_owned();
        let multipliers = z.rows(n, rows).into_owned();
        last_y_eq = multipliers.rows(0, m_eq).into_owned();

        let step_tol = 1e-11 * (1.0 + max_abs(&x));
        if max_abs(&step) <= step_tol {
            let y_working = multipliers.rows(m_eq, working.len()).into_owned();
            // most negative multiplier, lowest row index on ties
            let mut worst: Option<(usize, f64)> = None;
            for (k, &y) in y_working.iter().enumerate() {
                if y < -dual_tol {
                    match worst {
                        Some((wk, wy)) if y > wy || (y == wy && working[k] > working[wk]) => {}
                        _ => worst = Some((k, y)),
                    }
                }
            }
            match worst {
                None => {
                    return Ok(ActiveSetRun {
                        x,
                        y_eq: multipliers.rows(0, m_eq).into_owned(),
                        working,
                        y_working: y_working.map(|y| y.max(0.0)),
                        iterations,
                        converged: true,
                    })
                }
                Some((k, _)) => {
                    working.remove(k);
                }
            }
        } else {
            let step_norm = step.norm();
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..a_in.nrows() {
                if working.contains(&i) {
                    continue;
                }
                let row = a_in.row(i);
                let ap = row.dot(&step.transpose());
                if ap <= 1e-12 * row.norm() * step_norm {
                    continue;
                }
                let ratio = ((b_in[i] - row.dot(&x.transpose())) / ap).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
            x += step * alpha;
            if let Some(i) = blocking {
                let pos = working.partition_point(|&w| w < i);
                working.insert(pos, i);
            }
        }

        iterations += 1;
        if iterations >= max_iterations {
            let y_working = DVector::zeros(working.len());
            return Ok(ActiveSetRun {
                x,
                y_eq: last_y_eq,
                working,
                y_working,
                iterations,
                converged: false,
            });
        }
    }
}

/// Re-solves the equality-constrained problem on the final working set for
/// `x` directly, removing drift accumulated over the active-set steps.
fn polish(
    p: &DMatrix<f64>,
    c: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = p.nrows();
    let m_eq = a_eq.nrows();
    let rows = m_eq + working.len();
    let mut kkt = DMatrix::zeros(n + rows, n + rows);
    let mut rhs = DVector::zeros(n + rows);
    kkt.view_mut((0, 0), (n, n)).copy_from(p);
    rhs.rows_mut(0, n).copy_from(&(-c));
    for r in 0..rows {
        let (row, b) = if r < m_eq {
            (a_eq.row(r), b_eq[r])
        } else {
            (a_in.row(working[r - m_eq]), b_in[working[r - m_eq]])
        };
        for j in 0..n {
            kkt[(n + r, j)] = row[j];
            kkt[(j, n + r)] = row[j];
        }
        rhs[n + r] = b;
    }
    let z = solve_kkt(&kkt, &rhs).ok()?;
    let x = z.rows(0, n).into_owned();
    let y = z.rows(n, rows).into_owned();
    let y_working = y.rows(m_eq, working.len()).map(|v| v.max(0.0));
    Some((x, y.rows(0, m_eq).into_owned(), y_working))
}

fn solve_kkt(kkt: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let scale = kkt.amax().max(1.0);
    let lu = kkt.clone().lu();
    let u = lu.u();
    let min_pivot = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_pivot > PIVOT_TOLERANCE * scale) {
        return Err(QpError::Degenerate(format!(
            "pivot {min_pivot:.3e} relative to scale {scale:.3e}"
        )));
    }
    let mut z = lu
        .solve(rhs)
        .ok_or_else(|| QpError::Degenerate("LU solve failed".into()))?;
    // one step of iterative refinement
    let r = rhs - kkt * &z;
    if let Some(dz) = lu.solve(&r) {
        z += dz;
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(QpError::Degenerate("non-finite KKT solution".into()));
    }
    Ok(z)
}

pub(crate) fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn symmetrized(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Greedy selection of linearly independent rows (modified Gram-Schmidt) in
/// index order; a row is dropped when less than `rel_tol` of its norm lies
/// outside the span of the rows kept before it. Returns (kept, dropped).
pub(crate) fn independent_rows(a: &DMatrix<f64>, rel_tol: f64) -> (Vec<usize>, Vec<usize>) {
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..a.nrows() {
        let row = a.row(i).transpose();
        if push_orthogonal(&mut ortho, row, rel_tol) {
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    (kept, dropped)
}

fn push_orthogonal(ortho: &mut Vec<DVector<f64>>, v: DVector<f64>, rel_tol: f64) -> bool {
    let norm0 = v.norm();
    if norm0 == 0.0 {
        return false;
    }
    let mut r = v;
    for _ in 0..2 {
        for q in ortho.iter() {
            let d = q.dot(&r);
            r -= q * d;
        }
    }
    let norm = r.norm();
    if norm <= rel_tol * norm0 {
        return false;
    }
    ortho.push(r / norm);
    true
}

fn independent_subset(
    a_eq: &DMatrix<f64>,
    a_in: &DMatrix<f64>,
    candidates: &[usize],
) -> Vec<usize> {
    let mut ortho = Vec::new();
    for r in 0..a_eq.nrows() {
        push_orthogonal(&mut ortho, a_eq.row(r).transpose(), 1e-10);
    }
    candidates
        .iter()
        .copied()
        .filter(|&i| push_orthogonal(&mut ortho, a_in.row(i).transpose(), 1e-8))
        .collect()
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

fn select_entries(b: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |r, _| b[rows[r]])
}

/// Closest point to `x` on `{A x = b}` for full-row-rank `A`.
fn project_onto_equalities(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    if a.nrows() == 0 {
        return Ok(x.clone());
    }
    let gram = a * a.transpose();
    let residual = a * x - b;
    let chol = gram
        .cholesky()
        .ok_or_else(|| QpError::Degenerate("equality rows are dependent".into()))?;
    let mut out = x - a.tr_mul(&chol.solve(&residual));
    // refine once; the Gram matrix can be poorly scaled
    let residual = a * &out - b;
    out -= a.tr_mul(&chol.solve(&residual));
    Ok(out)
}
