//! Python bindings: scenarios, closed-loop runs, and the core numerical operations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use pyo3::exceptions::{PyIndexError, PyKeyError, PyValueError};
use pyo3::prelude::*;

use contact_aware::controllers::ControllerKind;
use contact_aware::geometry::{signed_distance as sdf, Shape};
use contact_aware::harness::artifacts::{comparison_rows, SCALAR_COLUMNS};
use contact_aware::harness::{self, presets, RunOverrides, StepLog};
use contact_aware::kinematics::{
    point_jacobian as jacobian_of, point_position as position_of, BodyPoint, RobotModel,
};
use contact_aware::qp::{QpProblem, QpSolver};
use contact_aware::quasistatic::{self, ContactSet};

fn err(e: contact_aware::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!(
            "{what}: every row needs {cols} entries"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

type Rows = Vec<Vec<f64>>;

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_kind(name: &str) -> PyResult<ControllerKind> {
    name.parse().map_err(err)
}

/// A planar arm with unit stiffness placeholders, enough for kinematics queries.
fn kinematic_arm(link_lengths: Vec<f64>) -> PyResult<RobotModel> {
    let n = link_lengths.len();
    RobotModel::new(link_lengths, vec![1.0; n], vec![1.0; n]).map_err(err)
}

/// A versioned scenario description.
#[pyclass(name = "Scenario", module = "contact_aware_py", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: harness::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::Scenario::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::Scenario::load(path).map_err(err)?,
        })
    }

    /// One of the shipped scenarios: "edge-press" or "slide-and-release".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        presets::all()
            .into_iter()
            .find(|s| s.name == name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyKeyError::new_err(format!("no preset named {name:?}")))
    }

    /// Copy with the seed and/or controller replaced.
    #[pyo3(signature = (seed=None, controller=None))]
    fn with_overrides(&self, seed: Option<u64>, controller: Option<&str>) -> PyResult<Self> {
        let controller = controller.map(parse_kind).transpose()?;
        Ok(Self {
            inner: RunOverrides { seed, controller }.apply(&self.inner),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn controller(&self) -> String {
        self.inner.controller.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[getter]
    fn num_joints(&self) -> usize {
        self.inner.robot.num_joints()
    }

    #[getter]
    fn num_ticks(&self) -> usize {
        self.inner.num_ticks()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, controller={}, seed={})",
            self.inner.name, self.inner.controller, self.inner.rng_seed
        )
    }
}

/// Logs and outcome of one closed-loop run.
#[pyclass(name = "RunResult", module = "contact_aware_py")]
struct PyRunResult {
    inner: harness::RunResult,
}

fn scalar(log: &StepLog, column: &str) -> Option<f64> {
    Some(match column {
        "tick" => log.tick as f64,
        "time" => log.time,
        "true_force_max" => log.true_force_max,
        "true_force_total" => log.true_force_total,
        "true_contacts" => log.true_contacts as f64,
        "est_force_max" => log.est_force_max,
        "est_contacts" => log.est_contacts as f64,
        "pred_force_max" => log.pred_force_max,
        "pred_contacts" => log.pred_contacts as f64,
        "e_lambda" => log.e_lambda,
        "w" => log.w,
        "tracking_error" => log.tracking_error,
        "v_q_norm" => log.v_q_norm,
        "solver_iterations" => log.solver_iterations as f64,
        "kkt_residual" => log.kkt_residual,
        "fault" => f64::from(u8::from(log.fault)),
        "projection_gap" => log.projection_gap,
        "release_drop" => log.release_drop,
        "release_bound" => log.release_bound,
        "min_signed_distance" => log.min_signed_distance,
        "sim_iterations" => log.sim_iterations as f64,
        _ => return None,
    })
}

#[pymethods]
impl PyRunResult {
    /// Reason for an early stop, or None when the run completed.
    #[getter]
    fn aborted(&self) -> Option<String> {
        self.inner.aborted.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.logs.len()
    }

    /// Names accepted by `column`.
    #[staticmethod]
    fn columns() -> Vec<&'static str> {
        let mut names = vec!["tick", "time"];
        names.extend(SCALAR_COLUMNS.iter().filter(|c| **c != "solver_status"));
        names
    }

    /// Per-tick values of a scalar log column.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .logs
            .iter()
            .map(|l| {
                scalar(l, name).ok_or_else(|| PyKeyError::new_err(format!("no column {name:?}")))
            })
            .collect()
    }

    /// Per-tick joint vectors: "q", "q_cmd" or "q_ref".
    fn joints(&self, which: &str) -> PyResult<Vec<Vec<f64>>> {
        let pick = |l: &StepLog| -> Option<Vec<f64>> {
            match which {
                "q" => Some(l.q.clone()),
                "q_cmd" => Some(l.q_cmd.clone()),
                "q_ref" => Some(l.q_ref.clone()),
                _ => None,
            }
        };
        self.inner
            .logs
            .iter()
            .map(|l| {
                pick(l).ok_or_else(|| PyKeyError::new_err(format!("no joint series {which:?}")))
            })
            .collect()
    }

    fn solver_status(&self, tick: usize) -> PyResult<&'static str> {
        self.inner
            .logs
            .get(tick)
            .map(|l| l.solver_status.as_str())
            .ok_or_else(|| PyIndexError::new_err("tick out of range"))
    }

    /// Summary metrics over the run.
    fn metrics(&self) -> BTreeMap<&'static str, f64> {
        let m = harness::summarize(&self.inner.logs, self.inner.scenario.separation_window);
        BTreeMap::from([
            ("ticks", m.ticks as f64),
            ("peak_force", m.peak_force),
            ("mean_contact_force", m.mean_contact_force),
            ("tracking_rmse", m.tracking_rmse),
            ("peak_velocity", m.peak_velocity),
            ("peak_separation_velocity", m.peak_separation_velocity),
            ("contact_toggles", m.contact_toggles as f64),
            ("mean_w", m.mean_w),
            ("max_w", m.max_w),
            ("min_e_lambda", m.min_e_lambda),
            ("max_e_lambda", m.max_e_lambda),
            ("max_kkt_residual", m.max_kkt_residual),
            ("max_projection_gap", m.max_projection_gap),
            ("max_release_excess", m.max_release_excess),
            ("min_signed_distance", m.min_signed_distance),
            ("fault_ticks", m.fault_ticks as f64),
        ])
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        harness::write_log_csv(path, &self.inner.logs).map_err(err)
    }

    /// Writes the log, plots, metrics and manifest into `directory`; returns the paths.
    fn write_artifacts(&self, directory: &str) -> PyResult<Vec<String>> {
        let paths = harness::emit_run_artifacts(&self.inner, directory).map_err(err)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }
}

/// Runs a scenario to completion (or fault abort). Releases the interpreter while running.
#[pyfunction]
fn run(py: Python<'_>, scenario: PyScenario) -> PyResult<PyRunResult> {
    let inner = py
        .detach(|| harness::run_scenario(&scenario.inner))
        .map_err(err)?;
    Ok(PyRunResult { inner })
}

/// Runs every controller over `repeats` seeds and returns one summary dict per controller.
#[pyfunction]
#[pyo3(signature = (scenario, controllers, repeats=10, out=None))]
fn compare(
    py: Python<'_>,
    scenario: PyScenario,
    controllers: Vec<String>,
    repeats: usize,
    out: Option<&str>,
) -> PyResult<Vec<BTreeMap<String, f64>>> {
    let kinds = controllers
        .iter()
        .map(|c| parse_kind(c))
        .collect::<PyResult<Vec<_>>>()?;
    let matrix = py
        .detach(|| harness::run_matrix(&scenario.inner, &kinds, repeats))
        .map_err(err)?;
    if let Some(dir) = out {
        harness::emit_comparison_artifacts(&scenario.inner, &matrix, dir).map_err(err)?;
    }
    Ok(comparison_rows(&matrix)
        .into_iter()
        .map(|row| {
            let mut d = BTreeMap::new();
            d.insert("runs".to_string(), row.runs as f64);
            d.insert("aborted".to_string(), row.aborted as f64);
            for (name, env) in [
                ("peak_force", row.peak_force),
                ("mean_contact_force", row.mean_contact_force),
                ("tracking_rmse", row.tracking_rmse),
                ("peak_separation_velocity", row.peak_separation_velocity),
                ("contact_toggles", row.contact_toggles),
                ("mean_w", row.mean_w),
            ] {
                d.insert(format!("{name}_min"), env.min);
                d.insert(format!("{name}_mean"), env.mean);
                d.insert(format!("{name}_max"), env.max);
            }
            d
        })
        .collect())
}

/// World position of a body point on an arm based at the origin.
#[pyfunction]
fn point_position(
    link_lengths: Vec<f64>,
    q: Vec<f64>,
    link: usize,
    offset: (f64, f64),
) -> PyResult<(f64, f64)> {
    let model = kinematic_arm(link_lengths)?;
    let p = position_of(
        &model,
        &DVector::from_vec(q),
        &BodyPoint::new(link, Vector2::new(offset.0, offset.1)),
    )
    .map_err(err)?;
    Ok((p.x, p.y))
}

/// 2 x n position Jacobian of a body point.
#[pyfunction]
fn point_jacobian(
    link_lengths: Vec<f64>,
    q: Vec<f64>,
    link: usize,
    offset: (f64, f64),
) -> PyResult<Vec<Vec<f64>>> {
    let model = kinematic_arm(link_lengths)?;
    let j = jacobian_of(
        &model,
        &DVector::from_vec(q),
        &BodyPoint::new(link, Vector2::new(offset.0, offset.1)),
    )
    .map_err(err)?;
    Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Signed distance and outward normal from a point to a shape given as a dict
/// in the scenario-file shape format.
#[pyfunction]
fn signed_distance(shape_json: &str, point: (f64, f64)) -> PyResult<(f64, (f64, f64))> {
    let shape: Shape =
        serde_json::from_str(shape_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = sdf(&shape, &Point2::new(point.0, point.1));
    Ok((s.distance, (s.normal.x, s.normal.y)))
}

type Step = fn(
    &DVector<f64>,
    &DVector<f64>,
    &DVector<f64>,
    &ContactSet,
) -> contact_aware::Result<quasistatic::EquilibriumResult>;

fn equilibrium_with(
    step: Step,
    q: Vec<f64>,
    q_cmd: Vec<f64>,
    stiffness: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let n = q.len();
    let j = matrix(&jacobian, n, "jacobian")?;
    let set = ContactSet {
        contacts: Vec::new(),
        jacobian: j,
        dropped: Vec::new(),
    };
    let r = step(
        &DVector::from_vec(q),
        &DVector::from_vec(q_cmd),
        &DVector::from_vec(stiffness),
        &set,
    )
    .map_err(err)?;
    Ok((
        r.q_next.iter().copied().collect(),
        r.lambda.iter().copied().collect(),
    ))
}

/// Bilateral equilibrium `(q_next, lambda)` from the closed form.
#[pyfunction]
fn equilibrium_step(
    q: Vec<f64>,
    q_cmd: Vec<f64>,
    stiffness: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    equilibrium_with(quasistatic::equilibrium_step, q, q_cmd, stiffness, jacobian)
}

/// Same equilibrium through the stiffness-weighted pseudo-inverse.
#[pyfunction]
fn projection_step(
    q: Vec<f64>,
    q_cmd: Vec<f64>,
    stiffness: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    equilibrium_with(quasistatic::projection_step, q, q_cmd, stiffness, jacobian)
}

/// `(P_R, P_N)` torque-space projectors for weight `W = diag(weight)`.
#[pyfunction]
fn null_space_projectors(jacobian: Vec<Vec<f64>>, weight: Vec<f64>) -> PyResult<(Rows, Rows)> {
    let j = matrix(&jacobian, weight.len(), "jacobian")?;
    let (range, null) =
        quasistatic::null_space_projectors(&j, &DVector::from_vec(weight)).map_err(err)?;
    Ok((to_rows(&range), to_rows(&null)))
}

/// Solves `min 1/2 x'Px + c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in`.
/// Returns a dict with x, y_eq, y_in, status, kkt_residual and iterations.
#[pyfunction]
#[pyo3(signature = (p, c, a_eq=None, b_eq=None, a_in=None, b_in=None))]
fn solve_qp<'py>(
    py: Python<'py>,
    p: Vec<Vec<f64>>,
    c: Vec<f64>,
    a_eq: Option<Vec<Vec<f64>>>,
    b_eq: Option<Vec<f64>>,
    a_in: Option<Vec<Vec<f64>>>,
    b_in: Option<Vec<f64>>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let n = c.len();
    let mut problem = QpProblem::new(matrix(&p, n, "p")?, DVector::from_vec(c));
    if let (Some(a), Some(b)) = (a_eq, b_eq) {
        problem = problem.with_equalities(matrix(&a, n, "a_eq")?, DVector::from_vec(b));
    }
    if let (Some(a), Some(b)) = (a_in, b_in) {
        problem = problem.with_inequalities(matrix(&a, n, "a_in")?, DVector::from_vec(b));
    }
    let sol = QpSolver::default()
        .solve(&problem)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("x", sol.x.iter().copied().collect::<Vec<_>>())?;
    out.set_item("y_eq", sol.y_eq.iter().copied().collect::<Vec<_>>())?;
    out.set_item("y_in", sol.y_in.iter().copied().collect::<Vec<_>>())?;
    out.set_item("status", sol.status.as_str())?;
    out.set_item("kkt_residual", sol.kkt_residual)?;
    out.set_item("iterations", sol.iterations)?;
    Ok(out)
}

#[pymodule]
pub fn contact_aware_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SCHEMA_VERSION", harness::SCHEMA_VERSION)?;
    m.add(
        "CONTROLLERS",
        ControllerKind::ALL
            .iter()
            .map(|k| k.as_str())
            .collect::<Vec<_>>(),
    )?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(point_position, m)?)?;
    m.add_function(wrap_pyfunction!(point_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(signed_distance, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_step, m)?)?;
    m.add_function(wrap_pyfunction!(projection_step, m)?)?;
    m.add_function(wrap_pyfunction!(null_space_projectors, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    Ok(())
}
