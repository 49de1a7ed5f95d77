//! Versioned JSON scenario files.

use std::path::Path;

use nalgebra::{DVector, Point2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controllers::{ControllerKind, ControllerParams};
use crate::error::{check_len, Error, Result};
use crate::geometry::{sample_collision_points, Obstacle, Scene};
use crate::kinematics::{BodyPoint, RobotModel};
use crate::quasistatic::SimSettings;
use crate::sensing::{DampingConfig, SensingConfig};

pub const SCHEMA_VERSION: u32 = 1;

fn default_control_rate() -> f64 {
    200.0
}

fn default_max_fault_ticks() -> usize {
    50
}

fn default_task_regularization() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub obstacles: Vec<Obstacle>,
    /// Explicit collision points.
    #[serde(default)]
    pub collision_points: Vec<BodyPoint>,
    /// Evenly spaced points added on every link.
    #[serde(default)]
    pub points_per_link: Option<usize>,
}

impl SceneSpec {
    pub fn build(&self, model: &RobotModel) -> Scene {
        let mut collision_points = self.collision_points.clone();
        if let Some(k) = self.points_per_link {
            collision_points.extend(sample_collision_points(model, k));
        }
        Scene {
            obstacles: self.obstacles.clone(),
            collision_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointKnot {
    pub t: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWaypoint {
    pub t: f64,
    pub p: [f64; 2],
}

/// Piecewise-linear reference, held constant outside its time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    Joint {
        knots: Vec<JointKnot>,
    },
    Task {
        point: BodyPoint,
        waypoints: Vec<TaskWaypoint>,
        #[serde(default = "default_task_regularization")]
        regularization: f64,
    },
}

/// A reference sample: joint configuration or body-point position.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSample {
    Joint(DVector<f64>),
    Task(Point2<f64>),
}

fn interpolate<K>(items: &[K], t: f64, time: impl Fn(&K) -> f64) -> (&K, &K, f64) {
    let last = items.len() - 1;
    if t <= time(&items[0]) {
        return (&items[0], &items[0], 0.0);
    }
    if t >= time(&items[last]) {
        return (&items[last], &items[last], 0.0);
    }
    let k = items.partition_point(|x| time(x) <= t);
    let (a, b) = (&items[k - 1], &items[k]);
    let s = (t - time(a)) / (time(b) - time(a));
    (a, b, s)
}

impl Reference {
    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Reference::Joint { knots } => {
                let (a, b, s) = interpolate(knots, t, |k| k.t);
                ReferenceSample::Joint(DVector::from_fn(a.q.len(), |i, _| {
                    a.q[i] + s * (b.q[i] - a.q[i])
                }))
            }
            Reference::Task { waypoints, .. } => {
                let (a, b, s) = interpolate(waypoints, t, |w| w.t);
                ReferenceSample::Task(Point2::new(
                    a.p[0] + s * (b.p[0] - a.p[0]),
                    a.p[1] + s * (b.p[1] - a.p[1]),
                ))
            }
        }
    }

    fn times(&self) -> Vec<f64> {
        match self {
            Reference::Joint { knots } => knots.iter().map(|k| k.t).collect(),
            Reference::Task { waypoints, .. } => waypoints.iter().map(|w| w.t).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub robot: RobotModel,
    pub scene: SceneSpec,
    pub reference: Reference,
    /// Starting configuration; defaults to the first joint knot.
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    pub controller: ControllerKind,
    #[serde(default)]
    pub controller_params: ControllerParams,
    #[serde(default)]
    pub damping: DampingConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub simulator: SimSettings,
    /// [Hz]
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    /// [s]
    pub duration: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Consecutive faulty ticks tolerated before the run is aborted.
    #[serde(default = "default_max_fault_ticks")]
    pub max_fault_ticks: usize,
    /// `[start, end]` [s] of the window in which the separation velocity is measured.
    #[serde(default)]
    pub separation_window: Option<[f64; 2]>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn num_ticks(&self) -> usize {
        (self.duration * self.control_rate).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn scene(&self) -> Scene {
        self.scene.build(&self.robot)
    }

    pub fn initial_configuration(&self) -> Result<DVector<f64>> {
        match (&self.initial_q, &self.reference) {
            (Some(q), _) => Ok(DVector::from_column_slice(q)),
            (None, Reference::Joint { knots }) => Ok(DVector::from_column_slice(&knots[0].q)),
            (None, Reference::Task { .. }) => Err(Error::InvalidInput(
                "task-space references need initial_q".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidInput("duration must be > 0".into()));
        }
        if !(self.control_rate.is_finite() && self.control_rate > 0.0) {
            return Err(Error::InvalidInput("control_rate must be > 0".into()));
        }
        if self.max_fault_ticks == 0 {
            return Err(Error::InvalidInput("max_fault_ticks must be >= 1".into()));
        }
        self.robot.validate()?;
        let n = self.robot.num_joints();
        let scene = self.scene();
        scene.validate(&self.robot)?;
        if scene.collision_points.is_empty() && !scene.obstacles.is_empty() {
            return Err(Error::InvalidInput(
                "obstacles need at least one collision point".into(),
            ));
        }
        self.controller_params.validate()?;
        self.damping.validate()?;
        self.sensing.validate()?;
        if self.simulator.max_iterations == 0 || !(self.simulator.activation_distance >= 0.0) {
            return Err(Error::InvalidInput(
                "simulator settings out of range".into(),
            ));
        }

        let times = self.reference.times();
        if times.is_empty() {
            return Err(Error::InvalidInput(
                "reference needs at least one knot".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "knot times must be strictly increasing".into(),
            ));
        }
        match &self.reference {
            Reference::Joint { knots } => {
                for k in knots {
                    check_len("reference knot", n, k.q.len())?;
                    if k.q.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidInput("reference knots must be finite".into()));
                    }
                }
            }
            Reference::Task {
                point,
                waypoints,
                regularization,
            } => {
                self.robot.check_point(point)?;
                if waypoints
                    .iter()
                    .any(|w| !(w.p[0].is_finite() && w.p[1].is_finite()))
                {
                    return Err(Error::InvalidInput("waypoints must be finite".into()));
                }
                if !(regularization.is_finite() && *regularization > 0.0) {
                    return Err(Error::InvalidInput(
                        "task regularization must be > 0".into(),
                    ));
                }
            }
        }
        let q0 = self.initial_configuration()?;
        check_len("initial_q", n, q0.len())?;
        if let Some([a, b]) = self.separation_window {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInput(
                    "separation_window must satisfy start < end".into(),
                ));
            }
        }
        Ok(())
    }
}
