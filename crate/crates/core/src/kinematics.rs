//! Planar serial arm with revolute joints.
//!
//! Joint `j` sits at the origin of link frame `j`; link `j` extends along the
//! frame's local x axis by `link_lengths[j]`. All indices are zero-based.

use nalgebra::{DVector, Isometry2, Matrix2xX, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BasePose {
    pub fn isometry(&self) -> Isometry2<f64> {
        Isometry2::new(Vector2::new(self.x, self.y), self.theta)
    }
}

/// Planar N-link arm under joint stiffness control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    /// Link lengths [m].
    pub link_lengths: Vec<f64>,
    /// Diagonal of the joint stiffness matrix [N·m/rad].
    pub joint_stiffness: Vec<f64>,
    /// Optional `[lower, upper]` interval per joint [rad].
    #[serde(default)]
    pub joint_limits: Option<Vec<[f64; 2]>>,
    /// Largest allowed change of the joint command per control tick [rad].
    pub rate_bound: Vec<f64>,
    #[serde(default)]
    pub base_pose: BasePose,
}

impl RobotModel {
    pub fn new(
        link_lengths: Vec<f64>,
        joint_stiffness: Vec<f64>,
        rate_bound: Vec<f64>,
    ) -> Result<Self> {
        let model = Self {
            link_lengths,
            joint_stiffness,
            joint_limits: None,
            rate_bound,
            base_pose: BasePose::default(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_joint_limits(mut self, limits: Vec<[f64; 2]>) -> Result<Self> {
        self.joint_limits = Some(limits);
        self.validate()?;
        Ok(self)
    }

    pub fn with_base_pose(mut self, base_pose: BasePose) -> Self {
        self.base_pose = base_pose;
        self
    }

    pub fn num_joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.link_lengths.len();
        if n == 0 {
            return Err(Error::InvalidInput("robot needs at least one joint".into()));
        }
        check_len("joint_stiffness", n, self.joint_stiffness.len())?;
        check_len("rate_bound", n, self.rate_bound.len())?;
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                Some(i) => Err(Error::InvalidInput(format!(
                    "{name}[{i}] must be finite and > 0"
                ))),
                None => Ok(()),
            }
        };
        positive("link_lengths", &self.link_lengths)?;
        positive("joint_stiffness", &self.joint_stiffness)?;
        positive("rate_bound", &self.rate_bound)?;
        if let Some(limits) = &self.joint_limits {
            check_len("joint_limits", n, limits.len())?;
            for (i, [lo, hi]) in limits.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidInput(format!(
                        "joint_limits[{i}] must satisfy lower <= upper"
                    )));
                }
            }
        }
        let b = &self.base_pose;
        if !(b.x.is_finite() && b.y.is_finite() && b.theta.is_finite()) {
            return Err(Error::InvalidInput("base_pose must be finite".into()));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.joint_stiffness)
    }

    pub fn rate_bound_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rate_bound)
    }

    /// Sum of link lengths; an upper bound on how far any body point is from the base.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Tip of the last link.
    pub fn end_effector(&self) -> BodyPoint {
        let last = self.num_joints() - 1;
        BodyPoint::new(last, Vector2::new(self.link_lengths[last], 0.0))
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_len("joint vector", self.num_joints(), q.len())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("joint vector must be finite".into()));
        }
        Ok(())
    }

    pub fn check_point(&self, point: &BodyPoint) -> Result<()> {
        if point.link >= self.num_joints() {
            return Err(Error::InvalidInput(format!(
                "body point link {} out of range for {} links",
                point.link,
                self.num_joints()
            )));
        }
        if !(point.offset.x.is_finite() && point.offset.y.is_finite()) {
            return Err(Error::InvalidInput(
                "body point offset must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// A material point rigidly attached to a link, given in that link's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyPoint {
    pub link: usize,
    pub offset: Vector2<f64>,
}

impl BodyPoint {
    pub fn new(link: usize, offset: Vector2<f64>) -> Self {
        Self { link, offset }
    }

    /// Point at `fraction` of the way along link `link`.
    pub fn along(model: &RobotModel, link: usize, fraction: f64) -> Self {
        Self::new(link, Vector2::new(model.link_lengths[link] * fraction, 0.0))
    }
}

/// Link frames in world coordinates; frame `j` has its origin at joint `j`.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Vec<Isometry2<f64>>> {
    model.check_q(q)?;
    Ok(frames_unchecked(model, q))
}

fn frames_unchecked(model: &RobotModel, q: &DVector<f64>) -> Vec<Isometry2<f64>> {
    let mut frames = Vec::with_capacity(q.len());
    let mut parent = model.base_pose.isometry();
    for (j, &angle) in q.iter().enumerate() {
        let frame = parent * Isometry2::rotation(angle);
        frames.push(frame);
        parent = frame * Isometry2::translation(model.link_lengths[j], 0.0);
    }
    frames
}

pub fn point_position(
    model: &RobotModel,
    q: &DVector<f64>,
    point: &BodyPoint,
) -> Result<Point2<f64>> {
    model.check_point(point)?;
    let frames = forward_kinematics(model, q)?;
    Ok(frames[point.link] * Point2::from(point.offset))
}

/// World positions of many body points from a single forward-kinematics pass.
pub fn point_positions(
    model: &RobotModel,
    q: &DVector<f64>,
    points: &[BodyPoint],
) -> Result<Vec<Point2<f64>>> {
    let frames = forward_kinematics(model, q)?;
    points
        .iter()
        .map(|p| {
            model.check_point(p)?;
            Ok(frames[p.link] * Point2::from(p.offset))
        })
        .collect()
}

/// Position Jacobian of a body point: column `j` is the derivative of the
/// point's world position with respect to joint `j`.
pub fn point_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    point: &BodyPoint,
) -> Result<Matrix2xX<f64>> {
    model.check_point(point)?;
    let frames = forward_kinematics(model, q)?;
    Ok(jacobian_from_frames(&frames, point, q.len()))
}

pub(crate) fn jacobian_from_frames(
    frames: &[Isometry2<f64>],
    point: &BodyPoint,
    n: usize,
) -> Matrix2xX<f64> {
    let p = frames[point.link] * Point2::from(point.offset);
    let mut jac = Matrix2xX::zeros(n);
    for (j, frame) in frames.iter().enumerate().take(point.link + 1) {
        let r = p.coords - frame.translation.vector;
        // z × r for a unit rotation rate about joint j
        jac[(0, j)] = -r.y;
        jac[(1, j)] = r.x;
    }
    jac
}
