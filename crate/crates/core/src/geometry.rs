//! Signed-distance queries against static 2D obstacles.

use nalgebra::{DVector, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{point_positions, BodyPoint, RobotModel};

/// Default regularized-friction stiffness [N/m].
pub const DEFAULT_CONTACT_STIFFNESS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Solid region `{x : normal·x < offset}`; `normal` must be unit length.
    HalfPlane {
        normal: Vector2<f64>,
        offset: f64,
    },
    Circle {
        center: Point2<f64>,
        radius: f64,
    },
    /// Points within `radius` of the segment `a`–`b`.
    Capsule {
        a: Point2<f64>,
        b: Point2<f64>,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    #[serde(default)]
    pub friction_coefficient: f64,
    /// Contact compliance [N/m]; the simulator uses it as the tangential
    /// stiffness of the regularized friction model.
    #[serde(default = "default_contact_stiffness")]
    pub contact_stiffness: f64,
}

fn default_contact_stiffness() -> f64 {
    DEFAULT_CONTACT_STIFFNESS
}

impl Obstacle {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            friction_coefficient: 0.0,
            contact_stiffness: DEFAULT_CONTACT_STIFFNESS,
        }
    }

    pub fn with_friction(mut self, mu: f64) -> Self {
        self.friction_coefficient = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        match &self.shape {
            Shape::HalfPlane { normal, offset } => {
                if !offset.is_finite() || (normal.norm() - 1.0).abs() > 1e-9 {
                    return bad("half-plane needs a unit normal and finite offset");
                }
            }
            Shape::Circle { center, radius } => {
                if !(center.x.is_finite() && center.y.is_finite())
                    || !(radius.is_finite() && *radius > 0.0)
                {
                    return bad("circle needs a finite center and radius > 0");
                }
            }
            Shape::Capsule { a, b, radius } => {
                let finite = [a.x, a.y, b.x, b.y].iter().all(|v| v.is_finite());
                if !finite || !(radius.is_finite() && *radius > 0.0) {
                    return bad("capsule needs finite endpoints and radius > 0");
                }
            }
        }
        if !(self.friction_coefficient.is_finite() && self.friction_coefficient >= 0.0) {
            return bad("friction coefficient must be >= 0");
        }
        if !(self.contact_stiffness.is_finite() && self.contact_stiffness > 0.0) {
            return bad("contact stiffness must be > 0");
        }
        Ok(())
    }

    pub fn signed_distance(&self, point: &Point2<f64>) -> DistanceSample {
        signed_distance(&self.shape, point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    /// Negative inside the obstacle.
    pub distance: f64,
    /// Outward unit gradient of the distance field.
    pub normal: Vector2<f64>,
    /// Closest point on the obstacle boundary.
    pub witness: Point2<f64>,
}

/// Signed distance from `point` to a shape.
///
/// At the exact center of a circle (or on the core segment of a capsule) the
/// gradient is undefined; the normal then falls back to `+x` for circles and
/// to the segment's left-hand perpendicular for capsules.
pub fn signed_distance(shape: &Shape, point: &Point2<f64>) -> DistanceSample {
    match shape {
        Shape::HalfPlane { normal, offset } => {
            let distance = normal.dot(&point.coords) - offset;
            DistanceSample {
                distance,
                normal: *normal,
                witness: point - normal * distance,
            }
        }
        Shape::Circle { center, radius } => round_distance(center, *radius, point, Vector2::x()),
        Shape::Capsule { a, b, radius } => {
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 {
                ((point - a).dot(&ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let closest = a + ab * t;
            let fallback = if len2 > 0.0 {
                Vector2::new(-ab.y, ab.x) / len2.sqrt()
            } else {
                Vector2::x()
            };
            round_distance(&closest, *radius, point, fallback)
        }
    }
}

fn round_distance(
    core: &Point2<f64>,
    radius: f64,
    point: &Point2<f64>,
    fallback: Vector2<f64>,
) -> DistanceSample {
    let d = point - core;
    let norm = d.norm();
    let normal = if norm > 0.0 { d / norm } else { fallback };
    DistanceSample {
        distance: norm - radius,
        normal,
        witness: core + normal * radius,
    }
}

/// Static environment plus the sample points on the arm that can touch it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
    pub collision_points: Vec<BodyPoint>,
}

impl Scene {
    /// Samples `per_link` evenly spaced points on every link, ending at the link tip.
    pub fn with_sampled_points(
        model: &RobotModel,
        obstacles: Vec<Obstacle>,
        per_link: usize,
    ) -> Self {
        Self {
            obstacles,
            collision_points: sample_collision_points(model, per_link),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        for o in &self.obstacles {
            o.validate()?;
        }
        for p in &self.collision_points {
            model.check_point(p)?;
        }
        Ok(())
    }

    /// Smallest signed distance over all (collision point, obstacle) pairs.
    pub fn min_signed_distance(&self, model: &RobotModel, q: &DVector<f64>) -> Result<f64> {
        let positions = point_positions(model, q, &self.collision_points)?;
        Ok(positions
            .iter()
            .flat_map(|p| {
                self.obstacles
                    .iter()
                    .map(move |o| o.signed_distance(p).distance)
            })
            .fold(f64::INFINITY, f64::min))
    }
}

pub fn sample_collision_points(model: &RobotModel, per_link: usize) -> Vec<BodyPoint> {
    let per_link = per_link.max(1);
    (0..model.num_joints())
        .flat_map(|link| (1..=per_link).map(move |k| (link, k as f64 / per_link as f64)))
        .map(|(link, fraction)| BodyPoint::along(model, link, fraction))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactCandidate {
    /// Index into `Scene::collision_points`.
    pub point_index: usize,
    pub body_point: BodyPoint,
    pub obstacle_index: usize,
    pub world_point: Point2<f64>,
    /// Unit normal pointing from the obstacle into the arm.
    pub normal: Vector2<f64>,
    pub witness: Point2<f64>,
    /// Negated signed distance; positive when penetrating.
    pub penetration_depth: f64,
}

/// All (collision point, obstacle) pairs whose signed distance is at most
/// `activation_distance`, ordered by collision point then obstacle.
pub fn detect_contacts(
    scene: &Scene,
    model: &RobotModel,
    q: &DVector<f64>,
    activation_distance: f64,
) -> Result<Vec<ContactCandidate>> {
    if !(activation_distance >= 0.0) {
        return Err(Error::InvalidInput(
            "activation distance must be >= 0".into(),
        ));
    }
    let positions = point_positions(model, q, &scene.collision_points)?;
    let mut out = Vec::new();
    for (point_index, (body_point, world)) in
        scene.collision_points.iter().zip(&positions).enumerate()
    {
        for (obstacle_index, obstacle) in scene.obstacles.iter().enumerate() {
            let s = obstacle.signed_distance(world);
            if s.distance <= activation_distance {
                out.push(ContactCandidate {
                    point_index,
                    body_point: *body_point,
                    obstacle_index,
                    world_point: *world,
                    normal: s.normal,
                    witness: s.witness,
                    penetration_depth: -s.distance,
                });
            }
        }
    }
    Ok(out)
}
