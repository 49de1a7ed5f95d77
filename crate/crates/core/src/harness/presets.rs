//! The two shipped scenarios, also stored as JSON under `scenarios/`.

use nalgebra::{Point2, Vector2};

use crate::controllers::{ControllerKind, ControllerParams};
use crate::geometry::{Obstacle, Shape};
use crate::kinematics::{BasePose, BodyPoint, RobotModel};
use crate::quasistatic::SimSettings;
use crate::sensing::{DampingConfig, SensingConfig};

use super::scenario::{JointKnot, Reference, Scenario, SceneSpec, SCHEMA_VERSION};

fn arm(base_pose: BasePose, rate: f64) -> RobotModel {
    RobotModel {
        link_lengths: vec![0.4, 0.4, 0.3],
        joint_stiffness: vec![300.0, 200.0, 100.0],
        joint_limits: None,
        rate_bound: vec![rate; 3],
        base_pose,
    }
}

fn sensing() -> SensingConfig {
    SensingConfig {
        f_threshold: 5.0,
        direction_noise_std: 0.02,
        magnitude_noise_std: 0.3,
        point_noise_std: 0.002,
        rng_seed: 0,
        latency_ticks: 0,
    }
}

fn knots(points: &[(f64, [f64; 3])]) -> Reference {
    Reference::Joint {
        knots: points
            .iter()
            .map(|(t, q)| JointKnot {
                t: *t,
                q: q.to_vec(),
            })
            .collect(),
    }
}

/// Reach down past a rounded table edge so the middle link bears on it, then
/// withdraw; twice.
pub fn edge_press() -> Scenario {
    let robot = arm(
        BasePose {
            x: 1.0,
            y: 0.7,
            theta: std::f64::consts::PI,
        },
        0.005,
    );
    let points = [0.5, 0.8]
        .map(|f| BodyPoint::along(&robot, 1, f))
        .into_iter()
        .chain([0.5, 1.0].map(|f| BodyPoint::along(&robot, 2, f)))
        .collect();
    // a tabletop whose rounded front edge sits at (0.45, 0.3)
    let table = Obstacle {
        shape: Shape::Capsule {
            a: Point2::new(0.5, 0.25),
            b: Point2::new(2.0, 0.25),
            radius: 0.05,
        },
        friction_coefficient: 0.2,
        contact_stiffness: 300.0,
    };
    let up = [0.3, 0.6, 0.3];
    let down = [0.4, 0.9, 0.3];
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "edge-press".into(),
        description: "Middle link pressed onto a table edge and released, twice.".into(),
        robot,
        scene: SceneSpec {
            obstacles: vec![table],
            collision_points: points,
            points_per_link: None,
        },
        reference: knots(&[
            (0.0, up),
            (0.5, up),
            (2.0, down),
            (3.0, down),
            (4.5, up),
            (5.0, up),
            (6.5, down),
            (7.5, down),
            (9.0, up),
        ]),
        initial_q: None,
        controller: ControllerKind::FrictionalQp,
        controller_params: ControllerParams::default(),
        damping: DampingConfig::default(),
        sensing: sensing(),
        simulator: SimSettings::default(),
        control_rate: 200.0,
        duration: 10.0,
        rng_seed: 7,
        max_fault_ticks: 50,
        separation_window: None,
    }
}

/// Press the tip onto a tabletop, slide it along the surface and lift it off.
pub fn slide_and_release() -> Scenario {
    let robot = arm(
        BasePose {
            x: 0.0,
            y: 0.5,
            theta: 0.0,
        },
        0.01,
    );
    let table = Obstacle {
        shape: Shape::HalfPlane {
            normal: Vector2::new(0.0, 1.0),
            offset: 0.0,
        },
        friction_coefficient: 0.5,
        contact_stiffness: 300.0,
    };
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "slide-and-release".into(),
        description: "Tip pressed onto a tabletop, slid along it, then lifted clear.".into(),
        robot: robot.clone(),
        scene: SceneSpec {
            obstacles: vec![table],
            collision_points: vec![robot.end_effector()],
            points_per_link: None,
        },
        // tip 6 cm above the table, 4 cm into it, slid 20 cm along it, then lifted
        // 13 cm while still sliding
        reference: knots(&[
            (0.0, [0.5487, -1.6804, -0.1392]),
            (0.3, [0.5487, -1.6804, -0.1392]),
            (1.3, [0.3164, -1.5530, -0.0342]),
            (1.9, [0.3504, -1.7054, 0.0842]),
            (2.5, [0.3703, -1.8448, 0.2037]),
            (3.1, [0.3748, -1.9729, 0.3272]),
            (3.7, [0.3620, -2.0903, 0.4575]),
            (4.3, [0.4069, -2.2459, 0.5682]),
            (4.9, [0.4359, -2.3945, 0.6878]),
            (5.5, [0.4412, -2.5366, 0.8246]),
            (6.1, [0.4054, -2.6715, 0.9953]),
            (6.7, [0.2882, -2.7954, 1.2363]),
        ]),
        initial_q: None,
        controller: ControllerKind::FrictionalQp,
        controller_params: ControllerParams::default(),
        damping: DampingConfig::default(),
        sensing: sensing(),
        simulator: SimSettings::default(),
        control_rate: 200.0,
        duration: 7.5,
        rng_seed: 11,
        max_fault_ticks: 50,
        separation_window: Some([3.7, 7.5]),
    }
}

pub fn all() -> Vec<Scenario> {
    vec![edge_press(), slide_and_release()]
}
