//! Synthetic contact sensing and the force-discrepancy damping signal.
//!
//! Estimates are derived from the simulator's ground truth with seeded noise,
//! a force threshold and an optional latency, standing in for a torque-based
//! contact estimator.

use std::collections::VecDeque;

use nalgebra::{DVector, Rotation2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, RobotModel};
use crate::quasistatic::{Contact, ContactId, ContactSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    /// Contacts whose (noisy) magnitude is below this are not reported [N].
    pub f_threshold: f64,
    /// Std. dev. of the rotation applied to each force direction [rad].
    pub direction_noise_std: f64,
    pub magnitude_noise_std: f64,
    /// Std. dev. of the contact location error along the arm surface [m].
    pub point_noise_std: f64,
    /// Set from the scenario seed when run by the harness.
    #[serde(skip)]
    pub rng_seed: u64,
    pub latency_ticks: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            f_threshold: 5.0,
            direction_noise_std: 0.0,
            magnitude_noise_std: 0.0,
            point_noise_std: 0.0,
            rng_seed: 0,
            latency_ticks: 0,
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.f_threshold)
            && ok(self.direction_noise_std)
            && ok(self.magnitude_noise_std)
            && ok(self.point_noise_std))
        {
            return Err(Error::InvalidInput(
                "sensing threshold and noise levels must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn noise_rng(seed: u64, tick: u64, index: u64) -> ChaCha8Rng {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ tick) ^ index);
    ChaCha8Rng::seed_from_u64(h)
}

/// Noisy, thresholded view of the true contacts at configuration `q`.
///
/// Noise for contact `i` at `tick` is drawn from a generator seeded by
/// `(rng_seed, tick, i)`, so estimates are reproducible. Location noise moves
/// the contact point in the link frame.
pub fn estimate_contacts(
    model: &RobotModel,
    q: &DVector<f64>,
    truth: &ContactSet,
    cfg: &SensingConfig,
    tick: u64,
) -> Result<Vec<Contact>> {
    let frames = forward_kinematics(model, q)?;
    let mut out = Vec::new();
    for (index, contact) in truth.all_contacts().enumerate() {
        let mut rng = noise_rng(cfg.rng_seed, tick, index as u64);
        let draws: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut est = contact.clone();
        if cfg.direction_noise_std > 0.0 {
            let rotated = Rotation2::new(draws[0] * cfg.direction_noise_std) * est.direction;
            est.direction = rotated / rotated.norm();
        }
        if cfg.magnitude_noise_std > 0.0 {
            est.magnitude = (est.magnitude + draws[1] * cfg.magnitude_noise_std).max(0.0);
        }
        if cfg.point_noise_std > 0.0 {
            est.body_point.offset.x += draws[2] * cfg.point_noise_std;
            est.body_point.offset.y += draws[3] * cfg.point_noise_std;
            est.point = frames[est.body_point.link] * nalgebra::Point2::from(est.body_point.offset);
        }
        if est.magnitude >= cfg.f_threshold {
            out.push(est);
        }
    }
    Ok(out)
}

/// Stateful wrapper adding latency: at tick `l` it reports the estimate made
/// at tick `l - latency_ticks` (nothing before that).
#[derive(Debug, Clone)]
pub struct ContactSensor {
    pub config: SensingConfig,
    history: VecDeque<Vec<Contact>>,
}

impl ContactSensor {
    pub fn new(config: SensingConfig) -> Self {
        Self {
            config,
            history: VecDeque::new(),
        }
    }

    pub fn measure(
        &mut self,
        model: &RobotModel,
        q: &DVector<f64>,
        truth: &ContactSet,
        tick: u64,
    ) -> Result<Vec<Contact>> {
        let now = estimate_contacts(model, q, truth, &self.config, tick)?;
        self.history.push_back(now);
        if self.history.len() > self.config.latency_ticks {
            Ok(self.history.pop_front().unwrap_or_default())
        } else {
            Ok(Vec::new())
        }
    }
}

/// A contact force magnitude tagged with the contact it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactForce {
    pub id: ContactId,
    pub magnitude: f64,
}

pub fn forces_of(contacts: &[Contact]) -> Vec<ContactForce> {
    contacts
        .iter()
        .map(|c| ContactForce {
            id: c.id,
            magnitude: c.magnitude,
        })
        .collect()
}

/// Max-norm difference between two force lists matched by contact identity;
/// a contact present in only one list counts with its full magnitude.
pub fn force_error(predicted: &[ContactForce], estimated: &[ContactForce]) -> f64 {
    let mut err: f64 = 0.0;
    for p in predicted {
        let other = estimated
            .iter()
            .find(|e| e.id == p.id)
            .map_or(0.0, |e| e.magnitude);
        err = err.max((p.magnitude - other).abs());
    }
    for e in estimated {
        if !predicted.iter().any(|p| p.id == e.id) {
            err = err.max(e.magnitude.abs());
        }
    }
    err
}

/// `1 - exp(-||lambda_pred - lambda_est||_inf / a)`, in `[0, 1]`.
pub fn force_discrepancy(
    predicted: &[ContactForce],
    estimated: &[ContactForce],
    a: f64,
) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidInput(
            "force error scale a must be > 0".into(),
        ));
    }
    Ok(discrepancy_from_error(force_error(predicted, estimated), a))
}

pub fn discrepancy_from_error(error_inf: f64, a: f64) -> f64 {
    // -expm1(-x) = 1 - exp(-x), accurate for small x
    (-(-error_inf / a).exp_m1()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingFilter {
    /// `w = w_max (alpha e_now + (1 - alpha) e_prev)`.
    #[default]
    Fir,
    /// Exponential smoothing of `e`; `e_prev` then holds the smoothed value.
    Iir,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DampingConfig {
    /// Force error scale [N].
    pub a: f64,
    pub alpha: f64,
    pub w_max: f64,
    pub filter: DampingFilter,
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self {
            a: 5.0,
            alpha: 0.9,
            w_max: 10.0,
            filter: DampingFilter::Fir,
        }
    }
}

impl DampingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidInput("damping a must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(
                "damping alpha must be in (0, 1]".into(),
            ));
        }
        if !(self.w_max.is_finite() && self.w_max >= 0.0) {
            return Err(Error::InvalidInput("damping w_max must be >= 0".into()));
        }
        Ok(())
    }
}

/// Adaptive weight on command changes, driven by the force discrepancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingState {
    pub e_prev: f64,
    pub w: f64,
    pub config: DampingConfig,
}

impl DampingState {
    pub fn new(config: DampingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            e_prev: 0.0,
            w: 0.0,
            config,
        })
    }

    pub fn check(&self) -> Result<()> {
        let w_max = self.config.w_max;
        if !(0.0..=1.0).contains(&self.e_prev)
            || !(self.w >= 0.0 && self.w <= w_max * (1.0 + 1e-12))
        {
            return Err(Error::InvalidInput(format!(
                "damping state out of range: e_prev={}, w={}",
                self.e_prev, self.w
            )));
        }
        Ok(())
    }
}

pub fn update_damping_weight(state: &DampingState, e_now: f64) -> Result<DampingState> {
    if !(0.0..=1.0).contains(&e_now) {
        return Err(Error::InvalidInput(format!(
            "discrepancy {e_now} outside [0, 1]"
        )));
    }
    let DampingConfig {
        alpha,
        w_max,
        filter,
        ..
    } = state.config;
    let mixed = alpha * e_now + (1.0 - alpha) * state.e_prev;
    let next = DampingState {
        e_prev: match filter {
            DampingFilter::Fir => e_now,
            DampingFilter::Iir => mixed,
        },
        w: (w_max * mixed).clamp(0.0, w_max),
        config: state.config,
    };
    next.check()?;
    Ok(next)
}
