//! Surrogate low-level controller.
//!
//! Stands in for the whole-body controller and physics: it executes one gait
//! cycle towards commanded footholds with a systematic, state-dependent bias
//! and Gaussian noise, labels the transition, and replays whole plans.

mod dataset;
mod rollout;

pub use dataset::{
    classifier_set, collect_dataset, collect_dataset_with, dynamics_set, read_jsonl, write_jsonl,
    CollectConfig, TransitionRecord,
};
pub use rollout::{rollout_plan, RolloutResult};

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;
use crate::robot::{
    joints_from_world, legs_crossed, stance_yaw, EffectorPositions, Frame, RobotConfig, RobotError,
    RobotState,
};

/// Foothold error above which a transition counts as failed.
pub const E_MAX: f64 = 0.08;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed dataset line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Trot,
    Jump,
}

impl Gait {
    /// Effectors that leave the ground on gait cycle `step`: all four for a
    /// jump, alternating diagonal pairs (FL+RR, then FR+RL) for a trot.
    pub fn moving_effectors(self, step: usize, n_effectors: usize) -> Vec<usize> {
        match self {
            Gait::Trot if n_effectors == 4 => {
                if step % 2 == 0 {
                    vec![0, 3]
                } else {
                    vec![1, 2]
                }
            }
            _ => (0..n_effectors).collect(),
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gait::Trot => "trot",
            Gait::Jump => "jump",
        })
    }
}

impl FromStr for Gait {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trot" => Ok(Gait::Trot),
            "jump" => Ok(Gait::Jump),
            _ => Err(format!("unknown gait {s:?}, expected trot or jump")),
        }
    }
}

/// Error model of one gait: `achieved = target + k1 * (target - current)
/// + k2 * v_base + noise`, in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    pub gait: Gait,
    /// Seconds per gait cycle.
    pub cycle_duration: f64,
    pub k1: f64,
    /// Seconds.
    pub k2: f64,
    /// Meters.
    pub sigma_ctrl: f64,
}

impl GaitSpec {
    pub fn trot() -> GaitSpec {
        GaitSpec {
            gait: Gait::Trot,
            cycle_duration: 0.6,
            k1: 0.08,
            k2: 0.05,
            sigma_ctrl: 0.008,
        }
    }

    pub fn jump() -> GaitSpec {
        GaitSpec {
            gait: Gait::Jump,
            cycle_duration: 0.5,
            k1: 0.15,
            k2: 0.08,
            sigma_ctrl: 0.012,
        }
    }

    pub fn for_gait(gait: Gait) -> GaitSpec {
        match gait {
            Gait::Trot => GaitSpec::trot(),
            Gait::Jump => GaitSpec::jump(),
        }
    }

    /// Same timing, perfect tracking.
    pub fn unbiased(self) -> GaitSpec {
        GaitSpec {
            k1: 0.0,
            k2: 0.0,
            sigma_ctrl: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.cycle_duration > 0.0) {
            return Err(OracleError::Config("cycle_duration must be positive".into()));
        }
        if !(self.sigma_ctrl >= 0.0) || !self.k1.is_finite() || !self.k2.is_finite() {
            return Err(OracleError::Config("controller gains must be finite, sigma >= 0".into()));
        }
        Ok(())
    }
}

/// The surrogate controller bound to a robot model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub gait: GaitSpec,
    pub robot: RobotConfig,
    pub e_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Achieved footholds, world frame.
    pub achieved: EffectorPositions,
    pub next: RobotState,
    pub success: bool,
    /// Effectors that were moved this cycle.
    pub swing: Vec<bool>,
    /// `|achieved - target|` per effector.
    pub errors: Vec<f64>,
}

/// Targets closer than this to the current foot leave the foot in stance
/// during a trot.
const STANCE_EPS: f64 = 1e-9;

impl Controller {
    pub fn new(gait: GaitSpec, robot: RobotConfig) -> Controller {
        Controller {
            gait,
            robot,
            e_max: E_MAX,
        }
    }

    /// Executes one gait cycle from `x` towards world-frame `targets`.
    ///
    /// During a trot, feet whose target coincides with their current position
    /// stay in stance and are not perturbed. Every foot moves during a jump.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &RobotState,
        targets: &EffectorPositions,
        rng: &mut R,
    ) -> Result<StepOutcome, OracleError> {
        if targets.frame != Frame::World {
            return Err(RobotError::FrameMismatch {
                expected: Frame::World,
                got: targets.frame,
            }
            .into());
        }
        let n_e = self.robot.n_effectors;
        if targets.len() != n_e || x.joints.len() != 3 * n_e {
            return Err(RobotError::EffectorCount(targets.len(), n_e).into());
        }
        let g = &self.gait;
        let current = x.feet_world(&self.robot);
        let mut achieved = Vec::with_capacity(n_e);
        let mut swing = Vec::with_capacity(n_e);
        let mut errors = Vec::with_capacity(n_e);
        for (c, t) in current.points.iter().zip(&targets.points) {
            let moving = g.gait == Gait::Jump || (t - c).norm() > STANCE_EPS;
            let a = if moving {
                let mut a = *t;
                let d = t - c;
                a.x += g.k1 * d.x + g.k2 * x.base_linvel.x;
                a.y += g.k1 * d.y + g.k2 * x.base_linvel.y;
                if g.sigma_ctrl > 0.0 {
                    a.x += g.sigma_ctrl * rng.sample::<f64, _>(StandardNormal);
                    a.y += g.sigma_ctrl * rng.sample::<f64, _>(StandardNormal);
                }
                a
            } else {
                *c
            };
            errors.push(if moving { (a - t).norm() } else { 0.0 });
            swing.push(moving);
            achieved.push(a);
        }
        let achieved = EffectorPositions::new(Frame::World, achieved);
        let next = self.settle(x, &achieved);
        let reach_ok = next
            .joints
            .chunks_exact(3)
            .all(|q| Vector3::new(q[0], q[1], q[2]).norm() <= self.robot.l_max);
        let success = errors.iter().all(|&e| e <= self.e_max)
            && !legs_crossed(&achieved, self.robot.crossing_margin)
            && reach_ok;
        Ok(StepOutcome {
            achieved,
            next,
            success,
            swing,
            errors,
        })
    }

    /// Robot state after landing on `feet`: base over the new stance,
    /// heading from the stance, twist from the base displacement.
    fn settle(&self, x: &RobotState, feet: &EffectorPositions) -> RobotState {
        let t = self.gait.cycle_duration;
        let c = feet.centroid();
        let base_pos = Vector3::new(c.x, c.y, c.z + self.robot.nominal_height);
        let yaw = stance_yaw(feet);
        let base_quat = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        let joints = joints_from_world(feet, &base_pos, &base_quat, &self.robot);
        let dyaw = yaw - x.yaw();
        let dyaw = dyaw.sin().atan2(dyaw.cos());
        RobotState {
            base_pos,
            base_quat,
            joints,
            base_linvel: (base_pos - x.base_pos) / t,
            base_angvel: Vector3::new(0.0, 0.0, dyaw / t),
        }
    }

    /// Expected horizontal tracking bias for a foot moved from `current` to
    /// `target` while the base moves at `v`.
    pub fn bias(&self, current: &Vector3<f64>, target: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let g = &self.gait;
        let d = target - current;
        Vector3::new(g.k1 * d.x + g.k2 * v.x, g.k1 * d.y + g.k2 * v.y, 0.0)
    }
}
