use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Controller, Gait, OracleError};
use crate::nn::{feature_len, transition_features, Batch, TrainingSet};
use crate::robot::{world_to_base_unit, EffectorPositions, Frame, ReducedRobotState, RobotState};

/// One gait cycle of the random walk. Contact sets are in the base frame of
/// the state the cycle started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// Classifier/predictor features `[x̄ ; e_cur ; e_tgt]`.
    pub x: Vec<f64>,
    pub e_cur: Vec<[f64; 3]>,
    pub e_tgt: Vec<[f64; 3]>,
    pub e_ach: Option<Vec<[f64; 3]>>,
    pub y: u8,
    pub x_next: Option<Vec<f64>>,
    pub gait: Gait,
}

impl TransitionRecord {
    pub fn feasible(&self) -> bool {
        self.y == 1
    }

    fn validate(&self, n_e: usize) -> Result<(), String> {
        if self.x.len() != feature_len(n_e) {
            return Err(format!("x has {} values, expected {}", self.x.len(), feature_len(n_e)));
        }
        if self.e_cur.len() != n_e || self.e_tgt.len() != n_e {
            return Err("contact sets have the wrong effector count".into());
        }
        match (self.y, &self.e_ach, &self.x_next) {
            (1, Some(a), Some(n))
                if a.len() == n_e && n.len() == ReducedRobotState::encoded_len(n_e) =>
            {
                Ok(())
            }
            (1, _, _) => Err("feasible record needs e_ach and x_next of the right size".into()),
            (0, None, None) => Ok(()),
            (0, _, _) => Err("infeasible record must not carry e_ach or x_next".into()),
            (y, _, _) => Err(format!("label {y} is not 0 or 1")),
        }
    }
}

fn rows(e: &EffectorPositions) -> Vec<[f64; 3]> {
    e.points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Knobs of the flat-ground random walk used to collect training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Step radius is drawn from `U(0, radius_factor * d_max_kin)`.
    pub radius_factor: f64,
    /// Probability that the moving feet share one displacement.
    pub common_prob: f64,
    /// Per-foot jitter radius added to a shared displacement.
    pub jitter: f64,
    /// Fraction of the offset to the nominal stance added to each target.
    pub recenter: f64,
    /// Initial heading is drawn from `U(-yaw_init, yaw_init)`.
    pub yaw_init: f64,
    /// The walk restarts once the heading leaves `[-yaw_reset, yaw_reset]`.
    pub yaw_reset: f64,
    /// Accepted range of the positive fraction; `None` disables resampling.
    pub balance: Option<(f64, f64)>,
    pub max_rounds: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            n_samples: 1000,
            seed: 0,
            radius_factor: 1.3,
            common_prob: 0.5,
            jitter: 0.03,
            recenter: 0.5,
            yaw_init: 0.3,
            yaw_reset: 0.6,
            balance: Some((0.25, 0.75)),
            max_rounds: 10,
        }
    }
}

/// Default collection protocol for `n_samples` records.
pub fn collect_dataset(
    controller: &Controller,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<TransitionRecord>, OracleError> {
    collect_dataset_with(
        controller,
        &CollectConfig {
            n_samples,
            seed,
            ..CollectConfig::default()
        },
    )
}

/// Runs the random walk; when the positive fraction falls outside
/// `config.balance`, the step radius is rescaled by 1.25 and the walk rerun.
pub fn collect_dataset_with(
    controller: &Controller,
    config: &CollectConfig,
) -> Result<Vec<TransitionRecord>, OracleError> {
    if config.n_samples == 0 {
        return Err(OracleError::Config("n_samples must be positive".into()));
    }
    controller.gait.validate()?;
    let mut scale = 1.0;
    for round in 0..config.max_rounds.max(1) {
        let records = random_walk(controller, config, scale);
        let Some((lo, hi)) = config.balance else {
            return Ok(records);
        };
        let pos = records.iter().filter(|r| r.feasible()).count() as f64 / records.len() as f64;
        if (lo..=hi).contains(&pos) {
            return Ok(records);
        }
        if round + 1 == config.max_rounds.max(1) {
            return Err(OracleError::Config(format!(
                "positive fraction {pos:.3} outside [{lo}, {hi}] after {} rounds",
                config.max_rounds
            )));
        }
        // too many failures: shorter steps; too few: longer steps
        scale = if pos < lo { scale / 1.25 } else { scale * 1.25 };
    }
    unreachable!()
}

fn disc<R: Rng>(rng: &mut R, radius: f64) -> Vector3<f64> {
    let r = rng.random_range(0.0..=radius);
    let a = rng.random_range(0.0..TAU);
    Vector3::new(r * a.cos(), r * a.sin(), 0.0)
}

fn nominal_stance<R: Rng>(controller: &Controller, xy: Vector3<f64>, rng: &mut R, yaw_init: f64) -> RobotState {
    let yaw = if yaw_init > 0.0 {
        rng.random_range(-yaw_init..=yaw_init)
    } else {
        0.0
    };
    let q = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
    let feet = controller
        .robot
        .hip_anchors
        .iter()
        .map(|h| {
            let p = xy + q.transform_vector(&Vector3::new(h.x, h.y, 0.0));
            Vector3::new(p.x, p.y, 0.0)
        })
        .collect();
    RobotState::standing(&EffectorPositions::new(Frame::World, feet), &controller.robot)
}

fn random_walk(controller: &Controller, config: &CollectConfig, scale: f64) -> Vec<TransitionRecord> {
    let robot = &controller.robot;
    let n_e = robot.n_effectors;
    let gait = controller.gait.gait;
    let radius = scale * config.radius_factor * robot.d_max_kin;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = nominal_stance(controller, Vector3::zeros(), &mut rng, config.yaw_init);
    let mut out = Vec::with_capacity(config.n_samples);
    let mut cycle = 0usize;
    while out.len() < config.n_samples {
        let current = x.feet_world(robot);
        let nominal = nominal_feet(&x, controller);
        let mut targets = current.clone();
        let shared = rng.random_bool(config.common_prob.clamp(0.0, 1.0));
        let d0 = disc(&mut rng, radius);
        for j in gait.moving_effectors(cycle, n_e) {
            let d = if shared {
                d0 + disc(&mut rng, config.jitter)
            } else {
                disc(&mut rng, radius)
            };
            let pull = config.recenter * (nominal[j] - current.points[j]);
            let t = &mut targets.points[j];
            t.x += d.x + pull.x;
            t.y += d.y + pull.y;
            t.z = 0.0;
        }
        cycle += 1;

        let e_cur = world_to_base_unit(&current.points, &x.base_pos, &x.base_quat);
        let e_tgt = world_to_base_unit(&targets.points, &x.base_pos, &x.base_quat);
        let reduced = x.reduced();
        let features =
            transition_features(&reduced, &e_cur, &e_tgt).expect("walk states are well formed");
        let step = controller
            .step(&x, &targets, &mut rng)
            .expect("walk targets are well formed");
        let (e_ach, x_next) = if step.success {
            let a = world_to_base_unit(&step.achieved.points, &x.base_pos, &x.base_quat);
            (Some(rows(&a)), Some(step.next.reduced().encode()))
        } else {
            (None, None)
        };
        out.push(TransitionRecord {
            x: features,
            e_cur: rows(&e_cur),
            e_tgt: rows(&e_tgt),
            e_ach,
            y: step.success as u8,
            x_next,
            gait,
        });
        x = if step.success && step.next.yaw().abs() <= config.yaw_reset {
            step.next
        } else {
            cycle = 0;
            let xy = Vector3::new(x.base_pos.x, x.base_pos.y, 0.0);
            nominal_stance(controller, xy, &mut rng, config.yaw_init)
        };
    }
    out
}

/// Where each foot would stand under the current base pose.
fn nominal_feet(x: &RobotState, controller: &Controller) -> Vec<Vector3<f64>> {
    controller
        .robot
        .hip_anchors
        .iter()
        .map(|h| x.base_pos + x.base_quat.transform_vector(&(h + controller.robot.nominal_joint())))
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[TransitionRecord], mut w: W) -> Result<(), OracleError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses and validates a JSONL dataset for `n_effectors` legs.
pub fn read_jsonl<R: BufRead>(r: R, n_effectors: usize) -> Result<Vec<TransitionRecord>, OracleError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line).map_err(|e| OracleError::Schema {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.validate(n_effectors)
            .map_err(|msg| OracleError::Schema { line: i + 1, msg })?;
        out.push(rec);
    }
    Ok(out)
}

/// Features and 0/1 labels.
pub fn classifier_set(records: &[TransitionRecord]) -> Result<TrainingSet, OracleError> {
    let x: Vec<&[f64]> = records.iter().map(|r| r.x.as_slice()).collect();
    let y: Vec<[f64; 1]> = records.iter().map(|r| [r.y as f64]).collect();
    Ok(TrainingSet::new(Batch::from_rows(&x)?, Batch::from_rows(&y)?)?)
}

/// Successful transitions only. Targets are the next reduced state followed
/// by the per-foot correction `e_tgt - e_ach`, which, added to a commanded
/// foothold, cancels the controller's systematic error.
pub fn dynamics_set(records: &[TransitionRecord]) -> Result<TrainingSet, OracleError> {
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for r in records {
        let (Some(ach), Some(next)) = (&r.e_ach, &r.x_next) else {
            continue;
        };
        let mut t = next.clone();
        for (tg, a) in r.e_tgt.iter().zip(ach) {
            t.extend((0..3).map(|k| tg[k] - a[k]));
        }
        xs.push(r.x.as_slice());
        ts.push(t);
    }
    if xs.is_empty() {
        return Err(OracleError::Config("no successful transitions in the dataset".into()));
    }
    Ok(TrainingSet::new(Batch::from_rows(&xs)?, Batch::from_rows(&ts)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GaitSpec;
    use crate::robot::RobotConfig;

    fn controller(spec: GaitSpec) -> Controller {
        Controller::new(spec, RobotConfig::default())
    }

    #[test]
    fn rigid_steps_with_perfect_tracking_always_succeed() {
        let cfg = CollectConfig {
            n_samples: 500,
            radius_factor: 1.0,
            common_prob: 1.0,
            jitter: 0.0,
            balance: None,
            ..Default::default()
        };
        for spec in [GaitSpec::jump().unbiased(), GaitSpec::trot().unbiased()] {
            let data = collect_dataset_with(&controller(spec), &cfg).unwrap();
            if spec.gait == Gait::Jump {
                assert!(data.iter().all(|r| r.y == 1));
            }
            assert_eq!(data.len(), 500);
        }
    }

    #[test]
    fn default_protocol_is_balanced() {
        for spec in [GaitSpec::jump(), GaitSpec::trot()] {
            let data = collect_dataset(&controller(spec), 2000, 5).unwrap();
            let pos = data.iter().filter(|r| r.feasible()).count() as f64 / 2000.0;
            assert!((0.25..=0.75).contains(&pos), "{pos}");
        }
    }

    #[test]
    fn jsonl_round_trip_is_lossless() {
        let data = collect_dataset(&controller(GaitSpec::jump()), 50, 1).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&data, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice(), 4).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn schema_violations_are_reported() {
        let data = collect_dataset(&controller(GaitSpec::jump()), 5, 1).unwrap();
        let mut v = serde_json::to_value(&data[0]).unwrap();
        v.as_object_mut().unwrap().remove("y");
        let text = v.to_string();
        assert!(matches!(
            read_jsonl(text.as_bytes(), 4),
            Err(OracleError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn impossible_balance_is_a_config_error() {
        let cfg = CollectConfig {
            n_samples: 100,
            radius_factor: 0.0,
            common_prob: 1.0,
            jitter: 0.0,
            max_rounds: 3,
            ..Default::default()
        };
        let c = controller(GaitSpec::jump().unbiased());
        assert!(matches!(collect_dataset_with(&c, &cfg), Err(OracleError::Config(_))));
    }
}
