use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Controller, Gait, OracleError};
use crate::env::{ContactState, EnvError, Environment};
use crate::nn::{predict_residual, transition_features, MlpModel};
use crate::robot::{world_to_base_unit, EffectorPositions, RobotState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub success: bool,
    /// Achieved world-frame footholds after each executed transition.
    pub achieved: Vec<Vec<[f64; 3]>>,
    /// Mean distance of the moved feet to their stone centers, per executed
    /// transition (the failing one included).
    pub contact_errors: Vec<f64>,
    pub failure_step: Option<usize>,
}

impl RolloutResult {
    pub fn mean_contact_error(&self) -> Option<f64> {
        if self.contact_errors.is_empty() {
            None
        } else {
            Some(self.contact_errors.iter().sum::<f64>() / self.contact_errors.len() as f64)
        }
    }
}

/// Executes `plan` with the surrogate controller. Desired footholds are the
/// stone centers; with an `adjuster` the predicted correction is added to the
/// horizontal target of each moving foot. A transition succeeds when the
/// controller succeeds and every moving foot lands on its stone.
pub fn rollout_plan(
    env: &Environment,
    plan: &[ContactState],
    adjuster: Option<&MlpModel>,
    controller: &Controller,
    rng_seed: u64,
) -> Result<RolloutResult, OracleError> {
    let Some(first) = plan.first() else {
        return Err(EnvError::InvalidState("empty plan".into()).into());
    };
    if first != env.start() {
        return Err(EnvError::InvalidState("plan does not begin at the start stance".into()).into());
    }
    let locations = plan
        .iter()
        .map(|s| env.contact_locations(s))
        .collect::<Result<Vec<_>, _>>()?;
    let robot = &controller.robot;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut x = RobotState::standing(&locations[0], robot);
    let mut feet = locations[0].clone();
    let mut result = RolloutResult {
        success: true,
        achieved: Vec::with_capacity(plan.len() - 1),
        contact_errors: Vec::with_capacity(plan.len() - 1),
        failure_step: None,
    };

    for (i, pair) in plan.windows(2).enumerate() {
        let desired = &locations[i + 1];
        let mut targets = desired.clone();
        let mut moving = vec![true; targets.len()];
        if controller.gait.gait == Gait::Trot {
            for j in 0..targets.len() {
                if pair[0].get(j) == pair[1].get(j) {
                    targets.points[j] = feet.points[j];
                    moving[j] = false;
                }
            }
        }
        let commanded = match adjuster {
            Some(model) => adjust(model, &x, &feet, &targets, &moving)?,
            None => targets,
        };
        let out = controller.step(&x, &commanded, &mut rng)?;

        let mut err = 0.0;
        let mut n = 0usize;
        let mut on_stones = true;
        for j in 0..desired.len() {
            if !out.swing[j] {
                continue;
            }
            let a = out.achieved.points[j];
            err += (a - desired.points[j]).norm();
            n += 1;
            on_stones &= env.stone(pair[1].get(j))?.contains_xy(&a);
        }
        result.contact_errors.push(if n > 0 { err / n as f64 } else { 0.0 });
        result
            .achieved
            .push(out.achieved.points.iter().map(|p| [p.x, p.y, p.z]).collect());
        if !(out.success && on_stones) {
            result.success = false;
            result.failure_step = Some(i);
            break;
        }
        feet = out.achieved;
        x = out.next;
    }
    Ok(result)
}

fn adjust(
    model: &MlpModel,
    x: &RobotState,
    feet: &EffectorPositions,
    targets: &EffectorPositions,
    moving: &[bool],
) -> Result<EffectorPositions, OracleError> {
    let e_cur = world_to_base_unit(&feet.points, &x.base_pos, &x.base_quat);
    let e_tgt = world_to_base_unit(&targets.points, &x.base_pos, &x.base_quat);
    let features = transition_features(&x.reduced(), &e_cur, &e_tgt)?;
    let residual = predict_residual(model, &features)?;
    let mut out = targets.clone();
    for ((p, r), &m) in out.points.iter_mut().zip(&residual.offsets.points).zip(moving) {
        if m {
            let w = x.base_quat.transform_vector(r);
            p.x += w.x;
            p.y += w.y;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GridConfig};
    use crate::oracle::GaitSpec;
    use crate::robot::RobotConfig;

    #[test]
    fn trivial_plan_succeeds() {
        let env = generate_environment(3, &GridConfig::default()).unwrap();
        let c = Controller::new(GaitSpec::jump(), RobotConfig::default());
        let r = rollout_plan(&env, &[env.start().clone()], None, &c, 0).unwrap();
        assert!(r.success);
        assert_eq!(r.mean_contact_error(), None);
    }

    #[test]
    fn plan_must_begin_at_start() {
        let env = generate_environment(3, &GridConfig::default()).unwrap();
        let c = Controller::new(GaitSpec::jump(), RobotConfig::default());
        assert!(rollout_plan(&env, &[env.goal().clone()], None, &c, 0).is_err());
        assert!(rollout_plan(&env, &[], None, &c, 0).is_err());
    }

    #[test]
    fn unbiased_walk_along_the_grid_succeeds() {
        let grid = GridConfig::default().noiseless();
        let env = generate_environment(0, &GridConfig { n_removed: 0, ..grid.clone() }).unwrap();
        let plan: Vec<_> = (0..=4).map(|c| grid.stance_at(c)).collect();
        for spec in [GaitSpec::jump(), GaitSpec::trot()] {
            let c = Controller::new(spec.unbiased(), RobotConfig::default());
            let r = rollout_plan(&env, &plan, None, &c, 0).unwrap();
            assert!(r.success, "{:?}", spec.gait);
            assert!(r.contact_errors.iter().all(|&e| e < 1e-12));
        }
    }
}
