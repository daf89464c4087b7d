use crate::robot::{EffectorPositions, Frame, ReducedRobotState, RobotError};

use super::{Batch, MlpModel, NnError};

/// Output head of the two-head network carrying the next reduced state.
pub const STATE_HEAD: &str = "state";
/// Output head carrying the per-foot target correction.
pub const RESIDUAL_HEAD: &str = "residual";

/// Width of the transition feature vector for `n_effectors` legs.
pub fn feature_len(n_effectors: usize) -> usize {
    ReducedRobotState::encoded_len(n_effectors) + 6 * n_effectors
}

/// `[x̄ ; E_cur ; E_next]` with both contact sets in the current base frame.
pub fn transition_features(
    state: &ReducedRobotState,
    current: &EffectorPositions,
    next: &EffectorPositions,
) -> Result<Vec<f64>, NnError> {
    for e in [current, next] {
        if e.frame != Frame::Base {
            return Err(RobotError::FrameMismatch {
                expected: Frame::Base,
                got: e.frame,
            }
            .into());
        }
    }
    let n_e = state.joints.len() / 3;
    if current.len() != n_e || next.len() != n_e {
        return Err(RobotError::EffectorCount(current.len().max(next.len()), n_e).into());
    }
    let mut out = state.encode();
    out.reserve(6 * n_e);
    for p in current.points.iter().chain(&next.points) {
        out.extend_from_slice(&[p.x, p.y, p.z]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub logit: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Thresholds the classifier probability; the boundary counts as feasible.
pub fn classify_feasible(
    model: &MlpModel,
    features: &Batch,
    t_feasible: f64,
) -> Result<Vec<Feasibility>, NnError> {
    if model.output_dim() != 1 {
        return Err(NnError::Shape(format!(
            "classifier must have one output, has {}",
            model.output_dim()
        )));
    }
    let out = model.forward(features)?;
    Ok(out
        .data()
        .iter()
        .map(|&logit| Feasibility {
            feasible: sigmoid(logit) >= t_feasible,
            logit,
        })
        .collect())
}

/// Per-foot correction in the base frame and the sum of its norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub offsets: EffectorPositions,
    pub delta_res: f64,
}

impl Residual {
    pub fn from_flat(flat: &[f64]) -> Residual {
        let offsets = EffectorPositions::from_flat(Frame::Base, flat);
        let delta_res = offsets.points.iter().map(|p| p.norm()).sum();
        Residual { offsets, delta_res }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPrediction {
    pub next_state: ReducedRobotState,
    pub residual: Residual,
}

pub fn predict_next_state(
    model: &MlpModel,
    features: &[f64],
    n_effectors: usize,
) -> Result<ReducedRobotState, NnError> {
    let range = model.head_range(super::STATE_HEAD)?;
    let out = model.forward_row(features)?;
    Ok(ReducedRobotState::decode(&out[range], n_effectors)?)
}

pub fn predict_residual(model: &MlpModel, features: &[f64]) -> Result<Residual, NnError> {
    let range = model.head_range(super::RESIDUAL_HEAD)?;
    let out = model.forward_row(features)?;
    Ok(Residual::from_flat(&out[range]))
}

/// Both heads for every row of `features`, in one forward pass.
pub fn predict_transitions(
    model: &MlpModel,
    features: &Batch,
    n_effectors: usize,
) -> Result<Vec<TransitionPrediction>, NnError> {
    let sr = model.head_range(super::STATE_HEAD)?;
    let rr = model.head_range(super::RESIDUAL_HEAD)?;
    let out = model.forward(features)?;
    (0..out.rows())
        .map(|i| {
            let row = out.row(i);
            Ok(TransitionPrediction {
                next_state: ReducedRobotState::decode(&row[sr.clone()], n_effectors)?,
                residual: Residual::from_flat(&row[rr.clone()]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    fn state() -> ReducedRobotState {
        ReducedRobotState {
            base_quat: UnitQuaternion::from_euler_angles(0.0, 0.0, 0.3),
            joints: (0..12).map(|i| i as f64 * 0.01).collect(),
            base_linvel: Vector3::new(0.1, 0.2, 0.0),
            base_angvel: Vector3::new(0.0, 0.0, 0.5),
        }
    }

    fn base(v: f64) -> EffectorPositions {
        EffectorPositions::new(Frame::Base, vec![Vector3::new(v, 0.0, -0.3); 4])
    }

    #[test]
    fn features_have_fixed_layout() {
        let s = state();
        let x = transition_features(&s, &base(0.1), &base(0.2)).unwrap();
        assert_eq!(x.len(), 46);
        assert_eq!(feature_len(4), 46);
        assert_eq!(&x[..22], &s.encode()[..]);
        assert_eq!(x[22], 0.1);
        assert_eq!(x[34], 0.2);
    }

    #[test]
    fn world_frame_contacts_are_rejected() {
        let w = EffectorPositions::new(Frame::World, vec![Vector3::zeros(); 4]);
        assert!(transition_features(&state(), &w, &base(0.0)).is_err());
    }

    #[test]
    fn threshold_boundary_is_feasible() {
        let mut m = MlpModel::new(&[1, 1], 0).unwrap();
        m.weights_mut()[0][0] = 1.0;
        let x = Batch::new(2, 1, vec![0.0, -10.0]).unwrap();
        let f = classify_feasible(&m, &x, 0.5).unwrap();
        assert!(f[0].feasible);
        assert!(!f[1].feasible);
        assert_eq!(f[1].logit, -10.0);
    }

    #[test]
    fn zero_model_gives_zero_residual() {
        let mut m = MlpModel::dynamics(46, 22, 12, 0);
        m.weights_mut().iter_mut().flatten().for_each(|w| *w = 0.0);
        let r = predict_residual(&m, &[0.5; 46]).unwrap();
        assert_eq!(r.delta_res, 0.0);
        // state head of an all-zero network has a zero quaternion block
        assert!(predict_next_state(&m, &[0.5; 46], 4).is_err());
    }

    #[test]
    fn residual_norm_sum() {
        let flat: Vec<f64> = (0..4).flat_map(|_| [0.01, 0.0, 0.0]).collect();
        assert!((Residual::from_flat(&flat).delta_res - 0.04).abs() < 1e-15);
    }
}
