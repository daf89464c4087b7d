//! Search heuristics: goal proximity, classifier confidence and predicted
//! correction magnitude, combined as `h_goal + alpha * h_safety + beta * h_accuracy`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ContactState, EnvError, Environment};
use crate::robot::EffectorPositions;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("weight {name} = {value} is set but no {model} model is loaded")]
    MissingModel {
        name: &'static str,
        value: f64,
        model: &'static str,
    },
    #[error("invalid heuristic weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Normalizer of the goal term: the largest distance between two stones.
    pub d_max_map: f64,
}

impl HeuristicWeights {
    pub fn new(alpha: f64, beta: f64, d_max_map: f64) -> Result<Self, HeuristicError> {
        let w = HeuristicWeights {
            alpha,
            beta,
            d_max_map,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), HeuristicError> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(HeuristicError::InvalidWeights("alpha and beta must be >= 0".into()));
        }
        if !(self.d_max_map > 0.0) {
            return Err(HeuristicError::InvalidWeights("d_max_map must be positive".into()));
        }
        Ok(())
    }

    /// Largest value the combined heuristic can take.
    pub fn upper_bound(&self) -> f64 {
        1.0 + self.alpha + self.beta
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Goal term on world-frame contact sets.
pub fn h_goal_positions(s: &EffectorPositions, goal: &EffectorPositions, d_max_map: f64) -> f64 {
    let n = s.len().max(1) as f64;
    let inner: f64 = s
        .points
        .iter()
        .zip(&goal.points)
        .map(|(a, g)| 1.0 - (a - g).norm() / d_max_map)
        .sum::<f64>()
        / n;
    sigmoid(5.0 * inner)
}

pub fn h_goal(
    s: &ContactState,
    goal: &ContactState,
    env: &Environment,
    d_max_map: f64,
) -> Result<f64, HeuristicError> {
    let a = env.contact_locations(s)?;
    let g = env.contact_locations(goal)?;
    Ok(h_goal_positions(&a, &g, d_max_map))
}

/// Confidence term from the raw classifier logit.
pub fn h_safety(logit: f64) -> f64 {
    sigmoid(logit / 5.0)
}

/// Accuracy term from the summed residual norm, in meters.
pub fn h_accuracy(delta_res: f64) -> f64 {
    sigmoid(1.0 / (5.0 * (delta_res + 1e-12)))
}

/// `h_goal + alpha * h_safety(logit) + beta * h_accuracy(delta_res)`. A model
/// output may be absent only when its weight is zero.
pub fn combine(
    weights: &HeuristicWeights,
    goal_term: f64,
    logit: Option<f64>,
    delta_res: Option<f64>,
) -> Result<f64, HeuristicError> {
    let mut h = goal_term;
    if weights.alpha > 0.0 {
        let l = logit.ok_or(HeuristicError::MissingModel {
            name: "alpha",
            value: weights.alpha,
            model: "classifier",
        })?;
        h += weights.alpha * h_safety(l);
    }
    if weights.beta > 0.0 {
        let d = delta_res.ok_or(HeuristicError::MissingModel {
            name: "beta",
            value: weights.beta,
            model: "adjustment",
        })?;
        h += weights.beta * h_accuracy(d);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::Frame;
    use nalgebra::Vector3;

    fn pts(v: &[[f64; 3]]) -> EffectorPositions {
        EffectorPositions::new(Frame::World, v.iter().map(|p| Vector3::from(*p)).collect())
    }

    #[test]
    fn goal_term_fixed_points() {
        let g = pts(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!((h_goal_positions(&g, &g, 2.0) - 0.993_307_149_075_715).abs() < 1e-12);
        let far = pts(&[[2.0, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        assert_eq!(h_goal_positions(&far, &g, 2.0), 0.5);
        let half = pts(&[[2.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!((h_goal_positions(&half, &g, 2.0) - 0.924_141_819_978_756_6).abs() < 1e-12);
    }

    #[test]
    fn safety_and_accuracy_values() {
        assert_eq!(h_safety(0.0), 0.5);
        assert!((h_safety(5.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(h_safety(1e6), 1.0);
        assert_eq!(h_accuracy(0.0), 1.0);
        assert!((h_accuracy(0.2) - 0.731_058_578_630_004_9).abs() < 1e-9);
        assert!((h_accuracy(10.0) - 0.504_999_833_339_999_8).abs() < 1e-12);
    }

    #[test]
    fn combination() {
        let w = HeuristicWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(combine(&w, 0.7, None, None).unwrap(), 0.7);
        let w = HeuristicWeights::new(0.2, 0.4, 1.0).unwrap();
        // h_safety = 0.5 at logit 0, h_accuracy saturates at 1 for zero residual
        let h = combine(&w, 0.9, Some(0.0), Some(0.0)).unwrap();
        assert!((h - 1.4).abs() < 1e-12);
        assert!(combine(&w, 0.9, None, Some(0.0)).is_err());
        assert!(HeuristicWeights::new(-0.1, 0.0, 1.0).is_err());
    }
}
