//! Contact planning with Monte Carlo Tree Search.
//!
//! Nodes are contact states. Expansion enumerates gait-consistent successors,
//! prunes them kinematically and optionally with the feasibility classifier.
//! Simulation walks greedily on the heuristic until the goal or `n_sim` steps;
//! reaching the goal triggers a full-plan rollout of the surrogate controller
//! (one oracle call), whose failure negates the reward.

mod search;
mod successors;
mod tree;

pub use search::{Iteration, LeafKind, Search};
pub use successors::enumerate_successors;
pub use tree::{Node, NodeId, SearchTree};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ContactState, EnvError, Environment};
use crate::heuristics::HeuristicError;
use crate::nn::{MlpModel, NnError};
use crate::oracle::{Controller, OracleError};
use crate::robot::RobotError;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("{what} is enabled but no {model} model is loaded")]
    MissingModel {
        what: &'static str,
        model: &'static str,
    },
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

/// Successor filter used during the greedy simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPruning {
    /// Kinematic tests only.
    Kinematic,
    /// Whatever expansion uses: the classifier too when dynamic pruning is on.
    SameAsExpansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_iterations: usize,
    /// Maximum greedy simulation steps.
    pub n_sim: usize,
    pub ucb_c: f64,
    /// Classifier probability at or above which a transition is kept.
    pub t_feasible: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Seeds the controller noise of every rollout.
    pub rng_seed: u64,
    /// Successors kept per expansion, nearest to the goal first.
    pub branching_cap: usize,
    /// Candidates scored together by the model-guided simulation, nearest
    /// to the goal first.
    pub sim_width: usize,
    pub dynamic_pruning: bool,
    pub target_adjustment: bool,
    pub sim_pruning: SimPruning,
    /// Measure wall time; when off, reported times are zero.
    pub timing: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_iterations: 10_000,
            n_sim: 4,
            ucb_c: std::f64::consts::SQRT_2,
            t_feasible: 0.5,
            alpha: 0.0,
            beta: 0.0,
            rng_seed: 0,
            branching_cap: 64,
            sim_width: 8,
            dynamic_pruning: false,
            target_adjustment: false,
            sim_pruning: SimPruning::Kinematic,
            timing: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.n_sim == 0 {
            return bad("n_sim must be at least 1");
        }
        if self.branching_cap == 0 || self.sim_width == 0 {
            return bad("branching_cap and sim_width must be positive");
        }
        if !(self.ucb_c >= 0.0) {
            return bad("ucb_c must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.t_feasible) {
            return bad("t_feasible must be a probability");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        Ok(())
    }
}

/// Learned models available to the search.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub classifier: Option<&'a MlpModel>,
    /// Two-head network: next-state predictor and target adjuster.
    pub dynamics: Option<&'a MlpModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub success: bool,
    pub plan: Vec<ContactState>,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub wall_time_s: f64,
    pub rollout_time_s: f64,
    /// Mean foothold error of the successful rollout.
    pub mean_contact_error_m: Option<f64>,
    /// Mean foothold error over every executed transition of every rollout.
    pub rollout_contact_error_m: Option<f64>,
}

impl PlanResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan result serializes")
    }
}

/// Runs the search until the first successful rollout or the iteration
/// budget is spent.
pub fn plan(
    env: &Environment,
    controller: &Controller,
    models: Models<'_>,
    config: &SearchConfig,
) -> Result<PlanResult, SearchError> {
    let mut search = Search::new(env, controller, models, config)?;
    search.run()?;
    Ok(search.result())
}
