use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::successors::enumerate_successors;
use super::tree::{Node, NodeId, SearchTree};
use super::{Models, PlanResult, SearchConfig, SearchError, SimPruning};
use crate::env::{ContactState, Environment};
use crate::heuristics::{combine, h_goal_positions, sigmoid, HeuristicWeights};
use crate::nn::{feature_len, predict_transitions, transition_features, Batch, MlpModel};
use crate::oracle::{rollout_plan, Controller, RolloutResult};
use crate::robot::{
    chain_base_position, estimate_translation, forward_kinematics, world_to_base_unit,
    EffectorPositions, Frame, ReducedRobotState, RobotState,
};

/// How the selected leaf was handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    /// Expanded (on first visit) and simulated from.
    Expanded,
    /// The goal: rolled out directly.
    Goal,
    /// No surviving successor.
    Dead,
}

/// Record of one select / expand / simulate / backpropagate cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub leaf: NodeId,
    pub leaf_state: ContactState,
    pub kind: LeafKind,
    /// Nodes whose incoming edge received the reward, root first.
    pub backed_up: Vec<NodeId>,
    pub reward: f64,
    /// States appended beyond the leaf by the greedy simulation.
    pub simulated: Vec<ContactState>,
    /// Outcome of the full-plan rollout, when one was run.
    pub rollout: Option<bool>,
}

fn child(
    state: ContactState,
    h: f64,
    logit: Option<f64>,
    delta_res: Option<f64>,
    predicted: Option<RobotState>,
) -> Node {
    Node {
        state,
        parent: None,
        depth: 0,
        children: Vec::new(),
        expanded: false,
        q: 0.0,
        n: 0,
        h,
        logit,
        delta_res,
        predicted,
    }
}

struct Features {
    rows: Vec<Vec<f64>>,
    targets: Vec<EffectorPositions>,
}

/// An in-progress search. [`iterate`](Search::iterate) runs one cycle and
/// reports what it did.
pub struct Search<'a> {
    env: &'a Environment,
    controller: &'a Controller,
    models: Models<'a>,
    config: SearchConfig,
    weights: HeuristicWeights,
    goal_pos: EffectorPositions,
    tree: SearchTree,
    need_state: bool,
    iterations: usize,
    oracle_calls: usize,
    rollout_time: Duration,
    elapsed: Duration,
    error_sum: f64,
    error_n: usize,
    solution: Option<(Vec<ContactState>, RolloutResult)>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `k`-th rollout of a search seeded with `seed`.
pub(crate) fn rollout_seed(seed: u64, k: usize) -> u64 {
    splitmix64(seed ^ splitmix64(k as u64))
}

impl<'a> Search<'a> {
    pub fn new(
        env: &'a Environment,
        controller: &'a Controller,
        models: Models<'a>,
        config: &SearchConfig,
    ) -> Result<Search<'a>, SearchError> {
        config.validate()?;
        let c = config;
        let need_logit = c.dynamic_pruning || c.alpha > 0.0;
        let need_state = c.dynamic_pruning || c.alpha > 0.0 || c.beta > 0.0;
        if need_logit && models.classifier.is_none() {
            return Err(SearchError::MissingModel {
                what: if c.dynamic_pruning { "dynamic pruning" } else { "alpha" },
                model: "classifier",
            });
        }
        if (need_state || c.target_adjustment) && models.dynamics.is_none() {
            return Err(SearchError::MissingModel {
                what: if c.target_adjustment { "target adjustment" } else { "state prediction" },
                model: "predictor/adjuster",
            });
        }
        let width = feature_len(env.n_effectors());
        for m in [models.classifier, models.dynamics].into_iter().flatten() {
            if m.input_dim() != width {
                return Err(SearchError::Config(format!(
                    "model expects {} features, transitions have {width}",
                    m.input_dim()
                )));
            }
        }
        let weights = HeuristicWeights::new(c.alpha, c.beta, env.d_max_map())?;
        let goal_pos = env.contact_locations(env.goal())?;
        let start_pos = env.contact_locations(env.start())?;
        let h_root = h_goal_positions(&start_pos, &goal_pos, weights.d_max_map);
        let predicted = need_state.then(|| RobotState::standing(&start_pos, &controller.robot));
        Ok(Search {
            env,
            controller,
            models,
            config: c.clone(),
            weights,
            goal_pos,
            tree: SearchTree::new(env.start().clone(), env.goal().clone(), h_root, predicted),
            need_state,
            iterations: 0,
            oracle_calls: 0,
            rollout_time: Duration::ZERO,
            elapsed: Duration::ZERO,
            error_sum: 0.0,
            error_n: 0,
            solution: None,
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn oracle_calls(&self) -> usize {
        self.oracle_calls
    }

    pub fn solution(&self) -> Option<&[ContactState]> {
        self.solution.as_ref().map(|s| s.0.as_slice())
    }

    /// True once a plan was found, the budget is spent, or the root has no
    /// successor at all.
    pub fn is_done(&self) -> bool {
        let root = self.tree.node(self.tree.root());
        self.solution.is_some()
            || self.iterations >= self.config.max_iterations
            || (root.expanded && root.children.is_empty() && !self.tree.is_goal(0))
    }

    pub fn run(&mut self) -> Result<(), SearchError> {
        let t0 = self.config.timing.then(Instant::now);
        while !self.is_done() {
            self.iterate()?;
        }
        if let Some(t0) = t0 {
            self.elapsed += t0.elapsed();
        }
        Ok(())
    }

    pub fn result(&self) -> PlanResult {
        let (success, plan, err) = match &self.solution {
            Some((p, r)) => (true, p.clone(), r.mean_contact_error()),
            None => (false, Vec::new(), None),
        };
        PlanResult {
            success,
            plan,
            iterations: self.iterations,
            oracle_calls: self.oracle_calls,
            wall_time_s: self.elapsed.as_secs_f64(),
            rollout_time_s: self.rollout_time.as_secs_f64(),
            mean_contact_error_m: err,
            rollout_contact_error_m: (self.error_n > 0).then(|| self.error_sum / self.error_n as f64),
        }
    }

    /// One select / expand / simulate / backpropagate cycle.
    pub fn iterate(&mut self) -> Result<Iteration, SearchError> {
        let mut id = self.tree.root();
        loop {
            let n = self.tree.node(id);
            if self.tree.is_goal(id) || !n.expanded || n.children.is_empty() {
                break;
            }
            id = self
                .tree
                .best_child(id, self.config.ucb_c)
                .expect("expanded node has children");
        }
        let is_goal = self.tree.is_goal(id);
        if !is_goal && !self.tree.node(id).expanded {
            self.expand(id)?;
        }
        let (kind, reward, simulated, rollout) = if !is_goal && self.tree.node(id).children.is_empty() {
            let pos = self.env.contact_locations(&self.tree.node(id).state)?;
            let h = h_goal_positions(&pos, &self.goal_pos, self.weights.d_max_map);
            (LeafKind::Dead, -h, Vec::new(), None)
        } else {
            let (r, sim, ro) = self.simulate(id)?;
            let kind = if is_goal { LeafKind::Goal } else { LeafKind::Expanded };
            (kind, r, sim, ro)
        };
        let path = self.tree.path_to(id);
        self.tree.backpropagate(&path, reward);
        self.iterations += 1;
        Ok(Iteration {
            leaf: id,
            leaf_state: self.tree.node(id).state.clone(),
            kind,
            backed_up: path,
            reward,
            simulated,
            rollout,
        })
    }

    fn classifier(&self) -> &'a MlpModel {
        self.models.classifier.expect("checked in Search::new")
    }

    fn dynamics(&self) -> &'a MlpModel {
        self.models.dynamics.expect("checked in Search::new")
    }

    fn feasible(&self, logit: Option<f64>) -> bool {
        logit.is_none_or(|l| sigmoid(l) >= self.config.t_feasible)
    }

    fn goal_term(&self, s: &ContactState) -> Result<f64, SearchError> {
        let pos = self.env.contact_locations(s)?;
        Ok(h_goal_positions(&pos, &self.goal_pos, self.weights.d_max_map))
    }

    /// Transition features of `from -> cands` in the predicted base frame,
    /// with the candidate contacts in that frame.
    fn features(
        &self,
        from: &ContactState,
        pred: &RobotState,
        cands: &[ContactState],
    ) -> Result<Features, SearchError> {
        let cur = self.env.contact_locations(from)?;
        let e_cur = world_to_base_unit(&cur.points, &pred.base_pos, &pred.base_quat);
        let reduced = pred.reduced();
        let mut rows = Vec::with_capacity(cands.len());
        let mut targets = Vec::with_capacity(cands.len());
        for c in cands {
            let pos = self.env.contact_locations(c)?;
            let e_next = world_to_base_unit(&pos.points, &pred.base_pos, &pred.base_quat);
            rows.push(transition_features(&reduced, &e_cur, &e_next)?);
            targets.push(e_next);
        }
        Ok(Features { rows, targets })
    }

    fn logits(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, SearchError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.classifier().forward(&Batch::from_rows(rows)?)?.into_data())
    }

    /// Predicted states and residual norms of the rows in `pick`.
    fn predict(
        &self,
        pred: &RobotState,
        f: &Features,
        pick: &[usize],
    ) -> Result<Vec<(RobotState, f64)>, SearchError> {
        if pick.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<f64>> = pick.iter().map(|&i| f.rows[i].clone()).collect();
        let preds = predict_transitions(self.dynamics(), &Batch::from_rows(&rows)?, self.env.n_effectors())?;
        pick.iter()
            .zip(preds)
            .map(|(&i, p)| Ok((self.chain(pred, &f.targets[i], p.next_state)?, p.residual.delta_res)))
            .collect()
    }

    /// Absolute predicted state: the translation that best aligns the
    /// predicted feet with the targets, applied in the parent base frame.
    fn chain(
        &self,
        parent: &RobotState,
        targets: &EffectorPositions,
        next: ReducedRobotState,
    ) -> Result<RobotState, SearchError> {
        let fk = forward_kinematics(&next, &self.controller.robot);
        let rel = parent.base_quat.inverse() * next.base_quat;
        let fk_parent = EffectorPositions::new(
            Frame::Base,
            fk.points.iter().map(|p| rel.transform_vector(p)).collect(),
        );
        let t = estimate_translation(targets, &fk_parent)?;
        let pos = chain_base_position(&parent.base_pos, parent.base_quat.quaternion(), &t)?;
        Ok(next.with_position(pos))
    }

    fn path_states(&self, id: NodeId) -> Vec<ContactState> {
        self.tree
            .path_to(id)
            .into_iter()
            .map(|i| self.tree.node(i).state.clone())
            .collect()
    }

    fn expand(&mut self, id: NodeId) -> Result<(), SearchError> {
        let exclude: HashSet<ContactState> = self.path_states(id).into_iter().collect();
        let node = self.tree.node(id);
        let state = node.state.clone();
        let cands = enumerate_successors(
            self.env,
            &self.controller.robot,
            self.controller.gait.gait,
            &state,
            node.depth,
            &exclude,
            self.config.branching_cap,
        );
        let mut children = Vec::with_capacity(cands.len());
        let predicted = node.predicted.clone().filter(|_| self.need_state);
        let Some(pred) = predicted else {
            for c in cands {
                let h = combine(&self.weights, self.goal_term(&c)?, None, None)?;
                children.push(child(c, h, None, None, None));
            }
            return self.attach(id, children);
        };
        let need_logit = self.config.dynamic_pruning || self.config.alpha > 0.0;
        let f = self.features(&state, &pred, &cands)?;
        let logits = if need_logit { self.logits(&f.rows)? } else { Vec::new() };
        let logit = |i: usize| logits.get(i).copied();
        let keep: Vec<usize> = (0..cands.len())
            .filter(|&i| !self.config.dynamic_pruning || self.feasible(logit(i)))
            .collect();
        let preds = self.predict(&pred, &f, &keep)?;
        for (&i, (next, d)) in keep.iter().zip(preds) {
            let c = cands[i].clone();
            let h = combine(&self.weights, self.goal_term(&c)?, logit(i), Some(d))?;
            children.push(child(c, h, logit(i), Some(d), Some(next)));
        }
        self.attach(id, children)
    }

    fn attach(&mut self, id: NodeId, mut children: Vec<Node>) -> Result<(), SearchError> {
        // unvisited children are tried in this order: most promising first
        children.sort_by(|a, b| b.h.total_cmp(&a.h));
        for ch in children {
            self.tree.add_child(id, ch);
        }
        self.tree.mark_expanded(id);
        Ok(())
    }

    /// Best successor of `cur` for the greedy simulation, with its heuristic
    /// and predicted state.
    fn greedy_step(
        &self,
        cur: &ContactState,
        depth: usize,
        pred: Option<&RobotState>,
        exclude: &HashSet<ContactState>,
    ) -> Result<Option<(ContactState, f64, Option<RobotState>)>, SearchError> {
        let cfg = &self.config;
        let robot = &self.controller.robot;
        let gait = self.controller.gait.gait;
        let dyn_prune = cfg.dynamic_pruning && cfg.sim_pruning == SimPruning::SameAsExpansion;
        let scored = cfg.alpha > 0.0 || cfg.beta > 0.0;

        if !scored && !dyn_prune {
            let mut c = enumerate_successors(self.env, robot, gait, cur, depth, exclude, 1);
            return match c.pop() {
                Some(s) => {
                    let h = self.goal_term(&s)?;
                    Ok(Some((s, h, None)))
                }
                None => Ok(None),
            };
        }
        let pred = pred.expect("model-guided simulation tracks the predicted state");
        let cands = enumerate_successors(self.env, robot, gait, cur, depth, exclude, cfg.branching_cap);
        // candidates are scored in goal-term order, `sim_width` at a time,
        // until a chunk holds an admissible one
        for chunk in cands.chunks(cfg.sim_width) {
            let f = self.features(cur, pred, chunk)?;
            let logits = if cfg.alpha > 0.0 || dyn_prune { self.logits(&f.rows)? } else { Vec::new() };
            let logit = |i: usize| logits.get(i).copied();
            let keep: Vec<usize> = (0..chunk.len())
                .filter(|&i| !dyn_prune || self.feasible(logit(i)))
                .collect();
            let residuals = if cfg.beta > 0.0 { self.predict(pred, &f, &keep)? } else { Vec::new() };
            let mut best: Option<(usize, f64)> = None;
            for (k, &i) in keep.iter().enumerate() {
                let d = residuals.get(k).map(|r| r.1);
                let h = combine(&self.weights, self.goal_term(&chunk[i])?, logit(i), d)?;
                if best.is_none_or(|(_, b)| h > b) {
                    best = Some((k, h));
                }
            }
            let Some((k, h)) = best else {
                continue;
            };
            let next = match residuals.get(k) {
                Some(r) => r.0.clone(),
                None => self.predict(pred, &f, &[keep[k]])?.pop().expect("one row").0,
            };
            return Ok(Some((chunk[keep[k]].clone(), h, Some(next))));
        }
        Ok(None)
    }

    fn simulate(&mut self, leaf: NodeId) -> Result<(f64, Vec<ContactState>, Option<bool>), SearchError> {
        let mut states = self.path_states(leaf);
        let n0 = states.len();
        let mut exclude: HashSet<ContactState> = states.iter().cloned().collect();
        let node = self.tree.node(leaf);
        let goal = self.env.goal().clone();
        let mut cur = node.state.clone();
        let mut depth = node.depth;
        let mut pred = node.predicted.clone();
        let mut h_star = node.h;
        for _ in 0..self.config.n_sim {
            if cur == goal {
                break;
            }
            let Some((next, h, next_pred)) = self.greedy_step(&cur, depth, pred.as_ref(), &exclude)? else {
                break;
            };
            h_star = h_star.max(h);
            exclude.insert(next.clone());
            states.push(next.clone());
            cur = next;
            depth += 1;
            pred = next_pred;
        }
        let simulated = states[n0..].to_vec();
        if cur != goal {
            return Ok((h_star, simulated, None));
        }
        let ok = self.rollout(&states)?;
        Ok((if ok { h_star } else { -h_star }, simulated, Some(ok)))
    }

    fn rollout(&mut self, plan: &[ContactState]) -> Result<bool, SearchError> {
        let seed = rollout_seed(self.config.rng_seed, self.oracle_calls);
        self.oracle_calls += 1;
        let adjuster = if self.config.target_adjustment {
            self.models.dynamics
        } else {
            None
        };
        let t0 = self.config.timing.then(Instant::now);
        let res = rollout_plan(self.env, plan, adjuster, self.controller, seed)?;
        if let Some(t0) = t0 {
            self.rollout_time += t0.elapsed();
        }
        self.error_sum += res.contact_errors.iter().sum::<f64>();
        self.error_n += res.contact_errors.len();
        let ok = res.success;
        if ok {
            self.solution = Some((plan.to_vec(), res));
        }
        Ok(ok)
    }
}
