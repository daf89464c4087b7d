use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use crate::env::{ContactState, Environment, StoneId};
use crate::oracle::Gait;
use crate::robot::{legs_crossed, EffectorPositions, Frame, RobotConfig};

/// Candidate stones of one moving effector, nearest to its goal stone first.
#[derive(Debug, Clone)]
struct Options {
    effector: usize,
    stones: Vec<StoneId>,
    goal_dist: Vec<f64>,
}

#[derive(Debug, PartialEq)]
struct Entry {
    score: f64,
    idx: Vec<usize>,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

/// Enumerates kinematically valid successors of `s` in order of increasing
/// summed goal distance of the moving effectors (ties by candidate rank).
///
/// Moving effectors follow the gait at tree depth `depth`; each may land on
/// any live stone within `d_max_kin` of its current stone, staying included.
/// A successor is valid when it differs from `s`, is not in `exclude`, puts
/// no two effectors on one stone and does not cross the legs. At most `cap`
/// successors are returned.
pub fn enumerate_successors(
    env: &Environment,
    robot: &RobotConfig,
    gait: Gait,
    s: &ContactState,
    depth: usize,
    exclude: &HashSet<ContactState>,
    cap: usize,
) -> Vec<ContactState> {
    let options = candidate_options(env, robot, gait, s, depth);
    if cap == 0 || options.iter().any(|o| o.stones.is_empty()) {
        return Vec::new();
    }
    let score = |idx: &[usize]| -> f64 { options.iter().zip(idx).map(|(o, &i)| o.goal_dist[i]).sum() };
    let mut heap = BinaryHeap::new();
    let root = vec![0; options.len()];
    heap.push(Reverse(Entry {
        score: score(&root),
        idx: root,
    }));
    let mut out = Vec::new();
    while let Some(Reverse(e)) = heap.pop() {
        let mut next = s.clone();
        for (o, &i) in options.iter().zip(&e.idx) {
            next.0[o.effector] = o.stones[i];
        }
        if is_valid(env, robot, s, &next, exclude) {
            out.push(next);
            if out.len() == cap {
                break;
            }
        }
        // each tuple is generated once: only positions at or after the last
        // non-zero index are incremented
        let last = e.idx.iter().rposition(|&i| i > 0).unwrap_or(0);
        for k in last..e.idx.len() {
            if e.idx[k] + 1 < options[k].stones.len() {
                let mut idx = e.idx.clone();
                idx[k] += 1;
                heap.push(Reverse(Entry {
                    score: score(&idx),
                    idx,
                }));
            }
        }
    }
    out
}

fn candidate_options(
    env: &Environment,
    robot: &RobotConfig,
    gait: Gait,
    s: &ContactState,
    depth: usize,
) -> Vec<Options> {
    let goal = env.goal();
    gait.moving_effectors(depth, s.n_effectors())
        .into_iter()
        .map(|j| {
            let here = env.stone(s.get(j)).expect("valid state").center;
            let target = env.stone(goal.get(j)).expect("valid goal").center;
            let mut c: Vec<(f64, StoneId)> = env
                .stones()
                .iter()
                .filter(|st| (st.center - here).norm() <= robot.d_max_kin)
                .map(|st| ((st.center - target).norm(), st.id))
                .collect();
            c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Options {
                effector: j,
                goal_dist: c.iter().map(|p| p.0).collect(),
                stones: c.iter().map(|p| p.1).collect(),
            }
        })
        .collect()
}

pub(crate) fn is_valid(
    env: &Environment,
    robot: &RobotConfig,
    s: &ContactState,
    next: &ContactState,
    exclude: &HashSet<ContactState>,
) -> bool {
    if next == s || exclude.contains(next) {
        return false;
    }
    let ids = next.stones();
    for (i, a) in ids.iter().enumerate() {
        if ids[i + 1..].contains(a) {
            return false;
        }
    }
    let pts = ids
        .iter()
        .map(|&id| env.stone(id).map(|st| st.center))
        .collect::<Result<Vec<_>, _>>();
    match pts {
        Ok(p) => !legs_crossed(&EffectorPositions::new(Frame::World, p), robot.crossing_margin),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GridConfig};
    use crate::robot::kinematic_feasible;

    /// Full cross product, filtered and sorted, as an independent reference.
    fn brute_force(
        env: &Environment,
        robot: &RobotConfig,
        gait: Gait,
        s: &ContactState,
        depth: usize,
        cap: usize,
    ) -> Vec<ContactState> {
        let moving = gait.moving_effectors(depth, 4);
        let goal = env.contact_locations(env.goal()).unwrap();
        let here = env.contact_locations(s).unwrap();
        let mut all: Vec<(f64, ContactState)> = vec![(0.0, s.clone())];
        for &j in &moving {
            let mut grown = Vec::new();
            for (sc, st) in &all {
                for stone in env.stones() {
                    if (stone.center - here.points[j]).norm() <= robot.d_max_kin {
                        let mut n = st.clone();
                        n.0[j] = stone.id;
                        grown.push((sc + (stone.center - goal.points[j]).norm(), n));
                    }
                }
            }
            all = grown;
        }
        let mut valid: Vec<(f64, ContactState)> = all
            .into_iter()
            .filter(|(_, n)| {
                n != s
                    && n.stones().iter().collect::<HashSet<_>>().len() == 4
                    && kinematic_feasible(s, n, env, robot)
            })
            .collect();
        valid.sort_by(|a, b| a.0.total_cmp(&b.0));
        valid.into_iter().take(cap).map(|p| p.1).collect()
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let robot = RobotConfig::default();
        for seed in 0..6 {
            let env = generate_environment(seed, &GridConfig::default()).unwrap();
            let s = env.start().clone();
            for (gait, depth) in [(Gait::Jump, 0), (Gait::Trot, 0), (Gait::Trot, 1)] {
                for cap in [1, 5, 64, 10_000] {
                    let fast = enumerate_successors(&env, &robot, gait, &s, depth, &HashSet::new(), cap);
                    let slow = brute_force(&env, &robot, gait, &s, depth, cap);
                    let fast_set: HashSet<_> = fast.iter().collect();
                    let slow_set: HashSet<_> = slow.iter().collect();
                    assert_eq!(fast.len(), slow.len(), "seed {seed} {gait:?} cap {cap}");
                    if cap >= 10_000 {
                        assert_eq!(fast_set, slow_set);
                    }
                    // identical score sequence even where ties reorder states
                    let score = |n: &ContactState| {
                        let g = env.contact_locations(env.goal()).unwrap();
                        let p = env.contact_locations(n).unwrap();
                        p.points.iter().zip(&g.points).map(|(a, b)| (a - b).norm()).sum::<f64>()
                    };
                    for (a, b) in fast.iter().zip(&slow) {
                        assert!((score(a) - score(b)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn trot_moves_only_the_active_pair() {
        let robot = RobotConfig::default();
        let env = generate_environment(1, &GridConfig::default()).unwrap();
        let s = env.start().clone();
        for n in enumerate_successors(&env, &robot, Gait::Trot, &s, 1, &HashSet::new(), 64) {
            assert_eq!(n.get(0), s.get(0));
            assert_eq!(n.get(3), s.get(3));
        }
    }

    #[test]
    fn excluded_states_are_skipped() {
        let robot = RobotConfig::default();
        let env = generate_environment(2, &GridConfig::default()).unwrap();
        let s = env.start().clone();
        let first = enumerate_successors(&env, &robot, Gait::Jump, &s, 0, &HashSet::new(), 3);
        let ex: HashSet<_> = [first[0].clone()].into_iter().collect();
        let again = enumerate_successors(&env, &robot, Gait::Jump, &s, 0, &ex, 2);
        assert_eq!(again, first[1..].to_vec());
    }
}
