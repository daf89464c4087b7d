use std::collections::HashSet;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stepstone::env::{generate_environment, ContactState, GridConfig};
use stepstone::heuristics::{combine, h_accuracy, h_goal_positions, h_safety, HeuristicWeights};
use stepstone::mcts::{enumerate_successors, Models, Search, SearchConfig};
use stepstone::nn::{classify_feasible, Batch, MlpModel};
use stepstone::oracle::{collect_dataset, read_jsonl, rollout_plan, write_jsonl, Controller, Gait, GaitSpec};
use stepstone::robot::{
    base_to_world, estimate_translation, kinematic_feasible, legs_crossed, transition_length, world_to_base,
    EffectorPositions, Frame, RobotConfig, RobotState,
};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn points(n: usize, r: f64) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(vec3(r), n)
}

fn side() -> impl Strategy<Value = f64> {
    0.05..0.11f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stones_stay_within_their_deviation_band(seed in any::<u64>(), side in side()) {
        let cfg = GridConfig::default().with_side(side);
        let env = generate_environment(seed, &cfg).unwrap();
        let amp_x = 0.75 * (cfg.spacing[0] / 2.0 - side / 2.0);
        let amp_y = 0.75 * (cfg.spacing[1] / 2.0 - side / 2.0);
        prop_assert!(env.stones().len() <= 35);
        for s in env.stones() {
            let col = s.id.index() / cfg.rows;
            let row = s.id.index() % cfg.rows;
            let nominal = cfg.nominal_center(col, row);
            prop_assert!((s.center.x - nominal.x).abs() <= amp_x + 1e-12);
            prop_assert!((s.center.y - nominal.y).abs() <= amp_y + 1e-12);
            prop_assert!(s.center.z.abs() <= 0.02 + 1e-12);
        }
        for (i, a) in env.stones().iter().enumerate() {
            for b in &env.stones()[i + 1..] {
                let apart = (a.center.x - b.center.x).abs() >= side || (a.center.y - b.center.y).abs() >= side;
                prop_assert!(apart, "stones {} and {} overlap", a.id, b.id);
            }
        }
    }

    #[test]
    fn generation_is_pure_and_keeps_start_and_goal(seed in any::<u64>(), side in side()) {
        let cfg = GridConfig::default().with_side(side);
        let a = generate_environment(seed, &cfg).unwrap();
        let b = generate_environment(seed, &cfg).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        for id in a.start().stones().iter().chain(a.goal().stones()) {
            prop_assert!(a.is_live(*id));
        }
        prop_assert!(a.d_max_map() > 0.0);
    }

    #[test]
    fn base_frame_round_trip(q in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), pos in vec3(5.0), pts in points(4, 2.0)) {
        let raw = Quaternion::new(q.0, q.1, q.2, q.3);
        prop_assume!(raw.norm() > 1e-3);
        let unit = UnitQuaternion::from_quaternion(raw);
        let world = EffectorPositions::new(Frame::World, pts.clone());
        let base = world_to_base(&world, &pos, unit.quaternion()).unwrap();
        let back = base_to_world(&base, &pos, unit.quaternion()).unwrap();
        for (a, b) in back.points.iter().zip(&pts) {
            prop_assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn translation_is_the_least_squares_minimizer(
        (targets, feet) in (1usize..8).prop_flat_map(|n| (points(n, 1.0), points(n, 1.0))),
        dirs in prop::collection::vec(vec3(1.0), 50),
    ) {
        let n = targets.len();
        let t = estimate_translation(
            &EffectorPositions::new(Frame::Base, targets.clone()),
            &EffectorPositions::new(Frame::Base, feet.clone()),
        ).unwrap();
        let f = |t: &Vector3<f64>| targets.iter().zip(&feet).map(|(a, b)| (b + t - a).norm_squared()).sum::<f64>() / n as f64;
        for d in dirs {
            prop_assume!(d.norm() > 1e-6);
            let delta = d.normalize() * 1e-3;
            prop_assert!(f(&t) <= f(&(t + delta)));
        }
    }

    #[test]
    fn step_length_is_symmetric_and_crossing_depends_on_the_target(seed in 0u64..500, i in 0usize..40, j in 0usize..40) {
        let env = generate_environment(seed, &GridConfig::default()).unwrap();
        let robot = RobotConfig::default();
        let stones = env.stones();
        let pick = |k: usize| {
            ContactState::new((0..4).map(|e| stones[(k * 7 + e * 5) % stones.len()].id))
        };
        let (s, t) = (pick(i), pick(j));
        let (a, b) = (env.contact_locations(&s).unwrap(), env.contact_locations(&t).unwrap());
        prop_assert_eq!(transition_length(&a, &b), transition_length(&b, &a));
        let expected = transition_length(&a, &b) <= robot.d_max_kin && !legs_crossed(&b, robot.crossing_margin);
        prop_assert_eq!(kinematic_feasible(&s, &t, &env, &robot), expected);
    }

    #[test]
    fn classifier_threshold_agrees_with_the_logit_sign(seed in any::<u64>(), xs in prop::collection::vec(-3.0..3.0f64, 5 * 8)) {
        let m = MlpModel::new(&[5, 8, 1], seed).unwrap();
        let batch = Batch::new(8, 5, xs).unwrap();
        for f in classify_feasible(&m, &batch, 0.5).unwrap() {
            prop_assert_eq!(f.feasible, f.logit >= 0.0);
        }
    }

    #[test]
    fn model_json_round_trip_preserves_outputs(seed in any::<u64>(), xs in prop::collection::vec(-3.0..3.0f64, 6 * 4)) {
        let m = MlpModel::dynamics(6, 3, 2, seed);
        let back = MlpModel::from_json(&m.to_json()).unwrap();
        let batch = Batch::new(4, 6, xs).unwrap();
        prop_assert_eq!(m.forward(&batch).unwrap(), back.forward(&batch).unwrap());
    }

    #[test]
    fn noiseless_step_is_pure_and_labels_are_monotone_in_step_size(
        deltas in points(4, 0.3),
        lambda in 1.0..3.0f64,
        jump in any::<bool>(),
    ) {
        let gait = if jump { Gait::Jump } else { Gait::Trot };
        let spec = GaitSpec { sigma_ctrl: 0.0, ..GaitSpec::for_gait(gait) };
        let ctrl = Controller::new(spec, RobotConfig::default());
        let feet: Vec<Vector3<f64>> = ctrl.robot.hip_anchors.iter().map(|h| Vector3::new(h.x, h.y, 0.0)).collect();
        let x = RobotState::standing(&EffectorPositions::new(Frame::World, feet.clone()), &ctrl.robot);
        let target = |scale: f64| {
            EffectorPositions::new(
                Frame::World,
                feet.iter().zip(&deltas).map(|(f, d)| f + Vector3::new(d.x, d.y, 0.0) * scale).collect(),
            )
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ctrl.step(&x, &target(1.0), &mut rng).unwrap();
        let b = ctrl.step(&x, &target(1.0), &mut rng).unwrap();
        prop_assert_eq!(&a.achieved, &b.achieved);
        let scaled = ctrl.step(&x, &target(lambda), &mut rng).unwrap();
        prop_assert!(!scaled.success || a.success, "label flipped from 0 to 1 at scale {lambda}");
    }

    #[test]
    fn heuristic_components_and_bounds(
        logit in -100.0..100.0f64,
        logit2 in -100.0..100.0f64,
        d in 0.01..10.0f64,
        d2 in 0.01..10.0f64,
        alpha in 0.0..1.0f64,
        beta in 0.0..1.0f64,
        g in 0.0..1.0f64,
    ) {
        let (hs, ha) = (h_safety(logit), h_accuracy(d));
        prop_assert!(hs > 0.0 && hs < 1.0 && ha > 0.0 && ha < 1.0);
        if logit < logit2 {
            prop_assert!(h_safety(logit) <= h_safety(logit2));
        }
        if d < d2 {
            prop_assert!(h_accuracy(d) >= h_accuracy(d2));
        }
        let w = HeuristicWeights::new(alpha, beta, 1.0).unwrap();
        let goal_term = 1.0 / (1.0 + (-5.0 * g).exp());
        let h = combine(&w, goal_term, Some(logit), Some(d)).unwrap();
        prop_assert!(h > 0.0 && h < w.upper_bound());
    }

    #[test]
    fn goal_argmax_is_scale_invariant(seed in 0u64..1000, scale in 0.1..10.0f64) {
        let env = generate_environment(seed, &GridConfig::default()).unwrap();
        let robot = RobotConfig::default();
        let succ = enumerate_successors(&env, &robot, Gait::Jump, env.start(), 0, &HashSet::new(), 64);
        prop_assume!(!succ.is_empty());
        let goal = env.contact_locations(env.goal()).unwrap();
        let scaled = |e: &EffectorPositions| EffectorPositions::new(Frame::World, e.points.iter().map(|p| p * scale).collect());
        let argmax = |f: &dyn Fn(&EffectorPositions) -> f64| {
            succ.iter()
                .map(|s| f(&env.contact_locations(s).unwrap()))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, h)| if h > b.1 { (i, h) } else { b })
                .0
        };
        let plain = argmax(&|p| h_goal_positions(p, &goal, env.d_max_map()));
        let big = argmax(&|p| h_goal_positions(&scaled(p), &scaled(&goal), env.d_max_map() * scale));
        prop_assert_eq!(plain, big);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_statistics_and_plans_stay_consistent(
        seed in 0u64..1000,
        side in side(),
        trot in any::<bool>(),
        iterations in 1usize..300,
    ) {
        let env = generate_environment(seed, &GridConfig::default().with_side(side)).unwrap();
        let gait = if trot { Gait::Trot } else { Gait::Jump };
        let ctrl = Controller::new(GaitSpec::for_gait(gait).unbiased(), RobotConfig::default());
        let cfg = SearchConfig { rng_seed: seed, max_iterations: iterations, ..SearchConfig::default() };
        let mut search = Search::new(&env, &ctrl, Models::default(), &cfg).unwrap();
        let mut rollouts = 0;
        while !search.is_done() {
            let it = search.iterate().unwrap();
            rollouts += it.rollout.is_some() as usize;
            if it.rollout == Some(true) {
                let mut plan: Vec<ContactState> = it.backed_up.iter().map(|&i| search.tree().node(i).state.clone()).collect();
                plan.extend(it.simulated.iter().cloned());
                prop_assert_eq!(Some(plan.as_slice()), search.solution());
            }
        }
        let tree = search.tree();
        for (id, node) in tree.nodes().iter().enumerate().skip(1) {
            prop_assert!(node.q.abs() <= 1.0 + 1e-12);
            let parent = node.parent.unwrap();
            prop_assert!(parent < id, "child precedes its parent");
            prop_assert!(node.depth == tree.node(parent).depth + 1);
        }
        let r = search.result();
        prop_assert_eq!(r.oracle_calls, rollouts);
        if r.success {
            prop_assert_eq!(r.plan.first(), Some(env.start()));
            prop_assert_eq!(r.plan.last(), Some(env.goal()));
            for w in r.plan.windows(2) {
                prop_assert!(kinematic_feasible(&w[0], &w[1], &env, &ctrl.robot));
            }
            prop_assert!(rollout_plan(&env, &r.plan, None, &ctrl, 0).unwrap().success);
        }
    }
}

#[test]
fn jsonl_round_trip_of_collected_records() {
    let ctrl = Controller::new(GaitSpec::trot(), RobotConfig::default());
    let recs = collect_dataset(&ctrl, 300, 2).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&recs, &mut buf).unwrap();
    assert_eq!(read_jsonl(buf.as_slice(), 4).unwrap(), recs);
}
