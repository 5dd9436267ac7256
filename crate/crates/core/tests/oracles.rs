mod common;

use rand::Rng;

use ivelab::env::{build_gridworld, GridworldSpec};
use ivelab::funcapprox::{forward_kmpv, DidacticConfig, DidacticParams};
use ivelab::ive::{combine, eve_stats, ive_exact, ive_exact_q, SignalCombiner};
use ivelab::mdp::{
    bellman_eval_apply, occupancy_curve, policy_evaluation, policy_transition_kernel, value_iteration, ActionValues,
    PolicyTable, TabularMdp,
};
use ivelab::rng::seeded;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn self_loop_backup() {
    let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
    let out = bellman_eval_apply(&mdp, &PolicyTable::uniform(1, 1), &[10.0]).unwrap();
    assert!(close(out[0], 10.0, 1e-12));
}

#[test]
fn swap_chain_backup() {
    let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 1.0], 0.5).unwrap();
    let out = bellman_eval_apply(&mdp, &PolicyTable::uniform(2, 1), &[0.0, 0.0]).unwrap();
    assert_eq!(&out[..], &[0.0, 1.0]);
}

#[test]
fn constant_reward_is_geometric() {
    let mut mdp = TabularMdp::random(5, 3, 0.9, &mut seeded(3, 0)).unwrap();
    mdp = TabularMdp::new(5, 3, mdp.transitions().to_vec(), vec![1.0; 15], 0.9).unwrap();
    let v = policy_evaluation(&mdp, &PolicyTable::uniform(5, 3), 1e-10).unwrap();
    assert!(v.iter().all(|&x| close(x, 10.0, 1e-8)));
}

#[test]
fn evaluation_matches_linear_solve() {
    for seed in 0..10 {
        let mdp = TabularMdp::random(6, 3, 0.9, &mut seeded(seed, 0)).unwrap();
        let mut rng = seeded(seed, 5);
        let mut pi = Vec::new();
        for _ in 0..6 {
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let t: f64 = w.iter().sum();
            pi.extend(w.iter().map(|x| x / t));
        }
        let policy = PolicyTable::new(6, 3, pi.clone()).unwrap();
        let v = policy_evaluation(&mdp, &policy, 1e-12).unwrap();
        let oracle = common::linear_solve_values(6, 3, mdp.transitions(), mdp.rewards(), &pi, 0.9);
        for (a, b) in v.iter().zip(&oracle) {
            assert!(close(*a, *b, 1e-9), "{a} vs {b}");
        }
    }
}

#[test]
fn value_iteration_matches_policy_enumeration() {
    let (ns, na) = (4, 3);
    for seed in 0..10 {
        let mdp = TabularMdp::random(ns, na, 0.9, &mut seeded(seed, 0)).unwrap();
        let mut best = vec![f64::NEG_INFINITY; ns];
        for code in 0..na.pow(ns as u32) {
            let mut pi = vec![0.0; ns * na];
            let mut c = code;
            for s in 0..ns {
                pi[s * na + c % na] = 1.0;
                c /= na;
            }
            let v = common::linear_solve_values(ns, na, mdp.transitions(), mdp.rewards(), &pi, 0.9);
            for (b, x) in best.iter_mut().zip(v) {
                *b = b.max(x);
            }
        }
        let v_star = value_iteration(&mdp, 1e-12).unwrap();
        for (a, b) in v_star.iter().zip(&best) {
            assert!(close(*a, *b, 1e-9), "{a} vs {b}");
        }
    }
}

#[test]
fn two_action_choice_picks_the_larger_reward() {
    // Both actions stay put; action 1 pays 1, action 0 pays 0.
    let mdp = TabularMdp::new(2, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0], 0.5).unwrap();
    let v = value_iteration(&mdp, 1e-12).unwrap();
    assert!(close(v[0], 2.0, 1e-10) && close(v[1], 2.0, 1e-10));
}

#[test]
fn action_conditioned_members_match_hand_expansion() {
    let p = vec![
        0.7, 0.3, // s0 a0
        0.2, 0.8, // s0 a1
        1.0, 0.0, // s1 a0
        0.4, 0.6, // s1 a1
    ];
    let r = vec![1.0, -1.0, 0.5, 2.0];
    let g = 0.8;
    let mdp = TabularMdp::new(2, 2, p.clone(), r.clone(), g).unwrap();
    let pi = vec![0.25, 0.75, 0.6, 0.4];
    let policy = PolicyTable::new(2, 2, pi.clone()).unwrap();
    let v = [3.0, -2.0];

    let q1 = |s: usize, a: usize| r[s * 2 + a] + g * (p[(s * 2 + a) * 2] * v[0] + p[(s * 2 + a) * 2 + 1] * v[1]);
    let v1 = |s: usize| pi[s * 2] * q1(s, 0) + pi[s * 2 + 1] * q1(s, 1);
    let q2 = |s: usize, a: usize| r[s * 2 + a] + g * (p[(s * 2 + a) * 2] * v1(0) + p[(s * 2 + a) * 2 + 1] * v1(1));

    let report = ive_exact_q(&mdp, &policy, &v, 2).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            assert!(close(report.kmpv(s * 2 + a, 1), q1(s, a), 1e-12));
            assert!(close(report.kmpv(s * 2 + a, 2), q2(s, a), 1e-12));
        }
    }
}

#[test]
fn two_members_spread_half_the_gap() {
    let a = ActionValues::new(1, 2, vec![1.0, -4.0]).unwrap();
    let b = ActionValues::new(1, 2, vec![3.5, -1.0]).unwrap();
    let stats = eve_stats(&[a, b]).unwrap();
    assert!(close(stats.std[0], 1.25, 1e-12));
    assert!(close(stats.std[1], 1.5, 1e-12));
}

#[test]
fn pessimistic_combination() {
    // Members {1.5, 2.5}: mean 2, population std 0.5.
    let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.75], 0.5).unwrap();
    let report = ive_exact(&mdp, &PolicyTable::uniform(1, 1), &[1.5], 1).unwrap();
    assert!(close(report.mean()[0], 2.0, 1e-12));
    assert!(close(report.std()[0], 0.5, 1e-12));
    let out = combine(&report, SignalCombiner::new(-2.0).unwrap());
    assert!(close(out[0], 1.0, 1e-12));
}

#[test]
fn wind_mixture_and_wall_rule() {
    let windy = build_gridworld(&GridworldSpec {
        wind_prob: 0.5,
        ..GridworldSpec::default()
    })
    .unwrap();
    assert!(close(windy.prob(12, 0, 7), 0.625, 1e-12));

    let calm = build_gridworld(&GridworldSpec {
        wind_prob: 0.0,
        ..GridworldSpec::default()
    })
    .unwrap();
    // Top-left corner, north and west bump into walls.
    assert_eq!(calm.prob(0, 0, 0), 1.0);
    assert_eq!(calm.prob(0, 1, 0), 1.0);
    // Interior cell under the uniform policy: each neighbour gets 1/4.
    let kernel = policy_transition_kernel(&calm, &PolicyTable::uniform(25, 4)).unwrap();
    for n in [7, 11, 13, 17] {
        assert!(close(kernel.get(12, n), 0.25, 1e-12));
    }
    // Corner: two wall bumps accumulate on the cell itself.
    assert!(close(kernel.get(0, 0), 0.5, 1e-12));
}

#[test]
fn swap_chain_occupancy_parity() {
    let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0], 0.9).unwrap();
    let kernel = policy_transition_kernel(&mdp, &PolicyTable::uniform(2, 1)).unwrap();
    let curve = occupancy_curve(&kernel, 0, 1, 9).unwrap();
    for (i, x) in curve.iter().enumerate() {
        let l = i + 1;
        assert_eq!(*x, if l % 2 == 1 { 1.0 } else { 0.0 });
    }
}

/// Independent windy-grid simulator: the chosen action is replaced by a
/// uniform draw over all four with probability `wind`; walls leave the agent
/// in place.
fn simulate_step<R: Rng>(s: usize, wind: f64, rng: &mut R) -> usize {
    let mut a = rng.random_range(0..4);
    if rng.random::<f64>() < wind {
        a = rng.random_range(0..4);
    }
    let (r, c) = ((s / 5) as i64, (s % 5) as i64);
    let (dr, dc) = [(-1, 0), (0, -1), (1, 0), (0, 1)][a];
    let (nr, nc) = (r + dr, c + dc);
    if (0..5).contains(&nr) && (0..5).contains(&nc) {
        (nr * 5 + nc) as usize
    } else {
        s
    }
}

#[test]
fn occupancy_matches_simulated_frequency() {
    let spec = GridworldSpec::default();
    let mdp = build_gridworld(&spec).unwrap();
    let kernel = policy_transition_kernel(&mdp, &PolicyTable::uniform(25, 4)).unwrap();
    let exact = occupancy_curve(&kernel, 24, 0, 150).unwrap()[149];

    let runs = 100_000;
    let mut rng = seeded(11, 0);
    let hits = (0..runs)
        .filter(|_| {
            let mut s = 24;
            for _ in 0..150 {
                s = simulate_step(s, spec.wind_prob, &mut rng);
            }
            s == 0
        })
        .count();
    let freq = hits as f64 / runs as f64;
    let se = (exact * (1.0 - exact) / runs as f64).sqrt();
    assert!((freq - exact).abs() <= 3.0 * se, "simulated {freq}, exact {exact}, se {se}");
}

#[test]
fn didactic_forward_matches_independent_composition() {
    let config = DidacticConfig::default();
    for seed in 0..3 {
        let params = DidacticParams::init(seed);
        let flat = params.to_flat();
        assert_eq!(flat.len(), common::flat_len());
        assert_eq!(params.n_params(), 7522);
        let net = common::FlatNet::new(&flat);
        for s in [-3.0, -1.3, 0.0, 0.4, 2.9] {
            let oracle = net.kmpvs(s, config.k_max, config.gamma);
            let fast = params.kmpvs(s, config.k_max, config.gamma);
            for k in 0..=config.k_max {
                assert!(close(fast[k], oracle[k], 1e-12), "seed {seed} s {s} k {k}");
                assert!(close(forward_kmpv(&params, s, k, &config).unwrap(), oracle[k], 1e-12));
            }
            // k = 2 spelled out.
            let z0 = net.encode(s);
            let z1 = net.step(&z0);
            let z2 = net.step(&z1);
            let g = config.gamma;
            let by_hand = net.reward(&z1) + g * net.reward(&z2) + g * g * net.value(&z2);
            assert!(close(fast[2], by_hand, 1e-12));
        }
    }
}
