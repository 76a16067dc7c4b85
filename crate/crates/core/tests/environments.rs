use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timehop::env::{
    crawler_decode, crawler_encode, crawler_step, decode_action, encode_action, AnyEnv, ChainMdp,
    ChainMdpSpec, ChainPosition, Crawler, CrawlerSpec, CrawlerState,
};
use timehop::{value_iteration, Action, EnvModel, Environment, QTable, State};

fn shipped_envs() -> Vec<AnyEnv> {
    vec![
        ChainMdp::new(ChainMdpSpec::benchmark()).unwrap().into(),
        ChainMdp::new(ChainMdpSpec::gated(&[1, 2, 4, 8], 1.0))
            .unwrap()
            .into(),
        Crawler::new(CrawlerSpec::reduced()).unwrap().into(),
        Crawler::new(CrawlerSpec::default()).unwrap().into(),
    ]
}

#[test]
fn transitions_replay_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for env in shipped_envs() {
        let probes: Vec<(State, Action)> = (0..10_000)
            .map(|_| {
                (
                    State(rng.random_range(0..env.state_count())),
                    Action(rng.random_range(0..env.action_count())),
                )
            })
            .collect();
        let first: Vec<_> = probes
            .iter()
            .map(|&(s, a)| env.transition(s, a).unwrap())
            .collect();
        for (&(s, a), &(next, r)) in probes.iter().zip(&first) {
            let (next2, r2) = env.transition(s, a).unwrap();
            assert_eq!(next, next2);
            assert_eq!(r.to_bits(), r2.to_bits());
        }
    }
}

#[test]
fn step_follows_transition_and_set_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for mut env in shipped_envs() {
        for _ in 0..500 {
            let s = State(rng.random_range(0..env.state_count()));
            let a = Action(rng.random_range(0..env.action_count()));
            env.set_state(s).unwrap();
            env.set_state(s).unwrap();
            assert_eq!(env.current(), s);
            let expected = env.transition(s, a).unwrap();
            assert_eq!(env.step(a).unwrap(), expected);
            assert_eq!(env.current(), expected.0);
        }
        let n = env.state_count();
        assert!(env.set_state(State(n)).is_err());
        assert!(env.step(Action(env.action_count())).is_err());
    }
}

/// Finite-horizon brute force: best discounted return of every first action,
/// by exhaustive recursion with memoisation on (state, remaining depth).
fn horizon_returns<M: EnvModel>(model: &M, gamma: f64, horizon: usize) -> Vec<Vec<f64>> {
    let (n, m) = (model.state_count(), model.action_count());
    let mut value = vec![0.0f64; n];
    let mut q = vec![vec![0.0f64; m]; n];
    for _ in 0..horizon {
        for s in 0..n {
            for a in 0..m {
                let (next, r) = model.transition(State(s), Action(a)).unwrap();
                q[s][a] = if model.is_terminal(State(s)) {
                    0.0
                } else {
                    r + gamma * value[next.0]
                };
            }
        }
        for s in 0..n {
            value[s] = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    q
}

fn brute_greedy(row: &[f64], tol: f64) -> Vec<usize> {
    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
}

#[test]
fn value_iteration_greedy_matches_brute_force() {
    let gamma = 0.9;
    for env in shipped_envs()
        .into_iter()
        .filter(|e| e.state_count() <= 5000)
    {
        let q = value_iteration(&env, gamma, 1e-12).unwrap();
        let r_max = (0..env.state_count())
            .flat_map(|s| (0..env.action_count()).map(move |a| (s, a)))
            .map(|(s, a)| env.transition(State(s), Action(a)).unwrap().1.abs())
            .fold(0.0f64, f64::max);
        let horizon = ((1e-11 / (r_max / (1.0 - gamma))).ln() / gamma.ln()).ceil() as usize;
        let brute = horizon_returns(&env, gamma, horizon);
        for s in 0..env.state_count() {
            let row = q.row(State(s));
            for (a, v) in row.iter().enumerate() {
                assert!((v - brute[s][a]).abs() < 1e-8, "state {s} action {a}");
            }
            let candidates = brute_greedy(&brute[s], 1e-8);
            assert!(
                candidates.contains(&q.greedy_action(State(s)).0),
                "state {s}: greedy {:?} not among {candidates:?}",
                q.greedy_action(State(s))
            );
        }
    }
}

#[test]
fn reduced_crawler_optimum_is_reached_by_greedy_rollout() {
    let env = Crawler::new(CrawlerSpec::reduced()).unwrap();
    let q = value_iteration(&env, 0.9, 1e-10).unwrap();
    let mut sim = env.clone();
    sim.reset();
    let mut visited = vec![sim.current()];
    let mut rewards = vec![];
    // Follow the greedy policy until it cycles, then average over the cycle.
    loop {
        let (next, r) = sim.step(q.greedy_action(sim.current())).unwrap();
        rewards.push(r);
        if let Some(start) = visited.iter().position(|&s| s == next) {
            let cycle = &rewards[start..];
            let per_step = cycle.iter().sum::<f64>() / cycle.len() as f64;
            assert!(per_step > 1.0);
            // Along the cycle the discounted values are consistent with the
            // average reward: (1 - gamma) * V is within the reward range.
            let v = q.max_q(next);
            assert!((1.0 - 0.9) * v <= cycle.iter().cloned().fold(f64::MIN, f64::max) + 1e-9);
            break;
        }
        visited.push(next);
    }
}

#[test]
fn crawler_mirror_negates_displacement() {
    for spec in [CrawlerSpec::reduced(), CrawlerSpec::default()] {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5000 {
            let s = crawler_decode(&spec, State(rng.random_range(0..spec.state_count()))).unwrap();
            let a = Action(rng.random_range(0..80));
            let [m0, m1, m2, m3] = decode_action(a).unwrap();
            let mirrored_action = encode_action([m2, m3, m0, m1]).unwrap();
            let (next, r) = crawler_step(&spec, s, a).unwrap();
            let (next_m, r_m) = crawler_step(&spec, s.mirrored(), mirrored_action).unwrap();
            assert_eq!(next_m, next.mirrored());
            assert!((r + r_m).abs() < 1e-12, "{s:?} {a:?}: {r} vs {r_m}");
        }
    }
}

#[test]
fn inverse_action_conserves_position() {
    let spec = CrawlerSpec::default();
    let crawler = Crawler::new(spec.clone()).unwrap();
    let radices = [
        spec.upper_bins,
        spec.lower_bins,
        spec.upper_bins,
        spec.lower_bins,
    ];
    let mut checked = 0;
    for id in (0..spec.state_count()).step_by(7) {
        let s = crawler_decode(&spec, State(id)).unwrap();
        for a in 0..80 {
            let moves = decode_action(Action(a)).unwrap();
            let clamped = (0..4).any(|j| {
                let to = s.joints[j] as i64 + moves[j] as i64;
                to < 0 || to >= radices[j] as i64
            });
            if clamped {
                continue;
            }
            let (next, r) = crawler_step(&spec, s, Action(a)).unwrap();
            if crawler.contacts(&next) != crawler.contacts(&s) {
                continue;
            }
            let inverse = encode_action(moves.map(|m| -m)).unwrap();
            let (back, r_back) = crawler_step(&spec, next, inverse).unwrap();
            assert_eq!(back, s);
            assert!((r + r_back).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn crawler_space_round_trips_and_bounds() {
    let spec = CrawlerSpec::default();
    assert_eq!(spec.state_count(), 13_689);
    for id in 0..spec.state_count() {
        let s = crawler_decode(&spec, State(id)).unwrap();
        assert_eq!(crawler_encode(&spec, s).unwrap(), State(id));
    }
    assert_eq!(
        crawler_encode(&spec, CrawlerState::new([0, 0, 0, 0])).unwrap(),
        State(0)
    );
    assert_eq!(
        crawler_encode(&spec, CrawlerState::new([8, 12, 8, 12])).unwrap(),
        State(13_688)
    );
    assert!(crawler_encode(&spec, CrawlerState::new([9, 0, 0, 0])).is_err());
    assert!(crawler_decode(&spec, State(13_689)).is_err());
    assert_eq!(CrawlerSpec::reduced().state_count(), 625);
}

#[test]
fn set_state_exposes_decoded_joints() {
    let spec = CrawlerSpec::default();
    let mut env = Crawler::new(spec.clone()).unwrap();
    for id in (0..spec.state_count()).step_by(97) {
        env.set_state(State(id)).unwrap();
        assert_eq!(env.joints(), crawler_decode(&spec, State(id)).unwrap());
    }
}

#[test]
fn clamped_moves_do_not_displace() {
    let spec = CrawlerSpec::reduced();
    let corner = CrawlerState::new([0, 0, 0, 0]);
    let all_down = encode_action([-1, -1, -1, -1]).unwrap();
    assert_eq!(
        crawler_step(&spec, corner, all_down).unwrap(),
        (corner, 0.0)
    );
}

/// Position visit counts of a uniform-random walk over `steps` steps.
fn chain_census(gates: &[usize], steps: usize, seed: u64) -> Vec<u64> {
    let mut env = ChainMdp::new(ChainMdpSpec::gated(gates, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; env.spec().length];
    env.reset();
    for _ in 0..steps {
        if let (ChainPosition::At(p), _) = env.decode(env.current()).unwrap() {
            counts[p] += 1;
        }
        let (next, _) = env.step(Action(rng.random_range(0..2))).unwrap();
        if env.is_terminal(next) {
            env.reset();
        }
    }
    counts
}

#[test]
fn chain_census_is_strictly_decreasing() {
    let counts = chain_census(&[2, 2, 4, 8], 100_000, 14);
    for w in counts.windows(2) {
        assert!(w[0] > w[1], "{counts:?}");
        // Two-cell chi-square against equal frequencies, p < 0.001.
        let expected = (w[0] + w[1]) as f64 / 2.0;
        let chi2 = [w[0], w[1]]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum::<f64>();
        assert!(chi2 > 10.83, "{counts:?}: chi2 {chi2}");
    }
}

#[test]
fn last_chain_position_is_rarest() {
    let counts = chain_census(&[1, 2, 4, 8], 100_000, 15);
    let last = *counts.last().unwrap();
    assert!(
        counts[..counts.len() - 1].iter().all(|&c| c > last),
        "{counts:?}"
    );
    assert!((last as f64) < 0.01 * 100_000.0);
}

#[test]
fn chain_examples() {
    let mut env = ChainMdp::new(ChainMdpSpec::benchmark()).unwrap();
    env.reset();
    let (next, r) = env.step(timehop::env::chain::ADVANCE).unwrap();
    assert_eq!(env.decode(next).unwrap().0, ChainPosition::At(1));
    assert_eq!(r, 0.0);

    for length in 2..8 {
        let env = ChainMdp::new(ChainMdpSpec::plain(length, 3.0)).unwrap();
        let q = value_iteration(&env, 0.7, 1e-13).unwrap();
        let expected = 0.7f64.powi(length as i32 - 1) * 3.0;
        assert!((q.max_q(env.start_state()) - expected).abs() < 1e-10);
    }
}

#[test]
fn value_iteration_rejects_bad_parameters() {
    let env = ChainMdp::new(ChainMdpSpec::plain(3, 1.0)).unwrap();
    assert!(matches!(
        value_iteration(&env, 1.0, 1e-9),
        Err(timehop::Error::Config { .. })
    ));
    assert!(value_iteration(&env, 0.5, 0.0).is_err());
}

#[test]
fn gamma_zero_gives_immediate_rewards() {
    let env = Crawler::new(CrawlerSpec::reduced()).unwrap();
    let q = value_iteration(&env, 0.0, 1e-12).unwrap();
    for s in (0..env.state_count()).step_by(13) {
        for a in 0..env.action_count() {
            let (_, r) = env.transition(State(s), Action(a)).unwrap();
            assert_eq!(q.get(State(s), Action(a)), r);
        }
    }
}

proptest! {
    #[test]
    fn greedy_ties_ignore_insertion_order(
        values in prop::collection::vec(-3i32..3, 1..10),
        order_seed in any::<u64>(),
    ) {
        let m = values.len();
        let mut order: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        for i in (1..m).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut a = QTable::new(1, m);
        let mut b = QTable::new(1, m);
        for i in 0..m {
            a.set(State(0), Action(i), values[i] as f64);
        }
        for &i in &order {
            b.set(State(0), Action(i), values[i] as f64);
        }
        let best = *values.iter().max().unwrap();
        let lowest = values.iter().position(|&v| v == best).unwrap();
        prop_assert_eq!(a.greedy_action(State(0)), Action(lowest));
        prop_assert_eq!(b.greedy_action(State(0)), Action(lowest));
        prop_assert_eq!(a.max_q(State(0)), best as f64);
    }

    #[test]
    fn max_q_tracks_arbitrary_writes(
        writes in prop::collection::vec((0usize..4, -5.0f64..5.0), 0..40),
    ) {
        let mut q = QTable::new(1, 4);
        let mut shadow = [0.0f64; 4];
        for (a, v) in writes {
            q.set(State(0), Action(a), v);
            shadow[a] = v;
            let expected = shadow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(q.max_q(State(0)), expected);
        }
    }

    #[test]
    fn action_codes_round_trip(a in 0usize..80) {
        let moves = decode_action(Action(a)).unwrap();
        prop_assert!(moves != [0; 4]);
        prop_assert_eq!(encode_action(moves).unwrap(), Action(a));
    }
}
