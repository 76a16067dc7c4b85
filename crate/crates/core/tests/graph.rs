use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timehop::env::{ChainMdp, ChainMdpSpec, Crawler, CrawlerSpec};
use timehop::{Action, EnvModel, Environment, Error, State, TransitionRecord, TransitionsGraph};

fn rec(from: usize, action: usize, reward: f64, to: usize) -> TransitionRecord {
    TransitionRecord::new(State(from), Action(action), reward, State(to))
}

/// Both indexes agree with a brute-force scan of the record list.
fn assert_consistent(g: &TransitionsGraph) {
    for s in 0..g.state_count() {
        let scanned: Vec<TransitionRecord> = g
            .records()
            .iter()
            .filter(|r| r.to == State(s))
            .copied()
            .collect();
        assert_eq!(g.predecessors(State(s)), scanned, "state {s}");
        for a in 0..g.action_count() {
            let scanned = g
                .records()
                .iter()
                .filter(|r| r.from == State(s) && r.action == Action(a))
                .collect::<Vec<_>>();
            assert!(scanned.len() <= 1);
            assert_eq!(g.successor(State(s), Action(a)), scanned.first().copied());
        }
    }
    assert!(g.len() <= g.state_count() * g.action_count());
}

#[test]
fn chain_random_walk_matches_replay_log() {
    let mut env = ChainMdp::new(ChainMdpSpec::benchmark()).unwrap();
    let mut g = TransitionsGraph::new(env.state_count(), env.action_count());
    let mut log = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    env.reset();
    for _ in 0..1000 {
        let s = env.current();
        let a = Action(rng.random_range(0..2));
        let (next, r) = env.step(a).unwrap();
        let t = TransitionRecord::new(s, a, r, next);
        g.record(t).unwrap();
        log.push(t);
        if env.is_terminal(next) {
            env.reset();
        }
    }
    for s in 0..env.state_count() {
        let mut expected: Vec<TransitionRecord> = Vec::new();
        for t in log.iter().filter(|t| t.to == State(s)) {
            if !expected.contains(t) {
                expected.push(*t);
            }
        }
        assert_eq!(g.predecessors(State(s)), expected);
    }
    assert_consistent(&g);
}

#[test]
fn records_replay_in_the_environment() {
    let mut env = Crawler::new(CrawlerSpec::reduced()).unwrap();
    let mut g = TransitionsGraph::new(env.state_count(), env.action_count());
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..3000 {
        let s = env.current();
        let a = Action(rng.random_range(0..env.action_count()));
        let (next, r) = env.step(a).unwrap();
        g.record(TransitionRecord::new(s, a, r, next)).unwrap();
    }
    for t in g.records() {
        assert_eq!(env.transition(t.from, t.action).unwrap(), (t.to, t.reward));
    }
}

#[test]
fn record_examples() {
    let mut g = TransitionsGraph::new(4, 2);
    assert!(g.is_empty());
    assert!(g.predecessors(State(1)).is_empty());
    g.record(rec(0, 0, 1.0, 1)).unwrap();
    g.record(rec(0, 0, 1.0, 1)).unwrap();
    assert_eq!(g.len(), 1);
    assert!(matches!(
        g.record(rec(0, 0, 2.0, 1)),
        Err(Error::DeterminismViolation { .. })
    ));
    assert!(g.record(rec(0, 0, 1.0, 2)).is_err());
    g.record(rec(2, 1, 0.0, 1)).unwrap();
    assert_eq!(
        g.predecessors(State(1)),
        vec![rec(0, 0, 1.0, 1), rec(2, 1, 0.0, 1)]
    );
    g.record(rec(3, 1, 0.5, 3)).unwrap();
    assert_eq!(g.predecessors(State(3)), vec![rec(3, 1, 0.5, 3)]);
    assert!(g.predecessors(State(99)).is_empty());
    assert!(matches!(
        g.record(rec(4, 0, 0.0, 0)),
        Err(Error::InputDomain(_))
    ));
    assert!(g.record(rec(0, 2, 0.0, 0)).is_err());
}

#[test]
fn csv_dump_lists_records_in_insertion_order() {
    let mut g = TransitionsGraph::new(3, 2);
    g.record(rec(2, 1, -0.5, 0)).unwrap();
    g.record(rec(0, 0, 1.0, 2)).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "from,action,reward,to\n2,1,-0.5,0\n0,0,1,2\n"
    );
}

proptest! {
    #[test]
    fn indexes_stay_consistent(
        ops in prop::collection::vec((0usize..12, 0usize..3, 0usize..12, -2i32..3), 0..120),
    ) {
        // The outcome of (from, action) is a fixed function so no conflicts arise.
        let mut g = TransitionsGraph::new(12, 3);
        for (from, action, _, _) in ops {
            let to = (from * 7 + action * 5 + 3) % 12;
            let reward = (from as f64 - action as f64) / 4.0;
            g.record(rec(from, action, reward, to)).unwrap();
        }
        assert_consistent(&g);
    }

    #[test]
    fn identical_inserts_give_identical_graphs(
        ops in prop::collection::vec((0usize..8, 0usize..2), 0..60),
    ) {
        let build = || {
            let mut g = TransitionsGraph::new(8, 2);
            for &(from, action) in &ops {
                g.record(rec(from, action, 1.0, (from + action + 1) % 8)).unwrap();
            }
            g
        };
        let (a, b) = (build(), build());
        prop_assert_eq!(a.records(), b.records());
        for s in 0..8 {
            prop_assert_eq!(a.predecessor_ids(State(s)), b.predecessor_ids(State(s)));
        }
    }

    #[test]
    fn conflicting_outcome_is_rejected(from in 0usize..5, action in 0usize..2, to in 0usize..5, other in 0usize..5) {
        let mut g = TransitionsGraph::new(5, 2);
        g.record(rec(from, action, 0.0, to)).unwrap();
        let before = g.records().to_vec();
        let result = g.record(rec(from, action, 0.0, other));
        prop_assert_eq!(result.is_err(), other != to);
        prop_assert_eq!(g.records(), &before[..]);
    }
}
