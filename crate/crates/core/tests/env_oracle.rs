use abps_core::env::{optimal_q, EnvSpec, Environment};
use abps_core::seeding::tag;

fn greedy_rollout(spec: &EnvSpec, discount: f64) -> (usize, f64, bool) {
    let q = optimal_q(spec, discount).unwrap();
    let mut env = Environment::new(spec.clone()).unwrap();
    let mut obs = env.reset(0);
    let (mut steps, mut ret) = (0, 0.0);
    loop {
        let s = obs.state_id.unwrap();
        let r = env.step(q.greedy_action(s)).unwrap();
        steps += 1;
        ret += r.reward;
        if r.done {
            return (steps, ret, !r.truncated);
        }
        obs = r.observation;
    }
}

#[test]
fn value_iteration_reaches_the_fixed_point() {
    let specs = [
        EnvSpec::chain(2, 10),
        EnvSpec::chain(7, 30),
        EnvSpec::gridworld(4, 4, 30),
        EnvSpec::gridworld(6, 6, 50),
        EnvSpec::windy_gridworld(5, 4, 0.3, 50),
    ];
    for spec in &specs {
        for discount in [0.0, 0.5, 0.9, 0.99] {
            let q = optimal_q(spec, discount).unwrap();
            let residual = q.bellman_residual(spec, discount);
            assert!(residual <= 1e-10, "{spec:?} γ={discount}: {residual}");
        }
    }
}

#[test]
fn chain_values_follow_the_discounted_path() {
    // From state s the goal is N-1-s steps away; the reward arrives on the last one.
    let spec = EnvSpec::chain(5, 50);
    let q = optimal_q(&spec, 0.9).unwrap();
    for s in 0..4 {
        let expected = 0.9f64.powi(3 - s as i32);
        assert!((q.get(s, 1) - expected).abs() <= 1e-12, "s={s}");
        assert_eq!(q.greedy_action(s), 1);
    }
    let q2 = optimal_q(&EnvSpec::chain(2, 5), 0.9).unwrap();
    assert!((q2.get(0, 1) - 1.0).abs() <= 1e-12);
    assert!((q2.get(0, 0) - 0.9).abs() <= 1e-12);
}

#[test]
fn greedy_optimal_policy_walks_manhattan_paths() {
    for (w, h) in [(4, 4), (6, 6), (3, 7)] {
        let spec = EnvSpec::gridworld(w, h, 100);
        let (steps, ret, reached) = greedy_rollout(&spec, 0.99);
        assert!(reached);
        assert_eq!(steps, (w - 1) + (h - 1), "{w}x{h}");
        assert_eq!(ret, 1.0);
    }
}

#[test]
fn windy_slip_frequency() {
    let spec = EnvSpec::windy_gridworld(5, 5, 0.1, 10);
    let width = spec.width;
    let mut env = Environment::with_stream(spec, &[7, tag::TRAIN_ENV]).unwrap();
    // Walk down to leave the top row, then move right and see whether the
    // wind pushed the agent up as well.
    let (mut trials, mut slips) = (0, 0);
    for ep in 0..12_000 {
        env.reset(ep);
        env.step(2).unwrap();
        env.step(2).unwrap();
        let before = env.state();
        if before < width {
            continue;
        }
        let after = env.step(1).unwrap().observation.state_id.unwrap();
        trials += 1;
        if after == before + 1 - width {
            slips += 1;
        } else {
            assert_eq!(after, before + 1);
        }
    }
    assert!(trials >= 10_000);
    let freq = slips as f64 / trials as f64;
    assert!(
        (freq - 0.1).abs() <= 0.02,
        "slip frequency {freq} over {trials}"
    );
}

#[test]
fn episodes_replay_from_their_seed() {
    let spec = EnvSpec::windy_gridworld(6, 6, 0.4, 40);
    let actions = [1, 2, 1, 1, 2, 0, 3, 2, 1, 2, 2, 1];
    let run = |env: &mut Environment, seed| {
        env.reset(seed);
        actions
            .iter()
            .map_while(|&a| {
                env.step(a)
                    .ok()
                    .map(|r| (r.observation.state_id, r.reward, r.done))
            })
            .collect::<Vec<_>>()
    };
    let mut a = Environment::with_stream(spec.clone(), &[3, tag::EVAL_ENV]).unwrap();
    let mut b = Environment::with_stream(spec, &[3, tag::EVAL_ENV]).unwrap();
    let first = run(&mut a, 11);
    run(&mut a, 12);
    assert_eq!(run(&mut a, 11), first);
    assert_eq!(run(&mut b, 11), first);
}

#[test]
fn episodes_respect_the_step_limit() {
    let spec = EnvSpec::windy_gridworld(6, 6, 0.5, 13);
    let mut env = Environment::new(spec).unwrap();
    for seed in 0..200 {
        env.reset(seed);
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step((seed as usize + steps) % 4).unwrap().done {
                break;
            }
        }
        assert!(steps <= 13);
    }
}
