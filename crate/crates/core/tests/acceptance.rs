//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 3 7`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use abps_core::abps::{
    audit_selections, pool_from_hypers, AbpsConfig, AbpsRun, AgentSpec, TrainingLog,
};
use abps_core::bandit::{ArmState, BanditMode, BanditState, Strategy};
use abps_core::env::{optimal_q, EnvSpec, Observation};
use abps_core::harness::metrics::epoch_metrics;
use abps_core::harness::output::{write_run, EVAL_CSV, EVENTS_CSV, SELECTIONS_CSV};
use abps_core::harness::{execute, run_independent_baseline, ExperimentConfig, Mode};
use abps_core::learner::HyperParams;
use abps_core::nn::{gradient_check, QNetwork, RegressionSample};
use abps_core::pbt::PbtConfig;
use abps_core::seeding;

const SUITE_SEED: u64 = 0x00AC_CE97;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Check = std::result::Result<Outcome, String>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Check {
    Ok(Outcome { pass, detail })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Pool, environment and loop settings of one experiment config.
#[derive(Clone)]
struct Setup {
    abps: AbpsConfig,
    pool: Vec<AgentSpec>,
    env: EnvSpec,
}

impl Setup {
    fn load(name: &str) -> std::result::Result<(Self, ExperimentConfig), String> {
        let config = ExperimentConfig::load(&configs_dir().join(name)).map_err(err)?;
        let setup = Setup {
            abps: config.abps.clone(),
            pool: config.agents().map_err(err)?,
            env: config.env.clone(),
        };
        Ok((setup, config))
    }

    fn with_budget(&self, total_env_steps: u64) -> Setup {
        Setup {
            abps: AbpsConfig {
                total_env_steps,
                ..self.abps.clone()
            },
            pool: self.pool.clone(),
            env: self.env.clone(),
        }
    }
}

/// The experiments behind the comparison criteria, with a cache so each
/// distinct run is trained once.
struct Lab {
    /// Four hand-picked agents: one good learning rate, three poor settings.
    small: Setup,
    /// Sixteen agents drawn from the pool prior.
    sampled: Setup,
    pbt: PbtConfig,
    cache: HashMap<String, TrainingLog>,
}

impl Lab {
    fn load() -> std::result::Result<Self, String> {
        let (small, _) = Setup::load("gridworld-abps.toml")?;
        let (with_pbt, pbt_config) = Setup::load("gridworld-abps-pbt.toml")?;
        if (&small.env, &small.abps, &small.pool) != (&with_pbt.env, &with_pbt.abps, &with_pbt.pool)
        {
            return Err(
                "gridworld-abps and gridworld-abps-pbt configs disagree outside [pbt]".into(),
            );
        }
        let (sampled, _) = Setup::load("gridworld-prior.toml")?;
        Ok(Lab {
            small,
            sampled,
            pbt: pbt_config
                .pbt
                .ok_or("gridworld-abps-pbt has no [pbt] table")?,
            cache: HashMap::new(),
        })
    }

    fn cached(
        &mut self,
        key: String,
        train: impl FnOnce() -> abps_core::Result<TrainingLog>,
    ) -> std::result::Result<TrainingLog, String> {
        if let Some(log) = self.cache.get(&key) {
            return Ok(log.clone());
        }
        let log = train().map_err(err)?;
        self.cache.insert(key, log.clone());
        Ok(log)
    }

    fn abps(
        &mut self,
        setup: &Setup,
        pbt: Option<&PbtConfig>,
        seed: u64,
    ) -> std::result::Result<TrainingLog, String> {
        let key = format!(
            "abps {:?} {:?} {:?} {pbt:?} {seed}",
            setup.abps, setup.pool, setup.env
        );
        self.cached(key, || {
            let mut run = AbpsRun::new(setup.abps.clone(), &setup.pool, &setup.env, seed)?;
            if let Some(pbt) = pbt {
                run = run.with_pbt(pbt.clone())?;
            }
            run.run()
        })
    }

    fn baseline(&mut self, setup: &Setup, seed: u64) -> std::result::Result<TrainingLog, String> {
        let key = format!(
            "baseline {:?} {:?} {:?} {seed}",
            setup.abps, setup.pool, setup.env
        );
        self.cached(key, || {
            run_independent_baseline(&setup.abps, &setup.pool, &setup.env, seed)
        })
    }
}

fn final_returns(log: &TrainingLog) -> std::result::Result<&[f64], String> {
    log.final_returns()
        .ok_or_else(|| "run has no evaluation".to_string())
}

fn best(log: &TrainingLog) -> std::result::Result<f64, String> {
    Ok(epoch_metrics(final_returns(log)?).map_err(err)?.best)
}

fn brute_force_mean(history: &[f64]) -> f64 {
    history.iter().sum::<f64>() / history.len() as f64
}

fn bandit_oracle(_: &mut Lab) -> Check {
    let mut rng = seeding::stream(SUITE_SEED, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let k = rng.gen_range(1..=8);
        let mut bandit = BanditState::new(k, BanditMode::Cumulative).map_err(err)?;
        let mut history = vec![Vec::new(); k];
        let scale = 10f64.powi(rng.gen_range(-2..=2));
        for t in 0..rng.gen_range(1..300u64) {
            let arm = rng.gen_range(0..k);
            let reward = scale * rng.gen_range(-1.0..1.0);
            bandit.update(arm, reward, t).map_err(err)?;
            history[arm].push(reward);
        }
        for (arm, h) in history.iter().enumerate() {
            let state = bandit.arm(arm).map_err(err)?;
            if state.pulls != h.len() as u64 {
                return outcome(
                    false,
                    format!(
                        "arm {arm}: {} pulls recorded, {} made",
                        state.pulls,
                        h.len()
                    ),
                );
            }
            if !h.is_empty() {
                worst = worst.max((state.mean - brute_force_mean(h)).abs());
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max |mean - brute force| = {worst:.2e} over 1000 sequences"),
    )
}

/// Index maximising `mean + sqrt(xi ln t / n)`, unpulled arms first, ties
/// to the lowest index.
fn ucb_reference(arms: &[ArmState], xi: f64, t: u64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, a) in arms.iter().enumerate() {
        let score = if a.pulls == 0 {
            f64::INFINITY
        } else {
            a.mean + (xi * (t as f64).ln() / a.pulls as f64).sqrt()
        };
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

fn ucb_formula(_: &mut Lab) -> Check {
    let mut rng = seeding::stream(SUITE_SEED, &[2]);
    let mut mismatches = 0;
    for case in 0..10_000 {
        let k = rng.gen_range(1..=8);
        let mode = if case % 2 == 0 {
            BanditMode::Cumulative
        } else {
            BanditMode::Sliding {
                window: rng.gen_range(1..30),
            }
        };
        let mut bandit = BanditState::new(k, mode).map_err(err)?;
        for _ in 0..rng.gen_range(0..60) {
            let arm = bandit.select(&Strategy::Random, &mut rng);
            // Rewards from a small set as well as a continuum, to force ties.
            let reward = if rng.gen_bool(0.5) {
                [0.0, 0.5, 1.0][rng.gen_range(0..3)]
            } else {
                rng.gen()
            };
            let now = bandit.time();
            bandit.update(arm, reward, now).map_err(err)?;
        }
        let xi = if case % 7 == 0 {
            0.0
        } else {
            rng.gen_range(0.0..5.0)
        };
        let expected = ucb_reference(bandit.arms(), xi, bandit.time() + 1);
        if bandit.select(&Strategy::ucb(xi), &mut rng) != expected {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in 10000 states"),
    )
}

fn stationary_ucb(_: &mut Lab) -> Check {
    let mut good_seeds = 0;
    let mut shares = Vec::new();
    for seed in 0..10 {
        let mut rng = seeding::stream(SUITE_SEED, &[3, seed]);
        let arms: Vec<Normal<f64>> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&m| Normal::new(m, 0.1).unwrap())
            .collect();
        let mut bandit = BanditState::new(3, BanditMode::Cumulative).map_err(err)?;
        let mut best_late = 0;
        for pull in 0..1_000 {
            let arm = bandit.select(&Strategy::ucb(2.0), &mut rng);
            let reward = arms[arm].sample(&mut rng);
            let now = bandit.time();
            bandit.update(arm, reward, now).map_err(err)?;
            if pull >= 500 && arm == 2 {
                best_late += 1;
            }
        }
        let share = best_late as f64 / 500.0;
        shares.push(format!("{share:.2}"));
        if share >= 0.7 {
            good_seeds += 1;
        }
    }
    outcome(
        good_seeds >= 9,
        format!(
            "best-arm share of last 500 pulls >= 0.70 in {good_seeds}/10 seeds [{}]",
            shares.join(" ")
        ),
    )
}

fn gradient(_: &mut Lab) -> Check {
    let mut rng = seeding::stream(SUITE_SEED, &[4]);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let hidden: Vec<usize> = match i {
            19 => vec![16, 16],
            _ => (0..rng.gen_range(0..=2))
                .map(|_| rng.gen_range(1..=16))
                .collect(),
        };
        let inputs = rng.gen_range(1..=6);
        let outputs = rng.gen_range(1..=4);
        let mut net = QNetwork::new(inputs, &hidden, outputs, &mut rng).map_err(err)?;
        // Non-zero biases keep pre-activations off the ReLU kink.
        net.update_params(|_, p| *p += rng.gen_range(-0.1..0.1));
        let data: Vec<(Vec<f64>, usize, f64)> = (0..8)
            .map(|_| {
                let x = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, rng.gen_range(0..outputs), rng.gen_range(-2.0..2.0))
            })
            .collect();
        let samples: Vec<RegressionSample<'_>> = data
            .iter()
            .map(|(x, a, t)| RegressionSample {
                input: x,
                action: *a,
                target: *t,
            })
            .collect();
        worst = worst.max(gradient_check(&net, &samples, 1e-5).map_err(err)?);
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 20 nets"),
    )
}

fn single_learner(_: &mut Lab) -> Check {
    let env = EnvSpec::chain(5, 20);
    let hyper = HyperParams {
        hidden_sizes: vec![16],
        learning_rate: 1e-3,
        epsilon_decay_steps: 2_000,
        ..HyperParams::default()
    };
    let oracle = optimal_q(&env, hyper.discount).map_err(err)?;
    let states: Vec<usize> = (0..env.state_count())
        .filter(|&s| !env.is_terminal(s))
        .collect();
    let mut config = AbpsConfig::new(20_000);
    config.eval_episodes = 1;
    let mut solved = 0;
    let mut reached = Vec::new();
    for seed in 0..10 {
        let mut run = AbpsRun::new(
            config.clone(),
            &pool_from_hypers([hyper.clone()]),
            &env,
            seed,
        )
        .map_err(err)?;
        // Step from which the greedy policy stays optimal to the end.
        let mut since = None;
        while run.step_round().map_err(err)? {
            let learner = &run.pool()[0].learner;
            let mut optimal = true;
            for &s in &states {
                let obs = Observation::one_hot(s, env.observation_len());
                optimal &= learner.greedy_action(&obs).map_err(err)? == oracle.greedy_action(s);
            }
            since = match (optimal, since) {
                (false, _) => None,
                (true, None) => Some(run.env_steps()),
                (true, kept) => kept,
            };
        }
        let at = since;
        reached.push(at.map_or("-".to_string(), |s| s.to_string()));
        solved += at.is_some() as usize;
    }
    outcome(
        solved >= 9,
        format!("greedy policy optimal from some step on, within 20000 steps, in {solved}/10 seeds (from: {})", reached.join(" ")),
    )
}

fn budget(lab: &mut Lab) -> Check {
    let small = &lab.small;
    let hypers: Vec<HyperParams> = small
        .pool
        .iter()
        .chain(&small.pool)
        .map(|a| a.hyper.clone())
        .collect();
    let pool = pool_from_hypers(hypers);
    let config = AbpsConfig {
        total_env_steps: 5_000,
        ..small.abps.clone()
    };
    let mut run = AbpsRun::new(config.clone(), &pool, &small.env, 7).map_err(err)?;
    run.run_to_end().map_err(err)?;
    let acted: u64 = run.pool().iter().map(|s| s.learner.act_step_count()).sum();
    let inserted = run.buffer().insert_count();
    let log = run.into_log();
    audit_selections(&log, &config, 7).map_err(err)?;
    let counters = [log.env_steps, log.total_interactions, inserted, acted];
    outcome(
        counters.iter().all(|&c| c == 5_000),
        format!("K=8, budget 5000: env steps, interactions, buffer inserts, actions = {counters:?}; audit ok"),
    )
}

fn against_baseline(lab: &mut Lab) -> Check {
    let small = lab.small.clone();
    let (mut ours, mut theirs) = (Vec::new(), Vec::new());
    let mut ratio_ok = true;
    for seed in SEEDS {
        let abps = lab.abps(&small, None, seed)?;
        let base = lab.baseline(&small, seed)?;
        ratio_ok &= small.pool.len() as u64 * abps.total_interactions == base.total_interactions;
        ours.push(best(&abps)?);
        theirs.push(best(&base)?);
    }
    let (a, b) = (mean(&ours), mean(&theirs));
    outcome(
        ratio_ok && a >= 0.95 * b,
        format!(
            "best agent: abps {a:.3} vs independent {b:.3} (need >= {:.3}) at 1/4 the interactions",
            0.95 * b
        ),
    )
}

fn pool_quality(lab: &mut Lab) -> Check {
    let sampled = lab.sampled.clone();
    let per_agent = sampled.abps.total_env_steps / sampled.pool.len() as u64;
    let matched = sampled.with_budget(per_agent);
    let (mut q_ours, mut q_theirs, mut v_ours, mut v_theirs) = (vec![], vec![], vec![], vec![]);
    for seed in SEEDS {
        let abps = lab.abps(&sampled, None, seed)?;
        let base = lab.baseline(&matched, seed)?;
        if abps.total_interactions != base.total_interactions {
            return Err(format!(
                "budgets differ: {} vs {}",
                abps.total_interactions, base.total_interactions
            ));
        }
        let ours = epoch_metrics(final_returns(&abps)?).map_err(err)?;
        let theirs = epoch_metrics(final_returns(&base)?).map_err(err)?;
        q_ours.push(ours.top25_quantile);
        q_theirs.push(theirs.top25_quantile);
        v_ours.push(ours.variance);
        v_theirs.push(theirs.variance);
    }
    let (qa, qb, va, vb) = (
        mean(&q_ours),
        mean(&q_theirs),
        mean(&v_ours),
        mean(&v_theirs),
    );
    outcome(
        qa >= qb && va <= vb,
        format!(
            "K={}, {} steps per agent in the baseline: top-25% quantile {qa:.3} vs {qb:.3}, variance {va:.4} vs {vb:.4} (abps vs independent)",
            sampled.pool.len(),
            per_agent
        ),
    )
}

fn period_sensitivity(lab: &mut Lab) -> Check {
    let strategies = [
        Strategy::ucb(2.0),
        Strategy::softmax(0.1),
        Strategy::Random,
        Strategy::epsilon_greedy(0.1),
    ];
    let mut drops = Vec::new();
    let mut table = Vec::new();
    for strategy in strategies {
        let mut by_m = Vec::new();
        for m in [1, 5, 10] {
            let mut setup = lab.small.clone();
            setup.abps.strategy = strategy;
            setup.abps.episodes_per_period = m;
            let mut bests = Vec::new();
            for seed in SEEDS {
                bests.push(best(&lab.abps(&setup, None, seed)?)?);
            }
            by_m.push(mean(&bests));
        }
        let drop = by_m[0] - by_m[2];
        table.push(format!(
            "{} {:.2}/{:.2}/{:.2} drop {drop:.2}",
            strategy.name(),
            by_m[0],
            by_m[1],
            by_m[2]
        ));
        drops.push(drop);
    }
    // Each value-based strategy must drop no more than each random one.
    let adaptive = drops[0].max(drops[1]);
    let fixed = drops[2].min(drops[3]);
    outcome(
        adaptive <= fixed,
        format!("best at m=1/5/10: {}", table.join("; ")),
    )
}

fn pbt(lab: &mut Lab) -> Check {
    let small = lab.small.clone();
    let pbt = lab.pbt.clone();
    let disabled = PbtConfig {
        enabled: false,
        ..pbt.clone()
    };
    let identical =
        lab.abps(&small, Some(&disabled), SEEDS[0])? == lab.abps(&small, None, SEEDS[0])?;
    let quantile = |log: &TrainingLog| -> std::result::Result<f64, String> {
        Ok(epoch_metrics(final_returns(log)?)
            .map_err(err)?
            .top25_quantile)
    };
    let (mut with_pbt, mut without) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        with_pbt.push(quantile(&lab.abps(&small, Some(&pbt), seed)?)?);
        without.push(quantile(&lab.abps(&small, None, seed)?)?);
    }
    let (a, b) = (mean(&with_pbt), mean(&without));
    outcome(
        identical && a >= b,
        format!("disabled pbt log identical: {identical}; top-25% quantile with pbt {a:.3} vs without {b:.3}"),
    )
}

fn determinism(_: &mut Lab) -> Check {
    let base =
        ExperimentConfig::load(&configs_dir().join("gridworld-abps-pbt.toml")).map_err(err)?;
    let mut checked = Vec::new();
    for mode in [Mode::Abps, Mode::AbpsPbt, Mode::IndependentBaseline] {
        let mut config = base.clone();
        config.mode = mode;
        config.seed = 11;
        config.abps.total_env_steps = 4_000;
        let dirs = [
            tempfile::tempdir().map_err(err)?,
            tempfile::tempdir().map_err(err)?,
        ];
        for dir in &dirs {
            write_run(dir.path(), &execute(&config).map_err(err)?).map_err(err)?;
        }
        for name in [EVAL_CSV, SELECTIONS_CSV, EVENTS_CSV] {
            let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(name)).map_err(err);
            if read(&dirs[0])? != read(&dirs[1])? {
                return outcome(
                    false,
                    format!("{} differs between repeats in {}", name, mode.as_str()),
                );
            }
        }
        checked.push(mode.as_str());
    }
    outcome(
        true,
        format!(
            "eval, selections and events CSVs byte-identical across repeats ({})",
            checked.join(", ")
        ),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn(&mut Lab) -> Check,
}

fn main() {
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria = [
        Criterion {
            id: 1,
            name: "bandit oracle equivalence",
            limit: Some(Duration::from_secs(5)),
            check: bandit_oracle,
        },
        Criterion {
            id: 2,
            name: "ucb formula",
            limit: None,
            check: ucb_formula,
        },
        Criterion {
            id: 3,
            name: "stationary bandit",
            limit: Some(Duration::from_secs(5)),
            check: stationary_ucb,
        },
        Criterion {
            id: 4,
            name: "gradient check",
            limit: Some(Duration::from_secs(30)),
            check: gradient,
        },
        Criterion {
            id: 5,
            name: "single learner",
            limit: minutes(2),
            check: single_learner,
        },
        Criterion {
            id: 6,
            name: "interaction budget",
            limit: None,
            check: budget,
        },
        Criterion {
            id: 7,
            name: "best agent vs independent",
            limit: minutes(15),
            check: against_baseline,
        },
        Criterion {
            id: 8,
            name: "pool quality at matched budget",
            limit: minutes(15),
            check: pool_quality,
        },
        Criterion {
            id: 9,
            name: "period sensitivity",
            limit: minutes(45),
            check: period_sensitivity,
        },
        Criterion {
            id: 10,
            name: "pbt reduction and gain",
            limit: minutes(20),
            check: pbt,
        },
        Criterion {
            id: 11,
            name: "determinism",
            limit: None,
            check: determinism,
        },
    ];
    let mut lab = match Lab::load() {
        Ok(lab) => lab,
        Err(e) => {
            println!("acceptance: cannot load experiment configs: {e}");
            std::process::exit(1);
        }
    };
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let start = Instant::now();
        let result = (c.check)(&mut lab);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let timing = match c.limit {
            Some(l) if !in_time => format!(
                "{:.1}s, over the {}s limit",
                elapsed.as_secs_f64(),
                l.as_secs()
            ),
            _ => format!("{:.1}s", elapsed.as_secs_f64()),
        };
        let verdict = if pass && in_time { "PASS" } else { "FAIL" };
        failed += (verdict == "FAIL") as usize;
        println!(
            "criterion {:>2} {verdict}  {}: {detail} ({timing})",
            c.id, c.name
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
}
