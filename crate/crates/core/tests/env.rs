use std::collections::BTreeMap;

use crafter_coop::env::*;
use crafter_coop::harness::{milestones, run_episode, score_return};
use crafter_coop::policy::{BaselineKind, ScriptedBackend};
use crafter_coop::techtree::{Task, TechTree};
use crafter_coop::world::*;

#[test]
fn reset_gives_one_observation_per_agent() {
    let (env, obs) = MultiAgentEnv::reset(EpisodeConfig::default().with_agents(3)).unwrap();
    assert_eq!(obs.len(), 3);
    assert_eq!(env.agents(), vec![AgentId(1), AgentId(2), AgentId(3)]);
    for (id, o) in &obs {
        assert_eq!((o.width, o.height), (9, 7));
        assert_eq!(o.window.len(), 63);
        assert_eq!(o.stats.len(), N_STATS);
        assert_eq!(&o.stats[..4], &[9, 9, 9, 9]);
        let a = env.world().agent(*id).unwrap();
        assert_eq!((o.stats[6], o.stats[7]), (a.position.x, a.position.y));
        // The agent's own cell shows terrain; teammates show as agents.
        assert_eq!(o.window[31], material_code(env.world().grid.get(a.position).unwrap()));
    }
    let marked: usize = obs.values().map(|o| o.window.iter().filter(|c| **c == CODE_AGENT).count()).sum();
    assert!(marked > 0);
}

#[test]
fn missing_action_is_refused() {
    let (mut env, _) = MultiAgentEnv::reset(EpisodeConfig::default().with_agents(2)).unwrap();
    let actions: BTreeMap<_, _> = [(AgentId(1), ActionKind::Noop)].into_iter().collect();
    assert!(matches!(env.step(&actions), Err(EnvError::MissingAction(AgentId(2)))));
    assert_eq!(env.world().tick, 0);
}

#[test]
fn idle_step_costs_the_time_penalty() {
    let (mut env, _) = MultiAgentEnv::reset(EpisodeConfig::default().with_agents(2)).unwrap();
    let actions: BTreeMap<_, _> = [(AgentId(1), (0, 0, 0)), (AgentId(2), (0, 0, 0))].into_iter().collect();
    let step = env.step_indices(&actions).unwrap();
    assert_eq!(step.rewards.len(), 2);
    assert!(step.rewards.values().all(|r| (*r + 0.01).abs() < 1e-12));
    assert!((step.team_reward + 0.01).abs() < 1e-12);
    assert!(step.terminations.values().all(|t| !t));
    assert!(step.truncations.values().all(|t| !t));
}

#[test]
fn timeout_truncates_and_then_refuses_steps() {
    let config = EpisodeConfig {
        max_ticks: 2,
        ..EpisodeConfig::default()
    };
    let (mut env, _) = MultiAgentEnv::reset(config).unwrap();
    let noop: BTreeMap<_, _> = [(AgentId(1), ActionKind::Noop)].into_iter().collect();
    assert!(!env.step(&noop).unwrap().truncations[&AgentId(1)]);
    let last = env.step(&noop).unwrap();
    assert!(last.truncations[&AgentId(1)]);
    assert!(last.observations.is_empty());
    assert!(matches!(env.step(&noop), Err(EnvError::Finished)));
}

#[test]
fn scripted_records_replay_through_the_env() {
    let tree = TechTree::standard();
    for (n, seed) in [(1, 0), (1, 3), (2, 1), (2, 4)] {
        let config = EpisodeConfig::default().with_seed(seed).with_agents(n);
        let record = run_episode(config.clone(), &ScriptedBackend, BaselineKind::Mem).unwrap();
        let (mut env, _) = MultiAgentEnv::reset(config).unwrap();
        let mut first: BTreeMap<Task, u64> = BTreeMap::new();
        let mut team = 0.0;
        let mut per_agent = 0.0;
        for t in &record.ticks {
            let indices = t.actions.iter().map(|(id, a)| (*id, encode_action(*a))).collect();
            let step = env.step_indices(&indices).unwrap();
            assert_eq!(step.events, t.events, "seed {seed} tick {}", t.tick);
            for e in &step.events {
                if let EventKind::Achievement { task } = e.kind {
                    first.entry(task).or_insert(e.tick);
                }
            }
            team += step.team_reward;
            per_agent += step.rewards.values().sum::<f64>();
        }
        for row in milestones(&record) {
            assert_eq!(row.tick, first.get(&row.task).copied(), "seed {seed} {}", row.task);
        }
        assert!((team - score_return(&record, &tree)).abs() < 1e-9);
        let deaths = record.ticks.iter().flat_map(|t| &t.events).any(|e| matches!(e.kind, EventKind::Died { .. }));
        if !deaths {
            let extra_penalty = 0.01 * record.ticks.len() as f64 * f64::from(n - 1);
            assert!((team - per_agent - extra_penalty).abs() < 1e-9);
        }
        assert_eq!(env.world().digest(), record.footer.final_digest);
    }
}
