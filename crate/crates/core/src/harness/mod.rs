//! Episode runner, records, replay and evaluation metrics.
//!
//! [`run_episode`] drives every agent through observe, decide, step and
//! consolidate until the episode ends and returns an [`EpisodeRecord`].
//! Records are stored as JSON lines and verified on import by replaying the
//! recorded actions and comparing per-tick hashes.

mod metrics;
mod record;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

pub use metrics::{aggregate, milestone_order_violations, milestones, score_return, MetricRow, MetricsTable, MilestoneRow};
pub use record::{
    export_record, export_trace, import_record, read_record, replay, write_record, BackendFailure, EpisodeFooter,
    EpisodeHeader, EpisodeRecord, TickRecord, FORMAT_VERSION,
};

use crate::comms::{deliver, CommsError, Message};
use crate::memory::MemoryError;
use crate::policy::{decide_tick, prepare_tick, AgentRuntime, BaselineKind, PlannerBackend, PolicyError, TickDecision};
use crate::world::{ActionKind, ActionOutcome, AgentId, EpisodeConfig, TerminalStatus, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("record format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("replay diverged at tick {tick}: {message}")]
    ReplayMismatch { tick: u64, message: String },
    #[error("no records to aggregate")]
    Empty,
}

/// A finished episode together with each agent's final memory.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub record: EpisodeRecord,
    pub agents: Vec<AgentRuntime>,
}

/// Cells from teammates' message views that a recipient adds to its map.
pub(crate) fn reveal_inbox(world: &mut WorldState, id: AgentId, inbox: &[Message]) {
    for m in inbox {
        let cells: Vec<_> = m.view.known_cells().map(|(p, _)| p).collect();
        world.reveal(id, cells);
    }
}

/// Run one episode to completion.
pub fn run_episode(
    config: EpisodeConfig,
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
) -> Result<EpisodeRecord, HarnessError> {
    run_episode_full(config, backend, baseline).map(|r| r.record)
}

/// [`run_episode`] that also returns every agent's runtime.
pub fn run_episode_full(
    config: EpisodeConfig,
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
) -> Result<EpisodeRun, HarnessError> {
    let mut world = WorldState::generate(config.clone())?;
    let n = config.n_agents;
    let episode = config.seed as i64;
    let mut agents: Vec<AgentRuntime> = world.agent_ids().map(AgentRuntime::new).collect();
    let mut header = EpisodeHeader::new(&config, baseline, backend.name());
    header.generation_attempt = world.generation_attempt;
    let mut ticks = Vec::new();
    let mut pending: Vec<Message> = Vec::new();
    let mut failures_total = 0u64;
    let mut aborted = None;

    while !world.terminal_status().is_terminal() {
        match run_one_tick(&mut world, &mut agents, &pending, backend, baseline, episode, n) {
            Ok((tick, next)) => {
                failures_total += tick.failures.len() as u64;
                pending = next;
                ticks.push(tick);
            }
            Err(e) => {
                log::error!("episode seed {} aborted at tick {}: {e}", config.seed, world.tick);
                aborted = Some(e.to_string());
                break;
            }
        }
    }

    let record = EpisodeRecord {
        header,
        footer: EpisodeFooter::from_world(&world, failures_total, aborted),
        ticks,
    };
    Ok(EpisodeRun { record, agents })
}

fn run_one_tick(
    world: &mut WorldState,
    agents: &mut [AgentRuntime],
    pending: &[Message],
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
    episode: i64,
    n: u32,
) -> Result<(TickRecord, Vec<Message>), HarnessError> {
    let tick = world.tick;
    let mut inboxes = deliver(pending, n)?;
    let living: Vec<AgentId> = world.living_agents().collect();
    let mut plans = Vec::with_capacity(living.len());
    for id in &living {
        let inbox = inboxes.remove(id).unwrap_or_default();
        if baseline.communicates() {
            reveal_inbox(world, *id, &inbox);
        }
        plans.push(prepare_tick(world, &agents[id.index()], inbox, baseline)?);
    }
    let snapshot: &WorldState = world;
    let decisions: Vec<TickDecision> = plans
        .into_par_iter()
        .zip(living.par_iter())
        .map(|(plan, id)| decide_tick(snapshot, &agents[id.index()], plan, backend, baseline, episode))
        .collect();

    let actions: BTreeMap<AgentId, ActionKind> = decisions.iter().map(|d| (d.agent, d.action)).collect();
    let report = world.step(&actions)?;
    let failures: Vec<BackendFailure> = decisions
        .iter()
        .filter_map(|d| {
            d.failure.as_ref().map(|message| BackendFailure {
                agent: d.agent,
                message: message.clone(),
            })
        })
        .collect();
    let messages: Vec<Message> = decisions.iter().filter(|d| d.deliver).map(|d| d.message.clone()).collect();
    let retries: u32 = decisions.iter().map(|d| d.retries).sum();

    for decision in decisions {
        let outcome = outcome_for(&report.outcomes, decision.agent, decision.action);
        agents[decision.agent.index()].finish(decision, outcome, &report.events, baseline)?;
    }

    let record = TickRecord::new(tick, actions, report, messages.clone(), failures, retries, world);
    Ok((record, messages))
}

fn outcome_for(outcomes: &[ActionOutcome], agent: AgentId, action: ActionKind) -> ActionOutcome {
    outcomes
        .iter()
        .find(|o| o.agent == agent)
        .cloned()
        .unwrap_or_else(|| {
            ActionOutcome::new(
                agent,
                action,
                crate::world::ActionResult::Failure,
                crate::world::OutcomeReason::Dead,
            )
        })
}

/// [`sweep`] that keeps every agent's runtime.
pub fn sweep_full(
    configs: &[EpisodeConfig],
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
) -> Vec<Result<EpisodeRun, HarnessError>> {
    configs
        .par_iter()
        .map(|c| run_episode_full(c.clone(), backend, baseline))
        .collect()
}

/// Run many episodes in parallel, one world per worker. Output order matches input.
pub fn sweep(
    configs: &[EpisodeConfig],
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
) -> Vec<Result<EpisodeRecord, HarnessError>> {
    configs
        .par_iter()
        .map(|c| run_episode(c.clone(), backend, baseline))
        .collect()
}

/// Configs for seeds `first..first+runs` sharing everything else with `base`.
pub fn seed_range(base: &EpisodeConfig, first: u64, runs: u64) -> Vec<EpisodeConfig> {
    (first..first + runs).map(|s| base.clone().with_seed(s)).collect()
}

/// Tick at which the episode succeeded, if it did.
pub fn success_tick(record: &EpisodeRecord) -> Option<u64> {
    match record.footer.terminal {
        TerminalStatus::Success(t) => Some(t),
        _ => None,
    }
}
