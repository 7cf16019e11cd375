//! A reset/step surface for reinforcement-learning consumers.
//!
//! Observations are flattened to integers: the view window row-major as
//! material codes, followed by a fixed-order stats vector. Actions are
//! addressed by index with two auxiliary arguments for the navigate and
//! share payloads. Rewards are per agent.
//!
//! Encoding version 1:
//! * window codes: position of the material in [`Material::ALL`], then
//!   [`CODE_OUT_OF_BOUNDS`], [`CODE_COW`] and [`CODE_AGENT`] (another agent).
//! * stats: health, food, drink, energy, facing direction (left, right, up,
//!   down = 0..3), sleeping flag, x, y, then one count per [`Item::ALL`].
//! * action index: 0..14 follow [`ActionKind::PRIMITIVES`]; 14 is navigate
//!   with `arg0` indexing [`Material::NAVIGABLE`]; 15 is share with `arg0`
//!   the receiving agent id and `arg1` indexing [`Item::ALL`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    ActionKind, AgentId, Direction, EpisodeConfig, Event, EventKind, Item, Material, Observation, TerminalStatus,
    WindowCell, WorldError, WorldState,
};

pub const ENCODING_VERSION: u32 = 1;
pub const CODE_OUT_OF_BOUNDS: u8 = Material::ALL.len() as u8;
pub const CODE_COW: u8 = CODE_OUT_OF_BOUNDS + 1;
pub const CODE_AGENT: u8 = CODE_OUT_OF_BOUNDS + 2;
/// Number of action indices.
pub const N_ACTIONS: usize = 16;
pub const ACTION_NAVIGATE: usize = 14;
pub const ACTION_SHARE: usize = 15;
/// Length of the stats vector.
pub const N_STATS: usize = 8 + Item::ALL.len();

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("action index {index} out of range (0..{N_ACTIONS})")]
    BadActionIndex { index: usize },
    #[error("argument {arg} out of range for action {index}")]
    BadArgument { index: usize, arg: usize },
    #[error("no action for living agent {0}")]
    MissingAction(AgentId),
    #[error("the episode is over; call reset")]
    Finished,
}

/// One agent's flattened observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedObservation {
    pub width: usize,
    pub height: usize,
    pub window: Vec<u8>,
    pub stats: Vec<i32>,
}

pub fn material_code(m: Material) -> u8 {
    Material::ALL.iter().position(|x| *x == m).expect("every material is listed") as u8
}

fn direction_code(d: Direction) -> i32 {
    match d {
        Direction::Left => 0,
        Direction::Right => 1,
        Direction::Up => 2,
        Direction::Down => 3,
    }
}

pub fn encode_observation(obs: &Observation) -> EncodedObservation {
    let w = obs.window.width;
    let mut window: Vec<u8> = obs
        .window
        .cells
        .iter()
        .map(|c| match c {
            WindowCell::Cell(m) => material_code(*m),
            WindowCell::OutOfBounds => CODE_OUT_OF_BOUNDS,
        })
        .collect();
    let mut mark = |p: crate::world::Position, code: u8| {
        let (dx, dy) = (p.x - obs.window.origin.x, p.y - obs.window.origin.y);
        if dx >= 0 && dy >= 0 && dx < w && dy < obs.window.height {
            window[(dy * w + dx) as usize] = code;
        }
    };
    for c in &obs.cows_in_view {
        mark(*c, CODE_COW);
    }
    for (_, p) in &obs.agents_in_view {
        mark(*p, CODE_AGENT);
    }
    let v = obs.vitals;
    let mut stats = vec![
        i32::from(v.health),
        i32::from(v.food),
        i32::from(v.drink),
        i32::from(v.energy),
        direction_code(obs.direction),
        i32::from(obs.sleeping),
        obs.position.x,
        obs.position.y,
    ];
    stats.extend(Item::ALL.iter().map(|i| obs.inventory.count(*i) as i32));
    EncodedObservation {
        width: w as usize,
        height: obs.window.height as usize,
        window,
        stats,
    }
}

/// Decode an action index and its arguments.
pub fn decode_action(index: usize, arg0: usize, arg1: usize) -> Result<ActionKind, EnvError> {
    match index {
        i if i < ActionKind::PRIMITIVES.len() => Ok(ActionKind::PRIMITIVES[i]),
        ACTION_NAVIGATE => Material::NAVIGABLE
            .get(arg0)
            .map(|m| ActionKind::Navigate { target: *m })
            .ok_or(EnvError::BadArgument { index, arg: arg0 }),
        ACTION_SHARE => {
            let item = Item::ALL.get(arg1).ok_or(EnvError::BadArgument { index, arg: arg1 })?;
            let target = u32::try_from(arg0).map_err(|_| EnvError::BadArgument { index, arg: arg0 })?;
            Ok(ActionKind::Share {
                target_agent: AgentId(target),
                item: *item,
            })
        }
        _ => Err(EnvError::BadActionIndex { index }),
    }
}

/// Inverse of [`decode_action`].
pub fn encode_action(action: ActionKind) -> (usize, usize, usize) {
    match action {
        ActionKind::Navigate { target } => (
            ACTION_NAVIGATE,
            Material::NAVIGABLE.iter().position(|m| *m == target).unwrap_or(0),
            0,
        ),
        ActionKind::Share { target_agent, item } => (
            ACTION_SHARE,
            target_agent.0 as usize,
            Item::ALL.iter().position(|i| *i == item).unwrap_or(0),
        ),
        other => (
            ActionKind::PRIMITIVES.iter().position(|p| *p == other).expect("primitive"),
            0,
            0,
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observations: BTreeMap<AgentId, EncodedObservation>,
    pub rewards: BTreeMap<AgentId, f64>,
    /// True for agents that died and, on success or when all are dead, for everyone.
    pub terminations: BTreeMap<AgentId, bool>,
    /// True for everyone when the tick cap is reached.
    pub truncations: BTreeMap<AgentId, bool>,
    pub events: Vec<Event>,
    /// Change of the episode return this tick: depth gained minus one tick's penalty.
    pub team_reward: f64,
    pub status: TerminalStatus,
}

/// One episode behind a reset/step interface.
#[derive(Debug, Clone)]
pub struct MultiAgentEnv {
    world: WorldState,
}

impl MultiAgentEnv {
    /// Start a fresh episode and return every agent's first observation.
    pub fn reset(config: EpisodeConfig) -> Result<(Self, BTreeMap<AgentId, EncodedObservation>), EnvError> {
        let world = WorldState::generate(config)?;
        let mut env = Self { world };
        let obs = env.observe_all()?;
        Ok((env, obs))
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Agents still alive.
    pub fn agents(&self) -> Vec<AgentId> {
        self.world.living_agents().collect()
    }

    fn observe_all(&mut self) -> Result<BTreeMap<AgentId, EncodedObservation>, EnvError> {
        let ids: Vec<AgentId> = self.world.living_agents().collect();
        let mut out = BTreeMap::new();
        for id in ids {
            let obs = self.world.observe(id, Vec::new())?;
            out.insert(id, encode_observation(&obs));
        }
        Ok(out)
    }

    /// Step with decoded actions; every living agent needs one.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, ActionKind>) -> Result<EnvStep, EnvError> {
        if self.world.terminal_status().is_terminal() {
            return Err(EnvError::Finished);
        }
        let living: Vec<AgentId> = self.world.living_agents().collect();
        if let Some(missing) = living.iter().find(|id| !actions.contains_key(id)) {
            return Err(EnvError::MissingAction(*missing));
        }
        let report = self.world.step(actions)?;
        let penalty = self.world.config.time_penalty;
        let mut rewards: BTreeMap<AgentId, f64> = living.iter().map(|id| (*id, -penalty)).collect();
        let mut gained = 0.0;
        for e in &report.events {
            if let EventKind::Achievement { task } = e.kind {
                let depth = f64::from(self.world.techtree.depth_of(task).unwrap_or(0));
                *rewards.entry(e.agent).or_insert(-penalty) += depth;
                gained += depth;
            }
        }
        let status = self.world.terminal_status();
        let all_done = matches!(status, TerminalStatus::Success(_) | TerminalStatus::AllDead);
        let terminations = living
            .iter()
            .map(|id| (*id, all_done || !self.world.agents[id.index()].alive))
            .collect();
        let truncations = living.iter().map(|id| (*id, status == TerminalStatus::Timeout)).collect();
        let observations = if status.is_terminal() { BTreeMap::new() } else { self.observe_all()? };
        Ok(EnvStep {
            observations,
            rewards,
            terminations,
            truncations,
            events: report.events,
            team_reward: gained - penalty,
            status,
        })
    }

    /// Step with `(index, arg0, arg1)` triples.
    pub fn step_indices(&mut self, actions: &BTreeMap<AgentId, (usize, usize, usize)>) -> Result<EnvStep, EnvError> {
        let decoded = actions
            .iter()
            .map(|(id, (i, a, b))| decode_action(*i, *a, *b).map(|a| (*id, a)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        self.step(&decoded)
    }
}
