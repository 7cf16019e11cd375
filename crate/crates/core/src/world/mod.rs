//! The multi-agent crafting gridworld.
//!
//! [`WorldState`] is the full joint state: terrain, agents, cows, tick and
//! RNG streams. It is advanced by [`WorldState::step`], which applies one
//! action per living agent in ascending id order, then hazards, then vitals.
//! Agents see the world only through [`WorldState::observe`], a window
//! centered on themselves.

mod gen;
mod nav;
mod noise;
mod render;
mod types;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::comms::Message;
use crate::rng::SplitMix64;
use crate::techtree::{self, Product, Requirement, Task, TechTree};

pub use gen::{generate_world, MAX_GENERATION_ATTEMPTS};
pub use nav::{approach, explore_step, exploration_waypoints, navigate_step, plan_step, NavGoal, NavMode, Plan};
pub use render::{render_map, render_window, TraceRecord, TraceWriter, LEGEND};
pub use types::*;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("world generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },
    #[error("agent {0} is not alive")]
    NotAlive(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("no known path toward {0} and nothing left to explore")]
    NoPath(Material),
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

/// Terrain, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub width: i32,
    pub height: i32,
    cells: Vec<Material>,
}

impl Grid {
    pub fn filled(width: i32, height: i32, material: Material) -> Self {
        Self {
            width,
            height,
            cells: vec![material; (width * height) as usize],
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn get(&self, p: Position) -> Option<Material> {
        self.contains(p)
            .then(|| self.cells[(p.y * self.width + p.x) as usize])
    }

    pub fn set(&mut self, p: Position, m: Material) {
        assert!(self.contains(p), "{p} outside grid");
        self.cells[(p.y * self.width + p.x) as usize] = m;
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Position::new(x, y)))
    }

    pub fn count(&self, m: Material) -> usize {
        self.cells.iter().filter(|c| **c == m).count()
    }

    pub fn center(&self) -> Position {
        Position::new(self.width / 2, self.height / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreams {
    pub world: SplitMix64,
    pub policy: SplitMix64,
}

/// The full joint state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: EpisodeConfig,
    pub grid: Grid,
    pub agents: Vec<AgentState>,
    pub cows: BTreeSet<Position>,
    pub tick: u64,
    pub rng: RngStreams,
    pub techtree: TechTree,
    /// Which generation attempt produced this terrain.
    pub generation_attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "tick")]
pub enum TerminalStatus {
    Running,
    Success(u64),
    Timeout,
    AllDead,
}

impl TerminalStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, TerminalStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrereqResult {
    Satisfied,
    Unmet(Vec<Requirement>),
}

impl PrereqResult {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, PrereqResult::Satisfied)
    }
}

/// One cell of an observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowCell {
    Cell(Material),
    OutOfBounds,
}

/// A `width x height` view, row-major from the top-left corner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub origin: Position,
    pub width: i32,
    pub height: i32,
    pub cells: Vec<WindowCell>,
}

impl Window {
    pub fn get(&self, p: Position) -> Option<WindowCell> {
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        (dx >= 0 && dy >= 0 && dx < self.width && dy < self.height)
            .then(|| self.cells[(dy * self.width + dx) as usize])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[WindowCell]> {
        self.cells.chunks(self.width as usize)
    }

    /// In-map cells with their absolute positions.
    pub fn known_cells(&self) -> impl Iterator<Item = (Position, Material)> + '_ {
        self.cells.iter().enumerate().filter_map(|(i, c)| match c {
            WindowCell::Cell(m) => {
                let i = i as i32;
                Some((
                    Position::new(self.origin.x + i % self.width, self.origin.y + i / self.width),
                    *m,
                ))
            }
            WindowCell::OutOfBounds => None,
        })
    }
}

/// One agent's partial view of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: AgentId,
    pub tick: u64,
    pub position: Position,
    pub direction: Direction,
    pub window: Window,
    /// Other agents inside the window.
    pub agents_in_view: Vec<(AgentId, Position)>,
    pub cows_in_view: Vec<Position>,
    pub facing: Facing,
    pub vitals: Vitals,
    pub inventory: Inventory,
    pub sleeping: bool,
    pub inbox: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub outcomes: Vec<ActionOutcome>,
    pub events: Vec<Event>,
}

impl WorldState {
    pub fn generate(config: EpisodeConfig) -> Result<Self, WorldError> {
        generate_world(config)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        if id.0 == 0 {
            return None;
        }
        self.agents.get(id.index())
    }

    fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentState> {
        if id.0 == 0 {
            return None;
        }
        self.agents.get_mut(id.index())
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().map(|a| a.id)
    }

    pub fn living_agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().filter(|a| a.alive).map(|a| a.id)
    }

    /// What sits in front of `agent`.
    pub fn facing_of(&self, agent: &AgentState) -> Facing {
        let p = agent.position.step(agent.facing);
        self.facing_at(p)
    }

    fn facing_at(&self, p: Position) -> Facing {
        match self.grid.get(p) {
            None => Facing::OutOfBounds,
            Some(_) if self.cows.contains(&p) => Facing::Cow,
            Some(m) => Facing::Material(m),
        }
    }

    /// Build the agent's observation and mark the window as discovered.
    pub fn observe(&mut self, id: AgentId, inbox: Vec<Message>) -> Result<Observation, WorldError> {
        let agent = self.agent(id).ok_or(WorldError::UnknownAgent(id))?;
        if !agent.alive {
            return Err(WorldError::NotAlive(id));
        }
        let (vw, vh) = (self.config.view_width, self.config.view_height);
        let origin = Position::new(agent.position.x - vw / 2, agent.position.y - vh / 2);
        let mut cells = Vec::with_capacity((vw * vh) as usize);
        let mut seen = Vec::new();
        for dy in 0..vh {
            for dx in 0..vw {
                let p = Position::new(origin.x + dx, origin.y + dy);
                match self.grid.get(p) {
                    Some(m) => {
                        cells.push(WindowCell::Cell(m));
                        seen.push(p);
                    }
                    None => cells.push(WindowCell::OutOfBounds),
                }
            }
        }
        let window = Window {
            origin,
            width: vw,
            height: vh,
            cells,
        };
        let agents_in_view = self
            .agents
            .iter()
            .filter(|o| o.id != id && o.alive && window.get(o.position).is_some())
            .map(|o| (o.id, o.position))
            .collect();
        let cows_in_view = self
            .cows
            .iter()
            .filter(|c| window.get(**c).is_some())
            .copied()
            .collect();
        let obs = Observation {
            agent: id,
            tick: self.tick,
            position: agent.position,
            direction: agent.facing,
            facing: self.facing_of(agent),
            vitals: agent.vitals,
            inventory: agent.inventory.clone(),
            sleeping: agent.sleeping,
            window,
            agents_in_view,
            cows_in_view,
            inbox,
        };
        let agent = self.agent_mut(id).expect("checked above");
        for p in seen {
            agent.discovered.insert(p);
        }
        Ok(obs)
    }

    /// Add cells reported by teammates to an agent's discovered set.
    pub fn reveal(&mut self, id: AgentId, cells: impl IntoIterator<Item = Position>) {
        if let Some(agent) = self.agent_mut(id) {
            for p in cells {
                agent.discovered.insert(p);
            }
        }
    }

    /// Prerequisite check for a do/place/make action against the tech tree.
    pub fn check_prerequisites(&self, agent: &AgentState, facing: Facing, action: ActionKind) -> PrereqResult {
        check_prerequisites(&self.techtree, agent, facing, action)
    }

    pub fn navigate_step(&self, agent: AgentId, target: Material) -> Result<ActionKind, WorldError> {
        navigate_step(self, agent, target)
    }

    /// Advance one tick.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, ActionKind>) -> Result<StepReport, WorldError> {
        for (id, action) in actions {
            if self.agent(*id).is_none() {
                return Err(WorldError::UnknownAgent(*id));
            }
            self.validate_payload(*id, action)?;
        }

        let next_tick = self.tick + 1;
        let mut outcomes = Vec::new();
        let mut events = Vec::new();
        let mut exhausted = BTreeSet::new();

        for (id, action) in actions {
            if !self.agents[id.index()].alive {
                outcomes.push(ActionOutcome::new(*id, *action, ActionResult::Failure, OutcomeReason::Dead));
                continue;
            }
            let outcome = self.apply(*id, *action, next_tick, &mut exhausted, &mut events);
            outcomes.push(outcome);
        }

        for agent in self.agents.iter_mut().filter(|a| a.alive) {
            if self.grid.get(agent.position) == Some(Material::Lava) {
                agent.vitals.health = 0;
                agent.alive = false;
                agent.sleeping = false;
                events.push(Event {
                    tick: next_tick,
                    agent: agent.id,
                    kind: EventKind::Died {
                        cause: DeathCause::Lava,
                    },
                });
            }
        }

        for agent in self.agents.iter_mut().filter(|a| a.alive) {
            update_vitals(agent, next_tick, &self.config);
            if !agent.alive {
                events.push(Event {
                    tick: next_tick,
                    agent: agent.id,
                    kind: EventKind::Died {
                        cause: DeathCause::Vitals,
                    },
                });
            }
        }

        self.tick = next_tick;
        Ok(StepReport { outcomes, events })
    }

    fn validate_payload(&self, id: AgentId, action: &ActionKind) -> Result<(), WorldError> {
        match action {
            ActionKind::Navigate { target } if !target.is_navigable() => Err(WorldError::ContractViolation(
                format!("agent {id}: `{target}` is not a navigation destination"),
            )),
            ActionKind::Share { target_agent, .. } if *target_agent == id => Err(
                WorldError::ContractViolation(format!("agent {id}: cannot share with itself")),
            ),
            ActionKind::Share { target_agent, .. } if self.agent(*target_agent).is_none() => Err(
                WorldError::ContractViolation(format!("agent {id}: share target {target_agent} does not exist")),
            ),
            _ => Ok(()),
        }
    }

    fn apply(
        &mut self,
        id: AgentId,
        action: ActionKind,
        tick: u64,
        exhausted: &mut BTreeSet<Position>,
        events: &mut Vec<Event>,
    ) -> ActionOutcome {
        let idx = id.index();
        if self.agents[idx].sleeping && !matches!(action, ActionKind::Sleep | ActionKind::Noop) {
            self.agents[idx].sleeping = false;
        }
        let (result, reason) = match action {
            ActionKind::Noop => (ActionResult::Success, OutcomeReason::Ok),
            ActionKind::Sleep => {
                self.agents[idx].sleeping = true;
                (ActionResult::Success, OutcomeReason::Ok)
            }
            ActionKind::MoveLeft | ActionKind::MoveRight | ActionKind::MoveUp | ActionKind::MoveDown => {
                self.apply_move(idx, action.direction().expect("move action"))
            }
            ActionKind::Do => self.apply_do(idx, tick, exhausted, events),
            ActionKind::PlaceStone | ActionKind::PlacePlant | ActionKind::PlaceTable | ActionKind::PlaceFurnace => {
                self.apply_place(idx, action, tick, events)
            }
            ActionKind::MakeWoodPickaxe | ActionKind::MakeStonePickaxe | ActionKind::MakeIronPickaxe => {
                self.apply_make(idx, action, tick, events)
            }
            ActionKind::Navigate { target } => self.apply_navigate(idx, target, tick, exhausted, events),
            ActionKind::Share { target_agent, item } => {
                let out = self.transfer_item(id, target_agent, item);
                (out.result, out.reason)
            }
        };
        ActionOutcome::new(id, action, result, reason)
    }

    fn apply_move(&mut self, idx: usize, dir: Direction) -> (ActionResult, OutcomeReason) {
        let agent = &mut self.agents[idx];
        agent.facing = dir;
        let target = agent.position.step(dir);
        let free = self
            .grid
            .get(target)
            .map(|m| m.is_walkable() && !self.cows.contains(&target))
            .unwrap_or(false);
        if free {
            agent.position = target;
            (ActionResult::Success, OutcomeReason::Ok)
        } else {
            (ActionResult::Failure, OutcomeReason::Blocked)
        }
    }

    fn apply_do(
        &mut self,
        idx: usize,
        tick: u64,
        exhausted: &mut BTreeSet<Position>,
        events: &mut Vec<Event>,
    ) -> (ActionResult, OutcomeReason) {
        let target = self.agents[idx].position.step(self.agents[idx].facing);
        let facing = self.facing_at(target);
        let Some(recipe) = self.techtree.collect_recipe(facing).cloned() else {
            let reason = if exhausted.contains(&target) {
                OutcomeReason::TargetGone
            } else {
                OutcomeReason::PrereqUnmet
            };
            return (ActionResult::Failure, reason);
        };
        let agent = &mut self.agents[idx];
        if !self
            .techtree
            .unmet_requirements(&agent.inventory, facing, recipe.task)
            .is_empty()
        {
            return (ActionResult::Failure, OutcomeReason::PrereqUnmet);
        }
        for (item, n) in &recipe.consumed {
            agent.inventory.remove(*item, *n);
        }
        match recipe.produces {
            Product::Item(item) => agent.inventory.add(item, 1),
            Product::RestoreFood => agent.vitals.food = Vitals::MAX,
            Product::RestoreDrink => agent.vitals.drink = Vitals::MAX,
            Product::Station(m) => self.grid.set(target, m),
        }
        match facing {
            Facing::Cow => {
                self.cows.remove(&target);
                exhausted.insert(target);
            }
            Facing::Material(m) if m.is_mineral() => {
                self.grid.set(target, Material::Path);
                exhausted.insert(target);
            }
            _ => {}
        }
        unlock(&mut self.agents[idx], recipe.task, tick, events);
        (ActionResult::Success, OutcomeReason::Ok)
    }

    fn apply_place(
        &mut self,
        idx: usize,
        action: ActionKind,
        tick: u64,
        events: &mut Vec<Event>,
    ) -> (ActionResult, OutcomeReason) {
        let agent = &self.agents[idx];
        let target = agent.position.step(agent.facing);
        let facing = self.facing_at(target);
        if !check_prerequisites(&self.techtree, agent, facing, action).is_satisfied() {
            return (ActionResult::Failure, OutcomeReason::PrereqUnmet);
        }
        if self.agents.iter().any(|a| a.alive && a.position == target) {
            return (ActionResult::Failure, OutcomeReason::Blocked);
        }
        let agent = &mut self.agents[idx];
        match action {
            ActionKind::PlaceStone => {
                agent.inventory.remove(Item::Stone, 1);
                self.grid.set(target, Material::Stone);
            }
            ActionKind::PlacePlant => self.grid.set(target, Material::Plant),
            _ => {
                let task = task_for_action(action).expect("place action");
                let recipe = self.techtree.recipe(task).expect("checked").clone();
                for (item, n) in &recipe.consumed {
                    agent.inventory.remove(*item, *n);
                }
                if let Product::Station(m) = recipe.produces {
                    self.grid.set(target, m);
                }
                unlock(agent, task, tick, events);
            }
        }
        (ActionResult::Success, OutcomeReason::Ok)
    }

    fn apply_make(
        &mut self,
        idx: usize,
        action: ActionKind,
        tick: u64,
        events: &mut Vec<Event>,
    ) -> (ActionResult, OutcomeReason) {
        let agent = &self.agents[idx];
        let facing = self.facing_of(agent);
        if !check_prerequisites(&self.techtree, agent, facing, action).is_satisfied() {
            return (ActionResult::Failure, OutcomeReason::PrereqUnmet);
        }
        let task = task_for_action(action).expect("make action");
        let recipe = self.techtree.recipe(task).expect("checked").clone();
        let agent = &mut self.agents[idx];
        for (item, n) in &recipe.consumed {
            agent.inventory.remove(*item, *n);
        }
        if let Product::Item(item) = recipe.produces {
            agent.inventory.add(item, 1);
        }
        unlock(agent, task, tick, events);
        (ActionResult::Success, OutcomeReason::Ok)
    }

    fn apply_navigate(
        &mut self,
        idx: usize,
        target: Material,
        tick: u64,
        exhausted: &mut BTreeSet<Position>,
        events: &mut Vec<Event>,
    ) -> (ActionResult, OutcomeReason) {
        let id = self.agents[idx].id;
        match navigate_step(self, id, target) {
            Err(_) => (ActionResult::Failure, OutcomeReason::Blocked),
            Ok(ActionKind::Do) => {
                let facing = self.facing_of(&self.agents[idx]);
                if self.techtree.collect_recipe(facing).is_none() {
                    // Arrived in front of a non-collectible destination.
                    return (ActionResult::Success, OutcomeReason::Ok);
                }
                self.apply_do(idx, tick, exhausted, events)
            }
            Ok(primitive) => match self.apply_move(idx, primitive.direction().expect("navigator emits moves")) {
                (ActionResult::Success, _) => (ActionResult::InProgress, OutcomeReason::Ok),
                (_, OutcomeReason::Blocked) => {
                    // A turn in place is still progress toward facing the target.
                    (ActionResult::InProgress, OutcomeReason::Ok)
                }
                other => other,
            },
        }
    }

    /// Move one unit of `item` from `giver` to `receiver`.
    pub fn transfer_item(&mut self, giver: AgentId, receiver: AgentId, item: Item) -> ActionOutcome {
        let action = ActionKind::Share {
            target_agent: receiver,
            item,
        };
        let fail = |reason| ActionOutcome::new(giver, action, ActionResult::Failure, reason);
        let Some(g) = self.agent(giver) else {
            return fail(OutcomeReason::Dead);
        };
        if !g.alive {
            return fail(OutcomeReason::Dead);
        }
        let Some(r) = self.agent(receiver) else {
            return fail(OutcomeReason::TargetGone);
        };
        if !r.alive || receiver == giver {
            return fail(OutcomeReason::TargetGone);
        }
        if g.position.manhattan(r.position) > self.config.share_range {
            return fail(OutcomeReason::OutOfRange);
        }
        if !g.inventory.has(item) {
            return fail(OutcomeReason::PrereqUnmet);
        }
        self.agents[giver.index()].inventory.remove(item, 1);
        self.agents[receiver.index()].inventory.add(item, 1);
        ActionOutcome::new(giver, action, ActionResult::Success, OutcomeReason::Ok)
    }

    pub fn terminal_status(&self) -> TerminalStatus {
        terminal_status(self)
    }

    /// SHA-256 over the canonical JSON encoding of the whole state.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world state serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn unlock(agent: &mut AgentState, task: Task, tick: u64, events: &mut Vec<Event>) {
    if let std::collections::btree_map::Entry::Vacant(slot) = agent.achievements.entry(task) {
        slot.insert(tick);
        events.push(Event {
            tick,
            agent: agent.id,
            kind: EventKind::Achievement { task },
        });
    }
}

/// The tech-tree task a place/make action performs.
pub fn task_for_action(action: ActionKind) -> Option<Task> {
    match action {
        ActionKind::PlaceTable => Some(Task::PlaceTable),
        ActionKind::PlaceFurnace => Some(Task::PlaceFurnace),
        ActionKind::MakeWoodPickaxe => Some(Task::MakeWoodPickaxe),
        ActionKind::MakeStonePickaxe => Some(Task::MakeStonePickaxe),
        ActionKind::MakeIronPickaxe => Some(Task::MakeIronPickaxe),
        _ => None,
    }
}

pub fn check_prerequisites(tree: &TechTree, agent: &AgentState, facing: Facing, action: ActionKind) -> PrereqResult {
    let unmet = match action {
        ActionKind::Do => match tree.collect_recipe(facing) {
            Some(r) => tree.unmet_requirements(&agent.inventory, facing, r.task),
            None => vec![Requirement::Collectible],
        },
        ActionKind::PlaceStone => techtree::place_stone_unmet(&agent.inventory, facing),
        ActionKind::PlacePlant => techtree::place_plant_unmet(facing),
        other => match task_for_action(other) {
            Some(task) => tree.unmet_requirements(&agent.inventory, facing, task),
            None => Vec::new(),
        },
    };
    if unmet.is_empty() {
        PrereqResult::Satisfied
    } else {
        PrereqResult::Unmet(unmet)
    }
}

/// Apply one tick of vital dynamics; `tick` is the tick being completed.
pub fn update_vitals(agent: &mut AgentState, tick: u64, config: &EpisodeConfig) {
    if !agent.alive {
        return;
    }
    let on = |period: u64| period > 0 && tick.is_multiple_of(period);
    let v = &mut agent.vitals;
    if on(config.food_period) {
        v.food = v.food.saturating_sub(1);
    }
    if on(config.drink_period) {
        v.drink = v.drink.saturating_sub(1);
    }
    if agent.sleeping {
        v.energy = (v.energy + 1).min(Vitals::MAX);
    } else if on(config.energy_period) {
        v.energy = v.energy.saturating_sub(1);
    }
    if v.food == 0 || v.drink == 0 || v.energy == 0 {
        v.health = v.health.saturating_sub(1);
    } else if on(config.regen_period) {
        v.health = (v.health + 1).min(Vitals::MAX);
    }
    if agent.sleeping && v.energy == Vitals::MAX {
        agent.sleeping = false;
    }
    if v.health == 0 {
        agent.alive = false;
        agent.sleeping = false;
    }
}

pub fn terminal_status(state: &WorldState) -> TerminalStatus {
    if state.agents.iter().any(|a| a.inventory.has(Item::Diamond)) {
        TerminalStatus::Success(state.tick)
    } else if state.agents.iter().all(|a| !a.alive) {
        TerminalStatus::AllDead
    } else if state.tick >= state.config.max_ticks {
        TerminalStatus::Timeout
    } else {
        TerminalStatus::Running
    }
}
