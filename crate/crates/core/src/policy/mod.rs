//! The per-agent decision loop.
//!
//! Each tick an agent observes, assembles working memory, renders a prompt
//! bundle, asks a [`PlannerBackend`] for a [`ResponseEvent`], extracts the
//! action and composes the message it broadcasts. After the world resolves
//! the action, [`AgentRuntime::finish`] folds the experience into the
//! agent's knowledge graph.

mod remote;
mod scripted;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV, MAX_ATTEMPTS};
pub use scripted::{ScriptedBackend, SURVIVAL_THRESHOLD};

use crate::comms::{compose_message, help_target, render_inbox, HelpTargets, Message};
use crate::memory::{assemble_stwm, Experience, KnowledgeGraph, MemoryError, PostStage, PreStage, WorkingMemory};
use crate::schema::{
    self, ActionType, Collaboration, Goal, GoalType, InventoryItem, InventoryItemsCount, LongTermGoalType,
    MaterialType, NavigationDestination, NextAction, Reflection, ResponseEvent, ResultType, ShareableItem,
};
use crate::techtree::{Task, TechTree};
use crate::world::{
    ActionKind, ActionOutcome, AgentId, Event, EventKind, Material, Observation, WorldError, WorldState,
};

/// Entries kept by the basic baseline's action log.
pub const ACTION_LOG_LEN: usize = 20;

/// Inbox lines allowed in a prompt.
pub const INBOX_LINE_BUDGET: usize = 60;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("no valid response after {attempts} attempts: {last_error}")]
    Exhausted { attempts: u32, last_error: String },
}

/// Which memory and communication features an agent uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// A rolling action log only.
    Basic,
    /// Knowledge-graph memory, no messages.
    Mem,
    /// Knowledge-graph memory and structured messages.
    MemComm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Basic, BaselineKind::Mem, BaselineKind::MemComm];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Basic => "basic",
            BaselineKind::Mem => "mem",
            BaselineKind::MemComm => "mem_comm",
        }
    }

    pub fn communicates(self) -> bool {
        self == BaselineKind::MemComm
    }

    pub fn uses_graph(self) -> bool {
        self != BaselineKind::Basic
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown baseline `{s}` (expected basic, mem or mem_comm)"))
    }
}

/// One line of the basic baseline's memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    pub action: ActionKind,
    pub result: crate::world::ActionResult,
    pub reason: crate::world::OutcomeReason,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let result = serde_json::to_value(self.result).ok();
        let reason = serde_json::to_value(self.reason).ok();
        write!(
            f,
            "t{}: {} -> {} ({})",
            self.tick,
            self.action,
            result.as_ref().and_then(|v| v.as_str()).unwrap_or("?"),
            reason.as_ref().and_then(|v| v.as_str()).unwrap_or("?")
        )
    }
}

/// The most recent actions and their outcomes, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLog {
    entries: VecDeque<LogEntry>,
}

impl ActionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LogEntry) {
        if self.entries.len() == ACTION_LOG_LEN {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &LogEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.back()
    }

    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "no actions yet\n".to_string();
        }
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Fixed description of the game, identical on every tick.
const ENVIRONMENT_TEXT: &str = "\
You control one agent on a square map made of cells. Other agents share the map \
and may be on your team. You see a small rectangle around yourself; '@' marks \
your own cell and digits mark other agents.

Every tick you pick exactly one action. Moving into a free cell walks there; \
moving toward a blocked cell only turns you to face it. `do` works on the cell \
you face: it gathers wood from trees, drinks from water, eats cows and mines \
stone, coal, iron and diamond when you hold the right pickaxe. Tables and \
furnaces are placed on grass in front of you and crafting happens while you \
face them. The Navigator walks you toward the named material one step per \
tick and acts on it when you arrive. `share` hands one item to a nearby agent.

You have health, food, drink and energy, each from 0 to 9. Food and drink drop \
over time and energy drops while awake. When any of them hits 0 you lose \
health, and at health 0 you are out of the game. Eat cows, drink water and \
sleep to recover. Walking into lava is fatal.

The episode ends as soon as any agent holds a diamond.";

/// The full environment description: fixed prose plus the recipe table.
pub fn environment_description(tree: &TechTree) -> String {
    let mut out = String::from(ENVIRONMENT_TEXT);
    out.push_str("\n\nRecipes (task: requirements):\n");
    for task in Task::ALL {
        out.push_str(&format!("- {task}: {}\n", tree.describe(task)));
    }
    out.push_str("\nUpgrade tools in order: wood pickaxe, stone pickaxe, iron pickaxe, then dig for diamond.\n");
    out
}

/// The role line for `agent` in a team of `n`.
pub fn role_directive(agent: AgentId, n: u32, baseline: BaselineKind) -> String {
    if !baseline.communicates() || n < 2 {
        return "work alone; collect a diamond as fast as possible".to_string();
    }
    let Ok(role) = help_target(agent, n) else {
        return "work alone; collect a diamond as fast as possible".to_string();
    };
    if role.targets.is_empty() {
        return "lead the team; pursue the diamond and ask teammates for missing items".to_string();
    }
    let parts: Vec<String> = role
        .targets
        .iter()
        .map(|t| {
            if t.0 == 1 {
                "assist leader 1".to_string()
            } else {
                format!("assist agent {t}")
            }
        })
        .collect();
    let mut line = parts.join("; ");
    if role.diamond_seeker {
        line.push_str("; once the team owns a stone pickaxe, go for the diamond yourself");
    }
    line
}

/// Everything sent to a planner for one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub environment_description: String,
    pub working_memory_rendering: String,
    pub inbox_rendering: String,
    pub role_directive: String,
    pub schema: String,
}

impl PromptBundle {
    /// System message text.
    pub fn system_text(&self) -> String {
        format!(
            "{}\n\nReply with one JSON object that satisfies this schema:\n{}\n",
            self.environment_description, self.schema
        )
    }

    /// User message text.
    pub fn user_text(&self) -> String {
        format!(
            "# Role\n{}\n\n# Memory\n{}\n# Messages\n{}",
            self.role_directive, self.working_memory_rendering, self.inbox_rendering
        )
    }
}

/// Assemble the prompt bundle. Pure text assembly.
pub fn build_prompt(
    agent: AgentId,
    stwm: &WorkingMemory,
    log: &ActionLog,
    inbox: &[Message],
    baseline: BaselineKind,
    n: u32,
    tree: &TechTree,
) -> PromptBundle {
    let working_memory_rendering = match baseline {
        BaselineKind::Basic => format!(
            "## Observation\n{}## Status\n{}## Recent actions\n{}",
            stwm.sensory,
            stwm.episodic,
            log.render()
        ),
        _ => stwm.to_string(),
    };
    let inbox_rendering = if baseline.communicates() {
        render_inbox(inbox, INBOX_LINE_BUDGET)
    } else {
        "communication disabled\n".to_string()
    };
    PromptBundle {
        environment_description: environment_description(tree),
        working_memory_rendering,
        inbox_rendering,
        role_directive: role_directive(agent, n, baseline),
        schema: schema::schema_document(),
    }
}

/// What a backend sees for one decision.
pub struct DecisionRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub stwm: &'a WorkingMemory,
    pub observation: &'a Observation,
    /// Read-only snapshot used for navigator queries.
    pub world: &'a WorldState,
    pub graph: &'a KnowledgeGraph,
    pub log: &'a ActionLog,
    pub last_outcome: Option<&'a ActionOutcome>,
    pub baseline: BaselineKind,
    pub role: &'a HelpTargets,
    pub episode: i64,
}

impl DecisionRequest<'_> {
    pub fn inbox(&self) -> &[Message] {
        if self.baseline.communicates() {
            &self.observation.inbox
        } else {
            &[]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub event: ResponseEvent,
    /// Failed attempts before the accepted one.
    pub retries: u32,
}

/// A planner that turns a prompt into a structured response.
pub trait PlannerBackend: Send + Sync {
    fn name(&self) -> &str;

    /// True when equal requests always give equal responses.
    fn is_deterministic(&self) -> bool;

    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, PolicyError>;
}

/// Per-agent state carried across ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRuntime {
    pub id: AgentId,
    pub graph: KnowledgeGraph,
    pub log: ActionLog,
    pub last_outcome: Option<ActionOutcome>,
}

impl AgentRuntime {
    pub fn new(id: AgentId) -> Self {
        Self {
            id,
            graph: KnowledgeGraph::new(),
            log: ActionLog::new(),
            last_outcome: None,
        }
    }

    /// Record the resolved outcome: consolidate the experience (graph
    /// baselines) and append to the action log.
    pub fn finish(
        &mut self,
        decision: TickDecision,
        outcome: ActionOutcome,
        events: &[Event],
        baseline: BaselineKind,
    ) -> Result<(), MemoryError> {
        let unlocked: Vec<Task> = events
            .iter()
            .filter(|e| e.agent == self.id)
            .filter_map(|e| match e.kind {
                EventKind::Achievement { task } => Some(task),
                _ => None,
            })
            .collect();
        self.log.push(LogEntry {
            tick: decision.experience.tick,
            action: outcome.action,
            result: outcome.result,
            reason: outcome.reason,
        });
        if baseline.uses_graph() {
            let mut experience = decision.experience;
            experience.post_stage = Some(PostStage {
                response: decision.response,
                outcome: outcome.clone(),
                unlocked,
            });
            self.graph.consolidate(experience)?;
        }
        self.last_outcome = Some(outcome);
        Ok(())
    }
}

/// Observation and prompt prepared for one agent.
#[derive(Debug, Clone)]
pub struct TickPlan {
    pub observation: Observation,
    pub stwm: WorkingMemory,
    pub bundle: PromptBundle,
}

/// The decision for one agent and everything derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickDecision {
    pub agent: AgentId,
    pub action: ActionKind,
    pub response: ResponseEvent,
    pub message: Message,
    /// False when the baseline does not communicate.
    pub deliver: bool,
    /// Pre-stage only; completed by [`AgentRuntime::finish`].
    pub experience: Experience,
    pub retries: u32,
    /// Set when the backend failed and a noop was substituted.
    pub failure: Option<String>,
}

/// Observe and build the prompt. Mutates only the agent's discovered cells.
pub fn prepare_tick(
    world: &mut WorldState,
    runtime: &AgentRuntime,
    inbox: Vec<Message>,
    baseline: BaselineKind,
) -> Result<TickPlan, PolicyError> {
    let inbox = if baseline.communicates() { inbox } else { Vec::new() };
    let observation = world.observe(runtime.id, inbox)?;
    let stwm = assemble_stwm(&observation, &world.techtree, &runtime.graph, world.config.share_range);
    let bundle = build_prompt(
        runtime.id,
        &stwm,
        &runtime.log,
        &observation.inbox,
        baseline,
        world.config.n_agents,
        &world.techtree,
    );
    Ok(TickPlan {
        observation,
        stwm,
        bundle,
    })
}

/// Ask the backend and derive the action and message. Backend failures and
/// unusable responses become a recorded noop.
pub fn decide_tick(
    world: &WorldState,
    runtime: &AgentRuntime,
    plan: TickPlan,
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
    episode: i64,
) -> TickDecision {
    let n = world.config.n_agents;
    let role = help_target(runtime.id, n).unwrap_or(HelpTargets {
        targets: Vec::new(),
        diamond_seeker: false,
    });
    let request = DecisionRequest {
        bundle: &plan.bundle,
        stwm: &plan.stwm,
        observation: &plan.observation,
        world,
        graph: &runtime.graph,
        log: &runtime.log,
        last_outcome: runtime.last_outcome.as_ref(),
        baseline,
        role: &role,
        episode,
    };
    let (response, action, retries, failure) = match backend.decide(&request) {
        Ok(decision) => match schema::extract_action_for(&decision.event, runtime.id, n) {
            Ok(action) => (decision.event, action, decision.retries, None),
            Err(e) => {
                log::warn!("agent {}: unusable response: {e}", runtime.id);
                let reason = format!("unusable response: {e}");
                (
                    fallback_response(&request, &reason),
                    ActionKind::Noop,
                    decision.retries,
                    Some(reason),
                )
            }
        },
        Err(e) => {
            log::warn!("agent {}: backend failure: {e}", runtime.id);
            let reason = format!("backend failure: {e}");
            (fallback_response(&request, &reason), ActionKind::Noop, 0, Some(reason))
        }
    };
    let message = compose_message(&plan.observation, &response, &world.techtree);
    TickDecision {
        agent: runtime.id,
        action,
        message,
        deliver: baseline.communicates(),
        experience: Experience {
            agent: runtime.id,
            tick: plan.observation.tick,
            pre_stage: PreStage::from_observation(&plan.observation),
            post_stage: None,
        },
        response,
        retries,
        failure,
    }
}

/// Observe, prompt, decide and compose for one living agent.
pub fn run_tick(
    world: &mut WorldState,
    runtime: &AgentRuntime,
    inbox: Vec<Message>,
    backend: &dyn PlannerBackend,
    baseline: BaselineKind,
    episode: i64,
) -> Result<TickDecision, PolicyError> {
    let plan = prepare_tick(world, runtime, inbox, baseline)?;
    Ok(decide_tick(world, runtime, plan, backend, baseline, episode))
}

/// Inventory as wire entries, skipping empty slots.
pub(crate) fn inventory_entries(observation: &Observation) -> Vec<InventoryItemsCount> {
    observation
        .inventory
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(item, n)| InventoryItemsCount {
            item: InventoryItem::from_item(item),
            count: i64::from(n),
        })
        .collect()
}

/// Distinct visible materials as wire values.
pub(crate) fn vision(observation: &Observation) -> Vec<MaterialType> {
    let mut out: Vec<MaterialType> = Vec::new();
    for (_, m) in observation.window.known_cells() {
        let v = MaterialType::from_material(m);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Wire form of the previous outcome.
pub(crate) fn last_action_fields(last: Option<&ActionOutcome>) -> (ActionType, ResultType) {
    match last {
        None => (ActionType::Noop, ResultType::Success),
        Some(o) => {
            let result = match o.result {
                crate::world::ActionResult::Success => ResultType::Success,
                crate::world::ActionResult::Failure => ResultType::Failure,
                crate::world::ActionResult::InProgress => ResultType::InProgress,
            };
            (ActionType::from_action(&o.action), result)
        }
    }
}

/// A schema-valid noop response used when the backend gives nothing usable.
pub(crate) fn fallback_response(request: &DecisionRequest<'_>, reason: &str) -> ResponseEvent {
    let obs = request.observation;
    let (last_action, last_result) = last_action_fields(request.last_outcome);
    let current_goal = request
        .graph
        .current()
        .map(|g| g.goal)
        .unwrap_or(GoalType::CollectWood);
    ResponseEvent {
        episode_number: request.episode,
        timestep: obs.tick as i64,
        past_events: "none".to_string(),
        current_facing_direction: MaterialType::from_facing(obs.facing),
        current_inventory: inventory_entries(obs),
        collaboration: Collaboration::none(),
        reflection: Reflection {
            vision: vision(obs),
            last_action,
            last_action_result: last_result,
            last_action_result_reflection: "planner unavailable".to_string(),
            last_action_repeated_reflection: "none".to_string(),
        },
        goal: Goal {
            ultimate_goal: LongTermGoalType::CollectDiamond,
            long_term_goal: LongTermGoalType::CollectDiamond,
            long_term_goal_subgoals: "unknown".to_string(),
            long_term_goal_progress: current_goal,
            long_term_goal_status: ResultType::InProgress,
            current_goal,
            current_goal_reason: reason.to_string(),
            current_goal_status: ResultType::Failure,
        },
        action: NextAction {
            next_action: ActionType::Noop,
            next_action_reason: reason.to_string(),
            next_action_prerequisites_status: ResultType::Success,
            next_action_prerequisites: "none".to_string(),
            final_next_action: ActionType::Noop,
            final_next_action_reason: "fallback after a planner failure".to_string(),
            final_target_material_to_collect: NavigationDestination::NotApplicable,
            final_target_material_to_share: ShareableItem::NotApplicable,
            final_target_agent_id: -1,
        },
        summary: String::new(),
    }
}

/// Wire destination for a material, if it is one.
pub(crate) fn destination(m: Material) -> NavigationDestination {
    NavigationDestination::from_material(m)
}

#[cfg(test)]
mod tests;
