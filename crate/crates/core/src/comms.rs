//! Structured messages between agents.
//!
//! Each tick every living agent composes one [`Message`] from its own
//! observation and planner response. Messages are delivered to every other
//! agent on the following tick, ordered so that the agents a recipient is
//! expected to help come first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Collaboration, GoalType, ResponseEvent};
use crate::techtree::TechTree;
use crate::world::{AgentId, Inventory, Item, Observation, Position, Vitals, Window};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommsError {
    #[error("agent {agent} is outside 1..={n}")]
    OutOfRange { agent: u32, n: u32 },
    #[error("agent {0} sent more than one message this tick")]
    DuplicateSender(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub vitals: Vitals,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistanceRequest {
    pub item: Item,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    pub tick: u64,
    pub status: Status,
    /// Nonzero holdings only.
    pub resources: Inventory,
    pub short_term_goal: GoalType,
    pub assistance_request: Option<AssistanceRequest>,
    pub collaboration: Collaboration,
    /// The sender's current window, so teammates learn the terrain it sees.
    pub view: Window,
}

impl Message {
    pub fn requests(&self, item: Item) -> bool {
        self.assistance_request.map(|r| r.item == item).unwrap_or(false)
    }
}

/// Build the message for this tick from the sender's own observation and response.
pub fn compose_message(observation: &Observation, response: &ResponseEvent, tree: &TechTree) -> Message {
    let goal = response.goal.current_goal;
    let assistance_request = goal.task().and_then(|task| {
        tree.missing_items(&observation.inventory, task)
            .into_iter()
            .next()
            .map(|(item, quantity)| AssistanceRequest { item, quantity })
    });
    Message {
        sender: observation.agent,
        tick: observation.tick,
        status: Status {
            vitals: observation.vitals,
            position: observation.position,
        },
        resources: observation.inventory.iter().filter(|(_, n)| *n > 0).collect(),
        short_term_goal: goal,
        assistance_request,
        collaboration: response.collaboration.clone(),
        view: observation.window.clone(),
    }
}

/// Who an agent attends to first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelpTargets {
    /// Agents to help, highest priority first.
    pub targets: Vec<AgentId>,
    /// The last agent in a team of two or more goes for the diamond.
    pub diamond_seeker: bool,
}

/// Agent `i` helps `i-1` and then the leader; the leader helps nobody.
pub fn help_target(agent: AgentId, n: u32) -> Result<HelpTargets, CommsError> {
    if agent.0 < 1 || agent.0 > n {
        return Err(CommsError::OutOfRange { agent: agent.0, n });
    }
    let mut targets = Vec::new();
    if agent.0 > 1 {
        targets.push(AgentId(agent.0 - 1));
        if agent.0 - 1 != 1 {
            targets.push(AgentId(1));
        }
    }
    Ok(HelpTargets {
        targets,
        diamond_seeker: n >= 2 && agent.0 == n,
    })
}

/// Broadcast every message to every other agent in `1..=n`.
pub fn deliver(messages: &[Message], n: u32) -> Result<BTreeMap<AgentId, Vec<Message>>, CommsError> {
    let mut by_sender: BTreeMap<AgentId, &Message> = BTreeMap::new();
    for m in messages {
        if m.sender.0 < 1 || m.sender.0 > n {
            return Err(CommsError::OutOfRange { agent: m.sender.0, n });
        }
        if by_sender.insert(m.sender, m).is_some() {
            return Err(CommsError::DuplicateSender(m.sender));
        }
    }
    let mut inboxes = BTreeMap::new();
    for r in 1..=n {
        let recipient = AgentId(r);
        let priority = help_target(recipient, n)?.targets;
        let mut inbox: Vec<Message> = by_sender
            .values()
            .filter(|m| m.sender != recipient)
            .map(|m| (*m).clone())
            .collect();
        inbox.sort_by_key(|m| {
            let rank = priority.iter().position(|p| *p == m.sender).unwrap_or(priority.len());
            (rank, m.sender)
        });
        inboxes.insert(recipient, inbox);
    }
    Ok(inboxes)
}

/// Lines [`render_inbox`] spends per message.
pub const LINES_PER_MESSAGE: usize = 7;

fn render_message(m: &Message) -> Vec<String> {
    let request = match m.assistance_request {
        Some(r) => format!("{} x{}", r.item, r.quantity),
        None => "none".to_string(),
    };
    let c = &m.collaboration;
    vec![
        format!("from: agent {} (tick {})", m.sender, m.tick),
        format!("status: {} at {}", m.status.vitals, m.status.position),
        format!("resources: {}", m.resources),
        format!("goal: {}", m.short_term_goal),
        format!("request: {request}"),
        format!(
            "helping: {} needs {} via {} (can help now: {})",
            c.target_agent_to_help, c.target_agent_need, c.help_method, c.can_help_now
        ),
        format!(
            "helped_by: {} via {}; plan change: {}",
            c.being_helped_by_agent, c.help_method_by_agent, c.change_in_plan
        ),
    ]
}

/// Prompt text for an inbox, at most `budget` lines. Messages that do not fit
/// are dropped from the end (lowest priority) and counted in a final line.
pub fn render_inbox(inbox: &[Message], budget: usize) -> String {
    if inbox.is_empty() {
        return "no messages\n".to_string();
    }
    let total = inbox.len() * LINES_PER_MESSAGE;
    let fit = if total <= budget {
        inbox.len()
    } else {
        budget.saturating_sub(1) / LINES_PER_MESSAGE
    };
    let mut out = String::new();
    for m in &inbox[..fit] {
        for line in render_message(m) {
            out.push_str(&line);
            out.push('\n');
        }
    }
    let omitted = inbox.len() - fit;
    if omitted > 0 {
        out.push_str(&format!("{omitted} messages omitted\n"));
    }
    out
}
