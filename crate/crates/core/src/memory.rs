//! Per-agent memory: the experience pool and a goal-oriented knowledge graph.
//!
//! Every tick an agent produces an [`Experience`]: what it saw before
//! deciding (the pre-stage) and what it decided and what happened (the
//! post-stage). [`KnowledgeGraph::consolidate`] folds experiences into a
//! three-level graph:
//!
//! * step nodes (E), one per experience,
//! * goal nodes (G), one per run of consecutive ticks with the same goal,
//!   chained in order,
//! * long-term goal nodes (LTG), grouping goal nodes by long-term goal.
//!
//! [`assemble_stwm`] reads the graph back into the working memory shown to
//! the planner.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{GoalType, LongTermGoalType, ResponseEvent};
use crate::techtree::{Task, TechTree};
use crate::world::{render_window, ActionOutcome, AgentId, Facing, Inventory, Material, Observation, Position, Vitals};

/// Recent experiences shown in retrospection.
pub const RETROSPECT_WINDOW: usize = 5;
/// Goal-chain entries shown in retrospection.
const CHAIN_TAIL: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("malformed experience: {0}")]
    MalformedExperience(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("graph document is not valid: {0}")]
    Document(String),
    #[error("unsupported export format `{0}` (expected dot or json)")]
    UnsupportedFormat(String),
}

/// What the agent knew before deciding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreStage {
    pub position: Position,
    pub facing: Facing,
    pub vitals: Vitals,
    pub inventory: Inventory,
    /// Distinct materials in the observation window.
    pub visible: Vec<Material>,
}

impl PreStage {
    pub fn from_observation(obs: &Observation) -> Self {
        let mut visible: Vec<Material> = obs.window.known_cells().map(|(_, m)| m).collect();
        visible.sort();
        visible.dedup();
        Self {
            position: obs.position,
            facing: obs.facing,
            vitals: obs.vitals,
            inventory: obs.inventory.clone(),
            visible,
        }
    }
}

/// The planner's response and the resolved outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostStage {
    pub response: ResponseEvent,
    pub outcome: ActionOutcome,
    /// Tasks first completed by this action.
    pub unlocked: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experience {
    pub agent: AgentId,
    pub tick: u64,
    pub pre_stage: PreStage,
    pub post_stage: Option<PostStage>,
}

impl Experience {
    /// One-line digest used in retrospection and node labels.
    pub fn digest(&self) -> String {
        let pre = &self.pre_stage;
        match &self.post_stage {
            None => format!("t{}: at {} facing {} (pending)", self.tick, pre.position, pre.facing),
            Some(post) => {
                let o = &post.outcome;
                let mut line = format!(
                    "t{}: {} -> {} ({}) at {} facing {}; goal {}",
                    self.tick,
                    o.action,
                    enum_name(&o.result),
                    enum_name(&o.reason),
                    pre.position,
                    pre.facing,
                    post.response.goal.current_goal
                );
                if !post.unlocked.is_empty() {
                    let names: Vec<&str> = post.unlocked.iter().map(|t| t.name()).collect();
                    line.push_str(&format!("; unlocked {}", names.join(", ")));
                }
                line
            }
        }
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepNode {
    pub id: usize,
    /// Index into the experience pool.
    pub experience: usize,
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalNode {
    pub id: usize,
    pub goal: GoalType,
    pub predecessor: Option<usize>,
    pub ltg: usize,
    pub summary: String,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTermGoalNode {
    pub id: usize,
    pub long_term_goal: LongTermGoalType,
    pub goals: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub experiences: Vec<Experience>,
    pub steps: Vec<StepNode>,
    pub goals: Vec<GoalNode>,
    pub ltgs: Vec<LongTermGoalNode>,
    pub current_goal: Option<usize>,
    /// First-completion tick per task, from consolidated experiences.
    pub achievements: BTreeMap<Task, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(MemoryError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn current(&self) -> Option<&GoalNode> {
        self.current_goal.map(|g| &self.goals[g])
    }

    /// Goal nodes from first to current.
    pub fn chain(&self) -> Vec<&GoalNode> {
        let mut out = Vec::new();
        let mut cursor = self.current_goal;
        while let Some(g) = cursor {
            out.push(&self.goals[g]);
            cursor = self.goals[g].predecessor;
        }
        out.reverse();
        out
    }

    /// Fold one finished experience into the graph. On error the graph is unchanged.
    pub fn consolidate(&mut self, experience: Experience) -> Result<(), MemoryError> {
        let Some(post) = &experience.post_stage else {
            return Err(MemoryError::MalformedExperience(format!(
                "experience at tick {} has no post-stage",
                experience.tick
            )));
        };
        if let Some(last) = self.experiences.last() {
            if experience.tick <= last.tick {
                return Err(MemoryError::MalformedExperience(format!(
                    "tick {} does not follow tick {}",
                    experience.tick, last.tick
                )));
            }
            if experience.agent != last.agent {
                return Err(MemoryError::MalformedExperience(format!(
                    "experience of agent {} in the graph of agent {}",
                    experience.agent, last.agent
                )));
            }
        }
        let goal = post.response.goal.current_goal;
        let long_term = post.response.goal.long_term_goal;
        let summary = post.response.summary.trim().to_string();
        for task in &post.unlocked {
            self.achievements.entry(*task).or_insert(experience.tick);
        }

        let needs_goal = self.current().map(|g| g.goal != goal).unwrap_or(true);
        if needs_goal {
            let ltg = match self.ltgs.iter().position(|l| l.long_term_goal == long_term) {
                Some(i) => i,
                None => {
                    self.ltgs.push(LongTermGoalNode {
                        id: self.ltgs.len(),
                        long_term_goal: long_term,
                        goals: Vec::new(),
                    });
                    self.ltgs.len() - 1
                }
            };
            let id = self.goals.len();
            self.goals.push(GoalNode {
                id,
                goal,
                predecessor: self.current_goal,
                ltg,
                summary: String::new(),
                steps: Vec::new(),
            });
            self.ltgs[ltg].goals.push(id);
            self.current_goal = Some(id);
        }
        let g = self.current_goal.expect("a goal node exists");
        let step = StepNode {
            id: self.steps.len(),
            experience: self.experiences.len(),
            goal: g,
        };
        self.goals[g].steps.push(step.id);
        self.steps.push(step);
        self.experiences.push(experience);
        self.goals[g].summary = if summary.is_empty() {
            self.template_summary()
        } else {
            summary
        };
        Ok(())
    }

    fn template_summary(&self) -> String {
        let current = self.current().expect("called after a goal exists");
        let ltg = self.ltgs[current.ltg].long_term_goal;
        let past: Vec<&str> = self
            .chain()
            .iter()
            .rev()
            .skip(1)
            .take(3)
            .map(|g| g.goal.as_str())
            .collect();
        let recent: Vec<String> = self
            .experiences
            .iter()
            .rev()
            .take(2)
            .map(Experience::digest)
            .collect();
        format!(
            "Long-term goal {ltg}; current goal {}; past goals {}; recent: {}",
            current.goal,
            if past.is_empty() { "none".to_string() } else { past.join(", ") },
            recent.join(" | ")
        )
    }

    /// The retrospection block: recent events, achievements, goals, progress
    /// and the current goal's summary.
    pub fn retrospect(&self, k: usize) -> String {
        if self.is_empty() {
            return "Retrospection: no prior experience.\n".to_string();
        }
        let mut out = String::from("Recent events:\n");
        let start = self.experiences.len().saturating_sub(k);
        for e in &self.experiences[start..] {
            out.push_str("- ");
            out.push_str(&e.digest());
            out.push('\n');
        }
        out.push_str("Achievements: ");
        if self.achievements.is_empty() {
            out.push_str("none");
        } else {
            let parts: Vec<String> = self.achievements.iter().map(|(t, tick)| format!("{t}@{tick}")).collect();
            out.push_str(&parts.join(", "));
        }
        out.push('\n');
        let chain = self.chain();
        let hidden = chain.len().saturating_sub(CHAIN_TAIL);
        let mut names: Vec<String> = chain[hidden..].iter().map(|g| g.goal.to_string()).collect();
        if let Some(last) = names.last_mut() {
            last.push_str(" (current)");
        }
        out.push_str("Goals: ");
        if hidden > 0 {
            out.push_str(&format!("[{hidden} earlier] -> "));
        }
        out.push_str(&names.join(" -> "));
        out.push('\n');
        out.push_str(&format!("Progress: {} completed, 1 current\n", chain.len() - 1));
        out.push_str(&format!(
            "Summary: {}\n",
            self.current().map(|g| g.summary.as_str()).unwrap_or("")
        ));
        out
    }

    /// SHA-256 of the canonical JSON export.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.export(ExportFormat::Json).as_bytes()))
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => serde_json::to_string_pretty(self).expect("graph serializes") + "\n",
            ExportFormat::Dot => self.to_dot(),
        }
    }

    fn to_dot(&self) -> String {
        let mut out = String::from("digraph knowledge_graph {\n  rankdir=BT;\n  node [style=filled, fontcolor=white];\n");
        for l in &self.ltgs {
            out.push_str(&format!(
                "  L{} [label=\"LTG {}\", fillcolor=red, class=long_term_goal];\n",
                l.id, l.long_term_goal
            ));
        }
        for g in &self.goals {
            out.push_str(&format!(
                "  G{} [label=\"G{} {}\", fillcolor=green, class=goal];\n",
                g.id, g.id, g.goal
            ));
        }
        for s in &self.steps {
            let label = self.experiences[s.experience].digest().replace('"', "'");
            out.push_str(&format!("  E{} [label=\"{label}\", fillcolor=blue, class=step];\n", s.id));
        }
        for s in &self.steps {
            out.push_str(&format!("  E{} -> G{};\n", s.id, s.goal));
        }
        for g in &self.goals {
            out.push_str(&format!("  G{} -> L{};\n", g.id, g.ltg));
            if let Some(p) = g.predecessor {
                out.push_str(&format!("  G{p} -> G{};\n", g.id));
            }
        }
        out.push_str("}\n");
        out
    }

    /// Load a JSON export and check every structural invariant.
    pub fn import(document: &str) -> Result<Self, MemoryError> {
        let graph: KnowledgeGraph =
            serde_json::from_str(document).map_err(|e| MemoryError::Document(e.to_string()))?;
        graph.check_invariants()?;
        Ok(graph)
    }

    /// Every step has one goal parent, goals form one chain, every goal has
    /// one long-term goal, and node counts match the experience pool.
    pub fn check_invariants(&self) -> Result<(), MemoryError> {
        let bad = |msg: String| Err(MemoryError::Invariant(msg));
        if self.steps.len() != self.experiences.len() {
            return bad(format!(
                "node count: {} step nodes for {} experiences",
                self.steps.len(),
                self.experiences.len()
            ));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.id != i || s.experience != i {
                return bad(format!("node count: step node {i} is out of order"));
            }
            if self.experiences[i].post_stage.is_none() {
                return bad(format!("step node E{i} holds an experience without post-stage"));
            }
            if s.goal >= self.goals.len() {
                return bad(format!("E{i} lacks a goal parent (G{} does not exist)", s.goal));
            }
            let parents = self.goals.iter().filter(|g| g.steps.contains(&i)).count();
            if parents != 1 || !self.goals[s.goal].steps.contains(&i) {
                return bad(format!("E{i} must have exactly one goal parent, found {parents}"));
            }
        }
        for w in self.experiences.windows(2) {
            if w[1].tick <= w[0].tick {
                return bad(format!("experience ticks not increasing at tick {}", w[1].tick));
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            if g.id != i {
                return bad(format!("goal node {i} is out of order"));
            }
            if g.ltg >= self.ltgs.len() {
                return bad(format!("G{i} has no long-term goal (L{} does not exist)", g.ltg));
            }
            let owners = self.ltgs.iter().filter(|l| l.goals.contains(&i)).count();
            if owners != 1 || !self.ltgs[g.ltg].goals.contains(&i) {
                return bad(format!("G{i} must belong to exactly one long-term goal, found {owners}"));
            }
            if g.steps.iter().any(|s| *s >= self.steps.len() || self.steps[*s].goal != i) {
                return bad(format!("G{i} lists a step that does not point back to it"));
            }
            if g.steps.is_empty() {
                return bad(format!("G{i} has no step nodes"));
            }
            if g.summary.is_empty() {
                return bad(format!("G{i} has an empty summary"));
            }
        }
        for (i, l) in self.ltgs.iter().enumerate() {
            if l.id != i {
                return bad(format!("long-term goal node {i} is out of order"));
            }
            if l.goals.iter().any(|g| *g >= self.goals.len() || self.goals[*g].ltg != i) {
                return bad(format!("L{i} lists a goal that does not point back to it"));
            }
        }
        // Single chain: goal i's predecessor is i-1, the first has none.
        let roots = self.goals.iter().filter(|g| g.predecessor.is_none()).count();
        if !self.goals.is_empty() && roots != 1 {
            return bad(format!("goal nodes must form a single chain, found {roots} chains"));
        }
        for (i, g) in self.goals.iter().enumerate() {
            let expected = i.checked_sub(1);
            if g.predecessor != expected {
                return bad(format!(
                    "goal nodes must form a single chain: G{i} follows {:?}",
                    g.predecessor
                ));
            }
        }
        match (self.goals.len(), self.current_goal) {
            (0, None) => {}
            (n, Some(c)) if c + 1 == n => {}
            (_, c) => return bad(format!("current goal {c:?} is not the end of the chain")),
        }
        Ok(())
    }
}

/// The planner's per-tick working memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub sensory: String,
    pub episodic: String,
    pub feedback: Vec<String>,
    pub retrospection: String,
}

impl fmt::Display for WorkingMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "## Observation")?;
        f.write_str(&self.sensory)?;
        writeln!(f, "## Status")?;
        f.write_str(&self.episodic)?;
        writeln!(f, "## Feedback")?;
        for line in &self.feedback {
            writeln!(f, "{line}")?;
        }
        writeln!(f, "## Retrospection")?;
        f.write_str(&self.retrospection)
    }
}

/// Build working memory from the current observation and the graph. Reads only.
pub fn assemble_stwm(observation: &Observation, tree: &TechTree, graph: &KnowledgeGraph, share_range: u32) -> WorkingMemory {
    let mut sensory = render_window(
        &observation.window,
        observation.position,
        &observation.agents_in_view,
        &observation.cows_in_view,
    );
    let mut visible: Vec<Material> = observation.window.known_cells().map(|(_, m)| m).collect();
    visible.sort();
    visible.dedup();
    let names: Vec<&str> = visible.iter().map(|m| m.name()).collect();
    sensory.push_str(&format!("visible: {}\n", names.join(", ")));
    if !observation.agents_in_view.is_empty() {
        let others: Vec<String> = observation
            .agents_in_view
            .iter()
            .map(|(id, p)| format!("agent {id} at {p}"))
            .collect();
        sensory.push_str(&format!("agents in view: {}\n", others.join(", ")));
    }
    let episodic = format!(
        "tick {}; position {}; facing {} ({:?}); {}; inventory {}{}\n",
        observation.tick,
        observation.position,
        observation.facing,
        observation.direction,
        observation.vitals,
        observation.inventory,
        if observation.sleeping { "; sleeping" } else { "" }
    );
    WorkingMemory {
        sensory,
        episodic,
        feedback: tree.feedback_lines(&observation.inventory, observation.facing, share_range),
        retrospection: graph.retrospect(RETROSPECT_WINDOW),
    }
}
