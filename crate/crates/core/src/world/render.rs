//! Text map snapshots and per-tick trace records.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    ActionKind, ActionResult, AgentId, Event, EventKind, Inventory, Item, Material, OutcomeReason, Position,
    StepReport, Vitals, Window, WindowCell, WorldState,
};

/// Glyph legend for [`render_map`] and [`render_window`].
pub const LEGEND: &str = ". grass  : sand  ~ water  # stone  T tree  c coal  i iron  D diamond  ! lava  \
_ path  t table  f furnace  p plant  C cow  1-9 agent (* for ids above 9)  ? out of bounds";

fn agent_glyph(id: AgentId) -> char {
    char::from_digit(id.0, 10).filter(|_| id.0 <= 9).unwrap_or('*')
}

/// The whole map, one character per cell, living agents and cows drawn on top.
pub fn render_map(state: &WorldState) -> String {
    let mut out = String::with_capacity(((state.grid.width + 1) * state.grid.height) as usize);
    for y in 0..state.grid.height {
        for x in 0..state.grid.width {
            let p = Position::new(x, y);
            let c = if let Some(a) = state.agents.iter().find(|a| a.alive && a.position == p) {
                agent_glyph(a.id)
            } else if state.cows.contains(&p) {
                'C'
            } else {
                state.grid.get(p).map(Material::glyph).unwrap_or('?')
            };
            out.push(c);
        }
        out.push('\n');
    }
    out
}

/// An observation window as labeled text rows.
pub fn render_window(window: &Window, center: Position, others: &[(AgentId, Position)], cows: &[Position]) -> String {
    let mut out = String::new();
    for (dy, row) in window.rows().enumerate() {
        for (dx, cell) in row.iter().enumerate() {
            let p = Position::new(window.origin.x + dx as i32, window.origin.y + dy as i32);
            let c = if p == center {
                '@'
            } else if let Some((id, _)) = others.iter().find(|(_, q)| *q == p) {
                agent_glyph(*id)
            } else if cows.contains(&p) {
                'C'
            } else {
                match cell {
                    WindowCell::Cell(m) => m.glyph(),
                    WindowCell::OutOfBounds => '?',
                }
            };
            out.push(c);
        }
        out.push('\n');
    }
    out
}

/// One agent's view of one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub agent: AgentId,
    pub action: Option<ActionKind>,
    pub result: Option<ActionResult>,
    pub reason: Option<OutcomeReason>,
    pub position: Position,
    pub vitals: Vitals,
    pub alive: bool,
    pub inventory_delta: BTreeMap<Item, i64>,
    pub events: Vec<EventKind>,
}

impl TraceRecord {
    /// Records for every agent after `report`; `before` holds each agent's
    /// inventory (indexed by agent) prior to the step.
    pub fn for_step(before: &[Inventory], after: &WorldState, report: &StepReport) -> Vec<TraceRecord> {
        after
            .agents
            .iter()
            .map(|a| {
                let outcome = report.outcomes.iter().find(|o| o.agent == a.id);
                let events = report
                    .events
                    .iter()
                    .filter(|e: &&Event| e.agent == a.id)
                    .map(|e| e.kind.clone())
                    .collect();
                TraceRecord {
                    tick: after.tick,
                    agent: a.id,
                    action: outcome.map(|o| o.action),
                    result: outcome.map(|o| o.result),
                    reason: outcome.map(|o| o.reason),
                    position: a.position,
                    vitals: a.vitals,
                    alive: a.alive,
                    inventory_delta: a.inventory.delta_from(&before[a.id.index()]),
                    events,
                }
            })
            .collect()
    }
}

/// Writes trace records as JSON lines.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn write_step(&mut self, before: &[Inventory], after: &WorldState, report: &StepReport) -> io::Result<()> {
        for r in TraceRecord::for_step(before, after, report) {
            self.write(&r)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
