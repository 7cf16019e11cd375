//! Episode records as JSON lines, with replay verification.
//!
//! A record file holds one header line, one line per tick and a footer line.
//! Every tick line carries a hash of the joint action, the outcomes, the
//! events and the resulting world digest, so re-simulating the actions must
//! reproduce it exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comms::{deliver, Message};
use crate::policy::BaselineKind;
use crate::techtree::Task;
use crate::world::{
    ActionKind, ActionOutcome, AgentId, EpisodeConfig, Event, Inventory, StepReport, TerminalStatus, TraceWriter,
    WorldState,
};

use super::{reveal_inbox, HarnessError};

/// Version of the record layout. Bumped on any incompatible change.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub format_version: u32,
    pub crate_version: String,
    pub config: EpisodeConfig,
    pub baseline: BaselineKind,
    pub backend: String,
    pub generation_attempt: u32,
}

impl EpisodeHeader {
    pub fn new(config: &EpisodeConfig, baseline: BaselineKind, backend: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            baseline,
            backend: backend.to_string(),
            generation_attempt: 0,
        }
    }
}

/// A backend failure that was replaced by a noop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendFailure {
    pub agent: AgentId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRecord {
    /// World tick before the step.
    pub tick: u64,
    pub actions: BTreeMap<AgentId, ActionKind>,
    pub outcomes: Vec<ActionOutcome>,
    pub events: Vec<Event>,
    /// Messages sent this tick, delivered at the start of the next.
    pub messages: Vec<Message>,
    pub failures: Vec<BackendFailure>,
    /// Rejected planner replies summed over agents.
    pub retries: u32,
    pub hash: String,
}

impl TickRecord {
    pub(crate) fn new(
        tick: u64,
        actions: BTreeMap<AgentId, ActionKind>,
        report: StepReport,
        messages: Vec<Message>,
        failures: Vec<BackendFailure>,
        retries: u32,
        after: &WorldState,
    ) -> Self {
        let hash = tick_hash(tick, &actions, &report, after);
        Self {
            tick,
            actions,
            outcomes: report.outcomes,
            events: report.events,
            messages,
            failures,
            retries,
            hash,
        }
    }
}

fn tick_hash(tick: u64, actions: &BTreeMap<AgentId, ActionKind>, report: &StepReport, after: &WorldState) -> String {
    let doc = serde_json::json!({
        "tick": tick,
        "actions": actions,
        "outcomes": report.outcomes,
        "events": report.events,
        "state": after.digest(),
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFooter {
    pub terminal: TerminalStatus,
    pub final_tick: u64,
    /// First-completion tick per task, per agent.
    pub achievements: BTreeMap<AgentId, BTreeMap<Task, u64>>,
    pub backend_failures: u64,
    /// Set when the run stopped on an error; the record is partial.
    pub aborted: Option<String>,
    pub final_digest: String,
}

impl EpisodeFooter {
    pub(crate) fn from_world(world: &WorldState, backend_failures: u64, aborted: Option<String>) -> Self {
        Self {
            terminal: world.terminal_status(),
            final_tick: world.tick,
            achievements: world.agents.iter().map(|a| (a.id, a.achievements.clone())).collect(),
            backend_failures,
            aborted,
            final_digest: world.digest(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    pub ticks: Vec<TickRecord>,
    pub footer: EpisodeFooter,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header(EpisodeHeader),
    Tick(TickRecord),
    Footer(EpisodeFooter),
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a EpisodeHeader),
    Tick(&'a TickRecord),
    Footer(&'a EpisodeFooter),
}

/// Write a record as JSON lines.
pub fn write_record<W: Write>(record: &EpisodeRecord, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let mut line = |l: LineRef<'_>| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &l)?;
        out.write_all(b"\n")
    };
    line(LineRef::Header(&record.header))?;
    for t in &record.ticks {
        line(LineRef::Tick(t))?;
    }
    line(LineRef::Footer(&record.footer))?;
    out.flush()
}

/// Parse a record without verifying it.
pub fn read_record<R: Read>(input: R) -> Result<EpisodeRecord, HarnessError> {
    let reader = BufReader::new(input);
    let mut header = None;
    let mut ticks = Vec::new();
    let mut footer = None;
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = line.map_err(|e| HarnessError::Corrupt {
            line: n,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if n == 1 {
            let version = serde_json::from_str::<serde_json::Value>(&line)
                .ok()
                .and_then(|v| v.pointer("/header/format_version").and_then(|f| f.as_u64()));
            if let Some(found) = version {
                if found != u64::from(FORMAT_VERSION) {
                    return Err(HarnessError::VersionMismatch {
                        found: found as u32,
                        expected: FORMAT_VERSION,
                    });
                }
            }
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| HarnessError::Corrupt {
            line: n,
            message: e.to_string(),
        })?;
        if footer.is_some() {
            return Err(HarnessError::Corrupt {
                line: n,
                message: "content after the footer".to_string(),
            });
        }
        match parsed {
            Line::Header(h) if n == 1 => header = Some(h),
            Line::Header(_) => {
                return Err(HarnessError::Corrupt {
                    line: n,
                    message: "header must be the first line".to_string(),
                })
            }
            Line::Tick(_) | Line::Footer(_) if header.is_none() => {
                return Err(HarnessError::Corrupt {
                    line: n,
                    message: "missing header".to_string(),
                })
            }
            Line::Tick(t) => ticks.push(t),
            Line::Footer(f) => footer = Some(f),
        }
    }
    let header = header.ok_or(HarnessError::Corrupt {
        line: 1,
        message: "empty record".to_string(),
    })?;
    let footer = footer.ok_or(HarnessError::Corrupt {
        line: last_line,
        message: "missing footer".to_string(),
    })?;
    Ok(EpisodeRecord { header, ticks, footer })
}

/// Re-simulate a record, calling `on_step` after every tick. Fails on the
/// first tick whose hash or outcomes differ from the record.
pub fn replay(
    record: &EpisodeRecord,
    mut on_step: impl FnMut(&[Inventory], &WorldState, &StepReport),
) -> Result<(), HarnessError> {
    let config = record.header.config.clone();
    let n = config.n_agents;
    let mut world = WorldState::generate(config)?;
    let mismatch = |tick: u64, message: String| HarnessError::ReplayMismatch { tick, message };
    if world.generation_attempt != record.header.generation_attempt {
        return Err(mismatch(
            0,
            format!(
                "world generated on attempt {} but the record says {}",
                world.generation_attempt, record.header.generation_attempt
            ),
        ));
    }
    let mut pending: Vec<Message> = Vec::new();
    for t in &record.ticks {
        if t.tick != world.tick {
            return Err(mismatch(t.tick, format!("expected tick {}", world.tick)));
        }
        if world.terminal_status().is_terminal() {
            return Err(mismatch(t.tick, "record continues after the episode ended".to_string()));
        }
        let mut inboxes = deliver(&pending, n).map_err(|e| mismatch(t.tick, e.to_string()))?;
        let living: Vec<AgentId> = world.living_agents().collect();
        for id in &living {
            let inbox = inboxes.remove(id).unwrap_or_default();
            if record.header.baseline.communicates() {
                reveal_inbox(&mut world, *id, &inbox);
            }
            world.observe(*id, Vec::new())?;
        }
        let before: Vec<Inventory> = world.agents.iter().map(|a| a.inventory.clone()).collect();
        let report = world
            .step(&t.actions)
            .map_err(|e| mismatch(t.tick, format!("recorded actions rejected: {e}")))?;
        let hash = tick_hash(t.tick, &t.actions, &report, &world);
        if hash != t.hash {
            return Err(mismatch(t.tick, format!("hash {hash} differs from recorded {}", t.hash)));
        }
        if report.outcomes != t.outcomes || report.events != t.events {
            return Err(mismatch(t.tick, "outcomes or events differ from the record".to_string()));
        }
        on_step(&before, &world, &report);
        pending = t.messages.clone();
    }
    let footer = EpisodeFooter::from_world(&world, record.footer.backend_failures, record.footer.aborted.clone());
    if footer != record.footer {
        return Err(mismatch(world.tick, "final state differs from the footer".to_string()));
    }
    Ok(())
}

/// Write a record to `path`.
pub fn export_record(record: &EpisodeRecord, path: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_record(record, file).map_err(io)
}

/// Read a record from `path` and verify it by replay.
pub fn import_record(path: &Path) -> Result<EpisodeRecord, HarnessError> {
    let file = File::open(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let record = read_record(file)?;
    replay(&record, |_, _, _| {})?;
    Ok(record)
}

/// Replay a record and write one trace line per agent per tick.
pub fn export_trace<W: Write>(record: &EpisodeRecord, out: W) -> Result<W, HarnessError> {
    let mut writer = TraceWriter::new(out);
    let mut error = None;
    replay(record, |before, world, report| {
        if error.is_none() {
            if let Err(e) = writer.write_step(before, world, report) {
                error = Some(e);
            }
        }
    })?;
    if let Some(source) = error {
        return Err(HarnessError::Io {
            path: "trace".to_string(),
            source,
        });
    }
    Ok(writer.into_inner())
}
