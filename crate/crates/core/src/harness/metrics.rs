//! Milestones, aggregate tables and episode return.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::techtree::{Task, TechTree};
use crate::world::{AgentId, EventKind};

use super::{EpisodeRecord, HarnessError};

/// First tick at which any agent completed `task`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneRow {
    pub task: Task,
    pub tick: Option<u64>,
}

/// One row per milestone task, in reporting order.
pub fn milestones(record: &EpisodeRecord) -> Vec<MilestoneRow> {
    let mut first: BTreeMap<Task, u64> = BTreeMap::new();
    for t in &record.ticks {
        for e in &t.events {
            if let EventKind::Achievement { task } = e.kind {
                let slot = first.entry(task).or_insert(e.tick);
                *slot = (*slot).min(e.tick);
            }
        }
    }
    Task::MILESTONES
        .iter()
        .map(|task| MilestoneRow {
            task: *task,
            tick: first.get(task).copied(),
        })
        .collect()
}

/// Pairs `(earlier, later)` of the milestone partial order.
const ORDER: [(Task, Task); 11] = [
    (Task::CollectWood, Task::PlaceTable),
    (Task::PlaceTable, Task::MakeWoodPickaxe),
    (Task::MakeWoodPickaxe, Task::CollectStone),
    (Task::MakeWoodPickaxe, Task::CollectCoal),
    (Task::CollectStone, Task::MakeStonePickaxe),
    (Task::CollectStone, Task::PlaceFurnace),
    (Task::MakeStonePickaxe, Task::CollectIron),
    (Task::PlaceFurnace, Task::MakeIronPickaxe),
    (Task::CollectIron, Task::MakeIronPickaxe),
    (Task::CollectCoal, Task::MakeIronPickaxe),
    (Task::MakeIronPickaxe, Task::CollectDiamond),
];

/// Every broken ordering constraint, as text. Empty when the rows respect
/// the tech tree.
pub fn milestone_order_violations(rows: &[MilestoneRow]) -> Vec<String> {
    let tick = |task: Task| rows.iter().find(|r| r.task == task).and_then(|r| r.tick);
    let mut out = Vec::new();
    for (a, b) in ORDER {
        match (tick(a), tick(b)) {
            (None, Some(tb)) => out.push(format!("{b} at {tb} but {a} never reached")),
            (Some(ta), Some(tb)) if ta > tb => out.push(format!("{b} at {tb} precedes {a} at {ta}")),
            _ => {}
        }
    }
    out
}

/// Sum over agents of the depth of every first-time achievement, minus the
/// time penalty for each elapsed tick.
pub fn score_return(record: &EpisodeRecord, tree: &TechTree) -> f64 {
    let mut seen: BTreeMap<AgentId, Vec<Task>> = BTreeMap::new();
    let mut total = 0.0;
    for t in &record.ticks {
        for e in &t.events {
            if let EventKind::Achievement { task } = e.kind {
                let done = seen.entry(e.agent).or_default();
                if !done.contains(&task) {
                    done.push(task);
                    total += f64::from(tree.depth_of(task).unwrap_or(0));
                }
            }
        }
    }
    total - record.header.config.time_penalty * record.ticks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: Task,
    /// Mean over runs that reached the task.
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 with a single sample.
    pub sd: Option<f64>,
    pub reached: usize,
    pub runs: usize,
    pub success_rate: f64,
    pub single_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub runs: usize,
    pub rows: Vec<MetricRow>,
}

/// Per-milestone statistics over a set of records. The result does not
/// depend on record order.
pub fn aggregate(records: &[EpisodeRecord]) -> Result<MetricsTable, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let per_run: Vec<Vec<MilestoneRow>> = records.iter().map(milestones).collect();
    let rows = Task::MILESTONES
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let mut ticks: Vec<u64> = per_run.iter().filter_map(|rows| rows[i].tick).collect();
            ticks.sort_unstable();
            let k = ticks.len();
            let (mean, sd) = if k == 0 {
                (None, None)
            } else {
                let mean = ticks.iter().map(|t| *t as f64).sum::<f64>() / k as f64;
                let sd = if k == 1 {
                    0.0
                } else {
                    let ss: f64 = ticks.iter().map(|t| (*t as f64 - mean).powi(2)).sum();
                    (ss / (k - 1) as f64).sqrt()
                };
                (Some(mean), Some(sd))
            };
            MetricRow {
                task: *task,
                mean,
                sd,
                reached: k,
                runs: records.len(),
                success_rate: k as f64 / records.len() as f64,
                single_sample: k == 1,
            }
        })
        .collect();
    Ok(MetricsTable {
        runs: records.len(),
        rows,
    })
}

impl MetricsTable {
    pub fn row(&self, task: Task) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.task == task)
    }

    /// Plain-text table, one task per line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>18} {:>9}", "task", "steps (mean ± sd)", "success");
        for r in &self.rows {
            let steps = match (r.mean, r.sd) {
                (Some(m), Some(s)) if r.single_sample => format!("{m:.1} ± {s:.2}*"),
                (Some(m), Some(s)) => format!("{m:.1} ± {s:.2}"),
                _ => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<20} {:>18} {:>4}/{:<4}",
                r.task.name(),
                steps,
                r.reached,
                r.runs
            );
        }
        let _ = writeln!(out, "runs: {}", self.runs);
        if self.rows.iter().any(|r| r.single_sample) {
            let _ = writeln!(out, "* single sample");
        }
        out
    }

    /// Comma-separated rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,mean,sd,reached,runs,success_rate\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4}",
                r.task.name(),
                opt(r.mean),
                opt(r.sd),
                r.reached,
                r.runs,
                r.success_rate
            );
        }
        out
    }
}
