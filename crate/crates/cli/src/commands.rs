//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crafter_coop::harness::{
    aggregate, export_record, export_trace, import_record, read_record, replay, success_tick, sweep_full,
    EpisodeRecord, HarnessError, MetricsTable,
};
use crafter_coop::memory::{ExportFormat, KnowledgeGraph, MemoryError};
use crafter_coop::policy::{PlannerBackend, RemoteBackend, ScriptedBackend};
use crafter_coop::schema::schema_document;
use serde::Serialize;

use crate::config::{BackendKind, RunSpec};
use crate::CliError;

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::Corrupt { .. } | HarnessError::VersionMismatch { .. } | HarnessError::ReplayMismatch { .. } => {
            CliError::Integrity(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

#[derive(Serialize)]
struct MessageLine<'a> {
    tick: u64,
    messages: &'a [crafter_coop::comms::Message],
}

/// Messages sent per tick, one JSON line per tick that carried any.
fn message_log(record: &EpisodeRecord) -> Vec<u8> {
    let mut out = Vec::new();
    for t in record.ticks.iter().filter(|t| !t.messages.is_empty()) {
        serde_json::to_writer(
            &mut out,
            &MessageLine {
                tick: t.tick,
                messages: &t.messages,
            },
        )
        .expect("messages serialize");
        out.push(b'\n');
    }
    out
}

fn backend(spec: &RunSpec) -> Result<Box<dyn PlannerBackend>, CliError> {
    Ok(match spec.run.backend {
        BackendKind::Scripted => Box::new(ScriptedBackend),
        BackendKind::Remote => {
            Box::new(RemoteBackend::new(spec.remote.clone()).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

/// Run every seed of a [`RunSpec`] and write the run directory.
pub fn run(spec: &RunSpec) -> Result<(), CliError> {
    let backend = backend(spec)?;
    let out = &spec.run.out;
    let configs = spec.episode_configs();
    log::info!(
        "running {} episode(s) with {} agent(s), baseline {}, backend {}",
        configs.len(),
        spec.run.agents,
        spec.run.baseline,
        backend.name()
    );
    let results = sweep_full(&configs, backend.as_ref(), spec.run.baseline);

    write_file(&out.join("run.toml"), spec.to_resolved_toml().as_bytes())?;
    let mut records = Vec::with_capacity(results.len());
    let mut aborted = Vec::new();
    for (config, result) in configs.iter().zip(results) {
        let run = result.map_err(harness_error)?;
        let stem = format!("seed-{:04}", config.seed);
        let path = out.join("records").join(format!("{stem}.jsonl"));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
        }
        export_record(&run.record, &path).map_err(harness_error)?;
        write_file(&out.join("messages").join(format!("{stem}.jsonl")), &message_log(&run.record))?;
        if spec.run.baseline.uses_graph() {
            for agent in &run.agents {
                let base = out.join("graphs").join(format!("{stem}-agent-{}", agent.id));
                write_file(&base.with_extension("json"), agent.graph.export(ExportFormat::Json).as_bytes())?;
                write_file(&base.with_extension("dot"), agent.graph.export(ExportFormat::Dot).as_bytes())?;
            }
        }
        if let Some(reason) = &run.record.footer.aborted {
            aborted.push(format!("seed {}: {reason}", config.seed));
        }
        println!(
            "seed {:>4}: {:?} after {} ticks{}",
            config.seed,
            run.record.footer.terminal,
            run.record.ticks.len(),
            match success_tick(&run.record) {
                Some(t) => format!(", diamond at tick {t}"),
                None => String::new(),
            }
        );
        records.push(run.record);
    }
    let table = aggregate(&records).map_err(harness_error)?;
    write_table(out, &table)?;
    print!("{}", table.render_text());
    println!("wrote {}", out.display());
    if aborted.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("episodes aborted: {}", aborted.join("; "))))
    }
}

fn write_table(dir: &Path, table: &MetricsTable) -> Result<(), CliError> {
    write_file(&dir.join("metrics.txt"), table.render_text().as_bytes())?;
    write_file(&dir.join("metrics.csv"), table.to_csv().as_bytes())
}

pub fn schema() -> Result<(), CliError> {
    println!("{}", schema_document());
    Ok(())
}

/// Convert a saved JSON graph to dot (or re-emit it as checked JSON).
pub fn export_graph(input: &Path, format: &str, out: Option<&Path>) -> Result<(), CliError> {
    let format: ExportFormat = format.parse().map_err(|e: MemoryError| CliError::Usage(e.to_string()))?;
    let text = fs::read_to_string(input).map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
    let graph = KnowledgeGraph::import(&text).map_err(|e| CliError::Integrity(format!("{}: {e}", input.display())))?;
    let rendered = graph.export(format);
    match out {
        Some(path) => write_file(path, rendered.as_bytes()),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

/// Re-simulate a record and optionally write its per-agent trace.
pub fn replay_record(input: &Path, trace: Option<&Path>) -> Result<(), CliError> {
    let file = fs::File::open(input).map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
    let record = read_record(file).map_err(|e| with_path(input, harness_error(e)))?;
    replay(&record, |_, _, _| {}).map_err(|e| with_path(input, harness_error(e)))?;
    if let Some(path) = trace {
        let bytes = export_trace(&record, Vec::new()).map_err(harness_error)?;
        write_file(path, &bytes)?;
    }
    println!(
        "fidelity OK: {} ticks, {:?}, final digest {}",
        record.ticks.len(),
        record.footer.terminal,
        record.footer.final_digest
    );
    Ok(())
}

fn with_path(path: &Path, e: CliError) -> CliError {
    let prefix = |m: String| format!("{}: {m}", path.display());
    match e {
        CliError::Integrity(m) => CliError::Integrity(prefix(m)),
        CliError::Runtime(m) => CliError::Runtime(prefix(m)),
        CliError::Usage(m) => CliError::Usage(prefix(m)),
    }
}

/// Record files under the given paths. Directories contribute their
/// `*.jsonl` files and those of a `records/` subdirectory.
fn record_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for dir in [input.clone(), input.join("records")] {
                let Ok(entries) = fs::read_dir(&dir) else { continue };
                let mut found: Vec<PathBuf> = entries
                    .filter_map(Result::ok)
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                found.sort();
                out.extend(found);
            }
        } else if input.exists() {
            out.push(input.clone());
        } else {
            return Err(CliError::Runtime(format!("{}: no such file or directory", input.display())));
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no record files found".to_string()));
    }
    Ok(out)
}

/// Verify and aggregate record files into a milestone table.
pub fn table(inputs: &[PathBuf], csv: bool, out: Option<&Path>) -> Result<(), CliError> {
    let mut records = Vec::new();
    for path in record_paths(inputs)? {
        records.push(import_record(&path).map_err(|e| with_path(&path, harness_error(e)))?);
    }
    let table = aggregate(&records).map_err(harness_error)?;
    let text = if csv { table.to_csv() } else { table.render_text() };
    if let Some(dir) = out {
        write_table(dir, &table)?;
    }
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}
