//! Relational storage of traces: `events.csv`, `stack_frames.csv`,
//! `arguments.csv` and `meta.json` under `<dir>/<run_id>/`.

mod csvio;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventKind, GoroutineId, ResourceRef, Trace};
use crate::runtime::{RunResult, SchedulerConfig};

pub const EVENTS_FILE: &str = "events.csv";
pub const STACKS_FILE: &str = "stack_frames.csv";
pub const ARGUMENTS_FILE: &str = "arguments.csv";
pub const META_FILE: &str = "meta.json";

/// Run description stored next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub run_id: String,
    pub program: String,
    pub policy: String,
    pub seed: u64,
    pub p: f64,
    pub d: u32,
    pub max_steps: u64,
    pub arg0: Option<i64>,
    pub outcome: String,
    pub steps: u64,
    pub outputs: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    pub run_id: String,
    pub trace: Trace,
    pub meta: Meta,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run `{0}` already exists (use force to overwrite)")]
    Exists(String),
    #[error("invalid run id `{0}`")]
    InvalidRunId(String),
    #[error("missing file {0}")]
    Missing(PathBuf),
    #[error("{file} row {row}: malformed: {message}")]
    Malformed { file: &'static str, row: usize, message: String },
    #[error("{file} row {row}: dangling key: {message}")]
    DanglingKey { file: &'static str, row: usize, message: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

impl TraceBundle {
    pub fn from_run(run_id: &str, program: &str, result: &RunResult, config: &SchedulerConfig, arg0: Option<i64>) -> Self {
        let o = &result.outcome;
        TraceBundle {
            run_id: run_id.to_string(),
            trace: result.trace.clone(),
            meta: Meta {
                run_id: run_id.to_string(),
                program: program.to_string(),
                policy: config.policy.to_string(),
                seed: config.seed,
                p: config.yield_probability,
                d: config.delay_bound,
                max_steps: config.max_steps,
                arg0,
                outcome: o.status.to_string(),
                steps: o.steps,
                outputs: o.outputs.clone(),
            },
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.trace.events
    }

    pub fn events_by_goroutine(&self, g: GoroutineId) -> Vec<&Event> {
        self.trace.events.iter().filter(|e| e.g == g).collect()
    }

    /// The maximal-ts event of `g`, if it has any.
    pub fn final_event(&self, g: GoroutineId) -> Option<&Event> {
        self.trace.events.iter().rev().find(|e| e.g == g)
    }

    pub fn events_of_kind(&self, kind: EventKind) -> Vec<&Event> {
        self.trace.events.iter().filter(|e| e.kind == kind).collect()
    }

    pub fn events_on_resource(&self, resource: ResourceRef) -> Vec<&Event> {
        self.trace.events.iter().filter(|e| e.resource == Some(resource)).collect()
    }

    /// Goroutine ids that appear in the trace, ascending (the runtime's 0 excluded).
    pub fn goroutines(&self) -> Vec<GoroutineId> {
        let mut ids: Vec<GoroutineId> = self.trace.events.iter().map(|e| e.g).filter(|&g| g != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn check_run_id(run_id: &str) -> Result<(), StoreError> {
    let ok = !run_id.is_empty()
        && run_id != "."
        && run_id != ".."
        && !run_id.starts_with('.')
        && !run_id.contains(['/', '\\']);
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidRunId(run_id.to_string()))
    }
}

/// Writes a bundle to `<dir>/<run_id>/`. The files are first written into
/// a temporary sibling directory which is then renamed into place.
pub fn save(bundle: &TraceBundle, dir: &Path, force: bool) -> Result<PathBuf, StoreError> {
    check_run_id(&bundle.run_id)?;
    let target = dir.join(&bundle.run_id);
    if target.exists() && !force {
        return Err(StoreError::Exists(bundle.run_id.clone()));
    }
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let tmp = dir.join(format!(".{}.tmp{}", bundle.run_id, std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| StoreError::io(&tmp, e))?;

    let written = write_files(bundle, &tmp);
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if target.exists() {
        fs::remove_dir_all(&target).map_err(|e| StoreError::io(&target, e))?;
    }
    fs::rename(&tmp, &target).map_err(|e| StoreError::io(&target, e))?;
    Ok(target)
}

fn write_files(bundle: &TraceBundle, dir: &Path) -> Result<(), StoreError> {
    let put = |name: &str, bytes: Vec<u8>| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| StoreError::io(&path, e))
    };
    put(EVENTS_FILE, csvio::events_csv(&bundle.trace.events))?;
    put(STACKS_FILE, csvio::stacks_csv(&bundle.trace.stacks))?;
    put(ARGUMENTS_FILE, csvio::arguments_csv(&bundle.trace.arguments))?;
    let mut meta = serde_json::to_vec_pretty(&bundle.meta).expect("meta serializes");
    meta.push(b'\n');
    put(META_FILE, meta)
}

/// Reads `<dir>/<run_id>/` back, checking row formats and foreign keys.
pub fn load(dir: &Path, run_id: &str) -> Result<TraceBundle, StoreError> {
    check_run_id(run_id)?;
    let base = dir.join(run_id);
    let read = |name: &str| {
        let path = base.join(name);
        if !path.is_file() {
            return Err(StoreError::Missing(path));
        }
        fs::read(&path).map_err(|e| StoreError::io(&path, e))
    };
    let stacks = csvio::parse_stacks(&read(STACKS_FILE)?)?;
    let events = csvio::parse_events(&read(EVENTS_FILE)?, &stacks)?;
    let arguments = csvio::parse_arguments(&read(ARGUMENTS_FILE)?, events.len())?;
    let meta: Meta = serde_json::from_slice(&read(META_FILE)?).map_err(|e| StoreError::Malformed {
        file: META_FILE,
        row: e.line(),
        message: e.to_string(),
    })?;
    Ok(TraceBundle { run_id: run_id.to_string(), trace: Trace { events, stacks, arguments }, meta })
}

#[cfg(test)]
mod tests;
