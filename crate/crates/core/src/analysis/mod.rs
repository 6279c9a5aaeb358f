//! Post-mortem analyses over a stored trace.

mod classify;
mod critical;
mod dot;
mod hb;
mod lanes;
mod leaks;
mod lint;
mod shiviz;
mod waitfor;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::event::{EventKind, GoroutineId, ResKind, ResourceRef, Trace};

pub use classify::{classify, ClassEntry, Classification, GoroutineClass};
pub use critical::critical_points;
pub use dot::export_dot;
pub use hb::{happens_before, sync_edges, vector_clocks, SyncEdge, SyncKind, VectorClocks};
pub use lanes::lane_view;
pub use leaks::{detect_leaks, Leak, LeakReport, LeakState};
pub use lint::{lint_trace, LintViolation};
pub use shiviz::{export_shiviz, parse_shiviz, ShivizEntry};
pub use waitfor::{build_waitfor, find_cycles, Cycle, EdgeKind, Node, WaitForGraph, WaitForEdge};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("goroutine g{0} has no GO_CREATE event")]
    Orphan(GoroutineId),
    #[error("malformed trace at event {event_id}: {message}")]
    Malformed { event_id: u32, message: String },
}

/// Short display names for resources: kind letter plus a per-kind ordinal
/// in id order (C1, C2, M1, W1, V1).
pub fn resource_labels(trace: &Trace) -> BTreeMap<ResourceRef, String> {
    let mut all: Vec<ResourceRef> = trace.events.iter().filter_map(|e| e.resource).collect();
    all.sort_by_key(|r| r.id);
    all.dedup();
    let mut counts: BTreeMap<ResKind, usize> = BTreeMap::new();
    all.into_iter()
        .map(|r| {
            let n = counts.entry(r.kind).or_default();
            *n += 1;
            let letter = match r.kind {
                ResKind::CHAN => 'C',
                ResKind::MUTEX => 'M',
                ResKind::WG => 'W',
                ResKind::COND => 'V',
            };
            (r, format!("{letter}{n}"))
        })
        .collect()
}

/// Function run by each goroutine, from the `func` argument of its GO_CREATE.
pub fn goroutine_funcs(trace: &Trace) -> BTreeMap<GoroutineId, String> {
    trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::GO_CREATE)
        .filter_map(|e| {
            let child = e.value? as GoroutineId;
            Some((child, trace.arg(e.id, "func").unwrap_or("?").to_string()))
        })
        .collect()
}

/// Owner of each mutex after replaying the whole trace.
pub(crate) fn mutex_owners(trace: &Trace) -> BTreeMap<u32, GoroutineId> {
    let mut owners = BTreeMap::new();
    for e in &trace.events {
        let id = match e.kind {
            EventKind::MU_LOCK_POST | EventKind::MU_UNLOCK => e.resource.map(|r| r.id),
            EventKind::CV_WAIT_PRE | EventKind::CV_WAIT_POST => cv_mutex(trace, e.id),
            _ => None,
        };
        let Some(id) = id else { continue };
        match e.kind {
            EventKind::MU_LOCK_POST | EventKind::CV_WAIT_POST => {
                owners.insert(id, e.g);
            }
            _ => {
                if owners.get(&id) == Some(&e.g) {
                    owners.remove(&id);
                }
            }
        }
    }
    owners
}

pub(crate) fn cv_mutex(trace: &Trace, event_id: u32) -> Option<u32> {
    trace.arg(event_id, "mutex")?.parse().ok()
}

/// Channels listed by a SELECT_PRE, with their directions.
pub(crate) fn select_cases(trace: &Trace, event_id: u32) -> Vec<(bool, u32)> {
    let mut cases = Vec::new();
    for i in 0.. {
        let (Some(dir), Some(res)) = (trace.arg(event_id, &format!("case{i}_dir")), trace.arg(event_id, &format!("case{i}_res")))
        else {
            break;
        };
        if let Ok(id) = res.parse() {
            cases.push((dir == "SEND", id));
        }
    }
    cases
}
