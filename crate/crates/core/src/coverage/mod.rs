//! Synchronization coverage: sync pairs, blocking/blocked flags and
//! blocked pairs, per run and accumulated over runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use thiserror::Error;

use crate::analysis::{cv_mutex, sync_edges, AnalysisError, SyncKind};
use crate::event::{BlockReason, Category, EventKind, GoroutineId, ResKind, Site};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockFlag {
    Blocked,
    Blocking,
}

impl BlockFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockFlag::Blocked => "BLOCKED",
            BlockFlag::Blocking => "BLOCKING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageSet {
    /// Program file the set was measured on; None for the empty set.
    pub program: Option<String>,
    pub sync_pairs: BTreeSet<(Site, Site)>,
    pub blocking_blocked: BTreeSet<(Site, BlockFlag)>,
    pub blocked_pairs: BTreeSet<(Site, Site)>,
}

/// Sizes of the three components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoverageSize {
    pub sync_pairs: usize,
    pub blocking_blocked: usize,
    pub blocked_pairs: usize,
}

impl CoverageSize {
    pub fn total(&self) -> usize {
        self.sync_pairs + self.blocking_blocked + self.blocked_pairs
    }
}

impl fmt::Display for CoverageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sync_pairs={} blocking_blocked={} blocked_pairs={}", self.sync_pairs, self.blocking_blocked, self.blocked_pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("cannot merge coverage of `{0}` with coverage of `{1}`")]
    MixedPrograms(String, String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CoverageSet {
    pub fn size(&self) -> CoverageSize {
        CoverageSize {
            sync_pairs: self.sync_pairs.len(),
            blocking_blocked: self.blocking_blocked.len(),
            blocked_pairs: self.blocked_pairs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.size().total() == 0
    }

    /// Union with `other` in place.
    pub fn absorb(&mut self, other: &CoverageSet) -> Result<(), CoverageError> {
        match (&self.program, &other.program) {
            (Some(a), Some(b)) if a != b => return Err(CoverageError::MixedPrograms(a.clone(), b.clone())),
            (None, Some(b)) => self.program = Some(b.clone()),
            _ => {}
        }
        self.sync_pairs.extend(other.sync_pairs.iter().cloned());
        self.blocking_blocked.extend(other.blocking_blocked.iter().cloned());
        self.blocked_pairs.extend(other.blocked_pairs.iter().cloned());
        Ok(())
    }

    /// `metric,loc_a,loc_b` rows; the flag goes in `loc_b` for blocking_blocked.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["metric", "loc_a", "loc_b"])?;
        for (a, b) in &self.sync_pairs {
            w.write_record(["sync_pair", &a.to_string(), &b.to_string()])?;
        }
        for (a, flag) in &self.blocking_blocked {
            w.write_record(["blocking_blocked", &a.to_string(), flag.as_str()])?;
        }
        for (a, b) in &self.blocked_pairs {
            w.write_record(["blocked_pair", &a.to_string(), &b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coverage of a single run.
pub fn coverage_of(bundle: &TraceBundle) -> Result<CoverageSet, CoverageError> {
    let trace = &bundle.trace;
    let mut cov = CoverageSet { program: Some(bundle.meta.program.clone()), ..CoverageSet::default() };
    let site = |id: u32| trace.site(&trace.events[id as usize]);

    for e in sync_edges(bundle)? {
        if e.kind == SyncKind::Spawn {
            continue;
        }
        if let (Some(a), Some(b)) = (site(e.from), site(e.to)) {
            cov.sync_pairs.insert((a, b));
        }
    }

    let mut owner: BTreeMap<u32, (GoroutineId, u32)> = BTreeMap::new();
    let mut last_pre: BTreeMap<GoroutineId, u32> = BTreeMap::new();
    let mut last_sync: BTreeMap<GoroutineId, u32> = BTreeMap::new();
    for e in &trace.events {
        match e.kind {
            EventKind::GO_BLOCK => {
                if let Some(s) = last_pre.get(&e.g).and_then(|&p| site(p)) {
                    cov.blocking_blocked.insert((s, BlockFlag::Blocked));
                }
                let on_mutex = e.aux.and_then(BlockReason::from_code) == Some(BlockReason::LOCK)
                    && e.resource.is_some_and(|r| r.kind == ResKind::MUTEX);
                if let Some(&(_, acquired)) = e.resource.filter(|_| on_mutex).and_then(|r| owner.get(&r.id)) {
                    if let (Some(a), Some(b)) = (site(e.id), site(acquired)) {
                        cov.blocked_pairs.insert((a, b));
                    }
                }
            }
            EventKind::GO_UNBLOCK => {
                let waker = e.value.map(|v| v as GoroutineId);
                if let Some(s) = waker.and_then(|w| last_sync.get(&w)).and_then(|&t| site(t)) {
                    cov.blocking_blocked.insert((s, BlockFlag::Blocking));
                }
            }
            EventKind::MU_LOCK_POST => {
                if let Some(r) = e.resource {
                    owner.insert(r.id, (e.g, e.id));
                }
            }
            EventKind::CV_WAIT_POST => {
                if let Some(m) = cv_mutex(trace, e.id) {
                    owner.insert(m, (e.g, e.id));
                }
            }
            EventKind::MU_UNLOCK | EventKind::CV_WAIT_PRE => {
                let m = if e.kind == EventKind::MU_UNLOCK { e.resource.map(|r| r.id) } else { cv_mutex(trace, e.id) };
                if let Some(m) = m {
                    if owner.get(&m).is_some_and(|(g, _)| *g == e.g) {
                        owner.remove(&m);
                    }
                }
            }
            _ => {}
        }
        if e.kind.is_pre() {
            last_pre.insert(e.g, e.id);
        }
        if e.kind.category() == Category::Concurrency {
            last_sync.insert(e.g, e.id);
        }
    }
    Ok(cov)
}

/// Union of `sets`; all non-empty sets must come from the same program.
pub fn merge<'a>(sets: impl IntoIterator<Item = &'a CoverageSet>) -> Result<CoverageSet, CoverageError> {
    let mut out = CoverageSet::default();
    for s in sets {
        out.absorb(s)?;
    }
    Ok(out)
}

/// Cumulative sizes after each run, in order.
pub fn growth_curve<'a>(sets: impl IntoIterator<Item = &'a CoverageSet>) -> Result<Vec<CoverageSize>, CoverageError> {
    let mut acc = CoverageSet::default();
    let mut curve = Vec::new();
    for s in sets {
        acc.absorb(s)?;
        curve.push(acc.size());
    }
    Ok(curve)
}
