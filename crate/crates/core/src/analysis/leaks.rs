use std::fmt;

use super::{classify, mutex_owners, resource_labels, select_cases, AnalysisError};
use crate::event::{BlockReason, EventKind, GoroutineId, ResKind, ResourceRef, Site};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeakState {
    /// Parked in a blocking operation when the run ended.
    Blocked { reason: BlockReason, resources: Vec<ResourceRef>, holder: Option<GoroutineId> },
    /// Still runnable (or never started) when main returned.
    Killed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leak {
    pub g: GoroutineId,
    pub func: String,
    /// None for a goroutine that was created but never started.
    pub final_kind: Option<EventKind>,
    /// Location of the pending operation (or of the last event).
    pub site: Option<Site>,
    pub state: LeakState,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeakReport {
    pub leaks: Vec<Leak>,
    /// Display labels for the resources mentioned (e.g. `M1`).
    pub labels: Vec<(ResourceRef, String)>,
    /// Function names of all application goroutines.
    pub funcs: Vec<(GoroutineId, String)>,
}

impl LeakReport {
    pub fn is_empty(&self) -> bool {
        self.leaks.is_empty()
    }

    pub fn label(&self, r: ResourceRef) -> String {
        self.labels.iter().find(|(x, _)| *x == r).map(|(_, l)| l.clone()).unwrap_or_else(|| r.to_string())
    }

    pub fn by_func(&self, func: &str) -> Option<&Leak> {
        self.leaks.iter().find(|l| l.func == func)
    }
}

impl fmt::Display for LeakReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.leaks.is_empty() {
            return writeln!(f, "no leaked goroutines");
        }
        for l in &self.leaks {
            write!(f, "g{} {}: ", l.g, l.func)?;
            match &l.state {
                LeakState::Blocked { reason, resources, holder } => {
                    let res: Vec<String> = resources.iter().map(|r| self.label(*r)).collect();
                    write!(f, "blocked {reason} on {}", res.join(","))?;
                    if let Some(h) = holder {
                        let name = self.funcs.iter().find(|(g, _)| g == h).map(|(_, n)| n.as_str()).unwrap_or("?");
                        write!(f, ", held by g{h} {name}")?;
                    }
                }
                LeakState::Killed if l.final_kind.is_none() => write!(f, "killed before start")?,
                LeakState::Killed => write!(f, "killed while runnable after {}", l.final_kind.unwrap())?,
            }
            if let Some(s) = &l.site {
                write!(f, " at {s}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Application goroutines whose last event is anything but GO_END.
pub fn detect_leaks(bundle: &TraceBundle) -> Result<LeakReport, AnalysisError> {
    let classes = classify(bundle)?;
    let trace = &bundle.trace;
    let owners = mutex_owners(trace);
    let labels = resource_labels(trace);
    let mut leaks = Vec::new();
    for g in classes.application() {
        let last = bundle.final_event(g);
        if last.is_some_and(|e| e.kind == EventKind::GO_END) {
            continue;
        }
        let state = match last {
            Some(e) if e.kind == EventKind::GO_BLOCK => {
                let reason = e.aux.and_then(BlockReason::from_code).ok_or_else(|| AnalysisError::Malformed {
                    event_id: e.id,
                    message: "GO_BLOCK without a reason code".into(),
                })?;
                let resources = blocked_on(bundle, g, e.id, reason, e.resource);
                let holder = resources.iter().find(|r| r.kind == ResKind::MUTEX).and_then(|r| owners.get(&r.id).copied());
                LeakState::Blocked { reason, resources, holder }
            }
            _ => LeakState::Killed,
        };
        leaks.push(Leak {
            g,
            func: classes.entries[&g].func.clone(),
            final_kind: last.map(|e| e.kind),
            site: last.and_then(|e| trace.site(e)),
            state,
        });
    }
    let funcs = classes.entries.iter().map(|(g, e)| (*g, e.func.clone())).collect();
    Ok(LeakReport { leaks, labels: labels.into_iter().collect(), funcs })
}

/// Resources a goroutine is parked on; a select waits on every case channel.
pub(crate) fn blocked_on(
    bundle: &TraceBundle,
    g: GoroutineId,
    block_event: u32,
    reason: BlockReason,
    resource: Option<ResourceRef>,
) -> Vec<ResourceRef> {
    if reason == BlockReason::SELECT {
        let pre = bundle.trace.events[..block_event as usize].iter().rev().find(|e| e.g == g && e.kind == EventKind::SELECT_PRE);
        if let Some(pre) = pre {
            let mut out: Vec<ResourceRef> = Vec::new();
            for (_, id) in select_cases(&bundle.trace, pre.id) {
                let r = ResourceRef { kind: ResKind::CHAN, id };
                if !out.contains(&r) {
                    out.push(r);
                }
            }
            return out;
        }
    }
    resource.into_iter().collect()
}
