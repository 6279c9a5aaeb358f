use std::collections::HashMap;
use std::fmt;

use crate::event::{Category, EventKind, GoroutineId};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintViolation {
    pub event_id: u32,
    pub message: String,
}

impl fmt::Display for LintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {}", self.event_id, self.message)
    }
}

#[derive(Default)]
struct Lane {
    open: Option<EventKind>,
    blocked: bool,
    /// Set after GO_UNBLOCK until the matching completion.
    resumed: bool,
}

/// Checks the attempt/completion protocol of every goroutine:
/// completions follow a matching attempt, a GO_BLOCK sits after an open
/// attempt, and a resumed goroutine shows GO_UNBLOCK then the completion.
pub fn lint_trace(bundle: &TraceBundle) -> Vec<LintViolation> {
    let mut out = Vec::new();
    let mut lanes: HashMap<GoroutineId, Lane> = HashMap::new();
    let mut bad = |id: u32, m: String| out.push(LintViolation { event_id: id, message: m });
    let events = &bundle.trace.events;
    for (i, e) in events.iter().enumerate() {
        if e.id as usize != i {
            bad(e.id, format!("id out of sequence (expected {i})"));
        }
        if i > 0 && e.ts <= events[i - 1].ts {
            bad(e.id, "ts does not increase".into());
        }
        if bundle.trace.stacks.get(e.stack_id).is_none() {
            bad(e.id, format!("unknown stack {}", e.stack_id));
        }
        let lane = lanes.entry(e.g).or_default();
        match e.kind {
            k if k.is_pre() => {
                if let Some(open) = lane.open {
                    bad(e.id, format!("{k} while {open} is still open"));
                }
                lane.open = Some(k);
            }
            k if k.is_post() => {
                let want = k.pre_of_post();
                if lane.open != want {
                    bad(e.id, format!("{k} without a matching {}", want.unwrap()));
                }
                if lane.blocked {
                    bad(e.id, format!("{k} while blocked (missing GO_UNBLOCK)"));
                }
                lane.open = None;
                lane.resumed = false;
            }
            EventKind::GO_BLOCK => {
                if lane.open.is_none() {
                    bad(e.id, "GO_BLOCK without an open attempt".into());
                }
                if lane.blocked {
                    bad(e.id, "GO_BLOCK while already blocked".into());
                }
                lane.blocked = true;
            }
            EventKind::GO_UNBLOCK => {
                if !lane.blocked {
                    bad(e.id, "GO_UNBLOCK without GO_BLOCK".into());
                }
                lane.blocked = false;
                lane.resumed = true;
            }
            k => {
                if lane.resumed {
                    bad(e.id, format!("{k} between GO_UNBLOCK and the completion"));
                }
                if lane.blocked && k != EventKind::SCHED_SWITCH {
                    bad(e.id, format!("{k} from a blocked goroutine"));
                }
                if let Some(open) = lane.open.filter(|_| k.category() == Category::Concurrency) {
                    // a fault report may directly follow an attempt
                    let last = events.get(i + 1).is_some_and(|n| n.kind == EventKind::RUN_END);
                    if !last {
                        bad(e.id, format!("{k} while {open} is open"));
                    }
                }
            }
        }
    }
    // at the end a goroutine may be blocked (its final event is GO_BLOCK)
    // or stopped by a fault right after an attempt; a resumed one is not allowed
    for (g, lane) in lanes {
        if lane.resumed {
            let id = events.iter().rev().find(|e| e.g == g).map(|e| e.id).unwrap_or(0);
            out.push(LintViolation { event_id: id, message: format!("g{g} resumed but never completed") });
        }
    }
    out.sort_by_key(|v| v.event_id);
    out
}
