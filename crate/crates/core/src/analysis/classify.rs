use std::collections::BTreeMap;

use super::AnalysisError;
use crate::event::{EventKind, GoroutineId, MAIN_G, RUNTIME_G};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GoroutineClass {
    Application,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub class: GoroutineClass,
    pub func: String,
    /// Creators from the parent up to main (or the runtime).
    pub ancestry: Vec<GoroutineId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub entries: BTreeMap<GoroutineId, ClassEntry>,
}

impl Classification {
    pub fn application(&self) -> impl Iterator<Item = GoroutineId> + '_ {
        self.entries.iter().filter(|(_, e)| e.class == GoroutineClass::Application).map(|(g, _)| *g)
    }

    pub fn is_application(&self, g: GoroutineId) -> bool {
        self.entries.get(&g).is_some_and(|e| e.class == GoroutineClass::Application)
    }
}

/// Splits goroutines into application and system ones by creation ancestry.
///
/// Main is the goroutine the runtime creates first; any other goroutine the
/// runtime creates is a system goroutine, and so is everything it spawns.
pub fn classify(bundle: &TraceBundle) -> Result<Classification, AnalysisError> {
    let trace = &bundle.trace;
    let mut parent: BTreeMap<GoroutineId, GoroutineId> = BTreeMap::new();
    let mut func: BTreeMap<GoroutineId, String> = BTreeMap::new();
    for e in &trace.events {
        if e.kind == EventKind::GO_CREATE {
            let Some(child) = e.value.and_then(|v| GoroutineId::try_from(v).ok()) else {
                return Err(AnalysisError::Malformed { event_id: e.id, message: "GO_CREATE without child id".into() });
            };
            parent.insert(child, e.g);
            func.insert(child, trace.arg(e.id, "func").unwrap_or("?").to_string());
        } else if e.g != RUNTIME_G && !parent.contains_key(&e.g) {
            return Err(AnalysisError::Orphan(e.g));
        }
    }

    let mut entries = BTreeMap::new();
    for (&g, name) in &func {
        let mut ancestry = Vec::new();
        let mut cur = g;
        while let Some(&p) = parent.get(&cur) {
            ancestry.push(p);
            if p == RUNTIME_G || ancestry.len() > parent.len() {
                break;
            }
            cur = p;
        }
        let rooted_in_main = g == MAIN_G || ancestry.iter().rev().nth(1) == Some(&MAIN_G);
        let class = if rooted_in_main { GoroutineClass::Application } else { GoroutineClass::System };
        if let Some(pos) = ancestry.iter().position(|&a| a == RUNTIME_G) {
            ancestry.truncate(pos);
        }
        entries.insert(g, ClassEntry { class, func: name.clone(), ancestry });
    }
    Ok(Classification { entries })
}
