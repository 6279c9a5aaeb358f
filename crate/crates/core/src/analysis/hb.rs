use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{cv_mutex, AnalysisError};
use crate::event::{EventKind, GoroutineId, Trace};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyncKind {
    Spawn,
    Channel,
    Close,
    Mutex,
    WaitGroup,
    Cond,
}

/// A synchronizes-with edge between two events (by id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SyncEdge {
    pub from: u32,
    pub to: u32,
    pub kind: SyncKind,
}

/// One vector clock per event, indexed by goroutine id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorClocks {
    pub width: usize,
    pub clocks: Vec<Vec<u32>>,
}

impl VectorClocks {
    pub fn get(&self, event_id: u32) -> &[u32] {
        &self.clocks[event_id as usize]
    }

    /// Whether event `a` happens before event `b`.
    pub fn before(&self, a: u32, b: u32) -> bool {
        let (x, y) = (self.get(a), self.get(b));
        a != b && x.iter().zip(y).all(|(p, q)| p <= q) && x != y
    }

    pub fn concurrent(&self, a: u32, b: u32) -> bool {
        a != b && !self.before(a, b) && !self.before(b, a)
    }
}

/// Shorthand for [`VectorClocks::before`] on a freshly computed map.
pub fn happens_before(vcs: &VectorClocks, a: u32, b: u32) -> bool {
    vcs.before(a, b)
}

fn is_send_completion(trace: &Trace, id: u32, kind: EventKind) -> bool {
    kind == EventKind::CH_SEND_POST || (kind == EventKind::SELECT_POST && trace.arg(id, "dir") == Some("SEND"))
}

/// Some(closed) for a receive completion.
fn recv_completion(trace: &Trace, id: u32, kind: EventKind, aux: Option<i64>) -> Option<bool> {
    match kind {
        EventKind::CH_RECV_POST => Some(aux == Some(1)),
        EventKind::SELECT_POST if trace.arg(id, "dir") == Some("RECV") => Some(trace.arg(id, "closed") == Some("1")),
        _ => None,
    }
}

/// Checks that every completion event follows a matching attempt.
fn check_pairs(trace: &Trace) -> Result<(), AnalysisError> {
    let mut open: HashMap<GoroutineId, EventKind> = HashMap::new();
    for e in &trace.events {
        if e.kind.is_pre() {
            open.insert(e.g, e.kind);
        } else if let Some(pre) = e.kind.pre_of_post() {
            if open.remove(&e.g) != Some(pre) {
                return Err(AnalysisError::Malformed { event_id: e.id, message: format!("{} without a matching {pre}", e.kind) });
            }
        }
    }
    Ok(())
}

/// Synchronization edges, in order of their target event.
pub fn sync_edges(bundle: &TraceBundle) -> Result<Vec<SyncEdge>, AnalysisError> {
    let trace = &bundle.trace;
    check_pairs(trace)?;
    let mut edges = Vec::new();
    let mut creates: HashMap<GoroutineId, u32> = HashMap::new();
    let mut sends: HashMap<u32, VecDeque<u32>> = HashMap::new();
    let mut closes: HashMap<u32, u32> = HashMap::new();
    let mut releases: HashMap<u32, u32> = HashMap::new();
    let mut wg_dones: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut cond_queue: HashMap<u32, VecDeque<GoroutineId>> = HashMap::new();
    let mut woken_by: HashMap<GoroutineId, u32> = HashMap::new();

    for e in &trace.events {
        let res = e.resource.map(|r| r.id);
        let mut edge = |from: u32, kind| edges.push(SyncEdge { from, to: e.id, kind });
        // the child's first event may be the SCHED_SWITCH that precedes GO_START
        if let Some(c) = creates.remove(&e.g) {
            edge(c, SyncKind::Spawn);
        }
        match e.kind {
            EventKind::GO_CREATE => {
                if let Some(child) = e.value {
                    creates.insert(child as GoroutineId, e.id);
                }
            }
            EventKind::CH_CLOSE => {
                closes.entry(res.unwrap_or(0)).or_insert(e.id);
            }
            EventKind::MU_UNLOCK => {
                releases.insert(res.unwrap_or(0), e.id);
            }
            EventKind::MU_LOCK_POST => {
                if let Some(&r) = releases.get(&res.unwrap_or(0)) {
                    edge(r, SyncKind::Mutex);
                }
            }
            EventKind::CV_WAIT_PRE => {
                if let Some(m) = cv_mutex(trace, e.id) {
                    releases.insert(m, e.id);
                }
                cond_queue.entry(res.unwrap_or(0)).or_default().push_back(e.g);
            }
            EventKind::CV_WAIT_POST => {
                if let Some(w) = woken_by.remove(&e.g) {
                    edge(w, SyncKind::Cond);
                }
                if let Some(&r) = cv_mutex(trace, e.id).and_then(|m| releases.get(&m)) {
                    edge(r, SyncKind::Mutex);
                }
            }
            EventKind::CV_SIGNAL => {
                if let Some(g) = cond_queue.entry(res.unwrap_or(0)).or_default().pop_front() {
                    woken_by.insert(g, e.id);
                }
            }
            EventKind::CV_BROADCAST => {
                for g in cond_queue.entry(res.unwrap_or(0)).or_default().drain(..) {
                    woken_by.insert(g, e.id);
                }
            }
            EventKind::WG_ADD => {
                if e.value.is_some_and(|d| d < 0) {
                    wg_dones.entry(res.unwrap_or(0)).or_default().push(e.id);
                }
            }
            EventKind::WG_WAIT_POST => {
                for &d in wg_dones.get(&res.unwrap_or(0)).map(Vec::as_slice).unwrap_or(&[]) {
                    edge(d, SyncKind::WaitGroup);
                }
            }
            kind => {
                let Some(c) = res else { continue };
                if is_send_completion(trace, e.id, kind) {
                    sends.entry(c).or_default().push_back(e.id);
                } else if let Some(closed) = recv_completion(trace, e.id, kind, e.aux) {
                    if closed {
                        if let Some(&cl) = closes.get(&c) {
                            edge(cl, SyncKind::Close);
                        }
                    } else {
                        let Some(s) = sends.get_mut(&c).and_then(VecDeque::pop_front) else {
                            return Err(AnalysisError::Malformed {
                                event_id: e.id,
                                message: "receive completion without a prior send".into(),
                            });
                        };
                        edge(s, SyncKind::Channel);
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// Vector clocks over program order plus [`sync_edges`].
pub fn vector_clocks(bundle: &TraceBundle) -> Result<VectorClocks, AnalysisError> {
    let trace = &bundle.trace;
    let edges = sync_edges(bundle)?;
    let mut incoming: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for e in &edges {
        incoming.entry(e.to).or_default().push(e.from);
    }
    let width = trace.events.iter().map(|e| e.g as usize + 1).max().unwrap_or(1);
    let mut last: HashMap<GoroutineId, usize> = HashMap::new();
    let mut clocks: Vec<Vec<u32>> = Vec::with_capacity(trace.events.len());
    for (i, e) in trace.events.iter().enumerate() {
        let mut vc = match last.get(&e.g) {
            Some(&p) => clocks[p].clone(),
            None => vec![0; width],
        };
        for &src in incoming.get(&e.id).map(Vec::as_slice).unwrap_or(&[]) {
            for (a, b) in vc.iter_mut().zip(&clocks[src as usize]) {
                *a = (*a).max(*b);
            }
        }
        vc[e.g as usize] += 1;
        clocks.push(vc);
        last.insert(e.g, i);
    }
    Ok(VectorClocks { width, clocks })
}
