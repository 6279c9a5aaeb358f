use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::leaks::blocked_on;
use super::{goroutine_funcs, mutex_owners, resource_labels, select_cases};
use crate::event::{BlockReason, EventKind, GoroutineId, ResKind, ResourceRef};
use crate::trace::TraceBundle;

/// Goroutines sort before resources, so a cycle enumerated from its
/// smallest node starts at its lowest goroutine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    G(GoroutineId),
    R(ResourceRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    /// goroutine -> resource it is blocked on
    Waits,
    /// mutex -> its owner
    HeldBy,
    /// channel/cond -> a live goroutine that has used its other side
    Counterpart,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Waits => "WAITS",
            EdgeKind::HeldBy => "HELD_BY",
            EdgeKind::Counterpart => "COUNTERPART",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WaitForEdge {
    pub from: Node,
    pub to: Node,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WaitForGraph {
    pub edges: BTreeSet<WaitForEdge>,
    /// Display names: function names for goroutines, labels for resources.
    pub names: BTreeMap<Node, String>,
}

pub type Cycle = Vec<Node>;

impl WaitForGraph {
    pub fn nodes(&self) -> BTreeSet<Node> {
        self.edges.iter().flat_map(|e| [e.from, e.to]).collect()
    }

    pub fn successors(&self, n: Node) -> impl Iterator<Item = Node> + '_ {
        self.edges.iter().filter(move |e| e.from == n).map(|e| e.to)
    }

    pub fn has_edge(&self, from: Node, to: Node) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    pub fn name(&self, n: Node) -> String {
        self.names.get(&n).cloned().unwrap_or_else(|| match n {
            Node::G(g) => format!("g{g}"),
            Node::R(r) => r.to_string(),
        })
    }

    /// `Monitor -> M1 -> StatusChange -> C1 -> Monitor`
    pub fn format_cycle(&self, cycle: &[Node]) -> String {
        let mut parts: Vec<String> = cycle.iter().map(|n| self.name(*n)).collect();
        if let Some(first) = parts.first().cloned() {
            parts.push(first);
        }
        parts.join(" -> ")
    }
}

impl fmt::Display for WaitForGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edges {
            writeln!(f, "{} {} {}", self.name(e.from), e.kind.as_str(), self.name(e.to))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Send,
    Recv,
    Wake,
}

/// End-state wait-for graph of a trace.
pub fn build_waitfor(bundle: &TraceBundle) -> WaitForGraph {
    let trace = &bundle.trace;
    let funcs = goroutine_funcs(trace);
    let labels = resource_labels(trace);
    let mut g = WaitForGraph::default();

    let mut ended: BTreeSet<GoroutineId> = BTreeSet::new();
    // what each goroutine has been seen doing on each resource
    let mut evidence: BTreeSet<(GoroutineId, u32, Side)> = BTreeSet::new();
    for e in &trace.events {
        let Some(r) = e.resource else {
            match e.kind {
                EventKind::GO_END => {
                    ended.insert(e.g);
                }
                EventKind::SELECT_PRE => {
                    for (send, id) in select_cases(trace, e.id) {
                        evidence.insert((e.g, id, if send { Side::Send } else { Side::Recv }));
                    }
                }
                _ => {}
            }
            continue;
        };
        let side = match e.kind {
            EventKind::CH_SEND_PRE | EventKind::CH_SEND_POST | EventKind::CH_CLOSE => Side::Send,
            EventKind::CH_RECV_PRE | EventKind::CH_RECV_POST => Side::Recv,
            EventKind::SELECT_POST if trace.arg(e.id, "dir") == Some("SEND") => Side::Send,
            EventKind::SELECT_POST => Side::Recv,
            EventKind::CV_SIGNAL | EventKind::CV_BROADCAST => Side::Wake,
            EventKind::GO_BLOCK => match e.aux.and_then(BlockReason::from_code) {
                Some(BlockReason::SEND) => Side::Send,
                Some(BlockReason::RECV) => Side::Recv,
                _ => continue,
            },
            _ => continue,
        };
        evidence.insert((e.g, r.id, side));
    }

    // WAITS: goroutines whose final event is a block
    let mut waits: Vec<(GoroutineId, ResourceRef, Vec<Side>)> = Vec::new();
    for gid in bundle.goroutines() {
        let Some(last) = bundle.final_event(gid) else { continue };
        if last.kind != EventKind::GO_BLOCK {
            continue;
        }
        let Some(reason) = last.aux.and_then(BlockReason::from_code) else { continue };
        let select_dirs: Vec<(bool, u32)> = if reason == BlockReason::SELECT {
            let pre = trace.events[..last.id as usize].iter().rev().find(|e| e.g == gid && e.kind == EventKind::SELECT_PRE);
            pre.map(|p| select_cases(trace, p.id)).unwrap_or_default()
        } else {
            Vec::new()
        };
        for r in blocked_on(bundle, gid, last.id, reason, last.resource) {
            g.edges.insert(WaitForEdge { from: Node::G(gid), to: Node::R(r), kind: EdgeKind::Waits });
            let wanted: Vec<Side> = match reason {
                BlockReason::SEND => vec![Side::Recv],
                BlockReason::RECV => vec![Side::Send],
                BlockReason::CVWAIT => vec![Side::Wake],
                BlockReason::SELECT => select_dirs
                    .iter()
                    .filter(|(_, id)| *id == r.id)
                    .map(|(send, _)| if *send { Side::Recv } else { Side::Send })
                    .collect(),
                BlockReason::LOCK | BlockReason::WGWAIT => Vec::new(),
            };
            waits.push((gid, r, wanted));
        }
    }

    for (&m, &owner) in &mutex_owners(trace) {
        let r = ResourceRef { kind: ResKind::MUTEX, id: m };
        g.edges.insert(WaitForEdge { from: Node::R(r), to: Node::G(owner), kind: EdgeKind::HeldBy });
    }

    for (waiter, r, wanted) in &waits {
        for &(other, id, side) in &evidence {
            if id == r.id && other != *waiter && !ended.contains(&other) && wanted.contains(&side) {
                g.edges.insert(WaitForEdge { from: Node::R(*r), to: Node::G(other), kind: EdgeKind::Counterpart });
            }
        }
    }

    // names: function name, disambiguated by id when shared
    let nodes = g.nodes();
    let mut uses: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &nodes {
        if let Node::G(id) = n {
            *uses.entry(funcs.get(id).map(String::as_str).unwrap_or("?")).or_default() += 1;
        }
    }
    for n in nodes {
        let name = match n {
            Node::G(id) => {
                let f = funcs.get(&id).map(String::as_str).unwrap_or("?");
                if uses[f] == 1 && f != "?" {
                    f.to_string()
                } else {
                    format!("{f}_g{id}")
                }
            }
            Node::R(r) => labels.get(&r).cloned().unwrap_or_else(|| r.to_string()),
        };
        g.names.insert(n, name);
    }
    g
}

/// All simple cycles, each reported once starting at its smallest node.
pub fn find_cycles(graph: &WaitForGraph) -> Vec<Cycle> {
    let mut adj: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for e in &graph.edges {
        adj.entry(e.from).or_default().push(e.to);
    }
    let mut cycles = Vec::new();
    for &start in adj.keys() {
        let mut path = vec![start];
        let mut on_path: BTreeSet<Node> = BTreeSet::from([start]);
        walk(&adj, start, start, &mut path, &mut on_path, &mut cycles);
    }
    cycles
}

fn walk(
    adj: &BTreeMap<Node, Vec<Node>>,
    start: Node,
    at: Node,
    path: &mut Vec<Node>,
    on_path: &mut BTreeSet<Node>,
    out: &mut Vec<Cycle>,
) {
    for &next in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
        if next == start {
            out.push(path.clone());
        } else if next > start && !on_path.contains(&next) {
            path.push(next);
            on_path.insert(next);
            walk(adj, start, next, path, on_path, out);
            on_path.remove(&next);
            path.pop();
        }
    }
}
