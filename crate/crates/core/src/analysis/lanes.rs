use std::collections::BTreeMap;

use super::{goroutine_funcs, resource_labels, select_cases};
use crate::event::{Category, Event, EventKind, ResKind, ResourceRef, RUNTIME_G};
use crate::trace::TraceBundle;

/// Text lanes, one column per goroutine and one row per event in ts order.
/// Attempts are marked `?`, completions `!`; scheduler and block/unblock
/// bookkeeping rows are left out.
pub fn lane_view(bundle: &TraceBundle) -> String {
    let trace = &bundle.trace;
    let funcs = goroutine_funcs(trace);
    let labels = resource_labels(trace);
    let label = |r: Option<ResourceRef>| r.map(|r| labels.get(&r).cloned().unwrap_or_else(|| r.to_string())).unwrap_or_default();
    let lanes = bundle.goroutines();
    let col: BTreeMap<u32, usize> = lanes.iter().enumerate().map(|(i, g)| (*g, i + 1)).collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["ts".to_string()];
    header.extend(lanes.iter().map(|g| format!("g{g} {}", funcs.get(g).map(String::as_str).unwrap_or("?"))));
    rows.push(header);
    for e in &trace.events {
        if e.g == RUNTIME_G
            || e.kind.category() == Category::Process
            || matches!(e.kind, EventKind::SCHED_SWITCH | EventKind::GO_BLOCK | EventKind::GO_UNBLOCK)
        {
            continue;
        }
        let mut row = vec![String::new(); lanes.len() + 1];
        row[0] = e.ts.to_string();
        row[col[&e.g]] = cell(bundle, e, &label);
        rows.push(row);
    }

    let widths: Vec<usize> = (0..=lanes.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for mut r in rows {
        while r.len() > 1 && r.last().is_some_and(String::is_empty) {
            r.pop();
        }
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
    }
    out
}

fn cell(bundle: &TraceBundle, e: &Event, label: &dyn Fn(Option<ResourceRef>) -> String) -> String {
    use EventKind::*;
    let mark = if e.kind.is_pre() {
        "?"
    } else if e.kind.is_post() {
        "!"
    } else {
        ""
    };
    let res = label(e.resource);
    let op = match e.kind {
        GO_START => return "start".into(),
        GO_END => return "end".into(),
        GO_CREATE => return format!("go(g{})", e.value.unwrap_or(0)),
        CH_MAKE => "make",
        CH_SEND_PRE | CH_SEND_POST => "send",
        CH_RECV_PRE | CH_RECV_POST => "recv",
        CH_CLOSE => "close",
        MU_LOCK_PRE | MU_LOCK_POST => "lock",
        MU_UNLOCK => "unlock",
        WG_ADD => return format!("add({res},{})", e.value.unwrap_or(0)),
        WG_WAIT_PRE | WG_WAIT_POST => "wait",
        CV_WAIT_PRE | CV_WAIT_POST => "cwait",
        CV_SIGNAL => "signal",
        CV_BROADCAST => "broadcast",
        SELECT_PRE => {
            let mut parts: Vec<String> = select_cases(&bundle.trace, e.id)
                .into_iter()
                .map(|(send, id)| {
                    let dir = if send { "send " } else { "recv " };
                    format!("{dir}{}", label(Some(ResourceRef { kind: ResKind::CHAN, id })))
                })
                .collect();
            if bundle.trace.arg(e.id, "default") == Some("1") {
                parts.push("default".into());
            }
            return format!("?select({})", parts.join(","));
        }
        SELECT_POST if e.aux == Some(-1) => return "!select(default)".into(),
        SELECT_POST => "select",
        _ => e.kind.as_str(),
    };
    format!("{mark}{op}({res})")
}
