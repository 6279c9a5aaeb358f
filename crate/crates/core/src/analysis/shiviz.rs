use std::collections::BTreeMap;

use crate::event::{EventKind, GoroutineId};
use crate::trace::TraceBundle;

use super::VectorClocks;

/// One event as recovered from a ShiViz log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShivizEntry {
    pub g: GoroutineId,
    pub kind: EventKind,
    pub site: String,
    pub clock: BTreeMap<GoroutineId, u32>,
}

/// Two lines per event: `g<id> <KIND>@<file>:<line>` and then
/// `g<id> {"g<id>":n,...}` with the non-zero clock entries.
/// Parse in ShiViz with `(?<event>.*)\n(?<host>\S*) (?<clock>{.*})`.
pub fn export_shiviz(bundle: &TraceBundle, vcs: &VectorClocks) -> String {
    let mut out = String::new();
    for e in &bundle.trace.events {
        let site = bundle.trace.site(e).map(|s| s.to_string()).unwrap_or_default();
        let clock: Vec<String> = vcs
            .get(e.id)
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(g, n)| format!("\"g{g}\":{n}"))
            .collect();
        out.push_str(&format!("g{} {}@{}\n", e.g, e.kind, site));
        out.push_str(&format!("g{} {{{}}}\n", e.g, clock.join(",")));
    }
    out
}

fn host(s: &str) -> Result<GoroutineId, String> {
    s.strip_prefix('g').and_then(|n| n.parse().ok()).ok_or_else(|| format!("bad host `{s}`"))
}

/// Reads a log written by [`export_shiviz`].
pub fn parse_shiviz(text: &str) -> Result<Vec<ShivizEntry>, String> {
    let lines: Vec<&str> = text.lines().collect();
    if !lines.len().is_multiple_of(2) {
        return Err("odd number of lines".into());
    }
    let mut out = Vec::with_capacity(lines.len() / 2);
    for (i, pair) in lines.chunks(2).enumerate() {
        let err = |m: String| format!("entry {}: {m}", i + 1);
        let (h, ev) = pair[0].split_once(' ').ok_or_else(|| err("missing event".into()))?;
        let (kind, site) = ev.split_once('@').ok_or_else(|| err("missing `@`".into()))?;
        let (h2, clock) = pair[1].split_once(' ').ok_or_else(|| err("missing clock".into()))?;
        if h != h2 {
            return Err(err(format!("host mismatch {h} / {h2}")));
        }
        let raw: BTreeMap<String, u32> = serde_json::from_str(clock).map_err(|e| err(e.to_string()))?;
        let clock = raw.into_iter().map(|(k, v)| Ok((host(&k)?, v))).collect::<Result<_, String>>().map_err(err)?;
        out.push(ShivizEntry { g: host(h).map_err(err)?, kind: kind.parse().map_err(err)?, site: site.to_string(), clock });
    }
    Ok(out)
}
