use std::collections::BTreeSet;

use crate::event::{Category, Site};
use crate::trace::TraceBundle;

/// Source lines of every concurrency operation seen in the bundles.
pub fn critical_points<'a>(bundles: impl IntoIterator<Item = &'a TraceBundle>) -> BTreeSet<Site> {
    let mut out = BTreeSet::new();
    for b in bundles {
        for e in &b.trace.events {
            if e.kind.category() == Category::Concurrency {
                out.extend(b.trace.site(e));
            }
        }
    }
    out
}
