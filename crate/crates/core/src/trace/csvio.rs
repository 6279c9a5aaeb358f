use serde::{Deserialize, Serialize};

use super::{StoreError, ARGUMENTS_FILE, EVENTS_FILE, STACKS_FILE};
use crate::event::{Argument, Event, EventKind, Frame, ResKind, ResourceRef, StackTable};

#[derive(Serialize, Deserialize)]
struct EventRow {
    id: u32,
    ts: u64,
    g: u32,
    kind: String,
    res_kind: Option<String>,
    res_id: Option<u32>,
    value: Option<i64>,
    aux: Option<i64>,
    stack_id: u32,
}

#[derive(Serialize, Deserialize)]
struct FrameRow {
    stack_id: u32,
    depth: u32,
    func: String,
    file: String,
    line: u32,
}

#[derive(Serialize, Deserialize)]
struct ArgumentRow {
    event_id: u32,
    position: u32,
    name: String,
    value: String,
}

const EVENT_HEADER: [&str; 9] = ["id", "ts", "g", "kind", "res_kind", "res_id", "value", "aux", "stack_id"];
const FRAME_HEADER: [&str; 5] = ["stack_id", "depth", "func", "file", "line"];
const ARGUMENT_HEADER: [&str; 4] = ["event_id", "position", "name", "value"];

fn write_table<R: Serialize>(header: &[&str], rows: impl Iterator<Item = R>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub(super) fn events_csv(events: &[Event]) -> Vec<u8> {
    write_table(
        &EVENT_HEADER,
        events.iter().map(|e| EventRow {
            id: e.id,
            ts: e.ts,
            g: e.g,
            kind: e.kind.to_string(),
            res_kind: e.resource.map(|r| r.kind.to_string()),
            res_id: e.resource.map(|r| r.id),
            value: e.value,
            aux: e.aux,
            stack_id: e.stack_id,
        }),
    )
}

pub(super) fn stacks_csv(stacks: &StackTable) -> Vec<u8> {
    let rows = stacks.iter().flat_map(|(id, frames)| {
        frames.iter().enumerate().map(move |(depth, f)| FrameRow {
            stack_id: id,
            depth: depth as u32,
            func: f.func.clone(),
            file: f.file.clone(),
            line: f.line,
        })
    });
    write_table(&FRAME_HEADER, rows)
}

pub(super) fn arguments_csv(args: &[Argument]) -> Vec<u8> {
    write_table(
        &ARGUMENT_HEADER,
        args.iter().map(|a| ArgumentRow {
            event_id: a.event_id,
            position: a.position,
            name: a.name.clone(),
            value: a.value.clone(),
        }),
    )
}

/// Deserializes every data row; rows are numbered from 1 after the header.
fn read_table<R: for<'de> Deserialize<'de>>(file: &'static str, bytes: &[u8], header: &[&str]) -> Result<Vec<R>, StoreError> {
    let malformed = |row, message: String| StoreError::Malformed { file, row, message };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let found = r.headers().map_err(|e| malformed(0, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(0, format!("expected header `{}`", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| malformed(i + 1, e.to_string()))?);
    }
    Ok(rows)
}

pub(super) fn parse_stacks(bytes: &[u8]) -> Result<StackTable, StoreError> {
    let rows: Vec<FrameRow> = read_table(STACKS_FILE, bytes, &FRAME_HEADER)?;
    let mut table = StackTable::new();
    let mut current: Option<(u32, Vec<Frame>)> = None;
    for (i, row) in rows.into_iter().enumerate() {
        let malformed = |message: String| StoreError::Malformed { file: STACKS_FILE, row: i + 1, message };
        let frame = Frame { func: row.func, file: row.file, line: row.line };
        match &mut current {
            Some((id, frames)) if *id == row.stack_id => {
                if row.depth as usize != frames.len() {
                    return Err(malformed(format!("depth {} out of order", row.depth)));
                }
                frames.push(frame);
            }
            _ => {
                if let Some((id, frames)) = current.take() {
                    table.push_with_id(id, frames);
                }
                if row.stack_id as usize != table.len() + 1 {
                    return Err(malformed(format!("stack_id {} out of sequence", row.stack_id)));
                }
                if row.depth != 0 {
                    return Err(malformed(format!("stack {} does not start at depth 0", row.stack_id)));
                }
                current = Some((row.stack_id, vec![frame]));
            }
        }
    }
    if let Some((id, frames)) = current {
        table.push_with_id(id, frames);
    }
    Ok(table)
}

pub(super) fn parse_events(bytes: &[u8], stacks: &StackTable) -> Result<Vec<Event>, StoreError> {
    let rows: Vec<EventRow> = read_table(EVENTS_FILE, bytes, &EVENT_HEADER)?;
    let mut events: Vec<Event> = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let malformed = |message: String| StoreError::Malformed { file: EVENTS_FILE, row: i + 1, message };
        if row.id as usize != i {
            return Err(malformed(format!("event id {} is not dense (expected {i})", row.id)));
        }
        if let Some(prev) = events.last() {
            if row.ts <= prev.ts {
                return Err(malformed(format!("ts {} does not increase", row.ts)));
            }
        }
        let kind: EventKind = row.kind.parse().map_err(malformed)?;
        let resource = match (row.res_kind, row.res_id) {
            (None, None) => None,
            (Some(k), Some(id)) => Some(ResourceRef { kind: k.parse::<ResKind>().map_err(malformed)?, id }),
            _ => return Err(malformed("res_kind and res_id must be both present or both empty".into())),
        };
        if stacks.get(row.stack_id).is_none() {
            return Err(StoreError::DanglingKey {
                file: EVENTS_FILE,
                row: i + 1,
                message: format!("stack_id {} not in {STACKS_FILE}", row.stack_id),
            });
        }
        events.push(Event { id: row.id, ts: row.ts, g: row.g, kind, resource, value: row.value, aux: row.aux, stack_id: row.stack_id });
    }
    Ok(events)
}

pub(super) fn parse_arguments(bytes: &[u8], n_events: usize) -> Result<Vec<Argument>, StoreError> {
    let rows: Vec<ArgumentRow> = read_table(ARGUMENTS_FILE, bytes, &ARGUMENT_HEADER)?;
    let mut args: Vec<Argument> = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if row.event_id as usize >= n_events {
            return Err(StoreError::DanglingKey {
                file: ARGUMENTS_FILE,
                row: i + 1,
                message: format!("event_id {} not in {EVENTS_FILE}", row.event_id),
            });
        }
        if let Some(prev) = args.last() {
            if (row.event_id, row.position) <= (prev.event_id, prev.position) {
                return Err(StoreError::Malformed {
                    file: ARGUMENTS_FILE,
                    row: i + 1,
                    message: "rows not ordered by (event_id, position)".into(),
                });
            }
        }
        args.push(Argument { event_id: row.event_id, position: row.position, name: row.name, value: row.value });
    }
    Ok(args)
}
