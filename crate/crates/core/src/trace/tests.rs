use std::collections::BTreeSet;
use std::fs;

use super::*;
use crate::dsl::check;
use crate::event::{ResKind, Site};
use crate::runtime::{run, SchedulerConfig};

const MOBY: &str = include_str!("../../corpus/moby28462.csp");

fn bundle(src: &str, name: &str, config: &SchedulerConfig, arg0: Option<i64>) -> TraceBundle {
    let p = check(src, name).unwrap();
    let r = run(&p, config, arg0).unwrap();
    TraceBundle::from_run("r1", name, &r, config, arg0)
}

fn leaky_moby() -> TraceBundle {
    let line = MOBY.lines().position(|l| l.trim() == "lock m").unwrap() as u32 + 1;
    let cps = BTreeSet::from([Site { file: "moby28462.csp".into(), line }]);
    bundle(MOBY, "moby28462.csp", &SchedulerConfig::delay_inject(1, 1.0, 10, cps), None)
}

#[test]
fn empty_main_has_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    let path = save(&b, dir.path(), false).unwrap();
    let text = fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,ts,g,kind,res_kind,res_id,value,aux,stack_id");
    assert_eq!(lines.len(), 6);
    let kinds: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(kinds, ["RUN_BEGIN", "GO_CREATE", "GO_START", "GO_END", "RUN_END"]);
    assert_eq!(lines[2], "1,1,0,GO_CREATE,,,1,,1");
    let frames = fs::read_to_string(path.join(STACKS_FILE)).unwrap();
    assert!(frames.starts_with("stack_id,depth,func,file,line\n"));
    let args = fs::read_to_string(path.join(ARGUMENTS_FILE)).unwrap();
    assert!(args.starts_with("event_id,position,name,value\n0,0,program,e.csp\n"));
}

#[test]
fn select_arguments_of_leaky_run() {
    let b = leaky_moby();
    let c1 = b.events_of_kind(EventKind::CH_MAKE)[0].resource.unwrap().id;
    let pre = b.events_of_kind(EventKind::SELECT_PRE)[0];
    let args: Vec<(&str, &str)> = b.trace.args_of(pre.id).iter().map(|a| (a.name.as_str(), a.value.as_str())).collect();
    assert_eq!(args, vec![("case0_dir", "RECV"), ("case0_res", c1.to_string().as_str()), ("default", "1")]);
}

#[test]
fn refuses_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    save(&b, dir.path(), false).unwrap();
    assert!(matches!(save(&b, dir.path(), false), Err(StoreError::Exists(_))));
    save(&b, dir.path(), true).unwrap();
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers, vec!["r1"]);
}

#[test]
fn round_trip_and_byte_identity() {
    let dir = tempfile::tempdir().unwrap();
    for (i, b) in [leaky_moby(), bundle(MOBY, "moby28462.csp", &SchedulerConfig::random(3), None)].into_iter().enumerate() {
        let b = TraceBundle { run_id: format!("x{i}"), meta: Meta { run_id: format!("x{i}"), ..b.meta }, ..b };
        let path = save(&b, dir.path(), false).unwrap();
        let back = load(dir.path(), &b.run_id).unwrap();
        assert_eq!(back, b);
        let first = fs::read(path.join(EVENTS_FILE)).unwrap();
        let again = save(&back, dir.path(), true).unwrap();
        assert_eq!(fs::read(again.join(EVENTS_FILE)).unwrap(), first);
    }
}

#[test]
fn dangling_stack_id_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    let path = save(&b, dir.path(), false).unwrap();
    let text = fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = &mut lines[4];
    let cut = row.rfind(',').unwrap();
    row.replace_range(cut + 1.., "99");
    fs::write(path.join(EVENTS_FILE), lines.join("\n") + "\n").unwrap();
    match load(dir.path(), "r1") {
        Err(StoreError::DanglingKey { file, row, .. }) => assert_eq!((file, row), (EVENTS_FILE, 4)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dangling_argument_event() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    let path = save(&b, dir.path(), false).unwrap();
    let mut text = fs::read_to_string(path.join(ARGUMENTS_FILE)).unwrap();
    text.push_str("40,0,x,y\n");
    fs::write(path.join(ARGUMENTS_FILE), text).unwrap();
    assert!(matches!(load(dir.path(), "r1"), Err(StoreError::DanglingKey { file: ARGUMENTS_FILE, .. })));
}

#[test]
fn truncated_file_is_malformed_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let b = leaky_moby();
    let path = save(&b, dir.path(), false).unwrap();
    let text = fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
    let cut = &text[..text.len() / 2];
    let cut = &cut[..cut.rfind(',').unwrap()];
    fs::write(path.join(EVENTS_FILE), cut).unwrap();
    assert!(matches!(load(dir.path(), "r1"), Err(StoreError::Malformed { file: EVENTS_FILE, .. })));
}

#[test]
fn missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    let path = save(&b, dir.path(), false).unwrap();
    fs::remove_file(path.join(META_FILE)).unwrap();
    assert!(matches!(load(dir.path(), "r1"), Err(StoreError::Missing(_))));
    assert!(matches!(load(dir.path(), "nope"), Err(StoreError::Missing(_))));
    assert!(matches!(load(dir.path(), "../x"), Err(StoreError::InvalidRunId(_))));
}

#[test]
fn query_helpers() {
    let b = bundle("func main() { }", "e.csp", &SchedulerConfig::fifo(0), None);
    assert_eq!(b.final_event(1).unwrap().kind, EventKind::GO_END);
    assert!(b.final_event(42).is_none());
    assert!(b.events_by_goroutine(42).is_empty());

    let leaky = leaky_moby();
    let monitor = leaky.events_of_kind(EventKind::GO_CREATE)[1].value.unwrap() as u32;
    let last = leaky.final_event(monitor).unwrap();
    assert_eq!((last.kind, last.resource.unwrap().kind), (EventKind::GO_BLOCK, ResKind::MUTEX));
    let m = last.resource.unwrap();
    assert!(leaky.events_on_resource(m).iter().all(|e| e.resource == Some(m)));

    let sieve = bundle(include_str!("../../corpus/primesieve.csp"), "primesieve.csp", &SchedulerConfig::fifo(0), Some(4));
    assert_eq!(sieve.events_of_kind(EventKind::CH_MAKE).len(), 5);
    assert_eq!(sieve.goroutines(), vec![1, 2, 3, 4, 5, 6]);
}
