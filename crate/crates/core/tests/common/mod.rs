#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use ectsim::dsl::check;
use ectsim::event::{EventKind, Trace};
use ectsim::runtime::{run, RunOutcome, SchedulerConfig};
use ectsim::trace::TraceBundle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn execute(src: &str, name: &str, config: &SchedulerConfig, arg0: Option<i64>) -> (TraceBundle, RunOutcome) {
    let p = check(src, name).unwrap_or_else(|d| panic!("{name}: {d:?}"));
    let r = run(&p, config, arg0).unwrap();
    (TraceBundle::from_run("run", name, &r, config, arg0), r.outcome)
}

/// First `n` primes by trial division.
pub fn primes(n: usize) -> Vec<i64> {
    let mut out = Vec::new();
    let mut k = 2i64;
    while out.len() < n {
        if (2..k).take_while(|d| d * d <= k).all(|d| k % d != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// A small random program: a few workers doing channel, mutex and select
/// operations on shared resources, joined with a wait group.
pub fn random_program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let workers = rng.gen_range(1..=3);
    let mut src = String::new();
    let params = "c0: chan, c1: chan, m: mutex, w: wg";
    for k in 0..workers {
        src.push_str(&format!("func W{k}({params}) {{\n"));
        body(&mut rng, &mut src);
        src.push_str("    done w\n}\n");
    }
    src.push_str("func main() {\n");
    src.push_str(&format!("    c0 = make(chan)\n    c1 = make(chan, {})\n", rng.gen_range(0..3)));
    src.push_str(&format!("    m = mutex()\n    w = wg()\n    add w {workers}\n"));
    for k in 0..workers {
        src.push_str(&format!("    go W{k}(c0, c1, m, w)\n"));
    }
    body(&mut rng, &mut src);
    src.push_str("    wait w\n}\n");
    src
}

fn body(rng: &mut ChaCha8Rng, src: &mut String) {
    for _ in 0..rng.gen_range(1..=4) {
        let c = if rng.gen_bool(0.5) { "c0" } else { "c1" };
        match rng.gen_range(0..7) {
            0 | 1 => src.push_str(&format!("    send {c} {}\n", rng.gen_range(0..9))),
            2 | 3 => src.push_str(&format!("    recv {c}\n")),
            4 => src.push_str("    lock m\n    yield\n    unlock m\n"),
            5 => src.push_str("    yield\n"),
            _ => {
                src.push_str(&format!("    select {{\n    case send {c} 1 {{\n        skip\n    }}\n    case recv c1 {{\n        skip\n    }}\n"));
                if rng.gen_bool(0.5) {
                    src.push_str("    default {\n        skip\n    }\n");
                }
                src.push_str("    }\n");
            }
        }
    }
}

fn arg<'a>(t: &'a Trace, id: u32, name: &str) -> Option<&'a str> {
    t.arguments.iter().find(|a| a.event_id == id && a.name == name).map(|a| a.value.as_str())
}

/// Happens-before by brute force: reach[a][b] iff a path of program-order
/// and synchronization edges leads from event a to event b.
pub fn reachability(t: &Trace) -> Vec<Vec<bool>> {
    let n = t.events.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut add = |a: usize, b: usize| succ[a].push(b);

    let mut prev: HashMap<u32, usize> = HashMap::new();
    for (i, e) in t.events.iter().enumerate() {
        if let Some(p) = prev.insert(e.g, i) {
            add(p, i);
        }
    }
    for (i, e) in t.events.iter().enumerate() {
        if e.kind == EventKind::GO_CREATE {
            let child = e.value.unwrap() as u32;
            if let Some(j) = t.events.iter().position(|x| x.g == child) {
                add(i, j);
            }
        }
    }
    // channels: k-th send completion with the k-th value-carrying receive
    let mut sends: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut recvs: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, e) in t.events.iter().enumerate() {
        let Some(r) = e.resource else { continue };
        let dir = arg(t, e.id, "dir");
        let send = e.kind == EventKind::CH_SEND_POST || (e.kind == EventKind::SELECT_POST && dir == Some("SEND"));
        let recv = e.kind == EventKind::CH_RECV_POST || (e.kind == EventKind::SELECT_POST && dir == Some("RECV"));
        let closed = (e.kind == EventKind::CH_RECV_POST && e.aux == Some(1)) || (recv && arg(t, e.id, "closed") == Some("1"));
        if send {
            sends.entry(r.id).or_default().push(i);
        } else if recv && closed {
            let close = t.events[..i].iter().position(|x| x.kind == EventKind::CH_CLOSE && x.resource == Some(r)).unwrap();
            add(close, i);
        } else if recv {
            recvs.entry(r.id).or_default().push(i);
        }
    }
    for (c, rs) in &recvs {
        for (s, r) in sends[c].iter().zip(rs) {
            add(*s, *r);
        }
    }
    // mutexes (a condition wait releases and reacquires its mutex)
    let mutex_of = |i: usize| -> Option<u32> {
        let e = &t.events[i];
        match e.kind {
            EventKind::MU_LOCK_POST | EventKind::MU_UNLOCK => e.resource.map(|r| r.id),
            EventKind::CV_WAIT_PRE | EventKind::CV_WAIT_POST => arg(t, e.id, "mutex").and_then(|m| m.parse().ok()),
            _ => None,
        }
    };
    for (i, e) in t.events.iter().enumerate() {
        if !matches!(e.kind, EventKind::MU_LOCK_POST | EventKind::CV_WAIT_POST) {
            continue;
        }
        let m = mutex_of(i).unwrap();
        let release = (0..i).rev().find(|&j| matches!(t.events[j].kind, EventKind::MU_UNLOCK | EventKind::CV_WAIT_PRE) && mutex_of(j) == Some(m));
        if let Some(j) = release {
            add(j, i);
        }
    }
    // wait groups: every decrement before the wait returns
    for (i, e) in t.events.iter().enumerate() {
        if e.kind == EventKind::WG_WAIT_POST {
            for j in 0..i {
                let x = &t.events[j];
                if x.kind == EventKind::WG_ADD && x.resource == e.resource && x.value.unwrap_or(0) < 0 {
                    add(j, i);
                }
            }
        }
    }
    // condition variables: signals wake waiters in arrival order
    let mut queues: HashMap<u32, VecDeque<(u32, usize)>> = HashMap::new();
    let mut waker: HashMap<u32, usize> = HashMap::new();
    for (i, e) in t.events.iter().enumerate() {
        let c = e.resource.map(|r| r.id).unwrap_or(0);
        match e.kind {
            EventKind::CV_WAIT_PRE => queues.entry(c).or_default().push_back((e.g, i)),
            EventKind::CV_SIGNAL => {
                if let Some((g, _)) = queues.entry(c).or_default().pop_front() {
                    waker.insert(g, i);
                }
            }
            EventKind::CV_BROADCAST => {
                for (g, _) in queues.entry(c).or_default().drain(..) {
                    waker.insert(g, i);
                }
            }
            EventKind::CV_WAIT_POST => {
                if let Some(j) = waker.remove(&e.g) {
                    add(j, i);
                }
            }
            _ => {}
        }
    }

    let mut reach = vec![vec![false; n]; n];
    for a in (0..n).rev() {
        for &b in &succ[a] {
            assert!(b > a, "edge {a} -> {b} goes backwards");
            reach[a][b] = true;
            let (lo, hi) = reach.split_at_mut(b);
            for (x, y) in lo[a].iter_mut().zip(&hi[0]) {
                *x |= *y;
            }
        }
    }
    reach
}
