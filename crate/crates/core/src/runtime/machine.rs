use std::collections::{HashMap, VecDeque};

use super::sched::{PointKind, Scheduler};
use super::{BlockInfo, FaultKind, GoStatus, GoroutineSummary, RunOutcome, RunResult, RunStatus, SchedulerConfig};
use crate::dsl::*;
use crate::event::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Int(i64),
    Res(ResourceId),
}

#[derive(Debug, Clone, Copy)]
struct Waiter {
    g: GoroutineId,
    /// Select case index, or None for a plain send/recv.
    case: Option<usize>,
    value: i64,
}

#[derive(Debug, Default)]
struct Chan {
    cap: usize,
    buf: VecDeque<i64>,
    closed: bool,
    senders: VecDeque<Waiter>,
    receivers: VecDeque<Waiter>,
}

#[derive(Debug, Clone, Copy)]
enum MutexWaiter {
    Lock(GoroutineId),
    /// A condition waiter that was signalled and now needs the mutex back.
    Reacquire(GoroutineId, ResourceId),
}

#[derive(Debug, Default)]
struct Mutex {
    owner: Option<GoroutineId>,
    waiters: VecDeque<MutexWaiter>,
}

#[derive(Debug, Default)]
struct WaitGroup {
    counter: i64,
    waiters: Vec<GoroutineId>,
}

#[derive(Debug)]
struct CondVar {
    mutex: ResourceId,
    waiters: VecDeque<GoroutineId>,
}

#[derive(Debug)]
enum Object {
    Chan(Chan),
    Mutex(Mutex),
    Wg(WaitGroup),
    Cond(CondVar),
}

impl Object {
    fn kind(&self) -> ResKind {
        match self {
            Object::Chan(_) => ResKind::CHAN,
            Object::Mutex(_) => ResKind::MUTEX,
            Object::Wg(_) => ResKind::WG,
            Object::Cond(_) => ResKind::COND,
        }
    }
}

enum Ctl<'p> {
    Block { stmts: &'p [Stmt], pc: usize },
    For { var: &'p str, next: i64, hi: i64, body: &'p [Stmt], loc: &'p SourceLoc },
    Loop { body: &'p [Stmt], loc: &'p SourceLoc },
}

#[derive(Clone, Copy)]
enum Pending<'p> {
    Stmt(&'p Stmt),
    BackEdge(&'p SourceLoc),
    FuncEnd(&'p SourceLoc),
}

impl<'p> Pending<'p> {
    fn loc(&self) -> &'p SourceLoc {
        match self {
            Pending::Stmt(s) => &s.loc,
            Pending::BackEdge(l) | Pending::FuncEnd(l) => l,
        }
    }

    /// Returning hands the processor over after `GO_END` rather than before,
    /// so a goroutine's last operation and its end are never split.
    fn is_return(&self) -> bool {
        matches!(self, Pending::FuncEnd(_) | Pending::Stmt(Stmt { kind: StmtKind::Return, .. }))
    }

    fn point_kind(&self) -> PointKind {
        match self {
            Pending::Stmt(Stmt { kind: StmtKind::Yield, .. }) | Pending::BackEdge(_) => PointKind::Rotate,
            _ => PointKind::Other,
        }
    }
}

/// What a blocked goroutine is waiting to complete.
enum Blocked<'p> {
    Send,
    Recv { target: Option<&'p str> },
    Lock,
    WgWait,
    CvWait,
    Select { cases: &'p [SelectCase], chans: Vec<ResourceId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Runnable,
    Running,
    Blocked,
    Done,
}

struct Goroutine<'p> {
    id: GoroutineId,
    parent: GoroutineId,
    func: &'p FuncDecl,
    state: State,
    ctl: Vec<Ctl<'p>>,
    locals: HashMap<&'p str, Value>,
    pending: Option<Pending<'p>>,
    /// Set once the delay coin was flipped for the current pending point.
    coin_flipped: bool,
    started: bool,
    last_loc: &'p SourceLoc,
    blocked: Option<(Blocked<'p>, &'p SourceLoc)>,
    block_info: Option<BlockInfo>,
}

/// Why the current goroutine stopped running.
enum Step {
    Continue,
    Parked,
    MainEnded,
    Stop(RunStatus),
}

pub(super) struct Machine<'p> {
    program: &'p Program,
    file: String,
    runtime_loc: &'p SourceLoc,
    max_steps: u64,
    sched: Scheduler,
    goroutines: Vec<Goroutine<'p>>,
    objects: Vec<Object>,
    trace: Trace,
    steps: u64,
    outputs: Vec<i64>,
    policy_desc: (String, u64, i64),
}

type Eval<T> = Result<T, RunStatus>;

impl<'p> Machine<'p> {
    pub fn new(program: &'p CheckedProgram, config: &SchedulerConfig, arg0: i64) -> Self {
        let program = program.program();
        let main = program.main().expect("checked program has main");
        let mut m = Machine {
            program,
            file: program.file.to_string(),
            runtime_loc: &main.loc,
            max_steps: config.max_steps,
            sched: Scheduler::new(config, &program.file),
            goroutines: Vec::new(),
            objects: Vec::new(),
            trace: Trace::default(),
            steps: 0,
            outputs: Vec::new(),
            policy_desc: (config.policy.to_string(), config.seed, arg0),
        };
        let mut locals = HashMap::new();
        locals.insert(reserved::ARG0, Value::Int(arg0));
        m.spawn(RUNTIME_G, main, locals);
        m
    }

    pub fn execute(mut self) -> RunResult {
        let (policy, seed, arg0) = self.policy_desc.clone();
        let args = vec![("program", self.file.clone()), ("policy", policy), ("seed", seed.to_string()), ("arg0", arg0.to_string())];
        self.emit_runtime(EventKind::RUN_BEGIN, args);
        self.emit(RUNTIME_G, EventKind::GO_CREATE, None, Some(MAIN_G as i64), None, self.runtime_loc, "runtime", vec![("func", "main".to_string())]);
        self.goroutines[0].state = State::Running;
        self.goroutines[0].started = true;
        let main_loc: &'p SourceLoc = &self.goroutines[0].func.loc;
        self.emit_g(MAIN_G, EventKind::GO_START, None, None, None, main_loc);

        let status = self.schedule_loop();
        self.finish(status)
    }

    fn schedule_loop(&mut self) -> RunStatus {
        let mut cur = MAIN_G;
        // A goroutine just switched in runs its pending operation without a
        // fresh decision, unless the delay coin deschedules it.
        let mut fresh = true;
        loop {
            let pending = match self.pending_of(cur) {
                Ok(p) => p,
                Err(status) => return status,
            };
            let gi = cur as usize - 1;
            let mut delayed = false;
            if !self.goroutines[gi].coin_flipped && self.sched.is_critical(pending.loc().line) {
                self.goroutines[gi].coin_flipped = true;
                delayed = self.sched.maybe_delay(cur);
            }
            if (!fresh && !pending.is_return()) || delayed {
                let next = self.sched.decide(cur, pending.point_kind());
                if next != cur {
                    self.goroutines[gi].state = State::Runnable;
                    self.switch_to(next, cur);
                    cur = next;
                    fresh = true;
                    continue;
                }
            }
            fresh = false;

            if self.steps >= self.max_steps {
                return RunStatus::WatchdogTimeout;
            }
            self.steps += 1;
            let g = &mut self.goroutines[gi];
            g.pending = None;
            g.coin_flipped = false;
            g.last_loc = pending.loc();
            match self.exec(cur, pending) {
                Step::Continue => {}
                Step::MainEnded => return RunStatus::Completed,
                Step::Stop(status) => return status,
                Step::Parked => match self.sched.pick_next() {
                    Some(next) => {
                        self.switch_to(next, cur);
                        cur = next;
                        fresh = true;
                    }
                    None => return RunStatus::GlobalDeadlock,
                },
            }
        }
    }

    fn switch_to(&mut self, next: GoroutineId, prev: GoroutineId) {
        let g = &mut self.goroutines[next as usize - 1];
        g.state = State::Running;
        let first = !g.started;
        g.started = true;
        let loc = g.last_loc;
        self.emit_g(next, EventKind::SCHED_SWITCH, None, Some(prev as i64), None, loc);
        if first {
            self.emit_g(next, EventKind::GO_START, None, None, None, loc);
        }
    }

    fn finish(mut self, status: RunStatus) -> RunResult {
        let mut args = vec![("status", status.name().to_string())];
        if let RunStatus::Fault { kind, loc, g } = &status {
            args.push(("fault", kind.to_string()));
            args.push(("fault_g", g.to_string()));
            args.push(("fault_loc", loc.to_string()));
        }
        self.emit_runtime(EventKind::RUN_END, args);

        let main_done = status == RunStatus::Completed;
        let goroutines = self
            .goroutines
            .iter()
            .map(|g| {
                let status = match g.state {
                    State::Done => GoStatus::Done,
                    State::Running => GoStatus::Running,
                    State::Runnable if main_done => GoStatus::Killed(None),
                    State::Runnable => GoStatus::Runnable,
                    State::Blocked => {
                        let info = g.block_info.clone().expect("blocked goroutine has block info");
                        if main_done {
                            GoStatus::Killed(Some(info))
                        } else {
                            GoStatus::Blocked(info)
                        }
                    }
                };
                GoroutineSummary { id: g.id, parent: g.parent, func: g.func.name.clone(), status }
            })
            .collect();
        RunResult {
            trace: self.trace,
            outcome: RunOutcome { status, goroutines, steps: self.steps, outputs: self.outputs },
        }
    }

    // ---- events ----

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        g: GoroutineId,
        kind: EventKind,
        resource: Option<ResourceRef>,
        value: Option<i64>,
        aux: Option<i64>,
        loc: &SourceLoc,
        func: &str,
        args: Vec<(&str, String)>,
    ) -> u32 {
        let id = self.trace.events.len() as u32;
        let frame = Frame { func: func.to_string(), file: loc.file.to_string(), line: loc.line };
        let stack_id = self.trace.stacks.intern(vec![frame]);
        self.trace.events.push(Event { id, ts: self.steps + id as u64, g, kind, resource, value, aux, stack_id });
        for (position, (name, value)) in args.into_iter().enumerate() {
            self.trace.arguments.push(Argument { event_id: id, position: position as u32, name: name.to_string(), value });
        }
        id
    }

    fn emit_runtime(&mut self, kind: EventKind, args: Vec<(&str, String)>) {
        let loc = self.runtime_loc;
        self.emit(RUNTIME_G, kind, None, None, None, loc, "runtime", args);
    }

    /// Emits an event on behalf of goroutine `g` at `loc`.
    fn emit_g(&mut self, g: GoroutineId, kind: EventKind, res: Option<ResourceRef>, value: Option<i64>, aux: Option<i64>, loc: &SourceLoc) -> u32 {
        self.emit_ga(g, kind, res, value, aux, loc, vec![])
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_ga(
        &mut self,
        g: GoroutineId,
        kind: EventKind,
        res: Option<ResourceRef>,
        value: Option<i64>,
        aux: Option<i64>,
        loc: &SourceLoc,
        args: Vec<(&str, String)>,
    ) -> u32 {
        let decl: &'p FuncDecl = self.goroutines[g as usize - 1].func;
        self.emit(g, kind, res, value, aux, loc, &decl.name, args)
    }

    // ---- goroutines ----

    fn spawn(&mut self, parent: GoroutineId, func: &'p FuncDecl, locals: HashMap<&'p str, Value>) -> GoroutineId {
        let id = self.goroutines.len() as GoroutineId + 1;
        self.goroutines.push(Goroutine {
            id,
            parent,
            func,
            state: State::Runnable,
            ctl: vec![Ctl::Block { stmts: &func.body, pc: 0 }],
            locals,
            pending: None,
            coin_flipped: false,
            started: false,
            last_loc: &func.loc,
            blocked: None,
            block_info: None,
        });
        id
    }

    fn g(&mut self, g: GoroutineId) -> &mut Goroutine<'p> {
        &mut self.goroutines[g as usize - 1]
    }

    /// Runs pure statements of `g` until it reaches its next scheduling point.
    fn pending_of(&mut self, g: GoroutineId) -> Eval<Pending<'p>> {
        if let Some(p) = self.g(g).pending {
            return Ok(p);
        }
        loop {
            let gr = self.g(g);
            let Some(top) = gr.ctl.last_mut() else {
                let p = Pending::FuncEnd(&gr.func.end_loc);
                gr.pending = Some(p);
                return Ok(p);
            };
            let stmt = match top {
                Ctl::Block { stmts, pc } => {
                    if *pc >= stmts.len() {
                        gr.ctl.pop();
                        match gr.ctl.last() {
                            Some(Ctl::For { loc, .. }) | Some(Ctl::Loop { loc, .. }) => {
                                let p = Pending::BackEdge(loc);
                                gr.pending = Some(p);
                                return Ok(p);
                            }
                            _ => continue,
                        }
                    }
                    let s: &'p Stmt = &stmts[*pc];
                    if is_scheduling_point(s) {
                        gr.pending = Some(Pending::Stmt(s));
                        return Ok(Pending::Stmt(s));
                    }
                    *pc += 1;
                    s
                }
                Ctl::For { .. } | Ctl::Loop { .. } => unreachable!("loop bodies sit above their loop frame"),
            };
            if self.steps >= self.max_steps {
                return Err(RunStatus::WatchdogTimeout);
            }
            self.steps += 1;
            self.g(g).last_loc = &stmt.loc;
            self.exec_pure(g, stmt)?;
        }
    }

    fn exec_pure(&mut self, g: GoroutineId, s: &'p Stmt) -> Eval<()> {
        match &s.kind {
            StmtKind::Assign { target, value, .. } => {
                let v = match value.as_var().and_then(|n| self.g(g).locals.get(n).copied()) {
                    Some(Value::Res(r)) => Value::Res(r),
                    _ => Value::Int(self.eval(g, value)?),
                };
                self.g(g).locals.insert(target, v);
            }
            StmtKind::MakeMutex { target } => {
                let id = self.new_object(Object::Mutex(Mutex::default()));
                self.g(g).locals.insert(target, Value::Res(id));
            }
            StmtKind::MakeWg { target } => {
                let id = self.new_object(Object::Wg(WaitGroup::default()));
                self.g(g).locals.insert(target, Value::Res(id));
            }
            StmtKind::MakeCond { target, mutex } => {
                let m = self.res(g, mutex);
                let id = self.new_object(Object::Cond(CondVar { mutex: m, waiters: VecDeque::new() }));
                self.g(g).locals.insert(target, Value::Res(id));
            }
            StmtKind::If { cond, then_body, else_body } => {
                if self.eval(g, cond)? != 0 {
                    self.g(g).ctl.push(Ctl::Block { stmts: then_body, pc: 0 });
                } else if let Some(e) = else_body {
                    self.g(g).ctl.push(Ctl::Block { stmts: e, pc: 0 });
                }
            }
            StmtKind::ForRange { var, lo, hi, body } => {
                let lo = self.eval(g, lo)?;
                let hi = self.eval(g, hi)?;
                if lo < hi {
                    let gr = self.g(g);
                    gr.locals.insert(var, Value::Int(lo));
                    gr.ctl.push(Ctl::For { var, next: lo, hi, body, loc: &s.loc });
                    gr.ctl.push(Ctl::Block { stmts: body, pc: 0 });
                }
            }
            StmtKind::Skip => {}
            _ => unreachable!("not a pure statement"),
        }
        Ok(())
    }

    fn eval(&mut self, g: GoroutineId, e: &'p Expr) -> Eval<i64> {
        Ok(match &e.kind {
            ExprKind::Int(n) => *n,
            ExprKind::Var(name) => match self.g(g).locals.get(name.as_str()) {
                Some(Value::Int(n)) => *n,
                other => unreachable!("validated int variable {name}: {other:?}"),
            },
            ExprKind::Unary(UnOp::Neg, inner) => self.eval(g, inner)?.wrapping_neg(),
            ExprKind::Unary(UnOp::Not, inner) => (self.eval(g, inner)? == 0) as i64,
            ExprKind::Binary(op, l, r) => {
                let a = self.eval(g, l)?;
                // short-circuit boolean operators
                match op {
                    BinOp::And if a == 0 => return Ok(0),
                    BinOp::Or if a != 0 => return Ok(1),
                    _ => {}
                }
                let b = self.eval(g, r)?;
                match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div | BinOp::Rem if b == 0 => {
                        return Err(RunStatus::Fault { kind: FaultKind::DivisionByZero, loc: e.loc.clone(), g })
                    }
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Rem => a.wrapping_rem(b),
                    BinOp::Eq => (a == b) as i64,
                    BinOp::Ne => (a != b) as i64,
                    BinOp::Lt => (a < b) as i64,
                    BinOp::Le => (a <= b) as i64,
                    BinOp::Gt => (a > b) as i64,
                    BinOp::Ge => (a >= b) as i64,
                    BinOp::And | BinOp::Or => (b != 0) as i64,
                }
            }
        })
    }

    fn res(&mut self, g: GoroutineId, name: &str) -> ResourceId {
        match self.g(g).locals.get(name) {
            Some(Value::Res(r)) => *r,
            other => unreachable!("validated resource variable {name}: {other:?}"),
        }
    }

    fn new_object(&mut self, obj: Object) -> ResourceId {
        self.objects.push(obj);
        self.objects.len() as ResourceId
    }

    fn rref(&self, id: ResourceId) -> ResourceRef {
        ResourceRef { kind: self.objects[id as usize - 1].kind(), id }
    }

    fn chan(&mut self, id: ResourceId) -> &mut Chan {
        match &mut self.objects[id as usize - 1] {
            Object::Chan(c) => c,
            _ => unreachable!("resource {id} is not a channel"),
        }
    }

    fn mutex(&mut self, id: ResourceId) -> &mut Mutex {
        match &mut self.objects[id as usize - 1] {
            Object::Mutex(m) => m,
            _ => unreachable!("resource {id} is not a mutex"),
        }
    }

    fn wg(&mut self, id: ResourceId) -> &mut WaitGroup {
        match &mut self.objects[id as usize - 1] {
            Object::Wg(w) => w,
            _ => unreachable!("resource {id} is not a wait group"),
        }
    }

    fn cond(&mut self, id: ResourceId) -> &mut CondVar {
        match &mut self.objects[id as usize - 1] {
            Object::Cond(c) => c,
            _ => unreachable!("resource {id} is not a condition variable"),
        }
    }

    fn fault(kind: FaultKind, loc: &SourceLoc, g: GoroutineId) -> Step {
        Step::Stop(RunStatus::Fault { kind, loc: loc.clone(), g })
    }

    fn assign_recv(&mut self, g: GoroutineId, target: Option<&'p str>, v: i64) {
        if let Some(t) = target {
            self.g(g).locals.insert(t, Value::Int(v));
            if g == MAIN_G && t == reserved::OUT {
                self.outputs.push(v);
            }
        }
    }

    /// Parks `g` and emits its `GO_BLOCK`.
    fn park(&mut self, g: GoroutineId, reason: BlockReason, resources: Vec<ResourceRef>, blocked: Blocked<'p>, loc: &'p SourceLoc) {
        let first = resources[0];
        let gr = self.g(g);
        gr.state = State::Blocked;
        gr.blocked = Some((blocked, loc));
        gr.block_info = Some(BlockInfo { reason, resources });
        self.emit_ga(g, EventKind::GO_BLOCK, Some(first), None, Some(reason.code()), loc, vec![("reason", reason.to_string())]);
    }

    /// Makes a parked goroutine runnable again and emits its `GO_UNBLOCK`.
    fn unpark(&mut self, g: GoroutineId, waker: GoroutineId) -> (Blocked<'p>, &'p SourceLoc) {
        let gr = self.g(g);
        let (blocked, loc) = gr.blocked.take().expect("unparking a blocked goroutine");
        gr.state = State::Runnable;
        gr.block_info = None;
        self.sched.make_runnable(g);
        self.emit_g(g, EventKind::GO_UNBLOCK, None, Some(waker as i64), None, loc);
        (blocked, loc)
    }

    /// Removes a select waiter's registrations from every channel it waits on.
    fn unregister(&mut self, g: GoroutineId) {
        let chans = match &self.g(g).blocked {
            Some((Blocked::Select { chans, .. }, _)) => chans.clone(),
            _ => return,
        };
        for c in chans {
            let ch = self.chan(c);
            ch.senders.retain(|w| w.g != g);
            ch.receivers.retain(|w| w.g != g);
        }
    }

    fn take_receiver(&mut self, chan: ResourceId, me: GoroutineId) -> Option<Waiter> {
        let ch = self.chan(chan);
        let i = ch.receivers.iter().position(|w| w.g != me)?;
        let w = ch.receivers.remove(i)?;
        self.unregister(w.g);
        Some(w)
    }

    fn take_sender(&mut self, chan: ResourceId, me: GoroutineId) -> Option<Waiter> {
        let ch = self.chan(chan);
        let i = ch.senders.iter().position(|w| w.g != me)?;
        let w = ch.senders.remove(i)?;
        self.unregister(w.g);
        Some(w)
    }

    fn select_post_args(dir: Direction, closed: bool) -> Vec<(&'static str, String)> {
        vec![("dir", dir.as_str().to_string()), ("closed", (closed as u8).to_string())]
    }

    /// Completes a parked sender whose value was taken by `waker`.
    fn complete_sender(&mut self, w: Waiter, chan: ResourceId, waker: GoroutineId) {
        let (blocked, loc) = self.unpark(w.g, waker);
        let r = Some(self.rref(chan));
        match (blocked, w.case) {
            (Blocked::Select { cases, .. }, Some(i)) => {
                self.emit_ga(w.g, EventKind::SELECT_POST, r, Some(w.value), Some(i as i64), loc, Self::select_post_args(Direction::Send, false));
                self.g(w.g).ctl.push(Ctl::Block { stmts: &cases[i].body, pc: 0 });
            }
            _ => {
                self.emit_g(w.g, EventKind::CH_SEND_POST, r, Some(w.value), None, loc);
            }
        }
    }

    /// Completes a parked receiver with value `v`.
    fn complete_receiver(&mut self, w: Waiter, chan: ResourceId, v: i64, closed: bool, waker: GoroutineId) {
        let (blocked, loc) = self.unpark(w.g, waker);
        let r = Some(self.rref(chan));
        match (blocked, w.case) {
            (Blocked::Select { cases, .. }, Some(i)) => {
                self.emit_ga(w.g, EventKind::SELECT_POST, r, Some(v), Some(i as i64), loc, Self::select_post_args(Direction::Recv, closed));
                self.assign_recv(w.g, cases[i].target.as_deref(), v);
                self.g(w.g).ctl.push(Ctl::Block { stmts: &cases[i].body, pc: 0 });
            }
            (Blocked::Recv { target }, _) => {
                self.emit_g(w.g, EventKind::CH_RECV_POST, r, Some(v), closed.then_some(1), loc);
                self.assign_recv(w.g, target, v);
            }
            _ => unreachable!("receiver parked on a non-receive operation"),
        }
    }

    /// Hands a free or released mutex to its next waiter, if any.
    fn release_mutex(&mut self, m: ResourceId, waker: GoroutineId) {
        let mx = self.mutex(m);
        mx.owner = None;
        let Some(next) = mx.waiters.pop_front() else { return };
        match next {
            MutexWaiter::Lock(g) => {
                self.mutex(m).owner = Some(g);
                let (_, loc) = self.unpark(g, waker);
                let r = Some(self.rref(m));
                self.emit_g(g, EventKind::MU_LOCK_POST, r, None, None, loc);
            }
            MutexWaiter::Reacquire(g, c) => {
                self.mutex(m).owner = Some(g);
                self.finish_cwait(g, c, m, waker);
            }
        }
    }

    fn finish_cwait(&mut self, g: GoroutineId, c: ResourceId, m: ResourceId, waker: GoroutineId) {
        let (_, loc) = self.unpark(g, waker);
        let r = Some(self.rref(c));
        self.emit_ga(g, EventKind::CV_WAIT_POST, r, None, None, loc, vec![("mutex", m.to_string())]);
    }

    /// A signalled condition waiter either takes the mutex or queues for it.
    fn wake_cond_waiter(&mut self, g: GoroutineId, c: ResourceId, waker: GoroutineId) {
        let m = self.cond(c).mutex;
        if self.mutex(m).owner.is_none() {
            self.mutex(m).owner = Some(g);
            self.finish_cwait(g, c, m, waker);
        } else {
            self.mutex(m).waiters.push_back(MutexWaiter::Reacquire(g, c));
            let r = self.rref(m);
            self.g(g).block_info = Some(BlockInfo { reason: BlockReason::LOCK, resources: vec![r] });
        }
    }

    // ---- scheduling-point statements ----

    fn exec(&mut self, g: GoroutineId, pending: Pending<'p>) -> Step {
        let s = match pending {
            Pending::FuncEnd(loc) => return self.exec_return(g, loc),
            Pending::BackEdge(_) => {
                let gr = self.g(g);
                match gr.ctl.last_mut() {
                    Some(Ctl::For { var, next, hi, body, .. }) => {
                        if *next + 1 < *hi {
                            *next += 1;
                            let (var, n, body) = (*var, *next, *body);
                            gr.locals.insert(var, Value::Int(n));
                            gr.ctl.push(Ctl::Block { stmts: body, pc: 0 });
                        } else {
                            gr.ctl.pop();
                        }
                    }
                    Some(Ctl::Loop { body, .. }) => {
                        let body = *body;
                        gr.ctl.push(Ctl::Block { stmts: body, pc: 0 });
                    }
                    _ => unreachable!("back-edge without a loop frame"),
                }
                return Step::Continue;
            }
            Pending::Stmt(s) => s,
        };
        if let Some(Ctl::Block { pc, .. }) = self.g(g).ctl.last_mut() {
            *pc += 1;
        }
        let loc = &s.loc;
        match &s.kind {
            StmtKind::Yield => Step::Continue,
            StmtKind::Return => self.exec_return(g, loc),
            StmtKind::Loop { body } => {
                let gr = self.g(g);
                gr.ctl.push(Ctl::Loop { body, loc });
                gr.ctl.push(Ctl::Block { stmts: body, pc: 0 });
                Step::Continue
            }
            StmtKind::Go { func, args } => self.exec_go(g, func, args, loc),
            StmtKind::MakeChan { target, capacity } => {
                let cap = match capacity {
                    Some(e) => match self.eval(g, e) {
                        Ok(v) => v,
                        Err(status) => return Step::Stop(status),
                    },
                    None => 0,
                };
                if cap < 0 {
                    return Self::fault(FaultKind::NegativeCapacity, loc, g);
                }
                let id = self.new_object(Object::Chan(Chan { cap: cap as usize, ..Chan::default() }));
                self.g(g).locals.insert(target, Value::Res(id));
                let r = Some(self.rref(id));
                self.emit_g(g, EventKind::CH_MAKE, r, Some(cap), None, loc);
                Step::Continue
            }
            StmtKind::Send { chan, value } => match self.eval(g, value) {
                Ok(v) => {
                    let c = self.res(g, chan);
                    self.exec_send(g, c, v, loc)
                }
                Err(status) => Step::Stop(status),
            },
            StmtKind::Recv { chan, target } => {
                let c = self.res(g, chan);
                self.exec_recv(g, c, target.as_deref(), loc)
            }
            StmtKind::Close { chan } => {
                let c = self.res(g, chan);
                self.exec_close(g, c, loc)
            }
            StmtKind::Lock { mutex } => {
                let m = self.res(g, mutex);
                let r = self.rref(m);
                self.emit_g(g, EventKind::MU_LOCK_PRE, Some(r), None, None, loc);
                let mx = self.mutex(m);
                if mx.owner.is_none() {
                    mx.owner = Some(g);
                    self.emit_g(g, EventKind::MU_LOCK_POST, Some(r), None, None, loc);
                    Step::Continue
                } else {
                    mx.waiters.push_back(MutexWaiter::Lock(g));
                    self.park(g, BlockReason::LOCK, vec![r], Blocked::Lock, loc);
                    Step::Parked
                }
            }
            StmtKind::Unlock { mutex } => {
                let m = self.res(g, mutex);
                let r = self.rref(m);
                self.emit_g(g, EventKind::MU_UNLOCK, Some(r), None, None, loc);
                if self.mutex(m).owner != Some(g) {
                    return Self::fault(FaultKind::UnlockNotOwner, loc, g);
                }
                self.release_mutex(m, g);
                Step::Continue
            }
            StmtKind::WgAdd { wg, delta } => match self.eval(g, delta) {
                Ok(d) => {
                    let w = self.res(g, wg);
                    self.exec_wg_add(g, w, d, loc)
                }
                Err(status) => Step::Stop(status),
            },
            StmtKind::WgDone { wg } => {
                let w = self.res(g, wg);
                self.exec_wg_add(g, w, -1, loc)
            }
            StmtKind::WgWait { wg } => {
                let w = self.res(g, wg);
                let r = self.rref(w);
                self.emit_g(g, EventKind::WG_WAIT_PRE, Some(r), None, None, loc);
                let wgs = self.wg(w);
                if wgs.counter == 0 {
                    self.emit_g(g, EventKind::WG_WAIT_POST, Some(r), None, None, loc);
                    Step::Continue
                } else {
                    wgs.waiters.push(g);
                    self.park(g, BlockReason::WGWAIT, vec![r], Blocked::WgWait, loc);
                    Step::Parked
                }
            }
            StmtKind::CvWait { cond } => {
                let c = self.res(g, cond);
                let m = self.cond(c).mutex;
                let r = self.rref(c);
                self.emit_ga(g, EventKind::CV_WAIT_PRE, Some(r), None, None, loc, vec![("mutex", m.to_string())]);
                if self.mutex(m).owner != Some(g) {
                    return Self::fault(FaultKind::CwaitWithoutLock, loc, g);
                }
                self.cond(c).waiters.push_back(g);
                self.park(g, BlockReason::CVWAIT, vec![r], Blocked::CvWait, loc);
                self.release_mutex(m, g);
                Step::Parked
            }
            StmtKind::CvSignal { cond } => {
                let c = self.res(g, cond);
                let r = self.rref(c);
                self.emit_g(g, EventKind::CV_SIGNAL, Some(r), None, None, loc);
                if let Some(w) = self.cond(c).waiters.pop_front() {
                    self.wake_cond_waiter(w, c, g);
                }
                Step::Continue
            }
            StmtKind::CvBroadcast { cond } => {
                let c = self.res(g, cond);
                let r = self.rref(c);
                self.emit_g(g, EventKind::CV_BROADCAST, Some(r), None, None, loc);
                let waiters: Vec<GoroutineId> = self.cond(c).waiters.drain(..).collect();
                for w in waiters {
                    self.wake_cond_waiter(w, c, g);
                }
                Step::Continue
            }
            StmtKind::Select { cases, default } => self.exec_select(g, cases, default.as_deref(), loc),
            StmtKind::Assign { .. }
            | StmtKind::MakeMutex { .. }
            | StmtKind::MakeWg { .. }
            | StmtKind::MakeCond { .. }
            | StmtKind::If { .. }
            | StmtKind::ForRange { .. }
            | StmtKind::Skip => unreachable!("pure statements run in pending_of"),
        }
    }

    fn exec_return(&mut self, g: GoroutineId, loc: &'p SourceLoc) -> Step {
        self.emit_g(g, EventKind::GO_END, None, None, None, loc);
        let gr = self.g(g);
        gr.state = State::Done;
        gr.ctl.clear();
        if g == MAIN_G {
            Step::MainEnded
        } else {
            Step::Parked
        }
    }

    fn exec_go(&mut self, g: GoroutineId, func: &str, args: &'p [Expr], loc: &'p SourceLoc) -> Step {
        let decl = self.program.function(func).expect("validated callee");
        let mut locals = HashMap::new();
        for (param, arg) in decl.params.iter().zip(args) {
            let v = if param.kind == VarKind::Int {
                match self.eval(g, arg) {
                    Ok(v) => Value::Int(v),
                    Err(status) => return Step::Stop(status),
                }
            } else {
                Value::Res(self.res(g, arg.as_var().expect("validated resource argument")))
            };
            locals.insert(param.name.as_str(), v);
        }
        let child = self.spawn(g, decl, locals);
        self.emit_ga(g, EventKind::GO_CREATE, None, Some(child as i64), None, loc, vec![("func", decl.name.clone())]);
        self.sched.make_runnable(child);
        Step::Continue
    }

    fn exec_send(&mut self, g: GoroutineId, c: ResourceId, v: i64, loc: &'p SourceLoc) -> Step {
        let r = self.rref(c);
        self.emit_g(g, EventKind::CH_SEND_PRE, Some(r), Some(v), None, loc);
        if self.chan(c).closed {
            return Self::fault(FaultKind::SendOnClosed, loc, g);
        }
        if let Some(w) = self.take_receiver(c, g) {
            self.emit_g(g, EventKind::CH_SEND_POST, Some(r), Some(v), None, loc);
            self.complete_receiver(w, c, v, false, g);
            return Step::Continue;
        }
        let ch = self.chan(c);
        if ch.buf.len() < ch.cap {
            ch.buf.push_back(v);
            self.emit_g(g, EventKind::CH_SEND_POST, Some(r), Some(v), None, loc);
            return Step::Continue;
        }
        ch.senders.push_back(Waiter { g, case: None, value: v });
        self.park(g, BlockReason::SEND, vec![r], Blocked::Send, loc);
        Step::Parked
    }

    /// Takes a value out of `c` for `g` if one is available now.
    /// Returns (value, closed) or None when the receiver would block.
    fn try_take(&mut self, g: GoroutineId, c: ResourceId) -> Option<(i64, bool)> {
        if let Some(v) = self.chan(c).buf.pop_front() {
            if let Some(w) = self.take_sender(c, g) {
                self.chan(c).buf.push_back(w.value);
                self.complete_sender(w, c, g);
            }
            return Some((v, false));
        }
        if let Some(w) = self.take_sender(c, g) {
            self.complete_sender(w, c, g);
            return Some((w.value, false));
        }
        self.chan(c).closed.then_some((0, true))
    }

    fn exec_recv(&mut self, g: GoroutineId, c: ResourceId, target: Option<&'p str>, loc: &'p SourceLoc) -> Step {
        let r = self.rref(c);
        self.emit_g(g, EventKind::CH_RECV_PRE, Some(r), None, None, loc);
        match self.try_take(g, c) {
            Some((v, closed)) => {
                self.emit_g(g, EventKind::CH_RECV_POST, Some(r), Some(v), closed.then_some(1), loc);
                self.assign_recv(g, target, v);
                Step::Continue
            }
            None => {
                self.chan(c).receivers.push_back(Waiter { g, case: None, value: 0 });
                self.park(g, BlockReason::RECV, vec![r], Blocked::Recv { target }, loc);
                Step::Parked
            }
        }
    }

    fn exec_close(&mut self, g: GoroutineId, c: ResourceId, loc: &'p SourceLoc) -> Step {
        let r = self.rref(c);
        self.emit_g(g, EventKind::CH_CLOSE, Some(r), None, None, loc);
        if self.chan(c).closed {
            return Self::fault(FaultKind::CloseOfClosed, loc, g);
        }
        self.chan(c).closed = true;
        while let Some(w) = self.chan(c).receivers.pop_front() {
            self.unregister(w.g);
            self.complete_receiver(w, c, 0, true, g);
        }
        if let Some(w) = self.chan(c).senders.front().copied() {
            let sloc = self.g(w.g).blocked.as_ref().map(|(_, l)| *l).expect("parked sender");
            return Self::fault(FaultKind::SendOnClosed, sloc, w.g);
        }
        Step::Continue
    }

    fn exec_wg_add(&mut self, g: GoroutineId, w: ResourceId, delta: i64, loc: &'p SourceLoc) -> Step {
        let r = self.rref(w);
        self.emit_g(g, EventKind::WG_ADD, Some(r), Some(delta), None, loc);
        let wgs = self.wg(w);
        wgs.counter += delta;
        if wgs.counter < 0 {
            return Self::fault(FaultKind::NegativeWgCounter, loc, g);
        }
        if wgs.counter == 0 {
            let waiters = std::mem::take(&mut wgs.waiters);
            for waiter in waiters {
                let (_, wloc) = self.unpark(waiter, g);
                self.emit_g(waiter, EventKind::WG_WAIT_POST, Some(r), None, None, wloc);
            }
        }
        Step::Continue
    }

    fn case_ready(&mut self, g: GoroutineId, case: &SelectCase, c: ResourceId) -> bool {
        let ch = self.chan(c);
        match case.dir {
            Direction::Send => ch.closed || ch.buf.len() < ch.cap || ch.receivers.iter().any(|w| w.g != g),
            Direction::Recv => ch.closed || !ch.buf.is_empty() || ch.senders.iter().any(|w| w.g != g),
        }
    }

    fn exec_select(&mut self, g: GoroutineId, cases: &'p [SelectCase], default: Option<&'p [Stmt]>, loc: &'p SourceLoc) -> Step {
        let mut chans = Vec::with_capacity(cases.len());
        let mut values = Vec::with_capacity(cases.len());
        for case in cases {
            chans.push(self.res(g, &case.chan));
            values.push(match &case.value {
                Some(e) => match self.eval(g, e) {
                    Ok(v) => v,
                    Err(status) => return Step::Stop(status),
                },
                None => 0,
            });
        }
        let mut args = Vec::with_capacity(cases.len() * 2 + 1);
        for (i, case) in cases.iter().enumerate() {
            args.push((format!("case{i}_dir"), case.dir.as_str().to_string()));
            args.push((format!("case{i}_res"), chans[i].to_string()));
        }
        args.push(("default".to_string(), (default.is_some() as u8).to_string()));
        let args_ref: Vec<(&str, String)> = args.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        self.emit_ga(g, EventKind::SELECT_PRE, None, None, Some(cases.len() as i64), loc, args_ref);

        let ready: Vec<usize> = (0..cases.len()).filter(|&i| self.case_ready(g, &cases[i], chans[i])).collect();
        if !ready.is_empty() {
            let i = ready[self.sched.choose(ready.len())];
            let c = chans[i];
            let r = Some(self.rref(c));
            match cases[i].dir {
                Direction::Send => {
                    let v = values[i];
                    if self.chan(c).closed {
                        return Self::fault(FaultKind::SendOnClosed, &cases[i].loc, g);
                    }
                    let receiver = self.take_receiver(c, g);
                    if receiver.is_none() {
                        self.chan(c).buf.push_back(v);
                    }
                    self.emit_ga(g, EventKind::SELECT_POST, r, Some(v), Some(i as i64), loc, Self::select_post_args(Direction::Send, false));
                    if let Some(w) = receiver {
                        self.complete_receiver(w, c, v, false, g);
                    }
                }
                Direction::Recv => {
                    let (v, closed) = self.try_take(g, c).expect("ready receive case");
                    self.emit_ga(g, EventKind::SELECT_POST, r, Some(v), Some(i as i64), loc, Self::select_post_args(Direction::Recv, closed));
                    self.assign_recv(g, cases[i].target.as_deref(), v);
                }
            }
            self.g(g).ctl.push(Ctl::Block { stmts: &cases[i].body, pc: 0 });
            return Step::Continue;
        }
        if let Some(body) = default {
            self.emit_g(g, EventKind::SELECT_POST, None, None, Some(-1), loc);
            self.g(g).ctl.push(Ctl::Block { stmts: body, pc: 0 });
            return Step::Continue;
        }
        for (i, case) in cases.iter().enumerate() {
            let w = Waiter { g, case: Some(i), value: values[i] };
            let ch = self.chan(chans[i]);
            match case.dir {
                Direction::Send => ch.senders.push_back(w),
                Direction::Recv => ch.receivers.push_back(w),
            }
        }
        let mut resources: Vec<ResourceRef> = Vec::new();
        for &c in &chans {
            let r = self.rref(c);
            if !resources.contains(&r) {
                resources.push(r);
            }
        }
        self.park(g, BlockReason::SELECT, resources, Blocked::Select { cases, chans }, loc);
        Step::Parked
    }
}

fn is_scheduling_point(s: &Stmt) -> bool {
    !matches!(
        s.kind,
        StmtKind::Assign { .. }
            | StmtKind::MakeMutex { .. }
            | StmtKind::MakeWg { .. }
            | StmtKind::MakeCond { .. }
            | StmtKind::If { .. }
            | StmtKind::ForRange { .. }
            | StmtKind::Skip
    )
}
