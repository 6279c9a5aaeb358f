//! The execution concurrency trace: events, their arguments and call stacks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// Goroutine id. 1 is `main`; 0 stands for the runtime itself and only
/// appears on process-level events.
pub type GoroutineId = u32;
pub type ResourceId = u32;
pub type StackId = u32;

pub const RUNTIME_G: GoroutineId = 0;
pub const MAIN_G: GoroutineId = 1;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[allow(non_camel_case_types)]
        pub enum $name { $($variant),* }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => stringify!($variant)),* }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $(stringify!($variant) => Ok($name::$variant),)*
                    _ => Err(format!("unknown {} `{}`", stringify!($name), s)),
                }
            }
        }
    };
}

string_enum! {
    EventKind {
        RUN_BEGIN,
        RUN_END,
        GO_CREATE,
        GO_START,
        GO_END,
        GO_BLOCK,
        GO_UNBLOCK,
        SCHED_SWITCH,
        CH_MAKE,
        CH_SEND_PRE,
        CH_SEND_POST,
        CH_RECV_PRE,
        CH_RECV_POST,
        CH_CLOSE,
        MU_LOCK_PRE,
        MU_LOCK_POST,
        MU_UNLOCK,
        WG_ADD,
        WG_WAIT_PRE,
        WG_WAIT_POST,
        CV_WAIT_PRE,
        CV_WAIT_POST,
        CV_SIGNAL,
        CV_BROADCAST,
        SELECT_PRE,
        SELECT_POST,
    }
}

string_enum! {
    ResKind { CHAN, MUTEX, WG, COND }
}

string_enum! {
    /// Why a goroutine is blocked. Stored in `GO_BLOCK.aux` as [`BlockReason::code`].
    BlockReason { SEND, RECV, LOCK, WGWAIT, CVWAIT, SELECT }
}

impl BlockReason {
    pub fn code(self) -> i64 {
        self as i64 + 1
    }

    pub fn from_code(code: i64) -> Option<BlockReason> {
        BlockReason::ALL.get(usize::try_from(code - 1).ok()?).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Process,
    Goroutine,
    Concurrency,
}

impl EventKind {
    pub fn category(self) -> Category {
        use EventKind::*;
        match self {
            RUN_BEGIN | RUN_END => Category::Process,
            GO_CREATE | GO_START | GO_END | GO_BLOCK | GO_UNBLOCK | SCHED_SWITCH => Category::Goroutine,
            _ => Category::Concurrency,
        }
    }

    pub fn is_pre(self) -> bool {
        self.post_of_pre().is_some()
    }

    pub fn is_post(self) -> bool {
        self.pre_of_post().is_some()
    }

    /// The completion event matching an attempt event.
    pub fn post_of_pre(self) -> Option<EventKind> {
        use EventKind::*;
        Some(match self {
            CH_SEND_PRE => CH_SEND_POST,
            CH_RECV_PRE => CH_RECV_POST,
            MU_LOCK_PRE => MU_LOCK_POST,
            WG_WAIT_PRE => WG_WAIT_POST,
            CV_WAIT_PRE => CV_WAIT_POST,
            SELECT_PRE => SELECT_POST,
            _ => return None,
        })
    }

    pub fn pre_of_post(self) -> Option<EventKind> {
        use EventKind::*;
        Some(match self {
            CH_SEND_POST => CH_SEND_PRE,
            CH_RECV_POST => CH_RECV_PRE,
            MU_LOCK_POST => MU_LOCK_PRE,
            WG_WAIT_POST => WG_WAIT_PRE,
            CV_WAIT_POST => CV_WAIT_PRE,
            SELECT_POST => SELECT_PRE,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceRef {
    pub kind: ResKind,
    pub id: ResourceId,
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.kind, self.id)
    }
}

/// One trace record.
///
/// Field use by kind:
/// - `GO_CREATE`: `value` = child id. `GO_UNBLOCK`: `value` = waker.
/// - `SCHED_SWITCH`: `g` = incoming goroutine, `value` = outgoing (0 if none).
/// - `GO_BLOCK`: `aux` = [`BlockReason::code`], `resource` = awaited object.
/// - `CH_MAKE`: `value` = capacity. Sends: `value` = sent value.
/// - `CH_RECV_POST`: `value` = received value, `aux` = 1 when it came from a closed channel.
/// - `WG_ADD`: `value` = delta (`done` is -1).
/// - `SELECT_POST`: `aux` = chosen case (-1 for default), `resource`/`value` = chosen channel and value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: u32,
    pub ts: u64,
    pub g: GoroutineId,
    pub kind: EventKind,
    pub resource: Option<ResourceRef>,
    pub value: Option<i64>,
    pub aux: Option<i64>,
    pub stack_id: StackId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Argument {
    pub event_id: u32,
    pub position: u32,
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub func: String,
    pub file: String,
    pub line: u32,
}

/// Interned call stacks; identical frame lists share an id. Ids start at 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StackTable {
    stacks: Vec<Vec<Frame>>,
    index: HashMap<Vec<Frame>, StackId>,
}

impl StackTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, frames: Vec<Frame>) -> StackId {
        if let Some(&id) = self.index.get(&frames) {
            return id;
        }
        self.stacks.push(frames.clone());
        let id = self.stacks.len() as StackId;
        self.index.insert(frames, id);
        id
    }

    /// Inserts a stack under an explicit id (used when loading).
    /// Returns false if the id is not the next free one.
    pub fn push_with_id(&mut self, id: StackId, frames: Vec<Frame>) -> bool {
        if id as usize != self.stacks.len() + 1 {
            return false;
        }
        self.index.entry(frames.clone()).or_insert(id);
        self.stacks.push(frames);
        true
    }

    pub fn get(&self, id: StackId) -> Option<&[Frame]> {
        let i = (id as usize).checked_sub(1)?;
        self.stacks.get(i).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.stacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stacks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StackId, &[Frame])> {
        self.stacks.iter().enumerate().map(|(i, f)| (i as StackId + 1, f.as_slice()))
    }
}

/// A source line, the granularity at which the trace records positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

impl FromStr for Site {
    type Err = String;
    fn from_str(s: &str) -> Result<Site, String> {
        let (file, line) = s.rsplit_once(':').ok_or_else(|| format!("expected file:line, got `{s}`"))?;
        let line = line.parse().map_err(|_| format!("bad line number in `{s}`"))?;
        Ok(Site { file: file.to_string(), line })
    }
}

/// A complete execution concurrency trace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub stacks: StackTable,
    /// Sorted by (event_id, position).
    pub arguments: Vec<Argument>,
}

impl Trace {
    /// Innermost frame of an event's stack.
    pub fn frame(&self, ev: &Event) -> Option<&Frame> {
        self.stacks.get(ev.stack_id).and_then(|s| s.first())
    }

    pub fn site(&self, ev: &Event) -> Option<Site> {
        self.frame(ev).map(|f| Site { file: f.file.clone(), line: f.line })
    }

    /// Arguments of one event, in position order.
    pub fn args_of(&self, event_id: u32) -> &[Argument] {
        let start = self.arguments.partition_point(|a| a.event_id < event_id);
        let end = self.arguments.partition_point(|a| a.event_id <= event_id);
        &self.arguments[start..end]
    }

    pub fn arg(&self, event_id: u32, name: &str) -> Option<&str> {
        self.args_of(event_id).iter().find(|a| a.name == name).map(|a| a.value.as_str())
    }
}
