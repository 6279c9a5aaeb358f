//! Deterministic interpreter for checked programs.
//!
//! [`run`] executes a program under a [`SchedulerConfig`] and returns the
//! execution concurrency trace together with a [`RunOutcome`]. All
//! randomness (schedule choices, select choices, delay coins) comes from a
//! generator seeded by the config, so a (program, config, arg0) triple
//! always produces the same trace.

mod machine;
mod sched;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dsl::{CheckedProgram, SourceLoc};
use crate::event::{BlockReason, GoroutineId, ResourceRef, Site, Trace};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Run-to-block; rotates only at `yield` and loop back-edges.
    Fifo,
    /// Uniform choice among runnables at every scheduling point.
    Random,
    /// Random, plus probabilistic descheduling at critical points.
    DelayInject,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Fifo => "FIFO",
            Policy::Random => "RANDOM",
            Policy::DelayInject => "DELAY_INJECT",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Policy, String> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Policy::Fifo),
            "random" => Ok(Policy::Random),
            "delay" | "delay_inject" => Ok(Policy::DelayInject),
            _ => Err(format!("unknown policy `{s}` (expected fifo, random or delay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub policy: Policy,
    pub seed: u64,
    /// Probability of descheduling at a critical point (delay injection only).
    pub yield_probability: f64,
    /// Scheduler decisions a delayed goroutine sits out (delay injection only).
    pub delay_bound: u32,
    pub critical_points: BTreeSet<Site>,
    pub max_steps: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("yield probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("delay bound must be at least 1")]
    DelayBound,
    #[error("delay injection needs at least one critical point")]
    NoCriticalPoints,
    #[error("max_steps must be at least 1")]
    MaxSteps,
}

impl SchedulerConfig {
    pub fn fifo(seed: u64) -> Self {
        SchedulerConfig {
            policy: Policy::Fifo,
            seed,
            yield_probability: 0.0,
            delay_bound: 1,
            critical_points: BTreeSet::new(),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn random(seed: u64) -> Self {
        SchedulerConfig { policy: Policy::Random, ..Self::fifo(seed) }
    }

    pub fn delay_inject(seed: u64, p: f64, d: u32, critical_points: BTreeSet<Site>) -> Self {
        SchedulerConfig {
            policy: Policy::DelayInject,
            yield_probability: p,
            delay_bound: d,
            critical_points,
            ..Self::fifo(seed)
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.yield_probability) {
            return Err(ConfigError::Probability(self.yield_probability));
        }
        if self.delay_bound < 1 {
            return Err(ConfigError::DelayBound);
        }
        if self.policy == Policy::DelayInject && self.critical_points.is_empty() {
            return Err(ConfigError::NoCriticalPoints);
        }
        if self.max_steps < 1 {
            return Err(ConfigError::MaxSteps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    SendOnClosed,
    CloseOfClosed,
    UnlockNotOwner,
    NegativeWgCounter,
    CwaitWithoutLock,
    DivisionByZero,
    NegativeCapacity,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::SendOnClosed => "send-on-closed",
            FaultKind::CloseOfClosed => "close-of-closed",
            FaultKind::UnlockNotOwner => "unlock-not-owner",
            FaultKind::NegativeWgCounter => "negative-wg-counter",
            FaultKind::CwaitWithoutLock => "cwait-without-lock",
            FaultKind::DivisionByZero => "division-by-zero",
            FaultKind::NegativeCapacity => "negative-capacity",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    GlobalDeadlock,
    Fault { kind: FaultKind, loc: SourceLoc, g: GoroutineId },
    WatchdogTimeout,
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Completed => "COMPLETED",
            RunStatus::GlobalDeadlock => "GLOBAL_DEADLOCK",
            RunStatus::Fault { .. } => "FAULT",
            RunStatus::WatchdogTimeout => "WATCHDOG_TIMEOUT",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Fault { kind, loc, g } => write!(f, "FAULT({kind} at {loc} in g{g})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub reason: BlockReason,
    pub resources: Vec<ResourceRef>,
}

impl fmt::Display for BlockInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let res: Vec<String> = self.resources.iter().map(ToString::to_string).collect();
        write!(f, "{}({})", self.reason, res.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoStatus {
    Runnable,
    Running,
    Blocked(BlockInfo),
    Done,
    /// Alive when main returned; carries the block it was stuck in, if any.
    Killed(Option<BlockInfo>),
}

impl fmt::Display for GoStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoStatus::Runnable => f.write_str("RUNNABLE"),
            GoStatus::Running => f.write_str("RUNNING"),
            GoStatus::Blocked(b) => write!(f, "BLOCKED {b}"),
            GoStatus::Done => f.write_str("DONE"),
            GoStatus::Killed(None) => f.write_str("KILLED"),
            GoStatus::Killed(Some(b)) => write!(f, "KILLED while BLOCKED {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoroutineSummary {
    pub id: GoroutineId,
    pub parent: GoroutineId,
    pub func: String,
    pub status: GoStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub goroutines: Vec<GoroutineSummary>,
    pub steps: u64,
    pub outputs: Vec<i64>,
}

impl RunOutcome {
    pub fn goroutine(&self, id: GoroutineId) -> Option<&GoroutineSummary> {
        self.goroutines.iter().find(|g| g.id == id)
    }

    /// First goroutine running `func`.
    pub fn by_func(&self, func: &str) -> Option<&GoroutineSummary> {
        self.goroutines.iter().find(|g| g.func == func)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub outcome: RunOutcome,
}

/// Executes `program` to completion, deadlock, fault or watchdog expiry.
pub fn run(program: &CheckedProgram, config: &SchedulerConfig, arg0: Option<i64>) -> Result<RunResult, ConfigError> {
    config.check()?;
    Ok(machine::Machine::new(program, config, arg0.unwrap_or(0)).execute())
}

#[cfg(test)]
mod tests;
