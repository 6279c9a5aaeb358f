//! Delay-injection campaigns: a FIFO baseline, then reruns that perturb the
//! schedule around the critical points seen so far.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{critical_points, detect_leaks, AnalysisError};
use crate::coverage::{coverage_of, CoverageError, CoverageSet, CoverageSize};
use crate::dsl::CheckedProgram;
use crate::event::Site;
use crate::runtime::{run, ConfigError, Policy, RunStatus, SchedulerConfig, DEFAULT_MAX_STEPS};
use crate::trace::TraceBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeClass {
    Clean,
    Leak,
    GlobalDeadlock,
    Fault,
}

impl OutcomeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::Clean => "CLEAN",
            OutcomeClass::Leak => "LEAK",
            OutcomeClass::GlobalDeadlock => "GLOBAL_DEADLOCK",
            OutcomeClass::Fault => "FAULT",
        }
    }

    pub fn is_bug(self) -> bool {
        self != OutcomeClass::Clean
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "CLEAN" => Ok(OutcomeClass::Clean),
            "LEAK" => Ok(OutcomeClass::Leak),
            "GLOBAL_DEADLOCK" => Ok(OutcomeClass::GlobalDeadlock),
            "FAULT" => Ok(OutcomeClass::Fault),
            _ => Err(format!("unknown outcome class `{s}`")),
        }
    }
}

/// Deadlocks and faults pass through; otherwise a run is a leak iff some
/// application goroutine did not finish. A watchdog stop leaves main
/// unfinished, so it counts as a leak.
pub fn classify_outcome(bundle: &TraceBundle, status: &RunStatus) -> Result<OutcomeClass, AnalysisError> {
    Ok(match status {
        RunStatus::GlobalDeadlock => OutcomeClass::GlobalDeadlock,
        RunStatus::Fault { .. } => OutcomeClass::Fault,
        RunStatus::Completed | RunStatus::WatchdogTimeout => {
            if detect_leaks(bundle)?.is_empty() {
                OutcomeClass::Clean
            } else {
                OutcomeClass::Leak
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzConfig {
    pub iterations: u32,
    pub base_seed: u64,
    pub p: f64,
    pub d: u32,
    pub stop_on_first_bug: bool,
    pub arg0: Option<i64>,
    pub max_steps: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { iterations: 1000, base_seed: 0, p: 0.25, d: 5, stop_on_first_bug: false, arg0: None, max_steps: DEFAULT_MAX_STEPS }
    }
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: u32,
    pub seed: u64,
    pub policy: Policy,
    pub status: String,
    pub class: OutcomeClass,
    pub leaks: usize,
    /// Coverage items this run added to the cumulative set.
    pub new_coverage: usize,
    pub critical_points: usize,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzReport {
    pub program: String,
    pub config: FuzzConfig,
    pub records: Vec<IterationRecord>,
    pub first_bug_iteration: Option<u32>,
    /// Class and run id of the first bug-exposing run.
    pub first_bug: Option<(OutcomeClass, String)>,
    pub coverage_curve: Vec<CoverageSize>,
    pub critical_points: BTreeSet<Site>,
    pub note: Option<String>,
}

/// A report plus the bundles of every bug-exposing run.
#[derive(Debug, Clone)]
pub struct FuzzOutcome {
    pub report: FuzzReport,
    pub bug_bundles: Vec<TraceBundle>,
}

/// Run-id prefix for a program file: its name without the extension.
pub fn program_stem(file: &str) -> &str {
    let base = file.rsplit(['/', '\\']).next().unwrap_or(file);
    base.strip_suffix(".csp").unwrap_or(base)
}

pub fn fuzz(program: &CheckedProgram, config: &FuzzConfig) -> Result<FuzzOutcome, FuzzError> {
    if config.iterations == 0 {
        return Err(FuzzError::NoIterations);
    }
    let file = program.program().file.to_string();
    let stem = program_stem(&file).to_string();
    let mut records = Vec::new();
    let mut bug_bundles = Vec::new();
    let mut cps: BTreeSet<Site> = BTreeSet::new();
    let mut cumulative = CoverageSet::default();
    let mut curve = Vec::new();
    let mut first_bug = None;
    let mut note = None;

    for i in 0..config.iterations {
        let seed = config.base_seed.wrapping_add(u64::from(i));
        let sched = if i == 0 {
            SchedulerConfig::fifo(seed)
        } else {
            SchedulerConfig::delay_inject(seed, config.p, config.d, cps.clone())
        }
        .with_max_steps(config.max_steps);
        let result = run(program, &sched, config.arg0)?;
        let run_id = format!("{stem}-iter{i}");
        let bundle = TraceBundle::from_run(&run_id, &file, &result, &sched, config.arg0);

        let class = classify_outcome(&bundle, &result.outcome.status)?;
        let leaks = detect_leaks(&bundle)?.leaks.len();
        let before = cumulative.size().total();
        cumulative.absorb(&coverage_of(&bundle)?)?;
        curve.push(cumulative.size());
        cps.extend(critical_points([&bundle]));
        records.push(IterationRecord {
            index: i,
            seed,
            policy: sched.policy,
            status: result.outcome.status.name().to_string(),
            class,
            leaks,
            new_coverage: cumulative.size().total() - before,
            critical_points: sched.critical_points.len(),
            run_id: run_id.clone(),
        });
        if class.is_bug() {
            if first_bug.is_none() {
                first_bug = Some((i, class, run_id));
            }
            bug_bundles.push(bundle);
            if config.stop_on_first_bug {
                break;
            }
        }
        if i == 0 && cps.is_empty() {
            note = Some("no critical points: nothing to perturb".to_string());
            break;
        }
    }

    let report = FuzzReport {
        program: file,
        config: config.clone(),
        records,
        first_bug_iteration: first_bug.as_ref().map(|b| b.0),
        first_bug: first_bug.map(|(_, c, id)| (c, id)),
        coverage_curve: curve,
        critical_points: cps,
        note,
    };
    Ok(FuzzOutcome { report, bug_bundles })
}

impl FuzzReport {
    pub fn bugs(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.class.is_bug())
    }

    pub fn found(&self, class: OutcomeClass) -> bool {
        self.records.iter().any(|r| r.class == class)
    }

    pub fn first_of(&self, class: OutcomeClass) -> Option<u32> {
        self.records.iter().find(|r| r.class == class).map(|r| r.index)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record([
            "iteration",
            "seed",
            "policy",
            "status",
            "class",
            "leaks",
            "new_coverage",
            "sync_pairs",
            "blocking_blocked",
            "blocked_pairs",
            "critical_points",
            "run_id",
        ])?;
        for (r, c) in self.records.iter().zip(&self.coverage_curve) {
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                r.policy.to_string(),
                r.status.clone(),
                r.class.to_string(),
                r.leaks.to_string(),
                r.new_coverage.to_string(),
                c.sync_pairs.to_string(),
                c.blocking_blocked.to_string(),
                c.blocked_pairs.to_string(),
                r.critical_points.to_string(),
                r.run_id.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "program: {}", self.program)?;
        write!(f, "config: iterations={} seed={} p={} d={} max_steps={}", c.iterations, c.base_seed, c.p, c.d, c.max_steps)?;
        if let Some(a) = c.arg0 {
            write!(f, " arg0={a}")?;
        }
        writeln!(f)?;
        writeln!(f, "iterations run: {}", self.records.len())?;
        writeln!(f, "critical points: {}", self.critical_points.len())?;
        if let Some(n) = &self.note {
            writeln!(f, "note: {n}")?;
        }
        match (&self.first_bug_iteration, &self.first_bug) {
            (Some(i), Some((class, id))) => writeln!(f, "first bug: iteration {i} {class} (run {id})")?,
            _ => writeln!(f, "first bug: none")?,
        }
        for class in [OutcomeClass::Leak, OutcomeClass::GlobalDeadlock, OutcomeClass::Fault] {
            let n = self.records.iter().filter(|r| r.class == class).count();
            if n > 0 {
                writeln!(f, "{class}: {n} runs, first at iteration {}", self.first_of(class).unwrap_or(0))?;
            }
        }
        if let Some(last) = self.coverage_curve.last() {
            writeln!(f, "coverage: {last}")?;
        }
        Ok(())
    }
}
