use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ectsim::analysis::{
    build_waitfor, critical_points, detect_leaks, export_dot, export_shiviz, find_cycles, lane_view, vector_clocks,
};
use ectsim::corpus::{self, expectations};
use ectsim::coverage::{coverage_of, growth_curve, merge};
use ectsim::dsl::{check, CheckedProgram};
use ectsim::event::Site;
use ectsim::fuzz::{classify_outcome, fuzz, FuzzConfig, OutcomeClass};
use ectsim::runtime::{run, Policy, SchedulerConfig, DEFAULT_MAX_STEPS};
use ectsim::trace::{self, TraceBundle};

const EXIT_USAGE: u8 = 1;
const EXIT_BUG: u8 = 2;

#[derive(Parser)]
#[command(name = "ectsim", version, about = "Trace, analyze and fuzz CSP-style concurrent programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program
    Check { file: String },
    /// Execute a program once and store its trace
    Run(RunArgs),
    /// Post-mortem reports over a stored trace
    Analyze(AnalyzeArgs),
    /// Synchronization coverage of stored traces
    Coverage {
        dir: PathBuf,
        #[arg(required = true)]
        run_ids: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Delay-injection campaign
    Fuzz(FuzzArgs),
    /// Run the bundled corpus against its expected outcomes
    Bench {
        #[arg(long, default_value_t = 1000)]
        iters: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Independent base seeds tried per program
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    file: String,
    #[arg(long, default_value = "fifo")]
    policy: Policy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, allow_negative_numbers = true)]
    arg0: Option<i64>,
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    #[arg(long, default_value_t = 5)]
    d: u32,
    /// File with one `file:line` per line; harvested from a FIFO run if absent
    #[arg(long)]
    critical_points: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    id: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    dir: PathBuf,
    run_id: String,
    #[arg(long)]
    leaks: bool,
    #[arg(long)]
    waitfor: bool,
    #[arg(long, requires = "waitfor")]
    dot: Option<PathBuf>,
    #[arg(long)]
    shiviz: Option<PathBuf>,
    #[arg(long)]
    lanes: bool,
    #[arg(long)]
    critical_points: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    file: String,
    #[arg(long, default_value_t = 1000)]
    iters: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    #[arg(long, default_value_t = 5)]
    d: u32,
    #[arg(long, allow_negative_numbers = true)]
    arg0: Option<i64>,
    #[arg(long)]
    stop_on_first_bug: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long)]
    out: PathBuf,
}

type CmdResult = Result<u8, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Run(a) => cmd_run(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Coverage { dir, run_ids, csv } => cmd_coverage(&dir, &run_ids, csv.as_deref()),
        Command::Fuzz(a) => cmd_fuzz(&a),
        Command::Bench { iters, seed, seeds } => cmd_bench(iters, seed, seeds),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// Reads a program from disk, falling back to the bundled corpus by name.
fn load_source(file: &str) -> Result<(String, String), String> {
    let path = Path::new(file);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| file.to_string());
    match fs::read_to_string(path) {
        Ok(text) => Ok((name, text)),
        Err(e) => match corpus::get(file) {
            Some(p) => Ok((p.name.to_string(), p.source.to_string())),
            None => Err(format!("{file}: {e}")),
        },
    }
}

fn load_program(file: &str) -> Result<CheckedProgram, String> {
    let (name, text) = load_source(file)?;
    check(&text, &name).map_err(|diags| {
        diags.iter().map(|d| format!("{}: {}", d.loc, d.message)).collect::<Vec<_>>().join("\n")
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_check(file: &str) -> CmdResult {
    let (name, text) = load_source(file)?;
    match check(&text, &name) {
        Ok(p) => {
            println!("{name}: ok ({} functions)", p.program().functions.len());
            Ok(0)
        }
        Err(diags) => {
            for d in diags {
                println!("{}: {}", d.loc, d.message);
            }
            Ok(EXIT_USAGE)
        }
    }
}

fn read_critical_points(path: &Path) -> Result<BTreeSet<Site>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| l.parse::<Site>()).collect()
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let program = load_program(&a.file)?;
    let file = program.program().file.to_string();
    let config = match a.policy {
        Policy::Fifo => SchedulerConfig::fifo(a.seed),
        Policy::Random => SchedulerConfig::random(a.seed),
        Policy::DelayInject => {
            let cps = match &a.critical_points {
                Some(path) => read_critical_points(path)?,
                None => {
                    let base = SchedulerConfig::fifo(a.seed).with_max_steps(a.max_steps);
                    let r = run(&program, &base, a.arg0).map_err(|e| e.to_string())?;
                    critical_points([&TraceBundle::from_run("baseline", &file, &r, &base, a.arg0)])
                }
            };
            SchedulerConfig::delay_inject(a.seed, a.p, a.d, cps)
        }
    }
    .with_max_steps(a.max_steps);
    let result = run(&program, &config, a.arg0).map_err(|e| e.to_string())?;
    let bundle = TraceBundle::from_run(&a.id, &file, &result, &config, a.arg0);
    let class = classify_outcome(&bundle, &result.outcome.status).map_err(|e| e.to_string())?;
    let dir = trace::save(&bundle, &a.out, true).map_err(|e| e.to_string())?;

    let o = &result.outcome;
    println!("run: {} ({} seed {})", a.id, config.policy, config.seed);
    println!("status: {}", o.status);
    println!("class: {class}");
    println!("steps: {}", o.steps);
    println!("events: {}", bundle.trace.events.len());
    let outs: Vec<String> = o.outputs.iter().map(ToString::to_string).collect();
    println!("outputs: {}", outs.join(" "));
    for g in &o.goroutines {
        println!("  g{} {}: {}", g.id, g.func, g.status);
    }
    println!("saved: {}", dir.display());
    Ok(if class.is_bug() { EXIT_BUG } else { 0 })
}

fn cmd_analyze(a: &AnalyzeArgs) -> CmdResult {
    let bundle = trace::load(&a.dir, &a.run_id).map_err(|e| e.to_string())?;
    let any = a.waitfor || a.shiviz.is_some() || a.lanes || a.critical_points.is_some();
    if a.leaks || !any {
        print!("{}", detect_leaks(&bundle).map_err(|e| e.to_string())?);
    }
    if a.waitfor {
        let g = build_waitfor(&bundle);
        println!("wait-for graph:");
        print!("{g}");
        let cycles = find_cycles(&g);
        if cycles.is_empty() {
            println!("no cycles");
        }
        for c in &cycles {
            println!("cycle: {}", g.format_cycle(c));
        }
        if let Some(path) = &a.dot {
            write_file(path, export_dot(&g).as_bytes())?;
        }
    }
    if let Some(path) = &a.shiviz {
        let vcs = vector_clocks(&bundle).map_err(|e| e.to_string())?;
        write_file(path, export_shiviz(&bundle, &vcs).as_bytes())?;
    }
    if a.lanes {
        print!("{}", lane_view(&bundle));
    }
    if let Some(path) = &a.critical_points {
        let text: String = critical_points([&bundle]).iter().map(|s| format!("{s}\n")).collect();
        write_file(path, text.as_bytes())?;
    }
    Ok(0)
}

fn cmd_coverage(dir: &Path, run_ids: &[String], csv: Option<&Path>) -> CmdResult {
    let mut sets = Vec::new();
    for id in run_ids {
        let bundle = trace::load(dir, id).map_err(|e| e.to_string())?;
        let cov = coverage_of(&bundle).map_err(|e| e.to_string())?;
        println!("{id}: {}", cov.size());
        sets.push(cov);
    }
    let merged = merge(&sets).map_err(|e| e.to_string())?;
    println!("merged: {}", merged.size());
    let curve = growth_curve(&sets).map_err(|e| e.to_string())?;
    let totals: Vec<String> = curve.iter().map(|c| c.total().to_string()).collect();
    println!("growth: {}", totals.join(" "));
    if let Some(path) = csv {
        let mut buf = Vec::new();
        merged.write_csv(&mut buf).map_err(|e| e.to_string())?;
        write_file(path, &buf)?;
    }
    Ok(0)
}

fn cmd_fuzz(a: &FuzzArgs) -> CmdResult {
    let program = load_program(&a.file)?;
    let config = FuzzConfig {
        iterations: a.iters,
        base_seed: a.seed,
        p: a.p,
        d: a.d,
        stop_on_first_bug: a.stop_on_first_bug,
        arg0: a.arg0,
        max_steps: a.max_steps,
    };
    let out = fuzz(&program, &config).map_err(|e| e.to_string())?;
    let report = &out.report;
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    for b in &out.bug_bundles {
        trace::save(b, &a.out, true).map_err(|e| e.to_string())?;
    }
    let text = report.to_string();
    write_file(&a.out.join("fuzz_report.txt"), text.as_bytes())?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(|e| e.to_string())?;
    write_file(&a.out.join("fuzz_report.csv"), &buf)?;
    print!("{text}");
    Ok(if report.first_bug_iteration.is_some() { EXIT_BUG } else { 0 })
}

fn cmd_bench(iters: u32, seed: u64, seeds: u64) -> CmdResult {
    let mut failures = 0;
    println!("{:<22} {:>5} {:<16} {:<16} {:<16} {:<16} verdict", "program", "arg0", "baseline", "expected", "fuzz", "expected");
    for prog in corpus::PROGRAMS {
        let program = check(prog.source, prog.name).map_err(|_| format!("{} does not validate", prog.name))?;
        for exp in expectations(prog.source)? {
            let mut baseline = None;
            let mut found = None;
            for s in seed..seed + seeds.max(1) {
                let config = FuzzConfig { iterations: iters, base_seed: s, arg0: Some(exp.arg0), ..FuzzConfig::default() };
                let report = fuzz(&program, &config).map_err(|e| e.to_string())?.report;
                baseline.get_or_insert(report.records[0].class);
                let hit = if exp.fuzz == OutcomeClass::Clean {
                    report.first_bug.as_ref().map_or(Some(OutcomeClass::Clean), |(c, _)| Some(*c))
                } else if report.found(exp.fuzz) {
                    Some(exp.fuzz)
                } else {
                    report.first_bug.as_ref().map(|(c, _)| *c)
                };
                found = hit;
                if hit == Some(exp.fuzz) {
                    break;
                }
            }
            let baseline = baseline.unwrap_or(OutcomeClass::Clean);
            let found = found.unwrap_or(OutcomeClass::Clean);
            let ok = baseline == exp.baseline && found == exp.fuzz;
            failures += usize::from(!ok);
            println!(
                "{:<22} {:>5} {:<16} {:<16} {:<16} {:<16} {}",
                prog.name,
                exp.arg0,
                baseline.as_str(),
                exp.baseline.as_str(),
                found.as_str(),
                exp.fuzz.as_str(),
                if ok { "PASS" } else { "FAIL" }
            );
        }
    }
    Ok(if failures == 0 { 0 } else { EXIT_USAGE })
}
