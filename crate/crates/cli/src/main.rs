use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Parser, Subcommand};
use log::{info, warn};

use ip2s::bridge::{bridge_sync, Bridge, BridgeConfig, BridgeError};
use ip2s::golden::{compare_timeline, parse_golden, CompareMode, Verdict};
use ip2s::scenario::{load_scenario, ScenarioError};
use ip2s::{Engine, Timeline};

const EXIT_MISMATCH: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BRIDGE: u8 = 3;

#[derive(Parser)]
#[command(name = "ip2s", version, about = "Run, verify and replay security coordination scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write timeline.log, notifications.log and bus_trace.log.
    Run(Opts),
    /// Simulate a scenario and compare its timeline with a golden file.
    Verify(Opts),
    /// Print a timeline tick by tick, from a scenario or a directory of run artifacts.
    Replay(Opts),
}

#[derive(clap::Args)]
struct Opts {
    /// Scenario file (or, for replay, a run artifact directory).
    scenario: PathBuf,
    /// Output directory for run artifacts.
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
    #[arg(long)]
    golden: Option<PathBuf>,
    #[arg(long, default_value = "subsequence", value_parser = parse_mode)]
    mode: CompareMode,
    /// MQTT broker, e.g. mqtt://localhost:1883. Enables the bridge.
    #[arg(long)]
    bridge: Option<String>,
    #[arg(long, default_value = "ip2s")]
    prefix: String,
    /// Milliseconds per tick when replaying; 0 runs flat out.
    #[arg(long, default_value_t = 0)]
    pace: u64,
}

fn parse_mode(s: &str) -> Result<CompareMode, String> {
    s.parse()
}

/// Diagnostic plus exit status.
struct Failure(u8, String);

impl From<BridgeError> for Failure {
    fn from(e: BridgeError) -> Self {
        Failure(EXIT_BRIDGE, e.to_string())
    }
}

fn input_error(e: ScenarioError, path: &Path) -> Failure {
    match e {
        ScenarioError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => {
            Failure(EXIT_INPUT, format!("scenario not found: {}", path.display()))
        }
        other => Failure(EXIT_INPUT, format!("{}: {other}", path.display())),
    }
}

fn write_artifacts(dir: &Path, timeline: &Timeline) -> Result<(), Failure> {
    let fail = |e: io::Error| Failure(EXIT_INPUT, format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    fs::write(dir.join("timeline.log"), timeline.timeline_log()).map_err(fail)?;
    fs::write(dir.join("notifications.log"), timeline.notifications_log()).map_err(fail)?;
    fs::write(dir.join("bus_trace.log"), timeline.bus_trace_log()).map_err(fail)?;
    info!("artifacts written to {}", dir.display());
    Ok(())
}

fn bridge_for(opts: &Opts) -> Result<Bridge, Failure> {
    match &opts.bridge {
        None => Ok(Bridge::disabled()),
        Some(uri) => {
            let config = BridgeConfig {
                enabled: true,
                broker_uri: Some(uri.clone()),
                prefix: opts.prefix.clone(),
            };
            Ok(Bridge::connect(config, Duration::from_secs(3))?)
        }
    }
}

/// Run the scenario, calling `on_tick` with each tick's entries.
fn simulate(
    opts: &Opts,
    mut on_tick: impl FnMut(&Engine, &[ip2s::TimelineEntry]),
) -> Result<Timeline, Failure> {
    let scenario = load_scenario(&opts.scenario).map_err(|e| input_error(e, &opts.scenario))?;
    let mut bridge = bridge_for(opts)?;
    let mut engine = Engine::new(scenario);
    while let Some(entries) = engine.step() {
        on_tick(&engine, &entries);
        if let Err(e) = bridge_sync(&mut engine, &mut bridge) {
            warn!("bridge: {e}");
        }
    }
    Ok(engine.into_timeline())
}

fn cmd_run(opts: &Opts) -> Result<(), Failure> {
    let timeline = simulate(opts, |_, _| {})?;
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    write_artifacts(&out, &timeline)?;
    println!(
        "{} entries, {} notifications -> {}",
        timeline.entries.len(),
        timeline.notifications.len(),
        out.display()
    );
    Ok(())
}

fn cmd_verify(opts: &Opts) -> Result<(), Failure> {
    let golden_path = opts
        .golden
        .as_ref()
        .ok_or_else(|| Failure(EXIT_INPUT, "verify needs --golden FILE".into()))?;
    let text = fs::read_to_string(golden_path)
        .map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", golden_path.display())))?;
    let golden = parse_golden(&text).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", golden_path.display())))?;
    let timeline = simulate(opts, |_, _| {})?;
    if let Some(out) = &opts.out {
        write_artifacts(out, &timeline)?;
    }
    match compare_timeline(&timeline.entries, &golden, opts.mode) {
        Verdict::Match => {
            println!("match: {} rows", golden.rows.len());
            Ok(())
        }
        mismatch => Err(Failure(EXIT_MISMATCH, mismatch.to_string())),
    }
}

fn pace(ms: u64) {
    if ms > 0 {
        thread::sleep(Duration::from_millis(ms));
    }
}

/// Timeline lines go to stdout, byte-identical to timeline.log; notification
/// lines go to stderr.
fn cmd_replay(opts: &Opts) -> Result<(), Failure> {
    if opts.scenario.is_dir() {
        return replay_artifacts(opts);
    }
    let stdout = io::stdout();
    let mut notified = 0;
    let timeline = simulate(opts, |engine, entries| {
        let mut out = stdout.lock();
        for e in entries {
            let _ = writeln!(out, "{}", e.log_line());
        }
        let _ = out.flush();
        for n in &engine.timeline().notifications[notified..] {
            eprintln!("{}", n.line());
        }
        notified = engine.timeline().notifications.len();
        pace(opts.pace);
    })?;
    if let Some(out) = &opts.out {
        write_artifacts(out, &timeline)?;
    }
    Ok(())
}

fn tick_of(line: &str) -> u64 {
    line.split('|').next().and_then(|t| t.parse().ok()).unwrap_or(0)
}

fn replay_artifacts(opts: &Opts) -> Result<(), Failure> {
    let dir = &opts.scenario;
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", dir.join(name).display())))
    };
    let timeline = read("timeline.log")?;
    let notifications = read("notifications.log").unwrap_or_default();
    let trace = read("bus_trace.log").unwrap_or_default();

    let mut bridge = bridge_for(opts)?;
    let config = bridge.config.clone();

    let mut by_tick: BTreeMap<u64, (Vec<&str>, Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for l in timeline.lines() {
        by_tick.entry(tick_of(l)).or_default().0.push(l);
    }
    for l in notifications.lines() {
        by_tick.entry(tick_of(l)).or_default().1.push(l);
    }
    // Recorded publications are mirrored at their delivery tick.
    for l in trace.lines() {
        by_tick.entry(tick_of(l) + 1).or_default().2.push(l);
    }
    let last = by_tick.keys().next_back().copied().unwrap_or(0);
    let stdout = io::stdout();
    for tick in 0..=last {
        if let Some((lines, notes, published)) = by_tick.get(&tick) {
            let mut out = stdout.lock();
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
            let _ = out.flush();
            for n in notes {
                eprintln!("{n}");
            }
            if let Some(session) = bridge.session_mut() {
                for p in published {
                    let fields: Vec<&str> = p.splitn(5, '|').collect();
                    if let [_, _, _, topic, json] = fields[..] {
                        if let Err(e) = session.publish(&config.topic(topic), json.as_bytes()) {
                            warn!("bridge: {e}");
                        }
                    }
                }
            }
        }
        pace(opts.pace);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IP2S_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => cmd_run(o),
        Command::Verify(o) => cmd_verify(o),
        Command::Replay(o) => cmd_replay(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
