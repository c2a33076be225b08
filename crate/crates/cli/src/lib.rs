//! Command-line front end: plan, simulate, verify and export scenarios.
//!
//! Exit codes: 0 success, 1 a constraint or task check failed, 2 usage
//! error, 3 unreadable or invalid input file, 4 output could not be
//! written, 5 simulation error.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use uam_vkc::io::{self, Format, TrajectoryMeta};
use uam_vkc::planner::{execute_sequence, verify, PlannedStep, PlannerError, Verification};
use uam_vkc::scenario::Scenario;
use uam_vkc::sim::{self, Episode, Outcome, SimConfig};

/// Version tag of the defaults file format.
pub const DEFAULTS_VERSION: u32 = 1;

/// Simulation and controller defaults used by every verb, before `--set`.
pub const DEFAULTS_JSON: &str = include_str!("../defaults.json");

/// Parses [`DEFAULTS_JSON`].
pub fn defaults() -> Result<SimConfig, String> {
    let doc: Value = serde_json::from_str(DEFAULTS_JSON).map_err(|e| format!("defaults file: {e}"))?;
    if doc["version"] != DEFAULTS_VERSION {
        return Err(format!("defaults file: unsupported version {}", doc["version"]));
    }
    serde_json::from_value(doc["sim"].clone()).map_err(|e| format!("defaults file: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "uamvkc", version, about = "Plan, simulate and verify aerial manipulation tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan every step of a scenario and write one trajectory per step.
    Plan(Common),
    /// Plan and simulate a scenario; writes the simulation log.
    Simulate(Common),
    /// Re-check every constraint of trajectory files.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Trajectory files (`.csv` with a `.json` sidecar, or `.json`).
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write the resolved scenario and config, or convert trajectory files.
    Export {
        #[command(flatten)]
        common: Common,
        /// Trajectory files to rewrite in `--format`.
        files: Vec<PathBuf>,
    },
    /// Run a built-in task end to end: plans, log and a task report.
    Demo {
        #[arg(value_parser = ["task1", "task2", "drawer"])]
        task: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Scenario JSON file or built-in name (task1, task2, drawer).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a setting, e.g. `sim.noise_position=0` or
    /// `scenario.settings.xi_goal=1e-5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Trajectory output format.
    #[arg(long, default_value = "csv")]
    pub format: Format,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
    fn input(msg: impl fmt::Display) -> Self {
        Self {
            code: 3,
            msg: msg.to_string(),
        }
    }
    fn output(msg: impl fmt::Display) -> Self {
        Self {
            code: 4,
            msg: msg.to_string(),
        }
    }
    fn sim(msg: impl fmt::Display) -> Self {
        Self {
            code: 5,
            msg: msg.to_string(),
        }
    }
    fn failed(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

/// Parses `argv` (including the program name), runs it and returns the
/// exit code. Diagnostics go to stderr, results to stdout.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("VKC_LOG_LEVEL", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(c) => plan(&c, out),
        Command::Simulate(c) => simulate(&c, out),
        Command::Verify { common, files } => verify_files(&common, &files, out),
        Command::Export { common, files } => export(&common, &files, out),
        Command::Demo { task, mut common } => {
            common.scenario = Some(task);
            demo(&common, out)
        }
    }
}

/// Loads a scenario file, falling back to a built-in name.
pub fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::load(path).map_err(CliError::input);
    }
    Scenario::builtin(spec).ok_or_else(|| CliError::usage(format!("no scenario file or built-in named `{spec}`")))
}

/// Sets `value` at a dotted `path` inside a JSON document. The value is
/// parsed as JSON and taken as a plain string otherwise.
pub fn set_path(doc: &mut Value, path: &str, value: &str) -> Result<(), String> {
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (n, key) in keys.iter().enumerate() {
        let next = match node {
            Value::Object(map) => map.get_mut(*key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        };
        node = next.ok_or_else(|| format!("unknown setting `{}`", keys[..=n].join(".")))?;
    }
    *node = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok(())
}

/// Scenario and simulation config after `--seed` and `--set`.
pub fn resolve(common: &Common) -> Result<(Scenario, SimConfig), CliError> {
    let spec = common
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::usage("--scenario is required"))?;
    let scenario = load_scenario(spec)?;
    let mut config = defaults().map_err(CliError::input)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.overrides.is_empty() {
        return Ok((scenario, config));
    }
    let mut doc = serde_json::json!({
        "scenario": serde_json::to_value(&scenario).expect("scenario serialises"),
        "sim": serde_json::to_value(&config).expect("config serialises"),
    });
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("override `{o}` is not KEY=VALUE")))?;
        set_path(&mut doc, k.trim(), v.trim()).map_err(CliError::usage)?;
    }
    let scenario: Scenario = serde_json::from_value(doc["scenario"].take())
        .map_err(|e| CliError::usage(format!("invalid scenario override: {e}")))?;
    let config: SimConfig =
        serde_json::from_value(doc["sim"].take()).map_err(|e| CliError::usage(format!("invalid sim override: {e}")))?;
    scenario.validate().map_err(CliError::usage)?;
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok((scenario, config))
}

fn step_stem(k: usize, name: &str) -> String {
    format!("step{}_{}", k + 1, name)
}

fn write_steps(dir: &Path, planned: &[PlannedStep], format: Format) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for (k, p) in planned.iter().enumerate() {
        paths.extend(io::write_step(dir, &step_stem(k, &p.name), p, format).map_err(CliError::output)?);
    }
    Ok(paths)
}

fn print_paths(out: &mut dyn std::io::Write, paths: &[PathBuf]) {
    for p in paths {
        let _ = writeln!(out, "wrote {}", p.display());
    }
}

fn plan(common: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (scenario, _) = resolve(common)?;
    let mut scene = scenario.scene().map_err(CliError::input)?;
    let planned = match execute_sequence(&mut scene, &scenario.steps) {
        Ok(p) => p,
        Err(e @ PlannerError::InvalidProblem(_)) => return Err(CliError::input(e)),
        Err(e) => return Err(CliError::failed(e.to_string())),
    };
    let paths = write_steps(&common.out, &planned, common.format)?;
    for (k, p) in planned.iter().enumerate() {
        let s = &p.trajectory.stats;
        let _ = writeln!(
            out,
            "step {} {:<24} objective {:.4}  outer {}  inner {}",
            k + 1,
            p.name,
            s.objective,
            s.outer_iterations,
            s.inner_iterations
        );
    }
    print_paths(out, &paths);
    Ok(())
}

fn write_log(dir: &Path, stem: &str, ep: &Episode, format: Format) -> Result<Vec<PathBuf>, CliError> {
    match format {
        Format::Csv => ep.log.write(dir, stem).map(|(a, b)| vec![a, b]).map_err(CliError::output),
        Format::Json => {
            std::fs::create_dir_all(dir).map_err(CliError::output)?;
            let path = dir.join(format!("{stem}.json"));
            std::fs::write(&path, ep.log.to_json_string()).map_err(CliError::output)?;
            Ok(vec![path])
        }
    }
}

fn simulate(common: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (scenario, config) = resolve(common)?;
    let ep = sim::run_episode(&scenario, &scenario.steps, &config).map_err(CliError::sim)?;
    let paths = write_log(&common.out, "simlog", &ep, common.format)?;
    print_paths(out, &paths);
    match &ep.log.failure {
        None => Ok(()),
        Some(why) => Err(CliError::failed(format!("episode stopped: {why}"))),
    }
}

/// Pass/fail table of one verification.
pub fn verification_table(v: &Verification, xi_dist: f64) -> String {
    let w = &v.worst;
    let rows = [
        ("start", w.start, 1e-12),
        ("chain", w.chain, uam_vkc::planner::CHAIN_TOL),
        ("goal", w.goal, uam_vkc::planner::GOAL_TOL),
        ("limits", w.limit, 0.0),
        ("env_collision", w.env, xi_dist),
        ("self_collision", w.self_collision, xi_dist),
    ];
    let mut s = format!("  {:<16}{:>14}{:>12}  result\n", "family", "worst", "tolerance");
    for (name, worst, tol) in rows {
        let ok = !v.failures.contains(&name);
        s += &format!(
            "  {name:<16}{worst:>14.3e}{tol:>12.1e}  {}\n",
            if ok { "pass" } else { "FAIL" }
        );
    }
    s
}

fn verify_files(common: &Common, files: &[PathBuf], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let scenario = match &common.scenario {
        Some(s) => Some(load_scenario(s)?),
        None => None,
    };
    let mut all_ok = true;
    for f in files {
        if !f.exists() {
            return Err(CliError::usage(format!("no such file: {}", f.display())));
        }
        let (meta, traj) = io::read_step(f).map_err(CliError::input)?;
        let problem = meta.problem.to_problem();
        problem.validate().map_err(CliError::input)?;
        let v = verify(&problem, &traj).map_err(CliError::input)?;
        let _ = writeln!(out, "{} ({})", f.display(), meta.name);
        let _ = write!(out, "{}", verification_table(&v, problem.xi_dist));
        let mut ok = v.passed;
        if let Some(sc) = &scenario {
            let missing: Vec<&str> = sc
                .obstacles
                .iter()
                .filter(|o| !problem.world.obstacles.contains(o))
                .map(|o| o.name.as_str())
                .collect();
            let consistent = missing.is_empty();
            let _ = writeln!(
                out,
                "  {:<16}{:>14}{:>12}  {}",
                "scenario",
                missing.len(),
                0,
                if consistent { "pass" } else { "FAIL" }
            );
            ok &= consistent;
        }
        all_ok &= ok;
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::failed("constraint check failed"))
    }
}

fn export(common: &Common, files: &[PathBuf], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let mut paths = Vec::new();
    for f in files {
        if !f.exists() {
            return Err(CliError::usage(format!("no such file: {}", f.display())));
        }
        let (meta, traj): (TrajectoryMeta, _) = io::read_step(f).map_err(CliError::input)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        paths.extend(io::write_trajectory(&common.out, stem, &meta, &traj, common.format).map_err(CliError::output)?);
    }
    if files.is_empty() || common.scenario.is_some() {
        let (scenario, config) = resolve(common)?;
        std::fs::create_dir_all(&common.out).map_err(CliError::output)?;
        let sc_path = common.out.join(format!("{}.scenario.json", scenario.name));
        std::fs::write(&sc_path, scenario.to_json()).map_err(CliError::output)?;
        let defaults = serde_json::json!({ "version": DEFAULTS_VERSION, "sim": config });
        let cfg_path = common.out.join("config.json");
        let text = serde_json::to_string_pretty(&defaults).expect("config serialises");
        std::fs::write(&cfg_path, text).map_err(CliError::output)?;
        paths.push(sc_path);
        paths.push(cfg_path);
    }
    print_paths(out, &paths);
    Ok(())
}

/// Human-readable task report.
pub fn outcome_report(o: &Outcome) -> String {
    let mut s = String::new();
    match &o.failure {
        None => s += "episode completed\n",
        Some(w) => s += &format!("episode stopped: {w}\n"),
    }
    s += &format!("max tilt {:.1} deg\n", o.max_tilt.to_degrees());
    for p in &o.placements {
        s += &format!(
            "{} after `{}`: position error {:.1} mm, angle error {:.2} deg\n",
            p.object,
            p.step,
            p.position_error * 1e3,
            p.angle_error.to_degrees()
        );
    }
    for a in &o.articulations {
        let (unit, k) = if a.prismatic { ("mm", 1e3) } else { ("deg", 180.0 / std::f64::consts::PI) };
        s += &format!(
            "{}: opened {:.0}% of {:.3}, closed to {:.2} {unit} from target, contains [{}]\n",
            a.joint,
            a.open_fraction * 100.0,
            a.commanded_open,
            a.close_error() * k,
            a.contents.join(", ")
        );
    }
    s
}

fn demo(common: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (scenario, config) = resolve(common)?;
    let dir = common.out.join(&scenario.name);
    let ep = sim::run_episode(&scenario, &scenario.steps, &config).map_err(CliError::sim)?;
    let mut paths = write_steps(&dir, &ep.planned, common.format)?;
    paths.extend(write_log(&dir, "simlog", &ep, common.format)?);
    print_paths(out, &paths);
    let outcome = sim::evaluate(&ep, &scenario.steps);
    let _ = write!(out, "{}", outcome_report(&outcome));
    match &ep.log.failure {
        None => Ok(()),
        Some(why) => Err(CliError::failed(format!("episode stopped: {why}"))),
    }
}
