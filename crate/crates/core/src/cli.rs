//! Command-line front end. Exit codes: 0 success, 1 domain error (invalid
//! model, failed run, bad property), 2 usage or I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::casestudy::{build_fatigue_aware_scenario, build_scenario, ControllerParams, ScenarioParams};
use crate::dsl::{parse_model_bytes, parse_model_unchecked, pretty_print};
use crate::model::{validate_network, NetworkModel};
use crate::sim::{simulate, SimConfig, SimError};
use crate::smc::{estimate_probability, parse_goal, parse_property, sweep, sweep_csv, SmcOptions};

pub const THREADS_ENV: &str = "HYSMC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hysmc", version, about = "Simulate and statistically model-check networks of hybrid automata")]
struct Cli {
    /// Also write the loaded model as canonical model text to this file.
    #[arg(long, global = true, value_name = "PATH")]
    dump_model: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a model; report problems with their positions.
    Validate {
        /// Builtin name (`scenario`, `scenario-controller`) or model file.
        model: String,
    },
    /// Simulate one run and write the trace, the event list and a manifest.
    Simulate {
        model: String,
        #[arg(long, default_value_t = 7200.0)]
        horizon: f64,
        #[command(flatten)]
        sim: SimArgs,
        /// Record every n-th integration step.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Output prefix: writes PREFIX_trace.csv, PREFIX_events.csv, PREFIX_manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the probability of a time-bounded reachability property.
    Check {
        model: String,
        /// Property such as `Pr[<=7200](<> Human.passed_out)`.
        #[arg(long)]
        prop: String,
        #[command(flatten)]
        stat: StatArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write PREFIX_result.json and PREFIX_manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a reachability goal over a range of time bounds.
    Sweep {
        model: String,
        /// Goal expression, e.g. `Human.passed_out && Robot.moving`.
        #[arg(long)]
        prop_goal: String,
        /// Inclusive range START:STOP:STEP.
        #[arg(long)]
        bounds: String,
        #[command(flatten)]
        stat: StatArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Give every bound its own independent runs.
        #[arg(long)]
        independent: bool,
        /// Writes PREFIX_sweep.csv and PREFIX_manifest.json; CSV goes to standard output otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs under this prefix instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct SimArgs {
    /// Master seed; drawn at random (and recorded) when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step in seconds.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
}

#[derive(Debug, Clone, Args)]
struct StatArgs {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

/// Everything needed to reproduce an output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_sharing: Option<bool>,
    pub prefix: String,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_s: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) | Failure::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Domain(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{}", text);
            } else {
                let _ = write!(out, "{}", text);
            }
            return e.exit_code();
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn with_pool<R: Send>(f: impl FnOnce() -> Result<R, Failure> + Send) -> Result<R, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::Usage(format!("{} must be a positive integer, got `{}`", THREADS_ENV, v)))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Io(e.to_string()))?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}

fn dispatch(cli: &Cli, out: &mut impl Write, err: &mut impl Write) -> Outcome {
    match &cli.command {
        Command::Validate { model } => cmd_validate(model, cli.dump_model.as_deref(), out),
        Command::Simulate {
            model,
            horizon,
            sim,
            stride,
            out: prefix,
        } => {
            let manifest = RunManifest {
                command: "simulate".into(),
                horizon: Some(*horizon),
                stride: Some(*stride),
                ..base_manifest(model, sim, prefix_text(Some(prefix)))
            };
            execute(&manifest, cli.dump_model.as_deref(), out, err)
        }
        Command::Check {
            model,
            prop,
            stat,
            sim,
            out: prefix,
        } => {
            let manifest = RunManifest {
                command: "check".into(),
                property: Some(prop.clone()),
                epsilon: Some(stat.epsilon),
                alpha: Some(stat.alpha),
                ..base_manifest(model, sim, prefix_text(prefix.as_deref()))
            };
            execute(&manifest, cli.dump_model.as_deref(), out, err)
        }
        Command::Sweep {
            model,
            prop_goal,
            bounds,
            stat,
            sim,
            independent,
            out: prefix,
        } => {
            let manifest = RunManifest {
                command: "sweep".into(),
                goal: Some(prop_goal.clone()),
                bounds: Some(bounds.clone()),
                epsilon: Some(stat.epsilon),
                alpha: Some(stat.alpha),
                seed_sharing: Some(!independent),
                ..base_manifest(model, sim, prefix_text(prefix.as_deref()))
            };
            execute(&manifest, cli.dump_model.as_deref(), out, err)
        }
        Command::Replay { manifest, out: prefix } => {
            let text = fs::read_to_string(manifest)
                .map_err(|e| Failure::Io(format!("cannot read {}: {}", manifest.display(), e)))?;
            let mut recorded: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("malformed manifest {}: {}", manifest.display(), e)))?;
            if let Some(p) = prefix {
                recorded.prefix = p.display().to_string();
            }
            execute(&recorded, cli.dump_model.as_deref(), out, err)
        }
    }
}

fn prefix_text(prefix: Option<&Path>) -> String {
    prefix.map(|p| p.display().to_string()).unwrap_or_default()
}

fn base_manifest(model: &str, sim: &SimArgs, prefix: String) -> RunManifest {
    let model = if is_builtin(model) {
        model.to_string()
    } else {
        fs::canonicalize(model)
            .map(|p| p.display().to_string())
            .unwrap_or_else(|_| model.to_string())
    };
    RunManifest {
        command: String::new(),
        model,
        seed: sim.seed.unwrap_or_else(rand::random),
        step: sim.step,
        horizon: None,
        stride: None,
        property: None,
        goal: None,
        bounds: None,
        epsilon: None,
        alpha: None,
        seed_sharing: None,
        prefix,
        outputs: Vec::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_s: 0.0,
    }
}

const BUILTINS: [&str; 2] = ["scenario", "scenario-controller"];

fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

fn builtin(name: &str) -> Option<NetworkModel> {
    let params = ScenarioParams::default();
    match name {
        "scenario" => build_scenario(&params).ok(),
        "scenario-controller" => build_fatigue_aware_scenario(&params, &ControllerParams::default()).ok(),
        _ => None,
    }
}

fn read_source(model: &str) -> Result<Vec<u8>, Failure> {
    fs::read(model).map_err(|e| Failure::Io(format!("cannot read {}: {}", model, e)))
}

fn load_model(model: &str, dump: Option<&Path>) -> Result<NetworkModel, Failure> {
    let loaded = match builtin(model) {
        Some(m) => m,
        None => parse_model_bytes(&read_source(model)?)
            .map_err(|e| Failure::Domain(format!("{}: {}", model, e)))?,
    };
    if let Some(path) = dump {
        write_atomic(path, pretty_print(&loaded).as_bytes())?;
    }
    Ok(loaded)
}

fn cmd_validate(model: &str, dump: Option<&Path>, out: &mut impl Write) -> Outcome {
    let (parsed, issues) = match builtin(model) {
        Some(m) => {
            let report = validate_network(&m);
            let issues: Vec<String> = report.issues.iter().map(|i| format!("{}", SourceLess(i))).collect();
            (m, issues)
        }
        None => {
            let bytes = read_source(model)?;
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Failure::Domain(format!("{}: input is not valid UTF-8 (byte {})", model, e.valid_up_to())))?;
            let (m, spans) = parse_model_unchecked(text)
                .map_err(|e| Failure::Domain(format!("{}: syntax error at {}", model, e)))?;
            let report = validate_network(&m);
            let issues: Vec<String> = spans.locate(&report.issues).iter().map(|i| i.to_string()).collect();
            (m, issues)
        }
    };
    let report = validate_network(&parsed);
    for line in &issues {
        writeln!(out, "{}", line).map_err(io_failure)?;
    }
    let errors = report.errors().count();
    let warnings = report.warnings().count();
    writeln!(
        out,
        "{}: {} automata, {} channels, {} error(s), {} warning(s)",
        model,
        parsed.automata.len(),
        parsed.channels.len(),
        errors,
        warnings
    )
    .map_err(io_failure)?;
    if let Some(path) = dump {
        write_atomic(path, pretty_print(&parsed).as_bytes())?;
    }
    if errors > 0 {
        return Err(Failure::Domain(format!("{} is invalid", model)));
    }
    Ok(())
}

struct SourceLess<'a>(&'a crate::model::Issue);

impl std::fmt::Display for SourceLess<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let level = match self.0.severity {
            crate::model::Severity::Error => "error",
            crate::model::Severity::Warning => "warning",
        };
        write!(f, "{}[{}]: {}", level, self.0.code, self.0.message)
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Config(m) => Failure::Usage(m),
        other => Failure::Domain(other.to_string()),
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| Failure::Io(format!("cannot write in {}: {}", dir.display(), e)))?;
    tmp.write_all(bytes).map_err(io_failure)?;
    tmp.persist(path)
        .map_err(|e| Failure::Io(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn output_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}_{}", prefix, suffix))
}

/// Parses an inclusive `START:STOP:STEP` range.
pub fn parse_bounds(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(format!("bounds must look like START:STOP:STEP, got `{}`", text));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{}` is not a number", s))
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if start <= 0.0 {
        return Err("bounds must be positive".into());
    }
    if step <= 0.0 {
        return Err("step must be positive".into());
    }
    if stop < start {
        return Err("STOP must not be smaller than START".into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn execute(manifest: &RunManifest, dump: Option<&Path>, out: &mut impl Write, err: &mut impl Write) -> Outcome {
    let started = Instant::now();
    let model = load_model(&manifest.model, dump)?;
    let mut manifest = manifest.clone();
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    match manifest.command.as_str() {
        "simulate" => {
            if manifest.prefix.is_empty() {
                return Err(Failure::Usage("simulate needs an output prefix".into()));
            }
            let settings = SimConfig {
                horizon: manifest.horizon.unwrap_or(7200.0),
                step: manifest.step,
                seed: manifest.seed,
                stride: manifest.stride.unwrap_or(10),
                ..SimConfig::default()
            };
            settings.validate().map_err(sim_failure)?;
            let trace = simulate(&model, &settings).map_err(sim_failure)?;
            files.push((output_path(&manifest.prefix, "trace.csv"), trace.samples_csv().into_bytes()));
            files.push((output_path(&manifest.prefix, "events.csv"), trace.events_csv().into_bytes()));
            writeln!(
                err,
                "simulated {} s: {} samples, {} events",
                trace.end_time(),
                trace.samples.len(),
                trace.events.len()
            )
            .map_err(io_failure)?;
        }
        "check" => {
            let text = manifest.property.clone().unwrap_or_default();
            let property = parse_property(&text, &model).map_err(|e| Failure::Domain(format!("property: {}", e)))?;
            let options = smc_options(&manifest)?;
            let result = with_pool(|| estimate_probability(&model, &property, &options).map_err(|e| Failure::Domain(e.to_string())))?;
            let json = serde_json::to_string(&result).map_err(|e| Failure::Io(e.to_string()))?;
            writeln!(out, "{}", json).map_err(io_failure)?;
            if !manifest.prefix.is_empty() {
                files.push((output_path(&manifest.prefix, "result.json"), format!("{}\n", json).into_bytes()));
            }
        }
        "sweep" => {
            let bounds = parse_bounds(manifest.bounds.as_deref().unwrap_or_default()).map_err(Failure::Usage)?;
            let goal_text = manifest.goal.clone().unwrap_or_default();
            let goal = parse_goal(&goal_text, &model).map_err(|e| Failure::Domain(format!("goal: {}", e)))?;
            let mut options = smc_options(&manifest)?;
            options.seed_sharing = manifest.seed_sharing.unwrap_or(true);
            let results = with_pool(|| sweep(&model, &goal, &bounds, &options).map_err(|e| Failure::Domain(e.to_string())))?;
            let csv = sweep_csv(&results);
            if manifest.prefix.is_empty() {
                write!(out, "{}", csv).map_err(io_failure)?;
            } else {
                files.push((output_path(&manifest.prefix, "sweep.csv"), csv.into_bytes()));
            }
        }
        other => return Err(Failure::Usage(format!("unknown command `{}` in manifest", other))),
    }
    if manifest.prefix.is_empty() {
        return Ok(());
    }
    manifest.outputs = files.iter().map(|(p, _)| p.display().to_string()).collect();
    manifest.duration_s = started.elapsed().as_secs_f64();
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
    write_atomic(&output_path(&manifest.prefix, "manifest.json"), format!("{}\n", json).as_bytes())
}

fn smc_options(manifest: &RunManifest) -> Result<SmcOptions, Failure> {
    let epsilon = manifest.epsilon.unwrap_or(0.05);
    let alpha = manifest.alpha.unwrap_or(0.05);
    if !(epsilon > 0.0 && epsilon < 1.0 && alpha > 0.0 && alpha < 1.0) {
        return Err(Failure::Usage("epsilon and alpha must lie in (0, 1)".into()));
    }
    let options = SmcOptions {
        step: manifest.step,
        ..SmcOptions::new(epsilon, alpha, manifest.seed)
    };
    SimConfig {
        step: options.step,
        ..SimConfig::default()
    }
    .validate()
    .map_err(sim_failure)?;
    Ok(options)
}
