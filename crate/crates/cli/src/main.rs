use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use robust_cbf::io::{compare, read_summary, write_compare, write_run, COMPARE_FILE, SUMMARY_FILE};
use robust_cbf::scenarios::Scenario;
use robust_cbf::sim::{run, ControllerKind, SimConfig};
use robust_cbf::smid::SmidConfig;

/// Robust CBF/CLF controllers with online set-membership identification.
#[derive(Debug, Parser)]
#[command(name = "rcbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write trajectory.csv + summary.json.
    Simulate(SimulateArgs),
    /// Compare two runs (summary.json files or run directories).
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Where to write the comparison.
        #[arg(long, default_value = COMPARE_FILE)]
        out: PathBuf,
    },
    /// Print a scenario description as JSON.
    DumpScenario { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ControllerArg {
    Pipeline,
    Rcbf,
    Rclf,
    Exact,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Pipeline => ControllerKind::Pipeline,
            ControllerArg::Rcbf => ControllerKind::Rcbf,
            ControllerArg::Rclf => ControllerKind::Rclf,
            ControllerArg::Exact => ControllerKind::Exact,
        }
    }
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// nonlinear2d | planar-robot
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    smid: Option<OnOff>,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon in seconds.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with default overrides; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Optional overrides read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    smid: Option<OnOff>,
    controller: Option<ControllerArg>,
    dt: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    x0: Option<Vec<f64>>,
    seed: Option<u64>,
    smid_params: Option<SmidConfig>,
    probe_states: Option<usize>,
    clf_slack_penalty: Option<f64>,
    out: Option<PathBuf>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn build_config(args: &SimulateArgs) -> anyhow::Result<(Scenario, SimConfig, PathBuf)> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let name = args
        .scenario
        .clone()
        .or(file.scenario)
        .ok_or_else(|| usage("no scenario given (use --scenario or the config file)"))?;
    let mut scenario = Scenario::lookup(&name).map_err(|e| usage(e.to_string()))?;
    if let Some(p) = file.smid_params {
        scenario.smid = p;
    }
    let smid = args.smid.or(file.smid).unwrap_or(OnOff::Off) == OnOff::On;
    let mut config = SimConfig::for_scenario(&scenario, smid);
    if let Some(x0) = file.x0 {
        config.x0 = x0;
    }
    if let Some(c) = args.controller.or(file.controller) {
        config.controller = c.into();
    }
    if let Some(dt) = args.dt.or(file.dt) {
        config.dt = dt;
    }
    if let Some(t) = args.horizon.or(file.horizon) {
        config.horizon = t;
    }
    if let Some(seed) = args.seed.or(file.seed) {
        config.seed = seed;
    }
    if let Some(n) = file.probe_states {
        config.probe_states = n;
    }
    config.clf_slack_penalty = file.clf_slack_penalty;
    config.validate(scenario.model.as_ref()).map_err(|e| usage(e.to_string()))?;
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("runs").join(scenario.name.as_str()));
    Ok((scenario, config, out))
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let (scenario, config, out) = build_config(args)?;
    let log = run(&scenario, &config)?;
    let summary = write_run(&out, &scenario, &config, &log)
        .with_context(|| format!("writing results to {}", out.display()))?;
    let m = &summary.metrics;
    println!("scenario       {}", scenario.name);
    println!("controller     {}", serde_json::to_value(config.controller)?.as_str().unwrap_or("?"));
    println!("smid           {}", if config.smid.is_some() { "on" } else { "off" });
    println!("steps          {} (t = {})", m.steps, m.final_time);
    println!("min h          {:.6}", m.min_h);
    println!("|x(T)|         {:.6}", m.final_state_norm);
    println!("|p(T)|         {:.6}", m.final_position_norm);
    println!("peak |u| [0,1] {:.6}", m.peak_input_inf_first_second);
    println!("peak |u|       {:.6}", m.peak_input_inf);
    println!("effort         {:.6}", m.effort);
    println!("box updates    {}", m.box_updates);
    println!("volume ratio   {:.6}", m.volume_ratio);
    println!("output         {}", out.display());
    match &summary.failure {
        Some(reason) => {
            eprintln!("simulation failed: {reason}");
            Ok(ExitCode::from(1))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(SUMMARY_FILE)
    } else {
        p.to_path_buf()
    }
}

fn cmd_compare(a: &Path, b: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let load = |p: &Path| {
        let path = summary_path(p);
        if !path.is_file() {
            return Err(usage(format!("no summary at {}", path.display())));
        }
        read_summary(&path).map_err(|e| usage(format!("{}: {e}", path.display())))
    };
    let (sa, sb) = (load(a)?, load(b)?);
    let report = compare(&sa, &sb);
    write_compare(out, &report).with_context(|| format!("writing {}", out.display()))?;
    println!("min h          {:.6} -> {:.6} (delta {:+.6})", report.a.min_h, report.b.min_h, report.delta_min_h);
    println!(
        "peak |u| [0,1] {:.6} -> {:.6} (ratio a/b {:.3})",
        report.a.peak_input_inf_first_second, report.b.peak_input_inf_first_second, report.peak_input_ratio
    );
    println!("effort         {:.6} -> {:.6} (delta {:+.6})", report.a.effort, report.b.effort, report.delta_effort);
    println!("box widths     delta {:?}", report.delta_final_box_widths);
    Ok(ExitCode::SUCCESS)
}

fn dump_scenario(name: &str) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::lookup(name).map_err(|e| usage(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&scenario.describe())?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Compare { run_a, run_b, out } => cmd_compare(run_a, run_b, out),
        Command::DumpScenario { name } => dump_scenario(name),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
