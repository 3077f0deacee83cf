use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use roadcue_core::calibration::{self, CalibrationError, CalibrationSession};
use roadcue_core::client::{self, ClientConfig, ClientError, PoseTrack};
use roadcue_core::metrics::summarize_trials;
use roadcue_core::server::wire::{self, Detection};
use roadcue_core::server::{self, ServerConfig, ServerError};
use roadcue_core::sim::io::{parse_summaries, write_jsonl_file, write_trial};
use roadcue_core::sim::{self, Agent, Condition, Scenario, ScenarioConfig, SimError, Simulator};

#[derive(Parser, Debug, Serialize)]
#[command(name = "roadcue", version, about = "Roadside tracking and headset cueing for blind corners")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for logs, manifests and results.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON config for the chosen subcommand (server, client or scenario).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Replay recorded detections through the tracker and stream frames.
    Serve(ServeArgs),
    /// Connect to a server, calibrate, and log cues.
    Client(ClientArgs),
    /// Run simulated trials and write their logs.
    Trial(TrialArgs),
    /// Aggregate trial results into the TTC table.
    Report(ReportArgs),
    /// Re-solve a stored calibration session and compare.
    CalibReplay(CalibReplayArgs),
    /// Export a trial's raw sensor streams under `<out-dir>/streams/` for
    /// `serve` and `client`.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
struct ServeArgs {
    #[arg(long, default_value_t = server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Hz.
    #[arg(long)]
    tick_rate: Option<f64>,
    /// Detection JSON-lines file.
    #[arg(long)]
    source: PathBuf,
    /// Measurement noise for the tracking filter, meters.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Tick as fast as possible instead of in real time.
    #[arg(long)]
    no_pace: bool,
    /// Seconds to wait for a first client.
    #[arg(long, default_value_t = 5.0)]
    wait_client: f64,
}

#[derive(Args, Debug, Serialize)]
struct ClientArgs {
    #[arg(long)]
    server: Option<String>,
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long)]
    proximity: Option<f64>,
    /// Output cue log; defaults to `<out-dir>/cues.jsonl`.
    #[arg(long)]
    cue_log: Option<PathBuf>,
    /// Headset pose JSON-lines file.
    #[arg(long)]
    poses: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrialArgs {
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    condition: Option<Condition>,
    /// Trials to run, with seeds `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Result files or directories; defaults to the output directory.
    paths: Vec<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct CalibReplayArgs {
    session: PathBuf,
    /// Largest accepted deviation from the stored result (meters / radians).
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    condition: Option<Condition>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Calibration(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Calibration(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Calibration(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::CalibrationTimeout(_) | ClientError::Calibration(_) => CliError::Calibration(e.to_string()),
            ClientError::Config(_) | ClientError::PoseFile(..) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SimError::Calibration(_) => CliError::Calibration(e.to_string()),
            SimError::Client(c) => c.into(),
            SimError::Server(s) => s.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    started_unix_s: f64,
    argv: Vec<String>,
    invocation: &'a Cli,
}

fn write_manifest(cli: &Cli) -> Result<(), CliError> {
    fs::create_dir_all(&cli.out_dir)?;
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        argv: std::env::args().collect(),
        invocation: cli,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(cli.out_dir.join("run_manifest.json"), text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn serve(cli: &Cli, a: &ServeArgs) -> Result<(), CliError> {
    let mut cfg: ServerConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => ServerConfig::default(),
    };
    cfg.bind_address = format!("{}:{}", a.host, a.port);
    if let Some(r) = a.tick_rate {
        cfg.tick_rate = r;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise.sigma = s;
    }
    cfg.pace = !a.no_pace;
    cfg.wait_for_client = Some(a.wait_client);
    cfg.validate()?;
    cfg.noise
        .validate()
        .map_err(|e| CliError::Config(format!("noise: {e}")))?;
    let text = fs::read_to_string(&a.source)
        .map_err(|e| CliError::Config(format!("detection source {}: {e}", a.source.display())))?;
    let dets = wire::read_detections(&text)
        .map_err(|(line, e)| CliError::Config(format!("{} line {line}: {e}", a.source.display())))?;
    info!("replaying {} detections", dets.len());
    let stop = AtomicBool::new(false);
    let summary = server::run_server(cfg, dets, &stop)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn client(cli: &Cli, a: &ClientArgs) -> Result<(), CliError> {
    let mut cfg: ClientConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => ClientConfig::default(),
    };
    if let Some(s) = &a.server {
        cfg.server = s.clone();
    }
    if let Some(f) = a.fov {
        cfg.fov_deg = f;
    }
    if let Some(p) = a.proximity {
        cfg.proximity_m = p;
    }
    cfg.validate()?;
    let text =
        fs::read_to_string(&a.poses).map_err(|e| CliError::Config(format!("poses {}: {e}", a.poses.display())))?;
    let poses = PoseTrack::parse(&text)?;
    let path = a.cue_log.clone().unwrap_or_else(|| cli.out_dir.join("cues.jsonl"));
    let mut out = BufWriter::new(fs::File::create(&path)?);
    let stop = AtomicBool::new(false);
    let summary = client::run_client(&cfg, &poses, &mut out, &stop)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn scenario_config(
    cli: &Cli,
    scenario: Option<Scenario>,
    condition: Option<Condition>,
    seed: u64,
) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => {
            let (Some(s), Some(c)) = (scenario, condition) else {
                return Err(CliError::Config("--scenario and --condition are required without --config".into()));
            };
            ScenarioConfig::preset(s, c, seed)
        }
    };
    if let Some(s) = scenario {
        if s != cfg.scenario {
            cfg.scenario = s;
            cfg.corner_angle = s.corner_angle_deg();
        }
    }
    if let Some(c) = condition {
        cfg.condition = c;
    }
    cfg.rng_seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn trial(cli: &Cli, a: &TrialArgs) -> Result<(), CliError> {
    if a.repeat == 0 {
        return Err(CliError::Config("--repeat must be at least 1".into()));
    }
    for r in 0..a.repeat {
        let cfg = scenario_config(cli, a.scenario, a.condition, cli.seed + u64::from(r))?;
        let out = sim::run_trial(&cfg)?;
        let files = write_trial(&cli.out_dir, &out)?;
        let s = &out.summary;
        println!(
            "{} event {:.3} s ({:?}) ttc pedestrian {:.3} s counterpart {:.3} s -> {}",
            s.trial_id,
            s.event_time,
            s.event_source,
            s.ttc_pedestrian,
            s.ttc_counterpart,
            files.dir.display()
        );
    }
    Ok(())
}

fn collect_result_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Config(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(files)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<(), CliError> {
    let paths = if a.paths.is_empty() {
        vec![cli.out_dir.clone()]
    } else {
        a.paths.clone()
    };
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for f in collect_result_files(&paths)? {
        let text = fs::read_to_string(&f)?;
        let (r, bad) = parse_summaries(&text);
        if !bad.is_empty() {
            warn!("{}: skipped {} malformed lines", f.display(), bad.len());
        }
        skipped += bad.len();
        rows.extend(r);
    }
    let table = summarize_trials(&rows);
    let v = serde_json::json!({
        "cells": table.cells,
        "empty_cells": table.empty_cells,
        "trials": rows.len(),
        "skipped_lines": skipped,
    });
    let json = serde_json::to_string_pretty(&v).expect("report serializes");
    fs::write(cli.out_dir.join("report.json"), &json)?;
    if a.json {
        println!("{json}");
    } else {
        print!("{}", table.render_text());
        println!("trials: {}  skipped lines: {}", rows.len(), skipped);
    }
    Ok(())
}

fn calib_replay(a: &CalibReplayArgs) -> Result<(), CliError> {
    let session = CalibrationSession::load(&a.session).map_err(|e| match e {
        CalibrationError::Session(m) => CliError::Config(m),
        other => CliError::Config(other.to_string()),
    })?;
    let samples = session.samples();
    let solved = calibration::solve_rigid_alignment(&samples).map_err(|e| match e {
        CalibrationError::TooFewSamples(_) | CalibrationError::LengthMismatch { .. } | CalibrationError::NonFinite => {
            CliError::Config(e.to_string())
        }
        other => CliError::Calibration(other.to_string()),
    })?;
    println!(
        "{}",
        serde_json::to_string(&calibration::SessionResult::from(&solved)).expect("result serializes")
    );
    match session.stored_transform() {
        None => Ok(()),
        Some(Err(e)) => Err(CliError::Config(format!("stored result: {e}"))),
        Some(Ok(stored)) => {
            let dr = stored.rotation.angle_to(&solved.transform.rotation);
            let dt = (stored.translation - solved.transform.translation).norm();
            println!("rotation deviation {dr:.3e} rad, translation deviation {dt:.3e} m");
            if dr <= a.tolerance && dt <= a.tolerance {
                Ok(())
            } else {
                Err(CliError::Runtime("replayed calibration differs from the stored result".into()))
            }
        }
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = scenario_config(cli, a.scenario, a.condition.or(Some(Condition::B)), cli.seed)?;
    let mut simulator = Simulator::new(&cfg)?;
    let mut poses = Vec::new();
    while let Some(frame) = simulator.step() {
        poses.push((frame.t, frame.pedestrian_pose));
    }
    let dir = cli.out_dir.join("streams");
    fs::create_dir_all(&dir)?;
    let dets: &[Detection] = simulator.detection_log();
    fs::write(dir.join("detections.jsonl"), wire::write_detections(dets))?;
    fs::write(dir.join("poses.jsonl"), PoseTrack::new(poses).to_jsonl())?;
    write_jsonl_file(&dir.join("truth.jsonl"), simulator.truth_log())?;
    write_jsonl_file(&dir.join("events.jsonl"), simulator.events())?;
    let los = simulator.line_of_sight_time();
    println!(
        "wrote {} detections to {}; scenario starts at {:.3} s; line of sight at {}; pedestrian id {}",
        dets.len(),
        dir.display(),
        simulator.scenario_start(),
        los.map_or("never".to_string(), |t| format!("{t:.3} s")),
        Agent::Pedestrian.id()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    write_manifest(cli)?;
    match &cli.command {
        Command::Serve(a) => serve(cli, a),
        Command::Client(a) => client(cli, a),
        Command::Trial(a) => trial(cli, a),
        Command::Report(a) => report(cli, a),
        Command::CalibReplay(a) => calib_replay(a),
        Command::Simulate(a) => simulate(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ARCAS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
