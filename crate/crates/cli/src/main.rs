//! `rcmservo`: run scenarios, replay metrics logs, export view graphs and
//! serve the operator bridge.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use rcmservo_bridge::{run_bridge, ServiceOptions, Session};
use rcmservo_core::simulator::{prepare_scenario, read_metrics_csv, replay_summary, run_scenario, MetricsRecord, ScenarioConfig, ScenarioKind};
use rcmservo_core::view_graph::ViewGraph;

#[derive(Parser)]
#[command(name = "rcmservo", version, about = "Homography-based visual servoing under a remote center of motion")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write metrics.csv, summary.json and graph.json.
    Run {
        /// Scenario TOML. Without it the built-in defaults for --kind are used.
        config: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "config")]
        kind: Option<Kind>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory. Defaults to `output.dir` from the config, then `out/<kind>`.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Recompute the run summary from a metrics log.
    Replay {
        metrics: PathBuf,
        /// Target tip position in millimetres, for the final tip error.
        #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
        target_tip: Option<Vec<f64>>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Write column-oriented plot series as JSON.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Build a scenario's view graph without servoing and write it as JSON.
    ExportGraph {
        config: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "config")]
        kind: Option<Kind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Serve the session bridge over WebSocket.
    Serve {
        #[arg(long, env = "RCMSERVO_BIND", default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        /// Session scenario config. Defaults to the any_to_any built-in.
        #[arg(long, env = "RCMSERVO_CONFIG")]
        config: Option<PathBuf>,
        /// Exported graph to resume.
        #[arg(long, env = "RCMSERVO_GRAPH")]
        graph: Option<PathBuf>,
        #[arg(long, env = "RCMSERVO_EVENT_BUFFER", default_value_t = 256)]
        event_buffer: usize,
        #[arg(long, env = "RCMSERVO_HEARTBEAT_MS", default_value_t = 1000)]
        heartbeat_ms: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    AnyToAny,
    ToolMotion,
    Reposition,
}

impl From<Kind> for ScenarioKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::AnyToAny => ScenarioKind::AnyToAny,
            Kind::ToolMotion => ScenarioKind::ToolMotion,
            Kind::Reposition => ScenarioKind::Reposition,
        }
    }
}

fn load_config(path: Option<&Path>, kind: Option<Kind>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::new(kind.map_or(ScenarioKind::AnyToAny, Into::into)),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct PlotData {
    step: Vec<usize>,
    time_s: Vec<f64>,
    mpd_px: Vec<Option<f64>>,
    rcm_error_mm: Vec<f64>,
    task_error: [Vec<f64>; 4],
    tip_mm: [Vec<f64>; 3],
    target_vertex: Vec<usize>,
    events: Vec<(usize, String)>,
}

fn plot_data(records: &[MetricsRecord]) -> PlotData {
    let col = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    PlotData {
        step: records.iter().map(|r| r.step).collect(),
        time_s: col(&|r| r.time_s),
        mpd_px: records.iter().map(|r| r.mpd_px.is_finite().then_some(r.mpd_px)).collect(),
        rcm_error_mm: col(&|r| r.rcm_error_mm),
        task_error: [col(&|r| r.e_t0), col(&|r| r.e_t1), col(&|r| r.e_t2), col(&|r| r.e_t3)],
        tip_mm: [col(&|r| r.tip_x_mm), col(&|r| r.tip_y_mm), col(&|r| r.tip_z_mm)],
        target_vertex: records.iter().map(|r| r.target_vertex).collect(),
        events: records.iter().filter(|r| !r.event.is_empty()).map(|r| (r.step, r.event.clone())).collect(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Run { config, kind, seed, output } => {
            let cfg = load_config(config.as_deref(), kind, seed)?;
            let dir = output.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(cfg.kind.to_string()));
            let outcome = run_scenario(&cfg)?;
            outcome.write_artifacts(&dir)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            log::info!("artifacts written to {}", dir.display());
            Ok(if outcome.summary.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Replay { metrics, target_tip, summary, plot_data: plot } => {
            let file = fs::File::open(&metrics).with_context(|| format!("opening {}", metrics.display()))?;
            let records = read_metrics_csv(file).with_context(|| format!("reading {}", metrics.display()))?;
            let tip = target_tip.map(|t| [t[0], t[1], t[2]]);
            let s = replay_summary(&records, tip);
            match summary {
                Some(p) => write_json(&p, &s)?,
                None => println!("{}", serde_json::to_string_pretty(&s)?),
            }
            if let Some(p) = plot {
                write_json(&p, &plot_data(&records))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ExportGraph { config, kind, seed, output } => {
            let cfg = load_config(config.as_deref(), kind, seed)?;
            let (_, graph) = prepare_scenario(&cfg)?;
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&output, graph.to_json() + "\n").with_context(|| format!("writing {}", output.display()))?;
            eprintln!("{} vertices, {} edges -> {}", graph.len(), graph.edges().len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve { bind, config, graph, event_buffer, heartbeat_ms } => {
            if event_buffer == 0 {
                bail!("--event-buffer must be positive");
            }
            let cfg = load_config(config.as_deref(), None, None)?;
            let session = match graph {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let g = ViewGraph::from_json(&text).with_context(|| format!("importing {}", p.display()))?;
                    Session::with_graph(cfg, g)?
                }
                None => Session::new(cfg)?,
            };
            let options = ServiceOptions { event_buffer, heartbeat: Duration::from_millis(heartbeat_ms.max(1)), ..ServiceOptions::default() };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(run_bridge(bind, session, options))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
