use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use featrack::evaluation::{evaluate, OutputTrack};
use featrack::io::{
    load_objects, parse_detections_with_warnings, parse_ground_truth, parse_tracks, parse_weights,
    write_trajectories, write_weights,
};
use featrack::synth::{synth_generate, write_scenario, ScenarioSpec};
use featrack::{learn_weights, parse_config, track, TrackerConfig};

#[derive(Parser)]
#[command(
    name = "featrack",
    version,
    about = "Multi-feature tracking-by-detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link detections into trajectories.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn feature weights from detections and ground truth.
    Learn {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the per-round training report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score tracks against ground truth.
    Evaluate {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic scene.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => Ok(parse_config(p)?),
        None => Ok(TrackerConfig::default()),
    }
}

fn load_detections(path: &Path, cfg: &TrackerConfig) -> Result<Vec<featrack::DetectedObject>> {
    let (records, warnings) = parse_detections_with_warnings(path)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(load_objects(&records, base, cfg)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track {
            detections,
            config,
            weights,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let weights = parse_weights(&weights)?;
            let objects = load_detections(&detections, &cfg)?;
            let trajs = track(&objects, &weights, &cfg)?;
            write_trajectories(&trajs, &out)?;
            eprintln!("{} trajectories written to {}", trajs.len(), out.display());
        }
        Command::Learn {
            detections,
            ground_truth,
            config,
            out,
            report,
        } => {
            let cfg = load_config(config.as_deref())?;
            let objects = load_detections(&detections, &cfg)?;
            let gt = parse_ground_truth(&ground_truth)?;
            let rep = learn_weights(&objects, &gt, &cfg)?;
            write_weights(&rep.weights, &out)?;
            match report {
                Some(p) => std::fs::write(&p, rep.to_text())
                    .with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", rep.to_text()),
            }
        }
        Command::Evaluate {
            tracks,
            ground_truth,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let tracks: Vec<OutputTrack> = parse_tracks(&tracks)?;
            let gt = parse_ground_truth(&ground_truth)?;
            print!("{}", evaluate(&gt, &tracks, &cfg)?.to_kv_string());
        }
        Command::Synth {
            spec,
            out_dir,
            seed,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    ScenarioSpec::from_toml_str(&text)
                        .map_err(|e| anyhow::anyhow!(e))
                        .with_context(|| format!("parsing {}", p.display()))?
                }
                None => ScenarioSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let scenario = synth_generate(&spec, &cfg)?;
            write_scenario(&scenario, &out_dir)?;
            eprintln!(
                "{} detections, {} ground-truth boxes written to {}",
                scenario.detections.len(),
                scenario.ground_truth.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
