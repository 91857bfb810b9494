use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roadgraph_cli::commands::{self, PolicySpec};
use roadgraph_cli::config::{RunConfig, CONFIG_ENV};
use roadgraph_cli::exit;

#[derive(Debug, Parser)]
#[command(
    name = "roadgraph",
    version,
    about = "Road-network graph detection and evaluation"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads across worlds (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render synthetic worlds: image, ground-truth graph and masks.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Record expert demonstrations for one or more worlds.
    Labels {
        #[arg(long, required = true, num_args = 1..)]
        world: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many samples per world.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the agent on one or more worlds.
    Detect {
        #[arg(long, required = true, num_args = 1..)]
        world: Vec<PathBuf>,
        /// oracle, noisy-oracle or bridge:<command>
        #[arg(long, default_value = "oracle")]
        policy: PolicySpec,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted graph against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tile width; defaults to the extent of both graphs.
        #[arg(long, requires = "height")]
        width: Option<usize>,
        #[arg(long, requires = "width")]
        height: Option<usize>,
    },
    /// Draw a graph over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the training losses of recorded model outputs.
    AuditLoss {
        /// `labels` output directory or samples file.
        #[arg(long)]
        samples: PathBuf,
        /// JSON lines of {step, predictions: [{dx, dy, prob}], road?, intersection?}.
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ground-truth bridge client, for testing the bridge path.
    #[command(hide = true)]
    BridgeOracle {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let (seed, jobs) = (cli.seed, cli.jobs);
    match cli.command {
        Command::Synth { out_dir, count } => {
            for d in commands::synth(&cfg, seed, count, &out_dir, jobs)? {
                println!("{}", d.display());
            }
        }
        Command::Labels { world, out, limit } => {
            let n = commands::labels(&cfg, seed, &world, &out, limit, jobs)?;
            println!("{n} samples");
        }
        Command::Detect { world, policy, out } => {
            if commands::detect(&cfg, seed, &policy, &world, &out, jobs)? {
                eprintln!("warning: at least one run hit a step guard or policy error");
                return Ok(exit::TRUNCATED);
            }
        }
        Command::Eval {
            gt,
            pred,
            out,
            width,
            height,
        } => {
            let size = width.zip(height);
            let report = commands::eval(&cfg, &gt, &pred, size, out.as_deref())?;
            print!("{}", report.to_table());
        }
        Command::Overlay { image, graph, out } => commands::overlay(&image, &graph, &out)?,
        Command::AuditLoss {
            samples,
            preds,
            out,
        } => {
            let audit = commands::audit_loss(&cfg, &samples, &preds)?;
            let m = &audit.mean;
            println!("steps {}", audit.steps.len());
            println!("coord {:.6}", m.coord);
            println!("valid {:.6}", m.valid);
            println!("road_focal {:.6}", m.road_focal);
            println!("intersection_focal {:.6}", m.intersection_focal);
            println!("total {:.6}", audit.mean_total);
            if let Some(out) = out {
                roadgraph_cli::graph_io::write_json(&audit, &out)?;
            }
        }
        Command::BridgeOracle { gt, port } => commands::bridge_oracle(&gt, port)?,
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::DATA)
        }
    }
}
