//! `evshift`: event-stream clustering and tracking from the command line.
//!
//! Every command reads and writes the text formats of `evshift_core::io`.
//! Failures print a single `evshift: error[<kind>]: <message>` line on stderr
//! and exit with a code specific to the kind.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;
use crate::error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "evshift", version, about = "Cluster and track event-camera streams")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Five rotating and translating shapes sharing one ego-motion.
    Reference,
    /// Four shapes on a slow shared path, for tracking accuracy.
    Tracking,
    /// Six spinning shapes and one that leaves the field of view.
    Exit,
}

/// A scene to render: a preset or a JSON scene description.
#[derive(clap::Args, Debug)]
struct SceneArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    preset: Option<Preset>,
    /// JSON scene description.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Preset length in seconds [default: 0.5, 4 or 10 by preset].
    #[arg(long, conflicts_with = "spec", allow_negative_numbers = true)]
    duration: Option<f64>,
}

/// An event file plus how to read it.
#[derive(clap::Args, Debug)]
struct EventInput {
    /// `t x y p` event file.
    events: PathBuf,
    /// Sensor width, overriding the file header.
    #[arg(long, requires = "height")]
    width: Option<u32>,
    /// Sensor height, overriding the file header.
    #[arg(long, requires = "width")]
    height: Option<u32>,
    /// Stably sort out-of-order input by timestamp.
    #[arg(long)]
    sort: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Positions {
    /// Cluster centroid each track was associated with.
    Raw,
    /// Kalman-filtered position.
    Filtered,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene to PREFIX.events.txt, PREFIX.truth.csv and
    /// PREFIX.centers.csv.
    Synth {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_name = "PREFIX")]
        out_prefix: PathBuf,
    },
    /// Drop background-activity noise.
    Filter {
        #[command(flatten)]
        input: EventInput,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Cluster events packet by packet.
    Cluster {
        #[command(flatten)]
        input: EventInput,
        /// Labeled-events CSV.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write `packet_id,x,y,t,label` rows for plotting.
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,
        /// Packet size of the plot output.
        #[arg(long, default_value_t = 1500)]
        plot_packet_size: usize,
        /// Skip the noise filter.
        #[arg(long)]
        no_filter: bool,
    },
    /// Cluster and track, writing every live track after every packet.
    Track {
        #[command(flatten)]
        input: EventInput,
        /// Tracks CSV.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        no_filter: bool,
    },
    /// Score a labeled-events CSV against per-event ground truth.
    EvalCluster {
        labeled: PathBuf,
        truth: PathBuf,
        /// Add k-means baseline columns.
        #[arg(long)]
        kmeans: bool,
        /// Recall weight of the F measure.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        beta: f64,
        /// Report CSV [default: stdout].
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Score confirmed tracks against ground-truth object centers.
    EvalTrack {
        tracks: PathBuf,
        centers: PathBuf,
        #[arg(long, value_enum, default_value_t = Positions::Raw)]
        positions: Positions,
        /// Largest gap in seconds between a track row and its truth sample.
        #[arg(long, default_value_t = 0.001, allow_negative_numbers = true)]
        max_dt: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Operation counts against a frame-based baseline across speed factors.
    Bench {
        /// Event file to replay [default: render the scene arguments].
        #[arg(long, value_name = "FILE", conflicts_with_all = ["preset", "spec", "duration"])]
        events: Option<PathBuf>,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4", allow_negative_numbers = true)]
        factors: Vec<f64>,
        /// Rescaled seconds processed per factor [default: a third of the stream].
        #[arg(long, allow_negative_numbers = true)]
        window: Option<f64>,
        /// Frame rate of the baseline.
        #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
        fps: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("EVSHIFT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Env(format!("EVSHIFT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Env(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let settings = cli.overrides.resolve()?;
    commands::run(cli.command, &settings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_owned());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.line());
            ExitCode::from(err.exit_code())
        }
    }
}
