mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use synprob::postprocess::Connectivity;

#[derive(Parser, Debug)]
#[command(name = "synprob", version, about = "Query-driven probabilistic synapse detection")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute synapse probability volumes and detections for every query.
    Detect(DetectArgs),
    /// Score detections against annotations over a threshold grid.
    Eval(EvalArgs),
    /// Detection density as a function of threshold.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset with planted synapses.
    Synth(SynthArgs),
    /// Export synaptogram panels around one detection.
    Synaptogram(SynaptogramArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Query file: a JSON array of queries.
    #[arg(long)]
    pub queries: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DetectionArgs {
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2)]
    pub min_voxels: usize,
    /// 6 (faces) or 26 (faces, edges and corners).
    #[arg(long, default_value = "26", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse().map_err(|e: synprob::Error| e.to_string())
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every channel's foreground, 2D and 3D puncta volumes.
    #[arg(long)]
    pub export_stages: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Annotation file; defaults to the one named in the manifest.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Threshold grid as `lo:hi:step`.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub thresholds: String,
    /// Largest centroid distance for a match, in µm.
    #[arg(long, default_value_t = 0.3)]
    pub max_distance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 2)]
    pub min_voxels: usize,
    #[arg(long, default_value = "26", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
    /// Threshold grid as `lo:hi:step`.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub thresholds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    /// Synthetic dataset spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the spec's RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynaptogramArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Query to use; defaults to the first one.
    #[arg(long)]
    pub query: Option<String>,
    /// Detection id at `--threshold`.
    #[arg(long, conflicts_with = "centroid", required_unless_present = "centroid")]
    pub detection_id: Option<usize>,
    /// Panel center as `x,y,z` in µm.
    #[arg(long, value_delimiter = ',')]
    pub centroid: Option<Vec<f64>>,
    /// Half width of each panel, in µm.
    #[arg(long, default_value_t = 0.5)]
    pub half_window: f64,
    /// Number of consecutive slices (columns).
    #[arg(long, default_value_t = 6)]
    pub slices: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
        Command::Synaptogram(a) => commands::synaptogram(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { 3 } else { 2 })
        }
    }
}
