use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glowlab::transport::RenderMode;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "glowlab", version, about = "Inverse rendering for co-located flashlight captures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Bundled scene name (plane, two-patch, cornell-desk) or scene JSON path.
    #[arg(long)]
    pub scene: Option<String>,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub spp: Option<u32>,
    /// path, direct, cache or naive_cache.
    #[arg(long)]
    pub mode: Option<RenderMode>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Number of training frames.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one view of a scene.
    Render {
        #[command(flatten)]
        common: Common,
        /// Cache checkpoint for the cache render modes.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Image size (square); defaults to the dataset size.
        #[arg(long)]
        size: Option<u32>,
    },
    /// Path-trace a synthetic capture dataset.
    MakeDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train a radiance cache with the radiometric prior.
    TrainCache {
        #[command(flatten)]
        common: Common,
        /// Dataset directory supplying cameras and lights.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Train the single-network cache instead of the dynamic one.
        #[arg(long)]
        naive: bool,
    },
    /// Recover per-face materials on the known mesh.
    OptimizeMaterial {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Material recovery in all four render modes with the ordering verdict.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; rendered in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Direct and indirect radiance while the light crosses a shadow edge.
    ShadowSweep {
        #[command(flatten)]
        common: Common,
        /// Number of light positions.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Score recovered materials against a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Materials blob written by optimize-material.
        #[arg(long)]
        materials: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("GLOWLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("GLOWLAB_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            anyhow::bail!("GLOWLAB_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Render { common, cache, size } => commands::render(&common, cache.as_deref(), size),
        Command::MakeDataset { common } => commands::make_dataset(&common),
        Command::TrainCache { common, data, naive } => commands::train_cache(&common, data.as_deref(), naive),
        Command::OptimizeMaterial { common, data } => commands::optimize_material(&common, &data),
        Command::Ablate { common, data } => commands::ablate(&common, data.as_deref()),
        Command::ShadowSweep { common, samples } => commands::shadow_sweep(&common, samples),
        Command::Eval { common, data, materials } => commands::eval(&common, &data, &materials),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
