//! `seedforge run | bench | serve`

mod bench;
mod run;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seedforge_core::refine::MorphVariant;
use seedforge_core::seeding::SeedMethod;
use seedforge_core::segment::Segmenter;
use seedforge_core::ConfigOverrides;

pub const DEFAULT_CONFIG: &str = "P,Sm,W,Me,gc";

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const SEEDING: u8 = 4;
    pub const SOLVER: u8 = 5;
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "seedforge",
    version,
    about = "Automated seed masks for GrowCut and Random Walker segmentation"
)]
struct Cli {
    /// Pipeline string, e.g. "P,Sm,W,Me,gc"
    #[arg(long, global = true)]
    config: Option<String>,

    /// Input image (binary PGM or G3D)
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,

    /// Output directory (run) or report path (bench)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Treat dark structures as the object
    #[arg(long, global = true)]
    invert: bool,

    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(flatten)]
    stages: StageFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment one image and write label, seed, strength, saliency maps and a manifest
    Run {
        /// Ground-truth mask; adds Dice and seed error to the manifest
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Leave stage timings out of the manifest so reruns are byte-identical
        #[arg(long)]
        no_timings: bool,
    },
    /// Run every config on every phantom and write a CSV or JSON report
    Bench {
        /// One pipeline string per line
        #[arg(long)]
        configs: PathBuf,
        /// One phantom descriptor per line
        #[arg(long)]
        phantoms: PathBuf,
    },
    /// Start the HTTP session service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of static files (the browser front end)
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Directory for write-through session snapshots
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeedMethodArg {
    Otsu,
    Gmm,
    Mbd,
    Ft,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MorphArg {
    Open,
    Erode,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SegmenterArg {
    Gc,
    Rw,
}

#[derive(Args, Debug, Default)]
struct StageFlags {
    #[arg(long, global = true)]
    no_preprocess: bool,
    #[arg(long, global = true)]
    bilateral_sigma_spatial: Option<f64>,
    #[arg(long, global = true)]
    bilateral_sigma_range: Option<f64>,
    #[arg(long, global = true)]
    bilateral_radius: Option<usize>,
    #[arg(long, global = true)]
    seed_method: Option<SeedMethodArg>,
    #[arg(long, global = true)]
    gmm_k: Option<usize>,
    #[arg(long, global = true)]
    mbd_passes: Option<usize>,
    /// Fraction of highest-saliency voxels passed to Otsu (default 0.10)
    #[arg(long, global = true)]
    top_fraction: Option<f64>,
    #[arg(long, global = true)]
    weighting: Option<OnOff>,
    #[arg(long, global = true)]
    sigma_factor: Option<f64>,
    /// Recompute seed weights after morphology instead of dropping eroded ones
    #[arg(long, global = true)]
    reweigh_after_morph: bool,
    #[arg(long, global = true)]
    morph: Option<MorphArg>,
    #[arg(long, global = true)]
    morph_iters: Option<usize>,
    #[arg(long, global = true)]
    segmenter: Option<SegmenterArg>,
    #[arg(long, global = true)]
    rw_beta: Option<f64>,
    #[arg(long, global = true)]
    rw_tol: Option<f64>,
    #[arg(long, global = true)]
    gc_max_sweeps: Option<usize>,
    /// Thickness of the BG seed band along the image border
    #[arg(long, global = true)]
    border: Option<usize>,
}

impl Cli {
    fn overrides(&self) -> ConfigOverrides {
        let f = &self.stages;
        ConfigOverrides {
            no_preprocess: f.no_preprocess,
            bilateral_sigma_spatial: f.bilateral_sigma_spatial,
            bilateral_sigma_range: f.bilateral_sigma_range,
            bilateral_radius: f.bilateral_radius,
            seed_method: f.seed_method.map(|m| match m {
                SeedMethodArg::Otsu => SeedMethod::Otsu,
                SeedMethodArg::Gmm => SeedMethod::Gmm,
                SeedMethodArg::Mbd => SeedMethod::Mbd,
                SeedMethodArg::Ft => SeedMethod::Ft,
            }),
            gmm_k: f.gmm_k,
            mbd_passes: f.mbd_passes,
            top_fraction: f.top_fraction,
            weighting: f.weighting.map(|w| matches!(w, OnOff::On)),
            sigma_factor: f.sigma_factor,
            reweigh_after_morph: f.reweigh_after_morph.then_some(true),
            morph: f.morph.map(|m| match m {
                MorphArg::Open => MorphVariant::Opening,
                MorphArg::Erode => MorphVariant::Erosion,
                MorphArg::None => MorphVariant::None,
            }),
            morph_iters: f.morph_iters,
            segmenter: f.segmenter.map(|s| match s {
                SegmenterArg::Gc => Segmenter::GrowCut,
                SegmenterArg::Rw => Segmenter::RandomWalker,
            }),
            rw_beta: f.rw_beta,
            rw_tol: f.rw_tol,
            gc_max_sweeps: f.gc_max_sweeps,
            border_thickness: f.border,
            invert: self.invert.then_some(true),
        }
    }
}

fn serve(addr: SocketAddr, static_dir: Option<PathBuf>, snapshots: Option<PathBuf>) -> Result<(), Failure> {
    let config = seedforge_server::ServerConfig {
        static_dir,
        snapshot_dir: snapshots,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(exit::IO, e.to_string()))?;
    rt.block_on(seedforge_server::serve(addr, config))
        .map_err(|e| Failure::new(exit::IO, format!("server: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into()))
        .with_writer(std::io::stderr)
        .init();
    let overrides = cli.overrides();
    let result = match &cli.command {
        Command::Run { truth, no_timings } => run::run(&run::RunArgs {
            config: cli.config.clone().unwrap_or_else(|| DEFAULT_CONFIG.to_string()),
            overrides,
            input: cli.input.clone(),
            out: cli.out.clone(),
            truth: truth.clone(),
            timings: !no_timings,
            verbose: cli.verbose,
        }),
        Command::Bench { configs, phantoms } => {
            bench::bench(configs, phantoms, cli.out.as_deref(), &overrides, cli.verbose)
        }
        Command::Serve {
            addr,
            static_dir,
            snapshots,
        } => serve(*addr, static_dir.clone(), snapshots.clone()),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            eprintln!("seedforge: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
