use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use seedforge_core::eval::{dice, seed_counts, Metrics};
use seedforge_core::io::{
    decode_binary_mask, encode_label_map, encode_seed_mask, encode_strength_map, encode_u8, read_grid,
    unit_field_bytes, RasterFormat,
};
use seedforge_core::pipeline::{SegmenterStats, StageTimings};
use seedforge_core::rng::RNG_ALGORITHM;
use seedforge_core::seeding::SeedingReport;
use seedforge_core::{parse_config, ConfigOverrides, Error, PipelineConfig, Stage, StageError};

use crate::{exit, Failure};

pub const MANIFEST_SCHEMA: u32 = 1;

pub struct RunArgs {
    pub config: String,
    pub overrides: ConfigOverrides,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub timings: bool,
    pub verbose: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    tool: &'static str,
    version: &'static str,
    input: String,
    dims: &'a [usize],
    config: String,
    config_detail: &'a PipelineConfig,
    seeding: &'a SeedingReport,
    segmenter: &'a SegmenterStats,
    fg_voxels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<&'a StageTimings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    rng: &'static str,
    artifacts: Vec<String>,
}

fn stage_code(stage: Stage) -> u8 {
    match stage {
        Stage::Config => exit::USAGE,
        Stage::Segmentation => exit::SOLVER,
        _ => exit::SEEDING,
    }
}

fn ingest_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Ingest(_) | Error::Format(_) => exit::IO,
        _ => exit::USAGE,
    }
}

/// Writes `files` into a fresh sibling directory of `out` and renames it
/// into place, replacing any previous `out` directory.
pub fn write_atomically(out: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = out
        .file_name()
        .ok_or_else(|| std::io::Error::other(format!("{} has no final component", out.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    let written = files
        .iter()
        .try_for_each(|(file, bytes)| fs::write(tmp.join(file), bytes));
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        fs::rename(out, &old)?;
        if let Err(e) = fs::rename(&tmp, out) {
            let _ = fs::rename(&old, out);
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        fs::remove_dir_all(old)
    } else {
        fs::rename(&tmp, out).inspect_err(|_| {
            let _ = fs::remove_dir_all(&tmp);
        })
    }
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = parse_config(&args.config, &args.overrides)
        .and_then(|c| c.validate().map(|_| c))
        .map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
    let input = args
        .input
        .as_ref()
        .ok_or_else(|| Failure::new(exit::USAGE, "run needs --in <image>"))?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Failure::new(exit::USAGE, "run needs --out <directory>"))?;
    let grid = read_grid(input).map_err(|e| Failure::new(ingest_code(&e), format!("{}: {e}", input.display())))?;
    let truth = match &args.truth {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))?;
            let mask =
                decode_binary_mask(&bytes).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))?;
            if mask.shape() != grid.shape() {
                return Err(Failure::new(
                    exit::USAGE,
                    format!(
                        "truth dims {:?} differ from image dims {:?}",
                        mask.shape().dims(),
                        grid.dims()
                    ),
                ));
            }
            Some(mask)
        }
        None => None,
    };

    let output = seedforge_core::run_pipeline(&config, &grid)
        .map_err(|e: StageError| Failure::new(stage_code(e.stage), e.to_string()))?;

    let ext = RasterFormat::for_shape(grid.shape()).extension();
    let mut files = vec![
        (format!("label.{ext}"), encode_label_map(&output.labels)),
        (format!("seed.{ext}"), encode_seed_mask(&output.seeds)),
        (format!("strength.{ext}"), encode_strength_map(&output.strength)),
    ];
    if let Some(sal) = &output.saliency {
        files.push((
            format!("saliency.{ext}"),
            encode_u8(sal.shape(), &unit_field_bytes(sal.scores())),
        ));
    }
    let metrics = match &truth {
        Some(t) => {
            let d = dice(output.labels.mask(), t).map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
            let counts = seed_counts(&output.seeds, t).map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
            Some(Metrics {
                dice: d,
                fg_seed_error_rate: counts.fg_seeds_on_background as f64 / counts.fg_seeds.max(1) as f64,
                seeds: counts,
                timings: if args.timings {
                    output.timings.clone()
                } else {
                    StageTimings::default()
                },
            })
        }
        None => None,
    };
    let mut artifacts: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        tool: "seedforge",
        version: env!("CARGO_PKG_VERSION"),
        input: input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        dims: grid.dims(),
        config: config.canonical(),
        config_detail: &config,
        seeding: &output.report,
        segmenter: &output.stats,
        fg_voxels: output.labels.fg_count(),
        timings: args.timings.then_some(&output.timings),
        metrics,
        rng: RNG_ALGORITHM,
        artifacts,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    files.push(("manifest.json".into(), json));

    write_atomically(out, &files).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", out.display())))?;
    if args.verbose {
        eprintln!(
            "{}: {} FG seeds, {} BG seeds, {} FG voxels -> {}",
            config.canonical(),
            output.seeds.count(seedforge_core::Label::Fg),
            output.seeds.count(seedforge_core::Label::Bg),
            output.labels.fg_count(),
            out.display()
        );
        for w in output.report.warnings.iter().chain(&output.stats.warnings) {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}
