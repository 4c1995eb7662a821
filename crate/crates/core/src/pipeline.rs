//! Pipeline configuration and the pre-process, seed, weight, morph, segment
//! composition.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mask_border, merge_seeds, ImageGrid, Label, LabelMap, SeedMask, StrengthMap};
use crate::preprocess::{bilateral_filter, BilateralParams};
use crate::refine::{morph_fg, weight_seeds, MorphParams, MorphVariant, WeightParams};
use crate::seeding::{run_seeding, SaliencyMap, SeedMethod, SeedingParams, SeedingReport};
use crate::segment::{growcut, random_walker, Segmenter, SolverParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: bool,
    pub bilateral: BilateralParams,
    pub seeding: SeedingParams,
    pub weighting: bool,
    pub weights: WeightParams,
    /// Recompute FG weights after morphology instead of dropping eroded ones.
    pub reweigh_after_morph: bool,
    pub morph: MorphParams,
    pub segmenter: Segmenter,
    pub solver: SolverParams,
    pub border_thickness: usize,
    /// Treat dark structures as the object.
    pub invert: bool,
}

impl Default for PipelineConfig {
    /// `P,Sm,W,Me,gc`
    fn default() -> Self {
        PipelineConfig {
            preprocess: true,
            bilateral: BilateralParams::default(),
            seeding: SeedingParams::default(),
            weighting: true,
            weights: WeightParams::default(),
            reweigh_after_morph: false,
            morph: MorphParams {
                variant: MorphVariant::Erosion,
                iterations: 1,
            },
            segmenter: Segmenter::GrowCut,
            solver: SolverParams::default(),
            border_thickness: 1,
            invert: false,
        }
    }
}

/// Command-line style overrides applied on top of a stage string.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    pub no_preprocess: bool,
    pub bilateral_sigma_spatial: Option<f64>,
    pub bilateral_sigma_range: Option<f64>,
    pub bilateral_radius: Option<usize>,
    pub seed_method: Option<SeedMethod>,
    pub gmm_k: Option<usize>,
    pub mbd_passes: Option<usize>,
    pub top_fraction: Option<f64>,
    pub weighting: Option<bool>,
    pub sigma_factor: Option<f64>,
    pub reweigh_after_morph: Option<bool>,
    pub morph: Option<MorphVariant>,
    pub morph_iters: Option<usize>,
    pub segmenter: Option<Segmenter>,
    pub rw_beta: Option<f64>,
    pub rw_tol: Option<f64>,
    pub gc_max_sweeps: Option<usize>,
    pub border_thickness: Option<usize>,
    pub invert: Option<bool>,
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut PipelineConfig) {
        if self.no_preprocess {
            c.preprocess = false;
        }
        if let Some(s) = self.bilateral_sigma_spatial {
            c.bilateral.sigma_spatial = s;
            if self.bilateral_radius.is_none() {
                c.bilateral.radius = BilateralParams::with_sigmas(s, c.bilateral.sigma_range).radius;
            }
        }
        if let Some(s) = self.bilateral_sigma_range {
            c.bilateral.sigma_range = s;
        }
        if let Some(r) = self.bilateral_radius {
            c.bilateral.radius = r;
        }
        if let Some(m) = self.seed_method {
            c.seeding.method = m;
        }
        if let Some(k) = self.gmm_k {
            c.seeding.gmm.k = k;
        }
        if let Some(p) = self.mbd_passes {
            c.seeding.mbd_passes = p;
        }
        if let Some(f) = self.top_fraction {
            c.seeding.top_fraction = f;
        }
        if let Some(w) = self.weighting {
            c.weighting = w;
        }
        if let Some(f) = self.sigma_factor {
            c.weights.sigma_factor = f;
        }
        if let Some(r) = self.reweigh_after_morph {
            c.reweigh_after_morph = r;
        }
        if let Some(m) = self.morph {
            c.morph.variant = m;
        }
        if let Some(i) = self.morph_iters {
            c.morph.iterations = i;
        }
        if let Some(s) = self.segmenter {
            c.segmenter = s;
        }
        if let Some(b) = self.rw_beta {
            c.solver.rw_beta = b;
        }
        if let Some(t) = self.rw_tol {
            c.solver.cg_tol = t;
        }
        if let Some(s) = self.gc_max_sweeps {
            c.solver.gc_max_sweeps = s;
        }
        if let Some(t) = self.border_thickness {
            c.border_thickness = t;
        }
        if let Some(i) = self.invert {
            c.invert = i;
        }
    }
}

impl PipelineConfig {
    /// Canonical stage string, e.g. `P,Sm,W,Me,gc`.
    pub fn canonical(&self) -> String {
        let mut toks: Vec<&str> = Vec::with_capacity(5);
        if self.preprocess {
            toks.push("P");
        }
        toks.push(self.seeding.method.token());
        if self.weighting {
            toks.push("W");
        }
        if let Some(m) = self.morph.variant.token() {
            toks.push(m);
        }
        toks.push(self.segmenter.token());
        toks.join(",")
    }

    pub fn validate(&self) -> Result<()> {
        if self.preprocess {
            self.bilateral.validate()?;
        }
        self.weights.validate()?;
        self.solver.validate()?;
        if self.morph.variant != MorphVariant::None && self.morph.iterations == 0 {
            return Err(Error::param("morphology needs at least one iteration"));
        }
        if !(self.seeding.top_fraction > 0.0 && self.seeding.top_fraction <= 1.0) {
            return Err(Error::param("top fraction must lie in (0, 1]"));
        }
        if self.seeding.mbd_passes == 0 {
            return Err(Error::param("MBD needs at least one pass"));
        }
        if self.border_thickness == 0 {
            return Err(Error::param("border thickness must be >= 1"));
        }
        Ok(())
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Parses a stage string such as `P,Sm,W,Me,gc` and applies `overrides`.
///
/// Omitted stages are off (no pre-processing, no weighting, no morphology);
/// an omitted seeding token selects `Sm`. The segmenter token is required.
pub fn parse_config(text: &str, overrides: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig {
        preprocess: false,
        weighting: false,
        morph: MorphParams::default(),
        ..PipelineConfig::default()
    };
    let (mut seen_p, mut seen_s, mut seen_w, mut seen_m, mut seen_seg) = (false, false, false, false, false);
    let err = |position: usize, token: &str, reason: &str| Error::ConfigParse {
        position,
        token: token.to_string(),
        reason: reason.to_string(),
    };
    for (pos, raw) in text.split(',').enumerate() {
        let tok = raw.trim();
        if tok.is_empty() {
            return Err(err(pos, tok, "empty token"));
        }
        let (seen, apply): (&mut bool, Box<dyn FnOnce(&mut PipelineConfig)>) = if tok == "P" {
            (&mut seen_p, Box::new(|c| c.preprocess = true))
        } else if let Some(m) = SeedMethod::from_token(tok) {
            (&mut seen_s, Box::new(move |c| c.seeding.method = m))
        } else if tok == "W" {
            (&mut seen_w, Box::new(|c| c.weighting = true))
        } else if tok == "Mo" || tok == "Me" {
            let v = if tok == "Mo" {
                MorphVariant::Opening
            } else {
                MorphVariant::Erosion
            };
            (&mut seen_m, Box::new(move |c| c.morph.variant = v))
        } else if let Some(s) = Segmenter::from_token(tok) {
            (&mut seen_seg, Box::new(move |c| c.segmenter = s))
        } else {
            return Err(err(pos, tok, "unknown token"));
        };
        if *seen {
            return Err(err(pos, tok, "duplicate stage"));
        }
        *seen = true;
        apply(&mut cfg);
    }
    if !seen_seg && overrides.segmenter.is_none() {
        let n = text.split(',').count();
        return Err(err(n, "", "missing segmenter (gc or rw)"));
    }
    overrides.apply(&mut cfg);
    Ok(cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Preprocess,
    Seeding,
    Weighting,
    Morphology,
    Merge,
    Segmentation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Preprocess => "preprocess",
            Stage::Seeding => "seeding",
            Stage::Weighting => "weighting",
            Stage::Morphology => "morphology",
            Stage::Merge => "merge",
            Stage::Segmentation => "segmentation",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmenterStats {
    pub segmenter: String,
    pub sweeps: Option<usize>,
    pub cg_iterations: Option<usize>,
    pub relative_residual: Option<f64>,
    pub unknowns: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_ms: f64,
    pub seeding_ms: f64,
    pub refine_ms: f64,
    pub segmentation_ms: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub labels: LabelMap,
    /// Final seeds fed to the segmenter (FG seeds merged with border BG).
    pub seeds: SeedMask,
    pub strength: StrengthMap,
    pub report: SeedingReport,
    pub saliency: Option<SaliencyMap>,
    /// Segmenter input after inversion and pre-processing.
    pub features: ImageGrid,
    pub stats: SegmenterStats,
    pub timings: StageTimings,
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Stopwatch(std::time::Instant);

    impl Stopwatch {
        pub fn start() -> Self {
            Stopwatch(std::time::Instant::now())
        }

        pub fn ms(&self) -> f64 {
            self.0.elapsed().as_secs_f64() * 1e3
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    // no monotonic clock without JS bindings
    pub struct Stopwatch;

    impl Stopwatch {
        pub fn start() -> Self {
            Stopwatch
        }

        pub fn ms(&self) -> f64 {
            0.0
        }
    }
}

use clock::Stopwatch;

/// Runs only the segmenter on prepared features and seeds.
pub fn run_segmenter(
    features: &ImageGrid,
    seeds: &SeedMask,
    strength: &StrengthMap,
    segmenter: Segmenter,
    solver: &SolverParams,
) -> Result<(LabelMap, SegmenterStats)> {
    match segmenter {
        Segmenter::GrowCut => {
            let out = growcut(features, seeds, strength, solver)?;
            Ok((
                out.labels,
                SegmenterStats {
                    segmenter: "gc".into(),
                    sweeps: Some(out.sweeps),
                    warnings: out.warnings,
                    ..Default::default()
                },
            ))
        }
        Segmenter::RandomWalker => {
            let out = random_walker(features, seeds, solver)?;
            Ok((
                out.labels,
                SegmenterStats {
                    segmenter: "rw".into(),
                    cg_iterations: Some(out.iterations),
                    relative_residual: Some(out.relative_residual),
                    unknowns: Some(out.unknowns),
                    warnings: out.warnings,
                    ..Default::default()
                },
            ))
        }
    }
}

/// Output of the automated seeding stages (everything before the segmenter).
#[derive(Clone, Debug)]
pub struct AutoSeeds {
    pub features: ImageGrid,
    pub seeds: SeedMask,
    pub strength: StrengthMap,
    pub report: SeedingReport,
    pub saliency: Option<SaliencyMap>,
    pub timings: StageTimings,
}

/// Pre-process, seed, weight, morph, and merge with border BG seeds.
pub fn auto_seed(config: &PipelineConfig, grid: &ImageGrid) -> std::result::Result<AutoSeeds, StageError> {
    config.validate().at(Stage::Config)?;
    let mut timings = StageTimings::default();

    let sw = Stopwatch::start();
    let mut features = if config.invert { grid.inverted() } else { grid.clone() };
    if config.preprocess {
        features = bilateral_filter(&features, &config.bilateral).at(Stage::Preprocess)?;
    }
    timings.preprocess_ms = sw.ms();

    let sw = Stopwatch::start();
    let seeded = run_seeding(&features, &config.seeding).at(Stage::Seeding)?;
    let mut report = seeded.report;
    let fg = seeded.mask;
    if fg.count(Label::Fg) == 0 {
        let detail = if report.warnings.is_empty() {
            "no FG seeds produced".to_string()
        } else {
            report.warnings.join("; ")
        };
        return Err(StageError {
            stage: Stage::Seeding,
            source: Error::Seeding(detail),
        });
    }
    timings.seeding_ms = sw.ms();

    let sw = Stopwatch::start();
    let mut strength = if config.weighting {
        weight_seeds(&fg, &config.weights).at(Stage::Weighting)?
    } else {
        StrengthMap::uniform(&fg)
    };

    let fg = morph_fg(&fg, &config.morph).at(Stage::Morphology)?;
    let fg_after = fg.count(Label::Fg);
    report.fg_after_morph = Some(fg_after);
    if fg_after == 0 {
        return Err(StageError {
            stage: Stage::Morphology,
            source: Error::Seeding("empty seed set after morphology".into()),
        });
    }
    if config.weighting && config.reweigh_after_morph {
        strength = weight_seeds(&fg, &config.weights).at(Stage::Weighting)?;
    } else {
        strength.restrict_to(&fg);
    }

    let border = mask_border(grid.shape(), config.border_thickness).at(Stage::Merge)?;
    let merged = merge_seeds(&fg, &border).at(Stage::Merge)?;
    report.border_conflicts = merged.conflicts;
    let seeds = merged.mask;
    if seeds.count(Label::Fg) == 0 {
        return Err(StageError {
            stage: Stage::Merge,
            source: Error::Seeding("every FG seed lies in the border BG band".into()),
        });
    }
    let bg_weight = if config.weighting {
        config.weights.bg_weight
    } else {
        1.0
    };
    for i in 0..seeds.labels().len() {
        if seeds.get(i) == Label::Bg {
            strength.set(i, bg_weight);
        }
    }
    timings.refine_ms = sw.ms();
    debug_assert!(strength.is_consistent_with(&seeds));

    Ok(AutoSeeds {
        features,
        seeds,
        strength,
        report,
        saliency: seeded.saliency,
        timings,
    })
}

/// Full pipeline: automated seeding followed by the configured segmenter.
pub fn segment(config: &PipelineConfig, grid: &ImageGrid) -> std::result::Result<PipelineOutput, StageError> {
    let auto = auto_seed(config, grid)?;
    let mut timings = auto.timings;
    let sw = Stopwatch::start();
    let (labels, stats) = run_segmenter(
        &auto.features,
        &auto.seeds,
        &auto.strength,
        config.segmenter,
        &config.solver,
    )
    .at(Stage::Segmentation)?;
    timings.segmentation_ms = sw.ms();
    Ok(PipelineOutput {
        labels,
        seeds: auto.seeds,
        strength: auto.strength,
        report: auto.report,
        saliency: auto.saliency,
        features: auto.features,
        stats,
        timings,
    })
}
