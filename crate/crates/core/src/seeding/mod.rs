//! FG seed candidates: Otsu thresholding, GMM component selection, and
//! binarized saliency (minimum barrier or frequency-tuned).
//!
//! Saliency methods plug in through [`SaliencyDetector`]; each produces a
//! [`SaliencyMap`] that [`binarize_saliency`] turns into seeds.

pub mod ft;
pub mod gmm;
pub mod mbd;
pub mod otsu;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, SeedMask, Shape};

pub use ft::saliency_ft;
pub use gmm::{fit_gmm, seed_gmm, GaussianComponent, GmmFit, GmmModel, GmmParams};
pub use mbd::saliency_mbd;
pub use otsu::{otsu_threshold, OtsuThreshold};

/// Scores at or below this maximum are treated as an all-zero map.
pub const ZERO_SALIENCY: f64 = 1e-12;

pub const DEFAULT_TOP_FRACTION: f64 = 0.10;

/// Non-negative per-voxel saliency scaled so the maximum is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    shape: Shape,
    scores: Vec<f64>,
}

impl SaliencyMap {
    pub fn from_raw(shape: Shape, raw: Vec<f64>) -> Self {
        let max = raw.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let scores = if max > ZERO_SALIENCY {
            raw.iter()
                .map(|&v| if v.is_finite() { (v / max).clamp(0.0, 1.0) } else { 1.0 })
                .collect()
        } else {
            vec![0.0; raw.len()]
        };
        SaliencyMap { shape, scores }
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_zero(&self) -> bool {
        self.scores.iter().all(|&s| s == 0.0)
    }
}

/// A saliency method usable by the seeding stage.
pub trait SaliencyDetector {
    fn tag(&self) -> &str;
    fn detect(&self, grid: &ImageGrid) -> Result<SaliencyMap>;
}

#[derive(Clone, Copy, Debug)]
pub struct MinimumBarrier {
    pub passes: usize,
}

impl SaliencyDetector for MinimumBarrier {
    fn tag(&self) -> &str {
        "Sm"
    }

    fn detect(&self, grid: &ImageGrid) -> Result<SaliencyMap> {
        saliency_mbd(grid, self.passes)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FrequencyTuned;

impl SaliencyDetector for FrequencyTuned {
    fn tag(&self) -> &str {
        "St"
    }

    fn detect(&self, grid: &ImageGrid) -> Result<SaliencyMap> {
        Ok(saliency_ft(grid))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMethod {
    Otsu,
    Gmm,
    Mbd,
    Ft,
}

impl SeedMethod {
    /// Stage token as written in pipeline strings.
    pub fn token(self) -> &'static str {
        match self {
            SeedMethod::Otsu => "So",
            SeedMethod::Gmm => "Sg",
            SeedMethod::Mbd => "Sm",
            SeedMethod::Ft => "St",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        Some(match tok {
            "So" => SeedMethod::Otsu,
            "Sg" => SeedMethod::Gmm,
            "Sm" => SeedMethod::Mbd,
            "St" => SeedMethod::Ft,
            _ => return None,
        })
    }

    pub fn uses_saliency(self) -> bool {
        matches!(self, SeedMethod::Mbd | SeedMethod::Ft)
    }
}

impl fmt::Display for SeedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedMethod::Otsu => "otsu",
            SeedMethod::Gmm => "gmm",
            SeedMethod::Mbd => "mbd",
            SeedMethod::Ft => "ft",
        })
    }
}

impl FromStr for SeedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsu" => Ok(SeedMethod::Otsu),
            "gmm" => Ok(SeedMethod::Gmm),
            "mbd" => Ok(SeedMethod::Mbd),
            "ft" => Ok(SeedMethod::Ft),
            other => {
                SeedMethod::from_token(other).ok_or_else(|| Error::param(format!("unknown seed method {other:?}")))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedingParams {
    pub method: SeedMethod,
    pub gmm: GmmParams,
    pub mbd_passes: usize,
    pub top_fraction: f64,
    pub otsu_bins: usize,
}

impl Default for SeedingParams {
    fn default() -> Self {
        SeedingParams {
            method: SeedMethod::Mbd,
            gmm: GmmParams::default(),
            mbd_passes: mbd::DEFAULT_PASSES,
            top_fraction: DEFAULT_TOP_FRACTION,
            otsu_bins: otsu::DEFAULT_BINS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GmmDiagnostics {
    pub model: Option<GmmModel>,
    pub selected_component: usize,
    pub support_medians: Vec<Option<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded_at: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedingReport {
    pub method: String,
    /// FG voxels emitted by the seeding stage.
    pub fg_count: usize,
    /// Otsu cut (intensity or saliency units), or the GMM density cut.
    pub threshold: Option<f64>,
    pub gmm: Option<GmmDiagnostics>,
    pub mbd_passes: Option<usize>,
    /// Size of the top-scoring candidate set for saliency methods.
    pub top_count: Option<usize>,
    /// FG seeds left after morphology.
    pub fg_after_morph: Option<usize>,
    /// FG seeds overruled by border BG seeds.
    pub border_conflicts: usize,
    pub warnings: Vec<String>,
}

pub struct SeedOutcome {
    pub mask: SeedMask,
    pub saliency: Option<SaliencyMap>,
    pub report: SeedingReport,
}

/// FG = voxels at or above the Otsu cut of all intensities (bright objects).
/// A degenerate histogram yields an empty mask and a warning.
pub fn seed_otsu(grid: &ImageGrid, bins: usize) -> Result<(SeedMask, Option<OtsuThreshold>, Option<String>)> {
    match otsu_threshold(grid.values(), bins) {
        Ok(t) => {
            let mask = SeedMask::from_fg_predicate(grid.shape().clone(), |i| t.is_upper(grid.values()[i]));
            Ok((mask, Some(t), None))
        }
        Err(Error::Degenerate(msg)) => Ok((SeedMask::unlabeled(grid.shape().clone()), None, Some(msg))),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binarized {
    pub mask: SeedMask,
    pub top_count: usize,
    pub threshold: Option<f64>,
    pub warning: Option<String>,
}

/// Otsu threshold over the top `top_fraction` of voxels by score.
///
/// Candidates are ordered by descending score, then ascending voxel index, and
/// truncated to `ceil(top_fraction * n)`.
pub fn binarize_saliency(sal: &SaliencyMap, top_fraction: f64, bins: usize) -> Result<Binarized> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::param(format!(
            "top fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    let n = sal.scores.len();
    if sal.is_zero() {
        return Ok(Binarized {
            mask: SeedMask::unlabeled(sal.shape.clone()),
            top_count: 0,
            threshold: None,
            warning: Some("saliency map is identically zero".into()),
        });
    }
    let q = ((top_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sal.scores[b].total_cmp(&sal.scores[a]).then(a.cmp(&b)));
    order.truncate(q);
    let top: Vec<f64> = order.iter().map(|&i| sal.scores[i]).collect();

    let mut mask = SeedMask::unlabeled(sal.shape.clone());
    match otsu_threshold(&top, bins) {
        Ok(t) => {
            for &i in &order {
                if t.is_upper(sal.scores[i]) {
                    mask.set(i, crate::grid::Label::Fg);
                }
            }
            Ok(Binarized {
                mask,
                top_count: q,
                threshold: Some(t.value),
                warning: None,
            })
        }
        Err(Error::Degenerate(_)) => {
            for &i in &order {
                mask.set(i, crate::grid::Label::Fg);
            }
            Ok(Binarized {
                mask,
                top_count: q,
                threshold: None,
                warning: Some("top saliency scores are all equal; every candidate kept".into()),
            })
        }
        Err(e) => Err(e),
    }
}

/// Seeds from any saliency detector.
pub fn seed_with_detector(
    grid: &ImageGrid,
    detector: &dyn SaliencyDetector,
    top_fraction: f64,
    bins: usize,
) -> Result<SeedOutcome> {
    let sal = detector.detect(grid)?;
    let b = binarize_saliency(&sal, top_fraction, bins)?;
    let report = SeedingReport {
        method: detector.tag().to_string(),
        fg_count: b.mask.count(crate::grid::Label::Fg),
        threshold: b.threshold,
        top_count: Some(b.top_count),
        warnings: b.warning.into_iter().collect(),
        ..Default::default()
    };
    Ok(SeedOutcome {
        mask: b.mask,
        saliency: Some(sal),
        report,
    })
}

/// Runs the configured FG seeding strategy.
pub fn run_seeding(grid: &ImageGrid, params: &SeedingParams) -> Result<SeedOutcome> {
    use crate::grid::Label;
    match params.method {
        SeedMethod::Otsu => {
            let (mask, t, warning) = seed_otsu(grid, params.otsu_bins)?;
            let report = SeedingReport {
                method: SeedMethod::Otsu.token().into(),
                fg_count: mask.count(Label::Fg),
                threshold: t.map(|t| t.value),
                warnings: warning.into_iter().collect(),
                ..Default::default()
            };
            Ok(SeedOutcome {
                mask,
                saliency: None,
                report,
            })
        }
        SeedMethod::Gmm => {
            let fit = fit_gmm(grid, &params.gmm)?;
            let s = seed_gmm(grid, &fit.model)?;
            let report = SeedingReport {
                method: SeedMethod::Gmm.token().into(),
                fg_count: s.mask.count(Label::Fg),
                threshold: Some(s.pdf_threshold),
                warnings: fit.warning().into_iter().collect(),
                gmm: Some(GmmDiagnostics {
                    selected_component: s.selected,
                    support_medians: s.medians.clone(),
                    iterations: fit.iterations,
                    converged: fit.converged,
                    reseeded_at: fit.reseeded_at.clone(),
                    model: Some(fit.model),
                }),
                ..Default::default()
            };
            Ok(SeedOutcome {
                mask: s.mask,
                saliency: None,
                report,
            })
        }
        SeedMethod::Mbd => {
            let mut out = seed_with_detector(
                grid,
                &MinimumBarrier {
                    passes: params.mbd_passes,
                },
                params.top_fraction,
                params.otsu_bins,
            )?;
            out.report.mbd_passes = Some(params.mbd_passes);
            Ok(out)
        }
        SeedMethod::Ft => seed_with_detector(grid, &FrequencyTuned, params.top_fraction, params.otsu_bins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{normalize_intensities, Label};
    use proptest::prelude::*;

    fn sal(scores: Vec<f64>, dims: &[usize]) -> SaliencyMap {
        SaliencyMap::from_raw(Shape::new(dims).unwrap(), scores)
    }

    #[test]
    fn linear_scores_top_ten() {
        let s = sal((0..100).map(|i| i as f64 / 100.0).collect(), &[10, 10]);
        let b = binarize_saliency(&s, 0.1, 256).unwrap();
        assert_eq!(b.top_count, 10);
        let fg: Vec<usize> = b.mask.indices(Label::Fg).collect();
        assert!(!fg.is_empty());
        assert!(fg.iter().all(|&i| i >= 90));
        // oracle: sorted top ten, exhaustive Otsu on those ten scores
        let top: Vec<f64> = (90..100).map(|i| s.scores()[i]).collect();
        let mut best = (0usize, f64::NEG_INFINITY);
        for cut in 1..10 {
            let (a, b) = top.split_at(cut);
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let v = (a.len() * b.len()) as f64 * (ma - mb).powi(2);
            if v > best.1 + 1e-15 {
                best = (cut, v);
            }
        }
        assert_eq!(fg, (90 + best.0..100).collect::<Vec<_>>());
    }

    #[test]
    fn five_hot_voxels() {
        let mut v = vec![0.0; 100];
        for i in [3, 17, 42, 77, 98] {
            v[i] = 1.0;
        }
        let b = binarize_saliency(&sal(v, &[10, 10]), 0.1, 256).unwrap();
        assert_eq!(b.mask.indices(Label::Fg).collect::<Vec<_>>(), vec![3, 17, 42, 77, 98]);
    }

    #[test]
    fn all_equal_scores_keep_candidates() {
        let b = binarize_saliency(&sal(vec![1.0; 100], &[10, 10]), 0.1, 256).unwrap();
        assert_eq!(
            b.mask.indices(Label::Fg).collect::<Vec<_>>(),
            (0..10).collect::<Vec<_>>()
        );
        assert!(b.warning.is_some());
    }

    #[test]
    fn zero_map_empty() {
        let b = binarize_saliency(&sal(vec![0.0; 16], &[4, 4]), 0.1, 256).unwrap();
        assert_eq!(b.mask.count(Label::Fg), 0);
        assert!(b.warning.is_some());
    }

    fn square_phantom(bright: f64, dark: f64) -> ImageGrid {
        let v: Vec<f64> = (0..81)
            .map(|i| {
                let (y, x) = (i / 9, i % 9);
                if (3..6).contains(&y) && (3..6).contains(&x) {
                    bright
                } else {
                    dark
                }
            })
            .collect();
        ImageGrid::from_normalized(Shape::new(&[9, 9]).unwrap(), v).unwrap()
    }

    #[test]
    fn otsu_finds_square() {
        let g = square_phantom(0.9, 0.1);
        let (m, t, w) = seed_otsu(&g, 256).unwrap();
        assert!(t.is_some() && w.is_none());
        let fg: Vec<usize> = m.indices(Label::Fg).collect();
        assert_eq!(fg, vec![30, 31, 32, 39, 40, 41, 48, 49, 50]);
    }

    #[test]
    fn otsu_dark_object_selects_plate() {
        let g = square_phantom(0.1, 0.9);
        let (m, _, _) = seed_otsu(&g, 256).unwrap();
        assert_eq!(m.count(Label::Fg), 72);
        assert_eq!(m.get(40), Label::Unlabeled);
    }

    #[test]
    fn otsu_constant_warns() {
        let g = ImageGrid::from_normalized(Shape::new(&[3, 3]).unwrap(), vec![0.0; 9]).unwrap();
        let (m, t, w) = seed_otsu(&g, 256).unwrap();
        assert_eq!(m.count(Label::Fg), 0);
        assert!(t.is_none());
        assert!(w.unwrap().contains("degenerate histogram"));
    }

    #[test]
    fn method_tokens() {
        for m in [SeedMethod::Otsu, SeedMethod::Gmm, SeedMethod::Mbd, SeedMethod::Ft] {
            assert_eq!(SeedMethod::from_token(m.token()), Some(m));
            assert_eq!(m.to_string().parse::<SeedMethod>().unwrap(), m);
        }
        assert!(SeedMethod::from_token("Sr").is_none());
    }

    proptest! {
        #[test]
        fn binarize_respects_cap(scores in prop::collection::vec(0.0f64..1.0, 4..200)) {
            let n = scores.len();
            let s = SaliencyMap::from_raw(Shape::new(&[1, n]).unwrap(), scores);
            let b = binarize_saliency(&s, 0.1, 256).unwrap();
            prop_assert!(b.mask.count(Label::Fg) <= (0.1 * n as f64).ceil() as usize);
        }

        #[test]
        fn seeding_invariant_under_affine_rescale(
            raw in prop::collection::vec(0u16..1000, 64),
            scale_pow in 0i32..6,
            offset in -500i32..500,
            method in prop::sample::select(vec![SeedMethod::Otsu, SeedMethod::Gmm, SeedMethod::Mbd, SeedMethod::Ft]),
        ) {
            let a: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
            let scale = 2f64.powi(scale_pow);
            let b: Vec<f64> = a.iter().map(|v| v * scale + f64::from(offset)).collect();
            let ga = normalize_intensities(&[8, 8], &a).unwrap();
            let gb = normalize_intensities(&[8, 8], &b).unwrap();
            let params = SeedingParams { method, gmm: GmmParams { k: 2, ..Default::default() }, ..Default::default() };
            let sa = run_seeding(&ga, &params);
            let sb = run_seeding(&gb, &params);
            match (sa, sb) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.mask, y.mask),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "outcomes differ"),
            }
        }
    }
}
