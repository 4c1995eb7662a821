//! Interactive refinement: user strokes layered over automated seeds.
//!
//! A session keeps the automated seeds of revision 1 and an append-only
//! event history. The current seed mask is always the revision-1 mask with
//! the still-active strokes painted on in order, so it can be rebuilt from
//! the history at any time.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::eval::metrics::{dice, seed_counts, Metrics};
use crate::grid::{BinaryMask, ImageGrid, Label, LabelMap, SeedMask, Shape, StrengthMap};
use crate::pipeline::{auto_seed, run_segmenter, PipelineConfig, SegmenterStats, StageError, StageTimings};
use crate::seeding::{SaliencyMap, SeedingReport};

/// Strength carried by every user-painted voxel.
pub const SCRIBBLE_STRENGTH: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("voxel {coords:?} is outside the image {dims:?}")]
    OutOfBounds { coords: Vec<i64>, dims: Vec<usize> },

    #[error("voxel {coords:?} has {got} coordinates, expected {expected}")]
    Arity {
        coords: Vec<i64>,
        got: usize,
        expected: usize,
    },

    #[error("stroke has no voxels")]
    EmptyStroke,

    #[error("strokes must be labeled fg or bg")]
    UnlabeledStroke,

    #[error("nothing to undo")]
    NothingToUndo,

    #[error(transparent)]
    Stage(#[from] StageError),

    #[error("segmentation failed: {0}")]
    Segmentation(Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    /// Voxel indices in row-major order.
    Stroke {
        label: Label,
        voxels: Vec<usize>,
    },
    Undo,
}

/// Converts API coordinates (`[x, y]` or `[x, y, z]`) to a voxel index.
pub fn voxel_index(shape: &Shape, coords: &[i64]) -> Result<usize, SessionError> {
    let n = shape.ndim();
    if coords.len() != n {
        return Err(SessionError::Arity {
            coords: coords.to_vec(),
            got: coords.len(),
            expected: n,
        });
    }
    // API order is x first; grid axes are slowest first
    let axes: Vec<i64> = coords.iter().rev().copied().collect();
    let out = || SessionError::OutOfBounds {
        coords: coords.to_vec(),
        dims: shape.dims().to_vec(),
    };
    let mut idx = Vec::with_capacity(n);
    for (&c, &d) in axes.iter().zip(shape.dims()) {
        if c < 0 || c as u64 >= d as u64 {
            return Err(out());
        }
        idx.push(c as usize);
    }
    shape.index(&idx).ok_or_else(out)
}

/// Inverse of [`voxel_index`].
pub fn voxel_coords(shape: &Shape, index: usize) -> Vec<i64> {
    shape.coords(index).into_iter().rev().map(|c| c as i64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mutation {
    pub revision: u64,
    /// Voxels whose FG/BG label changed.
    pub flipped: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Session {
    config: PipelineConfig,
    features: ImageGrid,
    base_seeds: SeedMask,
    base_strength: StrengthMap,
    report: SeedingReport,
    saliency: Option<SaliencyMap>,
    timings: StageTimings,
    truth: Option<BinaryMask>,
    seeds: SeedMask,
    strength: StrengthMap,
    labels: LabelMap,
    stats: SegmenterStats,
    revision: u64,
    history: Vec<Event>,
}

fn paint(seeds: &mut SeedMask, strength: &mut StrengthMap, label: Label, voxels: &[usize]) {
    for &v in voxels {
        seeds.set(v, label);
        strength.set(v, SCRIBBLE_STRENGTH);
    }
}

/// Strokes still in effect after applying undos.
fn active_strokes(history: &[Event]) -> Vec<(Label, &[usize])> {
    let mut active = Vec::new();
    for e in history {
        match e {
            Event::Stroke { label, voxels } => active.push((*label, voxels.as_slice())),
            Event::Undo => {
                active.pop();
            }
        }
    }
    active
}

impl Session {
    /// Runs the automated pipeline; the result is revision 1.
    pub fn create(grid: &ImageGrid, config: PipelineConfig, truth: Option<BinaryMask>) -> Result<Self, SessionError> {
        if let Some(t) = &truth {
            if t.shape() != grid.shape() {
                return Err(SessionError::Segmentation(Error::DimMismatch {
                    left: grid.dims().to_vec(),
                    right: t.shape().dims().to_vec(),
                }));
            }
        }
        let auto = auto_seed(&config, grid)?;
        let (labels, stats) = run_segmenter(
            &auto.features,
            &auto.seeds,
            &auto.strength,
            config.segmenter,
            &config.solver,
        )
        .map_err(|source| StageError {
            stage: crate::pipeline::Stage::Segmentation,
            source,
        })?;
        Ok(Session {
            config,
            features: auto.features,
            seeds: auto.seeds.clone(),
            strength: auto.strength.clone(),
            base_seeds: auto.seeds,
            base_strength: auto.strength,
            report: auto.report,
            saliency: auto.saliency,
            timings: auto.timings,
            truth,
            labels,
            stats,
            revision: 1,
            history: Vec::new(),
        })
    }

    /// Rebuilds a session from its input and event history.
    pub fn restore(
        grid: &ImageGrid,
        config: PipelineConfig,
        truth: Option<BinaryMask>,
        history: Vec<Event>,
    ) -> Result<Self, SessionError> {
        let mut s = Session::create(grid, config, truth)?;
        for e in history {
            match e {
                Event::Stroke { label, voxels } => {
                    s.apply_stroke(label, voxels)?;
                }
                Event::Undo => {
                    s.undo()?;
                }
            }
        }
        Ok(s)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn shape(&self) -> &Shape {
        self.features.shape()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn history(&self) -> &[Event] {
        &self.history
    }

    pub fn seeds(&self) -> &SeedMask {
        &self.seeds
    }

    pub fn strength(&self) -> &StrengthMap {
        &self.strength
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn stats(&self) -> &SegmenterStats {
        &self.stats
    }

    pub fn report(&self) -> &SeedingReport {
        &self.report
    }

    pub fn saliency(&self) -> Option<&SaliencyMap> {
        self.saliency.as_ref()
    }

    pub fn features(&self) -> &ImageGrid {
        &self.features
    }

    pub fn truth(&self) -> Option<&BinaryMask> {
        self.truth.as_ref()
    }

    /// Revision-1 seeds, before any user stroke.
    pub fn auto_seeds(&self) -> &SeedMask {
        &self.base_seeds
    }

    pub fn undoable(&self) -> usize {
        active_strokes(&self.history).len()
    }

    pub fn metrics(&self) -> Option<Metrics> {
        let truth = self.truth.as_ref()?;
        let d = dice(self.labels.mask(), truth).ok()?;
        let counts = seed_counts(&self.seeds, truth).ok()?;
        Some(Metrics {
            dice: d,
            fg_seed_error_rate: counts.fg_seeds_on_background as f64 / counts.fg_seeds.max(1) as f64,
            seeds: counts,
            timings: self.timings.clone(),
        })
    }

    /// Seeds and strengths rebuilt from revision 1 and the history.
    pub fn replay(&self) -> (SeedMask, StrengthMap) {
        let mut seeds = self.base_seeds.clone();
        let mut strength = self.base_strength.clone();
        for (label, voxels) in active_strokes(&self.history) {
            paint(&mut seeds, &mut strength, label, voxels);
        }
        (seeds, strength)
    }

    /// Paints a stroke given in API coordinates. The whole stroke is
    /// rejected if any voxel is invalid.
    pub fn add_scribble(&mut self, label: Label, coords: &[Vec<i64>]) -> Result<Mutation, SessionError> {
        let voxels = coords
            .iter()
            .map(|c| voxel_index(self.shape(), c))
            .collect::<Result<Vec<_>, _>>()?;
        self.apply_stroke(label, voxels)
    }

    /// Paints a stroke given as voxel indices.
    pub fn apply_stroke(&mut self, label: Label, voxels: Vec<usize>) -> Result<Mutation, SessionError> {
        if label == Label::Unlabeled {
            return Err(SessionError::UnlabeledStroke);
        }
        if voxels.is_empty() {
            return Err(SessionError::EmptyStroke);
        }
        let shape = self.shape().clone();
        if let Some(&bad) = voxels.iter().find(|&&v| v >= shape.len()) {
            return Err(SessionError::OutOfBounds {
                coords: vec![bad as i64],
                dims: shape.dims().to_vec(),
            });
        }
        let mut seeds = self.seeds.clone();
        let mut strength = self.strength.clone();
        paint(&mut seeds, &mut strength, label, &voxels);
        self.commit(Event::Stroke { label, voxels }, seeds, strength)
    }

    /// Removes the last active stroke. Undo is itself recorded as an event.
    pub fn undo(&mut self) -> Result<Mutation, SessionError> {
        if self.undoable() == 0 {
            return Err(SessionError::NothingToUndo);
        }
        let mut history = self.history.clone();
        history.push(Event::Undo);
        let mut seeds = self.base_seeds.clone();
        let mut strength = self.base_strength.clone();
        for (label, voxels) in active_strokes(&history) {
            paint(&mut seeds, &mut strength, label, voxels);
        }
        self.commit(Event::Undo, seeds, strength)
    }

    fn commit(&mut self, event: Event, seeds: SeedMask, strength: StrengthMap) -> Result<Mutation, SessionError> {
        let (labels, stats) = run_segmenter(
            &self.features,
            &seeds,
            &strength,
            self.config.segmenter,
            &self.config.solver,
        )
        .map_err(SessionError::Segmentation)?;
        let flipped = (0..seeds.labels().len())
            .filter(|&i| labels.is_fg(i) != self.labels.is_fg(i))
            .collect();
        self.seeds = seeds;
        self.strength = strength;
        self.labels = labels;
        self.stats = stats;
        self.history.push(event);
        self.revision += 1;
        debug_assert_eq!(self.replay(), (self.seeds.clone(), self.strength.clone()));
        Ok(Mutation {
            revision: self.revision,
            flipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::phantom::{make_phantom, PhantomDescriptor};
    use crate::pipeline::{parse_config, ConfigOverrides};

    fn session(cfg: &str) -> Session {
        let p = make_phantom(&PhantomDescriptor::disk(24, 5.0, 0.7, 0.02, 1)).unwrap();
        let cfg = parse_config(cfg, &ConfigOverrides::default()).unwrap();
        Session::create(&p.grid, cfg, Some(p.truth)).unwrap()
    }

    #[test]
    fn coordinate_order() {
        let s = Shape::new(&[3, 5]).unwrap();
        assert_eq!(voxel_index(&s, &[4, 2]).unwrap(), 2 * 5 + 4);
        assert_eq!(voxel_coords(&s, 14), vec![4, 2]);
        assert!(matches!(
            voxel_index(&s, &[5, 0]),
            Err(SessionError::OutOfBounds { .. })
        ));
        assert!(matches!(
            voxel_index(&s, &[0, -1]),
            Err(SessionError::OutOfBounds { .. })
        ));
        assert!(matches!(voxel_index(&s, &[0, 0, 0]), Err(SessionError::Arity { .. })));
        let v = Shape::new(&[2, 3, 4]).unwrap();
        assert_eq!(voxel_index(&v, &[3, 2, 1]).unwrap(), 12 + 2 * 4 + 3);
    }

    #[test]
    fn create_is_revision_one() {
        let s = session("P,Sm,W,Me,gc");
        assert_eq!(s.revision(), 1);
        assert!(s.labels().fg_count() > 0);
        assert!(s.metrics().unwrap().dice > 0.8);
    }

    #[test]
    fn stroke_then_undo_restores_auto_seeds() {
        let mut s = session("P,Sm,W,Me,gc");
        let before = s.seeds().clone();
        let labels_before = s.labels().clone();
        let m = s.add_scribble(Label::Bg, &[vec![12, 12], vec![11, 12]]).unwrap();
        assert_eq!(m.revision, 2);
        assert_eq!(s.seeds().get(12 * 24 + 12), Label::Bg);
        assert_eq!(s.strength().get(12 * 24 + 11), SCRIBBLE_STRENGTH);
        let m = s.undo().unwrap();
        assert_eq!(m.revision, 3);
        assert_eq!(s.seeds(), &before);
        assert_eq!(s.labels(), &labels_before);
        assert!(matches!(s.undo(), Err(SessionError::NothingToUndo)));
        assert_eq!(s.revision(), 3);
    }

    #[test]
    fn stroke_stroke_undo_equals_first_stroke() {
        let mut s = session("P,Sm,W,Me,rw");
        s.add_scribble(Label::Fg, &[vec![3, 3], vec![4, 3]]).unwrap();
        let after_first = s.seeds().clone();
        s.add_scribble(Label::Bg, &[vec![12, 12]]).unwrap();
        s.undo().unwrap();
        assert_eq!(s.seeds(), &after_first);
        assert_eq!(s.revision(), 4);
    }

    #[test]
    fn invalid_stroke_is_atomic() {
        let mut s = session("So,W,Me,gc");
        let before = s.seeds().clone();
        let err = s.add_scribble(Label::Fg, &[vec![1, 1], vec![24, 0]]).unwrap_err();
        assert!(matches!(err, SessionError::OutOfBounds { .. }));
        assert!(matches!(s.add_scribble(Label::Fg, &[]), Err(SessionError::EmptyStroke)));
        assert_eq!(s.revision(), 1);
        assert_eq!(s.seeds(), &before);
    }

    #[test]
    fn fg_stroke_flips_labels_under_growcut() {
        let mut s = session("P,Sm,W,Me,gc");
        // paint a background corner patch as object
        let stroke: Vec<Vec<i64>> = (2..6).flat_map(|y| (2..6).map(move |x| vec![x, y])).collect();
        let m = s.add_scribble(Label::Fg, &stroke).unwrap();
        for c in &stroke {
            let i = voxel_index(s.shape(), c).unwrap();
            assert!(s.labels().is_fg(i));
            assert!(m.flipped.contains(&i));
        }
    }

    #[test]
    fn restore_replays_history() {
        let p = make_phantom(&PhantomDescriptor::disk(24, 5.0, 0.7, 0.02, 1)).unwrap();
        let cfg = parse_config("P,Sm,W,Me,gc", &ConfigOverrides::default()).unwrap();
        let mut s = Session::create(&p.grid, cfg.clone(), None).unwrap();
        s.add_scribble(Label::Fg, &[vec![3, 3]]).unwrap();
        s.add_scribble(Label::Bg, &[vec![12, 12]]).unwrap();
        s.undo().unwrap();
        s.add_scribble(Label::Bg, &[vec![20, 20]]).unwrap();
        let r = Session::restore(&p.grid, cfg, None, s.history().to_vec()).unwrap();
        assert_eq!(r.revision(), s.revision());
        assert_eq!(r.seeds(), s.seeds());
        assert_eq!(r.labels(), s.labels());
    }
}
