use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Label, SeedMask};
use crate::pipeline::StageTimings;

/// `2|A ∩ B| / (|A| + |B|)`; two empty masks agree perfectly.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            left: a.shape().dims().to_vec(),
            right: b.shape().dims().to_vec(),
        });
    }
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Seed placement counts against a ground-truth object mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCounts {
    pub fg_seeds: usize,
    pub fg_seeds_on_background: usize,
    pub bg_seeds: usize,
    pub bg_seeds_on_object: usize,
}

pub fn seed_counts(seeds: &SeedMask, truth: &BinaryMask) -> Result<SeedCounts> {
    if seeds.shape() != truth.shape() {
        return Err(Error::DimMismatch {
            left: seeds.dims().to_vec(),
            right: truth.shape().dims().to_vec(),
        });
    }
    let mut c = SeedCounts::default();
    for (&l, &t) in seeds.labels().iter().zip(truth.bits()) {
        match l {
            Label::Fg => {
                c.fg_seeds += 1;
                c.fg_seeds_on_background += (!t) as usize;
            }
            Label::Bg => {
                c.bg_seeds += 1;
                c.bg_seeds_on_object += t as usize;
            }
            Label::Unlabeled => {}
        }
    }
    Ok(c)
}

/// Fraction of FG seeds lying on ground-truth background.
pub fn seed_error(seeds: &SeedMask, truth: &BinaryMask) -> Result<f64> {
    let c = seed_counts(seeds, truth)?;
    if c.fg_seeds == 0 {
        return Err(Error::Undefined("seed error rate needs at least one FG seed".into()));
    }
    Ok(c.fg_seeds_on_background as f64 / c.fg_seeds as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dice: f64,
    pub fg_seed_error_rate: f64,
    pub seeds: SeedCounts,
    pub timings: StageTimings,
}
