//! Seed weighting around the FG centre of mass and FG morphology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Label, SeedMask, StrengthMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Kernel sigma as a fraction of the FG bounding-box diagonal.
    pub sigma_factor: f64,
    pub bg_weight: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            sigma_factor: 0.5,
            bg_weight: 1.0,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_factor > 0.0) || !self.sigma_factor.is_finite() {
            return Err(Error::param(format!(
                "sigma factor must be > 0, got {}",
                self.sigma_factor
            )));
        }
        if !(0.0..=1.0).contains(&self.bg_weight) {
            return Err(Error::param(format!(
                "bg weight must lie in [0, 1], got {}",
                self.bg_weight
            )));
        }
        Ok(())
    }
}

/// Gaussian weights centred on the unweighted FG centroid.
///
/// FG voxels get `exp(-|v - c|^2 / 2 sigma^2)` with `sigma = factor *` the
/// bounding-box diagonal (extent measured as `max - min` per axis); BG voxels
/// get `bg_weight`; unlabeled voxels get zero.
pub fn weight_seeds(mask: &SeedMask, params: &WeightParams) -> Result<StrengthMap> {
    params.validate()?;
    let shape = mask.shape();
    let nd = shape.ndim();
    let mut centroid = vec![0.0; nd];
    let mut lo = vec![usize::MAX; nd];
    let mut hi = vec![0usize; nd];
    let mut count = 0usize;
    for i in mask.indices(Label::Fg) {
        for a in 0..nd {
            let c = shape.coord(i, a);
            centroid[a] += c as f64;
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Undefined("seed weighting needs at least one FG seed".into()));
    }
    centroid.iter_mut().for_each(|c| *c /= count as f64);
    let diagonal = (0..nd).map(|a| ((hi[a] - lo[a]) as f64).powi(2)).sum::<f64>().sqrt();
    let sigma = params.sigma_factor * diagonal;

    let weights = mask
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| match l {
            Label::Unlabeled => 0.0,
            Label::Bg => params.bg_weight,
            Label::Fg if sigma == 0.0 => 1.0,
            Label::Fg => {
                let d2: f64 = (0..nd).map(|a| (shape.coord(i, a) as f64 - centroid[a]).powi(2)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        })
        .collect();
    StrengthMap::from_weights(shape.clone(), weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphVariant {
    Opening,
    Erosion,
    None,
}

impl MorphVariant {
    pub fn token(self) -> Option<&'static str> {
        match self {
            MorphVariant::Opening => Some("Mo"),
            MorphVariant::Erosion => Some("Me"),
            MorphVariant::None => None,
        }
    }
}

impl std::str::FromStr for MorphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" | "opening" | "Mo" => Ok(MorphVariant::Opening),
            "erode" | "erosion" | "Me" => Ok(MorphVariant::Erosion),
            "none" => Ok(MorphVariant::None),
            other => Err(Error::param(format!("unknown morphology {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphParams {
    pub variant: MorphVariant,
    pub iterations: usize,
}

impl Default for MorphParams {
    fn default() -> Self {
        MorphParams {
            variant: MorphVariant::None,
            iterations: 1,
        }
    }
}

/// One erosion step with the face cross: a voxel stays FG only if every
/// neighbour exists and is FG, so FG on the grid border never survives.
pub fn erode_once(mask: &SeedMask) -> SeedMask {
    let shape = mask.shape();
    let full = shape.full_degree();
    let mut out = mask.clone();
    for i in mask.indices(Label::Fg) {
        let nb = shape.neighbors(i);
        let keep = nb.len() == full && shape.neighbors(i).all(|j| mask.get(j) == Label::Fg);
        if !keep {
            out.set(i, Label::Unlabeled);
        }
    }
    out
}

/// One dilation step with the face cross; BG voxels are never converted.
pub fn dilate_once(mask: &SeedMask) -> SeedMask {
    let shape = mask.shape();
    let mut out = mask.clone();
    for i in mask.indices(Label::Fg) {
        for j in shape.neighbors(i) {
            if mask.get(j) == Label::Unlabeled {
                out.set(j, Label::Fg);
            }
        }
    }
    out
}

/// Applies the morphology variant to the FG set; BG labels are untouched.
pub fn morph_fg(mask: &SeedMask, params: &MorphParams) -> Result<SeedMask> {
    if params.variant != MorphVariant::None && params.iterations == 0 {
        return Err(Error::param("morphology needs at least one iteration"));
    }
    let mut out = mask.clone();
    match params.variant {
        MorphVariant::None => {}
        MorphVariant::Erosion => {
            for _ in 0..params.iterations {
                out = erode_once(&out);
            }
        }
        MorphVariant::Opening => {
            for _ in 0..params.iterations {
                out = erode_once(&out);
            }
            for _ in 0..params.iterations {
                out = dilate_once(&out);
            }
        }
    }
    Ok(out)
}
