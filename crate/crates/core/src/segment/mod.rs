//! Seeded segmentation back ends.

pub mod growcut;
pub mod random_walker;
pub mod sparse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Label, SeedMask};

pub use growcut::{growcut, GrowCutOutcome};
pub use random_walker::{random_walker, random_walker_potential, RandomWalkerOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Relative residual target for conjugate gradient.
    pub cg_tol: f64,
    /// CG iteration cap; `None` means ten times the unknown count.
    pub cg_max_iter: Option<usize>,
    pub gc_max_sweeps: usize,
    /// Edge weight `exp(-beta * dI^2)` on normalized intensities.
    pub rw_beta: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            cg_tol: 1e-8,
            cg_max_iter: None,
            gc_max_sweeps: 1000,
            rw_beta: 90.0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_tol > 0.0) {
            return Err(Error::param(format!("CG tolerance must be > 0, got {}", self.cg_tol)));
        }
        if !(self.rw_beta >= 0.0) || !self.rw_beta.is_finite() {
            return Err(Error::param(format!(
                "beta must be finite and >= 0, got {}",
                self.rw_beta
            )));
        }
        if self.gc_max_sweeps == 0 {
            return Err(Error::param("GrowCut needs at least one sweep"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmenter {
    #[serde(rename = "gc")]
    GrowCut,
    #[serde(rename = "rw")]
    RandomWalker,
}

impl Segmenter {
    pub fn token(self) -> &'static str {
        match self {
            Segmenter::GrowCut => "gc",
            Segmenter::RandomWalker => "rw",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "gc" => Some(Segmenter::GrowCut),
            "rw" => Some(Segmenter::RandomWalker),
            _ => None,
        }
    }
}

impl std::str::FromStr for Segmenter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Segmenter::from_token(s).ok_or_else(|| Error::param(format!("unknown segmenter {s:?}")))
    }
}

pub(crate) fn require_both_classes(seeds: &SeedMask) -> Result<()> {
    let fg = seeds.labels().contains(&Label::Fg);
    let bg = seeds.labels().contains(&Label::Bg);
    match (fg, bg) {
        (true, true) => Ok(()),
        (false, _) => Err(Error::MissingSeeds("no FG seeds".into())),
        (_, false) => Err(Error::MissingSeeds("no BG seeds".into())),
    }
}
