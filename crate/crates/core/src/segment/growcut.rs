//! GrowCut cellular automaton with the strength map as initial cell strength.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{BinaryMask, ImageGrid, Label, LabelMap, SeedMask, StrengthMap};

use super::{require_both_classes, SolverParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowCutOutcome {
    pub labels: LabelMap,
    /// Sweeps executed, including the final sweep with no changes.
    pub sweeps: usize,
    pub converged: bool,
    /// Final cell strengths.
    pub strength: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Synchronous GrowCut.
///
/// A labeled neighbour `q` conquers `p` when `(1 - |C_p - C_q|) * theta_q`
/// exceeds `theta_p`; the strongest attacker wins and equal forces go to the
/// lowest voxel index. Runs until a sweep changes nothing or the sweep cap.
pub fn growcut(
    grid: &ImageGrid,
    seeds: &SeedMask,
    strengths: &StrengthMap,
    params: &SolverParams,
) -> Result<GrowCutOutcome> {
    params.validate()?;
    seeds.check_dims(grid.shape())?;
    seeds.check_dims(strengths.shape())?;
    require_both_classes(seeds)?;

    let shape = grid.shape();
    let feature = grid.values();
    let n = feature.len();
    let mut label = seeds.labels().to_vec();
    let mut theta: Vec<f64> = (0..n)
        .map(|i| {
            if label[i] == Label::Unlabeled {
                0.0
            } else {
                strengths.get(i)
            }
        })
        .collect();
    let mut next_label = label.clone();
    let mut next_theta = theta.clone();

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < params.gc_max_sweeps {
        sweeps += 1;
        let mut changes = 0usize;
        for p in 0..n {
            let (mut best_l, mut best_t) = (label[p], theta[p]);
            for q in shape.neighbors(p) {
                if label[q] == Label::Unlabeled {
                    continue;
                }
                let force = (1.0 - (feature[p] - feature[q]).abs()) * theta[q];
                if force > best_t {
                    best_t = force;
                    best_l = label[q];
                }
            }
            if best_l != label[p] || best_t != theta[p] {
                changes += 1;
            }
            next_label[p] = best_l;
            next_theta[p] = best_t;
        }
        std::mem::swap(&mut label, &mut next_label);
        std::mem::swap(&mut theta, &mut next_theta);
        if changes == 0 {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("GrowCut stopped at the sweep cap ({})", params.gc_max_sweeps));
    }
    let unreached = label.iter().filter(|&&l| l == Label::Unlabeled).count();
    if unreached > 0 {
        warnings.push(format!("{unreached} voxels never reached by any seed were set to BG"));
    }
    let mask = BinaryMask::new(shape.clone(), label.iter().map(|&l| l == Label::Fg).collect())?;
    Ok(GrowCutOutcome {
        labels: LabelMap::from_mask(mask),
        sweeps,
        converged,
        strength: theta,
        warnings,
    })
}
