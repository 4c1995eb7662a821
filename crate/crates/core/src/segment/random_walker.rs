//! Two-label random walker: seeded graph-Laplacian system solved by
//! Jacobi-preconditioned conjugate gradient.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{ImageGrid, Label, LabelMap, SeedMask, Shape};

use super::sparse::{conjugate_gradient, CsrMatrix};
use super::{require_both_classes, SolverParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkerOutcome {
    pub labels: LabelMap,
    pub iterations: usize,
    pub relative_residual: f64,
    pub unknowns: usize,
    pub warnings: Vec<String>,
}

/// Restricted Laplacian over the unseeded voxels reachable from a seed.
pub struct RwSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Voxel index of each unknown.
    pub voxels: Vec<usize>,
    /// Unseeded voxels in components that touch no seed.
    pub isolated: Vec<usize>,
}

#[inline]
fn edge_weight(a: f64, b: f64, beta: f64) -> f64 {
    let d = a - b;
    (-beta * d * d).exp()
}

/// Unseeded voxels whose face-connected unseeded component touches a seed.
fn reachable_unseeded(shape: &Shape, seeds: &SeedMask) -> Vec<bool> {
    let n = shape.len();
    let mut reach = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if seeds.get(i) == Label::Unlabeled && shape.neighbors(i).any(|j| seeds.get(j) != Label::Unlabeled) {
            reach[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in shape.neighbors(i) {
            if seeds.get(j) == Label::Unlabeled && !reach[j] {
                reach[j] = true;
                queue.push_back(j);
            }
        }
    }
    reach
}

impl RwSystem {
    /// Boundary value 1 on seeds labeled `target`, 0 on the other class.
    pub fn assemble(grid: &ImageGrid, seeds: &SeedMask, target: Label, beta: f64) -> Self {
        let shape = grid.shape();
        let img = grid.values();
        let n = shape.len();
        let reach = reachable_unseeded(shape, seeds);
        let mut row_of = vec![usize::MAX; n];
        let mut voxels = Vec::new();
        let mut isolated = Vec::new();
        for i in 0..n {
            if seeds.get(i) != Label::Unlabeled {
                continue;
            }
            if reach[i] {
                row_of[i] = voxels.len();
                voxels.push(i);
            } else {
                isolated.push(i);
            }
        }
        let mut matrix = CsrMatrix::with_capacity(voxels.len(), voxels.len() * (shape.full_degree() + 1));
        let mut rhs = vec![0.0; voxels.len()];
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(7);
        for (r, &v) in voxels.iter().enumerate() {
            entries.clear();
            let mut degree = 0.0;
            for u in shape.neighbors(v) {
                let w = edge_weight(img[v], img[u], beta);
                degree += w;
                match seeds.get(u) {
                    Label::Unlabeled => entries.push((row_of[u], -w)),
                    l if l == target => rhs[r] += w,
                    _ => {}
                }
            }
            entries.push((r, degree));
            entries.sort_by_key(|e| e.0);
            matrix.push_row(entries.iter().copied());
        }
        RwSystem {
            matrix,
            rhs,
            voxels,
            isolated,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    /// Probability of first reaching a `target` seed, unclamped.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub unknowns: usize,
    pub isolated: usize,
}

/// Solves the potential for one seed class.
pub fn random_walker_potential(
    grid: &ImageGrid,
    seeds: &SeedMask,
    target: Label,
    params: &SolverParams,
) -> Result<Potential> {
    params.validate()?;
    seeds.check_dims(grid.shape())?;
    require_both_classes(seeds)?;
    let sys = RwSystem::assemble(grid, seeds, target, params.rw_beta);
    let max_iter = params.cg_max_iter.unwrap_or(10 * sys.voxels.len().max(1));
    let (x, stats) = conjugate_gradient(&sys.matrix, &sys.rhs, params.cg_tol, max_iter)?;
    let mut values: Vec<f64> = seeds
        .labels()
        .iter()
        .map(|&l| if l == target { 1.0 } else { 0.0 })
        .collect();
    for (&v, &p) in sys.voxels.iter().zip(&x) {
        values[v] = p;
    }
    Ok(Potential {
        values,
        iterations: stats.iterations,
        relative_residual: stats.relative_residual,
        unknowns: sys.voxels.len(),
        isolated: sys.isolated.len(),
    })
}

/// FG probability per voxel with labels by the `p >= 0.5` rule.
pub fn random_walker(grid: &ImageGrid, seeds: &SeedMask, params: &SolverParams) -> Result<RandomWalkerOutcome> {
    let pot = random_walker_potential(grid, seeds, Label::Fg, params)?;
    let mut warnings = Vec::new();
    if pot.isolated > 0 {
        warnings.push(format!(
            "{} voxels disconnected from every seed were set to BG",
            pot.isolated
        ));
    }
    let prob: Vec<f64> = pot.values.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    Ok(RandomWalkerOutcome {
        labels: LabelMap::from_probability(grid.shape().clone(), prob)?,
        iterations: pot.iterations,
        relative_residual: pot.relative_residual,
        unknowns: pot.unknowns,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn row(values: &[f64]) -> ImageGrid {
        ImageGrid::from_normalized(Shape::new(&[1, values.len()]).unwrap(), values.to_vec()).unwrap()
    }

    fn seeds(n: usize, fg: &[usize], bg: &[usize]) -> SeedMask {
        let mut m = SeedMask::unlabeled(Shape::new(&[1, n]).unwrap());
        fg.iter().for_each(|&i| m.set(i, Label::Fg));
        bg.iter().for_each(|&i| m.set(i, Label::Bg));
        m
    }

    #[test]
    fn three_voxel_symmetry() {
        let out = random_walker(&row(&[0.5; 3]), &seeds(3, &[0], &[2]), &SolverParams::default()).unwrap();
        let p = out.labels.fg_probability().unwrap();
        assert_eq!(p, &[1.0, 0.5, 0.0]);
        assert!(out.labels.is_fg(1));
    }

    #[test]
    fn four_voxel_line() {
        let out = random_walker(&row(&[0.5; 4]), &seeds(4, &[0], &[3]), &SolverParams::default()).unwrap();
        let p = out.labels.fg_probability().unwrap();
        let expect = [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_class_and_nonconvergence() {
        let g = row(&[0.5; 4]);
        assert!(matches!(
            random_walker(&g, &seeds(4, &[0], &[]), &SolverParams::default()),
            Err(Error::MissingSeeds(_))
        ));
        let g = row(&[0.1, 0.3, 0.5, 0.7, 0.9, 0.2, 0.4, 0.6]);
        let p = SolverParams {
            cg_tol: 1e-15,
            cg_max_iter: Some(1),
            ..Default::default()
        };
        assert!(matches!(
            random_walker(&g, &seeds(8, &[0], &[7]), &p),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn complementary_potentials() {
        let g = row(&[0.1, 0.3, 0.35, 0.7, 0.9, 0.2]);
        let s = seeds(6, &[0], &[5]);
        let p = SolverParams::default();
        let fg = random_walker_potential(&g, &s, Label::Fg, &p).unwrap();
        let bg = random_walker_potential(&g, &s, Label::Bg, &p).unwrap();
        for (a, b) in fg.values.iter().zip(&bg.values) {
            assert!((a + b - 1.0).abs() < 1e-8);
        }
    }
}
