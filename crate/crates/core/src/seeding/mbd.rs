//! Minimum barrier distance from the image border by alternating raster scans.
//!
//! The barrier of a path is `max(I) - min(I)` along it. Each voxel keeps the
//! best distance found so far together with the running path maximum and
//! minimum, and relaxes through the neighbours already visited in the current
//! scan direction. The result over-estimates or equals the exact distance.

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Shape};

use super::SaliencyMap;

pub const DEFAULT_PASSES: usize = 3;

/// Seed set for the barrier distance: voxels on a face of any axis with more
/// than one voxel. A grid with no such axis is all seed.
pub fn border_seeds(shape: &Shape) -> Vec<bool> {
    let axes: Vec<usize> = (0..shape.ndim()).filter(|&a| shape.dims()[a] > 1).collect();
    (0..shape.len())
        .map(|i| {
            axes.is_empty()
                || axes.iter().any(|&a| {
                    let c = shape.coord(i, a);
                    c == 0 || c + 1 == shape.dims()[a]
                })
        })
        .collect()
}

/// Raw barrier distances after `passes` scans (forward, backward, forward, ...).
pub fn mbd_distance(grid: &ImageGrid, passes: usize) -> Result<Vec<f64>> {
    if passes == 0 {
        return Err(Error::param("MBD needs at least one pass"));
    }
    if grid.is_empty() {
        return Err(Error::Ingest("empty grid".into()));
    }
    let shape = grid.shape();
    let img = grid.values();
    let n = img.len();
    let seeds = border_seeds(shape);
    let mut dist: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut upper = img.to_vec();
    let mut lower = img.to_vec();

    let relax = |v: usize, q: usize, dist: &mut [f64], upper: &mut [f64], lower: &mut [f64]| {
        let u = upper[q].max(img[v]);
        let l = lower[q].min(img[v]);
        if u - l < dist[v] {
            dist[v] = u - l;
            upper[v] = u;
            lower[v] = l;
        }
    };

    for pass in 0..passes {
        if pass % 2 == 0 {
            for v in 0..n {
                for a in 0..shape.ndim() {
                    if shape.coord(v, a) > 0 {
                        relax(v, v - shape.strides()[a], &mut dist, &mut upper, &mut lower);
                    }
                }
            }
        } else {
            for v in (0..n).rev() {
                for a in 0..shape.ndim() {
                    if shape.coord(v, a) + 1 < shape.dims()[a] {
                        relax(v, v + shape.strides()[a], &mut dist, &mut upper, &mut lower);
                    }
                }
            }
        }
    }
    Ok(dist)
}

pub fn saliency_mbd(grid: &ImageGrid, passes: usize) -> Result<SaliencyMap> {
    let d = mbd_distance(grid, passes)?;
    Ok(SaliencyMap::from_raw(grid.shape().clone(), d))
}
