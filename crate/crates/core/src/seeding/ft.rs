//! Frequency-tuned saliency: distance between the global mean intensity and a
//! lightly blurred image.

use crate::grid::{ImageGrid, Shape};

use super::SaliencyMap;

/// Binomial approximation of a unit-sigma Gaussian, radius 2.
const BINOMIAL_5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Mirror index into `[0, n)` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable binomial blur along every axis with mirrored borders.
pub fn binomial_blur(shape: &Shape, values: &[f64]) -> Vec<f64> {
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..shape.ndim() {
        let n = shape.dims()[axis];
        let stride = shape.strides()[axis];
        for (i, out) in next.iter_mut().enumerate() {
            let c = shape.coord(i, axis) as isize;
            let base = i - c as usize * stride;
            *out = BINOMIAL_5
                .iter()
                .enumerate()
                .map(|(t, w)| w * cur[base + reflect(c + t as isize - 2, n) * stride])
                .sum();
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Unnormalized contrast `|mean - blur(v)|`.
pub fn ft_contrast(grid: &ImageGrid) -> Vec<f64> {
    let mean = grid.values().iter().sum::<f64>() / grid.len() as f64;
    binomial_blur(grid.shape(), grid.values())
        .into_iter()
        .map(|b| (mean - b).abs())
        .collect()
}

pub fn saliency_ft(grid: &ImageGrid) -> SaliencyMap {
    SaliencyMap::from_raw(grid.shape().clone(), ft_contrast(grid))
}
