//! Edge-preserving denoising by brute-force bilateral filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    /// Spatial standard deviation in voxels.
    pub sigma_spatial: f64,
    /// Range standard deviation in normalized intensity units.
    pub sigma_range: f64,
    /// Window half-width in voxels.
    pub radius: usize,
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams::with_sigmas(3.0, 0.1)
    }
}

impl BilateralParams {
    /// Radius defaults to `ceil(2 * sigma_spatial)`.
    pub fn with_sigmas(sigma_spatial: f64, sigma_range: f64) -> Self {
        BilateralParams {
            sigma_spatial,
            sigma_range,
            radius: ((2.0 * sigma_spatial).ceil() as usize).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_spatial > 0.0) || !self.sigma_spatial.is_finite() {
            return Err(Error::param(format!(
                "bilateral sigma_spatial must be > 0, got {}",
                self.sigma_spatial
            )));
        }
        if !(self.sigma_range > 0.0) {
            return Err(Error::param(format!(
                "bilateral sigma_range must be > 0, got {}",
                self.sigma_range
            )));
        }
        if self.radius == 0 {
            return Err(Error::param("bilateral radius must be >= 1"));
        }
        Ok(())
    }
}

/// Window offset with its spatial weight.
struct Tap {
    offset: [isize; 3],
    weight: f64,
}

fn spatial_taps(ndim: usize, radius: usize, sigma: f64) -> Vec<Tap> {
    let r = radius as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut taps = Vec::new();
    let range = |active: bool| if active { -r..=r } else { 0..=0 };
    for dz in range(ndim == 3) {
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dz * dz + dy * dy + dx * dx) as f64;
                taps.push(Tap {
                    offset: [dz, dy, dx],
                    weight: (-d2 * inv).exp(),
                });
            }
        }
    }
    taps
}

/// Bilateral filter with the window clipped at the grid boundary and weights
/// renormalized over the voxels that remain.
pub fn bilateral_filter(grid: &ImageGrid, params: &BilateralParams) -> Result<ImageGrid> {
    params.validate()?;
    if grid.is_empty() {
        return Err(Error::Ingest("empty grid".into()));
    }
    let shape = grid.shape();
    // pad 2-D shapes to a single leading slab so one loop covers both cases
    let (dims3, strides3) = if shape.ndim() == 2 {
        (
            [1, shape.dims()[0], shape.dims()[1]],
            [0, shape.strides()[0], shape.strides()[1]],
        )
    } else {
        let d = shape.dims();
        let s = shape.strides();
        ([d[0], d[1], d[2]], [s[0], s[1], s[2]])
    };
    let taps = spatial_taps(shape.ndim(), params.radius, params.sigma_spatial);
    let inv_range = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
    let values = grid.values();

    let mut out = Vec::with_capacity(values.len());
    for z in 0..dims3[0] {
        for y in 0..dims3[1] {
            for x in 0..dims3[2] {
                let centre = z * strides3[0] + y * strides3[1] + x * strides3[2];
                let vc = values[centre];
                let (mut num, mut den) = (0.0, 0.0);
                for tap in &taps {
                    let zz = z as isize + tap.offset[0];
                    let yy = y as isize + tap.offset[1];
                    let xx = x as isize + tap.offset[2];
                    if zz < 0
                        || yy < 0
                        || xx < 0
                        || zz >= dims3[0] as isize
                        || yy >= dims3[1] as isize
                        || xx >= dims3[2] as isize
                    {
                        continue;
                    }
                    let j = zz as usize * strides3[0] + yy as usize * strides3[1] + xx as usize * strides3[2];
                    let vj = values[j];
                    let d = vj - vc;
                    let w = tap.weight * (-d * d * inv_range).exp();
                    num += w * vj;
                    den += w;
                }
                // den >= 1 because the centre tap always contributes weight 1
                out.push((num / den).clamp(0.0, 1.0));
            }
        }
    }
    Ok(grid.map_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;
    use proptest::prelude::*;

    fn grid(dims: &[usize], values: Vec<f64>) -> ImageGrid {
        ImageGrid::from_normalized(Shape::new(dims).unwrap(), values).unwrap()
    }

    /// Plain Gaussian blur with a clipped, renormalized window.
    fn gaussian_blur_oracle(g: &ImageGrid, sigma: f64, radius: usize) -> Vec<f64> {
        let s = g.shape();
        let r = radius as isize;
        (0..g.len())
            .map(|i| {
                let c = s.coords(i);
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..g.len() {
                    let cj = s.coords(j);
                    let off: Vec<isize> = c.iter().zip(&cj).map(|(&a, &b)| b as isize - a as isize).collect();
                    if off.iter().any(|o| o.abs() > r) {
                        continue;
                    }
                    let d2: f64 = off.iter().map(|&o| (o * o) as f64).sum();
                    let w = (-d2 / (2.0 * sigma * sigma)).exp();
                    num += w * g.values()[j];
                    den += w;
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn defaults() {
        let p = BilateralParams::default();
        assert_eq!((p.sigma_spatial, p.sigma_range, p.radius), (3.0, 0.1, 6));
    }

    #[test]
    fn constant_image_unchanged() {
        let g = grid(&[7, 9], vec![0.42; 63]);
        let out = bilateral_filter(&g, &BilateralParams::default()).unwrap();
        for v in out.values() {
            assert!((v - 0.42).abs() < 1e-15);
        }
    }

    #[test]
    fn bright_voxel_survives_tight_range() {
        let mut v = vec![0.0; 81];
        v[40] = 1.0;
        let g = grid(&[9, 9], v);
        let out = bilateral_filter(&g, &BilateralParams::with_sigmas(3.0, 0.01)).unwrap();
        // the neighbours differ by 1.0 so their range weight is exp(-5000)
        assert!(out.values()[40] > 0.99);
    }

    #[test]
    fn step_edge_preserved() {
        let g = grid(&[8, 12], (0..96).map(|i| if i % 12 < 6 { 0.0 } else { 1.0 }).collect());
        let out = bilateral_filter(&g, &BilateralParams::with_sigmas(3.0, 0.05)).unwrap();
        for (a, b) in g.values().iter().zip(out.values()) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        let g = grid(&[2, 2], vec![0.0; 4]);
        let p = BilateralParams {
            sigma_spatial: 0.0,
            ..Default::default()
        };
        assert!(matches!(bilateral_filter(&g, &p), Err(Error::Parameter(_))));
        let p = BilateralParams {
            sigma_range: -1.0,
            ..Default::default()
        };
        assert!(bilateral_filter(&g, &p).is_err());
    }

    #[test]
    fn huge_range_sigma_is_gaussian_blur() {
        let values: Vec<f64> = (0..5 * 6).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let g = grid(&[5, 6], values);
        let p = BilateralParams {
            sigma_spatial: 1.5,
            sigma_range: 1e6,
            radius: 3,
        };
        let out = bilateral_filter(&g, &p).unwrap();
        let oracle = gaussian_blur_oracle(&g, 1.5, 3);
        for (a, b) in out.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn volume_window() {
        let mut v = vec![0.2; 27];
        v[13] = 0.8;
        let g = grid(&[3, 3, 3], v);
        let out = bilateral_filter(&g, &BilateralParams::with_sigmas(1.0, 10.0)).unwrap();
        assert!(out.values()[13] < 0.8 && out.values()[13] > 0.2);
        assert!(out.values()[0] > 0.2);
    }

    proptest! {
        #[test]
        fn convex_combination_and_inversion(
            values in prop::collection::vec(0.0f64..=1.0, 36),
            ss in 0.5f64..3.0,
            sr in 0.02f64..1.0,
        ) {
            let g = grid(&[6, 6], values);
            let p = BilateralParams::with_sigmas(ss, sr);
            let out = bilateral_filter(&g, &p).unwrap();
            let lo = g.values().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &v in out.values() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
            let inv = bilateral_filter(&g.inverted(), &p).unwrap();
            for (a, b) in out.values().iter().zip(inv.values()) {
                prop_assert!((1.0 - a - b).abs() < 1e-12);
            }
        }
    }
}
