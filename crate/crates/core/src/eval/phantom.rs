//! Synthetic images with known ground truth.
//!
//! Descriptor lines look like
//! `disk 64x64 cy=30 cx=33 r=10 contrast=0.6 noise=0.05 seed=7`.
//! Omitted centres default to the grid centre.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normalize_intensities, BinaryMask, ImageGrid, Shape};
use crate::rng::ShiftRegisterRng;

/// Minimum clearance between an object and the grid faces, in voxels.
pub const MARGIN: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhantomShape {
    Disk {
        cy: f64,
        cx: f64,
        r: f64,
    },
    Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        angle_deg: f64,
    },
    #[serde(rename = "twoblob")]
    TwoBlob {
        cy1: f64,
        cx1: f64,
        r1: f64,
        cy2: f64,
        cx2: f64,
        r2: f64,
    },
    Sphere {
        cz: f64,
        cy: f64,
        cx: f64,
        r: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomDescriptor {
    pub dims: Vec<usize>,
    pub shape: PhantomShape,
    /// Object minus plate intensity before noise.
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub descriptor: PhantomDescriptor,
    pub grid: ImageGrid,
    pub truth: BinaryMask,
}

impl PhantomDescriptor {
    pub fn disk(size: usize, r: f64, contrast: f64, noise_sigma: f64, seed: u64) -> Self {
        let c = (size as f64 - 1.0) / 2.0;
        PhantomDescriptor {
            dims: vec![size, size],
            shape: PhantomShape::Disk { cy: c, cx: c, r },
            contrast,
            noise_sigma,
            seed,
        }
    }

    fn inside(&self, c: &[f64]) -> bool {
        match self.shape {
            PhantomShape::Disk { cy, cx, r } => (c[0] - cy).powi(2) + (c[1] - cx).powi(2) <= r * r,
            PhantomShape::Ellipse {
                cy,
                cx,
                ry,
                rx,
                angle_deg,
            } => {
                let (s, co) = angle_deg.to_radians().sin_cos();
                let (dy, dx) = (c[0] - cy, c[1] - cx);
                let u = co * dx + s * dy;
                let v = -s * dx + co * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            PhantomShape::TwoBlob {
                cy1,
                cx1,
                r1,
                cy2,
                cx2,
                r2,
            } => {
                (c[0] - cy1).powi(2) + (c[1] - cx1).powi(2) <= r1 * r1
                    || (c[0] - cy2).powi(2) + (c[1] - cx2).powi(2) <= r2 * r2
            }
            PhantomShape::Sphere { cz, cy, cx, r } => {
                (c[0] - cz).powi(2) + (c[1] - cy).powi(2) + (c[2] - cx).powi(2) <= r * r
            }
        }
    }

    /// Axis-aligned bounds `(lo, hi)` of the object per axis.
    fn bounds(&self) -> Vec<(f64, f64)> {
        match self.shape {
            PhantomShape::Disk { cy, cx, r } => vec![(cy - r, cy + r), (cx - r, cx + r)],
            PhantomShape::Ellipse { cy, cx, ry, rx, .. } => {
                let m = ry.max(rx);
                vec![(cy - m, cy + m), (cx - m, cx + m)]
            }
            PhantomShape::TwoBlob {
                cy1,
                cx1,
                r1,
                cy2,
                cx2,
                r2,
            } => vec![
                ((cy1 - r1).min(cy2 - r2), (cy1 + r1).max(cy2 + r2)),
                ((cx1 - r1).min(cx2 - r2), (cx1 + r1).max(cx2 + r2)),
            ],
            PhantomShape::Sphere { cz, cy, cx, r } => vec![(cz - r, cz + r), (cy - r, cy + r), (cx - r, cx + r)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let want = if matches!(self.shape, PhantomShape::Sphere { .. }) {
            3
        } else {
            2
        };
        if self.dims.len() != want {
            return Err(Error::param(format!(
                "{} dims for this phantom shape, expected {want}",
                self.dims.len()
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::param(format!(
                "contrast must lie in (0, 1], got {}",
                self.contrast
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::param(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        let radii_ok = match self.shape {
            PhantomShape::Disk { r, .. } | PhantomShape::Sphere { r, .. } => r > 0.0,
            PhantomShape::Ellipse { ry, rx, .. } => ry > 0.0 && rx > 0.0,
            PhantomShape::TwoBlob { r1, r2, .. } => r1 > 0.0 && r2 > 0.0,
        };
        if !radii_ok {
            return Err(Error::param("phantom radii must be > 0"));
        }
        for ((lo, hi), &d) in self.bounds().into_iter().zip(&self.dims) {
            if lo < MARGIN || hi > d as f64 - 1.0 - MARGIN {
                return Err(Error::param(format!(
                    "object spans [{lo}, {hi}] but must stay {MARGIN} voxels inside extent {d}"
                )));
            }
        }
        if let PhantomShape::TwoBlob {
            cy1,
            cx1,
            r1,
            cy2,
            cx2,
            r2,
        } = self.shape
        {
            let gap = ((cy1 - cy2).powi(2) + (cx1 - cx2).powi(2)).sqrt();
            if gap <= r1 + r2 + 2.0 {
                return Err(Error::param(
                    "two-blob phantom needs the blobs separated by more than 2 voxels",
                ));
            }
        }
        Ok(())
    }
}

/// Rasterizes the object (voxel centres inside the shape), adds Gaussian
/// noise, and normalizes.
pub fn make_phantom(desc: &PhantomDescriptor) -> Result<Phantom> {
    desc.validate()?;
    let shape = Shape::new(&desc.dims)?;
    let truth = BinaryMask::from_fn(shape.clone(), |i| {
        let c: Vec<f64> = shape.coords(i).into_iter().map(|v| v as f64).collect();
        desc.inside(&c)
    });
    let plate = (1.0 - desc.contrast) / 2.0;
    let mut rng = ShiftRegisterRng::seed_from(desc.seed);
    let raw: Vec<f64> = truth
        .bits()
        .iter()
        .map(|&inside| {
            let base = if inside { plate + desc.contrast } else { plate };
            if desc.noise_sigma > 0.0 {
                base + desc.noise_sigma * rng.next_gaussian()
            } else {
                base
            }
        })
        .collect();
    let grid = normalize_intensities(&desc.dims, &raw)?;
    Ok(Phantom {
        descriptor: desc.clone(),
        grid,
        truth,
    })
}

impl fmt::Display for PhantomDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims = self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        match self.shape {
            PhantomShape::Disk { cy, cx, r } => write!(f, "disk {dims} cy={cy} cx={cx} r={r}")?,
            PhantomShape::Ellipse {
                cy,
                cx,
                ry,
                rx,
                angle_deg,
            } => write!(f, "ellipse {dims} cy={cy} cx={cx} ry={ry} rx={rx} angle={angle_deg}")?,
            PhantomShape::TwoBlob {
                cy1,
                cx1,
                r1,
                cy2,
                cx2,
                r2,
            } => write!(
                f,
                "twoblob {dims} cy1={cy1} cx1={cx1} r1={r1} cy2={cy2} cx2={cx2} r2={r2}"
            )?,
            PhantomShape::Sphere { cz, cy, cx, r } => write!(f, "sphere {dims} cz={cz} cy={cy} cx={cx} r={r}")?,
        }
        write!(
            f,
            " contrast={} noise={} seed={}",
            self.contrast, self.noise_sigma, self.seed
        )
    }
}

impl FromStr for PhantomDescriptor {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut it = line.split_whitespace();
        let kind = it.next().ok_or_else(|| Error::param("empty phantom descriptor"))?;
        let dims: Vec<usize> = it
            .next()
            .ok_or_else(|| Error::param("phantom descriptor needs dims like 64x64"))?
            .split('x')
            .map(|d| d.parse().map_err(|_| Error::param(format!("bad dimension {d:?}"))))
            .collect::<Result<_>>()?;
        let mut kv = std::collections::HashMap::new();
        for pair in it {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::param(format!("expected key=value, got {pair:?}")))?;
            let v: f64 = v.parse().map_err(|_| Error::param(format!("bad number in {pair:?}")))?;
            kv.insert(k.to_string(), v);
        }
        let centre = |axis: usize| dims.get(axis).map_or(0.0, |&d| (d as f64 - 1.0) / 2.0);
        let mut take = |k: &str, default: Option<f64>| -> Result<f64> {
            kv.remove(k)
                .or(default)
                .ok_or_else(|| Error::param(format!("phantom descriptor is missing {k}")))
        };
        let shape = match kind {
            "disk" => PhantomShape::Disk {
                cy: take("cy", Some(centre(0)))?,
                cx: take("cx", Some(centre(1)))?,
                r: take("r", None)?,
            },
            "ellipse" => PhantomShape::Ellipse {
                cy: take("cy", Some(centre(0)))?,
                cx: take("cx", Some(centre(1)))?,
                ry: take("ry", None)?,
                rx: take("rx", None)?,
                angle_deg: take("angle", Some(0.0))?,
            },
            "twoblob" => PhantomShape::TwoBlob {
                cy1: take("cy1", None)?,
                cx1: take("cx1", None)?,
                r1: take("r1", None)?,
                cy2: take("cy2", None)?,
                cx2: take("cx2", None)?,
                r2: take("r2", None)?,
            },
            "sphere" => PhantomShape::Sphere {
                cz: take("cz", Some(centre(0)))?,
                cy: take("cy", Some(centre(1)))?,
                cx: take("cx", Some(centre(2)))?,
                r: take("r", None)?,
            },
            other => return Err(Error::param(format!("unknown phantom shape {other:?}"))),
        };
        let contrast = take("contrast", Some(0.6))?;
        let noise_sigma = take("noise", Some(0.0))?;
        let seed = take("seed", Some(0.0))?;
        if let Some(k) = kv.keys().next() {
            return Err(Error::param(format!("unknown phantom key {k:?}")));
        }
        if seed < 0.0 || seed.fract() != 0.0 {
            return Err(Error::param("phantom seed must be a non-negative integer"));
        }
        Ok(PhantomDescriptor {
            dims,
            shape,
            contrast,
            noise_sigma,
            seed: seed as u64,
        })
    }
}

/// One descriptor per line; blank lines and `#` comments are skipped.
pub fn parse_phantom_list(text: &str) -> Result<Vec<PhantomDescriptor>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}
