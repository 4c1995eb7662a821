//! Demo state with no JS types, so native tests can drive it.

use std::collections::BTreeSet;

use serde::Serialize;

use seedforge_core::eval::{make_phantom, Phantom, PhantomDescriptor};
use seedforge_core::session::{Session, SessionError};
use seedforge_core::{parse_config, ConfigOverrides, Label};

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("phantom: {0}")]
    Phantom(seedforge_core::Error),
    #[error("config: {0}")]
    Config(seedforge_core::Error),
    #[error("unknown layer {0:?}; expected segmentation, saliency or strength")]
    Layer(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

pub type Result<T> = std::result::Result<T, DemoError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Segmentation,
    Saliency,
    Strength,
}

impl std::str::FromStr for Layer {
    type Err = DemoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmentation" => Ok(Layer::Segmentation),
            "saliency" => Ok(Layer::Saliency),
            "strength" => Ok(Layer::Strength),
            other => Err(DemoError::Layer(other.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub config: String,
    pub revision: u64,
    pub fg_seeds: usize,
    pub bg_seeds: usize,
    pub fg_voxels: usize,
    pub dice: Option<f64>,
    pub seed_error: Option<f64>,
    pub undoable: usize,
    pub has_saliency: bool,
}

pub struct DemoState {
    phantom: Phantom,
    session: Session,
}

impl DemoState {
    /// Square disk phantom run through `config`.
    pub fn new(size: usize, radius: f64, contrast: f64, noise: f64, seed: u64, config: &str) -> Result<Self> {
        let phantom =
            make_phantom(&PhantomDescriptor::disk(size, radius, contrast, noise, seed)).map_err(DemoError::Phantom)?;
        let session = start(&phantom, config)?;
        Ok(DemoState { phantom, session })
    }

    /// Reruns the automated pipeline on the same phantom, dropping scribbles.
    pub fn reconfigure(&mut self, config: &str) -> Result<()> {
        self.session = start(&self.phantom, config)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.phantom.grid.dims()[1]
    }

    pub fn height(&self) -> usize {
        self.phantom.grid.dims()[0]
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Paints a brush of `radius` along the points; points off the image are
    /// dropped. Returns the number of voxels whose label flipped.
    pub fn scribble(&mut self, fg: bool, points: &[(i64, i64)], radius: i64) -> Result<usize> {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let mut voxels = BTreeSet::new();
        for &(x, y) in points {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (px, py) = (x + dx, y + dy);
                    if dx * dx + dy * dy <= radius * radius && (0..w).contains(&px) && (0..h).contains(&py) {
                        voxels.insert((py * w + px) as usize);
                    }
                }
            }
        }
        let label = if fg { Label::Fg } else { Label::Bg };
        Ok(self
            .session
            .apply_stroke(label, voxels.into_iter().collect())?
            .flipped
            .len())
    }

    pub fn undo(&mut self) -> Result<usize> {
        Ok(self.session.undo()?.flipped.len())
    }

    pub fn summary(&self) -> Summary {
        let metrics = self.session.metrics();
        Summary {
            config: self.session.config().canonical(),
            revision: self.session.revision(),
            fg_seeds: self.session.seeds().count(Label::Fg),
            bg_seeds: self.session.seeds().count(Label::Bg),
            fg_voxels: self.session.labels().fg_count(),
            dice: metrics.as_ref().map(|m| m.dice),
            seed_error: metrics.as_ref().map(|m| m.fg_seed_error_rate),
            undoable: self.session.undoable(),
            has_saliency: self.session.saliency().is_some(),
        }
    }

    /// RGBA pixels, row-major, `width * height * 4` bytes.
    pub fn render(&self, layer: Layer) -> Vec<u8> {
        match layer {
            Layer::Segmentation => self.render_segmentation(),
            Layer::Saliency => match self.session.saliency() {
                Some(s) => {
                    let max = s.scores().iter().copied().fold(0.0, f64::max);
                    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
                    s.scores().iter().flat_map(|&v| heat(v * scale)).collect()
                }
                None => self.phantom.grid.values().iter().flat_map(|&v| gray(v)).collect(),
            },
            Layer::Strength => self
                .session
                .strength()
                .weights()
                .iter()
                .flat_map(|&v| heat(v))
                .collect(),
        }
    }

    fn render_segmentation(&self) -> Vec<u8> {
        let img = self.phantom.grid.values();
        let labels = self.session.labels();
        let seeds = self.session.seeds();
        (0..img.len())
            .flat_map(|i| match seeds.get(i) {
                Label::Fg => [60, 220, 90, 255],
                Label::Bg if !on_border(i, self.width(), self.height()) => [70, 130, 255, 255],
                _ => {
                    let [g, _, _, a] = gray(img[i]);
                    if labels.is_fg(i) {
                        [blend(g, 255), blend(g, 120), blend(g, 40), a]
                    } else {
                        [g, g, g, a]
                    }
                }
            })
            .collect()
    }
}

fn start(phantom: &Phantom, config: &str) -> Result<Session> {
    let config = parse_config(config, &ConfigOverrides::default()).map_err(DemoError::Config)?;
    Ok(Session::create(&phantom.grid, config, Some(phantom.truth.clone()))?)
}

fn on_border(i: usize, w: usize, h: usize) -> bool {
    let (y, x) = (i / w, i % w);
    y == 0 || x == 0 || y + 1 == h || x + 1 == w
}

fn gray(v: f64) -> [u8; 4] {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [g, g, g, 255]
}

fn blend(base: u8, tint: u8) -> u8 {
    ((base as u16 * 3 + tint as u16 * 2) / 5) as u8
}

/// Black to red to yellow to white.
fn heat(v: f64) -> [u8; 4] {
    let t = v.clamp(0.0, 1.0) * 3.0;
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(t), c(t - 1.0), c(t - 2.0), 255]
}
