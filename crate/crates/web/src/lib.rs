//! WebAssembly bindings for the single-page demo in `www/`.

pub mod state;

use wasm_bindgen::prelude::*;

pub use state::{DemoError, DemoState, Layer, Summary};

#[wasm_bindgen]
pub struct Demo(DemoState);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, radius: f64, contrast: f64, noise: f64, seed: u32, config: &str) -> Result<Demo, JsError> {
        Ok(Demo(DemoState::new(
            size,
            radius,
            contrast,
            noise,
            seed as u64,
            config,
        )?))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn reconfigure(&mut self, config: &str) -> Result<(), JsError> {
        Ok(self.0.reconfigure(config)?)
    }

    /// `layer` is one of `segmentation`, `saliency`, `strength`.
    pub fn render(&self, layer: &str) -> Result<Vec<u8>, JsError> {
        Ok(self.0.render(layer.parse()?))
    }

    /// `xs` and `ys` are the pointer positions of one stroke in pixels.
    pub fn scribble(&mut self, fg: bool, xs: Vec<i32>, ys: Vec<i32>, radius: u32) -> Result<usize, JsError> {
        let points: Vec<(i64, i64)> = xs.iter().zip(&ys).map(|(&x, &y)| (x as i64, y as i64)).collect();
        Ok(self.0.scribble(fg, &points, radius as i64)?)
    }

    pub fn undo(&mut self) -> Result<usize, JsError> {
        Ok(self.0.undo()?)
    }

    /// Summary as a JSON string.
    pub fn summary(&self) -> String {
        serde_json::to_string(&self.0.summary()).unwrap_or_default()
    }
}
