//! Raster, mask, and label types shared by every stage, plus lattice adjacency.
//!
//! Voxels are stored in row-major order with the last axis fastest. A 2-D
//! image of `height x width` has dims `[height, width]`; a volume has dims
//! `[depth, height, width]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extent per axis plus the strides derived from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(&dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims
    }
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::param(format!(
                "grids must be 2-D or 3-D, got {} axes",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::param(format!("every extent must be >= 1, got {dims:?}")));
        }
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Ok(Shape {
            dims: dims.to_vec(),
            strides,
        })
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coord(&self, index: usize, axis: usize) -> usize {
        (index / self.strides[axis]) % self.dims[axis]
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        (0..self.ndim()).map(|a| self.coord(index, a)).collect()
    }

    /// Linear index of `coords`, or `None` when out of bounds.
    pub fn index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.ndim() {
            return None;
        }
        let mut idx = 0;
        for ((&c, &d), &s) in coords.iter().zip(&self.dims).zip(&self.strides) {
            if c >= d {
                return None;
            }
            idx += c * s;
        }
        Some(idx)
    }

    /// Face neighbors of `index` in ascending linear-index order.
    pub fn neighbors(&self, index: usize) -> Neighbors {
        let mut buf = [0usize; 6];
        let mut len = 0;
        let n = self.ndim();
        // -stride for the slowest axis is the smallest index.
        for a in 0..n {
            if self.coord(index, a) > 0 {
                buf[len] = index - self.strides[a];
                len += 1;
            }
        }
        for a in (0..n).rev() {
            if self.coord(index, a) + 1 < self.dims[a] {
                buf[len] = index + self.strides[a];
                len += 1;
            }
        }
        Neighbors { buf, len, pos: 0 }
    }

    /// Number of face neighbors a voxel would have in an unbounded lattice.
    #[inline]
    pub fn full_degree(&self) -> usize {
        2 * self.ndim()
    }

    /// True when `index` lies on a face of any axis.
    pub fn on_face(&self, index: usize) -> bool {
        (0..self.ndim()).any(|a| {
            let c = self.coord(index, a);
            c == 0 || c + 1 == self.dims[a]
        })
    }
}

/// Fixed-capacity neighbor list (at most six faces in 3-D).
#[derive(Clone, Debug)]
pub struct Neighbors {
    buf: [usize; 6],
    len: usize,
    pos: usize,
}

impl Iterator for Neighbors {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.pos < self.len {
            self.pos += 1;
            Some(self.buf[self.pos - 1])
        } else {
            None
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.len - self.pos;
        (r, Some(r))
    }
}

impl ExactSizeIterator for Neighbors {}

/// Scalar raster normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    shape: Shape,
    spacing: Vec<f64>,
    values: Vec<f64>,
    raw_min: f64,
    raw_max: f64,
}

impl ImageGrid {
    /// Builds a grid from values already in `[0, 1]`.
    pub fn from_normalized(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Ingest(format!(
                "{} values for dims {:?}",
                values.len(),
                shape.dims()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Ingest(format!("normalized value {v} outside [0, 1]")));
        }
        let spacing = vec![1.0; shape.ndim()];
        Ok(ImageGrid {
            shape,
            spacing,
            values,
            raw_min: 0.0,
            raw_max: 1.0,
        })
    }

    pub fn with_spacing(mut self, spacing: Vec<f64>) -> Result<Self> {
        if spacing.len() != self.shape.ndim() || spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::param(format!("invalid spacing {spacing:?}")));
        }
        self.spacing = spacing;
        Ok(self)
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    #[inline]
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Minimum and maximum of the raw samples before normalization.
    pub fn raw_range(&self) -> (f64, f64) {
        (self.raw_min, self.raw_max)
    }

    /// Maps a normalized value back to the raw intensity scale.
    pub fn denormalize(&self, v: f64) -> f64 {
        self.raw_min + v * (self.raw_max - self.raw_min)
    }

    /// Same geometry and raw metadata, new normalized values.
    pub fn map_values(&self, values: Vec<f64>) -> ImageGrid {
        assert_eq!(values.len(), self.values.len());
        ImageGrid {
            shape: self.shape.clone(),
            spacing: self.spacing.clone(),
            values,
            raw_min: self.raw_min,
            raw_max: self.raw_max,
        }
    }

    /// Intensity inversion `I -> 1 - I`.
    pub fn inverted(&self) -> ImageGrid {
        self.map_values(self.values.iter().map(|v| 1.0 - v).collect())
    }
}

/// Affine map of raw samples onto `[0, 1]`; constant rasters map to all zeros.
pub fn normalize_intensities(dims: &[usize], raw: &[f64]) -> Result<ImageGrid> {
    if raw.is_empty() {
        return Err(Error::Ingest("empty raster".into()));
    }
    let shape = Shape::new(dims).map_err(|e| Error::Ingest(e.to_string()))?;
    if shape.len() != raw.len() {
        return Err(Error::Ingest(format!("{} samples for dims {:?}", raw.len(), dims)));
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Ingest(format!("non-finite sample {v}")));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let values = if range > 0.0 {
        raw.iter().map(|&v| ((v - min) / range).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(ImageGrid {
        spacing: vec![1.0; shape.ndim()],
        shape,
        values,
        raw_min: min,
        raw_max: max,
    })
}

/// Ternary seed label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Label {
    #[default]
    Unlabeled = 0,
    Fg = 1,
    Bg = 2,
}

impl Label {
    /// The opposite seed class; `Unlabeled` maps to itself.
    pub fn swapped(self) -> Label {
        match self {
            Label::Fg => Label::Bg,
            Label::Bg => Label::Fg,
            Label::Unlabeled => Label::Unlabeled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedMask {
    shape: Shape,
    labels: Vec<Label>,
}

impl SeedMask {
    pub fn unlabeled(shape: Shape) -> Self {
        let labels = vec![Label::Unlabeled; shape.len()];
        SeedMask { shape, labels }
    }

    pub fn from_labels(shape: Shape, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != shape.len() {
            return Err(Error::param(format!(
                "{} labels for dims {:?}",
                labels.len(),
                shape.dims()
            )));
        }
        Ok(SeedMask { shape, labels })
    }

    /// FG wherever `pred` holds, unlabeled elsewhere.
    pub fn from_fg_predicate(shape: Shape, mut pred: impl FnMut(usize) -> bool) -> Self {
        let labels = (0..shape.len())
            .map(|i| if pred(i) { Label::Fg } else { Label::Unlabeled })
            .collect();
        SeedMask { shape, labels }
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    #[inline]
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, index: usize) -> Label {
        self.labels[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize, label: Label) {
        self.labels[index] = label;
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn indices(&self, label: Label) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    /// The FG seeds of this mask alone.
    pub fn fg_part(&self) -> SeedMask {
        self.only(Label::Fg)
    }

    /// The BG seeds of this mask alone.
    pub fn bg_part(&self) -> SeedMask {
        self.only(Label::Bg)
    }

    fn only(&self, keep: Label) -> SeedMask {
        let labels = self
            .labels
            .iter()
            .map(|&l| if l == keep { l } else { Label::Unlabeled })
            .collect();
        SeedMask {
            shape: self.shape.clone(),
            labels,
        }
    }

    /// FG and BG swapped.
    pub fn swapped(&self) -> SeedMask {
        SeedMask {
            shape: self.shape.clone(),
            labels: self.labels.iter().map(|l| l.swapped()).collect(),
        }
    }

    pub(crate) fn check_dims(&self, shape: &Shape) -> Result<()> {
        if &self.shape != shape {
            return Err(Error::DimMismatch {
                left: self.dims().to_vec(),
                right: shape.dims().to_vec(),
            });
        }
        Ok(())
    }
}

/// Per-voxel seed confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthMap {
    shape: Shape,
    weights: Vec<f64>,
}

impl StrengthMap {
    pub fn zeros(shape: Shape) -> Self {
        let weights = vec![0.0; shape.len()];
        StrengthMap { shape, weights }
    }

    /// Every seeded voxel at full strength.
    pub fn uniform(seeds: &SeedMask) -> Self {
        let weights = seeds
            .labels()
            .iter()
            .map(|&l| if l == Label::Unlabeled { 0.0 } else { 1.0 })
            .collect();
        StrengthMap {
            shape: seeds.shape().clone(),
            weights,
        }
    }

    pub fn from_weights(shape: Shape, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.len() {
            return Err(Error::param("strength map length mismatch"));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::param(format!("strength {w} outside [0, 1]")));
        }
        Ok(StrengthMap { shape, weights })
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.weights[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize, w: f64) {
        debug_assert!((0.0..=1.0).contains(&w));
        self.weights[index] = w;
    }

    /// Zero every weight on an unlabeled voxel of `seeds`.
    pub fn restrict_to(&mut self, seeds: &SeedMask) {
        for (w, &l) in self.weights.iter_mut().zip(seeds.labels()) {
            if l == Label::Unlabeled {
                *w = 0.0;
            }
        }
    }

    /// True when every unlabeled voxel of `seeds` carries zero weight.
    pub fn is_consistent_with(&self, seeds: &SeedMask) -> bool {
        self.shape == *seeds.shape()
            && self
                .weights
                .iter()
                .zip(seeds.labels())
                .all(|(&w, &l)| l != Label::Unlabeled || w == 0.0)
    }
}

/// Binary FG/BG field, used for ground truth and segmentation output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    shape: Shape,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Shape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::param("binary mask length mismatch"));
        }
        Ok(BinaryMask { shape, bits })
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize) -> bool) -> Self {
        let bits = (0..shape.len()).map(f).collect();
        BinaryMask { shape, bits }
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Binary segmentation result with an optional FG probability field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    mask: BinaryMask,
    fg_probability: Option<Vec<f64>>,
}

impl LabelMap {
    pub fn from_mask(mask: BinaryMask) -> Self {
        LabelMap {
            mask,
            fg_probability: None,
        }
    }

    /// Labels follow the probability: FG iff `p >= 0.5`.
    pub fn from_probability(shape: Shape, probability: Vec<f64>) -> Result<Self> {
        let bits = probability.iter().map(|&p| p >= 0.5).collect();
        let mask = BinaryMask::new(shape, bits)?;
        Ok(LabelMap {
            mask,
            fg_probability: Some(probability),
        })
    }

    #[inline]
    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        self.mask.shape()
    }

    #[inline]
    pub fn is_fg(&self, index: usize) -> bool {
        self.mask.get(index)
    }

    pub fn fg_probability(&self) -> Option<&[f64]> {
        self.fg_probability.as_deref()
    }

    pub fn fg_count(&self) -> usize {
        self.mask.count()
    }
}

/// Every voxel within `thickness` of any face becomes BG.
pub fn mask_border(shape: &Shape, thickness: usize) -> Result<SeedMask> {
    let min_dim = shape.dims().iter().copied().min().unwrap_or(0);
    if thickness == 0 || 2 * thickness >= min_dim {
        return Err(Error::param(format!(
            "border thickness {thickness} invalid for dims {:?}",
            shape.dims()
        )));
    }
    let labels = (0..shape.len())
        .map(|i| {
            let near = (0..shape.ndim()).any(|a| {
                let c = shape.coord(i, a);
                c < thickness || c >= shape.dims()[a] - thickness
            });
            if near {
                Label::Bg
            } else {
                Label::Unlabeled
            }
        })
        .collect();
    Ok(SeedMask {
        shape: shape.clone(),
        labels,
    })
}

/// Union of two seed masks. BG takes precedence where the two disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merged {
    pub mask: SeedMask,
    pub conflicts: usize,
}

pub fn merge_seeds(fg: &SeedMask, bg: &SeedMask) -> Result<Merged> {
    fg.check_dims(bg.shape())?;
    let mut conflicts = 0;
    let labels = fg
        .labels()
        .iter()
        .zip(bg.labels())
        .map(|(&a, &b)| {
            let any_bg = a == Label::Bg || b == Label::Bg;
            let any_fg = a == Label::Fg || b == Label::Fg;
            if any_bg && any_fg {
                conflicts += 1;
            }
            if any_bg {
                Label::Bg
            } else if any_fg {
                Label::Fg
            } else {
                Label::Unlabeled
            }
        })
        .collect();
    Ok(Merged {
        mask: SeedMask {
            shape: fg.shape().clone(),
            labels,
        },
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d).unwrap()
    }

    #[test]
    fn normalize_8bit_endpoints() {
        let g = normalize_intensities(&[1, 3], &[0.0, 128.0, 255.0]).unwrap();
        assert_eq!(g.values(), &[0.0, 128.0 / 255.0, 1.0]);
        assert_eq!(g.raw_range(), (0.0, 255.0));
    }

    #[test]
    fn normalize_constant_is_zero() {
        let g = normalize_intensities(&[1, 3], &[7.0, 7.0, 7.0]).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_signed() {
        let g = normalize_intensities(&[1, 3], &[-100.0, 0.0, 300.0]).unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 1.0]);
        assert_eq!(g.denormalize(0.25), 0.0);
    }

    #[test]
    fn normalize_rejects_empty() {
        assert!(matches!(normalize_intensities(&[0, 3], &[]), Err(Error::Ingest(_))));
    }

    #[test]
    fn border_counts() {
        let m = mask_border(&shape(&[4, 4]), 1).unwrap();
        assert_eq!((m.count(Label::Bg), m.count(Label::Unlabeled)), (12, 4));
        let m = mask_border(&shape(&[3, 3, 3]), 1).unwrap();
        assert_eq!((m.count(Label::Bg), m.count(Label::Unlabeled)), (26, 1));
        let m = mask_border(&shape(&[5, 5]), 2).unwrap();
        assert_eq!((m.count(Label::Bg), m.count(Label::Unlabeled)), (24, 1));
    }

    #[test]
    fn border_too_thick() {
        assert!(mask_border(&shape(&[4, 4]), 2).is_err());
        assert!(mask_border(&shape(&[4, 4]), 0).is_err());
    }

    #[test]
    fn merge_examples() {
        let s = shape(&[2, 2]);
        let mut fg = SeedMask::unlabeled(s.clone());
        let mut bg = SeedMask::unlabeled(s.clone());
        fg.set(3, Label::Fg);
        bg.set(0, Label::Bg);
        let m = merge_seeds(&fg, &bg).unwrap();
        assert_eq!(m.mask.get(3), Label::Fg);
        assert_eq!(m.mask.get(0), Label::Bg);
        assert_eq!(m.conflicts, 0);

        let mut fg = SeedMask::unlabeled(s.clone());
        fg.set(0, Label::Fg);
        let m = merge_seeds(&fg, &bg).unwrap();
        assert_eq!(m.mask.get(0), Label::Bg);
        assert_eq!(m.conflicts, 1);

        let empty = SeedMask::unlabeled(s.clone());
        let m = merge_seeds(&empty, &empty).unwrap();
        assert_eq!(m.mask.count(Label::Unlabeled), 4);
    }

    #[test]
    fn merge_dim_mismatch() {
        let a = SeedMask::unlabeled(shape(&[2, 2]));
        let b = SeedMask::unlabeled(shape(&[2, 3]));
        assert!(matches!(merge_seeds(&a, &b), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn neighbors_ascending_and_clipped() {
        let s = shape(&[3, 4]);
        assert_eq!(s.neighbors(5).collect::<Vec<_>>(), vec![1, 4, 6, 9]);
        assert_eq!(s.neighbors(0).collect::<Vec<_>>(), vec![1, 4]);
        let s = shape(&[3, 3, 3]);
        assert_eq!(s.neighbors(13).collect::<Vec<_>>(), vec![4, 10, 12, 14, 16, 22]);
    }

    fn arb_labels() -> impl Strategy<Value = (Vec<usize>, Vec<u8>, Vec<u8>)> {
        (prop::collection::vec(1usize..6, 2..=3)).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            (
                Just(dims),
                prop::collection::vec(0u8..3, n),
                prop::collection::vec(0u8..3, n),
            )
        })
    }

    fn to_label(v: u8) -> Label {
        match v {
            1 => Label::Fg,
            2 => Label::Bg,
            _ => Label::Unlabeled,
        }
    }

    proptest! {
        #[test]
        fn neighbor_relation_symmetric(dims in prop::collection::vec(1usize..6, 2..=3)) {
            let s = Shape::new(&dims).unwrap();
            for i in 0..s.len() {
                for j in s.neighbors(i) {
                    prop_assert!(j < s.len());
                    prop_assert!(s.neighbors(j).any(|k| k == i));
                }
            }
        }

        #[test]
        fn label_counts_partition((dims, a, _b) in arb_labels()) {
            let s = Shape::new(&dims).unwrap();
            let m = SeedMask::from_labels(s.clone(), a.into_iter().map(to_label).collect()).unwrap();
            prop_assert_eq!(
                m.count(Label::Fg) + m.count(Label::Bg) + m.count(Label::Unlabeled),
                s.len()
            );
        }

        #[test]
        fn merge_idempotent((dims, a, b) in arb_labels()) {
            let s = Shape::new(&dims).unwrap();
            let f = SeedMask::from_labels(s.clone(), a.into_iter().map(to_label).collect()).unwrap().fg_part();
            let g = SeedMask::from_labels(s, b.into_iter().map(to_label).collect()).unwrap().bg_part();
            let once = merge_seeds(&f, &g).unwrap().mask;
            prop_assert_eq!(&merge_seeds(&once.fg_part(), &g).unwrap().mask, &once);
            let twice = merge_seeds(&once, &g).unwrap().mask;
            prop_assert_eq!(&once, &twice);
            let swapped = merge_seeds(&g, &f).unwrap().mask;
            prop_assert_eq!(once, swapped);
        }

        #[test]
        fn border_symmetric_under_axis_reversal(
            dims in prop::collection::vec(3usize..9, 2..=3),
            t in 1usize..4,
        ) {
            let s = Shape::new(&dims).unwrap();
            prop_assume!(2 * t < *dims.iter().min().unwrap());
            let m = mask_border(&s, t).unwrap();
            for axis in 0..s.ndim() {
                for i in 0..s.len() {
                    let mut c = s.coords(i);
                    c[axis] = dims[axis] - 1 - c[axis];
                    let j = s.index(&c).unwrap();
                    prop_assert_eq!(m.get(i), m.get(j));
                }
            }
        }
    }
}
