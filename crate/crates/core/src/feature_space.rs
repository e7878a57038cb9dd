//! Interpretable feature spaces.
//!
//! A [`Segmentation`] groups the `D` raw coordinates of an input into `d`
//! features. Binary perturbations switch whole segments between the input
//! and a [`Reference`]; continuous perturbations add one offset per segment
//! to every raw coordinate in it.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    /// `(height, width, channels)`, stored height-major then width then channel.
    Image([usize; 3]),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image([h, w, c]) => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segmentation {
    assignment: Vec<usize>,
    d: usize,
    shape: Shape,
}

#[derive(Deserialize)]
struct RawSegmentation {
    assignment: Vec<usize>,
    d: usize,
    shape: Option<Shape>,
}

impl<'de> Deserialize<'de> for Segmentation {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSegmentation::deserialize(de)?;
        let shape = raw.shape.unwrap_or(Shape::Flat(raw.assignment.len()));
        let seg = Segmentation::new(raw.assignment, shape).map_err(serde::de::Error::custom)?;
        if seg.d != raw.d {
            return Err(serde::de::Error::custom(format!(
                "declared d = {} but assignment uses {} segments",
                raw.d, seg.d
            )));
        }
        Ok(seg)
    }
}

impl Segmentation {
    /// Builds a segmentation from raw segment ids. `d` is one more than the
    /// largest id, and every id below it must be used.
    pub fn new(assignment: Vec<usize>, shape: Shape) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidSegmentation("empty assignment".into()));
        }
        if shape.len() != assignment.len() {
            return Err(Error::InvalidSegmentation(format!(
                "shape covers {} indices but assignment has {}",
                shape.len(),
                assignment.len()
            )));
        }
        let d = assignment.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; d];
        for &s in &assignment {
            seen[s] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSegmentation(format!("segment {empty} is empty")));
        }
        Ok(Segmentation {
            assignment,
            d,
            shape,
        })
    }

    /// One segment per raw coordinate (`d = D`).
    pub fn singleton(len: usize) -> Result<Self> {
        Self::new((0..len).collect(), Shape::Flat(len))
    }

    pub fn num_features(&self) -> usize {
        self.d
    }

    pub fn raw_len(&self) -> usize {
        self.assignment.len()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn segment_of(&self, raw_index: usize) -> usize {
        self.assignment[raw_index]
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.d];
        for &s in &self.assignment {
            sizes[s] += 1;
        }
        sizes
    }

    pub fn is_singleton(&self) -> bool {
        self.d == self.assignment.len() && self.assignment.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Sums raw values per segment.
    pub fn segment_sums(&self, values: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.d];
        for (v, &s) in values.iter().zip(&self.assignment) {
            sums[s] += v;
        }
        sums
    }

    pub fn segment_means(&self, values: &[f64]) -> Vec<f64> {
        self.segment_sums(values)
            .into_iter()
            .zip(self.segment_sizes())
            .map(|(s, n)| s / n as f64)
            .collect()
    }

    fn check_len(&self, what: &'static str, actual: usize) -> Result<()> {
        if actual != self.assignment.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: self.assignment.len(),
                actual,
            });
        }
        Ok(())
    }

    fn check_features(&self, actual: usize) -> Result<()> {
        if actual != self.d {
            return Err(Error::LengthMismatch {
                what: "feature vector",
                expected: self.d,
                actual,
            });
        }
        Ok(())
    }
}

/// Partitions an `height x width` pixel grid into `rows x cols` rectangular
/// cells. The last cell along each axis absorbs the remainder pixels, and all
/// channels of a pixel share its segment.
pub fn grid_segment(
    height: usize,
    width: usize,
    channels: usize,
    rows: usize,
    cols: usize,
) -> Result<Segmentation> {
    if height == 0 || width == 0 || channels == 0 || rows == 0 || cols == 0 {
        return Err(Error::InvalidGrid("all dimensions must be positive".into()));
    }
    if rows > height || cols > width {
        return Err(Error::InvalidGrid(format!(
            "{rows}x{cols} grid does not fit a {height}x{width} image"
        )));
    }
    let cell_h = height / rows;
    let cell_w = width / cols;
    let mut assignment = Vec::with_capacity(height * width * channels);
    for y in 0..height {
        let r = (y / cell_h).min(rows - 1);
        for x in 0..width {
            let c = (x / cell_w).min(cols - 1);
            assignment.extend(std::iter::repeat_n(r * cols + c, channels));
        }
    }
    Segmentation::new(assignment, Shape::Image([height, width, channels]))
}

/// Replacement values used for absent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    values: Vec<f64>,
}

impl Reference {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("reference contains non-finite entries"));
        }
        Ok(Reference { values })
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-segment mean of `x`, averaged jointly over every raw index (channels
/// included) in the segment.
pub fn mean_reference(x: &[f64], seg: &Segmentation) -> Result<Reference> {
    seg.check_len("input", x.len())?;
    let means = seg.segment_means(x);
    Reference::new(seg.assignment.iter().map(|&s| means[s]).collect())
}

/// `z_i = x_i` where `zprime[seg(i)] = 1`, else `r_i`.
pub fn reconstruct_binary(
    x: &[f64],
    r: &Reference,
    seg: &Segmentation,
    zprime: &[f64],
) -> Result<Vec<f64>> {
    seg.check_len("input", x.len())?;
    seg.check_len("reference", r.len())?;
    seg.check_features(zprime.len())?;
    if let Some(bad) = zprime.iter().find(|&&z| z != 0.0 && z != 1.0) {
        return Err(Error::param(format!("binary mask entry {bad} is not 0 or 1")));
    }
    Ok(lift_binary_row(x, &r.values, &seg.assignment, zprime))
}

fn lift_binary_row(x: &[f64], r: &[f64], assignment: &[usize], zprime: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(r)
        .zip(assignment)
        .map(|((&xi, &ri), &s)| if zprime[s] == 1.0 { xi } else { ri })
        .collect()
}

/// `z_i = x_i + zprime[seg(i)]`.
pub fn reconstruct_continuous(x: &[f64], seg: &Segmentation, zprime: &[f64]) -> Result<Vec<f64>> {
    seg.check_len("input", x.len())?;
    seg.check_features(zprime.len())?;
    Ok(lift_continuous_row(x, &seg.assignment, zprime))
}

fn lift_continuous_row(x: &[f64], assignment: &[usize], zprime: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(assignment)
        .map(|(&xi, &s)| xi + zprime[s])
        .collect()
}

/// Row-wise [`reconstruct_binary`] over an `n x d` mask matrix.
pub fn lift_binary(
    x: &[f64],
    r: &Reference,
    seg: &Segmentation,
    masks: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    seg.check_len("input", x.len())?;
    seg.check_len("reference", r.len())?;
    seg.check_features(masks.ncols())?;
    Ok(lift_rows(masks, x.len(), |row| {
        lift_binary_row(x, &r.values, &seg.assignment, row)
    }))
}

/// Row-wise [`reconstruct_continuous`] over an `n x d` offset matrix.
pub fn lift_continuous(
    x: &[f64],
    seg: &Segmentation,
    offsets: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    seg.check_len("input", x.len())?;
    seg.check_features(offsets.ncols())?;
    Ok(lift_rows(offsets, x.len(), |row| {
        lift_continuous_row(x, &seg.assignment, row)
    }))
}

fn lift_rows(
    features: ArrayView2<'_, f64>,
    raw_len: usize,
    lift: impl Fn(&[f64]) -> Vec<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros((features.nrows(), raw_len));
    let mut buf = vec![0.0; features.ncols()];
    for (row, mut dst) in features.rows().into_iter().zip(out.rows_mut()) {
        copy_row(row, &mut buf);
        for (d, v) in dst.iter_mut().zip(lift(&buf)) {
            *d = v;
        }
    }
    out
}

fn copy_row(row: ArrayView1<'_, f64>, buf: &mut [f64]) {
    for (b, v) in buf.iter_mut().zip(row) {
        *b = *v;
    }
}
