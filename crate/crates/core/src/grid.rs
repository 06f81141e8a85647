//! Lattice, label and distribution types shared by every other module.
//!
//! Pixels are addressed by a flat row-major index `i = row * width + col`.
//! Cliques and every file format refer to pixels by this index.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Label id. Labels are dense in `0..L`.
pub type Label = usize;

/// Ordered set of label names; the position of a name is its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::invalid("label set must contain at least one label"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("bad label name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate label name {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Labels named `label0 .. label{count-1}`.
    pub fn anonymous(count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| format!("label{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: Label) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// RGB image on a rectangular lattice. Colors are in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must have at least one pixel"));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        self.pixels[i]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        pixel_index(self.width, row, col)
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        pixel_coords(self.width, i)
    }
}

#[inline]
pub fn pixel_index(width: usize, row: usize, col: usize) -> usize {
    row * width + col
}

#[inline]
pub fn pixel_coords(width: usize, i: usize) -> (usize, usize) {
    (i / width, i % width)
}

/// Calls `f` with the flat index of every in-bounds 4-neighbor of `i`.
pub fn for_each_neighbor4(width: usize, height: usize, i: usize, mut f: impl FnMut(usize)) {
    let (r, c) = pixel_coords(width, i);
    if r > 0 {
        f(i - width);
    }
    if r + 1 < height {
        f(i + width);
    }
    if c > 0 {
        f(i - 1);
    }
    if c + 1 < width {
        f(i + 1);
    }
}

/// Dense `N x L` matrix stored row-major, one row per pixel.
macro_rules! pixel_label_matrix {
    ($name:ident) => {
        impl $name {
            pub fn num_pixels(&self) -> usize {
                self.num_pixels
            }

            pub fn num_labels(&self) -> usize {
                self.num_labels
            }

            #[inline]
            pub fn get(&self, i: usize, l: Label) -> f64 {
                self.values[i * self.num_labels + l]
            }

            #[inline]
            pub fn row(&self, i: usize) -> &[f64] {
                &self.values[i * self.num_labels..(i + 1) * self.num_labels]
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.values
            }
        }
    };
}

/// Unary energies `psi_u(x_i = l)`; lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    num_pixels: usize,
    num_labels: usize,
    values: Vec<f64>,
}

pixel_label_matrix!(UnaryField);

impl UnaryField {
    pub fn new(num_pixels: usize, num_labels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(num_pixels, num_labels, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite unary at pixel {} label {}",
                pos / num_labels,
                pos % num_labels
            )));
        }
        Ok(Self {
            num_pixels,
            num_labels,
            values,
        })
    }

    /// Unary whose per-pixel minimum sits on the given labeling.
    pub fn from_scores(rows: &[Vec<f64>]) -> Result<Self> {
        let num_labels = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), num_labels, values)
    }
}

/// Mean-field distribution: row `i` is the categorical `Q_i` over labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalField {
    num_pixels: usize,
    num_labels: usize,
    values: Vec<f64>,
}

pixel_label_matrix!(MarginalField);

const ROW_SUM_TOL: f64 = 1e-9;

impl MarginalField {
    /// Wraps already-normalized rows, checking the distribution invariants.
    pub fn new(num_pixels: usize, num_labels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(num_pixels, num_labels, values.len())?;
        for (i, row) in values.chunks(num_labels).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::DegenerateRow { pixel: i, sum });
            }
        }
        Ok(Self {
            num_pixels,
            num_labels,
            values,
        })
    }

    pub fn uniform(num_pixels: usize, num_labels: usize) -> Result<Self> {
        check_shape(num_pixels, num_labels, num_pixels * num_labels)?;
        let p = 1.0 / num_labels as f64;
        Ok(Self {
            num_pixels,
            num_labels,
            values: vec![p; num_pixels * num_labels],
        })
    }

    /// One-hot field concentrated on `labels`.
    pub fn one_hot(labels: &LabelMap, num_labels: usize) -> Result<Self> {
        labels.validate(num_labels)?;
        let n = labels.len();
        let mut values = vec![0.0; n * num_labels];
        for (i, &l) in labels.labels().iter().enumerate() {
            values[i * num_labels + l] = 1.0;
        }
        Ok(Self {
            num_pixels: n,
            num_labels,
            values,
        })
    }

    /// Largest absolute entry-wise difference between two fields of equal shape.
    pub fn max_abs_diff(&self, other: &MarginalField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.values
            .chunks(self.num_labels)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_shape(num_pixels: usize, num_labels: usize, len: usize) -> Result<()> {
    if num_pixels == 0 || num_labels == 0 {
        return Err(Error::invalid("field needs N >= 1 and L >= 1"));
    }
    if len != num_pixels * num_labels {
        return Err(Error::ShapeMismatch(format!(
            "{len} values for {num_pixels} pixels x {num_labels} labels"
        )));
    }
    Ok(())
}

/// Hard labeling, one label per pixel, with the lattice shape attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: Label) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn set(&mut self, i: usize, l: Label) {
        self.labels[i] = l;
    }

    pub fn at(&self, row: usize, col: usize) -> Label {
        self.labels[pixel_index(self.width, row, col)]
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn validate(&self, num_labels: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= num_labels) {
            Some(i) => Err(Error::invalid(format!(
                "pixel {i} has label {} but only {num_labels} labels exist",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// MAP readout: per-row argmax, ties broken toward the smaller label id.
pub fn argmax_labeling(q: &MarginalField, width: usize, height: usize) -> Result<LabelMap> {
    if width * height != q.num_pixels() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} grid for {} pixels",
            width,
            height,
            q.num_pixels()
        )));
    }
    let labels = (0..q.num_pixels()).map(|i| argmax(q.row(i))).collect();
    LabelMap::new(width, height, labels)
}

/// Index of the first maximal entry.
pub fn argmax(row: &[f64]) -> Label {
    let mut best = 0;
    for (l, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = l;
        }
    }
    best
}

/// Divides each row of a non-negative `N x L` matrix by its sum.
pub fn normalize_rows(mut raw: Vec<f64>, num_labels: usize) -> Result<MarginalField> {
    if num_labels == 0 || raw.is_empty() || !raw.len().is_multiple_of(num_labels) {
        return Err(Error::ShapeMismatch(format!(
            "{} values is not a whole number of rows of {num_labels}",
            raw.len()
        )));
    }
    let num_pixels = raw.len() / num_labels;
    for (i, row) in raw.chunks_mut(num_labels).enumerate() {
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || sum <= 0.0 || row.iter().any(|&v| v < 0.0) {
            return Err(Error::DegenerateRow { pixel: i, sum });
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(MarginalField {
        num_pixels,
        num_labels,
        values: raw,
    })
}

/// Row-wise softmax of `logits`, computed with per-row max subtraction.
pub fn softmax_rows(mut logits: Vec<f64>, num_labels: usize) -> Result<MarginalField> {
    if num_labels == 0 {
        return Err(Error::invalid("zero labels"));
    }
    for (i, row) in logits.chunks_mut(num_labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateRow {
                pixel: i,
                sum: max,
            });
        }
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
    }
    normalize_rows(logits, num_labels)
}
