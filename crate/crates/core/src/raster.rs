//! Value types for images, labels, reference maps, explanation masks and
//! boxes, plus the box masking and shift primitives the rest of the crate
//! builds on.
//!
//! All rasters are row-major. Pixel `(j1, j2)` sits at `j1 * width + j2`,
//! with `j1` running along the height axis. Boxes are half-open:
//! `[r_a, r_c) x [r_b, r_d)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest class count a [`RefMap`] can address (ids are stored as `u8`).
pub const MAX_CLASSES: usize = 255;

/// Reserved reference-map value for unlabeled pixels.
pub const VOID: u8 = 0;

/// Binary presence vector over `L` classes. Classes are numbered `1..=L`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiLabel {
    bits: Vec<bool>,
}

impl MultiLabel {
    pub fn empty(num_classes: usize) -> Self {
        Self {
            bits: vec![false; num_classes],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_classes<I>(num_classes: usize, classes: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: Into<u32>,
    {
        let mut label = Self::empty(num_classes);
        for class in classes {
            let class = class.into();
            if class == 0 || class as usize > num_classes {
                return Err(Error::ClassOutOfRange {
                    class,
                    num_classes,
                    context: Some("labels use ids 1..=L".into()),
                });
            }
            label.bits[class as usize - 1] = true;
        }
        Ok(label)
    }

    pub fn num_classes(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Whether `class` (1-based) is marked present. Void and out-of-range ids
    /// are never present.
    pub fn contains(&self, class: u8) -> bool {
        class != VOID && self.bits.get(class as usize - 1).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, class: u8) {
        if class != VOID {
            self.bits[class as usize - 1] = true;
        }
    }

    /// Sorted list of present class ids.
    pub fn classes(&self) -> Vec<u8> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i + 1) as u8)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &MultiLabel) -> MultiLabel {
        MultiLabel {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    /// Classes present in `self` but not in `other`.
    pub fn difference(&self, other: &MultiLabel) -> Vec<u8> {
        self.classes()
            .into_iter()
            .filter(|&c| !other.contains(c))
            .collect()
    }
}

impl fmt::Display for MultiLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.classes().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Area-weighted label produced by plain CutMix.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabel {
    weights: Vec<f64>,
}

impl SoftLabel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((index, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(0.0..=1.0).contains(*w))
        {
            return Err(Error::ValueOutOfRange {
                value: w as f32,
                index,
            });
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of class `class` (1-based).
    pub fn weight(&self, class: u8) -> f64 {
        if class == VOID {
            return 0.0;
        }
        self.weights.get(class as usize - 1).copied().unwrap_or(0.0)
    }

    /// Hard label marking every class with positive weight.
    pub fn support(&self) -> MultiLabel {
        MultiLabel::from_bits(self.weights.iter().map(|&w| w > 0.0).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PixelData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl PixelData {
    pub fn len(&self) -> usize {
        match self {
            PixelData::U8(v) => v.len(),
            PixelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            PixelData::U8(_) => Dtype::U8,
            PixelData::F32(_) => Dtype::F32,
        }
    }
}

/// `C x H x W` image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRaster {
    channels: usize,
    height: usize,
    width: usize,
    data: PixelData,
}

impl ImageRaster {
    pub fn new(channels: usize, height: usize, width: usize, data: PixelData) -> Result<Self> {
        check_dims("image", &[channels, height, width], data.len())?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, dtype: Dtype) -> Self {
        let n = channels * height * width;
        let data = match dtype {
            Dtype::U8 => PixelData::U8(vec![0; n]),
            Dtype::F32 => PixelData::F32(vec![0.0; n]),
        };
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &PixelData {
        &self.data
    }

    pub fn into_data(self) -> PixelData {
        self.data
    }

    pub(crate) fn same_shape(&self, other: &ImageRaster) -> Result<()> {
        if self.channels != other.channels
            || self.height != other.height
            || self.width != other.width
            || self.dtype() != other.dtype()
        {
            return Err(Error::Geometry(format!(
                "image {}x{}x{} {:?} vs {}x{}x{} {:?}",
                self.channels,
                self.height,
                self.width,
                self.dtype(),
                other.channels,
                other.height,
                other.width,
                other.dtype()
            )));
        }
        Ok(())
    }
}

/// Per-pixel class-id raster; `0` is void.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RefMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RefMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims("reference map", &[height, width], data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        Self {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: u8) {
        self.data[row * self.width + col] = class;
    }

    /// Largest class id in the map (0 for an all-void map).
    pub fn max_class(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(VOID)
    }

    /// Rejects maps holding ids above `num_classes`.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        let max = self.max_class();
        if max as usize > num_classes {
            return Err(Error::ClassOutOfRange {
                class: max as u32,
                num_classes,
                context: None,
            });
        }
        Ok(())
    }

    /// Pixel count per id, indexed `0..=255` (index 0 counts void).
    pub fn histogram(&self) -> [usize; 256] {
        let mut counts = [0usize; 256];
        for &v in &self.data {
            counts[v as usize] += 1;
        }
        counts
    }

    pub(crate) fn same_shape(&self, other: &RefMap) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Geometry(format!(
                "reference map {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// `L x H x W` binary explanation masks, one plane per class. Plane `l - 1`
/// belongs to class `l`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskStack {
    num_classes: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl MaskStack {
    pub fn new(num_classes: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims("mask stack", &[num_classes, height, width], data.len())?;
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(Error::ValueOutOfRange {
                value: data[index] as f32,
                index,
            });
        }
        Ok(Self {
            num_classes,
            height,
            width,
            data,
        })
    }

    pub fn zeros(num_classes: usize, height: usize, width: usize) -> Self {
        Self {
            num_classes,
            height,
            width,
            data: vec![0; num_classes * height * width],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Plane of class `class` (1-based).
    pub fn plane(&self, class: u8) -> &[u8] {
        let n = self.height * self.width;
        let start = (class as usize - 1) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, class: u8) -> &mut [u8] {
        let n = self.height * self.width;
        let start = (class as usize - 1) * n;
        &mut self.data[start..start + n]
    }

    pub(crate) fn same_shape(&self, other: &MaskStack) -> Result<()> {
        if self.num_classes != other.num_classes {
            return Err(Error::ClassCount {
                expected: self.num_classes,
                actual: other.num_classes,
            });
        }
        if self.height != other.height || self.width != other.width {
            return Err(Error::Geometry(format!(
                "mask stack {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// `L x H x W` class relevance heatmaps with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    num_classes: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Heatmap {
    pub fn new(num_classes: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims("heatmap", &[num_classes, height, width], data.len())?;
        // NaN fails the range check too
        if let Some(index) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ValueOutOfRange {
                value: data[index],
                index,
            });
        }
        Ok(Self {
            num_classes,
            height,
            width,
            data,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, class: u8) -> &[f32] {
        let n = self.height * self.width;
        let start = (class as usize - 1) * n;
        &self.data[start..start + n]
    }
}

fn check_dims(what: &str, dims: &[usize], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Geometry(format!("{what} has a zero dimension: {dims:?}")));
    }
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Geometry(format!("{what} dimensions overflow: {dims:?}")))?;
    if expected != len {
        return Err(Error::Geometry(format!(
            "{what} {dims:?} needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// Axis-aligned box `[r_a, r_c) x [r_b, r_d)` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxR {
    r_a: usize,
    r_b: usize,
    r_c: usize,
    r_d: usize,
}

impl BoxR {
    pub fn new(r_a: usize, r_b: usize, r_c: usize, r_d: usize) -> Result<Self> {
        if r_a >= r_c || r_b >= r_d {
            return Err(Error::DegenerateBox(r_a, r_b, r_c, r_d));
        }
        Ok(Self { r_a, r_b, r_c, r_d })
    }

    /// Box covering a whole `height x width` raster.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            r_a: 0,
            r_b: 0,
            r_c: height,
            r_d: width,
        }
    }

    /// Box with top-left corner `(row, col)` and the given extent.
    pub fn at(row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(row, col, row + height, col + width)
    }

    pub fn top(&self) -> usize {
        self.r_a
    }

    pub fn left(&self) -> usize {
        self.r_b
    }

    pub fn bottom(&self) -> usize {
        self.r_c
    }

    pub fn right(&self) -> usize {
        self.r_d
    }

    pub fn corners(&self) -> (usize, usize, usize, usize) {
        (self.r_a, self.r_b, self.r_c, self.r_d)
    }

    pub fn height(&self) -> usize {
        self.r_c - self.r_a
    }

    pub fn width(&self) -> usize {
        self.r_d - self.r_b
    }

    /// Pixel count `(r_c - r_a)(r_d - r_b)`.
    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    /// Area as a fraction of a `height x width` raster.
    pub fn normalized_area(&self, height: usize, width: usize) -> f64 {
        self.area() as f64 / (height * width) as f64
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.r_a..self.r_c).contains(&row) && (self.r_b..self.r_d).contains(&col)
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.r_c <= height && self.r_d <= width
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if !self.fits(height, width) {
            return Err(Error::BoxOutOfBounds {
                box_: *self,
                height,
                width,
            });
        }
        Ok(())
    }

    pub fn same_dims(&self, other: &BoxR) -> bool {
        self.height() == other.height() && self.width() == other.width()
    }
}

impl fmt::Display for BoxR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.r_a, self.r_b, self.r_c, self.r_d)
    }
}

/// `H x W` grid with ones exactly inside `box_`.
pub fn binary_mask(box_: &BoxR, height: usize, width: usize) -> Result<Vec<u8>> {
    box_.check_bounds(height, width)?;
    let mut mask = vec![0u8; height * width];
    for row in box_.top()..box_.bottom() {
        mask[row * width + box_.left()..row * width + box_.right()].fill(1);
    }
    Ok(mask)
}

fn check_box_pair(src_box: &BoxR, dst_box: &BoxR, height: usize, width: usize) -> Result<()> {
    if !src_box.same_dims(dst_box) {
        return Err(Error::BoxDimensionMismatch(*src_box, *dst_box));
    }
    src_box.check_bounds(height, width)?;
    dst_box.check_bounds(height, width)
}

/// Copies the `src_box` rows of `src` into the `dst_box` rows of `dst`. Both
/// planes are `width` pixels wide and the boxes are already validated.
#[inline]
pub(crate) fn copy_box<T: Copy>(src: &[T], dst: &mut [T], width: usize, src_box: &BoxR, dst_box: &BoxR) {
    let w = src_box.width();
    for dy in 0..src_box.height() {
        let s = (src_box.top() + dy) * width + src_box.left();
        let d = (dst_box.top() + dy) * width + dst_box.left();
        dst[d..d + w].copy_from_slice(&src[s..s + w]);
    }
}

/// Zero plane except `dst_box`, which receives `src`'s `src_box` content.
fn shift_plane<T: Copy + Default>(src: &[T], width: usize, src_box: &BoxR, dst_box: &BoxR) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    copy_box(src, &mut out, width, src_box, dst_box);
    out
}

fn shift_planes<T: Copy + Default>(
    src: &[T],
    planes: usize,
    height: usize,
    width: usize,
    src_box: &BoxR,
    dst_box: &BoxR,
) -> Vec<T> {
    let n = height * width;
    let mut out = vec![T::default(); planes * n];
    for p in 0..planes {
        copy_box(&src[p * n..(p + 1) * n], &mut out[p * n..(p + 1) * n], width, src_box, dst_box);
    }
    out
}

/// Rasters that support the box mask `B ⊙ x` and the shift operator `T`.
pub trait BoxContent: Sized {
    fn raster_height(&self) -> usize;
    fn raster_width(&self) -> usize;

    /// Zero everywhere except `dst_box`, which holds the `src_box` content of
    /// `self` verbatim. Applied per channel or plane.
    fn shift_box_content(&self, src_box: &BoxR, dst_box: &BoxR) -> Result<Self>;

    /// `B ⊙ x`: keeps the content inside `box_`, zeroes the rest.
    fn mask_box(&self, box_: &BoxR) -> Result<Self> {
        self.shift_box_content(box_, box_)
    }
}

impl BoxContent for ImageRaster {
    fn raster_height(&self) -> usize {
        self.height
    }

    fn raster_width(&self) -> usize {
        self.width
    }

    fn shift_box_content(&self, src_box: &BoxR, dst_box: &BoxR) -> Result<Self> {
        check_box_pair(src_box, dst_box, self.height, self.width)?;
        let (c, h, w) = (self.channels, self.height, self.width);
        let data = match &self.data {
            PixelData::U8(v) => PixelData::U8(shift_planes(v, c, h, w, src_box, dst_box)),
            PixelData::F32(v) => PixelData::F32(shift_planes(v, c, h, w, src_box, dst_box)),
        };
        Ok(Self {
            channels: c,
            height: h,
            width: w,
            data,
        })
    }
}

impl BoxContent for RefMap {
    fn raster_height(&self) -> usize {
        self.height
    }

    fn raster_width(&self) -> usize {
        self.width
    }

    fn shift_box_content(&self, src_box: &BoxR, dst_box: &BoxR) -> Result<Self> {
        check_box_pair(src_box, dst_box, self.height, self.width)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: shift_plane(&self.data, self.width, src_box, dst_box),
        })
    }
}

impl BoxContent for MaskStack {
    fn raster_height(&self) -> usize {
        self.height
    }

    fn raster_width(&self) -> usize {
        self.width
    }

    fn shift_box_content(&self, src_box: &BoxR, dst_box: &BoxR) -> Result<Self> {
        check_box_pair(src_box, dst_box, self.height, self.width)?;
        Ok(Self {
            num_classes: self.num_classes,
            height: self.height,
            width: self.width,
            data: shift_planes(&self.data, self.num_classes, self.height, self.width, src_box, dst_box),
        })
    }
}

/// Outcome of [`validate_pair`]. Empty means the map and label agree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Classes with pixels in the map that the label does not mark.
    pub unlabeled: Vec<u8>,
    /// Classes marked by the label that have no pixel in the map.
    pub missing: Vec<u8>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.unlabeled.is_empty() && self.missing.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.unlabeled {
            out.push(format!("class {c} unlabeled at image level"));
        }
        for c in &self.missing {
            out.push(format!("class {c} has no pixels"));
        }
        out
    }
}

/// Cross-checks a reference map against its image-level label.
pub fn validate_pair(map: &RefMap, label: &MultiLabel) -> Result<ValidationReport> {
    map.check_classes(label.num_classes())?;
    let hist = map.histogram();
    let mut report = ValidationReport::default();
    for (class, &count) in hist.iter().enumerate().take(label.num_classes() + 1).skip(1) {
        let on_map = count > 0;
        let labeled = label.contains(class as u8);
        if on_map && !labeled {
            report.unlabeled.push(class as u8);
        } else if labeled && !on_map {
            report.missing.push(class as u8);
        }
    }
    Ok(report)
}
