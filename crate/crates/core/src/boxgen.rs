//! Constrained random boxes: corners drawn uniformly on the integer grid and
//! rejected until the normalized area lands inside the requested range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BoxR;

/// Draws allowed per [`gen_boxes`] call before giving up.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

/// Allowed normalized box area `[a_min, a_max]`, as fractions of `H * W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BoxSizeRange {
    a_min: f64,
    a_max: f64,
}

impl BoxSizeRange {
    pub fn new(a_min: f64, a_max: f64) -> Result<Self> {
        if !(a_min > 0.0 && a_min <= a_max && a_max <= 1.0) {
            return Err(Error::InvalidRange { a_min, a_max });
        }
        Ok(Self { a_min, a_max })
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    /// Whether a box of `area` pixels on a raster of `total` pixels is allowed.
    pub fn accepts_area(&self, area: usize, total: usize) -> bool {
        let a = area as f64 / total as f64;
        self.a_min <= a && a <= self.a_max
    }

    pub fn accepts(&self, box_: &BoxR, height: usize, width: usize) -> bool {
        self.accepts_area(box_.area(), height * width)
    }

    /// Whether some integer `h x w` box fits `height x width` with an allowed
    /// area.
    pub fn is_feasible(&self, height: usize, width: usize) -> bool {
        let total = height * width;
        (1..=height).any(|h| {
            let target = self.a_min * total as f64 / h as f64;
            // start just below the analytic bound and walk up with the exact predicate
            let mut w = (target.ceil() as usize).saturating_sub(1).max(1);
            while w <= width && ((h * w) as f64 / total as f64) < self.a_min {
                w += 1;
            }
            w <= width && self.accepts_area(h * w, total)
        })
    }
}

impl std::fmt::Display for BoxSizeRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.a_min, self.a_max)
    }
}

impl std::str::FromStr for BoxSizeRange {
    type Err = Error;

    /// Parses `"0.3-0.7"` or `"0.3,0.7"`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(['-', ','])
            .ok_or_else(|| Error::Config(format!("box range {s:?}: expected A_MIN-A_MAX")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("box range {s:?}: {e}")))
        };
        Self::new(parse(lo)?, parse(hi)?)
    }
}

impl TryFrom<String> for BoxSizeRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BoxSizeRange> for String {
    fn from(r: BoxSizeRange) -> String {
        r.to_string()
    }
}

fn draw_candidate<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> (usize, usize, usize, usize) {
    let ra = rng.random_range(0..=height as u32) as usize;
    let rc = rng.random_range(0..=height as u32) as usize;
    let rb = rng.random_range(0..=width as u32) as usize;
    let rd = rng.random_range(0..=width as u32) as usize;
    (ra.min(rc), rb.min(rd), ra.max(rc), rb.max(rd))
}

/// Generates `count` boxes whose normalized areas fall in `range`.
///
/// Each candidate samples two row coordinates from `[0, H]` and two column
/// coordinates from `[0, W]`, orders them into corners, and is redrawn until
/// it satisfies the range.
pub fn gen_boxes<R: Rng + ?Sized>(
    range: &BoxSizeRange,
    count: usize,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<Vec<BoxR>> {
    if count == 0 {
        return Err(Error::Config("box count must be at least 1".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::Geometry(format!("raster {height}x{width} is empty")));
    }
    if !range.is_feasible(height, width) {
        return Err(Error::InfeasibleRange {
            a_min: range.a_min,
            a_max: range.a_max,
            height,
            width,
        });
    }
    let total = height * width;
    let mut boxes = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while boxes.len() < count {
        if attempts == MAX_ATTEMPTS {
            return Err(Error::ResampleCapExceeded {
                attempts,
                accepted: boxes.len(),
                requested: count,
                a_min: range.a_min,
                a_max: range.a_max,
                height,
                width,
            });
        }
        attempts += 1;
        let (ra, rb, rc, rd) = draw_candidate(rng, height, width);
        if range.accepts_area((rc - ra) * (rd - rb), total) {
            boxes.push(BoxR::new(ra, rb, rc, rd)?);
        }
    }
    Ok(boxes)
}

/// A box with the same extent as `box_`, placed uniformly over all positions
/// where it fits.
pub fn sample_partner_box<R: Rng + ?Sized>(
    box_: &BoxR,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<BoxR> {
    box_.check_bounds(height, width)?;
    let (bh, bw) = (box_.height(), box_.width());
    let top = rng.random_range(0..=(height - bh) as u32) as usize;
    let left = rng.random_range(0..=(width - bw) as u32) as usize;
    BoxR::at(top, left, bh, bw)
}
