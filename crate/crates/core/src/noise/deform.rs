use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{BoxR, RefMap, VOID};

/// Smallest deformation box, as a fraction of the map area.
pub const DEFORM_AREA_MIN: f64 = 0.01;
/// Largest deformation box, as a fraction of the map area.
pub const DEFORM_AREA_MAX: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeformBox {
    #[serde(rename = "box")]
    pub box_: BoxR,
    /// Class the box was flattened to; `None` when it covered a single class.
    pub assigned: Option<u8>,
}

fn random_box<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Result<BoxR> {
    let fraction = rng.random_range(DEFORM_AREA_MIN..=DEFORM_AREA_MAX);
    let target = fraction * (height * width) as f64;
    // aspect ratio within 1:4 .. 4:1 where the raster allows it
    let lo = ((target / width as f64).ceil() as usize)
        .max((target / 4.0).sqrt().ceil() as usize)
        .clamp(1, height);
    let hi = ((target * 4.0).sqrt().floor() as usize).clamp(lo, height);
    let bh = rng.random_range(lo as u32..=hi as u32) as usize;
    let bw = ((target / bh as f64).round() as usize).clamp(1, width);
    let top = rng.random_range(0..=(height - bh) as u32) as usize;
    let left = rng.random_range(0..=(width - bw) as u32) as usize;
    BoxR::at(top, left, bh, bw)
}

/// Places `n_boxes` random boxes (1-5% of the map each) one after another. A
/// box covering two or more non-void classes is filled with one of them,
/// chosen uniformly; a box inside a single class leaves the map unchanged.
pub fn border_deformation<R: Rng + ?Sized>(map: &RefMap, n_boxes: usize, rng: &mut R) -> Result<(RefMap, Vec<DeformBox>)> {
    let (h, w) = (map.height(), map.width());
    let mut out = map.clone();
    let mut placed = Vec::with_capacity(n_boxes);
    for _ in 0..n_boxes {
        let b = random_box(h, w, rng)?;
        let mut present = [false; 256];
        for r in b.top()..b.bottom() {
            for &v in &out.data()[r * w + b.left()..r * w + b.right()] {
                present[v as usize] = true;
            }
        }
        let classes: Vec<u8> = (1..256).filter(|&v| present[v]).map(|v| v as u8).collect();
        let assigned = if classes.len() >= 2 {
            let class = classes[rng.random_range(0..classes.len() as u32) as usize];
            for r in b.top()..b.bottom() {
                out.data_mut()[r * w + b.left()..r * w + b.right()].fill(class);
            }
            Some(class)
        } else {
            None
        };
        debug_assert!(assigned != Some(VOID));
        placed.push(DeformBox { box_: b, assigned });
    }
    Ok((out, placed))
}
