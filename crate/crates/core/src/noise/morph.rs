use rand::Rng;
use serde::{Deserialize, Serialize};

use super::segments::neighbors4;
use crate::error::{Error, Result};
use crate::raster::{RefMap, VOID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Grows `class` by `iterations` steps of the 3x3 cross element, overwriting
/// whatever the new pixels held.
pub fn dilate(map: &RefMap, class: u8, iterations: usize) -> RefMap {
    let (h, w) = (map.height(), map.width());
    let mut cur = map.clone();
    let mut grow = Vec::new();
    for _ in 0..iterations {
        grow.clear();
        let data = cur.data();
        for idx in 0..h * w {
            if data[idx] != class && neighbors4(idx, h, w).any(|n| data[n] == class) {
                grow.push(idx);
            }
        }
        if grow.is_empty() {
            break;
        }
        let data = cur.data_mut();
        for &idx in &grow {
            data[idx] = class;
        }
    }
    cur
}

/// Shrinks `class` by `iterations` steps of the 3x3 cross element. Pixels
/// outside the raster count as `class`, so segments do not erode from the
/// image edge. Each removed pixel takes the most frequent non-void class
/// among its neighbors (lowest id on ties), or void when there is none.
pub fn erode(map: &RefMap, class: u8, iterations: usize) -> RefMap {
    let (h, w) = (map.height(), map.width());
    let mut cur = map.clone();
    let mut ceded: Vec<(usize, u8)> = Vec::new();
    for _ in 0..iterations {
        ceded.clear();
        let data = cur.data();
        for idx in 0..h * w {
            if data[idx] != class || neighbors4(idx, h, w).all(|n| data[n] == class) {
                continue;
            }
            let mut counts = [0u8; 256];
            for n in neighbors4(idx, h, w) {
                let v = data[n];
                if v != class && v != VOID {
                    counts[v as usize] += 1;
                }
            }
            let fill = (1..256)
                .filter(|&v| counts[v] > 0)
                .max_by_key(|&v| (counts[v], std::cmp::Reverse(v)))
                .map_or(VOID, |v| v as u8);
            ceded.push((idx, fill));
        }
        if ceded.is_empty() {
            break;
        }
        let data = cur.data_mut();
        for &(idx, fill) in &ceded {
            data[idx] = fill;
        }
    }
    cur
}

/// Dilates or erodes (fair coin) one uniformly chosen non-void class.
pub fn dilate_erode<R: Rng + ?Sized>(map: &RefMap, iterations: usize, rng: &mut R) -> Result<(RefMap, u8, MorphOp)> {
    let hist = map.histogram();
    let classes: Vec<u8> = (1..256).filter(|&v| hist[v] > 0).map(|v| v as u8).collect();
    if classes.is_empty() {
        return Err(Error::Noise("dilation/erosion needs a map with a non-void class".into()));
    }
    let class = classes[rng.random_range(0..classes.len() as u32) as usize];
    let op = if rng.random_bool(0.5) { MorphOp::Dilate } else { MorphOp::Erode };
    let out = match op {
        MorphOp::Dilate => dilate(map, class, iterations),
        MorphOp::Erode => erode(map, class, iterations),
    };
    Ok((out, class, op))
}
