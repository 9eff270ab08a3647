//! 4-connected class segments and per-class IoU between maps.

use serde::Serialize;

use crate::error::Result;
use crate::raster::{RefMap, VOID};

/// One 4-connected component of equal, non-void class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub class: u8,
    /// Flat pixel indices in scan order of discovery.
    pub pixels: Vec<usize>,
}

/// In-bounds 4-neighbors of flat index `idx`.
#[inline]
pub(crate) fn neighbors4(idx: usize, height: usize, width: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (idx / width, idx % width);
    [
        (r > 0).then(|| idx - width),
        (r + 1 < height).then(|| idx + width),
        (c > 0).then(|| idx - 1),
        (c + 1 < width).then(|| idx + 1),
    ]
    .into_iter()
    .flatten()
}

/// All non-void segments, ordered by their first pixel in row-major order.
pub fn segments(map: &RefMap) -> Vec<Segment> {
    let (h, w) = (map.height(), map.width());
    let data = map.data();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = Vec::new();
    for start in 0..h * w {
        if seen[start] || data[start] == VOID {
            continue;
        }
        let class = data[start];
        seen[start] = true;
        queue.clear();
        queue.push(start);
        let mut head = 0;
        while head < queue.len() {
            let idx = queue[head];
            head += 1;
            for n in neighbors4(idx, h, w) {
                if !seen[n] && data[n] == class {
                    seen[n] = true;
                    queue.push(n);
                }
            }
        }
        out.push(Segment {
            class,
            pixels: queue.clone(),
        });
    }
    out
}

/// Per-class IoU between a clean and a corrupted map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapIou {
    /// Entry `l - 1` is the IoU of class `l`, `None` when neither map has it.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes present in either map; 1.0 when both maps are void.
    pub mean: f64,
}

pub fn map_iou(clean: &RefMap, noisy: &RefMap, num_classes: usize) -> Result<MapIou> {
    clean.same_shape(noisy)?;
    clean.check_classes(num_classes)?;
    noisy.check_classes(num_classes)?;
    let mut inter = vec![0usize; num_classes + 1];
    let mut union = vec![0usize; num_classes + 1];
    for (&a, &b) in clean.data().iter().zip(noisy.data()) {
        if a == b {
            inter[a as usize] += 1;
            union[a as usize] += 1;
        } else {
            union[a as usize] += 1;
            union[b as usize] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (1..=num_classes)
        .map(|l| (union[l] > 0).then(|| inter[l] as f64 / union[l] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(MapIou { per_class, mean })
}
