use rand::Rng;
use serde::{Deserialize, Serialize};

use super::segments::{neighbors4, segments};
use crate::error::{Error, Result};
use crate::raster::{MultiLabel, RefMap, VOID};

/// How [`segment_swap`] relocated a segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMove {
    pub class: u8,
    /// Pixels in the removed segment, and in the stamped blob.
    pub pixels: usize,
    /// Class written into the vacated pixels.
    pub fill: u8,
    /// `(row, col)` where the blob growth started.
    pub origin: (usize, usize),
}

/// Most frequent non-void value among pixels bordering `members`, falling
/// back to void. Ties go to the lower id.
fn bordering_mode(map: &RefMap, in_segment: &[bool], members: &[usize]) -> u8 {
    let (h, w) = (map.height(), map.width());
    let mut counts = [0usize; 256];
    for &idx in members {
        for n in neighbors4(idx, h, w) {
            if !in_segment[n] {
                counts[map.data()[n] as usize] += 1;
            }
        }
    }
    (1..256)
        .filter(|&v| counts[v] > 0)
        .max_by_key(|&v| (counts[v], std::cmp::Reverse(v)))
        .map_or(VOID, |v| v as u8)
}

/// Grows a connected blob of `size` pixels from `origin` with a random walk
/// that prefers unvisited neighbors. When the walker is boxed in it restarts
/// from a random blob pixel.
fn random_blob<R: Rng + ?Sized>(height: usize, width: usize, origin: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let mut in_blob = vec![false; height * width];
    let mut blob = vec![origin];
    in_blob[origin] = true;
    let mut walker = origin;
    let mut fresh = Vec::with_capacity(4);
    while blob.len() < size {
        fresh.clear();
        fresh.extend(neighbors4(walker, height, width).filter(|&n| !in_blob[n]));
        if fresh.is_empty() {
            walker = blob[rng.random_range(0..blob.len() as u32) as usize];
            continue;
        }
        walker = fresh[rng.random_range(0..fresh.len() as u32) as usize];
        in_blob[walker] = true;
        blob.push(walker);
    }
    blob
}

/// Removes one uniformly chosen segment, fills the hole with the most common
/// bordering class, and stamps a random connected blob of the same size and
/// class at a location outside the old segment.
pub fn segment_swap<R: Rng + ?Sized>(map: &RefMap, rng: &mut R) -> Result<(RefMap, SegmentMove)> {
    let (h, w) = (map.height(), map.width());
    let first = map.data()[0];
    if map.data().iter().all(|&v| v == first) {
        return Err(Error::Noise("segment swap needs a map with at least two distinct values".into()));
    }
    let segs = segments(map);
    // a non-uniform map always has a non-void segment
    let seg = &segs[rng.random_range(0..segs.len() as u32) as usize];

    let mut in_segment = vec![false; h * w];
    for &idx in &seg.pixels {
        in_segment[idx] = true;
    }
    let fill = bordering_mode(map, &in_segment, &seg.pixels);
    let mut out = map.clone();
    for &idx in &seg.pixels {
        out.data_mut()[idx] = fill;
    }

    let outside: Vec<usize> = (0..h * w).filter(|&i| !in_segment[i]).collect();
    let origin = outside[rng.random_range(0..outside.len() as u32) as usize];
    for idx in random_blob(h, w, origin, seg.pixels.len(), rng) {
        out.data_mut()[idx] = seg.class;
    }
    Ok((
        out,
        SegmentMove {
            class: seg.class,
            pixels: seg.pixels.len(),
            fill,
            origin: (origin / w, origin % w),
        },
    ))
}

/// One reassigned segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwappedSegment {
    /// First pixel of the segment in row-major order, as `(row, col)`.
    pub at: (usize, usize),
    pub pixels: usize,
    pub from: u8,
    pub to: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSwapOutcome {
    pub maps: Vec<RefMap>,
    pub labels: Vec<MultiLabel>,
    /// Reassignments per map, in map order.
    pub swaps: Vec<Vec<SwappedSegment>>,
}

impl ClassSwapOutcome {
    pub fn swapped_count(&self) -> usize {
        self.swaps.iter().map(Vec::len).sum()
    }
}

/// Reassigns each segment of every map, independently with probability `f`,
/// to a uniformly drawn different class in `1..=num_classes`. Image-level
/// labels drop classes that vanished from a map and gain the new ones.
pub fn class_swap<R: Rng + ?Sized>(
    maps: &[RefMap],
    labels: &[MultiLabel],
    num_classes: usize,
    f: f64,
    rng: &mut R,
) -> Result<ClassSwapOutcome> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Noise(format!("fraction f = {f} outside [0, 1]")));
    }
    if maps.len() != labels.len() {
        return Err(Error::Noise(format!("{} maps but {} labels", maps.len(), labels.len())));
    }
    if f > 0.0 && num_classes < 2 {
        return Err(Error::Noise("class swap needs at least two classes".into()));
    }
    // segment census first, then reassignment
    let census: Vec<_> = maps.iter().map(segments).collect();

    let mut out_maps = Vec::with_capacity(maps.len());
    let mut out_labels = Vec::with_capacity(maps.len());
    let mut all_swaps = Vec::with_capacity(maps.len());
    for ((map, label), segs) in maps.iter().zip(labels).zip(&census) {
        map.check_classes(num_classes)?;
        let mut out = map.clone();
        let mut swaps = Vec::new();
        for seg in segs {
            if !rng.random_bool(f) {
                continue;
            }
            // uniform over the other num_classes - 1 ids
            let mut to = rng.random_range(1..num_classes as u32) as u8;
            if to >= seg.class {
                to += 1;
            }
            for &idx in &seg.pixels {
                out.data_mut()[idx] = to;
            }
            let first = seg.pixels[0];
            swaps.push(SwappedSegment {
                at: (first / map.width(), first % map.width()),
                pixels: seg.pixels.len(),
                from: seg.class,
                to,
            });
        }
        let mut new_label = label.clone();
        if !swaps.is_empty() {
            let (before, after) = (map.histogram(), out.histogram());
            let mut bits = label.bits().to_vec();
            for class in 1..=num_classes {
                if before[class] > 0 && after[class] == 0 {
                    bits[class - 1] = false;
                } else if after[class] > 0 {
                    bits[class - 1] = bits[class - 1] || before[class] == 0;
                }
            }
            new_label = MultiLabel::from_bits(bits);
        }
        out_maps.push(out);
        out_labels.push(new_label);
        all_swaps.push(swaps);
    }
    Ok(ClassSwapOutcome {
        maps: out_maps,
        labels: out_labels,
        swaps: all_swaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutmix::readout_phi;
    use crate::rng::{stream, Purpose};

    fn rng(seed: u64) -> crate::rng::StreamRng {
        stream(seed, Purpose::NoiseKernel, &[])
    }

    fn centroid(map: &RefMap, class: u8) -> (f64, f64) {
        let mut sum = (0.0, 0.0);
        let mut n = 0.0;
        for r in 0..map.height() {
            for c in 0..map.width() {
                if map.get(r, c) == class {
                    sum.0 += r as f64;
                    sum.1 += c as f64;
                    n += 1.0;
                }
            }
        }
        (sum.0 / n, sum.1 / n)
    }

    /// 20x20 map: class 1 left, class 3 right, and a 10-pixel class-2
    /// segment (2x5) straddling the border.
    fn two_region_map() -> RefMap {
        let mut m = RefMap::filled(20, 20, 1);
        for r in 0..20 {
            for c in 10..20 {
                m.set(r, c, 3);
            }
        }
        for r in 4..6 {
            for c in 8..13 {
                m.set(r, c, 2);
            }
        }
        m
    }

    #[test]
    fn segment_swap_preserves_count_and_moves_class() {
        let m = two_region_map();
        let before = centroid(&m, 2);
        let mut moved_class_2 = 0;
        for seed in 0..100 {
            let (out, mv) = segment_swap(&m, &mut rng(seed)).unwrap();
            let hist = out.histogram();
            if mv.class == 2 {
                moved_class_2 += 1;
                assert_eq!(mv.pixels, 10);
                assert_eq!(hist[2], 10, "seed {seed}");
                assert_ne!(centroid(&out, 2), before);
                // the vacated pixels hold one of the bordering classes
                for r in 4..6 {
                    for c in 8..13 {
                        let v = out.get(r, c);
                        assert!(v == 1 || v == 3 || v == 2, "vacated pixel got {v}");
                    }
                }
                assert!(mv.fill == 1 || mv.fill == 3);
                // relocation never deletes a class
                assert_eq!(readout_phi(&out, 3).unwrap(), readout_phi(&m, 3).unwrap());
            }
        }
        assert!(moved_class_2 > 0);
    }

    #[test]
    fn vacated_region_uses_neighbourhood_fill() {
        // oracle: hole filled with the mode of the 4-neighbors bordering the
        // removed segment; here the single class-2 pixel is surrounded by 5s
        let mut m = RefMap::filled(9, 9, 5);
        m.set(4, 4, 2);
        for seed in 0..20 {
            let (out, mv) = segment_swap(&m, &mut rng(seed)).unwrap();
            if mv.class == 2 {
                assert_eq!(mv.fill, 5);
                assert_eq!(out.histogram()[2], 1);
            } else {
                // the class-5 ring borders only class 2
                assert_eq!(mv.fill, 2);
            }
        }
    }

    #[test]
    fn segment_swap_rejects_uniform_maps() {
        assert!(segment_swap(&RefMap::filled(4, 4, 1), &mut rng(1)).is_err());
    }

    #[test]
    fn blob_is_connected_and_sized() {
        let mut r = rng(4);
        for size in [1, 7, 50, 399, 400] {
            let blob = random_blob(20, 20, 210, size, &mut r);
            assert_eq!(blob.len(), size);
            let mut map = RefMap::filled(20, 20, 0);
            for idx in &blob {
                map.data_mut()[*idx] = 1;
            }
            assert_eq!(segments(&map).len(), 1);
        }
    }

    #[test]
    fn class_swap_zero_fraction_is_identity() {
        let maps = vec![two_region_map(); 3];
        let labels: Vec<_> = maps.iter().map(|m| readout_phi(m, 3).unwrap()).collect();
        let out = class_swap(&maps, &labels, 3, 0.0, &mut rng(1)).unwrap();
        assert_eq!(out.maps, maps);
        assert_eq!(out.labels, labels);
        assert_eq!(out.swapped_count(), 0);
    }

    #[test]
    fn class_swap_full_fraction_single_segment() {
        let maps = vec![RefMap::filled(6, 6, 1)];
        let labels = vec![MultiLabel::from_classes(3, [1u8]).unwrap()];
        let mut outcomes = [false; 4];
        for seed in 0..50 {
            let out = class_swap(&maps, &labels, 3, 1.0, &mut rng(seed)).unwrap();
            let to = out.swaps[0][0].to;
            assert!(to == 2 || to == 3);
            assert_eq!(out.maps[0], RefMap::filled(6, 6, to));
            assert_eq!(out.labels[0].classes(), vec![to]);
            outcomes[to as usize] = true;
        }
        assert!(outcomes[2] && outcomes[3]);
    }

    #[test]
    fn class_swap_keeps_label_only_classes() {
        // class 3 is labeled but has no pixels; swapping class 1 to 2 keeps it
        let maps = vec![RefMap::filled(3, 3, 1)];
        let labels = vec![MultiLabel::from_classes(3, [1u8, 3]).unwrap()];
        for seed in 0..20 {
            let out = class_swap(&maps, &labels, 3, 1.0, &mut rng(seed)).unwrap();
            let to = out.swaps[0][0].to;
            let mut expected = vec![to, 3];
            expected.sort_unstable();
            expected.dedup();
            assert_eq!(out.labels[0].classes(), expected);
        }
    }
}
