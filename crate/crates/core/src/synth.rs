//! Synthetic datasets with known geometry for tests, audits and demos.

use rand::Rng;

use crate::cutmix::{readout_phi, Sample};
use crate::raster::{Heatmap, ImageRaster, MaskStack, MultiLabel, PixelData, RefMap};
use crate::rng::{stream, Purpose};
use crate::xai::threshold_heatmaps;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    /// Voronoi sites per map, drawn uniformly from this inclusive range.
    pub sites: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 120,
            width: 120,
            channels: 3,
            num_classes: 6,
            sites: (2, 5),
        }
    }
}

/// Nearest-site class map: a handful of random sites, each with a random class.
pub fn voronoi_map<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> RefMap {
    let k = rng.random_range(cfg.sites.0 as u32..=cfg.sites.1 as u32) as usize;
    let sites: Vec<(f64, f64, u8)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.0..cfg.height as f64),
                rng.random_range(0.0..cfg.width as f64),
                rng.random_range(1..=cfg.num_classes as u32) as u8,
            )
        })
        .collect();
    let mut map = RefMap::filled(cfg.height, cfg.width, 0);
    for r in 0..cfg.height {
        for c in 0..cfg.width {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let nearest = sites
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - y).powi(2) + (a.1 - x).powi(2);
                    let db = (b.0 - y).powi(2) + (b.1 - x).powi(2);
                    da.total_cmp(&db)
                })
                .expect("at least one site");
            map.set(r, c, nearest.2);
        }
    }
    map
}

pub fn synthetic_maps(cfg: &SynthConfig, n: usize, seed: u64) -> Vec<RefMap> {
    (0..n)
        .map(|i| voronoi_map(cfg, &mut stream(seed, Purpose::Synth, &[i as u64])))
        .collect()
}

/// 8-bit image whose pixels encode the map class plus a little jitter.
pub fn image_for_map<R: Rng + ?Sized>(map: &RefMap, channels: usize, rng: &mut R) -> ImageRaster {
    let n = map.height() * map.width();
    let mut data = vec![0u8; channels * n];
    for ch in 0..channels {
        for (i, &class) in map.data().iter().enumerate() {
            let base = (class as usize * 41 + ch * 67) % 200;
            data[ch * n + i] = (base + rng.random_range(0..56u32) as usize) as u8;
        }
    }
    ImageRaster::new(channels, map.height(), map.width(), PixelData::U8(data)).expect("consistent dims")
}

/// Heatmap that is high on a class's pixels and low elsewhere.
pub fn heatmap_for_map<R: Rng + ?Sized>(map: &RefMap, num_classes: usize, rng: &mut R) -> Heatmap {
    let n = map.height() * map.width();
    let mut data = vec![0f32; num_classes * n];
    for class in 1..=num_classes {
        let plane = &mut data[(class - 1) * n..class * n];
        for (v, &m) in plane.iter_mut().zip(map.data()) {
            *v = if m as usize == class {
                rng.random_range(0.3f32..=1.0)
            } else {
                rng.random_range(0.0f32..0.12)
            };
        }
    }
    Heatmap::new(num_classes, map.height(), map.width(), data).expect("consistent dims")
}

/// Samples with images, maps, map-derived labels, and masks thresholded from
/// synthetic heatmaps at `t_cam`.
pub fn synthetic_samples(cfg: &SynthConfig, n: usize, seed: u64, t_cam: f32) -> Vec<Sample> {
    synthetic_maps(cfg, n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, map)| {
            let mut rng = stream(seed, Purpose::Synth, &[i as u64, 1]);
            let label = readout_phi(&map, cfg.num_classes).expect("ids within range");
            let image = image_for_map(&map, cfg.channels, &mut rng);
            let heat = heatmap_for_map(&map, cfg.num_classes, &mut rng);
            let masks: MaskStack = threshold_heatmaps(&heat, &label, t_cam).expect("valid heatmap");
            Sample {
                id: format!("s{i:05}"),
                image,
                label,
                map: Some(map),
                masks: Some(masks),
            }
        })
        .collect()
}

/// Audit fixture: every map is background class 1; every other sample also
/// holds class 2 in a top-left square covering about `corner_fraction` of the
/// image.
pub fn corner_class_samples(height: usize, width: usize, n: usize, corner_fraction: f64) -> Vec<Sample> {
    let side_r = ((corner_fraction.sqrt() * height as f64).round() as usize).clamp(1, height);
    let side_c = ((corner_fraction.sqrt() * width as f64).round() as usize).clamp(1, width);
    (0..n)
        .map(|i| {
            let mut map = RefMap::filled(height, width, 1);
            if i % 2 == 0 {
                for r in 0..side_r {
                    for c in 0..side_c {
                        map.set(r, c, 2);
                    }
                }
            }
            let label = readout_phi(&map, 2).expect("ids within range");
            let mut rng = stream(0, Purpose::Synth, &[i as u64]);
            Sample {
                id: format!("c{i:05}"),
                image: image_for_map(&map, 1, &mut rng),
                label,
                map: Some(map),
                masks: None,
            }
        })
        .collect()
}

/// Every map is a single class covering the whole image; all samples share it.
pub fn full_cover_samples(height: usize, width: usize, n: usize, class: u8, num_classes: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let map = RefMap::filled(height, width, class);
            let mut rng = stream(1, Purpose::Synth, &[i as u64]);
            Sample {
                id: format!("f{i:05}"),
                image: image_for_map(&map, 1, &mut rng),
                label: MultiLabel::from_classes(num_classes, [class]).expect("class within range"),
                map: Some(map),
                masks: None,
            }
        })
        .collect()
}
