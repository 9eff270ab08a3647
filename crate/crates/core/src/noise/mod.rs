//! Reference-map corruption simulators.
//!
//! Six kinds of noise are supported. The first five corrupt a fixed fraction
//! `f` of the maps, chosen by a seeded shuffle; class swap instead touches a
//! fraction `f` of all segments across the dataset and updates the
//! image-level labels to match.

mod deform;
mod morph;
mod segments;
mod shift;
mod swap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use deform::{border_deformation, DeformBox, DEFORM_AREA_MAX, DEFORM_AREA_MIN};
pub use morph::{dilate, dilate_erode, erode, MorphOp};
pub use segments::{map_iou, segments, MapIou, Segment};
pub use shift::{mask_shift, rectify_borders, shift_map, Direction};
pub use swap::{class_swap, segment_swap, ClassSwapOutcome, SegmentMove, SwappedSegment};

use crate::error::{Error, Result};
use crate::raster::{MultiLabel, RefMap};
use crate::rng::{stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    MaskShift,
    DilationErosion,
    RectifyBorders,
    BorderDeformation,
    SegmentSwap,
    ClassSwap,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::MaskShift,
        NoiseKind::DilationErosion,
        NoiseKind::RectifyBorders,
        NoiseKind::BorderDeformation,
        NoiseKind::SegmentSwap,
        NoiseKind::ClassSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::MaskShift => "mask_shift",
            NoiseKind::DilationErosion => "dilation_erosion",
            NoiseKind::RectifyBorders => "rectify_borders",
            NoiseKind::BorderDeformation => "border_deformation",
            NoiseKind::SegmentSwap => "segment_swap",
            NoiseKind::ClassSwap => "class_swap",
        }
    }

    /// Whether the kind takes a magnitude parameter.
    pub fn has_magnitude(self) -> bool {
        !matches!(self, NoiseKind::SegmentSwap | NoiseKind::ClassSwap)
    }

    /// Magnitude used when none is given: 12 px shift (10% of a 120 px
    /// side), 12 morphology iterations, downsampling by 2, 5 boxes.
    pub fn default_magnitude(self) -> Option<usize> {
        match self {
            NoiseKind::MaskShift => Some(12),
            NoiseKind::DilationErosion => Some(12),
            NoiseKind::RectifyBorders => Some(2),
            NoiseKind::BorderDeformation => Some(5),
            NoiseKind::SegmentSwap | NoiseKind::ClassSwap => None,
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise kind {s:?}")))
    }
}

/// Which noise to apply, to what fraction, and how strongly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Fraction of maps (or, for class swap, of segments) affected.
    pub f: f64,
    /// Max shift in pixels, morphology iterations, downsample factor or box
    /// count, depending on `kind`.
    pub magnitude: Option<usize>,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, f: f64, magnitude: Option<usize>) -> Result<Self> {
        let spec = Self {
            kind,
            f,
            magnitude: magnitude.or(kind.default_magnitude()),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f) {
            return Err(Error::Noise(format!("fraction f = {} outside [0, 1]", self.f)));
        }
        if self.kind.has_magnitude() {
            match self.magnitude {
                Some(m) if m >= 1 => {}
                Some(m) => return Err(Error::Noise(format!("{} magnitude must be positive, got {m}", self.kind))),
                None => return Err(Error::Noise(format!("{} needs a magnitude", self.kind))),
            }
        }
        Ok(())
    }

    fn magnitude_or_default(&self) -> usize {
        self.magnitude.or(self.kind.default_magnitude()).unwrap_or(0)
    }
}

/// Parameters drawn when corrupting one map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseParams {
    MaskShift {
        direction: Direction,
        shift: usize,
    },
    DilationErosion {
        class: u8,
        op: MorphOp,
        iterations: usize,
    },
    RectifyBorders {
        factor: usize,
    },
    BorderDeformation {
        boxes: Vec<DeformBox>,
    },
    SegmentSwap(SegmentMove),
    ClassSwap {
        swaps: Vec<SwappedSegment>,
    },
    /// The map was selected but the kernel cannot act on it.
    Unchanged {
        reason: String,
    },
}

/// One manifest line: which map was corrupted and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub id: String,
    #[serde(flatten)]
    pub params: NoiseParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseOutcome {
    pub maps: Vec<RefMap>,
    pub labels: Vec<MultiLabel>,
    /// Records in dataset order.
    pub records: Vec<NoiseRecord>,
}

impl NoiseOutcome {
    /// Manifest as line-delimited JSON.
    pub fn manifest_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("noise record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Number of maps corrupted for fraction `f` of `n` maps.
pub fn selection_count(f: f64, n: usize) -> usize {
    // guard against 0.29 * 100 = 28.999...
    ((f * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Indices of the maps picked for corruption, ascending.
pub fn select_maps(f: f64, n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::NoiseSelect, &[n as u64]));
    let mut picked = order[..selection_count(f, n)].to_vec();
    picked.sort_unstable();
    picked
}

/// Why a selected map cannot be corrupted by `kind`, if it cannot.
fn kernel_blocker(kind: NoiseKind, map: &RefMap) -> Option<&'static str> {
    let hist = map.histogram();
    let distinct = hist.iter().filter(|&&n| n > 0).count();
    match kind {
        NoiseKind::DilationErosion if hist[1..].iter().all(|&n| n == 0) => Some("map is all void"),
        NoiseKind::SegmentSwap if distinct < 2 => Some("map holds a single value"),
        _ => None,
    }
}

/// Corrupts a dataset of reference maps.
///
/// `ids`, `maps` and `labels` are parallel slices. Map kernels run
/// concurrently; each map draws from its own stream keyed by `(seed, index)`,
/// so the outcome does not depend on scheduling. Selected maps a kernel
/// cannot act on (all-void for dilation/erosion, a single value for segment
/// swap) are kept and recorded as [`NoiseParams::Unchanged`].
pub fn apply_noise_suite(
    ids: &[String],
    maps: &[RefMap],
    labels: &[MultiLabel],
    num_classes: usize,
    spec: &NoiseSpec,
    seed: u64,
) -> Result<NoiseOutcome> {
    spec.validate()?;
    if ids.len() != maps.len() || maps.len() != labels.len() {
        return Err(Error::Noise(format!(
            "{} ids, {} maps and {} labels do not line up",
            ids.len(),
            maps.len(),
            labels.len()
        )));
    }

    if spec.kind == NoiseKind::ClassSwap {
        let mut rng = stream(seed, Purpose::NoiseKernel, &[u64::MAX]);
        let swapped = class_swap(maps, labels, num_classes, spec.f, &mut rng)?;
        let records = swapped
            .swaps
            .into_iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(|(i, swaps)| NoiseRecord {
                id: ids[i].clone(),
                params: NoiseParams::ClassSwap { swaps },
            })
            .collect();
        return Ok(NoiseOutcome {
            maps: swapped.maps,
            labels: swapped.labels,
            records,
        });
    }

    let picked = select_maps(spec.f, maps.len(), seed);
    let magnitude = spec.magnitude_or_default();
    let corrupted: Vec<(usize, RefMap, NoiseParams)> = picked
        .par_iter()
        .map(|&i| {
            let mut rng = stream(seed, Purpose::NoiseKernel, &[i as u64]);
            if let Some(reason) = kernel_blocker(spec.kind, &maps[i]) {
                return Ok((i, maps[i].clone(), NoiseParams::Unchanged { reason: reason.into() }));
            }
            let (map, params) = match spec.kind {
                NoiseKind::MaskShift => {
                    let (m, direction, shift) = mask_shift(&maps[i], magnitude, &mut rng)?;
                    (m, NoiseParams::MaskShift { direction, shift })
                }
                NoiseKind::DilationErosion => {
                    let (m, class, op) = dilate_erode(&maps[i], magnitude, &mut rng)?;
                    (
                        m,
                        NoiseParams::DilationErosion {
                            class,
                            op,
                            iterations: magnitude,
                        },
                    )
                }
                NoiseKind::RectifyBorders => (
                    rectify_borders(&maps[i], magnitude)?,
                    NoiseParams::RectifyBorders { factor: magnitude },
                ),
                NoiseKind::BorderDeformation => {
                    let (m, boxes) = border_deformation(&maps[i], magnitude, &mut rng)?;
                    (m, NoiseParams::BorderDeformation { boxes })
                }
                NoiseKind::SegmentSwap => {
                    let (m, moved) = segment_swap(&maps[i], &mut rng)?;
                    (m, NoiseParams::SegmentSwap(moved))
                }
                NoiseKind::ClassSwap => unreachable!("handled above"),
            };
            Ok((i, map, params))
        })
        .collect::<Result<_>>()?;

    let mut out_maps = maps.to_vec();
    let mut records = Vec::with_capacity(corrupted.len());
    for (i, map, params) in corrupted {
        out_maps[i] = map;
        records.push(NoiseRecord {
            id: ids[i].clone(),
            params,
        });
    }
    Ok(NoiseOutcome {
        maps: out_maps,
        labels: labels.to_vec(),
        records,
    })
}

/// Mean over maps of the per-map mean IoU.
pub fn dataset_mean_iou(clean: &[RefMap], noisy: &[RefMap], num_classes: usize) -> Result<f64> {
    if clean.len() != noisy.len() || clean.is_empty() {
        return Err(Error::Noise(format!(
            "cannot compare {} clean with {} noisy maps",
            clean.len(),
            noisy.len()
        )));
    }
    let total = clean
        .iter()
        .zip(noisy)
        .map(|(c, n)| map_iou(c, n, num_classes).map(|iou| iou.mean))
        .sum::<Result<f64>>()?;
    Ok(total / clean.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_maps, SynthConfig};

    fn fixture(n: usize) -> (Vec<String>, Vec<RefMap>, Vec<MultiLabel>) {
        let cfg = SynthConfig {
            height: 32,
            width: 32,
            ..SynthConfig::default()
        };
        let maps = synthetic_maps(&cfg, n, 9);
        let labels = maps
            .iter()
            .map(|m| crate::cutmix::readout_phi(m, cfg.num_classes).unwrap())
            .collect();
        let ids = (0..n).map(|i| format!("m{i:04}")).collect();
        (ids, maps, labels)
    }

    #[test]
    fn zero_fraction_is_identity() {
        let (ids, maps, labels) = fixture(20);
        for kind in NoiseKind::ALL {
            let spec = NoiseSpec::new(kind, 0.0, None).unwrap();
            let out = apply_noise_suite(&ids, &maps, &labels, 6, &spec, 1).unwrap();
            assert!(out.records.is_empty(), "{kind}");
            assert_eq!(out.maps, maps);
            assert_eq!(out.labels, labels);
            assert_eq!(dataset_mean_iou(&maps, &out.maps, 6).unwrap(), 1.0);
        }
    }

    #[test]
    fn full_mask_shift_manifest_is_complete() {
        let (ids, maps, labels) = fixture(30);
        let spec = NoiseSpec::new(NoiseKind::MaskShift, 1.0, Some(5)).unwrap();
        let out = apply_noise_suite(&ids, &maps, &labels, 6, &spec, 2).unwrap();
        assert_eq!(out.records.len(), 30);
        for r in &out.records {
            match r.params {
                NoiseParams::MaskShift { shift, .. } => assert!((1..=5).contains(&shift)),
                ref other => panic!("unexpected {other:?}"),
            }
        }
        let first = out.manifest_jsonl().lines().next().unwrap().to_string();
        assert!(first.starts_with(r#"{"id":"m0000","kind":"mask_shift","direction":"#), "{first}");
    }

    #[test]
    fn selection_is_fraction_exact() {
        for (f, n, expected) in [(0.25, 1000, 250), (0.5, 1000, 500), (1.0, 1000, 1000), (0.29, 100, 29), (0.25, 7, 1)] {
            assert_eq!(select_maps(f, n, 3).len(), expected);
        }
        let a = select_maps(0.5, 50, 4);
        assert_eq!(a, select_maps(0.5, 50, 4));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn suite_is_deterministic() {
        let (ids, maps, labels) = fixture(16);
        for kind in NoiseKind::ALL {
            let spec = NoiseSpec::new(kind, 0.5, None).unwrap();
            let a = apply_noise_suite(&ids, &maps, &labels, 6, &spec, 5).unwrap();
            let b = apply_noise_suite(&ids, &maps, &labels, 6, &spec, 5).unwrap();
            assert_eq!(a, b, "{kind}");
            assert_eq!(a.manifest_jsonl(), b.manifest_jsonl());
        }
    }

    #[test]
    fn manifest_round_trips() {
        let (ids, maps, labels) = fixture(8);
        for kind in NoiseKind::ALL {
            let spec = NoiseSpec::new(kind, 1.0, None).unwrap();
            let out = apply_noise_suite(&ids, &maps, &labels, 6, &spec, 6).unwrap();
            for line in out.manifest_jsonl().lines() {
                let rec: NoiseRecord = serde_json::from_str(line).unwrap();
                assert!(out.records.contains(&rec));
            }
        }
    }

    #[test]
    fn uniform_maps_are_recorded_unchanged() {
        let maps = vec![RefMap::filled(6, 6, 2), RefMap::filled(6, 6, 0)];
        let labels = vec![MultiLabel::from_classes(3, [2u8]).unwrap(), MultiLabel::empty(3)];
        let ids = vec!["a".to_string(), "b".to_string()];
        for kind in [NoiseKind::SegmentSwap, NoiseKind::DilationErosion] {
            let spec = NoiseSpec::new(kind, 1.0, Some(2)).unwrap();
            let out = apply_noise_suite(&ids, &maps, &labels, 3, &spec, 1).unwrap();
            assert_eq!(out.maps[1], maps[1]);
            assert!(matches!(out.records[1].params, NoiseParams::Unchanged { .. }));
        }
        let spec = NoiseSpec::new(NoiseKind::SegmentSwap, 1.0, None).unwrap();
        let out = apply_noise_suite(&ids, &maps, &labels, 3, &spec, 1).unwrap();
        assert_eq!(out.maps, maps);
        assert!(out.manifest_jsonl().contains(r#""kind":"unchanged""#));
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::new(NoiseKind::MaskShift, 1.5, None).is_err());
        assert!(NoiseSpec::new(NoiseKind::MaskShift, 0.5, Some(0)).is_err());
        assert!(NoiseSpec::new(NoiseKind::ClassSwap, 0.5, None).is_ok());
        assert_eq!("segment_swap".parse::<NoiseKind>().unwrap(), NoiseKind::SegmentSwap);
    }
}
