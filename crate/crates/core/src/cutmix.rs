//! CutMix pairing with three label policies: the area-weighted soft label of
//! plain CutMix, label propagation through reference maps, and label
//! propagation through class explanation masks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boxgen::{gen_boxes, sample_partner_box, BoxSizeRange};
use crate::error::{Error, Result};
use crate::raster::{copy_box, BoxR, ImageRaster, MaskStack, MultiLabel, PixelData, RefMap, SoftLabel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Area-weighted soft label, no positional information.
    Naive,
    /// Label read out of the composed reference map.
    #[default]
    LpMap,
    /// Label read out of the composed explanation masks.
    LpXai,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Naive => "naive",
            Policy::LpMap => "lp_map",
            Policy::LpXai => "lp_xai",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Policy::Naive),
            "lp_map" => Ok(Policy::LpMap),
            "lp_xai" => Ok(Policy::LpXai),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected naive, lp_map or lp_xai)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    pub policy: Policy,
    /// A class survives mask read-out only with more than `t_map` activating pixels.
    pub t_map: usize,
    /// Probability of replacing a batch slot with an augmented sample.
    pub p: f64,
    /// Apply the `t_map` pixel threshold to reference-map read-out as well.
    pub smooth_map_readout: bool,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            policy: Policy::LpMap,
            t_map: 10,
            p: 0.5,
            smooth_map_readout: false,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Training sample with optional positional side information.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageRaster,
    pub label: MultiLabel,
    pub map: Option<RefMap>,
    pub masks: Option<MaskStack>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Hard(MultiLabel),
    Soft(SoftLabel),
}

impl Label {
    pub fn as_hard(&self) -> Option<&MultiLabel> {
        match self {
            Label::Hard(y) => Some(y),
            Label::Soft(_) => None,
        }
    }

    pub fn as_soft(&self) -> Option<&SoftLabel> {
        match self {
            Label::Soft(y) => Some(y),
            Label::Hard(_) => None,
        }
    }
}

/// Where an augmented sample came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Sample whose content stays outside `box1`.
    pub base_id: String,
    /// Sample whose `box2` content is pasted into `box1`.
    pub donor_id: String,
    pub box1: BoxR,
    pub box2: BoxR,
    /// Set when label propagation left no class at all.
    pub empty_label: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub image: ImageRaster,
    pub label: Label,
    pub map: Option<RefMap>,
    pub masks: Option<MaskStack>,
    pub provenance: Provenance,
}

fn check_boxes(box1: &BoxR, box2: &BoxR, height: usize, width: usize) -> Result<()> {
    if !box1.same_dims(box2) {
        return Err(Error::BoxDimensionMismatch(*box1, *box2));
    }
    box1.check_bounds(height, width)?;
    box2.check_bounds(height, width)
}

/// `(1 - B1) ⊙ base + T(B2 ⊙ donor)` for `planes` stacked planes.
fn compose_planes<T: Copy>(
    base: &[T],
    donor: &[T],
    planes: usize,
    height: usize,
    width: usize,
    box1: &BoxR,
    box2: &BoxR,
) -> Vec<T> {
    let n = height * width;
    let mut out = base.to_vec();
    for p in 0..planes {
        copy_box(&donor[p * n..(p + 1) * n], &mut out[p * n..(p + 1) * n], width, box2, box1);
    }
    out
}

/// Pixels outside `box1` come from `x1`; pixels inside `box1` come from
/// `x2`'s `box2` region.
pub fn compose_image(x1: &ImageRaster, x2: &ImageRaster, box1: &BoxR, box2: &BoxR) -> Result<ImageRaster> {
    x1.same_shape(x2)?;
    let (c, h, w) = (x1.channels(), x1.height(), x1.width());
    check_boxes(box1, box2, h, w)?;
    let data = match (x1.data(), x2.data()) {
        (PixelData::U8(a), PixelData::U8(b)) => PixelData::U8(compose_planes(a, b, c, h, w, box1, box2)),
        (PixelData::F32(a), PixelData::F32(b)) => PixelData::F32(compose_planes(a, b, c, h, w, box1, box2)),
        _ => unreachable!("dtypes checked by same_shape"),
    };
    ImageRaster::new(c, h, w, data)
}

/// `(1 - A) y1 + A y2` with `A` the normalized area of `box_`.
pub fn naive_label(y1: &MultiLabel, y2: &MultiLabel, box_: &BoxR, height: usize, width: usize) -> Result<SoftLabel> {
    if y1.num_classes() != y2.num_classes() {
        return Err(Error::ClassCount {
            expected: y1.num_classes(),
            actual: y2.num_classes(),
        });
    }
    box_.check_bounds(height, width)?;
    let area = box_.normalized_area(height, width);
    let weights = y1
        .bits()
        .iter()
        .zip(y2.bits())
        .map(|(&a, &b)| (1.0 - area) * f64::from(u8::from(a)) + area * f64::from(u8::from(b)))
        .collect();
    SoftLabel::new(weights)
}

pub fn compose_map(m1: &RefMap, m2: &RefMap, box1: &BoxR, box2: &BoxR) -> Result<RefMap> {
    m1.same_shape(m2)?;
    let (h, w) = (m1.height(), m1.width());
    check_boxes(box1, box2, h, w)?;
    RefMap::new(h, w, compose_planes(m1.data(), m2.data(), 1, h, w, box1, box2))
}

/// Every class with at least one pixel in `map`. Void is never reported.
pub fn readout_phi(map: &RefMap, num_classes: usize) -> Result<MultiLabel> {
    readout_phi_thresholded(map, num_classes, None)
}

/// [`readout_phi`], optionally requiring more than `min_pixels` pixels per class.
pub fn readout_phi_thresholded(map: &RefMap, num_classes: usize, min_pixels: Option<usize>) -> Result<MultiLabel> {
    map.check_classes(num_classes)?;
    let hist = map.histogram();
    let bits = (1..=num_classes)
        .map(|class| match min_pixels {
            None => hist[class] > 0,
            Some(t) => hist[class] > t,
        })
        .collect();
    Ok(MultiLabel::from_bits(bits))
}

pub fn compose_masks(e1: &MaskStack, e2: &MaskStack, box1: &BoxR, box2: &BoxR) -> Result<MaskStack> {
    e1.same_shape(e2)?;
    let (l, h, w) = (e1.num_classes(), e1.height(), e1.width());
    check_boxes(box1, box2, h, w)?;
    MaskStack::new(l, h, w, compose_planes(e1.data(), e2.data(), l, h, w, box1, box2))
}

/// Class `l` is present iff plane `l` has strictly more than `t_map` ones.
pub fn readout_psi(masks: &MaskStack, t_map: usize) -> MultiLabel {
    let bits = (1..=masks.num_classes())
        .map(|class| {
            let active = masks.plane(class as u8).iter().filter(|&&v| v != 0).count();
            active > t_map
        })
        .collect();
    MultiLabel::from_bits(bits)
}

/// Combines `base` and `donor` with fixed boxes: `donor`'s `box2` content is
/// pasted into `base` at `box1`, and the label follows `config.policy`.
pub fn augment_with_boxes(
    base: &Sample,
    donor: &Sample,
    config: &LpConfig,
    box1: &BoxR,
    box2: &BoxR,
) -> Result<AugmentedSample> {
    let num_classes = base.label.num_classes();
    if donor.label.num_classes() != num_classes {
        return Err(Error::ClassCount {
            expected: num_classes,
            actual: donor.label.num_classes(),
        });
    }
    let (h, w) = (base.image.height(), base.image.width());
    let image = compose_image(&base.image, &donor.image, box1, box2)?;

    let (label, map, masks) = match config.policy {
        Policy::Naive => {
            let y = naive_label(&base.label, &donor.label, box1, h, w)?;
            (Label::Soft(y), None, None)
        }
        Policy::LpMap => {
            let m1 = require(base, base.map.as_ref(), config.policy, "a reference map")?;
            let m2 = require(donor, donor.map.as_ref(), config.policy, "a reference map")?;
            let m = compose_map(m1, m2, box1, box2)?;
            let t = config.smooth_map_readout.then_some(config.t_map);
            let y = readout_phi_thresholded(&m, num_classes, t)?;
            (Label::Hard(y), Some(m), None)
        }
        Policy::LpXai => {
            let e1 = require(base, base.masks.as_ref(), config.policy, "explanation masks")?;
            let e2 = require(donor, donor.masks.as_ref(), config.policy, "explanation masks")?;
            if e1.num_classes() != num_classes {
                return Err(Error::ClassCount {
                    expected: num_classes,
                    actual: e1.num_classes(),
                });
            }
            let e = compose_masks(e1, e2, box1, box2)?;
            let y = readout_psi(&e, config.t_map);
            (Label::Hard(y), None, Some(e))
        }
    };
    let empty_label = matches!(&label, Label::Hard(y) if y.is_empty());
    Ok(AugmentedSample {
        image,
        label,
        map,
        masks,
        provenance: Provenance {
            base_id: base.id.clone(),
            donor_id: donor.id.clone(),
            box1: *box1,
            box2: *box2,
            empty_label,
        },
    })
}

fn require<'a, T>(sample: &Sample, value: Option<&'a T>, policy: Policy, what: &'static str) -> Result<&'a T> {
    value.ok_or_else(|| Error::MissingAuxiliary {
        policy: policy.name(),
        what,
        id: sample.id.clone(),
    })
}

/// Draws the cut box from `range`, an unaligned partner box of the same
/// extent, and pairs the two samples.
pub fn draw_boxes<R: Rng + ?Sized>(range: &BoxSizeRange, height: usize, width: usize, rng: &mut R) -> Result<(BoxR, BoxR)> {
    let box1 = gen_boxes(range, 1, height, width, rng)?[0];
    let box2 = sample_partner_box(&box1, height, width, rng)?;
    Ok((box1, box2))
}

pub fn augment<R: Rng + ?Sized>(
    base: &Sample,
    donor: &Sample,
    config: &LpConfig,
    range: &BoxSizeRange,
    rng: &mut R,
) -> Result<AugmentedSample> {
    let (box1, box2) = draw_boxes(range, base.image.height(), base.image.width(), rng)?;
    augment_with_boxes(base, donor, config, &box1, &box2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Dtype;
    use crate::rng::{stream, Purpose};

    fn image(h: usize, w: usize, fill: impl Fn(usize) -> u8) -> ImageRaster {
        ImageRaster::new(1, h, w, PixelData::U8((0..h * w).map(fill).collect())).unwrap()
    }

    fn sample(id: &str, map: RefMap, num_classes: usize) -> Sample {
        let label = readout_phi(&map, num_classes).unwrap();
        let (h, w) = (map.height(), map.width());
        Sample {
            id: id.into(),
            image: image(h, w, |i| map.data()[i] * 10),
            label,
            map: Some(map),
            masks: None,
        }
    }

    #[test]
    fn full_boxes_replace_everything() {
        let x1 = image(3, 4, |i| i as u8);
        let x2 = image(3, 4, |i| 100 + i as u8);
        let full = BoxR::full(3, 4);
        assert_eq!(compose_image(&x1, &x2, &full, &full).unwrap(), x2);
    }

    #[test]
    fn single_pixel_paste() {
        let x1 = image(2, 2, |i| i as u8);
        let x2 = image(2, 2, |i| 10 + i as u8);
        let out = compose_image(
            &x1,
            &x2,
            &BoxR::new(0, 0, 1, 1).unwrap(),
            &BoxR::new(1, 1, 2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data(), &PixelData::U8(vec![13, 1, 2, 3]));
    }

    #[test]
    fn self_pairing_is_identity() {
        let x = image(5, 5, |i| (i * 7 % 251) as u8);
        let b = BoxR::new(1, 2, 4, 5).unwrap();
        assert_eq!(compose_image(&x, &x, &b, &b).unwrap(), x);
    }

    #[test]
    fn compose_image_checks_geometry() {
        let a = ImageRaster::zeros(3, 4, 4, Dtype::U8);
        let b = ImageRaster::zeros(3, 4, 5, Dtype::U8);
        let c = ImageRaster::zeros(3, 4, 4, Dtype::F32);
        let bx = BoxR::new(0, 0, 1, 1).unwrap();
        assert!(matches!(compose_image(&a, &b, &bx, &bx), Err(Error::Geometry(_))));
        assert!(matches!(compose_image(&a, &c, &bx, &bx), Err(Error::Geometry(_))));
    }

    #[test]
    fn naive_label_weights() {
        let y1 = MultiLabel::from_classes(2, [1u8]).unwrap();
        let y2 = MultiLabel::from_classes(2, [2u8]).unwrap();
        let half = BoxR::new(0, 0, 2, 4).unwrap();
        assert_eq!(naive_label(&y1, &y2, &half, 4, 4).unwrap().weights(), &[0.5, 0.5]);
        let full = BoxR::full(4, 4);
        assert_eq!(naive_label(&y1, &y2, &full, 4, 4).unwrap().weights(), &[0.0, 1.0]);

        // A = 7200 / 14400
        let y1 = MultiLabel::from_classes(3, [1u8]).unwrap();
        let y2 = MultiLabel::from_classes(3, [2u8, 3]).unwrap();
        let b = BoxR::new(0, 0, 60, 120).unwrap();
        assert_eq!(naive_label(&y1, &y2, &b, 120, 120).unwrap().weights(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn compose_map_single_class_maps() {
        let m1 = RefMap::filled(6, 6, 1);
        let m2 = RefMap::filled(6, 6, 2);
        let b1 = BoxR::new(1, 2, 4, 5).unwrap();
        let b2 = BoxR::new(3, 0, 6, 3).unwrap();
        let m = compose_map(&m1, &m2, &b1, &b2).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(m.get(r, c), if b1.contains(r, c) { 2 } else { 1 });
            }
        }
        let full = BoxR::full(6, 6);
        assert_eq!(compose_map(&m1, &m2, &full, &full).unwrap(), m2);
    }

    #[test]
    fn phi_readout() {
        assert!(readout_phi(&RefMap::filled(3, 3, 0), 4).unwrap().is_empty());
        let m = RefMap::new(2, 2, vec![1, 1, 2, 0]).unwrap();
        assert_eq!(readout_phi(&m, 3).unwrap().classes(), vec![1, 2]);
        assert!(readout_phi(&m, 1).is_err());
    }

    #[test]
    fn phi_smoothing_is_strict() {
        let m = RefMap::new(2, 3, vec![1, 1, 1, 2, 2, 0]).unwrap();
        assert_eq!(readout_phi_thresholded(&m, 2, Some(2)).unwrap().classes(), vec![1]);
        assert_eq!(readout_phi_thresholded(&m, 2, Some(0)).unwrap().classes(), vec![1, 2]);
    }

    #[test]
    fn compose_masks_counts() {
        let mut e1 = MaskStack::zeros(2, 8, 8);
        e1.plane_mut(1)[0] = 1; // (0,0), outside box1
        e1.plane_mut(1)[63] = 1; // (7,7), inside box1
        let mut e2 = MaskStack::zeros(2, 8, 8);
        e2.plane_mut(1).fill(1);
        let b1 = BoxR::new(4, 4, 8, 8).unwrap();
        let b2 = BoxR::new(0, 1, 4, 5).unwrap();
        let e = compose_masks(&e1, &e2, &b1, &b2).unwrap();
        let count = |stack: &MaskStack, class: u8| stack.plane(class).iter().filter(|&&v| v == 1).count();
        assert_eq!(count(&e, 1), 16 + 1);
        assert_eq!(count(&e, 2), 0);

        assert_eq!(compose_masks(&e1, &e1, &b1, &b1).unwrap(), e1);
        let z = MaskStack::zeros(2, 8, 8);
        assert_eq!(compose_masks(&z, &z, &b1, &b2).unwrap(), z);
        assert!(compose_masks(&e1, &MaskStack::zeros(3, 8, 8), &b1, &b1).is_err());
    }

    #[test]
    fn psi_threshold_is_strict() {
        let mut e = MaskStack::zeros(3, 5, 5);
        e.plane_mut(1)[..10].fill(1);
        e.plane_mut(2)[..11].fill(1);
        e.plane_mut(3)[..1].fill(1);
        assert_eq!(readout_psi(&e, 10).classes(), vec![2]);
        assert_eq!(readout_psi(&e, 0).classes(), vec![1, 2, 3]);
    }

    #[test]
    fn lp_map_keeps_both_classes() {
        let s1 = sample("a", RefMap::filled(10, 10, 1), 3);
        let s2 = sample("b", RefMap::filled(10, 10, 2), 3);
        let range = BoxSizeRange::new(0.1, 0.9).unwrap();
        let config = LpConfig::default();
        let mut rng = stream(1, Purpose::Boxes, &[]);
        for _ in 0..50 {
            let out = augment(&s1, &s2, &config, &range, &mut rng).unwrap();
            assert_eq!(out.label.as_hard().unwrap().classes(), vec![1, 2]);
            assert_eq!(out.provenance.base_id, "a");
            assert_eq!(out.provenance.donor_id, "b");
            assert!(out.provenance.box1.same_dims(&out.provenance.box2));
        }
    }

    #[test]
    fn lp_map_captures_erased_class_while_naive_does_not() {
        let box1 = BoxR::new(2, 2, 6, 7).unwrap();
        let box2 = BoxR::new(0, 0, 4, 5).unwrap();
        let mut m1 = RefMap::filled(8, 8, 0);
        for r in 3..5 {
            for c in 3..6 {
                m1.set(r, c, 1);
            }
        }
        let s1 = sample("a", m1, 2);
        let s2 = sample("b", RefMap::filled(8, 8, 2), 2);

        let lp = augment_with_boxes(&s1, &s2, &LpConfig::default(), &box1, &box2).unwrap();
        assert_eq!(lp.label.as_hard().unwrap().classes(), vec![2]);

        let naive_cfg = LpConfig {
            policy: Policy::Naive,
            ..LpConfig::default()
        };
        let naive = augment_with_boxes(&s1, &s2, &naive_cfg, &box1, &box2).unwrap();
        let soft = naive.label.as_soft().unwrap();
        assert!((soft.weight(1) - (1.0 - 20.0 / 64.0)).abs() < 1e-12);
        assert!(soft.weight(1) > 0.0);
        assert_eq!(naive.image, lp.image);
    }

    #[test]
    fn empty_label_is_flagged() {
        let s1 = sample("a", RefMap::filled(4, 4, 0), 2);
        let s2 = sample("b", RefMap::filled(4, 4, 0), 2);
        let b = BoxR::new(0, 0, 2, 2).unwrap();
        let out = augment_with_boxes(&s1, &s2, &LpConfig::default(), &b, &b).unwrap();
        assert!(out.provenance.empty_label);
    }

    #[test]
    fn missing_auxiliary_data_is_a_config_error() {
        let mut s1 = sample("a", RefMap::filled(4, 4, 1), 2);
        let s2 = sample("b", RefMap::filled(4, 4, 2), 2);
        let b = BoxR::new(0, 0, 2, 2).unwrap();
        let xai = LpConfig {
            policy: Policy::LpXai,
            ..LpConfig::default()
        };
        assert!(matches!(
            augment_with_boxes(&s1, &s2, &xai, &b, &b),
            Err(Error::MissingAuxiliary { policy: "lp_xai", .. })
        ));
        s1.map = None;
        assert!(matches!(
            augment_with_boxes(&s1, &s2, &LpConfig::default(), &b, &b),
            Err(Error::MissingAuxiliary { policy: "lp_map", .. })
        ));
    }
}
