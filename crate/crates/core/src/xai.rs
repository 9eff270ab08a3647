//! Turning externally computed class heatmaps (CAM, Grad-CAM, DeepLift, ...)
//! into binary explanation masks.

use crate::error::{Error, Result};
use crate::raster::{Heatmap, MaskStack, MultiLabel};

/// Threshold used for Grad-CAM heatmaps in the reference experiments.
pub const DEFAULT_T_CAM: f32 = 0.1;

/// Pixel threshold paired with [`DEFAULT_T_CAM`].
pub const DEFAULT_T_MAP: usize = 10;

/// Binarizes `heatmap` with `value >= t_cam`. Planes of classes missing from
/// `label` are all zero regardless of the heatmap.
pub fn threshold_heatmaps(heatmap: &Heatmap, label: &MultiLabel, t_cam: f32) -> Result<MaskStack> {
    if !(0.0..=1.0).contains(&t_cam) {
        return Err(Error::Config(format!("t_cam = {t_cam} outside [0, 1]")));
    }
    if heatmap.num_classes() != label.num_classes() {
        return Err(Error::ClassCount {
            expected: label.num_classes(),
            actual: heatmap.num_classes(),
        });
    }
    let (l, h, w) = (heatmap.num_classes(), heatmap.height(), heatmap.width());
    let mut data = vec![0u8; l * h * w];
    for (class, plane) in (1..=l as u8).zip(data.chunks_exact_mut(h * w)) {
        if !label.contains(class) {
            continue;
        }
        for (out, &v) in plane.iter_mut().zip(heatmap.plane(class)) {
            *out = u8::from(v >= t_cam);
        }
    }
    MaskStack::new(l, h, w, data)
}

/// Activating pixels per class plane.
pub fn mask_stats(masks: &MaskStack) -> Vec<usize> {
    (1..=masks.num_classes())
        .map(|class| masks.plane(class as u8).iter().filter(|&&v| v != 0).count())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn heat(l: usize, h: usize, w: usize, v: f32) -> Heatmap {
        Heatmap::new(l, h, w, vec![v; l * h * w]).unwrap()
    }

    #[test]
    fn below_threshold_is_empty() {
        let y = MultiLabel::from_classes(1, [1u8]).unwrap();
        let m = threshold_heatmaps(&heat(1, 4, 4, 0.05), &y, 0.1).unwrap();
        assert!(m.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn zero_threshold_activates_everything() {
        let y = MultiLabel::from_classes(1, [1u8]).unwrap();
        let m = threshold_heatmaps(&heat(1, 3, 3, 0.0), &y, 0.0).unwrap();
        assert!(m.data().iter().all(|&v| v == 1));
    }

    #[test]
    fn absent_class_is_zeroed() {
        let y = MultiLabel::from_classes(2, [1u8]).unwrap();
        let m = threshold_heatmaps(&heat(2, 3, 3, 1.0), &y, 0.1).unwrap();
        assert!(m.plane(1).iter().all(|&v| v == 1));
        assert!(m.plane(2).iter().all(|&v| v == 0));
    }

    #[test]
    fn threshold_is_inclusive() {
        let y = MultiLabel::from_classes(1, [1u8]).unwrap();
        let h = Heatmap::new(1, 1, 3, vec![0.099, 0.1, 1.0]).unwrap();
        assert_eq!(threshold_heatmaps(&h, &y, 0.1).unwrap().data(), &[0, 1, 1]);
        assert_eq!(threshold_heatmaps(&h, &y, 1.0).unwrap().data(), &[0, 0, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = MultiLabel::from_classes(2, [1u8]).unwrap();
        assert!(threshold_heatmaps(&heat(1, 2, 2, 0.5), &y, 0.1).is_err());
        assert!(threshold_heatmaps(&heat(2, 2, 2, 0.5), &y, 1.5).is_err());
    }

    #[test]
    fn stats() {
        assert_eq!(mask_stats(&MaskStack::zeros(3, 4, 4)), vec![0, 0, 0]);
        let mut m = MaskStack::zeros(2, 4, 4);
        m.plane_mut(2).fill(1);
        assert_eq!(mask_stats(&m), vec![0, 16]);
    }

    fn arb_heatmap() -> impl Strategy<Value = (Heatmap, MultiLabel)> {
        (1usize..5, 1usize..6, 1usize..6).prop_flat_map(|(l, h, w)| {
            (
                proptest::collection::vec(0.0f32..=1.0, l * h * w),
                proptest::collection::vec(any::<bool>(), l),
            )
                .prop_map(move |(data, bits)| {
                    (Heatmap::new(l, h, w, data).unwrap(), MultiLabel::from_bits(bits))
                })
        })
    }

    proptest! {
        #[test]
        fn zeroing_rule_holds((h, y) in arb_heatmap(), t in 0.0f32..=1.0) {
            let m = threshold_heatmaps(&h, &y, t).unwrap();
            for class in 1..=y.num_classes() as u8 {
                if !y.contains(class) {
                    prop_assert!(m.plane(class).iter().all(|&v| v == 0));
                }
            }
        }

        #[test]
        fn raising_threshold_never_adds((h, y) in arb_heatmap(), a in 0.0f32..=1.0, b in 0.0f32..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m_lo = threshold_heatmaps(&h, &y, lo).unwrap();
            let m_hi = threshold_heatmaps(&h, &y, hi).unwrap();
            prop_assert!(m_lo.data().iter().zip(m_hi.data()).all(|(&l, &h)| h <= l));
        }

        #[test]
        fn binary_heatmaps_are_fixed_points(
            (h, y) in arb_heatmap(),
            t in 0.001f32..=1.0,
        ) {
            let binary: Vec<f32> = h.data().iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
            let hb = Heatmap::new(h.num_classes(), h.height(), h.width(), binary).unwrap();
            let m = threshold_heatmaps(&hb, &y, t).unwrap();
            let n = h.height() * h.width();
            for (i, (&v, &src)) in m.data().iter().zip(hb.data()).enumerate() {
                let class = (i / n + 1) as u8;
                let expected = if y.contains(class) { src as u8 } else { 0 };
                prop_assert_eq!(v, expected);
            }
        }

        #[test]
        fn stats_match_naive_sum(data in proptest::collection::vec(0u8..=1, 3 * 5 * 4)) {
            let m = MaskStack::new(3, 5, 4, data.clone()).unwrap();
            let expected: Vec<usize> = data.chunks(20).map(|p| p.iter().map(|&v| v as usize).sum()).collect();
            prop_assert_eq!(mask_stats(&m), expected);
        }
    }
}
