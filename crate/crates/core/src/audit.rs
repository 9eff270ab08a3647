//! Label-noise audit of naive CutMix.
//!
//! Each trial pairs two random samples with random boxes and compares two
//! hard readings of the naive label against the label read off the mixed
//! reference map:
//!
//! * `keep_y1`: the base sample's label, unchanged;
//! * `union`: the union of both source labels.
//!
//! A class on the mixed map but missing from the naive label is subtractive
//! noise; a class in the naive label with no pixel on the mixed map is
//! additive noise.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgen::BoxSizeRange;
use crate::cutmix::{compose_map, draw_boxes, readout_phi};
use crate::dataset::SampleSource;
use crate::error::{Error, Result};
use crate::raster::{MultiLabel, RefMap};
use crate::rng::{stream, Purpose};

pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardReading {
    KeepY1,
    Union,
}

impl HardReading {
    pub fn name(self) -> &'static str {
        match self {
            HardReading::KeepY1 => "keep_y1",
            HardReading::Union => "union",
        }
    }
}

/// Noise rates of one hard reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingStats {
    pub reading: HardReading,
    /// Fraction of trials with at least one missing class.
    pub subtractive_rate: f64,
    /// Fraction of trials with at least one spurious class.
    pub additive_rate: f64,
    /// Mean number of missing classes per trial.
    pub mean_missing: f64,
    /// Mean number of spurious classes per trial.
    pub mean_spurious: f64,
}

impl ReadingStats {
    /// Binomial standard error of a rate estimated from `trials` trials.
    pub fn std_err(rate: f64, trials: usize) -> f64 {
        (rate * (1.0 - rate) / trials as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub trials: usize,
    pub box_range: BoxSizeRange,
    pub seed: u64,
    pub readings: Vec<ReadingStats>,
}

impl AuditReport {
    pub fn reading(&self, reading: HardReading) -> &ReadingStats {
        self.readings
            .iter()
            .find(|r| r.reading == reading)
            .expect("both readings are reported")
    }
}

/// Per-trial outcome for one reading: (missing, spurious) class counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrialNoise {
    pub missing: usize,
    pub spurious: usize,
}

pub fn trial_noise(naive: &MultiLabel, truth: &MultiLabel) -> TrialNoise {
    TrialNoise {
        missing: truth.difference(naive).len(),
        spurious: naive.difference(truth).len(),
    }
}

/// Runs `trials` simulated augmentations over maps and labels held in memory.
pub fn audit_maps(
    maps: &[RefMap],
    labels: &[MultiLabel],
    range: &BoxSizeRange,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if maps.len() != labels.len() {
        return Err(Error::Config(format!("{} maps but {} labels", maps.len(), labels.len())));
    }
    if maps.len() < 2 {
        return Err(Error::Config("the audit needs at least two samples with maps".into()));
    }
    if trials == 0 {
        return Err(Error::Config("the audit needs at least one trial".into()));
    }
    let num_classes = labels[0].num_classes();
    let (h, w) = (maps[0].height(), maps[0].width());
    let n = maps.len();
    let outcomes: Vec<[TrialNoise; 2]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Purpose::Audit, &[t as u64]);
            let i = rng.random_range(0..n as u64) as usize;
            let j = rng.random_range(0..n as u64 - 1) as usize;
            let j = if j >= i { j + 1 } else { j };
            let (box1, box2) = draw_boxes(range, h, w, &mut rng)?;
            let truth = readout_phi(&compose_map(&maps[i], &maps[j], &box1, &box2)?, num_classes)?;
            Ok([
                trial_noise(&labels[i], &truth),
                trial_noise(&labels[i].union(&labels[j]), &truth),
            ])
        })
        .collect::<Result<_>>()?;

    let readings = [HardReading::KeepY1, HardReading::Union]
        .into_iter()
        .enumerate()
        .map(|(k, reading)| {
            let total = trials as f64;
            let rate = |f: &dyn Fn(&TrialNoise) -> bool| outcomes.iter().filter(|o| f(&o[k])).count() as f64 / total;
            let mean = |f: &dyn Fn(&TrialNoise) -> usize| outcomes.iter().map(|o| f(&o[k])).sum::<usize>() as f64 / total;
            ReadingStats {
                reading,
                subtractive_rate: rate(&|o| o.missing > 0),
                additive_rate: rate(&|o| o.spurious > 0),
                mean_missing: mean(&|o| o.missing),
                mean_spurious: mean(&|o| o.spurious),
            }
        })
        .collect();
    Ok(AuditReport {
        trials,
        box_range: *range,
        seed,
        readings,
    })
}

/// Audits a dataset; every sample must carry a reference map.
pub fn audit<S: SampleSource + ?Sized>(source: &S, range: &BoxSizeRange, trials: usize, seed: u64) -> Result<AuditReport> {
    let mut maps = Vec::with_capacity(source.len());
    let mut labels = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let s = source.get(i)?;
        let Some(map) = s.map else {
            return Err(Error::Sample {
                id: s.id,
                message: "the audit needs reference maps as ground truth; add maps, or generate a synthetic dataset \
                          with `lpmix synth`; explanation-mask datasets are audited through lp_xai augmentation instead"
                    .into(),
            });
        };
        maps.push(map);
        labels.push(s.label);
    }
    if maps.is_empty() {
        return Err(Error::NoSamples);
    }
    audit_maps(&maps, &labels, range, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{corner_class_samples, full_cover_samples, synthetic_samples, SynthConfig};

    fn split(samples: &[crate::cutmix::Sample]) -> (Vec<RefMap>, Vec<MultiLabel>) {
        samples
            .iter()
            .map(|s| (s.map.clone().unwrap(), s.label.clone()))
            .unzip()
    }

    #[test]
    fn full_cover_classes_never_get_lost() {
        let mut samples = full_cover_samples(20, 20, 6, 1, 3);
        samples.extend(full_cover_samples(20, 20, 6, 1, 3));
        let (maps, labels) = split(&samples);
        let r = audit_maps(&maps, &labels, &BoxSizeRange::new(0.1, 0.9).unwrap(), 2000, 1).unwrap();
        for s in &r.readings {
            assert_eq!((s.subtractive_rate, s.additive_rate), (0.0, 0.0));
        }
    }

    #[test]
    fn union_is_never_subtractive_and_at_least_as_additive() {
        let cfg = SynthConfig {
            height: 24,
            width: 24,
            ..SynthConfig::default()
        };
        let (maps, labels) = split(&synthetic_samples(&cfg, 40, 3, 0.1));
        for range in ["0.1-0.3", "0.3-0.7", "0.7-1.0"] {
            let r = audit_maps(&maps, &labels, &range.parse().unwrap(), 3000, 2).unwrap();
            let (k, u) = (r.reading(HardReading::KeepY1), r.reading(HardReading::Union));
            assert_eq!(u.subtractive_rate, 0.0);
            assert!(u.additive_rate >= k.additive_rate);
        }
    }

    #[test]
    fn per_trial_set_logic() {
        // per-trial oracle: union ⊇ truth whenever labels match their maps
        let cfg = SynthConfig {
            height: 16,
            width: 16,
            ..SynthConfig::default()
        };
        let samples = synthetic_samples(&cfg, 10, 5, 0.1);
        let range = BoxSizeRange::new(0.2, 0.8).unwrap();
        for t in 0..500u64 {
            let mut rng = stream(9, Purpose::Audit, &[t]);
            let (i, j) = (t as usize % 10, (t as usize * 7 + 1) % 10);
            let (b1, b2) = draw_boxes(&range, 16, 16, &mut rng).unwrap();
            let truth = readout_phi(&compose_map(samples[i].map.as_ref().unwrap(), samples[j].map.as_ref().unwrap(), &b1, &b2).unwrap(), 6).unwrap();
            let u = samples[i].label.union(&samples[j].label);
            assert_eq!(trial_noise(&u, &truth).missing, 0);
            let k = trial_noise(&samples[i].label, &truth);
            assert!(k.spurious <= trial_noise(&u, &truth).spurious);
        }
    }

    #[test]
    fn corner_fixture_keep_y1_is_subtractive() {
        let (maps, labels) = split(&corner_class_samples(40, 40, 20, 0.3));
        let r = audit_maps(&maps, &labels, &BoxSizeRange::new(0.3, 0.7).unwrap(), 4000, 3).unwrap();
        assert!(r.reading(HardReading::KeepY1).subtractive_rate > 0.0);
    }

    #[test]
    fn deterministic_and_requires_maps() {
        let (maps, labels) = split(&corner_class_samples(20, 20, 6, 0.3));
        let range = BoxSizeRange::new(0.1, 0.3).unwrap();
        assert_eq!(
            audit_maps(&maps, &labels, &range, 500, 4).unwrap(),
            audit_maps(&maps, &labels, &range, 500, 4).unwrap()
        );
        let mut samples = corner_class_samples(20, 20, 3, 0.3);
        samples[1].map = None;
        let ds = crate::dataset::MemoryDataset {
            num_classes: 2,
            samples,
        };
        let err = audit(&ds, &range, 10, 0).unwrap_err();
        assert!(err.to_string().contains("reference maps"), "{err}");
    }
}
