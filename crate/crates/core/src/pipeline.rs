//! Batch pipeline: each slot of a batch is replaced, with probability `p`, by
//! a CutMix of its sample and a partner from the same batch.
//!
//! Every draw comes from a stream keyed by `(seed, epoch, batch, position)`
//! with separate purposes for the replace coin, the partner choice and the
//! boxes. Output is therefore independent of the worker count, and changing
//! `p` only changes which slots are replaced, never the partner or boxes a
//! replaced slot gets.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{PartnerMode, PipelineConfig};
use crate::cutmix::{augment, AugmentedSample, Label, Sample};
use crate::dataset::SampleSource;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::tensor::Rten;

#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    Original(Sample),
    Augmented(AugmentedSample),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    /// Id of the sample that owns the slot.
    pub id: String,
    /// Index of that sample in the source.
    pub source_index: usize,
    pub slot: Slot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub epoch: u64,
    pub index: usize,
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn augmented_count(&self) -> usize {
        self.items.iter().filter(|i| matches!(i.slot, Slot::Augmented(_))).count()
    }

    /// Canonical byte encoding, for comparing runs.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.index as u64).to_le_bytes());
        for item in &self.items {
            out.extend_from_slice(item.id.as_bytes());
            out.push(0);
            out.extend_from_slice(&(item.source_index as u64).to_le_bytes());
            let (image, label, map, masks) = match &item.slot {
                Slot::Original(s) => {
                    out.push(0);
                    (&s.image, Label::Hard(s.label.clone()), s.map.as_ref(), s.masks.as_ref())
                }
                Slot::Augmented(a) => {
                    out.push(1);
                    out.extend_from_slice(serde_json::to_string(&a.provenance).expect("provenance serializes").as_bytes());
                    (&a.image, a.label.clone(), a.map.as_ref(), a.masks.as_ref())
                }
            };
            out.extend_from_slice(&image.to_rten_bytes());
            match label {
                Label::Hard(y) => out.extend(y.bits().iter().map(|&b| b as u8)),
                Label::Soft(y) => y.weights().iter().for_each(|w| out.extend_from_slice(&w.to_le_bytes())),
            }
            if let Some(m) = map {
                out.extend_from_slice(&m.to_rten_bytes());
            }
            if let Some(e) = masks {
                out.extend_from_slice(&e.to_rten_bytes());
            }
        }
        out
    }
}

/// Deterministic batch producer over a sample source.
pub struct Pipeline<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    config: PipelineConfig,
    order: Vec<usize>,
    pool: rayon::ThreadPool,
}

impl<'a, S: SampleSource + ?Sized> Pipeline<'a, S> {
    /// `workers = 0` uses rayon's default thread count.
    pub fn new(source: &'a S, config: PipelineConfig, workers: usize) -> Result<Self> {
        config.validate()?;
        if source.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut order: Vec<usize> = (0..source.len()).collect();
        if config.shuffle {
            order.shuffle(&mut stream(config.seed, Purpose::Shuffle, &[config.epoch]));
        }
        let pipeline = Self {
            source,
            config,
            order,
            pool: rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?,
        };
        if config.p > 0.0 {
            let pool_size = match config.partner {
                PartnerMode::Batch => pipeline.batch_range(pipeline.num_batches() - 1).len(),
                PartnerMode::Dataset => source.len(),
            };
            if pool_size < 2 {
                return Err(Error::NoPartner {
                    batch: pipeline.num_batches() - 1,
                    p: config.p,
                });
            }
        }
        Ok(pipeline)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.config.batch_size)
    }

    fn batch_range(&self, batch: usize) -> std::ops::Range<usize> {
        let start = batch * self.config.batch_size;
        start..(start + self.config.batch_size).min(self.order.len())
    }

    /// Index of the partner for slot `pos`, uniform over the other members
    /// of the pool.
    fn partner(&self, batch: usize, pos: usize, pool_len: usize) -> usize {
        let mut rng = stream(self.config.seed, Purpose::Partner, &[self.config.epoch, batch as u64, pos as u64]);
        let j = rng.random_range(0..pool_len as u64 - 1) as usize;
        if j >= pos {
            j + 1
        } else {
            j
        }
    }

    pub fn batch(&self, batch: usize) -> Result<Batch> {
        let range = self.batch_range(batch);
        let members = &self.order[range.clone()];
        let (seed, epoch, p) = (self.config.seed, self.config.epoch, self.config.p);
        let lp = self.config.lp();
        let items = self.pool.install(|| -> Result<Vec<BatchItem>> {
            let samples: Vec<Sample> = members.par_iter().map(|&i| self.source.get(i)).collect::<Result<_>>()?;
            (0..members.len())
                .into_par_iter()
                .map(|pos| {
                    let coords = [epoch, batch as u64, pos as u64];
                    let base = &samples[pos];
                    let replace = p > 0.0 && stream(seed, Purpose::Replace, &coords).random_bool(p);
                    let slot = if replace {
                        let donor_owned;
                        let donor = match self.config.partner {
                            PartnerMode::Batch => &samples[self.partner(batch, pos, members.len())],
                            PartnerMode::Dataset => {
                                let global = range.start + pos;
                                donor_owned = self.source.get(self.order[self.partner(batch, global, self.order.len())])?;
                                &donor_owned
                            }
                        };
                        let mut rng = stream(seed, Purpose::Boxes, &coords);
                        Slot::Augmented(augment(base, donor, &lp, &self.config.box_range, &mut rng)?)
                    } else {
                        Slot::Original(base.clone())
                    };
                    Ok(BatchItem {
                        id: base.id.clone(),
                        source_index: members[pos],
                        slot,
                    })
                })
                .collect()
        })?;
        Ok(Batch {
            epoch,
            index: batch,
            items,
        })
    }

    /// Batches in order.
    pub fn batches(&self) -> impl Iterator<Item = Result<Batch>> + '_ {
        (0..self.num_batches()).map(|b| self.batch(b))
    }
}

/// Runs one epoch and collects every batch.
pub fn run_pipeline<S: SampleSource + ?Sized>(source: &S, config: &PipelineConfig, workers: usize) -> Result<Vec<Batch>> {
    Pipeline::new(source, *config, workers)?.batches().collect()
}
