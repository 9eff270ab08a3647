//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! policy = "lp_map"      # naive | lp_map | lp_xai
//! box_range = "0.3-0.7"
//! p = 0.5
//! t_cam = 0.1
//! t_map = 10
//! seed = 0
//! batch_size = 300
//! partner = "batch"      # batch | dataset
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boxgen::BoxSizeRange;
use crate::cutmix::{LpConfig, Policy};
use crate::error::{Error, Result};
use crate::xai::{DEFAULT_T_CAM, DEFAULT_T_MAP};

/// Pool the CutMix partner is drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerMode {
    /// Another sample of the same batch.
    #[default]
    Batch,
    /// Any other sample of the dataset.
    Dataset,
}

impl std::str::FromStr for PartnerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(PartnerMode::Batch),
            "dataset" => Ok(PartnerMode::Dataset),
            other => Err(Error::Config(format!("unknown partner mode {other:?} (batch | dataset)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub policy: Policy,
    pub box_range: BoxSizeRange,
    pub p: f64,
    pub t_cam: f32,
    pub t_map: usize,
    /// Apply `t_map` to reference-map read-out too.
    pub smooth_map_readout: bool,
    pub seed: u64,
    pub epoch: u64,
    pub batch_size: usize,
    pub partner: PartnerMode,
    /// Permute the sample order per epoch.
    pub shuffle: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            policy: Policy::LpMap,
            box_range: BoxSizeRange::new(0.3, 0.7).expect("valid range"),
            p: 0.5,
            t_cam: DEFAULT_T_CAM,
            t_map: DEFAULT_T_MAP,
            smooth_map_readout: false,
            seed: 0,
            epoch: 0,
            batch_size: 300,
            partner: PartnerMode::Batch,
            shuffle: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.lp().validate()?;
        if !(0.0..=1.0).contains(&self.t_cam) {
            return Err(Error::Config(format!("t_cam = {} outside [0, 1]", self.t_cam)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.p > 0.0 && self.batch_size < 2 && self.partner == PartnerMode::Batch {
            return Err(Error::Config(format!(
                "batch size {} leaves no partner for augmentation with p = {}",
                self.batch_size, self.p
            )));
        }
        Ok(())
    }

    pub fn lp(&self) -> LpConfig {
        LpConfig {
            policy: self.policy,
            t_map: self.t_map,
            p: self.p,
            smooth_map_readout: self.smooth_map_readout,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let text = c.to_toml();
        assert!(text.contains("box_range = \"0.3-0.7\""), "{text}");
        assert_eq!(toml::from_str::<PipelineConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "policy = \"lp_xai\"\nbox_range = \"0.1-0.3\"\nseed = 7\n").unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.policy, Policy::LpXai);
        assert_eq!(c.box_range, BoxSizeRange::new(0.1, 0.3).unwrap());
        assert_eq!((c.seed, c.batch_size, c.t_map), (7, 300, 10));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        for body in ["p = 1.5", "box_range = \"0.7-0.3\"", "batch_size = 1", "t_cam = 2.0", "colour = 1", "policy = \"mixup\""] {
            fs::write(&p, body).unwrap();
            assert!(PipelineConfig::load(&p).is_err(), "{body}");
        }
        fs::write(&p, "batch_size = 1\np = 0.0").unwrap();
        assert!(PipelineConfig::load(&p).is_ok());
        fs::write(&p, "batch_size = 1\npartner = \"dataset\"").unwrap();
        assert!(PipelineConfig::load(&p).is_ok());
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "seed = 1\np = \"half\"\n").unwrap();
        match PipelineConfig::load(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }
}
