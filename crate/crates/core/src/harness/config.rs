//! Experiment configuration and its flat `section.key = value` file format.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corners::DogConfig;
use crate::dataproc::{ClaheConfig, EmdConfig};
use crate::nn::{TrainConfig, N_CLASSES};
use crate::radar_sim::{RadarConfig, WallModel};
use crate::sigproc::StftConfig;
use crate::{Error, Result};

/// Tester heights of the train, validation and two test splits, m.
pub const SPLIT_HEIGHTS: [f64; 4] = [1.8, 1.8, 1.7, 1.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset {other:?}, expected desk or paper"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test1: usize,
    pub n_test2: usize,
    pub snr_db: f64,
    /// Base seed of all per-sample seeds.
    pub seed: u64,
    /// Worker threads for generation; 0 uses all cores.
    pub threads: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_train: 1200,
            n_val: 300,
            n_test1: 150,
            n_test2: 150,
            snr_db: 20.0,
            seed: 2023,
            threads: 0,
        }
    }
}

impl DataConfig {
    pub fn counts(&self) -> [usize; 4] {
        [self.n_train, self.n_val, self.n_test1, self.n_test2]
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub delta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            delta: crate::bound::DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub experiment: RunConfig,
    pub radar: RadarConfig,
    pub wall: WallModel,
    pub stft: StftConfig,
    pub emd: EmdConfig,
    pub clahe: ClaheConfig,
    pub dog: DogConfig,
    pub train: TrainConfig,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let data = match preset {
            Preset::Desk => DataConfig::default(),
            Preset::Paper => DataConfig {
                n_train: 3200,
                n_val: 800,
                n_test1: 400,
                n_test2: 400,
                ..DataConfig::default()
            },
        };
        Self {
            data,
            experiment: RunConfig::default(),
            radar: RadarConfig::default(),
            wall: WallModel::default(),
            stft: StftConfig::default(),
            emd: EmdConfig::default(),
            clahe: ClaheConfig::default(),
            dog: DogConfig::default(),
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }

    /// Applies `section.key = value` lines on top of `self`. Keys absent from
    /// the text keep their current values.
    pub fn overlay(&self, text: &str) -> Result<Self> {
        let patch: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (section, value) in patch {
            match (base.get_mut(&section), value) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
                    for (k, v) in src {
                        dst.insert(k, v);
                    }
                }
                (_, _) => return Err(Error::Config(format!("unknown config section {section:?}"))),
            }
        }
        let mut cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.output_dir = self.output_dir.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::preset(preset).overlay(&text)
    }

    /// Flat `section.key = value` text that [`ExperimentConfig::overlay`] reads back.
    pub fn to_flat_text(&self) -> Result<String> {
        let table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = String::new();
        for (section, value) in &table {
            if let toml::Value::Table(inner) = value {
                for (k, v) in inner {
                    out.push_str(&format!("{section}.{k} = {v}\n"));
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in ["train", "val", "test1", "test2"].iter().zip(self.data.counts()) {
            if n == 0 {
                return Err(Error::Config(format!("data.n_{name} must be positive")));
            }
        }
        if self.data.total() % N_CLASSES != 0 {
            return Err(Error::Config(format!(
                "total sample count {} must be a multiple of {N_CLASSES}",
                self.data.total()
            )));
        }
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        if !(self.experiment.delta > 0.0 && self.experiment.delta < 1.0) {
            return Err(Error::Config(format!("experiment.delta = {} not in (0,1)", self.experiment.delta)));
        }
        if self.data.snr_db.is_nan() {
            return Err(Error::Config("data.snr_db is NaN".into()));
        }
        self.radar.validate()?;
        self.wall.validate()?;
        self.stft.validate()?;
        self.emd.validate()?;
        self.clahe.validate_for(crate::dataproc::MAP_SIZE, crate::dataproc::MAP_SIZE)?;
        self.dog.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
