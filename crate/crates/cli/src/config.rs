//! Run configuration: command-line flags over an optional JSON config file
//! over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use pragref::rsa::PragmaticsConfig;
use pragref::{Error, Result};
use serde::{Deserialize, Serialize};

/// Config file schema. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: Option<String>,
    #[serde(default)]
    pub pragmatics: PragmaticsOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PragmaticsOverrides {
    pub alpha: Option<f64>,
    pub alpha_neural: Option<f64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub beta_a: Option<f64>,
    pub beta_b: Option<f64>,
    pub gamma: Option<f64>,
}

impl PragmaticsOverrides {
    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Self) -> Self {
        Self {
            alpha: self.alpha.or(lower.alpha),
            alpha_neural: self.alpha_neural.or(lower.alpha_neural),
            m: self.m.or(lower.m),
            n: self.n.or(lower.n),
            beta_a: self.beta_a.or(lower.beta_a),
            beta_b: self.beta_b.or(lower.beta_b),
            gamma: self.gamma.or(lower.gamma),
        }
    }

    pub fn resolve(self) -> Result<PragmaticsConfig> {
        let d = PragmaticsConfig::default();
        let cfg = PragmaticsConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            alpha_neural: self.alpha_neural.unwrap_or(d.alpha_neural),
            m: self.m.unwrap_or(d.m),
            n: self.n.unwrap_or(d.n),
            beta_a: self.beta_a.unwrap_or(d.beta_a),
            beta_b: self.beta_b.unwrap_or(d.beta_b),
            gamma: self.gamma.unwrap_or(d.gamma),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimizer overrides for training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
}

impl TrainOverrides {
    pub fn over(self, lower: Self) -> Self {
        Self {
            epochs: self.epochs.or(lower.epochs),
            batch_size: self.batch_size.or(lower.batch_size),
            lr: self.lr.or(lower.lr),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings shared by all commands. Paths are made absolute
/// before any command runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub split: String,
    pub pragmatics: PragmaticsConfig,
    pub train: TrainOverrides,
}

/// Values given on the command line, before merging.
#[derive(Debug, Clone, Default)]
pub struct FlagValues {
    pub corpus: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: Option<String>,
    pub pragmatics: PragmaticsOverrides,
    pub train: TrainOverrides,
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SPLIT: &str = "dev";
pub const DEFAULT_CHECKPOINT_DIR: &str = "checkpoints";

fn absolute(path: PathBuf) -> Result<PathBuf> {
    if path.is_absolute() {
        Ok(path)
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

impl RunConfig {
    pub fn resolve(flags: FlagValues, file: Option<FileConfig>) -> Result<Self> {
        let file = file.unwrap_or_default();
        let split = flags
            .split
            .or(file.split)
            .unwrap_or_else(|| DEFAULT_SPLIT.to_string());
        split.parse::<pragref::corpus::Split>()?;
        Ok(Self {
            corpus: flags.corpus.or(file.corpus).map(absolute).transpose()?,
            checkpoint_dir: absolute(
                flags
                    .checkpoint_dir
                    .or(file.checkpoint_dir)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_CHECKPOINT_DIR)),
            )?,
            out: flags.out.or(file.out).map(absolute).transpose()?,
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            split,
            pragmatics: flags.pragmatics.over(file.pragmatics).resolve()?,
            train: flags.train.over(file.train),
        })
    }

    pub fn corpus(&self) -> Result<&Path> {
        self.corpus.as_deref().ok_or_else(|| {
            Error::Config("no corpus given: pass --corpus or set PRAGREF_DATA".into())
        })
    }
}
