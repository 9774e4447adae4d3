//! Line-oriented `key = value` run configuration.
//!
//! Every key has a default; files and `--set` overrides may only name keys
//! from [`KEYS`]. Relative paths are taken relative to the working directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::TrainConfig;
use crate::corpus::{PerturbSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::lga::{GradientOperator, LgaConfig};
use crate::lvp::LvpWeights;
use crate::pipeline::FeatureConfig;

/// Every accepted key, in the order [`RunConfig::entries`] renders them.
pub const KEYS: &[&str] = &[
    "seed",
    "synth.count",
    "synth.size",
    "synth.channels",
    "synth.smooth_sigma",
    "synth.texture_mix",
    "split.test_fraction",
    "lga.operator",
    "lga.sigma",
    "lga.epsilon",
    "lga.padding",
    "lvp.weights",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.beta1",
    "train.beta2",
    "train.adam_eps",
    "eval.threshold",
    "perturb",
    "ablate.sigmas",
    "ablate.operators",
    "corpus_dir",
    "manifest",
    "train_manifest",
    "test_manifest",
    "eval_manifest",
    "features_dir",
    "checkpoint",
    "out_dir",
    "heatmap.image",
    "heatmap.image2",
];

/// LVP aggregation weights as named in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LvpChoice {
    /// `w_i = 2^i`.
    #[default]
    Pow2,
    /// Seeded random reals drawn from the run seed.
    Random,
}

impl fmt::Display for LvpChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LvpChoice::Pow2 => "pow2",
            LvpChoice::Random => "random",
        })
    }
}

impl FromStr for LvpChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pow2" => Ok(LvpChoice::Pow2),
            "random" => Ok(LvpChoice::Random),
            other => Err(Error::Config(format!(
                "lvp.weights must be `pow2` or `random`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    /// Fraction of synthetic pairs held out for testing.
    pub test_fraction: f64,
    pub lga: LgaConfig,
    pub lvp: LvpChoice,
    pub train: TrainConfig,
    pub threshold: f64,
    pub perturbations: Vec<PerturbSpec>,
    pub ablate_sigmas: Vec<f64>,
    pub ablate_operators: Vec<GradientOperator>,
    pub corpus_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub eval_manifest: Option<PathBuf>,
    pub features_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub heatmap_image: Option<PathBuf>,
    pub heatmap_image2: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            test_fraction: 0.2,
            lga: LgaConfig::default(),
            lvp: LvpChoice::Pow2,
            train: TrainConfig::default(),
            threshold: 0.5,
            perturbations: PerturbSpec::defaults(),
            ablate_sigmas: vec![0.5, 1.0, 2.0],
            ablate_operators: vec![GradientOperator::Sobel, GradientOperator::Roberts],
            corpus_dir: PathBuf::from("corpus"),
            manifest: None,
            train_manifest: None,
            test_manifest: None,
            eval_manifest: None,
            features_dir: PathBuf::from("features"),
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            heatmap_image: None,
            heatmap_image2: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses a config file on top of the defaults; later `overrides` win.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment. Keys may appear once.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("{origin}:{}: {msg}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(at(format!("duplicate key `{k}`")));
            }
            self.set(k, v.trim()).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "synth.count" => self.synth.count = parse(key, value)?,
            "synth.size" => self.synth.size = parse(key, value)?,
            "synth.channels" => self.synth.channels = parse(key, value)?,
            "synth.smooth_sigma" => self.synth.smooth_sigma = parse(key, value)?,
            "synth.texture_mix" => self.synth.texture_mix = parse(key, value)?,
            "split.test_fraction" => self.test_fraction = parse(key, value)?,
            "lga.operator" => self.lga.operator = parse(key, value)?,
            "lga.sigma" => self.lga.sigma = parse(key, value)?,
            "lga.epsilon" => self.lga.epsilon = parse(key, value)?,
            "lga.padding" => self.lga.padding = parse(key, value)?,
            "lvp.weights" => self.lvp = value.parse()?,
            "train.lr" => self.train.learning_rate = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.beta1" => self.train.beta1 = parse(key, value)?,
            "train.beta2" => self.train.beta2 = parse(key, value)?,
            "train.adam_eps" => self.train.adam_eps = parse(key, value)?,
            "eval.threshold" => self.threshold = parse(key, value)?,
            "perturb" => self.perturbations = list(key, value)?,
            "ablate.sigmas" => self.ablate_sigmas = list(key, value)?,
            "ablate.operators" => self.ablate_operators = list(key, value)?,
            "corpus_dir" => self.corpus_dir = PathBuf::from(value),
            "manifest" => self.manifest = optional_path(value),
            "train_manifest" => self.train_manifest = optional_path(value),
            "test_manifest" => self.test_manifest = optional_path(value),
            "eval_manifest" => self.eval_manifest = optional_path(value),
            "features_dir" => self.features_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = optional_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "heatmap.image" => self.heatmap_image = optional_path(value),
            "heatmap.image2" => self.heatmap_image2 = optional_path(value),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.seed.to_string(),
            self.synth.count.to_string(),
            self.synth.size.to_string(),
            self.synth.channels.to_string(),
            self.synth.smooth_sigma.to_string(),
            self.synth.texture_mix.to_string(),
            self.test_fraction.to_string(),
            self.lga.operator.to_string(),
            self.lga.sigma.to_string(),
            self.lga.epsilon.to_string(),
            self.lga.padding.to_string(),
            self.lvp.to_string(),
            self.train.learning_rate.to_string(),
            self.train.batch_size.to_string(),
            self.train.epochs.to_string(),
            self.train.beta1.to_string(),
            self.train.beta2.to_string(),
            self.train.adam_eps.to_string(),
            self.threshold.to_string(),
            join(&self.perturbations),
            join(&self.ablate_sigmas),
            join(&self.ablate_operators),
            self.corpus_dir.display().to_string(),
            show_path(&self.manifest),
            show_path(&self.train_manifest),
            show_path(&self.test_manifest),
            show_path(&self.eval_manifest),
            self.features_dir.display().to_string(),
            show_path(&self.checkpoint),
            self.out_dir.display().to_string(),
            show_path(&self.heatmap_image),
            show_path(&self.heatmap_image2),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Rebuilds a config from [`snapshot`](Self::snapshot) output.
    pub fn from_snapshot(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical file form; loading it yields an equal config.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let config = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.synth_config().validate().map_err(config)?;
        self.lga.validate().map_err(config)?;
        self.train_config().validate().map_err(config)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("eval.threshold must be finite".into()));
        }
        if let Some(s) = self.ablate_sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("ablation sigma must be positive, got {s}")));
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn lvp_weights(&self) -> LvpWeights {
        match self.lvp {
            LvpChoice::Pow2 => LvpWeights::powers_of_two(),
            LvpChoice::Random => LvpWeights::random(self.seed),
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            lga: self.lga,
            lvp_weights: self.lvp_weights(),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.corpus_dir.join("manifest.csv"))
    }

    pub fn train_manifest_path(&self) -> PathBuf {
        self.train_manifest
            .clone()
            .unwrap_or_else(|| self.corpus_dir.join("train.csv"))
    }

    pub fn test_manifest_path(&self) -> PathBuf {
        self.test_manifest
            .clone()
            .unwrap_or_else(|| self.corpus_dir.join("test.csv"))
    }

    /// Manifest scored by `eval` and `perturb-eval`; the test split unless set.
    pub fn eval_manifest_path(&self) -> PathBuf {
        self.eval_manifest
            .clone()
            .unwrap_or_else(|| self.test_manifest_path())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }
}
