use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arima::{ArimaOptions, ArimaOrder, OrderGrid};
use crate::data::{default_lag_spec, lag_column_name, CleaningConfig, LagSpec, Schema, CALENDAR_COLUMNS};
use crate::error::{Error, Result};
use crate::eval::{Family, DEFAULT_HORIZONS};
use crate::linear::{CvSearchSpec, ElasticNetOptions, SvrOptions};
use crate::neural::{ModelSpec, TrainConfig};
use crate::trees::{BoostSpec, ForestSpec, TreeGrid};

/// Configuration of the synthetic-data example run.
pub const BUNDLED_SYNTH_CONFIG: &str = include_str!("../../configs/synth.toml");

/// Environment variable consulted when neither a flag nor the config sets
/// the seed.
pub const SEED_ENV: &str = "AERIS_SEED";

/// Everything a run needs. Relative paths resolve against the directory of
/// the config file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Raw input file; when absent, `synth` must be given.
    pub input: Option<PathBuf>,
    /// Run directory.
    pub output: Option<PathBuf>,
    #[serde(default = "default_target")]
    pub target: String,
    /// Share of rows used for training; the rest is the test block.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    /// Defaults for every network; a model's own `training` table wins.
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
}

fn default_target() -> String {
    "PM2.5".into()
}

fn default_split() -> f64 {
    0.8
}

fn default_horizons() -> Vec<usize> {
    DEFAULT_HORIZONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Raw columns fed to networks and, at lag zero, to tabular models.
    /// Empty means every input column.
    pub channels: Vec<String>,
    pub lags: LagSpec,
    pub calendar: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            channels: Vec::new(),
            lags: default_lag_spec(),
            calendar: true,
        }
    }
}

impl FeatureConfig {
    pub fn channels(&self) -> Vec<String> {
        if self.channels.is_empty() {
            Schema::air_quality().columns
        } else {
            self.channels.clone()
        }
    }

    /// Tabular feature row: channels, then lag columns, then calendar.
    pub fn tabular_columns(&self) -> Vec<String> {
        let mut cols = self.channels();
        for (col, lags) in &self.lags {
            cols.extend(lags.iter().map(|&k| lag_column_name(col, k)));
        }
        if self.calendar {
            cols.extend(CALENDAR_COLUMNS.iter().map(|c| c.to_string()));
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Report and checkpoint name; defaults to the kind or architecture tag.
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: ModelKind,
}

/// Model choice. A missing strength selects it by time-ordered
/// cross-validation; a missing tree grid fits the given spec directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Ols,
    Ridge {
        lambda: Option<f64>,
        #[serde(default)]
        cv: CvSearchSpec,
    },
    Lasso {
        alpha: Option<f64>,
        #[serde(default)]
        cv: CvSearchSpec,
        #[serde(default)]
        options: ElasticNetOptions,
    },
    ElasticNet {
        alpha: Option<f64>,
        #[serde(default = "half")]
        l1_ratio: f64,
        #[serde(default)]
        cv: CvSearchSpec,
        #[serde(default)]
        options: ElasticNetOptions,
    },
    Svr {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "tenth")]
        epsilon: f64,
        #[serde(default)]
        options: SvrOptions,
    },
    RandomForest {
        #[serde(default)]
        spec: ForestSpec,
        grid: Option<TreeGrid>,
        #[serde(default = "three")]
        folds: usize,
    },
    GradientBoosting {
        #[serde(default)]
        spec: BoostSpec,
        grid: Option<TreeGrid>,
        #[serde(default = "three")]
        folds: usize,
    },
    Arima {
        order: Option<ArimaOrder>,
        grid: Option<OrderGrid>,
        #[serde(default)]
        exog: Vec<String>,
        #[serde(default)]
        options: ArimaOptions,
    },
    Neural {
        spec: ModelSpec,
        training: Option<TrainConfig>,
    },
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

fn three() -> usize {
    3
}

impl ModelKind {
    pub fn tag(&self) -> String {
        match self {
            ModelKind::Ols => "ols".into(),
            ModelKind::Ridge { .. } => "ridge".into(),
            ModelKind::Lasso { .. } => "lasso".into(),
            ModelKind::ElasticNet { .. } => "elastic-net".into(),
            ModelKind::Svr { .. } => "svr".into(),
            ModelKind::RandomForest { .. } => "random-forest".into(),
            ModelKind::GradientBoosting { .. } => "gradient-boosting".into(),
            ModelKind::Arima { .. } => "arima".into(),
            ModelKind::Neural { spec, .. } => spec.architecture.tag(),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelKind::Ols | ModelKind::Ridge { .. } | ModelKind::Lasso { .. } | ModelKind::ElasticNet { .. } => {
                Family::Linear
            }
            ModelKind::Svr { .. } | ModelKind::RandomForest { .. } | ModelKind::GradientBoosting { .. } => {
                Family::ClassicalMl
            }
            ModelKind::Arima { .. } => Family::Statistical,
            ModelKind::Neural { spec, .. } => {
                Family::from_network_family(spec.architecture.family()).unwrap_or(Family::FeedForward)
            }
        }
    }
}

impl ModelConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.tag())
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [&mut cfg.input, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYNTH_CONFIG).expect("bundled config parses")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies flag overrides, then the environment seed fallback.
    pub fn resolve(mut self, overrides: &Overrides, env_seed: Option<&str>) -> Result<Self> {
        if overrides.seed.is_some() {
            self.seed = overrides.seed;
        }
        if let Some(p) = &overrides.input {
            self.input = Some(p.clone());
        }
        if let Some(p) = &overrides.output {
            self.output = Some(p.clone());
        }
        if self.seed.is_none() {
            if let Some(s) = env_seed {
                let seed = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
                self.seed = Some(seed);
            }
        }
        Ok(self)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("a seed is required: set `seed`, pass --seed or export {SEED_ENV}")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        match (&self.input, &self.synth) {
            (Some(p), _) if !p.exists() => {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
            (None, None) => return Err(Error::Config("either `input` or a [synth] table is required".into())),
            _ => {}
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split must lie in (0, 1), got {}", self.split)));
        }
        let h = &self.horizons;
        if h.is_empty() || h.contains(&0) || h.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("horizons must be positive and strictly increasing".into()));
        }
        self.cleaning.validate()?;
        let mut names: Vec<String> = Vec::new();
        for m in &self.models {
            let name = m.name();
            if name == "persistence" || names.contains(&name) {
                return Err(Error::Config(format!("model name `{name}` is reserved or repeated")));
            }
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!("model name `{name}` must be non-empty and use [A-Za-z0-9._-]")));
            }
            match &m.kind {
                ModelKind::Arima { order: None, grid: None, .. } => {
                    return Err(Error::Config(format!("model `{name}` needs an `order` or a `grid`")));
                }
                ModelKind::Neural { spec, .. } => {
                    spec.validate()?;
                    let heads = spec.horizons();
                    if let Some(h) = self.horizons.iter().find(|h| !heads.contains(h)) {
                        return Err(Error::Config(format!("model `{name}` has no {h}h output")));
                    }
                }
                _ => {}
            }
            names.push(name);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_roundtrips() {
        let cfg = RunConfig::bundled();
        assert!(cfg.models.len() >= 3);
        let back = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn precedence_flag_then_config_then_env() {
        let base = RunConfig::parse("seed = 3\n[synth]\nhours = 300\n").unwrap();
        let flag = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        assert_eq!(base.clone().resolve(&flag, Some("5")).unwrap().seed, Some(9));
        assert_eq!(base.clone().resolve(&Overrides::default(), Some("5")).unwrap().seed, Some(3));
        let bare = RunConfig::parse("[synth]\nhours = 300\n").unwrap();
        assert_eq!(bare.clone().resolve(&Overrides::default(), Some("5")).unwrap().seed, Some(5));
        let unresolved = bare.clone().resolve(&Overrides::default(), None).unwrap();
        assert!(unresolved.validate().is_err());
        assert!(bare.resolve(&Overrides::default(), Some("x")).is_err());
    }

    #[test]
    fn model_table_parsing() {
        let cfg = RunConfig::parse(
            r#"
            seed = 1
            [synth]
            hours = 400
            [[models]]
            kind = "ridge"
            lambda = 0.5
            [[models]]
            kind = "arima"
            name = "arimax"
            exog = ["NO2"]
            order = { p = 2, q = 1 }
            [[models]]
            kind = "neural"
            [models.spec]
            architecture = "gru"
            units = 8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.models[0].kind, ModelKind::Ridge { lambda: Some(0.5), cv: CvSearchSpec::default() });
        assert_eq!(cfg.models[1].name(), "arimax");
        let ModelKind::Arima { order: Some(o), .. } = &cfg.models[1].kind else { panic!() };
        assert_eq!((o.p, o.d, o.q, o.period), (2, 0, 1, 1));
        assert_eq!(cfg.models[2].name(), "gru");
        assert_eq!(cfg.models[2].kind.family(), Family::Recurrent);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::parse("seed = 1\nbogus = 2\n").is_err());
        let dup = RunConfig::parse("seed = 1\n[synth]\nhours = 300\n[[models]]\nkind = \"ols\"\n[[models]]\nkind = \"ols\"\n")
            .unwrap();
        assert!(dup.validate().is_err());
        let missing = RunConfig::parse("seed = 1\ninput = \"/no/such/file.csv\"\n").unwrap();
        assert!(missing.validate().is_err());
        let short = RunConfig::parse(
            "seed = 1\n[synth]\nhours = 300\n[[models]]\nkind = \"neural\"\n[models.spec]\narchitecture = \"mlp\"\nhorizons = [1]\n",
        )
        .unwrap();
        assert!(short.validate().is_err());
    }

    #[test]
    fn tabular_columns_layout() {
        let f = FeatureConfig {
            channels: vec!["PM2.5".into()],
            lags: [("PM2.5".to_string(), vec![1, 2])].into_iter().collect(),
            calendar: false,
        };
        assert_eq!(f.tabular_columns(), ["PM2.5", "PM2.5_lag1", "PM2.5_lag2"]);
    }
}
