use std::path::{Path, PathBuf};

use fairprice_core::datakit::{synth_generate, Dataset, GeneratorSpec, Schema};
use fairprice_core::ensemble::EnsembleConfig;
use fairprice_core::fairmodels::{FairConfig, FairModelKind};
use fairprice_core::metrics::{EvaluatorConfig, Grouping};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "FAIRPRICE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv { path: PathBuf, schema: Schema },
    Generator(GeneratorSpec),
    Preset { name: String, n: usize, tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub solidarity: Vec<Grouping>,
    pub lift_bins: usize,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            solidarity: vec![Grouping::banded("age", 10.0)],
            lift_bins: 10,
        }
    }
}

fn default_models() -> Vec<FairModelKind> {
    FairModelKind::ALL.to_vec()
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every stochastic step; falls back to `FAIRPRICE_SEED`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub fair: FairConfig,
    #[serde(default = "default_models")]
    pub models: Vec<FairModelKind>,
    #[serde(default)]
    pub metrics: EvaluatorConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid run config: {e}")))
    }

    /// Reads a config file; relative CSV paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| fairprice_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Csv { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Fills the seed from the environment when absent, then copies it into
    /// every seeded sub-configuration.
    pub fn resolve(mut self, env_seed: Option<&str>) -> CliResult<Self> {
        let seed = match (self.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            (None, None) => {
                return Err(CliError::Config(format!("no seed: set `seed` in the config or {SEED_ENV}")));
            }
        };
        self.seed = Some(seed);
        for fair in [&mut self.fair, &mut self.ensemble.fair] {
            fair.forest.seed = seed;
            fair.mnn.init_seed = seed;
            fair.mnn.train.seed = seed;
        }
        self.metrics.seed = seed;
        self.metrics.forest.seed = seed;
        self.ensemble.seed = seed;
        self.ensemble.evaluator.forest.seed = seed;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config carries a seed")
    }

    pub fn generator(&self) -> CliResult<Option<GeneratorSpec>> {
        Ok(match &self.data {
            DataSource::Csv { .. } => None,
            DataSource::Generator(spec) => Some(spec.clone()),
            DataSource::Preset { name, n, tau } => Some(GeneratorSpec::preset(name, *n, *tau)?),
        })
    }

    pub fn dataset(&self) -> CliResult<Dataset> {
        match &self.data {
            DataSource::Csv { path, schema } => Ok(Dataset::load_csv(path, schema)?),
            _ => {
                let spec = self.generator()?.expect("generator source");
                Ok(synth_generate(&spec, self.seed())?)
            }
        }
    }

    /// Stratified `(train, test)` split under the run seed.
    pub fn split(&self) -> CliResult<(Dataset, Dataset)> {
        Ok(self.dataset()?.split(self.test_fraction, self.seed())?)
    }
}
