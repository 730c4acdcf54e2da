use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uneven::calibrate::CalibrationConfig;
use uneven::corpus::{BudgetPlan, SyntheticConfig};
use uneven::metrics::EvalOptions;
use uneven::strategies::{StrategySpec, Task};

/// Where the training pool and evaluation set come from. Either `synthetic`
/// (plus `n_eval`) or `train` and `eval` file paths must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Size of the synthetic evaluation set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<PathBuf>,
    /// One label per line. Defaults to `e`, `n`, `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
}

/// One experiment: corpus, budget plan, strategy, optional calibration, and
/// the seeds to run. `strategy.seed` is ignored; each run uses its own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Task,
    pub corpus: CorpusConfig,
    pub plan: BudgetPlan,
    pub strategy: StrategySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        match (&c.synthetic, &c.train, &c.eval) {
            (Some(s), None, None) => {
                s.validate()?;
                if c.n_eval.unwrap_or(0) == 0 {
                    bail!(uneven::Error::InvalidConfig("synthetic corpus needs n_eval >= 1".into()));
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => bail!(uneven::Error::InvalidConfig(
                "corpus needs either `synthetic` with `n_eval`, or both `train` and `eval` paths".into()
            )),
        }
        if self.seeds.is_empty() {
            bail!(uneven::Error::InvalidConfig("seeds must not be empty".into()));
        }
        self.plan.validate()?;
        self.strategy.validate()?;
        Ok(())
    }

    /// Hex digest identifying everything that affects results except the run
    /// seed and the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.out = PathBuf::new();
        canonical.strategy.seed = 0;
        // serde_json maps are sorted, so the encoding is canonical.
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
