//! Run configuration: JSON config files layered under command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

/// Where the state comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSource {
    /// A state file in the `{n, m, mu, g}` format.
    File { path: PathBuf },
    /// Seeded random state with density spectra inside `spectrum`.
    Random { n: usize, m: usize, spectrum: [f64; 2] },
    /// Bundled deterministic demo state (n = 2, m = 128, margin ≥ 0.1).
    Demo,
    /// The balanced-pattern state at the given levels.
    Rudin { level: u32, balance_level: u32 },
}

/// Everything a run needs; flags override file values field by field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub state: Option<StateSource>,
    /// Named scalar test functions (`one`, `linear`, `square`, `cosine`).
    pub functions: Vec<String>,
    pub eps: Vec<f64>,
    pub level: Option<u32>,
    pub smooth_level: Option<u32>,
    pub lambdas: Vec<f64>,
    pub theta: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            state: None,
            functions: vec![
                "one".into(),
                "linear".into(),
                "square".into(),
                "cosine".into(),
            ],
            eps: vec![0.4, 0.2, 0.1],
            level: None,
            smooth_level: None,
            lambdas: vec![0.0, 0.25, 0.5, 1.0],
            theta: None,
            seed: 42,
            out: None,
            tolerances: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(config)
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn parse_tol_overrides(&mut self, pairs: &[String]) -> anyhow::Result<()> {
        for pair in pairs {
            let Some((name, value)) = pair.split_once('=') else {
                bail!("--tol expects NAME=VALUE, got '{pair}'");
            };
            let value: f64 = value
                .parse()
                .with_context(|| format!("parsing tolerance value in '{pair}'"))?;
            self.tolerances.insert(name.to_string(), value);
        }
        Ok(())
    }
}
