//! Run configuration: one TOML document, overridable by `CALIBFIELD_*`
//! environment variables and command-line flags, always written back out in
//! fully resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::{PipelineConfig, RegimeConfig};
use crate::dataio::{load_triples, Dataset, Format, SplitSpec};
use crate::error::{Error, Result};
use crate::field::{KernelConfig, LossConfig, TrainConfig};
use crate::geometry::NetArch;
use crate::recal::{Capacity, CorrectionConfig};
use crate::selection::HyperGrid;
use crate::synth::{gen_pseudo_llm, gen_sinusoidal, gen_three_cluster, PseudoLlmSpec, SinusoidSpec, ThreeClusterSpec};

pub const ENV_PREFIX: &str = "CALIBFIELD_";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// Inputs at or below this dimension get the small synthetic network.
pub const SYNTHETIC_ARCH_MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    ThreeCluster(ThreeClusterSpec),
    Sinusoidal(SinusoidSpec),
    PseudoLlm(PseudoLlmSpec),
    File { path: PathBuf, format: Option<Format> },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::ThreeCluster(ThreeClusterSpec::default())
    }
}

impl DataSource {
    pub fn is_synthetic(&self) -> bool {
        !matches!(self, DataSource::File { .. })
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::ThreeCluster(s) => gen_three_cluster(s),
            DataSource::Sinusoidal(s) => gen_sinusoidal(s),
            DataSource::PseudoLlm(s) => gen_pseudo_llm(s),
            DataSource::File { path, format } => {
                let fmt = match format {
                    Some(f) => *f,
                    None => Format::from_path(path).ok_or_else(|| {
                        Error::Config(format!("cannot infer format of {}; set data.format", path.display()))
                    })?,
                };
                load_triples(path, fmt)
            }
        }
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            DataSource::ThreeCluster(s) => s.seed = seed,
            DataSource::Sinusoidal(s) => s.seed = seed,
            DataSource::PseudoLlm(s) => s.seed = seed,
            DataSource::File { .. } => {}
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DataSource::ThreeCluster(s) => s.validate(),
            DataSource::Sinusoidal(s) => s.validate(),
            DataSource::PseudoLlm(s) => s.validate(),
            DataSource::File { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSettings {
    pub bootstrap: usize,
    pub permutation_null: usize,
    pub seeds: Vec<u64>,
    /// Bandwidths tried for the raw-embedding comparison.
    pub raw_sigmas: Vec<f64>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            bootstrap: 0,
            permutation_null: 0,
            seeds: Vec::new(),
            raw_sigmas: vec![0.05, 0.1, 0.3, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResRegSettings {
    pub ladder: Vec<Capacity>,
    pub dropout: f64,
    pub max_epochs: usize,
}

impl Default for ResRegSettings {
    fn default() -> Self {
        Self {
            ladder: Capacity::default_ladder(),
            dropout: 0.1,
            max_epochs: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    /// On-disk format for generated datasets.
    pub format: Format,
    pub data: DataSource,
    pub split: SplitSpec,
    /// Filled from the data dimension when absent.
    pub arch: Option<NetArch>,
    pub kernel: KernelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub grid: HyperGrid,
    pub regime: RegimeConfig,
    pub correction: CorrectionConfig,
    pub resreg: ResRegSettings,
    pub audit: AuditSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            out_dir: None,
            format: Format::Csv,
            data: DataSource::default(),
            split: SplitSpec::default(),
            arch: None,
            kernel: KernelConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            grid: HyperGrid::default(),
            regime: RegimeConfig::default(),
            correction: CorrectionConfig::default(),
            resreg: ResRegSettings::default(),
            audit: AuditSettings::default(),
        }
    }
}

/// Default network for an input dimension.
pub fn default_arch(dim: usize) -> NetArch {
    if dim <= SYNTHETIC_ARCH_MAX_DIM {
        NetArch::synthetic(dim)
    } else {
        NetArch::embedding(dim)
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // Accept any TOML value literal (numbers, booleans, arrays, quoted
    // strings); anything else is taken as a bare string.
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("path is nonempty");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("cannot override inside non-table key `{key}`")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Parse a TOML document; absent keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text)
    }

    /// Apply `CALIBFIELD_SECTION__KEY=value` overrides. A double underscore
    /// separates nesting levels; keys are lowercased.
    pub fn with_env_overrides<I, K, V>(self, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut overrides: Vec<(Vec<String>, toml::Value)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.as_ref().strip_prefix(ENV_PREFIX)?;
                if rest.is_empty() {
                    return None;
                }
                let path = rest.split("__").map(str::to_lowercase).collect();
                Some((path, parse_scalar(v.as_ref())))
            })
            .collect();
        if overrides.is_empty() {
            return Ok(self);
        }
        overrides.sort_by(|a, b| a.0.cmp(&b.0));
        let mut root = toml::Table::try_from(&self).map_err(|e| Error::Config(e.to_string()))?;
        for (path, value) in overrides {
            set_path(&mut root, &path, value)?;
        }
        root.try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid environment override: {e}")))
    }

    /// Set every seed in the configuration from one value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.set_seed(seed);
        self.split.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.data.validate()?;
        self.split.validate()?;
        if let Some(a) = &self.arch {
            a.validate()?;
        }
        self.kernel.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.grid.validate()?;
        self.regime.validate()?;
        self.correction.validate()?;
        if self.resreg.ladder.is_empty() || !(0.0..1.0).contains(&self.resreg.dropout) {
            return Err(Error::Config("resreg needs a nonempty ladder and dropout in [0,1)".into()));
        }
        if self.audit.raw_sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("audit.raw_sigmas must be positive".into()));
        }
        Ok(())
    }

    /// Fill data-dependent defaults.
    pub fn resolve(&mut self, dim: usize) -> Result<NetArch> {
        let arch = *self.arch.get_or_insert_with(|| default_arch(dim));
        if arch.input_dim != dim {
            return Err(Error::Shape(format!(
                "config arch.input_dim = {} but the data has dimension {dim}",
                arch.input_dim
            )));
        }
        Ok(arch)
    }

    pub fn pipeline(&self, arch: NetArch) -> PipelineConfig {
        PipelineConfig {
            arch,
            grid: self.grid.clone(),
            train: self.train,
            regime: self.regime.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
