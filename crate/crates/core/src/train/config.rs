use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chemio::SplitSizes;
use crate::model::ModelSpec;
use crate::numcore::AdamConfig;
use crate::{Error, Result};

/// Bumped whenever a field changes meaning.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// `.sdf` or `.jsonl`.
    pub path: PathBuf,
    /// Label written to results tables.
    pub name: String,
    /// SDF data item holding the target.
    pub target_field: String,
    /// Optional `id,target` sidecar CSV for SDF input.
    pub targets_csv: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            name: String::new(),
            target_field: "target".into(),
            targets_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    /// JSON file with `train`/`val`/`test` index lists; overrides the shuffle.
    pub indices: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSizes::ESOL;
        Self {
            train: s.train,
            val: s.val,
            test: s.test,
            seed: 0,
            indices: None,
        }
    }
}

impl SplitConfig {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }

    pub fn with_sizes(mut self, s: SplitSizes) -> Self {
        self.train = s.train;
        self.val = s.val;
        self.test = s.test;
        self
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub batch_size: usize,
    pub normalize_targets: bool,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub model: ModelSpec,
    pub optimizer: AdamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            epochs: 500,
            patience: 50,
            batch_size: 32,
            normalize_targets: true,
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            model: ModelSpec::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.check_version()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::from_toml_str(&text)
    }

    /// Parses `path` (if any), then applies `key.path=value` overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = read_text(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        Self::from_table(table)
    }

    pub fn check_version(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Version {
                what: "config",
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Sets a dotted key in a TOML table. Values parse as TOML scalars or
/// arrays when possible and fall back to plain strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts
        .split_last()
        .filter(|(l, _)| !l.is_empty())
        .ok_or_else(|| Error::Config(format!("empty override key in {assignment:?}")))?;
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distgeo::MaxOrder;
    use crate::model::{ModelKind, Pooling};

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!((c.epochs, c.patience, c.batch_size), (500, 50, 32));
        assert_eq!(c.model.width, 64);
        assert_eq!(c.model.num_layers, 3);
        assert_eq!(c.model.basis.num_gaussians, 50);
        assert_eq!(c.model.basis.cutoff, 10.0);
        assert_eq!(c.optimizer, AdamConfig::default());
    }

    #[test]
    fn toml_and_overrides() {
        let text = r#"
            seed = 4
            [model]
            kind = "geometric"
            max_order = 2
            [dataset]
            path = "x.sdf"
        "#;
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.kind, ModelKind::Geometric);
        assert_eq!(c.model.max_order, MaxOrder::SECOND);
        assert_eq!(c.batch_size, 32);

        let mut table: toml::Table = toml::from_str(text).unwrap();
        apply_override(&mut table, "model.pooling=sum").unwrap();
        apply_override(&mut table, "model.basis.cutoff = 6.5").unwrap();
        apply_override(&mut table, "optimizer.lr=3e-3").unwrap();
        apply_override(&mut table, "dataset.name=esol").unwrap();
        let c = RunConfig::from_table(table).unwrap();
        assert_eq!(c.model.pooling, Pooling::Sum);
        assert_eq!(c.model.basis.cutoff, 6.5);
        assert_eq!(c.optimizer.lr, 3e-3);
        assert_eq!(c.dataset.name, "esol");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let err = RunConfig::from_toml_str("version = 99").unwrap_err();
        assert!(matches!(err, Error::Version { found: 99, .. }), "{err}");
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(RunConfig::from_toml_str("[model]\nmax_order = 5").is_err());
        assert!(RunConfig::from_toml_str("[model]\nkind = \"gat\"").is_err());
        let mut t = toml::Table::new();
        assert!(apply_override(&mut t, "no_equals_sign").is_err());
    }
}
