use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chemio::Featurizer;
use crate::model::{Model, ParamStore};
use crate::{Error, Result};

use super::{Predictor, RunConfig, TargetNorm};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything `eval` needs to reproduce a trained model's predictions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub featurizer: Featurizer,
    pub target_norm: TargetNorm,
    pub params: ParamStore,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, predictor: &Predictor) -> Self {
        let mut config = config.clone();
        config.model.in_features = predictor.featurizer.dim();
        Self {
            format_version: CHECKPOINT_VERSION,
            config,
            featurizer: predictor.featurizer.clone(),
            target_norm: predictor.target_norm,
            params: predictor.model.params().clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: probe.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(file), &mut text)?;
        Self::from_json(&text)
    }

    /// Rebuilds the model; parameter names and shapes must match the config.
    pub fn into_predictor(self) -> Result<Predictor> {
        let mut spec = self.config.model.clone();
        spec.in_features = self.featurizer.dim();
        let mut model = Model::init(spec, 0)?;
        model.params_mut().load_from(&self.params)?;
        Ok(Predictor {
            model,
            featurizer: self.featurizer,
            target_norm: self.target_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn predictor() -> (RunConfig, Predictor) {
        let featurizer = Featurizer::new(vec!["C".into(), "O".into()]);
        let cfg = RunConfig {
            model: ModelSpec {
                width: 4,
                ..ModelSpec::default()
            }
            .with_gaussians(6, 5.0),
            ..RunConfig::default()
        };
        let mut spec = cfg.model.clone();
        spec.in_features = featurizer.dim();
        let p = Predictor {
            model: Model::init(spec, 11).unwrap(),
            featurizer,
            target_norm: TargetNorm { mean: -2.5, std: 1.75 },
        };
        (cfg, p)
    }

    #[test]
    fn round_trip_is_exact() {
        let (cfg, p) = predictor();
        let ck = Checkpoint::new(&cfg, &p);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap().into_predictor().unwrap();
        assert_eq!(back.model.params().values(), p.model.params().values());
        assert_eq!(back.featurizer, p.featurizer);
        assert_eq!(back.target_norm, p.target_norm);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let (cfg, p) = predictor();
        let mut ck = Checkpoint::new(&cfg, &p);
        ck.format_version = 7;
        let err = Checkpoint::from_json(&ck.to_json()).unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, .. }), "{err}");
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let (cfg, p) = predictor();
        let mut ck = Checkpoint::new(&cfg, &p);
        ck.config.model.width = 6;
        assert!(ck.into_predictor().is_err());
    }
}
