use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse over zero values".into()));
    }
    let total: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    mse_loss(pred, target).map(f64::sqrt)
}

/// Affine target standardisation fitted on the training partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNorm {
    pub mean: f64,
    pub std: f64,
}

impl TargetNorm {
    pub const IDENTITY: TargetNorm = TargetNorm { mean: 0.0, std: 1.0 };

    /// Population mean and standard deviation; a constant target keeps unit scale.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("no training targets".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        })
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss in normalised units.
    pub train_loss: f64,
    /// Validation MSE in normalised units.
    pub val_loss: f64,
    /// Validation RMSE in raw target units.
    pub val_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub name: String,
    pub target: f64,
    pub prediction: f64,
}

/// Outcome of one training run. All RMSE values are in raw target units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub val_rmse: f64,
    pub train_rmse: f64,
    /// Epoch whose parameters were kept; 0 means the initialisation.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curve: Vec<EpochRecord>,
    pub test_predictions: Vec<Prediction>,
    pub seconds: f64,
}

impl Metrics {
    /// Equality of everything except wall-clock time.
    pub fn same_results(&self, other: &Metrics) -> bool {
        self.rmse.to_bits() == other.rmse.to_bits()
            && self.val_rmse.to_bits() == other.val_rmse.to_bits()
            && self.train_rmse.to_bits() == other.train_rmse.to_bits()
            && self.best_epoch == other.best_epoch
            && self.epochs_run == other.epochs_run
            && self.curve == other.curve
            && self.test_predictions == other.test_predictions
    }

    /// Test RMSE recomputed from the stored per-molecule predictions.
    pub fn recompute_rmse(&self) -> Result<f64> {
        let (p, t): (Vec<f64>, Vec<f64>) = self
            .test_predictions
            .iter()
            .map(|r| (r.prediction, r.target))
            .unzip();
        rmse(&p, &t)
    }
}
