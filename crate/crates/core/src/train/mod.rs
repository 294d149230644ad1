//! Training loop, metrics, checkpoints and experiment grids.
//!
//! A run fits the featurizer and target standardisation on the training
//! partition, prepares every molecule once, then runs minibatch Adam on the
//! MSE loss. After each epoch the validation RMSE decides whether the current
//! parameters become the kept ones; training stops after `patience` epochs
//! without improvement.

mod checkpoint;
mod config;
mod data;
mod grid;
mod metrics;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chemio::{featurize_nodes, DatasetSplit, Featurizer, Graph3D};
use crate::distgeo::build_distgeo;
use crate::model::{Batch, ForwardOptions, Model, PreparedGraph};
use crate::numcore::{adam_step, AdamState, NumError};
use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{apply_override, DatasetConfig, RunConfig, SplitConfig, CONFIG_VERSION};
pub use data::{load_dataset, make_split};
pub use grid::{median, comparison_grid, run_grid, run_grid_with_threads, FailedRun, GridCell, ResultRow, ResultsTable, SummaryRow};
pub use metrics::{mse_loss, rmse, EpochRecord, Metrics, Prediction, TargetNorm};

/// Molecules per forward pass when only predicting.
pub const EVAL_BATCH: usize = 128;

/// A model together with the preprocessing it was trained with.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub model: Model,
    pub featurizer: Featurizer,
    pub target_norm: TargetNorm,
}

impl Predictor {
    pub fn prepare(&self, graphs: &[Graph3D]) -> Result<Vec<PreparedGraph>> {
        prepare_all(&self.model, &self.featurizer, graphs)
    }

    /// Predictions in raw target units.
    pub fn predict(&self, graphs: &[Graph3D]) -> Result<Vec<f64>> {
        let prepared = self.prepare(graphs)?;
        Ok(predict_normalized(&self.model, &prepared)?
            .into_iter()
            .map(|z| self.target_norm.denormalize(z))
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub predictor: Predictor,
    pub metrics: Metrics,
}

fn prepare_all(model: &Model, featurizer: &Featurizer, graphs: &[Graph3D]) -> Result<Vec<PreparedGraph>> {
    graphs
        .iter()
        .map(|g| {
            let g = featurize_nodes(g, featurizer);
            let dg = build_distgeo(&g, model.spec().max_order)?;
            model.prepare_graph(&dg)
        })
        .collect()
}

fn predict_normalized(model: &Model, prepared: &[PreparedGraph]) -> Result<Vec<f64>> {
    let opts = ForwardOptions::default();
    let mut out = Vec::with_capacity(prepared.len());
    for chunk in prepared.chunks(EVAL_BATCH) {
        let refs: Vec<&PreparedGraph> = chunk.iter().collect();
        let batch = Batch::from_prepared(&refs, model.spec().pooling);
        out.extend(model.predict_batch(&batch, &opts)?);
    }
    Ok(out)
}

fn targets_of(graphs: &[Graph3D], partition: &str) -> Result<Vec<f64>> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput(format!("{partition} partition is empty")));
    }
    graphs
        .iter()
        .map(|g| {
            g.target
                .ok_or_else(|| Error::Config(format!("molecule {} has no target", g.name)))
        })
        .collect()
}

struct Evaluation {
    /// MSE in normalised units.
    loss: f64,
    rmse: f64,
    raw: Vec<f64>,
}

fn evaluate(model: &Model, prepared: &[PreparedGraph], y: &[f64], norm: &TargetNorm) -> Result<Evaluation> {
    let z = predict_normalized(model, prepared)?;
    let zt: Vec<f64> = y.iter().map(|&v| norm.normalize(v)).collect();
    let raw: Vec<f64> = z.iter().map(|&v| norm.denormalize(v)).collect();
    Ok(Evaluation {
        loss: mse_loss(&z, &zt)?,
        rmse: rmse(&raw, y)?,
        raw,
    })
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Num(NumError::NonFinite { .. }) => Error::Diverged {
            epoch,
            detail: e.to_string(),
        },
        other => other,
    }
}

/// Trains one model on `split` as configured by `cfg`.
///
/// With `cfg.epochs == 0` the initial parameters are evaluated and returned.
pub fn train_model(split: &DatasetSplit, cfg: &RunConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let y_train = targets_of(&split.train, "train")?;
    let y_val = targets_of(&split.val, "validation")?;
    let y_test = targets_of(&split.test, "test")?;

    let featurizer = Featurizer::fit(&split.train);
    let mut spec = cfg.model.clone();
    spec.in_features = featurizer.dim();
    let mut model = Model::init(spec, cfg.seed)?;
    let norm = if cfg.normalize_targets {
        TargetNorm::fit(&y_train)?
    } else {
        TargetNorm::IDENTITY
    };
    let z_train: Vec<f64> = y_train.iter().map(|&v| norm.normalize(v)).collect();
    let train = prepare_all(&model, &featurizer, &split.train)?;
    let val = prepare_all(&model, &featurizer, &split.val)?;
    let test = prepare_all(&model, &featurizer, &split.test)?;

    let opts = ForwardOptions::default();
    let pooling = model.spec().pooling;
    let mut adam = AdamState::new(model.params().values());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut best_val = evaluate(&model, &val, &y_val, &norm).map_err(diverged(0))?.rmse;
    let mut best_params = model.params().clone();
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&PreparedGraph> = chunk.iter().map(|&i| &train[i]).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| z_train[i]).collect();
            let batch = Batch::from_prepared(&refs, pooling);
            let (loss, grads) = model
                .loss_and_grads(&batch, &targets, &opts)
                .map_err(diverged(epoch))?;
            adam_step(model.params_mut().values_mut(), &grads, &mut adam, &cfg.optimizer)
                .map_err(|e| diverged(epoch)(e.into()))?;
            loss_sum += loss * chunk.len() as f64;
        }
        let ev = evaluate(&model, &val, &y_val, &norm).map_err(diverged(epoch))?;
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !ev.rmse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite loss".into(),
            });
        }
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: ev.loss,
            val_rmse: ev.rmse,
        });
        log::debug!("epoch {epoch}: train_loss={train_loss:.5} val_rmse={:.5}", ev.rmse);
        if ev.rmse < best_val {
            best_val = ev.rmse;
            best_epoch = epoch;
            best_params = model.params().clone();
        }
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    let epochs_run = curve.len();
    model.params_mut().load_from(&best_params)?;

    let test_ev = evaluate(&model, &test, &y_test, &norm)?;
    let val_ev = evaluate(&model, &val, &y_val, &norm)?;
    let train_ev = evaluate(&model, &train, &y_train, &norm)?;
    let test_predictions = split
        .test
        .iter()
        .zip(&y_test)
        .zip(&test_ev.raw)
        .map(|((g, &target), &prediction)| Prediction {
            name: g.name.clone(),
            target,
            prediction,
        })
        .collect();
    let metrics = Metrics {
        rmse: test_ev.rmse,
        val_rmse: val_ev.rmse,
        train_rmse: train_ev.rmse,
        best_epoch,
        epochs_run,
        curve,
        test_predictions,
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{} order={} pooling={} seed={}: test_rmse={:.4} best_epoch={best_epoch} ({:.1}s)",
        model.spec().kind.as_str(),
        model.spec().max_order,
        pooling.as_str(),
        cfg.seed,
        metrics.rmse,
        metrics.seconds
    );
    Ok(TrainOutcome {
        predictor: Predictor {
            model,
            featurizer,
            target_norm: norm,
        },
        metrics,
    })
}
