//! Finite-difference gradient checks.
//!
//! The central-difference estimate here never touches [`Tape::backward`],
//! so it serves as an independent reference for the analytic gradients.
//!
//! [`Tape::backward`]: crate::numcore::Tape::backward

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distgeo::{build_distgeo, DistGeoGraph, MaxOrder};
use crate::model::{ForwardOptions, Model, ModelKind, ModelSpec, Pooling};
use crate::numcore::{Tape, Tensor};
use crate::synth::random_molecule;
use crate::Result;

/// Entries whose analytic and numeric gradients are both below this are
/// compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-7;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central differences `(f(p + h) - f(p - h)) / 2h` for every entry.
pub fn central_difference(f: &dyn Fn(&[Tensor]) -> f64, params: &[Tensor], h: f64) -> Vec<Tensor> {
    let mut work = params.to_vec();
    let mut out: Vec<Tensor> = params
        .iter()
        .map(|p| Tensor::zeros(p.rows(), p.cols()))
        .collect();
    for t in 0..work.len() {
        for i in 0..work[t].data().len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + h;
            let plus = f(&work);
            work[t].data_mut()[i] = orig - h;
            let minus = f(&work);
            work[t].data_mut()[i] = orig;
            out[t].data_mut()[i] = (plus - minus) / (2.0 * h);
        }
    }
    out
}

/// Outcome of [`check_model_gradients`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub entries_checked: usize,
}

/// Compares tape gradients of the batch MSE loss of a DG-GCN against central
/// differences on `num_molecules` random molecules.
///
/// Every entry of every parameter tensor is perturbed, so keep `spec` small.
pub fn check_model_gradients(
    spec: &ModelSpec,
    num_molecules: usize,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<DistGeoGraph> = (0..num_molecules)
        .map(|_| {
            let n = rng.gen_range(2..=9);
            let g = random_molecule(&mut rng, n, spec.in_features);
            build_distgeo(&g, spec.max_order)
        })
        .collect::<std::result::Result<_, _>>()?;
    let targets: Vec<f64> = (0..num_molecules).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let model = Model::init(spec.clone(), seed)?;
    let refs: Vec<&DistGeoGraph> = graphs.iter().collect();
    let batch = model.prepare_batch(&refs)?;
    let opts = ForwardOptions::default();

    let (_, grads) = model.loss_and_grads(&batch, &targets, &opts)?;
    let params = model.params().values().to_vec();
    let eval = |ps: &[Tensor]| -> f64 {
        let mut m = model.clone();
        m.params_mut().values_mut().clone_from_slice(ps);
        let mut tape = Tape::new();
        let vars = m.params().bind(&mut tape);
        let (loss, _) = m
            .record_loss(&mut tape, &vars, &batch, &targets, &opts)
            .expect("forward");
        tape.value(loss).data()[0]
    };
    let numeric = central_difference(&eval, &params, h);

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        entries_checked: 0,
    };
    for (i, (a, n)) in grads.iter().zip(&numeric).enumerate() {
        let err = max_relative_error(std::slice::from_ref(a), std::slice::from_ref(n));
        report.entries_checked += a.data().len();
        if err >= report.max_rel_err {
            report.max_rel_err = err;
            report.worst_param = model.params().names()[i].clone();
        }
    }
    Ok(report)
}

/// Compact DG-GCN used by the command-line gradient check.
pub fn small_spec(in_features: usize, max_order: MaxOrder, pooling: Pooling) -> ModelSpec {
    ModelSpec {
        kind: ModelKind::DgGcn,
        in_features,
        width: 8,
        num_layers: 3,
        max_order,
        pooling,
        ..ModelSpec::default()
    }
    .with_gaussians(12, 5.0)
}
