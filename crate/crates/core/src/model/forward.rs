use super::{Batch, Dense, FilterLayout, GaussianBasis, Model};
use crate::distgeo::DistGeoGraph;
use crate::numcore::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Switches used by diagnostics and reduction tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Replace every learned filter by the all-ones vector.
    pub unit_filter: bool,
    /// Drop the nonlinearity after each conv layer.
    pub skip_conv_activation: bool,
}

fn dense(tape: &mut Tape, vars: &[Var], layer: &Dense, x: Var) -> Result<Var> {
    let y = tape.matmul(x, vars[layer.w.0])?;
    Ok(match layer.b {
        Some(b) => tape.add_row(y, vars[b.0])?,
        None => y,
    })
}

fn filter(tape: &mut Tape, vars: &[Var], f: &FilterLayout, rbf: Var) -> Result<Var> {
    let h = dense(tape, vars, &f.hidden, rbf)?;
    let h = tape.ssp(h)?;
    let o = dense(tape, vars, &f.out, h)?;
    Ok(tape.ssp(o)?)
}

impl Model {
    /// Node states after the conv stack, `N × width`.
    pub fn record_node_states(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        opts: &ForwardOptions,
    ) -> Result<Var> {
        let x = tape.constant(batch.x.clone());
        let mut h = dense(tape, vars, &self.layout.embed, x)?;
        let rbf = batch.rbf.as_ref().map(|r| tape.constant(r.clone()));
        let edge_coef = tape.constant(batch.edge_coef.clone());
        let self_coef = tape.constant(batch.self_coef.clone());
        for conv in &self.layout.convs {
            let hin = dense(tape, vars, &conv.lin_in, h)?;
            let mut msg = tape.gather_rows(hin, &batch.src)?;
            if let (Some(f), false) = (&conv.filter, opts.unit_filter) {
                let rbf = rbf.ok_or_else(|| {
                    Error::Config("batch lacks the basis expansion this model needs".into())
                })?;
                let w = filter(tape, vars, f, rbf)?;
                let w = tape.gather_rows(w, &batch.edge_pair)?;
                msg = tape.mul(msg, w)?;
            }
            let msg = tape.scale_rows(msg, edge_coef)?;
            let agg = tape.segment_sum(msg, &batch.dst, batch.num_nodes)?;
            let own = tape.scale_rows(hin, self_coef)?;
            let pre = tape.add(own, agg)?;
            let out = dense(tape, vars, &conv.lin_out, pre)?;
            h = if opts.skip_conv_activation {
                out
            } else {
                tape.ssp(out)?
            };
        }
        Ok(h)
    }

    /// Pooled graph representations, `B × width`.
    pub fn record_pooled(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        opts: &ForwardOptions,
    ) -> Result<Var> {
        let h = self.record_node_states(tape, vars, batch, opts)?;
        let pooled = tape.segment_sum(h, &batch.node_graph, batch.num_graphs)?;
        Ok(match &batch.pool_scale {
            Some(s) => {
                let s = tape.constant(s.clone());
                tape.scale_rows(pooled, s)?
            }
            None => pooled,
        })
    }

    /// Predictions in the model's output space, `B × 1`.
    pub fn record_predictions(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        opts: &ForwardOptions,
    ) -> Result<Var> {
        let pooled = self.record_pooled(tape, vars, batch, opts)?;
        let r = dense(tape, vars, &self.layout.readout_hidden, pooled)?;
        let r = tape.ssp(r)?;
        dense(tape, vars, &self.layout.readout_out, r)
    }

    /// Mean squared error against `targets`; returns `(loss, predictions)`.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        targets: &[f64],
        opts: &ForwardOptions,
    ) -> Result<(Var, Var)> {
        if targets.len() != batch.num_graphs {
            return Err(Error::Config(format!(
                "{} targets for {} molecules",
                targets.len(),
                batch.num_graphs
            )));
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput("loss over zero molecules".into()));
        }
        let pred = self.record_predictions(tape, vars, batch, opts)?;
        let t = tape.constant(Tensor::column(targets.to_vec()));
        let diff = tape.sub(pred, t)?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum(sq)?;
        let loss = tape.scale(total, 1.0 / targets.len() as f64)?;
        Ok((loss, pred))
    }

    /// Loss value and one gradient per parameter tensor, in store order.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        targets: &[f64],
        opts: &ForwardOptions,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let (loss, _) = self.record_loss(&mut tape, &vars, batch, targets, opts)?;
        let mut grads = tape.backward(loss)?;
        let g = vars.iter().map(|&v| grads.take(v)).collect();
        Ok((tape.value(loss).item()?, g))
    }

    pub fn predict_batch(&self, batch: &Batch, opts: &ForwardOptions) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let pred = self.record_predictions(&mut tape, &vars, batch, opts)?;
        Ok(tape.value(pred).data().to_vec())
    }

    /// Scalar prediction for one molecule.
    pub fn forward(&self, g: &DistGeoGraph) -> Result<f64> {
        self.forward_with(g, &ForwardOptions::default())
    }

    pub fn forward_with(&self, g: &DistGeoGraph, opts: &ForwardOptions) -> Result<f64> {
        let batch = self.prepare_batch(&[g])?;
        Ok(self.predict_batch(&batch, opts)?[0])
    }

    /// Per-node states after the conv stack for one molecule.
    pub fn node_states(&self, g: &DistGeoGraph, opts: &ForwardOptions) -> Result<Tensor> {
        let batch = self.prepare_batch(&[g])?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let h = self.record_node_states(&mut tape, &vars, &batch, opts)?;
        Ok(tape.value(h).clone())
    }
}

/// Filter vector for distance `d` produced by the layer-`k` filter network
/// of `model`.
pub fn fgnet_forward(model: &Model, k: usize, d: f64) -> Result<Vec<f64>> {
    let conv = model
        .layout
        .convs
        .get(k)
        .ok_or_else(|| Error::Config(format!("no conv layer {k}")))?;
    let f = conv
        .filter
        .as_ref()
        .ok_or_else(|| Error::Config("model has no learned filters".into()))?;
    let basis: &GaussianBasis = model.basis();
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let rbf = tape.constant(Tensor::from_vec(1, basis.len(), super::rbf_expand(d, basis))?);
    let out = filter(&mut tape, &vars, f, rbf)?;
    Ok(tape.value(out).data().to_vec())
}
