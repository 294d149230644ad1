use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::chemio::Graph3D;
use crate::distgeo::MaxOrder;
use crate::model::{ModelKind, Pooling};
use crate::Result;

use super::{make_split, train_model, Metrics, RunConfig, TrainOutcome};

/// One row of the comparison table: model kind, neighbour order, pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub kind: ModelKind,
    pub max_order: MaxOrder,
    pub pooling: Pooling,
}

impl GridCell {
    pub const fn new(kind: ModelKind, max_order: MaxOrder, pooling: Pooling) -> Self {
        Self {
            kind,
            max_order,
            pooling,
        }
    }

    pub fn label(&self) -> String {
        let name = match self.kind {
            ModelKind::Standard => return "Standard GC".into(),
            ModelKind::Geometric => "Geometric GC (Ref)",
            ModelKind::DgGcn => "DG-GCN",
        };
        let nbrs = match self.max_order.hops() {
            1 => "1st",
            2 => "2nd",
            _ => "3rd",
        };
        let pool = match self.pooling {
            Pooling::Mean => "",
            Pooling::Sum => " (Sum pooling)",
        };
        format!("{name} - {nbrs} Nbrs{pool}")
    }

    pub fn apply(&self, base: &RunConfig, seed: u64) -> RunConfig {
        let mut cfg = base.clone();
        cfg.model.kind = self.kind;
        cfg.model.max_order = self.max_order;
        cfg.model.pooling = self.pooling;
        cfg.seed = seed;
        cfg
    }
}

/// The six comparison rows: the two baselines, then DG-GCN by order and pooling.
pub fn comparison_grid() -> Vec<GridCell> {
    use ModelKind::*;
    vec![
        GridCell::new(Standard, MaxOrder::FIRST, Pooling::Mean),
        GridCell::new(Geometric, MaxOrder::THIRD, Pooling::Mean),
        GridCell::new(DgGcn, MaxOrder::FIRST, Pooling::Mean),
        GridCell::new(DgGcn, MaxOrder::SECOND, Pooling::Mean),
        GridCell::new(DgGcn, MaxOrder::THIRD, Pooling::Mean),
        GridCell::new(DgGcn, MaxOrder::THIRD, Pooling::Sum),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model: ModelKind,
    pub max_order: MaxOrder,
    pub pooling: Pooling,
    pub seed: u64,
    pub rmse: f64,
    pub seconds: f64,
    pub label: String,
    pub config: RunConfig,
    pub metrics: Metrics,
}

impl ResultRow {
    pub fn cell(&self) -> GridCell {
        GridCell::new(self.model, self.max_order, self.pooling)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailedRun {
    pub dataset: String,
    pub label: String,
    pub seed: u64,
    pub config: RunConfig,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub label: String,
    pub cell: GridCell,
    pub seeds: usize,
    pub median_rmse: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedRun>,
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

impl ResultsTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.failures.is_empty()
    }

    /// Columns `dataset,model,max_order,pooling,seed,rmse,seconds`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "model", "max_order", "pooling", "seed", "rmse", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.model.as_str().to_string(),
                r.max_order.to_string(),
                r.pooling.as_str().to_string(),
                r.seed.to_string(),
                r.rmse.to_string(),
                format!("{:.3}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rows": self.rows,
            "failures": self.failures,
            "summary": self.summary(),
        })
    }

    /// Median test RMSE per (dataset, cell), in order of first appearance.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, GridCell)> = Vec::new();
        for r in &self.rows {
            let k = (r.dataset.clone(), r.cell());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(dataset, cell)| {
                let v: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.dataset == dataset && r.cell() == cell)
                    .map(|r| r.rmse)
                    .collect();
                SummaryRow {
                    label: cell.label(),
                    seeds: v.len(),
                    median_rmse: median(&v).expect("at least one row per key"),
                    dataset,
                    cell,
                }
            })
            .collect()
    }

    /// Columns `dataset,model,max_order,pooling,label,seeds,median_rmse`.
    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "model", "max_order", "pooling", "label", "seeds", "median_rmse"])?;
        for s in self.summary() {
            w.write_record([
                s.dataset.clone(),
                s.cell.kind.as_str().to_string(),
                s.cell.max_order.to_string(),
                s.cell.pooling.as_str().to_string(),
                s.label.clone(),
                s.seeds.to_string(),
                s.median_rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn median_for(&self, dataset: &str, cell: GridCell) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.dataset == dataset && s.cell == cell)
            .map(|s| s.median_rmse)
    }
}

/// Trains every cell for every seed on one shared split. A failing run is
/// recorded in `failures` and the grid moves on. Runs are spread over the
/// available cores; rows keep cell-major, seed-minor order regardless.
pub fn run_grid(
    dataset: &str,
    graphs: &[Graph3D],
    base: &RunConfig,
    cells: &[GridCell],
    seeds: &[u64],
) -> Result<ResultsTable> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_grid_with_threads(dataset, graphs, base, cells, seeds, threads)
}

/// [`run_grid`] with an explicit worker count (at least one).
pub fn run_grid_with_threads(
    dataset: &str,
    graphs: &[Graph3D],
    base: &RunConfig,
    cells: &[GridCell],
    seeds: &[u64],
    threads: usize,
) -> Result<ResultsTable> {
    let mut table = ResultsTable::default();
    if cells.is_empty() || seeds.is_empty() {
        return Ok(table);
    }
    let split = make_split(graphs, &base.split)?;
    let jobs: Vec<(GridCell, u64)> = cells
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrainOutcome>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cell, seed)) = jobs.get(i) else {
                    break;
                };
                let out = train_model(&split, &cell.apply(base, seed));
                let label = cell.label();
                match &out {
                    Ok(o) => log::info!(
                        "{dataset} | {label} | seed {seed}: rmse={:.4} ({:.1}s)",
                        o.metrics.rmse,
                        o.metrics.seconds
                    ),
                    Err(e) => log::warn!("{dataset} | {label} | seed {seed}: failed: {e}"),
                }
                results.lock().expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    let results = results.into_inner().expect("workers joined");
    for ((cell, seed), out) in jobs.into_iter().zip(results) {
        let cfg = cell.apply(base, seed);
        let label = cell.label();
        match out.expect("every job ran") {
            Ok(out) => {
                let mut config = cfg;
                config.model.in_features = out.predictor.featurizer.dim();
                table.rows.push(ResultRow {
                    dataset: dataset.to_string(),
                    model: cell.kind,
                    max_order: cell.max_order,
                    pooling: cell.pooling,
                    seed,
                    rmse: out.metrics.rmse,
                    seconds: out.metrics.seconds,
                    label,
                    config,
                    metrics: out.metrics,
                });
            }
            Err(e) => table.failures.push(FailedRun {
                dataset: dataset.to_string(),
                label,
                seed,
                config: cfg,
                error: e.to_string(),
            }),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_grid_labels() {
        let labels: Vec<String> = comparison_grid().iter().map(GridCell::label).collect();
        assert_eq!(
            labels,
            [
                "Standard GC",
                "Geometric GC (Ref) - 3rd Nbrs",
                "DG-GCN - 1st Nbrs",
                "DG-GCN - 2nd Nbrs",
                "DG-GCN - 3rd Nbrs",
                "DG-GCN - 3rd Nbrs (Sum pooling)",
            ]
        );
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn empty_grid_is_empty_table() {
        let t = run_grid("x", &[], &RunConfig::default(), &[], &[0, 1, 2]).unwrap();
        assert!(t.is_empty());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "dataset,model,max_order,pooling,seed,rmse,seconds\n"
        );
        assert!(t.summary().is_empty());
    }

    #[test]
    fn threads_do_not_change_results() {
        use crate::model::ModelSpec;
        use crate::synth::random_molecule;
        use rand::SeedableRng;

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let graphs: Vec<Graph3D> = (0..16)
            .map(|i| {
                let mut g = random_molecule(&mut rng, 2 + i % 5, 0);
                g.name = format!("m{i}");
                g.target = Some(i as f64 * 0.1);
                g
            })
            .collect();
        let mut base = RunConfig {
            epochs: 2,
            batch_size: 4,
            model: ModelSpec {
                width: 6,
                ..ModelSpec::default()
            }
            .with_gaussians(8, 5.0),
            ..RunConfig::default()
        };
        base.split = base.split.with_sizes(crate::chemio::SplitSizes {
            train: 10,
            val: 3,
            test: 3,
        });
        let cells = comparison_grid();
        let one = run_grid_with_threads("toy", &graphs, &base, &cells[..3], &[0, 1], 1).unwrap();
        let many = run_grid_with_threads("toy", &graphs, &base, &cells[..3], &[0, 1], 4).unwrap();
        assert_eq!(one.rows.len(), 6);
        for (a, b) in one.rows.iter().zip(&many.rows) {
            assert_eq!((a.cell(), a.seed), (b.cell(), b.seed));
            assert!(a.metrics.same_results(&b.metrics));
        }

        base.optimizer.lr = 1e200;
        let bad = run_grid_with_threads("toy", &graphs, &base, &cells[..1], &[0], 2).unwrap();
        assert_eq!((bad.rows.len(), bad.failures.len()), (0, 1));
    }
}
