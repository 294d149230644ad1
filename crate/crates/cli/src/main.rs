use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dggcn::chemio::{write_jsonl, Graph3D};
use dggcn::distgeo::{build_distgeo, EdgeCounts, MaxOrder};
use dggcn::gradcheck::{check_model_gradients, small_spec};
use dggcn::model::{ModelKind, Pooling};
use dggcn::train::{
    load_dataset, make_split, comparison_grid, rmse, run_grid, train_model, Checkpoint, DatasetConfig,
    GridCell, RunConfig,
};
use dggcn::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "dggcn", version, about = "Distance-geometric graph convolutions for molecules")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset, report per-order edge counts, optionally convert it.
    Prepare(PrepareArgs),
    /// Train one model and write checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset partition.
    Eval(EvalArgs),
    /// Train the comparison grid and write the results table.
    Grid(GridArgs),
    /// Compare analytic and finite-difference gradients of a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// `.sdf` or `.jsonl` input.
    #[arg(long)]
    dataset: PathBuf,
    /// SDF data item holding the target.
    #[arg(long, default_value = "target")]
    target_field: String,
    /// `id,target` CSV matched against molecule names.
    #[arg(long)]
    targets_csv: Option<PathBuf>,
    /// Write the parsed molecules as JSON lines.
    #[arg(long)]
    jsonl: Option<PathBuf>,
    /// Write every distance-geometric graph as JSON lines.
    #[arg(long)]
    dump_distgeo: Option<PathBuf>,
    #[arg(long, default_value = "3")]
    max_order: u8,
}

/// Settings shared by `train` and `grid`; flags win over the config file.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset label in results; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Dotted `key=value` override, e.g. `model.width=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "DGGCN_RESULTS_DIR", default_value = "results")]
    out: PathBuf,
}

impl RunArgs {
    fn overrides(&self) -> Vec<String> {
        let mut ov = self.overrides.clone();
        if let Some(d) = &self.dataset {
            ov.push(format!("dataset.path={}", toml_string(&d.display().to_string())));
        }
        if let Some(n) = &self.name {
            ov.push(format!("dataset.name={}", toml_string(n)));
        }
        if let Some(e) = self.epochs {
            ov.push(format!("epochs={e}"));
        }
        if let Some(p) = self.patience {
            ov.push(format!("patience={p}"));
        }
        ov
    }

    fn load(&self, extra: Vec<String>) -> Result<RunConfig, Error> {
        let mut ov = self.overrides();
        ov.extend(extra);
        let mut cfg = RunConfig::load_with_overrides(self.config.as_deref(), &ov)?;
        if cfg.dataset.path.as_os_str().is_empty() {
            return Err(Error::Config("no dataset given (--dataset or dataset.path)".into()));
        }
        if cfg.dataset.name.is_empty() {
            cfg.dataset.name = dataset_stem(&cfg.dataset.path);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// standard | geometric | dggcn
    #[arg(long)]
    model: Option<String>,
    /// 1, 2 or 3.
    #[arg(long)]
    max_order: Option<u8>,
    /// mean | sum
    #[arg(long)]
    pooling: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the dataset recorded in the checkpoint.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// train | val | test | all
    #[arg(long, default_value = "test")]
    partition: String,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Cells as `kind:order:pooling`, e.g. `dggcn:3:sum`; default is the six-row comparison.
    #[arg(long, value_delimiter = ',')]
    cells: Vec<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    molecules: usize,
    #[arg(long, default_value = "3")]
    max_order: u8,
    #[arg(long, default_value = "mean")]
    pooling: String,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Bad input or configuration: exit 2.
    Input(String),
    /// A run that started but failed: exit 1.
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::File { .. }
            | Error::Chem(_)
            | Error::Json(_)
            | Error::Version { .. }
            | Error::Checkpoint(_)
            | Error::EmptyInput(_) => Failure::Input(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn io_failure(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Grid(a) => grid(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn dataset_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn parse_order(o: u8) -> Result<MaxOrder, Failure> {
    MaxOrder::try_from(o).map_err(|e| Failure::Input(e.to_string()))
}

fn prepare(a: PrepareArgs) -> Result<(), Failure> {
    let max_order = parse_order(a.max_order)?;
    let cfg = DatasetConfig {
        path: a.dataset.clone(),
        name: dataset_stem(&a.dataset),
        target_field: a.target_field.clone(),
        targets_csv: a.targets_csv.clone(),
    };
    let graphs = load_dataset(&cfg)?;
    if graphs.is_empty() {
        return Err(Failure::Input(format!("{}: no molecules", a.dataset.display())));
    }
    let mut totals = EdgeCounts::default();
    let mut atoms = 0;
    let mut dump = match &a.dump_distgeo {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(io_failure(p))?)),
        None => None,
    };
    for g in &graphs {
        let dg = build_distgeo(g, max_order).map_err(Error::from)?;
        atoms += g.num_atoms();
        totals.first += dg.counts.first;
        totals.second += dg.counts.second;
        totals.third += dg.counts.third;
        if let Some(w) = dump.as_mut() {
            serde_json::to_writer(&mut *w, &dg).map_err(Error::from)?;
            std::io::Write::write_all(w, b"\n").map_err(Error::from)?;
        }
    }
    let with_target = graphs.iter().filter(|g| g.target.is_some()).count();
    println!("molecules\t{}", graphs.len());
    println!("with_target\t{with_target}");
    println!("atoms\t{atoms}");
    println!("edges_order1\t{}", totals.first);
    println!("edges_order2\t{}", totals.second);
    println!("edges_order3\t{}", totals.third);
    if let Some(p) = &a.jsonl {
        let file = File::create(p).map_err(io_failure(p))?;
        write_jsonl(BufWriter::new(file), &graphs).map_err(Error::from)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let file = File::create(path).map_err(io_failure(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(Error::from)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let mut extra = Vec::new();
    if let Some(m) = &a.model {
        extra.push(format!("model.kind={}", toml_string(m)));
    }
    if let Some(o) = a.max_order {
        extra.push(format!("model.max_order={o}"));
    }
    if let Some(p) = &a.pooling {
        extra.push(format!("model.pooling={}", toml_string(p)));
    }
    if let Some(s) = a.seed {
        extra.push(format!("seed={s}"));
    }
    let cfg = a.run.load(extra)?;
    let graphs = load_dataset(&cfg.dataset)?;
    let split = make_split(&graphs, &cfg.split)?;
    let out = train_model(&split, &cfg)?;
    fs::create_dir_all(&a.run.out).map_err(io_failure(&a.run.out))?;
    let ck = Checkpoint::new(&cfg, &out.predictor);
    ck.save(&a.run.out.join("checkpoint.json"))?;
    write_json(&a.run.out.join("metrics.json"), &out.metrics)?;
    let cfg_path = a.run.out.join("config.toml");
    fs::write(&cfg_path, ck.config.to_toml_string()).map_err(io_failure(&cfg_path))?;
    println!(
        "{}\t{}\torder={}\t{}\tseed={}\trmse={}\tbest_epoch={}\tseconds={:.1}",
        cfg.dataset.name,
        cfg.model.kind.as_str(),
        cfg.model.max_order,
        cfg.model.pooling.as_str(),
        cfg.seed,
        out.metrics.rmse,
        out.metrics.best_epoch,
        out.metrics.seconds
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut data_cfg = ck.config.dataset.clone();
    if let Some(d) = a.dataset {
        data_cfg.path = d;
    }
    let graphs = load_dataset(&data_cfg)?;
    let split_cfg = ck.config.split.clone();
    let part: Vec<Graph3D> = match a.partition.as_str() {
        "all" => graphs,
        p => {
            let s = make_split(&graphs, &split_cfg)?;
            match p {
                "train" => s.train,
                "val" => s.val,
                "test" => s.test,
                other => return Err(Failure::Input(format!("unknown partition {other:?}"))),
            }
        }
    };
    let targets: Vec<f64> = part
        .iter()
        .map(|g| g.target.ok_or_else(|| Failure::Input(format!("molecule {} has no target", g.name))))
        .collect::<Result<_, _>>()?;
    let predictor = ck.into_predictor()?;
    let pred = predictor.predict(&part)?;
    let r = rmse(&pred, &targets)?;
    println!("{}\tmolecules={}\trmse={r}", a.partition, part.len());
    Ok(())
}

fn parse_cell(s: &str) -> Result<GridCell, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let [kind, order, pooling] = parts.as_slice() else {
        return Err(Failure::Input(format!("cell {s:?} is not kind:order:pooling")));
    };
    let kind: ModelKind = kind.parse()?;
    let order: u8 = order
        .parse()
        .map_err(|_| Failure::Input(format!("cell {s:?}: bad order")))?;
    let pooling: Pooling = pooling.parse()?;
    Ok(GridCell::new(kind, parse_order(order)?, pooling))
}

fn grid(a: GridArgs) -> Result<(), Failure> {
    let cfg = a.run.load(Vec::new())?;
    let cells = if a.cells.is_empty() {
        comparison_grid()
    } else {
        a.cells.iter().map(|c| parse_cell(c)).collect::<Result<_, _>>()?
    };
    let graphs = load_dataset(&cfg.dataset)?;
    let table = run_grid(&cfg.dataset.name, &graphs, &cfg, &cells, &a.seeds)?;
    let out = &a.run.out;
    fs::create_dir_all(out).map_err(io_failure(out))?;
    let csv_path = out.join("results.csv");
    table.write_csv(BufWriter::new(File::create(&csv_path).map_err(io_failure(&csv_path))?))?;
    let summary_path = out.join("summary.csv");
    table.write_summary_csv(BufWriter::new(
        File::create(&summary_path).map_err(io_failure(&summary_path))?,
    ))?;
    write_json(&out.join("results.json"), &table.to_json())?;
    for s in table.summary() {
        println!("{}\t{}\tseeds={}\tmedian_rmse={:.6}", s.dataset, s.label, s.seeds, s.median_rmse);
    }
    if !table.failures.is_empty() {
        return Err(Failure::Run(format!("{} grid runs failed", table.failures.len())));
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let pooling: Pooling = a.pooling.parse()?;
    let spec = small_spec(5, parse_order(a.max_order)?, pooling);
    let report = check_model_gradients(&spec, a.molecules, a.seed, a.step)?;
    let verdict = if report.max_rel_err < a.tolerance { "PASS" } else { "FAIL" };
    println!(
        "{verdict} max_rel_err={:.3e} worst={} entries={}",
        report.max_rel_err, report.worst_param, report.entries_checked
    );
    if verdict == "FAIL" {
        return Err(Failure::Run(format!(
            "gradient error {:.3e} exceeds {:.1e}",
            report.max_rel_err, a.tolerance
        )));
    }
    Ok(())
}
