use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::chemio::{
    apply_target_csv, read_jsonl, read_sdf, split_dataset, split_from_indices, DatasetSplit, Graph3D,
    SdfOptions, SplitIndices,
};
use crate::{Error, Result};

use super::config::{DatasetConfig, SplitConfig};

/// Reads an `.sdf` or `.jsonl` dataset. Unparseable SDF records are logged
/// and skipped.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<Vec<Graph3D>> {
    let path = &cfg.path;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mut graphs = match ext.as_deref() {
        Some("sdf") | Some("sd") => {
            let opts = SdfOptions {
                target_field: Some(cfg.target_field.clone()),
            };
            let parsed = read_sdf(open(path)?, &opts)?;
            for e in &parsed.errors {
                log::warn!("{}: skipped {e}", path.display());
            }
            parsed.graphs
        }
        Some("jsonl") | Some("json") => read_jsonl(BufReader::new(open(path)?))?,
        _ => {
            return Err(Error::Config(format!(
                "{}: expected a .sdf or .jsonl dataset",
                path.display()
            )))
        }
    };
    if let Some(csv) = &cfg.targets_csv {
        let n = apply_target_csv(&mut graphs, open(csv)?)?;
        log::info!("{}: {n} targets from {}", path.display(), csv.display());
    }
    Ok(graphs)
}

/// Split by explicit index file when configured, else by seeded shuffle.
pub fn make_split(graphs: &[Graph3D], cfg: &SplitConfig) -> Result<DatasetSplit> {
    let split = match &cfg.indices {
        Some(p) => {
            let idx: SplitIndices = serde_json::from_reader(BufReader::new(open(p)?))?;
            split_from_indices(graphs, idx)?
        }
        None => split_dataset(graphs, cfg.sizes(), cfg.seed)?,
    };
    Ok(split)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}
