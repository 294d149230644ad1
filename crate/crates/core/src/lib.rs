//! Distance-geometric graph convolutions for molecular property regression.
//!
//! The pipeline runs from molecule files to trained models:
//!
//! - [`chemio`] reads SDF or JSON-lines molecules, featurizes atoms and splits datasets.
//! - [`distgeo`] turns a bonded 3D graph into first, second and third order
//!   neighbour pairs with their Euclidean distances.
//! - [`numcore`] is a small reverse-mode autodiff tape over 2-D `f64` tensors.
//! - [`model`] holds the standard, power-law and learned-filter convolution models.
//! - [`train`] runs training, checkpoints and comparison grids.

pub mod chemio;
pub mod distgeo;
pub mod gradcheck;
pub mod model;
pub mod numcore;
pub mod synth;
pub mod train;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] numcore::NumError),
    #[error(transparent)]
    Chem(#[from] chemio::ChemError),
    #[error(transparent)]
    Geo(#[from] distgeo::GeoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("{what} format version {found}, expected {expected}")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/molecules.md")]
    mod molecules {}
    #[doc = include_str!("../../../book/src/neighbours.md")]
    mod neighbours {}
    #[doc = include_str!("../../../book/src/convolution.md")]
    mod convolution {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
