//! Graph convolution models over [`DistGeoGraph`]s.
//!
//! All three model kinds share one stack:
//!
//! ```text
//! embed → K × conv → pool (mean | sum) → dense → ssp → dense → scalar
//! ```
//!
//! and differ only in how a conv layer weighs the message from `j` to `i`:
//!
//! | kind        | edges          | per-edge weight         | per-edge filter      |
//! |-------------|----------------|-------------------------|----------------------|
//! | `standard`  | configured set | 1                       | ones                 |
//! | `geometric` | configured set | `(R0 / d)^n`            | ones                 |
//! | `dggcn`     | configured set | cosine cutoff of `d`    | FGNet(rbf(`d`))      |
//!
//! A conv layer computes `h = x W_in`, messages `w_ij · (h_j ⊙ filter(d_ij))`,
//! and `x'_i = ssp(((h_i + Σ_j m_ij) / c_i) W_out + b_out)`.
//!
//! [`DistGeoGraph`]: crate::distgeo::DistGeoGraph

mod basis;
mod batch;
mod forward;
mod params;

use serde::{Deserialize, Serialize};

use crate::distgeo::MaxOrder;
use crate::{Error, Result};

pub use basis::{cutoff_weight, powerlaw_weight, rbf_expand, BasisConfig, GaussianBasis};
pub use batch::{Batch, PreparedGraph};
pub use forward::{fgnet_forward, ForwardOptions};
pub use params::{Dense, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Unit edge weights, no filters.
    Standard,
    /// Fixed power-law edge weights, no filters.
    Geometric,
    /// Learned continuous filters with cosine cutoff.
    #[serde(rename = "dggcn")]
    DgGcn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Standard => "standard",
            ModelKind::Geometric => "geometric",
            ModelKind::DgGcn => "dggcn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ModelKind::Standard),
            "geometric" => Ok(ModelKind::Geometric),
            "dggcn" => Ok(ModelKind::DgGcn),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Sum,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::Sum => "sum",
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "sum" => Ok(Pooling::Sum),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

/// How the aggregated neighbourhood is normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `c_i = 1 + number of incoming edges`.
    SelfInclusiveCount,
    /// `c_i = 1 + Σ_j w_ij`.
    WeightedDegree,
    /// `h_i / c_i + Σ_j w_ij h_j / sqrt(c_i c_j)` with `c = 1 + Σ_j w_ij`.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLaw {
    /// Ångström.
    pub r0: f64,
    pub exponent: f64,
}

impl Default for PowerLaw {
    fn default() -> Self {
        Self {
            r0: 1.39,
            exponent: 4.55,
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Node feature width; filled in from the featurizer during training.
    pub in_features: usize,
    pub width: usize,
    pub num_layers: usize,
    pub max_order: MaxOrder,
    pub pooling: Pooling,
    pub basis: BasisConfig,
    /// `None` means the self-inclusive count, see [`ModelSpec::normalization`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub power_law: PowerLaw,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::DgGcn,
            in_features: 0,
            width: 64,
            num_layers: 3,
            max_order: MaxOrder::THIRD,
            pooling: Pooling::Mean,
            basis: BasisConfig::default(),
            normalization: None,
            power_law: PowerLaw::default(),
        }
    }
}

impl ModelSpec {
    pub fn with_gaussians(mut self, num_gaussians: usize, cutoff: f64) -> Self {
        self.basis.num_gaussians = num_gaussians;
        self.basis.cutoff = cutoff;
        self
    }

    /// Effective normalisation, the self-inclusive count unless overridden.
    pub fn normalization(&self) -> Normalization {
        self.normalization.unwrap_or(Normalization::SelfInclusiveCount)
    }

    pub fn readout_width(&self) -> usize {
        (self.width / 2).max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.in_features == 0 {
            return Err(Error::Config("in_features must be set".into()));
        }
        if self.width == 0 {
            return Err(Error::Config("width must be positive".into()));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        if !(self.power_law.r0 > 0.0) {
            return Err(Error::Config("power_law.r0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FilterLayout {
    pub hidden: Dense,
    pub out: Dense,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvLayout {
    pub lin_in: Dense,
    pub filter: Option<FilterLayout>,
    pub lin_out: Dense,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub embed: Dense,
    pub convs: Vec<ConvLayout>,
    pub readout_hidden: Dense,
    pub readout_out: Dense,
}

/// Parameters plus the fixed structure that interprets them.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    basis: GaussianBasis,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh Glorot-initialised parameters drawn from `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let basis = GaussianBasis::new(&spec.basis)?;
        let mut init = params::Initializer::new(seed);
        let mut store = ParamStore::default();
        let f = spec.width;
        let embed = init.dense(&mut store, "embed", spec.in_features, f, true);
        let convs = (0..spec.num_layers)
            .map(|k| {
                let lin_in = init.dense(&mut store, &format!("conv{k}.lin_in"), f, f, false);
                let filter = (spec.kind == ModelKind::DgGcn).then(|| FilterLayout {
                    hidden: init.dense(&mut store, &format!("conv{k}.filter.hidden"), basis.len(), f, true),
                    out: init.dense(&mut store, &format!("conv{k}.filter.out"), f, f, true),
                });
                let lin_out = init.dense(&mut store, &format!("conv{k}.lin_out"), f, f, true);
                ConvLayout {
                    lin_in,
                    filter,
                    lin_out,
                }
            })
            .collect();
        let readout_hidden = init.dense(&mut store, "readout.hidden", f, spec.readout_width(), true);
        let readout_out = init.dense(&mut store, "readout.out", spec.readout_width(), 1, true);
        Ok(Self {
            spec,
            basis,
            params: store,
            layout: Layout {
                embed,
                convs,
                readout_hidden,
                readout_out,
            },
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn basis(&self) -> &GaussianBasis {
        &self.basis
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Names of the parameters of conv layer `k`, in store order.
    pub fn conv_param_names(&self, k: usize) -> Vec<&str> {
        let prefix = format!("conv{k}.");
        self.params
            .names()
            .iter()
            .filter(|n| n.starts_with(&prefix))
            .map(String::as_str)
            .collect()
    }
}
