use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Settings for [`GaussianBasis`]; `gamma` defaults to `0.5 / Δμ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisConfig {
    pub num_gaussians: usize,
    /// Ångström.
    pub cutoff: f64,
    pub gamma: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            num_gaussians: 50,
            cutoff: 10.0,
            gamma: None,
        }
    }
}

/// Gaussians `exp(-γ (d - μ_k)²)` with centres on a uniform grid over
/// `[0, cutoff]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBasis {
    centers: Vec<f64>,
    gamma: f64,
    cutoff: f64,
}

impl GaussianBasis {
    pub fn new(cfg: &BasisConfig) -> Result<Self> {
        let n = cfg.num_gaussians;
        if n < 2 {
            return Err(Error::Config(format!("num_gaussians must be at least 2, got {n}")));
        }
        if !(cfg.cutoff > 0.0) || !cfg.cutoff.is_finite() {
            return Err(Error::Config(format!("cutoff must be positive and finite, got {}", cfg.cutoff)));
        }
        let step = cfg.cutoff / (n - 1) as f64;
        let mut centers: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
        centers[n - 1] = cfg.cutoff;
        let gamma = cfg.gamma.unwrap_or(0.5 / (step * step));
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            centers,
            gamma,
            cutoff: cfg.cutoff,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Writes the expansion of `d` into `out` (length `len()`).
    pub fn expand_into(&self, d: f64, out: &mut [f64]) {
        for (o, mu) in out.iter_mut().zip(&self.centers) {
            let diff = d - mu;
            *o = (-self.gamma * diff * diff).exp();
        }
    }
}

pub fn rbf_expand(d: f64, basis: &GaussianBasis) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    basis.expand_into(d, &mut out);
    out
}

/// Cosine cutoff `0.5 (cos(π d / d_c) + 1)` inside the cutoff, zero beyond.
pub fn cutoff_weight(d: f64, d_cutoff: f64) -> Result<f64> {
    if !(d_cutoff > 0.0) {
        return Err(Error::Config(format!("distance cutoff must be positive, got {d_cutoff}")));
    }
    if d > d_cutoff {
        return Ok(0.0);
    }
    Ok(0.5 * ((d / d_cutoff * PI).cos() + 1.0))
}

/// Fixed power-law weight `(R0 / d)^n`.
pub fn powerlaw_weight(d: f64, r0: f64, exponent: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Config(format!("power-law weight needs d > 0, got {d}")));
    }
    Ok((r0 / d).powf(exponent))
}
