//! Position sampling under increasing-domain scaling and network formation.
//!
//! Positions are drawn uniformly on `[0,1]^d` and scaled by
//! `omega_n = (n/kappa)^(1/d)`, so local point density stays constant as `n`
//! grows. Networks form either by the random geometric graph rule (link iff
//! Euclidean distance <= threshold) or by a latent-index rule with a
//! pair-specific shock, which keeps link probabilities exponentially decaying
//! in distance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::SpatialGrid;
use crate::types::SpatialGraph;

/// Distribution of the pair-specific link shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockKind {
    /// Standard logistic.
    Logistic,
    /// Standard Laplace (double exponential) — the simplest exponential-tailed choice.
    ExponentialTail,
}

impl ShockKind {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        // open-interval uniform keeps the inverse CDFs finite
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        match self {
            ShockKind::Logistic => (u / (1.0 - u)).ln(),
            ShockKind::ExponentialTail => {
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
        }
    }

    /// CDF of the shock, used by tests as a closed-form oracle.
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            ShockKind::Logistic => 1.0 / (1.0 + (-x).exp()),
            ShockKind::ExponentialTail => {
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
        }
    }
}

/// Network formation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetModel {
    Rgg {
        threshold: f64,
    },
    LatentIndex {
        intercept: f64,
        distance_coef: f64,
        homophily_coef: f64,
        shock: ShockKind,
    },
}

/// Configuration for position sampling plus network formation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetGenConfig {
    pub n: usize,
    pub d: usize,
    /// Target density constant `kappa > 0` in `omega_n = (n/kappa)^(1/d)`.
    pub kappa: f64,
    pub model: NetModel,
}

impl NetGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CoreError::InvalidArgument("n must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(CoreError::InvalidArgument("d must be at least 1".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        match &self.model {
            NetModel::Rgg { threshold } => {
                if !(*threshold > 0.0) {
                    return Err(CoreError::InvalidArgument(format!(
                        "rgg threshold must be positive, got {threshold}"
                    )));
                }
            }
            NetModel::LatentIndex { distance_coef, .. } => {
                if !(*distance_coef > 0.0) {
                    return Err(CoreError::InvalidArgument(format!(
                        "distance_coef must be positive, got {distance_coef}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The increasing-domain scale `omega_n = (n/kappa)^(1/d)`.
pub fn position_scale(n: usize, d: usize, kappa: f64) -> f64 {
    (n as f64 / kappa).powf(1.0 / d as f64)
}

/// Draw `n` positions `omega_n * rho_tilde` with `rho_tilde ~ U[0,1]^d`.
pub fn sample_positions(n: usize, d: usize, kappa: f64, rng: &mut ChaCha8Rng) -> Result<(DMatrix<f64>, f64)> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("n must be at least 1".into()));
    }
    if !(kappa > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let omega = position_scale(n, d, kappa);
    let mut positions = DMatrix::zeros(n, d);
    for i in 0..n {
        for k in 0..d {
            positions[(i, k)] = omega * rng.gen::<f64>();
        }
    }
    Ok((positions, omega))
}

fn sq_dist(positions: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let d = positions.ncols();
    let mut acc = 0.0;
    for k in 0..d {
        let diff = positions[(i, k)] - positions[(j, k)];
        acc += diff * diff;
    }
    acc
}

/// Random geometric graph: `A_ij = 1{ ||rho_i - rho_j|| <= threshold, i != j }`.
pub fn form_rgg(positions: DMatrix<f64>, scale: f64, threshold: f64) -> Result<SpatialGraph> {
    if !(threshold > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "rgg threshold must be positive, got {threshold}"
        )));
    }
    let n = positions.nrows();
    let grid = SpatialGrid::build(&positions, threshold);
    let t2 = threshold * threshold;
    let mut edges = Vec::new();
    let mut cand = Vec::new();
    for i in 0..n {
        grid.candidates_within(&positions, i, threshold, &mut cand);
        for &j in &cand {
            let j = j as usize;
            if j > i && sq_dist(&positions, i, j) <= t2 {
                edges.push((i, j));
            }
        }
    }
    SpatialGraph::new(positions, &edges, scale)
}

/// Parameters of the latent-index link rule.
#[derive(Debug, Clone, Copy)]
pub struct LatentIndexParams {
    pub intercept: f64,
    pub distance_coef: f64,
    pub homophily_coef: f64,
    pub shock: ShockKind,
}

/// Latent-index formation:
/// `A_ij = 1{ intercept - distance_coef * ||rho_i - rho_j||
///            + homophily_coef * 1{mu_i = mu_j} + zeta_ij > 0 }`,
/// with `zeta_ij` drawn once per unordered pair in canonical `(i, j)` order.
pub fn form_latent_index(
    positions: DMatrix<f64>,
    scale: f64,
    node_attrs: Option<&[u64]>,
    params: LatentIndexParams,
    rng: &mut ChaCha8Rng,
) -> Result<SpatialGraph> {
    if !(params.distance_coef > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "distance_coef must be positive, got {}",
            params.distance_coef
        )));
    }
    let n = positions.nrows();
    if params.homophily_coef != 0.0 && node_attrs.is_none() {
        return Err(CoreError::MissingNodeAttrs);
    }
    if let Some(attrs) = node_attrs {
        if attrs.len() != n {
            return Err(CoreError::DimensionMismatch(format!(
                "node_attrs has {} entries for {} agents",
                attrs.len(),
                n
            )));
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let zeta = params.shock.sample(rng);
            let dist = sq_dist(&positions, i, j).sqrt();
            let same = match node_attrs {
                Some(attrs) if attrs[i] == attrs[j] => 1.0,
                _ => 0.0,
            };
            if params.intercept - params.distance_coef * dist + params.homophily_coef * same + zeta
                > 0.0
            {
                edges.push((i, j));
            }
        }
    }
    SpatialGraph::new(positions, &edges, scale)
}

/// Sample positions and form the network described by `cfg`.
pub fn generate(cfg: &NetGenConfig, node_attrs: Option<&[u64]>, rng: &mut ChaCha8Rng) -> Result<SpatialGraph> {
    cfg.validate()?;
    let (positions, omega) = sample_positions(cfg.n, cfg.d, cfg.kappa, rng)?;
    match &cfg.model {
        NetModel::Rgg { threshold } => form_rgg(positions, omega, *threshold),
        NetModel::LatentIndex {
            intercept,
            distance_coef,
            homophily_coef,
            shock,
        } => form_latent_index(
            positions,
            omega,
            node_attrs,
            LatentIndexParams {
                intercept: *intercept,
                distance_coef: *distance_coef,
                homophily_coef: *homophily_coef,
                shock: *shock,
            },
            rng,
        ),
    }
}
