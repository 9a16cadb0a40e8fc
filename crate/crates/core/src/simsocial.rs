//! Simulation of the dynamic and static binary-choice interaction models and
//! evaluation of K-local agent statistics.
//!
//! The dynamic model draws an AR(1) covariate and threshold-crossing outcomes
//! where the peer term is the lagged neighbor mean. The static model iterates
//! synchronous best responses to a fixed point; with a nonnegative peer
//! coefficient the all-ones start converges to the largest Nash equilibrium.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::k_neighborhood;
use crate::types::{Panel, SpatialGraph};

/// Link function used at the estimation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Probit,
    Logit,
}

impl std::str::FromStr for Link {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown link '{other}' (expected probit or logit)"
            ))),
        }
    }
}

/// How the simulation shock `nu_i^t` is built from i.i.d. standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDesign {
    /// `nu_i^t = eps_i^t`.
    Iid,
    /// `nu_i^t = w_i (avg of neighbors' eps + own eps)` with
    /// `w_i = (1 + 1/deg_i)^(-1/2)` so marginals stay standard normal.
    /// Isolated agents get `nu_i^t = eps_i^t`.
    #[default]
    NeighborAvgWeighted,
}

/// Which peer statistic enters the latent index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PeerStat {
    #[default]
    LaggedNeighborMean,
    ContemporaneousNeighborMean,
}

/// Latent-index outcome model
/// `Y = 1{ intercept + x'b + peer_coef * S + nu > 0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub covariate_coefs: Vec<f64>,
    pub peer_coef: f64,
    pub link: Link,
    pub error_design: ErrorDesign,
    pub peer_stat: PeerStat,
}

impl OutcomeModel {
    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite()
            || !self.peer_coef.is_finite()
            || self.covariate_coefs.iter().any(|c| !c.is_finite())
        {
            return Err(CoreError::InvalidArgument("nonfinite coefficient".into()));
        }
        Ok(())
    }

    fn index(&self, x: &[f64], peer: f64, shock: f64) -> f64 {
        let mut v = self.intercept + self.peer_coef * peer + shock;
        for (c, xi) in self.covariate_coefs.iter().zip(x) {
            v += c * xi;
        }
        v
    }
}

/// `(1 + 1/deg)^(-1/2)`, the weight keeping `nu` standard normal; 1 for
/// isolated agents.
pub fn error_weight(degree: usize) -> f64 {
    if degree == 0 {
        1.0
    } else {
        (1.0 + 1.0 / degree as f64).powf(-0.5)
    }
}

fn neighbor_mean(graph: &SpatialGraph, values: &[f64], i: usize) -> f64 {
    let nbrs = graph.neighbors(i);
    if nbrs.is_empty() {
        return 0.0;
    }
    let sum: f64 = nbrs.iter().map(|&j| values[j as usize]).sum();
    sum / nbrs.len() as f64
}

fn neighbor_mean_u8(graph: &SpatialGraph, values: &[u8], i: usize) -> f64 {
    let nbrs = graph.neighbors(i);
    if nbrs.is_empty() {
        return 0.0;
    }
    let sum: f64 = nbrs.iter().map(|&j| values[j as usize] as f64).sum();
    sum / nbrs.len() as f64
}

/// Turn i.i.d. draws `eps` into the period shock vector for `design`.
pub fn build_shocks(graph: &SpatialGraph, design: ErrorDesign, eps: &[f64]) -> Vec<f64> {
    match design {
        ErrorDesign::Iid => eps.to_vec(),
        ErrorDesign::NeighborAvgWeighted => (0..graph.n())
            .map(|i| {
                let deg = graph.degree(i);
                if deg == 0 {
                    eps[i]
                } else {
                    error_weight(deg) * (neighbor_mean(graph, eps, i) + eps[i])
                }
            })
            .collect(),
    }
}

/// Simulate the dynamic model over periods `0..=T`.
///
/// Covariates: `X^0 ~ Exp(1)` i.i.d., then `X^t = 0.5 X^(t-1) + N(0,1)`.
/// Initial outcomes use the same threshold rule with the peer coefficient
/// zeroed; later periods use the lagged neighbor mean. Shock draws are fresh
/// each period. The panel carries one covariate column.
pub fn simulate_dynamic(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    t_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Panel> {
    model.validate()?;
    if t_max == 0 {
        return Err(CoreError::InvalidArgument("T must be at least 1".into()));
    }
    if model.peer_stat != PeerStat::LaggedNeighborMean {
        return Err(CoreError::InvalidArgument(
            "dynamic simulation requires the lagged-neighbor-mean peer statistic".into(),
        ));
    }
    if model.covariate_coefs.len() != 1 {
        return Err(CoreError::InvalidArgument(
            "the dynamic design draws a single AR(1) covariate; expected one covariate coefficient"
                .into(),
        ));
    }
    let n = graph.n();
    let periods = t_max + 1;

    // covariates first, then shocks period by period
    let mut x = vec![0.0f64; n * periods];
    for i in 0..n {
        x[i * periods] = Exp1.sample(rng);
    }
    for t in 1..periods {
        for i in 0..n {
            let u: f64 = StandardNormal.sample(rng);
            x[i * periods + t] = 0.5 * x[i * periods + t - 1] + u;
        }
    }

    let mut zeroed = model.clone();
    zeroed.peer_coef = 0.0;

    let mut y = vec![0u8; n * periods];
    let mut eps = vec![0.0f64; n];
    let mut prev: Vec<u8> = vec![0; n];
    for t in 0..periods {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        let nu = build_shocks(graph, model.error_design, &eps);
        for i in 0..n {
            let xi = &x[i * periods + t..i * periods + t + 1];
            let outcome = if t == 0 {
                zeroed.index(xi, 0.0, nu[i]) > 0.0
            } else {
                let peer = neighbor_mean_u8(graph, &prev, i);
                model.index(xi, peer, nu[i]) > 0.0
            };
            y[i * periods + t] = outcome as u8;
        }
        for i in 0..n {
            prev[i] = y[i * periods + t];
        }
    }
    Panel::new(n, periods, 1, y, x)
}

/// Draw the static design's covariate column, `X_i ~ Exp(1)` (the same
/// marginal as the dynamic model's period-0 covariate).
pub fn draw_exp1_covariates(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1, |_, _| Exp1.sample(rng))
}

/// Initial vector for best-response iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCondition {
    AllOnes,
    AllZeros,
}

/// Synchronous best-response iteration from `init`, with shocks held fixed.
/// Returns the first fixed point and the number of sweeps used.
pub fn best_response_fixed_point(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    covariates: &DMatrix<f64>,
    shocks: &[f64],
    init: InitCondition,
    max_sweeps: usize,
) -> Result<(Vec<u8>, usize)> {
    model.validate()?;
    let n = graph.n();
    if covariates.nrows() != n || shocks.len() != n {
        return Err(CoreError::DimensionMismatch(
            "covariates/shocks must have one row per agent".into(),
        ));
    }
    let mut current = vec![matches!(init, InitCondition::AllOnes) as u8; n];
    let mut next = vec![0u8; n];
    let mut xi = vec![0.0f64; covariates.ncols()];
    for sweep in 1..=max_sweeps {
        let mut changed = false;
        for i in 0..n {
            let peer = neighbor_mean_u8(graph, &current, i);
            for (c, v) in xi.iter_mut().enumerate() {
                *v = covariates[(i, c)];
            }
            let y = (model.index(&xi, peer, shocks[i]) > 0.0) as u8;
            if y != current[i] {
                changed = true;
            }
            next[i] = y;
        }
        std::mem::swap(&mut current, &mut next);
        if !changed {
            return Ok((current, sweep));
        }
    }
    Err(CoreError::NonConvergence(max_sweeps))
}

/// Simulate the static model by myopic best response. Shocks are drawn once
/// through the error-design machinery and held fixed across sweeps. From the
/// all-ones start with `peer_coef >= 0`, the fixed point is the largest Nash
/// equilibrium.
pub fn simulate_static_best_response(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    covariates: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    init: InitCondition,
) -> Result<Vec<u8>> {
    if model.peer_coef < 0.0 {
        return Err(CoreError::NotSupermodular(model.peer_coef));
    }
    let n = graph.n();
    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let shocks = build_shocks(graph, model.error_design, &eps);
    let (y, _) = best_response_fixed_point(graph, model, covariates, &shocks, init, n + 50)?;
    Ok(y)
}

/// True iff every agent's action is a best response to the others' actions.
pub fn verify_nash(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    covariates: &DMatrix<f64>,
    shocks: &[f64],
    y: &[u8],
) -> bool {
    let n = graph.n();
    let k = covariates.ncols();
    let mut xi = vec![0.0f64; k];
    (0..n).all(|i| {
        let peer = neighbor_mean_u8(graph, y, i);
        for (c, v) in xi.iter_mut().enumerate() {
            *v = covariates[(i, c)];
        }
        let best = (model.index(&xi, peer, shocks[i]) > 0.0) as u8;
        best == y[i]
    })
}

/// Enumerate all pure-strategy Nash equilibria by brute force (`n <= 20`).
pub fn enumerate_equilibria(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    covariates: &DMatrix<f64>,
    shocks: &[f64],
) -> Result<Vec<Vec<u8>>> {
    let n = graph.n();
    if n > 20 {
        return Err(CoreError::InvalidArgument(format!(
            "equilibrium enumeration is limited to 20 agents, got {n}"
        )));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let y: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
        if verify_nash(graph, model, covariates, shocks, &y) {
            out.push(y);
        }
    }
    Ok(out)
}

/// Pick one equilibrium uniformly at random from the enumerated set.
pub fn select_uniform_equilibrium(
    graph: &SpatialGraph,
    model: &OutcomeModel,
    covariates: &DMatrix<f64>,
    shocks: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>> {
    let all = enumerate_equilibria(graph, model, covariates, shocks)?;
    if all.is_empty() {
        return Err(CoreError::InvalidArgument("no Nash equilibrium exists".into()));
    }
    let pick = rng.gen_range(0..all.len());
    Ok(all[pick].clone())
}

/// `R_i^c = 1{ inf_S U <= 0 < sup_S U }` over the peer statistic's range
/// `[0, 1]`. The latent index is monotone in `S`, so both extremes sit at the
/// endpoints regardless of the peer coefficient's sign.
pub fn compute_rc(model: &OutcomeModel, shocks: &[f64], covariates: &DMatrix<f64>) -> Result<Vec<u8>> {
    model.validate()?;
    let n = shocks.len();
    if covariates.nrows() != n {
        return Err(CoreError::DimensionMismatch(
            "covariates/shocks must have one row per agent".into(),
        ));
    }
    let mut out = vec![0u8; n];
    let mut xi = vec![0.0f64; covariates.ncols()];
    for i in 0..n {
        for (c, v) in xi.iter_mut().enumerate() {
            *v = covariates[(i, c)];
        }
        let at0 = model.index(&xi, 0.0, shocks[i]);
        let at1 = model.index(&xi, 1.0, shocks[i]);
        let lo = at0.min(at1);
        let hi = at0.max(at1);
        out[i] = (lo <= 0.0 && hi > 0.0) as u8;
    }
    Ok(out)
}

/// Network-moment kinds. `t` indexes the panel period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    ChoiceProb { t: usize },
    WeightedOutcome { t: usize },
    Dyad11 { t: usize },
    IntransitiveTriad000 { t: usize },
    AsfBounds { x: Vec<f64> },
}

/// A moment specification; the locality bound is derived from the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub kind: MomentKind,
}

impl MomentSpec {
    pub fn new(kind: MomentKind) -> Self {
        Self { kind }
    }

    /// `K` such that the statistic only depends on the agent's K-neighborhood.
    pub fn locality_k(&self) -> usize {
        match self.kind {
            MomentKind::ChoiceProb { .. } | MomentKind::WeightedOutcome { .. } => 0,
            MomentKind::Dyad11 { .. } | MomentKind::AsfBounds { .. } => 1,
            MomentKind::IntransitiveTriad000 { .. } => 2,
        }
    }

    /// Output dimension of the statistic.
    pub fn dim(&self) -> usize {
        match self.kind {
            MomentKind::AsfBounds { .. } => 2,
            _ => 1,
        }
    }
}

/// `n x m` matrix of agent statistics with locality metadata.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub values: DMatrix<f64>,
    pub locality_k: usize,
}

/// Largest number of distinct values per derived-regressor column before the
/// support is treated as continuous and `asf_bounds` is rejected.
pub const ASF_MAX_SUPPORT: usize = 64;

fn check_period(t: usize, periods: usize) -> Result<()> {
    if t >= periods {
        return Err(CoreError::InvalidArgument(format!(
            "period {t} out of range, panel has {periods} periods"
        )));
    }
    Ok(())
}

/// Evaluate per-agent statistics for the given moment.
pub fn eval_moments(panel: &Panel, graph: &SpatialGraph, spec: &MomentSpec) -> Result<MomentMatrix> {
    let n = panel.n();
    if graph.n() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "panel has {} agents, graph has {}",
            n,
            graph.n()
        )));
    }
    let periods = panel.periods();
    let m = spec.dim();
    let mut values = DMatrix::zeros(n, m);
    match &spec.kind {
        MomentKind::ChoiceProb { t } => {
            check_period(*t, periods)?;
            for i in 0..n {
                values[(i, 0)] = panel.y(i, *t) as f64;
            }
        }
        MomentKind::WeightedOutcome { t } => {
            check_period(*t, periods)?;
            for i in 0..n {
                values[(i, 0)] = panel.y(i, *t) as f64 * panel.x(i, *t)[0];
            }
        }
        MomentKind::Dyad11 { t } => {
            check_period(*t, periods)?;
            for i in 0..n {
                if panel.y(i, *t) == 0 {
                    continue;
                }
                let mut count = 0.0;
                for &j in graph.neighbors(i) {
                    count += panel.y(j as usize, *t) as f64;
                }
                values[(i, 0)] = count;
            }
        }
        MomentKind::IntransitiveTriad000 { t } => {
            check_period(*t, periods)?;
            for i in 0..n {
                if panel.y(i, *t) == 1 {
                    continue;
                }
                let mut count = 0.0;
                for &j in graph.neighbors(i) {
                    let j = j as usize;
                    if panel.y(j, *t) == 1 {
                        continue;
                    }
                    for &k in graph.neighbors(j) {
                        let k = k as usize;
                        if k == i || panel.y(k, *t) == 1 || graph.has_edge(i, k) {
                            continue;
                        }
                        count += 1.0;
                    }
                }
                values[(i, 0)] = count;
            }
        }
        MomentKind::AsfBounds { x } => {
            if periods < 2 {
                return Err(CoreError::InvalidArgument(
                    "asf_bounds needs at least two panel periods".into(),
                ));
            }
            let kx = panel.k() + 1;
            if x.len() != kx {
                return Err(CoreError::DimensionMismatch(format!(
                    "asf query has {} entries, derived regressor has {kx}",
                    x.len()
                )));
            }
            // derived regressor per (i, t >= 1): covariates plus lagged neighbor mean
            let regressor = |i: usize, t: usize| -> Vec<f64> {
                let mut row = panel.x(i, t).to_vec();
                let nbrs = graph.neighbors(i);
                let peer = if nbrs.is_empty() {
                    0.0
                } else {
                    nbrs.iter().map(|&j| panel.y(j as usize, t - 1) as f64).sum::<f64>()
                        / nbrs.len() as f64
                };
                row.push(peer);
                row
            };
            // discreteness check: bounded number of distinct values per column
            for c in 0..kx {
                let mut vals: Vec<f64> = Vec::new();
                for i in 0..n {
                    for t in 1..periods {
                        vals.push(regressor(i, t)[c]);
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup();
                if vals.len() > ASF_MAX_SUPPORT {
                    return Err(CoreError::NonDiscreteSupport(format!(
                        "derived regressor column {c} has {} distinct values (max {ASF_MAX_SUPPORT})",
                        vals.len()
                    )));
                }
            }
            for i in 0..n {
                let mut first_hit: Option<usize> = None;
                for t in 1..periods {
                    if regressor(i, t) == *x {
                        first_hit = Some(t);
                        break;
                    }
                }
                match first_hit {
                    Some(t) => {
                        values[(i, 0)] = panel.y(i, t) as f64;
                        values[(i, 1)] = 0.0;
                    }
                    None => {
                        values[(i, 0)] = 0.0;
                        values[(i, 1)] = 1.0;
                    }
                }
            }
        }
    }
    Ok(MomentMatrix {
        values,
        locality_k: spec.locality_k(),
    })
}

/// Recompute agent `i`'s statistic on the panel/graph restricted to its
/// K-neighborhood; used to check the locality contract.
pub fn moment_on_neighborhood(
    panel: &Panel,
    graph: &SpatialGraph,
    spec: &MomentSpec,
    i: usize,
) -> Result<Vec<f64>> {
    let hood = k_neighborhood(graph, i, spec.locality_k())?;
    let sub_graph = graph.induced(&hood)?;
    let sub_panel = panel.restrict(&hood)?;
    let local = eval_moments(&sub_panel, &sub_graph, spec)?;
    let pos = hood.iter().position(|&v| v == i).expect("i is in its own neighborhood");
    Ok(local.values.row(pos).iter().copied().collect())
}
