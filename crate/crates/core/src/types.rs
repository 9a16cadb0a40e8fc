//! Shared domain types: the observed network and the outcome panel.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};

/// A single observed network: agent positions in `R^d` plus a sparse,
/// symmetric, zero-diagonal adjacency structure.
///
/// Positions are stored on the generated scale `rho_i = omega_n * rho_tilde_i`;
/// `scale` records `omega_n` (1.0 for data not produced by a generator).
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    positions: DMatrix<f64>,
    neighbors: Vec<Vec<u32>>,
    scale: f64,
}

impl SpatialGraph {
    /// Build a graph from an `n x d` position matrix and an undirected edge list.
    ///
    /// Self-links are rejected; duplicate edges (in either orientation) collapse
    /// to one. Adjacency lists come out sorted.
    pub fn new(positions: DMatrix<f64>, edges: &[(usize, usize)], scale: f64) -> Result<Self> {
        let n = positions.nrows();
        if positions.ncols() == 0 {
            return Err(CoreError::InvalidArgument(
                "positions must have at least one column".into(),
            ));
        }
        if !(scale > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::InvalidArgument(
                "positions contain nonfinite entries".into(),
            ));
        }
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n {
                return Err(CoreError::IndexOutOfRange { index: i, len: n });
            }
            if j >= n {
                return Err(CoreError::IndexOutOfRange { index: j, len: n });
            }
            if i == j {
                return Err(CoreError::InvalidArgument(format!("self-link at agent {i}")));
            }
            neighbors[i].push(j as u32);
            neighbors[j].push(i as u32);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            positions,
            neighbors,
            scale,
        })
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    /// Spatial dimension.
    pub fn d(&self) -> usize {
        self.positions.ncols()
    }

    /// Position scale `omega_n` used at generation time.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn position(&self, i: usize, k: usize) -> f64 {
        self.positions[(i, k)]
    }

    /// Sorted neighbor list of agent `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&(j as u32)).is_ok()
    }

    /// Total number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Canonicalized edge list with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                let j = j as usize;
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    /// Subgraph induced by `nodes` (sorted, deduplicated). Agents are relabelled
    /// `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<SpatialGraph> {
        let n = self.n();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= n {
                return Err(CoreError::IndexOutOfRange { index: old, len: n });
            }
            remap[old] = new;
        }
        let mut positions = DMatrix::zeros(nodes.len(), self.d());
        for (new, &old) in nodes.iter().enumerate() {
            for k in 0..self.d() {
                positions[(new, k)] = self.positions[(old, k)];
            }
        }
        let mut edges = Vec::new();
        for (new, &old) in nodes.iter().enumerate() {
            for &j in self.neighbors(old) {
                let jn = remap[j as usize];
                if jn != usize::MAX && new < jn {
                    edges.push((new, jn));
                }
            }
        }
        SpatialGraph::new(positions, &edges, self.scale)
    }
}

/// Binary outcomes `Y_i^t` and covariates `X_i^t` for `t = 0..T` over `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    n: usize,
    periods: usize,
    k: usize,
    outcomes: Vec<u8>,
    covariates: Vec<f64>,
}

impl Panel {
    /// `outcomes` is row-major `n x periods`; `covariates` is `n x periods x k`
    /// with the covariate index fastest.
    pub fn new(
        n: usize,
        periods: usize,
        k: usize,
        outcomes: Vec<u8>,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        if periods == 0 {
            return Err(CoreError::InvalidArgument("panel needs at least one period".into()));
        }
        if outcomes.len() != n * periods {
            return Err(CoreError::DimensionMismatch(format!(
                "outcomes has {} entries, expected {}",
                outcomes.len(),
                n * periods
            )));
        }
        if covariates.len() != n * periods * k {
            return Err(CoreError::DimensionMismatch(format!(
                "covariates has {} entries, expected {}",
                covariates.len(),
                n * periods * k
            )));
        }
        if outcomes.iter().any(|&y| y > 1) {
            return Err(CoreError::InvalidArgument("outcomes must be 0 or 1".into()));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::InvalidArgument(
                "covariates contain nonfinite entries".into(),
            ));
        }
        Ok(Self {
            n,
            periods,
            k,
            outcomes,
            covariates,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observed periods, `T + 1`.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Covariate dimension per agent-period.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self, i: usize, t: usize) -> u8 {
        self.outcomes[i * self.periods + t]
    }

    pub fn x(&self, i: usize, t: usize) -> &[f64] {
        let base = (i * self.periods + t) * self.k;
        &self.covariates[base..base + self.k]
    }

    /// Keep only periods `0..=new_t`.
    pub fn truncate(&self, new_t: usize) -> Result<Panel> {
        let periods = new_t + 1;
        if periods > self.periods {
            return Err(CoreError::InvalidArgument(format!(
                "cannot truncate to {} periods, panel has {}",
                periods, self.periods
            )));
        }
        let mut outcomes = Vec::with_capacity(self.n * periods);
        let mut covariates = Vec::with_capacity(self.n * periods * self.k);
        for i in 0..self.n {
            for t in 0..periods {
                outcomes.push(self.y(i, t));
                covariates.extend_from_slice(self.x(i, t));
            }
        }
        Panel::new(self.n, periods, self.k, outcomes, covariates)
    }

    /// Restrict to the given agents, relabelled in order.
    pub fn restrict(&self, nodes: &[usize]) -> Result<Panel> {
        let mut outcomes = Vec::with_capacity(nodes.len() * self.periods);
        let mut covariates = Vec::with_capacity(nodes.len() * self.periods * self.k);
        for &i in nodes {
            if i >= self.n {
                return Err(CoreError::IndexOutOfRange { index: i, len: self.n });
            }
            for t in 0..self.periods {
                outcomes.push(self.y(i, t));
                covariates.extend_from_slice(self.x(i, t));
            }
        }
        Panel::new(nodes.len(), self.periods, self.k, outcomes, covariates)
    }
}
