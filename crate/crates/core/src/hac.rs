//! Autocorrelation-robust variance estimators for network moments.
//!
//! Four estimators of `Var(n^(-1/2) sum_i psi_i)`:
//!
//! - `iid_cov`: the naive covariance, no cross terms;
//! - `spatial_hac`: kernel-weighted double sum over spatial distances, with a
//!   grid index pruning pairs outside the product-kernel support;
//! - `network_hac`: the same double sum with path distance in place of spatial
//!   distance, driven by depth-bounded BFS (disconnected pairs weigh zero);
//! - `generalized_spatial_hac`: drops the first-order-stationarity requirement
//!   by plugging a kernel-regression estimate of `E[psi | position]` into the
//!   double sum and subtracting an outer-product correction.
//!
//! All estimators accumulate pair contributions in ascending index order with
//! a fixed chunk size, so results are identical across worker counts and equal
//! the naive double sum up to the last bit in the reductions they share.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::bfs_scan;
use crate::grid::SpatialGrid;
use crate::kernel::Kernel;
use crate::par::par_map_collect;
use crate::types::SpatialGraph;

/// Fixed accumulation chunk; constant so reductions are worker-count invariant.
const CHUNK: usize = 256;

/// Which estimator produced a [`HacEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HacMethod {
    Iid,
    Spatial,
    Network,
    GeneralizedSpatial,
}

impl std::fmt::Display for HacMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HacMethod::Iid => "iid",
            HacMethod::Spatial => "spatial",
            HacMethod::Network => "network",
            HacMethod::GeneralizedSpatial => "generalized_spatial",
        };
        write!(f, "{s}")
    }
}

/// Centering for the moment deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Center {
    /// Subtract the sample mean.
    SampleMean,
    /// Subtract a known constant (e.g. zero for score moments).
    KnownConstant(Vec<f64>),
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HacConfig {
    pub kernel: Kernel,
    /// Main bandwidth `h`.
    pub bandwidth: f64,
    /// Bandwidth `b` for the conditional-mean kernel regression
    /// (generalized estimator only).
    pub theta_bandwidth: Option<f64>,
    /// Kernel for the conditional-mean regression (generalized only).
    pub theta_kernel: Kernel,
    pub center: Center,
    /// Optional eigenvalue floor applied to the finished estimate.
    pub psd_floor: Option<f64>,
}

impl HacConfig {
    pub fn new(kernel: Kernel, bandwidth: f64) -> Self {
        Self {
            kernel,
            bandwidth,
            theta_bandwidth: None,
            theta_kernel: Kernel::Uniform,
            center: Center::SampleMean,
            psd_floor: None,
        }
    }

    pub fn with_center(mut self, center: Center) -> Self {
        self.center = center;
        self
    }

    pub fn with_theta(mut self, bandwidth: f64, kernel: Kernel) -> Self {
        self.theta_bandwidth = Some(bandwidth);
        self.theta_kernel = kernel;
        self
    }

    pub fn with_floor(mut self, c: f64) -> Self {
        self.psd_floor = Some(c);
        self
    }

    /// Reference spatial bandwidth `n^(1/(3d))`.
    pub fn spatial_default_bandwidth(n: usize, d: usize) -> f64 {
        (n as f64).powf(1.0 / (3.0 * d as f64))
    }

    /// Reference network bandwidth `log n`.
    pub fn network_default_bandwidth(n: usize) -> f64 {
        (n as f64).ln()
    }

    /// Reference generalized-spatial bandwidths: `h = n^(1/(4d))` and
    /// `b = (log n / n)^(1/(2p+d))` at smoothness `p = d/2 + 1`.
    pub fn generalized_default_bandwidths(n: usize, d: usize) -> (f64, f64) {
        let h = (n as f64).powf(1.0 / (4.0 * d as f64));
        let b = ((n as f64).ln() / n as f64).powf(1.0 / (2.0 * d as f64 + 2.0));
        (h, b)
    }
}

/// A finished variance estimate plus method metadata.
#[derive(Debug, Clone)]
pub struct HacEstimate {
    pub sigma: DMatrix<f64>,
    pub method: HacMethod,
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub theta_bandwidth: Option<f64>,
    pub floor_applied: bool,
    /// Positions where the conditional-mean window had to be widened.
    pub widened_windows: usize,
}

impl HacEstimate {
    /// JSON with the matrix in row-major order.
    pub fn to_json(&self) -> serde_json::Value {
        let m = self.sigma.nrows();
        let mut flat = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                flat.push(self.sigma[(i, j)]);
            }
        }
        serde_json::json!({
            "method": self.method,
            "kernel": self.kernel,
            "bandwidth": self.bandwidth,
            "theta_bandwidth": self.theta_bandwidth,
            "m": m,
            "sigma": flat,
            "floor_applied": self.floor_applied,
            "widened_windows": self.widened_windows,
        })
    }

    /// Apply the eigenvalue floor, returning a new estimate.
    pub fn with_floor(&self, c: f64) -> HacEstimate {
        let mut out = self.clone();
        out.sigma = psd_floor(&self.sigma, c);
        out.floor_applied = true;
        out
    }
}

fn resolve_center(psi: &DMatrix<f64>, center: &Center) -> Result<DVector<f64>> {
    let (n, m) = (psi.nrows(), psi.ncols());
    match center {
        Center::SampleMean => {
            let mut c = DVector::zeros(m);
            for a in 0..m {
                c[a] = psi.column(a).sum() / n as f64;
            }
            Ok(c)
        }
        Center::KnownConstant(v) => {
            if v.len() != m {
                return Err(CoreError::DimensionMismatch(format!(
                    "center has {} entries for {m} moment columns",
                    v.len()
                )));
            }
            Ok(DVector::from_column_slice(v))
        }
    }
}

fn demean(psi: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = (psi.nrows(), psi.ncols());
    DMatrix::from_fn(n, m, |i, a| psi[(i, a)] - c[a])
}

/// Sum per-`i` contributions over fixed-size chunks, folded in chunk order.
fn chunked_sum<F>(n: usize, m: usize, per_row: F) -> DMatrix<f64>
where
    F: Fn(usize, &mut DMatrix<f64>) + Send + Sync,
{
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let partials = par_map_collect(n_chunks, |c| {
        let mut acc = DMatrix::zeros(m, m);
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(n);
        for i in lo..hi {
            per_row(i, &mut acc);
        }
        acc
    });
    let mut total = DMatrix::zeros(m, m);
    for p in partials {
        total += p;
    }
    total
}

fn symmetrize(sigma: DMatrix<f64>) -> DMatrix<f64> {
    let asym = (&sigma - sigma.transpose()).abs().max();
    debug_assert!(asym < 1e-10, "asymmetry {asym} before symmetrization");
    (&sigma + sigma.transpose()) * 0.5
}

fn finalize(
    sigma: DMatrix<f64>,
    method: HacMethod,
    cfg_kernel: Kernel,
    bandwidth: f64,
    theta_bandwidth: Option<f64>,
    widened: usize,
    floor: Option<f64>,
) -> HacEstimate {
    let est = HacEstimate {
        sigma: symmetrize(sigma),
        method,
        kernel: cfg_kernel,
        bandwidth,
        theta_bandwidth,
        floor_applied: false,
        widened_windows: widened,
    };
    match floor {
        Some(c) => est.with_floor(c),
        None => est,
    }
}

/// Naive covariance `(1/n) sum_i (psi_i - c)(psi_i - c)'`.
pub fn iid_cov(psi: &DMatrix<f64>, center: &Center) -> Result<HacEstimate> {
    let (n, m) = (psi.nrows(), psi.ncols());
    if n < 2 && matches!(center, Center::SampleMean) {
        return Err(CoreError::InvalidArgument(
            "iid covariance with sample-mean centering needs n >= 2".into(),
        ));
    }
    if n == 0 {
        return Err(CoreError::InvalidArgument("empty moment matrix".into()));
    }
    let c = resolve_center(psi, center)?;
    let dev = demean(psi, &c);
    let sum = chunked_sum(n, m, |i, acc| {
        for a in 0..m {
            let da = dev[(i, a)];
            for b in 0..m {
                acc[(a, b)] += da * dev[(i, b)];
            }
        }
    });
    Ok(finalize(
        sum / n as f64,
        HacMethod::Iid,
        Kernel::Uniform,
        0.0,
        None,
        0,
        None,
    ))
}

/// Spatial HAC
/// `(1/n) sum_i sum_j (psi_i - c)(psi_j - c)' K((rho_i - rho_j)/h)`
/// with the product kernel across coordinates. Pairs outside the sup-norm
/// support are pruned by a grid index; the result equals the unpruned double
/// sum because skipped terms are exactly zero.
pub fn spatial_hac(psi: &DMatrix<f64>, positions: &DMatrix<f64>, cfg: &HacConfig) -> Result<HacEstimate> {
    let (n, m) = (psi.nrows(), psi.ncols());
    if positions.nrows() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "{} position rows for {n} moment rows",
            positions.nrows()
        )));
    }
    if !(cfg.bandwidth > 0.0) {
        return Err(CoreError::NonPositiveBandwidth(cfg.bandwidth));
    }
    let d = positions.ncols();
    let h = cfg.bandwidth;
    let c = resolve_center(psi, &cfg.center)?;
    let dev = demean(psi, &c);
    let grid = SpatialGrid::build(positions, h);
    let kernel = cfg.kernel;
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let partials = par_map_collect(n_chunks, |ch| {
        let mut acc = DMatrix::zeros(m, m);
        let mut cand = Vec::new();
        let lo = ch * CHUNK;
        let hi = ((ch + 1) * CHUNK).min(n);
        for i in lo..hi {
            grid.candidates_within(positions, i, h, &mut cand);
            for &j in &cand {
                let j = j as usize;
                let mut w = 1.0;
                for k in 0..d {
                    w *= kernel.eval((positions[(i, k)] - positions[(j, k)]) / h);
                }
                if w == 0.0 {
                    continue;
                }
                for a in 0..m {
                    let da = w * dev[(i, a)];
                    for b in 0..m {
                        acc[(a, b)] += da * dev[(j, b)];
                    }
                }
            }
        }
        acc
    });
    let mut sum = DMatrix::zeros(m, m);
    for p in partials {
        sum += p;
    }
    Ok(finalize(
        sum / n as f64,
        HacMethod::Spatial,
        kernel,
        h,
        None,
        0,
        cfg.psd_floor,
    ))
}

/// Network HAC
/// `(1/n) sum_i sum_j (psi_i - c)(psi_j - c)' K(path_distance(i,j)/h)`.
/// Distances come from depth-bounded BFS (depth `ceil(h)`); pairs beyond the
/// bound or disconnected get kernel weight zero.
pub fn network_hac(psi: &DMatrix<f64>, graph: &SpatialGraph, cfg: &HacConfig) -> Result<HacEstimate> {
    let (n, m) = (psi.nrows(), psi.ncols());
    if graph.n() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "graph has {} agents for {n} moment rows",
            graph.n()
        )));
    }
    if !(cfg.bandwidth >= 0.0) {
        return Err(CoreError::NonPositiveBandwidth(cfg.bandwidth));
    }
    let h = cfg.bandwidth;
    let depth = h.ceil() as usize;
    let c = resolve_center(psi, &cfg.center)?;
    let dev = demean(psi, &c);
    let kernel = cfg.kernel;
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let partials = par_map_collect(n_chunks, |ch| {
        let mut acc = DMatrix::zeros(m, m);
        let mut dist = vec![u32::MAX; n];
        let mut queue = Vec::new();
        let mut reached: Vec<(u32, u32)> = Vec::new();
        let lo = ch * CHUNK;
        let hi = ((ch + 1) * CHUNK).min(n);
        for i in lo..hi {
            reached.clear();
            bfs_scan(graph, i, depth, &mut dist, &mut queue, |j, l| {
                reached.push((j, l));
            });
            reached.sort_unstable_by_key(|&(j, _)| j);
            for &(j, l) in &reached {
                let w = if l == 0 {
                    1.0
                } else if h == 0.0 {
                    0.0
                } else {
                    kernel.eval(l as f64 / h)
                };
                if w == 0.0 {
                    continue;
                }
                let j = j as usize;
                for a in 0..m {
                    let da = w * dev[(i, a)];
                    for b in 0..m {
                        acc[(a, b)] += da * dev[(j, b)];
                    }
                }
            }
        }
        acc
    });
    let mut sum = DMatrix::zeros(m, m);
    for p in partials {
        sum += p;
    }
    Ok(finalize(
        sum / n as f64,
        HacMethod::Network,
        kernel,
        h,
        None,
        0,
        cfg.psd_floor,
    ))
}

/// Kernel-regression estimate of `E[psi | position]` at every observation
/// point, using positions rescaled by `n^(-1/d)` so the regressor support does
/// not drift with `n`. Windows with zero total weight are widened by doubling
/// `b` locally; the second return value counts how often that happened.
fn theta_hat(
    psi: &DMatrix<f64>,
    scaled: &DMatrix<f64>,
    b: f64,
    kernel: Kernel,
) -> (DMatrix<f64>, usize) {
    let (n, m) = (psi.nrows(), psi.ncols());
    let d = scaled.ncols();
    let grid = SpatialGrid::build(scaled, b);
    let rows: Vec<(Vec<f64>, usize)> = par_map_collect(n, |i| {
        let mut cand = Vec::new();
        let mut widened = 0usize;
        let mut bi = b;
        loop {
            if widened == 0 {
                grid.candidates_within(scaled, i, bi, &mut cand);
            } else {
                cand.clear();
                cand.extend(0..n as u32);
            }
            let mut den = 0.0;
            let mut num = vec![0.0; m];
            for &j in &cand {
                let j = j as usize;
                let mut w = 1.0;
                for k in 0..d {
                    w *= kernel.eval((scaled[(i, k)] - scaled[(j, k)]) / bi);
                }
                if w == 0.0 {
                    continue;
                }
                den += w;
                for a in 0..m {
                    num[a] += w * psi[(j, a)];
                }
            }
            if den > 0.0 {
                for v in num.iter_mut() {
                    *v /= den;
                }
                return (num, widened);
            }
            bi *= 2.0;
            widened += 1;
        }
    });
    let mut theta = DMatrix::zeros(n, m);
    let mut widened = 0usize;
    for (i, (row, w)) in rows.into_iter().enumerate() {
        for a in 0..m {
            theta[(i, a)] = row[a];
        }
        widened += w.min(1);
    }
    (theta, widened)
}

/// Generalized spatial HAC `sigma2_hat - alpha_hat alpha_hat'` with
///
/// `sigma2_hat = (1/n) sum_i psi_i psi_i'
///             + (1/n) sum_i sum_{j != i} (psi_i psi_j' - theta_i theta_j') K((rho_i - rho_j)/h)`,
/// `alpha_hat  = psi_bar + (1/n) sum_i sum_{j != i} (psi_i - theta_i) K((rho_i - rho_j)/h)`,
///
/// where `theta` is the kernel-regression estimate of `E[psi | position]`.
/// Consistent without first-order stationarity. Centering is built into the
/// formula itself, so `cfg.center` is ignored here.
pub fn generalized_spatial_hac(
    psi: &DMatrix<f64>,
    positions: &DMatrix<f64>,
    cfg: &HacConfig,
) -> Result<HacEstimate> {
    let (n, m) = (psi.nrows(), psi.ncols());
    if positions.nrows() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "{} position rows for {n} moment rows",
            positions.nrows()
        )));
    }
    if !(cfg.bandwidth > 0.0) {
        return Err(CoreError::NonPositiveBandwidth(cfg.bandwidth));
    }
    let b = cfg
        .theta_bandwidth
        .ok_or_else(|| CoreError::InvalidArgument("generalized HAC needs theta_bandwidth".into()))?;
    if !(b > 0.0) {
        return Err(CoreError::NonPositiveBandwidth(b));
    }
    let d = positions.ncols();
    let h = cfg.bandwidth;
    let scale = (n as f64).powf(-1.0 / d as f64);
    let scaled = positions * scale;
    let (theta, widened) = theta_hat(psi, &scaled, b, cfg.theta_kernel);

    let psibar = resolve_center(psi, &Center::SampleMean)?;
    let grid = SpatialGrid::build(positions, h);
    let kernel = cfg.kernel;

    // per-row cross sums and the alpha accumulator in one chunked pass
    let n_chunks = n.div_ceil(CHUNK).max(1);
    let partials: Vec<(DMatrix<f64>, DVector<f64>)> = par_map_collect(n_chunks, |ch| {
        let mut cross = DMatrix::zeros(m, m);
        let mut alpha = DVector::zeros(m);
        let mut cand = Vec::new();
        let lo = ch * CHUNK;
        let hi = ((ch + 1) * CHUNK).min(n);
        for i in lo..hi {
            grid.candidates_within(positions, i, h, &mut cand);
            let mut ksum = 0.0;
            for &j in &cand {
                let j = j as usize;
                if j == i {
                    continue;
                }
                let mut w = 1.0;
                for k in 0..d {
                    w *= kernel.eval((positions[(i, k)] - positions[(j, k)]) / h);
                }
                if w == 0.0 {
                    continue;
                }
                ksum += w;
                for a in 0..m {
                    let pa = w * psi[(i, a)];
                    let ta = w * theta[(i, a)];
                    for bcol in 0..m {
                        cross[(a, bcol)] += pa * psi[(j, bcol)] - ta * theta[(j, bcol)];
                    }
                }
            }
            for a in 0..m {
                alpha[a] += (psi[(i, a)] - theta[(i, a)]) * ksum;
            }
        }
        (cross, alpha)
    });
    let mut cross = DMatrix::zeros(m, m);
    let mut alpha_acc = DVector::zeros(m);
    for (c, a) in partials {
        cross += c;
        alpha_acc += a;
    }
    let self_sum = chunked_sum(n, m, |i, acc| {
        for a in 0..m {
            let pa = psi[(i, a)];
            for bcol in 0..m {
                acc[(a, bcol)] += pa * psi[(i, bcol)];
            }
        }
    });
    let sigma2 = (self_sum + cross) / n as f64;
    let alpha = psibar + alpha_acc / n as f64;
    let sigma = sigma2 - &alpha * alpha.transpose();
    Ok(finalize(
        sigma,
        HacMethod::GeneralizedSpatial,
        kernel,
        h,
        Some(b),
        widened,
        cfg.psd_floor,
    ))
}

/// Eigenvalue floor: eigendecompose, clamp eigenvalues at `c`, reassemble.
pub fn psd_floor(sigma: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = DVector::from_fn(eig.eigenvalues.len(), |k, _| eig.eigenvalues[k].max(c));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_psi(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngSpec::new(seed, 0).rng();
        DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_positions(n: usize, d: usize, width: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = RngSpec::new(seed, 1).rng();
        DMatrix::from_fn(n, d, |_, _| width * rng.gen::<f64>())
    }

    /// Naive double sums used as oracles, written independently of the
    /// production accumulation.
    fn naive_spatial(psi: &DMatrix<f64>, pos: &DMatrix<f64>, h: f64, kernel: Kernel, c: &[f64]) -> DMatrix<f64> {
        let (n, m) = (psi.nrows(), psi.ncols());
        let d = pos.ncols();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..n {
            for j in 0..n {
                let mut w = 1.0;
                for k in 0..d {
                    w *= kernel.eval((pos[(i, k)] - pos[(j, k)]) / h);
                }
                for a in 0..m {
                    for b in 0..m {
                        out[(a, b)] += w * (psi[(i, a)] - c[a]) * (psi[(j, b)] - c[b]);
                    }
                }
            }
        }
        out / n as f64
    }

    #[test]
    fn iid_examples() {
        let constant = DMatrix::from_element(5, 2, 3.0);
        let est = iid_cov(&constant, &Center::SampleMean).unwrap();
        assert_eq!(est.sigma.abs().max(), 0.0);

        let pm = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let est = iid_cov(&pm, &Center::SampleMean).unwrap();
        assert_eq!(est.sigma[(0, 0)], 1.0);

        assert!(iid_cov(&DMatrix::from_element(1, 1, 2.0), &Center::SampleMean).is_err());

        // two-pass covariance oracle times (n-1)/n
        let psi = random_psi(200, 3, 5);
        let est = iid_cov(&psi, &Center::SampleMean).unwrap();
        let mean: Vec<f64> = (0..3).map(|a| psi.column(a).sum() / 200.0).collect();
        let mut oracle = DMatrix::zeros(3, 3);
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..200 {
                    s += (psi[(i, a)] - mean[a]) * (psi[(i, b)] - mean[b]);
                }
                oracle[(a, b)] = s / 199.0;
            }
        }
        let diff = (&est.sigma - oracle * (199.0 / 200.0)).abs().max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn spatial_matches_naive_double_sum() {
        let psi = random_psi(150, 3, 7);
        let pos = random_positions(150, 2, 12.0, 7);
        let cfg = HacConfig::new(Kernel::Bartlett, 2.5);
        let est = spatial_hac(&psi, &pos, &cfg).unwrap();
        let mean: Vec<f64> = (0..3).map(|a| psi.column(a).sum() / 150.0).collect();
        let oracle = naive_spatial(&psi, &pos, 2.5, Kernel::Bartlett, &mean);
        let rel = (&est.sigma - &oracle).norm() / oracle.norm();
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn spatial_hand_table() {
        // n = 4 on a line, hand-computable double sum
        let psi = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 2.0, 0.5]);
        let pos = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 5.0]);
        let cfg = HacConfig::new(Kernel::Bartlett, 2.0).with_center(Center::KnownConstant(vec![0.0]));
        let est = spatial_hac(&psi, &pos, &cfg).unwrap();
        // weights: |d|=0 -> 1, |d|=1 -> 0.5, |d|=2 -> 0, |d|>=3 -> 0
        // sum = (1+1+4+0.25) + 2*0.5*(1*-1) + 2*0.5*(-1*2) = 6.25 - 1 - 2 = 3.25
        assert!((est.sigma[(0, 0)] - 3.25 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn spatial_below_min_gap_equals_iid_and_n1_zero() {
        let psi = random_psi(60, 2, 9);
        let pos = random_positions(60, 2, 40.0, 9);
        let cfg = HacConfig::new(Kernel::Bartlett, 1e-9);
        let est = spatial_hac(&psi, &pos, &cfg).unwrap();
        let iid = iid_cov(&psi, &Center::SampleMean).unwrap();
        assert_eq!((est.sigma - iid.sigma).abs().max(), 0.0);

        let one = DMatrix::from_element(1, 1, 4.0);
        let onepos = DMatrix::from_element(1, 2, 0.0);
        let est = spatial_hac(&one, &onepos, &HacConfig::new(Kernel::Bartlett, 1.0)).unwrap();
        assert_eq!(est.sigma[(0, 0)], 0.0);
    }

    #[test]
    fn network_hand_table() {
        // 3-node path, Bartlett h=2, psi = (1,2,3), known center 0 -> 22/3
        let positions = DMatrix::from_fn(3, 1, |i, _| i as f64);
        let g = SpatialGraph::new(positions, &[(0, 1), (1, 2)], 1.0).unwrap();
        let psi = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let cfg = HacConfig::new(Kernel::Bartlett, 2.0).with_center(Center::KnownConstant(vec![0.0]));
        let est = network_hac(&psi, &g, &cfg).unwrap();
        assert!((est.sigma[(0, 0)] - 22.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn network_reduces_to_iid() {
        let psi = random_psi(50, 2, 13);
        let positions = DMatrix::from_fn(50, 1, |i, _| i as f64);
        // edgeless graph: all off-diagonal distances infinite
        let edgeless = SpatialGraph::new(positions.clone(), &[], 1.0).unwrap();
        let est = network_hac(&psi, &edgeless, &HacConfig::new(Kernel::Bartlett, 5.0)).unwrap();
        let iid = iid_cov(&psi, &Center::SampleMean).unwrap();
        assert_eq!((est.sigma - &iid.sigma).abs().max(), 0.0);

        // h < 1 kills every off-diagonal weight on any graph
        let edges: Vec<(usize, usize)> = (0..49).map(|i| (i, i + 1)).collect();
        let path = SpatialGraph::new(positions, &edges, 1.0).unwrap();
        let est = network_hac(&psi, &path, &HacConfig::new(Kernel::Bartlett, 0.9)).unwrap();
        assert_eq!((est.sigma - &iid.sigma).abs().max(), 0.0);
        let est = network_hac(&psi, &path, &HacConfig::new(Kernel::Bartlett, 0.0)).unwrap();
        assert_eq!((est.sigma - iid.sigma).abs().max(), 0.0);
    }

    #[test]
    fn lattice_network_equals_scaled_spatial() {
        // 1-d lattice with spacing s: path distance = spatial distance / s
        let n = 40;
        let s = 0.5;
        let positions = DMatrix::from_fn(n, 1, |i, _| s * i as f64);
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let g = SpatialGraph::new(positions.clone(), &edges, 1.0).unwrap();
        let psi = random_psi(n, 2, 17);
        let h = 3.0;
        let net = network_hac(&psi, &g, &HacConfig::new(Kernel::Bartlett, h)).unwrap();
        let sp = spatial_hac(&psi, &positions, &HacConfig::new(Kernel::Bartlett, s * h)).unwrap();
        assert_eq!((net.sigma - sp.sigma).abs().max(), 0.0);
    }

    #[test]
    fn monotone_in_bandwidth_for_positive_deviation_products() {
        // m = 1 with all deviations the same sign: Bartlett weights only grow with h
        let psi = DMatrix::from_fn(30, 1, |i, _| 1.0 + (i % 5) as f64);
        let pos = random_positions(30, 2, 6.0, 23);
        let cfg = |h: f64| HacConfig::new(Kernel::Bartlett, h).with_center(Center::KnownConstant(vec![0.0]));
        let mut last = 0.0;
        for h in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let est = spatial_hac(&psi, &pos, &cfg(h)).unwrap();
            assert!(est.sigma[(0, 0)] >= last);
            last = est.sigma[(0, 0)];
        }
    }

    #[test]
    fn generalized_constant_psi_is_zero() {
        let psi = DMatrix::from_element(40, 2, 2.5);
        let pos = random_positions(40, 2, 8.0, 3);
        let cfg = HacConfig::new(Kernel::Bartlett, 2.0).with_theta(0.5, Kernel::Uniform);
        let est = generalized_spatial_hac(&psi, &pos, &cfg).unwrap();
        assert!(est.sigma.abs().max() < 1e-12);
        assert_eq!(est.widened_windows, 0);
    }

    #[test]
    fn generalized_wide_window_identity() {
        // with b so large every weight is equal, theta == psi_bar and the
        // estimator collapses to spatial HAC minus a rank-one correction
        let n = 50;
        let psi = random_psi(n, 2, 31);
        let pos = random_positions(n, 2, 9.0, 31);
        let h = 2.0;
        let cfg = HacConfig::new(Kernel::Bartlett, h).with_theta(1e6, Kernel::Uniform);
        let est = generalized_spatial_hac(&psi, &pos, &cfg).unwrap();

        let mean: Vec<f64> = (0..2).map(|a| psi.column(a).sum() / n as f64).collect();
        let spatial = naive_spatial(&psi, &pos, h, Kernel::Bartlett, &mean);
        let mut delta = DVector::zeros(2);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut w = 1.0;
                for k in 0..2 {
                    w *= Kernel::Bartlett.eval((pos[(i, k)] - pos[(j, k)]) / h);
                }
                for a in 0..2 {
                    delta[a] += (psi[(i, a)] - mean[a]) * w;
                }
            }
        }
        delta /= n as f64;
        let expected = spatial - &delta * delta.transpose();
        let rel = (&est.sigma - &expected).norm() / expected.norm();
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn generalized_hand_table() {
        // n = 5 fixed table evaluated against a direct transcription of the
        // estimator's definition
        let psi = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 0.5, -1.0, 3.0]);
        let pos = DMatrix::from_column_slice(5, 1, &[0.0, 0.8, 1.6, 3.0, 3.3]);
        let (h, b) = (1.0, 0.35);
        let n = 5usize;
        let cfg = HacConfig::new(Kernel::Bartlett, h).with_theta(b, Kernel::Uniform);
        let est = generalized_spatial_hac(&psi, &pos, &cfg).unwrap();

        // direct evaluation
        let scale = (n as f64).powf(-1.0);
        let mut theta = [0.0f64; 5];
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                let w = Kernel::Uniform.eval(scale * (pos[(i, 0)] - pos[(j, 0)]) / b);
                num += w * psi[(j, 0)];
                den += w;
            }
            theta[i] = num / den;
        }
        let psibar = psi.column(0).sum() / n as f64;
        let mut sig = psi.column(0).iter().map(|v| v * v).sum::<f64>() / n as f64;
        let mut alpha = psibar;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = Kernel::Bartlett.eval((pos[(i, 0)] - pos[(j, 0)]) / h);
                sig += (psi[(i, 0)] * psi[(j, 0)] - theta[i] * theta[j]) * w / n as f64;
                alpha += (psi[(i, 0)] - theta[i]) * w / n as f64;
            }
        }
        let expected = sig - alpha * alpha;
        assert!((est.sigma[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn psd_floor_examples() {
        let ident = DMatrix::identity(3, 3);
        assert!(((psd_floor(&ident, 0.1)) - &ident).abs().max() < 1e-12);

        let indef = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -0.5]));
        let fixed = psd_floor(&indef, 0.1);
        assert!((fixed[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((fixed[(1, 1)] - 0.1).abs() < 1e-12);

        // random symmetric: floored output is PSD and acts like the input on
        // the eigenspace with eigenvalues >= c
        let mut rng = RngSpec::new(41, 0).rng();
        let raw = DMatrix::from_fn(4, 4, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let sym = (&raw + raw.transpose()) * 0.5;
        let c = 0.1;
        let floored = psd_floor(&sym, c);
        let eig = SymmetricEigen::new(floored.clone());
        assert!(eig.eigenvalues.min() >= c - 1e-10);
        let orig = SymmetricEigen::new(sym.clone());
        for k in 0..4 {
            if orig.eigenvalues[k] >= c {
                let v = orig.eigenvectors.column(k).into_owned();
                let diff = (&floored * &v - &sym * &v).abs().max();
                assert!(diff < 1e-10);
            }
        }
    }

    #[test]
    fn estimate_serializes_row_major() {
        let psi = random_psi(20, 2, 51);
        let est = iid_cov(&psi, &Center::SampleMean).unwrap();
        let json = est.to_json();
        assert_eq!(json["m"], 2);
        assert_eq!(json["method"], "iid");
        let flat = json["sigma"].as_array().unwrap();
        assert_eq!(flat.len(), 4);
        assert_eq!(flat[1].as_f64().unwrap(), est.sigma[(0, 1)]);
    }
}
