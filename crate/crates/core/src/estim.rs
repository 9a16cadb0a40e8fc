//! Probit/logit pseudo-maximum-likelihood and sandwich variance assembly.
//!
//! Cross-sectional dependence makes the likelihood a pseudo-likelihood: the
//! point estimator is the usual Newton-Raphson MLE, but its variance needs the
//! sandwich `Hbar^-1 Sigma Hbar^-1 / n` with `Sigma` an estimate of
//! `Var(n^(-1/2) sum_i s_i)` supplied by one of the HAC estimators.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CoreError, Result};
use crate::simsocial::Link;
use crate::types::{Panel, SpatialGraph};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e3;

/// Result of a pseudo-ML fit: coefficients, per-observation scores, and the
/// Hessian of the total log-likelihood at the optimum.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// `n x m` score contributions `s_i(beta_hat)`, un-demeaned.
    pub scores: DMatrix<f64>,
    /// `m x m` Hessian of the total log-likelihood (negative definite).
    pub hessian: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `phi(x)/Phi(x)` with an asymptotic branch deep in the
/// left tail where both pieces underflow.
fn mills(x: f64) -> f64 {
    if x < -35.0 {
        -x - 1.0 / x
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

fn log_norm_cdf(x: f64) -> f64 {
    if x < -35.0 {
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    } else {
        norm_cdf(x).ln()
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Per-observation score factor `g` and curvature factor `h >= 0` such that
/// `s_i = g x_i` and the Hessian contribution is `-h x_i x_i'`.
fn link_parts(link: Link, y: u8, eta: f64) -> (f64, f64) {
    match link {
        Link::Probit => {
            if y == 1 {
                let lam = mills(eta);
                (lam, lam * (lam + eta))
            } else {
                let lam = mills(-eta);
                (-lam, lam * (lam - eta))
            }
        }
        Link::Logit => {
            let p = 1.0 / (1.0 + (-eta).exp());
            ((y as f64) - p, p * (1.0 - p))
        }
    }
}

fn obs_log_likelihood(link: Link, y: u8, eta: f64) -> f64 {
    match link {
        Link::Probit => {
            if y == 1 {
                log_norm_cdf(eta)
            } else {
                log_norm_cdf(-eta)
            }
        }
        Link::Logit => {
            if y == 1 {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        }
    }
}

/// Total log-likelihood at `beta`.
pub fn log_likelihood(y: &[u8], x: &DMatrix<f64>, link: Link, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| obs_log_likelihood(link, yi, e))
        .sum()
}

/// `n x m` matrix of score contributions at an arbitrary `beta`.
pub fn score_matrix(y: &[u8], x: &DMatrix<f64>, link: Link, beta: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = (x.nrows(), x.ncols());
    let eta = x * beta;
    let mut scores = DMatrix::zeros(n, m);
    for i in 0..n {
        let (g, _) = link_parts(link, y[i], eta[i]);
        for c in 0..m {
            scores[(i, c)] = g * x[(i, c)];
        }
    }
    scores
}

/// `m x m` Hessian of the total log-likelihood at an arbitrary `beta`.
pub fn hessian_matrix(y: &[u8], x: &DMatrix<f64>, link: Link, beta: &DVector<f64>) -> DMatrix<f64> {
    let (_, neg_hess) = gradient_and_neg_hessian(y, x, link, beta);
    -neg_hess
}

fn gradient_and_neg_hessian(
    y: &[u8],
    x: &DMatrix<f64>,
    link: Link,
    beta: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, m) = (x.nrows(), x.ncols());
    let eta = x * beta;
    let mut grad = DVector::zeros(m);
    let mut neg_hess = DMatrix::zeros(m, m);
    for i in 0..n {
        let (g, h) = link_parts(link, y[i], eta[i]);
        for a in 0..m {
            let xa = x[(i, a)];
            grad[a] += g * xa;
            for b in a..m {
                neg_hess[(a, b)] += h * xa * x[(i, b)];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            neg_hess[(a, b)] = neg_hess[(b, a)];
        }
    }
    (grad, neg_hess)
}

/// Fit the binary-choice model by Newton-Raphson with step halving.
///
/// Converges when the sup norm of the gradient falls below `1e-8`. Separation
/// (all outcomes equal, or a coefficient path diverging past norm `1e3`) and
/// rank-deficient designs are reported as errors.
pub fn fit_pseudo_ml(y: &[u8], x: &DMatrix<f64>, link: Link) -> Result<FitResult> {
    let (n, m) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "{} outcomes for {} design rows",
            y.len(),
            n
        )));
    }
    if n == 0 || m == 0 {
        return Err(CoreError::InvalidArgument("empty design".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(CoreError::Separation("all outcomes equal".into()));
    }

    let mut beta = DVector::zeros(m);
    let mut ll = log_likelihood(y, x, link, &beta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let (grad, neg_hess) = gradient_and_neg_hessian(y, x, link, &beta);
        if grad.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        let chol = Cholesky::new(neg_hess).ok_or(CoreError::RankDeficient)?;
        let delta = chol.solve(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + step * &delta;
            let ll_new = log_likelihood(y, x, link, &candidate);
            if ll_new > ll || (ll_new - ll).abs() < 1e-14 * (1.0 + ll.abs()) {
                beta = candidate;
                ll = ll_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(CoreError::NonConvergence(iterations));
        }
        if beta.norm() > SEPARATION_NORM {
            return Err(CoreError::Separation(format!(
                "coefficient norm exceeded {SEPARATION_NORM}"
            )));
        }
    }
    if !converged {
        let (grad, _) = gradient_and_neg_hessian(y, x, link, &beta);
        if grad.amax() < GRAD_TOL {
            converged = true;
        } else {
            return Err(CoreError::NonConvergence(MAX_ITER));
        }
    }
    let scores = score_matrix(y, x, link, &beta);
    let (_, neg_hess) = gradient_and_neg_hessian(y, x, link, &beta);
    Ok(FitResult {
        beta_hat: beta,
        scores,
        hessian: -neg_hess,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Sandwich variance `V = Hbar^-1 Sigma Hbar^-1 / n` with `Hbar = hessian / n`
/// and `Sigma` an estimate of `Var(n^(-1/2) sum_i s_i)`. Plugging the i.i.d.
/// score covariance `(1/n) sum s_i s_i'` reproduces textbook robust standard
/// errors. Returns the variance matrix and the per-coordinate standard errors.
pub fn sandwich_variance(fit: &FitResult, s_hat: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = fit.scores.nrows() as f64;
    let m = fit.beta_hat.len();
    if s_hat.nrows() != m || s_hat.ncols() != m {
        return Err(CoreError::DimensionMismatch(format!(
            "sigma is {}x{}, expected {m}x{m}",
            s_hat.nrows(),
            s_hat.ncols()
        )));
    }
    let neg_hbar = -&fit.hessian / n;
    let chol = Cholesky::new(neg_hbar).ok_or(CoreError::SingularHessian)?;
    let inv = chol.inverse();
    let v = (&inv * s_hat * &inv) / n;
    let se = (0..m).map(|k| v[(k, k)].max(0.0).sqrt()).collect();
    Ok((v, se))
}

/// Two-sided t-test per coordinate: reject iff
/// `|beta_hat_k - beta_null_k| / se_k > z_(1 - level/2)`.
pub fn t_test(beta_hat: &[f64], se: &[f64], beta_null: &[f64], level: f64) -> Result<Vec<bool>> {
    if beta_hat.len() != se.len() || beta_hat.len() != beta_null.len() {
        return Err(CoreError::DimensionMismatch(
            "t_test inputs must have equal length".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "test level must be in (0,1), got {level}"
        )));
    }
    for (k, &s) in se.iter().enumerate() {
        if !(s > 0.0) {
            return Err(CoreError::NonPositiveSe(k));
        }
    }
    let z = critical_value(level);
    Ok(beta_hat
        .iter()
        .zip(se)
        .zip(beta_null)
        .map(|((&b, &s), &b0)| ((b - b0) / s).abs() > z)
        .collect())
}

/// `z_(1 - level/2)`, e.g. 1.959964 at the 5% level.
pub fn critical_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - level / 2.0)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Build the two-period peer-effects regression from a panel: outcome `Y^t` on
/// `(1, X^t, neighbor mean of Y^(t-1))`.
pub fn peer_design(panel: &Panel, graph: &SpatialGraph, t: usize) -> Result<(Vec<u8>, DMatrix<f64>)> {
    let n = panel.n();
    if graph.n() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "panel has {} agents, graph has {}",
            n,
            graph.n()
        )));
    }
    if t == 0 || t >= panel.periods() {
        return Err(CoreError::InvalidArgument(format!(
            "regression period {t} needs 1 <= t <= {}",
            panel.periods() - 1
        )));
    }
    let k = panel.k();
    // columns: intercept, covariates, lagged neighbor mean
    let m = 1 + k + 1;
    let mut x = DMatrix::zeros(n, m);
    let mut y = vec![0u8; n];
    for i in 0..n {
        y[i] = panel.y(i, t);
        x[(i, 0)] = 1.0;
        for c in 0..k {
            x[(i, 1 + c)] = panel.x(i, t)[c];
        }
        let nbrs = graph.neighbors(i);
        let peer = if nbrs.is_empty() {
            0.0
        } else {
            nbrs.iter().map(|&j| panel.y(j as usize, t - 1) as f64).sum::<f64>() / nbrs.len() as f64
        };
        x[(i, 1 + k)] = peer;
    }
    Ok((y, x))
}
