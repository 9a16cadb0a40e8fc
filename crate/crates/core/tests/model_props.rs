//! Distributional and locality properties of the simulation machinery.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use nethac_core::netgen::{form_rgg, sample_positions};
use nethac_core::rng::RngSpec;
use nethac_core::simsocial::{
    build_shocks, eval_moments, moment_on_neighborhood, simulate_dynamic, ErrorDesign, Link,
    MomentKind, MomentSpec, OutcomeModel, PeerStat,
};
use nethac_core::types::{Panel, SpatialGraph};

fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Kolmogorov-Smirnov statistic of a sample against the standard normal.
fn ks_statistic(sample: &mut [f64]) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let cdf = norm_cdf(x);
        let d1 = ((i + 1) as f64 / n - cdf).abs();
        let d2 = (cdf - i as f64 / n).abs();
        ks = ks.max(d1).max(d2);
    }
    ks
}

/// A star graph gives the hub the exact target degree.
fn star_graph(degree: usize) -> SpatialGraph {
    let n = degree + 1;
    let positions = DMatrix::from_fn(n, 1, |i, _| i as f64);
    let edges: Vec<(usize, usize)> = (1..n).map(|j| (0, j)).collect();
    SpatialGraph::new(positions, &edges, 1.0).unwrap()
}

#[test]
fn weighted_shocks_have_standard_normal_marginals() {
    // hub of a star with degree in {1, 2, 5, 20}: KS statistic below 0.02
    // at 1e5 draws
    for (stream, degree) in [(0u64, 1usize), (1, 2), (2, 5), (3, 20)] {
        let graph = star_graph(degree);
        let mut rng = RngSpec::new(1234, stream).rng();
        let draws = 100_000;
        let mut sample = Vec::with_capacity(draws);
        let mut eps = vec![0.0; graph.n()];
        for _ in 0..draws {
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(&mut rng);
            }
            let nu = build_shocks(&graph, ErrorDesign::NeighborAvgWeighted, &eps);
            sample.push(nu[0]);
        }
        let ks = ks_statistic(&mut sample);
        assert!(ks < 0.02, "KS statistic {ks} at degree {degree}");
    }
}

#[test]
fn iid_design_has_unit_variance_and_uncorrelated_nonneighbors() {
    // beta_3 = 0, iid errors, n = 2000: empirical Var(nu) near one and the
    // outcome cross-correlation between non-neighbors near zero over 200 seeds
    let model = OutcomeModel {
        intercept: 0.5,
        covariate_coefs: vec![-0.3],
        peer_coef: 0.0,
        link: Link::Probit,
        error_design: ErrorDesign::Iid,
        peer_stat: PeerStat::LaggedNeighborMean,
    };
    let n = 2000;
    let mut var_acc = 0.0;
    let mut var_count = 0.0;
    let mut y_sum = 0.0;
    let mut y_sq = 0.0;
    let mut cross = 0.0;
    let mut cross_count = 0.0;
    for seed in 0..200u64 {
        let mut rng = RngSpec::new(55, seed).rng();
        let (pos, omega) =
            sample_positions(n, 2, 5.0 / std::f64::consts::PI, &mut rng).unwrap();
        let graph = form_rgg(pos, omega, 1.0).unwrap();
        // variance of the shock construction itself
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nu = build_shocks(&graph, ErrorDesign::Iid, &eps);
        for v in &nu {
            var_acc += v * v;
            var_count += 1.0;
        }
        // outcome products over disjoint non-adjacent pairs
        let panel = simulate_dynamic(&graph, &model, 1, &mut rng).unwrap();
        for k in 0..(n / 2) {
            let (i, j) = (2 * k, 2 * k + 1);
            if graph.has_edge(i, j) {
                continue;
            }
            let (yi, yj) = (panel.y(i, 1) as f64, panel.y(j, 1) as f64);
            y_sum += yi + yj;
            y_sq += yi * yi + yj * yj;
            cross += yi * yj;
            cross_count += 1.0;
        }
    }
    let var = var_acc / var_count;
    assert!((var - 1.0).abs() < 0.02, "Var(nu) = {var}");
    let mean = y_sum / (2.0 * cross_count);
    let y_var = y_sq / (2.0 * cross_count) - mean * mean;
    let corr = (cross / cross_count - mean * mean) / y_var;
    assert!(corr.abs() < 0.05, "non-neighbor outcome correlation {corr}");
}

fn cycle_graph(n: usize) -> SpatialGraph {
    let positions = DMatrix::from_fn(n, 1, |i, _| i as f64);
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    SpatialGraph::new(positions, &edges, 1.0).unwrap()
}

/// Discrete panel on a cycle: binary covariates, threshold outcomes.
fn discrete_panel(graph: &SpatialGraph, t_max: usize, seed: u64) -> Panel {
    let n = graph.n();
    let periods = t_max + 1;
    let mut rng = RngSpec::new(seed, 0).rng();
    let mut x = vec![0.0f64; n * periods];
    for v in x.iter_mut() {
        *v = if rng.gen::<f64>() < 0.5 { 0.0 } else { 1.0 };
    }
    let mut y = vec![0u8; n * periods];
    for i in 0..n {
        y[i * periods] = (rng.gen::<f64>() < 0.5) as u8;
    }
    for t in 1..periods {
        let prev: Vec<u8> = (0..n).map(|i| y[i * periods + t - 1]).collect();
        for i in 0..n {
            let nbrs = graph.neighbors(i);
            let peer: f64 =
                nbrs.iter().map(|&j| prev[j as usize] as f64).sum::<f64>() / nbrs.len() as f64;
            let e: f64 = StandardNormal.sample(&mut rng);
            y[i * periods + t] =
                (0.2 + 0.5 * x[i * periods + t] + 0.8 * peer - 0.6 + e > 0.0) as u8;
        }
    }
    Panel::new(n, periods, 1, y, x).unwrap()
}

#[test]
fn asf_bounds_are_ordered_and_narrow_with_more_periods() {
    let n = 200;
    let graph = cycle_graph(n);
    let panel4 = discrete_panel(&graph, 4, 321);
    let query = MomentSpec::new(MomentKind::AsfBounds {
        x: vec![1.0, 0.5],
    });
    let mut last_width = f64::INFINITY;
    for t_max in [1usize, 2, 4] {
        let panel = panel4.truncate(t_max).unwrap();
        let m = eval_moments(&panel, &graph, &query).unwrap();
        let lower: f64 = (0..n).map(|i| m.values[(i, 0)]).sum::<f64>() / n as f64;
        let width: f64 = (0..n).map(|i| m.values[(i, 1)]).sum::<f64>() / n as f64;
        assert!(width >= 0.0, "upper bound below lower bound");
        assert!(lower >= 0.0);
        // pathwise monotone: never-hit sets shrink as periods accumulate
        assert!(
            width <= last_width + 1e-12,
            "bound width grew from {last_width} to {width} at T={t_max}"
        );
        last_width = width;
    }
    assert!(last_width < 1.0, "bounds never narrowed");
}

#[test]
fn moments_are_k_local() {
    // deleting agents outside the K-neighborhood leaves psi_i unchanged for
    // every moment kind, on 20 random instances
    let mut rng = RngSpec::new(777, 0).rng();
    for trial in 0..20u64 {
        let n = 40 + (trial as usize % 4) * 20; // up to 100
        let graph = {
            let mut r = RngSpec::new(778, trial).rng();
            let (pos, omega) =
                sample_positions(n, 2, 5.0 / std::f64::consts::PI, &mut r).unwrap();
            form_rgg(pos, omega, 1.0).unwrap()
        };
        let panel = discrete_panel(&graph, 2, 900 + trial);
        let specs = vec![
            MomentSpec::new(MomentKind::ChoiceProb { t: 1 }),
            MomentSpec::new(MomentKind::WeightedOutcome { t: 1 }),
            MomentSpec::new(MomentKind::Dyad11 { t: 1 }),
            MomentSpec::new(MomentKind::IntransitiveTriad000 { t: 1 }),
            MomentSpec::new(MomentKind::AsfBounds { x: vec![1.0, 0.5] }),
        ];
        for spec in &specs {
            let full = eval_moments(&panel, &graph, spec).unwrap();
            for _ in 0..5 {
                let i = rng.gen_range(0..n);
                let local = moment_on_neighborhood(&panel, &graph, spec, i).unwrap();
                for (c, &v) in local.iter().enumerate() {
                    assert_eq!(
                        v,
                        full.values[(i, c)],
                        "K-locality violated for {:?} at agent {i}",
                        spec.kind
                    );
                }
            }
        }
    }
}

#[test]
fn uniform_equilibrium_selection_draws_from_enumerated_set() {
    use nethac_core::simsocial::{enumerate_equilibria, select_uniform_equilibrium, verify_nash};
    let graph = cycle_graph(6);
    let model = OutcomeModel {
        intercept: -0.4,
        covariate_coefs: vec![0.0],
        peer_coef: 1.2,
        link: Link::Probit,
        error_design: ErrorDesign::Iid,
        peer_stat: PeerStat::ContemporaneousNeighborMean,
    };
    let covariates = DMatrix::zeros(6, 1);
    let shocks = vec![0.0; 6];
    let all = enumerate_equilibria(&graph, &model, &covariates, &shocks).unwrap();
    assert!(all.len() >= 2, "want multiple equilibria, got {}", all.len());
    let mut rng = RngSpec::new(3, 0).rng();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..200 {
        let y = select_uniform_equilibrium(&graph, &model, &covariates, &shocks, &mut rng).unwrap();
        assert!(verify_nash(&graph, &model, &covariates, &shocks, &y));
        assert!(all.contains(&y));
        seen.insert(y);
    }
    assert!(seen.len() >= 2, "selection never varied");

    // guarded away from large n
    let big = cycle_graph(21);
    let cov = DMatrix::zeros(21, 1);
    assert!(enumerate_equilibria(&big, &model, &cov, &[0.0; 21]).is_err());
}
