//! Property tests for the structural invariants.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use proptest::prelude::*;

use nethac_core::graph::{bounded_bfs, k_neighborhood, strategic_neighborhoods};
use nethac_core::kernel::{product_kernel_eval, Kernel};
use nethac_core::netgen::{form_rgg, sample_positions};
use nethac_core::rng::RngSpec;
use nethac_core::types::SpatialGraph;

proptest! {
    #[test]
    fn kernel_bounds_hold_everywhere(x in -1e6f64..1e6, uniform in any::<bool>()) {
        let kernel = if uniform { Kernel::Uniform } else { Kernel::Bartlett };
        let v = kernel.eval(x);
        prop_assert!((0.0..=1.0).contains(&v));
        if x.abs() > 1.0 {
            prop_assert_eq!(v, 0.0);
        }
        prop_assert_eq!(kernel.eval(0.0), 1.0);
    }

    #[test]
    fn product_kernel_multiplies_coordinates(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        h in 0.1f64..5.0,
    ) {
        let p = product_kernel_eval(Kernel::Bartlett, &[a, b], h).unwrap();
        let expect = Kernel::Bartlett.eval(a / h) * Kernel::Bartlett.eval(b / h);
        prop_assert_eq!(p, expect);
    }

    #[test]
    fn rgg_edges_monotone_in_threshold(seed in 0u64..500, t1 in 0.2f64..1.0, grow in 1.01f64..3.0) {
        let mut rng = RngSpec::new(seed, 0).rng();
        let (pos, omega) = sample_positions(80, 2, 2.0, &mut rng).unwrap();
        let small = form_rgg(pos.clone(), omega, t1).unwrap();
        let large = form_rgg(pos, omega, t1 * grow).unwrap();
        for (i, j) in small.edges() {
            prop_assert!(large.has_edge(i, j));
        }
        // symmetry and zero diagonal on every generated adjacency
        for i in 0..small.n() {
            prop_assert!(!small.has_edge(i, i));
            for &j in small.neighbors(i) {
                prop_assert!(small.has_edge(j as usize, i));
            }
        }
    }

    #[test]
    fn k_neighborhood_matches_bounded_bfs(seed in 0u64..300, k in 0usize..5) {
        let mut rng = RngSpec::new(seed, 1).rng();
        let (pos, omega) = sample_positions(30, 2, 2.0, &mut rng).unwrap();
        let graph = form_rgg(pos, omega, 1.2).unwrap();
        let map = bounded_bfs(&graph, k);
        for i in 0..graph.n() {
            let hood = k_neighborhood(&graph, i, k).unwrap();
            let expect: Vec<usize> = (0..graph.n())
                .filter(|&j| map.distance(i, j).is_some())
                .collect();
            prop_assert_eq!(&hood, &expect);
            prop_assert!(hood.binary_search(&i).is_ok());
        }
    }

    #[test]
    fn strategic_partition_is_a_cover(seed in 0u64..400, p_edge in 0.02f64..0.2, p_resp in 0.0f64..1.0) {
        let mut rng = RngSpec::new(seed, 2).rng();
        let n = 40usize;
        let positions = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rand::Rng::gen::<f64>(&mut rng) < p_edge {
                    edges.push((i, j));
                }
            }
        }
        let graph = SpatialGraph::new(positions, &edges, 1.0).unwrap();
        let rc: Vec<u8> = (0..n).map(|_| (rand::Rng::gen::<f64>(&mut rng) < p_resp) as u8).collect();
        let part = strategic_neighborhoods(&graph, &rc).unwrap();
        for i in 0..n {
            let homes = part.containing(i);
            prop_assert!(!homes.is_empty(), "agent {} uncovered", i);
            if rc[i] == 1 {
                prop_assert_eq!(homes.len(), 1, "responsive agent {} in several neighborhoods", i);
            }
        }
        // neighborhoods with a responsive member contain all its responsive
        // graph neighbors
        for hood in &part.neighborhoods {
            for &i in hood {
                if rc[i] == 1 {
                    for &j in graph.neighbors(i) {
                        if rc[j as usize] == 1 {
                            prop_assert!(hood.binary_search(&(j as usize)).is_ok());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bounded_distance_map_is_symmetric(seed in 0u64..200, depth in 1usize..6) {
        let mut rng = RngSpec::new(seed, 3).rng();
        let (pos, omega) = sample_positions(40, 2, 2.0, &mut rng).unwrap();
        let graph = form_rgg(pos, omega, 1.0).unwrap();
        let map = bounded_bfs(&graph, depth);
        for i in 0..40 {
            prop_assert_eq!(map.distance(i, i), Some(0));
            for j in 0..40 {
                prop_assert_eq!(map.distance(i, j), map.distance(j, i));
            }
        }
    }
}
