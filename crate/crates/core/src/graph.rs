//! Graph algorithms: depth-bounded path distances, K-neighborhoods, connected
//! components, and strategic neighborhoods.
//!
//! Distances beyond the depth bound (or across components) are represented by
//! absence from the map; the HAC kernel receives `+inf` for those pairs and
//! returns zero, so they never need to be enumerated.

use crate::error::{CoreError, Result};
use crate::par::par_map_collect;
use crate::types::SpatialGraph;

/// Per-source sparse map of path distances up to a depth bound.
#[derive(Debug, Clone)]
pub struct BoundedDistanceMap {
    max_depth: usize,
    /// per source: (target, distance) pairs sorted by target
    entries: Vec<Vec<(u32, u32)>>,
}

impl BoundedDistanceMap {
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Path distance, or `None` when beyond the bound or disconnected.
    pub fn distance(&self, i: usize, j: usize) -> Option<u32> {
        self.entries[i]
            .binary_search_by_key(&(j as u32), |&(t, _)| t)
            .ok()
            .map(|pos| self.entries[i][pos].1)
    }

    /// All recorded `(target, distance)` pairs from source `i`, ascending in target.
    pub fn pairs_from(&self, i: usize) -> &[(u32, u32)] {
        &self.entries[i]
    }
}

/// Breadth-first scan from `src` up to `max_depth` hops. Calls `visit(j, dist)`
/// for every reached agent including `src` itself (distance 0). `dist` and
/// `queue` are caller-provided scratch; `dist` must be `u32::MAX`-filled and is
/// restored before returning.
pub(crate) fn bfs_scan<F: FnMut(u32, u32)>(
    graph: &SpatialGraph,
    src: usize,
    max_depth: usize,
    dist: &mut [u32],
    queue: &mut Vec<u32>,
    mut visit: F,
) {
    queue.clear();
    dist[src] = 0;
    queue.push(src as u32);
    let mut head = 0usize;
    while head < queue.len() {
        let u = queue[head] as usize;
        head += 1;
        let du = dist[u];
        visit(u as u32, du);
        if (du as usize) < max_depth {
            for &v in graph.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push(v);
                }
            }
        }
    }
    for &v in queue.iter() {
        dist[v as usize] = u32::MAX;
    }
}

/// All pairs within `max_depth` hops and their exact shortest-path lengths.
pub fn bounded_bfs(graph: &SpatialGraph, max_depth: usize) -> BoundedDistanceMap {
    let n = graph.n();
    let entries = par_map_collect(n, |src| {
        let mut dist = vec![u32::MAX; n];
        let mut queue = Vec::new();
        let mut row = Vec::new();
        bfs_scan(graph, src, max_depth, &mut dist, &mut queue, |j, d| {
            row.push((j, d));
        });
        row.sort_unstable_by_key(|&(j, _)| j);
        row
    });
    BoundedDistanceMap { max_depth, entries }
}

/// `{ j : path distance(i, j) <= k }`, including `i`, ascending.
pub fn k_neighborhood(graph: &SpatialGraph, i: usize, k: usize) -> Result<Vec<usize>> {
    let n = graph.n();
    if i >= n {
        return Err(CoreError::IndexOutOfRange { index: i, len: n });
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = Vec::new();
    let mut out = Vec::new();
    bfs_scan(graph, i, k, &mut dist, &mut queue, |j, _| out.push(j as usize));
    out.sort_unstable();
    Ok(out)
}

/// Connected components, each sorted, ordered by smallest member.
pub fn components(graph: &SpatialGraph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let mut seen = vec![false; n];
    let mut dist = vec![u32::MAX; n];
    let mut queue = Vec::new();
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut block = Vec::new();
        bfs_scan(graph, start, n, &mut dist, &mut queue, |j, _| {
            seen[j as usize] = true;
            block.push(j as usize);
        });
        block.sort_unstable();
        blocks.push(block);
    }
    blocks
}

/// Cover of the agent set by strategic neighborhoods.
///
/// Responsive agents (`rc = 1`) are partitioned by the connected components of
/// the subgraph they induce; each determined agent (`rc = 0`) attaches to every
/// adjacent responsive component, or forms a singleton when it has none.
/// Determined agents may therefore appear in several neighborhoods.
#[derive(Debug, Clone)]
pub struct StrategicPartition {
    /// each neighborhood sorted ascending; ordered by smallest member
    pub neighborhoods: Vec<Vec<usize>>,
}

impl StrategicPartition {
    /// Indices of the neighborhoods containing agent `i`.
    pub fn containing(&self, i: usize) -> Vec<usize> {
        self.neighborhoods
            .iter()
            .enumerate()
            .filter(|(_, b)| b.binary_search(&i).is_ok())
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// Build strategic neighborhoods from per-agent responsiveness flags
/// `rc_flags[i] in {0, 1}`.
pub fn strategic_neighborhoods(graph: &SpatialGraph, rc_flags: &[u8]) -> Result<StrategicPartition> {
    let n = graph.n();
    if rc_flags.len() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "rc_flags has {} entries for {} agents",
            rc_flags.len(),
            n
        )));
    }
    if rc_flags.iter().any(|&f| f > 1) {
        return Err(CoreError::InvalidArgument("rc_flags must be 0 or 1".into()));
    }
    let mut comp = vec![usize::MAX; n];
    let mut neighborhoods: Vec<Vec<usize>> = Vec::new();
    // components of the subgraph induced by responsive agents
    let mut stack = Vec::new();
    for start in 0..n {
        if rc_flags[start] == 0 || comp[start] != usize::MAX {
            continue;
        }
        let id = neighborhoods.len();
        let mut block = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(u) = stack.pop() {
            block.push(u);
            for &v in graph.neighbors(u) {
                let v = v as usize;
                if rc_flags[v] == 1 && comp[v] == usize::MAX {
                    comp[v] = id;
                    stack.push(v);
                }
            }
        }
        neighborhoods.push(block);
    }
    // attach determined agents to every adjacent responsive component
    let mut attached = vec![false; n];
    for k in 0..n {
        if rc_flags[k] == 1 {
            continue;
        }
        let mut targets: Vec<usize> = graph
            .neighbors(k)
            .iter()
            .filter_map(|&j| {
                let c = comp[j as usize];
                (c != usize::MAX).then_some(c)
            })
            .collect();
        targets.sort_unstable();
        targets.dedup();
        for &c in &targets {
            neighborhoods[c].push(k);
            attached[k] = true;
        }
    }
    // determined agents adjacent to no responsive component are singletons
    for k in 0..n {
        if rc_flags[k] == 0 && !attached[k] {
            neighborhoods.push(vec![k]);
        }
    }
    for block in &mut neighborhoods {
        block.sort_unstable();
    }
    neighborhoods.sort_by_key(|b| b[0]);
    Ok(StrategicPartition { neighborhoods })
}
