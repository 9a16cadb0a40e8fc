//! CSV data bundle: a nodes file (id, positions, covariates, optional
//! outcomes) plus an edges file (one undirected edge per row).
//!
//! Node ids must be dense `0..n-1`; edges are canonicalized to `i < j` and
//! duplicates or self edges are rejected. Floats are written in shortest
//! round-trip decimal form, so write-then-read is lossless.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use nalgebra::DMatrix;
use nethac_core::{Panel, SpatialGraph};

pub struct DataBundle {
    pub graph: SpatialGraph,
    pub panel: Option<Panel>,
    pub has_edges: bool,
}

/// Write the nodes CSV: `id, pos_1..pos_d[, x{c}_{t}..][, y_0..y_T]`.
pub fn write_nodes_csv(path: &Path, graph: &SpatialGraph, panel: Option<&Panel>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let d = graph.d();
    let mut header = vec!["id".to_string()];
    for k in 0..d {
        header.push(format!("pos_{}", k + 1));
    }
    if let Some(p) = panel {
        for c in 0..p.k() {
            for t in 0..p.periods() {
                header.push(format!("x{c}_{t}"));
            }
        }
        for t in 0..p.periods() {
            header.push(format!("y_{t}"));
        }
    }
    w.write_record(&header)?;
    for i in 0..graph.n() {
        let mut row = vec![i.to_string()];
        for k in 0..d {
            row.push(format!("{}", graph.position(i, k)));
        }
        if let Some(p) = panel {
            for c in 0..p.k() {
                for t in 0..p.periods() {
                    row.push(format!("{}", p.x(i, t)[c]));
                }
            }
            for t in 0..p.periods() {
                row.push(format!("{}", p.y(i, t)));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the edges CSV with canonical `i < j` rows.
pub fn write_edges_csv(path: &Path, graph: &SpatialGraph) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["i", "j"])?;
    for (i, j) in graph.edges() {
        w.write_record([i.to_string(), j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_suffixed(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok()
}

/// Parse `x{c}_{t}` into `(c, t)`.
fn parse_covariate(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('x')?;
    let (c, t) = rest.split_once('_')?;
    Some((c.parse().ok()?, t.parse().ok()?))
}

/// Read a bundle. `edges` may be absent, leaving an edgeless graph flagged by
/// `has_edges = false`.
pub fn read_bundle(nodes: &Path, edges: Option<&Path>, scale: f64) -> anyhow::Result<DataBundle> {
    let mut reader = csv::Reader::from_path(nodes)
        .with_context(|| format!("cannot open {}", nodes.display()))?;
    let header = reader.headers()?.clone();
    let mut id_col = None;
    let mut pos_cols: BTreeMap<usize, usize> = BTreeMap::new();
    let mut x_cols: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut y_cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (idx, name) in header.iter().enumerate() {
        if name == "id" {
            id_col = Some(idx);
        } else if let Some(k) = parse_suffixed(name, "pos_") {
            pos_cols.insert(k, idx);
        } else if let Some(t) = parse_suffixed(name, "y_") {
            y_cols.insert(t, idx);
        } else if let Some((c, t)) = parse_covariate(name) {
            x_cols.insert((c, t), idx);
        }
    }
    let id_col = id_col.ok_or_else(|| anyhow!("nodes file needs an 'id' column"))?;
    let d = pos_cols.len();
    if d == 0 {
        bail!("nodes file needs pos_1..pos_d columns");
    }
    for (expect, (k, _)) in pos_cols.iter().enumerate() {
        if *k != expect + 1 {
            bail!("position columns must be pos_1..pos_{d} with no gaps");
        }
    }

    type NodeRow = (usize, Vec<f64>, Vec<f64>, Vec<u8>);
    let mut rows: Vec<NodeRow> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id: usize = record
            .get(id_col)
            .ok_or_else(|| anyhow!("short row"))?
            .parse()
            .context("bad id")?;
        let mut pos = Vec::with_capacity(d);
        for &col in pos_cols.values() {
            pos.push(record.get(col).ok_or_else(|| anyhow!("short row"))?.parse()?);
        }
        let mut xs = Vec::with_capacity(x_cols.len());
        for &col in x_cols.values() {
            xs.push(record.get(col).ok_or_else(|| anyhow!("short row"))?.parse()?);
        }
        let mut ys = Vec::with_capacity(y_cols.len());
        for &col in y_cols.values() {
            ys.push(record.get(col).ok_or_else(|| anyhow!("short row"))?.parse()?);
        }
        rows.push((id, pos, xs, ys));
    }
    let n = rows.len();
    rows.sort_by_key(|r| r.0);
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            bail!("node ids must be dense 0..{} (found {})", n - 1, row.0);
        }
    }

    let mut positions = DMatrix::zeros(n, d);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..d {
            positions[(i, k)] = row.1[k];
        }
    }

    let edge_list = match edges {
        None => Vec::new(),
        Some(path) => {
            let mut r = csv::Reader::from_path(path)
                .with_context(|| format!("cannot open {}", path.display()))?;
            let mut list: Vec<(usize, usize)> = Vec::new();
            for record in r.records() {
                let record = record?;
                let i: usize = record.get(0).ok_or_else(|| anyhow!("short edge row"))?.parse()?;
                let j: usize = record.get(1).ok_or_else(|| anyhow!("short edge row"))?.parse()?;
                if i == j {
                    bail!("self edge at node {i}");
                }
                if i >= n || j >= n {
                    bail!("edge ({i},{j}) references a missing node");
                }
                list.push((i.min(j), i.max(j)));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0] == w[1] {
                    bail!("duplicate edge ({},{})", w[0].0, w[0].1);
                }
            }
            list
        }
    };
    let graph = SpatialGraph::new(positions, &edge_list, scale)?;

    let panel = if y_cols.is_empty() {
        None
    } else {
        let periods = y_cols.len();
        for (expect, (t, _)) in y_cols.iter().enumerate() {
            if *t != expect {
                bail!("outcome columns must be y_0..y_{} with no gaps", periods - 1);
            }
        }
        let k = if x_cols.is_empty() {
            0
        } else {
            let max_c = x_cols.keys().map(|(c, _)| *c).max().unwrap();
            if x_cols.keys().any(|(_, t)| *t >= periods) {
                bail!("covariate columns extend past the outcome periods");
            }
            for c in 0..=max_c {
                for t in 0..periods {
                    if !x_cols.contains_key(&(c, t)) {
                        bail!("missing covariate column x{c}_{t}");
                    }
                }
            }
            max_c + 1
        };
        let mut outcomes = Vec::with_capacity(n * periods);
        let mut covariates = Vec::with_capacity(n * periods * k);
        for row in &rows {
            for t in 0..periods {
                let y = row.3[t];
                outcomes.push(y);
                // x_cols is keyed (c, t) in sorted order; row.2 matches that order
                for c in 0..k {
                    covariates.push(row.2[c * periods + t]);
                }
            }
        }
        Some(Panel::new(n, periods, k, outcomes, covariates)?)
    };

    Ok(DataBundle {
        graph,
        panel,
        has_edges: edges.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nethac_core::rng::RngSpec;
    use nethac_core::simsocial::{ErrorDesign, Link, OutcomeModel, PeerStat};

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = RngSpec::new(5, 0).rng();
        let (pos, omega) =
            nethac_core::netgen::sample_positions(40, 2, 2.0, &mut rng).unwrap();
        let graph = nethac_core::netgen::form_rgg(pos, omega, 1.0).unwrap();
        let model = OutcomeModel {
            intercept: 0.5,
            covariate_coefs: vec![-0.3],
            peer_coef: 1.0,
            link: Link::Probit,
            error_design: ErrorDesign::NeighborAvgWeighted,
            peer_stat: PeerStat::LaggedNeighborMean,
        };
        let panel = nethac_core::simsocial::simulate_dynamic(&graph, &model, 2, &mut rng).unwrap();

        let nodes = dir.path().join("nodes.csv");
        let edges = dir.path().join("edges.csv");
        write_nodes_csv(&nodes, &graph, Some(&panel)).unwrap();
        write_edges_csv(&edges, &graph).unwrap();

        let bundle = read_bundle(&nodes, Some(&edges), graph.scale()).unwrap();
        assert_eq!(bundle.graph.n(), graph.n());
        assert_eq!(bundle.graph.edges(), graph.edges());
        for i in 0..graph.n() {
            for k in 0..2 {
                assert_eq!(bundle.graph.position(i, k), graph.position(i, k));
            }
        }
        let got = bundle.panel.unwrap();
        assert_eq!(got, panel);
    }

    #[test]
    fn roundtrip_preserves_extreme_floats() {
        let dir = tempfile::tempdir().unwrap();
        let extremes = [
            0.1 + 0.2,
            1e-300,
            -1e300,
            f64::MIN_POSITIVE,
            5e-324, // smallest subnormal
            -0.0,
            1.0 / 3.0,
            std::f64::consts::PI,
        ];
        let positions = DMatrix::from_fn(extremes.len(), 1, |i, _| extremes[i]);
        let graph = SpatialGraph::new(positions, &[(0, 1)], 1.0).unwrap();
        let panel = Panel::new(
            extremes.len(),
            1,
            1,
            vec![1; extremes.len()],
            extremes.to_vec(),
        )
        .unwrap();
        let nodes = dir.path().join("nodes.csv");
        write_nodes_csv(&nodes, &graph, Some(&panel)).unwrap();
        let bundle = read_bundle(&nodes, None, 1.0).unwrap();
        for (i, &v) in extremes.iter().enumerate() {
            assert_eq!(bundle.graph.position(i, 0).to_bits(), v.to_bits());
            assert_eq!(bundle.panel.as_ref().unwrap().x(i, 0)[0].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn rejects_bad_edge_files() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        std::fs::write(&nodes, "id,pos_1\n0,0.0\n1,1.0\n").unwrap();
        let edges = dir.path().join("edges.csv");

        std::fs::write(&edges, "i,j\n0,0\n").unwrap();
        assert!(read_bundle(&nodes, Some(&edges), 1.0).is_err());

        std::fs::write(&edges, "i,j\n0,1\n1,0\n").unwrap();
        assert!(read_bundle(&nodes, Some(&edges), 1.0).is_err());

        std::fs::write(&edges, "i,j\n0,5\n").unwrap();
        assert!(read_bundle(&nodes, Some(&edges), 1.0).is_err());

        std::fs::write(&edges, "i,j\n0,1\n").unwrap();
        assert!(read_bundle(&nodes, Some(&edges), 1.0).is_ok());
    }

    #[test]
    fn rejects_sparse_ids() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        std::fs::write(&nodes, "id,pos_1\n0,0.0\n2,1.0\n").unwrap();
        assert!(read_bundle(&nodes, None, 1.0).is_err());
    }
}
