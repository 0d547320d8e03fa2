use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{invalid, Error, Result};
use crate::linalg::sym_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStat {
    pub name: String,
    pub degree: usize,
    pub betweenness: f64,
    pub closeness: f64,
    pub eigenvector: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Mutual information with all other variates, in nats.
    pub mutual_information: f64,
    pub variance: f64,
    pub partial_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub nodes: Vec<NodeStat>,
}

/// Column-oriented view used for CSV export and for joining per-class
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub rows: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

pub const STAT_COLUMNS: [&str; 9] = [
    "degree",
    "betweenness",
    "closeness",
    "eigenvector",
    "n_pos",
    "n_neg",
    "mutual_information",
    "variance",
    "partial_variance",
];

impl NodeStats {
    /// Columns named `<prefix><stat>`.
    pub fn to_table(&self, prefix: &str) -> StatsTable {
        let col = |f: &dyn Fn(&NodeStat) -> f64| self.nodes.iter().map(f).collect::<Vec<f64>>();
        let values: [Vec<f64>; 9] = [
            col(&|s| s.degree as f64),
            col(&|s| s.betweenness),
            col(&|s| s.closeness),
            col(&|s| s.eigenvector),
            col(&|s| s.n_pos as f64),
            col(&|s| s.n_neg as f64),
            col(&|s| s.mutual_information),
            col(&|s| s.variance),
            col(&|s| s.partial_variance),
        ];
        StatsTable {
            rows: self.nodes.iter().map(|s| s.name.clone()).collect(),
            columns: STAT_COLUMNS
                .iter()
                .zip(values)
                .map(|(name, v)| (format!("{prefix}{name}"), v))
                .collect(),
        }
    }
}

impl StatsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            out.push_str(row);
            for (_, v) in &self.columns {
                out.push(',');
                out.push_str(&format_cell(v[r]));
            }
            out.push('\n');
        }
        out
    }
}

/// Integral values print as integers, everything else with 17 significant
/// digits.
fn format_cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

/// Node-level statistics of a network.
///
/// Betweenness and closeness use hop counts. Variances come from the
/// inverse of the network's (sparsified) precision matrix.
pub fn network_stats(net: &Network) -> Result<NodeStats> {
    if net.node_count() == 0 {
        return Err(invalid("network has no nodes"));
    }
    let sigma = net.source_precision().inverse_pd()?;
    let adj = net.adjacency();
    let betweenness = brandes_betweenness(&adj);
    let closeness = closeness(&adj);
    let eigenvector = eigenvector_centrality(&adj)?;
    let omega = net.source_precision();
    let nodes = (0..net.node_count())
        .map(|k| {
            let src = net.source_indices()[k];
            let variance = sigma.get(src, src);
            let partial_variance = 1.0 / omega.get(src, src);
            if !(variance > 0.0) {
                return Err(Error::NotPositiveDefinite(variance));
            }
            let n_pos = adj[k].iter().filter(|x| x.1 > 0.0).count();
            let n_neg = adj[k].iter().filter(|x| x.1 < 0.0).count();
            Ok(NodeStat {
                name: net.labels()[k].clone(),
                degree: adj[k].len(),
                betweenness: betweenness[k],
                closeness: closeness[k],
                eigenvector: eigenvector[k],
                n_pos,
                n_neg,
                mutual_information: (-0.5 * (partial_variance / variance).ln()).max(0.0),
                variance,
                partial_variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeStats { nodes })
}

fn bfs_distances(adj: &[Vec<(usize, f64)>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &(w, _) in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Brandes' algorithm on hop counts; undirected pairs counted once.
pub fn brandes_betweenness(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adj.len();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &(w, _) in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc.iter().map(|b| b / 2.0).collect()
}

/// Reachable count over total distance within the node's component.
fn closeness(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    (0..adj.len())
        .map(|s| {
            let dist = bfs_distances(adj, s);
            let (count, total) = dist
                .iter()
                .enumerate()
                .filter_map(|(v, d)| d.filter(|_| v != s))
                .fold((0usize, 0usize), |(c, t), d| (c + 1, t + d));
            if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            }
        })
        .collect()
}

/// Leading eigenvector of the absolute weighted adjacency, scaled to max 1.
fn eigenvector_centrality(adj: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = adj.len();
    let mut a = DMatrix::zeros(n, n);
    for (v, list) in adj.iter().enumerate() {
        for &(w, weight) in list {
            a[(v, w)] = weight.abs();
        }
    }
    if a.amax() == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let e = sym_eigen(&a)?;
    let lead: Vec<f64> = e.vectors.column(0).iter().map(|x| x.abs()).collect();
    let max = lead.iter().cloned().fold(0.0, f64::max);
    Ok(lead
        .iter()
        .map(|x| {
            let v = x / max;
            if v < 1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{default_names, SymMatrix};
    use crate::sparsify::Edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn edges(list: &[(usize, usize)]) -> Vec<Edge> {
        list.iter().map(|&(i, j)| Edge { i, j, weight: 0.1 }).collect()
    }

    /// Counts shortest paths by exhaustive simple-path enumeration.
    fn brute_force_betweenness(n: usize, adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
        fn walk(adj: &[Vec<(usize, f64)>], t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let v = *path.last().unwrap();
            if v == t {
                out.push(path.clone());
                return;
            }
            for &(w, _) in &adj[v] {
                if !path.contains(&w) {
                    path.push(w);
                    walk(adj, t, path, out);
                    path.pop();
                }
            }
        }
        let mut bc = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                let mut paths = Vec::new();
                walk(adj, t, &mut vec![s], &mut paths);
                let Some(shortest) = paths.iter().map(|p| p.len()).min() else { continue };
                let best: Vec<_> = paths.iter().filter(|p| p.len() == shortest).collect();
                for v in 0..n {
                    if v != s && v != t {
                        let through = best.iter().filter(|p| p.contains(&v)).count();
                        bc[v] += through as f64 / best.len() as f64;
                    }
                }
            }
        }
        bc
    }

    #[test]
    fn star_graph_counts() {
        let net = Network::from_edges(default_names(5), edges(&[(0, 1), (0, 2), (0, 3), (0, 4)])).unwrap();
        let stats = network_stats(&net).unwrap();
        assert_eq!(stats.nodes[0].degree, 4);
        assert_eq!(stats.nodes[0].betweenness, 6.0);
        assert!(stats.nodes[1..].iter().all(|s| s.betweenness == 0.0 && s.degree == 1));
        assert_eq!(stats.nodes[0].closeness, 1.0);
        assert!((stats.nodes[1].closeness - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(stats.nodes[0].eigenvector, 1.0);
        assert!((stats.nodes[1].eigenvector - 0.5).abs() < 1e-12);
        // pcor weights of +0.1 come from negative precision entries
        assert_eq!(stats.nodes[0].n_pos, 4);
    }

    #[test]
    fn independence_gives_zero_information() {
        let omega = SymMatrix::from_diagonal(&[1.0, 2.0, 4.0], default_names(3)).unwrap();
        let net = Network::from_precision(&omega, false).unwrap();
        let stats = network_stats(&net).unwrap();
        for s in &stats.nodes {
            assert_eq!(s.mutual_information, 0.0);
            assert!((s.variance - s.partial_variance).abs() < 1e-15);
            assert_eq!(s.degree, 0);
        }
    }

    #[test]
    fn random_network_matches_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 8;
        let mut w = DMatrix::<f64>::identity(p, p) * 3.0;
        for i in 0..p {
            for j in i + 1..p {
                if rng.random::<f64>() < 0.4 {
                    let v = rng.random_range(-0.5..0.5);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
        }
        let omega = SymMatrix::from_values(w.clone()).unwrap();
        let net = Network::from_precision(&omega, false).unwrap();
        let stats = network_stats(&net).unwrap();
        let sigma = w.clone().try_inverse().unwrap();
        let brute = brute_force_betweenness(p, &net.adjacency());
        for (k, s) in stats.nodes.iter().enumerate() {
            assert!((s.betweenness - brute[k]).abs() < 1e-12);
            let mi = -0.5 * (1.0 / (w[(k, k)] * sigma[(k, k)])).ln();
            assert!((s.mutual_information - mi).abs() < 1e-12);
            assert_eq!(s.degree, s.n_pos + s.n_neg);
            assert_eq!(s.degree, (0..p).filter(|&j| j != k && w[(k, j)] != 0.0).count());
            assert!(s.partial_variance <= s.variance + 1e-15);
        }
    }

    #[test]
    fn prefixed_table() {
        let net = Network::from_edges(default_names(3), edges(&[(0, 1)])).unwrap();
        let t = network_stats(&net).unwrap().to_table("c1.");
        assert_eq!(t.columns[0].0, "c1.degree");
        assert_eq!(t.columns.len(), STAT_COLUMNS.len());
        assert!(t.to_csv().starts_with("node,c1.degree,c1.betweenness"));
    }

    #[test]
    fn brandes_equals_enumeration_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let n = rng.random_range(1..=8);
            let mut list = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < 0.35 {
                        list.push((i, j));
                    }
                }
            }
            let net = Network::from_edges(default_names(n), edges(&list)).unwrap();
            let adj = net.adjacency();
            let got = brandes_betweenness(&adj);
            let want = brute_force_betweenness(n, &adj);
            for v in 0..n {
                assert!((got[v] - want[v]).abs() < 1e-12);
            }
        }
    }
}
