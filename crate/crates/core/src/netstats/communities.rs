use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityStructure {
    /// Community id per node; ids follow the smallest member index.
    pub membership: Vec<usize>,
    pub modularity: f64,
    /// Edges `(i, j)` in removal order.
    pub dendrogram: Vec<(usize, usize)>,
}

impl CommunityStructure {
    pub fn community_count(&self) -> usize {
        self.membership.iter().max().map_or(0, |m| m + 1)
    }
}

/// Newman-Girvan modularity of a partition, edge strength `|weight|`.
/// Zero for networks without edges.
pub fn modularity(net: &Network, membership: &[usize]) -> f64 {
    let n = net.node_count();
    let mut strength = vec![0.0; n];
    let mut total = 0.0;
    let mut inside = 0.0;
    for e in net.edges() {
        let w = e.weight.abs();
        strength[e.i] += w;
        strength[e.j] += w;
        total += w;
        if membership[e.i] == membership[e.j] {
            inside += w;
        }
    }
    if total == 0.0 {
        return 0.0;
    }
    let groups = membership.iter().max().map_or(0, |m| m + 1);
    let mut group_strength = vec![0.0; groups];
    for v in 0..n {
        group_strength[membership[v]] += strength[v];
    }
    let two_m = 2.0 * total;
    inside / total - group_strength.iter().map(|s| (s / two_m).powi(2)).sum::<f64>()
}

/// Girvan-Newman divisive clustering.
///
/// Repeatedly removes the edge of highest betweenness, with edge length
/// `1/|weight|` and betweenness recomputed after every removal. Ties go to
/// the lexicographically smallest edge. The component partition of maximal
/// modularity along the way is returned; ties keep the earlier partition.
pub fn communities(net: &Network) -> Result<CommunityStructure> {
    let n = net.node_count();
    if n == 0 {
        return Err(invalid("network has no nodes"));
    }
    let mut remaining: Vec<(usize, usize, f64)> = net
        .edges()
        .iter()
        .map(|e| (e.i, e.j, 1.0 / e.weight.abs()))
        .collect();
    let mut best = components(n, &remaining);
    let mut best_q = modularity(net, &best);
    let mut dendrogram = Vec::with_capacity(remaining.len());

    while !remaining.is_empty() {
        let scores = edge_betweenness(n, &remaining);
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * top.abs().max(1.0);
        // `remaining` stays sorted by (i, j), so the first hit is the smallest
        let k = scores.iter().position(|&s| s >= top - tol).unwrap();
        let (i, j, _) = remaining.remove(k);
        dendrogram.push((i, j));
        let membership = components(n, &remaining);
        let q = modularity(net, &membership);
        if q > best_q + 1e-12 {
            best_q = q;
            best = membership;
        }
    }
    Ok(CommunityStructure {
        membership: best,
        modularity: best_q,
        dendrogram,
    })
}

fn components(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for &(i, j, _) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for v in 0..n {
        let root = find(&mut parent, v);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        out[v] = label[root];
    }
    out
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted edge betweenness (Brandes with Dijkstra). Path lengths within
/// a relative 1e-12 count as equal.
fn edge_betweenness(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut adj: Vec<Vec<(usize, f64, usize)>> = vec![Vec::new(); n];
    for (k, &(i, j, len)) in edges.iter().enumerate() {
        adj[i].push((j, len, k));
        adj[j].push((i, len, k));
    }
    let mut score = vec![0.0; edges.len()];
    for s in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        let mut sigma = vec![0.0f64; n];
        let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut done = vec![false; n];
        let mut order = Vec::with_capacity(n);
        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = BinaryHeap::from([Queued(0.0, s)]);
        while let Some(Queued(d, v)) = heap.pop() {
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            order.push(v);
            for &(w, len, k) in &adj[v] {
                if done[w] {
                    continue;
                }
                let alt = d + len;
                let tol = 1e-12 * alt;
                if alt < dist[w] - tol {
                    dist[w] = alt;
                    sigma[w] = sigma[v];
                    preds[w].clear();
                    preds[w].push((v, k));
                    heap.push(Queued(alt, w));
                } else if (alt - dist[w]).abs() <= tol {
                    sigma[w] += sigma[v];
                    preds[w].push((v, k));
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = order.pop() {
            for &(v, k) in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                score[k] += c;
                delta[v] += c;
            }
        }
    }
    score.iter().map(|x| x / 2.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::default_names;
    use crate::sparsify::Edge;

    fn net(n: usize, list: &[(usize, usize, f64)]) -> Network {
        let edges = list.iter().map(|&(i, j, weight)| Edge { i, j, weight }).collect();
        Network::from_edges(default_names(n), edges).unwrap()
    }

    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        // restricted growth strings
        let mut out = Vec::new();
        let mut cur = vec![0; n];
        fn rec(k: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k == cur.len() {
                out.push(cur.clone());
                return;
            }
            for c in 0..=max + 1 {
                cur[k] = c;
                rec(k + 1, max.max(c), cur, out);
            }
        }
        if n > 0 {
            rec(1, 0, &mut cur, &mut out);
        }
        out
    }

    fn two_triangles() -> Network {
        net(
            6,
            &[(0, 1, 0.4), (0, 2, 0.4), (1, 2, -0.4), (2, 3, 0.3), (3, 4, 0.4), (3, 5, 0.4), (4, 5, 0.4)],
        )
    }

    #[test]
    fn two_triangles_split_at_bridge() {
        let g = two_triangles();
        let c = communities(&g).unwrap();
        assert_eq!(c.dendrogram[0], (2, 3));
        assert_eq!(c.membership, vec![0, 0, 0, 1, 1, 1]);
        let best = all_partitions(6)
            .iter()
            .map(|m| modularity(&g, m))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((c.modularity - best).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_stays_whole() {
        let mut list = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                list.push((i, j, 0.2));
            }
        }
        let g = net(4, &list);
        let c = communities(&g).unwrap();
        assert_eq!(c.membership, vec![0; 4]);
        assert!(c.modularity.abs() < 1e-15);
        let best = all_partitions(4)
            .iter()
            .map(|m| modularity(&g, m))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best <= 1e-15);
        assert_eq!(c.dendrogram.len(), 6);
    }

    #[test]
    fn edgeless_network() {
        let c = communities(&net(3, &[])).unwrap();
        assert_eq!(c.membership, vec![0, 1, 2]);
        assert_eq!(c.modularity, 0.0);
        assert!(c.dendrogram.is_empty());
    }

    #[test]
    fn modularity_of_known_partition() {
        // two disjoint edges, each its own community: Q = 1 - 2*(1/2)^2
        let g = net(4, &[(0, 1, 0.5), (2, 3, -0.5)]);
        assert!((modularity(&g, &[0, 0, 1, 1]) - 0.5).abs() < 1e-15);
        assert!(modularity(&g, &[0, 0, 0, 0]).abs() < 1e-15);
    }

    #[test]
    fn weighted_betweenness_prefers_strong_edges() {
        // square 0-1-2-3-0: shortest routes from 0 to 2 avoid the weak edge
        let b = edge_betweenness(4, &[(0, 1, 1.0), (0, 3, 10.0), (1, 2, 1.0), (2, 3, 1.0)]);
        assert!(b[1] < b[0]);
        assert!(b[0] > 0.0 && b[2] > 0.0);
    }

    #[test]
    fn returned_partition_not_worse_than_whole() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(2..=8);
            let mut list = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < 0.4 {
                        list.push((i, j, rng.random_range(0.05..1.0)));
                    }
                }
            }
            let g = net(n, &list);
            let c = communities(&g).unwrap();
            assert!(c.modularity >= modularity(&g, &vec![0; n]) - 1e-12);
            assert!((-0.5..=1.0).contains(&c.modularity));
            assert!((c.modularity - modularity(&g, &c.membership)).abs() < 1e-12);
        }
    }
}
