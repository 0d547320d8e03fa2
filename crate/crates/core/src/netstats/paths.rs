use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;

/// Path counts beyond this trigger a warning; enumeration still completes.
pub const PATH_WARN_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Mediating,
    Moderating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathContribution {
    pub vertices: Vec<usize>,
    pub labels: Vec<String>,
    /// Number of edges.
    pub length: usize,
    pub contribution: f64,
    pub kind: PathKind,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub node1: usize,
    pub node2: usize,
    pub marginal_covariance: f64,
    /// Sorted by decreasing absolute contribution.
    pub paths: Vec<PathContribution>,
}

impl PathReport {
    pub fn total_contribution(&self) -> f64 {
        self.paths.iter().map(|p| p.contribution).sum()
    }
}

/// Splits the covariance between two variates into contributions of the
/// simple paths joining them in the graph of `omega`.
///
/// A path with edges `v0 v1 ... vk` contributes
/// `(-1)^k * w(v0,v1) * ... * w(vk-1,vk) * det(omega without the path) / det(omega)`,
/// so the contributions of all paths add up to the covariance. Paths longer
/// than `max_len` edges (default: the dimension) are skipped. The `nr_paths`
/// strongest paths are flagged.
pub fn path_decomposition(
    omega: &SymMatrix,
    node1: usize,
    node2: usize,
    nr_paths: usize,
    max_len: Option<usize>,
) -> Result<PathReport> {
    let p = omega.dim();
    if node1 >= p || node2 >= p {
        return Err(invalid(format!("endpoint out of range for dimension {p}")));
    }
    if node1 == node2 {
        return Err(invalid("endpoints must differ"));
    }
    let max_len = max_len.unwrap_or(p);
    let sigma = omega.inverse_pd()?;
    let marginal = sigma.get(node1, node2);
    let full_log_det = omega.log_det()?;

    let adj: Vec<Vec<usize>> = (0..p)
        .map(|i| (0..p).filter(|&j| j != i && omega.get(i, j) != 0.0).collect())
        .collect();

    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut on_path = vec![false; p];
    let mut path = vec![node1];
    on_path[node1] = true;
    let mut warned = false;
    enumerate(&adj, node2, max_len, &mut path, &mut on_path, &mut found, &mut warned);

    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut paths = Vec::with_capacity(found.len());
    for vertices in found {
        let mut in_path = vec![false; p];
        for &v in &vertices {
            in_path[v] = true;
        }
        let mut rest: Vec<usize> = (0..p).filter(|&v| !in_path[v]).collect();
        rest.sort_unstable();
        let rest_log_det = match cache.get(&rest) {
            Some(&v) => v,
            None => {
                let v = if rest.is_empty() { 0.0 } else { omega.submatrix(&rest).log_det()? };
                cache.insert(rest, v);
                v
            }
        };
        let k = vertices.len() - 1;
        let weights: f64 = vertices.windows(2).map(|w| omega.get(w[0], w[1])).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let contribution = sign * weights * (rest_log_det - full_log_det).exp();
        if !contribution.is_finite() {
            return Err(Error::NonFiniteScore(contribution));
        }
        let kind = if contribution.signum() == marginal.signum() {
            PathKind::Mediating
        } else {
            PathKind::Moderating
        };
        paths.push(PathContribution {
            labels: vertices.iter().map(|&v| omega.names()[v].clone()).collect(),
            vertices,
            length: k,
            contribution,
            kind,
            flagged: false,
        });
    }
    // stable: equal magnitudes keep enumeration order
    paths.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
    for path in paths.iter_mut().take(nr_paths) {
        path.flagged = true;
    }
    Ok(PathReport {
        node1,
        node2,
        marginal_covariance: marginal,
        paths,
    })
}

fn enumerate(
    adj: &[Vec<usize>],
    target: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<usize>>,
    warned: &mut bool,
) {
    let v = *path.last().unwrap();
    if v == target {
        found.push(path.clone());
        if found.len() > PATH_WARN_LIMIT && !*warned {
            log::warn!("more than {PATH_WARN_LIMIT} paths; consider a smaller maximum length");
            *warned = true;
        }
        return;
    }
    if path.len() > max_len {
        return;
    }
    for &w in &adj[v] {
        if !on_path[w] {
            on_path[w] = true;
            path.push(w);
            enumerate(adj, target, max_len, path, on_path, found, warned);
            path.pop();
            on_path[w] = false;
        }
    }
}
