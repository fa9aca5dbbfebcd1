//! Rounding raw solver output back to a valid complex.

use ndarray::{Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::index::Layout;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyQuantization {
    /// `1{x > 0.5}`
    Binary,
    /// Bond orders 0..=3 with cut points 0.5, 1.5, 2.5.
    Bond,
}

/// Which edges a rank-2 cell needs in the quantized adjacency to survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportRule {
    /// Every node pair inside the cell is an edge.
    AllPairs,
    /// The cell induces a chordless cycle (ring lifting).
    Ring,
    /// The cell's induced subgraph has a Hamiltonian path (path lifting).
    Path,
}

/// `(A + A^T) / 2` per channel.
pub fn symmetrize(a: &mut Array3<f64>) {
    let n = a.dim().0;
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..a.dim().2 {
                let v = 0.5 * (a[[i, j, c]] + a[[j, i, c]]);
                a[[i, j, c]] = v;
                a[[j, i, c]] = v;
            }
        }
    }
}

fn quantize_value(x: f64, mode: AdjacencyQuantization) -> f64 {
    match mode {
        AdjacencyQuantization::Binary => {
            if x > 0.5 {
                1.0
            } else {
                0.0
            }
        }
        AdjacencyQuantization::Bond => {
            if x <= 0.5 {
                0.0
            } else if x < 1.5 {
                1.0
            } else if x < 2.5 {
                2.0
            } else {
                3.0
            }
        }
    }
}

/// Symmetrizes, rounds every entry and clears the diagonal.
pub fn quantize_adjacency(a_raw: ArrayView3<f64>, mode: AdjacencyQuantization) -> Array3<f64> {
    let mut a = a_raw.to_owned();
    symmetrize(&mut a);
    a.mapv_inplace(|x| quantize_value(x, mode));
    let n = a.dim().0;
    for i in 0..n {
        a.index_axis_mut(Axis(0), i).row_mut(i).fill(0.0);
    }
    a
}

fn induced(graph: &Graph, nodes: &[usize]) -> Vec<Vec<usize>> {
    nodes
        .iter()
        .map(|&u| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != u && graph.has_edge(u, v))
                .map(|(q, _)| q)
                .collect()
        })
        .collect()
}

fn connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn hamiltonian_path(adj: &[Vec<usize>]) -> bool {
    fn extend(adj: &[Vec<usize>], at: usize, visited: &mut Vec<bool>, depth: usize) -> bool {
        if depth == adj.len() {
            return true;
        }
        for &v in &adj[at] {
            if !visited[v] {
                visited[v] = true;
                if extend(adj, v, visited, depth + 1) {
                    return true;
                }
                visited[v] = false;
            }
        }
        false
    }
    (0..adj.len()).any(|s| {
        let mut visited = vec![false; adj.len()];
        visited[s] = true;
        extend(adj, s, &mut visited, 1)
    })
}

impl SupportRule {
    pub fn supports(self, graph: &Graph, nodes: &[usize]) -> bool {
        if nodes.iter().any(|&v| v >= graph.n()) {
            return false;
        }
        match self {
            SupportRule::AllPairs => nodes
                .iter()
                .enumerate()
                .all(|(q, &u)| nodes[q + 1..].iter().all(|&v| graph.has_edge(u, v))),
            SupportRule::Ring => {
                let adj = induced(graph, nodes);
                adj.iter().all(|nb| nb.len() == 2) && connected(&adj)
            }
            SupportRule::Path => hamiltonian_path(&induced(graph, nodes)),
        }
    }
}

/// Turns a raw rank-2 tensor into a valid incidence.
///
/// Per column, the raw entries at the cell's own edges (`mask`) are averaged
/// per channel. The column is kept iff the largest channel mean exceeds
/// `threshold` and the cell is supported by `a_quant` under `rule`. Kept
/// columns get the common value 1 on every cell edge (single channel) or the
/// one-hot of the winning channel (several channels). Everything else is 0.
pub fn quantize_incidence(
    f_raw: ArrayView3<f64>,
    a_quant: ArrayView3<f64>,
    layout: &Layout,
    threshold: f64,
    rule: SupportRule,
) -> Result<Array3<f64>> {
    let (m, k, f2) = f_raw.dim();
    ensure!(
        m == layout.num_edges() && k == layout.num_cells(),
        Shape,
        "incidence is {m}x{k}, layout expects {}x{}",
        layout.num_edges(),
        layout.num_cells()
    );
    let n = a_quant.dim().0;
    ensure!(n == layout.n, Shape, "adjacency has {n} nodes, layout {}", layout.n);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (0..a_quant.dim().2).any(|c| a_quant[[i, j, c]] != 0.0) {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    let mut out = Array3::zeros((m, k, f2));
    for j in 0..k {
        let cell_edges = layout.cell_edges(j);
        let mut means = vec![0.0; f2];
        for &e in cell_edges {
            for (c, mean) in means.iter_mut().enumerate() {
                *mean += f_raw[[e, j, c]];
            }
        }
        let scale = 1.0 / cell_edges.len() as f64;
        let (best, best_mean) = means
            .iter()
            .map(|v| v * scale)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
        if best_mean > threshold && rule.supports(&graph, layout.cell_nodes(j)) {
            let value = if f2 == 1 { 0 } else { best };
            for &e in cell_edges {
                out[[e, j, value]] = 1.0;
            }
        }
    }
    Ok(out)
}
