use ndarray::Array2;

use crate::error::{ensure, Result};

/// Simple undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::empty(n);
        for (i, j) in edges {
            ensure!(i != j, Domain, "self-loop at node {i}");
            ensure!(i < n && j < n, Domain, "edge ({i}, {j}) out of range for n = {n}");
            g.adj[i].push(j);
            g.adj[j].push(i);
        }
        for nbrs in &mut g.adj {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        Ok(g)
    }

    /// Reads a binary adjacency (any nonzero entry is an edge). Must be symmetric.
    pub fn from_adjacency(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        ensure!(a.ncols() == n, Shape, "adjacency is {:?}", a.dim());
        let mut edges = Vec::new();
        for i in 0..n {
            ensure!(a[[i, i]] == 0.0, Contract, "self-loop at node {i}");
            for j in i + 1..n {
                ensure!(a[[i, j]] == a[[j, i]], Contract, "adjacency not symmetric at ({i}, {j})");
                if a[[i, j]] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(n, edges)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for (i, j) in self.edges() {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Graph::from_edges(self.n(), self.edges().map(|(i, j)| (perm[i], perm[j])))
            .expect("permutation keeps edges valid")
    }
}
