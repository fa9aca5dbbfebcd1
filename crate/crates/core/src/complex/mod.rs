//! Dimension-2 combinatorial complexes: set form, tensor form `(X, A, F)`,
//! and the operators defined on them.

mod graph;
mod index;
mod ops;
mod quantize;

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, CcsdError, Result};

pub use graph::Graph;
pub use index::{
    binomial, cell_count, cell_index, edge_index, edge_pair, num_edges, Layout,
};
pub use ops::{
    cell_edge_mask, higher_order_adjacency, higher_order_incidence, hodge_dual,
    hodge_dual_inverse, hodge_laplacian, incidence_times,
};
pub use quantize::{
    quantize_adjacency, quantize_incidence, symmetrize, AdjacencyQuantization, SupportRule,
};

/// Cardinality bounds on rank-2 cells. Ranks 0 and 1 are fixed at 1 and 2 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimConstraints {
    pub d_min: usize,
    pub d_max: usize,
}

impl DimConstraints {
    pub fn new(d_min: usize, d_max: usize) -> Result<Self> {
        ensure!(
            3 <= d_min && d_min <= d_max,
            Domain,
            "rank-2 cell bounds must satisfy 3 <= d_min <= d_max (got {d_min}, {d_max})"
        );
        Ok(DimConstraints { d_min, d_max })
    }

    pub fn contains(&self, size: usize) -> bool {
        (self.d_min..=self.d_max).contains(&size)
    }
}

/// A combinatorial complex of dimension 2 held by its cells.
///
/// Edges are keyed by `(i, j)` with `i < j`; cells by their sorted node list.
/// Every stored feature vector must be nonzero, since a zero feature is
/// indistinguishable from an absent cell in tensor form.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinatorialComplex {
    pub n: usize,
    pub node_features: Array2<f64>,
    pub edges: BTreeMap<(usize, usize), Vec<f64>>,
    pub cells: BTreeMap<Vec<usize>, Vec<f64>>,
    pub f1: usize,
    pub f2: usize,
    pub constraints: DimConstraints,
}

impl CombinatorialComplex {
    /// Plain graph with unit edge features, constant unit node features and no rank-2 cells.
    pub fn from_graph(graph: &Graph, constraints: DimConstraints) -> Self {
        CombinatorialComplex {
            n: graph.n(),
            node_features: Array2::ones((graph.n(), 1)),
            edges: graph.edges().map(|e| (e, vec![1.0])).collect(),
            cells: BTreeMap::new(),
            f1: 1,
            f2: 1,
            constraints,
        }
    }

    pub fn graph(&self) -> Graph {
        Graph::from_edges(self.n, self.edges.keys().copied())
            .expect("complex edges are in range by construction")
    }

    pub fn f0(&self) -> usize {
        self.node_features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.node_features.nrows() == self.n,
            Shape,
            "node features have {} rows for {} nodes",
            self.node_features.nrows(),
            self.n
        );
        for (&(i, j), feat) in &self.edges {
            ensure!(i < j && j < self.n, Domain, "edge ({i}, {j}) invalid for n = {}", self.n);
            ensure!(feat.len() == self.f1, Shape, "edge ({i}, {j}) feature width {}", feat.len());
            ensure!(feat.iter().any(|&v| v != 0.0), Domain, "edge ({i}, {j}) has a zero feature");
        }
        for (nodes, feat) in &self.cells {
            ensure!(
                self.constraints.contains(nodes.len()),
                Domain,
                "cell {nodes:?} violates size bounds"
            );
            ensure!(
                nodes.windows(2).all(|w| w[0] < w[1]) && nodes.iter().all(|&v| v < self.n),
                Domain,
                "cell {nodes:?} must be a sorted set of existing nodes"
            );
            ensure!(feat.len() == self.f2, Shape, "cell {nodes:?} feature width {}", feat.len());
            ensure!(feat.iter().any(|&v| v != 0.0), Domain, "cell {nodes:?} has a zero feature");
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Result<ComplexTensor> {
        self.to_tensor_padded(self.n)
    }

    /// Tensor form embedded in `n_max` nodes; nodes `n..n_max` are masked out.
    pub fn to_tensor_padded(&self, n_max: usize) -> Result<ComplexTensor> {
        self.validate()?;
        ensure!(n_max >= self.n, Shape, "cannot pad {} nodes into {n_max}", self.n);
        let layout = Layout::shared(n_max, self.constraints);
        let mut t = ComplexTensor::zeros(n_max, self.f0(), self.f1, self.f2, self.constraints);
        t.node_mask = (0..n_max).map(|i| i < self.n).collect();
        t.x.slice_mut(ndarray::s![..self.n, ..]).assign(&self.node_features);
        for (&(i, j), feat) in &self.edges {
            for (c, &v) in feat.iter().enumerate() {
                t.a[[i, j, c]] = v;
                t.a[[j, i, c]] = v;
            }
        }
        for (nodes, feat) in &self.cells {
            let col = layout
                .cell_of(nodes)
                .ok_or_else(|| CcsdError::Domain(format!("cell {nodes:?} not indexable")))?;
            for &e in layout.cell_edges(col) {
                for (c, &v) in feat.iter().enumerate() {
                    t.f[[e, col, c]] = v;
                }
            }
        }
        Ok(t)
    }
}

/// Tensor representation `(X, A, F)` of a dimension-2 featured complex.
///
/// Shapes: `x` is `[n, f0]`, `a` is `[n, n, f1]`, `f` is `[C(n,2), K(n), f2]`.
/// `node_mask` marks active nodes when the complex is embedded in a larger
/// batch shape; active nodes always form a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub x: Array2<f64>,
    pub a: Array3<f64>,
    pub f: Array3<f64>,
    pub constraints: DimConstraints,
    pub node_mask: Vec<bool>,
}

impl ComplexTensor {
    pub fn zeros(n: usize, f0: usize, f1: usize, f2: usize, constraints: DimConstraints) -> Self {
        let k = cell_count(n, &constraints) as usize;
        ComplexTensor {
            x: Array2::zeros((n, f0)),
            a: Array3::zeros((n, n, f1)),
            f: Array3::zeros((num_edges(n), k, f2)),
            constraints,
            node_mask: vec![true; n],
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn f0(&self) -> usize {
        self.x.ncols()
    }

    pub fn f1(&self) -> usize {
        self.a.dim().2
    }

    pub fn f2(&self) -> usize {
        self.f.dim().2
    }

    pub fn num_cells(&self) -> usize {
        self.f.dim().1
    }

    pub fn active_nodes(&self) -> usize {
        self.node_mask.iter().filter(|&&m| m).count()
    }

    pub fn layout(&self) -> Arc<Layout> {
        Layout::shared(self.n(), self.constraints)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.n();
        ensure!(self.a.dim().0 == n && self.a.dim().1 == n, Shape, "A is {:?}, n = {n}", self.a.dim());
        let (m, k, _) = self.f.dim();
        ensure!(m == num_edges(n), Shape, "F has {m} rows, expected C({n},2)");
        ensure!(
            k as u64 == cell_count(n, &self.constraints),
            Shape,
            "F has {k} columns, expected K({n}) = {}",
            cell_count(n, &self.constraints)
        );
        ensure!(self.node_mask.len() == n, Shape, "node mask length {}", self.node_mask.len());
        let active = self.active_nodes();
        ensure!(
            self.node_mask.iter().take(active).all(|&m| m),
            Contract,
            "active nodes must form a prefix"
        );
        Ok(())
    }

    /// Checks every invariant of a quantized (valid) complex.
    pub fn validate_quantized(&self) -> Result<()> {
        self.check_shapes()?;
        let n = self.n();
        let active = self.active_nodes();
        for i in 0..n {
            for j in 0..n {
                for c in 0..self.f1() {
                    let v = self.a[[i, j, c]];
                    ensure!(v == self.a[[j, i, c]], Contract, "A not symmetric at ({i}, {j}, {c})");
                    if i == j {
                        ensure!(v == 0.0, Contract, "A has a self-loop at node {i}");
                    }
                    if i >= active || j >= active {
                        ensure!(v == 0.0, Contract, "A nonzero at padded entry ({i}, {j})");
                    }
                }
            }
            if i >= active {
                ensure!(
                    self.x.row(i).iter().all(|&v| v == 0.0),
                    Contract,
                    "X nonzero at padded node {i}"
                );
            }
        }
        let layout = self.layout();
        let (m, k, f2) = self.f.dim();
        let mut in_cell = vec![false; m];
        for j in 0..k {
            let edges = layout.cell_edges(j);
            for &e in edges {
                in_cell[e] = true;
            }
            let mut common: Option<Vec<f64>> = None;
            for e in 0..m {
                let row: Vec<f64> = (0..f2).map(|c| self.f[[e, j, c]]).collect();
                if row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                ensure!(in_cell[e], Contract, "F column {j} nonzero outside its cell at edge {e}");
                ensure!(
                    layout.cell_within(j, active),
                    Contract,
                    "F column {j} active on padded nodes"
                );
                match &common {
                    None => common = Some(row),
                    Some(c) => ensure!(*c == row, Contract, "F column {j} is not column-constant"),
                }
            }
            for &e in edges {
                in_cell[e] = false;
            }
        }
        Ok(())
    }

    /// Recovers the set form from the active part of the tensors.
    pub fn to_complex(&self) -> Result<CombinatorialComplex> {
        self.check_shapes()?;
        let active = self.active_nodes();
        let layout = self.layout();
        let mut edges = BTreeMap::new();
        for i in 0..active {
            for j in i + 1..active {
                let feat: Vec<f64> = (0..self.f1()).map(|c| self.a[[i, j, c]]).collect();
                if feat.iter().any(|&v| v != 0.0) {
                    edges.insert((i, j), feat);
                }
            }
        }
        let mut cells = BTreeMap::new();
        for j in 0..self.num_cells() {
            if !layout.cell_within(j, active) {
                continue;
            }
            let first = layout.cell_edges(j).iter().find_map(|&e| {
                let row: Vec<f64> = (0..self.f2()).map(|c| self.f[[e, j, c]]).collect();
                row.iter().any(|&v| v != 0.0).then_some(row)
            });
            if let Some(feat) = first {
                cells.insert(layout.cell_nodes(j).to_vec(), feat);
            }
        }
        Ok(CombinatorialComplex {
            n: active,
            node_features: self.x.slice(ndarray::s![..active, ..]).to_owned(),
            edges,
            cells,
            f1: self.f1(),
            f2: self.f2(),
            constraints: self.constraints,
        })
    }

    /// Adjacency of the active graph summed over channels, thresholded at nonzero.
    pub fn graph(&self) -> Graph {
        let active = self.active_nodes();
        let mut edges = Vec::new();
        for i in 0..active {
            for j in i + 1..active {
                if (0..self.f1()).any(|c| self.a[[i, j, c]] != 0.0) {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(active, edges).expect("edges in range")
    }
}
