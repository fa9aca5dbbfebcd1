//! Graph-to-complex lifting: chordless cycles (ring) and k-node paths (path)
//! become rank-2 cells.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::complex::{CombinatorialComplex, ComplexTensor, DimConstraints, Graph, SupportRule};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LiftMethod {
    Ring,
    Path {
        /// Source nodes; `None` means every node.
        #[serde(default)]
        sources: Option<Vec<usize>>,
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftSpec {
    #[serde(flatten)]
    pub method: LiftMethod,
    pub constraints: DimConstraints,
}

impl LiftSpec {
    pub fn ring(constraints: DimConstraints) -> Self {
        LiftSpec {
            method: LiftMethod::Ring,
            constraints,
        }
    }

    pub fn path(k: usize, sources: Option<Vec<usize>>, constraints: DimConstraints) -> Result<Self> {
        ensure!(k >= 1, Domain, "path length must be >= 1");
        Ok(LiftSpec {
            method: LiftMethod::Path { sources, k },
            constraints,
        })
    }

    /// Rule under which a generated cell counts as produced by this lifting.
    pub fn support_rule(&self) -> SupportRule {
        match self.method {
            LiftMethod::Ring => SupportRule::Ring,
            LiftMethod::Path { .. } => SupportRule::Path,
        }
    }

    pub fn cells(&self, graph: &Graph) -> Result<BTreeSet<Vec<usize>>> {
        match &self.method {
            LiftMethod::Ring => Ok(ring_cells(graph, &self.constraints)),
            LiftMethod::Path { sources, k } => {
                let all: Vec<usize>;
                let sources = match sources {
                    Some(s) => {
                        ensure!(
                            s.iter().all(|&v| v < graph.n()),
                            Domain,
                            "source nodes {s:?} outside the graph"
                        );
                        s.as_slice()
                    }
                    None => {
                        all = (0..graph.n()).collect();
                        &all
                    }
                };
                Ok(path_cells(graph, sources, *k, &self.constraints))
            }
        }
    }

    /// Adds the lifted cells, with unit features, to a complex built on `graph`.
    pub fn apply(&self, graph: &Graph, node_features: Array2<f64>) -> Result<CombinatorialComplex> {
        ensure!(
            node_features.nrows() == graph.n(),
            Shape,
            "node features have {} rows for {} nodes",
            node_features.nrows(),
            graph.n()
        );
        let mut cc = CombinatorialComplex::from_graph(graph, self.constraints);
        cc.node_features = node_features;
        cc.cells = self.cells(graph)?.into_iter().map(|s| (s, vec![1.0])).collect();
        Ok(cc)
    }

    /// Re-lifts an existing complex, replacing its rank-2 cells.
    pub fn relift(&self, cc: &CombinatorialComplex) -> Result<CombinatorialComplex> {
        let mut out = cc.clone();
        out.constraints = self.constraints;
        out.f2 = 1;
        out.cells = self.cells(&cc.graph())?.into_iter().map(|s| (s, vec![1.0])).collect();
        Ok(out)
    }
}

/// Node sets of all chordless cycles whose length lies within `constraints`.
pub fn ring_cells(graph: &Graph, constraints: &DimConstraints) -> BTreeSet<Vec<usize>> {
    let mut found = BTreeSet::new();
    let mut path = Vec::with_capacity(constraints.d_max);
    for start in 0..graph.n() {
        path.clear();
        path.push(start);
        grow_cycle(graph, constraints, &mut path, &mut found);
    }
    found
}

fn grow_cycle(
    graph: &Graph,
    constraints: &DimConstraints,
    path: &mut Vec<usize>,
    found: &mut BTreeSet<Vec<usize>>,
) {
    let start = path[0];
    let last = *path.last().expect("path is never empty");
    for &v in graph.neighbors(last) {
        // the start is the smallest node of every cycle it roots
        if v <= start || path.contains(&v) {
            continue;
        }
        let len = path.len() + 1;
        if len == 2 {
            path.push(v);
            grow_cycle(graph, constraints, path, found);
            path.pop();
            continue;
        }
        let interior = &path[1..path.len() - 1];
        if interior.iter().any(|&u| graph.has_edge(u, v)) {
            continue;
        }
        if graph.has_edge(start, v) {
            if len >= 3 && constraints.contains(len) {
                let mut cell = path.clone();
                cell.push(v);
                cell.sort_unstable();
                found.insert(cell);
            }
            continue;
        }
        if len < constraints.d_max {
            path.push(v);
            grow_cycle(graph, constraints, path, found);
            path.pop();
        }
    }
}

/// Node sets of simple paths with exactly `k` nodes starting at a source node.
pub fn path_cells(
    graph: &Graph,
    sources: &[usize],
    k: usize,
    constraints: &DimConstraints,
) -> BTreeSet<Vec<usize>> {
    let mut found = BTreeSet::new();
    if k == 0 || k > graph.n() || !constraints.contains(k) {
        return found;
    }
    let mut path = Vec::with_capacity(k);
    for &s in sources {
        path.clear();
        path.push(s);
        walk(graph, k, &mut path, &mut found);
    }
    found
}

fn walk(graph: &Graph, k: usize, path: &mut Vec<usize>, found: &mut BTreeSet<Vec<usize>>) {
    if path.len() == k {
        let mut cell = path.clone();
        cell.sort_unstable();
        found.insert(cell);
        return;
    }
    let last = *path.last().expect("path is never empty");
    for &v in graph.neighbors(last) {
        if !path.contains(&v) {
            path.push(v);
            walk(graph, k, path, found);
            path.pop();
        }
    }
}

pub fn lift_ring(
    graph: &Graph,
    node_features: Array2<f64>,
    constraints: DimConstraints,
) -> Result<ComplexTensor> {
    LiftSpec::ring(constraints).apply(graph, node_features)?.to_tensor()
}

pub fn lift_path(graph: &Graph, node_features: Array2<f64>, spec: &LiftSpec) -> Result<ComplexTensor> {
    ensure!(
        matches!(spec.method, LiftMethod::Path { .. }),
        Config,
        "lift_path requires a path lifting spec"
    );
    spec.apply(graph, node_features)?.to_tensor()
}
