//! Synthetic dataset generators, JSON-lines datasets and checkpoints.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{CombinatorialComplex, DimConstraints, Graph};
use crate::error::{ensure, Result};
use crate::lifting::LiftSpec;

mod checkpoint;
mod jsonl;

pub use checkpoint::{spec_hash, Checkpoint, CheckpointHeader, FORMAT_VERSION};
pub use jsonl::{read_dataset, read_dataset_str, write_dataset, write_dataset_string, CcRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    CommunitySmall,
    GridSmall,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub count: usize,
    /// Inclusive node-count range; for grids, the range of side lengths.
    pub node_range: (usize, usize),
    #[serde(default = "default_p_intra")]
    pub p_intra: f64,
    #[serde(default = "default_p_inter")]
    pub p_inter: f64,
    /// Width of the one-hot degree node features; larger degrees share the last slot.
    pub feature_dim: usize,
    #[serde(default)]
    pub lift: Option<LiftSpec>,
    #[serde(default)]
    pub path: Option<String>,
    pub seed: u64,
}

fn default_p_intra() -> f64 {
    0.7
}

fn default_p_inter() -> f64 {
    0.05
}

impl DatasetSpec {
    pub fn community_small(seed: u64) -> Self {
        DatasetSpec {
            name: DatasetName::CommunitySmall,
            count: 100,
            node_range: (12, 19),
            p_intra: default_p_intra(),
            p_inter: default_p_inter(),
            feature_dim: 10,
            lift: None,
            path: None,
            seed,
        }
    }

    pub fn grid_small(seed: u64) -> Self {
        DatasetSpec {
            name: DatasetName::GridSmall,
            count: 100,
            node_range: (4, 7),
            p_intra: default_p_intra(),
            p_inter: default_p_inter(),
            feature_dim: 5,
            lift: None,
            path: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.count >= 1, Config, "dataset.count must be >= 1");
        let (lo, hi) = self.node_range;
        ensure!(lo >= 1 && lo <= hi, Config, "dataset.node_range must satisfy 1 <= lo <= hi");
        ensure!(hi <= 64, Config, "dataset.node_range upper bound {hi} exceeds 64");
        ensure!(self.feature_dim >= 1, Config, "dataset.feature_dim must be >= 1");
        for (k, p) in [("dataset.p_intra", self.p_intra), ("dataset.p_inter", self.p_inter)] {
            ensure!((0.0..=1.0).contains(&p), Config, "{k} must lie in [0, 1]");
        }
        if self.name == DatasetName::File {
            ensure!(self.path.is_some(), Config, "dataset.path is required for file datasets");
        }
        Ok(())
    }

    /// Largest node count the spec can produce.
    pub fn max_nodes(&self) -> usize {
        match self.name {
            DatasetName::GridSmall => self.node_range.1 * self.node_range.1,
            _ => self.node_range.1,
        }
    }
}

/// Two communities of sizes ⌈n/2⌉ and ⌊n/2⌋; pairs inside a community are
/// joined with `p_intra`, pairs across with `p_inter`.
pub fn gen_community_small(spec: &DatasetSpec) -> Result<Vec<Graph>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.node_range;
    (0..spec.count)
        .map(|_| {
            let n = rng.gen_range(lo..=hi);
            let first = n.div_ceil(2);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let same = (i < first) == (j < first);
                    let p = if same { spec.p_intra } else { spec.p_inter };
                    if rng.gen_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            Graph::from_edges(n, edges)
        })
        .collect()
}

/// `rows × cols` lattice with row-major node numbering.
pub fn grid_graph(rows: usize, cols: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    Graph::from_edges(rows * cols, edges)
}

/// Grids with side lengths drawn uniformly from `node_range`.
pub fn gen_grid_small(spec: &DatasetSpec) -> Result<Vec<Graph>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.node_range;
    (0..spec.count)
        .map(|_| {
            let rows = rng.gen_range(lo..=hi);
            let cols = rng.gen_range(lo..=hi);
            grid_graph(rows, cols)
        })
        .collect()
}

/// One-hot node degrees, clamped into the last of `dim` slots.
pub fn degree_features(graph: &Graph, dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((graph.n(), dim));
    for v in 0..graph.n() {
        x[[v, graph.degree(v).min(dim - 1)]] = 1.0;
    }
    x
}

/// Graphs of a generated dataset as complexes: degree features, unit edge
/// features and rank-2 cells from the lift (none without one).
pub fn build_dataset(spec: &DatasetSpec, constraints: DimConstraints) -> Result<Vec<CombinatorialComplex>> {
    let graphs = match spec.name {
        DatasetName::CommunitySmall => gen_community_small(spec)?,
        DatasetName::GridSmall => gen_grid_small(spec)?,
        DatasetName::File => {
            let path = spec.path.as_deref().unwrap_or_default();
            let mut ccs = read_dataset(std::path::Path::new(path))?;
            if let Some(lift) = &spec.lift {
                ccs = ccs.iter().map(|cc| lift.relift(cc)).collect::<Result<_>>()?;
            }
            return Ok(ccs);
        }
    };
    graphs
        .iter()
        .map(|g| {
            let x = degree_features(g, spec.feature_dim);
            match &spec.lift {
                Some(lift) => lift.apply(g, x),
                None => {
                    let mut cc = CombinatorialComplex::from_graph(g, constraints);
                    cc.node_features = x;
                    Ok(cc)
                }
            }
        })
        .collect()
}
