//! One complex per line of JSON.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::complex::{CombinatorialComplex, DimConstraints};
use crate::error::{CcsdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub nodes: [usize; 2],
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub nodes: Vec<usize>,
    pub feature: Vec<f64>,
}

/// Serialized complex. Edges come either as `edges` or as a dense `a`
/// (`[n][n][f1]`, nonzero upper-triangle entries become edges); writers emit `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcRecord {
    pub n: usize,
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub f1: Option<usize>,
    #[serde(default)]
    pub f2: Option<usize>,
    #[serde(default)]
    pub cells_2: Vec<CellRecord>,
    pub constraints: DimConstraints,
}

impl CcRecord {
    pub fn from_complex(cc: &CombinatorialComplex) -> Self {
        CcRecord {
            n: cc.n,
            x: cc.node_features.rows().into_iter().map(|r| r.to_vec()).collect(),
            edges: Some(
                cc.edges
                    .iter()
                    .map(|(&(i, j), f)| EdgeRecord {
                        nodes: [i, j],
                        feature: f.clone(),
                    })
                    .collect(),
            ),
            a: None,
            f1: Some(cc.f1),
            f2: Some(cc.f2),
            cells_2: cc
                .cells
                .iter()
                .map(|(nodes, f)| CellRecord {
                    nodes: nodes.clone(),
                    feature: f.clone(),
                })
                .collect(),
            constraints: cc.constraints,
        }
    }

    pub fn to_complex(&self) -> std::result::Result<CombinatorialComplex, String> {
        let f0 = self.x.first().map_or(0, Vec::len);
        if self.x.len() != self.n || self.x.iter().any(|r| r.len() != f0) {
            return Err(format!("x must be {} rows of equal width", self.n));
        }
        let node_features = Array2::from_shape_fn((self.n, f0), |(i, j)| self.x[i][j]);
        let mut edges = BTreeMap::new();
        match (&self.edges, &self.a) {
            (Some(_), Some(_)) => return Err("give either `edges` or `a`, not both".into()),
            (Some(list), None) => {
                for e in list {
                    let [i, j] = e.nodes;
                    let key = (i.min(j), i.max(j));
                    if edges.insert(key, e.feature.clone()).is_some() {
                        return Err(format!("duplicate edge {key:?}"));
                    }
                }
            }
            (None, Some(a)) => {
                if a.len() != self.n || a.iter().any(|r| r.len() != self.n) {
                    return Err(format!("a must be {0}x{0}", self.n));
                }
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        if a[i][j] != a[j][i] {
                            return Err(format!("a not symmetric at ({i}, {j})"));
                        }
                        if a[i][j].iter().any(|&v| v != 0.0) {
                            edges.insert((i, j), a[i][j].clone());
                        }
                    }
                }
            }
            (None, None) => {}
        }
        let f1 = self.f1.or_else(|| edges.values().next().map(Vec::len)).unwrap_or(1);
        let f2 = self.f2.or_else(|| self.cells_2.first().map(|c| c.feature.len())).unwrap_or(1);
        let mut cells = BTreeMap::new();
        for c in &self.cells_2 {
            let mut nodes = c.nodes.clone();
            nodes.sort_unstable();
            if cells.insert(nodes.clone(), c.feature.clone()).is_some() {
                return Err(format!("duplicate cell {nodes:?}"));
            }
        }
        let cc = CombinatorialComplex {
            n: self.n,
            node_features,
            edges,
            cells,
            f1,
            f2,
            constraints: self.constraints,
        };
        cc.validate().map_err(|e| e.to_string())?;
        Ok(cc)
    }
}

pub fn write_dataset_string(ccs: &[CombinatorialComplex]) -> Result<String> {
    let mut out = String::new();
    for cc in ccs {
        out.push_str(&serde_json::to_string(&CcRecord::from_complex(cc))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, ccs: &[CombinatorialComplex]) -> Result<()> {
    let text = write_dataset_string(ccs)?;
    let mut f = std::fs::File::create(path).map_err(|e| CcsdError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CcsdError::io(path, e))
}

/// Parses JSON lines; blank lines are skipped. Errors carry the 1-based line.
pub fn read_dataset_str(text: &str, origin: &str) -> Result<Vec<CombinatorialComplex>> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())), origin)
}

pub fn read_dataset(path: &Path) -> Result<Vec<CombinatorialComplex>> {
    let f = std::fs::File::open(path).map_err(|e| CcsdError::io(path, e))?;
    let lines = BufReader::new(f).lines().map(|l| l.map_err(|e| CcsdError::io(path, e)));
    parse_lines(lines, &path.display().to_string())
}

fn parse_lines(lines: impl Iterator<Item = Result<String>>, origin: &str) -> Result<Vec<CombinatorialComplex>> {
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CcsdError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let rec: CcRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        out.push(rec.to_complex().map_err(err)?);
    }
    Ok(out)
}
