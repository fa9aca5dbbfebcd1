//! Flat orderings of node pairs (edges) and candidate rank-2 cells.
//!
//! Edges are ordered lexicographically by `(i, j)` with `i < j`. Cells are
//! ordered by cardinality, then lexicographically on the sorted node tuple.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::DimConstraints;
use crate::error::{ensure, Result};

/// Binomial coefficient, exact in `u64` for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

pub fn num_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Flat index of the node pair `(i, j)`, `i < j < n`.
pub fn edge_index(i: usize, j: usize, n: usize) -> Result<usize> {
    ensure!(i < j, Domain, "edge ({i}, {j}) must satisfy i < j");
    ensure!(j < n, Domain, "edge ({i}, {j}) out of range for n = {n}");
    Ok(i * n - i * (i + 1) / 2 + (j - i - 1))
}

/// Inverse of [`edge_index`].
pub fn edge_pair(idx: usize, n: usize) -> Result<(usize, usize)> {
    ensure!(idx < num_edges(n), Domain, "edge index {idx} out of range for n = {n}");
    let mut i = 0;
    let mut start = 0;
    loop {
        let row = n - i - 1;
        if idx < start + row {
            return Ok((i, i + 1 + idx - start));
        }
        start += row;
        i += 1;
    }
}

/// Number of candidate rank-2 cells on `n` nodes.
pub fn cell_count(n: usize, c: &DimConstraints) -> u64 {
    (c.d_min..=c.d_max).map(|k| binomial(n, k)).sum()
}

/// Rank of a sorted `k`-subset among all `k`-subsets of `0..n` in lexicographic order.
fn lex_rank(nodes: &[usize], n: usize) -> u64 {
    let k = nodes.len();
    let mut rank = 0u64;
    let mut prev: isize = -1;
    for (pos, &s) in nodes.iter().enumerate() {
        for v in (prev + 1) as usize..s {
            rank += binomial(n - 1 - v, k - 1 - pos);
        }
        prev = s as isize;
    }
    rank
}

/// Index of the cell with node set `nodes` (sorted or not).
pub fn cell_index(nodes: &[usize], n: usize, c: &DimConstraints) -> Result<usize> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    let k = sorted.len();
    ensure!(
        (c.d_min..=c.d_max).contains(&k),
        Domain,
        "cell of size {k} outside [{}, {}]",
        c.d_min,
        c.d_max
    );
    ensure!(
        sorted.windows(2).all(|w| w[0] < w[1]),
        Domain,
        "cell {nodes:?} has repeated nodes"
    );
    ensure!(
        sorted.last().is_some_and(|&m| m < n),
        Domain,
        "cell {nodes:?} out of range for n = {n}"
    );
    let offset: u64 = (c.d_min..k).map(|s| binomial(n, s)).sum();
    Ok((offset + lex_rank(&sorted, n)) as usize)
}

/// Precomputed cell enumeration and cell-to-edge incidence for one `(n, constraints)` pair.
#[derive(Debug)]
pub struct Layout {
    pub n: usize,
    pub constraints: DimConstraints,
    cells: Vec<Vec<usize>>,
    cell_edges: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl Layout {
    pub fn new(n: usize, constraints: DimConstraints) -> Self {
        let mut cells = Vec::new();
        for k in constraints.d_min..=constraints.d_max.min(n) {
            let mut combo: Vec<usize> = (0..k).collect();
            loop {
                cells.push(combo.clone());
                // advance to the next k-combination in lexicographic order
                let mut pos = k;
                while pos > 0 && combo[pos - 1] == n - k + pos - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                combo[pos - 1] += 1;
                for q in pos..k {
                    combo[q] = combo[q - 1] + 1;
                }
            }
        }
        let cell_edges = cells
            .iter()
            .map(|s| {
                let mut edges = Vec::with_capacity(s.len() * (s.len() - 1) / 2);
                for (a, &i) in s.iter().enumerate() {
                    for &j in &s[a + 1..] {
                        edges.push(i * n - i * (i + 1) / 2 + (j - i - 1));
                    }
                }
                edges.sort_unstable();
                edges
            })
            .collect();
        let lookup = cells.iter().enumerate().map(|(j, s)| (s.clone(), j)).collect();
        Layout {
            n,
            constraints,
            cells,
            cell_edges,
            lookup,
        }
    }

    /// Cached layout shared across threads.
    pub fn shared(n: usize, constraints: DimConstraints) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<Layout>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (n, constraints.d_min, constraints.d_max);
        if let Some(l) = cache.lock().expect("layout cache poisoned").get(&key) {
            return l.clone();
        }
        let layout = Arc::new(Layout::new(n, constraints));
        cache
            .lock()
            .expect("layout cache poisoned")
            .entry(key)
            .or_insert(layout)
            .clone()
    }

    pub fn num_edges(&self) -> usize {
        num_edges(self.n)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_nodes(&self, j: usize) -> &[usize] {
        &self.cells[j]
    }

    /// Edge indices of all node pairs inside cell `j`, ascending.
    pub fn cell_edges(&self, j: usize) -> &[usize] {
        &self.cell_edges[j]
    }

    pub fn cell_of(&self, nodes: &[usize]) -> Option<usize> {
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        self.lookup.get(&sorted).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.iter().map(Vec::as_slice)
    }

    /// True iff every node of cell `j` is below `active` (prefix node mask).
    pub fn cell_within(&self, j: usize, active: usize) -> bool {
        self.cells[j].last().is_some_and(|&m| m < active)
    }
}
