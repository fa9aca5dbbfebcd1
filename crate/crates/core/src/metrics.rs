//! Distribution comparison (MMD over kernels) and per-complex statistics.

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::complex::{edge_index, hodge_laplacian, ComplexTensor, Graph};
use crate::error::{ensure, CcsdError, Result};

/// Bin values with their normalization state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<f64>,
    /// True once the bins sum to one.
    pub normalized: bool,
}

impl Histogram {
    pub fn counts(bins: Vec<f64>) -> Self {
        Histogram { bins, normalized: false }
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Probability vector; an all-zero histogram stays zero.
    pub fn normalize(&self) -> Histogram {
        let s = self.total();
        let bins = if s > 0.0 { self.bins.iter().map(|v| v / s).collect() } else { self.bins.clone() };
        Histogram { bins, normalized: s > 0.0 }
    }

    pub fn padded(&self, len: usize) -> Histogram {
        let mut bins = self.bins.clone();
        bins.resize(len.max(bins.len()), 0.0);
        Histogram { bins, normalized: self.normalized }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-|x - y|^2 / (2 sigma^2))` on zero-padded vectors.
    Gaussian { sigma: f64 },
    /// `exp(-EMD(x, y) / (2 sigma^2))` on probability histograms.
    GaussianEmd { sigma: f64 },
}

impl Kernel {
    fn sigma(self) -> f64 {
        match self {
            Kernel::Gaussian { sigma } | Kernel::GaussianEmd { sigma } => sigma,
        }
    }

    pub fn eval(self, x: &[f64], y: &[f64]) -> Result<f64> {
        let sigma = self.sigma();
        ensure!(sigma > 0.0 && sigma.is_finite(), Domain, "kernel sigma must be positive, got {sigma}");
        match self {
            Kernel::Gaussian { .. } => Ok(gaussian_kernel(x, y, sigma)),
            Kernel::GaussianEmd { .. } => gaussian_emd_kernel(x, y, sigma),
        }
    }
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let len = x.len().max(y.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let d2: f64 = (0..len).map(|i| (at(x, i) - at(y, i)).powi(2)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Earth mover's distance between two probability histograms on the same
/// unit-spaced support: the L1 distance between their CDFs.
pub fn emd_1d(p: &[f64], q: &[f64]) -> Result<f64> {
    ensure!(p.len() == q.len(), Shape, "histograms of length {} and {}", p.len(), q.len());
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    ensure!(
        (sp - sq).abs() <= 1e-9 * sp.abs().max(1.0),
        Domain,
        "histograms carry different mass ({sp} and {sq})"
    );
    let mut cdf = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        cdf += a - b;
        total += cdf.abs();
    }
    Ok(total)
}

/// `exp(-EMD(x, y) / (2 sigma^2))`; inputs are zero-padded to a common length.
pub fn gaussian_emd_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    ensure!(sigma > 0.0 && sigma.is_finite(), Domain, "kernel sigma must be positive, got {sigma}");
    let len = x.len().max(y.len());
    let mut xp = x.to_vec();
    let mut yp = y.to_vec();
    xp.resize(len, 0.0);
    yp.resize(len, 0.0);
    Ok((-emd_1d(&xp, &yp)? / (2.0 * sigma * sigma)).exp())
}

fn mean_kernel(p: &[Vec<f64>], q: &[Vec<f64>], kernel: Kernel) -> Result<f64> {
    let mut s = 0.0;
    for x in p {
        for y in q {
            s += kernel.eval(x, y)?;
        }
    }
    Ok(s / (p.len() * q.len()) as f64)
}

/// `D(P,P) + D(Q,Q) - 2 D(P,Q)` with `D` the mean kernel value over pairs,
/// clamped at zero. Vectors are zero-padded to a common length.
pub fn mmd(p: &[Vec<f64>], q: &[Vec<f64>], kernel: Kernel) -> Result<f64> {
    ensure!(!p.is_empty() && !q.is_empty(), Domain, "MMD needs two nonempty sample sets");
    let len = p.iter().chain(q).map(Vec::len).max().unwrap_or(0);
    let pad = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        s.iter()
            .map(|v| {
                let mut v = v.clone();
                v.resize(len, 0.0);
                v
            })
            .collect()
    };
    let (p, q) = (pad(p), pad(q));
    let v = mean_kernel(&p, &p, kernel)? + mean_kernel(&q, &q, kernel)? - 2.0 * mean_kernel(&p, &q, kernel)?;
    ensure!(v.is_finite(), Domain, "MMD is not finite");
    Ok(v.max(0.0))
}

/// MMD between histogram sets: padded to a common support and normalized.
pub fn histogram_mmd(p: &[Histogram], q: &[Histogram], kernel: Kernel) -> Result<f64> {
    let prob = |s: &[Histogram]| s.iter().map(|h| h.normalize().bins).collect::<Vec<_>>();
    mmd(&prob(p), &prob(q), kernel)
}

/// Node counts per degree over `0..n` (at least one bin).
pub fn degree_histogram(g: &Graph) -> Histogram {
    let mut bins = vec![0.0; g.n().max(1)];
    for v in 0..g.n() {
        bins[g.degree(v)] += 1.0;
    }
    Histogram::counts(bins)
}

/// Local clustering coefficient of every node; zero below degree two.
pub fn clustering_coefficients(g: &Graph) -> Vec<f64> {
    (0..g.n())
        .map(|v| {
            let nb = g.neighbors(v);
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let mut t = 0usize;
            for (a, &i) in nb.iter().enumerate() {
                for &j in &nb[a + 1..] {
                    if g.has_edge(i, j) {
                        t += 1;
                    }
                }
            }
            2.0 * t as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

/// Clustering coefficients binned into `bins` uniform bins on [0, 1].
pub fn clustering_histogram(g: &Graph, bins: usize) -> Result<Histogram> {
    ensure!(bins >= 1, Domain, "clustering histogram needs at least one bin");
    let mut h = vec![0.0; bins];
    for c in clustering_coefficients(g) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    Ok(Histogram::counts(h))
}

/// Number of graphlet orbits tracked (ids 4 to 14).
pub const NUM_ORBITS: usize = 11;
pub const FIRST_ORBIT: usize = 4;

/// Per-node counts of the orbits 4..=14 of the connected 4-node graphlets:
/// path (4 end, 5 middle), star (6 leaf, 7 centre), cycle (8), paw (9 tail,
/// 10 triangle, 11 hub), diamond (12 degree two, 13 degree three), clique (14).
/// Column `k` holds orbit `k + 4`.
pub fn orbit_counts(g: &Graph) -> Array2<f64> {
    let n = g.n();
    let mut adj = vec![vec![false; n]; n];
    for (v, row) in adj.iter_mut().enumerate() {
        for &u in g.neighbors(v) {
            row[u] = true;
        }
    }
    let mut out = Array2::zeros((n, NUM_ORBITS));
    for q in (0..n).combinations(4) {
        let mut deg = [0usize; 4];
        let mut edges = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                if adj[q[a]][q[b]] {
                    deg[a] += 1;
                    deg[b] += 1;
                    edges += 1;
                }
            }
        }
        if edges < 3 || deg.contains(&0) {
            continue;
        }
        for a in 0..4 {
            let orbit = match (edges, deg[a]) {
                (3, _) if deg.contains(&3) => {
                    if deg[a] == 3 {
                        7
                    } else {
                        6
                    }
                }
                (3, 1) => 4,
                (3, _) => 5,
                (4, _) if deg.contains(&3) => match deg[a] {
                    1 => 9,
                    2 => 10,
                    _ => 11,
                },
                (4, _) => 8,
                (5, 2) => 12,
                (5, _) => 13,
                _ => 14,
            };
            out[[q[a], orbit - FIRST_ORBIT]] += 1.0;
        }
    }
    out
}

/// Mean orbit-count vector over the nodes of a graph.
pub fn mean_orbit_vector(g: &Graph) -> Vec<f64> {
    if g.n() == 0 {
        return vec![0.0; NUM_ORBITS];
    }
    orbit_counts(g).mean_axis(ndarray::Axis(0)).expect("nonempty").to_vec()
}

/// Rank-r metric of a quantized complex: with one channel, counts of cells
/// per size over the rank's size range; otherwise counts of cells carrying
/// each channel.
pub fn rank_r_metric(cc: &ComplexTensor, r: usize) -> Result<Histogram> {
    let active = cc.active_nodes();
    match r {
        0 => {
            if cc.f0() == 1 {
                Ok(Histogram::counts(vec![active as f64]))
            } else {
                let bins = (0..cc.f0())
                    .map(|k| (0..active).filter(|&i| cc.x[[i, k]] != 0.0).count() as f64)
                    .collect();
                Ok(Histogram::counts(bins))
            }
        }
        1 => {
            let mut bins = vec![0.0; cc.f1()];
            let mut edges = 0.0;
            for i in 0..active {
                for j in i + 1..active {
                    let mut any = false;
                    for (k, b) in bins.iter_mut().enumerate() {
                        if cc.a[[i, j, k]] != 0.0 {
                            *b += 1.0;
                            any = true;
                        }
                    }
                    edges += f64::from(u8::from(any));
                }
            }
            Ok(Histogram::counts(if cc.f1() == 1 { vec![edges] } else { bins }))
        }
        2 => {
            let layout = cc.layout();
            let c = cc.constraints;
            let mut sizes = vec![0.0; c.d_max - c.d_min + 1];
            let mut channels = vec![0.0; cc.f2()];
            let (m, k, f2) = cc.f.dim();
            for j in 0..k {
                let mut present = false;
                for (ch, count) in channels.iter_mut().enumerate().take(f2) {
                    if (0..m).any(|e| cc.f[[e, j, ch]] != 0.0) {
                        *count += 1.0;
                        present = true;
                    }
                }
                if present {
                    sizes[layout.cell_nodes(j).len() - c.d_min] += 1.0;
                }
            }
            Ok(Histogram::counts(if f2 == 1 { sizes } else { channels }))
        }
        _ => Err(CcsdError::Domain(format!("rank {r} outside 0..=2"))),
    }
}

fn symmetric_eigenvalues(h: &Array2<f64>) -> Result<Vec<f64>> {
    let m = h.nrows();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mat = DMatrix::from_fn(m, m, |i, j| h[[i, j]]);
    let norm = mat.norm();
    let eig = SymmetricEigen::try_new(mat, 1e-14, 10_000).ok_or_else(|| {
        CcsdError::Eigen(format!("{m}x{m} symmetric matrix, Frobenius norm {norm:.3e}, no convergence in 10000 sweeps"))
    })?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Eigenvalues of `F F^T`, descending, with multiplicity (one per edge slot).
pub fn hodge_spectrum(cc: &ComplexTensor) -> Result<Vec<f64>> {
    let h = hodge_laplacian(cc.f.view());
    let m = h.nrows();
    // zero rows only contribute zero eigenvalues
    let live: Vec<usize> = (0..m).filter(|&i| h.row(i).iter().any(|&v| v != 0.0)).collect();
    let sub = Array2::from_shape_fn((live.len(), live.len()), |(a, b)| h[[live[a], live[b]]]);
    let mut spec = symmetric_eigenvalues(&sub)?;
    spec.resize(m, 0.0);
    Ok(spec)
}

/// Rank-1 (node by node, `B B^T` with the channel-summed node-edge incidence)
/// and rank-2 (`F F^T`, edge by edge) Laplacians on the first `n` nodes.
fn laplacians(cc: &ComplexTensor, n: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let padded = cc.to_complex()?.to_tensor_padded(n)?;
    let w = padded.a.sum_axis(ndarray::Axis(2));
    let mut h1 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                h1[[i, j]] = w[[i, j]] * w[[i, j]];
                h1[[i, i]] += w[[i, j]] * w[[i, j]];
            }
        }
    }
    Ok((h1, hodge_laplacian(padded.f.view())))
}

/// Exact Hodge Laplacians distance: per rank, the smallest Frobenius distance
/// over node relabellings (with the induced edge relabelling), averaged over
/// the two ranks. Factorial cost, so refused above `cap` nodes.
pub fn hodge_distance_oracle(a: &ComplexTensor, b: &ComplexTensor, cap: usize) -> Result<f64> {
    let n = a.active_nodes().max(b.active_nodes());
    ensure!(n <= cap, Domain, "exact Hodge distance refused for {n} nodes (cap {cap})");
    ensure!(a.constraints == b.constraints, Shape, "complexes use different dimension constraints");
    let (a1, a2) = laplacians(a, n)?;
    let (b1, b2) = laplacians(b, n)?;
    let m = a2.nrows();
    let (mut best1, mut best2) = (f64::INFINITY, f64::INFINITY);
    for perm in (0..n).permutations(n) {
        let d1: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (a1[[perm[i], perm[j]]] - b1[[i, j]]).powi(2))
            .sum();
        let mut emap = vec![0; m];
        for i in 0..n {
            for j in i + 1..n {
                let (u, v) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
                emap[edge_index(i, j, n)?] = edge_index(u, v, n)?;
            }
        }
        let d2: f64 = (0..m)
            .flat_map(|e| (0..m).map(move |f| (e, f)))
            .map(|(e, f)| (a2[[emap[e], emap[f]]] - b2[[e, f]]).powi(2))
            .sum();
        best1 = best1.min(d1.sqrt());
        best2 = best2.min(d2.sqrt());
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(0.5 * (best1 + best2))
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut dyn RngCore) -> Result<Graph> {
    ensure!((0.0..=1.0).contains(&p), Domain, "edge probability {p} outside [0, 1]");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Kernels and binning used by [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub degree_kernel: Kernel,
    pub cluster_kernel: Kernel,
    pub cluster_bins: usize,
    pub orbit_kernel: Kernel,
    pub rank_kernel: Kernel,
    pub spectrum_kernel: Kernel,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            degree_kernel: Kernel::GaussianEmd { sigma: 1.0 },
            cluster_kernel: Kernel::GaussianEmd { sigma: 1.0 },
            cluster_bins: 100,
            orbit_kernel: Kernel::Gaussian { sigma: 1.0 },
            rank_kernel: Kernel::Gaussian { sigma: 1.0 },
            spectrum_kernel: Kernel::Gaussian { sigma: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub degree_mmd: f64,
    pub cluster_mmd: f64,
    pub orbit_mmd: f64,
    /// Present when nodes carry several feature channels.
    pub rank0_mmd: Option<f64>,
    /// Present when edges carry several feature channels.
    pub rank1_mmd: Option<f64>,
    pub rank2_mmd: f64,
    pub hodge_spectrum_mmd: f64,
    /// Mean of the degree, clustering and orbit values.
    pub graph_average: f64,
    /// Mean of the rank-r and spectrum values.
    pub complex_average: f64,
}

/// Row keys for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportKey {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Header plus one row per report.
    pub fn to_csv(rows: &[(ReportKey, MetricReport)]) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let header = [
            "dataset",
            "model",
            "seed",
            "degree_mmd",
            "cluster_mmd",
            "orbit_mmd",
            "rank0_mmd",
            "rank1_mmd",
            "rank2_mmd",
            "hodge_spectrum_mmd",
            "graph_average",
            "complex_average",
        ];
        let csv_err = |e: csv::Error| CcsdError::Domain(format!("CSV output: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for (k, r) in rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                k.dataset.clone(),
                k.model.clone(),
                k.seed.to_string(),
                r.degree_mmd.to_string(),
                r.cluster_mmd.to_string(),
                r.orbit_mmd.to_string(),
                opt(r.rank0_mmd),
                opt(r.rank1_mmd),
                r.rank2_mmd.to_string(),
                r.hodge_spectrum_mmd.to_string(),
                r.graph_average.to_string(),
                r.complex_average.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CcsdError::Domain(format!("CSV output: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }
}

/// Degree histograms of the active graphs.
pub fn degree_mmd(generated: &[Graph], reference: &[Graph], kernel: Kernel) -> Result<f64> {
    let h = |s: &[Graph]| s.iter().map(degree_histogram).collect::<Vec<_>>();
    histogram_mmd(&h(generated), &h(reference), kernel)
}

/// Compares two sets of quantized complexes.
pub fn evaluate(generated: &[ComplexTensor], reference: &[ComplexTensor], cfg: &MetricConfig) -> Result<MetricReport> {
    ensure!(!generated.is_empty() && !reference.is_empty(), Domain, "evaluation needs two nonempty sets");
    let gg: Vec<Graph> = generated.iter().map(ComplexTensor::graph).collect();
    let rg: Vec<Graph> = reference.iter().map(ComplexTensor::graph).collect();
    let degree_mmd = degree_mmd(&gg, &rg, cfg.degree_kernel)?;
    let clus = |s: &[Graph]| s.iter().map(|g| clustering_histogram(g, cfg.cluster_bins)).collect::<Result<Vec<_>>>();
    let cluster_mmd = histogram_mmd(&clus(&gg)?, &clus(&rg)?, cfg.cluster_kernel)?;
    let orb = |s: &[Graph]| s.iter().map(mean_orbit_vector).collect::<Vec<_>>();
    let orbit_mmd = mmd(&orb(&gg), &orb(&rg), cfg.orbit_kernel)?;

    let rank = |s: &[ComplexTensor], r| s.iter().map(|c| rank_r_metric(c, r).map(|h| h.bins)).collect::<Result<Vec<_>>>();
    let rank_mmd = |r: usize| -> Result<f64> { mmd(&rank(generated, r)?, &rank(reference, r)?, cfg.rank_kernel) };
    let featured = |f: fn(&ComplexTensor) -> usize| generated.iter().chain(reference).any(|c| f(c) > 1);
    let rank0_mmd = if featured(ComplexTensor::f0) { Some(rank_mmd(0)?) } else { None };
    let rank1_mmd = if featured(ComplexTensor::f1) { Some(rank_mmd(1)?) } else { None };
    let rank2_mmd = rank_mmd(2)?;
    let spec = |s: &[ComplexTensor]| s.iter().map(hodge_spectrum).collect::<Result<Vec<_>>>();
    let hodge_spectrum_mmd = mmd(&spec(generated)?, &spec(reference)?, cfg.spectrum_kernel)?;

    let complex: Vec<f64> = [rank0_mmd, rank1_mmd, Some(rank2_mmd), Some(hodge_spectrum_mmd)].into_iter().flatten().collect();
    Ok(MetricReport {
        degree_mmd,
        cluster_mmd,
        orbit_mmd,
        rank0_mmd,
        rank1_mmd,
        rank2_mmd,
        hodge_spectrum_mmd,
        graph_average: (degree_mmd + cluster_mmd + orbit_mmd) / 3.0,
        complex_average: complex.iter().sum::<f64>() / complex.len() as f64,
    })
}
