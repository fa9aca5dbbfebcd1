//! Reference implementations shared by the integration tests. Everything here
//! is deliberately naive and independent of the library's fast paths.
#![allow(dead_code)]

pub mod oracles;

use ccsd::complex::{CombinatorialComplex, DimConstraints, Graph};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_perm(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Random valid complex: random graph plus random cells whose internal pairs
/// are all edges (cliques are always allowed) or arbitrary node sets.
pub fn random_complex(rng: &mut impl Rng, n: usize, c: DimConstraints, f0: usize) -> CombinatorialComplex {
    let g = random_graph(rng, n, 0.5);
    let mut cc = CombinatorialComplex::from_graph(&g, c);
    cc.node_features = Array2::from_shape_fn((n, f0), |_| rng.gen_range(0.5..2.0));
    for e in cc.edges.values_mut() {
        *e = vec![rng.gen_range(1..4) as f64];
    }
    for _ in 0..rng.gen_range(0..6) {
        let size = rng.gen_range(c.d_min..=c.d_max);
        if size > n {
            continue;
        }
        let mut nodes: Vec<usize> = (0..n).collect::<Vec<_>>();
        nodes.shuffle(rng);
        let mut s = nodes[..size].to_vec();
        s.sort_unstable();
        cc.cells.insert(s, vec![1.0]);
    }
    cc
}

pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.ncols();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[[i, l]] * b[[l, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// All unordered pairs (i<j) in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// All subsets of 0..n of the given size, lexicographic.
pub fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize == size {
            out.push((0..n).filter(|&i| bits >> i & 1 == 1).collect());
        }
    }
    out.sort();
    out
}

/// Candidate cells ordered by size then lexicographically.
pub fn candidate_cells(n: usize, c: &DimConstraints) -> Vec<Vec<usize>> {
    (c.d_min..=c.d_max).flat_map(|k| if k <= n { subsets(n, k) } else { vec![] }).collect()
}

/// Whether the node set induces a single cycle through all of its nodes.
pub fn is_induced_cycle(g: &Graph, s: &[usize]) -> bool {
    if s.len() < 3 {
        return false;
    }
    let degs: Vec<usize> = s
        .iter()
        .map(|&u| s.iter().filter(|&&v| v != u && g.has_edge(u, v)).count())
        .collect();
    if degs.iter().any(|&d| d != 2) {
        return false;
    }
    // 2-regular; connected means a single cycle
    let mut seen = vec![s[0]];
    let mut stack = vec![s[0]];
    while let Some(u) = stack.pop() {
        for &v in s {
            if g.has_edge(u, v) && !seen.contains(&v) {
                seen.push(v);
                stack.push(v);
            }
        }
    }
    seen.len() == s.len()
}

/// Node sets reachable as simple paths of exactly k nodes from any source,
/// by trying every ordering of every k-subset.
pub fn path_sets_by_permutation(g: &Graph, sources: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in subsets(g.n(), k) {
        let mut found = false;
        permutations(&s, &mut |order| {
            if !found
                && sources.contains(&order[0])
                && order.windows(2).all(|w| g.has_edge(w[0], w[1]))
            {
                found = true;
            }
        });
        if found {
            out.push(s);
        }
    }
    out
}

pub fn permutations(items: &[usize], f: &mut impl FnMut(&[usize])) {
    fn rec(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            rec(v, k + 1, f);
            v.swap(k, i);
        }
    }
    let mut v = items.to_vec();
    rec(&mut v, 0, f);
}

/// Exact partial scores when every live entry of rank r is an independent
/// N(mu_r, sigma_r²) variable diffused by that rank's SDE.
pub struct GaussianSystem {
    pub sdes: ccsd::sde::RankSdes,
    pub targets: [(f64, f64); 3],
}

impl GaussianSystem {
    /// Mean and variance of the time-t marginal of rank r.
    pub fn marginal(&self, rank: usize, t: f64) -> (f64, f64) {
        let spec = [&self.sdes.x, &self.sdes.a, &self.sdes.f][rank];
        let k = spec.kernel(t).unwrap();
        let (mu, sigma) = self.targets[rank];
        (k.mean_coeff * mu, (k.mean_coeff * sigma).powi(2) + k.std * k.std)
    }

    fn score<D: ndarray::Dimension>(&self, rank: usize, x: &ndarray::Array<f64, D>, t: f64) -> ndarray::Array<f64, D> {
        let (m, v) = self.marginal(rank, t);
        x.mapv(|xi| -(xi - m) / v)
    }

    /// Draws the exact time-t marginal on the live entries.
    pub fn sample_marginal(
        &self,
        template: &ccsd::complex::ComplexTensor,
        mask: &ccsd::sde::LiveMask,
        t: f64,
        rng: &mut impl Rng,
    ) -> ccsd::complex::ComplexTensor {
        use rand_distr::StandardNormal;
        let mut out = template.clone();
        let (m0, v0) = self.marginal(0, t);
        out.x = ndarray::Array2::from_shape_simple_fn(template.x.raw_dim(), || {
            m0 + v0.sqrt() * rng.sample::<f64, _>(StandardNormal)
        }) * &mask.x;
        let (m1, v1) = self.marginal(1, t);
        out.a = (ccsd::sde::symmetric_noise(template.n(), template.f1(), rng) * v1.sqrt() + m1) * &mask.a;
        let (m2, v2) = self.marginal(2, t);
        out.f = ndarray::Array3::from_shape_simple_fn(template.f.raw_dim(), || {
            m2 + v2.sqrt() * rng.sample::<f64, _>(StandardNormal)
        }) * &mask.f;
        out
    }
}

impl ccsd::sde::ScoreSystem for GaussianSystem {
    fn score_x(&mut self, s: &ccsd::complex::ComplexTensor, t: f64) -> ccsd::Result<ndarray::Array2<f64>> {
        Ok(self.score(0, &s.x, t))
    }
    fn score_a(&mut self, s: &ccsd::complex::ComplexTensor, t: f64) -> ccsd::Result<ndarray::Array3<f64>> {
        Ok(self.score(1, &s.a, t))
    }
    fn score_f(&mut self, s: &ccsd::complex::ComplexTensor, t: f64) -> ccsd::Result<ndarray::Array3<f64>> {
        Ok(self.score(2, &s.f, t))
    }
}

/// Mean and standard deviation of the entries selected by a 0/1 mask.
pub fn masked_moments<'a>(
    values: impl IntoIterator<Item = &'a f64>,
    mask: impl IntoIterator<Item = &'a f64>,
) -> (f64, f64, usize) {
    let v: Vec<f64> = values
        .into_iter()
        .zip(mask)
        .filter(|(_, &m)| m != 0.0)
        .map(|(&x, _)| x)
        .collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt(), v.len())
}

/// Euler–Maruyama forward simulation of dx = a(t)x dt + g(t) dW with
/// antithetic path pairs, started from the t=0 kernel. Returns the sample
/// mean and std at each checkpoint time; `substeps` spans [0, max checkpoint].
pub fn forward_mc(
    spec: &ccsd::sde::SdeSpec,
    x0: f64,
    checkpoints: &[f64],
    paths: usize,
    substeps: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    use rand_distr::StandardNormal;
    let mut r = rng(seed);
    let half = paths / 2;
    let sigma0 = spec.kernel(0.0).unwrap().std;
    let mut xs: Vec<f64> = Vec::with_capacity(2 * half);
    for _ in 0..half {
        let z: f64 = r.sample(StandardNormal);
        xs.push(x0 + sigma0 * z);
        xs.push(x0 - sigma0 * z);
    }
    let t_end = checkpoints.iter().cloned().fold(0.0, f64::max);
    let h = t_end / substeps as f64;
    let marks: Vec<usize> = checkpoints.iter().map(|&t| (t / h).round() as usize).collect();
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    };
    let mut out = vec![(0.0, 0.0); checkpoints.len()];
    for k in 0..substeps {
        let t = k as f64 * h;
        let (a, g) = spec.coefficients(t);
        let sd = g * h.sqrt();
        for p in 0..half {
            let z: f64 = r.sample(StandardNormal);
            let (u, w) = (xs[2 * p], xs[2 * p + 1]);
            xs[2 * p] = u + a * u * h + sd * z;
            xs[2 * p + 1] = w + a * w * h - sd * z;
        }
        for (i, &m) in marks.iter().enumerate() {
            if m == k + 1 {
                out[i] = moments(&xs);
            }
        }
    }
    out
}

/// Noisy (unquantized) state: Gaussian node features, symmetric Gaussian
/// adjacency and Gaussian incidence on each cell's own edges, zero outside the
/// first `active` nodes.
pub fn noisy_state(
    rng: &mut impl Rng,
    n: usize,
    active: usize,
    c: DimConstraints,
    dims: (usize, usize, usize),
) -> ccsd::complex::ComplexTensor {
    use rand_distr::StandardNormal;
    let (f0, f1, f2) = dims;
    let mut s = ccsd::complex::ComplexTensor::zeros(n, f0, f1, f2, c);
    for i in 0..n {
        s.node_mask[i] = i < active;
    }
    for i in 0..active {
        for k in 0..f0 {
            s.x[[i, k]] = rng.sample(StandardNormal);
        }
        for j in i + 1..active {
            for k in 0..f1 {
                let v: f64 = rng.sample(StandardNormal);
                s.a[[i, j, k]] = v;
                s.a[[j, i, k]] = v;
            }
        }
    }
    let layout = s.layout();
    for j in 0..layout.num_cells() {
        if !layout.cell_within(j, active) {
            continue;
        }
        for &e in layout.cell_edges(j) {
            for k in 0..f2 {
                s.f[[e, j, k]] = rng.sample(StandardNormal);
            }
        }
    }
    s
}

/// Relabels nodes: node `i` becomes `perm[i]`. Written entry by entry from the
/// definitions of the edge and cell orderings.
pub fn permute_state(s: &ccsd::complex::ComplexTensor, perm: &[usize]) -> ccsd::complex::ComplexTensor {
    let n = s.n();
    let mut out = s.clone();
    let cells = candidate_cells(n, &s.constraints);
    let edge = |i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        pairs(n).iter().position(|&p| p == (a, b)).unwrap()
    };
    for i in 0..n {
        out.x.row_mut(perm[i]).assign(&s.x.row(i));
        for j in 0..n {
            for k in 0..s.f1() {
                out.a[[perm[i], perm[j], k]] = s.a[[i, j, k]];
            }
        }
    }
    out.f.fill(0.0);
    for (ci, cell) in cells.iter().enumerate() {
        let mut image: Vec<usize> = cell.iter().map(|&v| perm[v]).collect();
        image.sort_unstable();
        let cj = cells.iter().position(|c| *c == image).unwrap();
        for (e, &(i, j)) in pairs(n).iter().enumerate() {
            let e2 = edge(perm[i], perm[j]);
            for k in 0..s.f2() {
                out.f[[e2, cj, k]] = s.f[[e, ci, k]];
            }
        }
    }
    out
}

/// Small community dataset (path lift, triangles) padded to its largest graph.
pub fn mini_dataset(count: usize, seed: u64) -> (Vec<ccsd::complex::ComplexTensor>, ccsd::nn::DataDims) {
    use ccsd::data_io::{build_dataset, DatasetSpec};
    use ccsd::lifting::LiftSpec;
    let c = DimConstraints::new(3, 3).unwrap();
    let mut spec = DatasetSpec::community_small(seed);
    spec.count = count;
    spec.node_range = (6, 8);
    spec.feature_dim = 4;
    spec.lift = Some(LiftSpec::path(3, None, c).unwrap());
    let ccs = build_dataset(&spec, c).unwrap();
    let n_max = ccs.iter().map(|cc| cc.n).max().unwrap();
    let data: Vec<_> = ccs.iter().map(|cc| cc.to_tensor_padded(n_max).unwrap()).collect();
    let dims = ccsd::nn::DataDims { n_max, f0: 4, f1: 1, f2: 1, constraints: c };
    (data, dims)
}

/// Three small networks for `dims`.
pub fn mini_models(dims: ccsd::nn::DataDims, seed: u64) -> ccsd::training::ScoreModels {
    use ccsd::nn::*;
    let x = ScoreModelSpec::ScoreX(ScoreXSpec { depth: 2, nhid: 8, final_linears: 2 });
    let attention = AttentionSpec {
        depth: 2,
        nhid: 8,
        adim: 8,
        heads: 2,
        c_init: 2,
        c_hid: 4,
        c_final: 2,
        num_linears: 2,
        final_linears: 2,
    };
    let hodge = HodgeSpec { depth: 1, num_linears: 1, hidden: 4, c_hid: 2, c_final: 2, heads: 2, attn_dim: 4 };
    let a = ScoreModelSpec::ScoreACc { attention, hodge };
    let f = ScoreModelSpec::ScoreF(ScoreFSpec {
        power: 2,
        depth: 1,
        c_hid: 4,
        num_linears: 1,
        final_linears: 2,
        hodge_mask: true,
    });
    ccsd::training::ScoreModels::new(
        ScoreModel::new(x, dims, seed).unwrap(),
        ScoreModel::new(a, dims, seed + 1).unwrap(),
        ScoreModel::new(f, dims, seed + 2).unwrap(),
    )
    .unwrap()
}

pub fn vp_sdes() -> ccsd::sde::RankSdes {
    use ccsd::sde::{RankSdes, SdeSpec};
    RankSdes { x: SdeSpec::vp(0.1, 1.0), a: SdeSpec::vp(0.1, 1.0), f: SdeSpec::vp(0.1, 1.0) }
}
