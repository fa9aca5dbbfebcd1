//! Generation and imputation with trained networks.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Zip};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::complex::{quantize_adjacency, quantize_incidence, AdjacencyQuantization, ComplexTensor, SupportRule};
use crate::error::{ensure, Result};
use crate::nn::{DataDims, ParamStore};
use crate::sde::{solve_reverse_batch, symmetric_noise, Conditioner, LiveMask, RankSdes, SamplerConfig, ScoreSystem};
use crate::training::ScoreModels;

/// Histogram of node counts observed in a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNodeDist {
    counts: BTreeMap<usize, usize>,
}

impl EmpiricalNodeDist {
    pub fn from_counts(sizes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for n in sizes {
            ensure!(n >= 1, Domain, "node count must be >= 1");
            *counts.entry(n).or_insert(0) += 1;
        }
        ensure!(!counts.is_empty(), Domain, "node-count distribution needs at least one graph");
        Ok(EmpiricalNodeDist { counts })
    }

    /// Active node counts of padded training tensors.
    pub fn from_tensors(data: &[ComplexTensor]) -> Result<Self> {
        Self::from_counts(data.iter().map(|d| d.active_nodes()))
    }

    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        let total: usize = self.counts.values().sum();
        self.counts.iter().map(|(&n, &c)| (n, c as f64 / total as f64)).collect()
    }

    pub fn max_n(&self) -> usize {
        *self.counts.keys().next_back().expect("nonempty")
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let total: usize = self.counts.values().sum();
        let mut u = rng.gen_range(0..total);
        for (&n, &c) in &self.counts {
            if u < c {
                return n;
            }
            u -= c;
        }
        unreachable!("draw below the total count")
    }
}

/// How raw node features are turned into output features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeQuantization {
    /// One-hot of the largest entry per node.
    #[default]
    OneHot,
    /// Raw values.
    Raw,
}

/// Everything the generation step needs besides the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub sampler: SamplerConfig,
    pub adjacency: AdjacencyQuantization,
    pub support: SupportRule,
    #[serde(default = "default_threshold")]
    pub incidence_threshold: f64,
    #[serde(default)]
    pub node_features: NodeQuantization,
    /// Elements integrated together; the Langevin step size is shared within a chunk.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_chunk() -> usize {
    16
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        ensure!(self.chunk >= 1, Config, "generation chunk must be >= 1");
        ensure!(self.incidence_threshold.is_finite(), Config, "incidence threshold must be finite");
        Ok(())
    }
}

/// Scores `-net/std_r(t)` of three trained noise-prediction networks.
pub struct NetworkScores<'a> {
    pub models: &'a ScoreModels,
    pub stores: [&'a ParamStore; 3],
    pub sdes: &'a RankSdes,
}

impl<'a> NetworkScores<'a> {
    pub fn new(models: &'a ScoreModels, stores: [&'a ParamStore; 3], sdes: &'a RankSdes) -> Self {
        NetworkScores { models, stores, sdes }
    }
}

impl ScoreSystem for NetworkScores<'_> {
    fn score_x(&mut self, state: &ComplexTensor, t: f64) -> Result<Array2<f64>> {
        let std = self.sdes.x.kernel(t)?.std;
        Ok(self.models.x.predict_x(self.stores[0], state)? / -std)
    }

    fn score_a(&mut self, state: &ComplexTensor, t: f64) -> Result<Array3<f64>> {
        let std = self.sdes.a.kernel(t)?.std;
        Ok(self.models.a.predict_tensor(self.stores[1], state)? / -std)
    }

    fn score_f(&mut self, state: &ComplexTensor, t: f64) -> Result<Array3<f64>> {
        let std = self.sdes.f.kernel(t)?.std;
        Ok(self.models.f.predict_tensor(self.stores[2], state)? / -std)
    }
}

/// Generator of element `b`: stream 0 draws node counts, stream `b + 1`
/// drives element `b`.
fn element_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(b as u64 + 1);
    r
}

/// Empty tensor of the networks' size with the first `n` nodes active.
pub fn template(dims: &DataDims, n: usize) -> Result<ComplexTensor> {
    ensure!(n >= 1 && n <= dims.n_max, Domain, "node count {n} outside [1, {}]", dims.n_max);
    let mut t = ComplexTensor::zeros(dims.n_max, dims.f0, dims.f1, dims.f2, dims.constraints);
    for (i, m) in t.node_mask.iter_mut().enumerate() {
        *m = i < n;
    }
    Ok(t)
}

/// Integrates the reverse system from priors with the given node counts and
/// returns the raw (unquantized) results.
pub fn sample_raw(
    system: &mut dyn ScoreSystem,
    sdes: &RankSdes,
    cfg: &GenerationConfig,
    dims: &DataDims,
    hodge_mask: bool,
    sizes: &[usize],
) -> Result<Vec<ComplexTensor>> {
    cfg.validate()?;
    let seed = cfg.sampler.seed;
    let mut out = Vec::with_capacity(sizes.len());
    for (c, chunk) in sizes.chunks(cfg.chunk).enumerate() {
        let base = c * cfg.chunk;
        let mut rngs: Vec<ChaCha8Rng> = (0..chunk.len()).map(|i| element_rng(seed, base + i)).collect();
        let mut priors = Vec::with_capacity(chunk.len());
        let mut masks = Vec::with_capacity(chunk.len());
        for (i, &n) in chunk.iter().enumerate() {
            let tpl = template(dims, n)?;
            let mask = LiveMask::new(&tpl, hodge_mask);
            priors.push(sdes.sample_prior(&tpl, &mask, &mut rngs[i]));
            masks.push(mask);
        }
        out.extend(solve_reverse_batch(system, &priors, &masks, &cfg.sampler, sdes, None, &mut rngs)?);
    }
    Ok(out)
}

/// Quantized samples with the given node counts.
pub fn sample_with_sizes(
    system: &mut dyn ScoreSystem,
    sdes: &RankSdes,
    cfg: &GenerationConfig,
    dims: &DataDims,
    hodge_mask: bool,
    sizes: &[usize],
) -> Result<Vec<ComplexTensor>> {
    sample_raw(system, sdes, cfg, dims, hodge_mask, sizes)?
        .iter()
        .map(|raw| quantize_state(raw, cfg))
        .collect()
}

/// Draws `batch` node counts from `nodes`, then samples and quantizes.
pub fn sample(
    models: &ScoreModels,
    stores: [&ParamStore; 3],
    sdes: &RankSdes,
    cfg: &GenerationConfig,
    nodes: &EmpiricalNodeDist,
    batch: usize,
) -> Result<Vec<ComplexTensor>> {
    ensure!(batch >= 1, Domain, "batch must be >= 1");
    let dims = models.x.dims;
    ensure!(
        nodes.max_n() <= dims.n_max,
        Shape,
        "node distribution reaches {} nodes, networks hold {}",
        nodes.max_n(),
        dims.n_max
    );
    let sizes = draw_sizes(nodes, cfg.sampler.seed, batch);
    let mut system = NetworkScores::new(models, stores, sdes);
    sample_with_sizes(&mut system, sdes, cfg, &dims, models.hodge_mask(), &sizes)
}

/// Node counts used by [`sample`] for a given seed.
pub fn draw_sizes(nodes: &EmpiricalNodeDist, seed: u64, batch: usize) -> Vec<usize> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..batch).map(|_| nodes.sample(&mut r)).collect()
}

/// Quantizes a raw state: adjacency by `cfg.adjacency`, incidence by the
/// dataset's support rule, node features per `cfg.node_features`; padded
/// entries are zero. The result satisfies all quantized-state invariants.
pub fn quantize_state(raw: &ComplexTensor, cfg: &GenerationConfig) -> Result<ComplexTensor> {
    let mut out = raw.clone();
    let active = raw.active_nodes();
    let n = raw.n();
    let mut a = quantize_adjacency(raw.a.view(), cfg.adjacency);
    for i in 0..n {
        for j in 0..n {
            if i >= active || j >= active {
                a.slice_mut(ndarray::s![i, j, ..]).fill(0.0);
            }
        }
    }
    let layout = raw.layout();
    let mut f_raw = raw.f.clone();
    for j in 0..layout.num_cells() {
        if !layout.cell_within(j, active) {
            f_raw.slice_mut(ndarray::s![.., j, ..]).fill(0.0);
        }
    }
    out.f = quantize_incidence(f_raw.view(), a.view(), &layout, cfg.incidence_threshold, cfg.support)?;
    out.a = a;
    for i in 0..n {
        let mut row = out.x.row_mut(i);
        if i >= active {
            row.fill(0.0);
        } else if cfg.node_features == NodeQuantization::OneHot {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc })
                .0;
            row.fill(0.0);
            row[best] = 1.0;
        }
    }
    out.validate_quantized()?;
    Ok(out)
}

/// Entries whose values are given during imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMask {
    pub x: Array2<bool>,
    pub a: Array3<bool>,
    pub f: Array3<bool>,
}

impl KnownMask {
    pub fn none(state: &ComplexTensor) -> Self {
        KnownMask {
            x: Array2::from_elem(state.x.raw_dim(), false),
            a: Array3::from_elem(state.a.raw_dim(), false),
            f: Array3::from_elem(state.f.raw_dim(), false),
        }
    }

    pub fn all(state: &ComplexTensor) -> Self {
        KnownMask {
            x: Array2::from_elem(state.x.raw_dim(), true),
            a: Array3::from_elem(state.a.raw_dim(), true),
            f: Array3::from_elem(state.f.raw_dim(), true),
        }
    }

    /// Features of `nodes`, adjacency among them and cells made of them.
    pub fn nodes(state: &ComplexTensor, nodes: &[usize]) -> Result<Self> {
        let n = state.n();
        ensure!(nodes.iter().all(|&v| v < n), Domain, "known node outside [0, {n})");
        let mut known = vec![false; n];
        for &v in nodes {
            known[v] = true;
        }
        let mut m = Self::none(state);
        for i in 0..n {
            m.x.row_mut(i).fill(known[i]);
            for j in 0..n {
                m.a.slice_mut(ndarray::s![i, j, ..]).fill(known[i] && known[j]);
            }
        }
        let layout = state.layout();
        for j in 0..layout.num_cells() {
            if layout.cell_nodes(j).iter().all(|&v| known[v]) {
                m.f.slice_mut(ndarray::s![.., j, ..]).fill(true);
            }
        }
        Ok(m)
    }

    fn check(&self, state: &ComplexTensor) -> Result<()> {
        ensure!(
            self.x.dim() == state.x.dim() && self.a.dim() == state.a.dim() && self.f.dim() == state.f.dim(),
            Shape,
            "known mask shapes {:?}/{:?}/{:?} do not match the observed tensors {:?}/{:?}/{:?}",
            self.x.dim(),
            self.a.dim(),
            self.f.dim(),
            state.x.dim(),
            state.a.dim(),
            state.f.dim()
        );
        let n = state.n();
        for i in 0..n {
            for j in 0..n {
                for c in 0..state.f1() {
                    ensure!(self.a[[i, j, c]] == self.a[[j, i, c]], Shape, "known adjacency mask not symmetric");
                }
            }
        }
        let (m, k, f2) = state.f.dim();
        for j in 0..k {
            let first = self.f[[0, j, 0]];
            ensure!(
                (0..m).all(|e| (0..f2).all(|c| self.f[[e, j, c]] == first)),
                Shape,
                "known incidence mask must cover whole cells (column {j} is mixed)"
            );
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        !self.x.iter().chain(self.a.iter()).chain(self.f.iter()).any(|&k| k)
    }
}

/// Overwrites known entries with a draw from the forward kernel around the
/// observed values at the current time.
struct ReplaceKnown<'a> {
    observed: &'a ComplexTensor,
    known: &'a KnownMask,
    live: &'a LiveMask,
    sdes: &'a RankSdes,
    active: bool,
}

impl Conditioner for ReplaceKnown<'_> {
    fn condition(&mut self, _: usize, state: &mut ComplexTensor, t: f64, rng: &mut dyn RngCore) -> Result<()> {
        if !self.active {
            return Ok(());
        }
        let kx = self.sdes.x.kernel(t)?;
        let ka = self.sdes.a.kernel(t)?;
        let kf = self.sdes.f.kernel(t)?;
        Zip::from(&mut state.x)
            .and(&self.observed.x)
            .and(&self.known.x)
            .and(&self.live.x)
            .for_each(|s, &y, &k, &l| {
                if k {
                    let z: f64 = rng.sample(StandardNormal);
                    *s = l * (kx.mean_coeff * y + kx.std * z);
                }
            });
        let za = symmetric_noise(state.n(), state.f1(), rng);
        Zip::from(&mut state.a)
            .and(&self.observed.a)
            .and(&self.known.a)
            .and(&self.live.a)
            .and(&za)
            .for_each(|s, &y, &k, &l, &z| {
                if k {
                    *s = l * (ka.mean_coeff * y + ka.std * z);
                }
            });
        Zip::from(&mut state.f)
            .and(&self.observed.f)
            .and(&self.known.f)
            .and(&self.live.f)
            .for_each(|s, &y, &k, &l| {
                if k && l != 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    *s = kf.mean_coeff * y + kf.std * z;
                }
            });
        Ok(())
    }
}

fn overwrite_known(state: &mut ComplexTensor, observed: &ComplexTensor, known: &KnownMask) {
    Zip::from(&mut state.x).and(&observed.x).and(&known.x).for_each(|s, &y, &k| {
        if k {
            *s = y;
        }
    });
    Zip::from(&mut state.a).and(&observed.a).and(&known.a).for_each(|s, &y, &k| {
        if k {
            *s = y;
        }
    });
    Zip::from(&mut state.f).and(&observed.f).and(&known.f).for_each(|s, &y, &k| {
        if k {
            *s = y;
        }
    });
}

/// Raw imputation: unknown entries follow the reverse system while known ones
/// are resampled from the forward kernel around `observed` after every step;
/// the returned state holds the observed values on known entries. The node
/// count is that of `observed`. With nothing known this is exactly
/// [`sample_raw`] for that node count.
pub fn impute_raw(
    system: &mut dyn ScoreSystem,
    sdes: &RankSdes,
    cfg: &GenerationConfig,
    hodge_mask: bool,
    observed: &ComplexTensor,
    known: &KnownMask,
) -> Result<ComplexTensor> {
    cfg.validate()?;
    observed.check_shapes()?;
    known.check(observed)?;
    let mut tpl = observed.clone();
    tpl.x.fill(0.0);
    tpl.a.fill(0.0);
    tpl.f.fill(0.0);
    let live = LiveMask::new(&tpl, hodge_mask);
    let mut rngs = vec![element_rng(cfg.sampler.seed, 0)];
    let prior = sdes.sample_prior(&tpl, &live, &mut rngs[0]);
    let mut cond = ReplaceKnown {
        observed,
        known,
        live: &live,
        sdes,
        active: !known.is_empty(),
    };
    let mut out = solve_reverse_batch(
        system,
        std::slice::from_ref(&prior),
        std::slice::from_ref(&live),
        &cfg.sampler,
        sdes,
        Some(&mut cond),
        &mut rngs,
    )?
    .pop()
    .expect("batch of one");
    overwrite_known(&mut out, observed, known);
    Ok(out)
}

/// Imputes with trained networks and quantizes. Known entries of the output
/// equal `observed`.
pub fn impute(
    models: &ScoreModels,
    stores: [&ParamStore; 3],
    sdes: &RankSdes,
    cfg: &GenerationConfig,
    observed: &ComplexTensor,
    known: &KnownMask,
) -> Result<ComplexTensor> {
    let dims = models.x.dims;
    ensure!(
        observed.n() == dims.n_max && observed.f0() == dims.f0 && observed.f1() == dims.f1 && observed.f2() == dims.f2,
        Shape,
        "observed complex does not match the networks' dimensions"
    );
    let mut system = NetworkScores::new(models, stores, sdes);
    let raw = impute_raw(&mut system, sdes, cfg, models.hodge_mask(), observed, known)?;
    let mut out = quantize_state(&raw, cfg)?;
    overwrite_known(&mut out, observed, known);
    Ok(out)
}
