//! Central-difference gradient checks for every layer and network.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{
    AttLayer, EdgeMasks, Gcn, Gmh, Hccmh, Hcn, HodgeAttLayer, HodgeBaseLayer, HodgeMat, Incidence, Mlp, NodeMasks,
};
use super::{
    AttentionSpec, BaseHodgeSpec, DataDims, HodgeSpec, ParamStore, ScoreFSpec, ScoreModel, ScoreModelSpec,
    ScoreXSpec, SparseMat, Tape, Var,
};
use crate::complex::{ComplexTensor, DimConstraints};
use crate::error::{ensure, Result};

pub const STEP: f64 = 1e-5;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    /// Scalar parameters compared.
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_param: String,
}

/// Compares analytic and central-difference gradients of
/// `sum_k sum(out_k * R_k)` (random projections `R_k`) on one entry of every
/// parameter tensor plus `samples` random entries. The relative error uses
/// `max(|analytic|, |numeric|, 1e-3)` as denominator, since gradients below
/// that are under the difference quotient's roundoff.
pub fn check(
    name: &str,
    store: &mut ParamStore,
    samples: usize,
    seed: u64,
    f: impl Fn(&mut Tape, &ParamStore) -> Result<Vec<Var>>,
) -> Result<GradCheck> {
    ensure!(!store.is_empty(), Domain, "{name}: no parameters to check");
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tape::new();
    let outs = f(&mut t, store)?;
    let projs: Vec<Array2<f64>> = outs
        .iter()
        .map(|&o| {
            let (a, b) = t.value(o).dim();
            Array2::from_shape_simple_fn((a, b), || r.sample(StandardNormal))
        })
        .collect();
    let loss_of = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let outs = f(&mut t, store)?;
        Ok(outs.iter().zip(&projs).map(|(&o, p)| (t.value(o) * p).sum()).sum())
    };
    let mut terms = Vec::new();
    for (&o, p) in outs.iter().zip(&projs) {
        let pv = t.constant(p.clone());
        let prod = t.mul(o, pv)?;
        terms.push(t.sum(prod));
    }
    let cat = t.concat_cols(&terms)?;
    let loss = t.sum(cat);
    let grads = t.backward(loss, store.len())?;

    let ids: Vec<_> = store.ids().collect();
    let mut picks: Vec<(usize, usize)> =
        ids.iter().enumerate().map(|(k, id)| (k, r.gen_range(0..store.value(*id).len()))).collect();
    for _ in 0..samples {
        let k = r.gen_range(0..ids.len());
        picks.push((k, r.gen_range(0..store.value(ids[k]).len())));
    }
    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    for &(k, flat) in &picks {
        let id = ids[k];
        let cols = store.value(id).ncols();
        let (i, j) = (flat / cols, flat % cols);
        let orig = store.value(id)[[i, j]];
        store.value_mut(id)[[i, j]] = orig + STEP;
        let up = loss_of(store);
        store.value_mut(id)[[i, j]] = orig - STEP;
        let down = loss_of(store);
        store.value_mut(id)[[i, j]] = orig;
        let numeric = (up? - down?) / (2.0 * STEP);
        let analytic = grads.get(id).map_or(0.0, |g| g[[i, j]]);
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
        if rel >= worst {
            worst = rel;
            worst_param = format!("{}[{i},{j}]", store.name(id));
        }
    }
    Ok(GradCheck { name: name.to_string(), checked: picks.len(), worst_rel: worst, worst_param })
}

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

fn positive_sym(r: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let g = gaussian(r, n, n);
    let mut s = (&g + &g.t()).mapv(f64::abs);
    for i in 0..n {
        s[[i, i]] = 0.0;
    }
    s
}

fn sym(r: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let g = gaussian(r, n, n);
    let mut s = &g + &g.t();
    for i in 0..n {
        s[[i, i]] = 0.0;
    }
    s
}

/// Random state on `n` nodes: node features, symmetric adjacency and
/// incidence entries on each cell's own edges, scaled to keep attention
/// products well conditioned.
fn random_state(r: &mut ChaCha8Rng, n: usize, dims: &DataDims) -> ComplexTensor {
    let mut s = ComplexTensor::zeros(n, dims.f0, dims.f1, dims.f2, dims.constraints);
    s.x = gaussian(r, n, dims.f0);
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..dims.f1 {
                let v: f64 = r.sample::<f64, _>(StandardNormal).abs() * 0.5;
                s.a[[i, j, k]] = v;
                s.a[[j, i, k]] = v;
            }
        }
    }
    let layout = s.layout();
    for j in 0..layout.num_cells() {
        for &e in layout.cell_edges(j) {
            for k in 0..dims.f2 {
                s.f[[e, j, k]] = 0.5 * r.sample::<f64, _>(StandardNormal);
            }
        }
    }
    s
}

fn edge_masks(s: &ComplexTensor) -> EdgeMasks {
    let (m, k, f2) = s.f.dim();
    let edges = Array2::ones((m, 1));
    let pairs = Array2::ones((m * m, 1));
    let f = s.f.clone().into_shape_with_order((m, k * f2)).expect("contiguous incidence");
    EdgeMasks { m, edges, edge_pairs: pairs, incidence: f.mapv(|v| f64::from(u8::from(v != 0.0))) }
}

/// Small architectures exercising every block of the four networks.
pub fn suite_specs() -> Vec<ScoreModelSpec> {
    let attention = AttentionSpec {
        depth: 2,
        nhid: 5,
        adim: 4,
        heads: 2,
        c_init: 2,
        c_hid: 3,
        c_final: 2,
        num_linears: 2,
        final_linears: 3,
    };
    vec![
        ScoreModelSpec::ScoreX(ScoreXSpec { depth: 2, nhid: 5, final_linears: 3 }),
        ScoreModelSpec::ScoreACc {
            attention: attention.clone(),
            hodge: HodgeSpec { depth: 2, num_linears: 2, hidden: 4, c_hid: 2, c_final: 2, heads: 2, attn_dim: 4 },
        },
        ScoreModelSpec::ScoreABaseCc {
            attention,
            hodge: BaseHodgeSpec { depth: 2, num_linears: 2, hidden: 4, c_hid: 3, c_final: 2 },
        },
        ScoreModelSpec::ScoreF(ScoreFSpec {
            power: 2,
            depth: 2,
            c_hid: 3,
            num_linears: 2,
            final_linears: 3,
            hodge_mask: true,
        }),
    ]
}

/// Checks every layer and the four networks with at least `samples` random
/// scalars each.
pub fn suite(samples: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let n = 6;
    let x = gaussian(&mut r, n, 4);
    let a = positive_sym(&mut r, n);

    let mut store = ParamStore::new(seed);
    let mlp = Mlp::new(&mut store, "mlp", 4, 4, 7, 2)?;
    for id in store.ids().collect::<Vec<_>>() {
        let (p, q) = store.value(id).dim();
        *store.value_mut(id) = gaussian(&mut r, p, q) * 0.5;
    }
    out.push(check("mlp", &mut store, samples, seed + 1, |t, s| {
        let xv = t.constant(x.clone());
        Ok(vec![mlp.forward(t, s, xv)?])
    })?);

    let mut store = ParamStore::new(seed + 2);
    let gcn = Gcn::new(&mut store, "gcn", 4, 3);
    out.push(check("gcn", &mut store, samples, seed + 3, |t, s| {
        let (xv, av) = (t.constant(x.clone()), t.constant(a.clone()));
        Ok(vec![gcn.forward(t, s, xv, av)?])
    })?);

    let mut store = ParamStore::new(seed + 4);
    let gmh = Gmh::new(&mut store, "gmh", 4, 4, 3, 2)?;
    out.push(check("gmh", &mut store, samples, seed + 5, |t, s| {
        let (xv, av) = (t.constant(x.clone()), t.constant(a.clone()));
        let (v, att) = gmh.forward(t, s, xv, av)?;
        Ok(vec![v, att])
    })?);

    let adjs = [sym(&mut r, n), sym(&mut r, n)];
    let x3 = gaussian(&mut r, n, 3);
    let masks = NodeMasks::new(&[true, true, true, true, true, false]);
    let mut store = ParamStore::new(seed + 6);
    let l1 = AttLayer::new(&mut store, "att1", 2, 2, 3, 3, 4, 5, 2)?;
    let l2 = AttLayer::new(&mut store, "att2", 2, 3, 2, 5, 4, 5, 2)?;
    out.push(check("att", &mut store, samples, seed + 7, |t, s| {
        let xv = t.constant(x3.clone());
        let av: Vec<Var> = adjs.iter().map(|a| t.constant(a.clone())).collect();
        let (x1, a1) = l1.forward(t, s, xv, &av, &masks)?;
        let (x2, a2) = l2.forward(t, s, x1, &a1, &masks)?;
        let mut v = vec![x2];
        v.extend(a2);
        Ok(v)
    })?);

    let dims5 = DataDims { n_max: 5, f0: 2, f1: 1, f2: 1, constraints: DimConstraints::new(3, 3)? };
    let state = random_state(&mut r, 5, &dims5);
    let (m, k, _) = state.f.dim();
    let f = state.f.clone().into_shape_with_order((m, k)).expect("contiguous incidence");
    let diag = gaussian(&mut r, m, 1).mapv(f64::abs);
    let diag2 = gaussian(&mut r, m, 1).mapv(f64::abs);
    let dense = positive_sym(&mut r, m);
    let em = edge_masks(&state);
    let sparse = Incidence::Sparse(Arc::new(SparseMat::from_dense(&f)));

    let mut store = ParamStore::new(seed + 8);
    let hcn = Hcn::new(&mut store, "hcn", k, 3);
    out.push(check("hcn", &mut store, samples, seed + 9, |t, st| {
        let fv = Incidence::Dense(t.constant(f.clone()));
        let d = t.constant(diag.clone());
        let y1 = hcn.forward(t, st, HodgeMat::Diagonal(d), &fv)?;
        let h = t.constant(dense.clone());
        let y2 = hcn.forward(t, st, HodgeMat::Dense(h), &fv)?;
        let y3 = hcn.forward(t, st, HodgeMat::Dense(h), &sparse)?;
        Ok(vec![y1, y2, y3])
    })?);

    let mut store = ParamStore::new(seed + 10);
    let hccmh = Hccmh::new(&mut store, "hccmh", k, 4, 2)?;
    out.push(check("hccmh", &mut store, samples, seed + 11, |t, st| {
        let fv = Incidence::Dense(t.constant(f.clone()));
        let h = t.constant(dense.clone());
        let (value, full) = hccmh.forward(t, st, HodgeMat::Dense(h), &fv, true)?;
        let mut v = vec![full];
        v.extend(value);
        Ok(v)
    })?);

    let mut store = ParamStore::new(seed + 12);
    let first = HodgeAttLayer::new(&mut store, "hatt0", 2, 4, 2, 3, k, 4, 2, false)?;
    let last = HodgeAttLayer::new(&mut store, "hatt1", 2, 4, 3, 2, k, 4, 2, true)?;
    // dense Hodge outputs need row sums away from zero for the degree normalization
    if let Some(id) = store.id("hatt0.mlp_h.1.b") {
        store.value_mut(id).fill(2.0);
    }
    out.push(check("hodge_att", &mut store, samples, seed + 13, |t, st| {
        let hs = [HodgeMat::Diagonal(t.constant(diag.clone())), HodgeMat::Diagonal(t.constant(diag2.clone()))];
        let (h1, f1) = first.forward(t, st, &hs, &sparse, &em)?;
        let f1 = f1.expect("inner block returns its incidence");
        let (h2, _) = last.forward(t, st, &h1, &Incidence::Dense(f1), &em)?;
        h2.iter().map(|h| h.diagonal(t)).collect()
    })?);

    let mut store = ParamStore::new(seed + 14);
    let base = HodgeBaseLayer::new(&mut store, "hbase", 2, 4, 2, 3)?;
    out.push(check("hodge_base", &mut store, samples, seed + 15, |t, st| {
        let ds = [t.constant(diag.clone()), t.constant(diag2.clone())];
        base.forward(t, st, &ds, &em.edges)
    })?);

    let dims6 = DataDims { n_max: 6, f0: 3, f1: 1, f2: 1, constraints: DimConstraints::new(3, 3)? };
    let state = random_state(&mut r, 6, &dims6);
    let names = ["score_x", "score_a_cc", "score_a_base_cc", "score_f"];
    for (i, spec) in suite_specs().into_iter().enumerate() {
        let model = ScoreModel::new(spec, dims6, seed + 20 + i as u64)?;
        let mut store = model.store.clone();
        if let Some(id) = store.id("a.hodge0.mlp_h.1.b") {
            store.value_mut(id).fill(2.0);
        }
        out.push(check(names[i], &mut store, samples, seed + 30 + i as u64, |t, st| {
            Ok(vec![model.forward(t, st, &state)?])
        })?);
    }
    Ok(out)
}
