//! The four score networks.
//!
//! Every network returns a flat `[rows, channels]` output: `[n, f0]` for node
//! features, `[n * n, f1]` for adjacency and `[C(n,2) * K, f2]` for incidence,
//! each the row-major flattening of the matching tensor.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};

use super::layers::{
    split_channels, stack_channels, AttLayer, EdgeMasks, Gcn, HodgeAttLayer, HodgeBaseLayer, HodgeMat, Incidence,
    Mlp, NodeMasks,
};
use super::params::ParamStore;
use super::spec::{AttentionSpec, BaseHodgeSpec, DataDims, HodgeSpec, ScoreFSpec, ScoreModelSpec, ScoreXSpec};
use super::tape::{SparseMat, Tape, Var};
use crate::complex::{cell_count, edge_index, num_edges, ComplexTensor, Layout};
use crate::error::{ensure, Result};

/// Flattens `[a, b, c]` to `[a * b, c]`.
pub fn flatten3(t: &Array3<f64>) -> Array2<f64> {
    let (a, b, c) = t.dim();
    t.as_standard_layout()
        .into_owned()
        .into_shape_with_order((a * b, c))
        .expect("contiguous reshape")
}

/// Inverse of [`flatten3`].
pub fn unflatten3(t: Array2<f64>, a: usize, b: usize) -> Result<Array3<f64>> {
    let c = t.ncols();
    ensure!(t.nrows() == a * b, Shape, "{} rows cannot form [{a}, {b}, {c}]", t.nrows());
    Ok(t.as_standard_layout()
        .into_owned()
        .into_shape_with_order((a, b, c))
        .expect("contiguous reshape"))
}

fn channel_sum(a: &Array3<f64>) -> Array2<f64> {
    a.sum_axis(Axis(2))
}

/// Rows of the flattened incidence `(e * K + j)` allowed to carry mass.
pub fn live_incidence_rows(n: usize, active: usize, layout: &Layout, hodge_mask: bool) -> Vec<usize> {
    let k = layout.num_cells();
    let mut rows = Vec::new();
    if hodge_mask {
        for j in 0..k {
            if layout.cell_within(j, active) {
                rows.extend(layout.cell_edges(j).iter().map(|&e| e * k + j));
            }
        }
    } else {
        let cells: Vec<usize> = (0..k).filter(|&j| layout.cell_within(j, active)).collect();
        for i in 0..active {
            for jn in i + 1..active {
                let e = edge_index(i, jn, n).expect("edge in range");
                rows.extend(cells.iter().map(|&j| e * k + j));
            }
        }
    }
    rows.sort_unstable();
    rows
}

#[derive(Debug, Clone)]
pub struct ScoreNetworkX {
    gcns: Vec<Gcn>,
    final_mlp: Mlp,
}

impl ScoreNetworkX {
    fn new(store: &mut ParamStore, s: &ScoreXSpec, dims: &DataDims) -> Result<Self> {
        let gcns = (0..s.depth)
            .map(|l| Gcn::new(store, &format!("x.gcn{l}"), if l == 0 { dims.f0 } else { s.nhid }, s.nhid))
            .collect();
        let fdim = dims.f0 + s.depth * s.nhid;
        let final_mlp = Mlp::new(store, "x.final", s.final_linears, fdim, 2 * fdim, dims.f0)?;
        Ok(ScoreNetworkX { gcns, final_mlp })
    }

    fn forward(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<Var> {
        let masks = NodeMasks::new(&state.node_mask);
        let x = t.constant(state.x.clone());
        let a = t.constant(channel_sum(&state.a));
        let rows = t.constant(masks.rows.clone());
        let mut hidden = vec![x];
        let mut h = x;
        for g in &self.gcns {
            h = g.forward(t, store, h, a)?;
            h = t.tanh(h);
            h = t.scale_rows(h, rows)?;
            hidden.push(h);
        }
        let cat = t.concat_cols(&hidden)?;
        let out = self.final_mlp.forward(t, store, cat)?;
        t.scale_rows(out, rows)
    }
}

/// Attention track shared by both adjacency networks.
#[derive(Debug, Clone)]
struct AttentionTrack {
    c_init: usize,
    layers: Vec<AttLayer>,
}

impl AttentionTrack {
    fn new(store: &mut ParamStore, s: &AttentionSpec, dims: &DataDims) -> Result<Self> {
        let layers = (0..s.depth)
            .map(|l| {
                let c_in = if l == 0 { s.c_init } else { s.c_hid };
                let c_out = if l + 1 == s.depth { s.c_final } else { s.c_hid };
                let fan_in = if l == 0 { dims.f0 } else { s.nhid };
                AttLayer::new(store, &format!("a.att{l}"), s.num_linears, c_in, c_out, fan_in, s.adim, s.nhid, s.heads)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttentionTrack { c_init: s.c_init, layers })
    }

    fn channels(s: &AttentionSpec) -> usize {
        s.c_init + s.c_hid * (s.depth - 1) + s.c_final
    }

    /// Adjacency powers `A^1 .. A^c_init` of the channel-summed adjacency.
    fn powers(&self, state: &ComplexTensor) -> Vec<Array2<f64>> {
        let a = channel_sum(&state.a);
        let mut out = vec![a.clone()];
        for _ in 1..self.c_init {
            let next = out.last().expect("nonempty").dot(&a);
            out.push(next);
        }
        out
    }

    /// Every adjacency channel of the track, `[n * n, channels]`.
    fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        state: &ComplexTensor,
        powers: &[Array2<f64>],
        masks: &NodeMasks,
    ) -> Result<Var> {
        let mut x = t.constant(state.x.clone());
        let mut adjs: Vec<Var> = powers.iter().map(|p| t.constant(p.clone())).collect();
        let mut all = vec![stack_channels(t, &adjs)?];
        for layer in &self.layers {
            let (xo, ao) = layer.forward(t, store, x, &adjs, masks)?;
            x = xo;
            adjs = ao;
            all.push(stack_channels(t, &adjs)?);
        }
        t.concat_cols(&all)
    }
}

/// Diagonal `[m, 1]` of the Hodge dual of each matrix.
fn hodge_diagonals(mats: &[Array2<f64>]) -> Vec<Array2<f64>> {
    mats.iter()
        .map(|a| {
            let n = a.nrows();
            let mut d = Array2::zeros((num_edges(n), 1));
            let mut e = 0;
            for i in 0..n {
                for j in i + 1..n {
                    d[[e, 0]] = a[[i, j]];
                    e += 1;
                }
            }
            d
        })
        .collect()
}

/// Reads `[m, c]` Hodge diagonals back into `[n * n, c]` adjacency channels.
fn inverse_dual(t: &mut Tape, diags: Var, n: usize) -> Result<Var> {
    let mut idx = Vec::with_capacity(n * n);
    let mut off = Array2::zeros((n * n, 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                idx.push(0);
            } else {
                idx.push(edge_index(i.min(j), i.max(j), n)?);
                off[[i * n + j, 0]] = 1.0;
            }
        }
    }
    let g = t.gather_rows(diags, &idx)?;
    let off = t.constant(off);
    t.scale_rows(g, off)
}

/// Symmetrizes each channel of `[n * n, c]` and zeroes the diagonal and padded pairs.
fn finish_adjacency(t: &mut Tape, out: Var, masks: &NodeMasks) -> Result<Var> {
    let n = masks.n;
    let chans = split_channels(t, out, n)?;
    let mut sym = Vec::with_capacity(chans.len());
    for c in chans {
        let ct = t.transpose(c);
        let s = t.add(c, ct)?;
        sym.push(t.scale(s, 0.5));
    }
    let stacked = stack_channels(t, &sym)?;
    let mut live = masks.pairs.clone();
    for i in 0..n {
        live[[i * n + i, 0]] = 0.0;
    }
    let live = t.constant(live);
    t.scale_rows(stacked, live)
}

fn edge_masks(n: usize, active: usize, layout: &Layout, f2: usize, dense: bool) -> EdgeMasks {
    let m = num_edges(n);
    let mut edges = Array2::zeros((m, 1));
    for i in 0..active {
        for j in i + 1..active {
            edges[[edge_index(i, j, n).expect("edge in range"), 0]] = 1.0;
        }
    }
    let (edge_pairs, incidence) = if dense {
        let pairs = Array2::from_shape_fn((m * m, 1), |(r, _)| edges[[r / m, 0]] * edges[[r % m, 0]]);
        let k = layout.num_cells();
        let mut inc = Array2::zeros((m, k * f2));
        for r in live_incidence_rows(n, active, layout, true) {
            let (e, j) = (r / k, r % k);
            for c in 0..f2 {
                inc[[e, j * f2 + c]] = 1.0;
            }
        }
        (pairs, inc)
    } else {
        (Array2::zeros((0, 1)), Array2::zeros((0, 0)))
    };
    EdgeMasks {
        m,
        edges,
        edge_pairs,
        incidence,
    }
}

#[derive(Debug, Clone)]
pub struct ScoreNetworkACc {
    track: AttentionTrack,
    hodge: Vec<HodgeAttLayer>,
    final_mlp: Mlp,
}

impl ScoreNetworkACc {
    fn new(store: &mut ParamStore, att: &AttentionSpec, h: &HodgeSpec, dims: &DataDims) -> Result<Self> {
        let track = AttentionTrack::new(store, att, dims)?;
        let width = cell_count(dims.n_max, &dims.constraints) as usize * dims.f2;
        let hodge = (0..h.depth)
            .map(|l| {
                let c_in = if l == 0 { att.c_init } else { h.c_hid };
                let last = l + 1 == h.depth;
                let c_out = if last { h.c_final } else { h.c_hid };
                HodgeAttLayer::new(
                    store,
                    &format!("a.hodge{l}"),
                    h.num_linears,
                    h.hidden,
                    c_in,
                    c_out,
                    width,
                    h.attn_dim,
                    h.heads,
                    last,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let hodge_channels = if h.depth == 0 { 0 } else { h.c_hid * (h.depth - 1) + h.c_final };
        let fdim = AttentionTrack::channels(att) + hodge_channels;
        let final_mlp = Mlp::new(store, "a.final", att.final_linears, fdim, 2 * fdim, dims.f1)?;
        Ok(ScoreNetworkACc { track, hodge, final_mlp })
    }

    fn forward(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<Var> {
        let n = state.n();
        let masks = NodeMasks::new(&state.node_mask);
        let powers = self.track.powers(state);
        let mut channels = vec![self.track.forward(t, store, state, &powers, &masks)?];
        if !self.hodge.is_empty() {
            let layout = state.layout();
            let dense = self.hodge.len() > 1;
            let em = edge_masks(n, state.active_nodes(), &layout, state.f2(), dense);
            let (m, k, f2) = state.f.dim();
            let std = state.f.as_standard_layout();
            let flat: ArrayView2<f64> = std.view().into_shape_with_order((m, k * f2)).expect("contiguous reshape");
            let mut f = Incidence::Sparse(Arc::new(SparseMat::from_view(flat)));
            let mut hs: Vec<HodgeMat> = hodge_diagonals(&powers)
                .into_iter()
                .map(|d| HodgeMat::Diagonal(t.constant(d)))
                .collect();
            for layer in &self.hodge {
                let (ho, fo) = layer.forward(t, store, &hs, &f, &em)?;
                let diags = ho.iter().map(|h| h.diagonal(t)).collect::<Result<Vec<_>>>()?;
                let cat = t.concat_cols(&diags)?;
                channels.push(inverse_dual(t, cat, n)?);
                hs = ho;
                if let Some(fo) = fo {
                    f = Incidence::Dense(fo);
                }
            }
        }
        let cat = t.concat_cols(&channels)?;
        let out = self.final_mlp.forward(t, store, cat)?;
        finish_adjacency(t, out, &masks)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreNetworkABaseCc {
    track: AttentionTrack,
    hodge: Vec<HodgeBaseLayer>,
    final_mlp: Mlp,
}

impl ScoreNetworkABaseCc {
    fn new(store: &mut ParamStore, att: &AttentionSpec, h: &BaseHodgeSpec, dims: &DataDims) -> Result<Self> {
        let track = AttentionTrack::new(store, att, dims)?;
        let hodge = (0..h.depth)
            .map(|l| {
                let c_in = if l == 0 { att.c_init } else { h.c_hid };
                let c_out = if l + 1 == h.depth { h.c_final } else { h.c_hid };
                HodgeBaseLayer::new(store, &format!("a.base{l}"), h.num_linears, h.hidden, c_in, c_out)
            })
            .collect::<Result<Vec<_>>>()?;
        let hodge_channels = if h.depth == 0 { 0 } else { h.c_hid * (h.depth - 1) + h.c_final };
        let fdim = AttentionTrack::channels(att) + hodge_channels;
        let final_mlp = Mlp::new(store, "a.final", att.final_linears, fdim, 2 * fdim, dims.f1)?;
        Ok(ScoreNetworkABaseCc { track, hodge, final_mlp })
    }

    fn forward(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<Var> {
        let n = state.n();
        let masks = NodeMasks::new(&state.node_mask);
        let powers = self.track.powers(state);
        let mut channels = vec![self.track.forward(t, store, state, &powers, &masks)?];
        if !self.hodge.is_empty() {
            let em = edge_masks(n, state.active_nodes(), &state.layout(), state.f2(), false);
            let mut diags: Vec<Var> = hodge_diagonals(&powers).into_iter().map(|d| t.constant(d)).collect();
            for layer in &self.hodge {
                diags = layer.forward(t, store, &diags, &em.edges)?;
                let cat = t.concat_cols(&diags)?;
                channels.push(inverse_dual(t, cat, n)?);
            }
        }
        let cat = t.concat_cols(&channels)?;
        let out = self.final_mlp.forward(t, store, cat)?;
        finish_adjacency(t, out, &masks)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreNetworkF {
    power: usize,
    hodge_mask: bool,
    blocks: Vec<Mlp>,
    final_mlp: Mlp,
}

impl ScoreNetworkF {
    fn new(store: &mut ParamStore, s: &ScoreFSpec, dims: &DataDims) -> Result<Self> {
        let c0 = s.power * dims.f2;
        let blocks = (0..s.depth)
            .map(|l| {
                let c_in = if l == 0 { c0 } else { s.c_hid };
                Mlp::new(store, &format!("f.block{l}"), s.num_linears, c_in, s.c_hid, s.c_hid)
            })
            .collect::<Result<Vec<_>>>()?;
        let fdim = c0 + s.depth * s.c_hid;
        let final_mlp = Mlp::new(store, "f.final", s.final_linears, fdim, 2 * fdim, dims.f2)?;
        Ok(ScoreNetworkF {
            power: s.power,
            hodge_mask: s.hodge_mask,
            blocks,
            final_mlp,
        })
    }

    /// Output on the live incidence rows only, with those rows.
    fn forward_live(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<(Var, Vec<usize>)> {
        let rows = live_incidence_rows(state.n(), state.active_nodes(), &state.layout(), self.hodge_mask);
        let k0 = incidence_channels(state, &rows, self.power);
        let mut h = t.constant(k0);
        let mut all = vec![h];
        for b in &self.blocks {
            h = b.forward(t, store, h)?;
            h = t.tanh(h);
            all.push(h);
        }
        let cat = t.concat_cols(&all)?;
        let out = self.final_mlp.forward(t, store, cat)?;
        Ok((out, rows))
    }

    fn forward(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<Var> {
        let (m, k, _) = state.f.dim();
        let (out, rows) = self.forward_live(t, store, state)?;
        t.scatter_rows(out, &rows, m * k)
    }
}

/// `[H^0 F, .., H^(p-1) F]` at the given flat rows, with `H = F F^T` over the
/// channel-summed incidence, where `F` is the input restricted to `rows`.
/// Columns are propagated sparsely, so a masked incidence costs about
/// `p * K * m * |cell edges|`.
pub fn incidence_channels(state: &ComplexTensor, rows: &[usize], power: usize) -> Array2<f64> {
    let (m, k, f2) = state.f.dim();
    let f = &state.f;
    let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (r, &row) in rows.iter().enumerate() {
        cols[row % k].push((row / k, r));
    }
    let mut out = Array2::zeros((rows.len(), power * f2));
    for (j, col) in cols.iter().enumerate() {
        for &(e, r) in col {
            for c in 0..f2 {
                out[[r, c]] = f[[e, j, c]];
            }
        }
    }
    if power == 1 {
        return out;
    }
    let mut h = Array2::<f64>::zeros((m, m));
    for (j, col) in cols.iter().enumerate() {
        let sums: Vec<f64> = col.iter().map(|&(e, _)| (0..f2).map(|c| f[[e, j, c]]).sum()).collect();
        for (&(a, _), &va) in col.iter().zip(&sums) {
            if va == 0.0 {
                continue;
            }
            for (&(b, _), &vb) in col.iter().zip(&sums) {
                h[[a, b]] += va * vb;
            }
        }
    }
    let nbrs: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|a| (0..m).filter(|&b| h[[b, a]] != 0.0).map(|b| (b, h[[b, a]])).collect())
        .collect();
    let mut g = Array2::<f64>::zeros((m, f2));
    let mut next = Array2::<f64>::zeros((m, f2));
    for (j, col) in cols.iter().enumerate() {
        if col.is_empty() {
            continue;
        }
        g.fill(0.0);
        let mut support: Vec<usize> = Vec::with_capacity(col.len());
        for &(e, _) in col {
            for c in 0..f2 {
                g[[e, c]] = f[[e, j, c]];
            }
            support.push(e);
        }
        for q in 1..power {
            next.fill(0.0);
            for &a in &support {
                let ga = g.row(a);
                for &(b, hb) in &nbrs[a] {
                    next.row_mut(b).scaled_add(hb, &ga);
                }
            }
            std::mem::swap(&mut g, &mut next);
            for &(e, r) in col {
                for c in 0..f2 {
                    out[[r, q * f2 + c]] = g[[e, c]];
                }
            }
            if q + 1 < power {
                support = (0..m).filter(|&e| g.row(e).iter().any(|&v| v != 0.0)).collect();
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
enum Network {
    X(ScoreNetworkX),
    ACc(ScoreNetworkACc),
    ABaseCc(ScoreNetworkABaseCc),
    F(ScoreNetworkF),
}

/// A score network with its parameters. Outputs are noise predictions; the
/// score at time `t` is `-output / std(t)`.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    pub spec: ScoreModelSpec,
    pub dims: DataDims,
    pub store: ParamStore,
    net: Network,
}

impl ScoreModel {
    pub fn new(spec: ScoreModelSpec, dims: DataDims, seed: u64) -> Result<Self> {
        spec.validate()?;
        ensure!(dims.f0 >= 1 && dims.f1 >= 1 && dims.f2 >= 1, Config, "feature dimensions must be >= 1");
        let mut store = ParamStore::new(seed);
        let net = match &spec {
            ScoreModelSpec::ScoreX(s) => Network::X(ScoreNetworkX::new(&mut store, s, &dims)?),
            ScoreModelSpec::ScoreACc { attention, hodge } => {
                Network::ACc(ScoreNetworkACc::new(&mut store, attention, hodge, &dims)?)
            }
            ScoreModelSpec::ScoreABaseCc { attention, hodge } => {
                Network::ABaseCc(ScoreNetworkABaseCc::new(&mut store, attention, hodge, &dims)?)
            }
            ScoreModelSpec::ScoreF(s) => Network::F(ScoreNetworkF::new(&mut store, s, &dims)?),
        };
        Ok(ScoreModel { spec, dims, store, net })
    }

    pub fn rank(&self) -> usize {
        self.spec.rank()
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn check_input(&self, state: &ComplexTensor) -> Result<()> {
        state.check_shapes()?;
        let d = &self.dims;
        ensure!(
            state.n() == d.n_max && state.f0() == d.f0 && state.f1() == d.f1 && state.f2() == d.f2,
            Shape,
            "input (n {}, f {}/{}/{}) does not match network (n {}, f {}/{}/{})",
            state.n(),
            state.f0(),
            state.f1(),
            state.f2(),
            d.n_max,
            d.f0,
            d.f1,
            d.f2
        );
        ensure!(state.constraints == d.constraints, Shape, "dimension constraints differ from the network's");
        Ok(())
    }

    /// Records the forward pass on `t` using parameters from `store`, which must
    /// come from this model (or a copy such as an EMA shadow).
    pub fn forward(&self, t: &mut Tape, store: &ParamStore, state: &ComplexTensor) -> Result<Var> {
        self.check_input(state)?;
        ensure!(store.len() == self.store.len(), Shape, "parameter store does not belong to this model");
        match &self.net {
            Network::X(m) => m.forward(t, store, state),
            Network::ACc(m) => m.forward(t, store, state),
            Network::ABaseCc(m) => m.forward(t, store, state),
            Network::F(m) => m.forward(t, store, state),
        }
    }

    /// Like [`ScoreModel::forward`], but the incidence network only returns
    /// its live rows, listed in the second value; every other row of the flat
    /// output is zero. Other networks return all rows and `None`.
    pub fn forward_live(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        state: &ComplexTensor,
    ) -> Result<(Var, Option<Vec<usize>>)> {
        match &self.net {
            Network::F(m) => {
                self.check_input(state)?;
                ensure!(store.len() == self.store.len(), Shape, "parameter store does not belong to this model");
                let (out, rows) = m.forward_live(t, store, state)?;
                Ok((out, Some(rows)))
            }
            _ => Ok((self.forward(t, store, state)?, None)),
        }
    }

    /// Flat network output evaluated with `store`.
    pub fn predict_flat(&self, store: &ParamStore, state: &ComplexTensor) -> Result<Array2<f64>> {
        let mut t = Tape::new();
        let out = self.forward(&mut t, store, state)?;
        Ok(t.value(out).clone())
    }

    pub fn predict_x(&self, store: &ParamStore, state: &ComplexTensor) -> Result<Array2<f64>> {
        ensure!(self.rank() == 0, Contract, "not a node-feature network");
        self.predict_flat(store, state)
    }

    /// Rank-1 or rank-2 output reshaped to its tensor.
    pub fn predict_tensor(&self, store: &ParamStore, state: &ComplexTensor) -> Result<Array3<f64>> {
        let flat = self.predict_flat(store, state)?;
        match self.rank() {
            1 => unflatten3(flat, state.n(), state.n()),
            2 => unflatten3(flat, state.f.dim().0, state.f.dim().1),
            _ => Err(crate::error::CcsdError::Contract("node-feature output is not rank-3".into())),
        }
    }
}
