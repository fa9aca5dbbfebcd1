//! Graph and Hodge layers on the tape.
//!
//! Multi-channel square matrices are carried as `[rows * rows, channels]`
//! (row-major entry index), so entrywise channel MLPs are plain matmuls.

use std::sync::Arc;

use ndarray::Array2;

use super::params::{ParamId, ParamStore};
use super::tape::{SparseMat, Tape, Var};
use crate::error::{ensure, Result};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let w = store.glorot(&format!("{name}.w"), fan_in, fan_out);
        let b = bias.then(|| store.zeros(&format!("{name}.b"), 1, fan_out));
        Linear { w, b }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = t.param(store, self.w);
        let mut y = t.matmul(x, w)?;
        if let Some(b) = self.b {
            let b = t.param(store, b);
            y = t.add_row(y, b)?;
        }
        Ok(y)
    }
}

/// Stack of linear layers with tanh between them and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        num_linears: usize,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    ) -> Result<Self> {
        ensure!(num_linears >= 1, Config, "{name}: an MLP needs at least one linear layer");
        let layers = (0..num_linears)
            .map(|l| {
                let i = if l == 0 { fan_in } else { hidden };
                let o = if l + 1 == num_linears { fan_out } else { hidden };
                Linear::new(store, &format!("{name}.{l}"), i, o, true)
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(t, store, h)?;
            if l + 1 < self.layers.len() {
                h = t.tanh(h);
            }
        }
        Ok(h)
    }
}

/// `D^-1/2 (A + I) D^-1/2` with degrees clamped below at 1.
pub fn gcn_normalize(t: &mut Tape, a: Var) -> Result<Var> {
    let n = t.value(a).nrows();
    let eye = Array2::eye(n);
    let a_hat = t.add_const(a, &eye)?;
    let deg = t.row_sum(a_hat);
    let deg = t.clamp_min(deg, 1.0);
    let d = t.rsqrt_safe(deg);
    let dt = t.transpose(d);
    let left = t.scale_cols(a_hat, dt)?;
    t.scale_rows(left, d)
}

/// Graph convolution `D^-1/2 (A + I) D^-1/2 X Θ`, no bias.
#[derive(Debug, Clone)]
pub struct Gcn {
    pub theta: ParamId,
}

impl Gcn {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Gcn {
            theta: store.glorot(&format!("{name}.theta"), fan_in, fan_out),
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var, a: Var) -> Result<Var> {
        let norm = gcn_normalize(t, a)?;
        self.forward_normalized(t, store, x, norm)
    }

    fn forward_normalized(&self, t: &mut Tape, store: &ParamStore, x: Var, norm: Var) -> Result<Var> {
        let theta = t.param(store, self.theta);
        let xt = t.matmul(x, theta)?;
        t.matmul(norm, xt)
    }
}

/// Head-averaged, symmetrized `Q K^T / sqrt(dim_out)` for full-size attention.
fn attention(t: &mut Tape, q: Var, k: Var, heads: usize, dim_out: usize) -> Result<Var> {
    let width = t.value(q).ncols();
    ensure!(width % heads == 0, Config, "attention width {width} not divisible by {heads} heads");
    let hd = width / heads;
    let mut total: Option<Var> = None;
    for h in 0..heads {
        let qh = t.slice_cols(q, h * hd, (h + 1) * hd)?;
        let kh = t.slice_cols(k, h * hd, (h + 1) * hd)?;
        let kt = t.transpose(kh);
        let s = t.matmul(qh, kt)?;
        total = Some(match total {
            Some(acc) => t.add(acc, s)?,
            None => s,
        });
    }
    let s = t.scale(total.expect("heads >= 1"), 1.0 / (heads as f64 * (dim_out as f64).sqrt()));
    let st = t.transpose(s);
    let sum = t.add(s, st)?;
    Ok(t.scale(sum, 0.5))
}

/// Diagonal of [`attention`] as an `[rows, 1]` column.
fn attention_diag(t: &mut Tape, q: Var, k: Var, heads: usize, dim_out: usize) -> Result<Var> {
    let width = t.value(q).ncols();
    ensure!(width % heads == 0, Config, "attention width {width} not divisible by {heads} heads");
    let prod = t.mul(q, k)?;
    let d = t.row_sum(prod);
    Ok(t.scale(d, 1.0 / (heads as f64 * (dim_out as f64).sqrt())))
}

/// Graph multi-head attention: value, query and key are GCNs of the same input.
#[derive(Debug, Clone)]
pub struct Gmh {
    pub q: Gcn,
    pub k: Gcn,
    pub v: Gcn,
    pub heads: usize,
    pub dim_out: usize,
}

impl Gmh {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        attn_dim: usize,
        dim_out: usize,
        heads: usize,
    ) -> Result<Self> {
        ensure!(heads >= 1 && attn_dim % heads == 0, Config, "{name}: {attn_dim} not divisible by {heads} heads");
        Ok(Gmh {
            q: Gcn::new(store, &format!("{name}.q"), fan_in, attn_dim),
            k: Gcn::new(store, &format!("{name}.k"), fan_in, attn_dim),
            v: Gcn::new(store, &format!("{name}.v"), fan_in, dim_out),
            heads,
            dim_out,
        })
    }

    /// Returns `(value [n, dim_out], attention [n, n])`.
    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var, a: Var) -> Result<(Var, Var)> {
        let norm = gcn_normalize(t, a)?;
        let q = self.q.forward_normalized(t, store, x, norm)?;
        let k = self.k.forward_normalized(t, store, x, norm)?;
        let v = self.v.forward_normalized(t, store, x, norm)?;
        let att = attention(t, q, k, self.heads, self.dim_out)?;
        Ok((v, att))
    }
}

/// Stacks `[n, n]` matrices into `[n * n, c]`.
pub fn stack_channels(t: &mut Tape, mats: &[Var]) -> Result<Var> {
    let cols = mats
        .iter()
        .map(|&m| {
            let (r, c) = t.value(m).dim();
            t.reshape(m, r * c, 1)
        })
        .collect::<Result<Vec<_>>>()?;
    t.concat_cols(&cols)
}

/// Splits `[n * n, c]` back into `c` square matrices.
pub fn split_channels(t: &mut Tape, stacked: Var, n: usize) -> Result<Vec<Var>> {
    (0..t.value(stacked).ncols())
        .map(|c| {
            let col = t.slice_cols(stacked, c, c + 1)?;
            t.reshape(col, n, n)
        })
        .collect()
}

/// Node masks for padded inputs.
#[derive(Debug, Clone)]
pub struct NodeMasks {
    pub n: usize,
    /// `[n, 1]` active nodes.
    pub rows: Array2<f64>,
    /// `[n * n, 1]` entries whose endpoints are both active.
    pub pairs: Array2<f64>,
}

impl NodeMasks {
    pub fn new(node_mask: &[bool]) -> Self {
        let n = node_mask.len();
        let rows = Array2::from_shape_fn((n, 1), |(i, _)| f64::from(u8::from(node_mask[i])));
        let pairs = Array2::from_shape_fn((n * n, 1), |(r, _)| {
            f64::from(u8::from(node_mask[r / n] && node_mask[r % n]))
        });
        NodeMasks { n, rows, pairs }
    }
}

/// One attention block: per-channel GMH, an MLP on the concatenated values for
/// node features and a channel MLP on the attention maps for adjacency.
#[derive(Debug, Clone)]
pub struct AttLayer {
    pub gmh: Vec<Gmh>,
    pub mlp_x: Mlp,
    pub mlp_a: Mlp,
}

impl AttLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        num_linears: usize,
        c_in: usize,
        c_out: usize,
        fan_in: usize,
        attn_dim: usize,
        dim_out: usize,
        heads: usize,
    ) -> Result<Self> {
        let gmh = (0..c_in)
            .map(|c| Gmh::new(store, &format!("{name}.gmh{c}"), fan_in, attn_dim, dim_out, heads))
            .collect::<Result<Vec<_>>>()?;
        let mlp_x = Mlp::new(store, &format!("{name}.mlp_x"), num_linears, c_in * dim_out, 2 * dim_out, dim_out)?;
        let mlp_a = Mlp::new(store, &format!("{name}.mlp_a"), num_linears, c_in, 2 * c_in, c_out)?;
        Ok(AttLayer { gmh, mlp_x, mlp_a })
    }

    /// Returns the new node features `[n, dim_out]` and `c_out` adjacency channels.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        x: Var,
        adjs: &[Var],
        masks: &NodeMasks,
    ) -> Result<(Var, Vec<Var>)> {
        ensure!(adjs.len() == self.gmh.len(), Shape, "expected {} channels, got {}", self.gmh.len(), adjs.len());
        let mut values = Vec::with_capacity(adjs.len());
        let mut atts = Vec::with_capacity(adjs.len());
        for (g, &a) in self.gmh.iter().zip(adjs) {
            let (v, s) = g.forward(t, store, x, a)?;
            values.push(v);
            atts.push(s);
        }
        let cat = t.concat_cols(&values)?;
        let xo = self.mlp_x.forward(t, store, cat)?;
        let xo = t.tanh(xo);
        let rows = t.constant(masks.rows.clone());
        let xo = t.scale_rows(xo, rows)?;

        let stacked = stack_channels(t, &atts)?;
        let ao = self.mlp_a.forward(t, store, stacked)?;
        let pairs = t.constant(masks.pairs.clone());
        let ao = t.scale_rows(ao, pairs)?;
        let adjs = split_channels(t, ao, masks.n)?;
        Ok((xo, adjs))
    }
}

/// Square Hodge matrix, kept as its diagonal while it is still diagonal.
#[derive(Debug, Clone, Copy)]
pub enum HodgeMat {
    /// `[m, 1]` diagonal.
    Diagonal(Var),
    /// `[m, m]`.
    Dense(Var),
}

impl HodgeMat {
    /// `[m, 1]` diagonal.
    pub fn diagonal(self, t: &mut Tape) -> Result<Var> {
        match self {
            HodgeMat::Diagonal(d) => Ok(d),
            HodgeMat::Dense(h) => {
                let m = t.value(h).nrows();
                let flat = t.reshape(h, m * m, 1)?;
                let idx: Vec<usize> = (0..m).map(|e| e * m + e).collect();
                t.gather_rows(flat, &idx)
            }
        }
    }

    /// `H F` for `f` of shape `[m, cols]`.
    pub fn times(self, t: &mut Tape, f: &Incidence) -> Result<Var> {
        let f = f.var(t);
        match self {
            HodgeMat::Diagonal(d) => t.scale_rows(f, d),
            HodgeMat::Dense(h) => t.matmul(h, f),
        }
    }
}

/// Flattened `[m, K * f2]` incidence: the sparse network input, or a dense
/// block output.
#[derive(Debug, Clone)]
pub enum Incidence {
    Sparse(Arc<SparseMat>),
    Dense(Var),
}

impl Incidence {
    fn var(&self, t: &mut Tape) -> Var {
        match self {
            Incidence::Sparse(s) => t.constant(s.to_dense()),
            Incidence::Dense(v) => *v,
        }
    }

    /// `F Θ`.
    fn times(&self, t: &mut Tape, theta: Var) -> Result<Var> {
        match self {
            Incidence::Sparse(s) => t.sparse_matmul(s, theta),
            Incidence::Dense(v) => t.matmul(*v, theta),
        }
    }
}

/// Hodge convolution `D^-1/2 H D^-1/2 F Θ`; nonpositive degrees give zero rows.
#[derive(Debug, Clone)]
pub struct Hcn {
    pub theta: ParamId,
}

impl Hcn {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Hcn {
            theta: store.glorot(&format!("{name}.theta"), fan_in, fan_out),
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, h: HodgeMat, f: &Incidence) -> Result<Var> {
        let theta = t.param(store, self.theta);
        let ft = f.times(t, theta)?;
        match h {
            HodgeMat::Diagonal(diag) => {
                let d = t.rsqrt_safe(diag);
                let hd = t.mul(diag, d)?;
                let norm = t.mul(hd, d)?;
                t.scale_rows(ft, norm)
            }
            HodgeMat::Dense(hm) => {
                let deg = t.row_sum(hm);
                let d = t.rsqrt_safe(deg);
                let dt = t.transpose(d);
                let left = t.scale_cols(hm, dt)?;
                let norm = t.scale_rows(left, d)?;
                t.matmul(norm, ft)
            }
        }
    }
}

/// Hodge multi-head attention: value `H F`, query and key are HCNs.
#[derive(Debug, Clone)]
pub struct Hccmh {
    pub q: Hcn,
    pub k: Hcn,
    pub heads: usize,
    pub attn_dim: usize,
}

impl Hccmh {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, attn_dim: usize, heads: usize) -> Result<Self> {
        ensure!(heads >= 1 && attn_dim % heads == 0, Config, "{name}: {attn_dim} not divisible by {heads} heads");
        Ok(Hccmh {
            q: Hcn::new(store, &format!("{name}.q"), fan_in, attn_dim),
            k: Hcn::new(store, &format!("{name}.k"), fan_in, attn_dim),
            heads,
            attn_dim,
        })
    }

    /// Returns `(H F, attention)`; the attention is `[m, m]`, or its `[m, 1]`
    /// diagonal when `full` is false, in which case `H F` is skipped.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        h: HodgeMat,
        f: &Incidence,
        full: bool,
    ) -> Result<(Option<Var>, Var)> {
        let value = if full { Some(h.times(t, f)?) } else { None };
        let q = self.q.forward(t, store, h, f)?;
        let k = self.k.forward(t, store, h, f)?;
        let att = if full {
            attention(t, q, k, self.heads, self.attn_dim)?
        } else {
            attention_diag(t, q, k, self.heads, self.attn_dim)?
        };
        Ok((value, att))
    }
}

/// One Hodge attention block over `c_in` Hodge channels and the incidence.
#[derive(Debug, Clone)]
pub struct HodgeAttLayer {
    pub blocks: Vec<Hccmh>,
    pub mlp_h: Mlp,
    /// Absent in the last block, whose incidence output is never read.
    pub mlp_f: Option<Mlp>,
}

/// Masks for the edge axis and the flattened incidence.
#[derive(Debug, Clone)]
pub struct EdgeMasks {
    pub m: usize,
    /// `[m, 1]` edges between active nodes.
    pub edges: Array2<f64>,
    /// `[m * m, 1]`.
    pub edge_pairs: Array2<f64>,
    /// `[m, K * f2]` live incidence entries.
    pub incidence: Array2<f64>,
}

impl HodgeAttLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        num_linears: usize,
        hidden: usize,
        c_in: usize,
        c_out: usize,
        width: usize,
        attn_dim: usize,
        heads: usize,
        last: bool,
    ) -> Result<Self> {
        let blocks = (0..c_in)
            .map(|c| Hccmh::new(store, &format!("{name}.hccmh{c}"), width, attn_dim, heads))
            .collect::<Result<Vec<_>>>()?;
        let mlp_h = Mlp::new(store, &format!("{name}.mlp_h"), num_linears, c_in, hidden, c_out)?;
        let mlp_f = if last {
            None
        } else {
            Some(Mlp::new(store, &format!("{name}.mlp_f"), num_linears, c_in * width, hidden, width)?)
        };
        Ok(HodgeAttLayer { blocks, mlp_h, mlp_f })
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        hs: &[HodgeMat],
        f: &Incidence,
        masks: &EdgeMasks,
    ) -> Result<(Vec<HodgeMat>, Option<Var>)> {
        ensure!(hs.len() == self.blocks.len(), Shape, "expected {} channels, got {}", self.blocks.len(), hs.len());
        let full = self.mlp_f.is_some();
        let mut values = Vec::with_capacity(hs.len());
        let mut atts = Vec::with_capacity(hs.len());
        for (b, &h) in self.blocks.iter().zip(hs) {
            let (v, a) = b.forward(t, store, h, f, full)?;
            values.extend(v);
            atts.push(a);
        }
        let m = masks.m;
        let hs_out = if full {
            let stacked = stack_channels(t, &atts)?;
            let ho = self.mlp_h.forward(t, store, stacked)?;
            let ho = t.tanh(ho);
            let pairs = t.constant(masks.edge_pairs.clone());
            let ho = t.scale_rows(ho, pairs)?;
            split_channels(t, ho, m)?.into_iter().map(HodgeMat::Dense).collect()
        } else {
            let stacked = t.concat_cols(&atts)?;
            let ho = self.mlp_h.forward(t, store, stacked)?;
            let ho = t.tanh(ho);
            let edges = t.constant(masks.edges.clone());
            let ho = t.scale_rows(ho, edges)?;
            (0..t.value(ho).ncols())
                .map(|c| t.slice_cols(ho, c, c + 1).map(HodgeMat::Diagonal))
                .collect::<Result<Vec<_>>>()?
        };
        let f_out = match &self.mlp_f {
            Some(mlp) => {
                let cat = t.concat_cols(&values)?;
                let fo = mlp.forward(t, store, cat)?;
                Some(t.mask(fo, &masks.incidence)?)
            }
            None => None,
        };
        Ok((hs_out, f_out))
    }
}

/// Baseline Hodge block: channel-wise MLPs on the Hodge diagonals replace the
/// HCN attention, followed by the same channel mixing as [`HodgeAttLayer`].
#[derive(Debug, Clone)]
pub struct HodgeBaseLayer {
    pub blocks: Vec<Mlp>,
    pub mlp_h: Mlp,
}

impl HodgeBaseLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        num_linears: usize,
        hidden: usize,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        let blocks = (0..c_in)
            .map(|c| Mlp::new(store, &format!("{name}.block{c}"), num_linears, 1, hidden, 1))
            .collect::<Result<Vec<_>>>()?;
        let mlp_h = Mlp::new(store, &format!("{name}.mlp_h"), num_linears, c_in, hidden, c_out)?;
        Ok(HodgeBaseLayer { blocks, mlp_h })
    }

    /// Maps `c_in` diagonals `[m, 1]` to `c_out` diagonals.
    pub fn forward(&self, t: &mut Tape, store: &ParamStore, diags: &[Var], edges: &Array2<f64>) -> Result<Vec<Var>> {
        ensure!(diags.len() == self.blocks.len(), Shape, "expected {} channels, got {}", self.blocks.len(), diags.len());
        let outs = self
            .blocks
            .iter()
            .zip(diags)
            .map(|(b, &d)| b.forward(t, store, d))
            .collect::<Result<Vec<_>>>()?;
        let cat = t.concat_cols(&outs)?;
        let ho = self.mlp_h.forward(t, store, cat)?;
        let ho = t.tanh(ho);
        let edges = t.constant(edges.clone());
        let ho = t.scale_rows(ho, edges)?;
        (0..t.value(ho).ncols()).map(|c| t.slice_cols(ho, c, c + 1)).collect()
    }
}
