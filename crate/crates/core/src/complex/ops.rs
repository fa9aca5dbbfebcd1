//! Hodge dual, Hodge Laplacian and the higher-order matrices built from them.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use super::index::{num_edges, Layout};
use super::DimConstraints;
use crate::error::{ensure, Result};

const SYM_TOL: f64 = 1e-12;

fn side_from_edges(m: usize) -> Option<usize> {
    (0..=m + 1).find(|&n| num_edges(n) == m)
}

/// Diagonal `C(n,2) x C(n,2)` matrix carrying `A[i, j]` at the slot of edge `(i, j)`.
pub fn hodge_dual(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    ensure!(a.ncols() == n, Shape, "adjacency must be square, got {:?}", a.dim());
    let m = num_edges(n);
    let mut h = Array2::zeros((m, m));
    let mut e = 0;
    for i in 0..n {
        ensure!(a[[i, i]] == 0.0, Contract, "adjacency has a self-loop at node {i}");
        for j in i + 1..n {
            let (u, v) = (a[[i, j]], a[[j, i]]);
            ensure!(
                (u - v).abs() <= SYM_TOL * u.abs().max(v.abs()).max(1.0),
                Contract,
                "adjacency not symmetric at ({i}, {j})"
            );
            h[[e, e]] = u;
            e += 1;
        }
    }
    Ok(h)
}

/// Inverse of [`hodge_dual`]. Only the diagonal of `h` is read.
pub fn hodge_dual_inverse(h: ArrayView2<f64>) -> Result<Array2<f64>> {
    let m = h.nrows();
    ensure!(h.ncols() == m, Shape, "Hodge dual must be square, got {:?}", h.dim());
    let n = side_from_edges(m)
        .ok_or_else(|| crate::error::CcsdError::Shape(format!("{m} is not C(n,2) for any n")))?;
    let mut a = Array2::zeros((n, n));
    let mut e = 0;
    for i in 0..n {
        for j in i + 1..n {
            a[[i, j]] = h[[e, e]];
            a[[j, i]] = h[[e, e]];
            e += 1;
        }
    }
    Ok(a)
}

/// Channels `A^1 .. A^p`, stacked on the last axis: `[n, n, p]`.
pub fn higher_order_adjacency(a: ArrayView2<f64>, p: usize) -> Result<Array3<f64>> {
    ensure!(p >= 1, Domain, "adjacency power must be >= 1");
    let n = a.nrows();
    ensure!(a.ncols() == n, Shape, "adjacency must be square, got {:?}", a.dim());
    let mut out = Array3::zeros((n, n, p));
    let mut power = a.to_owned();
    out.index_axis_mut(Axis(2), 0).assign(&power);
    for c in 1..p {
        power = power.dot(&a);
        out.index_axis_mut(Axis(2), c).assign(&power);
    }
    Ok(out)
}

/// Nonzero rows per column of the channel-summed incidence.
fn column_support(f: &ArrayView3<f64>) -> Vec<Vec<(usize, f64)>> {
    let (m, k, f2) = f.dim();
    let mut cols = vec![Vec::new(); k];
    for e in 0..m {
        for (j, col) in cols.iter_mut().enumerate() {
            let mut v = 0.0;
            for c in 0..f2 {
                v += f[[e, j, c]];
            }
            if v != 0.0 {
                col.push((e, v));
            }
        }
    }
    cols
}

/// `F F^T` over the channel-summed incidence. Sparse columns are accumulated
/// as outer products, dense inputs go through a matrix product.
pub fn hodge_laplacian(f: ArrayView3<f64>) -> Array2<f64> {
    let (m, k, _) = f.dim();
    let cols = column_support(&f);
    let sparse_cost: usize = cols.iter().map(|c| c.len() * c.len()).sum();
    if sparse_cost * 4 < m * m * k {
        let mut h = Array2::zeros((m, m));
        for col in &cols {
            for &(a, va) in col {
                for &(b, vb) in col {
                    h[[a, b]] += va * vb;
                }
            }
        }
        h
    } else {
        let g = f.sum_axis(Axis(2));
        g.dot(&g.t())
    }
}

/// `H F` applied to every feature channel of `f`.
pub fn incidence_times(h: ArrayView2<f64>, f: ArrayView3<f64>) -> Array3<f64> {
    let (m, k, f2) = f.dim();
    let nnz = f.iter().filter(|&&v| v != 0.0).count();
    if nnz * 4 < m * k * f2 {
        let mut out = Array3::zeros((m, k, f2));
        for e in 0..m {
            for j in 0..k {
                for c in 0..f2 {
                    let v = f[[e, j, c]];
                    if v != 0.0 {
                        let mut col = out.slice_mut(ndarray::s![.., j, c]);
                        col.scaled_add(v, &h.column(e));
                    }
                }
            }
        }
        out
    } else {
        let flat = f
            .to_owned()
            .into_shape_with_order((m, k * f2))
            .expect("contiguous reshape");
        h.dot(&flat)
            .into_shape_with_order((m, k, f2))
            .expect("contiguous reshape")
    }
}

/// Channels `H^0 F, .., H^(p-1) F` with `H = F F^T`.
pub fn higher_order_incidence(f: ArrayView3<f64>, p: usize) -> Result<Vec<Array3<f64>>> {
    ensure!(p >= 1, Domain, "incidence power must be >= 1");
    let mut out = vec![f.to_owned()];
    if p > 1 {
        let h = hodge_laplacian(f);
        for i in 1..p {
            let next = incidence_times(h.view(), out[i - 1].view());
            out.push(next);
        }
    }
    Ok(out)
}

/// `mask[e, j]` is true iff both endpoints of edge `e` belong to cell `j`.
pub fn cell_edge_mask(n: usize, c: &DimConstraints) -> Array2<bool> {
    let layout = Layout::shared(n, *c);
    let mut mask = Array2::from_elem((layout.num_edges(), layout.num_cells()), false);
    for j in 0..layout.num_cells() {
        for &e in layout.cell_edges(j) {
            mask[[e, j]] = true;
        }
    }
    mask
}
