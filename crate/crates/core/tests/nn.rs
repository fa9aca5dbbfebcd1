mod common;

use ccsd::complex::{ComplexTensor, DimConstraints};
use ccsd::nn::layers::{
    AttLayer, EdgeMasks, Gcn, Gmh, Hccmh, Hcn, HodgeAttLayer, HodgeBaseLayer, HodgeMat, Incidence, Mlp, NodeMasks,
};
use ccsd::nn::models::{incidence_channels, live_incidence_rows};
use ccsd::nn::{
    AttentionSpec, BaseHodgeSpec, DataDims, HodgeSpec, ParamStore, ScoreFSpec, ScoreModel, ScoreModelSpec,
    ScoreXSpec, SparseMat, Tape, Var,
};
use ccsd::complex::higher_order_incidence;
use std::sync::Arc;
use common::{noisy_state, permute_state, random_perm, rng};
use ndarray::{array, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn c33() -> DimConstraints {
    DimConstraints::new(3, 3).unwrap()
}

fn gaussian(r: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

fn sym(r: &mut impl Rng, n: usize) -> Array2<f64> {
    let g = gaussian(r, n, n);
    let mut s = &g + &g.t();
    for i in 0..n {
        s[[i, i]] = 0.0;
    }
    s
}

/// Central-difference check of `sum_k sum(out_k * R_k)` on `samples` randomly
/// chosen scalar parameters plus one from every tensor. Returns the worst
/// relative error.
fn gradcheck(
    store: &mut ParamStore,
    samples: usize,
    seed: u64,
    f: impl Fn(&mut Tape, &ParamStore) -> Vec<Var>,
) -> f64 {
    let mut r = rng(seed);
    let mut t = Tape::new();
    let outs = f(&mut t, store);
    let projs: Vec<Array2<f64>> = outs
        .iter()
        .map(|&o| gaussian(&mut r, t.value(o).nrows(), t.value(o).ncols()))
        .collect();
    let loss_of = |store: &ParamStore| {
        let mut t = Tape::new();
        let outs = f(&mut t, store);
        outs.iter().zip(&projs).map(|(&o, p)| (t.value(o) * p).sum()).sum::<f64>()
    };
    let mut terms = Vec::new();
    for (&o, p) in outs.iter().zip(&projs) {
        let pv = t.constant(p.clone());
        let prod = t.mul(o, pv).unwrap();
        terms.push(t.sum(prod));
    }
    let cat = t.concat_cols(&terms).unwrap();
    let loss = t.sum(cat);
    let grads = t.backward(loss, store.len()).unwrap();

    let ids: Vec<_> = store.ids().collect();
    let mut picks: Vec<(usize, usize)> =
        ids.iter().map(|id| (id.index(), r.gen_range(0..store.value(*id).len()))).collect();
    for _ in 0..samples {
        let id = ids[r.gen_range(0..ids.len())];
        picks.push((id.index(), r.gen_range(0..store.value(id).len())));
    }
    assert!(picks.len() >= 25);
    let mut worst: f64 = 0.0;
    for (pi, flat) in picks {
        let id = ids[pi];
        let cols = store.value(id).ncols();
        let (i, j) = (flat / cols, flat % cols);
        let orig = store.value(id)[[i, j]];
        store.value_mut(id)[[i, j]] = orig + H;
        let up = loss_of(store);
        store.value_mut(id)[[i, j]] = orig - H;
        let down = loss_of(store);
        store.value_mut(id)[[i, j]] = orig;
        let numeric = (up - down) / (2.0 * H);
        let analytic = grads.get(id).map_or(0.0, |g| g[[i, j]]);
        let scale = numeric.abs().max(analytic.abs());
        // gradients far below the difference quotient's roundoff are compared
        // against a floor instead of their own size
        let rel = (numeric - analytic).abs() / scale.max(1e-3);
        assert!(
            rel <= REL_TOL,
            "{}[{i},{j}]: analytic {analytic}, numeric {numeric}, rel {rel}",
            store.name(id)
        );
        worst = worst.max(rel);
    }
    worst
}

fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn gcn_with_empty_graph_and_identity_weights_returns_input() {
    let mut store = ParamStore::new(0);
    let g = Gcn::new(&mut store, "g", 3, 3);
    *store.value_mut(g.theta) = Array2::eye(3);
    let mut r = rng(1);
    let x = gaussian(&mut r, 5, 3);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let a = t.constant(Array2::zeros((5, 5)));
    let y = g.forward(&mut t, &store, xv, a).unwrap();
    assert!(close(t.value(y), &x, 1e-15));
}

#[test]
fn gcn_on_single_edge_averages() {
    let mut store = ParamStore::new(0);
    let g = Gcn::new(&mut store, "g", 1, 1);
    *store.value_mut(g.theta) = array![[1.0]];
    let mut t = Tape::new();
    let x = t.constant(array![[1.0], [0.0]]);
    let a = t.constant(array![[0.0, 1.0], [1.0, 0.0]]);
    let y = g.forward(&mut t, &store, x, a).unwrap();
    assert!(close(t.value(y), &array![[0.5], [0.5]], 1e-15));
}

#[test]
fn gmh_of_zero_features_is_zero() {
    let mut store = ParamStore::new(3);
    let g = Gmh::new(&mut store, "g", 4, 8, 6, 2).unwrap();
    let mut r = rng(2);
    let mut t = Tape::new();
    let x = t.constant(Array2::zeros((5, 4)));
    let a = t.constant(sym(&mut r, 5));
    let (v, s) = g.forward(&mut t, &store, x, a).unwrap();
    assert!(t.value(v).iter().all(|&z| z == 0.0));
    assert!(t.value(s).iter().all(|&z| z == 0.0));
}

#[test]
fn gradcheck_mlp_gcn_gmh() {
    let mut r = rng(10);
    let x = gaussian(&mut r, 6, 4);
    let a = sym(&mut r, 6).mapv(f64::abs);

    let mut store = ParamStore::new(1);
    let mlp = Mlp::new(&mut store, "m", 3, 4, 7, 2).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.value(id).dim();
        *store.value_mut(id) = gaussian(&mut r, shape.0, shape.1) * 0.5;
    }
    let e = gradcheck(&mut store, 30, 11, |t, s| {
        let xv = t.constant(x.clone());
        vec![mlp.forward(t, s, xv).unwrap()]
    });
    assert!(e <= REL_TOL);

    let mut store = ParamStore::new(2);
    let g = Gcn::new(&mut store, "g", 4, 3);
    gradcheck(&mut store, 30, 12, |t, s| {
        let xv = t.constant(x.clone());
        let av = t.constant(a.clone());
        vec![g.forward(t, s, xv, av).unwrap()]
    });

    let mut store = ParamStore::new(3);
    let g = Gmh::new(&mut store, "g", 4, 4, 3, 2).unwrap();
    gradcheck(&mut store, 40, 13, |t, s| {
        let xv = t.constant(x.clone());
        let av = t.constant(a.clone());
        let (v, att) = g.forward(t, s, xv, av).unwrap();
        vec![v, att]
    });
}

#[test]
fn gradcheck_att_layer_through_learned_adjacency() {
    let mut r = rng(20);
    let n = 6;
    let x = gaussian(&mut r, n, 3);
    let adjs = [sym(&mut r, n), sym(&mut r, n)];
    let masks = NodeMasks::new(&[true, true, true, true, true, false]);
    let mut store = ParamStore::new(4);
    let l1 = AttLayer::new(&mut store, "l1", 2, 2, 3, 3, 4, 5, 2).unwrap();
    let l2 = AttLayer::new(&mut store, "l2", 2, 3, 2, 5, 4, 5, 2).unwrap();
    gradcheck(&mut store, 60, 21, |t, s| {
        let xv = t.constant(x.clone());
        let av: Vec<Var> = adjs.iter().map(|a| t.constant(a.clone())).collect();
        let (x1, a1) = l1.forward(t, s, xv, &av, &masks).unwrap();
        let (x2, a2) = l2.forward(t, s, x1, &a1, &masks).unwrap();
        let mut outs = vec![x2];
        outs.extend(a2);
        outs
    });
}

fn edge_masks(n: usize, active: usize, width: usize, s: &ComplexTensor) -> EdgeMasks {
    let m = n * (n - 1) / 2;
    let mut edges = Array2::zeros((m, 1));
    let mut e = 0;
    for i in 0..n {
        for j in i + 1..n {
            edges[[e, 0]] = f64::from(u8::from(j < active));
            e += 1;
        }
    }
    let pairs = Array2::from_shape_fn((m * m, 1), |(r, _)| edges[[r / m, 0]] * edges[[r % m, 0]]);
    let f = s.f.clone().into_shape_with_order((m, width)).unwrap();
    EdgeMasks {
        m,
        edges,
        edge_pairs: pairs,
        incidence: f.mapv(|v| f64::from(u8::from(v != 0.0))),
    }
}

#[test]
fn gradcheck_hodge_layers_diagonal_and_dense() {
    let mut r = rng(30);
    let n = 5;
    let s = noisy_state(&mut r, n, 5, c33(), (2, 1, 1));
    let (m, k, _) = s.f.dim();
    let f = s.f.clone().into_shape_with_order((m, k)).unwrap();
    let diag = gaussian(&mut r, m, 1).mapv(f64::abs);
    let dense = {
        let g = gaussian(&mut r, m, m).mapv(f64::abs);
        &g + &g.t()
    };
    let em = edge_masks(n, n, k, &s);

    let mut store = ParamStore::new(5);
    let hcn = Hcn::new(&mut store, "h", k, 3);
    let sparse = Incidence::Sparse(Arc::new(SparseMat::from_dense(&f)));
    gradcheck(&mut store, 30, 31, |t, st| {
        let fv = Incidence::Dense(t.constant(f.clone()));
        let d = t.constant(diag.clone());
        let a = hcn.forward(t, st, HodgeMat::Diagonal(d), &fv).unwrap();
        let h = t.constant(dense.clone());
        let b = hcn.forward(t, st, HodgeMat::Dense(h), &fv).unwrap();
        let c = hcn.forward(t, st, HodgeMat::Dense(h), &sparse).unwrap();
        assert!(close(t.value(b), t.value(c), 1e-12));
        vec![a, b, c]
    });

    let mut store = ParamStore::new(6);
    let att = Hccmh::new(&mut store, "a", k, 4, 2).unwrap();
    gradcheck(&mut store, 30, 32, |t, st| {
        let fv = Incidence::Dense(t.constant(f.clone()));
        let h = t.constant(dense.clone());
        let (value, full) = att.forward(t, st, HodgeMat::Dense(h), &fv, true).unwrap();
        let (skipped, dg) = att.forward(t, st, HodgeMat::Dense(h), &fv, false).unwrap();
        assert!(skipped.is_none());
        vec![full, dg, value.unwrap()]
    });

    let mut store = ParamStore::new(7);
    let first = HodgeAttLayer::new(&mut store, "l0", 2, 4, 2, 3, k, 4, 2, false).unwrap();
    let last = HodgeAttLayer::new(&mut store, "l1", 2, 4, 3, 2, k, 4, 2, true).unwrap();
    positive_degrees(&mut store, "l0.mlp_h.1.b");
    let diag2 = gaussian(&mut r, m, 1).mapv(f64::abs);
    gradcheck(&mut store, 80, 33, |t, st| {
        let hs = [HodgeMat::Diagonal(t.constant(diag.clone())), HodgeMat::Diagonal(t.constant(diag2.clone()))];
        let (h1, f1) = first.forward(t, st, &hs, &sparse, &em).unwrap();
        let (h2, f2) = last.forward(t, st, &h1, &Incidence::Dense(f1.unwrap()), &em).unwrap();
        assert!(f2.is_none());
        h2.iter().map(|h| h.diagonal(t).unwrap()).collect()
    });

    let mut store = ParamStore::new(8);
    let base = HodgeBaseLayer::new(&mut store, "b", 2, 4, 2, 3).unwrap();
    gradcheck(&mut store, 30, 34, |t, st| {
        let ds = [t.constant(diag.clone()), t.constant(diag2.clone())];
        base.forward(t, st, &ds, &em.edges).unwrap()
    });
}

fn attention_spec() -> AttentionSpec {
    AttentionSpec {
        depth: 2,
        nhid: 5,
        adim: 4,
        heads: 2,
        c_init: 2,
        c_hid: 3,
        c_final: 2,
        num_linears: 2,
        final_linears: 3,
    }
}

fn specs() -> Vec<ScoreModelSpec> {
    vec![
        ScoreModelSpec::ScoreX(ScoreXSpec {
            depth: 2,
            nhid: 5,
            final_linears: 3,
        }),
        ScoreModelSpec::ScoreACc {
            attention: attention_spec(),
            hodge: HodgeSpec {
                depth: 2,
                num_linears: 2,
                hidden: 4,
                c_hid: 2,
                c_final: 2,
                heads: 2,
                attn_dim: 4,
            },
        },
        ScoreModelSpec::ScoreABaseCc {
            attention: attention_spec(),
            hodge: BaseHodgeSpec {
                depth: 2,
                num_linears: 2,
                hidden: 4,
                c_hid: 3,
                c_final: 2,
            },
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

fn dims(n: usize) -> DataDims {
    DataDims {
        n_max: n,
        f0: 3,
        f1: 1,
        f2: 1,
        constraints: c33(),
    }
}

/// Scales a state down so attention products stay in a well-conditioned range.
fn tame(mut s: ComplexTensor) -> ComplexTensor {
    s.a.mapv_inplace(|v| 0.5 * v.abs());
    s.f *= 0.5;
    s
}

/// Pushes a dense Hodge block output towards positive entries so its row sums
/// stay away from zero, where the degree normalization is singular.
fn positive_degrees(store: &mut ParamStore, bias: &str) {
    let id = store.id(bias).unwrap();
    store.value_mut(id).fill(2.0);
}

#[test]
fn gradcheck_every_model() {
    let mut r = rng(40);
    let s = tame(noisy_state(&mut r, 6, 5, c33(), (3, 1, 1)));
    for (i, spec) in specs().into_iter().enumerate() {
        let mut model = ScoreModel::new(spec, dims(6), 50 + i as u64).unwrap();
        if let Some(id) = model.store.id("a.hodge0.mlp_h.1.b") {
            model.store.value_mut(id).fill(2.0);
        }
        let mut store = model.store.clone();
        let m2 = model.clone();
        let e = gradcheck(&mut store, 60, 41 + i as u64, |t, st| vec![m2.forward(t, st, &s).unwrap()]);
        assert!(e <= REL_TOL);
        model.store = store;
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn score_x_is_equivariant_and_complex_models_are_measured() {
    let n = 6;
    let mut r = rng(60);
    for (i, spec) in specs().into_iter().enumerate() {
        let model = ScoreModel::new(spec, dims(n), 70 + i as u64).unwrap();
        let mut worst: f64 = 0.0;
        for trial in 0..50 {
            let s = tame(noisy_state(&mut r, n, n, c33(), (3, 1, 1)));
            let perm = random_perm(&mut r, n);
            let ps = permute_state(&s, &perm);
            let out = model.predict_flat(&model.store, &s).unwrap();
            let pout = model.predict_flat(&model.store, &ps).unwrap();
            let expected = match model.rank() {
                0 => {
                    let mut st = s.clone();
                    st.x = out.clone();
                    permute_state(&st, &perm).x
                }
                1 => {
                    let mut st = s.clone();
                    st.a = ccsd::nn::unflatten3(out.clone(), n, n).unwrap();
                    ccsd::nn::flatten3(&permute_state(&st, &perm).a)
                }
                _ => {
                    let mut st = s.clone();
                    let (m, k, _) = s.f.dim();
                    st.f = ccsd::nn::unflatten3(out.clone(), m, k).unwrap();
                    ccsd::nn::flatten3(&permute_state(&st, &perm).f)
                }
            };
            let err = max_abs(&(&pout - &expected)) / max_abs(&expected).max(1.0);
            worst = worst.max(err);
            if model.rank() == 0 {
                assert!(err <= 1e-9, "trial {trial}: {err}");
            }
        }
        // only the node-feature network is required to be equivariant; the
        // complex-level networks are measured
        println!("{:?} worst relative equivariance error {worst:.3e}", model.spec.rank());
        assert!(worst.is_finite());
    }
}

#[test]
fn layers_are_permutation_equivariant() {
    let n = 6;
    let mut r = rng(61);
    let mut store = ParamStore::new(9);
    let g = Gcn::new(&mut store, "g", 3, 4);
    let gmh = Gmh::new(&mut store, "m", 3, 4, 5, 2).unwrap();
    let att = AttLayer::new(&mut store, "a", 2, 1, 2, 3, 4, 5, 2).unwrap();
    let masks = NodeMasks::new(&[true; 6]);
    for _ in 0..50 {
        let x = gaussian(&mut r, n, 3);
        let a = sym(&mut r, n).mapv(f64::abs);
        let perm = random_perm(&mut r, n);
        let mut px = Array2::zeros(x.raw_dim());
        let mut pa = Array2::zeros(a.raw_dim());
        for i in 0..n {
            px.row_mut(perm[i]).assign(&x.row(i));
            for j in 0..n {
                pa[[perm[i], perm[j]]] = a[[i, j]];
            }
        }
        let run = |x: &Array2<f64>, a: &Array2<f64>| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let av = t.constant(a.clone());
            let y = g.forward(&mut t, &store, xv, av).unwrap();
            let (v, s) = gmh.forward(&mut t, &store, xv, av).unwrap();
            let (xo, ao) = att.forward(&mut t, &store, xv, &[av], &masks).unwrap();
            (
                t.value(y).clone(),
                t.value(v).clone(),
                t.value(s).clone(),
                t.value(xo).clone(),
                t.value(ao[1]).clone(),
            )
        };
        let (y, v, s, xo, ao) = run(&x, &a);
        let (py, pv, ps, pxo, pao) = run(&px, &pa);
        for i in 0..n {
            for (orig, perm_out) in [(&y, &py), (&v, &pv), (&xo, &pxo)] {
                let d = &orig.row(i) - &perm_out.row(perm[i]);
                assert!(d.iter().all(|e| e.abs() < 1e-9));
            }
            for j in 0..n {
                assert!((s[[i, j]] - ps[[perm[i], perm[j]]]).abs() < 1e-9);
                assert!((ao[[i, j]] - pao[[perm[i], perm[j]]]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn adjacency_output_is_symmetric_with_zero_diagonal_and_padding() {
    let mut r = rng(80);
    let s = tame(noisy_state(&mut r, 6, 4, c33(), (3, 1, 1)));
    for spec in specs().into_iter().filter(|s| s.rank() == 1) {
        let model = ScoreModel::new(spec, dims(6), 3).unwrap();
        let a = model.predict_tensor(&model.store, &s).unwrap();
        for i in 0..6 {
            assert_eq!(a[[i, i, 0]], 0.0);
            for j in 0..6 {
                assert_eq!(a[[i, j, 0]], a[[j, i, 0]]);
                if i >= 4 || j >= 4 {
                    assert_eq!(a[[i, j, 0]], 0.0);
                }
            }
        }
        assert!(a.iter().any(|&v| v != 0.0));
    }
}

#[test]
fn node_output_is_zero_on_padding() {
    let mut r = rng(81);
    let s = tame(noisy_state(&mut r, 6, 4, c33(), (3, 1, 1)));
    let model = ScoreModel::new(specs().remove(0), dims(6), 3).unwrap();
    let x = model.predict_x(&model.store, &s).unwrap();
    assert!(x.slice(ndarray::s![4.., ..]).iter().all(|&v| v == 0.0));
    assert!(x.slice(ndarray::s![..4, ..]).iter().all(|&v| v != 0.0));
}

#[test]
fn incidence_output_respects_cell_edge_mask() {
    let mut r = rng(82);
    let s = tame(noisy_state(&mut r, 6, 5, c33(), (3, 1, 1)));
    let model = ScoreModel::new(specs().remove(3), dims(6), 3).unwrap();
    let f = model.predict_tensor(&model.store, &s).unwrap();
    let mask = ccsd::complex::cell_edge_mask(6, &c33());
    let layout = s.layout();
    let mut live = 0;
    for ((e, j, _), &v) in f.indexed_iter() {
        let allowed = mask[[e, j]] && layout.cell_within(j, 5);
        if allowed {
            live += 1;
        } else {
            assert_eq!(v, 0.0, "entry ({e}, {j})");
        }
    }
    assert_eq!(live, 10 * 3);
}

#[test]
fn initialization_is_deterministic() {
    for spec in specs() {
        let a = ScoreModel::new(spec.clone(), dims(6), 5).unwrap();
        let b = ScoreModel::new(spec.clone(), dims(6), 5).unwrap();
        let c = ScoreModel::new(spec, dims(6), 6).unwrap();
        let pa: Vec<_> = a.store.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        let pb: Vec<_> = b.store.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        let pc: Vec<_> = c.store.iter().map(|(_, v)| v.clone()).collect();
        assert_eq!(pa, pb);
        assert!(pa.iter().zip(&pc).any(|((_, x), y)| x != y));
    }
}

#[test]
fn hodge_tracks_of_depth_zero_reduce_to_the_attention_network() {
    let mut r = rng(90);
    let s = tame(noisy_state(&mut r, 6, 6, c33(), (3, 1, 1)));
    let cc = ScoreModelSpec::ScoreACc {
        attention: attention_spec(),
        hodge: HodgeSpec {
            depth: 0,
            num_linears: 1,
            hidden: 1,
            c_hid: 1,
            c_final: 1,
            heads: 1,
            attn_dim: 1,
        },
    };
    let base = ScoreModelSpec::ScoreABaseCc {
        attention: attention_spec(),
        hodge: BaseHodgeSpec {
            depth: 0,
            num_linears: 1,
            hidden: 1,
            c_hid: 1,
            c_final: 1,
        },
    };
    let a = ScoreModel::new(cc, dims(6), 4).unwrap();
    let b = ScoreModel::new(base, dims(6), 4).unwrap();
    assert_eq!(a.predict_flat(&a.store, &s).unwrap(), b.predict_flat(&b.store, &s).unwrap());
}

#[test]
fn spec_round_trips_through_json() {
    for spec in specs() {
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScoreModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}

#[test]
fn mismatched_input_is_rejected() {
    let mut r = rng(91);
    let s = noisy_state(&mut r, 5, 5, c33(), (3, 1, 1));
    let model = ScoreModel::new(specs().remove(0), dims(6), 0).unwrap();
    assert!(matches!(model.predict_flat(&model.store, &s), Err(ccsd::CcsdError::Shape(_))));
}

#[test]
fn compact_incidence_channels_match_dense_powers() {
    let mut r = rng(41);
    for (active, hodge) in [(6, true), (5, true), (6, false), (4, false)] {
        let s = noisy_state(&mut r, 6, active, c33(), (1, 1, 2));
        let rows = live_incidence_rows(6, active, &s.layout(), hodge);
        let mut masked = s.clone();
        let (m, k, f2) = s.f.dim();
        masked.f.fill(0.0);
        for &row in &rows {
            for c in 0..f2 {
                masked.f[[row / k, row % k, c]] = s.f[[row / k, row % k, c]];
            }
        }
        let dense = higher_order_incidence(masked.f.view(), 3).unwrap();
        let compact = incidence_channels(&s, &rows, 3);
        assert_eq!(compact.dim(), (rows.len(), 3 * f2));
        for (q, hq) in dense.iter().enumerate() {
            for (i, &row) in rows.iter().enumerate() {
                for c in 0..f2 {
                    let want = hq[[row / k, row % k, c]];
                    assert!((compact[[i, q * f2 + c]] - want).abs() <= 1e-10 * (1.0 + want.abs()), "q {q} row {row}");
                }
            }
        }
        assert!(m > 0);
    }
}

#[test]
fn library_gradcheck_suite_passes() {
    let reports = ccsd::nn::gradcheck::suite(40, 11).unwrap();
    assert_eq!(reports.len(), 12);
    for r in &reports {
        assert!(r.checked >= 25, "{}: {}", r.name, r.checked);
        assert!(r.worst_rel <= 1e-4, "{}: {} at {}", r.name, r.worst_rel, r.worst_param);
    }
}
