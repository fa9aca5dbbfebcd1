mod common;

use ccsd::complex::{CombinatorialComplex, DimConstraints, Graph};
use ccsd::data_io::{
    build_dataset, degree_features, gen_community_small, gen_grid_small, grid_graph, read_dataset, read_dataset_str,
    spec_hash, write_dataset, write_dataset_string, Checkpoint, CheckpointHeader, DatasetName, DatasetSpec,
    FORMAT_VERSION,
};
use ccsd::error::CcsdError;
use ccsd::lifting::LiftSpec;
use common::{mini_dataset, mini_models, random_complex, rng, vp_sdes};
use rand::Rng;

fn c33() -> DimConstraints {
    DimConstraints::new(3, 3).unwrap()
}

fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..g.n() {
        for j in i + 1..g.n() {
            if g.has_edge(i, j) {
                v.push((i, j));
            }
        }
    }
    v
}

fn is_bipartite(g: &Graph) -> bool {
    let mut color = vec![usize::MAX; g.n()];
    for s in 0..g.n() {
        if color[s] != usize::MAX {
            continue;
        }
        color[s] = 0;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for v in 0..g.n() {
                if g.has_edge(u, v) {
                    if color[v] == usize::MAX {
                        color[v] = 1 - color[u];
                        stack.push(v);
                    } else if color[v] == color[u] {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[test]
fn community_small_sizes_and_determinism() {
    let spec = DatasetSpec::community_small(3);
    let graphs = gen_community_small(&spec).unwrap();
    assert_eq!(graphs.len(), 100);
    assert!(graphs.iter().all(|g| (12..=19).contains(&g.n())));
    // both ends of the range show up over 100 draws
    assert!(graphs.iter().any(|g| g.n() <= 13) && graphs.iter().any(|g| g.n() >= 18));
    let again = gen_community_small(&spec).unwrap();
    assert!(graphs.iter().zip(&again).all(|(a, b)| a.n() == b.n() && edge_set(a) == edge_set(b)));
    let other = gen_community_small(&DatasetSpec::community_small(4)).unwrap();
    assert!(graphs.iter().zip(&other).any(|(a, b)| edge_set(a) != edge_set(b)));
}

#[test]
fn community_edges_are_mostly_inside_communities() {
    let graphs = gen_community_small(&DatasetSpec::community_small(5)).unwrap();
    let (mut inside, mut inside_pairs, mut across, mut across_pairs) = (0.0, 0.0, 0.0, 0.0);
    for g in &graphs {
        let first = g.n().div_ceil(2);
        for i in 0..g.n() {
            for j in i + 1..g.n() {
                let e = f64::from(u8::from(g.has_edge(i, j)));
                if (i < first) == (j < first) {
                    inside += e;
                    inside_pairs += 1.0;
                } else {
                    across += e;
                    across_pairs += 1.0;
                }
            }
        }
    }
    assert!((inside / inside_pairs - 0.7).abs() < 0.03);
    assert!((across / across_pairs - 0.05).abs() < 0.02);
}

#[test]
fn grid_small_shapes() {
    let g = grid_graph(4, 4).unwrap();
    assert_eq!(g.n(), 16);
    assert_eq!(edge_set(&g).len(), 24);
    let grids = gen_grid_small(&DatasetSpec::grid_small(1)).unwrap();
    assert_eq!(grids.len(), 100);
    assert!(grids.iter().all(|g| (16..=49).contains(&g.n())));
    assert_eq!(DatasetSpec::grid_small(1).max_nodes(), 49);
    for g in &grids {
        assert!(is_bipartite(g));
        // rows·(cols-1) + cols·(rows-1) edges for some side lengths in [4, 7]
        let e = edge_set(g).len();
        assert!((4..=7).any(|r| g.n() % r == 0 && (4..=7).contains(&(g.n() / r)) && {
            let c = g.n() / r;
            r * (c - 1) + c * (r - 1) == e
        }));
    }
}

#[test]
fn generated_graphs_are_simple() {
    let graphs = gen_community_small(&DatasetSpec::community_small(6)).unwrap();
    for g in graphs.iter().chain(&gen_grid_small(&DatasetSpec::grid_small(6)).unwrap()) {
        let a = g.adjacency();
        for i in 0..g.n() {
            assert_eq!(a[[i, i]], 0.0);
            for j in 0..g.n() {
                assert_eq!(a[[i, j]], a[[j, i]]);
                assert!(a[[i, j]] == 0.0 || a[[i, j]] == 1.0);
            }
        }
    }
}

#[test]
fn degree_features_are_one_hot() {
    let g = grid_graph(3, 3).unwrap();
    let x = degree_features(&g, 4);
    for v in 0..9 {
        assert_eq!(x.row(v).sum(), 1.0);
        assert_eq!(x[[v, g.degree(v).min(3)]], 1.0);
    }
    let clamped = degree_features(&g, 3);
    assert_eq!(clamped[[4, 2]], 1.0);
}

#[test]
fn lifted_dataset_cells_are_valid() {
    let mut spec = DatasetSpec::community_small(7);
    spec.count = 10;
    spec.lift = Some(LiftSpec::path(3, None, c33()).unwrap());
    let ccs = build_dataset(&spec, c33()).unwrap();
    assert_eq!(ccs.len(), 10);
    for cc in &ccs {
        cc.validate().unwrap();
        assert!(!cc.cells.is_empty());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = DatasetSpec::community_small(0);
    spec.count = 0;
    assert!(gen_community_small(&spec).is_err());
    let mut spec = DatasetSpec::community_small(0);
    spec.node_range = (9, 3);
    assert!(gen_community_small(&spec).is_err());
}

#[test]
fn jsonl_round_trip_on_random_complexes() {
    let mut r = rng(8);
    let ccs: Vec<CombinatorialComplex> = (0..50)
        .map(|_| {
            let n = r.gen_range(3..9);
            let mut cc = random_complex(&mut r, n, c33(), 3);
            // arbitrary reals must survive the text format bit for bit
            for v in cc.node_features.iter_mut() {
                *v = r.gen::<f64>() * 1e3 - 17.0 / 3.0;
            }
            cc
        })
        .collect();
    let text = write_dataset_string(&ccs).unwrap();
    assert_eq!(text.lines().count(), 50);
    let back = read_dataset_str(&text, "memory").unwrap();
    assert_eq!(back, ccs);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.jsonl");
    write_dataset(&path, &ccs).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ccs);
}

#[test]
fn malformed_record_reports_its_line() {
    let mut r = rng(9);
    let ccs: Vec<_> = (0..3).map(|_| random_complex(&mut r, 5, c33(), 2)).collect();
    let text = write_dataset_string(&ccs).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = "{\"n\": 4, \"x\": [[1.0]".into();
    let err = read_dataset_str(&lines.join("\n"), "broken.jsonl").unwrap_err();
    match err {
        CcsdError::Parse { path, line, .. } => {
            assert_eq!(line, 2);
            assert_eq!(path, "broken.jsonl");
        }
        e => panic!("unexpected error {e}"),
    }
    // structurally invalid but well-formed JSON is also located
    lines[1] = "{\"n\": 2, \"x\": [[1.0],[1.0]], \"edges\": [{\"nodes\": [0, 5], \"feature\": [1.0]}], \"f1\": 1, \"f2\": 1, \"cells_2\": [], \"constraints\": {\"d_min\": 3, \"d_max\": 3}}".into();
    match read_dataset_str(&lines.join("\n"), "bad.jsonl").unwrap_err() {
        CcsdError::Parse { line, .. } => assert_eq!(line, 2),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = read_dataset(std::path::Path::new("/nonexistent/none.jsonl")).unwrap_err();
    assert!(matches!(err, CcsdError::Io { .. }));
}

#[test]
fn file_dataset_reads_back_generated_complexes() {
    let mut spec = DatasetSpec::community_small(10);
    spec.count = 5;
    spec.lift = Some(LiftSpec::path(3, None, c33()).unwrap());
    let ccs = build_dataset(&spec, c33()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_dataset(&path, &ccs).unwrap();
    let file_spec = DatasetSpec {
        name: DatasetName::File,
        path: Some(path.to_string_lossy().into_owned()),
        lift: None,
        ..spec
    };
    assert_eq!(build_dataset(&file_spec, c33()).unwrap(), ccs);
}

fn header_for(models: &ccsd::training::ScoreModels) -> CheckpointHeader {
    let specs = [models.x.spec.clone(), models.a.spec.clone(), models.f.spec.clone()];
    CheckpointHeader {
        format_version: FORMAT_VERSION,
        spec_hash: spec_hash(&specs, &models.x.dims),
        models: specs,
        dims: models.x.dims,
        sdes: vp_sdes(),
        seed: 11,
        epoch: 3,
        ema: true,
    }
}

#[test]
fn checkpoint_round_trip_restores_forward_outputs() {
    let (data, dims) = mini_dataset(6, 12);
    let models = mini_models(dims, 13);
    let ckpt = Checkpoint::from_stores(header_for(&models), [&models.x.store, &models.a.store, &models.f.store]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let specs = [models.x.spec.clone(), models.a.spec.clone(), models.f.spec.clone()];
    loaded.check_compatible(&specs, &dims).unwrap();

    // fresh networks with different initial weights, then restored
    let mut fresh = mini_models(dims, 99);
    let before = fresh.a.predict_flat(&fresh.a.store, &data[0]).unwrap();
    let (x, a, f) = (&mut fresh.x.store, &mut fresh.a.store, &mut fresh.f.store);
    loaded.load_into([x, a, f]).unwrap();
    assert_ne!(before, models.a.predict_flat(&models.a.store, &data[0]).unwrap());
    for r in 0..3 {
        for d in &data {
            let want = models.get(r).predict_flat(&models.get(r).store, d).unwrap();
            let got = fresh.get(r).predict_flat(&fresh.get(r).store, d).unwrap();
            assert_eq!(want, got);
        }
    }
}

#[test]
fn checkpoint_refuses_version_and_hash_mismatch() {
    let (_, dims) = mini_dataset(6, 14);
    let models = mini_models(dims, 15);
    let ckpt = Checkpoint::from_stores(header_for(&models), [&models.x.store, &models.a.store, &models.f.store]);
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, CcsdError::Checkpoint(ref m) if m.contains("version")), "{err}");

    let mut other = header_for(&models).models;
    if let ccsd::nn::ScoreModelSpec::ScoreX(s) = &mut other[0] {
        s.nhid += 1;
    }
    let err = ckpt.check_compatible(&other, &dims).unwrap_err();
    assert!(matches!(err, CcsdError::Checkpoint(ref m) if m.contains("hash")), "{err}");

    let good = ckpt.to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&good[..good.len() - 3]).is_err());
    assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
}
