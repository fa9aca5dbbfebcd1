mod common;

use ccsd::complex::ComplexTensor;
use ccsd::error::CcsdError;
use ccsd::nn::{flatten3, Gradients, ParamStore};
use ccsd::training::{
    dsm_loss, dsm_objective, loss_csv, perturb_element, split_indices, train, Adam, Ema, LambdaRule, Perturbed,
    TrainConfig,
};
use common::{mini_dataset, mini_models, rng, vp_sdes};
use ndarray::{array, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn config(batch_size: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        weight_decay: 1e-4,
        batch_size,
        epochs,
        ema_decay: Some(0.999),
        lambda: LambdaRule::SigmaSq,
        gamma: [0.0; 3],
        seed: 7,
        eval_interval: 1,
        test_fraction: 0.2,
        eps: None,
    }
}

fn flat_noise(p: &Perturbed, rank: usize) -> Array2<f64> {
    match rank {
        0 => p.noise_x.clone(),
        1 => flatten3(&p.noise_a),
        _ => flatten3(&p.noise_f),
    }
}

fn live_count(p: &Perturbed, rank: usize) -> f64 {
    match rank {
        0 => p.mask.x.sum(),
        1 => p.mask.a.sum(),
        _ => p.mask.f.sum(),
    }
}

fn padded_element(data: &[ComplexTensor]) -> &ComplexTensor {
    data.iter().find(|d| d.active_nodes() < d.n()).expect("some graph is smaller than n_max")
}

#[test]
fn perfect_prediction_leaves_only_the_penalty() {
    let (data, _) = mini_dataset(6, 1);
    let mut r = rng(2);
    let p = perturb_element(&data[0], &vp_sdes(), 1e-3, true, &mut r).unwrap();
    for rank in 0..3 {
        let eps = flat_noise(&p, rank);
        assert_eq!(dsm_objective(&eps, &p, rank, 0.0).unwrap(), 0.0);
        let gamma = 0.3;
        let std = p.std[rank];
        // mean of the squared score target -ε/std over live entries
        let target_sq = eps.iter().map(|z| z * z).sum::<f64>() / live_count(&p, rank) / (std * std);
        let got = dsm_objective(&eps, &p, rank, gamma).unwrap();
        assert!((got - gamma * target_sq).abs() <= 1e-12 * (1.0 + got), "rank {rank}: {got}");
    }
}

#[test]
fn zero_prediction_has_unit_loss_in_expectation() {
    let (data, _) = mini_dataset(6, 3);
    let mut r = rng(4);
    let sdes = vp_sdes();
    let mut sums = [0.0; 3];
    let mut counts = [0.0; 3];
    for trial in 0..400 {
        let p = perturb_element(&data[trial % data.len()], &sdes, 1e-3, true, &mut r).unwrap();
        for rank in 0..3 {
            let zero = Array2::zeros(flat_noise(&p, rank).dim());
            let c = live_count(&p, rank);
            sums[rank] += dsm_objective(&zero, &p, rank, 0.0).unwrap() * c;
            counts[rank] += c;
        }
    }
    for rank in 0..3 {
        let m = sums[rank] / counts[rank];
        assert!((m - 1.0).abs() < 0.05, "rank {rank}: {m}");
    }
}

#[test]
fn score_target_second_moment_is_d_over_std_squared() {
    // E‖∇ log p_0t‖² = d / std², recomputed from the perturbed state itself
    let (data, _) = mini_dataset(6, 5);
    let sdes = vp_sdes();
    let mut r = rng(6);
    let mut ratio = [0.0; 3];
    let mut total_d = [0.0; 3];
    for trial in 0..3000 {
        let clean = &data[trial % data.len()];
        let p = perturb_element(clean, &sdes, 1e-3, true, &mut r).unwrap();
        let spec = [&sdes.x, &sdes.a, &sdes.f];
        for rank in 0..3 {
            let k = spec[rank].kernel(p.t).unwrap();
            let (xt, x0, mask) = match rank {
                0 => (p.state.x.clone(), clean.x.clone(), p.mask.x.clone()),
                1 => (flatten3(&p.state.a), flatten3(&clean.a), flatten3(&p.mask.a)),
                _ => (flatten3(&p.state.f), flatten3(&clean.f), flatten3(&p.mask.f)),
            };
            let score = (&xt - &(&x0 * k.mean_coeff)) * &mask / -(k.std * k.std);
            let norm_sq: f64 = score.iter().map(|v| v * v).sum();
            // weight each element by d so the ratio is a pooled estimate
            ratio[rank] += norm_sq * k.std * k.std;
            total_d[rank] += mask.sum();
        }
    }
    for rank in 0..3 {
        let est = ratio[rank] / total_d[rank];
        assert!((est - 1.0).abs() < 0.02, "rank {rank}: {est}");
    }
}

#[test]
fn network_loss_matches_objective_of_its_prediction() {
    let (data, dims) = mini_dataset(6, 7);
    let models = mini_models(dims, 8);
    let mut r = rng(9);
    let batch: Vec<_> = data[..3]
        .iter()
        .map(|d| perturb_element(d, &vp_sdes(), 1e-3, true, &mut r).unwrap())
        .collect();
    for rank in 0..3 {
        let m = models.get(rank);
        for gamma in [0.0, 0.5] {
            let (loss, grads) = dsm_loss(m, &m.store, &batch, gamma, false).unwrap();
            assert!(grads.is_none());
            let want: f64 = batch
                .iter()
                .map(|p| dsm_objective(&m.predict_flat(&m.store, &p.state).unwrap(), p, rank, gamma).unwrap())
                .sum::<f64>()
                / batch.len() as f64;
            assert!((loss - want).abs() <= 1e-10 * (1.0 + want), "rank {rank}: {loss} vs {want}");
        }
    }
}

#[test]
fn penalty_strictly_increases_the_loss() {
    let (data, dims) = mini_dataset(6, 10);
    let models = mini_models(dims, 11);
    let mut r = rng(12);
    let batch = vec![perturb_element(&data[1], &vp_sdes(), 1e-3, true, &mut r).unwrap()];
    for rank in 0..3 {
        let m = models.get(rank);
        let base = dsm_loss(m, &m.store, &batch, 0.0, false).unwrap().0;
        let pen = dsm_loss(m, &m.store, &batch, 0.1, false).unwrap().0;
        assert!(pen > base, "rank {rank}");
    }
}

#[test]
fn padded_entries_do_not_change_the_loss() {
    let (data, dims) = mini_dataset(12, 13);
    let models = mini_models(dims, 14);
    let clean = padded_element(&data);
    let active = clean.active_nodes();
    let mut r = rng(15);
    let p = perturb_element(clean, &vp_sdes(), 1e-3, true, &mut r).unwrap();
    let mut q = p.clone();
    let n = clean.n();
    let mut junk = || -> f64 { r.sample(StandardNormal) };
    for i in active..n {
        q.state.x.row_mut(i).mapv_inplace(|_| junk());
        q.noise_x.row_mut(i).mapv_inplace(|_| junk());
        for j in 0..n {
            q.noise_a[[i, j, 0]] = junk();
            q.noise_a[[j, i, 0]] = junk();
        }
    }
    for (v, &m) in q.noise_f.iter_mut().zip(p.mask.f.iter()) {
        if m == 0.0 {
            *v = junk();
        }
    }
    for rank in 0..3 {
        let m = models.get(rank);
        let a = dsm_loss(m, &m.store, std::slice::from_ref(&p), 0.2, false).unwrap().0;
        let b = dsm_loss(m, &m.store, std::slice::from_ref(&q), 0.2, false).unwrap().0;
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "rank {rank}: {a} vs {b}");
    }
}

#[test]
fn empty_batch_is_rejected() {
    let (_, dims) = mini_dataset(6, 16);
    let models = mini_models(dims, 17);
    let err = dsm_loss(&models.x, &models.x.store, &[], 0.0, false).unwrap_err();
    assert!(matches!(err, CcsdError::Domain(_)));
}

fn single_param_store(value: Array2<f64>) -> ParamStore {
    let mut s = ParamStore::new(0);
    s.insert("w", value);
    s
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut store = single_param_store(array![[1.0, -2.0], [0.5, 3.0]]);
    let before = store.value(store.id("w").unwrap()).clone();
    let mut adam = Adam::new(store.clone(), 1e-2, 0.0);
    let grads = Gradients { grads: vec![Some(Array2::zeros((2, 2)))] };
    for _ in 0..5 {
        adam.step(&mut store, &grads).unwrap();
    }
    assert_eq!(store.value(store.id("w").unwrap()), &before);
    assert_eq!(adam.steps(), 5);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let init = array![[1.0, -2.0, 0.5]];
    let g = array![[0.3, -4.0, 1e-3]];
    let lr = 1e-2;
    let mut store = single_param_store(init.clone());
    let mut adam = Adam::new(store.clone(), lr, 0.0);
    adam.step(&mut store, &Gradients { grads: vec![Some(g.clone())] }).unwrap();
    let after = store.value(store.id("w").unwrap());
    for k in 0..3 {
        // bias-corrected first step is g / (|g| + 1e-8)
        let want = init[[0, k]] - lr * g[[0, k]] / (g[[0, k]].abs() + 1e-8);
        assert!((after[[0, k]] - want).abs() < 1e-15, "{k}");
        assert!(((after[[0, k]] - init[[0, k]]).abs() - lr).abs() < lr * 1e-5);
    }
}

#[test]
fn adam_weight_decay_is_decoupled() {
    let mut store = single_param_store(array![[2.0]]);
    let mut adam = Adam::new(store.clone(), 0.1, 0.5);
    adam.step(&mut store, &Gradients { grads: vec![None] }).unwrap();
    // no gradient: only the decay term 2.0 - 0.1·0.5·2.0
    assert!((store.value(store.id("w").unwrap())[[0, 0]] - 1.9).abs() < 1e-15);
}

#[test]
fn ema_fixed_point_and_contraction() {
    let p = single_param_store(array![[1.5, -0.5]]);
    let mut ema = Ema::new(p.clone(), 0.999);
    ema.update(&p).unwrap();
    assert_eq!(ema.shadow.value(ema.shadow.id("w").unwrap()), p.value(p.id("w").unwrap()));

    let target = single_param_store(array![[4.0, 2.0]]);
    let mut ema = Ema::new(p, 0.9);
    for k in 1..=20 {
        ema.update(&target).unwrap();
        let s = ema.shadow.value(ema.shadow.id("w").unwrap());
        let want0 = 4.0 + (1.5 - 4.0) * 0.9f64.powi(k);
        assert!((s[[0, 0]] - want0).abs() < 1e-12, "step {k}");
    }
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let (train_a, test_a) = split_indices(100, 0.2, 3);
    let (train_b, test_b) = split_indices(100, 0.2, 3);
    assert_eq!((train_a.clone(), test_a.clone()), (train_b, test_b));
    assert_eq!(test_a.len(), 20);
    let mut all: Vec<usize> = train_a.iter().chain(&test_a).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_ne!(split_indices(100, 0.2, 4).1, test_a);
}

#[test]
fn frozen_seed_gives_identical_curves() {
    let (data, dims) = mini_dataset(10, 18);
    let cfg = config(4, 2);
    let a = train(mini_models(dims, 19), &data, &cfg, &vp_sdes(), |_| {}).unwrap();
    let b = train(mini_models(dims, 19), &data, &cfg, &vp_sdes(), |_| {}).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(loss_csv(&a.curve), loss_csv(&b.curve));
    for r in 0..3 {
        assert_eq!(a.best[r].iter().collect::<Vec<_>>(), b.best[r].iter().collect::<Vec<_>>());
    }
    assert!(a.curve.iter().any(|r| r.split == "test"));
}

#[test]
fn nan_loss_aborts_with_diagnostics() {
    let (data, dims) = mini_dataset(10, 20);
    let mut models = mini_models(dims, 21);
    let id = models.a.store.ids().next().unwrap();
    models.a.store.value_mut(id).fill(f64::NAN);
    let err = train(models, &data, &config(4, 1), &vp_sdes(), |_| {}).unwrap_err();
    match err {
        CcsdError::NonFinite { tensor, step } => {
            assert!(tensor.contains("loss_a") && tensor.contains("epoch 0"), "{tensor}");
            assert_eq!(step, 0);
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn toy_run_halves_every_loss() {
    let (data, dims) = mini_dataset(20, 22);
    let mut cfg = config(4, 50);
    cfg.eval_interval = 10;
    let out = train(mini_models(dims, 23), &data, &cfg, &vp_sdes(), |_| {}).unwrap();
    let steps: Vec<[f64; 3]> = out.curve.iter().filter(|r| r.split == "train").map(|r| r.losses()).collect();
    assert_eq!(steps.len(), 200);
    let avg = |s: &[[f64; 3]], r: usize| s.iter().map(|l| l[r]).sum::<f64>() / s.len() as f64;
    for r in 0..3 {
        let first = avg(&steps[..10], r);
        let last = avg(&steps[190..], r);
        assert!(last <= 0.5 * first, "rank {r}: {first} -> {last}");
    }
}

#[test]
fn config_validation_rejects_bad_values() {
    let mut cfg = config(4, 1);
    assert!(cfg.validate().is_ok());
    cfg.lr = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = config(4, 1);
    cfg.ema_decay = Some(1.0);
    assert!(cfg.validate().is_err());
    let mut cfg = config(4, 1);
    cfg.gamma = [0.0, -1.0, 0.0];
    assert!(cfg.validate().is_err());
}
