//! Denoising score matching for the three partial score networks.

use ndarray::{Array2, Array3, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::complex::ComplexTensor;
use crate::error::{ensure, CcsdError, Result};
use crate::nn::{flatten3, Gradients, ParamStore, ScoreModel, ScoreModelSpec, Tape};
use crate::sde::{LiveMask, RankSdes};

mod optim;

pub use optim::{Adam, Ema};

/// Weighting λ_r(t) of the per-rank objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// λ_r(t) = std_r(t)², which turns the objective into noise regression.
    #[default]
    SigmaSq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub ema_decay: Option<f64>,
    #[serde(default)]
    pub lambda: LambdaRule,
    /// Score penalization weights for ranks 0, 1, 2.
    #[serde(default)]
    pub gamma: [f64; 3],
    pub seed: u64,
    /// Test losses are evaluated every `eval_interval` epochs and after the last.
    pub eval_interval: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Time cutoff; `None` uses the largest per-rank default.
    #[serde(default)]
    pub eps: Option<f64>,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr > 0.0 && self.lr.is_finite(), Config, "train.lr must be > 0");
        ensure!(self.weight_decay >= 0.0, Config, "train.weight_decay must be >= 0");
        ensure!(self.batch_size >= 1, Config, "train.batch_size must be >= 1");
        ensure!(self.epochs >= 1, Config, "train.epochs must be >= 1");
        ensure!(self.eval_interval >= 1, Config, "train.eval_interval must be >= 1");
        if let Some(d) = self.ema_decay {
            ensure!(d > 0.0 && d < 1.0, Config, "train.ema_decay must lie in (0, 1)");
        }
        ensure!(self.gamma.iter().all(|&g| g >= 0.0), Config, "train.gamma entries must be >= 0");
        ensure!(
            (0.0..1.0).contains(&self.test_fraction),
            Config,
            "train.test_fraction must lie in [0, 1)"
        );
        if let Some(e) = self.eps {
            ensure!(e > 0.0, Config, "train.eps must be > 0");
        }
        Ok(())
    }
}

/// One perturbed batch element: the noised state and the injected noise.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub state: ComplexTensor,
    pub noise_x: Array2<f64>,
    pub noise_a: Array3<f64>,
    pub noise_f: Array3<f64>,
    pub t: f64,
    /// Kernel std of ranks 0, 1, 2 at `t`.
    pub std: [f64; 3],
    pub mask: LiveMask,
}

/// Noises all three tensors of `clean` at one uniform `t ∈ [eps, T]`. Noise is
/// drawn only on live entries; adjacency noise is symmetric.
pub fn perturb_element(
    clean: &ComplexTensor,
    sdes: &RankSdes,
    eps: f64,
    hodge_mask: bool,
    rng: &mut dyn RngCore,
) -> Result<Perturbed> {
    let horizon = sdes.horizon()?;
    ensure!(eps > 0.0 && eps < horizon, Domain, "time cutoff {eps} outside (0, {horizon})");
    let t = rng.gen_range(eps..=horizon);
    let mask = LiveMask::new(clean, hodge_mask);
    let mut noise_x = Array2::zeros(clean.x.raw_dim());
    for (z, &m) in noise_x.iter_mut().zip(&mask.x) {
        if m != 0.0 {
            *z = rng.sample(StandardNormal);
        }
    }
    let n = clean.n();
    let mut noise_a = Array3::zeros(clean.a.raw_dim());
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..clean.f1() {
                if mask.a[[i, j, c]] != 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    noise_a[[i, j, c]] = z;
                    noise_a[[j, i, c]] = z;
                }
            }
        }
    }
    let kx = sdes.x.kernel(t)?;
    let ka = sdes.a.kernel(t)?;
    let kf = sdes.f.kernel(t)?;
    let mut state = clean.clone();
    state.x = &clean.x * kx.mean_coeff + &noise_x * kx.std;
    state.a = &clean.a * ka.mean_coeff + &noise_a * ka.std;
    state.x *= &mask.x;
    state.a *= &mask.a;
    // The incidence is large and mostly masked, so it is built in one pass.
    let mut noise_f = Array3::zeros(clean.f.raw_dim());
    Zip::from(&mut state.f).and(&mut noise_f).and(&mask.f).for_each(|s, z, &m| {
        if m != 0.0 {
            let v: f64 = rng.sample(StandardNormal);
            *z = v;
            *s = m * (*s * kf.mean_coeff + v * kf.std);
        } else {
            *s = 0.0;
        }
    });
    Ok(Perturbed {
        state,
        noise_x,
        noise_a,
        noise_f,
        t,
        std: [kx.std, ka.std, kf.std],
        mask,
    })
}

/// Per-element objective of [`dsm_loss`] for a given flat network output
/// `pred` (a noise prediction in the layout of [`ScoreModel::forward`]):
/// mean over live entries of `(pred - ε)²` plus `γ·mean(pred²)/std²`.
pub fn dsm_objective(pred: &Array2<f64>, p: &Perturbed, rank: usize, gamma: f64) -> Result<f64> {
    let (target, mask) = rank_target(p, rank);
    ensure!(pred.dim() == target.dim(), Shape, "prediction {:?} vs target {:?}", pred.dim(), target.dim());
    let count = mask.sum();
    ensure!(count > 0.0, Domain, "element has no live entries");
    let mut err = 0.0;
    let mut norm = 0.0;
    Zip::from(pred).and(&target).and(&mask).for_each(|&y, &z, &m| {
        err += m * (y - z).powi(2);
        norm += m * y * y;
    });
    let std = p.std[rank];
    Ok(err / count + gamma * norm / (count * std * std))
}

/// Target and mask on the listed flat rows, the live count over all rows, and
/// `Σ ε²` over live entries outside the rows, where the network output is zero.
fn live_target(p: &Perturbed, rank: usize, rows: &[usize]) -> (Array2<f64>, Array2<f64>, f64, f64) {
    let (noise, mask) = match rank {
        1 => (&p.noise_a, &p.mask.a),
        _ => (&p.noise_f, &p.mask.f),
    };
    let (_, k, c) = noise.dim();
    let mut target = Array2::zeros((rows.len(), c));
    let mut live = Array2::zeros((rows.len(), c));
    let mut inside = 0.0;
    for (r, &row) in rows.iter().enumerate() {
        let (e, j) = (row / k, row % k);
        for ch in 0..c {
            let mv = mask[[e, j, ch]];
            target[[r, ch]] = noise[[e, j, ch]];
            live[[r, ch]] = mv;
            inside += mv * noise[[e, j, ch]].powi(2);
        }
    }
    let count = mask.sum();
    let total: f64 = noise.iter().zip(mask.iter()).map(|(z, m)| m * z * z).sum();
    (target, live, count, (total - inside).max(0.0))
}

/// Flat noise target and live mask of `rank`, matching the network output layout.
fn rank_target(p: &Perturbed, rank: usize) -> (Array2<f64>, Array2<f64>) {
    match rank {
        0 => (p.noise_x.clone(), p.mask.x.clone()),
        1 => (flatten3(&p.noise_a), flatten3(&p.mask.a)),
        _ => (flatten3(&p.noise_f), flatten3(&p.mask.f)),
    }
}

/// λ-weighted DSM loss of one network on a perturbed batch: for each element
/// the mean over live entries of `(net - ε)²` (which is `λ‖s - ∇log p‖²` with
/// `λ = std²` and `s = -net/std`), plus `γ·mean(s²)`; averaged over the batch.
/// Gradients are returned when `with_grad` is set.
pub fn dsm_loss(
    model: &ScoreModel,
    store: &ParamStore,
    batch: &[Perturbed],
    gamma: f64,
    with_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    ensure!(!batch.is_empty(), Domain, "empty batch");
    let rank = model.rank();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads: Option<Gradients> = None;
    for p in batch {
        let mut t = Tape::new();
        let (net, rows) = model.forward_live(&mut t, store, &p.state)?;
        let (target, mask, count, outside) = match rows {
            None => {
                let (target, mask) = rank_target(p, rank);
                let count = mask.sum();
                (target, mask, count, 0.0)
            }
            Some(rows) => live_target(p, rank, &rows),
        };
        if count == 0.0 {
            continue;
        }
        let eps = t.constant(target);
        let diff = t.sub(net, eps)?;
        let diff = t.mask(diff, &mask)?;
        let sq = t.square(diff);
        let s = t.sum(sq);
        let s = t.add_const(s, &Array2::from_elem((1, 1), outside))?;
        let mut loss = t.scale(s, scale / count);
        if gamma > 0.0 {
            let live = t.mask(net, &mask)?;
            let sq = t.square(live);
            let s = t.sum(sq);
            let std = p.std[rank];
            let pen = t.scale(s, gamma * scale / (count * std * std));
            loss = t.add(loss, pen)?;
        }
        total += t.value(loss)[[0, 0]];
        if with_grad {
            let g = t.backward(loss, store.len())?;
            grads = Some(match grads {
                None => g,
                Some(mut acc) => {
                    for (a, b) in acc.grads.iter_mut().zip(g.grads) {
                        match (a.as_mut(), b) {
                            (Some(a), Some(b)) => *a += &b,
                            (None, Some(b)) => *a = Some(b),
                            _ => {}
                        }
                    }
                    acc
                }
            });
        }
    }
    Ok((total, grads))
}

/// The three networks, one per rank.
#[derive(Debug, Clone)]
pub struct ScoreModels {
    pub x: ScoreModel,
    pub a: ScoreModel,
    pub f: ScoreModel,
}

impl ScoreModels {
    pub fn new(x: ScoreModel, a: ScoreModel, f: ScoreModel) -> Result<Self> {
        ensure!(
            x.rank() == 0 && a.rank() == 1 && f.rank() == 2,
            Config,
            "networks must score ranks 0, 1 and 2 in that order"
        );
        ensure!(x.dims == a.dims && a.dims == f.dims, Config, "networks built for different data dimensions");
        Ok(ScoreModels { x, a, f })
    }

    pub fn get(&self, rank: usize) -> &ScoreModel {
        match rank {
            0 => &self.x,
            1 => &self.a,
            _ => &self.f,
        }
    }

    pub fn get_mut(&mut self, rank: usize) -> &mut ScoreModel {
        match rank {
            0 => &mut self.x,
            1 => &mut self.a,
            _ => &mut self.f,
        }
    }

    /// Whether incidence noise is kept on each cell's own edges.
    pub fn hodge_mask(&self) -> bool {
        match &self.f.spec {
            ScoreModelSpec::ScoreF(s) => s.hodge_mask,
            _ => true,
        }
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss_x: f64,
    pub loss_a: f64,
    pub loss_f: f64,
    pub split: String,
}

impl LossRecord {
    pub fn losses(&self) -> [f64; 3] {
        [self.loss_x, self.loss_a, self.loss_f]
    }
}

/// Renders the loss curve as CSV with header `step,epoch,loss_x,loss_a,loss_f,split`.
pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("step,epoch,loss_x,loss_a,loss_f,split\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{}\n",
            r.step, r.epoch, r.loss_x, r.loss_a, r.loss_f, r.split
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Networks holding the final raw parameters.
    pub models: ScoreModels,
    /// EMA shadows of ranks 0, 1, 2 when EMA is enabled.
    pub ema: Option<[ParamStore; 3]>,
    /// Sampling parameters (EMA if enabled) with the lowest summed test loss.
    pub best: [ParamStore; 3],
    pub best_epoch: usize,
    pub curve: Vec<LossRecord>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl TrainOutcome {
    /// Parameters used for sampling: EMA shadows if present, else the raw ones.
    pub fn sampling_params(&self) -> [ParamStore; 3] {
        match &self.ema {
            Some(e) => e.clone(),
            None => [
                self.models.x.store.clone(),
                self.models.a.store.clone(),
                self.models.f.store.clone(),
            ],
        }
    }
}

/// Deterministic split of `len` items into `(train, test)` index lists.
pub fn split_indices(len: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5B17));
    let n_test = ((len as f64) * test_fraction).round() as usize;
    let n_test = n_test.min(len.saturating_sub(1));
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    (train, test)
}

fn check_finite(losses: [f64; 3], epoch: usize, step: usize) -> Result<()> {
    for (name, l) in ["loss_x", "loss_a", "loss_f"].iter().zip(losses) {
        if !l.is_finite() {
            return Err(CcsdError::NonFinite {
                tensor: format!("{name} (epoch {epoch})"),
                step,
            });
        }
    }
    Ok(())
}

fn perturb_all(
    items: &[&ComplexTensor],
    sdes: &RankSdes,
    eps: f64,
    hodge_mask: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Perturbed>> {
    items.iter().map(|c| perturb_element(c, sdes, eps, hodge_mask, rng)).collect()
}

/// Trains the three networks jointly on `data` (padded to the networks' `n_max`).
/// Every step perturbs a minibatch once and takes one Adam step per network.
/// `progress` is called after every step with the step's training record.
pub fn train(
    models: ScoreModels,
    data: &[ComplexTensor],
    cfg: &TrainConfig,
    sdes: &RankSdes,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!data.is_empty(), Domain, "training set is empty");
    let eps = cfg.eps.unwrap_or_else(|| sdes.default_eps());
    let hodge_mask = models.hodge_mask();
    let (train_idx, test_idx) = split_indices(data.len(), cfg.test_fraction, cfg.seed);
    let mut models = models;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adams: Vec<Adam> = (0..3)
        .map(|r| Adam::new(models.get(r).store.clone(), cfg.lr, cfg.weight_decay))
        .collect();
    let mut ema: Option<Vec<Ema>> = cfg
        .ema_decay
        .map(|d| (0..3).map(|r| Ema::new(models.get(r).store.clone(), d)).collect());
    let sample_store = |models: &ScoreModels, ema: &Option<Vec<Ema>>, r: usize| -> ParamStore {
        match ema {
            Some(e) => e[r].shadow.clone(),
            None => models.get(r).store.clone(),
        }
    };
    let mut best = [0, 1, 2].map(|r| sample_store(&models, &ema, r));
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut step = 0;
    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&ComplexTensor> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = perturb_all(&items, sdes, eps, hodge_mask, &mut rng)?;
            let mut losses = [0.0; 3];
            for r in 0..3 {
                let model = models.get(r);
                let (loss, grads) = dsm_loss(model, &model.store, &batch, cfg.gamma[r], true)?;
                losses[r] = loss;
                check_finite(losses, epoch, step)?;
                let grads = grads.expect("gradients requested");
                adams[r].step(&mut models.get_mut(r).store, &grads)?;
                if let Some(e) = ema.as_mut() {
                    e[r].update(&models.get(r).store)?;
                }
            }
            let rec = LossRecord {
                step,
                epoch,
                loss_x: losses[0],
                loss_a: losses[1],
                loss_f: losses[2],
                split: "train".into(),
            };
            progress(&rec);
            curve.push(rec);
            step += 1;
        }
        let last = epoch + 1 == cfg.epochs;
        if !test_idx.is_empty() && ((epoch + 1) % cfg.eval_interval == 0 || last) {
            // identical perturbations at every evaluation so test losses compare
            let mut test_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7E57));
            let items: Vec<&ComplexTensor> = test_idx.iter().map(|&i| &data[i]).collect();
            let batch = perturb_all(&items, sdes, eps, hodge_mask, &mut test_rng)?;
            let mut losses = [0.0; 3];
            let stores = [0, 1, 2].map(|r| sample_store(&models, &ema, r));
            for r in 0..3 {
                losses[r] = dsm_loss(models.get(r), &stores[r], &batch, cfg.gamma[r], false)?.0;
            }
            check_finite(losses, epoch, step)?;
            let total: f64 = losses.iter().sum();
            if total < best_loss {
                best_loss = total;
                best_epoch = epoch;
                best = stores;
            }
            curve.push(LossRecord {
                step,
                epoch,
                loss_x: losses[0],
                loss_a: losses[1],
                loss_f: losses[2],
                split: "test".into(),
            });
        }
    }
    if test_idx.is_empty() {
        best = [0, 1, 2].map(|r| sample_store(&models, &ema, r));
        best_epoch = cfg.epochs - 1;
    }
    Ok(TrainOutcome {
        models,
        ema: ema.map(|e| {
            let mut it = e.into_iter().map(|e| e.shadow);
            [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
        }),
        best,
        best_epoch,
        curve,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}
