use ndarray::{Array, Array2, Array3, Dimension};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{predictor_step, Corrector, Predictor, SamplerConfig, SdeSpec};
use crate::complex::ComplexTensor;
use crate::error::{ensure, CcsdError, Result};

/// Partial score functions of the coupled system. Each receives the full
/// joint state; the solver evaluates all three before updating anything.
pub trait ScoreSystem {
    fn score_x(&mut self, state: &ComplexTensor, t: f64) -> Result<Array2<f64>>;
    fn score_a(&mut self, state: &ComplexTensor, t: f64) -> Result<Array3<f64>>;
    fn score_f(&mut self, state: &ComplexTensor, t: f64) -> Result<Array3<f64>>;
}

/// Hook run on the state after the prior draw and after every step, with the
/// time the state now represents. Used for imputation.
pub trait Conditioner {
    fn condition(
        &mut self,
        element: usize,
        state: &mut ComplexTensor,
        t: f64,
        rng: &mut dyn rand::RngCore,
    ) -> Result<()>;
}

/// 0/1 masks of the entries allowed to carry mass.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveMask {
    pub x: Array2<f64>,
    pub a: Array3<f64>,
    pub f: Array3<f64>,
}

impl LiveMask {
    /// Active nodes, off-diagonal adjacency among them, and incidence entries of
    /// active cells (restricted to each cell's own edges when `hodge_mask` is set).
    pub fn new(template: &ComplexTensor, hodge_mask: bool) -> Self {
        let n = template.n();
        let active = template.active_nodes();
        let x = Array2::from_shape_fn((n, template.f0()), |(i, _)| f64::from(u8::from(i < active)));
        let a = Array3::from_shape_fn((n, n, template.f1()), |(i, j, _)| {
            f64::from(u8::from(i != j && i < active && j < active))
        });
        let layout = template.layout();
        let (m, k, f2) = template.f.dim();
        let mut f = Array3::zeros((m, k, f2));
        for j in 0..k {
            if !layout.cell_within(j, active) {
                continue;
            }
            if hodge_mask {
                for &e in layout.cell_edges(j) {
                    f.slice_mut(ndarray::s![e, j, ..]).fill(1.0);
                }
            } else {
                for e in 0..m {
                    let (u, v) = crate::complex::edge_pair(e, n).expect("edge index in range");
                    if u < active && v < active {
                        f.slice_mut(ndarray::s![e, j, ..]).fill(1.0);
                    }
                }
            }
        }
        LiveMask { x, a, f }
    }

    pub fn apply(&self, state: &mut ComplexTensor) {
        state.x *= &self.x;
        state.a *= &self.a;
        state.f *= &self.f;
    }
}

fn normal<D: Dimension>(shape: D, rng: &mut dyn rand::RngCore) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

/// Standard normal noise drawn on the upper triangle and mirrored; zero diagonal.
pub fn symmetric_noise(n: usize, channels: usize, rng: &mut dyn rand::RngCore) -> Array3<f64> {
    let mut z = Array3::zeros((n, n, channels));
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..channels {
                let v: f64 = rng.sample(StandardNormal);
                z[[i, j, c]] = v;
                z[[j, i, c]] = v;
            }
        }
    }
    z
}

fn symmetrize(s: &mut Array3<f64>) {
    let n = s.dim().0;
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..s.dim().2 {
                let v = 0.5 * (s[[i, j, c]] + s[[j, i, c]]);
                s[[i, j, c]] = v;
                s[[j, i, c]] = v;
            }
        }
    }
}

struct Noise {
    x: Array2<f64>,
    a: Array3<f64>,
    f: Array3<f64>,
}

impl Noise {
    fn draw(state: &ComplexTensor, mask: &LiveMask, rng: &mut dyn rand::RngCore) -> Self {
        let x = normal(state.x.raw_dim(), rng) * &mask.x;
        let a = symmetric_noise(state.n(), state.f1(), rng) * &mask.a;
        let f = normal(state.f.raw_dim(), rng) * &mask.f;
        Noise { x, a, f }
    }
}

/// Per-rank SDEs of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankSdes {
    pub x: SdeSpec,
    pub a: SdeSpec,
    pub f: SdeSpec,
}

impl RankSdes {
    pub fn horizon(&self) -> Result<f64> {
        let t = self.x.t_max;
        ensure!(
            self.a.t_max == t && self.f.t_max == t,
            Config,
            "all ranks must share one time horizon"
        );
        Ok(t)
    }

    pub fn default_eps(&self) -> f64 {
        self.x.default_eps().max(self.a.default_eps()).max(self.f.default_eps())
    }

    /// Draws `(X_T, A_T, F_T)` from the priors, shaped like `template` and masked.
    pub fn sample_prior(
        &self,
        template: &ComplexTensor,
        mask: &LiveMask,
        rng: &mut dyn rand::RngCore,
    ) -> ComplexTensor {
        let z = Noise::draw(template, mask, rng);
        let mut out = template.clone();
        out.x = z.x * self.x.prior_std();
        out.a = z.a * self.a.prior_std();
        out.f = z.f * self.f.prior_std();
        out
    }
}

struct Scores {
    x: Array2<f64>,
    a: Array3<f64>,
    f: Array3<f64>,
}

fn evaluate(
    system: &mut dyn ScoreSystem,
    state: &ComplexTensor,
    t: f64,
    mask: &LiveMask,
) -> Result<Scores> {
    let x = system.score_x(state, t)?;
    let mut a = system.score_a(state, t)?;
    let f = system.score_f(state, t)?;
    ensure!(x.dim() == state.x.dim(), Shape, "X score {:?} vs state {:?}", x.dim(), state.x.dim());
    ensure!(a.dim() == state.a.dim(), Shape, "A score {:?} vs state {:?}", a.dim(), state.a.dim());
    ensure!(f.dim() == state.f.dim(), Shape, "F score {:?} vs state {:?}", f.dim(), state.f.dim());
    symmetrize(&mut a);
    Ok(Scores {
        x: x * &mask.x,
        a: a * &mask.a,
        f: f * &mask.f,
    })
}

fn check_finite(state: &ComplexTensor, step: usize) -> Result<()> {
    for (name, ok) in [
        ("X", state.x.iter().all(|v| v.is_finite())),
        ("A", state.a.iter().all(|v| v.is_finite())),
        ("F", state.f.iter().all(|v| v.is_finite())),
    ] {
        if !ok {
            return Err(CcsdError::NonFinite {
                tensor: name.to_string(),
                step,
            });
        }
    }
    Ok(())
}

fn norm<D: Dimension>(a: &Array<f64, D>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Langevin step for one rank across the batch. The step size uses norms
/// averaged over batch elements, so it is not tied to one element's draw.
fn langevin_batch<D: Dimension>(
    states: &mut [&mut Array<f64, D>],
    scores: &[&Array<f64, D>],
    noise: &[&Array<f64, D>],
    snr: f64,
    scale_coeff: f64,
) {
    let b = states.len() as f64;
    let sn = scores.iter().map(|s| norm(s)).sum::<f64>() / b;
    if sn == 0.0 {
        log::warn!("Langevin step skipped: score norm is zero");
        return;
    }
    let zn = noise.iter().map(|z| norm(z)).sum::<f64>() / b;
    let alpha = 2.0 * (snr * zn / sn).powi(2);
    let sd = scale_coeff * (2.0 * alpha).sqrt();
    for ((x, s), z) in states.iter_mut().zip(scores).zip(noise) {
        x.zip_mut_with(s, |xi, &si| *xi += alpha * si);
        x.zip_mut_with(z, |xi, &zi| *xi += sd * zi);
    }
}

/// Integrates the coupled reverse-time system for one element. See
/// [`solve_reverse_batch`].
pub fn solve_reverse<R: rand::RngCore>(
    system: &mut dyn ScoreSystem,
    prior: &ComplexTensor,
    cfg: &SamplerConfig,
    sdes: &RankSdes,
    mask: &LiveMask,
    conditioner: Option<&mut dyn Conditioner>,
    rng: &mut R,
) -> Result<ComplexTensor> {
    let mut out = solve_reverse_batch(
        system,
        std::slice::from_ref(prior),
        std::slice::from_ref(mask),
        cfg,
        sdes,
        conditioner,
        std::slice::from_mut(rng),
    )?;
    Ok(out.pop().expect("batch of one"))
}

/// Integrates the coupled reverse-time system from the horizon down to the
/// cutoff and returns the noise-free mean of the final step (unquantized).
///
/// Each element draws noise from its own generator; elements interact only
/// through the Langevin step size.
pub fn solve_reverse_batch<R: rand::RngCore>(
    system: &mut dyn ScoreSystem,
    priors: &[ComplexTensor],
    masks: &[LiveMask],
    cfg: &SamplerConfig,
    sdes: &RankSdes,
    mut conditioner: Option<&mut dyn Conditioner>,
    rngs: &mut [R],
) -> Result<Vec<ComplexTensor>> {
    cfg.validate()?;
    ensure!(!priors.is_empty(), Domain, "empty batch");
    ensure!(
        priors.len() == masks.len() && priors.len() == rngs.len(),
        Shape,
        "batch of {} priors, {} masks, {} generators",
        priors.len(),
        masks.len(),
        rngs.len()
    );
    let horizon = sdes.horizon()?;
    let eps = cfg.eps_final.unwrap_or_else(|| sdes.default_eps());
    ensure!(eps < horizon, Config, "eps_final {eps} must be below the horizon {horizon}");
    let h = (horizon - eps) / cfg.num_steps as f64;

    let mut states: Vec<ComplexTensor> = priors.to_vec();
    for (b, state) in states.iter_mut().enumerate() {
        masks[b].apply(state);
        if let Some(c) = conditioner.as_deref_mut() {
            c.condition(b, state, horizon, &mut rngs[b])?;
        }
    }
    let mut means = states.clone();
    for step in 0..cfg.num_steps {
        let t = horizon - step as f64 * h;

        if cfg.corrector == Corrector::Langevin {
            let mut scores = Vec::with_capacity(states.len());
            let mut noise = Vec::with_capacity(states.len());
            for (b, state) in states.iter().enumerate() {
                scores.push(evaluate(system, state, t, &masks[b])?);
                noise.push(Noise::draw(state, &masks[b], &mut rngs[b]));
            }
            let (snr, sc) = (cfg.snr, cfg.scale_coeff);
            langevin_batch(
                &mut states.iter_mut().map(|s| &mut s.x).collect::<Vec<_>>(),
                &scores.iter().map(|s| &s.x).collect::<Vec<_>>(),
                &noise.iter().map(|z| &z.x).collect::<Vec<_>>(),
                snr,
                sc,
            );
            langevin_batch(
                &mut states.iter_mut().map(|s| &mut s.a).collect::<Vec<_>>(),
                &scores.iter().map(|s| &s.a).collect::<Vec<_>>(),
                &noise.iter().map(|z| &z.a).collect::<Vec<_>>(),
                snr,
                sc,
            );
            langevin_batch(
                &mut states.iter_mut().map(|s| &mut s.f).collect::<Vec<_>>(),
                &scores.iter().map(|s| &s.f).collect::<Vec<_>>(),
                &noise.iter().map(|z| &z.f).collect::<Vec<_>>(),
                snr,
                sc,
            );
            for (b, state) in states.iter_mut().enumerate() {
                masks[b].apply(state);
            }
        }

        for (b, state) in states.iter_mut().enumerate() {
            let mask = &masks[b];
            let s = evaluate(system, state, t, mask)?;
            let z = if cfg.predictor == Predictor::OdeFlow {
                Noise {
                    x: Array2::zeros(state.x.raw_dim()),
                    a: Array3::zeros(state.a.raw_dim()),
                    f: Array3::zeros(state.f.raw_dim()),
                }
            } else {
                Noise::draw(state, mask, &mut rngs[b])
            };
            let (px, mx) = predictor_step(&state.x, t, -h, &s.x, &sdes.x, cfg.predictor, &z.x);
            let (pa, ma) = predictor_step(&state.a, t, -h, &s.a, &sdes.a, cfg.predictor, &z.a);
            let (pf, mf) = predictor_step(&state.f, t, -h, &s.f, &sdes.f, cfg.predictor, &z.f);
            state.x = px;
            state.a = pa;
            state.f = pf;
            mask.apply(state);
            check_finite(state, step)?;

            let mean = &mut means[b];
            mean.x = mx;
            mean.a = ma;
            mean.f = mf;
            mask.apply(mean);
            if let Some(c) = conditioner.as_deref_mut() {
                c.condition(b, state, t - h, &mut rngs[b])?;
            }
        }
    }
    Ok(means)
}
