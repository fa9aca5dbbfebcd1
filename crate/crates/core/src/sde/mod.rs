//! Forward noising processes (VP, VE, sub-VP), their Gaussian transition
//! kernels, and single reverse-time integration steps.

mod solver;

pub use solver::{solve_reverse, solve_reverse_batch, symmetric_noise, Conditioner, LiveMask, RankSdes, ScoreSystem};

use ndarray::{Array, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeKind {
    Vp,
    Ve,
    SubVp,
}

/// One forward SDE. For VE processes `beta_min`/`beta_max` hold
/// `sigma_min`/`sigma_max`, which is how the hyperparameter tables list them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub kind: SdeKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub num_steps: usize,
    #[serde(default = "default_horizon")]
    pub t_max: f64,
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    pub mean_coeff: f64,
    pub std: f64,
}

impl SdeSpec {
    pub fn new(kind: SdeKind, beta_min: f64, beta_max: f64, num_steps: usize) -> Result<Self> {
        let spec = SdeSpec {
            kind,
            beta_min,
            beta_max,
            num_steps,
            t_max: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vp(beta_min: f64, beta_max: f64) -> Self {
        Self::new(SdeKind::Vp, beta_min, beta_max, 1000).expect("valid VP parameters")
    }

    pub fn ve(sigma_min: f64, sigma_max: f64) -> Self {
        Self::new(SdeKind::Ve, sigma_min, sigma_max, 1000).expect("valid VE parameters")
    }

    pub fn sub_vp(beta_min: f64, beta_max: f64) -> Self {
        Self::new(SdeKind::SubVp, beta_min, beta_max, 1000).expect("valid sub-VP parameters")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.beta_min > 0.0 && self.beta_min < self.beta_max,
            Config,
            "need 0 < beta_min < beta_max, got {} and {}",
            self.beta_min,
            self.beta_max
        );
        ensure!(self.num_steps >= 1, Config, "num_steps must be >= 1");
        ensure!(self.t_max > 0.0, Config, "horizon must be positive");
        Ok(())
    }

    pub fn sigma_min(&self) -> f64 {
        self.beta_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.beta_max
    }

    /// Lower integration cutoff used when none is configured.
    pub fn default_eps(&self) -> f64 {
        match self.kind {
            SdeKind::Ve => 1e-5,
            SdeKind::Vp | SdeKind::SubVp => 1e-3,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// ∫₀ᵗ β(s) ds
    pub fn integrated_beta(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * t * t * (self.beta_max - self.beta_min)
    }

    fn ve_sigma(&self, t: f64) -> f64 {
        self.sigma_min() * (self.sigma_max() / self.sigma_min()).powf(t)
    }

    /// Linear drift coefficient `a(t)` with `f(x, t) = a(t)·x`, and diffusion `g(t)`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        match self.kind {
            SdeKind::Vp => (-0.5 * self.beta(t), self.beta(t).sqrt()),
            SdeKind::Ve => {
                let ratio = self.sigma_max() / self.sigma_min();
                (0.0, self.ve_sigma(t) * (2.0 * ratio.ln()).sqrt())
            }
            SdeKind::SubVp => {
                let discount = 1.0 - (-2.0 * self.integrated_beta(t)).exp();
                (-0.5 * self.beta(t), (self.beta(t) * discount).sqrt())
            }
        }
    }

    pub fn drift_diffusion<D: Dimension>(&self, x: &Array<f64, D>, t: f64) -> (Array<f64, D>, f64) {
        let (a, g) = self.coefficients(t);
        (x * a, g)
    }

    pub fn kernel(&self, t: f64) -> Result<TransitionKernel> {
        ensure!(
            (0.0..=self.t_max * (1.0 + 1e-12)).contains(&t),
            Domain,
            "time {t} outside [0, {}]",
            self.t_max
        );
        Ok(match self.kind {
            SdeKind::Vp => {
                let ib = self.integrated_beta(t);
                TransitionKernel {
                    mean_coeff: (-0.5 * ib).exp(),
                    std: (-(-ib).exp_m1()).sqrt(),
                }
            }
            SdeKind::Ve => TransitionKernel {
                mean_coeff: 1.0,
                std: self.ve_sigma(t),
            },
            SdeKind::SubVp => {
                let ib = self.integrated_beta(t);
                TransitionKernel {
                    mean_coeff: (-0.5 * ib).exp(),
                    std: -(-ib).exp_m1(),
                }
            }
        })
    }

    /// Standard deviation of the prior the reverse process starts from.
    pub fn prior_std(&self) -> f64 {
        match self.kind {
            SdeKind::Ve => self.sigma_max(),
            SdeKind::Vp | SdeKind::SubVp => 1.0,
        }
    }

    /// Discretized (drift increment, noise scale) over a step of length `h`
    /// ending at `t`, as used by the ancestral reverse-diffusion predictor.
    fn discretize(&self, t: f64, h: f64) -> (f64, f64) {
        match self.kind {
            SdeKind::Vp => {
                let b = self.beta(t) * h;
                ((1.0 - b).sqrt() - 1.0, b.sqrt())
            }
            SdeKind::Ve => {
                let prev = self.ve_sigma((t - h).max(0.0));
                let cur = self.ve_sigma(t);
                (0.0, (cur * cur - prev * prev).max(0.0).sqrt())
            }
            SdeKind::SubVp => {
                let (a, g) = self.coefficients(t);
                (a * h, g * h.sqrt())
            }
        }
    }
}

/// Noised sample `x_t` and the exact conditional score `∇ log p_0t(x_t | x0)`.
pub fn perturb<D: Dimension>(
    x0: &Array<f64, D>,
    spec: &SdeSpec,
    t: f64,
    noise: &Array<f64, D>,
) -> Result<(Array<f64, D>, Array<f64, D>)> {
    ensure!(x0.shape() == noise.shape(), Shape, "noise shape {:?} vs {:?}", noise.shape(), x0.shape());
    let k = spec.kernel(t)?;
    ensure!(k.std > 0.0, Domain, "kernel std is zero at t = {t}");
    let xt = x0 * k.mean_coeff + noise * k.std;
    let target = noise * (-1.0 / k.std);
    Ok((xt, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    EulerMaruyama,
    ReverseDiffusion,
    OdeFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corrector {
    None,
    Langevin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub predictor: Predictor,
    pub corrector: Corrector,
    pub snr: f64,
    pub scale_coeff: f64,
    pub num_steps: usize,
    /// Lower time cutoff; when absent the largest per-rank default is used.
    #[serde(default)]
    pub eps_final: Option<f64>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_steps >= 1, Config, "sampler num_steps must be >= 1");
        if self.corrector == Corrector::Langevin {
            ensure!(self.snr > 0.0, Config, "Langevin corrector needs snr > 0");
        }
        if let Some(eps) = self.eps_final {
            ensure!(eps > 0.0 && eps < 0.5, Config, "eps_final {eps} out of range");
        }
        Ok(())
    }
}

/// One reverse-time predictor step with `dt < 0`. Returns `(sample, mean)`,
/// where the mean omits the injected noise.
pub fn predictor_step<D: Dimension>(
    x: &Array<f64, D>,
    t: f64,
    dt: f64,
    score: &Array<f64, D>,
    spec: &SdeSpec,
    kind: Predictor,
    noise: &Array<f64, D>,
) -> (Array<f64, D>, Array<f64, D>) {
    let h = dt.abs();
    let (a, g) = spec.coefficients(t);
    match kind {
        Predictor::EulerMaruyama => {
            let mean = x + &((x * a - score * (g * g)) * dt);
            let sample = &mean + &(noise * (g * h.sqrt()));
            (sample, mean)
        }
        Predictor::ReverseDiffusion => {
            let (fd, big_g) = spec.discretize(t, h);
            let mean = x - &(x * fd - score * (big_g * big_g));
            let sample = &mean + &(noise * big_g);
            (sample, mean)
        }
        Predictor::OdeFlow => {
            let mean = x + &((x * a - score * (0.5 * g * g)) * dt);
            (mean.clone(), mean)
        }
    }
}

/// Langevin step size `2 (snr ‖z‖ / ‖score‖)²`, or `None` when the score vanishes.
pub fn langevin_step_size<D: Dimension>(
    score: &Array<f64, D>,
    noise: &Array<f64, D>,
    snr: f64,
) -> Option<f64> {
    let sn = score.iter().map(|v| v * v).sum::<f64>().sqrt();
    if sn == 0.0 {
        return None;
    }
    let zn = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(2.0 * (snr * zn / sn).powi(2))
}

/// One Langevin corrector step at fixed time. Returns `(sample, mean)`.
pub fn langevin_correct<D: Dimension>(
    x: &Array<f64, D>,
    score: &Array<f64, D>,
    noise: &Array<f64, D>,
    snr: f64,
    scale_coeff: f64,
) -> (Array<f64, D>, Array<f64, D>) {
    match langevin_step_size(score, noise, snr) {
        None => {
            log::warn!("Langevin step skipped: score norm is zero");
            (x.clone(), x.clone())
        }
        Some(alpha) => {
            let mean = x + &(score * alpha);
            let sample = &mean + &(noise * (scale_coeff * (2.0 * alpha).sqrt()));
            (sample, mean)
        }
    }
}
