//! Per-symbol score network trained by denoising score matching.
//!
//! The hidden layers see `(re / sigma, im / sigma, ln sigma)` and the two
//! outputs `o` are turned into a score as `s = (2 / sigma^2) * o`. Scaling
//! the position by `1 / sigma` keeps the inputs at unit spread across the
//! whole schedule, so small-noise levels are not squeezed into a sliver of
//! input space. A linear skip path from the raw `(re, im)` to the output
//! (initialized to `-I`) lets `o` represent `E[z_0 | z] - z` directly, so the
//! model extrapolates the linear growth of the score away from the
//! constellation instead of saturating with the hidden units. Training keeps
//! the skip matrix at its initial value: the far field at small noise levels
//! never sees data, and a trainable skip drifts there.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{cn_noise, NoiseSchedule};
use crate::constellation::ConstellationScheme;
use crate::error::{Error, Result};
use crate::mlp::{adam_step, AdamConfig, AdamState, Mlp, Workspace};
use crate::rng::{stream_rng, SimRng};
use crate::ScoreFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    net: Mlp,
}

impl ScoreModel {
    /// Randomly initialized model with the given hidden widths.
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::init(&Self::layout(hidden), 2, rng)?;
        let off = net.skip_offset();
        net.params_mut()[off..].copy_from_slice(&[-1.0, 0.0, 0.0, -1.0]);
        Ok(Self { net })
    }

    /// Model with every parameter (skip path included) set to zero.
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        Ok(Self { net: Mlp::zeros(&Self::layout(hidden), 2)? })
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if net.input_dim() != 3 || net.output_dim() != 2 || net.skip() != 2 {
            return Err(Error::Checkpoint(format!(
                "score model needs a 3-in/2-out network with a 2-wide skip, got {:?} skip {}",
                net.sizes(),
                net.skip()
            )));
        }
        Ok(Self { net })
    }

    fn layout(hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![3];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        sizes
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn features(z: Complex64, sigma: f64) -> [f64; 3] {
        [z.re / sigma, z.im / sigma, sigma.ln()]
    }

    /// Model score at a single point; `sigma` must be positive.
    pub fn forward(&self, z: Complex64, sigma: f64) -> Complex64 {
        let mut ws = Workspace::default();
        self.forward_ws(z, sigma, &mut ws)
    }

    fn forward_ws(&self, z: Complex64, sigma: f64, ws: &mut Workspace) -> Complex64 {
        self.net.forward_cached_with(&Self::features(z, sigma), &[z.re, z.im], ws);
        let o = ws.output();
        Complex64::new(o[0], o[1]) * (2.0 / (sigma * sigma))
    }

    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        self.net.write_checkpoint(out)
    }

    pub fn read_checkpoint<R: std::io::BufRead>(input: R) -> Result<Self> {
        Self::from_mlp(Mlp::read_checkpoint(input)?)
    }
}

impl ScoreFunction for ScoreModel {
    fn score(&self, z: Complex64, sigma: f64) -> Complex64 {
        self.forward(z, sigma)
    }

    fn score_seq(&self, z: &[Complex64], sigma: f64) -> Vec<Complex64> {
        let mut ws = Workspace::default();
        z.iter().map(|&v| self.forward_ws(v, sigma, &mut ws)).collect()
    }
}

/// Learning-rate schedule over the training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero at the last step.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, steps: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => {
                let t = step as f64 / steps.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidParameter(format!("unknown lr schedule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmConfig {
    pub schedule: NoiseSchedule,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for DsmConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::new(0.01, 10.0, 64).expect("valid default schedule"),
            batch_size: 256,
            learning_rate: 1e-4,
            lr_schedule: LrSchedule::Constant,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            steps: 20_000,
            seed: 0,
            hidden: vec![64, 64],
        }
    }
}

impl DsmConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One perturbed training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmSample {
    pub clean: Complex64,
    pub noisy: Complex64,
    pub sigma: f64,
}

impl DsmSample {
    /// Conditional score `grad log p(noisy | clean) = -(noisy - clean) / (sigma^2 / 2)`.
    pub fn target(&self) -> Complex64 {
        (self.clean - self.noisy) * (2.0 / (self.sigma * self.sigma))
    }
}

/// Perturbs each clean symbol at a level drawn uniformly from `1..=N`.
pub fn draw_samples<R: Rng + ?Sized>(
    clean: &[Complex64],
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Vec<DsmSample> {
    clean
        .iter()
        .map(|&z0| {
            let sigma = sched.sigma(rng.random_range(1..=sched.levels()));
            DsmSample { clean: z0, noisy: z0 + cn_noise(rng) * sigma, sigma }
        })
        .collect()
}

/// Mean weighted loss `(sigma^2 / 2) |s(noisy, sigma) - target|^2` over the
/// samples, with its exact parameter gradient.
pub fn dsm_loss_on(model: &ScoreModel, samples: &[DsmSample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let mut grads = vec![0.0; model.net.param_count()];
    let mut ws = Workspace::default();
    let inv_b = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let out = model.forward_ws(s.noisy, s.sigma, &mut ws);
        let r = out - s.target();
        let lambda = 0.5 * s.sigma * s.sigma;
        total += lambda * r.norm_sqr();
        // d/d(raw output) of lambda |(2/sigma^2) o - t|^2 is 2 r
        let dout = [2.0 * r.re * inv_b, 2.0 * r.im * inv_b];
        model.net.backward(&mut ws, &dout, &mut grads);
    }
    Ok((total * inv_b, grads))
}

/// Draws perturbations for `batch` and evaluates [`dsm_loss_on`].
pub fn dsm_loss<R: Rng + ?Sized>(
    model: &ScoreModel,
    batch: &[Complex64],
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    dsm_loss_on(model, &draw_samples(batch, sched, rng))
}

#[derive(Debug, Clone)]
pub struct TrainedScore {
    pub model: ScoreModel,
    /// Mean batch loss after each step.
    pub loss_trace: Vec<f64>,
}

/// Denoising score matching on uniformly drawn constellation symbols.
pub fn train_score(scheme: &ConstellationScheme, cfg: &DsmConfig) -> Result<TrainedScore> {
    train_score_with(scheme, cfg, |_, _| {})
}

/// [`train_score`] with a per-step `(step, loss)` callback.
pub fn train_score_with<F: FnMut(usize, f64)>(
    scheme: &ConstellationScheme,
    cfg: &DsmConfig,
    mut on_step: F,
) -> Result<TrainedScore> {
    cfg.validate()?;
    let mut model = ScoreModel::new(&cfg.hidden, &mut stream_rng(cfg.seed, 0))?;
    let mut data_rng: SimRng = stream_rng(cfg.seed, 1);
    let adam = cfg.adam();
    let mut state = AdamState::new(model.net.param_count());
    let skip_at = model.net.skip_offset();
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        batch.extend(
            (0..cfg.batch_size).map(|_| scheme.point(data_rng.random_range(0..scheme.order()))),
        );
        let (loss, mut grads) = dsm_loss(&model, &batch, &cfg.schedule, &mut data_rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        grads[skip_at..].fill(0.0);
        let step_cfg = AdamConfig {
            learning_rate: cfg.lr_schedule.rate(adam.learning_rate, step, cfg.steps),
            ..adam
        };
        adam_step(model.net.params_mut(), &grads, &mut state, &step_cfg)?;
        if !model.net.is_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
        trace.push(loss);
        on_step(step, loss);
    }
    Ok(TrainedScore { model, loss_trace: trace })
}

/// Writes a `step,loss` CSV.
pub fn write_loss_trace<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "loss"])?;
    for (k, l) in trace.iter().enumerate() {
        w.write_record([k.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
