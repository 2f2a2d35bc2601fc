//! Toy digital semantic codec used to exercise joint decoder training.
//!
//! The encoder is a fixed per-axis quantizer: each source value in `[-1, 1]`
//! is binned into one of `side` equal-width cells and sent as the matching
//! square-QAM amplitude, two source values per complex symbol. Only the
//! decoder (a dense network) is trained.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{awgn_transmit, forward_diffuse, snr_to_sigma};
use crate::constellation::{ConstellationScheme, SchemeKind, SymbolSequence};
use crate::error::{Error, Result};
use crate::mlp::{adam_step, AdamConfig, AdamState, Mlp, Workspace};
use crate::rng::{stream_id, stream_rng};
use crate::sampler::{denoise_from_level, pc_sample, SamplerConfig};
use crate::ScoreFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceVector(Vec<f64>);

impl SourceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("source value {v} outside [-1, 1]")));
        }
        Ok(Self(values))
    }

    /// i.i.d. uniform on `[-1, 1]^dims`.
    pub fn random<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Self {
        Self((0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct QuantizingEncoder {
    scheme: ConstellationScheme,
    levels: Vec<f64>,
}

impl QuantizingEncoder {
    /// Requires a square QAM scheme.
    pub fn new(scheme: ConstellationScheme) -> Result<Self> {
        let levels = scheme.axis_levels().ok_or_else(|| {
            Error::InvalidParameter("quantizing encoder needs a square QAM scheme".into())
        })?;
        Ok(Self { scheme, levels })
    }

    pub fn scheme(&self) -> &ConstellationScheme {
        &self.scheme
    }

    /// Amplitude levels per axis.
    pub fn side(&self) -> usize {
        self.levels.len()
    }

    /// Width of one quantization cell in the source domain.
    pub fn cell_width(&self) -> f64 {
        2.0 / self.side() as f64
    }

    pub fn cell_of(&self, x: f64) -> usize {
        let k = ((x + 1.0) / self.cell_width()).floor();
        (k.max(0.0) as usize).min(self.side() - 1)
    }

    pub fn cell_center(&self, cell: usize) -> f64 {
        -1.0 + (cell as f64 + 0.5) * self.cell_width()
    }

    /// Mean squared quantization error of a uniform source, `width^2 / 12`.
    pub fn quantization_floor(&self) -> f64 {
        self.cell_width().powi(2) / 12.0
    }

    pub fn encode(&self, x: &SourceVector) -> Result<SymbolSequence> {
        if !x.dims().is_multiple_of(2) {
            return Err(Error::OddDimension(x.dims()));
        }
        Ok(x.values()
            .chunks_exact(2)
            .map(|p| {
                let idx = self
                    .scheme
                    .index_of_levels(self.cell_of(p[0]), self.cell_of(p[1]))
                    .expect("cell index within side");
                self.scheme.point(idx)
            })
            .collect::<Vec<_>>()
            .into())
    }

    /// Hard per-axis decision followed by reconstruction at the cell centers.
    pub fn dequantize(&self, z: &SymbolSequence) -> Vec<f64> {
        let side = self.side();
        z.values()
            .iter()
            .flat_map(|&v| {
                let m = self.scheme.nearest(v);
                [self.cell_center(m / side), self.cell_center(m % side)]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    net: Mlp,
}

impl DecoderModel {
    /// Network `[2n, hidden.., d]` with Glorot initialization.
    pub fn new<R: Rng + ?Sized>(symbols: usize, dims: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self { net: Mlp::init(&Self::layout(symbols, dims, hidden), 0, rng)? })
    }

    pub fn zeros(symbols: usize, dims: usize, hidden: &[usize]) -> Result<Self> {
        Ok(Self { net: Mlp::zeros(&Self::layout(symbols, dims, hidden), 0)? })
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if !net.input_dim().is_multiple_of(2) || net.skip() != 0 {
            return Err(Error::Checkpoint(format!("not a decoder layout: {:?}", net.sizes())));
        }
        Ok(Self { net })
    }

    fn layout(symbols: usize, dims: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![2 * symbols];
        sizes.extend_from_slice(hidden);
        sizes.push(dims);
        sizes
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn symbols(&self) -> usize {
        self.net.input_dim() / 2
    }

    pub fn dims(&self) -> usize {
        self.net.output_dim()
    }

    /// Forward pass clamped to `[-1, 1]`.
    pub fn decode(&self, z_hat: &SymbolSequence) -> Result<SourceVector> {
        if z_hat.len() != self.symbols() {
            return Err(Error::ShapeMismatch { expected: self.symbols(), actual: z_hat.len() });
        }
        let out = self.net.eval(&z_hat.to_reals());
        Ok(SourceVector(out.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()))
    }

    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        self.net.write_checkpoint(out)
    }

    pub fn read_checkpoint<R: std::io::BufRead>(input: R) -> Result<Self> {
        Self::from_mlp(Mlp::read_checkpoint(input)?)
    }
}

/// What the decoder sees during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderInput {
    /// Channel output after the reverse sampler.
    Denoised,
    /// Channel output as received.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for JointTrainConfig {
    fn default() -> Self {
        Self { steps: 2_000, batch_size: 64, learning_rate: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTraceRow {
    pub step: usize,
    pub loss: f64,
    pub snr_step: usize,
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub decoder: DecoderModel,
    pub trace: Vec<JointTraceRow>,
}

const PURPOSE_JOINT_SAMPLE: u8 = 1;
const PURPOSE_JOINT_LEVEL: u8 = 2;
const PURPOSE_EVAL: u8 = 3;

/// Stage-2 training: the score model stays frozen and only the decoder is
/// updated on `||x - D(z_hat)||^2`.
///
/// Every step draws one level `N_snr` uniformly from `1..=N`, corrupts a batch
/// of freshly encoded sources to that level and, for
/// [`DecoderInput::Denoised`], runs the reverse sampler from it.
pub fn joint_train<S: ScoreFunction + ?Sized>(
    enc: &QuantizingEncoder,
    mut dec: DecoderModel,
    score_fn: &S,
    sampler: &SamplerConfig,
    cfg: &JointTrainConfig,
    input: DecoderInput,
) -> Result<JointOutcome> {
    sampler.validate()?;
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("joint training needs batch >= 1 and lr > 0".into()));
    }
    let dims = dec.dims();
    if dims != 2 * dec.symbols() {
        return Err(Error::ShapeMismatch { expected: 2 * dec.symbols(), actual: dims });
    }
    let sched = &sampler.schedule;
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() };
    let mut state = AdamState::new(dec.net.param_count());
    let mut level_rng = stream_rng(cfg.seed, stream_id(0, 0, PURPOSE_JOINT_LEVEL));
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut ws = Workspace::default();
    for step in 0..cfg.steps {
        let level = level_rng.random_range(1..=sched.levels());
        let batch: Vec<(SourceVector, Vec<f64>)> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|b| {
                let mut rng =
                    stream_rng(cfg.seed, stream_id(step as u64, b as u64, PURPOSE_JOINT_SAMPLE));
                let x = SourceVector::random(dims, &mut rng);
                let z0 = enc.encode(&x)?;
                let noisy = forward_diffuse(&z0, level, sched, &mut rng)?;
                let seen = match input {
                    DecoderInput::Denoised => {
                        denoise_from_level(noisy, level, score_fn, sampler, &mut rng)?
                    }
                    DecoderInput::Raw => noisy,
                };
                Ok((x, seen.to_reals()))
            })
            .collect::<Result<_>>()?;

        let mut grads = vec![0.0; dec.net.param_count()];
        let mut loss = 0.0;
        let scale = 1.0 / (cfg.batch_size * dims) as f64;
        let mut dout = vec![0.0; dims];
        for (x, z) in &batch {
            dec.net.forward_cached(z, &mut ws);
            for ((d, o), t) in dout.iter_mut().zip(ws.output()).zip(x.values()) {
                let r = o - t;
                loss += r * r * scale;
                *d = 2.0 * r * scale;
            }
            dec.net.backward(&mut ws, &dout, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        adam_step(dec.net.params_mut(), &grads, &mut state, &adam)?;
        if !dec.net.is_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
        trace.push(JointTraceRow { step, loss, snr_step: level });
    }
    Ok(JointOutcome { decoder: dec, trace })
}

/// Per-dimension reconstruction MSE on `count` held-out sources.
///
/// `snr_db = None` is a noiseless link (the decoder sees the encoded symbols
/// directly). With `score_fn = Some(..)` the received symbols go through the
/// reverse sampler first.
pub fn evaluate_decoder<S: ScoreFunction + ?Sized>(
    enc: &QuantizingEncoder,
    dec: &DecoderModel,
    score_fn: Option<&S>,
    sampler: &SamplerConfig,
    snr_db: Option<f64>,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let dims = dec.dims();
    let errors: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, stream_id(0, k as u64, PURPOSE_EVAL));
            let x = SourceVector::random(dims, &mut rng);
            let z0 = enc.encode(&x)?;
            let seen = match snr_db {
                None => z0,
                Some(snr) => {
                    let rx = awgn_transmit(&z0, snr_to_sigma(snr, 1.0), &mut rng);
                    match score_fn {
                        Some(s) => pc_sample(&rx, snr, s, sampler, &mut rng)?,
                        None => rx,
                    }
                }
            };
            let x_hat = dec.decode(&seen)?;
            Ok(x.values().iter().zip(x_hat.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum::<f64>() / (count * dims) as f64)
}

/// Writes the `step,loss,snr_step` trace.
pub fn write_joint_trace<W: Write>(rows: &[JointTraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "loss", "snr_step"])?;
    for r in rows {
        w.write_record([r.step.to_string(), r.loss.to_string(), r.snr_step.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Whether `scheme` can drive a [`QuantizingEncoder`].
pub fn supports_encoder(scheme: &ConstellationScheme) -> bool {
    matches!(scheme.kind(), SchemeKind::SquareQam { .. })
}
