//! Score-based channel denoising for digitally modulated symbols.
//!
//! The crate simulates an AWGN link carrying QAM/BPSK symbols, treats the
//! channel corruption as a drift-free (variance-exploding) forward diffusion,
//! and removes it again with a predictor-corrector reverse sampler driven by
//! either the exact Gaussian-mixture score of the constellation or a small
//! per-symbol network trained by denoising score matching.
//!
//! Module map:
//!
//! * [`constellation`] - alphabets, Gray labels, modulation and hard decisions.
//! * [`channel`] - SNR arithmetic, AWGN, the geometric noise schedule and the
//!   forward processes (drift-free and drifted reference).
//! * [`oracle`] - closed-form mixture score, log-density and posterior mean.
//! * [`mlp`] / [`score_net`] - dense network with hand-written backprop, Adam,
//!   and the denoising score-matching trainer.
//! * [`sampler`] - predictor and Langevin corrector steps and the full sampler.
//! * [`codec`] - quantizing encoder, trainable decoder and joint training.
//! * [`harness`] - metrics, configuration, SNR sweeps and CSV emitters.

pub mod channel;
pub mod codec;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod score_net;

pub use num_complex::Complex64;

pub use crate::channel::{NoiseSchedule, ChannelConfig};
pub use crate::constellation::{ConstellationScheme, SymbolSequence};
pub use crate::error::{Error, Result};
pub use crate::oracle::MixtureScoreOracle;
pub use crate::sampler::SamplerConfig;
pub use crate::score_net::{DsmConfig, ScoreModel};

/// Anything that can evaluate the score of the noise-perturbed symbol density.
///
/// The returned value is the gradient of `log p_sigma` with respect to the
/// real and imaginary coordinates, packed as a complex number. `sigma` is the
/// total complex noise standard deviation and must be positive.
pub trait ScoreFunction: Sync {
    fn score(&self, z: Complex64, sigma: f64) -> Complex64;

    /// Evaluates the score symbol by symbol over a whole sequence.
    fn score_seq(&self, z: &[Complex64], sigma: f64) -> Vec<Complex64> {
        z.iter().map(|&v| self.score(v, sigma)).collect()
    }
}

impl<T: ScoreFunction + ?Sized> ScoreFunction for &T {
    fn score(&self, z: Complex64, sigma: f64) -> Complex64 {
        (**self).score(z, sigma)
    }

    fn score_seq(&self, z: &[Complex64], sigma: f64) -> Vec<Complex64> {
        (**self).score_seq(z, sigma)
    }
}

impl<T: ScoreFunction + ?Sized> ScoreFunction for Box<T> {
    fn score(&self, z: Complex64, sigma: f64) -> Complex64 {
        (**self).score(z, sigma)
    }

    fn score_seq(&self, z: &[Complex64], sigma: f64) -> Vec<Complex64> {
        (**self).score_seq(z, sigma)
    }
}
