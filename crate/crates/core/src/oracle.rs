//! Exact score and MMSE denoiser for a uniform constellation prior.
//!
//! With symbols drawn uniformly from `{z_1..z_M}` and `CN(0, sigma^2)` noise,
//! the per-symbol density is the mixture
//! `p(z) = (1/M) sum_m exp(-|z - z_m|^2 / sigma^2) / (pi sigma^2)`.
//! Symbols and noise are independent across channel uses, so the sequence
//! score is the per-symbol score applied elementwise.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::cn_noise;
use crate::constellation::ConstellationScheme;
use crate::error::{Error, Result};
use crate::ScoreFunction;

#[derive(Debug, Clone)]
pub struct MixtureScoreOracle {
    scheme: ConstellationScheme,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSigma(sigma))
    }
}

impl MixtureScoreOracle {
    pub fn new(scheme: ConstellationScheme) -> Self {
        Self { scheme }
    }

    pub fn scheme(&self) -> &ConstellationScheme {
        &self.scheme
    }

    /// Component log-weights `-|z - z_m|^2 / sigma^2` and their maximum.
    fn log_terms(&self, z: Complex64, sigma: f64, out: &mut Vec<f64>) -> f64 {
        let inv = 1.0 / (sigma * sigma);
        out.clear();
        let mut max = f64::NEG_INFINITY;
        for p in self.scheme.points() {
            let t = -(z - p).norm_sqr() * inv;
            max = max.max(t);
            out.push(t);
        }
        max
    }

    /// Posterior component probabilities `w_m(z)`.
    pub fn weights(&self, z: Complex64, sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        Ok(self.weights_unchecked(z, sigma))
    }

    fn weights_unchecked(&self, z: Complex64, sigma: f64) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.scheme.order());
        let max = self.log_terms(z, sigma, &mut w);
        let mut total = 0.0;
        for t in w.iter_mut() {
            *t = (*t - max).exp();
            total += *t;
        }
        for t in w.iter_mut() {
            *t /= total;
        }
        w
    }

    pub fn log_density(&self, z: Complex64, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let mut terms = Vec::with_capacity(self.scheme.order());
        let max = self.log_terms(z, sigma, &mut terms);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        let m = self.scheme.order() as f64;
        Ok(max + sum.ln() - m.ln() - (PI * sigma * sigma).ln())
    }

    /// Gradient of [`log_density`](Self::log_density) in `(re, im)`:
    /// `sum_m w_m * 2 (z_m - z) / sigma^2`.
    pub fn mixture_score(&self, z: Complex64, sigma: f64) -> Result<Complex64> {
        check_sigma(sigma)?;
        Ok(self.score_unchecked(z, sigma))
    }

    fn score_unchecked(&self, z: Complex64, sigma: f64) -> Complex64 {
        let w = self.weights_unchecked(z, sigma);
        let k = 2.0 / (sigma * sigma);
        w.iter()
            .zip(self.scheme.points())
            .map(|(w, p)| (p - z) * (w * k))
            .sum()
    }

    /// `E[z_0 | z] = sum_m w_m z_m`.
    pub fn posterior_mean(&self, z: Complex64, sigma: f64) -> Result<Complex64> {
        check_sigma(sigma)?;
        Ok(self.posterior_mean_unchecked(z, sigma))
    }

    pub(crate) fn posterior_mean_unchecked(&self, z: Complex64, sigma: f64) -> Complex64 {
        let w = self.weights_unchecked(z, sigma);
        w.iter().zip(self.scheme.points()).map(|(w, p)| p * w).sum()
    }

    /// Monte-Carlo estimate of `E|z_0 - E[z_0 | z_0 + sigma eps]|^2` per symbol.
    pub fn mmse_bound<R: Rng + ?Sized>(&self, sigma: f64, trials: usize, rng: &mut R) -> Result<f64> {
        check_sigma(sigma)?;
        if trials == 0 {
            return Err(Error::InvalidParameter("mmse_bound needs at least one trial".into()));
        }
        let mut acc = 0.0;
        for _ in 0..trials {
            let z0 = self.scheme.point(rng.random_range(0..self.scheme.order()));
            let z = z0 + cn_noise(rng) * sigma;
            acc += (z0 - self.posterior_mean_unchecked(z, sigma)).norm_sqr();
        }
        Ok(acc / trials as f64)
    }
}

impl ScoreFunction for MixtureScoreOracle {
    fn score(&self, z: Complex64, sigma: f64) -> Complex64 {
        self.score_unchecked(z, sigma)
    }
}

/// Square evaluation grid over `[-half_width, half_width]^2` with `points`
/// samples per axis, row-major in the real part.
pub fn grid(half_width: f64, points: usize) -> Vec<Complex64> {
    assert!(points >= 2);
    let step = 2.0 * half_width / (points - 1) as f64;
    let coord = |k: usize| -half_width + k as f64 * step;
    (0..points)
        .flat_map(|a| (0..points).map(move |b| Complex64::new(coord(a), coord(b))))
        .collect()
}

/// Writes the `re,im,sigma,score_re,score_im` vector field of any score.
pub fn write_score_field<W: Write, S: ScoreFunction + ?Sized>(
    score: &S,
    points: &[Complex64],
    sigmas: &[f64],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["re", "im", "sigma", "score_re", "score_im"])?;
    for &sigma in sigmas {
        check_sigma(sigma)?;
        for &z in points {
            let s = score.score(z, sigma);
            w.write_record([
                z.re.to_string(),
                z.im.to_string(),
                sigma.to_string(),
                s.re.to_string(),
                s.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Relative L2 distance `||a - b|| / ||b||` between two score fields over a
/// grid of points and noise levels, with `b` the reference.
pub fn relative_l2<A, B>(approx: &A, reference: &B, points: &[Complex64], sigmas: &[f64]) -> f64
where
    A: ScoreFunction + ?Sized,
    B: ScoreFunction + ?Sized,
{
    let (mut num, mut den) = (0.0, 0.0);
    for &sigma in sigmas {
        for &z in points {
            let r = reference.score(z, sigma);
            num += (approx.score(z, sigma) - r).norm_sqr();
            den += r.norm_sqr();
        }
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single() -> MixtureScoreOracle {
        MixtureScoreOracle::new(ConstellationScheme::custom(&[c(3.0, 4.0)]).unwrap())
    }

    fn bpsk() -> MixtureScoreOracle {
        MixtureScoreOracle::new(ConstellationScheme::bpsk())
    }

    #[test]
    fn single_point_is_a_gaussian() {
        let o = single();
        let z1 = o.scheme().point(0);
        for (z, s) in [(c(0.1, -0.3), 0.5), (c(2.0, 1.0), 1.7), (z1, 0.01)] {
            let lp = -(PI * s * s).ln() - (z - z1).norm_sqr() / (s * s);
            assert!((o.log_density(z, s).unwrap() - lp).abs() < 1e-12);
            let sc = (z1 - z) * (2.0 / (s * s));
            assert!((o.mixture_score(z, s).unwrap() - sc).norm() < 1e-12 * (1.0 + sc.norm()));
            assert!((o.posterior_mean(z, s).unwrap() - z1).norm() < 1e-15);
        }
    }

    #[test]
    fn bpsk_hand_values() {
        let o = bpsk();
        // ln((e^-1 + e^-1) / (2 pi)) = -1 - ln(pi)
        assert!((o.log_density(c(0.0, 0.0), 1.0).unwrap() - (-1.0 - PI.ln())).abs() < 1e-14);
        // posterior mean tanh(2 re / sigma^2); score 2 (tanh(1) - 0.5)
        let s = o.mixture_score(c(0.5, 0.0), 1.0).unwrap();
        assert!((s.re - 2.0 * (1f64.tanh() - 0.5)).abs() < 1e-14);
        assert!((s.re - 0.5232).abs() < 1e-4);
        assert!(s.im.abs() < 1e-15);
        let m = o.posterior_mean(c(0.5, 0.0), 1.0).unwrap();
        assert!((m.re - 0.76159).abs() < 1e-5);
        assert_eq!(o.posterior_mean(c(0.0, 0.0), 1.0).unwrap(), c(0.0, 0.0));
        assert_eq!(o.mixture_score(c(0.0, 0.0), 1.0).unwrap().re, 0.0);
    }

    #[test]
    fn bpsk_antipodal_symmetry() {
        let o = bpsk();
        for z in grid(2.0, 9) {
            for s in [0.1, 0.7, 2.0] {
                let a = o.log_density(z, s).unwrap();
                let b = o.log_density(-z, s).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let o = bpsk();
        assert!(matches!(o.log_density(c(0.0, 0.0), 0.0), Err(Error::InvalidSigma(_))));
        assert!(o.mixture_score(c(0.0, 0.0), -1.0).is_err());
        assert!(o.posterior_mean(c(0.0, 0.0), 0.0).is_err());
        assert!(o.mmse_bound(0.0, 10, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn weights_stay_normalized_far_away() {
        let o = MixtureScoreOracle::new(ConstellationScheme::square_qam(64).unwrap());
        for z in [c(100.0, 0.0), c(-70.0, 70.0), c(0.0, 0.0), c(0.31, -0.02)] {
            for s in [0.1, 1.0, 10.0] {
                let w = o.weights(z, s).unwrap();
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(o.mixture_score(z, s).unwrap().norm().is_finite());
                assert!(o.log_density(z, s).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn mmse_limits() {
        let o = bpsk();
        let mut rng = stream_rng(5, 0);
        assert!(o.mmse_bound(1e-3, 10_000, &mut rng).unwrap() < 1e-12);
        let high = o.mmse_bound(1e3, 20_000, &mut rng).unwrap();
        assert!((high - 1.0).abs() < 0.03, "{high}");
    }

    #[test]
    fn score_field_csv_header() {
        let mut buf = Vec::new();
        write_score_field(&bpsk(), &[c(0.0, 0.0)], &[1.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "re,im,sigma,score_re,score_im\n0,0,1,0,0\n");
    }

    #[test]
    fn grid_covers_corners() {
        let g = grid(3.0, 7);
        assert_eq!(g.len(), 49);
        assert_eq!(g[0], c(-3.0, -3.0));
        assert_eq!(g[48], c(3.0, 3.0));
        assert_eq!(g[24], c(0.0, 0.0));
    }
}
