//! AWGN channel, noise schedule and forward diffusion.
//!
//! Noise convention used throughout the crate: `CN(0, 1)` has independent
//! real and imaginary parts of variance 1/2, and `sigma` is the standard
//! deviation of the total complex noise, so `SNR = 10 log10(P / sigma^2)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constellation::SymbolSequence;
use crate::error::{Error, Result};

/// Relative slack for floating-point grid comparisons.
const GRID_TOL: f64 = 1e-12;

/// One draw from `CN(0, 1)`.
pub fn cn_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn_noise_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n).map(|_| cn_noise(rng)).collect()
}

fn add_scaled_noise<R: Rng + ?Sized>(z: &SymbolSequence, scale: f64, rng: &mut R) -> SymbolSequence {
    z.values().iter().map(|&v| v + cn_noise(rng) * scale).collect::<Vec<_>>().into()
}

pub fn snr_to_sigma(snr_db: f64, power: f64) -> f64 {
    (power * 10f64.powf(-snr_db / 10.0)).sqrt()
}

pub fn sigma_to_snr(sigma: f64, power: f64) -> f64 {
    10.0 * (power / (sigma * sigma)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub power: f64,
    pub sigma_ch: f64,
}

impl ChannelConfig {
    /// Unit-power channel at the given SNR.
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db, power: 1.0, sigma_ch: snr_to_sigma(snr_db, 1.0) }
    }
}

/// `z + sigma * eps` with `eps ~ CN(0, I)`.
pub fn awgn_transmit<R: Rng + ?Sized>(z: &SymbolSequence, sigma: f64, rng: &mut R) -> SymbolSequence {
    debug_assert!(sigma >= 0.0);
    add_scaled_noise(z, sigma, rng)
}

/// Geometric noise levels `sigma_1 < .. < sigma_N`, with `sigma_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, levels: usize) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min.is_finite()) {
            return Err(Error::InvalidSchedule(format!("sigma_min must be positive, got {sigma_min}")));
        }
        if !(sigma_max > sigma_min && sigma_max.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "sigma_max ({sigma_max}) must exceed sigma_min ({sigma_min})"
            )));
        }
        if levels < 2 {
            return Err(Error::InvalidSchedule(format!("need at least 2 levels, got {levels}")));
        }
        let ratio = sigma_max / sigma_min;
        let last = (levels - 1) as f64;
        let mut sigmas: Vec<f64> =
            (0..levels).map(|k| sigma_min * ratio.powf(k as f64 / last)).collect();
        sigmas[0] = sigma_min;
        sigmas[levels - 1] = sigma_max;
        Ok(Self { sigma_min, sigma_max, sigmas })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Number of levels N.
    pub fn levels(&self) -> usize {
        self.sigmas.len()
    }

    /// `sigma_i` for `i` in `0..=N`; level 0 is the clean signal.
    pub fn sigma(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.sigmas[i - 1]
        }
    }

    /// `sigma_1..sigma_N`.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    fn check_level(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.levels() {
            return Err(Error::StepOutOfRange { step: i, levels: self.levels() });
        }
        Ok(())
    }

    /// Writes `level,sigma` rows for levels 1..=N.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "sigma"])?;
        for (k, s) in self.sigmas.iter().enumerate() {
            w.write_record([(k + 1).to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closed-form forward diffusion to level `i`: `z_0 + sigma_i * eps`.
pub fn forward_diffuse<R: Rng + ?Sized>(
    z0: &SymbolSequence,
    i: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SymbolSequence> {
    sched.check_level(i)?;
    Ok(add_scaled_noise(z0, sched.sigma(i), rng))
}

/// One incremental step from level `i - 1` to level `i`:
/// `z_i = z_{i-1} + sqrt(sigma_i^2 - sigma_{i-1}^2) * eps`.
pub fn forward_step<R: Rng + ?Sized>(
    z_prev: &SymbolSequence,
    i: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SymbolSequence> {
    sched.check_level(i)?;
    let (hi, lo) = (sched.sigma(i), sched.sigma(i - 1));
    Ok(add_scaled_noise(z_prev, (hi * hi - lo * lo).sqrt(), rng))
}

/// Maps an SNR to the first schedule level whose noise covers the channel.
///
/// Returns `(N_snr, sigma_gap)` where `sigma_gap` is the extra noise needed to
/// bring the received symbols exactly onto level `N_snr`.
pub fn snr_to_step(snr_db: f64, sched: &NoiseSchedule) -> Result<(usize, f64)> {
    sigma_to_step(snr_to_sigma(snr_db, 1.0), sched)
}

/// [`snr_to_step`] for an explicit channel noise std.
pub fn sigma_to_step(sigma_ch: f64, sched: &NoiseSchedule) -> Result<(usize, f64)> {
    if sigma_ch > sched.sigma_max() * (1.0 + GRID_TOL) || sigma_ch.is_nan() {
        return Err(Error::SnrNotCovered { sigma_ch, sigma_max: sched.sigma_max() });
    }
    let level = sched
        .sigmas()
        .iter()
        .position(|&s| s >= sigma_ch * (1.0 - GRID_TOL))
        .map(|k| k + 1)
        .unwrap_or(sched.levels());
    let s = sched.sigma(level);
    let gap = (s * s - sigma_ch * sigma_ch).max(0.0).sqrt();
    // treat round-off around an exact grid hit as on-grid
    let gap = if gap <= s * 1e-6 { 0.0 } else { gap };
    Ok((level, gap))
}

/// Adds `sigma_gap * eps` so the total noise lands on a schedule level.
pub fn match_to_grid<R: Rng + ?Sized>(
    z_tilde: &SymbolSequence,
    sigma_gap: f64,
    rng: &mut R,
) -> SymbolSequence {
    if sigma_gap == 0.0 {
        return z_tilde.clone();
    }
    add_scaled_noise(z_tilde, sigma_gap, rng)
}

/// Drifted (variance-preserving) forward chain iterated `i` times:
/// `z_k = sqrt(1 - beta) z_{k-1} + sqrt(beta) eps`.
///
/// Only used as a visual contrast to the drift-free process; its conditional
/// mean shrinks as `(1 - beta)^{i/2} z_0`.
pub fn vp_forward_reference<R: Rng + ?Sized>(
    z0: &SymbolSequence,
    i: usize,
    beta: f64,
    rng: &mut R,
) -> Result<SymbolSequence> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    if i == 0 {
        return Err(Error::InvalidParameter("vp reference needs at least one step".into()));
    }
    let keep = (1.0 - beta).sqrt();
    let add = beta.sqrt();
    let mut z = z0.values().to_vec();
    for _ in 0..i {
        for v in z.iter_mut() {
            *v = *v * keep + cn_noise(rng) * add;
        }
    }
    Ok(z.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{modulate, ConstellationScheme};
    use crate::rng::stream_rng;

    fn approx(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma(0.0, 1.0), 1.0);
        // 10^(0.9) and 10^(-0.9) under the square root
        assert!((snr_to_sigma(-18.0, 1.0) - 7.943282347242815).abs() < 1e-12);
        assert!((snr_to_sigma(18.0, 1.0) - 0.12589254117941673).abs() < 1e-12);
        assert!((sigma_to_snr(snr_to_sigma(7.5, 1.0), 1.0) - 7.5).abs() < 1e-12);
        let cfg = ChannelConfig::new(-18.0);
        assert_eq!(cfg.sigma_ch, snr_to_sigma(-18.0, 1.0));
    }

    #[test]
    fn zero_noise_is_identity() {
        let z = modulate(&[0, 1, 1, 0], &ConstellationScheme::bpsk()).unwrap();
        let mut rng = stream_rng(1, 0);
        assert_eq!(awgn_transmit(&z, 0.0, &mut rng), z);
    }

    #[test]
    fn awgn_variance() {
        let n = 100_000;
        let s = ConstellationScheme::bpsk();
        let mut rng = stream_rng(2, 0);
        let z = modulate(&s.random_indices(n, &mut rng), &s).unwrap();
        let y = awgn_transmit(&z, 1.0, &mut rng);
        let (mut tot, mut re) = (0.0, 0.0);
        for (a, b) in y.values().iter().zip(z.values()) {
            let d = a - b;
            tot += d.norm_sqr();
            re += d.re * d.re;
        }
        assert!(approx(tot / n as f64, 1.0, 0.02), "{}", tot / n as f64);
        assert!(approx(re / n as f64, 0.5, 0.02), "{}", re / n as f64);
    }

    #[test]
    fn schedule_grid() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        assert_eq!(s.levels(), 64);
        assert_eq!(s.sigma(1), 0.01);
        assert_eq!(s.sigma(64), 10.0);
        assert_eq!(s.sigma(0), 0.0);
        let ratio = 1000f64.powf(1.0 / 63.0);
        assert!((ratio - 1.1158).abs() < 1e-4);
        for w in s.sigmas().windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert_eq!(NoiseSchedule::new(1.0, 2.0, 2).unwrap().sigmas(), &[1.0, 2.0]);
    }

    #[test]
    fn schedule_rejects_bad_input() {
        assert!(NoiseSchedule::new(0.0, 1.0, 4).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0, 4).is_err());
        assert!(NoiseSchedule::new(1.0, 1.0, 4).is_err());
        assert!(NoiseSchedule::new(0.1, 1.0, 1).is_err());
    }

    #[test]
    fn forward_diffuse_checks_range() {
        let s = NoiseSchedule::new(0.01, 10.0, 8).unwrap();
        let z = SymbolSequence::zeros(3);
        let mut rng = stream_rng(0, 0);
        assert!(forward_diffuse(&z, 0, &s, &mut rng).is_err());
        assert!(forward_diffuse(&z, 9, &s, &mut rng).is_err());
        assert!(forward_diffuse(&z, 8, &s, &mut rng).is_ok());
    }

    #[test]
    fn smallest_level_stays_near_symbol() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        let z = SymbolSequence::new(vec![Complex64::new(1.0, 0.0); 10_000]);
        let mut rng = stream_rng(3, 0);
        let y = forward_diffuse(&z, 1, &s, &mut rng).unwrap();
        assert!(y.values().iter().all(|v| (v.re - 1.0).abs() < 0.1 && v.im.abs() < 0.1));
    }

    #[test]
    fn on_grid_and_floor_steps() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        for k in [1, 2, 17, 40, 64] {
            let snr = sigma_to_snr(s.sigma(k), 1.0);
            assert_eq!(snr_to_step(snr, &s).unwrap(), (k, 0.0), "level {k}");
        }
        let (lvl, gap) = sigma_to_step(0.005, &s).unwrap();
        assert_eq!(lvl, 1);
        assert!((gap - (0.01f64.powi(2) - 0.005f64.powi(2)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn low_snr_step_brackets_channel() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        let sigma_ch = snr_to_sigma(-18.0, 1.0);
        let (lvl, gap) = snr_to_step(-18.0, &s).unwrap();
        // scan of the geometric grid
        let expected = (1..=64).find(|&i| s.sigma(i) >= sigma_ch).unwrap();
        assert_eq!(lvl, expected);
        assert!(s.sigma(lvl - 1) < sigma_ch && sigma_ch <= s.sigma(lvl));
        assert!((gap * gap + sigma_ch * sigma_ch - s.sigma(lvl).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn uncovered_snr_is_rejected() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        assert!(matches!(snr_to_step(-21.0, &s), Err(Error::SnrNotCovered { .. })));
        assert!(snr_to_step(-20.0, &s).is_ok());
    }

    #[test]
    fn step_is_monotone_in_snr() {
        let s = NoiseSchedule::new(0.01, 10.0, 64).unwrap();
        let mut prev = usize::MAX;
        for k in 0..=600 {
            let snr = -20.0 + k as f64 * 0.1;
            let (lvl, _) = snr_to_step(snr, &s).unwrap();
            assert!(lvl <= prev);
            prev = lvl;
        }
    }

    #[test]
    fn match_to_grid_zero_gap_is_identity() {
        let z = SymbolSequence::new(vec![Complex64::new(0.3, -0.2); 4]);
        assert_eq!(match_to_grid(&z, 0.0, &mut stream_rng(0, 0)), z);
    }

    #[test]
    fn vp_reference_rejects_bad_beta() {
        let z = SymbolSequence::zeros(1);
        let mut rng = stream_rng(0, 0);
        assert!(vp_forward_reference(&z, 1, 0.0, &mut rng).is_err());
        assert!(vp_forward_reference(&z, 1, 1.0, &mut rng).is_err());
        assert!(vp_forward_reference(&z, 0, 0.5, &mut rng).is_err());
    }

    #[test]
    fn vp_reference_tiny_beta_is_near_identity() {
        let z = SymbolSequence::new(vec![Complex64::new(1.0, -1.0); 100]);
        let y = vp_forward_reference(&z, 1, 1e-10, &mut stream_rng(0, 0)).unwrap();
        for (a, b) in y.values().iter().zip(z.values()) {
            assert!((a - b).norm() < 1e-4);
        }
    }
}
