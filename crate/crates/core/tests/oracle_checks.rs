use scdm::oracle::grid;
use scdm::rng::stream_rng;
use scdm::{Complex64, ConstellationScheme, MixtureScoreOracle};

fn schemes() -> Vec<ConstellationScheme> {
    let mut v = vec![ConstellationScheme::bpsk()];
    for m in [4, 16, 64] {
        v.push(ConstellationScheme::square_qam(m).unwrap());
    }
    v
}

#[test]
fn score_matches_central_differences_of_log_density() {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for scheme in schemes() {
        let o = MixtureScoreOracle::new(scheme);
        for sigma in [0.1, 0.5, 1.0, 3.0] {
            for z in grid(2.0, 41) {
                let s = o.mixture_score(z, sigma).unwrap();
                if s.norm() <= 1e-3 {
                    continue;
                }
                let f = |d: Complex64| o.log_density(z + d, sigma).unwrap();
                let fd = Complex64::new(
                    (f(Complex64::new(h, 0.0)) - f(Complex64::new(-h, 0.0))) / (2.0 * h),
                    (f(Complex64::new(0.0, h)) - f(Complex64::new(0.0, -h))) / (2.0 * h),
                );
                worst = worst.max((fd - s).norm() / s.norm());
            }
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn tweedie_identity_holds_to_round_off() {
    for scheme in schemes() {
        let o = MixtureScoreOracle::new(scheme);
        for sigma in [0.05, 0.3, 1.0, 3.0, 8.0] {
            for z in grid(3.0, 25) {
                let mean = o.posterior_mean(z, sigma).unwrap();
                let tweedie = z + o.mixture_score(z, sigma).unwrap() * (sigma * sigma / 2.0);
                assert!((mean - tweedie).norm() <= 1e-12, "z {z} sigma {sigma}: {mean} vs {tweedie}");
            }
        }
    }
}

/// BPSK MMSE by quadrature: with `re = 1 + n`, `n ~ N(0, sigma^2 / 2)`,
/// `E[z_0 | z] = tanh(2 re / sigma^2)` and the error is `(1 - tanh)^2`.
fn bpsk_mmse_quadrature(sigma: f64) -> f64 {
    let sd = sigma / 2f64.sqrt();
    let steps = 20_000;
    let (lo, hi) = (-10.0, 10.0);
    let dx = (hi - lo) / steps as f64;
    (0..=steps)
        .map(|k| {
            let u = lo + k as f64 * dx;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            let pdf = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let m = (2.0 * (1.0 + sd * u) / (sigma * sigma)).tanh();
            w * pdf * (1.0 - m).powi(2)
        })
        .sum::<f64>()
        * dx
}

#[test]
fn bpsk_mmse_bound_matches_quadrature() {
    let o = MixtureScoreOracle::new(ConstellationScheme::bpsk());
    for (k, sigma) in [0.6, 1.0, 3.0].into_iter().enumerate() {
        let exact = bpsk_mmse_quadrature(sigma);
        let mc = o.mmse_bound(sigma, 200_000, &mut stream_rng(21, k as u64)).unwrap();
        assert!((mc / exact - 1.0).abs() < 0.03, "sigma {sigma}: mc {mc} vs {exact}");
    }
}

#[test]
fn mmse_bound_is_monotone_in_noise() {
    let o = MixtureScoreOracle::new(ConstellationScheme::square_qam(64).unwrap());
    let mut prev = 0.0;
    for (k, sigma) in [0.05, 0.2, 0.5, 1.0, 3.0, 8.0].into_iter().enumerate() {
        let b = o.mmse_bound(sigma, 20_000, &mut stream_rng(22, k as u64)).unwrap();
        assert!(b >= prev && b <= 1.02, "sigma {sigma}: {b}");
        prev = b;
    }
}
