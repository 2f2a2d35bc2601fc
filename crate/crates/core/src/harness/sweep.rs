use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{awgn_transmit, forward_diffuse, snr_to_sigma, snr_to_step, vp_forward_reference};
use crate::constellation::{demodulate_hard, modulate, ConstellationScheme, SymbolSequence};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{mse, ser};
use crate::oracle::MixtureScoreOracle;
use crate::rng::{stream_id, stream_rng};
use crate::sampler::pc_sample;
use crate::score_net::ScoreModel;
use crate::Complex64;

const PURPOSE_DATA: u8 = 0;
const PURPOSE_MMSE_BOUND: u8 = 1;
const PURPOSE_ORACLE_PC: u8 = 2;
const PURPOSE_LEARNED_PC: u8 = 3;
const PURPOSE_SCATTER_SCDM: u8 = 4;
const PURPOSE_SCATTER_VP: u8 = 5;

/// Receiver variants compared by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// No processing: the received symbols as they are.
    Raw,
    /// Predictor-corrector sampler driven by the exact mixture score.
    OraclePc,
    /// Predictor-corrector sampler driven by a trained score model.
    LearnedPc,
    /// Exact posterior mean of the constellation prior.
    Mmse,
    /// Linear shrinkage `z / (1 + sigma^2)`, the posterior mean under a
    /// unit-power Gaussian prior.
    VpReference,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Raw, Mode::OraclePc, Mode::LearnedPc, Mode::Mmse, Mode::VpReference];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Raw => "raw",
            Mode::OraclePc => "oracle_pc",
            Mode::LearnedPc => "learned_pc",
            Mode::Mmse => "mmse",
            Mode::VpReference => "vp_reference",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub snr_db: f64,
    pub mode: Mode,
    /// Per-symbol squared error averaged over all trials.
    pub mse: f64,
    /// Hard-decision symbol error rate of the processed symbols.
    pub ser: f64,
    /// Monte-Carlo MMSE floor at this SNR.
    pub mmse_bound: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const SWEEP_HEADER: &str = "snr_db,mode,mse,ser,mmse_bound,trials,seed";

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.snr_db.to_string(),
            r.mode.to_string(),
            r.mse.to_string(),
            r.ser.to_string(),
            r.mmse_bound.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Accumulated error of one mode over one trial.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    sq_err: f64,
    sym_err: f64,
}

fn tally(
    z0: &SymbolSequence,
    idx: &[usize],
    out: &SymbolSequence,
    scheme: &ConstellationScheme,
) -> Result<Tally> {
    let n = z0.len() as f64;
    Ok(Tally {
        sq_err: mse(z0, out)? * n,
        sym_err: ser(idx, &demodulate_hard(out, scheme))? * n,
    })
}

/// Runs every configured mode over the SNR grid.
///
/// Each `(snr, trial)` pair draws its symbols and channel noise from its own
/// stream, shared by all modes, and each sampler gets a further stream of its
/// own. Trials run in parallel and are reduced in a fixed order, so the result
/// does not depend on the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, learned: Option<&ScoreModel>) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    if cfg.modes.contains(&Mode::LearnedPc) && learned.is_none() {
        return Err(Error::Config("learned_pc mode needs a score-model checkpoint".into()));
    }
    let scheme = cfg.scheme()?;
    let sampler = cfg.sampler()?;
    let snrs = cfg.snr_grid()?;
    let needs_grid = cfg.modes.iter().any(|m| matches!(m, Mode::OraclePc | Mode::LearnedPc));
    if needs_grid {
        for &snr in &snrs {
            snr_to_step(snr, &sampler.schedule)?;
        }
    }
    let oracle = MixtureScoreOracle::new(scheme.clone());
    let n = cfg.channel_uses;
    let modes = &cfg.modes;

    let jobs: Vec<(usize, usize)> =
        (0..snrs.len()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();
    let per_trial: Vec<Vec<Tally>> = jobs
        .par_iter()
        .map(|&(s, t)| -> Result<Vec<Tally>> {
            let snr = snrs[s];
            let sigma = snr_to_sigma(snr, 1.0);
            let (g, t64) = (s as u64, t as u64);
            let mut rng = stream_rng(cfg.seed, stream_id(g, t64, PURPOSE_DATA));
            let idx = scheme.random_indices(n, &mut rng);
            let z0 = modulate(&idx, &scheme)?;
            let z_tilde = awgn_transmit(&z0, sigma, &mut rng);
            modes
                .iter()
                .map(|mode| {
                    let out = match mode {
                        Mode::Raw => z_tilde.clone(),
                        Mode::OraclePc => {
                            let mut r = stream_rng(cfg.seed, stream_id(g, t64, PURPOSE_ORACLE_PC));
                            pc_sample(&z_tilde, snr, &oracle, &sampler, &mut r)?
                        }
                        Mode::LearnedPc => {
                            let model = learned.expect("checked above");
                            let mut r = stream_rng(cfg.seed, stream_id(g, t64, PURPOSE_LEARNED_PC));
                            pc_sample(&z_tilde, snr, model, &sampler, &mut r)?
                        }
                        Mode::Mmse => z_tilde
                            .values()
                            .iter()
                            .map(|&z| oracle.posterior_mean(z, sigma))
                            .collect::<Result<Vec<Complex64>>>()?
                            .into(),
                        Mode::VpReference => {
                            let k = 1.0 / (1.0 + sigma * sigma);
                            z_tilde.values().iter().map(|&z| z * k).collect::<Vec<_>>().into()
                        }
                    };
                    tally(&z0, &idx, &out, &scheme)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let bound_samples = cfg.trials * n;
    let bounds: Vec<f64> = (0..snrs.len())
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(cfg.seed, stream_id(s as u64, 0, PURPOSE_MMSE_BOUND));
            oracle.mmse_bound(snr_to_sigma(snrs[s], 1.0), bound_samples, &mut rng)
        })
        .collect::<Result<_>>()?;

    let total = (cfg.trials * n) as f64;
    let mut records = Vec::with_capacity(snrs.len() * modes.len());
    for (s, &snr) in snrs.iter().enumerate() {
        let rows = &per_trial[s * cfg.trials..(s + 1) * cfg.trials];
        for (k, &mode) in modes.iter().enumerate() {
            let (mut sq, mut se) = (0.0, 0.0);
            for row in rows {
                sq += row[k].sq_err;
                se += row[k].sym_err;
            }
            records.push(SweepRecord {
                snr_db: snr,
                mode,
                mse: sq / total,
                ser: se / total,
                mmse_bound: bounds[s],
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

/// One noisy symbol of a forward-process scatter plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub step: usize,
    /// `scdm` for the drift-free process, `vp_reference` for the drifted one.
    pub mode: &'static str,
    pub trial: usize,
    /// Index of the constellation point the trial started from.
    pub point: usize,
    pub value: Complex64,
}

pub const SCATTER_HEADER: &str = "step,mode,trial,re,im";

/// Forward-diffuses `scatter_trials` symbols to level `step` under both
/// processes. Trial `t` starts from constellation point `t mod M`.
pub fn emit_scatter(cfg: &ExperimentConfig, step: usize) -> Result<Vec<ScatterRow>> {
    let scheme = cfg.scheme()?;
    let sched = cfg.schedule()?;
    if step == 0 || step > sched.levels() {
        return Err(Error::StepOutOfRange { step, levels: sched.levels() });
    }
    let idx: Vec<usize> = (0..cfg.scatter_trials).map(|t| t % scheme.order()).collect();
    let z0 = modulate(&idx, &scheme)?;
    let mut rng = stream_rng(cfg.seed, stream_id(step as u64, 0, PURPOSE_SCATTER_SCDM));
    let scdm = forward_diffuse(&z0, step, &sched, &mut rng)?;
    let mut rng = stream_rng(cfg.seed, stream_id(step as u64, 0, PURPOSE_SCATTER_VP));
    let vp = vp_forward_reference(&z0, step, cfg.vp_beta, &mut rng)?;

    let mut rows = Vec::with_capacity(2 * idx.len());
    for (mode, seq) in [("scdm", &scdm), ("vp_reference", &vp)] {
        rows.extend(seq.values().iter().enumerate().map(|(t, &value)| ScatterRow {
            step,
            mode,
            trial: t,
            point: idx[t],
            value,
        }));
    }
    Ok(rows)
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCATTER_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.mode.to_string(),
            r.trial.to_string(),
            r.value.re.to_string(),
            r.value.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.order = 4;
        c.channel_uses = 16;
        c.trials = 4;
        c.snr_min = -6.0;
        c.snr_max = 6.0;
        c.snr_step = 6.0;
        c.modes = Mode::ALL.iter().copied().filter(|m| *m != Mode::LearnedPc).collect();
        c
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("bogus".parse::<Mode>().is_err());
    }

    #[test]
    fn one_record_per_snr_and_mode() {
        let c = small();
        let recs = run_sweep(&c, None).unwrap();
        assert_eq!(recs.len(), 3 * 4);
        for r in &recs {
            assert!(r.mse >= 0.0 && (0.0..=1.0).contains(&r.ser));
            assert_eq!((r.trials, r.seed), (4, 0));
        }
    }

    #[test]
    fn learned_mode_without_model_is_config_error() {
        let mut c = small();
        c.modes = vec![Mode::LearnedPc];
        assert!(matches!(run_sweep(&c, None), Err(Error::Config(_))));
    }

    #[test]
    fn snr_below_coverage_is_rejected() {
        let mut c = small();
        c.snr_min = -30.0;
        assert!(matches!(run_sweep(&c, None), Err(Error::SnrNotCovered { .. })));
        c.modes = vec![Mode::Raw];
        assert!(run_sweep(&c, None).is_ok());
    }

    #[test]
    fn sweep_is_deterministic() {
        let c = small();
        assert_eq!(run_sweep(&c, None).unwrap(), run_sweep(&c, None).unwrap());
    }

    #[test]
    fn scatter_layout_and_range() {
        let mut c = small();
        c.scatter_trials = 10;
        let rows = emit_scatter(&c, 5).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].mode, "scdm");
        assert_eq!(rows[10].mode, "vp_reference");
        assert_eq!(rows[7].point, 3);
        assert!(emit_scatter(&c, 0).is_err());
        assert!(emit_scatter(&c, 65).is_err());
        let mut buf = Vec::new();
        write_scatter_csv(&rows[..1], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("step,mode,trial,re,im\n5,scdm,0,"));
    }
}
