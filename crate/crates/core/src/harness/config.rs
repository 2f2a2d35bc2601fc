//! `key = value` experiment configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! overrides go through the same [`ExperimentConfig::set`] so both accept the
//! same keys.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::NoiseSchedule;
use crate::codec::JointTrainConfig;
use crate::constellation::ConstellationScheme;
use crate::error::{Error, Result};
use crate::harness::sweep::Mode;
use crate::sampler::SamplerConfig;
use crate::score_net::{DsmConfig, LrSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Modulation order M.
    pub order: usize,
    /// Channel uses n per transmitted block.
    pub channel_uses: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Diffusion levels N.
    pub levels: usize,
    pub langevin_steps: usize,
    pub step_ratio: f64,
    pub denoise_final: bool,
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_step: f64,
    /// Blocks of `channel_uses` symbols per sweep point.
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub modes: Vec<Mode>,
    /// Score-model checkpoint for the learned sampler.
    pub checkpoint: Option<PathBuf>,
    /// Per-step beta of the drifted reference process.
    pub vp_beta: f64,
    pub scatter_trials: usize,
    pub scatter_step: usize,

    pub train_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub hidden: Vec<usize>,

    pub source_dims: usize,
    pub decoder_hidden: Vec<usize>,
    pub joint_steps: usize,
    pub joint_batch: usize,
    pub joint_learning_rate: f64,
    pub eval_snr: f64,
    pub eval_sources: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            order: 64,
            channel_uses: 128,
            sigma_min: 0.01,
            sigma_max: 10.0,
            levels: 64,
            langevin_steps: 2,
            step_ratio: 0.16,
            denoise_final: true,
            snr_min: -18.0,
            snr_max: 18.0,
            snr_step: 3.0,
            trials: 80,
            seed: 0,
            output: PathBuf::from("out"),
            modes: vec![Mode::Raw, Mode::Mmse, Mode::OraclePc],
            checkpoint: None,
            vp_beta: 0.1,
            scatter_trials: 2048,
            scatter_step: 64,
            train_steps: 20_000,
            batch_size: 256,
            learning_rate: 1e-4,
            lr_schedule: LrSchedule::Constant,
            hidden: vec![64, 64],
            source_dims: 16,
            decoder_hidden: vec![128, 128],
            joint_steps: 2_000,
            joint_batch: 64,
            joint_learning_rate: 1e-4,
            eval_snr: -6.0,
            eval_sources: 2_000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value '{value}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_assignment(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "order" | "m" => self.order = parse(key, value)?,
            "channel_uses" | "n" => self.channel_uses = parse(key, value)?,
            "sigma_min" => self.sigma_min = parse(key, value)?,
            "sigma_max" => self.sigma_max = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "langevin_steps" => self.langevin_steps = parse(key, value)?,
            "step_ratio" => self.step_ratio = parse(key, value)?,
            "denoise_final" => self.denoise_final = parse(key, value)?,
            "snr_min" => self.snr_min = parse(key, value)?,
            "snr_max" => self.snr_max = parse(key, value)?,
            "snr_step" => self.snr_step = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "modes" => self.modes = parse_list(key, value)?,
            "checkpoint" => {
                self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "vp_beta" => self.vp_beta = parse(key, value)?,
            "scatter_trials" => self.scatter_trials = parse(key, value)?,
            "scatter_step" => self.scatter_step = parse(key, value)?,
            "train_steps" => self.train_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lr_schedule" => self.lr_schedule = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "source_dims" => self.source_dims = parse(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse_list(key, value)?,
            "joint_steps" => self.joint_steps = parse(key, value)?,
            "joint_batch" => self.joint_batch = parse(key, value)?,
            "joint_learning_rate" => self.joint_learning_rate = parse(key, value)?,
            "eval_snr" => self.eval_snr = parse(key, value)?,
            "eval_sources" => self.eval_sources = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// The SNR grid `snr_min, snr_min + step, .. <= snr_max`.
    pub fn snr_grid(&self) -> Result<Vec<f64>> {
        if !(self.snr_step > 0.0) || self.snr_max < self.snr_min {
            return Err(Error::Config("need snr_step > 0 and snr_max >= snr_min".into()));
        }
        let count = ((self.snr_max - self.snr_min) / self.snr_step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.snr_min + k as f64 * self.snr_step).collect())
    }

    pub fn scheme(&self) -> Result<ConstellationScheme> {
        ConstellationScheme::from_order(self.order).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.sigma_min, self.sigma_max, self.levels)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let cfg = SamplerConfig {
            langevin_steps: self.langevin_steps,
            step_ratio: self.step_ratio,
            schedule: self.schedule()?,
            denoise_final: self.denoise_final,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn dsm(&self) -> Result<DsmConfig> {
        Ok(DsmConfig {
            schedule: self.schedule()?,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_schedule: self.lr_schedule,
            steps: self.train_steps,
            seed: self.seed,
            hidden: self.hidden.clone(),
            ..DsmConfig::default()
        })
    }

    pub fn joint(&self) -> JointTrainConfig {
        JointTrainConfig {
            steps: self.joint_steps,
            batch_size: self.joint_batch,
            learning_rate: self.joint_learning_rate,
            seed: self.seed,
        }
    }

    /// Catches inconsistent settings before any work is done.
    pub fn validate(&self) -> Result<()> {
        self.scheme()?;
        self.sampler()?;
        self.snr_grid()?;
        if self.channel_uses == 0 || self.trials == 0 {
            return Err(Error::Config("channel_uses and trials must be positive".into()));
        }
        if !(self.vp_beta > 0.0 && self.vp_beta < 1.0) {
            return Err(Error::Config("vp_beta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
