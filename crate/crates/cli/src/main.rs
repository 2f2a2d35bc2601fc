use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scdm::channel::awgn_transmit;
use scdm::codec::{
    evaluate_decoder, joint_train, write_joint_trace, DecoderInput, DecoderModel, QuantizingEncoder,
};
use scdm::constellation::modulate;
use scdm::harness::{emit_scatter, run_sweep, write_scatter_csv, write_sweep_csv, ExperimentConfig};
use scdm::rng::{stream_id, stream_rng};
use scdm::sampler::{pc_sample_traced, write_trace};
use scdm::score_net::{train_score_with, write_loss_trace};
use scdm::{Error, MixtureScoreOracle, ScoreFunction, ScoreModel};

#[derive(Parser)]
#[command(name = "scdm", version, about = "Score-based channel denoising simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra key=value overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Denoised,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Write the constellation points and their bit labels.
    Constellation(Common),
    /// Write the noise schedule.
    Schedule(Common),
    /// Train the per-symbol score network.
    TrainScore(Common),
    /// Denoise one simulated block and write the per-level error trace.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
    },
    /// Run the SNR sweep over all configured modes.
    Sweep(Common),
    /// Dump forward-process samples at one schedule level.
    Scatter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        step: usize,
    },
    /// Train the decoder against a frozen score.
    JointTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "denoised")]
        input: InputKind,
    },
    /// Evaluate a trained decoder on held-out sources.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "denoised")]
        input: InputKind,
        /// Decoder checkpoint; defaults to `<out>/decoder_<input>.ckpt`.
        #[arg(long)]
        decoder: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> scdm::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_assignment(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    std::fs::create_dir_all(&cfg.output)?;
    Ok(cfg)
}

fn create(path: &Path) -> scdm::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_model(path: &Path) -> scdm::Result<ScoreModel> {
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open checkpoint {}: {e}", path.display())))?;
    ScoreModel::read_checkpoint(BufReader::new(file))
}

/// The learned score when a checkpoint is configured, the exact oracle otherwise.
fn score_for(cfg: &ExperimentConfig) -> scdm::Result<Box<dyn ScoreFunction>> {
    Ok(match &cfg.checkpoint {
        Some(path) => Box::new(load_model(path)?),
        None => Box::new(MixtureScoreOracle::new(cfg.scheme()?)),
    })
}

fn input_name(input: InputKind) -> &'static str {
    match input {
        InputKind::Denoised => "denoised",
        InputKind::Raw => "raw",
    }
}

fn decoder_input(input: InputKind) -> DecoderInput {
    match input {
        InputKind::Denoised => DecoderInput::Denoised,
        InputKind::Raw => DecoderInput::Raw,
    }
}

fn run(cli: Cli) -> scdm::Result<()> {
    match cli.command {
        Command::Constellation(common) => {
            let cfg = load_config(&common)?;
            let path = cfg.output.join("constellation.csv");
            cfg.scheme()?.write_csv(create(&path)?)?;
            println!("{}", path.display());
        }
        Command::Schedule(common) => {
            let cfg = load_config(&common)?;
            let path = cfg.output.join("schedule.csv");
            cfg.schedule()?.write_csv(create(&path)?)?;
            println!("{}", path.display());
        }
        Command::TrainScore(common) => {
            let cfg = load_config(&common)?;
            let dsm = cfg.dsm()?;
            let every = (dsm.steps / 20).max(1);
            let trained = train_score_with(&cfg.scheme()?, &dsm, |step, loss| {
                if step % every == 0 {
                    eprintln!("step {step} loss {loss:.6}");
                }
            })?;
            let ckpt = cfg.checkpoint.clone().unwrap_or_else(|| cfg.output.join("score.ckpt"));
            trained.model.write_checkpoint(create(&ckpt)?)?;
            let trace = cfg.output.join("score_loss.csv");
            write_loss_trace(&trained.loss_trace, create(&trace)?)?;
            println!("{}", ckpt.display());
        }
        Command::Denoise { common, snr } => {
            let cfg = load_config(&common)?;
            let scheme = cfg.scheme()?;
            let sampler = cfg.sampler()?;
            let score = score_for(&cfg)?;
            let mut rng = stream_rng(cfg.seed, stream_id(0, 0, 0));
            let idx = scheme.random_indices(cfg.channel_uses, &mut rng);
            let z0 = modulate(&idx, &scheme)?;
            let rx = awgn_transmit(&z0, scdm::channel::snr_to_sigma(snr, 1.0), &mut rng);
            let (_, rows) = pc_sample_traced(&rx, &z0, snr, &score, &sampler, &mut rng)?;
            let path = cfg.output.join("denoise_trace.csv");
            write_trace(&rows, create(&path)?)?;
            println!("{}", path.display());
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common)?;
            let model = cfg.checkpoint.as_deref().map(load_model).transpose()?;
            let records = run_sweep(&cfg, model.as_ref())?;
            let path = cfg.output.join("sweep.csv");
            write_sweep_csv(&records, create(&path)?)?;
            println!("{}", path.display());
        }
        Command::Scatter { common, step } => {
            let cfg = load_config(&common)?;
            let rows = emit_scatter(&cfg, step)?;
            let path = cfg.output.join(format!("scatter_step{step}.csv"));
            write_scatter_csv(&rows, create(&path)?)?;
            println!("{}", path.display());
        }
        Command::JointTrain { common, input } => {
            let cfg = load_config(&common)?;
            let enc = QuantizingEncoder::new(cfg.scheme()?)?;
            let mut rng = stream_rng(cfg.seed, stream_id(0, 0, 9));
            let dec = DecoderModel::new(cfg.source_dims / 2, cfg.source_dims, &cfg.decoder_hidden, &mut rng)?;
            let score = score_for(&cfg)?;
            let outcome =
                joint_train(&enc, dec, &score, &cfg.sampler()?, &cfg.joint(), decoder_input(input))?;
            let name = input_name(input);
            let ckpt = cfg.output.join(format!("decoder_{name}.ckpt"));
            outcome.decoder.write_checkpoint(create(&ckpt)?)?;
            write_joint_trace(&outcome.trace, create(&cfg.output.join(format!("joint_{name}.csv")))?)?;
            println!("{}", ckpt.display());
        }
        Command::Eval { common, input, decoder } => {
            let cfg = load_config(&common)?;
            let enc = QuantizingEncoder::new(cfg.scheme()?)?;
            let name = input_name(input);
            let path = decoder.unwrap_or_else(|| cfg.output.join(format!("decoder_{name}.ckpt")));
            let file = File::open(&path)
                .map_err(|e| Error::Config(format!("cannot open decoder {}: {e}", path.display())))?;
            let dec = DecoderModel::read_checkpoint(BufReader::new(file))?;
            let score = score_for(&cfg)?;
            let sampler = cfg.sampler()?;
            let score_ref = match input {
                InputKind::Denoised => Some(&score),
                InputKind::Raw => None,
            };
            let eval_seed = cfg.seed.wrapping_add(1);
            let noisy = evaluate_decoder(
                &enc,
                &dec,
                score_ref,
                &sampler,
                Some(cfg.eval_snr),
                cfg.eval_sources,
                eval_seed,
            )?;
            let clean = evaluate_decoder(
                &enc,
                &dec,
                None::<&Box<dyn ScoreFunction>>,
                &sampler,
                None,
                cfg.eval_sources,
                eval_seed,
            )?;
            let out = cfg.output.join(format!("eval_{name}.csv"));
            let mut w = create(&out)?;
            use std::io::Write;
            writeln!(w, "input,snr_db,mse")?;
            writeln!(w, "{name},{},{noisy}", cfg.eval_snr)?;
            writeln!(w, "{name},noiseless,{clean}")?;
            w.flush()?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => 3,
        Error::Config(_)
        | Error::UnsupportedOrder(_)
        | Error::InvalidConstellation(_)
        | Error::InvalidSchedule(_)
        | Error::StepOutOfRange { .. }
        | Error::SnrNotCovered { .. }
        | Error::InvalidSigma(_)
        | Error::InvalidParameter(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
