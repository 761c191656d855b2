use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use firemu::ensemble::PerturbationSpec;
use firemu::kv::KeyValues;
use firemu_cli::{
    cmd_bench, cmd_ensemble, cmd_evaluate, cmd_generate, cmd_predict, cmd_simulate, cmd_train, load_emulator,
    reject_unknown, Baseline, GenerateOptions, RunManifest, Split, TrainOptions,
};
use log::{error, info, warn};

#[derive(Parser)]
#[command(name = "firemu", version, about = "Fire-spread simulation, emulation and ensemble forecasting")]
struct Cli {
    /// key=value file whose entries override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sequential, fixed-order reductions (execution is single-threaded, so always on).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes, weather and ignitions plus a manifest.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 512)]
        rows: usize,
        #[arg(long, default_value_t = 512)]
        cols: usize,
        #[arg(long, default_value_t = 8)]
        intervals: usize,
        #[arg(long, default_value_t = 0.2)]
        split: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate arrival grids for every sample in a manifest.
    Simulate { manifest: PathBuf },
    /// Train an emulator on a manifest's train split.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Predict one sample and write prediction and difference maps.
    Predict {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the model, or a baseline, on a manifest split.
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaselineArg::Model)]
        baseline: BaselineArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weather-perturbation ensemble for one sample.
    Ensemble {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long, default_value_t = 32)]
        members: usize,
        #[arg(long, default_value_t = 1.5)]
        sigma_speed: f64,
        #[arg(long, default_value_t = 15.0)]
        sigma_dir: f64,
        #[arg(long, default_value_t = 2.0)]
        sigma_temp: f64,
        #[arg(long, default_value_t = 0.5)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median wall clock of simulator against emulator.
    Bench {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training crop side; 0 disables cropping.
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Model,
    Persistence,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

fn read_config(path: Option<&Path>) -> Result<KeyValues> {
    match path {
        None => Ok(KeyValues::new("flags")),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(KeyValues::parse(&text, &p.display().to_string())?)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let kv = read_config(cli.config.as_deref())?;
    if cli.deterministic {
        info!("deterministic mode (execution is sequential in every mode)");
    }
    match cli.command {
        Command::Generate { seed, count, rows, cols, intervals, split, out } => {
            let mut o = GenerateOptions { seed, count, rows, cols, intervals, test_split: split, ..Default::default() };
            o.update_from_kv(&kv)?;
            let m = cmd_generate(&o, &out)?;
            println!("{} samples -> {}", m.samples.len(), m.path().display());
        }
        Command::Simulate { manifest } => {
            reject_unknown(&kv, &[])?;
            let m = RunManifest::load(&manifest)?;
            let r = cmd_simulate(&m)?;
            println!("simulated {} samples, {} failed", r.timings.len(), r.failures.len());
            for (id, e) in &r.failures {
                error!("{id}: {e}");
            }
            return Ok(r.failures.is_empty());
        }
        Command::Train { manifest, out, flags } => {
            let m = RunManifest::load(&manifest)?;
            let mut o = TrainOptions::default();
            o.train.test_split = m.test_split;
            o.train.seed = flags.seed.unwrap_or(m.seed);
            o.train.deterministic = true;
            if let Some(v) = flags.epochs {
                o.train.epochs = v;
            }
            if let Some(v) = flags.batch_size {
                o.train.batch_size = v;
            }
            if let Some(v) = flags.crop {
                o.train.crop_size = v;
            }
            if let Some(v) = flags.split {
                o.train.test_split = v;
            }
            if let Some(v) = flags.tau {
                o.train.tau = v;
            }
            o.update_from_kv(&kv)?;
            let h = cmd_train(&m, &o, &out)?;
            if let Some(last) = h.last() {
                println!("epoch {} train {:+.4} val {:+.4}", last.epoch, last.train_loss, last.val_loss);
            }
        }
        Command::Predict { model, manifest, sample, out } => {
            reject_unknown(&kv, &[])?;
            let em = load_emulator(&model)?;
            let m = RunManifest::load(&manifest)?;
            let pred = cmd_predict(&em, &m, &sample, &out)?;
            println!("{}x{} prediction -> {}", pred.rows(), pred.cols(), out.display());
        }
        Command::Evaluate { manifest, model, baseline, split, mut tau, out } => {
            reject_unknown(&kv, &["tau"])?;
            kv.apply("tau", &mut tau)?;
            let m = RunManifest::load(&manifest)?;
            let em = model.as_deref().map(load_emulator).transpose()?;
            let baseline = match baseline {
                BaselineArg::Model => Baseline::Model,
                BaselineArg::Persistence => Baseline::Persistence,
                BaselineArg::Oracle => Baseline::Oracle,
            };
            if em.is_some() && baseline != Baseline::Model {
                warn!("--model ignored for a baseline evaluation");
            }
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let r = cmd_evaluate(em.as_ref(), baseline, &m, split, tau, &out)?;
            print!("{}", r.to_text());
        }
        Command::Ensemble {
            model,
            manifest,
            sample,
            members,
            sigma_speed,
            sigma_dir,
            sigma_temp,
            mut level,
            seed,
            out,
        } => {
            let mut spec = PerturbationSpec { sigma_speed, sigma_dir, sigma_temp, n_members: members, seed };
            reject_unknown(&kv, &["sigma_speed", "sigma_dir", "sigma_temp", "members", "seed", "level"])?;
            kv.apply("sigma_speed", &mut spec.sigma_speed)?;
            kv.apply("sigma_dir", &mut spec.sigma_dir)?;
            kv.apply("sigma_temp", &mut spec.sigma_temp)?;
            kv.apply("members", &mut spec.n_members)?;
            kv.apply("seed", &mut spec.seed)?;
            kv.apply("level", &mut level)?;
            let em = load_emulator(&model)?;
            let m = RunManifest::load(&manifest)?;
            let p = cmd_ensemble(&em, &m, &sample, &spec, level, &out)?;
            println!("{} members, {}x{} probability grid -> {}", p.members(), p.rows(), p.cols(), out.display());
        }
        Command::Bench { model, manifest, mut repetitions, out } => {
            reject_unknown(&kv, &["repetitions"])?;
            kv.apply("repetitions", &mut repetitions)?;
            let em = load_emulator(&model)?;
            let m = RunManifest::load(&manifest)?;
            let r = cmd_bench(&em, &m, repetitions)?;
            let text = r.to_text();
            print!("{text}");
            if let Some(p) = out {
                std::fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
