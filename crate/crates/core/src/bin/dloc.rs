//! `dloc` command-line tool: generate datasets, run estimators, train the
//! network and sweep RMSE against SNR.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dloc::bench::{
    estimate, generate_dataset, render_svg, run_sweep, train_from_dataset, Dataset, EstimationContext, EstimatorKind,
    ExperimentConfig, ModelVariant,
};
use dloc::nn::load_checkpoint;
use dloc::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "dloc", version, about = "Underwater acoustic source localization bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled dataset file.
    Generate(Common),
    /// Localize one record of a dataset.
    Estimate(Common),
    /// Train the branch models and the joint model on a dataset.
    Train(Common),
    /// RMSE against SNR for the selected estimators.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (generate) or directory (train, sweep).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated estimator names.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Monte-Carlo trials per SNR level.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated SNR levels in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Perturb surface-reflection delays.
    #[arg(long)]
    dynamic: bool,
    /// Recorded noise: interleaved little-endian f64 complex samples.
    #[arg(long)]
    noise_file: Option<PathBuf>,
    /// Joint model checkpoint for the cnn estimator.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset file (estimate, train).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Record index within the dataset (estimate).
    #[arg(long, default_value_t = 0)]
    index: usize,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => configure(&a).and_then(|cfg| generate(&a, &cfg)),
        Command::Estimate(a) => configure(&a).and_then(|cfg| estimate_one(&a, &cfg)),
        Command::Train(a) => configure(&a).and_then(|cfg| train(&a, &cfg)),
        Command::Sweep(a) => configure(&a).and_then(|cfg| sweep(&a, &cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

/// Config file, then command-line overrides.
fn configure(a: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(names) = &a.estimators {
        cfg.estimators = names
            .iter()
            .map(|n| n.trim().parse::<EstimatorKind>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(snr) = &a.snr {
        cfg.snr_db = snr.clone();
    }
    if a.dynamic {
        cfg.model = ModelVariant::DynamicSurface;
    }
    if let Some(p) = &a.noise_file {
        cfg.noise_file = Some(p.clone());
    }
    if let Some(p) = &a.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.output.dir = p.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(a: &Common, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.dir.join("dataset.dlc"));
    let ds = generate_dataset(cfg)?;
    ensure_parent(&out)?;
    ds.save(&out)?;
    println!("wrote {} records to {}", ds.len(), out.display());
    Ok(())
}

fn estimate_one(a: &Common, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let input = a.input.as_ref().ok_or_else(|| Failure::Usage("estimate needs --input <dataset>".into()))?;
    let kind = match cfg.estimators.as_slice() {
        [k] => *k,
        _ => return Err(Failure::Usage("estimate takes exactly one estimator".into())),
    };
    let ds = Dataset::load(input)?;
    let item = ds
        .records
        .get(a.index)
        .ok_or_else(|| Failure::Usage(format!("index {} out of range ({} records)", a.index, ds.len())))?;
    let network = load_network(cfg, kind)?;
    let scene = cfg.scene()?;
    let volume = cfg.volume()?;
    let ctx = EstimationContext {
        scene: &scene,
        volume: &volume,
        network: network.as_ref(),
    };
    let out = estimate(kind, &item.record, &ctx)?;
    let p = out.position;
    println!("estimator,x,y,z,objective,runtime_s");
    println!("{kind},{},{},{},{},{}", p.x, p.y, p.z, out.objective, out.runtime_s);
    Ok(())
}

fn train(a: &Common, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let input = a.input.as_ref().ok_or_else(|| Failure::Usage("train needs --input <dataset>".into()))?;
    let ds = Dataset::load(input)?;
    let run = train_from_dataset(&ds, cfg)?;
    run.write_outputs(&cfg.output.dir)?;
    match run.holdout_rmse {
        Some(r) => println!("held-out RMSE {r:.3} m over {} records", run.holdout_len),
        None => println!("no held-out records"),
    }
    println!("wrote checkpoints to {}", cfg.output.dir.display());
    Ok(())
}

fn sweep(_a: &Common, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let network = if cfg.estimators.contains(&EstimatorKind::Cnn) {
        load_network(cfg, EstimatorKind::Cnn)?
    } else {
        None
    };
    let res = run_sweep(cfg, network.as_ref())?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    res.write_csv(BufWriter::new(File::create(dir.join("sweep.csv")).map_err(Error::from)?))?;
    res.write_trials_csv(BufWriter::new(File::create(dir.join("trials.csv")).map_err(Error::from)?))?;
    if cfg.output.plot {
        std::fs::write(dir.join("rmse.svg"), render_svg(&res.rows)).map_err(Error::from)?;
    }
    for r in &res.rows {
        println!("{:>10} {:>6.1} dB  RMSE {:>9.3} m  ({} trials)", r.estimator.name(), r.snr_db, r.rmse_m, r.trials);
    }
    Ok(())
}

fn load_network(cfg: &ExperimentConfig, kind: EstimatorKind) -> Result<Option<dloc::nn::Network>, Failure> {
    if kind != EstimatorKind::Cnn {
        return Ok(None);
    }
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Usage("the cnn estimator needs --checkpoint".into()))?;
    Ok(Some(load_checkpoint(path)?))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    Ok(())
}
