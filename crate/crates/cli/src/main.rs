//! Command-line front end for the visual/thermal face recognition pipeline.
//!
//! Experiment settings are resolved in three layers: built-in defaults, then
//! an optional `--config` JSON file, then individual flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use facefusion::harness::synth::{generate, write_dataset, SynthConfig};
use facefusion::harness::{
    build_manifest, evaluate, fuse_pair, load_manifest, run_experiment, split, train_system, ConfusionEstimate,
    Dataset, DatasetManifest, ExperimentConfig, TrainedSystem,
};
use facefusion::imaging::{load_pgm, save_pgm};
use facefusion::Error;

/// Exit statuses, one per error class. Usage errors exit with 2 (clap).
mod exit {
    pub const MISSING_FILE: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const VALIDATION: u8 = 5;
    pub const NUMERIC: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Parser)]
#[command(name = "facefusion", version, about = "Fused visual/thermal face recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse one visual/thermal pair into a single PGM.
    Fuse {
        #[arg(long)]
        visual: PathBuf,
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build an unsplit manifest from `<dir>/<class>/{visual,thermal}/`.
    Manifest {
        dir: PathBuf,
        /// Defaults to `<dir>/manifest.csv`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Assign train/test splits with a seeded per-class shuffle.
    Split {
        manifest: PathBuf,
        #[arg(long)]
        train_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to overwriting the input manifest.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Train both classifiers and their confusion estimates.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a trained system on a manifest's test samples.
    Evaluate {
        manifest: PathBuf,
        /// Its `config.json` is used when `--config` is not given.
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and evaluate in one go.
    Run {
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also print the per-pattern trace to stdout.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic paired dataset with a split manifest.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        train_per_class: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Resubstitution,
    HeldOut,
    CrossValidation,
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Wavelet decomposition depth.
    #[arg(long)]
    levels: Option<usize>,
    /// Select approximation coefficients by magnitude instead of averaging.
    #[arg(long)]
    fuse_approx: Option<bool>,
    #[arg(long)]
    variance_fraction: Option<f64>,
    /// Belief threshold for accepting the fused decision.
    #[arg(long)]
    gamma: Option<f64>,
    /// Additive smoothing for confusion estimates.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    confusion: Option<Method>,
    #[arg(long)]
    held_out_fraction: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    mlp_epochs: Option<usize>,
    #[arg(long)]
    mlp_learning_rate: Option<f64>,
    #[arg(long)]
    mlp_momentum: Option<f64>,
    #[arg(long)]
    mlp_reject: Option<f64>,
    #[arg(long)]
    rbf_centers: Option<usize>,
    #[arg(long)]
    rbf_ridge: Option<f64>,
    #[arg(long)]
    rbf_reject: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self, fallback: Option<&Path>) -> Result<ExperimentConfig, Error> {
        let mut cfg = match self.config.as_deref().or(fallback) {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        fn set<T: Copy>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        set(&mut cfg.width, self.width);
        set(&mut cfg.height, self.height);
        set(&mut cfg.levels, self.levels);
        set(&mut cfg.fuse_approx, self.fuse_approx);
        set(&mut cfg.variance_fraction, self.variance_fraction);
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.mlp.hidden_units, self.mlp_hidden);
        set(&mut cfg.mlp.epochs, self.mlp_epochs);
        set(&mut cfg.mlp.learning_rate, self.mlp_learning_rate);
        set(&mut cfg.mlp.momentum, self.mlp_momentum);
        set(&mut cfg.mlp.reject_threshold, self.mlp_reject);
        set(&mut cfg.rbf.centers_per_class, self.rbf_centers);
        set(&mut cfg.rbf.ridge, self.rbf_ridge);
        set(&mut cfg.rbf.reject_threshold, self.rbf_reject);

        let method = self.confusion.or(if self.held_out_fraction.is_some() {
            Some(Method::HeldOut)
        } else if self.folds.is_some() {
            Some(Method::CrossValidation)
        } else {
            None
        });
        let fraction = self.held_out_fraction.or(match cfg.confusion {
            ConfusionEstimate::HeldOut { fraction } => Some(fraction),
            _ => None,
        });
        let folds = self.folds.or(match cfg.confusion {
            ConfusionEstimate::CrossValidation { folds } => Some(folds),
            _ => None,
        });
        match method {
            Some(Method::Resubstitution) => cfg.confusion = ConfusionEstimate::Resubstitution,
            Some(Method::HeldOut) => {
                cfg.confusion = ConfusionEstimate::HeldOut { fraction: fraction.unwrap_or(0.3) }
            }
            Some(Method::CrossValidation) => {
                cfg.confusion = ConfusionEstimate::CrossValidation { folds: folds.unwrap_or(5) }
            }
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::MissingFile { .. } => exit::MISSING_FILE,
        Error::MalformedHeader(_)
        | Error::TruncatedData { .. }
        | Error::ZeroMaxval
        | Error::SampleOutOfRange { .. }
        | Error::Parse { .. }
        | Error::Version { .. }
        | Error::Serde(_) => exit::PARSE,
        Error::Validation(_) | Error::InvalidArgument(_) => exit::VALIDATION,
        Error::Io { .. } => exit::IO,
        _ => exit::NUMERIC,
    }
}

fn load_dataset(path: &Path) -> Result<(DatasetManifest, Dataset), Error> {
    let manifest = load_manifest(path)?;
    let ds = Dataset::load(&manifest)?;
    Ok((manifest, ds))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fuse { visual, thermal, out, config } => {
            let cfg = config.resolve(None)?;
            let fused = fuse_pair(&load_pgm(&visual)?, &load_pgm(&thermal)?, &cfg)?;
            save_pgm(&fused, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Manifest { dir, out } => {
            let manifest = build_manifest(&dir)?;
            let out = out.unwrap_or_else(|| dir.join("manifest.csv"));
            manifest.save(&out)?;
            println!(
                "{} classes, {} pairs -> {}",
                manifest.n_classes(),
                manifest.samples.len(),
                out.display()
            );
        }
        Command::Split { manifest, train_per_class, seed, out } => {
            let m = DatasetManifest::read(&manifest)?;
            let problems = m.problems(false);
            if !problems.is_empty() {
                return Err(Error::Validation(problems));
            }
            let out = out.unwrap_or(manifest);
            split(&m, train_per_class, seed)?.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Train { manifest, model_dir, config } => {
            let cfg = config.resolve(None)?;
            let (_, ds) = load_dataset(&manifest)?;
            let system = train_system(&ds, &cfg)?;
            system.save(&model_dir)?;
            let p = model_dir.join("config.json");
            std::fs::write(&p, cfg.to_json()).map_err(|e| io_err(&p, e))?;
            println!(
                "{} classes, {} components, train accuracy mlp {:.2}% rbf {:.2}% -> {}",
                system.n_classes(),
                system.basis.k(),
                100.0 * system.mlp.train_accuracy(),
                100.0 * system.rbf.train_accuracy(),
                model_dir.display()
            );
        }
        Command::Evaluate { manifest, model_dir, out, config } => {
            let saved = model_dir.join("config.json");
            let cfg = config.resolve(saved.is_file().then_some(saved.as_path()))?;
            let (_, ds) = load_dataset(&manifest)?;
            let system = TrainedSystem::load(&model_dir, &cfg)?;
            let report = evaluate(&system, &ds, &cfg)?;
            report.write(&out)?;
            print!("{}", report.summary());
        }
        Command::Run { manifest, out, trace, config } => {
            let cfg = config.resolve(None)?;
            let report = run_experiment(&load_manifest(&manifest)?, &cfg)?;
            report.write(&out)?;
            print!("{}", report.summary());
            if trace {
                print!("{}", report.trace_csv());
            }
        }
        Command::Synth { out, classes, per_class, train_per_class, width, height, seed } => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                classes: classes.unwrap_or(d.classes),
                per_class: per_class.unwrap_or(d.per_class),
                train_per_class: train_per_class.unwrap_or(d.train_per_class),
                width: width.unwrap_or(d.width),
                height: height.unwrap_or(d.height),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            let manifest = write_dataset(&generate(&cfg)?, &out)?;
            println!(
                "{} classes, {} pairs -> {}",
                manifest.n_classes(),
                manifest.samples.len(),
                out.join("manifest.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
