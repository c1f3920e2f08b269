use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tcprune::gcn::model::{GcnMask, GcnModel};
use tcprune::gcn::prune::{gcn_consistency, prune_gcn};
use tcprune::gcn::skeleton::{write_dataset_dir, SynthParams};
use tcprune::gcn::train::{evaluate, train};
use tcprune::harness::{
    self, emit, load_data, report, run_ablation, run_alpha_sweep, DatasetSource, ExperimentConfig, ExperimentData,
    Format, ModelConfig, ABLATION_LOG, ALPHA_LOG,
};
use tcprune::pruner::{prune, PruneSpec, Scoring};
use tcprune::textfmt::{load_network, save_mask};
use tcprune::topology::consistency_report;
use tcprune::{Error, Result};

#[derive(Parser)]
#[command(name = "tcprune", version, about = "Topologically consistent magnitude pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    Local,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory with `train/` and `test/` sequence directories.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Use generated data (the default when no dataset is given).
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 15)]
    joints: usize,
    #[arg(long, default_value_t = 48)]
    frames: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn source(&self) -> DatasetSource {
        match &self.dataset {
            Some(dir) => DatasetSource::Path(dir.clone()),
            None => DatasetSource::Synthetic {
                params: SynthParams {
                    num_classes: self.classes,
                    per_class: self.per_class,
                    joints: self.joints,
                    frames: self.frames,
                    noise: self.noise,
                    seed: self.data_seed,
                },
                test_per_class: self.test_per_class,
            },
        }
    }
}

#[derive(Args, Clone)]
struct PruneArgs {
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    tc: bool,
    #[arg(long)]
    stochastic: bool,
    #[arg(long, value_enum, default_value = "local")]
    scoring: ScoringArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PruneArgs {
    fn spec(&self) -> PruneSpec {
        PruneSpec {
            rate: self.rate,
            tc: self.tc,
            stochastic: self.stochastic,
            scoring: match self.scoring {
                ScoringArg::Local => Scoring::Local,
                ScoringArg::Global => Scoring::Global { alpha: self.alpha },
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Replaces the configured rates (repeatable).
    #[arg(long)]
    rate: Vec<f64>,
    /// Replaces the configured seeds (repeatable).
    #[arg(long)]
    seed: Vec<u64>,
    /// Replaces the configured alphas (repeatable).
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    /// Replaces the configured dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl GridArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if !self.rate.is_empty() {
            cfg.rates = self.rate.clone();
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if !self.alpha.is_empty() {
            cfg.alphas = self.alpha.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if self.finetune_epochs.is_some() {
            cfg.finetune_epochs = self.finetune_epochs;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = DatasetSource::Path(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as `train/` and `test/` sequence directories.
    Synth {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a baseline GCN and save it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        batch_size: usize,
        #[arg(long, default_value_t = 8)]
        chunks: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 16)]
        filters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute one mask for a saved GCN (`--model`) or a layered network text file (`--network`).
    Prune {
        #[arg(long, required_unless_present = "network", conflicts_with = "network")]
        model: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        #[command(flatten)]
        prune: PruneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a saved GCN under a mask.
    Finetune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, alias = "finetune-epochs", default_value_t = 25)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        batch_size: usize,
        #[arg(long, default_value_t = 8)]
        chunks: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rates crossed with variants, aggregated over seeds.
    Ablate(GridArgs),
    /// Stochastic TC pruning with global scoring over a list of alphas.
    AlphaSweep(GridArgs),
    /// Re-emit a table from a results directory after checking its masks.
    Report {
        dir: PathBuf,
        /// Which grid to report.
        #[arg(long, default_value = "ablate")]
        kind: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } | Error::Csv(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 2,
    }
}

fn quick_config(data: &DataArgs, chunks: usize, heads: usize, filters: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: data.source(),
        model: ModelConfig { heads, filters, chunks },
        train: Default::default(),
        finetune_epochs: None,
        rates: vec![0.0],
        variants: vec![],
        alphas: vec![],
        alpha_rate: 0.999,
        seeds: vec![0],
        output: PathBuf::new(),
    }
}

fn load_model(path: &Path) -> Result<GcnModel> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn save_model(model: &GcnModel, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, serde_json::to_string(model)?)?)
}

fn print_accuracy(model: &GcnModel, data: &ExperimentData, mask: Option<&GcnMask>) -> Result<()> {
    println!(
        "{{\"train_accuracy\":{},\"test_accuracy\":{}}}",
        evaluate(model, &data.train, mask)?,
        evaluate(model, &data.test, mask)?
    );
    Ok(())
}

fn grid(args: &GridArgs, sweep: bool) -> Result<()> {
    let cfg = args.config()?;
    std::fs::create_dir_all(&cfg.output)?;
    let rows = if sweep { run_alpha_sweep(&cfg)? } else { run_ablation(&cfg)? };
    let format: Format = args.format.into();
    let name = if sweep { "alpha_sweep" } else { "ablation" };
    let path = cfg.output.join(format!("{name}.{}", format.extension()));
    emit(&rows, format, &path)?;
    print!("{}", harness::rows_to_string(&rows, Format::Csv)?);
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { data, out } => {
            let DatasetSource::Synthetic { params, test_per_class } = data.source() else {
                return Err(Error::Config("synth does not take --dataset".into()));
            };
            let (train_set, test_set) = harness::split_synthetic(&params, test_per_class)?;
            write_dataset_dir(&train_set, &out.join("train"))?;
            write_dataset_dir(&test_set, &out.join("test"))?;
            eprintln!(
                "wrote {} train and {} test sequences under {}",
                train_set.sequences.len(),
                test_set.sequences.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            epochs,
            seed,
            lr,
            batch_size,
            chunks,
            heads,
            filters,
            out,
        } => {
            let mut cfg = quick_config(&data, chunks, heads, filters);
            cfg.train.epochs = epochs;
            cfg.train.initial_lr = lr;
            cfg.train.batch_size = batch_size;
            cfg.train.validate()?;
            let loaded = load_data(&cfg)?;
            let model = harness::train_baseline(&cfg, &loaded, seed)?;
            save_model(&model, &out)?;
            print_accuracy(&model, &loaded, None)?;
        }
        Command::Prune {
            model,
            network,
            prune: args,
            out,
        } => {
            let spec = args.spec();
            spec.validate()?;
            if let Some(path) = network {
                let net = load_network(&path)?;
                let mask = prune(&net, &spec)?;
                save_mask(&mask, &out)?;
                println!("{}", consistency_report(&mask).to_json());
            } else {
                let model = load_model(&model.expect("clap enforces one source"))?;
                let mask = prune_gcn(&model, &spec)?;
                std::fs::write(&out, mask.to_text())?;
                println!("{}", serde_json::to_string(&gcn_consistency(&mask))?);
            }
        }
        Command::Finetune {
            data,
            model,
            mask,
            epochs,
            seed,
            lr,
            batch_size,
            chunks,
            out,
        } => {
            let model = load_model(&model)?;
            let hyper = *model.hyper();
            let mask = GcnMask::from_text(hyper, &std::fs::read_to_string(&mask)?)?;
            let cfg = quick_config(&data, chunks, hyper.heads, hyper.filters);
            let loaded = load_data(&cfg)?;
            if loaded.hyper != hyper {
                return Err(Error::Config(format!("dataset implies {:?}, model is {:?}", loaded.hyper, hyper)));
            }
            let tc = tcprune::gcn::train::TrainConfig {
                epochs,
                batch_size,
                initial_lr: lr,
                seed,
                ..Default::default()
            };
            let tuned = train(&model, &loaded.train, &tc, Some(&mask))?;
            save_model(&tuned.model, &out)?;
            print_accuracy(&tuned.model, &loaded, Some(&mask))?;
        }
        Command::Ablate(args) => grid(&args, false)?,
        Command::AlphaSweep(args) => grid(&args, true)?,
        Command::Report { dir, kind, format, out } => {
            let log = match kind.as_str() {
                "ablate" => ABLATION_LOG,
                "alpha-sweep" => ALPHA_LOG,
                other => return Err(Error::Config(format!("unknown report kind `{other}`"))),
            };
            let rows = report(&dir, log)?;
            let format: Format = format.into();
            match out {
                Some(path) => emit(&rows, format, &path)?,
                None => print!("{}", harness::rows_to_string(&rows, format)?),
            }
        }
    }
    Ok(())
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
