mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use qgnn::checkpoint::Checkpoint;
use qgnn::dataset::{build_dataset, read_dataset, split, write_dataset, DataConfig, DatasetHeader, PreparedData};
use qgnn::expressibility::{layer_sweep, write_sweep_csv};
use qgnn::model::ModelParams;
use qgnn::training::{evaluate_rmse, mean_predictor_rmse, train, write_loss_log, Rmse};

use crate::config::{parse_layers, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<qgnn::Error> for CliError {
    fn from(e: qgnn::Error) -> Self {
        use qgnn::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidInput(_) => CliError::Usage(msg),
            E::Io { .. } => CliError::Io(msg),
            E::Parse { .. } | E::Schema(_) | E::Unlabeled => CliError::Parse(msg),
            E::Numerical(_) | E::Sim(_) => CliError::Numerical(msg),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qgnn", version, about = "Quantum graph neural network for H2O forces and energy")]
struct Cli {
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides QGNN_OUTPUT_DIR and the config file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate, augment and write a synthetic dataset.
    GenData(GenDataArgs),
    /// Train a model and write the best checkpoint and the loss log.
    Train(TrainArgs),
    /// Report validation and test RMSE of a checkpoint.
    Eval(EvalArgs),
    /// Expressibility against the number of layers.
    Expressibility(ExprArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Number of raw samples before augmentation.
    #[arg(long)]
    n: Option<usize>,
    /// Augmentation factor (copies per raw sample, original included).
    #[arg(long)]
    factor: Option<usize>,
    /// Master seed for generation, augmentation and the split.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset path (default: <output-dir>/dataset.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset path (default: <output-dir>/dataset.jsonl).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of circuit layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight of the KL-inspired loss term.
    #[arg(long)]
    gamma: Option<f64>,
    /// Seed for the initial parameters.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Seed for the per-epoch batch shuffle.
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset path (default: <output-dir>/dataset.jsonl).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint path (default: <output-dir>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Expected layer count; must match the checkpoint.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args, Debug)]
struct ExprArgs {
    /// Layer counts, e.g. `1..8` (inclusive), `4` or `1,2,4`.
    #[arg(long, value_parser = parse_layer_arg)]
    layers: Option<LayerSpec>,
    /// Parameter pairs sampled per layer count.
    #[arg(long)]
    samples: Option<usize>,
    /// Fidelity histogram bins.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parsed `--layers` value; a newtype so clap treats it as one argument.
#[derive(Debug, Clone)]
struct LayerSpec(Vec<usize>);

fn parse_layer_arg(s: &str) -> Result<LayerSpec, String> {
    parse_layers(s).map(LayerSpec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.output_dir, cli.output_dir);
    set(&mut cfg.threads, cli.threads);
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;

    match cli.command {
        Command::GenData(a) => {
            set(&mut cfg.data.n_raw, a.n);
            set(&mut cfg.data.factor, a.factor);
            set(&mut cfg.data.seed, a.seed);
            if a.out.is_some() {
                cfg.dataset = a.out;
            }
            gen_data(cfg)
        }
        Command::Train(a) => {
            if a.data.is_some() {
                cfg.dataset = a.data;
            }
            let t = &mut cfg.train;
            set(&mut t.n_layers, a.layers);
            set(&mut t.max_epochs, a.epochs);
            set(&mut t.patience, a.patience);
            set(&mut t.learning_rate, a.lr);
            set(&mut t.loss.batch_size, a.batch_size);
            set(&mut t.loss.gamma, a.gamma);
            set(&mut t.init_seed, a.init_seed);
            set(&mut t.shuffle_seed, a.shuffle_seed);
            train_cmd(cfg)
        }
        Command::Eval(a) => {
            if a.data.is_some() {
                cfg.dataset = a.data;
            }
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            eval(cfg, a.layers)
        }
        Command::Expressibility(a) => {
            let e = &mut cfg.expressibility;
            set(&mut e.layers, a.layers.map(|l| l.0));
            set(&mut e.samples, a.samples);
            set(&mut e.bins, a.bins);
            set(&mut e.seed, a.seed);
            expressibility(cfg)
        }
    }
}

fn dataset_path(cfg: &RunConfig) -> PathBuf {
    cfg.dataset
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("dataset.jsonl"))
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("checkpoint.json"))
}

/// Pins the data settings and paths actually used, so the echoed config
/// reproduces the run.
fn resolve_inputs(cfg: &mut RunConfig, header: &DatasetHeader) {
    cfg.data = DataConfig {
        n_raw: header.n_raw,
        factor: header.factor,
        seed: header.seed,
        oracle: header.oracle,
    };
    cfg.dataset = Some(dataset_path(cfg));
    cfg.checkpoint = Some(checkpoint_path(cfg));
}

fn gen_data(mut cfg: RunConfig) -> Result<(), CliError> {
    if cfg.data.n_raw == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if cfg.data.factor == 0 {
        return Err(CliError::Usage("--factor must be at least 1".into()));
    }
    let path = dataset_path(&cfg);
    cfg.dataset = Some(path.clone());
    let (header, samples) = build_dataset(&cfg.data)?;
    write_dataset(&path, &header, &samples)?;
    cfg.echo("gen-data")?;
    println!("wrote {} samples to {}", samples.len(), path.display());
    Ok(())
}

fn train_cmd(mut cfg: RunConfig) -> Result<(), CliError> {
    cfg.train.validate()?;
    let (header, samples) = read_dataset(&dataset_path(&cfg))?;
    resolve_inputs(&mut cfg, &header);
    let data = PreparedData::new(&samples, header.split_seed)?;
    info!(
        "{} layers, {} parameters; {} train / {} validation / {} test samples",
        cfg.train.n_layers,
        ModelParams::count_for(cfg.train.n_layers),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    let outcome = train(&data.train, &data.validation, &cfg.train)?;
    let best = &outcome.state;

    let ck_path = checkpoint_path(&cfg);
    let ck = Checkpoint::new(
        &best.best_params,
        data.scalers,
        cfg.train.clone(),
        header.split_seed,
        best.best_epoch,
        best.best_val_loss,
        Some(header),
    );
    ck.save(&ck_path)?;
    let log_path = cfg.output_dir.join("loss.csv");
    write_loss_log(&log_path, &outcome.log)?;
    cfg.echo("train")?;

    let val = evaluate_rmse(&data.validation, &best.best_params)?;
    println!(
        "best epoch {} ({} parameters{}); validation RMSE(E) = {:.4}, RMSE(F) = {:.4}",
        best.best_epoch,
        ck.param_count,
        if outcome.stopped_early { ", stopped early" } else { "" },
        val.energy,
        val.forces
    );
    println!("checkpoint: {}\nloss log: {}", ck_path.display(), log_path.display());
    Ok(())
}

fn eval(mut cfg: RunConfig, layers: Option<usize>) -> Result<(), CliError> {
    let ck = Checkpoint::load(&checkpoint_path(&cfg))?;
    if let Some(n) = layers {
        if n != ck.n_layers {
            return Err(CliError::Parse(format!(
                "checkpoint has {} layers but --layers {n} was given",
                ck.n_layers
            )));
        }
    }
    let (header, samples) = read_dataset(&dataset_path(&cfg))?;
    resolve_inputs(&mut cfg, &header);
    cfg.train = ck.train.clone();
    if let Some(trained_on) = &ck.dataset {
        if trained_on != &header {
            return Err(CliError::Parse(
                "dataset header differs from the one the checkpoint was trained on".into(),
            ));
        }
    }
    let params = ck.model_params()?;
    let data = PreparedData::with_split(&samples, split(samples.len(), ck.split_seed)?, Some(ck.scalers))?;
    let model = [
        evaluate_rmse(&data.validation, &params)?,
        evaluate_rmse(&data.test, &params)?,
    ];
    let baseline = [
        mean_predictor_rmse(&data.train, &data.validation)?,
        mean_predictor_rmse(&data.train, &data.test)?,
    ];
    let rows = [
        (format!("QGNN ({} layers)", ck.n_layers), ck.param_count.to_string(), model),
        ("mean predictor".to_string(), "-".to_string(), baseline),
    ];
    print!("{}", report(&rows));

    let path = cfg.output_dir.join("metrics.csv");
    let mut csv = String::from("model,params,rmse_e_val,rmse_f_val,rmse_e_test,rmse_f_test\n");
    for (name, params, [v, t]) in &rows {
        csv.push_str(&format!("{name},{params},{},{},{},{}\n", v.energy, v.forces, t.energy, t.forces));
    }
    std::fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    cfg.echo("eval")?;
    Ok(())
}

/// Four RMSE columns (validation and test, energy and forces), scaled units.
fn report(rows: &[(String, String, [Rmse; 2])]) -> String {
    let mut out = format!(
        "{:<18} {:>8} {:>14} {:>14} {:>15} {:>15}\n",
        "Model", "#params", "RMSE(E) [val]", "RMSE(F) [val]", "RMSE(E) [test]", "RMSE(F) [test]"
    );
    for (name, params, [v, t]) in rows {
        out.push_str(&format!(
            "{name:<18} {params:>8} {:>14.4} {:>14.4} {:>15.4} {:>15.4}\n",
            v.energy, v.forces, t.energy, t.forces
        ));
    }
    out
}

fn expressibility(cfg: RunConfig) -> Result<(), CliError> {
    let e = &cfg.expressibility;
    if e.samples == 0 || e.bins == 0 {
        return Err(CliError::Usage("--samples and --bins must be at least 1".into()));
    }
    let rows = layer_sweep(&e.layers, e.samples, e.bins, e.seed)?;
    let path: &Path = &cfg.output_dir.join("expressibility.csv");
    write_sweep_csv(path, &rows)?;
    cfg.echo("expressibility")?;
    for r in &rows {
        println!("{} layers: KL = {:.5}", r.n_layers, r.kl_divergence);
    }
    println!("wrote {}", path.display());
    Ok(())
}
