//! `witloc`: generate location-tagged CSI datasets, train localizers,
//! evaluate them, and dump plot-ready diagnostics.
//!
//! Exit codes: 0 success, 2 configuration, 3 training, 4 evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use witloc_cli::config::{parse_config, preset, preset_names, Config};
use witloc_core::baseline::BaseDnn;
use witloc_core::channel::{
    build_scene, derive_paths, perturb_scene, rms_azimuth_spread, rms_delay_spread,
};
use witloc_core::checkpoint::{
    load_checkpoint, restore_model, save_checkpoint, AnyModel, CheckpointMeta, ModelKind,
};
use witloc_core::dataset::{self, Dataset};
use witloc_core::error::Error;
use witloc_core::model::{Localizer, PoolingMode, WitConfig, WitModel};
use witloc_core::rng::{substream, Domain};
use witloc_core::training::{
    self, localization_errors, mae, percentile95, write_ecdf, write_history, TrainConfig,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRAINING: u8 = 3;
const EXIT_EVALUATION: u8 = 4;

#[derive(Parser)]
#[command(name = "witloc", version, about = "Massive-MIMO CSI localization workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a scenario config
    Gen(GenArgs),
    /// Train a localizer on a dataset
    Train(TrainArgs),
    /// Evaluate checkpoints on a dataset's test split
    Eval(EvalArgs),
    /// Emit per-snapshot RMS delay/angle spreads for one transmitter
    Diag(DiagArgs),
}

#[derive(Args)]
struct ConfigSource {
    /// Path to a key=value config file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: tiny, s-static, s-dynamic, hb-das
    #[arg(long)]
    preset: Option<String>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Output dataset path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Wit,
    Base,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PoolingArg {
    Avg,
    Lid,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Dataset produced by `gen`
    #[arg(long)]
    dataset: PathBuf,
    /// Which architecture to train
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Pooling for the attention model (overrides the config)
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    /// Output checkpoint path; the history goes to the same path with the
    /// extension replaced by `history`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset with a split to evaluate on
    #[arg(long)]
    dataset: PathBuf,
    /// One or more checkpoints; each gets a table row and an ECDF file
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    /// Directory for `<checkpoint stem>.ecdf` outputs
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Output path for the two-column spread table
    #[arg(long)]
    out: PathBuf,
}

struct CliFailure {
    code: u8,
    message: String,
}

impl CliFailure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for CliFailure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            _ => 1,
        };
        CliFailure::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Diag(args) => cmd_diag(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Worker-count cap from the environment; 0 means "let rayon decide".
fn wit_threads() -> usize {
    std::env::var("WIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

fn load_config(source: &ConfigSource) -> Result<Config, CliFailure> {
    let body = match (&source.config, &source.preset) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| CliFailure::new(EXIT_CONFIG, format!("cannot read {path:?}: {e}")))?,
        (None, Some(name)) => preset(name)
            .ok_or_else(|| {
                CliFailure::new(
                    EXIT_CONFIG,
                    format!("unknown preset {name:?}; available: {}", preset_names().join(", ")),
                )
            })?
            .to_string(),
        (None, None) => {
            return Err(CliFailure::new(EXIT_CONFIG, "pass --config or --preset"));
        }
        (Some(_), Some(_)) => unreachable!("clap forbids the combination"),
    };
    let mut cfg = parse_config(&body)?;
    if let Some(seed) = source.seed {
        cfg.training.seed = seed;
    }
    cfg.scenario.threads = wit_threads();
    Ok(cfg)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliFailure> {
    let cfg = load_config(&args.source)?;
    let seed = cfg.training.seed;
    let (mut ds, report) = dataset::generate(&cfg.scenario, seed)?;
    dataset::split(&mut ds, cfg.split_ratio, seed)?;
    dataset::normalize(&mut ds, cfg.normalize_train_only)?;
    dataset::save(&ds, &args.out)?;
    let norm = ds.norm().expect("just normalized");
    println!("N_c' = {}", ds.n_subcarriers());
    println!(
        "samples kept = {}, discarded = {}",
        report.kept, report.discarded
    );
    println!(
        "delta_re = {}, delta_im = {}, delta_abs = {}",
        norm.delta_re, norm.delta_im, norm.delta_abs
    );
    println!(
        "train/val/test = {}/{}/{}",
        ds.train_indices()?.len(),
        ds.val_indices()?.len(),
        ds.test_indices()?.len()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn model_name(meta: &CheckpointMeta) -> String {
    match meta.kind {
        ModelKind::Base => "base".to_string(),
        ModelKind::Wit => match meta.pooling {
            PoolingMode::Average => "wit-avg".to_string(),
            PoolingMode::Lid => "wit-lid".to_string(),
        },
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliFailure> {
    let cfg = load_config(&args.source)?;
    let ds = dataset::load(&args.dataset)?;
    if ds.split_info().is_none() {
        return Err(CliFailure::new(
            EXIT_CONFIG,
            "dataset has no split; regenerate it with `gen`",
        ));
    }
    let pooling = match args.pooling {
        Some(PoolingArg::Avg) => PoolingMode::Average,
        Some(PoolingArg::Lid) => PoolingMode::Lid,
        None => cfg.model.pooling,
    };

    let train_cfg = TrainConfig {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch,
        lr: cfg.training.lr,
        weight_decay: cfg.training.weight_decay,
        seed: cfg.training.seed,
        // Early stopping applies to the base DNN; the attention model runs
        // its full budget.
        early_stop_patience: match args.model {
            ModelArg::Base => Some(cfg.training.patience),
            ModelArg::Wit => None,
        },
        threads: wit_threads(),
    };

    let (meta, report) = match args.model {
        ModelArg::Wit => {
            let wit_cfg = WitConfig {
                n_subcarriers: ds.n_subcarriers(),
                n_features: ds.n_features(),
                d_model: cfg.model.d_model,
                blocks: cfg.model.blocks,
                pooling,
                dropout: cfg.model.dropout,
                gamma: cfg.model.gamma,
                beta: cfg.model.beta,
                learn_layer_norm: cfg.model.learn_layer_norm,
                residual: true,
            };
            let mut model = WitModel::new(wit_cfg.clone(), cfg.training.seed)?;
            let report = training::fit(&mut model, &ds, &train_cfg)?;
            save_checkpoint(&args.out, &CheckpointMeta::for_wit(&wit_cfg), model.params())?;
            (CheckpointMeta::for_wit(&wit_cfg), report)
        }
        ModelArg::Base => {
            let base_cfg = witloc_core::baseline::BaseDnnConfig {
                input_dim: ds.n_subcarriers() * ds.n_features(),
                d_model: cfg.model.d_model,
            };
            let mut model = BaseDnn::new(base_cfg.clone(), cfg.training.seed)?;
            let report = training::fit(&mut model, &ds, &train_cfg)?;
            save_checkpoint(
                &args.out,
                &CheckpointMeta::for_base(&base_cfg, ds.n_subcarriers()),
                model.params(),
            )?;
            (CheckpointMeta::for_base(&base_cfg, ds.n_subcarriers()), report)
        }
    };

    let history_path = args.out.with_extension("history");
    write_history(&history_path, &report.history)?;
    if report.diverged {
        return Err(CliFailure::new(
            EXIT_TRAINING,
            format!(
                "training diverged after {} epochs; partial history kept at {}",
                report.history.len(),
                history_path.display()
            ),
        ));
    }
    println!(
        "{}: best validation MAE = {} m at epoch {}{}",
        model_name(&meta),
        report.best_val_mae_m,
        report.best_epoch,
        if report.stopped_early { " (early stop)" } else { "" }
    );
    println!("wrote {} and {}", args.out.display(), history_path.display());
    Ok(())
}

fn eval_failure(e: Error) -> CliFailure {
    let code = match &e {
        Error::Dimension(_) | Error::Format(_) => EXIT_EVALUATION,
        Error::Config(_) => EXIT_CONFIG,
        _ => 1,
    };
    CliFailure::new(code, e.to_string())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliFailure> {
    let ds = dataset::load(&args.dataset)?;
    let test_idx = ds.test_indices()?;
    if test_idx.is_empty() {
        return Err(CliFailure::new(EXIT_EVALUATION, "test split is empty"));
    }
    std::fs::create_dir_all(&args.out).map_err(Error::from)?;

    println!("{:<12} {:>10} {:>10}", "Method", "MAE(m)", "95th(m)");
    for path in &args.checkpoint {
        let (meta, params) = load_checkpoint(path).map_err(eval_failure)?;
        check_dims(&meta, &ds).map_err(eval_failure)?;
        let model = restore_model(&meta, params).map_err(eval_failure)?;
        let (mae_m, p95_m, errors) = evaluate(&model, &ds, &test_idx).map_err(eval_failure)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("checkpoint");
        let ecdf_path = args.out.join(format!("{stem}.ecdf"));
        write_ecdf(&ecdf_path, &errors)?;
        println!("{:<12} {:>10.4} {:>10.4}", model_name(&meta), mae_m, p95_m);
    }
    Ok(())
}

fn check_dims(meta: &CheckpointMeta, ds: &Dataset) -> Result<(), Error> {
    if meta.n_subcarriers as usize != ds.n_subcarriers()
        || meta.n_features as usize != ds.n_features()
    {
        return Err(Error::Dimension(format!(
            "checkpoint expects {}x{} features, dataset provides {}x{}",
            meta.n_subcarriers,
            meta.n_features,
            ds.n_subcarriers(),
            ds.n_features()
        )));
    }
    Ok(())
}

fn evaluate(
    model: &AnyModel,
    ds: &Dataset,
    indices: &[usize],
) -> Result<(f64, f64, Vec<f64>), Error> {
    let preds = training::predict_set(model.as_localizer(), ds, indices)?;
    let targets: Vec<[f64; 2]> = indices.iter().map(|&i| ds.label(i)).collect();
    let errors = localization_errors(&preds, &targets, ds.bounds());
    Ok((mae(&errors)?, percentile95(&errors)?, errors))
}

fn cmd_diag(args: DiagArgs) -> Result<(), CliFailure> {
    let cfg = load_config(&args.source)?;
    let seed = cfg.training.seed;
    let scenario = &cfg.scenario;
    let n_materials = scenario.channel.materials.len();
    let base = build_scene(&scenario.scene, scenario.n_rrh, n_materials, seed)?;

    let mut lines = String::new();
    for t in 0..scenario.snapshots {
        let (scene_t, rain) = perturb_scene(
            &base,
            scenario.sigma_z,
            scenario.sigma_n,
            n_materials,
            scenario.p_rain,
            seed,
            t as u64,
        )?;
        // Fixed transmitter 0, same path synthesis as dataset generation.
        let mut rng = substream(seed, Domain::Sample, 0, t as u64);
        let paths = derive_paths(
            &scene_t.transmitters[0],
            &scene_t,
            rain,
            &scenario.channel,
            &mut rng,
        );
        let tau = rms_delay_spread(&paths)?;
        let phi = rms_azimuth_spread(&paths)?;
        lines.push_str(&format!("{tau} {phi}\n"));
    }
    std::fs::write(&args.out, lines).map_err(Error::from)?;
    println!(
        "wrote {} snapshots of (tau_rms_s, phi_rms_rad) to {}",
        scenario.snapshots,
        args.out.display()
    );
    Ok(())
}
