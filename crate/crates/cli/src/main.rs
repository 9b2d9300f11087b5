//! Command-line driver: dataset generation, cascade training with a PC
//! sweep, report emission, sensitivity-map export, and report recomputation
//! from saved models.
//!
//! Exit codes: 0 success, 2 configuration error, 3 training failure,
//! 4 I/O or data-file failure.

mod config;
mod reports;

use cascadenet::persistence;
use cascadenet::{cascade, dataset, interpret, Error};
use clap::{Args, Parser, Subcommand};
use config::{CascadeFlags, FileConfig, GeneratorFlags, DEFAULT_PCS};
use std::path::PathBuf;
use std::process::ExitCode;

const PARTITION_FRACTIONS: (f64, f64, f64) = (0.5, 0.25, 0.25);

#[derive(Parser)]
#[command(
    name = "cascadenet",
    version,
    about = "Cascade ensembles of progressively deeper nets on PCA-reduced gridded data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-channel dataset CSV.
    Generate(GenerateArgs),
    /// Train cascades over a list of PC counts; write the best model and
    /// report CSVs.
    Train(TrainArgs),
    /// Export per-unit sensitivity maps (CSV grids and PPM heatmaps) from a
    /// saved model.
    Maps(MapsArgs),
    /// Recompute report CSVs from a saved model and a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV produced by `generate` (or matching its schema).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for model.json and report CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed: drives the year partition and net initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated PC counts to sweep, e.g. 1,2,5,10.
    #[arg(long)]
    pcs: Option<String>,
    #[command(flatten)]
    cascade: CascadeFlags,
}

#[derive(Args)]
struct MapsArgs {
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for map files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV to evaluate on.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for report CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed used to recreate the year partition.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Maps(args) => cmd_maps(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// CASCADENET_THREADS caps the rayon pool used by the PC sweep.
fn init_thread_pool() -> Result<(), Error> {
    match std::env::var("CASCADENET_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                Error::Parameter(format!(
                    "CASCADENET_THREADS must be a positive integer, got `{raw}`"
                ))
            })?;
            if n == 0 {
                return Err(Error::Parameter(
                    "CASCADENET_THREADS must be a positive integer".to_string(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Parameter(format!("thread pool: {e}")))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Shape(_) | Error::Load(_) => 2,
        Error::Training { .. }
        | Error::Sweep { .. }
        | Error::Numerical { .. }
        | Error::Convergence(_) => 3,
        Error::Io { .. } | Error::Parse { .. } => 4,
    }
}

/// Provenance lines stamped into every output: the exact invocation, the
/// master seed, and the model schema version.
fn provenance(seed: u64) -> Vec<String> {
    let cmd: Vec<String> = std::env::args().collect();
    vec![
        cmd.join(" "),
        format!("seed: {seed}"),
        format!("schema_version: {}", persistence::SCHEMA_VERSION),
    ]
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, Error> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    let file = load_file_config(&args.config)?;
    let gen = config::merge_generator(file.generator.as_ref(), &args.generator);
    gen.validate()?;
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("data.csv"));
    let ds = dataset::generate(&gen)?;
    dataset::save_csv(&ds, &out, &provenance(0))?;
    println!(
        "wrote {} samples ({}x{} grid) to {}",
        ds.samples.len(),
        ds.height,
        ds.width,
        out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let file = load_file_config(&args.config)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let data_path = args
        .data
        .or(file.data)
        .unwrap_or_else(|| PathBuf::from("data.csv"));
    let out_dir = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    let pcs: Vec<usize> = match &args.pcs {
        Some(raw) => config::parse_pcs(raw)?,
        None => file.pcs.clone().unwrap_or_else(|| DEFAULT_PCS.to_vec()),
    };
    if pcs.is_empty() {
        return Err(Error::Parameter("pcs list must not be empty".to_string()));
    }
    let cascade_cfg = config::merge_cascade(file.cascade.as_ref(), &args.cascade, seed);
    cascade_cfg.validate()?;

    let ds = dataset::load_csv(&data_path)?;
    let partition = dataset::partition_by_year(&ds, PARTITION_FRACTIONS, seed)?;
    let sweep = cascade::sweep_pcs(&ds, &partition, &pcs, &cascade_cfg)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let prov = provenance(seed);
    persistence::save(&sweep.best_cascade, &out_dir.join("model.json"), &prov)?;
    reports::write_rmse_vs_pcs(&out_dir.join("rmse_vs_pcs.csv"), &sweep.records, &prov)?;
    reports::write_per_net_rmse(
        &out_dir.join("per_net_rmse.csv"),
        &sweep.best_cascade,
        &ds,
        &partition,
        &prov,
    )?;
    reports::write_pred_vs_actual(
        &out_dir.join("pred_vs_actual.csv"),
        &sweep.best_cascade,
        &ds,
        &partition,
        &prov,
    )?;
    reports::write_rmse_per_year(
        &out_dir.join("rmse_per_year.csv"),
        &sweep.best_cascade,
        &ds,
        &partition,
        &prov,
    )?;

    let best = sweep
        .records
        .iter()
        .find(|r| r.k == sweep.best_k)
        .expect("best k is in records");
    println!(
        "best k = {} ({} nets kept): val RMSE {:.6}, test RMSE {:.6}; outputs in {}",
        sweep.best_k,
        best.nets_kept,
        best.val_rmse,
        best.test_rmse,
        out_dir.display()
    );
    Ok(())
}

fn cmd_maps(args: MapsArgs) -> Result<(), Error> {
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("maps"));
    let model = persistence::load(&args.model)?;
    let files = interpret::export_maps(&model, &out_dir)?;
    println!("wrote {} map files to {}", files.len(), out_dir.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let file = load_file_config(&args.config)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let data_path = args
        .data
        .or(file.data)
        .unwrap_or_else(|| PathBuf::from("data.csv"));
    let out_dir = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("out"));

    let model = persistence::load(&args.model)?;
    let ds = dataset::load_csv(&data_path)?;
    let partition = dataset::partition_by_year(&ds, PARTITION_FRACTIONS, seed)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let prov = provenance(seed);
    reports::write_per_net_rmse(
        &out_dir.join("per_net_rmse.csv"),
        &model,
        &ds,
        &partition,
        &prov,
    )?;
    reports::write_pred_vs_actual(
        &out_dir.join("pred_vs_actual.csv"),
        &model,
        &ds,
        &partition,
        &prov,
    )?;
    reports::write_rmse_per_year(
        &out_dir.join("rmse_per_year.csv"),
        &model,
        &ds,
        &partition,
        &prov,
    )?;
    println!(
        "evaluated {} samples; reports in {}",
        ds.samples.len(),
        out_dir.display()
    );
    Ok(())
}
