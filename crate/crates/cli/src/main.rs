use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use sefm::data::{self, DatasetSchema, CHECKSUM_FILE};
use sefm::experiment::{
    self, apply_overrides, default_sigma_grid, resolve_data_dir, write_json, GridSpec, ModelKind,
    RunConfig, Timing, DATA_DIR_ENV,
};
use sefm::{Error, ErrorKind, NetworkConfig};

#[derive(Parser)]
#[command(
    name = "sefm",
    version,
    about = "Spiking classifier with time-varying synaptic efficacy"
)]
struct Cli {
    /// Directory holding dataset schemas, CSV files and the checksum manifest.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one split and write the model checkpoint and report.
    Train(RunArgs),
    /// Train and test on repeated stratified random splits.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Model::TimeVarying)]
        model: Model,
    },
    /// Benchmark a list of sigma values on the same splits.
    SigmaSweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated sigma values. Defaults to 0.1..2 by 0.1, 2.5..8 by 0.5, and 1e6.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Also train the explicit constant-weight model.
        #[arg(long)]
        baseline: bool,
    },
    /// Pick the reference rate and sigma by validation accuracy.
    GridSearch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        reference_rates: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
    },
    /// Convert raw dataset files into CSV and write the checksum manifest.
    PrepareData {
        /// Directory with the raw source files named in each schema.
        #[arg(long, required_unless_present = "verify")]
        source: Option<PathBuf>,
        /// Only check existing files against the manifest.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    TimeVarying,
    ConstantWeight,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Dataset name, overriding the config file.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Override a network parameter, e.g. `--set sigma=0.3`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    overrides: Vec<String>,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

struct Resolved {
    run: RunConfig,
    jobs: usize,
    out: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> sefm::Result<Resolved> {
        let mut run = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig {
                dataset: self
                    .dataset
                    .clone()
                    .ok_or_else(|| Error::config("dataset", "pass --config or --dataset"))?,
                folds: 10,
                network: NetworkConfig::default(),
                grid: None,
            },
        };
        if let Some(d) = &self.dataset {
            run.dataset = d.clone();
        }
        if let Some(f) = self.folds {
            run.folds = f;
        }
        run.network = apply_overrides(&run.network, &self.overrides)?;
        if let Some(s) = self.seed {
            run.network.seed = s;
        }
        run.validate()?;
        let jobs = match self.jobs {
            Some(0) => return Err(Error::config("jobs", "must be at least 1")),
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, usize::from),
        };
        Ok(Resolved {
            run,
            jobs,
            out: self.out.clone(),
        })
    }
}

fn timed<T>(
    command: &str,
    jobs: usize,
    out: &Path,
    name: &str,
    work: impl FnOnce() -> sefm::Result<T>,
) -> sefm::Result<T> {
    let start = Instant::now();
    let value = work()?;
    let timing = Timing {
        command: command.into(),
        jobs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    info!("{command} finished in {:.1}s", timing.wall_seconds);
    write_json(&out.join(format!("{name}.timing.json")), &timing)?;
    Ok(value)
}

fn run(cli: Cli) -> sefm::Result<()> {
    let data_dir = resolve_data_dir(cli.data_dir.as_deref());
    match cli.command {
        Command::Train(args) => {
            let r = args.resolve()?;
            let ds = r.run.load_dataset(&data_dir)?;
            let (model, report) = timed("train", 1, &r.out, "train", || {
                experiment::train_once(&ds, &r.run.network)
            })?;
            fs::create_dir_all(&r.out)?;
            model.save(&r.out.join("model.json"))?;
            write_json(&r.out.join("train_report.json"), &report)?;
            println!(
                "{} {}: train {:.1}% test {:.1}% after {} epochs",
                report.dataset,
                report.architecture,
                100.0 * report.train_accuracy,
                100.0 * report.test_accuracy,
                report.training.epochs.len()
            );
        }
        Command::Benchmark { run, model } => {
            let r = run.resolve()?;
            let ds = r.run.load_dataset(&data_dir)?;
            let (kind, name) = match model {
                Model::TimeVarying => (ModelKind::TimeVarying, "benchmark"),
                Model::ConstantWeight => (ModelKind::ConstantWeight, "benchmark_constant_weight"),
            };
            let report = timed("benchmark", r.jobs, &r.out, name, || {
                experiment::benchmark(&ds, &r.run.network, r.run.folds, kind, r.jobs)
            })?;
            write_json(&r.out.join(format!("{name}.json")), &report)?;
            println!(
                "{} {}: train {} test {}",
                report.dataset,
                report.architecture,
                report.train_accuracy.formatted,
                report.test_accuracy.formatted
            );
        }
        Command::SigmaSweep {
            run,
            sigmas,
            baseline,
        } => {
            let r = run.resolve()?;
            let ds = r.run.load_dataset(&data_dir)?;
            let sigmas = sigmas.unwrap_or_else(default_sigma_grid);
            let report = timed("sigma-sweep", r.jobs, &r.out, "sigma_sweep", || {
                experiment::sigma_sweep(&ds, &r.run.network, &sigmas, r.run.folds, baseline, r.jobs)
            })?;
            write_json(&r.out.join("sigma_sweep.json"), &report)?;
            fs::write(r.out.join("sigma_sweep.csv"), report.to_csv())?;
            print!("{}", report.to_csv());
        }
        Command::GridSearch {
            run,
            reference_rates,
            sigmas,
        } => {
            let r = run.resolve()?;
            let ds = r.run.load_dataset(&data_dir)?;
            let from_file = r.run.grid.clone();
            let grid = GridSpec {
                reference_rates: reference_rates
                    .or_else(|| from_file.as_ref().map(|g| g.reference_rates.clone()))
                    .ok_or_else(|| Error::config("reference_rates", "no grid given"))?,
                sigmas: sigmas
                    .or_else(|| from_file.as_ref().map(|g| g.sigmas.clone()))
                    .ok_or_else(|| Error::config("sigmas", "no grid given"))?,
            };
            let report = timed("grid-search", r.jobs, &r.out, "grid_search", || {
                experiment::grid_search(&ds, &r.run.network, &grid, r.run.folds, r.jobs)
            })?;
            write_json(&r.out.join("grid_search.json"), &report)?;
            println!(
                "{}: best reference_rate={} sigma={} validation {} test {}",
                report.dataset,
                report.best.reference_rate,
                report.best.sigma,
                report.best.validation_accuracy.formatted,
                report.best_benchmark.test_accuracy.formatted
            );
        }
        Command::PrepareData { source, verify } => {
            if !verify {
                let source = source.expect("clap requires --source");
                prepare_data(&source, &data_dir)?;
            }
            let checked = data::verify_checksums(&data_dir)?;
            println!("{} files match {}", checked.len(), CHECKSUM_FILE);
        }
    }
    Ok(())
}

/// Convert every schema with a raw source, then rewrite the manifest.
fn prepare_data(source: &Path, data_dir: &Path) -> sefm::Result<()> {
    let mut schema_paths: Vec<PathBuf> = fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    schema_paths.sort();
    let mut manifest = String::new();
    for path in schema_paths {
        let schema = DatasetSchema::from_toml_file(&path)?;
        let Some(spec) = &schema.source else { continue };
        let raw_path = spec
            .files
            .iter()
            .map(|f| source.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::MissingFile(source.join(spec.files.join("|"))))?;
        let csv = data::convert_raw(&fs::read_to_string(&raw_path)?, &schema)?;
        let target = data_dir.join(&schema.file);
        fs::write(&target, csv)?;
        let ds = data::load_dataset(data_dir, &schema)?;
        info!(
            "{}: {} rows, {} features, class sizes {:?}",
            schema.name,
            ds.len(),
            ds.feature_count(),
            ds.class_sizes()
        );
        manifest.push_str(&format!(
            "{}  {}\n",
            data::sha256_file(&target)?,
            schema.file
        ));
    }
    fs::write(data_dir.join(CHECKSUM_FILE), manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
