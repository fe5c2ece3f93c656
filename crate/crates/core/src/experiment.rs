//! Repeated-split experiments: single training runs, fold benchmarks, sigma
//! sweeps and hyperparameter grid search.
//!
//! Every run owns its network and derives its seed from the run seed and its
//! job index, so results are identical regardless of `jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::ConstantWeightNeuron;
use crate::config::{NetworkConfig, CONSTANT_WEIGHT_SIGMA};
use crate::data::{
    evaluate, format_mean_sd, make_folds, mean_sd, read_checksums, sha256_file, stratified_split,
    DatasetSchema, Evaluation, Fold, SplitSpec, TabularDataset, CHECKSUM_FILE,
};
use crate::dynamics::{OutputNeuron, WeightModel};
use crate::encoding::{fit_ranges, EncoderConfig};
use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::rng::{derive_seed, stream_rng};
use crate::training::{train, LabeledPattern, Network, TrainingReport};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Environment variable overriding the data directory.
pub const DATA_DIR_ENV: &str = "SEFM_DATA_DIR";

/// Which synaptic weight representation to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TimeVarying,
    ConstantWeight,
}

fn default_folds() -> usize {
    10
}

/// Contents of a per-dataset run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset name; its schema lives at `<data_dir>/<dataset>.toml`.
    pub dataset: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub reference_rates: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::config(
                "config",
                format!("file not found: {}", path.display()),
            ));
        }
        let cfg: Self = toml::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::config("folds", "must be at least 1"));
        }
        self.network.validate()
    }

    pub fn schema_path(&self, data_dir: &Path) -> PathBuf {
        data_dir.join(format!("{}.toml", self.dataset))
    }

    /// Load the dataset, checking it against the data directory's checksum
    /// manifest when one lists it.
    pub fn load_dataset(&self, data_dir: &Path) -> Result<TabularDataset> {
        let schema = DatasetSchema::from_toml_file(&self.schema_path(data_dir))?;
        let manifest = data_dir.join(CHECKSUM_FILE);
        if manifest.is_file() {
            if let Some(expected) = read_checksums(&manifest)?.get(&schema.file) {
                let path = data_dir.join(&schema.file);
                if path.is_file() {
                    let found = sha256_file(&path)?;
                    if &found != expected {
                        return Err(Error::Checksum {
                            path,
                            expected: expected.clone(),
                            found,
                        });
                    }
                }
            }
        }
        crate::data::load_dataset(data_dir, &schema)
    }
}

/// Data directory: explicit path, else `$SEFM_DATA_DIR`, else `./data`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn encode_samples(
    encoder: &EncoderConfig,
    features: &[Vec<f64>],
    labels: &[usize],
    indices: &[usize],
) -> Result<Vec<LabeledPattern>> {
    indices
        .iter()
        .map(|&i| {
            Ok(LabeledPattern {
                pattern: encoder.encode(&features[i])?,
                label: labels[i],
            })
        })
        .collect()
}

/// Everything produced by training on one split.
#[derive(Debug, Clone)]
pub struct SplitOutcome<N> {
    pub network: Network<N>,
    pub encoder: EncoderConfig,
    pub report: TrainingReport,
    pub train: Evaluation,
    pub test: Evaluation,
}

/// Impute, fit the encoder on the training part, train and evaluate.
pub fn run_split<N: WeightModel>(
    dataset: &TabularDataset,
    fold: &Fold,
    cfg: &NetworkConfig,
) -> Result<SplitOutcome<N>> {
    cfg.validate()?;
    let features = dataset.imputed_features(&fold.train);
    let train_rows: Vec<Vec<f64>> = fold.train.iter().map(|&i| features[i].clone()).collect();
    let encoder = fit_ranges(&cfg.encoder_settings(), &train_rows)?;
    let train_set = encode_samples(&encoder, &features, &dataset.labels, &fold.train)?;
    let test_set = encode_samples(&encoder, &features, &dataset.labels, &fold.test)?;
    let mut network = Network::new(
        encoder.input_count(),
        dataset.class_count(),
        cfg.sigma,
        cfg.simulation(),
    );
    let report = train(&mut network, &train_set, cfg)?;
    Ok(SplitOutcome {
        train: evaluate(&network, &train_set),
        test: evaluate(&network, &test_set),
        network,
        encoder,
        report,
    })
}

pub fn architecture(dataset: &TabularDataset, cfg: &NetworkConfig) -> String {
    format!(
        "{}-{}",
        dataset.feature_count() * cfg.receptive_fields,
        dataset.class_count()
    )
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(work))
}

/// Configuration for fold `index`, with its own derived seed.
fn fold_config(cfg: &NetworkConfig, index: usize) -> NetworkConfig {
    NetworkConfig {
        seed: derive_seed(cfg.seed, index as u64),
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    /// Percentages as `mean(sd)`.
    pub formatted: String,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self {
            mean,
            sd,
            formatted: format_mean_sd(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub test_confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub dataset: String,
    pub model: ModelKind,
    pub architecture: String,
    pub folds: usize,
    pub config: NetworkConfig,
    pub train_accuracy: Summary,
    pub test_accuracy: Summary,
    pub fold_results: Vec<FoldResult>,
}

fn fold_result<N>(fold: usize, seed: u64, out: &SplitOutcome<N>) -> FoldResult {
    FoldResult {
        fold,
        seed,
        train_accuracy: out.train.accuracy,
        test_accuracy: out.test.accuracy,
        epochs_run: out.report.epochs.len(),
        stopped_early: out.report.stopped_early,
        test_confusion: out.test.confusion.clone(),
    }
}

fn run_folds<N: WeightModel>(
    dataset: &TabularDataset,
    cfg: &NetworkConfig,
    folds: usize,
) -> Result<Vec<FoldResult>> {
    let plan = make_folds(dataset, folds, cfg.seed)?;
    plan.folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let fcfg = fold_config(cfg, f);
            let out = run_split::<N>(dataset, fold, &fcfg)?;
            Ok(fold_result(f, fcfg.seed, &out))
        })
        .collect()
}

/// Train and test on `folds` stratified random splits.
pub fn benchmark(
    dataset: &TabularDataset,
    cfg: &NetworkConfig,
    folds: usize,
    model: ModelKind,
    jobs: usize,
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let fold_results = with_pool(jobs, || match model {
        ModelKind::TimeVarying => run_folds::<OutputNeuron>(dataset, cfg, folds),
        ModelKind::ConstantWeight => run_folds::<ConstantWeightNeuron>(dataset, cfg, folds),
    })??;
    let train: Vec<f64> = fold_results.iter().map(|r| r.train_accuracy).collect();
    let test: Vec<f64> = fold_results.iter().map(|r| r.test_accuracy).collect();
    Ok(BenchmarkReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: dataset.name.clone(),
        model,
        architecture: architecture(dataset, cfg),
        folds,
        config: cfg.clone(),
        train_accuracy: Summary::of(&train),
        test_accuracy: Summary::of(&test),
        fold_results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunReport {
    pub format_version: u32,
    pub dataset: String,
    pub architecture: String,
    pub config: NetworkConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_confusion: Vec<Vec<usize>>,
    pub training: TrainingReport,
}

/// Train once on the first split of the fold plan.
pub fn train_once(
    dataset: &TabularDataset,
    cfg: &NetworkConfig,
) -> Result<(ModelCheckpoint, TrainRunReport)> {
    let plan = make_folds(dataset, 1, cfg.seed)?;
    let fold = &plan.folds[0];
    let fcfg = fold_config(cfg, 0);
    let out = run_split::<OutputNeuron>(dataset, fold, &fcfg)?;
    let checkpoint = ModelCheckpoint::from_network(
        &out.network,
        Some(out.encoder.clone()),
        dataset.class_names.clone(),
    );
    let report = TrainRunReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: dataset.name.clone(),
        architecture: out.network.architecture(),
        config: cfg.clone(),
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        train_accuracy: out.train.accuracy,
        test_accuracy: out.test.accuracy,
        test_confusion: out.test.confusion,
        training: out.report,
    };
    Ok((checkpoint, report))
}

/// `0.1..=2.0` in steps of 0.1, `2.5..=8.0` in steps of 0.5, then the
/// constant-weight limit.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=20)
        .map(|k| k as f64 / 10.0)
        .chain((5..=16).map(|k| k as f64 / 2.0))
        .chain(std::iter::once(CONSTANT_WEIGHT_SIGMA))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub model: ModelKind,
    pub train_accuracy: Summary,
    pub test_accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub format_version: u32,
    pub dataset: String,
    pub folds: usize,
    pub config: NetworkConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,model,train_mean,train_sd,test_mean,test_sd\n");
        for r in &self.rows {
            let model = match r.model {
                ModelKind::TimeVarying => "time_varying",
                ModelKind::ConstantWeight => "constant_weight",
            };
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.sigma,
                model,
                r.train_accuracy.mean,
                r.train_accuracy.sd,
                r.test_accuracy.mean,
                r.test_accuracy.sd
            );
        }
        out
    }

    /// Row of the best time-varying run, highest mean test accuracy, smaller sigma on ties.
    pub fn best_time_varying(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.model == ModelKind::TimeVarying)
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.test_accuracy.mean >= r.test_accuracy.mean => Some(b),
                _ => Some(r),
            })
    }
}

/// Benchmark every sigma on the same folds. With `with_baseline`, a final
/// row trains the explicit constant-weight model.
pub fn sigma_sweep(
    dataset: &TabularDataset,
    cfg: &NetworkConfig,
    sigmas: &[f64],
    folds: usize,
    with_baseline: bool,
    jobs: usize,
) -> Result<SweepReport> {
    if sigmas.is_empty() {
        return Err(Error::config("sigmas", "sweep needs at least one value"));
    }
    let mut runs: Vec<(f64, ModelKind)> = sigmas
        .iter()
        .map(|&s| (s, ModelKind::TimeVarying))
        .collect();
    if with_baseline {
        runs.push((CONSTANT_WEIGHT_SIGMA, ModelKind::ConstantWeight));
    }
    for &(sigma, _) in &runs {
        NetworkConfig {
            sigma,
            ..cfg.clone()
        }
        .validate()?;
    }
    let plan = make_folds(dataset, folds, cfg.seed)?;
    let jobs_list: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..folds).map(move |f| (r, f)))
        .collect();
    let results: Vec<(f64, f64)> = with_pool(jobs, || {
        jobs_list
            .par_iter()
            .map(|&(r, f)| {
                let (sigma, model) = runs[r];
                let fcfg = fold_config(
                    &NetworkConfig {
                        sigma,
                        ..cfg.clone()
                    },
                    f,
                );
                let fold = &plan.folds[f];
                let (tr, te) = match model {
                    ModelKind::TimeVarying => {
                        let o = run_split::<OutputNeuron>(dataset, fold, &fcfg)?;
                        (o.train.accuracy, o.test.accuracy)
                    }
                    ModelKind::ConstantWeight => {
                        let o = run_split::<ConstantWeightNeuron>(dataset, fold, &fcfg)?;
                        (o.train.accuracy, o.test.accuracy)
                    }
                };
                Ok((tr, te))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let rows = runs
        .iter()
        .enumerate()
        .map(|(r, &(sigma, model))| {
            let chunk = &results[r * folds..(r + 1) * folds];
            let train: Vec<f64> = chunk.iter().map(|x| x.0).collect();
            let test: Vec<f64> = chunk.iter().map(|x| x.1).collect();
            SweepRow {
                sigma,
                model,
                train_accuracy: Summary::of(&train),
                test_accuracy: Summary::of(&test),
            }
        })
        .collect();
    Ok(SweepReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: dataset.name.clone(),
        folds,
        config: cfg.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub reference_rate: f64,
    pub sigma: f64,
    pub validation_accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub format_version: u32,
    pub dataset: String,
    pub folds: usize,
    pub config: NetworkConfig,
    pub cells: Vec<GridCell>,
    pub best: GridCell,
    /// Benchmark of the selected cell on the outer test splits.
    pub best_benchmark: BenchmarkReport,
}

/// Fraction of each outer training split held out for validation.
pub const VALIDATION_FRACTION: f64 = 1.0 / 3.0;

/// Highest mean validation accuracy; ties go to smaller sigma, then smaller rate.
pub fn select_best(cells: &[GridCell]) -> Option<&GridCell> {
    cells
        .iter()
        .fold(None, |best: Option<&GridCell>, c| match best {
            None => Some(c),
            Some(b) => {
                let better = c.validation_accuracy.mean > b.validation_accuracy.mean
                    || (c.validation_accuracy.mean == b.validation_accuracy.mean
                        && (c.sigma, c.reference_rate) < (b.sigma, b.reference_rate));
                Some(if better { c } else { b })
            }
        })
}

/// Choose `(reference_rate, sigma)` by validation accuracy on held-out parts
/// of each outer training split, then benchmark the winner.
pub fn grid_search(
    dataset: &TabularDataset,
    cfg: &NetworkConfig,
    grid: &GridSpec,
    folds: usize,
    jobs: usize,
) -> Result<GridReport> {
    if grid.reference_rates.is_empty() || grid.sigmas.is_empty() {
        return Err(Error::config(
            "grid",
            "grid search needs at least one value per axis",
        ));
    }
    let cell_params: Vec<(f64, f64)> = grid
        .reference_rates
        .iter()
        .flat_map(|&a| grid.sigmas.iter().map(move |&s| (a, s)))
        .collect();
    for &(reference_rate, sigma) in &cell_params {
        NetworkConfig {
            reference_rate,
            sigma,
            ..cfg.clone()
        }
        .validate()?;
    }
    let outer = make_folds(dataset, folds, cfg.seed)?;
    let inner: Vec<Fold> = outer
        .folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let n = fold.train.len();
            let validation = ((n as f64) * VALIDATION_FRACTION).round() as usize;
            let split = SplitSpec {
                train: n - validation,
                test: validation,
            };
            let mut rng = stream_rng(cfg.seed, (1 << 20) + f as u64);
            stratified_split(
                &fold.train,
                &dataset.labels,
                dataset.class_count(),
                split,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;

    let work: Vec<(usize, usize)> = (0..cell_params.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let scores: Vec<f64> = with_pool(jobs, || {
        work.par_iter()
            .map(|&(c, f)| {
                let (reference_rate, sigma) = cell_params[c];
                let fcfg = fold_config(
                    &NetworkConfig {
                        reference_rate,
                        sigma,
                        ..cfg.clone()
                    },
                    f,
                );
                Ok(run_split::<OutputNeuron>(dataset, &inner[f], &fcfg)?
                    .test
                    .accuracy)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let cells: Vec<GridCell> = cell_params
        .iter()
        .enumerate()
        .map(|(c, &(reference_rate, sigma))| GridCell {
            reference_rate,
            sigma,
            validation_accuracy: Summary::of(&scores[c * folds..(c + 1) * folds]),
        })
        .collect();
    let best = select_best(&cells).expect("grid is non-empty").clone();
    let best_cfg = NetworkConfig {
        reference_rate: best.reference_rate,
        sigma: best.sigma,
        ..cfg.clone()
    };
    let best_benchmark = benchmark(dataset, &best_cfg, folds, ModelKind::TimeVarying, jobs)?;
    Ok(GridReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: dataset.name.clone(),
        folds,
        config: cfg.clone(),
        cells,
        best,
        best_benchmark,
    })
}

/// Wall-clock timing, kept out of reports so they stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub jobs: usize,
    pub wall_seconds: f64,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Apply `name=value` overrides to a network config. Values use TOML syntax.
pub fn apply_overrides(cfg: &NetworkConfig, overrides: &[String]) -> Result<NetworkConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut table = toml::Table::try_from(cfg)
        .map_err(|e| Error::Contract(format!("config serialization: {e}")))?;
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.as_str(), "override must look like name=value"))?;
        let key = key.trim();
        if !table.contains_key(key) {
            return Err(Error::config(key, "unknown parameter"));
        }
        let parsed: toml::Table = toml::from_str(&format!("v = {}", value.trim()))
            .map_err(|e| Error::config(key, format!("cannot parse {value:?}: {e}")))?;
        table.insert(key.to_string(), parsed["v"].clone());
    }
    let out: NetworkConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("overrides", e.to_string()))?;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(a: f64, s: f64, acc: f64) -> GridCell {
        GridCell {
            reference_rate: a,
            sigma: s,
            validation_accuracy: Summary::of(&[acc]),
        }
    }

    #[test]
    fn sigma_grid_matches_published_sweep() {
        let g = default_sigma_grid();
        assert_eq!(g.len(), 33);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[19], 2.0);
        assert_eq!(g[20], 2.5);
        assert_eq!(g[31], 8.0);
        assert_eq!(g[32], CONSTANT_WEIGHT_SIGMA);
    }

    #[test]
    fn grid_tie_break() {
        let single = [cell(0.05, 0.5, 0.9)];
        assert_eq!(select_best(&single), Some(&single[0]));
        let cells = [
            cell(0.05, 0.5, 0.9),
            cell(0.01, 0.5, 0.9),
            cell(0.01, 0.3, 0.9),
            cell(0.2, 0.3, 0.8),
        ];
        assert_eq!(select_best(&cells), Some(&cells[2]));
        let cells = [cell(0.05, 0.5, 0.9), cell(0.01, 0.5, 0.9)];
        assert_eq!(select_best(&cells), Some(&cells[1]));
    }

    #[test]
    fn overrides() {
        let base = NetworkConfig::default();
        let cfg = apply_overrides(&base, &["sigma=0.25".into(), "max_epochs = 7".into()]).unwrap();
        assert_eq!(cfg.sigma, 0.25);
        assert_eq!(cfg.max_epochs, 7);
        assert!(matches!(
            apply_overrides(&base, &["nonsense=1".into()]),
            Err(Error::Config { .. })
        ));
        let err = apply_overrides(&base, &["margin_threshold=1.5".into()]).unwrap_err();
        assert!(err.to_string().contains("margin_threshold"), "{err}");
    }

    #[test]
    fn run_config_parses() {
        let text = r#"
            dataset = "iris"
            folds = 3
            [network]
            sigma = 0.4
            [grid]
            reference_rates = [0.01, 0.05]
            sigmas = [0.2, 0.4]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.network.sigma, 0.4);
        assert_eq!(cfg.network.tau, 3.0);
        assert_eq!(cfg.grid.unwrap().sigmas, vec![0.2, 0.4]);
    }
}
