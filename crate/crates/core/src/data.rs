//! Tabular datasets, stratified random folds and accuracy metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::WeightModel;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::training::{LabeledPattern, Network};

/// Name of the checksum manifest kept next to the prepared CSV files.
pub const CHECKSUM_FILE: &str = "SHA256SUMS";

fn default_missing_tokens() -> Vec<String> {
    vec!["?".into(), String::new(), "NA".into()]
}

/// How to read one dataset's CSV file and how large its splits are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    /// CSV file name, relative to the data directory.
    pub file: String,
    pub label_column: String,
    /// Label strings in class-index order.
    pub classes: Vec<String>,
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    /// Raw source for `prepare-data`: headerless rows, label in the last column.
    #[serde(default)]
    pub source: Option<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Candidate raw file names, tried in order.
    pub files: Vec<String>,
    pub features: Vec<String>,
}

impl DatasetSchema {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let schema: Self = toml::from_str(&text)?;
        if schema.classes.len() < 2 {
            return Err(Error::config(
                "classes",
                "a dataset needs at least two classes",
            ));
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub name: String,
    pub feature_names: Vec<String>,
    /// Row-major features; missing cells hold the whole-file column median.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub split: SplitSpec,
    /// `(row, column)` of every cell that was missing or unparseable.
    pub missing: Vec<(usize, usize)>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Feature rows with missing cells re-imputed from the medians of `reference` rows.
    pub fn imputed_features(&self, reference: &[usize]) -> Vec<Vec<f64>> {
        let mut features = self.features.clone();
        if self.missing.is_empty() {
            return features;
        }
        let missing_rows: BTreeMap<usize, Vec<usize>> =
            self.missing
                .iter()
                .fold(BTreeMap::new(), |mut acc, &(r, c)| {
                    acc.entry(c).or_insert_with(Vec::new).push(r);
                    acc
                });
        for (col, rows) in missing_rows {
            let mut observed: Vec<f64> = reference
                .iter()
                .filter(|r| !self.missing.contains(&(**r, col)))
                .map(|&r| self.features[r][col])
                .collect();
            if let Some(m) = median(&mut observed) {
                for r in rows {
                    features[r][col] = m;
                }
            }
        }
        features
    }
}

/// Parse a CSV file with a header row according to `schema`.
///
/// Unparseable or missing numeric cells are imputed with the column median
/// and listed in [`TabularDataset::missing`].
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<TabularDataset> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(malformed("file is empty or has no header row".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| malformed(format!("no label column {:?}", schema.label_column)))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(malformed("no feature columns".into()));
    }
    let feature_names = feature_cols
        .iter()
        .map(|&c| headers[c].to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut missing = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let label_text = record.get(label_idx).unwrap_or_default();
        let label = schema
            .classes
            .iter()
            .position(|c| c == label_text)
            .ok_or_else(|| Error::UnknownLabel {
                label: label_text.to_string(),
                line,
            })?;
        let mut values = Vec::with_capacity(feature_cols.len());
        for (f, &c) in feature_cols.iter().enumerate() {
            let cell = record.get(c).unwrap_or_default();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    if !schema.missing_tokens.iter().any(|t| t == cell) {
                        warn!(
                            "line {line}: unparseable value {cell:?} in column {}",
                            &headers[c]
                        );
                    }
                    missing.push((row, f));
                    values.push(f64::NAN);
                }
            }
        }
        features.push(values);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let mut dataset = TabularDataset {
        name: schema.name.clone(),
        feature_names,
        features,
        labels,
        class_names: schema.classes.clone(),
        split: SplitSpec {
            train: schema.train_count,
            test: schema.test_count,
        },
        missing,
    };
    if let Some(absent) = dataset.class_sizes().iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "class {:?} does not occur in {}",
            schema.classes[absent],
            path.display()
        )));
    }
    if !dataset.missing.is_empty() {
        warn!(
            "{}: imputed {} missing or unparseable cells with column medians",
            schema.name,
            dataset.missing.len()
        );
        let all: Vec<usize> = (0..dataset.len()).collect();
        dataset.features = dataset.imputed_features(&all);
        if let Some(&(r, c)) = dataset
            .missing
            .iter()
            .find(|(r, c)| dataset.features[*r][*c].is_nan())
        {
            return Err(Error::Data(format!(
                "column {} has no observed values (row {r})",
                dataset.feature_names[c]
            )));
        }
    }
    Ok(dataset)
}

/// Load `<data_dir>/<schema.file>`.
pub fn load_dataset(data_dir: &Path, schema: &DatasetSchema) -> Result<TabularDataset> {
    load_csv(&data_dir.join(&schema.file), schema)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Split `total` across classes proportionally, by largest remainder.
fn proportional_quota(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut remainders: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(c, &s)| ((s * total) % n, c))
        .collect();
    // larger remainder first, lower class index on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - quota.iter().sum::<usize>();
    for &(_, c) in remainders.iter().take(short) {
        quota[c] += 1;
    }
    quota
}

/// One stratified random split of `candidates` into train and test parts.
pub fn stratified_split(
    candidates: &[usize],
    labels: &[usize],
    class_count: usize,
    split: SplitSpec,
    rng: &mut impl rand::Rng,
) -> Result<Fold> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for &i in candidates {
        by_class[labels[i]].push(i);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let train_quota = proportional_quota(&sizes, split.train);
    let remaining: Vec<usize> = sizes.iter().zip(&train_quota).map(|(s, t)| s - t).collect();
    let test_quota = proportional_quota(&remaining, split.test);
    let mut fold = Fold {
        train: Vec::with_capacity(split.train),
        test: Vec::with_capacity(split.test),
    };
    for (c, mut members) in by_class.into_iter().enumerate() {
        let starved = train_quota[c] == 0 || (split.test > 0 && test_quota[c] == 0);
        if starved {
            return Err(Error::Data(format!(
                "class {c} has {} samples, too few to appear in both parts of a {}/{} split",
                members.len(),
                split.train,
                split.test
            )));
        }
        let need = train_quota[c] + test_quota[c];
        members.shuffle(rng);
        fold.train.extend_from_slice(&members[..train_quota[c]]);
        fold.test.extend_from_slice(&members[train_quota[c]..need]);
    }
    fold.train.sort_unstable();
    fold.test.sort_unstable();
    Ok(fold)
}

/// `n_folds` independent stratified random train/test splits at the dataset's sizes.
pub fn make_folds(dataset: &TabularDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::config("folds", "must be at least 1"));
    }
    if dataset.split.train + dataset.split.test > dataset.len() {
        return Err(Error::Data(format!(
            "{} has {} samples, fewer than {} + {}",
            dataset.name,
            dataset.len(),
            dataset.split.train,
            dataset.split.test
        )));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let folds = (0..n_folds)
        .map(|f| {
            let mut rng = stream_rng(seed, f as u64);
            stratified_split(
                &all,
                &dataset.labels,
                dataset.class_count(),
                dataset.split,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    Ok(FoldPlan { seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate<N: WeightModel>(network: &Network<N>, samples: &[LabeledPattern]) -> Evaluation {
    let classes = network.class_count();
    let mut confusion = vec![vec![0; classes]; classes];
    for s in samples {
        confusion[s.label][network.predict(&s.pattern)] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = if samples.is_empty() {
        0.0
    } else {
        correct as f64 / samples.len() as f64
    };
    Evaluation {
        accuracy,
        confusion,
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Percentages as `mean(sd)` with one decimal, e.g. `97.6(1.5)`.
pub fn format_mean_sd(fractions: &[f64]) -> String {
    let (m, s) = mean_sd(fractions);
    format!("{:.1}({:.1})", 100.0 * m, 100.0 * s)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Read a `sha256sum`-style manifest.
pub fn read_checksums(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (hash, file) = l
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Data(format!("bad checksum line {l:?}")))?;
            Ok((
                file.trim().trim_start_matches('*').to_string(),
                hash.to_string(),
            ))
        })
        .collect()
}

/// Check every file listed in the data directory's manifest.
pub fn verify_checksums(data_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_checksums(&data_dir.join(CHECKSUM_FILE))?;
    let mut checked = Vec::new();
    for (file, expected) in manifest {
        let path = data_dir.join(&file);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let found = sha256_file(&path)?;
        if found != expected {
            return Err(Error::Checksum {
                path,
                expected,
                found,
            });
        }
        checked.push(path);
    }
    Ok(checked)
}

/// Convert a raw headerless source file into the CSV layout `schema` expects.
///
/// Lines starting with `@` (KEEL metadata) or `%` are dropped; fields may be
/// separated by commas and optional spaces. The label is the last field.
pub fn convert_raw(raw: &str, schema: &DatasetSchema) -> Result<String> {
    let source = schema.source.as_ref().ok_or_else(|| {
        Error::config("source", format!("{} has no raw source spec", schema.name))
    })?;
    let width = source.features.len() + 1;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = source.features.clone();
    header.push(schema.label_column.clone());
    writer.write_record(&header)?;
    for (n, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('@') || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Data(format!(
                "{}: line {} has {} fields, expected {width}",
                schema.name,
                n + 1,
                fields.len()
            )));
        }
        writer.write_record(&fields)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("csv writer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}
