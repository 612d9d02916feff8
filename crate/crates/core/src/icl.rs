//! Bridge from feature matrices to in-context-learning datasets: label/split
//! resolution, train down-sampling, train-fitted normalization, a built-in
//! training-free nearest-neighbor predictor, and the export bundle consumed
//! by external single-table models.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::{execute, FeatureColumnData, FeatureMatrix};
use crate::plan::{CutoffMode, ExecPlan, ManifestEntry};
use crate::rdb::{ColumnData, ColumnKind, Instance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Binary,
    Regression,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    /// Explicit primary-key lists.
    Ids {
        train_ids: Vec<String>,
        test_ids: Vec<String>,
    },
    /// Temporal split on the target's own time column: train at or before
    /// the boundary, test after it.
    Time { time_boundary: i64 },
}

/// Wire format of a prediction task (`task.json` input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub label: String,
    pub kind: TaskKind,
    pub split: SplitSpec,
}

impl TaskSpec {
    pub fn from_json(s: &str) -> Result<TaskSpec> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("task spec: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSplit {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Map a split spec to disjoint target row sets.
pub fn resolve_split(inst: &Instance, task: &TaskSpec) -> Result<ResolvedSplit> {
    let schema = &inst.schema;
    let target = schema.target;
    match &task.split {
        SplitSpec::Ids {
            train_ids,
            test_ids,
        } => {
            let lookup = |ids: &[String]| -> Result<Vec<usize>> {
                ids.iter()
                    .map(|id| {
                        inst.table(target).pk_map.get(id).copied().ok_or_else(|| {
                            Error::Split(format!("row id {id:?} not in target table"))
                        })
                    })
                    .collect()
            };
            let train_rows = lookup(train_ids)?;
            let test_rows = lookup(test_ids)?;
            let train_set: HashSet<usize> = train_rows.iter().copied().collect();
            if train_set.len() != train_rows.len() {
                return Err(Error::Split("duplicate train ids".into()));
            }
            if let Some(dup) = test_rows.iter().find(|r| train_set.contains(r)) {
                return Err(Error::Split(format!(
                    "row {} appears in both train and test",
                    *dup
                )));
            }
            Ok(ResolvedSplit {
                train_rows,
                test_rows,
            })
        }
        SplitSpec::Time { time_boundary } => {
            if schema.time_col(target).is_none() {
                return Err(Error::Split(
                    "time split needs a time column on the target table".into(),
                ));
            }
            let mut train_rows = Vec::new();
            let mut test_rows = Vec::new();
            for row in 0..inst.rows(target) {
                match inst.time_value(target, row) {
                    Some(ts) if ts <= *time_boundary => train_rows.push(row),
                    Some(_) => test_rows.push(row),
                    None => {
                        return Err(Error::Split(format!(
                            "target row {row} has no timestamp; cannot split by time"
                        )))
                    }
                }
            }
            Ok(ResolvedSplit {
                train_rows,
                test_rows,
            })
        }
    }
}

/// Per-row cutoffs for feature computation: each target row's own timestamp.
pub fn per_row_cutoffs(inst: &Instance) -> Result<Vec<i64>> {
    let target = inst.schema.target;
    if inst.schema.time_col(target).is_none() {
        return Err(Error::Split(
            "per-row cutoffs need a time column on the target table".into(),
        ));
    }
    (0..inst.rows(target))
        .map(|row| {
            inst.time_value(target, row).ok_or_else(|| {
                Error::Split(format!("target row {row} has no timestamp for its cutoff"))
            })
        })
        .collect()
}

/// Run a plan with cutoffs appropriate for its mode.
pub fn compute_features(inst: &Instance, plan: &ExecPlan) -> Result<FeatureMatrix> {
    let cutoffs = match plan.cutoff_mode {
        CutoffMode::PerRow => Some(per_row_cutoffs(inst)?),
        _ => None,
    };
    execute(plan, inst, cutoffs.as_deref())
}

/// Uniform sample without replacement of at most `n_max` entries, returned
/// in original order.
pub fn downsample(rows: &[usize], n_max: usize, seed: u64) -> Vec<usize> {
    if rows.len() <= n_max {
        return rows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    for i in 0..n_max {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(n_max);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i]).collect()
}

/// A feature matrix split for in-context prediction. Train and test share
/// the manifest; train labels are dense, test labels optional.
#[derive(Debug, Clone)]
pub struct IclDataset {
    pub train: FeatureMatrix,
    pub train_labels: Vec<f64>,
    pub test: FeatureMatrix,
    pub test_labels: Vec<Option<f64>>,
    pub manifest: Vec<ManifestEntry>,
    pub kind: TaskKind,
    pub label: String,
}

fn label_values(inst: &Instance, label: &str) -> Result<(usize, Vec<Option<f64>>)> {
    let schema = &inst.schema;
    let target = schema.target;
    let col = schema.column_index(target, label).ok_or_else(|| {
        Error::Config(format!(
            "label column {label:?} not found on target table {:?}",
            schema.table_name(target)
        ))
    })?;
    if schema.column_kind(target, col) != ColumnKind::Numeric {
        return Err(Error::Config(format!(
            "label column {label:?} must be numeric"
        )));
    }
    let ColumnData::Numeric(vals) = inst.column(target, col) else {
        return Err(Error::Internal("numeric column with non-numeric data".into()));
    };
    Ok((col, vals.clone()))
}

/// Assemble features and labels into a dataset: resolve the split, compute
/// features under the plan's cutoff mode, drop unlabeled train rows, cap the
/// train size. Refuses plans that read the label column.
pub fn assemble(
    inst: &Instance,
    plan: &ExecPlan,
    task: &TaskSpec,
    n_max: usize,
    seed: u64,
) -> Result<IclDataset> {
    let schema = &inst.schema;
    let (label_col, labels) = label_values(inst, &task.label)?;
    for spec in &plan.specs {
        if spec.source_table == schema.target && spec.source_col == label_col {
            return Err(Error::Config(format!(
                "feature {:?} reads the label column",
                spec.name(schema)
            )));
        }
    }
    let split = resolve_split(inst, task)?;
    let features = compute_features(inst, plan)?;
    let labeled_train: Vec<usize> = split
        .train_rows
        .iter()
        .copied()
        .filter(|&r| labels[r].is_some())
        .collect();
    if labeled_train.is_empty() {
        return Err(Error::EmptyTrain);
    }
    let train_rows = downsample(&labeled_train, n_max, seed);
    let train_labels: Vec<f64> = train_rows.iter().map(|&r| labels[r].unwrap()).collect();
    if task.kind == TaskKind::Binary {
        if let Some(bad) = train_labels.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Config(format!(
                "binary task labels must be 0 or 1, found {bad}"
            )));
        }
    }
    let test_labels: Vec<Option<f64>> = split.test_rows.iter().map(|&r| labels[r]).collect();
    Ok(IclDataset {
        train: features.select_rows(&train_rows),
        train_labels,
        test: features.select_rows(&split.test_rows),
        test_labels,
        manifest: plan.manifest(schema),
        kind: task.kind,
        label: task.label.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum ColStats {
    Num { mean: f64, sd: f64 },
    Cat,
}

/// Per-column z-score transform fitted on the train split (population
/// statistics over present cells). Categorical columns pass through;
/// zero-variance columns map to zero; missing cells stay missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    stats: Vec<ColStats>,
}

impl Normalizer {
    pub fn fit(train: &FeatureMatrix) -> Normalizer {
        let stats = train
            .columns
            .iter()
            .map(|c| match &c.data {
                FeatureColumnData::Cat(_) => ColStats::Cat,
                FeatureColumnData::Num(v) => {
                    let xs: Vec<f64> = v.iter().flatten().copied().collect();
                    if xs.is_empty() {
                        return ColStats::Num { mean: 0.0, sd: 0.0 };
                    }
                    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                    let var =
                        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
                    ColStats::Num {
                        mean,
                        sd: var.sqrt(),
                    }
                }
            })
            .collect();
        Normalizer { stats }
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.stats.len() != m.columns.len() {
            return Err(Error::Internal("normalizer/matrix column mismatch".into()));
        }
        let columns = m
            .columns
            .iter()
            .zip(&self.stats)
            .map(|(c, s)| {
                let data = match (&c.data, s) {
                    (FeatureColumnData::Cat(v), ColStats::Cat) => {
                        FeatureColumnData::Cat(v.clone())
                    }
                    (FeatureColumnData::Num(v), ColStats::Num { mean, sd }) => {
                        FeatureColumnData::Num(
                            v.iter()
                                .map(|x| {
                                    x.map(|x| if *sd > 0.0 { (x - mean) / sd } else { 0.0 })
                                })
                                .collect(),
                        )
                    }
                    _ => return Err(Error::Internal("normalizer/column kind mismatch".into())),
                };
                Ok(crate::exec::FeatureColumn {
                    name: c.name.clone(),
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            n_rows: m.n_rows,
            columns,
        })
    }
}

pub const DEFAULT_K: usize = 15;
pub const KNN_EPS: f64 = 1e-9;

/// Inverse-distance-weighted k-nearest-neighbor prediction. Distance is
/// Euclidean over numeric columns (missing imputed to 0, i.e. the train mean
/// after normalization) plus 0/1 mismatch over categorical columns (two
/// missing cells match). Distance ties break toward the lower train row id.
pub fn knn_predict(
    train: &FeatureMatrix,
    train_labels: &[f64],
    test: &FeatureMatrix,
    k: usize,
) -> Result<Vec<f64>> {
    let n_train = train.n_rows;
    if n_train == 0 {
        return Err(Error::EmptyTrain);
    }
    if train_labels.len() != n_train {
        return Err(Error::Internal("train labels misaligned".into()));
    }
    if train.columns.len() != test.columns.len() {
        return Err(Error::Internal("train/test column mismatch".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let k = k.min(n_train);
    let preds: Vec<f64> = (0..test.n_rows)
        .into_par_iter()
        .map(|ti| {
            let mut dists: Vec<(f64, usize)> = (0..n_train)
                .map(|ri| {
                    let mut d2 = 0.0;
                    for (tc, rc) in test.columns.iter().zip(&train.columns) {
                        match (&tc.data, &rc.data) {
                            (FeatureColumnData::Num(tv), FeatureColumnData::Num(rv)) => {
                                let a = tv[ti].unwrap_or(0.0);
                                let b = rv[ri].unwrap_or(0.0);
                                d2 += (a - b) * (a - b);
                            }
                            (FeatureColumnData::Cat(tv), FeatureColumnData::Cat(rv)) => {
                                if tv[ti] != rv[ri] {
                                    d2 += 1.0;
                                }
                            }
                            _ => d2 += 1.0,
                        }
                    }
                    (d2.sqrt(), ri)
                })
                .collect();
            dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut num = 0.0;
            let mut den = 0.0;
            for &(d, ri) in dists.iter().take(k) {
                let w = 1.0 / (d + KNN_EPS);
                num += w * train_labels[ri];
                den += w;
            }
            num / den
        })
        .collect();
    Ok(preds)
}

/// ROC-AUC by rank averaging: equals the probability that a random positive
/// outranks a random negative, counting ties as half.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Internal("scores/labels misaligned".into()));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "need both classes for AUC, got {n_pos} positive / {n_neg} negative"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 averaged across the tie block
        let avg = (i + j + 2) as f64 / 2.0;
        for &r in &idx[i..=j] {
            ranks[r] = avg;
        }
        i = j + 1;
    }
    let sum_pos: f64 = (0..n).filter(|&r| labels[r] > 0.5).map(|r| ranks[r]).sum();
    let np = n_pos as f64;
    Ok((sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Internal("mae needs aligned non-empty inputs".into()));
    }
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// Task-appropriate metric: ("auc", value) or ("mae", value).
pub fn score(preds: &[f64], labels: &[f64], kind: TaskKind) -> Result<(String, f64)> {
    match kind {
        TaskKind::Binary => Ok(("auc".into(), roc_auc(preds, labels)?)),
        TaskKind::Regression => Ok(("mae".into(), mae(preds, labels)?)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictReport {
    pub metric: String,
    pub value: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Full built-in pipeline: assemble, normalize on train, k-NN, score on the
/// labeled test rows.
pub fn run_predict(
    inst: &Instance,
    plan: &ExecPlan,
    task: &TaskSpec,
    n_max: usize,
    seed: u64,
    k: usize,
) -> Result<PredictReport> {
    let ds = assemble(inst, plan, task, n_max, seed)?;
    let norm = Normalizer::fit(&ds.train);
    let train = norm.apply(&ds.train)?;
    let test = norm.apply(&ds.test)?;
    let preds = knn_predict(&train, &ds.train_labels, &test, k)?;
    let labeled: Vec<usize> = (0..ds.test.n_rows)
        .filter(|&i| ds.test_labels[i].is_some())
        .collect();
    if labeled.is_empty() {
        return Err(Error::Split("no labeled test rows to score".into()));
    }
    let p: Vec<f64> = labeled.iter().map(|&i| preds[i]).collect();
    let y: Vec<f64> = labeled.iter().map(|&i| ds.test_labels[i].unwrap()).collect();
    let (metric, value) = score(&p, &y, ds.kind)?;
    Ok(PredictReport {
        metric,
        value,
        n_train: ds.train.n_rows,
        n_test: labeled.len(),
    })
}

#[derive(Serialize)]
struct TaskMeta<'a> {
    label: &'a str,
    kind: TaskKind,
    n_train: usize,
    n_test: usize,
    seed: u64,
}

/// Write `train.csv` (features plus label), `test.csv` (features only),
/// `manifest.json`, and `task.json` into `dir`.
pub fn export_bundle(ds: &IclDataset, dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let label_cells: Vec<String> = ds.train_labels.iter().map(|v| format!("{v}")).collect();
    let mut train_file = std::fs::File::create(dir.join("train.csv"))?;
    ds.train
        .write_csv(&mut train_file, Some((&ds.label, &label_cells)))?;
    let mut test_file = std::fs::File::create(dir.join("test.csv"))?;
    ds.test.write_csv(&mut test_file, None)?;
    let manifest = serde_json::to_string_pretty(&ds.manifest)
        .map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
    let meta = TaskMeta {
        label: &ds.label,
        kind: ds.kind,
        n_train: ds.train.n_rows,
        n_test: ds.test.n_rows,
        seed,
    };
    let task = serde_json::to_string_pretty(&meta).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(dir.join("task.json"), task + "\n")?;
    Ok(())
}
