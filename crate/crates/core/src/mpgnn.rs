//! Weighted message-passing reference model over one meta-path, restricted
//! to a single source column, plus the check that its output is a positive
//! rescaling of the parameter-free aggregation pipeline.
//!
//! At each hop the model computes `act(agg(w * child values))` with `w > 0`;
//! the hop's self weight `w0` multiplies the node's own restricted feature,
//! which is zero at every level except the deepest, so it never contributes.
//! Because the activation and the aggregators are positively homogeneous,
//! every hop weight factors out and the whole output equals
//! `(product of hop weights) * parameter-free output`. Z-scoring a column
//! erases that scale, which is what makes the weights irrelevant downstream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::plan::AggregatorKind;
use crate::rdb::{ColumnData, ColumnKind, Instance};
use crate::relgraph::{enumerate_metapaths, step_children, MetaPath};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x >= 0.0 {
                    x
                } else {
                    s * x
                }
            }
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            Activation::LeakyRelu(s) => *s > 0.0 && s.is_finite(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopWeights {
    /// Self weight. Multiplies the node's own (zeroed) feature, so the model
    /// output must not depend on it; the verifier randomizes it to prove that.
    pub w0: f64,
    /// Message weight applied to every child value at this hop.
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct MpGnnConfig {
    pub path: MetaPath,
    pub source_table: usize,
    pub source_col: usize,
    pub agg: AggregatorKind,
    pub activation: Activation,
    /// One entry per hop; `weights[d]` collapses depth `d+1` into depth `d`.
    pub weights: Vec<HopWeights>,
}

impl MpGnnConfig {
    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let schema = &inst.schema;
        if self.path.is_empty() {
            return Err(Error::Config("model needs at least one hop".into()));
        }
        for step in &self.path.steps {
            if step.source_table(schema) == step.dest_table(schema) {
                return Err(Error::Config(
                    "self-referencing steps break the zero-feature argument and are not supported"
                        .into(),
                ));
            }
        }
        if self.path.final_table(schema)? != self.source_table {
            return Err(Error::SourceMismatch(
                "source table is not the path's final table".into(),
            ));
        }
        if schema.column_kind(self.source_table, self.source_col) != ColumnKind::Numeric {
            return Err(Error::Config("source column must be numeric".into()));
        }
        if !matches!(
            self.agg,
            AggregatorKind::Sum
                | AggregatorKind::Mean
                | AggregatorKind::Min
                | AggregatorKind::Max
                | AggregatorKind::Std
        ) {
            return Err(Error::Config(format!(
                "aggregator {} is not positively homogeneous",
                self.agg
            )));
        }
        if !self.activation.is_valid() {
            return Err(Error::Config("activation slope must be positive".into()));
        }
        if self.weights.len() != self.path.len() {
            return Err(Error::Config(format!(
                "{} hop weights for a {}-hop path",
                self.weights.len(),
                self.path.len()
            )));
        }
        for hw in &self.weights {
            if !(hw.w > 0.0 && hw.w.is_finite() && hw.w0.is_finite()) {
                return Err(Error::Config(
                    "hop message weights must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Product of the hop message weights: the predicted output scale.
    pub fn scale(&self) -> f64 {
        self.weights.iter().map(|h| h.w).product()
    }
}

fn homog_agg(agg: AggregatorKind, xs: &[f64]) -> f64 {
    match agg {
        AggregatorKind::Sum => xs.iter().sum(),
        AggregatorKind::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
        AggregatorKind::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
        AggregatorKind::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregatorKind::Std => {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
        }
        _ => unreachable!("validated"),
    }
}

fn source_numbers(inst: &Instance, table: usize, col: usize) -> Result<&[Option<f64>]> {
    match inst.column(table, col) {
        ColumnData::Numeric(v) => Ok(v.as_slice()),
        _ => Err(Error::Config("source column must be numeric".into())),
    }
}

fn eval(inst: &Instance, cfg: &MpGnnConfig, weighted: bool) -> Result<Vec<Option<f64>>> {
    cfg.validate(inst)?;
    let source = source_numbers(inst, cfg.source_table, cfg.source_col)?;
    let h = cfg.path.len();
    let n = inst.rows(inst.schema.target);
    // memo[d] caches node values at depth d; values depend only on the row.
    let mut memos: Vec<HashMap<usize, Option<f64>>> = vec![HashMap::new(); h + 1];
    fn go(
        inst: &Instance,
        cfg: &MpGnnConfig,
        weighted: bool,
        source: &[Option<f64>],
        memos: &mut Vec<HashMap<usize, Option<f64>>>,
        depth: usize,
        row: usize,
    ) -> Option<f64> {
        if let Some(v) = memos[depth].get(&row) {
            return *v;
        }
        let out = if depth == cfg.path.len() {
            source[row]
        } else {
            let step = cfg.path.steps[depth];
            let children = step_children(inst, &step, row, None);
            let mut xs = Vec::with_capacity(children.len());
            for c in children {
                if let Some(v) = go(inst, cfg, weighted, source, memos, depth + 1, c) {
                    xs.push(if weighted { cfg.weights[depth].w * v } else { v });
                }
            }
            if xs.is_empty() {
                None
            } else {
                // own feature is zero here, so w0 * 0 drops out of the sum
                Some(cfg.activation.apply(homog_agg(cfg.agg, &xs)))
            }
        };
        memos[depth].insert(row, out);
        out
    }
    Ok((0..n)
        .map(|row| go(inst, cfg, weighted, source, &mut memos, 0, row))
        .collect())
}

/// Model output with the configured hop weights.
pub fn mp_gnn_weighted(inst: &Instance, cfg: &MpGnnConfig) -> Result<Vec<Option<f64>>> {
    eval(inst, cfg, true)
}

/// Same recursion with all message weights fixed at one.
pub fn mp_gnn_parameter_free(inst: &Instance, cfg: &MpGnnConfig) -> Result<Vec<Option<f64>>> {
    eval(inst, cfg, false)
}

/// Population z-score over the present entries; a constant column maps to
/// all zeros. Missing entries stay missing.
pub fn zscore(vals: &[Option<f64>]) -> Vec<Option<f64>> {
    let xs: Vec<f64> = vals.iter().flatten().copied().collect();
    if xs.is_empty() {
        return vals.to_vec();
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    let sd = var.sqrt();
    vals.iter()
        .map(|v| v.map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReparamReport {
    pub trials: usize,
    pub passes: usize,
    pub max_rel_err: f64,
    /// Largest deviation between z-scored weighted and parameter-free
    /// columns across all trials.
    pub max_z_err: f64,
}

impl ReparamReport {
    pub fn all_passed(&self) -> bool {
        self.passes == self.trials
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, idx: u64) -> u64 {
    splitmix64(master ^ splitmix64(idx))
}

const REL_TOL: f64 = 1e-9;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// One randomized trial: random database, random non-self path, random
/// aggregator/activation/weights. Checks that the weighted output equals
/// scale times the parameter-free output cell for cell (same missing
/// pattern), and that z-scoring makes the two columns agree outright.
fn run_trial(seed: u64) -> Result<(bool, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = crate::randdb::Params {
        min_tables: 2,
        max_tables: 4,
        max_rows: 30,
        self_fk_prob: 0.2,
        ..crate::randdb::Params::default()
    };
    let inst = crate::randdb::random_instance(&mut rng, &params);
    let schema = &inst.schema;
    let candidates: Vec<MetaPath> = enumerate_metapaths(schema, 2)
        .into_iter()
        .filter(|p| {
            !p.is_empty()
                && p.steps
                    .iter()
                    .all(|s| s.source_table(schema) != s.dest_table(schema))
        })
        .collect();
    // The spanning-tree key from t1 to the target guarantees a candidate.
    let path = candidates[rng.gen_range(0..candidates.len())].clone();
    let table = path.final_table(schema)?;
    let numeric_cols: Vec<usize> = schema.tables[table]
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numeric)
        .map(|(i, _)| i)
        .collect();
    let source_col = numeric_cols[rng.gen_range(0..numeric_cols.len())];
    let aggs = [
        AggregatorKind::Sum,
        AggregatorKind::Mean,
        AggregatorKind::Min,
        AggregatorKind::Max,
        AggregatorKind::Std,
    ];
    let agg = aggs[rng.gen_range(0..aggs.len())];
    let activation = match rng.gen_range(0..3) {
        0 => Activation::Linear,
        1 => Activation::Relu,
        _ => Activation::LeakyRelu(rng.gen_range(0.05..0.95)),
    };
    let log_w = |rng: &mut ChaCha8Rng| (rng.gen_range(-1.0f64..1.0)).exp2() * 3.0f64.powf(rng.gen_range(-1.0..1.0));
    let weights: Vec<HopWeights> = (0..path.len())
        .map(|_| HopWeights {
            w0: rng.gen_range(-5.0..5.0),
            w: log_w(&mut rng),
        })
        .collect();
    let cfg = MpGnnConfig {
        path,
        source_table: table,
        source_col,
        agg,
        activation,
        weights,
    };
    let weighted = mp_gnn_weighted(&inst, &cfg)?;
    let free = mp_gnn_parameter_free(&inst, &cfg)?;
    let scale = cfg.scale();
    let mut max_err = 0.0f64;
    let mut ok = true;
    for (w, p) in weighted.iter().zip(&free) {
        match (w, p) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                let e = rel_err(*a, scale * b);
                max_err = max_err.max(e);
                if e > REL_TOL {
                    ok = false;
                }
            }
            _ => ok = false,
        }
    }
    let zw = zscore(&weighted);
    let zp = zscore(&free);
    let mut max_z = 0.0f64;
    for (a, b) in zw.iter().zip(&zp) {
        if let (Some(a), Some(b)) = (a, b) {
            let e = (a - b).abs();
            max_z = max_z.max(e);
            if e > REL_TOL {
                ok = false;
            }
        }
    }
    Ok((ok, max_err, max_z))
}

/// Randomized verification that hop weights only rescale the output.
pub fn verify_reparam(trials: usize, seed: u64) -> Result<ReparamReport> {
    let mut passes = 0;
    let mut max_rel_err = 0.0f64;
    let mut max_z_err = 0.0f64;
    for t in 0..trials {
        let (ok, e, z) = run_trial(derive_seed(seed, t as u64))?;
        if ok {
            passes += 1;
        }
        max_rel_err = max_rel_err.max(e);
        max_z_err = max_z_err.max(z);
    }
    Ok(ReparamReport {
        trials,
        passes,
        max_rel_err,
        max_z_err,
    })
}
