//! Plan execution: a compiled plan plus a database instance yields a
//! fixed-width feature matrix with one row per target-table row.
//!
//! Aggregation here uses production kernels (pairwise summation, hash-based
//! mode counting); [`crate::relgraph`] holds the naive reference these are
//! tested against.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::plan::{AggregatorKind, CutoffMode, ExecPlan, FeatureSpec, ValueKind};
use crate::rdb::{Cell, ColumnData, Instance, Schema};
use crate::relgraph::{Direction, RelStep};
use crate::{Error, Result};

/// Intermediate value flowing through an aggregator chain. Categorical
/// values stay as codes into the source column's dictionary (mode preserves
/// values, so the dictionary never changes along a chain).
#[derive(Debug, Clone, Copy, PartialEq)]
enum V {
    Num(f64),
    Cat(u32),
    Ts(i64),
}

/// Sum with pairwise splitting: bounded error growth and a fixed evaluation
/// order regardless of thread count.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn canon(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn take_nums(vals: &[V]) -> Result<Vec<f64>> {
    vals.iter()
        .map(|v| match v {
            V::Num(x) => Ok(*x),
            other => Err(Error::Internal(format!(
                "numeric aggregator fed {other:?}"
            ))),
        })
        .collect()
}

/// Aggregate non-missing values. Count is total even when empty; every other
/// aggregator maps an empty input to `None` (missing).
fn agg_v(
    agg: AggregatorKind,
    vals: &[V],
    dict: Option<&[String]>,
    cutoff: Option<i64>,
) -> Result<Option<V>> {
    use AggregatorKind::*;
    if agg == Count {
        return Ok(Some(V::Num(vals.len() as f64)));
    }
    if vals.is_empty() {
        return Ok(None);
    }
    let out = match agg {
        Sum => V::Num(pairwise_sum(&take_nums(vals)?)),
        Mean => {
            let xs = take_nums(vals)?;
            V::Num(pairwise_sum(&xs) / xs.len() as f64)
        }
        Min => V::Num(take_nums(vals)?.into_iter().fold(f64::INFINITY, f64::min)),
        Max => V::Num(
            take_nums(vals)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max),
        ),
        Std => {
            let xs = take_nums(vals)?;
            let mean = pairwise_sum(&xs) / xs.len() as f64;
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            V::Num((pairwise_sum(&dev) / xs.len() as f64).sqrt())
        }
        Mode => match vals[0] {
            V::Num(_) => {
                let mut counts: HashMap<u64, (usize, f64)> = HashMap::new();
                for v in take_nums(vals)? {
                    let c = canon(v);
                    counts.entry(c.to_bits()).or_insert((0, c)).0 += 1;
                }
                // Highest count wins; ties take the smallest value. The fold
                // is order-free, so hash iteration order cannot leak out.
                let best = counts
                    .values()
                    .fold(None::<(usize, f64)>, |acc, &(n, v)| match acc {
                        None => Some((n, v)),
                        Some((bn, bv)) => {
                            if n > bn || (n == bn && v < bv) {
                                Some((n, v))
                            } else {
                                Some((bn, bv))
                            }
                        }
                    })
                    .expect("non-empty");
                V::Num(best.1)
            }
            V::Cat(_) => {
                let dict = dict.ok_or_else(|| {
                    Error::Internal("categorical mode needs the source dictionary".into())
                })?;
                let mut counts: HashMap<u32, usize> = HashMap::new();
                for v in vals {
                    let V::Cat(c) = v else {
                        return Err(Error::Internal("mixed kinds in mode input".into()));
                    };
                    *counts.entry(*c).or_insert(0) += 1;
                }
                let best = counts
                    .iter()
                    .fold(None::<(usize, u32)>, |acc, (&code, &n)| match acc {
                        None => Some((n, code)),
                        Some((bn, bc)) => {
                            if n > bn
                                || (n == bn && dict[code as usize] < dict[bc as usize])
                            {
                                Some((n, code))
                            } else {
                                Some((bn, bc))
                            }
                        }
                    })
                    .expect("non-empty");
                V::Cat(best.1)
            }
            V::Ts(_) => return Err(Error::Internal("mode over timestamps".into())),
        },
        TimeDeltaMean | TimeDeltaMin => {
            let c = cutoff.ok_or_else(|| {
                Error::Internal("time-delta aggregator without an active cutoff".into())
            })?;
            let deltas: Vec<f64> = vals
                .iter()
                .map(|v| match v {
                    V::Ts(t) => Ok((c - t) as f64),
                    other => Err(Error::Internal(format!(
                        "time-delta aggregator fed {other:?}"
                    ))),
                })
                .collect::<Result<_>>()?;
            if agg == TimeDeltaMean {
                V::Num(pairwise_sum(&deltas) / deltas.len() as f64)
            } else {
                V::Num(deltas.into_iter().fold(f64::INFINITY, f64::min))
            }
        }
        Count => unreachable!(),
    };
    Ok(Some(out))
}

/// Aggregate a slice of cells (missing entries are dropped first). Public
/// entry point for the production kernels.
pub fn aggregate_cells(agg: AggregatorKind, cells: &[Cell], cutoff: Option<i64>) -> Result<Cell> {
    let mut dict: Vec<String> = cells
        .iter()
        .filter_map(|c| match c {
            Cell::Cat(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    dict.sort();
    dict.dedup();
    let code = |s: &str| dict.iter().position(|d| d == s).unwrap() as u32;
    let vals: Vec<V> = cells
        .iter()
        .filter_map(|c| match c {
            Cell::Missing => None,
            Cell::Num(x) => Some(Ok(V::Num(*x))),
            Cell::Cat(s) => Some(Ok(V::Cat(code(s)))),
            Cell::Ts(t) => Some(Ok(V::Ts(*t))),
            Cell::Key(_) => Some(Err(Error::SourceMismatch(
                "key cells cannot be aggregated".into(),
            ))),
        })
        .collect::<Result<_>>()?;
    Ok(match agg_v(agg, &vals, Some(&dict), cutoff)? {
        None => Cell::Missing,
        Some(V::Num(x)) => Cell::Num(x),
        Some(V::Cat(c)) => Cell::Cat(dict[c as usize].clone()),
        Some(V::Ts(t)) => Cell::Ts(t),
    })
}

/// Aggregate cells per group key. Keys absent from the input do not appear
/// in the output; a group whose values are all missing still appears.
pub fn group_aggregate(
    agg: AggregatorKind,
    keys: &[u64],
    cells: &[Cell],
    cutoff: Option<i64>,
) -> Result<std::collections::BTreeMap<u64, Cell>> {
    if keys.len() != cells.len() {
        return Err(Error::Internal("group keys and cells disagree in length".into()));
    }
    let mut groups: std::collections::BTreeMap<u64, Vec<Cell>> = std::collections::BTreeMap::new();
    for (k, c) in keys.iter().zip(cells) {
        groups.entry(*k).or_default().push(c.clone());
    }
    groups
        .into_iter()
        .map(|(k, cs)| Ok((k, aggregate_cells(agg, &cs, cutoff)?)))
        .collect()
}

/// Deltas from `cutoff` back to each timestamp, aggregated by mean or min.
pub fn time_delta_aggregate(agg: AggregatorKind, ts: &[i64], cutoff: i64) -> Result<Option<f64>> {
    if !matches!(
        agg,
        AggregatorKind::TimeDeltaMean | AggregatorKind::TimeDeltaMin
    ) {
        return Err(Error::Config(format!("{agg} is not a time-delta aggregator")));
    }
    let vals: Vec<V> = ts.iter().map(|&t| V::Ts(t)).collect();
    Ok(match agg_v(agg, &vals, None, Some(cutoff))? {
        Some(V::Num(x)) => Some(x),
        None => None,
        _ => unreachable!(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumnData {
    Num(Vec<Option<f64>>),
    Cat(Vec<Option<String>>),
}

impl FeatureColumnData {
    pub fn len(&self) -> usize {
        match self {
            FeatureColumnData::Num(v) => v.len(),
            FeatureColumnData::Cat(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub data: FeatureColumnData,
}

/// Fixed-width output: one row per target row, one column per feature spec.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub columns: Vec<FeatureColumn>,
}

impl FeatureMatrix {
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let columns = self
            .columns
            .iter()
            .map(|c| FeatureColumn {
                name: c.name.clone(),
                data: match &c.data {
                    FeatureColumnData::Num(v) => {
                        FeatureColumnData::Num(rows.iter().map(|&r| v[r]).collect())
                    }
                    FeatureColumnData::Cat(v) => {
                        FeatureColumnData::Cat(rows.iter().map(|&r| v[r].clone()).collect())
                    }
                },
            })
            .collect();
        FeatureMatrix {
            n_rows: rows.len(),
            columns,
        }
    }

    fn cell_string(&self, col: usize, row: usize) -> String {
        match &self.columns[col].data {
            FeatureColumnData::Num(v) => v[row].map(|x| format!("{x}")).unwrap_or_default(),
            FeatureColumnData::Cat(v) => v[row].clone().unwrap_or_default(),
        }
    }

    /// CSV with feature-name headers; `label` appends one extra column of
    /// pre-rendered cells.
    pub fn write_csv<W: Write>(&self, w: W, label: Option<(&str, &[String])>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        if let Some((name, cells)) = label {
            if cells.len() != self.n_rows {
                return Err(Error::Internal("label column length mismatch".into()));
            }
            header.push(name.to_string());
        }
        wtr.write_record(&header)?;
        for r in 0..self.n_rows {
            let mut rec: Vec<String> = (0..self.columns.len())
                .map(|c| self.cell_string(c, r))
                .collect();
            if let Some((_, cells)) = label {
                rec.push(cells[r].clone());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, label: Option<(&str, &[String])>) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, label)?;
        String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
    }
}

fn source_vals(inst: &Instance, table: usize, col: usize) -> Result<Vec<Option<V>>> {
    Ok(match inst.column(table, col) {
        ColumnData::Numeric(v) => v.iter().map(|x| x.map(V::Num)).collect(),
        ColumnData::Categorical { codes, .. } => {
            codes.iter().map(|x| x.map(V::Cat)).collect()
        }
        ColumnData::Timestamp(v) => v.iter().map(|x| x.map(V::Ts)).collect(),
        ColumnData::Key(_) => {
            return Err(Error::SourceMismatch(
                "key columns cannot be feature sources".into(),
            ))
        }
    })
}

fn visible(inst: &Instance, table: usize, row: usize, cutoff: Option<i64>) -> bool {
    let Some(c) = cutoff else { return true };
    if inst.schema.time_col(table).is_none() {
        return true;
    }
    inst.time_value(table, row).is_some_and(|t| t <= c)
}

/// Children of `row` across `step`, ascending, restricted to rows visible
/// under `cutoff`.
fn step_children(inst: &Instance, step: &RelStep, row: usize, cutoff: Option<i64>) -> Vec<usize> {
    let schema = &inst.schema;
    let dest = step.dest_table(schema);
    match step.dir {
        Direction::Backward => inst
            .referencing_rows(step.relation, row)
            .iter()
            .copied()
            .filter(|&r| visible(inst, dest, r, cutoff))
            .collect(),
        Direction::Forward => {
            let rel = schema.relations()[step.relation];
            let fk_col = rel.fk_col;
            match inst.fk_row(step.source_table(schema), row, fk_col) {
                Some(r) if visible(inst, dest, r, cutoff) => vec![r],
                _ => vec![],
            }
        }
    }
}

/// Whole-table child adjacency for one step under a fixed cutoff.
enum Adj {
    Many(Vec<Vec<usize>>),
    One(Vec<Option<usize>>),
}

impl Adj {
    fn children(&self, row: usize) -> &[usize] {
        match self {
            Adj::Many(v) => &v[row],
            Adj::One(v) => v[row].as_ref().map(std::slice::from_ref).unwrap_or(&[]),
        }
    }
}

fn build_adj(inst: &Instance, step: &RelStep, cutoff: Option<i64>) -> Adj {
    let schema = &inst.schema;
    let src = step.source_table(schema);
    let dest = step.dest_table(schema);
    match step.dir {
        Direction::Backward => Adj::Many(
            (0..inst.rows(src))
                .map(|r| {
                    inst.referencing_rows(step.relation, r)
                        .iter()
                        .copied()
                        .filter(|&c| visible(inst, dest, c, cutoff))
                        .collect()
                })
                .collect(),
        ),
        Direction::Forward => {
            let fk_col = schema.relations()[step.relation].fk_col;
            Adj::One(
                (0..inst.rows(src))
                    .map(|r| {
                        inst.fk_row(src, r, fk_col)
                            .filter(|&c| visible(inst, dest, c, cutoff))
                    })
                    .collect(),
            )
        }
    }
}

fn spec_dict<'a>(inst: &'a Instance, spec: &FeatureSpec) -> Option<&'a [String]> {
    match inst.column(spec.source_table, spec.source_col) {
        ColumnData::Categorical { dict, .. } => Some(dict.as_slice()),
        _ => None,
    }
}

/// Pushdown evaluation over the whole instance under one fixed cutoff:
/// aggregate each table's values once per chain level, walking the path from
/// its far end back to the target.
fn eval_global(
    inst: &Instance,
    spec: &FeatureSpec,
    adjs: &HashMap<RelStep, Adj>,
    cutoff: Option<i64>,
) -> Result<Vec<Option<V>>> {
    let dict = spec_dict(inst, spec);
    let mut vals = source_vals(inst, spec.source_table, spec.source_col)?;
    for depth in (0..spec.path.len()).rev() {
        let step = spec.path.steps[depth];
        let adj = &adjs[&step];
        let src_rows = inst.rows(step.source_table(&inst.schema));
        let mut next = Vec::with_capacity(src_rows);
        for r in 0..src_rows {
            let xs: Vec<V> = adj
                .children(r)
                .iter()
                .filter_map(|&c| vals[c])
                .collect();
            next.push(agg_v(spec.chain[depth], &xs, dict, cutoff)?);
        }
        vals = next;
    }
    Ok(vals)
}

/// Pushdown evaluation rooted at one target row: values are computed once
/// per distinct row of each level (levels are deduplicated child sets).
fn eval_per_center(
    inst: &Instance,
    specs: &[FeatureSpec],
    spec_sources: &[Vec<Option<V>>],
    group: &[usize],
    steps: &[RelStep],
    center: usize,
    cutoff: Option<i64>,
    out: &mut [Option<V>],
) -> Result<()> {
    let h = steps.len();
    let mut level_rows: Vec<Vec<usize>> = vec![vec![center]];
    let mut level_children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(h);
    for (d, step) in steps.iter().enumerate() {
        let parents = &level_rows[d];
        let mut per_parent = Vec::with_capacity(parents.len());
        let mut next = Vec::new();
        for &p in parents {
            let ch = step_children(inst, step, p, cutoff);
            next.extend_from_slice(&ch);
            per_parent.push(ch);
        }
        next.sort_unstable();
        next.dedup();
        level_children.push(per_parent);
        level_rows.push(next);
    }
    for &si in group {
        let spec = &specs[si];
        let dict = spec_dict(inst, spec);
        let mut vals: HashMap<usize, Option<V>> = level_rows[h]
            .iter()
            .map(|&r| (r, spec_sources[si][r]))
            .collect();
        for depth in (0..h).rev() {
            let mut next: HashMap<usize, Option<V>> =
                HashMap::with_capacity(level_rows[depth].len());
            for (pi, &p) in level_rows[depth].iter().enumerate() {
                let xs: Vec<V> = level_children[depth][pi]
                    .iter()
                    .filter_map(|c| vals[c])
                    .collect();
                next.insert(p, agg_v(spec.chain[depth], &xs, dict, cutoff)?);
            }
            vals = next;
        }
        out[si] = vals[&center];
    }
    Ok(())
}

/// Flat evaluation rooted at one target row: the path is expanded into an
/// occurrence tree with no deduplication (the join-then-aggregate order of
/// operations), then collapsed level by level.
fn eval_flat(
    inst: &Instance,
    specs: &[FeatureSpec],
    spec_sources: &[Vec<Option<V>>],
    group: &[usize],
    steps: &[RelStep],
    center: usize,
    cutoff: Option<i64>,
    out: &mut [Option<V>],
) -> Result<()> {
    struct Occ {
        row: usize,
        children: Vec<Occ>,
    }
    fn expand(inst: &Instance, steps: &[RelStep], row: usize, cutoff: Option<i64>) -> Occ {
        match steps.split_first() {
            None => Occ {
                row,
                children: vec![],
            },
            Some((step, rest)) => Occ {
                row,
                children: step_children(inst, step, row, cutoff)
                    .into_iter()
                    .map(|c| expand(inst, rest, c, cutoff))
                    .collect(),
            },
        }
    }
    fn eval(
        node: &Occ,
        depth: usize,
        spec: &FeatureSpec,
        source: &[Option<V>],
        dict: Option<&[String]>,
        cutoff: Option<i64>,
    ) -> Result<Option<V>> {
        if depth == spec.path.len() {
            return Ok(source[node.row]);
        }
        let xs: Vec<V> = node
            .children
            .iter()
            .map(|c| eval(c, depth + 1, spec, source, dict, cutoff))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        agg_v(spec.chain[depth], &xs, dict, cutoff)
    }
    let tree = expand(inst, steps, center, cutoff);
    for &si in group {
        let spec = &specs[si];
        out[si] = eval(
            &tree,
            0,
            spec,
            &spec_sources[si],
            spec_dict(inst, spec),
            cutoff,
        )?;
    }
    Ok(())
}

fn finalize(
    schema: &Schema,
    inst: &Instance,
    spec: &FeatureSpec,
    vals: Vec<Option<V>>,
) -> Result<FeatureColumn> {
    let name = spec.name(schema);
    let data = match spec.emitted_kind(schema)? {
        ValueKind::Num => FeatureColumnData::Num(
            vals.into_iter()
                .map(|v| match v {
                    None => Ok(None),
                    Some(V::Num(x)) => Ok(Some(x)),
                    Some(V::Ts(t)) => Ok(Some(t as f64)),
                    Some(V::Cat(_)) => {
                        Err(Error::Internal("categorical value in numeric column".into()))
                    }
                })
                .collect::<Result<_>>()?,
        ),
        ValueKind::Cat => {
            let dict = spec_dict(inst, spec)
                .ok_or_else(|| Error::Internal("categorical column without dictionary".into()))?;
            FeatureColumnData::Cat(
                vals.into_iter()
                    .map(|v| match v {
                        None => Ok(None),
                        Some(V::Cat(c)) => Ok(Some(dict[c as usize].clone())),
                        other => Err(Error::Internal(format!(
                            "{other:?} in categorical column"
                        ))),
                    })
                    .collect::<Result<_>>()?,
            )
        }
        ValueKind::Ts => return Err(Error::Internal("timestamp column cannot be emitted".into())),
    };
    Ok(FeatureColumn { name, data })
}

/// Group spec indices by path, preserving first-appearance order.
fn path_groups(specs: &[FeatureSpec]) -> Vec<(Vec<RelStep>, Vec<usize>)> {
    let mut order: Vec<Vec<RelStep>> = Vec::new();
    let mut groups: HashMap<Vec<RelStep>, Vec<usize>> = HashMap::new();
    for (i, spec) in specs.iter().enumerate() {
        let key = spec.path.steps.clone();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(i);
    }
    order
        .into_iter()
        .map(|k| {
            let v = groups.remove(&k).unwrap();
            (k, v)
        })
        .collect()
}

/// Run a compiled plan. `cutoffs` must be given exactly when the plan's
/// cutoff mode is per-row, with one timestamp per target row.
pub fn execute(plan: &ExecPlan, inst: &Instance, cutoffs: Option<&[i64]>) -> Result<FeatureMatrix> {
    let schema = &inst.schema;
    if plan.fingerprint != schema.fingerprint() {
        return Err(Error::PlanMismatch(
            "plan was compiled against a different schema".into(),
        ));
    }
    let n = inst.rows(schema.target);
    match plan.cutoff_mode {
        CutoffMode::PerRow => {
            let given = cutoffs.map(|c| c.len());
            if given != Some(n) {
                return Err(Error::PlanMismatch(format!(
                    "plan needs {n} per-row cutoffs, got {given:?}"
                )));
            }
        }
        _ => {
            if cutoffs.is_some() {
                return Err(Error::PlanMismatch(
                    "plan does not take per-row cutoffs".into(),
                ));
            }
        }
    }
    let specs = &plan.specs;
    let spec_sources: Vec<Vec<Option<V>>> = specs
        .iter()
        .map(|s| source_vals(inst, s.source_table, s.source_col))
        .collect::<Result<_>>()?;
    let global_cutoff = match plan.cutoff_mode {
        CutoffMode::Global(g) => Some(g),
        _ => None,
    };

    let per_spec: Vec<Vec<Option<V>>> = if plan.pushdown
        && !matches!(plan.cutoff_mode, CutoffMode::PerRow)
    {
        let mut adjs: HashMap<RelStep, Adj> = HashMap::new();
        for spec in specs {
            for step in &spec.path.steps {
                adjs.entry(*step)
                    .or_insert_with(|| build_adj(inst, step, global_cutoff));
            }
        }
        specs
            .par_iter()
            .map(|spec| {
                if spec.path.is_empty() {
                    source_vals(inst, spec.source_table, spec.source_col)
                } else {
                    eval_global(inst, spec, &adjs, global_cutoff)
                }
            })
            .collect::<Result<_>>()?
    } else {
        let groups = path_groups(specs);
        let rows: Vec<Vec<Option<V>>> = (0..n)
            .into_par_iter()
            .map(|center| {
                let cutoff = match plan.cutoff_mode {
                    CutoffMode::PerRow => Some(cutoffs.unwrap()[center]),
                    CutoffMode::Global(g) => Some(g),
                    CutoffMode::None => None,
                };
                let mut out = vec![None; specs.len()];
                for (steps, group) in &groups {
                    if steps.is_empty() {
                        for &si in group {
                            out[si] = spec_sources[si][center];
                        }
                        continue;
                    }
                    if plan.pushdown {
                        eval_per_center(
                            inst,
                            specs,
                            &spec_sources,
                            group,
                            steps,
                            center,
                            cutoff,
                            &mut out,
                        )?;
                    } else {
                        eval_flat(
                            inst,
                            specs,
                            &spec_sources,
                            group,
                            steps,
                            center,
                            cutoff,
                            &mut out,
                        )?;
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        // transpose rows into per-spec columns
        let mut cols = vec![Vec::with_capacity(n); specs.len()];
        for row in rows {
            for (si, v) in row.into_iter().enumerate() {
                cols[si].push(v);
            }
        }
        cols
    };

    let columns = specs
        .iter()
        .zip(per_spec)
        .map(|(spec, vals)| finalize(schema, inst, spec, vals))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix { n_rows: n, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{compile, enumerate_features, FeatureConfig};
    use crate::rdb::testutil::*;
    use crate::relgraph::eval_reference;

    fn n(x: f64) -> Cell {
        Cell::Num(x)
    }

    #[test]
    fn production_aggregate_examples() {
        use AggregatorKind::*;
        assert_eq!(
            aggregate_cells(Mode, &[n(2.0), n(2.0), n(5.0), n(5.0)], None).unwrap(),
            n(2.0)
        );
        assert_eq!(
            aggregate_cells(Mode, &[n(3.0), n(1.0), n(3.0)], None).unwrap(),
            n(3.0)
        );
        assert_eq!(aggregate_cells(Std, &[n(1.0)], None).unwrap(), n(0.0));
        assert_eq!(
            aggregate_cells(Std, &[n(1.0), n(2.0), n(3.0), n(4.0)], None).unwrap(),
            n(1.118033988749895)
        );
        assert_eq!(aggregate_cells(Count, &[], None).unwrap(), n(0.0));
        assert_eq!(aggregate_cells(Mean, &[], None).unwrap(), Cell::Missing);
        assert_eq!(
            aggregate_cells(Count, &[Cell::Missing, n(1.0)], None).unwrap(),
            n(1.0)
        );
    }

    #[test]
    fn mode_merges_signed_zero_and_breaks_cat_ties_lexicographically() {
        use AggregatorKind::*;
        assert_eq!(
            aggregate_cells(Mode, &[n(-0.0), n(0.0), n(1.0)], None).unwrap(),
            n(0.0)
        );
        let c = |s: &str| Cell::Cat(s.into());
        assert_eq!(
            aggregate_cells(Mode, &[c("b"), c("a"), c("b"), c("a")], None).unwrap(),
            c("a")
        );
    }

    #[test]
    fn time_delta_examples() {
        use AggregatorKind::*;
        assert_eq!(
            time_delta_aggregate(TimeDeltaMean, &[400, 800], 1000).unwrap(),
            Some(400.0)
        );
        assert_eq!(
            time_delta_aggregate(TimeDeltaMin, &[400, 800], 1000).unwrap(),
            Some(200.0)
        );
        assert_eq!(time_delta_aggregate(TimeDeltaMin, &[], 1000).unwrap(), None);
        assert!(time_delta_aggregate(Mean, &[1], 10).is_err());
    }

    #[test]
    fn group_aggregate_keeps_all_missing_groups() {
        use AggregatorKind::*;
        let out = group_aggregate(
            Mean,
            &[1, 1, 2],
            &[n(1.0), n(2.0), Cell::Missing],
            None,
        )
        .unwrap();
        assert_eq!(out[&1], n(1.5));
        assert_eq!(out[&2], Cell::Missing);
        let out = group_aggregate(Count, &[2], &[Cell::Missing], None).unwrap();
        assert_eq!(out[&2], n(0.0));
    }

    #[test]
    fn executor_matches_reference_on_fixture() {
        let inst = small_ecommerce_instance();
        let schema = inst.schema.clone();
        let specs = enumerate_features(&schema, 2, &FeatureConfig::default().without_cutoff_aggs())
            .unwrap();
        let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
        let m = execute(&plan, &inst, None).unwrap();
        assert_eq!(m.n_rows, 3);
        assert_eq!(m.columns.len(), specs.len());
        for (ci, spec) in specs.iter().enumerate() {
            for row in 0..m.n_rows {
                let want = eval_reference(
                    &inst,
                    &spec.path,
                    spec.source_col,
                    &spec.chain,
                    row,
                    None,
                )
                .unwrap();
                let got = match &m.columns[ci].data {
                    FeatureColumnData::Num(v) => v[row].map(Cell::Num).unwrap_or(Cell::Missing),
                    FeatureColumnData::Cat(v) => v[row]
                        .clone()
                        .map(Cell::Cat)
                        .unwrap_or(Cell::Missing),
                };
                match (&want, &got) {
                    (Cell::Num(a), Cell::Num(b)) => {
                        assert!(
                            (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                            "spec {} row {row}: {a} vs {b}",
                            m.columns[ci].name
                        );
                    }
                    (Cell::Ts(a), Cell::Num(b)) => assert_eq!(*a as f64, *b),
                    _ => assert_eq!(want, got, "spec {} row {row}", m.columns[ci].name),
                }
            }
        }
    }

    #[test]
    fn executor_matches_reference_on_random_instances() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let params = crate::randdb::Params {
            max_tables: 4,
            max_rows: 25,
            ..crate::randdb::Params::default()
        };
        for trial in 0..8 {
            let inst = crate::randdb::random_instance(&mut rng, &params);
            let schema = inst.schema.clone();
            let config = FeatureConfig {
                feature_cap: 60,
                ..FeatureConfig::default()
            };
            let specs = enumerate_features(&schema, 2, &config.without_cutoff_aggs()).unwrap();
            let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
            let m = execute(&plan, &inst, None).unwrap();
            for (ci, spec) in specs.iter().enumerate() {
                for row in 0..m.n_rows.min(10) {
                    let want = eval_reference(
                        &inst,
                        &spec.path,
                        spec.source_col,
                        &spec.chain,
                        row,
                        None,
                    )
                    .unwrap();
                    let got = match &m.columns[ci].data {
                        FeatureColumnData::Num(v) => {
                            v[row].map(Cell::Num).unwrap_or(Cell::Missing)
                        }
                        FeatureColumnData::Cat(v) => {
                            v[row].clone().map(Cell::Cat).unwrap_or(Cell::Missing)
                        }
                    };
                    match (&want, &got) {
                        (Cell::Num(a), Cell::Num(b)) => assert!(
                            (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                            "trial {trial} spec {} row {row}: {a} vs {b}",
                            m.columns[ci].name
                        ),
                        (Cell::Ts(a), Cell::Num(b)) => assert_eq!(*a as f64, *b),
                        _ => assert_eq!(want, got, "trial {trial} spec {}", m.columns[ci].name),
                    }
                }
            }
        }
    }

    #[test]
    fn pushdown_on_and_off_agree() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let params = crate::randdb::Params {
            max_tables: 4,
            max_rows: 20,
            ..crate::randdb::Params::default()
        };
        for _ in 0..5 {
            let inst = crate::randdb::random_instance(&mut rng, &params);
            let schema = inst.schema.clone();
            let config = FeatureConfig {
                feature_cap: 40,
                ..FeatureConfig::default()
            };
            let specs = enumerate_features(&schema, 2, &config.without_cutoff_aggs()).unwrap();
            let on = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
            let off = compile(&schema, specs, CutoffMode::None, false).unwrap();
            let a = execute(&on, &inst, None).unwrap();
            let b = execute(&off, &inst, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn per_row_cutoffs_limit_history() {
        let inst = small_ecommerce_instance();
        let schema = inst.schema.clone();
        let one_hop = crate::relgraph::enumerate_metapaths(&schema, 1)[1].clone();
        let purchase = schema.table_index("purchase").unwrap();
        let amount = schema.column_index(purchase, "amount").unwrap();
        let spec = FeatureSpec {
            path: one_hop,
            source_table: purchase,
            source_col: amount,
            chain: vec![AggregatorKind::Sum],
        };
        let plan = compile(&schema, vec![spec], CutoffMode::PerRow, true).unwrap();
        // u1 purchases: amount 2 at ts 400, amount 1 at ts 800.
        let m = execute(&plan, &inst, Some(&[500, 500, 500])).unwrap();
        let FeatureColumnData::Num(v) = &m.columns[0].data else {
            panic!()
        };
        assert_eq!(v[0], Some(2.0));
        let m = execute(&plan, &inst, Some(&[900, 900, 900])).unwrap();
        let FeatureColumnData::Num(v) = &m.columns[0].data else {
            panic!()
        };
        assert_eq!(v[0], Some(3.0));
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let inst = small_ecommerce_instance();
        let schema = inst.schema.clone();
        let specs = enumerate_features(&schema, 1, &FeatureConfig::default().without_cutoff_aggs())
            .unwrap();
        let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
        assert!(matches!(
            execute(&plan, &inst, Some(&[1, 2, 3])),
            Err(Error::PlanMismatch(_))
        ));
        let per_row = compile(&schema, specs, CutoffMode::PerRow, true).unwrap();
        assert!(matches!(
            execute(&per_row, &inst, Some(&[1, 2])),
            Err(Error::PlanMismatch(_))
        ));
        assert!(matches!(
            execute(&per_row, &inst, None),
            Err(Error::PlanMismatch(_))
        ));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let inst = small_ecommerce_instance();
        let schema = inst.schema.clone();
        let specs = enumerate_features(&schema, 2, &FeatureConfig::default()).unwrap();
        let plan = compile(&schema, specs, CutoffMode::PerRow, true).unwrap();
        let cuts = vec![1000, 600, 900];
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| execute(&plan, &inst, Some(&cuts)).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(
            a.to_csv_string(None).unwrap(),
            b.to_csv_string(None).unwrap()
        );
    }

    #[test]
    fn csv_render_and_select_rows() {
        let m = FeatureMatrix {
            n_rows: 3,
            columns: vec![
                FeatureColumn {
                    name: "a".into(),
                    data: FeatureColumnData::Num(vec![Some(0.5), None, Some(3.0)]),
                },
                FeatureColumn {
                    name: "b".into(),
                    data: FeatureColumnData::Cat(vec![
                        Some("x".into()),
                        Some("y,z".into()),
                        None,
                    ]),
                },
            ],
        };
        let csv = m.to_csv_string(None).unwrap();
        assert_eq!(csv, "a,b\n0.5,x\n,\"y,z\"\n3,\n");
        let sel = m.select_rows(&[2, 0]);
        assert_eq!(sel.n_rows, 2);
        assert_eq!(sel.to_csv_string(None).unwrap(), "a,b\n3,\n0.5,x\n");
        let labeled = sel
            .to_csv_string(Some(("y", &["1".into(), "0".into()])))
            .unwrap();
        assert_eq!(labeled, "a,b,y\n3,,1\n0.5,x,0\n");
    }
}
