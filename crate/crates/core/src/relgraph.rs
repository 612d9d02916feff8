//! Schema graph traversal: meta-path enumeration, per-row ego networks with
//! temporal exclusion, and a naive recursive evaluator. The evaluator is the
//! brute-force reference the plan executor is checked against, so it shares
//! no aggregation kernels with [`crate::exec`].

use std::collections::HashSet;

use crate::plan::AggregatorKind;
use crate::rdb::{Cell, ColumnKind, Instance, Schema};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// pk-side row to the fk-side rows referencing it (one-to-many).
    Backward,
    /// fk-side row to the single pk-side row it references.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RelStep {
    pub relation: usize,
    pub dir: Direction,
}

impl RelStep {
    pub fn source_table(&self, schema: &Schema) -> usize {
        let rel = schema.relations()[self.relation];
        match self.dir {
            Direction::Backward => rel.pk_table,
            Direction::Forward => rel.fk_table,
        }
    }

    pub fn dest_table(&self, schema: &Schema) -> usize {
        let rel = schema.relations()[self.relation];
        match self.dir {
            Direction::Backward => rel.fk_table,
            Direction::Forward => rel.pk_table,
        }
    }

    pub fn render(&self, schema: &Schema) -> String {
        let tag = match self.dir {
            Direction::Backward => "bwd",
            Direction::Forward => "fwd",
        };
        format!("{tag}:{}", schema.relation_name(self.relation))
    }
}

/// A walk over the schema graph starting at the target table. The empty path
/// denotes the target table itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MetaPath {
    pub steps: Vec<RelStep>,
}

impl MetaPath {
    pub fn new(steps: Vec<RelStep>) -> MetaPath {
        MetaPath { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Tables touched by the walk: target first, then each step destination.
    /// Errors if consecutive steps do not connect.
    pub fn table_seq(&self, schema: &Schema) -> Result<Vec<usize>> {
        let mut seq = vec![schema.target];
        for step in &self.steps {
            let src = step.source_table(schema);
            if src != *seq.last().unwrap() {
                return Err(Error::Schema(format!(
                    "path step {} does not start at table {:?}",
                    step.render(schema),
                    schema.table_name(*seq.last().unwrap())
                )));
            }
            seq.push(step.dest_table(schema));
        }
        Ok(seq)
    }

    pub fn final_table(&self, schema: &Schema) -> Result<usize> {
        Ok(*self.table_seq(schema)?.last().unwrap())
    }

    pub fn step_strings(&self, schema: &Schema) -> Vec<String> {
        self.steps.iter().map(|s| s.render(schema)).collect()
    }

    pub fn render(&self, schema: &Schema) -> String {
        format!("path({})", self.step_strings(schema).join(">"))
    }
}

fn step_sort_key(schema: &Schema, step: &RelStep) -> (String, Direction) {
    (schema.relation_name(step.relation), step.dir)
}

/// Candidate steps leaving `table`, in canonical order (relation name, then
/// backward before forward).
fn steps_from(schema: &Schema, table: usize) -> Vec<RelStep> {
    let mut out = Vec::new();
    for rel in schema.relations() {
        if rel.pk_table == table {
            out.push(RelStep {
                relation: rel.id,
                dir: Direction::Backward,
            });
        }
        if rel.fk_table == table {
            out.push(RelStep {
                relation: rel.id,
                dir: Direction::Forward,
            });
        }
    }
    out.sort_by(|a, b| step_sort_key(schema, a).cmp(&step_sort_key(schema, b)));
    out
}

/// All meta-paths of length `0..=max_hops` from the target table.
///
/// A step may not reuse a relation already traversed, and a step across
/// distinct tables may not enter a table the walk has already touched. Steps
/// over a self-referential relation stay admissible (the relation-reuse rule
/// still caps them at one per walk). Output is ordered by length, then
/// lexicographically by (relation name, direction).
pub fn enumerate_metapaths(schema: &Schema, max_hops: usize) -> Vec<MetaPath> {
    let mut out = vec![MetaPath::default()];
    // (path, current table, visited tables, used relations)
    let mut level: Vec<(MetaPath, usize, HashSet<usize>, HashSet<usize>)> = vec![(
        MetaPath::default(),
        schema.target,
        HashSet::from([schema.target]),
        HashSet::new(),
    )];
    for _ in 0..max_hops {
        let mut next = Vec::new();
        for (path, table, visited, used) in &level {
            for step in steps_from(schema, *table) {
                if used.contains(&step.relation) {
                    continue;
                }
                let dest = step.dest_table(schema);
                if dest != *table && visited.contains(&dest) {
                    continue;
                }
                let mut p = path.clone();
                p.steps.push(step);
                let mut v = visited.clone();
                v.insert(dest);
                let mut u = used.clone();
                u.insert(step.relation);
                next.push((p, dest, v, u));
            }
        }
        out.extend(next.iter().map(|(p, ..)| p.clone()));
        level = next;
    }
    out
}

/// Row visibility under an optional cutoff: rows of tables with an event-time
/// column must carry a timestamp at or before the cutoff; a row with no
/// timestamp in such a table is treated as unobservable. Tables without an
/// event-time column are never filtered.
pub fn row_visible(inst: &Instance, table: usize, row: usize, cutoff: Option<i64>) -> bool {
    let Some(cut) = cutoff else { return true };
    if inst.schema.time_col(table).is_none() {
        return true;
    }
    match inst.time_value(table, row) {
        Some(ts) => ts <= cut,
        None => false,
    }
}

/// Rows reached from `row` through one step, visibility-filtered, ascending.
pub fn step_children(
    inst: &Instance,
    step: &RelStep,
    row: usize,
    cutoff: Option<i64>,
) -> Vec<usize> {
    let schema = &inst.schema;
    let dest = step.dest_table(schema);
    let raw: Vec<usize> = match step.dir {
        Direction::Backward => inst.referencing_rows(step.relation, row).to_vec(),
        Direction::Forward => {
            let rel = schema.relations()[step.relation];
            inst.fk_row(rel.fk_table, row, rel.fk_col).into_iter().collect()
        }
    };
    raw.into_iter()
        .filter(|&r| row_visible(inst, dest, r, cutoff))
        .collect()
}

/// Layered multiset of rows reachable from one center row. Layer `h` holds
/// every row reached by step `h+1`, repeated once per distinct reaching
/// parent in the previous layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoNetwork {
    pub center: usize,
    pub layers: Vec<Vec<usize>>,
}

pub fn ego_network(
    inst: &Instance,
    path: &MetaPath,
    center: usize,
    cutoff: Option<i64>,
) -> Result<EgoNetwork> {
    path.table_seq(&inst.schema)?;
    if center >= inst.rows(inst.schema.target) {
        return Err(Error::Internal(format!("center row {center} out of range")));
    }
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(path.len());
    for (h, step) in path.steps.iter().enumerate() {
        let parents: Vec<usize> = if h == 0 {
            vec![center]
        } else {
            let mut d: Vec<usize> = layers[h - 1].clone();
            d.sort_unstable();
            d.dedup();
            d
        };
        let mut layer = Vec::new();
        for p in parents {
            layer.extend(step_children(inst, step, p, cutoff));
        }
        layers.push(layer);
    }
    Ok(EgoNetwork { center, layers })
}

/// Source-column cells over the final layer of an ego network (the 1-D
/// restriction of the neighborhood: all other columns are dropped).
pub fn one_d_restrict(
    inst: &Instance,
    path: &MetaPath,
    ego: &EgoNetwork,
    source_col: usize,
) -> Result<Vec<Cell>> {
    let schema = &inst.schema;
    let table = path.final_table(schema)?;
    if source_col >= schema.tables[table].columns.len() {
        return Err(Error::SourceMismatch(format!(
            "column index {source_col} not in table {:?}",
            schema.table_name(table)
        )));
    }
    if matches!(
        schema.column_kind(table, source_col),
        ColumnKind::PrimaryKey | ColumnKind::ForeignKey
    ) {
        return Err(Error::SourceMismatch(format!(
            "key column {}.{} cannot be a feature source",
            schema.table_name(table),
            schema.column_name(table, source_col)
        )));
    }
    let rows: &[usize] = match ego.layers.last() {
        Some(layer) => layer,
        None => std::slice::from_ref(&ego.center),
    };
    Ok(rows.iter().map(|&r| inst.cell(table, r, source_col)).collect())
}

fn canon(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

/// Naive aggregation over non-missing cells; deliberately plain (sequential
/// sums, sort-based mode) so it stays an independent route from the executor
/// kernels. Empty input yields Count = 0 and Missing for everything else.
pub fn aggregate_reference(
    kind: AggregatorKind,
    vals: &[Cell],
    cutoff: Option<i64>,
) -> Result<Cell> {
    use AggregatorKind::*;
    if kind == Count {
        return Ok(Cell::Num(vals.len() as f64));
    }
    if vals.is_empty() {
        return Ok(Cell::Missing);
    }
    let nums = || -> Result<Vec<f64>> {
        vals.iter()
            .map(|c| match c {
                Cell::Num(x) => Ok(*x),
                other => Err(Error::Type(format!("expected numeric cell, got {other:?}"))),
            })
            .collect()
    };
    match kind {
        Count => unreachable!(),
        Sum => Ok(Cell::Num(nums()?.iter().fold(0.0, |a, b| a + b))),
        Mean => {
            let xs = nums()?;
            Ok(Cell::Num(xs.iter().fold(0.0, |a, b| a + b) / xs.len() as f64))
        }
        Min => {
            let xs = nums()?;
            Ok(Cell::Num(xs.iter().copied().fold(f64::INFINITY, f64::min)))
        }
        Max => {
            let xs = nums()?;
            Ok(Cell::Num(
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ))
        }
        Std => {
            let xs = nums()?;
            let n = xs.len() as f64;
            let mean = xs.iter().fold(0.0, |a, b| a + b) / n;
            let ss = xs.iter().fold(0.0, |a, x| a + (x - mean) * (x - mean));
            Ok(Cell::Num((ss / n).sqrt()))
        }
        Mode => match vals[0] {
            Cell::Num(_) => {
                let mut xs = nums()?;
                xs.iter_mut().for_each(|x| *x = canon(*x));
                xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN cells"));
                Ok(Cell::Num(mode_of_sorted(&xs, |a, b| a == b)))
            }
            Cell::Cat(_) => {
                let mut ss: Vec<&str> = vals
                    .iter()
                    .map(|c| match c {
                        Cell::Cat(s) => Ok(s.as_str()),
                        other => {
                            Err(Error::Type(format!("expected categorical cell, got {other:?}")))
                        }
                    })
                    .collect::<Result<_>>()?;
                ss.sort_unstable();
                Ok(Cell::Cat(mode_of_sorted(&ss, |a, b| a == b).to_string()))
            }
            ref other => Err(Error::Type(format!("mode over unsupported cell {other:?}"))),
        },
        TimeDeltaMean | TimeDeltaMin => {
            let cut = cutoff.ok_or_else(|| {
                Error::Config("time-delta aggregation requires an active cutoff".into())
            })?;
            let deltas: Vec<f64> = vals
                .iter()
                .map(|c| match c {
                    Cell::Ts(t) => Ok((cut - t) as f64),
                    other => Err(Error::Type(format!("expected timestamp cell, got {other:?}"))),
                })
                .collect::<Result<_>>()?;
            if kind == TimeDeltaMean {
                Ok(Cell::Num(
                    deltas.iter().fold(0.0, |a, b| a + b) / deltas.len() as f64,
                ))
            } else {
                Ok(Cell::Num(
                    deltas.iter().copied().fold(f64::INFINITY, f64::min),
                ))
            }
        }
    }
}

/// First most-frequent element of a sorted slice (ties resolve to the
/// smallest, which sorts first).
fn mode_of_sorted<T: Copy>(xs: &[T], eq: impl Fn(T, T) -> bool) -> T {
    let mut best = xs[0];
    let mut best_count = 0usize;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i + 1;
        while j < xs.len() && eq(xs[i], xs[j]) {
            j += 1;
        }
        if j - i > best_count {
            best = xs[i];
            best_count = j - i;
        }
        i = j;
    }
    best
}

/// Brute-force feature value for one center row: walk the path recursively
/// and collapse each hop with its chain aggregator (chain entry `h` pairs
/// with step `h+1`; the last entry acts directly on raw source cells). This
/// is the per-parent recursive semantics — a hop value aggregates its own
/// children before being handed to its parent.
pub fn eval_reference(
    inst: &Instance,
    path: &MetaPath,
    source_col: usize,
    chain: &[AggregatorKind],
    center: usize,
    cutoff: Option<i64>,
) -> Result<Cell> {
    let schema = &inst.schema;
    let table = path.final_table(schema)?;
    if chain.len() != path.len() {
        return Err(Error::Config(format!(
            "chain length {} != path length {}",
            chain.len(),
            path.len()
        )));
    }
    if matches!(
        schema.column_kind(table, source_col),
        ColumnKind::PrimaryKey | ColumnKind::ForeignKey
    ) {
        return Err(Error::SourceMismatch(format!(
            "key column {}.{} cannot be a feature source",
            schema.table_name(table),
            schema.column_name(table, source_col)
        )));
    }
    eval_at(inst, path, source_col, chain, center, 0, cutoff)
}

fn eval_at(
    inst: &Instance,
    path: &MetaPath,
    source_col: usize,
    chain: &[AggregatorKind],
    row: usize,
    depth: usize,
    cutoff: Option<i64>,
) -> Result<Cell> {
    if depth == path.len() {
        let table = path.final_table(&inst.schema)?;
        return Ok(inst.cell(table, row, source_col));
    }
    let step = &path.steps[depth];
    let mut vals = Vec::new();
    for child in step_children(inst, step, row, cutoff) {
        let v = eval_at(inst, path, source_col, chain, child, depth + 1, cutoff)?;
        if v != Cell::Missing {
            vals.push(v);
        }
    }
    aggregate_reference(chain[depth], &vals, cutoff)
}
