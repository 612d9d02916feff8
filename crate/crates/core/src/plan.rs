//! Feature enumeration and plan compilation.
//!
//! A feature spec is one (meta-path, source column, aggregator chain) triple;
//! compiling a spec set yields an operator DAG in which specs sharing a path
//! prefix share that prefix's scan/filter/join nodes exactly once. With
//! pushdown enabled, aggregation sits at the deepest hop its chain allows;
//! with pushdown disabled, the same values are produced by aggregating a
//! fully joined expansion level by level.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rdb::{ColumnKind, Schema};
use crate::relgraph::{enumerate_metapaths, Direction, MetaPath, RelStep};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Sum,
    Mean,
    Min,
    Max,
    Std,
    Mode,
    Count,
    #[serde(rename = "tdelta_mean")]
    TimeDeltaMean,
    #[serde(rename = "tdelta_min")]
    TimeDeltaMin,
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AggregatorKind::Sum => "sum",
            AggregatorKind::Mean => "mean",
            AggregatorKind::Min => "min",
            AggregatorKind::Max => "max",
            AggregatorKind::Std => "std",
            AggregatorKind::Mode => "mode",
            AggregatorKind::Count => "count",
            AggregatorKind::TimeDeltaMean => "tdelta_mean",
            AggregatorKind::TimeDeltaMin => "tdelta_min",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<AggregatorKind> {
        use AggregatorKind::*;
        Ok(match s {
            "sum" => Sum,
            "mean" => Mean,
            "min" => Min,
            "max" => Max,
            "std" => Std,
            "mode" => Mode,
            "count" => Count,
            "tdelta_mean" => TimeDeltaMean,
            "tdelta_min" => TimeDeltaMin,
            other => return Err(Error::Config(format!("unknown aggregator {other:?}"))),
        })
    }
}

/// Kind of a value as it flows through an aggregator chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Num,
    Cat,
    Ts,
}

pub fn column_value_kind(kind: ColumnKind) -> Option<ValueKind> {
    match kind {
        ColumnKind::Numeric => Some(ValueKind::Num),
        ColumnKind::Categorical => Some(ValueKind::Cat),
        ColumnKind::Timestamp => Some(ValueKind::Ts),
        ColumnKind::PrimaryKey | ColumnKind::ForeignKey => None,
    }
}

/// Whether `agg` accepts inputs of `kind`.
pub fn admissible(agg: AggregatorKind, kind: ValueKind) -> bool {
    use AggregatorKind::*;
    match kind {
        ValueKind::Num => matches!(agg, Sum | Mean | Min | Max | Std | Mode | Count),
        ValueKind::Cat => matches!(agg, Count | Mode),
        ValueKind::Ts => matches!(agg, Count | TimeDeltaMean | TimeDeltaMin),
    }
}

/// Output kind of `agg` applied to inputs of `kind` (mode preserves kind,
/// everything else is numeric).
pub fn output_kind(agg: AggregatorKind, kind: ValueKind) -> ValueKind {
    match agg {
        AggregatorKind::Mode => kind,
        _ => ValueKind::Num,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// One aggregator kind repeated along the chain (time-delta kinds get
    /// their natural outer companion: mean over tdelta_mean, min over
    /// tdelta_min).
    Repeat,
    /// Every admissible chain over the configured kind lists.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub numeric: Vec<AggregatorKind>,
    pub categorical: Vec<AggregatorKind>,
    pub timestamp: Vec<AggregatorKind>,
    pub chain_mode: ChainMode,
    pub feature_cap: usize,
}

impl Default for FeatureConfig {
    fn default() -> FeatureConfig {
        use AggregatorKind::*;
        FeatureConfig {
            numeric: vec![Sum, Mean, Min, Max, Std, Mode],
            categorical: vec![Count, Mode],
            timestamp: vec![TimeDeltaMean, TimeDeltaMin],
            chain_mode: ChainMode::Repeat,
            feature_cap: 2000,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for (list, kind, label) in [
            (&self.numeric, ValueKind::Num, "numeric"),
            (&self.categorical, ValueKind::Cat, "categorical"),
            (&self.timestamp, ValueKind::Ts, "timestamp"),
        ] {
            for agg in list {
                if !admissible(*agg, kind) {
                    return Err(Error::Config(format!(
                        "aggregator {agg} is not admissible for {label} sources"
                    )));
                }
            }
        }
        if self.feature_cap == 0 {
            return Err(Error::Config("feature_cap must be positive".into()));
        }
        Ok(())
    }

    fn list_for(&self, kind: ValueKind) -> &[AggregatorKind] {
        match kind {
            ValueKind::Num => &self.numeric,
            ValueKind::Cat => &self.categorical,
            ValueKind::Ts => &self.timestamp,
        }
    }

    /// Drop aggregators that need an active cutoff (used when no cutoff mode
    /// is in effect).
    pub fn without_cutoff_aggs(&self) -> FeatureConfig {
        let keep = |v: &[AggregatorKind]| {
            v.iter()
                .copied()
                .filter(|a| {
                    !matches!(
                        a,
                        AggregatorKind::TimeDeltaMean | AggregatorKind::TimeDeltaMin
                    )
                })
                .collect()
        };
        FeatureConfig {
            numeric: keep(&self.numeric),
            categorical: keep(&self.categorical),
            timestamp: keep(&self.timestamp),
            ..self.clone()
        }
    }
}

/// One output column: a meta-path, the single source column in the path's
/// final table, and an aggregator chain. `chain[i]` collapses hop `i+1`
/// values into their hop-`i` parents, so the last entry is applied first,
/// directly over raw source cells. The empty path carries an empty chain and
/// passes the target's own column through.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub path: MetaPath,
    pub source_table: usize,
    pub source_col: usize,
    pub chain: Vec<AggregatorKind>,
}

impl FeatureSpec {
    /// Canonical, collision-free column name:
    /// `path(step>...).table.column.agg1.agg2`.
    pub fn name(&self, schema: &Schema) -> String {
        let mut s = format!(
            "{}.{}.{}",
            self.path.render(schema),
            schema.table_name(self.source_table),
            schema.column_name(self.source_table, self.source_col)
        );
        for agg in &self.chain {
            s.push('.');
            s.push_str(&agg.to_string());
        }
        s
    }

    pub fn source_kind(&self, schema: &Schema) -> Result<ValueKind> {
        column_value_kind(schema.column_kind(self.source_table, self.source_col)).ok_or_else(
            || {
                Error::SourceMismatch(format!(
                    "key column {}.{} cannot be a feature source",
                    schema.table_name(self.source_table),
                    schema.column_name(self.source_table, self.source_col)
                ))
            },
        )
    }

    /// Kind of the emitted column. Aggregated chains end in Num or Cat;
    /// pass-through timestamps surface as numeric epoch seconds.
    pub fn emitted_kind(&self, schema: &Schema) -> Result<ValueKind> {
        let mut kind = self.source_kind(schema)?;
        for agg in self.chain.iter().rev() {
            if !admissible(*agg, kind) {
                return Err(Error::Config(format!(
                    "aggregator {agg} is not admissible for {kind:?} values in chain"
                )));
            }
            kind = output_kind(*agg, kind);
        }
        if kind == ValueKind::Ts {
            kind = ValueKind::Num;
        }
        Ok(kind)
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let final_table = self.path.final_table(schema)?;
        if final_table != self.source_table {
            return Err(Error::SourceMismatch(format!(
                "source table {:?} is not the path's final table {:?}",
                schema.table_name(self.source_table),
                schema.table_name(final_table)
            )));
        }
        if self.chain.len() != self.path.len() {
            return Err(Error::Config(format!(
                "chain length {} != path length {}",
                self.chain.len(),
                self.path.len()
            )));
        }
        self.emitted_kind(schema)?;
        Ok(())
    }
}

/// Manifest row describing one output column (wire format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub name: String,
    pub path: Vec<String>,
    pub source: String,
    pub agg_chain: Vec<AggregatorKind>,
}

pub fn manifest(schema: &Schema, specs: &[FeatureSpec]) -> Vec<ManifestEntry> {
    specs
        .iter()
        .enumerate()
        .map(|(i, f)| ManifestEntry {
            index: i,
            name: f.name(schema),
            path: f.path.step_strings(schema),
            source: format!(
                "{}.{}",
                schema.table_name(f.source_table),
                schema.column_name(f.source_table, f.source_col)
            ),
            agg_chain: f.chain.clone(),
        })
        .collect()
}

fn repeat_chain(
    agg: AggregatorKind,
    len: usize,
    source_kind: ValueKind,
) -> Option<Vec<AggregatorKind>> {
    use AggregatorKind::*;
    debug_assert!(len >= 1);
    if !admissible(agg, source_kind) {
        return None;
    }
    match agg {
        TimeDeltaMean | TimeDeltaMin => {
            let outer = if agg == TimeDeltaMean { Mean } else { Min };
            let mut chain = vec![outer; len - 1];
            chain.push(agg);
            Some(chain)
        }
        _ => {
            let mut kind = source_kind;
            for _ in 0..len {
                if !admissible(agg, kind) {
                    return None;
                }
                kind = output_kind(agg, kind);
            }
            Some(vec![agg; len])
        }
    }
}

/// Chains of `len` admissible aggregators over a source of `kind`, built
/// innermost-first from the configured lists, returned outermost-first.
fn full_chains(config: &FeatureConfig, kind: ValueKind, len: usize) -> Vec<Vec<AggregatorKind>> {
    fn go(config: &FeatureConfig, kind: ValueKind, left: usize) -> Vec<Vec<AggregatorKind>> {
        if left == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for &agg in config.list_for(kind) {
            for rest in go(config, output_kind(agg, kind), left - 1) {
                let mut chain = vec![agg];
                chain.extend(rest);
                out.push(chain);
            }
        }
        out
    }
    go(config, kind, len)
        .into_iter()
        .map(|mut c| {
            c.reverse();
            c
        })
        .collect()
}

/// Cross product of meta-paths, admissible source columns of each path's
/// final table, and aggregator chains; deduplicated, deterministically
/// ordered, truncated at `feature_cap`. The empty path contributes the
/// target's own non-key columns as pass-through specs.
pub fn enumerate_features(
    schema: &Schema,
    max_hops: usize,
    config: &FeatureConfig,
) -> Result<Vec<FeatureSpec>> {
    config.validate()?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    'outer: for path in enumerate_metapaths(schema, max_hops) {
        let table = path.final_table(schema)?;
        for (ci, cdef) in schema.tables[table].columns.iter().enumerate() {
            let Some(kind) = column_value_kind(cdef.kind) else {
                continue;
            };
            let chains: Vec<Vec<AggregatorKind>> = if path.is_empty() {
                vec![Vec::new()]
            } else {
                match config.chain_mode {
                    ChainMode::Repeat => config
                        .list_for(kind)
                        .iter()
                        .filter_map(|&a| repeat_chain(a, path.len(), kind))
                        .collect(),
                    ChainMode::Full => full_chains(config, kind, path.len()),
                }
            };
            for chain in chains {
                let spec = FeatureSpec {
                    path: path.clone(),
                    source_table: table,
                    source_col: ci,
                    chain,
                };
                if seen.insert(spec.name(schema)) {
                    out.push(spec);
                    if out.len() == config.feature_cap {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// No temporal filtering.
    None,
    /// One cutoff timestamp per target row, joined down the path.
    PerRow,
    /// A single cutoff applied to every temporal table.
    Global(i64),
}

impl CutoffMode {
    pub fn is_active(&self) -> bool {
        !matches!(self, CutoffMode::None)
    }
}

/// Group key of an aggregation: which link ties child rows to their parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupKey {
    pub step: RelStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueSource {
    Column { table: usize, col: usize },
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    Scan {
        table: usize,
    },
    CutoffFilter {
        table: usize,
        input: usize,
    },
    HashJoinBackward {
        relation: usize,
        outer: usize,
        inner: usize,
    },
    HashJoinForward {
        relation: usize,
        outer: usize,
        inner: usize,
    },
    GroupAggregate {
        group: GroupKey,
        agg: AggregatorKind,
        value: ValueSource,
        input: usize,
    },
    ProjectTarget {
        columns: Vec<OutputCol>,
        inputs: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputCol {
    PassThrough { col: usize },
    Aggregated { node: usize },
}

#[derive(Debug, Clone)]
pub struct ExecPlan {
    pub nodes: Vec<PlanNode>,
    pub sink: usize,
    pub specs: Vec<FeatureSpec>,
    pub cutoff_mode: CutoffMode,
    pub pushdown: bool,
    pub fingerprint: u64,
}

impl ExecPlan {
    pub fn join_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| {
                matches!(
                    n,
                    PlanNode::HashJoinBackward { .. } | PlanNode::HashJoinForward { .. }
                )
            })
            .count()
    }

    pub fn aggregate_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, PlanNode::GroupAggregate { .. }))
            .count()
    }

    pub fn manifest(&self, schema: &Schema) -> Vec<ManifestEntry> {
        manifest(schema, &self.specs)
    }

    /// Render the DAG as an indented tree rooted at the sink. Shared nodes
    /// are expanded once and referenced afterwards.
    pub fn explain(&self, schema: &Schema) -> String {
        let mut out = String::new();
        let mut seen = vec![false; self.nodes.len()];
        self.render(schema, self.sink, 0, &mut seen, &mut out);
        out
    }

    fn node_label(&self, schema: &Schema, id: usize) -> String {
        match &self.nodes[id] {
            PlanNode::Scan { table } => format!("Scan {}", schema.table_name(*table)),
            PlanNode::CutoffFilter { table, .. } => {
                format!("CutoffFilter {}", schema.table_name(*table))
            }
            PlanNode::HashJoinBackward { relation, .. } => {
                format!("HashJoinBackward {}", schema.relation_name(*relation))
            }
            PlanNode::HashJoinForward { relation, .. } => {
                format!("HashJoinForward {}", schema.relation_name(*relation))
            }
            PlanNode::GroupAggregate {
                group, agg, value, ..
            } => {
                let v = match value {
                    ValueSource::Column { table, col } => format!(
                        "{}.{}",
                        schema.table_name(*table),
                        schema.column_name(*table, *col)
                    ),
                    ValueSource::Node(n) => format!("#{n}"),
                };
                format!(
                    "GroupAggregate key=link({}) agg={agg} value={v}",
                    group.step.render(schema)
                )
            }
            PlanNode::ProjectTarget { columns, .. } => {
                let names: Vec<String> = columns
                    .iter()
                    .enumerate()
                    .map(|(i, _)| self.specs[i].name(schema))
                    .collect();
                format!("ProjectTarget [{}]", names.join(", "))
            }
        }
    }

    fn render(&self, schema: &Schema, id: usize, indent: usize, seen: &mut [bool], out: &mut String) {
        let pad = "  ".repeat(indent);
        if seen[id] {
            out.push_str(&format!("{pad}#{id} (shared, expanded above)\n"));
            return;
        }
        seen[id] = true;
        out.push_str(&format!("{pad}#{id} {}\n", self.node_label(schema, id)));
        for child in self.children(id) {
            self.render(schema, child, indent + 1, seen, out);
        }
    }

    fn children(&self, id: usize) -> Vec<usize> {
        match &self.nodes[id] {
            PlanNode::Scan { .. } => vec![],
            PlanNode::CutoffFilter { input, .. } => vec![*input],
            PlanNode::HashJoinBackward { outer, inner, .. }
            | PlanNode::HashJoinForward { outer, inner, .. } => vec![*outer, *inner],
            PlanNode::GroupAggregate { value, input, .. } => {
                let mut c = vec![*input];
                if let ValueSource::Node(n) = value {
                    if *n != *input {
                        c.push(*n);
                    }
                }
                c
            }
            PlanNode::ProjectTarget { inputs, .. } => inputs.clone(),
        }
    }
}

struct Builder<'a> {
    schema: &'a Schema,
    cutoff_mode: CutoffMode,
    nodes: Vec<PlanNode>,
    scans: HashMap<usize, usize>,
    filters: HashMap<usize, usize>,
    prefixes: HashMap<Vec<RelStep>, usize>,
    aggregates: HashMap<(Vec<RelStep>, AggregatorKind, ValueSource), usize>,
}

impl<'a> Builder<'a> {
    fn push(&mut self, node: PlanNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn scan(&mut self, table: usize) -> usize {
        if let Some(&id) = self.scans.get(&table) {
            return id;
        }
        let id = self.push(PlanNode::Scan { table });
        self.scans.insert(table, id);
        id
    }

    /// Scan of a step destination, cutoff-filtered when the mode is active
    /// and the table is temporal.
    fn filtered_scan(&mut self, table: usize) -> usize {
        let base = self.scan(table);
        if !self.cutoff_mode.is_active() || self.schema.time_col(table).is_none() {
            return base;
        }
        if let Some(&id) = self.filters.get(&table) {
            return id;
        }
        let id = self.push(PlanNode::CutoffFilter { table, input: base });
        self.filters.insert(table, id);
        id
    }

    /// Expansion node for a path prefix: target scan joined step by step.
    fn prefix_node(&mut self, steps: &[RelStep]) -> usize {
        if steps.is_empty() {
            return self.scan(self.schema.target);
        }
        if let Some(&id) = self.prefixes.get(steps) {
            return id;
        }
        let outer = self.prefix_node(&steps[..steps.len() - 1]);
        let step = steps[steps.len() - 1];
        let inner = self.filtered_scan(step.dest_table(self.schema));
        let node = match step.dir {
            Direction::Backward => PlanNode::HashJoinBackward {
                relation: step.relation,
                outer,
                inner,
            },
            Direction::Forward => PlanNode::HashJoinForward {
                relation: step.relation,
                outer,
                inner,
            },
        };
        let id = self.push(node);
        self.prefixes.insert(steps.to_vec(), id);
        id
    }

    fn aggregate(
        &mut self,
        prefix: &[RelStep],
        agg: AggregatorKind,
        value: ValueSource,
        input: usize,
    ) -> usize {
        let key = (prefix.to_vec(), agg, value);
        if let Some(&id) = self.aggregates.get(&key) {
            return id;
        }
        let group = GroupKey {
            step: *prefix.last().expect("aggregation needs at least one hop"),
        };
        let id = self.push(PlanNode::GroupAggregate {
            group,
            agg,
            value,
            input,
        });
        self.aggregates.insert(key, id);
        id
    }
}

/// Compile feature specs against a schema into an executable plan.
pub fn compile(
    schema: &Schema,
    specs: Vec<FeatureSpec>,
    cutoff_mode: CutoffMode,
    pushdown: bool,
) -> Result<ExecPlan> {
    for spec in &specs {
        spec.validate(schema)?;
        if !cutoff_mode.is_active()
            && spec.chain.iter().any(|a| {
                matches!(
                    a,
                    AggregatorKind::TimeDeltaMean | AggregatorKind::TimeDeltaMin
                )
            })
        {
            return Err(Error::Config(format!(
                "feature {:?} uses a time-delta aggregator but no cutoff mode is active",
                spec.name(schema)
            )));
        }
    }
    let mut b = Builder {
        schema,
        cutoff_mode,
        nodes: Vec::new(),
        scans: HashMap::new(),
        filters: HashMap::new(),
        prefixes: HashMap::new(),
        aggregates: HashMap::new(),
    };
    let mut columns = Vec::new();
    let mut sink_inputs: Vec<usize> = Vec::new();
    let add_input = |inputs: &mut Vec<usize>, id: usize| {
        if !inputs.contains(&id) {
            inputs.push(id);
        }
    };
    for spec in &specs {
        if spec.path.is_empty() {
            let scan = b.scan(schema.target);
            add_input(&mut sink_inputs, scan);
            columns.push(OutputCol::PassThrough {
                col: spec.source_col,
            });
            continue;
        }
        let steps = &spec.path.steps;
        let h = steps.len();
        let root = if pushdown {
            // Aggregate hop h before joining toward hop h-1: each chain level
            // consumes its own prefix expansion.
            let mut value = ValueSource::Column {
                table: spec.source_table,
                col: spec.source_col,
            };
            let mut node = 0;
            for depth in (0..h).rev() {
                let prefix = &steps[..=depth];
                let input = b.prefix_node(prefix);
                node = b.aggregate(prefix, spec.chain[depth], value, input);
                value = ValueSource::Node(node);
            }
            node
        } else {
            // Flat variant: materialize the whole path, then aggregate level
            // by level above the final join.
            let full = b.prefix_node(steps);
            let mut value = ValueSource::Column {
                table: spec.source_table,
                col: spec.source_col,
            };
            let mut input = full;
            let mut node = 0;
            for depth in (0..h).rev() {
                node = b.aggregate(&steps[..=depth], spec.chain[depth], value, input);
                value = ValueSource::Node(node);
                input = node;
            }
            node
        };
        add_input(&mut sink_inputs, root);
        columns.push(OutputCol::Aggregated { node: root });
    }
    let sink = b.push(PlanNode::ProjectTarget {
        columns,
        inputs: sink_inputs,
    });
    Ok(ExecPlan {
        nodes: b.nodes,
        sink,
        specs,
        cutoff_mode,
        pushdown,
        fingerprint: schema.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdb::testutil::*;

    fn spec_names(schema: &Schema, specs: &[FeatureSpec]) -> Vec<String> {
        specs.iter().map(|s| s.name(schema)).collect()
    }

    #[test]
    fn one_hop_numeric_mean_enumeration() {
        let schema = ecommerce_schema();
        let config = FeatureConfig {
            numeric: vec![AggregatorKind::Mean],
            categorical: vec![],
            timestamp: vec![],
            ..FeatureConfig::default()
        };
        let specs = enumerate_features(&schema, 1, &config).unwrap();
        assert_eq!(
            spec_names(&schema, &specs),
            vec![
                "path().user.age",
                "path().user.country",
                "path(bwd:purchase.user_id).purchase.amount.mean",
            ]
        );
    }

    #[test]
    fn zero_hops_is_pass_through_only() {
        let schema = ecommerce_schema();
        let specs = enumerate_features(&schema, 0, &FeatureConfig::default()).unwrap();
        assert_eq!(
            spec_names(&schema, &specs),
            vec!["path().user.age", "path().user.country"]
        );
        assert!(specs.iter().all(|s| s.chain.is_empty()));
    }

    #[test]
    fn std_on_categorical_list_is_a_config_error() {
        let schema = ecommerce_schema();
        let config = FeatureConfig {
            categorical: vec![AggregatorKind::Std],
            ..FeatureConfig::default()
        };
        assert!(matches!(
            enumerate_features(&schema, 1, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_cap_truncates_deterministically() {
        let schema = ecommerce_schema();
        let all = enumerate_features(&schema, 2, &FeatureConfig::default()).unwrap();
        let capped = enumerate_features(
            &schema,
            2,
            &FeatureConfig {
                feature_cap: 4,
                ..FeatureConfig::default()
            },
        )
        .unwrap();
        assert_eq!(capped.len(), 4);
        assert_eq!(&all[..4], &capped[..]);
    }

    #[test]
    fn repeat_chain_for_time_delta_mixes_outer_mean() {
        let chain = repeat_chain(AggregatorKind::TimeDeltaMean, 2, ValueKind::Ts).unwrap();
        assert_eq!(
            chain,
            vec![AggregatorKind::Mean, AggregatorKind::TimeDeltaMean]
        );
        let chain = repeat_chain(AggregatorKind::TimeDeltaMin, 3, ValueKind::Ts).unwrap();
        assert_eq!(
            chain,
            vec![
                AggregatorKind::Min,
                AggregatorKind::Min,
                AggregatorKind::TimeDeltaMin
            ]
        );
    }

    #[test]
    fn shared_path_compiles_to_one_join_chain() {
        let schema = ecommerce_schema();
        let two_hop = enumerate_metapaths(&schema, 2)[2].clone();
        let product = schema.table_index("product").unwrap();
        let price = schema.column_index(product, "price").unwrap();
        let mk = |aggs: [AggregatorKind; 2]| FeatureSpec {
            path: two_hop.clone(),
            source_table: product,
            source_col: price,
            chain: aggs.to_vec(),
        };
        let one = compile(
            &schema,
            vec![mk([AggregatorKind::Mean, AggregatorKind::Mean])],
            CutoffMode::None,
            true,
        )
        .unwrap();
        let many = compile(
            &schema,
            vec![
                mk([AggregatorKind::Mean, AggregatorKind::Mean]),
                mk([AggregatorKind::Sum, AggregatorKind::Sum]),
                mk([AggregatorKind::Max, AggregatorKind::Mean]),
            ],
            CutoffMode::None,
            true,
        )
        .unwrap();
        assert_eq!(one.join_count(), 2);
        assert_eq!(many.join_count(), 2);
        // chains share the inner mean-over-price aggregate
        assert_eq!(many.aggregate_count(), 5);
    }

    #[test]
    fn single_pass_through_plan_is_scan_project() {
        let schema = ecommerce_schema();
        let spec = FeatureSpec {
            path: MetaPath::default(),
            source_table: schema.target,
            source_col: 1,
            chain: vec![],
        };
        let plan = compile(&schema, vec![spec], CutoffMode::None, true).unwrap();
        assert_eq!(plan.nodes.len(), 2);
        assert!(matches!(plan.nodes[0], PlanNode::Scan { .. }));
        assert!(matches!(plan.nodes[1], PlanNode::ProjectTarget { .. }));
    }

    #[test]
    fn cutoff_filter_only_on_temporal_tables() {
        let schema = ecommerce_schema();
        let specs = enumerate_features(&schema, 2, &FeatureConfig::default()).unwrap();
        let plan = compile(&schema, specs, CutoffMode::Global(1000), true).unwrap();
        let filters: Vec<usize> = plan
            .nodes
            .iter()
            .filter_map(|n| match n {
                PlanNode::CutoffFilter { table, .. } => Some(*table),
                _ => None,
            })
            .collect();
        let purchase = schema.table_index("purchase").unwrap();
        assert_eq!(filters, vec![purchase]);
    }

    #[test]
    fn time_delta_without_cutoff_is_rejected() {
        let schema = ecommerce_schema();
        let one_hop = enumerate_metapaths(&schema, 1)[1].clone();
        let purchase = schema.table_index("purchase").unwrap();
        let ts = schema.column_index(purchase, "ts").unwrap();
        let spec = FeatureSpec {
            path: one_hop,
            source_table: purchase,
            source_col: ts,
            chain: vec![AggregatorKind::TimeDeltaMean],
        };
        assert!(matches!(
            compile(&schema, vec![spec], CutoffMode::None, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_spec_list_explains_bare_sink() {
        let schema = ecommerce_schema();
        let plan = compile(&schema, vec![], CutoffMode::None, true).unwrap();
        assert_eq!(plan.explain(&schema), "#0 ProjectTarget []\n");
    }

    #[test]
    fn explain_is_deterministic() {
        let schema = ecommerce_schema();
        let specs = enumerate_features(&schema, 2, &FeatureConfig::default()).unwrap();
        let a = compile(&schema, specs.clone(), CutoffMode::PerRow, true).unwrap();
        let b = compile(&schema, specs, CutoffMode::PerRow, true).unwrap();
        assert_eq!(a.explain(&schema), b.explain(&schema));
    }

    #[test]
    fn manifest_round_trips_and_is_bijective() {
        let schema = ecommerce_schema();
        let specs = enumerate_features(&schema, 2, &FeatureConfig::default()).unwrap();
        let m = manifest(&schema, &specs);
        assert_eq!(m.len(), specs.len());
        let mut names = std::collections::HashSet::new();
        for (i, e) in m.iter().enumerate() {
            assert_eq!(e.index, i);
            assert!(names.insert(e.name.clone()), "duplicate name {}", e.name);
        }
        let json = serde_json::to_string(&m).unwrap();
        let back: Vec<ManifestEntry> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), m.len());
        for (a, b) in m.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.agg_chain, b.agg_chain);
        }
    }

    #[test]
    fn explain_two_hop_golden() {
        let schema = ecommerce_schema();
        let two_hop = enumerate_metapaths(&schema, 2)[2].clone();
        let product = schema.table_index("product").unwrap();
        let spec = FeatureSpec {
            path: two_hop,
            source_table: product,
            source_col: 1,
            chain: vec![AggregatorKind::Mean, AggregatorKind::Mean],
        };
        let plan = compile(&schema, vec![spec], CutoffMode::PerRow, true).unwrap();
        let expected = "\
#8 ProjectTarget [path(bwd:purchase.user_id>fwd:purchase.product_id).product.price.mean.mean]
  #7 GroupAggregate key=link(bwd:purchase.user_id) agg=mean value=#6
    #3 HashJoinBackward purchase.user_id
      #0 Scan user
      #2 CutoffFilter purchase
        #1 Scan purchase
    #6 GroupAggregate key=link(fwd:purchase.product_id) agg=mean value=product.price
      #5 HashJoinForward purchase.product_id
        #3 (shared, expanded above)
        #4 Scan product
";
        // Freeze the shape on first run; see test output if this drifts.
        let got = plan.explain(&schema);
        assert_eq!(got, expected, "explain output:\n{got}");
    }

    use proptest::prelude::*;

    proptest! {
        // Over random schemas: canonical feature names never collide, the
        // compiled DAG materializes each distinct path prefix exactly once,
        // and recompiling yields the same fingerprint.
        #[test]
        fn compile_shares_prefixes_and_names_are_unique(seed in 0u64..300) {
            use rand::SeedableRng;
            use std::collections::HashSet;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let schema = crate::randdb::random_schema(&mut rng, &crate::randdb::Params::default());
            let config = FeatureConfig {
                chain_mode: ChainMode::Full,
                ..FeatureConfig::default()
            }
            .without_cutoff_aggs();
            let specs = enumerate_features(&schema, 2, &config).unwrap();

            let mut names: Vec<String> = specs.iter().map(|s| s.name(&schema)).collect();
            let n0 = names.len();
            names.sort();
            names.dedup();
            prop_assert_eq!(names.len(), n0, "feature name collision");

            let mut prefixes = HashSet::new();
            for s in &specs {
                for k in 1..=s.path.len() {
                    prefixes.insert(
                        crate::relgraph::MetaPath::new(s.path.steps[..k].to_vec())
                            .render(&schema),
                    );
                }
            }
            let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
            prop_assert_eq!(plan.join_count(), prefixes.len(), "prefix not shared");
            let again = compile(&schema, specs, CutoffMode::None, true).unwrap();
            prop_assert_eq!(plan.fingerprint, again.fingerprint);
            prop_assert_eq!(plan.manifest(&schema).len(), n0);
        }
    }
}
