//! Relational data model: schema documents, column-major table storage with
//! explicit per-cell missing flags, CSV load/store, and integrity validation.
//!
//! Conventions: single-column primary/foreign keys, timestamps as integer
//! epoch seconds (UTC), one optional event-time column per table. Dangling
//! foreign keys are tolerated at load (they join to nothing downstream) but
//! are counted by [`validate`].

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    PrimaryKey,
    ForeignKey,
    Numeric,
    Categorical,
    Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fk_target: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
}

/// Wire format of a schema document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub tables: Vec<TableDef>,
    pub target_table: String,
}

/// One foreign-key edge: rows of `fk_table` reference the primary key of
/// `pk_table` through column `fk_col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub id: usize,
    pub fk_table: usize,
    pub fk_col: usize,
    pub pk_table: usize,
}

/// A validated schema with derived lookups.
#[derive(Debug, Clone)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub target: usize,
    relations: Vec<Relation>,
    by_name: HashMap<String, usize>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Schema {
    pub fn from_doc(doc: SchemaDoc) -> Result<Schema> {
        if doc.tables.is_empty() {
            return Err(Error::Schema("schema has no tables".into()));
        }
        let mut by_name = HashMap::new();
        for (i, t) in doc.tables.iter().enumerate() {
            if !valid_name(&t.name) {
                return Err(Error::Schema(format!(
                    "table name {:?} must be alphanumeric/underscore",
                    t.name
                )));
            }
            if by_name.insert(t.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate table name {:?}", t.name)));
            }
        }
        for t in &doc.tables {
            let mut seen = HashSet::new();
            let mut pk_count = 0;
            for c in &t.columns {
                if !valid_name(&c.name) {
                    return Err(Error::Schema(format!(
                        "column name {:?} in table {:?} must be alphanumeric/underscore",
                        c.name, t.name
                    )));
                }
                if !seen.insert(c.name.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate column {:?} in table {:?}",
                        c.name, t.name
                    )));
                }
                match c.kind {
                    ColumnKind::PrimaryKey => pk_count += 1,
                    ColumnKind::ForeignKey => {
                        let target = c.fk_target.as_deref().ok_or_else(|| {
                            Error::Schema(format!(
                                "foreign key {}.{} lacks fk_target",
                                t.name, c.name
                            ))
                        })?;
                        if !by_name.contains_key(target) {
                            return Err(Error::Schema(format!(
                                "foreign key {}.{} references unknown table {:?}",
                                t.name, c.name, target
                            )));
                        }
                    }
                    _ => {
                        if c.fk_target.is_some() {
                            return Err(Error::Schema(format!(
                                "column {}.{} is not a foreign key but has fk_target",
                                t.name, c.name
                            )));
                        }
                    }
                }
            }
            if pk_count > 1 {
                return Err(Error::Schema(format!(
                    "table {:?} has {} primary key columns (at most one)",
                    t.name, pk_count
                )));
            }
            if let Some(tc) = &t.time_column {
                let col = t.columns.iter().find(|c| &c.name == tc);
                match col {
                    Some(c) if c.kind == ColumnKind::Timestamp => {}
                    Some(_) => {
                        return Err(Error::Schema(format!(
                            "time_column {}.{} is not a timestamp column",
                            t.name, tc
                        )))
                    }
                    None => {
                        return Err(Error::Schema(format!(
                            "time_column {:?} not found in table {:?}",
                            tc, t.name
                        )))
                    }
                }
            }
        }
        let target = *by_name.get(&doc.target_table).ok_or_else(|| {
            Error::Schema(format!("target table {:?} not found", doc.target_table))
        })?;

        let mut schema = Schema {
            tables: doc.tables,
            target,
            relations: Vec::new(),
            by_name,
        };
        if schema.pk_col(target).is_none() {
            return Err(Error::Schema(format!(
                "target table {:?} has no primary key",
                schema.tables[target].name
            )));
        }
        // Relations in (fk table, fk column) order; every FK target must own a PK.
        let mut relations = Vec::new();
        for (ti, t) in schema.tables.iter().enumerate() {
            for (ci, c) in t.columns.iter().enumerate() {
                if c.kind == ColumnKind::ForeignKey {
                    let pk_table = schema.by_name[c.fk_target.as_deref().unwrap()];
                    if schema.pk_col(pk_table).is_none() {
                        return Err(Error::Schema(format!(
                            "foreign key {}.{} references table {:?} which has no primary key",
                            t.name, c.name, schema.tables[pk_table].name
                        )));
                    }
                    relations.push(Relation {
                        id: relations.len(),
                        fk_table: ti,
                        fk_col: ci,
                        pk_table,
                    });
                }
            }
        }
        schema.relations = relations;
        Ok(schema)
    }

    pub fn from_json(json: &str) -> Result<Schema> {
        let doc: SchemaDoc =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("schema json: {e}")))?;
        Schema::from_doc(doc)
    }

    pub fn to_doc(&self) -> SchemaDoc {
        SchemaDoc {
            tables: self.tables.clone(),
            target_table: self.tables[self.target].name.clone(),
        }
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn table_name(&self, t: usize) -> &str {
        &self.tables[t].name
    }

    pub fn column_index(&self, t: usize, name: &str) -> Option<usize> {
        self.tables[t].columns.iter().position(|c| c.name == name)
    }

    pub fn column_name(&self, t: usize, c: usize) -> &str {
        &self.tables[t].columns[c].name
    }

    pub fn column_kind(&self, t: usize, c: usize) -> ColumnKind {
        self.tables[t].columns[c].kind
    }

    pub fn pk_col(&self, t: usize) -> Option<usize> {
        self.tables[t]
            .columns
            .iter()
            .position(|c| c.kind == ColumnKind::PrimaryKey)
    }

    pub fn time_col(&self, t: usize) -> Option<usize> {
        let tc = self.tables[t].time_column.as_deref()?;
        self.column_index(t, tc)
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Display name of a relation: `fk_table.fk_column`.
    pub fn relation_name(&self, r: usize) -> String {
        let rel = self.relations[r];
        format!(
            "{}.{}",
            self.tables[rel.fk_table].name,
            self.tables[rel.fk_table].columns[rel.fk_col].name
        )
    }

    /// Stable digest used to detect schema drift between compile and execute.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(&self.to_doc()).expect("schema serializes");
        let mut h = std::collections::hash_map::DefaultHasher::new();
        json.hash(&mut h);
        h.finish()
    }
}

/// A single cell value; `Missing` is an explicit state, never a sentinel.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Cat(String),
    Ts(i64),
    Key(String),
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical {
        codes: Vec<Option<u32>>,
        dict: Vec<String>,
        index: HashMap<String, u32>,
    },
    Timestamp(Vec<Option<i64>>),
    Key(Vec<Option<String>>),
}

impl ColumnData {
    fn new(kind: ColumnKind) -> ColumnData {
        match kind {
            ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
            ColumnKind::Categorical => ColumnData::Categorical {
                codes: Vec::new(),
                dict: Vec::new(),
                index: HashMap::new(),
            },
            ColumnKind::Timestamp => ColumnData::Timestamp(Vec::new()),
            ColumnKind::PrimaryKey | ColumnKind::ForeignKey => ColumnData::Key(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Timestamp(v) => v.len(),
            ColumnData::Key(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical { codes, .. } => codes[row].is_none(),
            ColumnData::Timestamp(v) => v[row].is_none(),
            ColumnData::Key(v) => v[row].is_none(),
        }
    }

    pub fn cell(&self, row: usize) -> Cell {
        match self {
            ColumnData::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Num),
            ColumnData::Categorical { codes, dict, .. } => codes[row]
                .map_or(Cell::Missing, |c| Cell::Cat(dict[c as usize].clone())),
            ColumnData::Timestamp(v) => v[row].map_or(Cell::Missing, Cell::Ts),
            ColumnData::Key(v) => v[row]
                .as_ref()
                .map_or(Cell::Missing, |k| Cell::Key(k.clone())),
        }
    }

    fn push(&mut self, cell: Cell, ctx: &str) -> Result<()> {
        match (self, cell) {
            (ColumnData::Numeric(v), Cell::Missing) => v.push(None),
            (ColumnData::Numeric(v), Cell::Num(x)) => {
                // NaN is canonicalized to the missing state at the boundary.
                v.push(if x.is_nan() { None } else { Some(x) })
            }
            (ColumnData::Categorical { codes, .. }, Cell::Missing) => codes.push(None),
            (ColumnData::Categorical { codes, dict, index }, Cell::Cat(s)) => {
                let code = *index.entry(s.clone()).or_insert_with(|| {
                    dict.push(s);
                    (dict.len() - 1) as u32
                });
                codes.push(Some(code));
            }
            (ColumnData::Timestamp(v), Cell::Missing) => v.push(None),
            (ColumnData::Timestamp(v), Cell::Ts(x)) => v.push(Some(x)),
            (ColumnData::Key(v), Cell::Missing) => v.push(None),
            (ColumnData::Key(v), Cell::Key(k)) => v.push(Some(k)),
            (col, cell) => {
                return Err(Error::Type(format!(
                    "{ctx}: cell {cell:?} does not fit column storage {}",
                    col.kind_name()
                )))
            }
        }
        Ok(())
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ColumnData::Numeric(_) => "numeric",
            ColumnData::Categorical { .. } => "categorical",
            ColumnData::Timestamp(_) => "timestamp",
            ColumnData::Key(_) => "key",
        }
    }

    pub fn dict(&self) -> Option<&[String]> {
        match self {
            ColumnData::Categorical { dict, .. } => Some(dict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TableData {
    pub columns: Vec<ColumnData>,
    pub rows: usize,
    /// pk value -> row id (empty when the table has no primary key)
    pub pk_map: HashMap<String, usize>,
    /// per column: resolved fk row ids (None entry = missing or dangling)
    pub fk_resolved: Vec<Option<Vec<Option<usize>>>>,
    /// per column: count of non-missing fk values that resolve to no pk
    pub fk_dangling: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub schema: Schema,
    tables: Vec<TableData>,
    /// per relation: pk-side row -> referencing fk-side rows, ascending.
    reverse_adj: Vec<Vec<Vec<usize>>>,
}

impl Instance {
    pub fn new_empty(schema: Schema) -> Instance {
        let tables = schema
            .tables
            .iter()
            .map(|t| TableData {
                columns: t.columns.iter().map(|c| ColumnData::new(c.kind)).collect(),
                ..TableData::default()
            })
            .collect();
        let mut inst = Instance {
            schema,
            tables,
            reverse_adj: Vec::new(),
        };
        inst.reindex().expect("empty instance is consistent");
        inst
    }

    pub fn rows(&self, t: usize) -> usize {
        self.tables[t].rows
    }

    pub fn table(&self, t: usize) -> &TableData {
        &self.tables[t]
    }

    pub fn column(&self, t: usize, c: usize) -> &ColumnData {
        &self.tables[t].columns[c]
    }

    pub fn cell(&self, t: usize, row: usize, c: usize) -> Cell {
        self.tables[t].columns[c].cell(row)
    }

    /// Event-time of a row, when the table declares a time column.
    pub fn time_value(&self, t: usize, row: usize) -> Option<i64> {
        let c = self.schema.time_col(t)?;
        match &self.tables[t].columns[c] {
            ColumnData::Timestamp(v) => v[row],
            _ => None,
        }
    }

    /// Row referenced by a foreign-key cell, if present and resolvable.
    pub fn fk_row(&self, t: usize, row: usize, c: usize) -> Option<usize> {
        self.tables[t].fk_resolved[c].as_ref().and_then(|v| v[row])
    }

    /// Rows of the fk table referencing `pk_row` through `relation`.
    pub fn referencing_rows(&self, relation: usize, pk_row: usize) -> &[usize] {
        &self.reverse_adj[relation][pk_row]
    }

    pub fn append_rows(&mut self, t: usize, rows: Vec<Vec<Cell>>) -> Result<()> {
        let def = self.schema.tables[t].clone();
        for cells in rows {
            if cells.len() != def.columns.len() {
                return Err(Error::Type(format!(
                    "table {:?}: row arity {} != {} columns",
                    def.name,
                    cells.len(),
                    def.columns.len()
                )));
            }
            for (ci, cell) in cells.into_iter().enumerate() {
                let ctx = format!("table {:?} column {:?}", def.name, def.columns[ci].name);
                self.tables[t].columns[ci].push(cell, &ctx)?;
            }
            self.tables[t].rows += 1;
        }
        self.reindex()
    }

    /// Rebuild key maps, fk resolution, and reverse adjacency.
    fn reindex(&mut self) -> Result<()> {
        // Primary-key maps first, then fk resolution against them.
        for ti in 0..self.tables.len() {
            let tab = &mut self.tables[ti];
            tab.pk_map.clear();
            if let Some(pc) = self.schema.pk_col(ti) {
                let name = &self.schema.tables[ti].name;
                if let ColumnData::Key(vals) = &tab.columns[pc] {
                    for (r, v) in vals.iter().enumerate() {
                        let v = v.as_ref().ok_or_else(|| {
                            Error::Integrity(format!(
                                "table {name:?} row {r}: missing primary key"
                            ))
                        })?;
                        if tab.pk_map.insert(v.clone(), r).is_some() {
                            return Err(Error::Integrity(format!(
                                "table {name:?}: duplicate primary key {v:?}"
                            )));
                        }
                    }
                }
            }
        }
        for ti in 0..self.tables.len() {
            let ncols = self.tables[ti].columns.len();
            let mut resolved: Vec<Option<Vec<Option<usize>>>> = vec![None; ncols];
            let mut dangling = vec![0usize; ncols];
            for ci in 0..ncols {
                let def = &self.schema.tables[ti].columns[ci];
                if def.kind != ColumnKind::ForeignKey {
                    continue;
                }
                let tgt = self
                    .schema
                    .table_index(def.fk_target.as_deref().unwrap())
                    .expect("validated at schema construction");
                let pk_map = &self.tables[tgt].pk_map;
                if let ColumnData::Key(vals) = &self.tables[ti].columns[ci] {
                    let mut col = Vec::with_capacity(vals.len());
                    for v in vals {
                        match v {
                            None => col.push(None),
                            Some(key) => match pk_map.get(key) {
                                Some(&r) => col.push(Some(r)),
                                None => {
                                    dangling[ci] += 1;
                                    col.push(None);
                                }
                            },
                        }
                    }
                    resolved[ci] = Some(col);
                }
            }
            self.tables[ti].fk_resolved = resolved;
            self.tables[ti].fk_dangling = dangling;
        }
        self.reverse_adj = self
            .schema
            .relations()
            .iter()
            .map(|rel| {
                let mut adj = vec![Vec::new(); self.tables[rel.pk_table].rows];
                if let Some(col) = &self.tables[rel.fk_table].fk_resolved[rel.fk_col] {
                    for (fk_row, target) in col.iter().enumerate() {
                        if let Some(p) = target {
                            adj[*p].push(fk_row);
                        }
                    }
                }
                adj
            })
            .collect();
        Ok(())
    }
}

fn parse_cell(kind: ColumnKind, raw: &str, ctx: impl Fn() -> String) -> Result<Cell> {
    if raw.is_empty() {
        return Ok(Cell::Missing);
    }
    match kind {
        ColumnKind::Numeric => raw
            .parse::<f64>()
            .map(Cell::Num)
            .map_err(|_| Error::Type(format!("{}: {raw:?} is not numeric", ctx()))),
        ColumnKind::Timestamp => raw
            .parse::<i64>()
            .map(Cell::Ts)
            .map_err(|_| Error::Type(format!("{}: {raw:?} is not an epoch timestamp", ctx()))),
        ColumnKind::Categorical => Ok(Cell::Cat(raw.to_string())),
        ColumnKind::PrimaryKey | ColumnKind::ForeignKey => Ok(Cell::Key(raw.to_string())),
    }
}

/// Load `<table>.csv` files (header row, empty field = missing) from `dir`.
pub fn load_instance(schema: &Schema, dir: &Path) -> Result<Instance> {
    let mut inst = Instance::new_empty(schema.clone());
    for (ti, tdef) in schema.tables.iter().enumerate() {
        let path = dir.join(format!("{}.csv", tdef.name));
        let content = std::fs::read_to_string(&path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("reading {}: {e}", path.display()),
            ))
        })?;
        if content.trim().is_empty() {
            continue; // zero-row table, header optional
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(content.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            .clone();
        let mut pos = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            if pos.insert(h.to_string(), i).is_some() {
                return Err(Error::Parse(format!(
                    "table {:?}: duplicate CSV header {h:?}",
                    tdef.name
                )));
            }
        }
        for c in &tdef.columns {
            if !pos.contains_key(&c.name) {
                return Err(Error::Parse(format!(
                    "table {:?}: CSV header lacks column {:?}",
                    tdef.name, c.name
                )));
            }
        }
        if pos.len() != tdef.columns.len() {
            let extra: Vec<_> = pos
                .keys()
                .filter(|h| tdef.columns.iter().all(|c| &c.name != *h))
                .cloned()
                .collect();
            return Err(Error::Parse(format!(
                "table {:?}: CSV header has unknown columns {extra:?}",
                tdef.name
            )));
        }
        let mut rows = Vec::new();
        for (ri, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let mut cells = Vec::with_capacity(tdef.columns.len());
            for c in &tdef.columns {
                let raw = record.get(pos[&c.name]).unwrap_or("");
                cells.push(parse_cell(c.kind, raw, || {
                    format!("table {:?} column {:?} row {ri}", tdef.name, c.name)
                })?);
            }
            rows.push(cells);
        }
        inst.append_rows(ti, rows)?;
    }
    Ok(inst)
}

fn cell_to_field(cell: &Cell) -> String {
    match cell {
        Cell::Missing => String::new(),
        Cell::Num(x) => format!("{x}"),
        Cell::Cat(s) | Cell::Key(s) => s.clone(),
        Cell::Ts(t) => format!("{t}"),
    }
}

/// Write the instance back out as one CSV per table (inverse of [`load_instance`]).
pub fn write_csv_dir(inst: &Instance, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (ti, tdef) in inst.schema.tables.iter().enumerate() {
        let path = dir.join(format!("{}.csv", tdef.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(tdef.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        for r in 0..inst.rows(ti) {
            let rec: Vec<String> = (0..tdef.columns.len())
                .map(|c| cell_to_field(&inst.cell(ti, r, c)))
                .collect();
            w.write_record(&rec)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TableCheck {
    pub table: String,
    pub rows: usize,
    pub pk_unique: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DanglingCheck {
    pub relation: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MissingRatio {
    pub table: String,
    pub column: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tables: Vec<TableCheck>,
    pub dangling: Vec<DanglingCheck>,
    pub missing: Vec<MissingRatio>,
}

impl ValidationReport {
    pub fn total_dangling(&self) -> usize {
        self.dangling.iter().map(|d| d.count).sum()
    }
}

/// Report-only data quality checks; never fails on dirty data.
pub fn validate(inst: &Instance) -> ValidationReport {
    let schema = &inst.schema;
    let tables = schema
        .tables
        .iter()
        .enumerate()
        .map(|(ti, tdef)| {
            let pk_unique = match schema.pk_col(ti) {
                None => true,
                Some(pc) => match &inst.table(ti).columns[pc] {
                    ColumnData::Key(vals) => {
                        let mut seen = HashSet::new();
                        vals.iter()
                            .all(|v| v.as_ref().map_or(false, |k| seen.insert(k.clone())))
                    }
                    _ => false,
                },
            };
            TableCheck {
                table: tdef.name.clone(),
                rows: inst.rows(ti),
                pk_unique,
            }
        })
        .collect();
    let dangling = schema
        .relations()
        .iter()
        .map(|rel| DanglingCheck {
            relation: schema.relation_name(rel.id),
            count: inst.table(rel.fk_table).fk_dangling[rel.fk_col],
        })
        .collect();
    let mut missing = Vec::new();
    for (ti, tdef) in schema.tables.iter().enumerate() {
        for (ci, cdef) in tdef.columns.iter().enumerate() {
            if matches!(cdef.kind, ColumnKind::PrimaryKey | ColumnKind::ForeignKey) {
                continue;
            }
            let n = inst.rows(ti);
            let miss = (0..n)
                .filter(|&r| inst.table(ti).columns[ci].is_missing(r))
                .count();
            missing.push(MissingRatio {
                table: tdef.name.clone(),
                column: cdef.name.clone(),
                ratio: if n == 0 { 0.0 } else { miss as f64 / n as f64 },
            });
        }
    }
    ValidationReport {
        tables,
        dangling,
        missing,
    }
}

/// Render a compact human-readable validation summary.
pub fn render_report(rep: &ValidationReport) -> String {
    let mut out = String::new();
    for t in &rep.tables {
        let _ = writeln!(
            out,
            "table {}: {} rows, pk_unique={}",
            t.table, t.rows, t.pk_unique
        );
    }
    for d in &rep.dangling {
        let _ = writeln!(out, "relation {}: {} dangling", d.relation, d.count);
    }
    out
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn ecommerce_schema_json() -> &'static str {
        r#"{
          "tables": [
            {"name": "user", "columns": [
              {"name": "id", "kind": "primary_key"},
              {"name": "age", "kind": "numeric"},
              {"name": "country", "kind": "categorical"}
            ]},
            {"name": "product", "columns": [
              {"name": "id", "kind": "primary_key"},
              {"name": "price", "kind": "numeric"},
              {"name": "brand", "kind": "categorical"}
            ]},
            {"name": "purchase", "columns": [
              {"name": "id", "kind": "primary_key"},
              {"name": "user_id", "kind": "foreign_key", "fk_target": "user"},
              {"name": "product_id", "kind": "foreign_key", "fk_target": "product"},
              {"name": "amount", "kind": "numeric"},
              {"name": "ts", "kind": "timestamp"}
            ], "time_column": "ts"}
          ],
          "target_table": "user"
        }"#
    }

    pub fn ecommerce_schema() -> Schema {
        Schema::from_json(ecommerce_schema_json()).unwrap()
    }

    pub fn write_files(dir: &Path, files: &[(&str, &str)]) {
        for (name, content) in files {
            std::fs::write(dir.join(name), content).unwrap();
        }
    }

    pub fn small_ecommerce_files() -> Vec<(&'static str, &'static str)> {
        vec![
            (
                "user.csv",
                "id,age,country\nu1,34,de\nu2,27,fr\nu3,51,de\n",
            ),
            (
                "product.csv",
                "id,price,brand\np1,10,acme\np2,20,bolt\n",
            ),
            (
                "purchase.csv",
                "id,user_id,product_id,amount,ts\nb1,u1,p1,2,400\nb2,u1,p2,1,800\nb3,u2,p1,5,1500\n",
            ),
        ]
    }

    pub fn small_ecommerce_instance() -> Instance {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), &small_ecommerce_files());
        load_instance(&ecommerce_schema(), dir.path()).unwrap()
    }
}
