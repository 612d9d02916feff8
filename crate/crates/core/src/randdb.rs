//! Random schema and instance generators for property tests. Schemas are
//! always connected to the target through a spanning tree of foreign keys;
//! extra and self-referencing keys are sprinkled on top so traversal code
//! sees cycles and loops.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rdb::{Cell, ColumnDef, ColumnKind, Instance, Schema, SchemaDoc, TableDef};

#[derive(Debug, Clone)]
pub struct Params {
    pub min_tables: usize,
    pub max_tables: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Extra value columns per table beyond the guaranteed numeric one.
    pub max_extra_cols: usize,
    /// Chance that a table gets a second, freely targeted foreign key.
    pub extra_fk_prob: f64,
    /// Chance that a table references itself.
    pub self_fk_prob: f64,
    /// Chance that a table is temporal (has a time column).
    pub time_prob: f64,
    pub p_missing: f64,
    pub p_dangling: f64,
}

impl Default for Params {
    fn default() -> Params {
        Params {
            min_tables: 2,
            max_tables: 5,
            min_rows: 3,
            max_rows: 40,
            max_extra_cols: 3,
            extra_fk_prob: 0.35,
            self_fk_prob: 0.15,
            time_prob: 0.4,
            p_missing: 0.08,
            p_dangling: 0.05,
        }
    }
}

pub fn random_schema(rng: &mut ChaCha8Rng, p: &Params) -> Schema {
    let n_tables = rng.gen_range(p.min_tables..=p.max_tables);
    let mut tables = Vec::with_capacity(n_tables);
    for ti in 0..n_tables {
        let mut columns = vec![ColumnDef {
            name: "id".into(),
            kind: ColumnKind::PrimaryKey,
            fk_target: None,
        }];
        let mut fk_idx = 0;
        if ti > 0 {
            let parent = rng.gen_range(0..ti);
            columns.push(ColumnDef {
                name: format!("fk{fk_idx}"),
                kind: ColumnKind::ForeignKey,
                fk_target: Some(format!("t{parent}")),
            });
            fk_idx += 1;
        }
        if n_tables > 1 && rng.gen_bool(p.extra_fk_prob) {
            let other = rng.gen_range(0..n_tables);
            columns.push(ColumnDef {
                name: format!("fk{fk_idx}"),
                kind: ColumnKind::ForeignKey,
                fk_target: Some(format!("t{other}")),
            });
            fk_idx += 1;
        }
        if rng.gen_bool(p.self_fk_prob) {
            columns.push(ColumnDef {
                name: format!("fk{fk_idx}"),
                kind: ColumnKind::ForeignKey,
                fk_target: Some(format!("t{ti}")),
            });
        }
        columns.push(ColumnDef {
            name: "v0".into(),
            kind: ColumnKind::Numeric,
            fk_target: None,
        });
        for ei in 0..rng.gen_range(0..=p.max_extra_cols) {
            let kind = if rng.gen_bool(0.5) {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            };
            columns.push(ColumnDef {
                name: format!("x{ei}"),
                kind,
                fk_target: None,
            });
        }
        let temporal = rng.gen_bool(p.time_prob);
        if temporal {
            columns.push(ColumnDef {
                name: "ts".into(),
                kind: ColumnKind::Timestamp,
                fk_target: None,
            });
        }
        tables.push(TableDef {
            name: format!("t{ti}"),
            columns,
            time_column: temporal.then(|| "ts".into()),
        });
    }
    let doc = SchemaDoc {
        tables,
        target_table: "t0".into(),
    };
    Schema::from_doc(doc).expect("generated schema must validate")
}

pub fn random_instance(rng: &mut ChaCha8Rng, p: &Params) -> Instance {
    let schema = random_schema(rng, p);
    populate(&schema, rng, p)
}

/// Fill every table of `schema` with random rows. Foreign keys point at real
/// primary keys except for a small dangling/missing fraction.
pub fn populate(schema: &Schema, rng: &mut ChaCha8Rng, p: &Params) -> Instance {
    let n_tables = schema.tables.len();
    let counts: Vec<usize> = (0..n_tables)
        .map(|_| rng.gen_range(p.min_rows..=p.max_rows))
        .collect();
    let mut inst = Instance::new_empty(schema.clone());
    for ti in 0..n_tables {
        let mut rows = Vec::with_capacity(counts[ti]);
        for ri in 0..counts[ti] {
            let mut row = Vec::with_capacity(schema.tables[ti].columns.len());
            for col in &schema.tables[ti].columns {
                let cell = match col.kind {
                    ColumnKind::PrimaryKey => Cell::Key(format!("t{ti}_r{ri}")),
                    ColumnKind::ForeignKey => {
                        if rng.gen_bool(p.p_missing) {
                            Cell::Missing
                        } else if rng.gen_bool(p.p_dangling) {
                            Cell::Key("zz_nowhere".into())
                        } else {
                            let dest = schema
                                .table_index(col.fk_target.as_deref().unwrap())
                                .unwrap();
                            Cell::Key(format!("t{dest}_r{}", rng.gen_range(0..counts[dest])))
                        }
                    }
                    ColumnKind::Numeric => {
                        if rng.gen_bool(p.p_missing) {
                            Cell::Missing
                        } else {
                            Cell::Num((rng.gen::<f64>() * 200.0 - 100.0).round() / 4.0)
                        }
                    }
                    ColumnKind::Categorical => {
                        if rng.gen_bool(p.p_missing) {
                            Cell::Missing
                        } else {
                            Cell::Cat(format!("c{}", rng.gen_range(0..8)))
                        }
                    }
                    ColumnKind::Timestamp => {
                        if rng.gen_bool(p.p_missing) {
                            Cell::Missing
                        } else {
                            Cell::Ts(rng.gen_range(0..1_000_000))
                        }
                    }
                };
                row.push(cell);
            }
            rows.push(row);
        }
        inst.append_rows(ti, rows).expect("generated rows are valid");
    }
    inst
}

/// Physically remove every row of a temporal table whose timestamp is absent
/// or later than `cutoff`. Mirrors the visibility rule traversal applies
/// virtually, so traversing the filtered instance must match traversing the
/// original under the cutoff.
pub fn drop_rows_after(inst: &Instance, cutoff: i64) -> Instance {
    let schema = inst.schema.clone();
    let mut out = Instance::new_empty(schema.clone());
    for ti in 0..schema.tables.len() {
        let temporal = schema.time_col(ti).is_some();
        let mut rows = Vec::new();
        for ri in 0..inst.rows(ti) {
            if temporal && !inst.time_value(ti, ri).is_some_and(|t| t <= cutoff) {
                continue;
            }
            let row: Vec<Cell> = (0..schema.tables[ti].columns.len())
                .map(|ci| inst.cell(ti, ri, ci))
                .collect();
            rows.push(row);
        }
        out.append_rows(ti, rows).expect("copied rows are valid");
    }
    out
}
