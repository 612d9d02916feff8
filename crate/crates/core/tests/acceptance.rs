//! Acceptance gate: one test per shipping criterion, each printing a single
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//! Tolerances and budgets are pinned here and must not be loosened.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use juice_core::exec::{execute, FeatureColumnData, FeatureMatrix};
use juice_core::icl::{run_predict, TaskSpec};
use juice_core::mpgnn::{derive_seed, verify_reparam};
use juice_core::plan::{
    compile, enumerate_features, ChainMode, CutoffMode, FeatureConfig, FeatureSpec,
};
use juice_core::randdb::{random_instance, Params};
use juice_core::rdb::{load_instance, Cell, ColumnKind, Instance, Schema};
use juice_core::relgraph::eval_reference;
use juice_core::synthlab::{
    affine_recover, gen_dataset, run_ablation, run_rate_experiment, AblationMode, AblationParams,
    FeatureDist, PiKind, RateParams, SynthConfig,
};

fn verdict(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../testdata/ecommerce")
}

fn default_specs(schema: &Schema, cutoff_active: bool) -> Vec<FeatureSpec> {
    let mut fc = FeatureConfig::default();
    if !cutoff_active {
        fc = fc.without_cutoff_aggs();
    }
    enumerate_features(schema, 2, &fc).unwrap()
}

fn matrix_csv(m: &FeatureMatrix) -> String {
    m.to_csv_string(None).unwrap()
}

/// Weighted and parameter-free meta-path encodings agree after per-column
/// standardization, across randomized databases, paths, and weights.
#[test]
fn c01_weighted_and_free_encodings_agree() {
    let t0 = Instant::now();
    let report = verify_reparam(50, 0).unwrap();
    let elapsed = t0.elapsed();
    verdict(
        "weight reparameterization (50 trials, 1e-9)",
        report.passes == report.trials && elapsed < Duration::from_secs(10),
        &format!(
            "{}/{} trials, max rel err {:.3e}, max z err {:.3e}, {:.2?}",
            report.passes, report.trials, report.max_rel_err, report.max_z_err, elapsed
        ),
    );
}

/// The plan executor reproduces the brute-force neighborhood walk on every
/// cell of every feature matrix.
#[test]
fn c02_executor_matches_bruteforce_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xACCE97, 2));
    let params = Params {
        max_tables: 5,
        max_rows: 200,
        ..Params::default()
    };
    let mut cells = 0usize;
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let inst = random_instance(&mut rng, &params);
        let schema = inst.schema.clone();
        let specs = default_specs(&schema, false);
        let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
        let m = execute(&plan, &inst, None).unwrap();
        for (ci, spec) in specs.iter().enumerate() {
            for row in 0..m.n_rows {
                let want =
                    eval_reference(&inst, &spec.path, spec.source_col, &spec.chain, row, None)
                        .unwrap();
                let got = match &m.columns[ci].data {
                    FeatureColumnData::Num(v) => v[row].map(Cell::Num).unwrap_or(Cell::Missing),
                    FeatureColumnData::Cat(v) => {
                        v[row].clone().map(Cell::Cat).unwrap_or(Cell::Missing)
                    }
                };
                cells += 1;
                match (&want, &got) {
                    (Cell::Num(a), Cell::Num(b)) => {
                        let rel = (a - b).abs() / a.abs().max(1.0);
                        worst = worst.max(rel);
                        assert!(
                            rel <= 1e-9,
                            "trial {trial} spec {} row {row}: {a} vs {b}",
                            m.columns[ci].name
                        );
                    }
                    (Cell::Ts(a), Cell::Num(b)) => assert_eq!(*a as f64, *b),
                    _ => assert_eq!(
                        want, got,
                        "trial {trial} spec {} row {row}",
                        m.columns[ci].name
                    ),
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        "executor vs neighborhood oracle (50 instances)",
        elapsed < Duration::from_secs(60),
        &format!("{cells} cells compared, worst rel err {worst:.3e}, {elapsed:.2?}"),
    );
}

/// Rows behind the temporal horizon never reach any feature value: injecting
/// post-cutoff rows into every temporal table leaves the matrix byte-equal.
#[test]
fn c03_posthorizon_rows_never_leak() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xACCE97, 3));
    let params = Params {
        time_prob: 1.0,
        ..Params::default()
    };
    let cutoff = 500_000i64;
    let mut injected_total = 0usize;
    for trial in 0..20 {
        let inst = random_instance(&mut rng, &params);
        let schema = inst.schema.clone();
        let specs = default_specs(&schema, true);
        let plan = compile(&schema, specs, CutoffMode::Global(cutoff), true).unwrap();
        let n0 = inst.rows(schema.target);
        let before = matrix_csv(&execute(&plan, &inst, None).unwrap());

        let mut poisoned = inst.clone();
        for ti in 0..schema.tables.len() {
            if schema.time_col(ti).is_none() {
                continue;
            }
            let rows: Vec<Vec<Cell>> = (0..5)
                .map(|k| {
                    schema.tables[ti]
                        .columns
                        .iter()
                        .map(|col| match col.kind {
                            ColumnKind::PrimaryKey => Cell::Key(format!("inj_{trial}_{ti}_{k}")),
                            ColumnKind::ForeignKey => {
                                let dest = schema
                                    .table_index(col.fk_target.as_deref().unwrap())
                                    .unwrap();
                                Cell::Key(format!("t{dest}_r0"))
                            }
                            ColumnKind::Numeric => Cell::Num(99_999.0),
                            ColumnKind::Categorical => Cell::Cat("poison".into()),
                            ColumnKind::Timestamp => Cell::Ts(cutoff + 1 + k as i64),
                        })
                        .collect()
                })
                .collect();
            injected_total += rows.len();
            poisoned.append_rows(ti, rows).unwrap();
        }
        let after_full = execute(&plan, &poisoned, None).unwrap();
        let after = matrix_csv(&after_full.select_rows(&(0..n0).collect::<Vec<_>>()));
        assert_eq!(before, after, "trial {trial}: post-cutoff rows leaked");
    }
    let elapsed = t0.elapsed();
    verdict(
        "temporal no-leakage (20 instances)",
        true,
        &format!("{injected_total} rows injected, zero diffs, {elapsed:.2?}"),
    );
}

/// Each output column depends on exactly its declared source column:
/// perturbing one source changes no other column.
#[test]
fn c04_columns_depend_only_on_their_source() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xACCE97, 4));
    let params = Params::default();
    let mut checked_cols = 0usize;
    for trial in 0..10 {
        let inst = random_instance(&mut rng, &params);
        let schema = inst.schema.clone();
        let specs = default_specs(&schema, false);
        let plan = compile(&schema, specs.clone(), CutoffMode::None, true).unwrap();
        let manifest = plan.manifest(&schema);
        let before = execute(&plan, &inst, None).unwrap();

        // pick a numeric source column that at least one feature reads
        let numeric_sources: Vec<(usize, usize)> = {
            let mut v: Vec<(usize, usize)> = specs
                .iter()
                .map(|s| (s.source_table, s.source_col))
                .filter(|&(t, c)| schema.column_kind(t, c) == ColumnKind::Numeric)
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (pt, pc) = numeric_sources[rng.gen_range(0..numeric_sources.len())];
        let source_name = format!("{}.{}", schema.table_name(pt), schema.column_name(pt, pc));

        // rebuild the instance with one source column affinely remapped
        let mut perturbed = Instance::new_empty(schema.clone());
        for ti in 0..schema.tables.len() {
            let rows: Vec<Vec<Cell>> = (0..inst.rows(ti))
                .map(|ri| {
                    (0..schema.tables[ti].columns.len())
                        .map(|ci| match inst.cell(ti, ri, ci) {
                            Cell::Num(v) if ti == pt && ci == pc => Cell::Num(3.0 * v - 7.0),
                            other => other,
                        })
                        .collect()
                })
                .collect();
            perturbed.append_rows(ti, rows).unwrap();
        }
        let after = execute(&plan, &perturbed, None).unwrap();

        for (ci, entry) in manifest.iter().enumerate() {
            if entry.source == source_name {
                continue; // declared dependence; free to change
            }
            checked_cols += 1;
            assert_eq!(
                before.columns[ci], after.columns[ci],
                "trial {trial}: column {} changed when {} was perturbed",
                entry.name, source_name
            );
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        "per-column source independence (10 pairs)",
        true,
        &format!("{checked_cols} unrelated columns unchanged, {elapsed:.2?}"),
    );
}

/// Specs sharing a meta-path share its join chain in the compiled plan, and
/// disabling aggregation pushdown does not change any value.
#[test]
fn c05_shared_paths_compile_once() {
    let t0 = Instant::now();
    let dir = toy_dir();
    let schema =
        Schema::from_json(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
    let inst = load_instance(&schema, &dir).unwrap();
    let fc = FeatureConfig {
        chain_mode: ChainMode::Full,
        ..FeatureConfig::default()
    }
    .without_cutoff_aggs();
    let two_hop: Vec<FeatureSpec> = enumerate_features(&schema, 2, &fc)
        .unwrap()
        .into_iter()
        .filter(|s| s.path.len() == 2)
        .take(10)
        .collect();
    assert_eq!(two_hop.len(), 10, "need ten specs on the shared path");
    assert!(
        two_hop.windows(2).all(|w| w[0].path == w[1].path),
        "specs must share one path"
    );

    let single = compile(&schema, vec![two_hop[0].clone()], CutoffMode::None, true).unwrap();
    let many = compile(&schema, two_hop.clone(), CutoffMode::None, true).unwrap();
    let joins_equal = many.join_count() == single.join_count();

    let off = compile(&schema, two_hop, CutoffMode::None, false).unwrap();
    let on_csv = matrix_csv(&execute(&many, &inst, None).unwrap());
    let off_csv = matrix_csv(&execute(&off, &inst, None).unwrap());
    let elapsed = t0.elapsed();
    verdict(
        "plan economy (10 specs, one 2-hop path)",
        joins_equal && on_csv == off_csv,
        &format!(
            "join count {} (single spec {}), pushdown on/off {}identical, {elapsed:.2?}",
            many.join_count(),
            single.join_count(),
            if on_csv == off_csv { "" } else { "NOT " }
        ),
    );
}

/// Mixing columns through an invertible dense encoder hurts the aligned
/// nearest-neighbor decoder only when uninformative columns are present.
#[test]
fn c06_mixing_hurts_only_with_noise_columns() {
    let t0 = Instant::now();
    let uninf = run_ablation(&AblationParams {
        mode: AblationMode::Uninformative,
        seed: 0,
        ..AblationParams::default()
    })
    .unwrap();
    let inf = run_ablation(&AblationParams {
        mode: AblationMode::Informative,
        seed: 0,
        ..AblationParams::default()
    })
    .unwrap();
    let gap0 = uninf.points.first().unwrap().raw_mean - uninf.points.first().unwrap().encoded_mean;
    let gap_max = uninf.points.last().unwrap().raw_mean - uninf.points.last().unwrap().encoded_mean;
    let worst_inf = inf
        .points
        .iter()
        .map(|p| (p.raw_mean - p.encoded_mean).abs())
        .fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    verdict(
        "encoder ablation (100 paired trials per mode)",
        gap0.abs() < 0.03
            && gap_max > 0.05
            && worst_inf < 0.03
            && elapsed < Duration::from_secs(300),
        &format!(
            "noise mode: gap {gap0:+.4} at 0 added, {gap_max:+.4} at max; informative mode worst |gap| {worst_inf:.4}; {elapsed:.2?}"
        ),
    );
}

/// Nearest-neighbor error decays at the informative-dimension rate on
/// aligned features and at the ambient rate after bi-Lipschitz mixing.
#[test]
fn c07_restricted_nn_converges_faster() {
    let t0 = Instant::now();
    let report = run_rate_experiment(&RateParams {
        seed: 0,
        ..RateParams::default()
    })
    .unwrap();
    let s = report.summary();
    let elapsed = t0.elapsed();
    verdict(
        "nearest-neighbor rate contrast (1 informative of 4 dims)",
        (s.slope_restricted + 2.0).abs() < 0.5
            && s.margin > 0.3
            && elapsed < Duration::from_secs(300),
        &format!(
            "restricted slope {:.3}, encoded slope {:.3}, margin {:.3}, {elapsed:.2?}",
            s.slope_restricted, s.slope_encoded, s.margin
        ),
    );
}

/// With more samples than informative columns, a least-squares read-out over
/// the true informative set reproduces affine labels exactly.
#[test]
fn c08_affine_teacher_recovered_exactly() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let seed = derive_seed(0xACCE97, 800 + trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(2..=10);
        let kappa = rng.gen_range(1..=d);
        let ds = gen_dataset(&SynthConfig {
            n: kappa + rng.gen_range(20..=80),
            d,
            kappa,
            pi: PiKind::Affine,
            dist: if rng.gen_bool(0.5) {
                FeatureDist::Normal
            } else {
                FeatureDist::Uniform
            },
            noise: 0.0,
            seed,
        })
        .unwrap();
        let res = affine_recover(&ds).unwrap();
        worst = worst.max(res);
        assert!(res < 1e-9, "trial {trial}: residual {res}");
    }
    let elapsed = t0.elapsed();
    verdict(
        "exact affine recovery (20 trials)",
        true,
        &format!("worst residual {worst:.3e}, {elapsed:.2?}"),
    );
}

/// The bundled toy task is solved well above chance by the end-to-end
/// pipeline, both in-process and through the command-line interface.
#[test]
fn c09_bundled_task_predicts_well() {
    let t0 = Instant::now();
    let dir = toy_dir();
    let schema =
        Schema::from_json(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
    let inst = load_instance(&schema, &dir).unwrap();
    let task = TaskSpec::from_json(&std::fs::read_to_string(dir.join("task.json")).unwrap())
        .unwrap();
    let label_col = schema.column_index(schema.target, &task.label).unwrap();
    let fc = FeatureConfig::default().without_cutoff_aggs();
    let specs: Vec<FeatureSpec> = enumerate_features(&schema, 2, &fc)
        .unwrap()
        .into_iter()
        .filter(|s| !(s.source_table == schema.target && s.source_col == label_col))
        .collect();
    let plan = compile(&schema, specs, CutoffMode::None, true).unwrap();
    let report = run_predict(&inst, &plan, &task, 10_000, 0, 15).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_juice"))
        .args([
            "predict",
            "--schema",
            dir.join("schema.json").to_str().unwrap(),
            "--data-dir",
            dir.to_str().unwrap(),
            "--task",
            dir.join("task.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cli_report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cli_auc = cli_report["value"].as_f64().unwrap();
    let elapsed = t0.elapsed();
    verdict(
        "end-to-end toy-task prediction",
        report.metric == "auc"
            && report.value > 0.8
            && (cli_auc - report.value).abs() < 1e-12
            && elapsed < Duration::from_secs(30),
        &format!(
            "library auc {:.4}, command-line auc {cli_auc:.4}, {elapsed:.2?}",
            report.value
        ),
    );
}

/// Every command yields byte-identical artifacts across reruns and across
/// thread counts.
#[test]
fn c10_all_commands_deterministic() {
    let t0 = Instant::now();
    let dir = toy_dir();
    let schema = dir.join("schema.json");
    let schema = schema.to_str().unwrap();
    let data = dir.to_str().unwrap();
    let task = dir.join("task.json");
    let task = task.to_str().unwrap();

    let run = |args: &[&str], threads: &str| -> (String, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_juice"))
            .args(args)
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "juice {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            String::from_utf8(out.stdout).unwrap(),
            String::from_utf8(out.stderr).unwrap(),
        )
    };
    let read_dir_bytes = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };

    let mut checked = 0usize;
    // stdout-only commands
    for args in [
        vec!["plan", "--schema", schema],
        vec!["predict", "--schema", schema, "--data-dir", data, "--task", task],
        vec!["verify", "--trials", "5", "--seed", "3"],
    ] {
        let a = run(&args, "1");
        let b = run(&args, "1");
        let c = run(&args, "2");
        assert_eq!(a, b, "rerun differs: {args:?}");
        assert_eq!(a, c, "thread count changed output: {args:?}");
        checked += 1;
    }
    // commands with file artifacts
    let tmp = tempfile::tempdir().unwrap();
    for (sub, extra) in [
        ("encode", vec!["--data-dir", data, "--task", task, "--schema", schema]),
        ("simulate", vec!["--mode", "uninformative", "--trials", "4"]),
        ("simulate", vec!["--mode", "rates", "--trials", "2"]),
    ] {
        let mut artifacts = Vec::new();
        for (i, threads) in ["1", "1", "2"].iter().enumerate() {
            let out = tmp
                .path()
                .join(format!("{sub}_{checked}_{i}"))
                .to_str()
                .unwrap()
                .to_owned();
            let mut args = vec![sub];
            args.extend(extra.iter().copied());
            args.extend(["--out", &out, "--seed", "9"]);
            let streams = run(&args, threads);
            artifacts.push((streams, read_dir_bytes(Path::new(&out))));
        }
        assert_eq!(artifacts[0], artifacts[1], "{sub} rerun differs");
        assert_eq!(artifacts[0], artifacts[2], "{sub} differs across threads");
        checked += 1;
    }
    let elapsed = t0.elapsed();
    verdict(
        "determinism of every command",
        true,
        &format!("{checked} commands byte-stable across reruns and thread counts, {elapsed:.2?}"),
    );
}
