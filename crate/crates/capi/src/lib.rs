//! C ABI over the feature-synthesis engine: opaque database handles,
//! integer status codes, and a thread-local last-error message. All strings
//! are UTF-8; strings returned as `char*` are owned by the caller and must
//! be released with `juice_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use juice_core::exec::execute;
use juice_core::mpgnn::verify_reparam;
use juice_core::plan::{compile, enumerate_features, CutoffMode, ExecPlan, FeatureConfig};
use juice_core::rdb::{load_instance, Instance, Schema};
use juice_core::{Error, Result};

/// Status code returned by fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JuiceStatus {
    Ok = 0,
    /// Invalid input: bad paths, malformed files, inadmissible settings.
    UserError = 1,
    /// An internal invariant failed; report as a bug.
    InternalError = 2,
    /// A required pointer argument was null.
    NullArgument = 3,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 4,
}

/// An opened database: schema plus loaded tables.
pub struct JuiceDb {
    inst: Instance,
}

/// Verification outcome for the weighted-vs-parameter-free encoder check.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct JuiceVerifyReport {
    pub trials: usize,
    pub passes: usize,
    pub max_rel_err: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember_error(e: &Error) -> JuiceStatus {
    let msg = CString::new(e.to_string().replace('\0', " "))
        .unwrap_or_else(|_| CString::default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
    match e {
        Error::Internal(_) | Error::PlanMismatch(_) => JuiceStatus::InternalError,
        _ => JuiceStatus::UserError,
    }
}

fn remember_str(msg: &str, status: JuiceStatus) -> JuiceStatus {
    let msg = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
    status
}

/// Message for the most recent failure on this thread. Borrowed pointer,
/// valid until the next call into this library from the same thread; never
/// null (empty string when no error has occurred).
#[no_mangle]
pub extern "C" fn juice_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn juice_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn utf8_arg<'a>(p: *const c_char) -> std::result::Result<&'a str, JuiceStatus> {
    if p.is_null() {
        return Err(remember_str("null argument", JuiceStatus::NullArgument));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| remember_str("argument is not valid UTF-8", JuiceStatus::InvalidUtf8))
}

fn open_db(schema_path: &str, data_dir: &str) -> Result<JuiceDb> {
    let text = std::fs::read_to_string(Path::new(schema_path))?;
    let schema = Schema::from_json(&text)?;
    let inst = load_instance(&schema, Path::new(data_dir))?;
    Ok(JuiceDb { inst })
}

/// Open a database from a schema JSON file and a directory of per-table
/// CSV files. Returns null on failure; consult `juice_last_error`.
///
/// # Safety
/// `schema_path` and `data_dir` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn juice_db_open(
    schema_path: *const c_char,
    data_dir: *const c_char,
) -> *mut JuiceDb {
    let (Ok(schema_path), Ok(data_dir)) = (utf8_arg(schema_path), utf8_arg(data_dir)) else {
        return ptr::null_mut();
    };
    match open_db(schema_path, data_dir) {
        Ok(db) => Box::into_raw(Box::new(db)),
        Err(e) => {
            remember_error(&e);
            ptr::null_mut()
        }
    }
}

/// Release a database handle. Null is a no-op.
///
/// # Safety
/// `db` must have come from `juice_db_open` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn juice_db_free(db: *mut JuiceDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of tables in the schema, or -1 on a null handle.
///
/// # Safety
/// `db` must be a live handle from `juice_db_open`.
#[no_mangle]
pub unsafe extern "C" fn juice_db_table_count(db: *const JuiceDb) -> i64 {
    let Some(db) = db.as_ref() else {
        remember_str("null argument", JuiceStatus::NullArgument);
        return -1;
    };
    db.inst.schema.tables.len() as i64
}

/// Row count of a table by name, or -1 when the table does not exist.
///
/// # Safety
/// `db` must be a live handle; `table` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn juice_db_row_count(db: *const JuiceDb, table: *const c_char) -> i64 {
    let Some(db) = db.as_ref() else {
        remember_str("null argument", JuiceStatus::NullArgument);
        return -1;
    };
    let Ok(table) = utf8_arg(table) else {
        return -1;
    };
    match db.inst.schema.table_index(table) {
        Some(ti) => db.inst.rows(ti) as i64,
        None => {
            remember_str(&format!("unknown table {table:?}"), JuiceStatus::UserError);
            -1
        }
    }
}

fn default_plan(inst: &Instance, hops: usize) -> Result<ExecPlan> {
    let fc = FeatureConfig::default().without_cutoff_aggs();
    let specs = enumerate_features(&inst.schema, hops, &fc)?;
    compile(&inst.schema, specs, CutoffMode::None, true)
}

/// Number of feature columns the default configuration yields at the given
/// meta-path length, or -1 on failure.
///
/// # Safety
/// `db` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn juice_plan_feature_count(db: *const JuiceDb, hops: usize) -> i64 {
    let Some(db) = db.as_ref() else {
        remember_str("null argument", JuiceStatus::NullArgument);
        return -1;
    };
    match default_plan(&db.inst, hops) {
        Ok(plan) => plan.specs.len() as i64,
        Err(e) => {
            remember_error(&e);
            -1
        }
    }
}

fn string_out(s: String) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            remember_str("output contained a NUL byte", JuiceStatus::InternalError);
            ptr::null_mut()
        }
    }
}

/// Render the compiled plan as indented text. Caller frees the result with
/// `juice_string_free`; null on failure.
///
/// # Safety
/// `db` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn juice_explain_plan(db: *const JuiceDb, hops: usize) -> *mut c_char {
    let Some(db) = db.as_ref() else {
        remember_str("null argument", JuiceStatus::NullArgument);
        return ptr::null_mut();
    };
    match default_plan(&db.inst, hops) {
        Ok(plan) => string_out(plan.explain(&db.inst.schema)),
        Err(e) => {
            remember_error(&e);
            ptr::null_mut()
        }
    }
}

fn encode_csv(inst: &Instance, hops: usize) -> Result<String> {
    let plan = default_plan(inst, hops)?;
    let matrix = execute(&plan, inst, None)?;
    matrix.to_csv_string(None)
}

/// Compute the full feature matrix for every target row and return it as
/// CSV text (header row of canonical feature names first). Caller frees the
/// result with `juice_string_free`; null on failure.
///
/// # Safety
/// `db` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn juice_encode(db: *const JuiceDb, hops: usize) -> *mut c_char {
    let Some(db) = db.as_ref() else {
        remember_str("null argument", JuiceStatus::NullArgument);
        return ptr::null_mut();
    };
    match encode_csv(&db.inst, hops) {
        Ok(csv) => string_out(csv),
        Err(e) => {
            remember_error(&e);
            ptr::null_mut()
        }
    }
}

/// Run randomized weighted-vs-parameter-free encoder trials and fill `out`.
/// Returns `Ok` even when trials fail; inspect `passes` against `trials`.
///
/// # Safety
/// `out` must point to writable memory for one report.
#[no_mangle]
pub unsafe extern "C" fn juice_verify(
    trials: usize,
    seed: u64,
    out: *mut JuiceVerifyReport,
) -> JuiceStatus {
    if out.is_null() {
        return remember_str("null argument", JuiceStatus::NullArgument);
    }
    match verify_reparam(trials, seed) {
        Ok(report) => {
            *out = JuiceVerifyReport {
                trials: report.trials,
                passes: report.passes,
                max_rel_err: report.max_rel_err,
            };
            JuiceStatus::Ok
        }
        Err(e) => remember_error(&e),
    }
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn juice_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn toy_db_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("schema.json"),
            r#"{
  "target_table": "user",
  "tables": [
    {"name": "user", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "age", "kind": "numeric"}
    ]},
    {"name": "order", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "user_id", "kind": "foreign_key", "fk_target": "user"},
      {"name": "amount", "kind": "numeric"}
    ]}
  ]
}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("user.csv"), "id,age\nu1,30\nu2,40\n").unwrap();
        std::fs::write(
            dir.path().join("order.csv"),
            "id,user_id,amount\no1,u1,5\no2,u1,7\no3,u2,1\n",
        )
        .unwrap();
        dir
    }

    fn open(dir: &tempfile::TempDir) -> *mut JuiceDb {
        let schema = CString::new(dir.path().join("schema.json").to_str().unwrap()).unwrap();
        let data = CString::new(dir.path().to_str().unwrap()).unwrap();
        unsafe { juice_db_open(schema.as_ptr(), data.as_ptr()) }
    }

    #[test]
    fn open_query_encode_free() {
        let dir = toy_db_dir();
        let db = open(&dir);
        assert!(!db.is_null());
        unsafe {
            assert_eq!(juice_db_table_count(db), 2);
            let user = CString::new("user").unwrap();
            assert_eq!(juice_db_row_count(db, user.as_ptr()), 2);
            let nope = CString::new("nope").unwrap();
            assert_eq!(juice_db_row_count(db, nope.as_ptr()), -1);
            let msg = CStr::from_ptr(juice_last_error()).to_str().unwrap();
            assert!(msg.contains("nope"), "{msg}");

            let n = juice_plan_feature_count(db, 1);
            assert!(n > 0, "{n}");
            let csv = juice_encode(db, 1);
            assert!(!csv.is_null());
            let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
            juice_string_free(csv);
            let mut lines = text.lines();
            let header = lines.next().unwrap();
            assert!(header.contains("user.age"), "{header}");
            assert!(header.contains("amount"), "{header}");
            assert_eq!(lines.count(), 2);

            let explain = juice_explain_plan(db, 1);
            assert!(!explain.is_null());
            let plan_text = CStr::from_ptr(explain).to_str().unwrap().to_owned();
            juice_string_free(explain);
            assert!(plan_text.contains("ProjectTarget"), "{plan_text}");
            juice_db_free(db);
        }
    }

    #[test]
    fn open_failures_set_the_error_message() {
        let dir = tempfile::tempdir().unwrap();
        let schema = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
        let data = CString::new(dir.path().to_str().unwrap()).unwrap();
        let db = unsafe { juice_db_open(schema.as_ptr(), data.as_ptr()) };
        assert!(db.is_null());
        let msg = unsafe { CStr::from_ptr(juice_last_error()).to_str().unwrap() };
        assert!(!msg.is_empty());
        let null_db = unsafe { juice_db_open(ptr::null(), data.as_ptr()) };
        assert!(null_db.is_null());
    }

    #[test]
    fn verify_fills_the_report() {
        let mut out = JuiceVerifyReport {
            trials: 0,
            passes: 0,
            max_rel_err: -1.0,
        };
        let status = unsafe { juice_verify(3, 7, &mut out) };
        assert_eq!(status, JuiceStatus::Ok);
        assert_eq!(out.trials, 3);
        assert_eq!(out.passes, 3);
        assert!(out.max_rel_err >= 0.0);
        assert_eq!(
            unsafe { juice_verify(1, 0, ptr::null_mut()) },
            JuiceStatus::NullArgument
        );
    }

    #[test]
    fn version_is_non_empty() {
        let v = unsafe { CStr::from_ptr(juice_version()).to_str().unwrap() };
        assert!(!v.is_empty());
    }
}
