//! Exercises the C surface through the exported functions: handle
//! lifecycle, query rendering, update flow, status codes, and error
//! reporting.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use triplefed_ffi::*;

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_str().unwrap().to_owned();
    tfd_string_free(ptr);
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tfd_last_error()).to_str().unwrap().to_owned() }
}

const DATA: &str = "\
Prof.Williams worksFor Stanford-CS .
Prof.James worksFor Stanford-CS .
Lisa advisor Prof.Williams .
Lisa advisor Prof.James .
Lisa gradFrom MIT .
John gradFrom MIT .
Stanford-CS subOrgOf Stanford .
Stanford-ENG subOrgOf Stanford .
MIT-CS subOrgOf MIT .
Ben memberOf Stanford-CS .
Prof.James memberOf Stanford-ENG .
John memberOf Stanford-ENG .
Peter memberOf MIT-CS .
MIT type university .
MIT-CS type department .
";

#[test]
fn full_session_through_the_c_surface() {
    unsafe {
        let mut engine: *mut TfdEngine = ptr::null_mut();
        assert_eq!(tfd_engine_new(4, &mut engine), TfdStatus::Ok);
        assert!(!engine.is_null());

        let triples = CString::new(DATA).unwrap();
        let mut loaded = 0u64;
        assert_eq!(tfd_engine_load(engine, triples.as_ptr(), &mut loaded), TfdStatus::Ok);
        assert_eq!(loaded, 15);

        let query =
            CString::new("SELECT ?s ?u WHERE { ?s memberOf ?d . ?d subOrgOf ?u }").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_query(engine, query.as_ptr(), &mut out), TfdStatus::Ok);
        let rendered = take_string(out);
        assert_eq!(
            rendered,
            "semijoin\n?s\t?u\nBen\tStanford\nJohn\tStanford\nPeter\tMIT\nProf.James\tStanford\n"
        );

        let update = CString::new("+ Mary memberOf MIT-CS").unwrap();
        let mut applied = 0u64;
        assert_eq!(tfd_engine_update(engine, update.as_ptr(), &mut applied), TfdStatus::Ok);
        assert_eq!(applied, 1);

        let mut out2: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_query(engine, query.as_ptr(), &mut out2), TfdStatus::Ok);
        let rendered2 = take_string(out2);
        assert!(rendered2.contains("Mary\tMIT\n"), "updated row missing: {rendered2}");

        let mut ratio = -1.0f64;
        assert_eq!(tfd_engine_replication_ratio(engine, &mut ratio), TfdStatus::Ok);
        assert_eq!(ratio, 0.0, "no redistribution happened yet");

        let mut metrics: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_metrics(engine, &mut metrics), TfdStatus::Ok);
        let metrics = take_string(metrics);
        assert!(metrics.contains("main_triples 16"), "metrics text: {metrics}");

        tfd_engine_free(engine);
    }
}

#[test]
fn config_text_drives_the_engine() {
    unsafe {
        let cfg = CString::new("n_workers = 2\nfreq_threshold = 1\nseed = 7\n").unwrap();
        let mut engine: *mut TfdEngine = ptr::null_mut();
        assert_eq!(tfd_engine_with_config(cfg.as_ptr(), &mut engine), TfdStatus::Ok);

        let triples = CString::new(DATA).unwrap();
        assert_eq!(tfd_engine_load(engine, triples.as_ptr(), ptr::null_mut()), TfdStatus::Ok);

        // freq_threshold = 1: the second identical query crosses and runs
        // parallel after redistribution.
        let query =
            CString::new("SELECT ?s ?u WHERE { ?s memberOf ?d . ?d subOrgOf ?u }").unwrap();
        let mut first: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_query(engine, query.as_ptr(), &mut first), TfdStatus::Ok);
        let first = take_string(first);
        let mut second: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_query(engine, query.as_ptr(), &mut second), TfdStatus::Ok);
        let second = take_string(second);

        assert!(first.starts_with("semijoin\n"), "first run: {first}");
        assert!(second.starts_with("parallel\n"), "second run: {second}");
        assert_eq!(
            first.lines().skip(1).collect::<Vec<_>>(),
            second.lines().skip(1).collect::<Vec<_>>(),
            "mode flip must not change the rows"
        );

        let mut ratio = 0.0f64;
        assert_eq!(tfd_engine_replication_ratio(engine, &mut ratio), TfdStatus::Ok);
        assert!(ratio > 0.0);

        tfd_engine_free(engine);
    }
}

#[test]
fn status_codes_and_error_messages() {
    unsafe {
        // Null out-params are rejected without crashing.
        assert_eq!(tfd_engine_new(2, ptr::null_mut()), TfdStatus::NullArg);
        assert_eq!(last_error(), "out is null");

        let mut engine: *mut TfdEngine = ptr::null_mut();
        assert_eq!(tfd_engine_new(0, &mut engine), TfdStatus::Runtime);
        assert_eq!(tfd_engine_new(2, &mut engine), TfdStatus::Ok);

        // Null and non-UTF-8 string arguments.
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(tfd_engine_query(engine, ptr::null(), &mut out), TfdStatus::NullArg);
        let bad = [0xffu8, 0xfe, 0x00];
        assert_eq!(
            tfd_engine_query(engine, bad.as_ptr() as *const c_char, &mut out),
            TfdStatus::Utf8
        );
        assert_eq!(last_error(), "query is not valid UTF-8");

        // Engine errors surface as Runtime with a readable message.
        let broken = CString::new("SELECT ?x WHERE { ?x broken }").unwrap();
        assert_eq!(tfd_engine_query(engine, broken.as_ptr(), &mut out), TfdStatus::Runtime);
        assert!(!last_error().is_empty());

        // Null engine pointers are rejected.
        assert_eq!(tfd_engine_query(ptr::null_mut(), broken.as_ptr(), &mut out), TfdStatus::NullArg);

        // Freeing null is a no-op; freeing a live engine works.
        tfd_engine_free(ptr::null_mut());
        tfd_engine_free(engine);
    }
}

#[test]
fn version_is_a_static_string() {
    unsafe {
        let v = CStr::from_ptr(tfd_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
