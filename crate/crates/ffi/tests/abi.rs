use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use xbo::harness::Catalog;
use xbo_ffi::*;

fn params(p: &xbo::EggParameters) -> XboEggParameters {
    let [mass_g, lambda, ywr, t_egg_c, t_yolk_c, altitude_m] = p.to_array();
    XboEggParameters { mass_g, lambda, ywr, t_egg_c, t_yolk_c, altitude_m }
}

fn take_string(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { xbo_string_free(s) };
    out
}

fn last_error() -> String {
    let p = xbo_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    let mut bp = 0.0;
    assert_eq!(unsafe { xbo_boiling_point_c(1000.0, &mut bp) }, XboStatus::Ok);
    assert!((bp - xbo::egg::boiling_point_c(1000.0).unwrap()).abs() < 1e-12);

    assert_eq!(unsafe { xbo_boiling_point_c(-5.0, &mut bp) }, XboStatus::OutOfDomain);
    assert!(last_error().contains("altitude"));

    let cat = Catalog::shipped();
    let chicken = cat.get("chicken").unwrap();
    let mut t = 0.0;
    assert_eq!(unsafe { xbo_cooking_time_s(&params(&chicken.optimal), &mut t) }, XboStatus::Ok);
    let mut g = XboGrade::Overcooked;
    assert_eq!(unsafe { xbo_classify(t, &mut g) }, XboStatus::Ok);
    assert_eq!(g, XboGrade::Perfect);

    assert_eq!(unsafe { xbo_classify(-1.0, &mut g) }, XboStatus::InvalidArgument);
    assert_eq!(unsafe { xbo_cooking_time_s(ptr::null(), &mut t) }, XboStatus::NullPointer);

    let hot = XboEggParameters { ywr: 0.4, t_egg_c: 35.0, t_yolk_c: 60.0, altitude_m: 0.0, ..params(&chicken.optimal) };
    assert_eq!(unsafe { xbo_cooking_time_s(&hot, &mut t) }, XboStatus::Uncookable);
}

#[test]
fn catalog_from_json_rejects_bad_input() {
    let mut cat = ptr::null_mut();
    let bad = CString::new("[{\"id\": 1}").unwrap();
    assert_eq!(unsafe { xbo_catalog_from_json(bad.as_ptr(), &mut cat) }, XboStatus::InvalidScenarios);
    assert!(cat.is_null());

    let good = CString::new(xbo::harness::SHIPPED_SCENARIOS).unwrap();
    assert_eq!(unsafe { xbo_catalog_from_json(good.as_ptr(), &mut cat) }, XboStatus::Ok);
    unsafe { xbo_catalog_free(cat) };
    unsafe { xbo_catalog_free(ptr::null_mut()) };
}

#[test]
fn session_runs_to_completion_with_optimal_settings() {
    let reference = Catalog::shipped();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { xbo_catalog_shipped(&mut cat) }, XboStatus::Ok);
    let id = CString::new("ffi-session").unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { xbo_session_start(cat, id.as_ptr(), XboCondition::Rules, 3, &mut session) }, XboStatus::Ok);
    // the session owns its own reference to the catalog
    unsafe { xbo_catalog_free(cat) };

    let mut explained = 0;
    for _ in 0..7 {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { xbo_session_view_json(session, &mut s) }, XboStatus::Ok);
        let view_text = take_string(s);
        assert!(!view_text.contains("optimal"));
        let view: serde_json::Value = serde_json::from_str(&view_text).unwrap();
        let sid = view["current"]["scenario"]["id"].as_str().unwrap().to_string();

        assert_eq!(unsafe { xbo_session_explanation_json(session, &mut s) }, XboStatus::Ok);
        let expl: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
        if expl["format"] == "rules" {
            explained += 1;
        } else {
            assert_eq!(expl["format"], "none");
        }

        let opt = params(&reference.get(&sid).unwrap().optimal);
        let mut g = XboGrade::Undercooked;
        assert_eq!(unsafe { xbo_session_submit(session, &opt, &mut g) }, XboStatus::Ok);
        assert_eq!(g, XboGrade::Perfect);
    }
    assert_eq!(explained, 3);

    let any = params(&reference.get("chicken").unwrap().optimal);
    let mut g = XboGrade::Undercooked;
    assert_eq!(unsafe { xbo_session_submit(session, &any, &mut g) }, XboStatus::SessionCompleted);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { xbo_session_metrics_json(session, &mut s) }, XboStatus::Ok);
    let m: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
    assert_eq!(m["complete"], true);
    assert_eq!(m["success_rate"]["baseline"], 1.0);
    assert_eq!(m["success_rate"]["treatment"], 1.0);
    unsafe { xbo_session_free(session) };
}

#[test]
fn fixed_parameter_change_is_reported() {
    let reference = Catalog::shipped();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { xbo_catalog_shipped(&mut cat) }, XboStatus::Ok);
    let id = CString::new("ffi-fixed").unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { xbo_session_start(cat, id.as_ptr(), XboCondition::Visual, 0, &mut session) }, XboStatus::Ok);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { xbo_session_view_json(session, &mut s) }, XboStatus::Ok);
    let view: serde_json::Value = serde_json::from_str(&take_string(s)).unwrap();
    let sid = view["current"]["scenario"]["id"].as_str().unwrap();
    let sc = reference.get(sid).unwrap();
    let (&p, &v) = sc.fixed.iter().next().expect("every scenario fixes something");
    let mut moved = sc.optimal;
    let (lo, hi) = sc.bound(p);
    moved.set(p, if v < hi { hi.min(v + 1.0) } else { lo.max(v - 1.0) });
    let mut g = XboGrade::Undercooked;
    let st = unsafe { xbo_session_submit(session, &params(&moved), &mut g) };
    // a fixed value is usually also pinned by its bounds
    assert!(matches!(st, XboStatus::FixedParameterModified | XboStatus::OutOfDomain), "{st:?}");
    unsafe { xbo_session_free(session) };
    unsafe { xbo_catalog_free(cat) };
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/xbo.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for f in [
        "xbo_last_error_message",
        "xbo_string_free",
        "xbo_boiling_point_c",
        "xbo_cooking_time_s",
        "xbo_classify",
        "xbo_catalog_shipped",
        "xbo_catalog_from_json",
        "xbo_catalog_free",
        "xbo_session_start",
        "xbo_session_submit",
        "xbo_session_view_json",
        "xbo_session_explanation_json",
        "xbo_session_metrics_json",
        "xbo_session_free",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct XboSession XboSession;"));

    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
