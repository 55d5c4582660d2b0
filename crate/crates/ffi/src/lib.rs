//! C ABI over the `xbo` core.
//!
//! Conventions:
//! * every function returns an [`XboStatus`]; results go through out-pointers;
//! * handles are opaque and released with their `_free` function;
//! * strings returned by the library are NUL-terminated UTF-8 and must be
//!   released with [`xbo_string_free`];
//! * after a failure, [`xbo_last_error_message`] describes it (per thread).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use chrono::Utc;

use xbo::egg::{boiling_point_c, classify_feedback, cooking_time_s, EggError, EggParameters, FeedbackGrade};
use xbo::harness::{load_scenarios, shipped_scenarios, Catalog, Condition, HarnessError, Session};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XboStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    OutOfDomain = 3,
    Uncookable = 4,
    InvalidArgument = 5,
    InvalidScenarios = 6,
    TrialsExhausted = 7,
    FixedParameterModified = 8,
    NoAdjustment = 9,
    SessionCompleted = 10,
    Conflict = 11,
    Panic = 99,
}

/// Feedback grades, in increasing cooking time.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XboGrade {
    Undercooked = 0,
    SlightlyUndercooked = 1,
    Perfect = 2,
    SlightlyOvercooked = 3,
    Overcooked = 4,
}

impl From<FeedbackGrade> for XboGrade {
    fn from(g: FeedbackGrade) -> Self {
        match g {
            FeedbackGrade::Undercooked => XboGrade::Undercooked,
            FeedbackGrade::SlightlyUndercooked => XboGrade::SlightlyUndercooked,
            FeedbackGrade::Perfect => XboGrade::Perfect,
            FeedbackGrade::SlightlyOvercooked => XboGrade::SlightlyOvercooked,
            FeedbackGrade::Overcooked => XboGrade::Overcooked,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XboEggParameters {
    pub mass_g: f64,
    pub lambda: f64,
    pub ywr: f64,
    pub t_egg_c: f64,
    pub t_yolk_c: f64,
    pub altitude_m: f64,
}

impl From<XboEggParameters> for EggParameters {
    fn from(p: XboEggParameters) -> Self {
        EggParameters::from_array([p.mass_g, p.lambda, p.ywr, p.t_egg_c, p.t_yolk_c, p.altitude_m])
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XboCondition {
    Visual = 0,
    Rules = 1,
    Language = 2,
}

/// Loaded scenario set.
pub struct XboCatalog {
    inner: Arc<Catalog>,
}

/// A study session bound to the catalog it was started from.
pub struct XboSession {
    catalog: Arc<Catalog>,
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: XboStatus, msg: impl Into<String>) -> XboStatus {
    set_error(msg);
    status
}

fn egg_status(e: &EggError) -> XboStatus {
    let status = match e {
        EggError::OutOfDomain { .. } => XboStatus::OutOfDomain,
        EggError::Uncookable(_) => XboStatus::Uncookable,
        EggError::NonPositiveTime(_) | EggError::BadFraction(_) => XboStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn harness_status(e: &HarnessError) -> XboStatus {
    let status = match e {
        HarnessError::TrialsExhausted(_) => XboStatus::TrialsExhausted,
        HarnessError::FixedParameterModified(_) => XboStatus::FixedParameterModified,
        HarnessError::NoAdjustment => XboStatus::NoAdjustment,
        HarnessError::SessionCompleted => XboStatus::SessionCompleted,
        HarnessError::OutOfBounds { .. } => XboStatus::OutOfDomain,
        HarnessError::Uncookable(_) => XboStatus::Uncookable,
        HarnessError::NotEnoughScenarios(_) | HarnessError::TrainingCount(_) => XboStatus::InvalidScenarios,
        HarnessError::InvalidRating(_) => XboStatus::InvalidArgument,
        _ => XboStatus::Conflict,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> XboStatus) -> XboStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(XboStatus::Panic, "internal panic"))
}

fn out_string(s: String, out: *mut *mut c_char) -> XboStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: caller checked `out` for null.
            unsafe { *out = c.into_raw() };
            XboStatus::Ok
        }
        Err(_) => fail(XboStatus::InvalidUtf8, "string contains NUL"),
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xbo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn xbo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn xbo_boiling_point_c(altitude_m: f64, out: *mut f64) -> XboStatus {
    guard(|| {
        if out.is_null() {
            return fail(XboStatus::NullPointer, "out is null");
        }
        match boiling_point_c(altitude_m) {
            Ok(v) => {
                unsafe { *out = v };
                XboStatus::Ok
            }
            Err(e) => egg_status(&e),
        }
    })
}

/// # Safety
/// `params` must be readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_cooking_time_s(params: *const XboEggParameters, out: *mut f64) -> XboStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        match cooking_time_s(&unsafe { *params }.into()) {
            Ok(t) => {
                unsafe { *out = t };
                XboStatus::Ok
            }
            Err(e) => egg_status(&e),
        }
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn xbo_classify(cook_time_s: f64, out: *mut XboGrade) -> XboStatus {
    guard(|| {
        if out.is_null() {
            return fail(XboStatus::NullPointer, "out is null");
        }
        match classify_feedback(cook_time_s) {
            Ok(g) => {
                unsafe { *out = g.into() };
                XboStatus::Ok
            }
            Err(e) => egg_status(&e),
        }
    })
}

/// Loads the bundled scenarios.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn xbo_catalog_shipped(out: *mut *mut XboCatalog) -> XboStatus {
    guard(|| {
        if out.is_null() {
            return fail(XboStatus::NullPointer, "out is null");
        }
        let cat = Box::new(XboCatalog { inner: Arc::new(Catalog::new(shipped_scenarios())) });
        unsafe { *out = Box::into_raw(cat) };
        XboStatus::Ok
    })
}

/// Loads scenarios from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_catalog_from_json(json: *const c_char, out: *mut *mut XboCatalog) -> XboStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        let Ok(text) = unsafe { CStr::from_ptr(json) }.to_str() else {
            return fail(XboStatus::InvalidUtf8, "json is not UTF-8");
        };
        match load_scenarios(text) {
            Ok(s) => {
                unsafe { *out = Box::into_raw(Box::new(XboCatalog { inner: Arc::new(Catalog::new(s)) })) };
                XboStatus::Ok
            }
            Err(e) => fail(XboStatus::InvalidScenarios, e.to_string()),
        }
    })
}

/// # Safety
/// `catalog` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn xbo_catalog_free(catalog: *mut XboCatalog) {
    if !catalog.is_null() {
        drop(unsafe { Box::from_raw(catalog) });
    }
}

/// Starts a session. The session keeps the catalog alive on its own, so
/// the catalog handle may be freed afterwards.
///
/// # Safety
/// `catalog` must be a live handle, `id` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_session_start(
    catalog: *const XboCatalog,
    id: *const c_char,
    condition: XboCondition,
    seed: u64,
    out: *mut *mut XboSession,
) -> XboStatus {
    guard(|| {
        if catalog.is_null() || id.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        let Ok(id) = unsafe { CStr::from_ptr(id) }.to_str() else {
            return fail(XboStatus::InvalidUtf8, "id is not UTF-8");
        };
        let catalog = unsafe { &*catalog }.inner.clone();
        let condition = match condition {
            XboCondition::Visual => Condition::Visual,
            XboCondition::Rules => Condition::Rules,
            XboCondition::Language => Condition::Language,
        };
        match Session::start(id, condition, seed, &catalog, Utc::now()) {
            Ok((session, _)) => {
                unsafe { *out = Box::into_raw(Box::new(XboSession { catalog, session })) };
                XboStatus::Ok
            }
            Err(e) => harness_status(&e),
        }
    })
}


/// Submits a trial for the current egg and reports its grade.
///
/// # Safety
/// `session` must be a live handle; `params` readable; `grade` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_session_submit(session: *mut XboSession, params: *const XboEggParameters, grade: *mut XboGrade) -> XboStatus {
    guard(|| {
        if session.is_null() || params.is_null() || grade.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        let s = unsafe { &mut *session };
        match s.session.submit_trial(&s.catalog, None, unsafe { *params }.into(), Utc::now()) {
            Ok((outcome, _)) => {
                unsafe { *grade = outcome.grade.into() };
                XboStatus::Ok
            }
            Err(e) => harness_status(&e),
        }
    })
}

/// Client view of the session as JSON (no optimal values).
///
/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_session_view_json(session: *const XboSession, out: *mut *mut c_char) -> XboStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        let s = unsafe { &*session };
        out_string(serde_json::to_string(&s.session.view(&s.catalog)).expect("serializes"), out)
    })
}

/// Explanation for the current egg as `{format, payload}` JSON.
///
/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_session_explanation_json(session: *mut XboSession, out: *mut *mut c_char) -> XboStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        let s = unsafe { &mut *session };
        match s.session.explanation(&s.catalog, None, Utc::now()) {
            Ok((rendered, _)) => out_string(serde_json::to_string(&rendered).expect("serializes"), out),
            Err(e) => harness_status(&e),
        }
    })
}

/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xbo_session_metrics_json(session: *const XboSession, out: *mut *mut c_char) -> XboStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            return fail(XboStatus::NullPointer, "null argument");
        }
        out_string(serde_json::to_string(&unsafe { &*session }.session.metrics()).expect("serializes"), out)
    })
}

/// # Safety
/// `session` must come from this library (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn xbo_session_free(session: *mut XboSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}
