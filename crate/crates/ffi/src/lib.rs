//! C ABI over `riskfsc`.
//!
//! Objects cross the boundary as opaque handles created by `rf_*_new`/`parse`
//! style constructors and released with the matching `rf_*_free`. Every
//! fallible call returns an [`RfStatus`]; on failure a message is stored in a
//! thread-local slot readable with [`rf_last_error_message`]. Panics are
//! caught and reported as [`RfStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use riskfsc::bpi::{default_initial_fsc, run_bpi, BpiConfig};
use riskfsc::eval::{evaluate_fsc, ValueTable};
use riskfsc::pomdp::{make_gridworld, parse_pomdp, GridWorldSpec};
use riskfsc::risk::cvar_closed_form;
use riskfsc::{Error, Fsc, Pomdp, RiskSpec};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Syntax = 3,
    Semantic = 4,
    DimensionMismatch = 5,
    InvalidInput = 6,
    Infeasible = 7,
    NonConvergence = 8,
    Solver = 9,
    Io = 10,
    OutOfRange = 11,
    Internal = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfRiskKind {
    Expectation = 0,
    Cvar = 1,
}

/// Risk measure; `alpha` is read only for [`RfRiskKind::Cvar`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfRiskSpec {
    pub kind: RfRiskKind,
    pub alpha: f64,
}

/// Opaque POMDP model.
pub struct RfModel(Pomdp);
/// Opaque stochastic finite-state controller.
pub struct RfFsc(Fsc);
/// Opaque value table `V(s, g)`.
pub struct RfValues(ValueTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> RfStatus {
    match e {
        Error::Syntax { .. } | Error::Json(_) | Error::Csv(_) => RfStatus::Syntax,
        Error::Semantic { .. } | Error::ImpossibleObservation { .. } => RfStatus::Semantic,
        Error::DimensionMismatch(_) => RfStatus::DimensionMismatch,
        Error::InvalidInput(_) | Error::EmptyDistribution | Error::TooLarge(_) => RfStatus::InvalidInput,
        Error::Infeasible(_) => RfStatus::Infeasible,
        Error::NonConvergence { .. } => RfStatus::NonConvergence,
        Error::MalformedLp(_) | Error::LpIterationLimit(_) | Error::LpFailure(_) => RfStatus::Solver,
        Error::Io(_) => RfStatus::Io,
        Error::ContractViolation(_) => RfStatus::Internal,
    }
}

/// Runs `body`, recording its error (or panic) in the thread-local slot.
fn guard(body: impl FnOnce() -> Result<(), (RfStatus, String)>) -> RfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            RfStatus::Internal
        }
    }
}

type Fallible<T> = Result<T, (RfStatus, String)>;

fn lift<T>(r: riskfsc::Result<T>) -> Fallible<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (RfStatus, String) {
    (RfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (RfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Fallible<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Fallible<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn risk_spec(spec: RfRiskSpec) -> Fallible<RiskSpec> {
    let s = match spec.kind {
        RfRiskKind::Expectation => RiskSpec::Expectation,
        RfRiskKind::Cvar => RiskSpec::Cvar { alpha: spec.alpha },
    };
    lift(s.validate())?;
    Ok(s)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `rf_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from an `rf_*` function that documents ownership transfer, or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model in the text format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_model_parse(text_ptr: *const c_char, out: *mut *mut RfModel) -> RfStatus {
    guard(|| {
        let m = lift(parse_pomdp(text(text_ptr, "text")?))?;
        put(out, Box::into_raw(Box::new(RfModel(m))), "out")
    })
}

/// Builds the grid-world model described by a grid config document.
///
/// # Safety
/// As [`rf_model_parse`].
#[no_mangle]
pub unsafe extern "C" fn rf_model_gridworld(config: *const c_char, out: *mut *mut RfModel) -> RfStatus {
    guard(|| {
        let spec = lift(GridWorldSpec::from_toml(text(config, "config")?))?;
        let m = lift(make_gridworld(&spec))?;
        put(out, Box::into_raw(Box::new(RfModel(m))), "out")
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_model_free(model: *mut RfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes `|S|`, `|A|` and `|O|`; any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_model_dims(
    model: *const RfModel,
    states: *mut usize,
    actions: *mut usize,
    observations: *mut usize,
) -> RfStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        for (p, v) in [(states, m.num_states()), (actions, m.num_actions()), (observations, m.num_observations())] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_model_discount(model: *const RfModel, out: *mut f64) -> RfStatus {
    guard(|| put(out, obj(model, "model")?.0.discount(), "out"))
}

/// Controller with `nodes` nodes and uniform rows, sized for `model`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_uniform(model: *const RfModel, nodes: usize, out: *mut *mut RfFsc) -> RfStatus {
    guard(|| {
        let f = lift(default_initial_fsc(&obj(model, "model")?.0, nodes, 0))?;
        put(out, Box::into_raw(Box::new(RfFsc(f))), "out")
    })
}

/// # Safety
/// As [`rf_model_parse`].
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_from_json(json: *const c_char, out: *mut *mut RfFsc) -> RfStatus {
    guard(|| {
        let f = lift(Fsc::from_json(text(json, "json")?))?;
        put(out, Box::into_raw(Box::new(RfFsc(f))), "out")
    })
}

/// Serializes a controller; free the result with [`rf_string_free`].
///
/// # Safety
/// `fsc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_to_json(fsc: *const RfFsc, out: *mut *mut c_char) -> RfStatus {
    guard(|| {
        let s = CString::new(obj(fsc, "fsc")?.0.to_json()).expect("JSON has no NULs");
        put(out, s.into_raw(), "out")
    })
}

/// # Safety
/// `fsc` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_free(fsc: *mut RfFsc) {
    if !fsc.is_null() {
        drop(Box::from_raw(fsc));
    }
}

/// # Safety
/// `fsc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_num_nodes(fsc: *const RfFsc, out: *mut usize) -> RfStatus {
    guard(|| put(out, obj(fsc, "fsc")?.0.num_nodes(), "out"))
}

/// `ω(next, action | node, observation)`.
///
/// # Safety
/// `fsc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_fsc_prob(
    fsc: *const RfFsc,
    node: usize,
    observation: usize,
    next: usize,
    action: usize,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let f = &obj(fsc, "fsc")?.0;
        if node >= f.num_nodes() || next >= f.num_nodes() || observation >= f.num_observations() || action >= f.num_actions() {
            return Err((RfStatus::OutOfRange, format!("index ({node}, {observation}, {next}, {action}) out of range")));
        }
        put(out, f.prob(node, observation, next, action), "out")
    })
}

/// Evaluates `fsc` on `model` under `spec` to sup-norm tolerance `tol`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_evaluate(
    model: *const RfModel,
    fsc: *const RfFsc,
    spec: RfRiskSpec,
    tol: f64,
    out: *mut *mut RfValues,
) -> RfStatus {
    guard(|| {
        let (m, f) = (&obj(model, "model")?.0, &obj(fsc, "fsc")?.0);
        let spec = risk_spec(spec)?;
        let v = lift(evaluate_fsc(m, f, &spec, tol))?;
        put(out, Box::into_raw(Box::new(RfValues(v))), "out")
    })
}

/// # Safety
/// `values` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_values_free(values: *mut RfValues) {
    if !values.is_null() {
        drop(Box::from_raw(values));
    }
}

/// # Safety
/// `values` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_values_get(values: *const RfValues, state: usize, node: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let v = &obj(values, "values")?.0;
        if state >= v.num_states || node >= v.num_nodes {
            return Err((RfStatus::OutOfRange, format!("({state}, {node}) outside a {}x{} table", v.num_states, v.num_nodes)));
        }
        put(out, v.get(state, node), "out")
    })
}

/// `min_g ι·V(·, g)` for the model's initial distribution.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_values_objective(values: *const RfValues, model: *const RfModel, out: *mut f64) -> RfStatus {
    guard(|| {
        let (v, m) = (&obj(values, "values")?.0, &obj(model, "model")?.0);
        if v.num_states != m.num_states() {
            return Err((RfStatus::DimensionMismatch, "value table and model disagree on |S|".into()));
        }
        put(out, v.objective(m.initial()), "out")
    })
}

/// Sup-norm Bellman residual recorded by the evaluation.
///
/// # Safety
/// `values` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_values_residual(values: *const RfValues, out: *mut f64) -> RfStatus {
    guard(|| put(out, obj(values, "values")?.0.residual, "out"))
}

/// Runs bounded policy iteration from a one-node uniform controller.
///
/// # Safety
/// `model` must be a live handle; `out_fsc` must be writable; `out_objective` may be null.
#[no_mangle]
pub unsafe extern "C" fn rf_solve(
    model: *const RfModel,
    spec: RfRiskSpec,
    gamma: f64,
    max_nodes: usize,
    new_nodes: usize,
    seed: u64,
    out_fsc: *mut *mut RfFsc,
    out_objective: *mut f64,
) -> RfStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        let mut cfg = BpiConfig::new(risk_spec(spec)?, gamma, max_nodes, new_nodes);
        cfg.seed = seed;
        let f0 = lift(default_initial_fsc(m, 1, seed))?;
        let (f, _, trace) = lift(run_bpi(m, &f0, &cfg))?;
        if !out_objective.is_null() {
            out_objective.write(trace.final_objective);
        }
        put(out_fsc, Box::into_raw(Box::new(RfFsc(f))), "out_fsc")
    })
}

/// CVaR at level `alpha` of the distribution with `n` atoms `values[i]`
/// carrying mass `probs[i]`.
///
/// # Safety
/// `values` and `probs` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_cvar(
    values: *const f64,
    probs: *const f64,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        if values.is_null() || probs.is_null() {
            return Err(null("values/probs"));
        }
        let (xs, ps) = (std::slice::from_raw_parts(values, n), std::slice::from_raw_parts(probs, n));
        let d = lift(riskfsc::DiscreteDistribution::new(xs.iter().copied().zip(ps.iter().copied()).collect()))?;
        lift(RiskSpec::Cvar { alpha }.validate())?;
        let mut atoms = d.atoms().to_vec();
        put(out, cvar_closed_form(alpha, &mut atoms).value, "out")
    })
}
