//! C ABI over `soficlab`.
//!
//! Every fallible call returns an `SlStatus`; on failure the message is
//! available from `sl_last_error_message` on the same thread. Handles are
//! opaque and released with their `_free` function. Strings returned by
//! the library are released with `sl_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use soficlab::cayley::GroupSpec;
use soficlab::cli::{run, RunConfig};
use soficlab::derived::{partition, DerivedSpace, Enforcement, McmcOptions, MethodChoice};
use soficlab::kieffer::{
    hardcore_marginal_via_saw, kp_pressure_at_fixed_point, weitz_threshold, Backend, MarginalOracle, SimpleGraph,
};
use soficlab::limits::Caps;
use soficlab::model::{Model, SoficBlock};
use soficlab::Error;

/// Result codes. Values 2 to 9 mirror the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an internal panic.
    Usage = 1,
    Schema = 2,
    Budget = 3,
    InvalidArgument = 4,
    NotCertified = 5,
    Inconsistent = 6,
    BallMismatch = 7,
    Oracle = 8,
    Io = 9,
}

impl SlStatus {
    fn from_code(c: i32) -> Self {
        match c {
            2 => SlStatus::Schema,
            3 => SlStatus::Budget,
            4 => SlStatus::InvalidArgument,
            5 => SlStatus::NotCertified,
            6 => SlStatus::Inconsistent,
            7 => SlStatus::BallMismatch,
            8 => SlStatus::Oracle,
            9 => SlStatus::Io,
            _ => SlStatus::Usage,
        }
    }
}

/// A validated model: group, constraint structure and potential.
pub struct SlModel {
    inner: Model,
}

/// A conditional-marginal oracle bound to a model and radius.
pub struct SlOracle {
    inner: MarginalOracle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Lib(Error),
    Usage(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            SlStatus::from_code(e.code())
        }
        Ok(Err(Fail::Usage(m))) => {
            set_error(m);
            SlStatus::Usage
        }
        Err(_) => {
            set_error("internal panic".into());
            SlStatus::Usage
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Usage(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Usage(format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::Usage(format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Usage(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON model file body.
///
/// # Safety
/// `json` must be a NUL-terminated string and `model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_from_json(json: *const c_char, model: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let m = Model::parse(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(SlModel { inner: m }));
        Ok(())
    })
}

/// Hardcore model on ℤ^d with activity `lambda`.
///
/// # Safety
/// `model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sl_model_hardcore(d: u32, lambda: f64, model: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        let slot = out(model, "model")?;
        if d == 0 || !(lambda > 0.0) {
            return Err(Error::InvalidArgument("need d ≥ 1 and lambda > 0".into()).into());
        }
        *slot = Box::into_raw(Box::new(SlModel { inner: Model::hardcore(GroupSpec::zd(d as usize), lambda) }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sl_model_free(model: *mut SlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Alphabet size of a model, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_model_alphabet(model: *const SlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.structure.alphabet())
}

/// `log Z_n` and `log Z_n / n` of the derived model on one sofic
/// approximation. `builder` is `torus`, `folner` or `random_perm`;
/// `method` is `auto`, `exact`, `transfer` or `mcmc`; `all_edges` selects
/// enforcement on every edge.
///
/// # Safety
/// Strings must be NUL-terminated; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sl_pressure(
    model: *const SlModel,
    builder: *const c_char,
    size: usize,
    method: *const c_char,
    all_edges: bool,
    seed: u64,
    log_z: *mut f64,
    pressure: *mut f64,
    stderr: *mut f64,
) -> SlStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Fail::Usage("model is null".into()))?.inner;
        let (lz, p, se) = (out(log_z, "log_z")?, out(pressure, "pressure")?, out(stderr, "stderr")?);
        let block = SoficBlock { builder: text(builder, "builder")?.into(), params: Default::default(), seed: Some(seed) };
        let method: MethodChoice = text(method, "method")?.parse()?;
        let caps = Caps::from_env()?;
        let sigma = block.builder(&m.spec)?.build_with_cap(size, caps.vertices)?;
        let enforcement = if all_edges { Enforcement::AllEdges } else { Enforcement::GoodWindows };
        let space = DerivedSpace::with_enforcement(sigma, m.structure.clone(), m.potential.clone(), enforcement)?;
        let mcmc = McmcOptions { seed, ..McmcOptions::default() };
        let res = partition(&space, method, &mcmc, &caps)?;
        *lz = res.log_z;
        *p = res.log_z / space.n() as f64;
        *se = res.stderr / space.n() as f64;
        Ok(())
    })
}

/// Builds an oracle for pins in `B_r`. `backend` is `transfer`, `ball` or
/// `saw`; `pad` is ignored by `transfer`.
///
/// # Safety
/// `model` must be a live handle, `backend` NUL-terminated, `oracle` valid.
#[no_mangle]
pub unsafe extern "C" fn sl_oracle_new(
    model: *const SlModel,
    backend: *const c_char,
    r: usize,
    pad: usize,
    oracle: *mut *mut SlOracle,
) -> SlStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Fail::Usage("model is null".into()))?.inner;
        let slot = out(oracle, "oracle")?;
        let b = Backend::parse(text(backend, "backend")?, pad)?;
        let o = MarginalOracle::new(&m.structure, &m.potential, &m.spec, b, r)?;
        *slot = Box::into_raw(Box::new(SlOracle { inner: o }));
        Ok(())
    })
}

/// Releases an oracle; null is ignored.
///
/// # Safety
/// `oracle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sl_oracle_free(oracle: *mut SlOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Number of sites of the oracle's ball (the length of a pin vector).
///
/// # Safety
/// `oracle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_oracle_ball_len(oracle: *const SlOracle) -> usize {
    oracle.as_ref().map_or(0, |o| o.inner.ball().len())
}

/// Law of the symbol at the identity given pins in canonical ball order
/// (`-1` for a free site). Writes `alphabet` probabilities to `probs`.
///
/// # Safety
/// `pins` must hold `n_pins` entries and `probs` `alphabet` entries.
#[no_mangle]
pub unsafe extern "C" fn sl_oracle_conditional(
    oracle: *const SlOracle,
    pins: *const i32,
    n_pins: usize,
    probs: *mut f64,
    alphabet: usize,
) -> SlStatus {
    guard(|| {
        let o = &oracle.as_ref().ok_or_else(|| Fail::Usage("oracle is null".into()))?.inner;
        let pins: Vec<Option<u8>> = slice(pins, n_pins, "pins")?
            .iter()
            .map(|&p| if p < 0 { Ok(None) } else { u8::try_from(p).map(Some) })
            .collect::<Result<_, _>>()
            .map_err(|_| Fail::Lib(Error::InvalidArgument("pin symbol out of range".into())))?;
        let q = o.conditional(&pins)?;
        if alphabet < q.len() || probs.is_null() {
            return Err(Fail::Usage(format!("probs needs room for {} values", q.len())));
        }
        std::slice::from_raw_parts_mut(probs, q.len()).copy_from_slice(&q);
        Ok(())
    })
}

/// Kieffer-Pinsker pressure at the safe-symbol fixed point from `n`
/// percolation pasts truncated at radius `r`.
///
/// # Safety
/// `oracle` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sl_kp_fixed_point(
    oracle: *const SlOracle,
    r: usize,
    n: usize,
    seed: u64,
    value: *mut f64,
    stderr: *mut f64,
) -> SlStatus {
    guard(|| {
        let o = &oracle.as_ref().ok_or_else(|| Fail::Usage("oracle is null".into()))?.inner;
        let (v, s) = (out(value, "value")?, out(stderr, "stderr")?);
        let e = kp_pressure_at_fixed_point(o, r, n, seed)?;
        *v = e.value;
        *s = e.stderr;
        Ok(())
    })
}

/// Hardcore occupation probability of `root` on the graph with `n_vertices`
/// vertices and `n_edges` edges given as `2·n_edges` endpoints. `pins` may
/// be null, otherwise one entry per vertex: `-1` free, `0` empty,
/// `1` occupied.
///
/// # Safety
/// Arrays must have the stated lengths; `marginal` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sl_saw_marginal(
    n_vertices: usize,
    edges: *const u32,
    n_edges: usize,
    root: usize,
    lambda: f64,
    pins: *const i32,
    marginal: *mut f64,
) -> SlStatus {
    guard(|| {
        let slot = out(marginal, "marginal")?;
        let flat = slice(edges, 2 * n_edges, "edges")?;
        let e: Vec<(usize, usize)> = flat.chunks(2).map(|c| (c[0] as usize, c[1] as usize)).collect();
        let g = SimpleGraph::new(n_vertices, &e)?;
        let pins: Vec<Option<bool>> = if pins.is_null() {
            vec![None; n_vertices]
        } else {
            slice(pins, n_vertices, "pins")?.iter().map(|&p| (p >= 0).then_some(p > 0)).collect()
        };
        *slot = hardcore_marginal_via_saw(&g, root, &vec![lambda; n_vertices], &pins)?;
        Ok(())
    })
}

/// `λ_c(Δ)` for `Δ ≥ 3`.
///
/// # Safety
/// `lambda_c` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sl_weitz_threshold(delta: u32, lambda_c: *mut f64) -> SlStatus {
    guard(|| {
        *out(lambda_c, "lambda_c")? = weitz_threshold(delta)?;
        Ok(())
    })
}

/// Runs a JSON run configuration and returns the result record as JSON
/// in `*record` (free with `sl_string_free`).
///
/// # Safety
/// `config` must be NUL-terminated and `record` valid.
#[no_mangle]
pub unsafe extern "C" fn sl_run_json(config: *const c_char, record: *mut *mut c_char) -> SlStatus {
    guard(|| {
        let slot = out(record, "record")?;
        *slot = ptr::null_mut();
        let c = RunConfig::parse(text(config, "config")?)?;
        let r = run(&c)?;
        let s = serde_json::to_string(&r).map_err(Error::from)?;
        *slot = CString::new(s).map_err(|_| Fail::Usage("record contains NUL".into()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
