//! C ABI over the `glime` crate.
//!
//! Objects cross the boundary as opaque handles that are released with the
//! matching `*_free`. Fallible calls return a
//! [`GlimeStatus`]; on failure a description is kept per thread and can be read
//! with [`glime_last_error_message`]. Panics never unwind into C: they are
//! reported as `GLIME_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use glime::explain::{explain, ExplainRequest, Explanation, MethodSpec};
use glime::feature_space::{grid_segment, Reference, Segmentation, Shape};
use glime::models::ModelSpec;
use glime::sampling::{self, WeightSpec};
use glime::solver::sherman_morrison_inverse;
use glime::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlimeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DimensionMismatch = 4,
    SingularSystem = 5,
    Unsupported = 6,
    Remote = 7,
    Io = 8,
    Internal = 99,
}

/// Explanation method selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlimeMethod {
    Lime = 0,
    LimeUnweighted = 1,
    GlimeBinomial = 2,
    GlimeGauss = 3,
    GlimeLaplace = 4,
    GlimeUniform = 5,
    KernelShap = 6,
    KernelShapSampled = 7,
    SmoothGrad = 8,
}

/// Parameters of [`glime_explain`]. `sigma` is ignored by KernelSHAP and
/// `lambda` by KernelSHAP and SmoothGrad.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlimeExplainParams {
    /// A [`GlimeMethod`] value.
    pub method: u32,
    pub sigma: f64,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
}

pub struct GlimeModel(ModelSpec);

pub struct GlimeSegmentation(Segmentation);

pub struct GlimeExplanation(Explanation);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GlimeStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::LengthMismatch { .. } => GlimeStatus::DimensionMismatch,
        Error::RemoteUnavailable(_) | Error::RemoteMalformed { .. } => GlimeStatus::Remote,
        Error::UnsupportedModel(_) | Error::UnsupportedCombination(_) | Error::DimensionTooLarge { .. } => {
            GlimeStatus::Unsupported
        }
        Error::SingularSystem(_) | Error::NotPositiveDefinite(_) => GlimeStatus::SingularSystem,
        Error::Io(_) => GlimeStatus::Io,
        _ => GlimeStatus::InvalidArgument,
    }
}

struct Failure(GlimeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GlimeStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GlimeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GlimeStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal error: {message}"));
            GlimeStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn glime_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a model description (the JSON accepted by the CLI configs).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_model_from_json(json: *const c_char, out: *mut *mut GlimeModel) -> GlimeStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(GlimeStatus::InvalidUtf8, e.to_string()))?;
        let model = ModelSpec::from_json(text)?;
        write_out(out, boxed(GlimeModel(model)), "out")
    })
}

/// # Safety
/// `model` must come from [`glime_model_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn glime_model_free(model: *mut GlimeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension of the model; 0 when a remote model does not declare one.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_model_input_dim(model: *const GlimeModel) -> usize {
    model.as_ref().and_then(|m| m.0.input_dim()).unwrap_or(0)
}

/// Evaluates `n_points` row-major points of width `dim` into `out[n_points]`.
///
/// # Safety
/// `points` must hold `n_points * dim` values and `out` `n_points` slots.
#[no_mangle]
pub unsafe extern "C" fn glime_model_evaluate(
    model: *const GlimeModel,
    points: *const f64,
    n_points: usize,
    dim: usize,
    out: *mut f64,
) -> GlimeStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let len = n_points
            .checked_mul(dim)
            .ok_or_else(|| Failure(GlimeStatus::InvalidArgument, "size overflow".into()))?;
        let points = slice(points, len, "points")?;
        if dim == 0 {
            return Err(Failure(GlimeStatus::InvalidArgument, "dim must be positive".into()));
        }
        let values = model.0.evaluate_flat(points, n_points)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, n_points).copy_from_slice(&values);
        Ok(())
    })
}

/// One feature per raw coordinate.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_segmentation_singleton(len: usize, out: *mut *mut GlimeSegmentation) -> GlimeStatus {
    guard(|| {
        let seg = Segmentation::singleton(len)?;
        write_out(out, boxed(GlimeSegmentation(seg)), "out")
    })
}

/// Regular `rows x cols` grid over an HWC image.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_segmentation_grid(
    height: usize,
    width: usize,
    channels: usize,
    rows: usize,
    cols: usize,
    out: *mut *mut GlimeSegmentation,
) -> GlimeStatus {
    guard(|| {
        let seg = grid_segment(height, width, channels, rows, cols)?;
        write_out(out, boxed(GlimeSegmentation(seg)), "out")
    })
}

/// Explicit map from raw index to feature id; ids must cover `0..d`.
///
/// # Safety
/// `assignment` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_segmentation_from_assignment(
    assignment: *const usize,
    len: usize,
    out: *mut *mut GlimeSegmentation,
) -> GlimeStatus {
    guard(|| {
        let assignment = slice(assignment, len, "assignment")?.to_vec();
        let seg = Segmentation::new(assignment, Shape::Flat(len))?;
        write_out(out, boxed(GlimeSegmentation(seg)), "out")
    })
}

/// # Safety
/// `seg` must come from a `glime_segmentation_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn glime_segmentation_free(seg: *mut GlimeSegmentation) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}

/// Number of interpretable features `d`; 0 for a null handle.
///
/// # Safety
/// `seg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_segmentation_num_features(seg: *const GlimeSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.0.num_features())
}

fn method_from_u32(v: u32) -> Result<GlimeMethod, Failure> {
    use GlimeMethod::*;
    [
        Lime,
        LimeUnweighted,
        GlimeBinomial,
        GlimeGauss,
        GlimeLaplace,
        GlimeUniform,
        KernelShap,
        KernelShapSampled,
        SmoothGrad,
    ]
    .into_iter()
    .find(|m| *m as u32 == v)
    .ok_or_else(|| Failure(GlimeStatus::InvalidArgument, format!("unknown method {v}")))
}

fn method_spec(params: &GlimeExplainParams) -> Result<MethodSpec, Failure> {
    let sigma = params.sigma;
    Ok(match method_from_u32(params.method)? {
        GlimeMethod::Lime => MethodSpec::lime(sigma),
        GlimeMethod::LimeUnweighted => MethodSpec::Lime {
            sigma,
            unit_weights: true,
        },
        GlimeMethod::GlimeBinomial => MethodSpec::GlimeBinomial { sigma },
        GlimeMethod::GlimeGauss => MethodSpec::GlimeGauss { sigma },
        GlimeMethod::GlimeLaplace => MethodSpec::GlimeLaplace { sigma },
        GlimeMethod::GlimeUniform => MethodSpec::GlimeUniform { sigma },
        GlimeMethod::KernelShap => MethodSpec::KernelShap { exact: true },
        GlimeMethod::KernelShapSampled => MethodSpec::KernelShap { exact: false },
        GlimeMethod::SmoothGrad => MethodSpec::SmoothGrad { sigma },
    })
}

/// Explains `model` at `x[x_len]`. `reference` may be null for the
/// continuous methods; binary methods need `x_len` reference values.
///
/// # Safety
/// Handles must be live; `x` and a non-null `reference` must hold `x_len`
/// values; `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn glime_explain(
    model: *const GlimeModel,
    seg: *const GlimeSegmentation,
    x: *const f64,
    x_len: usize,
    reference: *const f64,
    params: *const GlimeExplainParams,
    out: *mut *mut GlimeExplanation,
) -> GlimeStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let seg = handle(seg, "segmentation")?;
        let params = handle(params, "params")?;
        let x = slice(x, x_len, "x")?;
        let reference = if reference.is_null() {
            None
        } else {
            Some(Reference::new(slice(reference, x_len, "reference")?.to_vec())?)
        };
        let e = explain(&ExplainRequest {
            model: &model.0,
            x,
            segmentation: &seg.0,
            reference: reference.as_ref(),
            method: method_spec(params)?,
            n: params.n,
            lambda: params.lambda,
            seed: params.seed,
        })?;
        write_out(out, boxed(GlimeExplanation(e)), "out")
    })
}

/// # Safety
/// `e` must come from [`glime_explain`] or be null.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_free(e: *mut GlimeExplanation) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Length of the attribution vector; 0 for a null handle.
///
/// # Safety
/// `e` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_dim(e: *const GlimeExplanation) -> usize {
    e.as_ref().map_or(0, |e| e.0.w.len())
}

/// Copies the attributions into `out[len]`; `len` must equal the dimension.
///
/// # Safety
/// `e` must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_weights(e: *const GlimeExplanation, out: *mut f64, len: usize) -> GlimeStatus {
    guard(|| {
        let e = handle(e, "explanation")?;
        if len != e.0.w.len() {
            return Err(Error::DimensionMismatch {
                expected: e.0.w.len(),
                actual: len,
            }
            .into());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&e.0.w);
        Ok(())
    })
}

/// Surrogate intercept; NaN for a null handle.
///
/// # Safety
/// `e` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_intercept(e: *const GlimeExplanation) -> f64 {
    e.as_ref().map_or(f64::NAN, |e| e.0.intercept)
}

/// Weighted R^2 of the fit; NaN when the method has none (SmoothGrad).
///
/// # Safety
/// `e` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_r2(e: *const GlimeExplanation) -> f64 {
    e.as_ref().and_then(|e| e.0.r2).unwrap_or(f64::NAN)
}

/// JSON record of the explanation; release with [`glime_string_free`].
/// Null for a null handle.
///
/// # Safety
/// `e` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glime_explanation_to_json(e: *const GlimeExplanation) -> *mut c_char {
    match e.as_ref() {
        Some(e) => CString::new(e.0.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn glime_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that a Binomial mask over `d` features has `k` ones.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_binomial_pmf(d: usize, sigma: f64, k: usize, out: *mut f64) -> GlimeStatus {
    guard(|| write_out(out, sampling::binomial_pmf(d, sigma, k)?, "out"))
}

/// Exponential-kernel weight of a mask with `k` of `d` features kept.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_kernel_weight(d: usize, k: usize, sigma: f64, out: *mut f64) -> GlimeStatus {
    guard(|| {
        if k > d {
            return Err(Failure(GlimeStatus::InvalidArgument, format!("count {k} exceeds dimension {d}")));
        }
        let mask: Vec<f64> = (0..d).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        write_out(out, sampling::weight(&WeightSpec::ExpKernel { sigma }, &mask)?, "out")
    })
}

/// Coefficients of `(alpha1 + lambda - alpha2) I + alpha2 11^T` inverted:
/// the inverse is `beta1` on the diagonal and `beta2` elsewhere.
///
/// # Safety
/// `beta1` and `beta2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glime_sherman_morrison(
    alpha1: f64,
    alpha2: f64,
    lambda: f64,
    d: usize,
    beta1: *mut f64,
    beta2: *mut f64,
) -> GlimeStatus {
    guard(|| {
        if beta1.is_null() || beta2.is_null() {
            return Err(null("beta output"));
        }
        let (b1, b2) = sherman_morrison_inverse(alpha1, alpha2, lambda, d)?;
        beta1.write(b1);
        beta2.write(b2);
        Ok(())
    })
}
