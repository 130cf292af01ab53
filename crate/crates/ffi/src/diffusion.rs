use std::ffi::{c_char, c_double};

use abandonq::diffusion::{build_stationary, DiffusionModel, DiffusionStationary};
use abandonq::primitives::ScalarFn;

use crate::{guard, read_str, write_out, AqStatus, Failure};

/// Stationary law of the reflected diffusion. Opaque.
pub struct AqStationary {
    inner: DiffusionStationary,
}

unsafe fn handle<'a>(h: *const AqStationary) -> Result<&'a DiffusionStationary, Failure> {
    h.as_ref().map(|s| &s.inner).ok_or_else(|| Failure::null("handle"))
}

fn build(model: DiffusionModel, tol: f64, out: *mut *mut AqStationary) -> Result<(), Failure> {
    let inner = build_stationary(&model, tol)?;
    let raw = Box::into_raw(Box::new(AqStationary { inner }));
    // SAFETY: checked non-null by the callers before the build
    unsafe { out.write(raw) };
    Ok(())
}

/// Builds the stationary law for `H(x) = coeffs[0] + coeffs[1] x + ...`,
/// variance `sigma2` and drift constant `theta / lambda`. `tol` is the
/// relative tolerance of the normalization (e.g. 1e-10).
#[no_mangle]
pub unsafe extern "C" fn aq_stationary_build(
    sigma2: c_double,
    drift_const: c_double,
    coeffs: *const c_double,
    num_coeffs: usize,
    tol: c_double,
    out: *mut *mut AqStationary,
) -> AqStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        if coeffs.is_null() || num_coeffs == 0 {
            return Err(Failure::new(AqStatus::Config, "need at least one coefficient of H"));
        }
        let c = std::slice::from_raw_parts(coeffs, num_coeffs).to_vec();
        build(DiffusionModel::new(sigma2, drift_const, ScalarFn::Polynomial(c))?, tol, out)
    })
}

/// As [`aq_stationary_build`], with `H` given as the JSON of a function
/// (`{"polynomial": [...]}`, `{"power": {"coef": c, "exponent": p}}` or a table).
#[no_mangle]
pub unsafe extern "C" fn aq_stationary_build_json(
    sigma2: c_double,
    drift_const: c_double,
    h_json: *const c_char,
    tol: c_double,
    out: *mut *mut AqStationary,
) -> AqStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let h: ScalarFn = serde_json::from_str(read_str(h_json, "h_json")?)?;
        build(DiffusionModel::new(sigma2, drift_const, h)?, tol, out)
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_stationary_free(h: *mut AqStationary) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Normalizing constant `M`.
#[no_mangle]
pub unsafe extern "C" fn aq_stationary_normalizer(h: *const AqStationary, out: *mut c_double) -> AqStatus {
    guard(|| write_out(out, handle(h)?.normalizer(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn aq_stationary_density(h: *const AqStationary, x: c_double, out: *mut c_double) -> AqStatus {
    guard(|| write_out(out, handle(h)?.density(x), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn aq_stationary_cdf(h: *const AqStationary, x: c_double, out: *mut c_double) -> AqStatus {
    guard(|| write_out(out, handle(h)?.cdf(x), "out"))
}

/// `E[V^m]`, `m > 0`.
#[no_mangle]
pub unsafe extern "C" fn aq_stationary_moment(h: *const AqStationary, m: c_double, out: *mut c_double) -> AqStatus {
    guard(|| {
        let v = handle(h)?.moment(m)?;
        write_out(out, v, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn aq_stationary_quantile(h: *const AqStationary, q: c_double, out: *mut c_double) -> AqStatus {
    guard(|| {
        let v = handle(h)?.quantile(q)?;
        write_out(out, v, "out")
    })
}

/// `E[H(V)]`, the limit of `sqrt(n)` times the abandonment probability.
#[no_mangle]
pub unsafe extern "C" fn aq_stationary_expect_h(h: *const AqStationary, out: *mut c_double) -> AqStatus {
    guard(|| {
        let v = handle(h)?.expect_h()?;
        write_out(out, v, "out")
    })
}
