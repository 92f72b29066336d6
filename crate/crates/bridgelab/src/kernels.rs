//! Covariance and equivalence-diagnostic kernels of the bridge family.
//!
//! `cov_q` is the covariance kernel of the parameter-c bridge,
//!
//!   Q_c(s,t) = ∫_0^{s∧t} (1-t)^c (1-s)^c / (1-r)^{2c} dr,
//!
//! and `fh_kernel_q` is the kernel q_c with
//! A^{-1} R_c (A*)^{-1} = I + q_c, whose L² blow-up witnesses the
//! singularity of the measures for c ≠ 1. Both have closed forms away from
//! c = 1/2 and quadrature fallbacks; `*_oracle` variants evaluate the raw
//! integral forms independently for cross-checks.

use crate::error::{Error, Result};
use crate::quad::quad_oracle;

/// How a kernel value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    ClosedForm,
    Quadrature,
}

/// A kernel evaluation together with its provenance tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub method: EvalMethod,
}

/// Closed forms overflow in the c(1-c)/(2c-1) prefactor inside this band
/// around c = 1/2; evaluation switches to quadrature there.
pub const HALF_BAND: f64 = 1e-3;

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1), got {x}")));
    }
    Ok(())
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("kernel parameter c must be positive, got {c}")));
    }
    Ok(())
}

/// Covariance kernel Q_c(s, t) of the parameter-c bridge.
///
/// Symmetric, nonnegative, and zero whenever s ∧ t = 0. The closed form
/// `[(1-m)^{1-2c} - 1]/(2c-1)` is evaluated through `expm1` so the c = 1/2
/// logarithmic limit is reached without cancellation.
pub fn cov_q(c: f64, s: f64, t: f64) -> Result<f64> {
    check_c(c)?;
    check_unit("s", s)?;
    check_unit("t", t)?;
    let m = s.min(t);
    if m == 0.0 {
        return Ok(0.0);
    }
    let x = 1.0 - 2.0 * c; // [(1-m)^x - 1] / (-x)
    let l = (-m).ln_1p(); // ln(1 - m)
    let core = if x.abs() < 1e-12 { -l } else { -(x * l).exp_m1() / x };
    Ok(((1.0 - s) * (1.0 - t)).powf(c) * core)
}

/// Quadrature evaluation of the integral form of Q_c, for cross-checks.
pub fn cov_q_oracle(c: f64, s: f64, t: f64, tol: f64) -> Result<KernelValue> {
    check_c(c)?;
    check_unit("s", s)?;
    check_unit("t", t)?;
    let m = s.min(t);
    let pref = ((1.0 - s) * (1.0 - t)).powf(c);
    let v = quad_oracle(&|r: f64| (1.0 - r).powf(-2.0 * c), 0.0, m, tol)?;
    Ok(KernelValue { value: pref * v, method: EvalMethod::Quadrature })
}

/// The Feldman-Hajek kernel q_c(s, t).
///
/// For c = 1 this is exactly -1. Away from the c = 1/2 band the closed form
///
///   q_c = c(1-c)/(2c-1) (1-s∨t)^{c-1}/(1-s∧t)^c
///       + c²/(1-2c) (1-t)^{c-1} (1-s)^{c-1}
///
/// is used; inside the band the integral form is evaluated by quadrature.
pub fn fh_kernel_q(c: f64, s: f64, t: f64) -> Result<KernelValue> {
    check_c(c)?;
    check_unit("s", s)?;
    check_unit("t", t)?;
    if c == 1.0 {
        return Ok(KernelValue { value: -1.0, method: EvalMethod::ClosedForm });
    }
    if (2.0 * c - 1.0).abs() < HALF_BAND {
        return fh_kernel_q_oracle(c, s, t, 1e-12);
    }
    let hi = s.max(t);
    let lo = s.min(t);
    let first = c * (1.0 - c) / (2.0 * c - 1.0) * (1.0 - hi).powf(c - 1.0) / (1.0 - lo).powf(c);
    let second = c * c / (1.0 - 2.0 * c) * ((1.0 - t) * (1.0 - s)).powf(c - 1.0);
    Ok(KernelValue { value: first + second, method: EvalMethod::ClosedForm })
}

/// Quadrature evaluation of the integral form of q_c:
/// -c (1-s∨t)^{c-1}/(1-s∧t)^c + c² (1-t)^{c-1}(1-s)^{c-1} ∫_0^{s∧t} (1-r)^{-2c} dr.
pub fn fh_kernel_q_oracle(c: f64, s: f64, t: f64, tol: f64) -> Result<KernelValue> {
    check_c(c)?;
    check_unit("s", s)?;
    check_unit("t", t)?;
    let hi = s.max(t);
    let lo = s.min(t);
    let first = -c * (1.0 - hi).powf(c - 1.0) / (1.0 - lo).powf(c);
    let integral = quad_oracle(&|r: f64| (1.0 - r).powf(-2.0 * c), 0.0, lo, tol)?;
    let second = c * c * ((1.0 - t) * (1.0 - s)).powf(c - 1.0) * integral;
    Ok(KernelValue { value: first + second, method: EvalMethod::Quadrature })
}

/// The classical Brownian bridge covariance s ∧ t - s t.
pub fn cov_bb(s: f64, t: f64) -> f64 {
    s.min(t) - s * t
}
