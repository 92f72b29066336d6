//! Drift families and the associated integrating-factor machinery.
//!
//! A drift family fixes the time-dependent coefficient `f(t)` of the SDE
//! `dz = dB - f(t) z dt` on [0, 1). Three families are supported:
//!
//! - `BridgeC { c }`:       f(t) = c / (1 - t), c > 0,
//! - `PowerAlpha { alpha }`: f(t) = (1 - t)^{-alpha}, alpha > 1,
//! - `PerturbedBridge`:      the c = 1 bridge plus a bounded state-dependent
//!   perturbation f_pert(t, x) / (1 - t)^delta.
//!
//! All coefficients blow up at t = 1, which is what pins the process to the
//! endpoint. `log_phi` is the exponent of the integrating factor,
//! `aii_kernel`/`aii_mass` evaluate the induced approximation-to-the-identity
//! kernel and its mass.

use crate::error::{Error, Result};

/// State-dependent perturbation handle used by the `PerturbedBridge` family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// No perturbation; the SDE degenerates to the c = 1 bridge.
    Zero,
    /// Componentwise `kappa * tanh(x_i)`. Satisfies |f|² ≤ κ²|x|² + κ².
    Tanh { kappa: f64 },
}

impl Perturbation {
    /// Evaluate the perturbation at (t, x), writing into `out`.
    pub fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Perturbation::Zero => out.fill(0.0),
            Perturbation::Tanh { kappa } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = kappa * xi.tanh();
                }
            }
        }
    }
}

/// A parametrized drift coefficient; the object every formula is indexed by.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftFamily {
    BridgeC {
        c: f64,
    },
    PowerAlpha {
        alpha: f64,
    },
    PerturbedBridge {
        /// Base bridge parameter (always 1 for the perturbative result).
        c: f64,
        delta: f64,
        /// Declared growth-bound constant: |f_pert(t,x)|² ≤ κ²|x|² + κ².
        kappa: f64,
        perturbation: Perturbation,
    },
}

impl DriftFamily {
    pub fn bridge(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Config(format!("BridgeC requires c > 0, got {c}")));
        }
        Ok(DriftFamily::BridgeC { c })
    }

    pub fn power_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::Config(format!("PowerAlpha requires alpha > 1, got {alpha}")));
        }
        Ok(DriftFamily::PowerAlpha { alpha })
    }

    /// The Novikov-compatible perturbed bridge. Requires 0 < delta < 1/2 and
    /// κ² ≤ (1 - 2 delta) / 4.
    pub fn perturbed(delta: f64, kappa: f64, perturbation: Perturbation) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Config(format!(
                "PerturbedBridge requires 0 < delta < 1/2, got {delta}"
            )));
        }
        if !(kappa >= 0.0) || kappa * kappa > (1.0 - 2.0 * delta) / 4.0 {
            return Err(Error::Config(format!(
                "PerturbedBridge requires kappa² ≤ (1 - 2 delta)/4; kappa = {kappa}, delta = {delta}"
            )));
        }
        Ok(DriftFamily::PerturbedBridge { c: 1.0, delta, kappa, perturbation })
    }

    /// Short label used in report headers.
    pub fn label(&self) -> String {
        match self {
            DriftFamily::BridgeC { c } => format!("bridge(c={c})"),
            DriftFamily::PowerAlpha { alpha } => format!("power(alpha={alpha})"),
            DriftFamily::PerturbedBridge { delta, kappa, .. } => {
                format!("perturbed(delta={delta},kappa={kappa})")
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Domain(format!("time argument must lie in [0, 1), got {t}")));
    }
    Ok(())
}

/// The drift coefficient f(t) of the family at time t.
///
/// `PerturbedBridge` has a state-dependent drift and is rejected here; its
/// simulation lives in the path sampler.
pub fn drift_coefficient(fam: &DriftFamily, t: f64) -> Result<f64> {
    check_time(t)?;
    match fam {
        DriftFamily::BridgeC { c } => Ok(c / (1.0 - t)),
        DriftFamily::PowerAlpha { alpha } => Ok((1.0 - t).powf(-alpha)),
        DriftFamily::PerturbedBridge { .. } => Err(Error::Unsupported(
            "PerturbedBridge has a state-dependent drift; use the path sampler".into(),
        )),
    }
}

/// The exponent ∫_0^t f(s) ds of the integrating factor Φ(f).
///
/// Monotone nondecreasing in t and divergent as t → 1.
pub fn log_phi(fam: &DriftFamily, t: f64) -> Result<f64> {
    check_time(t)?;
    match fam {
        DriftFamily::BridgeC { c } => Ok(-c * (-t).ln_1p()),
        DriftFamily::PowerAlpha { alpha } => {
            Ok(((1.0 - t).powf(1.0 - alpha) - 1.0) / (alpha - 1.0))
        }
        DriftFamily::PerturbedBridge { .. } => Err(Error::Unsupported(
            "PerturbedBridge has no scalar integrating factor".into(),
        )),
    }
}

/// The kernel G_f(s, t) = f(s) exp(-∫_s^t f).
pub fn aii_kernel(fam: &DriftFamily, s: f64, t: f64) -> Result<f64> {
    if s > t {
        return Err(Error::Domain(format!("aii_kernel requires s ≤ t, got s = {s}, t = {t}")));
    }
    check_time(t)?;
    check_time(s)?;
    let f_s = drift_coefficient(fam, s)?;
    Ok(f_s * (log_phi(fam, s)? - log_phi(fam, t)?).exp())
}

/// Mass of the kernel: ∫_0^{t0} G_f(s, t) ds in closed form.
///
/// With `t0 = None` (full mass up to t) this is 1 - exp(-∫_0^t f); it tends
/// to 1 as t → 1. With a fixed t0 < t the partial mass tends to 0.
pub fn aii_mass(fam: &DriftFamily, t: f64, t0: Option<f64>) -> Result<f64> {
    check_time(t)?;
    let lt = log_phi(fam, t)?;
    match t0 {
        None => Ok(-(-lt).exp_m1()),
        Some(t0) => {
            if !(0.0..=t).contains(&t0) {
                return Err(Error::Domain(format!(
                    "aii_mass requires 0 ≤ t0 ≤ t, got t0 = {t0}, t = {t}"
                )));
            }
            let lt0 = log_phi(fam, t0)?;
            Ok((-lt).exp() * lt0.exp_m1())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::quad_oracle;

    #[test]
    fn drift_coefficient_values() {
        let b = DriftFamily::bridge(1.0).unwrap();
        assert_eq!(drift_coefficient(&b, 0.5).unwrap(), 2.0);
        let p = DriftFamily::power_alpha(2.0).unwrap();
        assert!((drift_coefficient(&p, 0.9).unwrap() - 100.0).abs() < 1e-10);
        let b = DriftFamily::bridge(0.75).unwrap();
        assert_eq!(drift_coefficient(&b, 0.0).unwrap(), 0.75);
    }

    #[test]
    fn drift_domain_errors() {
        let b = DriftFamily::bridge(1.0).unwrap();
        assert!(drift_coefficient(&b, 1.0).is_err());
        assert!(drift_coefficient(&b, -0.1).is_err());
        let pert = DriftFamily::perturbed(0.25, 0.35, Perturbation::Zero).unwrap();
        assert!(matches!(drift_coefficient(&pert, 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn perturbed_bound_rejected() {
        // kappa² = 0.1225 ≤ (1 - 0.5)/4 = 0.125 passes; 0.36 does not.
        assert!(DriftFamily::perturbed(0.25, 0.35, Perturbation::Zero).is_ok());
        assert!(DriftFamily::perturbed(0.25, 0.6, Perturbation::Zero).is_err());
        assert!(DriftFamily::perturbed(0.6, 0.1, Perturbation::Zero).is_err());
    }

    #[test]
    fn log_phi_closed_forms_match_quadrature() {
        let b = DriftFamily::bridge(2.0).unwrap();
        let v = log_phi(&b, 0.5).unwrap();
        assert!((v - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
        let q = quad_oracle(&|s| drift_coefficient(&b, s).unwrap(), 0.0, 0.5, 1e-12).unwrap();
        assert!((v - q).abs() < 1e-10);

        let p = DriftFamily::power_alpha(2.0).unwrap();
        let v = log_phi(&p, 0.5).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let q = quad_oracle(&|s| drift_coefficient(&p, s).unwrap(), 0.0, 0.5, 1e-12).unwrap();
        assert!((v - q).abs() < 1e-10);

        assert_eq!(log_phi(&b, 0.0).unwrap(), 0.0);
        assert_eq!(log_phi(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn aii_kernel_values() {
        let b = DriftFamily::bridge(1.0).unwrap();
        // closed form (1-t)/(1-s)² for c = 1
        let v = aii_kernel(&b, 0.0, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let v = aii_kernel(&b, 0.3, 0.3).unwrap();
        assert!((v - 1.0 / 0.7).abs() < 1e-12);
        let p = DriftFamily::power_alpha(2.0).unwrap();
        let v = aii_kernel(&p, 0.0, 0.5).unwrap();
        assert!((v - (-1.0_f64).exp()).abs() < 1e-12);
        assert!(aii_kernel(&b, 0.6, 0.5).is_err());
    }

    #[test]
    fn aii_mass_values() {
        let b = DriftFamily::bridge(1.0).unwrap();
        let v = aii_mass(&b, 0.75, None).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
        // condition (1): mass → 1
        let v = aii_mass(&b, 1.0 - 1e-6, None).unwrap();
        assert!((v - 0.999999).abs() < 1e-9);
        // condition (2): partial mass at fixed t0 → 0
        let v = aii_mass(&b, 1.0 - 1e-6, Some(0.5)).unwrap();
        assert!(v > 0.0 && v < 2.1e-6, "got {v}");
        assert!(aii_mass(&b, 0.5, Some(0.6)).is_err());
    }

    #[test]
    fn aii_mass_matches_kernel_quadrature() {
        for fam in [DriftFamily::bridge(0.75).unwrap(), DriftFamily::power_alpha(1.5).unwrap()] {
            let t = 0.9;
            let full = aii_mass(&fam, t, None).unwrap();
            let q = quad_oracle(&|s| aii_kernel(&fam, s, t).unwrap(), 0.0, t, 1e-11).unwrap();
            assert!((full - q).abs() < 1e-9, "{fam:?}: {full} vs {q}");
            let part = aii_mass(&fam, t, Some(0.4)).unwrap();
            let q = quad_oracle(&|s| aii_kernel(&fam, s, t).unwrap(), 0.0, 0.4, 1e-11).unwrap();
            assert!((part - q).abs() < 1e-9);
        }
    }

    #[test]
    fn mass_monotone_in_t() {
        for fam in [DriftFamily::bridge(0.6).unwrap(), DriftFamily::power_alpha(2.0).unwrap()] {
            let mut prev = 0.0;
            for k in 1..20 {
                let t = 1.0 - 2.0_f64.powi(-k);
                let m = aii_mass(&fam, t, None).unwrap();
                assert!(m >= prev, "mass not monotone for {fam:?} at k = {k}");
                prev = m;
            }
            assert!(prev > 0.999);
        }
    }
}
