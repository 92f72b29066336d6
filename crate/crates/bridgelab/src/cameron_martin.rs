//! Discretized Cameron–Martin machinery.
//!
//! The Cameron–Martin space of the bridge with drift coefficient f is the
//! image of H under the transform
//!
//!   T(h)(t) = e^{−L(t)} ∫_0^t e^{L(s)} ḣ(s) ds,   L = ∫_0^· f,
//!
//! with inverse ḣ = k̇ + f k. `apply_T`/`apply_T_inv` realize both on grid
//! functions; `lemma1_g` checks the L² estimate ‖g‖ ≤ 2/(2c−1)·‖f‖ for the
//! averaging operator behind the c > 1/2 membership proof; the three
//! diagnostics quantify (non-)membership as clamped-integral trends in ε.

use crate::drift::{drift_coefficient, log_phi, DriftFamily};
use crate::error::{Error, Result};
use crate::grid::{FnTag, GridFunction};
use crate::stats::{line_fit, LineFit};
use serde::Serialize;
use std::sync::Arc;

/// Verdict of a divergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Divergent,
    Inconclusive,
}

/// A clamped-integral trend: ordinates against abscissae (ε or n values),
/// a log-log regression, and a classification.
#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    pub verdict: Verdict,
}

/// Classify a sequence of clamped integrals I(ε) over decreasing ε.
///
/// Rules, in order: near-zero throughout → bounded; Cauchy-flat (last two
/// steps each change the value by < 1%) → bounded; log-log slope ≥ 0.1 with
/// R² ≥ 0.99 → divergent; strictly increasing with last/first ratio ≥ 2 →
/// divergent (catches logarithmic growth, whose log-log fit is too curved
/// for the R² gate); otherwise inconclusive.
pub fn classify_trend(eps: &[f64], vals: &[f64]) -> TrendReport {
    assert_eq!(eps.len(), vals.len());
    let n = vals.len();
    let max = vals.iter().cloned().fold(0.0, f64::max);
    if max <= 1e-14 {
        return TrendReport {
            abscissae: eps.to_vec(),
            ordinates: vals.to_vec(),
            slope: 0.0,
            r2: 1.0,
            verdict: Verdict::Bounded,
        };
    }
    let lx: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ly: Vec<f64> = vals.iter().map(|v| v.max(1e-300).ln()).collect();
    let fit: LineFit = line_fit(&lx, &ly);
    let flat = n >= 3
        && (vals[n - 1] - vals[n - 2]).abs() < 0.01 * vals[n - 1].abs()
        && (vals[n - 2] - vals[n - 3]).abs() < 0.01 * vals[n - 2].abs();
    let increasing = vals.windows(2).all(|w| w[1] > w[0]);
    let verdict = if flat {
        Verdict::Bounded
    } else if fit.slope >= 0.1 && fit.r2 >= 0.99 {
        Verdict::Divergent
    } else if increasing && vals[n - 1] / vals[0] >= 2.0 {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    };
    TrendReport {
        abscissae: eps.to_vec(),
        ordinates: vals.to_vec(),
        slope: fit.slope,
        r2: fit.r2,
        verdict,
    }
}

fn require_tag(f: &GridFunction, tag: FnTag, what: &str) -> Result<()> {
    if f.tag != tag {
        return Err(Error::Config(format!("{what} must carry the {tag:?} tag")));
    }
    Ok(())
}

/// The transform k = T(h) from a derivative ḣ, by the left-point rule.
///
/// Computed through the stable recurrence
/// k(t_{j+1}) = e^{L(t_j) − L(t_{j+1})} (k(t_j) + ḣ(t_j) Δt_j), which never
/// forms the huge factor e^{L} itself.
pub fn apply_t(fam: &DriftFamily, hdot: &GridFunction) -> Result<GridFunction> {
    require_tag(hdot, FnTag::Derivative, "apply_t input")?;
    let grid = &hdot.grid;
    let n = grid.len();
    let mut k = vec![0.0; n];
    let mut l_prev = log_phi(fam, grid.node(0))?;
    for j in 0..n - 1 {
        let l_next = log_phi(fam, grid.node(j + 1))?;
        k[j + 1] = (l_prev - l_next).exp() * (k[j] + hdot.values[j] * grid.dt(j));
        l_prev = l_next;
    }
    GridFunction::new(Arc::clone(grid), k, FnTag::Function)
}

/// The inverse transform ḣ = k̇ + f·k, with k̇ by centered differences in
/// the interior and one-sided differences at the endpoints.
pub fn apply_t_inv(fam: &DriftFamily, k: &GridFunction) -> Result<GridFunction> {
    require_tag(k, FnTag::Function, "apply_t_inv input")?;
    if k.values[0] != 0.0 {
        return Err(Error::Config(format!(
            "apply_t_inv requires k(0) = 0, got {}",
            k.values[0]
        )));
    }
    let grid = &k.grid;
    let n = grid.len();
    let v = &k.values;
    let mut hdot = vec![0.0; n];
    for j in 0..n {
        let kdot = if j == 0 {
            (v[1] - v[0]) / grid.dt(0)
        } else if j == n - 1 {
            (v[n - 1] - v[n - 2]) / grid.dt(n - 2)
        } else {
            (v[j + 1] - v[j - 1]) / (grid.node(j + 1) - grid.node(j - 1))
        };
        hdot[j] = kdot + drift_coefficient(fam, grid.node(j))? * v[j];
    }
    GridFunction::new(Arc::clone(grid), hdot, FnTag::Derivative)
}

/// The Lemma-2.2 averaging operator and its norm quotient:
///
///   g(x) = (1−x)^{c−1} ∫_0^x f(y) (1−y)^{−c} dy,   ratio = ‖g‖/‖f‖.
pub fn lemma1_g(c: f64, f: &GridFunction) -> Result<(GridFunction, f64)> {
    if !(c > 0.5 && c <= 3.0) {
        return Err(Error::Domain(format!("lemma1_g requires c ∈ (1/2, 3], got {c}")));
    }
    let norm_f = f.l2_norm();
    if !(norm_f > 0.0) {
        return Err(Error::Domain("lemma1_g requires ‖f‖ > 0".into()));
    }
    let grid = &f.grid;
    let n = grid.len();
    let mut g = vec![0.0; n];
    for j in 0..n - 1 {
        let d0 = grid.dist_to_end(j);
        let d1 = grid.dist_to_end(j + 1);
        // same telescoped left-point rule as apply_t
        g[j + 1] = (d1 / d0).powf(c - 1.0) * (g[j] + f.values[j] * grid.dt(j) / d0);
    }
    let g = GridFunction::new(Arc::clone(grid), g, FnTag::Function)?;
    let ratio = g.l2_norm() / norm_f;
    Ok((g, ratio))
}

fn check_eps_list(grid: &crate::grid::TimeGrid, eps_list: &[f64]) -> Result<()> {
    if eps_list.len() < 3 {
        return Err(Error::Config("diagnostics need at least 3 ε values".into()));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config("ε list must decrease strictly".into()));
        }
    }
    let min = *eps_list.last().unwrap();
    if grid.eps_min() > min * (1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "grid stops at 1 − {} but the ε list reaches 1 − {min}",
            grid.eps_min()
        )));
    }
    Ok(())
}

/// Trapezoid integral of `values²` over the nodes with t ≤ 1 − ε.
fn clamped_square_integral(grid: &crate::grid::TimeGrid, values: &[f64], eps: f64) -> f64 {
    let cutoff = 1.0 - eps;
    let mut acc = 0.0;
    for j in 0..grid.len() - 1 {
        if grid.node(j + 1) > cutoff + 1e-15 {
            break;
        }
        acc += 0.5 * grid.dt(j) * (values[j] * values[j] + values[j + 1] * values[j + 1]);
    }
    acc
}

/// Clamped L² trend of the tail quotient (h(1) − h(u))/(1−u).
///
/// h(1) is approximated by the value at the last node; ε runs over
/// 2⁻³..2⁻¹⁴, so the grid must reach at least 1 − 2⁻¹⁴.
pub fn tail_quotient_check(h: &GridFunction) -> Result<TrendReport> {
    require_tag(h, FnTag::Function, "tail_quotient_check input")?;
    let grid = &h.grid;
    let eps_list: Vec<f64> = (3..=14).map(|k| 2.0_f64.powi(-k)).collect();
    check_eps_list(grid, &eps_list)?;
    let h1 = *h.values.last().unwrap();
    let quot: Vec<f64> = (0..grid.len())
        .map(|j| (h1 - h.values[j]) / grid.dist_to_end(j))
        .collect();
    let vals: Vec<f64> = eps_list
        .iter()
        .map(|&e| clamped_square_integral(grid, &quot, e))
        .collect();
    Ok(classify_trend(&eps_list, &vals))
}

/// Membership diagnostic for c > 1/2-type families: trend of
/// I(ε) = ∫_0^{1−ε} (f(t) k(t))² dt for a candidate k ∈ H_{0,0}.
pub fn membership_diagnostic(
    fam: &DriftFamily,
    k: &GridFunction,
    eps_list: &[f64],
) -> Result<TrendReport> {
    require_tag(k, FnTag::Function, "membership_diagnostic input")?;
    let grid = &k.grid;
    check_eps_list(grid, eps_list)?;
    if k.values[0] != 0.0 {
        return Err(Error::Config("membership candidate must vanish at t = 0".into()));
    }
    let max = k.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if k.values.last().unwrap().abs() > 0.1 * max + 1e-12 {
        return Err(Error::Config(
            "membership candidate must (approximately) vanish at the last node".into(),
        ));
    }
    let fk: Vec<f64> = (0..grid.len())
        .map(|j| Ok(drift_coefficient(fam, grid.node(j))? * k.values[j]))
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = eps_list
        .iter()
        .map(|&e| clamped_square_integral(grid, &fk, e))
        .collect();
    Ok(classify_trend(eps_list, &vals))
}

/// Necessity diagnostic for c ≤ 1/2: trend of
/// J(ε) = ∫_0^{1−ε} (1−t)^{2c−2} |∫_0^t ḣ(s)(1−s)^{−c} ds|² dt.
pub fn subhalf_diagnostic(
    c: f64,
    hdot: &GridFunction,
    eps_list: &[f64],
) -> Result<TrendReport> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("subhalf_diagnostic requires c > 0, got {c}")));
    }
    if c > 0.5 {
        return Err(Error::Domain(format!(
            "subhalf_diagnostic requires c ≤ 1/2, got {c}; use membership_diagnostic"
        )));
    }
    require_tag(hdot, FnTag::Derivative, "subhalf_diagnostic input")?;
    let grid = &hdot.grid;
    check_eps_list(grid, eps_list)?;
    let n = grid.len();
    // left-point cumulative inner integral, then the weighted square
    let mut inner = vec![0.0; n];
    for j in 0..n - 1 {
        inner[j + 1] = inner[j] + hdot.values[j] * grid.dist_to_end(j).powf(-c) * grid.dt(j);
    }
    let weighted: Vec<f64> = (0..n)
        .map(|j| grid.dist_to_end(j).powf(c - 1.0) * inner[j])
        .collect();
    let vals: Vec<f64> = eps_list
        .iter()
        .map(|&e| clamped_square_integral(grid, &weighted, e))
        .collect();
    Ok(classify_trend(eps_list, &vals))
}

/// The standard H_{0,0} test battery: t^p(1−t)^q polynomials (p, q ≥ 1) and
/// sinusoids vanishing at both endpoints.
pub fn h00_battery(grid: &Arc<crate::grid::TimeGrid>) -> Result<Vec<GridFunction>> {
    let mut out = Vec::new();
    for p in 1..=5usize {
        for q in 1..=5usize {
            out.push(GridFunction::sample(grid, FnTag::Function, |t| {
                t.powi(p as i32) * (1.0 - t).powi(q as i32)
            })?);
        }
    }
    for m in 1..=25usize {
        out.push(GridFunction::sample(grid, FnTag::Function, |t| {
            (std::f64::consts::PI * m as f64 * t).sin() * t * (1.0 - t)
        })?);
    }
    Ok(out)
}
