//! Exponential-martingale Monte Carlo.
//!
//! Changing the bridge parameter from 1 to c tilts the path law by the
//! exponential (local) martingale
//!
//!   M_t = exp( ∫_0^t ⟨(1−c) z_s/(1−s), dB_s⟩ − ½ ∫_0^t (1−c)² |z_s|²/(1−s)² ds ),
//!
//! which is a true martingale on [0, 1) — so E M_t = 1 for every t < 1 —
//! but loses its mass as t → 1 for c ≠ 1: the median of M_{1−ε} collapses
//! to 0 while the mean stays pinned at 1. The perturbed bridge of the
//! Novikov example behaves oppositely: its density stays bounded away from
//! 0 in median, witnessing equivalence. Brownian increments are
//! reconstructed from the sampled bridge paths, so exact and Euler
//! ensembles share one density code path.

use crate::drift::DriftFamily;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::sampler::{exact_path_map, perturbed_path_map, PathEnsemble};
use crate::stats::{mean_se_from_sums, median, quantile};
use serde::Serialize;
use std::sync::Arc;

/// Per-path log-density values at a set of marked grid nodes.
///
/// Only the marks are stored (log M_0 = 0 always holds and is not
/// duplicated), so large ensembles can be traced at a handful of times
/// without materializing an n_paths × n_nodes array.
#[derive(Debug, Clone)]
pub struct MartingaleTrace {
    pub grid: Arc<TimeGrid>,
    /// Node indices at which the log-density is recorded, increasing.
    pub mark_indices: Vec<usize>,
    /// `log_m[i][p]` = log M at mark i on path p.
    pub log_m: Vec<Vec<f64>>,
}

/// Summary statistics of M_t at one mark.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MartingaleStat {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    /// Median < 0.01 while the mean stays within 3 SE of 1: the strict-
    /// local-martingale signature of the c ≠ 1 collapse.
    pub mass_collapse: bool,
}

fn validate_marks(grid: &TimeGrid, marks: &[usize]) -> Result<()> {
    if marks.is_empty() || marks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("mark indices must be nonempty and increasing".into()));
    }
    if *marks.last().unwrap() >= grid.len() {
        return Err(Error::Config("mark index beyond the grid".into()));
    }
    Ok(())
}

/// Accumulate log M along one bridge path for a parameter change 1 → c.
///
/// ΔB is reconstructed from the path by the left-point rule:
/// ΔB_k = Δz_k + z_k/(1−t_k)·Δt_k.
fn log_density_along_path(
    grid: &TimeGrid,
    buf: &[f64],
    dim: usize,
    c_target: f64,
    marks: &[usize],
) -> Vec<f64> {
    let gap = 1.0 - c_target;
    let mut out = Vec::with_capacity(marks.len());
    let mut log_m = 0.0;
    let mut next = 0;
    if marks[0] == 0 {
        out.push(0.0);
        next = 1;
    }
    for k in 0..grid.len() - 1 {
        let dt = grid.dt(k);
        let inv = 1.0 / grid.dist_to_end(k);
        let mut dot = 0.0;
        let mut z2 = 0.0;
        for d in 0..dim {
            let z = buf[k * dim + d];
            let db = buf[(k + 1) * dim + d] - z + z * inv * dt;
            dot += z * db;
            z2 += z * z;
        }
        log_m += gap * inv * dot - 0.5 * gap * gap * inv * inv * z2 * dt;
        if next < marks.len() && marks[next] == k + 1 {
            out.push(log_m);
            next += 1;
        }
    }
    out
}

fn assemble_trace(
    grid: &Arc<TimeGrid>,
    marks: &[usize],
    per_path: Vec<Vec<f64>>,
) -> MartingaleTrace {
    let n_paths = per_path.len();
    let mut log_m = vec![Vec::with_capacity(n_paths); marks.len()];
    for row in per_path {
        for (i, v) in row.into_iter().enumerate() {
            log_m[i].push(v);
        }
    }
    MartingaleTrace { grid: Arc::clone(grid), mark_indices: marks.to_vec(), log_m }
}

/// Log-density trace of the 1 → c_target change along a materialized c = 1
/// ensemble, recorded at every grid node.
pub fn log_rn_bridge(ens: &PathEnsemble, c_target: f64) -> Result<MartingaleTrace> {
    match ens.family {
        DriftFamily::BridgeC { c } if c == 1.0 => {}
        _ => {
            return Err(Error::ContractViolation(
                "log_rn_bridge requires an ensemble sampled under BridgeC c = 1".into(),
            ))
        }
    }
    let marks: Vec<usize> = (0..ens.grid.len()).collect();
    let per_path: Vec<Vec<f64>> = (0..ens.n_paths)
        .map(|p| log_density_along_path(&ens.grid, ens.path(p), ens.dim, c_target, &marks))
        .collect();
    Ok(assemble_trace(&ens.grid, &marks, per_path))
}

/// Streaming variant: samples c = 1 bridge paths exactly and records the
/// log-density only at the given marks, without materializing the ensemble.
pub fn log_rn_bridge_streaming(
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    c_target: f64,
    marks: &[usize],
) -> Result<MartingaleTrace> {
    validate_marks(grid, marks)?;
    let fam = DriftFamily::BridgeC { c: 1.0 };
    let per_path = exact_path_map(&fam, grid, dim, n_paths, seed, |_, buf| {
        log_density_along_path(grid, buf, dim, c_target, marks)
    })?;
    Ok(assemble_trace(grid, marks, per_path))
}

/// Density trace of the perturbed bridge against the c = 1 base, plus the
/// L² norms of log M = N_t − ½⟨N⟩_t at the marks (the quantity whose
/// boundedness carries the L²-convergence argument).
pub struct PerturbedRn {
    pub trace: MartingaleTrace,
    /// sqrt(E[(log M_{t_i})²]) per mark.
    pub l2_log: Vec<f64>,
}

/// Run the perturbed sampler and assemble its Girsanov density trace.
pub fn perturbed_rn(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    marks: &[usize],
) -> Result<PerturbedRn> {
    validate_marks(grid, marks)?;
    let per_path = perturbed_path_map(fam, grid, dim, n_paths, seed, |_, path| {
        marks.iter().map(|&k| path.log_rn[k]).collect::<Vec<f64>>()
    })?;
    let trace = assemble_trace(grid, marks, per_path);
    let l2_log = trace
        .log_m
        .iter()
        .map(|xs| (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64).sqrt())
        .collect();
    Ok(PerturbedRn { trace, l2_log })
}

/// The deterministic Novikov ceiling exp((1 + sup_sq)·κ²/(2(1−2δ))) for the
/// exponential of the quadratic-variation half.
pub fn novikov_bound(delta: f64, kappa: f64, sup_sq: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain(format!(
            "novikov_bound requires 0 < delta < 1/2, got {delta}"
        )));
    }
    if !(kappa >= 0.0 && sup_sq >= 0.0) {
        return Err(Error::Domain("novikov_bound requires kappa, sup_sq ≥ 0".into()));
    }
    Ok(((1.0 + sup_sq) * kappa * kappa / (2.0 * (1.0 - 2.0 * delta))).exp())
}

impl MartingaleTrace {
    /// Summary statistics of M_t at the marks whose node values appear in
    /// `t_list` (within 1e-12).
    pub fn summary(&self, t_list: &[f64]) -> Result<Vec<MartingaleStat>> {
        let mut out = Vec::with_capacity(t_list.len());
        for &t in t_list {
            let slot = self
                .mark_indices
                .iter()
                .position(|&k| (self.grid.node(k) - t).abs() <= 1e-12)
                .ok_or_else(|| {
                    Error::Config(format!("t = {t} is not a marked grid node of the trace"))
                })?;
            out.push(stat_at(self.grid.node(self.mark_indices[slot]), &self.log_m[slot]));
        }
        Ok(out)
    }

    /// Summary at every mark.
    pub fn summary_all(&self) -> Vec<MartingaleStat> {
        self.mark_indices
            .iter()
            .zip(&self.log_m)
            .map(|(&k, xs)| stat_at(self.grid.node(k), xs))
            .collect()
    }
}

fn stat_at(t: f64, log_m: &[f64]) -> MartingaleStat {
    let n = log_m.len() as u64;
    let (mut s, mut s2) = (0.0, 0.0);
    let mut m: Vec<f64> = Vec::with_capacity(log_m.len());
    for &l in log_m {
        let v = l.exp();
        s += v;
        s2 += v * v;
        m.push(v);
    }
    let ms = mean_se_from_sums(n, s, s2);
    let med = median(&m);
    MartingaleStat {
        t,
        mean: ms.mean,
        se: ms.se,
        median: med,
        q05: quantile(&m, 0.05),
        q95: quantile(&m, 0.95),
        mass_collapse: med < 0.01 && (ms.mean - 1.0).abs() <= 3.0 * ms.se,
    }
}
