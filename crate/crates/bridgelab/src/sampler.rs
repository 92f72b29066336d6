//! Path ensembles of the generalised bridges.
//!
//! Two simulation schemes are provided. The exact sampler uses the explicit
//! solution of dz = dB − f(t) z dt: between grid nodes the process is a
//! Gaussian Markov transition z(t′) = a z(t) + σ ξ with
//!
//!   a = exp(L(t) − L(t′)),   σ² = e^{−2L(t′)} ∫_t^{t′} e^{2L(s)} ds,
//!
//! where L = log_phi is the integrating-factor exponent. The Euler–Maruyama
//! sampler discretizes the SDE directly, sub-dividing any step on which
//! f·Δt > 1 so the singular drift never overshoots. Both consume one
//! counter-based substream per path, so ensembles are bitwise reproducible
//! independent of thread count; `exact_path_map`/`em_path_map` run a
//! reduction over paths without materializing the whole ensemble.

use crate::drift::{drift_coefficient, log_phi, DriftFamily};
use crate::error::{Error, Result};
use crate::grid::{GridKind, TimeGrid};
use crate::kernels::cov_q;
use crate::quad::quad_oracle;
use crate::rng::Stream;
use crate::stats::{mean_se_from_sums, MeanSe};
use rayon::prelude::*;
use std::io::{Read, Write};
use std::sync::Arc;

pub use crate::grid::make_grid;

/// N sampled paths on a grid, stored path-major then node-major then
/// coordinate: `values[(p * nodes + k) * dim + d]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: Arc<TimeGrid>,
    pub dim: usize,
    pub n_paths: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub family: DriftFamily,
}

impl PathEnsemble {
    /// The full (nodes × dim) slice of path `p`.
    pub fn path(&self, p: usize) -> &[f64] {
        let stride = self.grid.len() * self.dim;
        &self.values[p * stride..(p + 1) * stride]
    }

    /// Coordinate `d` of path `p` at node `k`.
    pub fn value(&self, p: usize, k: usize, d: usize) -> f64 {
        self.values[(p * self.grid.len() + k) * self.dim + d]
    }

    /// Write the ensemble as CSV with columns path_id, t, x0..x{dim-1}.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "path_id,t")?;
        for d in 0..self.dim {
            write!(w, ",x{d}")?;
        }
        writeln!(w)?;
        for p in 0..self.n_paths {
            for (k, &t) in self.grid.nodes().iter().enumerate() {
                write!(w, "{p},{t:.17e}")?;
                for d in 0..self.dim {
                    write!(w, ",{:.17e}", self.value(p, k, d))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Compact binary layout: magic `BRIDGENS`, version (u32 LE), dim (u32),
    /// n_paths (u64), node count (u64), then the values row-major as
    /// little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"BRIDGENS")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Shape and payload recovered from the binary layout.
pub struct BinaryEnsemble {
    pub dim: usize,
    pub n_paths: usize,
    pub n_nodes: usize,
    pub values: Vec<f64>,
}

/// Parse the binary layout written by `PathEnsemble::write_binary`.
pub fn read_binary<R: Read>(mut r: R) -> Result<BinaryEnsemble> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != b"BRIDGENS" {
        return Err(Error::Config("bad magic in binary ensemble".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != 1 {
        return Err(Error::Config("unknown binary ensemble version".into()));
    }
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n_paths = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n_nodes = u64::from_le_bytes(b8) as usize;
    let mut values = vec![0.0; dim * n_paths * n_nodes];
    for v in &mut values {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok(BinaryEnsemble { dim, n_paths, n_nodes, values })
}

/// Per-step exact transition coefficients (a_k, sigma_k) for every interval
/// of the grid.
pub fn exact_transition_coeffs(fam: &DriftFamily, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    match fam {
        DriftFamily::BridgeC { .. } | DriftFamily::PowerAlpha { .. } => {}
        DriftFamily::PerturbedBridge { .. } => {
            return Err(Error::Unsupported(
                "PerturbedBridge has no explicit solution; use sample_perturbed".into(),
            ))
        }
    }
    let n = grid.len() - 1;
    let mut a = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for k in 0..n {
        let t0 = grid.node(k);
        let t1 = grid.node(k + 1);
        let l1 = log_phi(fam, t1)?;
        a.push((log_phi(fam, t0)? - l1).exp());
        let var = match fam {
            DriftFamily::BridgeC { c } if (2.0 * c - 1.0).abs() >= 1e-3 => {
                // closed form (1−t′)^{2c} [(1−t′)^{1−2c} − (1−t)^{1−2c}]/(2c−1)
                let d0 = grid.dist_to_end(k);
                let d1 = grid.dist_to_end(k + 1);
                let x = 1.0 - 2.0 * c;
                d1.powf(2.0 * c) * (d1.powf(x) - d0.powf(x)) / (2.0 * c - 1.0)
            }
            _ => {
                // e^{−2L(t′)} ∫ e^{2L(s)} ds, integrand ≤ 1 so absolute
                // tolerance scales with the step length
                let tol = (1e-13 * (t1 - t0)).max(1e-18);
                quad_oracle(
                    &|s| (2.0 * (log_phi(fam, s).unwrap() - l1)).exp(),
                    t0,
                    t1,
                    tol,
                )?
            }
        };
        if !(var.is_finite() && var >= 0.0) {
            return Err(Error::NumericalFailure(format!(
                "transition variance {var} on step [{t0}, {t1}]"
            )));
        }
        sigma.push(var.sqrt());
    }
    Ok((a, sigma))
}

fn check_sampling_params(dim: usize, n_paths: usize) -> Result<()> {
    if dim == 0 || n_paths == 0 {
        return Err(Error::Config(format!(
            "dim and n_paths must be positive, got dim = {dim}, n_paths = {n_paths}"
        )));
    }
    Ok(())
}

/// Run `f` on every exact-sampler path without materializing the ensemble.
///
/// The closure receives the path index and the (nodes × dim) node-major path
/// buffer; results come back in path order. Paths are independent of thread
/// count because path `p` consumes only substream `p` of `seed`.
pub fn exact_path_map<T, F>(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
{
    check_sampling_params(dim, n_paths)?;
    let (a, sigma) = exact_transition_coeffs(fam, grid)?;
    let n_nodes = grid.len();
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = Stream::new(seed, p as u64);
            let mut buf = vec![0.0; n_nodes * dim];
            for k in 0..n_nodes - 1 {
                for d in 0..dim {
                    buf[(k + 1) * dim + d] = a[k] * buf[k * dim + d] + sigma[k] * rng.normal();
                }
            }
            f(p, &buf)
        })
        .collect())
}

/// Run `f` over Euler–Maruyama paths; see `exact_path_map` for the contract.
pub fn em_path_map<T, F>(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
{
    // reject PerturbedBridge (state-dependent drift) up front
    drift_coefficient(fam, 0.0)?;
    let fam = fam.clone();
    generic_em_map(
        move |t| drift_coefficient(&fam, t).unwrap(),
        grid,
        dim,
        n_paths,
        seed,
        f,
    )
}

/// Euler–Maruyama driven by an arbitrary time-dependent coefficient.
///
/// Steps with f·Δt > 1 are sub-divided into ⌈f·Δt⌉ equal sub-steps, each
/// with its own Brownian increment, so the singular drift never flips the
/// sign of the relaxation.
pub(crate) fn generic_em_map<T, F, D>(
    drift: D,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    check_sampling_params(dim, n_paths)?;
    let n_nodes = grid.len();
    let grid = Arc::clone(grid);
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = Stream::new(seed, p as u64);
            let mut buf = vec![0.0; n_nodes * dim];
            for k in 0..n_nodes - 1 {
                let dt = grid.dt(k);
                let t = grid.node(k);
                let subdiv = substeps(&drift, t, grid.node(k + 1), dt);
                let (prev, next) = buf.split_at_mut((k + 1) * dim);
                next[..dim].copy_from_slice(&prev[k * dim..]);
                let z = &mut next[..dim];
                let ddt = dt / subdiv as f64;
                let sq = ddt.sqrt();
                for j in 0..subdiv {
                    let fj = drift(t + j as f64 * ddt);
                    for zi in z.iter_mut() {
                        *zi += sq * rng.normal() - fj * *zi * ddt;
                    }
                }
            }
            f(p, &buf)
        })
        .collect())
}

/// Number of equal sub-steps needed so that every sub-step of [t0, t1]
/// satisfies f·δt ≤ 1 at its left endpoint. The drift is increasing on the
/// step, so the binding constraint is the last sub-step.
fn substeps<D: Fn(f64) -> f64>(drift: &D, t0: f64, t1: f64, dt: f64) -> usize {
    let mut m = (drift(t0) * dt).ceil().max(1.0) as usize;
    while drift(t1 - dt / m as f64) * (dt / m as f64) > 1.0 {
        m *= 2;
    }
    m
}

fn collect_ensemble(
    fam: DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    rows: Vec<Vec<f64>>,
) -> PathEnsemble {
    let mut values = Vec::with_capacity(n_paths * grid.len() * dim);
    for row in rows {
        values.extend_from_slice(&row);
    }
    PathEnsemble { grid: Arc::clone(grid), dim, n_paths, values, seed, family: fam }
}

/// Sample by exact Gaussian transitions (BridgeC and PowerAlpha only).
pub fn sample_exact(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let rows = exact_path_map(fam, grid, dim, n_paths, seed, |_, buf| buf.to_vec())?;
    Ok(collect_ensemble(fam.clone(), grid, dim, n_paths, seed, rows))
}

/// Sample by stabilized Euler–Maruyama.
pub fn sample_em(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let rows = em_path_map(fam, grid, dim, n_paths, seed, |_, buf| buf.to_vec())?;
    Ok(collect_ensemble(fam.clone(), grid, dim, n_paths, seed, rows))
}

/// Sample the classical bridge through its representation B_t − t B_1.
///
/// B is simulated on the grid nodes plus the endpoint t = 1; the returned
/// paths carry the c = 1 family tag.
pub fn sample_bb_rep(
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_sampling_params(dim, n_paths)?;
    let n_nodes = grid.len();
    let grid_ref = Arc::clone(grid);
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = Stream::new(seed, p as u64);
            let mut buf = vec![0.0; n_nodes * dim];
            // Brownian motion at the nodes
            for k in 0..n_nodes - 1 {
                let sq = grid_ref.dt(k).sqrt();
                for d in 0..dim {
                    buf[(k + 1) * dim + d] = buf[k * dim + d] + sq * rng.normal();
                }
            }
            // final increment to t = 1, then pin
            let sq = grid_ref.dist_to_end(n_nodes - 1).sqrt();
            let mut b1 = vec![0.0; dim];
            for (d, b) in b1.iter_mut().enumerate() {
                *b = buf[(n_nodes - 1) * dim + d] + sq * rng.normal();
            }
            for k in 0..n_nodes {
                let t = grid_ref.node(k);
                for d in 0..dim {
                    buf[k * dim + d] -= t * b1[d];
                }
            }
            buf
        })
        .collect();
    Ok(collect_ensemble(
        DriftFamily::BridgeC { c: 1.0 },
        grid,
        dim,
        n_paths,
        seed,
        rows,
    ))
}

/// One perturbed-bridge path together with its Girsanov log-density.
pub struct PerturbedPath<'a> {
    /// Euler–Maruyama path of the perturbed SDE (nodes × dim).
    pub perturbed: &'a [f64],
    /// Base c = 1 bridge path driven by the same Brownian increments.
    pub base: &'a [f64],
    /// Cumulative Girsanov log-density along the base path at each node.
    pub log_rn: &'a [f64],
}

/// Run `f` over perturbed-bridge paths.
///
/// For each path this evolves, with a shared Brownian driver, both the
/// perturbed SDE dx = dB − x/(1−t) dt + f_pert(t,x)/(1−t)^δ dt and the base
/// c = 1 bridge z, while accumulating the Girsanov log-density increments
///
///   ⟨f_pert(t,z)/(1−t)^δ, ΔB⟩ − ½ |f_pert(t,z)|²/(1−t)^{2δ} Δt
///
/// along the base path (left-point rule). The declared growth bound
/// |f_pert(t,x)|² ≤ κ²|x|² + κ² is asserted at every visited state of both
/// processes; a violation aborts with a contract error naming (t, x).
pub fn perturbed_path_map<T, F>(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, PerturbedPath) -> T + Sync,
{
    check_sampling_params(dim, n_paths)?;
    let (delta, kappa, pert) = match fam {
        DriftFamily::PerturbedBridge { delta, kappa, perturbation, .. } => {
            (*delta, *kappa, *perturbation)
        }
        _ => {
            return Err(Error::Unsupported(
                "perturbed sampling requires the PerturbedBridge family".into(),
            ))
        }
    };
    let n_nodes = grid.len();
    let grid = Arc::clone(grid);
    let check_bound = |t: f64, x: &[f64], fx: &[f64]| -> Result<()> {
        let fx2: f64 = fx.iter().map(|v| v * v).sum();
        let x2: f64 = x.iter().map(|v| v * v).sum();
        if fx2 > kappa * kappa * (x2 + 1.0) * (1.0 + 1e-12) {
            return Err(Error::ContractViolation(format!(
                "perturbation growth bound violated at t = {t}, x = {x:?}"
            )));
        }
        Ok(())
    };
    let results: Result<Vec<T>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = Stream::new(seed, p as u64);
            let mut xs = vec![0.0; n_nodes * dim];
            let mut zs = vec![0.0; n_nodes * dim];
            let mut log_rn = vec![0.0; n_nodes];
            let mut fx = vec![0.0; dim];
            let mut fz = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            let mut z = vec![0.0; dim];
            for k in 0..n_nodes - 1 {
                let dt = grid.dt(k);
                let t = grid.node(k);
                // sub-step by the base drift scale, as in sample_em
                let subdiv = substeps(&|u: f64| 1.0 / (1.0 - u), t, grid.node(k + 1), dt);
                let ddt = dt / subdiv as f64;
                let sq = ddt.sqrt();
                let mut dlog = 0.0;
                for j in 0..subdiv {
                    let tj = t + j as f64 * ddt;
                    let base_f = 1.0 / (1.0 - tj);
                    let pert_scale = (1.0 - tj).powf(-delta);
                    pert.eval(tj, &x, &mut fx);
                    check_bound(tj, &x, &fx)?;
                    pert.eval(tj, &z, &mut fz);
                    check_bound(tj, &z, &fz)?;
                    let mut dot = 0.0;
                    let mut fz2 = 0.0;
                    for d in 0..dim {
                        let db = sq * rng.normal();
                        x[d] += db - base_f * x[d] * ddt + pert_scale * fx[d] * ddt;
                        z[d] += db - base_f * z[d] * ddt;
                        dot += fz[d] * db;
                        fz2 += fz[d] * fz[d];
                    }
                    dlog += pert_scale * dot - 0.5 * pert_scale * pert_scale * fz2 * ddt;
                }
                xs[(k + 1) * dim..(k + 2) * dim].copy_from_slice(&x);
                zs[(k + 1) * dim..(k + 2) * dim].copy_from_slice(&z);
                log_rn[k + 1] = log_rn[k] + dlog;
            }
            Ok(f(p, PerturbedPath { perturbed: &xs, base: &zs, log_rn: &log_rn }))
        })
        .collect();
    results
}

/// Sample the perturbed SDE, returning the ensemble and the per-path
/// terminal Girsanov log-density along the matched base-bridge paths.
pub fn sample_perturbed(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(PathEnsemble, Vec<f64>)> {
    let rows = perturbed_path_map(fam, grid, dim, n_paths, seed, |_, path| {
        (path.perturbed.to_vec(), *path.log_rn.last().unwrap())
    })?;
    let mut values = Vec::with_capacity(n_paths * grid.len() * dim);
    let mut log_rn = Vec::with_capacity(n_paths);
    for (row, l) in rows {
        values.extend_from_slice(&row);
        log_rn.push(l);
    }
    let ens = PathEnsemble {
        grid: Arc::clone(grid),
        dim,
        n_paths,
        values,
        seed,
        family: fam.clone(),
    };
    Ok((ens, log_rn))
}

/// Monte Carlo statistics of the pathwise sup norm.
#[derive(Debug, Clone, Copy)]
pub struct SupNormStats {
    pub mean_sup: f64,
    pub mean_sup_se: f64,
    /// Estimate of E exp(a · sup²) with its standard error.
    pub exp_moment: f64,
    pub exp_moment_se: f64,
    /// Set when a ≥ 1/8, where the exponential moment may diverge.
    pub may_diverge: bool,
}

fn sup_stats_from_sups(sups: &[f64], a: f64) -> SupNormStats {
    let n = sups.len() as u64;
    let (mut s1, mut s2, mut e1, mut e2) = (0.0, 0.0, 0.0, 0.0);
    for &s in sups {
        s1 += s;
        s2 += s * s;
        let e = (a * s * s).exp();
        e1 += e;
        e2 += e * e;
    }
    let ms: MeanSe = mean_se_from_sums(n, s1, s2);
    let me: MeanSe = mean_se_from_sums(n, e1, e2);
    SupNormStats {
        mean_sup: ms.mean,
        mean_sup_se: ms.se,
        exp_moment: me.mean,
        exp_moment_se: me.se,
        may_diverge: a >= 0.125,
    }
}

/// Per-path sup of the Euclidean norm over the grid nodes.
pub fn path_sup_norm(buf: &[f64], dim: usize) -> f64 {
    buf.chunks_exact(dim)
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Sup-norm statistics of a materialized ensemble.
pub fn sup_norm_stats(ens: &PathEnsemble, a: f64) -> SupNormStats {
    let sups: Vec<f64> = (0..ens.n_paths)
        .map(|p| path_sup_norm(ens.path(p), ens.dim))
        .collect();
    sup_stats_from_sups(&sups, a)
}

/// Sup-norm statistics over exact-sampler paths without materializing them.
pub fn sup_norm_stats_streaming(
    fam: &DriftFamily,
    grid: &Arc<TimeGrid>,
    dim: usize,
    n_paths: usize,
    seed: u64,
    a: f64,
) -> Result<SupNormStats> {
    let sups = exact_path_map(fam, grid, dim, n_paths, seed, |_, buf| path_sup_norm(buf, dim))?;
    Ok(sup_stats_from_sups(&sups, a))
}

/// Default grid kinds re-exported for CLI convenience.
pub fn grid_kind_from_str(s: &str) -> Result<GridKind> {
    match s {
        "uniform" => Ok(GridKind::Uniform),
        "geometric" => Ok(GridKind::Geometric),
        other => Err(Error::Config(format!("unknown grid kind '{other}'"))),
    }
}

/// Empirical variance of coordinate 0 at node `k` over all paths.
pub fn node_variance(ens: &PathEnsemble, k: usize) -> f64 {
    let xs: Vec<f64> = (0..ens.n_paths).map(|p| ens.value(p, k, 0)).collect();
    crate::stats::variance(&xs)
}

/// The exact marginal variance cov_Q(c, t, t) for a BridgeC family.
pub fn exact_marginal_variance(fam: &DriftFamily, t: f64) -> Result<f64> {
    match fam {
        DriftFamily::BridgeC { c } => cov_q(*c, t, t),
        _ => Err(Error::Unsupported("marginal variance closed form requires BridgeC".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::Perturbation;

    fn arc_grid(g: TimeGrid) -> Arc<TimeGrid> {
        Arc::new(g)
    }

    #[test]
    fn classical_transition_coefficients() {
        // c = 1, t = 0 → 0.5: a = 0.5, σ² = 0.25
        let fam = DriftFamily::bridge(1.0).unwrap();
        let grid = TimeGrid::from_nodes(&[0.0, 0.5]).unwrap();
        let (a, sigma) = exact_transition_coeffs(&fam, &grid).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-14);
        assert!((sigma[0] * sigma[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn half_c_and_power_alpha_use_quadrature_consistently() {
        // closed form at c just outside the band vs quadrature inside it
        let grid = TimeGrid::from_nodes(&[0.0, 0.3, 0.7]).unwrap();
        let fam_a = DriftFamily::bridge(0.5006).unwrap();
        let fam_b = DriftFamily::bridge(0.5004).unwrap();
        let (_, s_a) = exact_transition_coeffs(&fam_a, &grid).unwrap();
        let (_, s_b) = exact_transition_coeffs(&fam_b, &grid).unwrap();
        for (x, y) in s_a.iter().zip(&s_b) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
        let fam = DriftFamily::power_alpha(1.5).unwrap();
        let (a, s) = exact_transition_coeffs(&fam, &grid).unwrap();
        assert!(a.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(s.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn exact_marginal_matches_cov_q() {
        // one long transition must reproduce the marginal variance exactly
        let fam = DriftFamily::bridge(0.75).unwrap();
        let grid = TimeGrid::from_nodes(&[0.0, 0.6]).unwrap();
        let (_, sigma) = exact_transition_coeffs(&fam, &grid).unwrap();
        let v = exact_marginal_variance(&fam, 0.6).unwrap();
        assert!((sigma[0] * sigma[0] - v).abs() < 1e-13);
    }

    #[test]
    fn samplers_are_deterministic() {
        let grid = arc_grid(TimeGrid::geometric(16, 1e-2).unwrap());
        let fam = DriftFamily::bridge(1.0).unwrap();
        let a = sample_exact(&fam, &grid, 2, 3, 99).unwrap();
        let b = sample_exact(&fam, &grid, 2, 3, 99).unwrap();
        assert_eq!(a.values.len(), b.values.len());
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let a = sample_em(&fam, &grid, 2, 3, 99).unwrap();
        let b = sample_em(&fam, &grid, 2, 3, 99).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let a = sample_bb_rep(&grid, 1, 3, 5).unwrap();
        let b = sample_bb_rep(&grid, 1, 3, 5).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn paths_start_at_zero() {
        let grid = arc_grid(TimeGrid::uniform(8, 1e-2).unwrap());
        let fam = DriftFamily::bridge(2.0).unwrap();
        let ens = sample_exact(&fam, &grid, 3, 4, 1).unwrap();
        for p in 0..4 {
            for d in 0..3 {
                assert_eq!(ens.value(p, 0, d), 0.0);
            }
        }
    }

    #[test]
    fn streaming_matches_materialized() {
        let grid = arc_grid(TimeGrid::geometric(32, 1e-3).unwrap());
        let fam = DriftFamily::bridge(0.75).unwrap();
        let ens = sample_exact(&fam, &grid, 2, 5, 7).unwrap();
        let rows = exact_path_map(&fam, &grid, 2, 5, 7, |_, buf| buf.to_vec()).unwrap();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        assert!(ens.values.iter().zip(&flat).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn em_zero_drift_is_brownian() {
        // f ≡ 0 degenerate case: Var z(t) = t
        let grid = arc_grid(TimeGrid::uniform(16, 0.2).unwrap());
        let n_paths = 20_000;
        let terminal: Vec<f64> =
            generic_em_map(|_| 0.0, &grid, 1, n_paths, 11, |_, buf| *buf.last().unwrap())
                .unwrap();
        let v = crate::stats::variance(&terminal);
        let t = 0.8;
        let se = t * (2.0 / n_paths as f64).sqrt();
        assert!((v - t).abs() < 3.0 * se, "var {v} vs {t}");
    }

    #[test]
    fn em_substepping_triggers_near_endpoint() {
        // uniform grid with dt = 0.0999 has f·dt > 1 at the last steps for
        // c = 2; the sampler must stay finite and small at the last node
        let grid = arc_grid(TimeGrid::uniform(10, 1e-3).unwrap());
        let fam = DriftFamily::bridge(2.0).unwrap();
        let ens = sample_em(&fam, &grid, 1, 2_000, 3).unwrap();
        let last = grid.len() - 1;
        let v = node_variance(&ens, last);
        // without stabilization the f·Δt ≈ 2 steps overshoot and the
        // variance inflates by orders of magnitude
        assert!(v.is_finite() && v < 0.05, "terminal variance {v}");
        // the sub-step count must respect f·δt ≤ 1 across the whole step
        let f = |t: f64| 2.0 / (1.0 - t);
        let m = super::substeps(&f, grid.node(9), grid.node(10), grid.dt(9));
        let ddt = grid.dt(9) / m as f64;
        assert!(f(grid.node(10) - ddt) * ddt <= 1.0);
    }

    #[test]
    fn bb_rep_moments() {
        let grid = arc_grid(TimeGrid::from_nodes(&[0.0, 0.3, 0.5, 0.7]).unwrap());
        let n_paths = 20_000;
        let ens = sample_bb_rep(&grid, 1, n_paths, 17).unwrap();
        assert_eq!(ens.value(0, 0, 0), 0.0);
        let v = node_variance(&ens, 2);
        assert!((v - 0.25).abs() < 3.0 * 0.25 * (2.0 / n_paths as f64).sqrt(), "var {v}");
        // covariance at (0.3, 0.7) → 0.09
        let xs: Vec<f64> = (0..n_paths).map(|p| ens.value(p, 1, 0)).collect();
        let ys: Vec<f64> = (0..n_paths).map(|p| ens.value(p, 3, 0)).collect();
        let mx = crate::stats::mean(&xs);
        let my = crate::stats::mean(&ys);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / (n_paths as f64 - 1.0);
        assert!((cov - 0.09).abs() < 0.01, "cov {cov}");
    }

    #[test]
    fn perturbed_zero_reduces_to_base_bridge() {
        let grid = arc_grid(TimeGrid::geometric(32, 1e-2).unwrap());
        let fam = DriftFamily::perturbed(0.25, 0.0, Perturbation::Zero).unwrap();
        let (ens, log_rn) = sample_perturbed(&fam, &grid, 2, 4, 21).unwrap();
        assert!(log_rn.iter().all(|l| *l == 0.0));
        let base = DriftFamily::bridge(1.0).unwrap();
        let ems = sample_em(&base, &grid, 2, 4, 21).unwrap();
        assert!(ens.values.iter().zip(&ems.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn perturbed_deterministic_and_finite_log_rn() {
        let grid = arc_grid(TimeGrid::geometric(64, 1e-3).unwrap());
        let fam =
            DriftFamily::perturbed(0.25, 0.35, Perturbation::Tanh { kappa: 0.35 }).unwrap();
        let (a, la) = sample_perturbed(&fam, &grid, 1, 5, 33).unwrap();
        let (b, lb) = sample_perturbed(&fam, &grid, 1, 5, 33).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(la.iter().zip(&lb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(la.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn sup_norm_trivial_exponent() {
        let grid = arc_grid(TimeGrid::uniform(16, 1e-2).unwrap());
        let fam = DriftFamily::bridge(1.0).unwrap();
        let ens = sample_exact(&fam, &grid, 1, 100, 2).unwrap();
        let s = sup_norm_stats(&ens, 0.0);
        assert_eq!(s.exp_moment, 1.0);
        assert!(!s.may_diverge);
        assert!(sup_norm_stats(&ens, 0.2).may_diverge);
        let stream = sup_norm_stats_streaming(&fam, &grid, 1, 100, 2, 0.0).unwrap();
        assert_eq!(stream.mean_sup.to_bits(), s.mean_sup.to_bits());
    }

    #[test]
    fn dimension_factorization() {
        let grid = arc_grid(TimeGrid::uniform(8, 1e-1).unwrap());
        let fam = DriftFamily::bridge(1.0).unwrap();
        let n_paths = 4_000;
        let ens = sample_exact(&fam, &grid, 3, n_paths, 13).unwrap();
        let k = 4;
        for d1 in 0..3 {
            for d2 in (d1 + 1)..3 {
                let xs: Vec<f64> = (0..n_paths).map(|p| ens.value(p, k, d1)).collect();
                let ys: Vec<f64> = (0..n_paths).map(|p| ens.value(p, k, d2)).collect();
                let sx = crate::stats::variance(&xs).sqrt();
                let sy = crate::stats::variance(&ys).sqrt();
                let mx = crate::stats::mean(&xs);
                let my = crate::stats::mean(&ys);
                let corr = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| (x - mx) * (y - my))
                    .sum::<f64>()
                    / ((n_paths as f64 - 1.0) * sx * sy);
                assert!(corr.abs() <= 4.0 / (n_paths as f64).sqrt(), "corr {corr}");
            }
        }
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let grid = arc_grid(TimeGrid::uniform(4, 0.2).unwrap());
        let fam = DriftFamily::bridge(1.0).unwrap();
        let ens = sample_exact(&fam, &grid, 2, 3, 77).unwrap();
        let mut csv = Vec::new();
        ens.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path_id,t,x0,x1");
        assert_eq!(text.lines().count(), 1 + 3 * grid.len());

        let mut bin = Vec::new();
        ens.write_binary(&mut bin).unwrap();
        let back = read_binary(&bin[..]).unwrap();
        assert_eq!(back.dim, 2);
        assert_eq!(back.n_paths, 3);
        assert_eq!(back.n_nodes, grid.len());
        assert!(back.values.iter().zip(&ens.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_perturbed_family_in_exact_sampler() {
        let grid = arc_grid(TimeGrid::uniform(4, 0.2).unwrap());
        let fam = DriftFamily::perturbed(0.25, 0.1, Perturbation::Zero).unwrap();
        assert!(matches!(
            sample_exact(&fam, &grid, 1, 1, 0),
            Err(Error::Unsupported(_))
        ));
    }
}
