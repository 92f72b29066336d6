//! Monte Carlo validation of distributional properties of the samplers:
//! sup-norm statistics against the known bridge extreme-value mean, the
//! endpoint-pinning property, and the Euler–Maruyama convergence order.

use bridgelab::drift::DriftFamily;
use bridgelab::grid::TimeGrid;
use bridgelab::sampler::{
    em_path_map, exact_marginal_variance, exact_path_map, sample_bb_rep, sup_norm_stats,
    sup_norm_stats_streaming,
};
use bridgelab::stats::{log_log_fit, variance};
use std::sync::Arc;

/// E sup_{t≤1} |z_t| for the classical bridge is √(π/2)·ln 2 (the mean of the
/// Kolmogorov distribution). The grid sup underestimates the continuum sup,
/// so the tolerance is 3 SE plus a discretization allowance calibrated to
/// the n = 2048 uniform grid.
#[test]
fn sup_norm_mean_matches_kolmogorov_distribution() {
    let kolmogorov_mean = (std::f64::consts::PI / 2.0).sqrt() * 2.0_f64.ln();
    let grid = Arc::new(TimeGrid::uniform(2048, 1e-4).unwrap());
    let fam = DriftFamily::bridge(1.0).unwrap();
    let n_paths = 100_000;
    let s = sup_norm_stats_streaming(&fam, &grid, 1, n_paths, 42, 0.0).unwrap();
    // the grid sup misses the true sup by ~0.583·√Δt (the standard
    // discrete-monitoring bias constant), always from below
    let allowance = 3.0 * s.mean_sup_se + 0.7 * (1.0 / 2048.0_f64).sqrt();
    assert!(
        s.mean_sup < kolmogorov_mean,
        "grid sup must underestimate the continuum mean, got {}",
        s.mean_sup
    );
    assert!(
        (s.mean_sup - kolmogorov_mean).abs() <= allowance,
        "mean sup {} vs {kolmogorov_mean} (allowance {allowance})",
        s.mean_sup
    );

    // independent MC oracle: the representation sampler B_t − tB_1 has the
    // same law and the same grid bias, so the two means must agree tightly
    let rep = sample_bb_rep(&grid, 1, 20_000, 7).unwrap();
    let o = sup_norm_stats(&rep, 0.0);
    let joint = (s.mean_sup_se.powi(2) + o.mean_sup_se.powi(2)).sqrt();
    assert!(
        (s.mean_sup - o.mean_sup).abs() <= 4.0 * joint,
        "exact sampler {} vs representation oracle {}",
        s.mean_sup,
        o.mean_sup
    );
}

/// E exp(a·sup²) with a = 0.1 < 1/8 is finite and stable under grid
/// refinement: estimates at n = 256, 512, 1024 agree within 3 joint SE.
#[test]
fn exp_moment_stable_under_refinement() {
    let fam = DriftFamily::bridge(1.0).unwrap();
    let ns = [256usize, 512, 1024];
    let stats: Vec<_> = ns
        .iter()
        .map(|&n| {
            let grid = Arc::new(TimeGrid::uniform(n, 1e-3).unwrap());
            sup_norm_stats_streaming(&fam, &grid, 1, 40_000, 5, 0.1).unwrap()
        })
        .collect();
    for s in &stats {
        assert!(s.exp_moment.is_finite() && !s.may_diverge);
    }
    for (w, n) in stats.windows(2).zip(ns.windows(2)) {
        // the same ~0.583·√Δt discrete-sup bias propagates into the
        // exponential moment; allow for its difference between the grids
        let bias = 0.3 * ((1.0 / n[0] as f64).sqrt() - (1.0 / n[1] as f64).sqrt());
        let joint = (w[0].exp_moment_se.powi(2) + w[1].exp_moment_se.powi(2)).sqrt();
        assert!(
            (w[1].exp_moment - w[0].exp_moment).abs() <= 3.0 * joint + bias,
            "exp moment drifts under refinement: {} vs {}",
            w[0].exp_moment,
            w[1].exp_moment
        );
    }
}

/// Endpoint pinning: the empirical mean of |z(1−ε)| decreases monotonically
/// along ε = 10⁻¹..10⁻⁴ for every drift family that blows up at t = 1.
#[test]
fn bridge_property_pins_the_endpoint() {
    let grid = Arc::new(TimeGrid::geometric(512, 1e-4).unwrap());
    let marks: Vec<usize> = [0.9, 0.99, 0.999, 0.9999]
        .iter()
        .map(|&t| grid.index_of(t).unwrap())
        .collect();
    let fams = [
        DriftFamily::bridge(0.75).unwrap(),
        DriftFamily::bridge(1.0).unwrap(),
        DriftFamily::bridge(2.0).unwrap(),
        DriftFamily::power_alpha(1.5).unwrap(),
        DriftFamily::power_alpha(2.0).unwrap(),
    ];
    for fam in &fams {
        let sums = exact_path_map(fam, &grid, 1, 20_000, 3, |_, buf| {
            marks.iter().map(|&k| buf[k].abs()).collect::<Vec<f64>>()
        })
        .unwrap();
        let mut means = vec![0.0; marks.len()];
        for row in &sums {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        assert!(
            means.windows(2).all(|w| w[1] < w[0]),
            "{}: mean |z(1−ε)| not decreasing: {means:?}",
            fam.label()
        );
    }
}

/// Euler–Maruyama consistency: the terminal-node variance error against the
/// exact marginal is O(Δt); the log-log fit over n = 2⁶..2¹¹ must show
/// order ≥ 0.8.
#[test]
fn em_terminal_variance_first_order() {
    let fam = DriftFamily::bridge(1.0).unwrap();
    let n_paths = 400_000;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for k in 6..=11u32 {
        let n = 1usize << k;
        let grid = Arc::new(TimeGrid::uniform(n, 1e-2).unwrap());
        let terminal =
            em_path_map(&fam, &grid, 1, n_paths, 8, |_, buf| *buf.last().unwrap()).unwrap();
        let exact = exact_marginal_variance(&fam, grid.node(grid.len() - 1)).unwrap();
        let err = (variance(&terminal) - exact).abs();
        dts.push(0.99 / n as f64);
        errs.push(err);
    }
    let fit = log_log_fit(&dts, &errs);
    assert!(fit.slope >= 0.8, "observed EM order {} (errors {errs:?})", fit.slope);
}

/// Sanity anchor for the statistical tests above: the exact sampler's
/// terminal variance on the same grid has no O(Δt) bias term.
#[test]
fn exact_terminal_variance_unbiased() {
    let fam = DriftFamily::bridge(1.0).unwrap();
    let grid = Arc::new(TimeGrid::uniform(64, 1e-2).unwrap());
    let n_paths = 200_000;
    let terminal = exact_path_map(&fam, &grid, 1, n_paths, 12, |_, buf| *buf.last().unwrap())
        .unwrap();
    let mean_sq = variance(&terminal);
    let exact = exact_marginal_variance(&fam, grid.node(grid.len() - 1)).unwrap();
    let se = exact * (2.0 / n_paths as f64).sqrt();
    assert!((mean_sq - exact).abs() <= 3.0 * se, "{mean_sq} vs {exact}");
}
