//! Command-line front door: one subcommand per experiment family.
//!
//! Every run executes exactly one experiment and writes one report (stdout
//! or `--out`). Reports echo the full configuration and the artifact
//! version, numbers carry 17 significant digits, and identical
//! configurations produce byte-identical output. Exit codes: 0 success,
//! 2 configuration/domain error, 3 numerical/oracle/I-O failure.

use bridgelab::cameron_martin::{
    apply_t, apply_t_inv, h00_battery, lemma1_g, membership_diagnostic, subhalf_diagnostic,
    tail_quotient_check, TrendReport, Verdict,
};
use bridgelab::drift::{DriftFamily, Perturbation};
use bridgelab::error::{Error, Result};
use bridgelab::feldman_hajek::{cov_matrix, hs_trend, qc_l2_trend, sym_kl, CovKernel};
use bridgelab::girsanov::{log_rn_bridge_streaming, novikov_bound, perturbed_rn, MartingaleStat};
use bridgelab::grid::{FnTag, GridFunction, TimeGrid};
use bridgelab::kernels::{cov_q, cov_q_oracle, fh_kernel_q, fh_kernel_q_oracle, EvalMethod};
use bridgelab::report::{to_json_report, write_csv_report, RunConfig};
use bridgelab::rng::Stream;
use bridgelab::sampler::{sample_bb_rep, sample_em, sample_exact};
use bridgelab::{drift, grid};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "bridgelab", version, about = "Numerical laboratory for generalised Brownian bridges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Grid kind: uniform or geometric.
    #[arg(long, default_value = "geometric")]
    grid: String,
    /// Number of grid intervals.
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Distance of the last node to the singular endpoint t = 1.
    #[arg(long = "eps-min", default_value_t = 1e-4)]
    eps_min: f64,
}

impl GridArgs {
    fn build(&self) -> Result<Arc<TimeGrid>> {
        let kind = bridgelab::sampler::grid_kind_from_str(&self.grid)?;
        Ok(Arc::new(grid::make_grid(kind, self.n, self.eps_min)?))
    }

    fn echo(&self, cfg: RunConfig) -> RunConfig {
        cfg.with("grid", &self.grid).with("n", self.n).with("eps_min", self.eps_min)
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a path ensemble and write it as CSV or binary.
    Sample {
        /// Drift family: bridge, power, or bb (bridge representation B_t − tB_1).
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        alpha: Option<f64>,
        /// Scheme: exact or em (ignored for family bb).
        #[arg(long, default_value = "exact")]
        sampler: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output format: csv or binary.
        #[arg(long, default_value = "csv")]
        format: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a kernel at one (c, s, t), with its quadrature oracle.
    KernelEval {
        /// Kernel: cov (Q_c) or q (Feldman-Hajek q_c).
        #[arg(long, default_value = "cov")]
        kernel: String,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Approximation-to-the-identity mass checks for a drift family.
    AiiCheck {
        #[arg(long, default_value = "bridge")]
        family: String,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        alpha: Option<f64>,
        /// Times at which the kernel mass is reported.
        #[arg(long = "t-list", default_value = "0.9,0.99,0.999,0.9999")]
        t_list: String,
        /// Optional fixed lower split point for the partial mass.
        #[arg(long)]
        t0: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cameron-Martin checks: roundtrip, lemma, membership, subhalf, tail.
    CmCheck {
        #[arg(long)]
        op: String,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// ε list for the diagnostics (decreasing).
        #[arg(long = "eps-list", default_value = "1e-1,1e-2,1e-3,1e-4,1e-5")]
        eps_list: String,
        /// Number of random trials for roundtrip/lemma.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Named h for op=tail: linear, bridge, or sqrt.
        #[arg(long, default_value = "linear")]
        h: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Feldman-Hajek trend diagnostics (Σλ² and symmetrized KL over n).
    FhDiagnose {
        #[arg(long)]
        c: f64,
        #[arg(long = "n-list", default_value = "64,128,256,512")]
        n_list: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Clamped L² trend of the q_c kernel against ln(1/ε).
    QcTrend {
        #[arg(long)]
        c: f64,
        #[arg(long = "eps-list", default_value = "1e-3,1e-4,1e-5,1e-6")]
        eps_list: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exponential-martingale statistics of the 1 → c_target change.
    Girsanov {
        #[arg(long = "c-target")]
        c_target: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report times; must be grid nodes.
        #[arg(long = "t-list", default_value = "0.9,0.99,0.999,0.9999")]
        t_list: String,
        /// Output format: json or csv.
        #[arg(long, default_value = "json")]
        format: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Perturbed-bridge density experiment (Novikov-bounded equivalence).
    Perturbed {
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 0.35)]
        kappa: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "t-list", default_value = "0.9,0.99,0.999,0.9999")]
        t_list: String,
        /// sup² plugged into the reported Novikov ceiling.
        #[arg(long = "sup-sq", default_value_t = 4.0)]
        sup_sq: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse '{tok}' in {what}")))
        })
        .collect()
}

fn emit(out: &OutArgs, content: &[u8]) -> Result<()> {
    match &out.out {
        Some(path) => std::fs::write(path, content)?,
        None => std::io::stdout().write_all(content)?,
    }
    Ok(())
}

fn family_from(family: &str, c: f64, alpha: Option<f64>) -> Result<DriftFamily> {
    match family {
        "bridge" => DriftFamily::bridge(c),
        "power" => {
            let alpha = alpha
                .ok_or_else(|| Error::Config("family power requires --alpha".into()))?;
            DriftFamily::power_alpha(alpha)
        }
        other => Err(Error::Config(format!("unknown family '{other}'"))),
    }
}

fn marks_for(grid: &TimeGrid, t_list: &[f64]) -> Result<Vec<usize>> {
    t_list
        .iter()
        .map(|&t| {
            grid.index_of(t).ok_or_else(|| {
                Error::Config(format!("t = {t} is not a node of the chosen grid"))
            })
        })
        .collect()
}

#[derive(Serialize)]
struct KernelReport {
    kernel: String,
    value: f64,
    method: String,
    oracle_value: f64,
    abs_deviation: f64,
}

#[derive(Serialize)]
struct MassRow {
    t: f64,
    full_mass: f64,
    partial_mass: Option<f64>,
}

#[derive(Serialize)]
struct RoundTripReport {
    trials: usize,
    max_rel_error: f64,
}

#[derive(Serialize)]
struct LemmaReport {
    c: f64,
    bound: f64,
    trials: usize,
    max_ratio: f64,
    violations: usize,
}

#[derive(Serialize)]
struct BatteryReport {
    battery_size: usize,
    bounded: usize,
    divergent: usize,
    inconclusive: usize,
    worst: TrendReport,
}

#[derive(Serialize)]
struct FhReport {
    hs: TrendReport,
    sym_kl: Vec<f64>,
}

#[derive(Serialize)]
struct PerturbedReport {
    stats: Vec<MartingaleStat>,
    l2_log: Vec<f64>,
    novikov_ceiling: f64,
}

fn method_name(m: EvalMethod) -> &'static str {
    match m {
        EvalMethod::ClosedForm => "closed-form",
        EvalMethod::Quadrature => "quadrature",
    }
}

/// Smooth random test derivative used by the roundtrip check: a small
/// trigonometric-polynomial perturbation around a constant offset.
fn random_smooth_hdot(grid: &Arc<TimeGrid>, rng: &mut Stream) -> Result<GridFunction> {
    let a = 0.5 * (2.0 * rng.uniform() - 1.0);
    let b = 0.5 * (2.0 * rng.uniform() - 1.0);
    let d = 0.25 * (2.0 * rng.uniform() - 1.0);
    let p0 = 2.0 * rng.uniform() - 1.0;
    let p1 = 2.0 * rng.uniform() - 1.0;
    GridFunction::sample(grid, FnTag::Derivative, |t| {
        use std::f64::consts::PI;
        2.0 + a * (PI * t).sin() + b * (PI * t).cos() + d * (2.0 * PI * t).sin()
            + p0 * t
            + p1 * t * t
    })
}

fn l2_rel_error(a: &GridFunction, b: &GridFunction) -> f64 {
    let w = a.grid.trapezoid_weights();
    let num: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&w)
        .map(|((x, y), w)| (x - y) * (x - y) * w)
        .sum::<f64>()
        .sqrt();
    num / a.l2_norm()
}

fn run() -> Result<()> {
    if let Ok(threads) = std::env::var("BRIDGELAB_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| Error::Config("BRIDGELAB_THREADS must be a positive integer".into()))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Sample { family, c, alpha, sampler, grid, paths, dim, seed, format, out } => {
            let g = grid.build()?;
            let ens = match family.as_str() {
                "bb" => sample_bb_rep(&g, dim, paths, seed)?,
                _ => {
                    let fam = family_from(&family, c, alpha)?;
                    match sampler.as_str() {
                        "exact" => sample_exact(&fam, &g, dim, paths, seed)?,
                        "em" => sample_em(&fam, &g, dim, paths, seed)?,
                        other => {
                            return Err(Error::Config(format!("unknown sampler '{other}'")))
                        }
                    }
                }
            };
            let mut buf = Vec::new();
            match format.as_str() {
                "csv" => ens.write_csv(&mut buf)?,
                "binary" => ens.write_binary(&mut buf)?,
                other => return Err(Error::Config(format!("unknown format '{other}'"))),
            }
            emit(&out, &buf)
        }
        Command::KernelEval { kernel, c, s, t, out } => {
            let cfg = RunConfig::new("kernel-eval")
                .with("kernel", &kernel)
                .with("c", c)
                .with("s", s)
                .with("t", t);
            let report = match kernel.as_str() {
                "cov" => {
                    let v = cov_q(c, s, t)?;
                    let o = cov_q_oracle(c, s, t, 1e-12)?;
                    KernelReport {
                        kernel,
                        value: v,
                        method: "closed-form".into(),
                        oracle_value: o.value,
                        abs_deviation: (v - o.value).abs(),
                    }
                }
                "q" => {
                    let v = fh_kernel_q(c, s, t)?;
                    let o = fh_kernel_q_oracle(c, s, t, 1e-12)?;
                    KernelReport {
                        kernel,
                        value: v.value,
                        method: method_name(v.method).into(),
                        oracle_value: o.value,
                        abs_deviation: (v.value - o.value).abs(),
                    }
                }
                other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
            };
            emit(&out, to_json_report(&cfg, &report)?.as_bytes())
        }
        Command::AiiCheck { family, c, alpha, t_list, t0, out } => {
            let fam = family_from(&family, c, alpha)?;
            let ts: Vec<f64> = parse_list(&t_list, "--t-list")?;
            let cfg = RunConfig::new("aii-check")
                .with("family", fam.label())
                .with("t_list", &t_list)
                .with("t0", t0.map_or("none".into(), |v| v.to_string()));
            let rows: Vec<MassRow> = ts
                .iter()
                .map(|&t| {
                    Ok(MassRow {
                        t,
                        full_mass: drift::aii_mass(&fam, t, None)?,
                        partial_mass: t0.map(|t0| drift::aii_mass(&fam, t, Some(t0))).transpose()?,
                    })
                })
                .collect::<Result<_>>()?;
            emit(&out, to_json_report(&cfg, &rows)?.as_bytes())
        }
        Command::CmCheck { op, c, alpha, grid, eps_list, trials, seed, h, out } => {
            let eps: Vec<f64> = parse_list(&eps_list, "--eps-list")?;
            let cfg = grid
                .echo(RunConfig::new("cm-check").with("op", &op))
                .with("c", c.map_or("none".into(), |v| v.to_string()))
                .with("alpha", alpha.map_or("none".into(), |v| v.to_string()))
                .with("eps_list", &eps_list)
                .with("trials", trials)
                .with("seed", seed)
                .with("h", &h);
            let g = grid.build()?;
            match op.as_str() {
                "roundtrip" => {
                    let fam = family_from("bridge", c.unwrap_or(0.75), None)?;
                    let mut rng = Stream::new(seed, 0);
                    let mut max_rel = 0.0_f64;
                    for _ in 0..trials {
                        let hdot = random_smooth_hdot(&g, &mut rng)?;
                        let back = apply_t_inv(&fam, &apply_t(&fam, &hdot)?)?;
                        max_rel = max_rel.max(l2_rel_error(&hdot, &back));
                    }
                    let rep = RoundTripReport { trials, max_rel_error: max_rel };
                    emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
                }
                "lemma" => {
                    let c = c.ok_or_else(|| Error::Config("op lemma requires --c".into()))?;
                    let bound = 2.0 / (2.0 * c - 1.0) + 1e-2;
                    let mut rng = Stream::new(seed, 0);
                    let mut max_ratio = 0.0_f64;
                    let mut violations = 0;
                    for _ in 0..trials {
                        // random piecewise-constant f over 16 blocks
                        let blocks: Vec<f64> =
                            (0..16).map(|_| 2.0 * rng.uniform() - 1.0).collect();
                        let f = GridFunction::sample(&g, FnTag::Function, |t| {
                            blocks[((t * 16.0) as usize).min(15)]
                        })?;
                        let (_, ratio) = lemma1_g(c, &f)?;
                        max_ratio = max_ratio.max(ratio);
                        if ratio > bound {
                            violations += 1;
                        }
                    }
                    let rep = LemmaReport { c, bound, trials, max_ratio, violations };
                    emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
                }
                "membership" => {
                    let fam = match (c, alpha) {
                        (Some(c), None) => DriftFamily::bridge(c)?,
                        (None, Some(a)) => DriftFamily::power_alpha(a)?,
                        _ => {
                            return Err(Error::Config(
                                "op membership needs exactly one of --c / --alpha".into(),
                            ))
                        }
                    };
                    let battery = h00_battery(&g)?;
                    let mut counts = (0usize, 0usize, 0usize);
                    let mut worst: Option<TrendReport> = None;
                    for k in &battery {
                        let rep = membership_diagnostic(&fam, k, &eps)?;
                        match rep.verdict {
                            Verdict::Bounded => counts.0 += 1,
                            Verdict::Divergent => counts.1 += 1,
                            Verdict::Inconclusive => counts.2 += 1,
                        }
                        let is_worse = worst
                            .as_ref()
                            .map(|w| rep.slope > w.slope)
                            .unwrap_or(true);
                        if is_worse {
                            worst = Some(rep);
                        }
                    }
                    let rep = BatteryReport {
                        battery_size: battery.len(),
                        bounded: counts.0,
                        divergent: counts.1,
                        inconclusive: counts.2,
                        worst: worst.expect("battery nonempty"),
                    };
                    emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
                }
                "subhalf" => {
                    let c = c.ok_or_else(|| Error::Config("op subhalf requires --c".into()))?;
                    let hdot = GridFunction::sample(&g, FnTag::Derivative, |_| 1.0)?;
                    let rep = subhalf_diagnostic(c, &hdot, &eps)?;
                    emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
                }
                "tail" => {
                    let hf = match h.as_str() {
                        "linear" => |t: f64| t,
                        "bridge" => |t: f64| t * (1.0 - t),
                        "sqrt" => |t: f64| 1.0 - (1.0 - t).sqrt(),
                        other => {
                            return Err(Error::Config(format!("unknown h function '{other}'")))
                        }
                    };
                    let hfun = GridFunction::sample(&g, FnTag::Function, hf)?;
                    let rep = tail_quotient_check(&hfun)?;
                    emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
                }
                other => Err(Error::Config(format!("unknown cm-check op '{other}'"))),
            }
        }
        Command::FhDiagnose { c, n_list, out } => {
            let ns: Vec<usize> = parse_list(&n_list, "--n-list")?;
            let cfg = RunConfig::new("fh-diagnose").with("c", c).with("n_list", &n_list);
            let hs = hs_trend(c, &ns)?;
            let mut kls = Vec::with_capacity(ns.len());
            for &n in &ns {
                let g = Arc::new(TimeGrid::geometric(
                    n,
                    bridgelab::feldman_hajek::trend_eps_min(n),
                )?);
                let r = cov_matrix(CovKernel::Bb, &g)?;
                let rc = cov_matrix(CovKernel::BridgeC(c), &g)?;
                kls.push(sym_kl(&r, &rc)?);
            }
            let rep = FhReport { hs, sym_kl: kls };
            emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
        }
        Command::QcTrend { c, eps_list, out } => {
            let eps: Vec<f64> = parse_list(&eps_list, "--eps-list")?;
            let cfg = RunConfig::new("qc-trend").with("c", c).with("eps_list", &eps_list);
            let rep = qc_l2_trend(c, &eps)?;
            emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
        }
        Command::Girsanov { c_target, grid, paths, dim, seed, t_list, format, out } => {
            let g = grid.build()?;
            let ts: Vec<f64> = parse_list(&t_list, "--t-list")?;
            let marks = marks_for(&g, &ts)?;
            let cfg = grid
                .echo(RunConfig::new("girsanov").with("c_target", c_target))
                .with("paths", paths)
                .with("dim", dim)
                .with("seed", seed)
                .with("t_list", &t_list);
            let trace = log_rn_bridge_streaming(&g, dim, paths, seed, c_target, &marks)?;
            let stats = trace.summary(&ts)?;
            match format.as_str() {
                "json" => emit(&out, to_json_report(&cfg, &stats)?.as_bytes()),
                "csv" => {
                    let rows: Vec<Vec<f64>> = stats
                        .iter()
                        .map(|s| {
                            vec![
                                s.t,
                                s.mean,
                                s.se,
                                s.median,
                                s.q05,
                                s.q95,
                                if s.mass_collapse { 1.0 } else { 0.0 },
                            ]
                        })
                        .collect();
                    let mut buf = Vec::new();
                    write_csv_report(
                        &mut buf,
                        &cfg,
                        &["t", "mean", "se", "median", "q05", "q95", "mass_collapse"],
                        &rows,
                    )?;
                    emit(&out, &buf)
                }
                other => Err(Error::Config(format!("unknown format '{other}'"))),
            }
        }
        Command::Perturbed { delta, kappa, grid, paths, dim, seed, t_list, sup_sq, out } => {
            let g = grid.build()?;
            let ts: Vec<f64> = parse_list(&t_list, "--t-list")?;
            let marks = marks_for(&g, &ts)?;
            let fam = DriftFamily::perturbed(delta, kappa, Perturbation::Tanh { kappa })?;
            let cfg = grid
                .echo(RunConfig::new("perturbed").with("delta", delta).with("kappa", kappa))
                .with("paths", paths)
                .with("dim", dim)
                .with("seed", seed)
                .with("t_list", &t_list)
                .with("sup_sq", sup_sq);
            let rn = perturbed_rn(&fam, &g, dim, paths, seed, &marks)?;
            let rep = PerturbedReport {
                stats: rn.trace.summary(&ts)?,
                l2_log: rn.l2_log,
                novikov_ceiling: novikov_bound(delta, kappa, sup_sq)?,
            };
            emit(&out, to_json_report(&cfg, &rep)?.as_bytes())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("bridgelab: {e}");
        std::process::exit(e.exit_code());
    }
}
