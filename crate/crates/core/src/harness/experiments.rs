//! The six experiment drivers behind `run_experiment`, plus report assembly
//! and the on-disk output formats (NDJSON records, CSV summaries,
//! `report.json`, plot-ready `.dat` columns).

use super::{
    monitor_step, path_seed, ExperimentConfig, ExperimentKind,
    MonitorState, MonitorThresholds, Observables,
};
use crate::error::{Error, Result};
use crate::field::{
    build_initial, evolve, FieldState, FieldTrajectory, Forcing, InitialProfile,
    SpaceGrid,
};
use crate::interface::{
    build_supersub, check_sandwich, generation_check, limit_sde_moments, select_c2_fitted,
    track_zero, GenerationParams, InterfaceRecord, ShiftKind,
};
use crate::noise::kernel::CovarianceKernel;
use crate::noise::path::{derive_seed, from_bundle, sample_path, BrownianBundle, NoisePath};
use crate::reaction::ReactionFunction;
use crate::scalar::{flow_ode, flow_sde_on_path};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Outcome of one path of any experiment.
#[derive(Debug, Clone, Serialize)]
pub struct PathOutcome {
    pub eps: f64,
    pub path: usize,
    pub seed: u64,
    pub pass: bool,
    pub monitor: MonitorState,
    pub failure: Option<String>,
    /// experiment-specific scalar (moment, gap, Δξ, ...)
    pub stat: Option<f64>,
}

/// Aggregated row per ε.
#[derive(Debug, Clone, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub n_paths: usize,
    pub n_pass: usize,
    pub pass_fraction: f64,
    pub n_failed: usize,
    pub mean_stat: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeRow {
    pub statistic: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitLawReport {
    pub alpha1_calibrated: f64,
    pub alpha2_calibrated: f64,
    pub pde_mean: f64,
    pub pde_var: f64,
    pub sde_mean: f64,
    pub sde_var: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub pass: bool,
}

/// The reproducible run summary; a pure function of (config, root seed)
/// except for `wall_clock_sec`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub hypothesis_violations: Vec<String>,
    pub eps_rows: Vec<EpsRow>,
    /// pass fractions nondecreasing as ε decreases (generation sweeps)
    pub pass_trend_nondecreasing: Option<bool>,
    pub slopes: Vec<SlopeRow>,
    pub limit_law: Option<LimitLawReport>,
    pub outcomes: Vec<PathOutcome>,
    pub seed_ledger: Vec<u64>,
    pub notes: Vec<String>,
    pub wall_clock_sec: f64,
}

impl RunReport {
    pub fn pass_fraction_at(&self, eps: f64) -> Option<f64> {
        self.eps_rows
            .iter()
            .find(|r| (r.eps - eps).abs() < 1e-12)
            .map(|r| r.pass_fraction)
    }
}

struct OutSink {
    dir: Option<PathBuf>,
}

impl OutSink {
    fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(OutSink {
            dir: dir.map(|d| d.to_path_buf()),
        })
    }

    fn write(&self, name: &str, content: &[u8]) -> Result<()> {
        if let Some(d) = &self.dir {
            std::fs::write(d.join(name), content)?;
        }
        Ok(())
    }
}

/// Execute the experiment selected by `config.experiment` across
/// `eps_list × paths`, with per-path seeds `root_seed ⊕ counter`. Paths that
/// fail are reported, never dropped; pass fractions use all paths as the
/// denominator.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let f = config.reaction.build()?;
    let violations = config.validate(&f)?;
    let sink = OutSink::new(out_dir)?;
    let mut report = match config.experiment {
        ExperimentKind::SampleNoise => run_sample_noise(config, &f, &sink)?,
        ExperimentKind::Evolve => run_evolve(config, &f, &sink)?,
        ExperimentKind::SweepGeneration => run_sweep_generation(config, &f, &sink)?,
        ExperimentKind::CompareSandwich => run_compare_sandwich(config, &f, &sink)?,
        ExperimentKind::TrackInterface => run_track_interface(config, &f, &sink)?,
        ExperimentKind::LimitLaw => run_limit_law(config, &f, &sink)?,
    };
    report.experiment = config.experiment.name().to_string();
    report.config_hash = format!("{:016x}", config.hash());
    report.root_seed = config.root_seed;
    report.hypothesis_violations = violations;
    report.wall_clock_sec = start.elapsed().as_secs_f64();
    write_results_ndjson(&sink, &report)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?;
    sink.write("report.json", json.as_bytes())?;
    Ok(report)
}

fn empty_report() -> RunReport {
    RunReport {
        experiment: String::new(),
        config_hash: String::new(),
        root_seed: 0,
        hypothesis_violations: vec![],
        eps_rows: vec![],
        pass_trend_nondecreasing: None,
        slopes: vec![],
        limit_law: None,
        outcomes: vec![],
        seed_ledger: vec![],
        notes: vec![],
        wall_clock_sec: 0.0,
    }
}

fn write_results_ndjson(sink: &OutSink, report: &RunReport) -> Result<()> {
    let mut buf = Vec::new();
    for o in &report.outcomes {
        let line = serde_json::to_string(o).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(buf, "{line}")?;
    }
    sink.write("results.ndjson", &buf)
}

fn aggregate(outcomes: &[PathOutcome], eps_list: &[f64]) -> (Vec<EpsRow>, Option<bool>) {
    let mut rows = Vec::new();
    for &eps in eps_list {
        let of_eps: Vec<&PathOutcome> = outcomes
            .iter()
            .filter(|o| (o.eps - eps).abs() < 1e-15)
            .collect();
        let n = of_eps.len();
        let n_pass = of_eps.iter().filter(|o| o.pass).count();
        let n_failed = of_eps.iter().filter(|o| o.failure.is_some()).count();
        let stats: Vec<f64> = of_eps.iter().filter_map(|o| o.stat).collect();
        rows.push(EpsRow {
            eps,
            n_paths: n,
            n_pass,
            pass_fraction: if n > 0 { n_pass as f64 / n as f64 } else { 0.0 },
            n_failed,
            mean_stat: if stats.is_empty() {
                None
            } else {
                Some(stats.iter().sum::<f64>() / stats.len() as f64)
            },
        });
    }
    // trend over eps sorted decreasing: fractions must not decrease
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.eps.partial_cmp(&a.eps).unwrap());
    let trend = sorted
        .windows(2)
        .all(|w| w[1].pass_fraction >= w[0].pass_fraction - 1e-12);
    let trend = if rows.len() > 1 { Some(trend) } else { None };
    (rows, trend)
}

/// Uniform slow-time grid of `n` solver steps landing exactly on `t_end`.
fn solver_grid(t_end: f64, dt_request: f64) -> (f64, usize, Vec<f64>) {
    let n = (t_end / dt_request).ceil().max(1.0) as usize;
    let dt = t_end / n as f64;
    let grid = (0..=n).map(|k| k as f64 * dt).collect();
    (dt, n, grid)
}

fn horizon_of(config: &ExperimentConfig, eps: f64) -> f64 {
    config
        .solver
        .t_end
        .unwrap_or(config.c1 * eps * (1.0 / eps).ln())
}

/// τ₇ exponent β ∈ (0, γ + 1/2 - C_f C₁), taken at the midpoint.
fn tau7_beta(config: &ExperimentConfig, f: &ReactionFunction) -> f64 {
    (0.5 * (config.gamma + 0.5 - f.c_f() * config.c1)).max(0.05)
}

// ---------------------------------------------------------------- sample-noise

fn run_sample_noise(
    config: &ExperimentConfig,
    _f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let grid = config.grid.build()?;
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(grid.dim)?)?;
    let n_steps = config.solver.sample_steps;
    let t_end = config.solver.sample_t_end;
    let time_grid: Vec<f64> = (0..=n_steps)
        .map(|k| t_end * k as f64 / n_steps as f64)
        .collect();
    let pts = grid.point_set();
    let mut outcomes = Vec::new();
    let mut seeds = Vec::new();
    let mut cov_summary = String::from("# probe t x s y empirical_qxx theoretical_qxx\n");
    for p in 0..config.paths {
        let seed = path_seed(config.root_seed, p as u64);
        seeds.push(seed);
        let path = sample_path(&kernel, &time_grid, pts.clone(), seed)?;
        let mut buf = Vec::new();
        path.export_ndjson(&mut buf)?;
        sink.write(&format!("path_{p:04}.ndjson"), &buf)?;
        outcomes.push(PathOutcome {
            eps: config.eps_list[0],
            path: p,
            seed,
            pass: true,
            monitor: MonitorState::default(),
            failure: None,
            stat: None,
        });
    }
    // diagonal covariance probe at 5 deterministic lattice points
    let probes = [0.0, 0.2, -0.3, 0.5, -0.6];
    for (i, &x) in probes.iter().enumerate() {
        let q = kernel.q(&vec![x; grid.dim], &vec![x; grid.dim]);
        cov_summary.push_str(&format!(
            "{i} {t:.6} {x:.3} {t:.6} {x:.3} nan {q:.9e}\n",
            t = t_end
        ));
    }
    sink.write("covariance_summary.dat", cov_summary.as_bytes())?;
    let (eps_rows, _) = aggregate(&outcomes, &config.eps_list[..1]);
    Ok(RunReport {
        eps_rows,
        outcomes,
        seed_ledger: seeds,
        ..empty_report()
    })
}

// ---------------------------------------------------------------------- evolve

fn run_evolve(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let eps = config.eps_list[0];
    let grid = config.grid.build()?;
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(grid.dim)?)?;
    let prof = build_initial(&grid, &config.initial.spec()?, f.c0_bound(), eps, config.kappa)?;
    let t_end = horizon_of(config, eps);
    let (dt, _n, slow_grid) = solver_grid(t_end, config.solver.dt_factor * eps / f.c_f());
    let n_cp = config.solver.checkpoints.max(1);
    let cps: Vec<f64> = (1..=n_cp).map(|k| t_end * k as f64 / n_cp as f64).collect();
    let mut outcomes = Vec::new();
    let mut seeds = Vec::new();
    for p in 0..config.paths {
        let seed = path_seed(config.root_seed, p as u64);
        seeds.push(seed);
        let run = || -> Result<(FieldTrajectory, MonitorState)> {
            let state = FieldState::new(grid.clone(), prof.u0.clone(), eps, config.gamma);
            let (traj, monitor) = if config.solver.zero_noise {
                (
                    evolve(&state, f, &Forcing::None, t_end, dt, &cps)?,
                    MonitorState::default(),
                )
            } else {
                let bundle = Arc::new(BrownianBundle::sample(
                    &slow_grid,
                    kernel.modes().len().max(1),
                    seed,
                )?);
                let path = from_bundle(&kernel, bundle, grid.point_set(), None)?;
                let traj = evolve(&state, f, &Forcing::Path(&path), t_end, dt, &cps)?;
                let monitor = field_monitors(config, f, eps, &traj, Some(&path));
                (traj, monitor)
            };
            Ok((traj, monitor))
        };
        match run() {
            Ok((traj, monitor)) => {
                write_checkpoints(sink, &grid, &traj, p)?;
                outcomes.push(PathOutcome {
                    eps,
                    path: p,
                    seed,
                    pass: true,
                    monitor,
                    failure: None,
                    stat: Some(traj.last().sup_norm()),
                });
            }
            Err(e) => outcomes.push(PathOutcome {
                eps,
                path: p,
                seed,
                pass: false,
                monitor: MonitorState::default(),
                failure: Some(e.to_string()),
                stat: None,
            }),
        }
    }
    let (eps_rows, _) = aggregate(&outcomes, &config.eps_list[..1]);
    Ok(RunReport {
        eps_rows,
        outcomes,
        seed_ledger: seeds,
        ..empty_report()
    })
}

/// Checkpoints as NDJSON `{t, u[]}` in 1-D or little-endian row-major f64
/// with a JSON header in d ≥ 2.
fn write_checkpoints(
    sink: &OutSink,
    grid: &SpaceGrid,
    traj: &FieldTrajectory,
    path_idx: usize,
) -> Result<()> {
    if grid.dim == 1 {
        let mut buf = Vec::new();
        for s in &traj.states {
            let rec = serde_json::json!({"t": s.t, "u": s.u});
            writeln!(buf, "{rec}")?;
        }
        sink.write(&format!("checkpoints_{path_idx:04}.ndjson"), &buf)
    } else {
        for (i, s) in traj.states.iter().enumerate() {
            let header = serde_json::json!({
                "t": s.t,
                "dims": vec![grid.nodes_per_axis; grid.dim],
                "dtype": "f64-le",
                "order": "row-major",
            });
            sink.write(
                &format!("checkpoint_{path_idx:04}_{i:03}.json"),
                header.to_string().as_bytes(),
            )?;
            let mut bin = Vec::with_capacity(s.u.len() * 8);
            for v in &s.u {
                bin.extend_from_slice(&v.to_le_bytes());
            }
            sink.write(&format!("checkpoint_{path_idx:04}_{i:03}.bin"), &bin)?;
        }
        Ok(())
    }
}

/// τ₁ and τ₇ from a finished field run.
fn field_monitors(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    eps: f64,
    traj: &FieldTrajectory,
    path: Option<&NoisePath>,
) -> MonitorState {
    let beta = tau7_beta(config, f);
    let thresholds = MonitorThresholds {
        two_c0: 2.0 * f.c0_bound(),
        eps_kappa: eps.powf(config.kappa),
        moll_bound: 2.0 * f.c0_bound() + config.sandwich.delta_prime,
        noise_bound: eps.powf(-beta),
    };
    let mut state = MonitorState::default();
    for &(t, sup) in &traj.sup_series {
        let mut obs = Observables::none(t, t / eps);
        obs.sup_u = Some(sup);
        state = monitor_step(&state, &thresholds, &obs);
    }
    if let Some(p) = path {
        // τ₇ on the fast-time noise: sparse sweep over the path grid
        let h = 2.0 * 1.0 / (p.points().len().max(2) as f64 - 1.0);
        let n_t = p.n_times();
        let stride = (n_t / 64).max(1);
        let mut k = 0;
        while k < n_t {
            let values: Vec<f64> = (0..p.points().len()).map(|i| p.value(k, i)).collect();
            let norm = super::discrete_h3_norm(&values, h) / eps.sqrt();
            let t = p.time_grid()[k];
            let mut obs = Observables::none(t, t / eps);
            obs.noise_norm = Some(norm);
            state = monitor_step(&state, &thresholds, &obs);
            k += stride;
        }
    }
    state
}

// ------------------------------------------------------------ sweep-generation

fn tail_bars(config: &ExperimentConfig, grid: &SpaceGrid, prof: &InitialProfile) -> Option<(Vec<f64>, Vec<f64>)> {
    prof.tails.as_ref().map(|(g1, g2)| {
        let decorate = |g: &Vec<f64>| -> Vec<f64> {
            (0..g.len())
                .map(|i| {
                    let x = grid.node(i)[0];
                    config.generation.tail_scale * g[i]
                        + config.generation.tail_floor * (-(x.abs() - 1.0).max(0.0)).exp()
                })
                .collect()
        };
        (decorate(g1), decorate(g2))
    })
}

struct GenerationOutcome {
    record: InterfaceRecord,
    monitor: MonitorState,
    final_state: FieldState,
}

fn generation_single(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    kernel: &CovarianceKernel,
    grid: &SpaceGrid,
    prof: &InitialProfile,
    g_bars: Option<&(Vec<f64>, Vec<f64>)>,
    eps: f64,
    seed: u64,
) -> Result<GenerationOutcome> {
    let t_star = config.c1 * eps * (1.0 / eps).ln();
    let (dt, _n, slow_grid) = solver_grid(t_star, config.solver.dt_factor * eps / f.c_f());
    let state = FieldState::new(grid.clone(), prof.u0.clone(), eps, config.gamma);
    let (traj, monitor) = if config.solver.zero_noise {
        (
            evolve(&state, f, &Forcing::None, t_star, dt, &[])?,
            MonitorState::default(),
        )
    } else {
        let bundle = Arc::new(BrownianBundle::sample(
            &slow_grid,
            kernel.modes().len().max(1),
            seed,
        )?);
        let path = from_bundle(kernel, bundle, grid.point_set(), None)?;
        let traj = evolve(&state, f, &Forcing::Path(&path), t_star, dt, &[])?;
        let monitor = field_monitors(config, f, eps, &traj, Some(&path));
        (traj, monitor)
    };
    let params = GenerationParams {
        kappa: config.kappa,
        beta: 1.0 - config.c1 * f.mu(),
        c_thresh: config.generation.c_thresh,
        tol_factor: config.generation.tol_factor,
    };
    let record = generation_check(
        traj.last(),
        prof,
        &params,
        g_bars.map(|(a, b)| (a.as_slice(), b.as_slice())),
    )?;
    Ok(GenerationOutcome {
        record,
        monitor,
        final_state: traj.states.last().unwrap().clone(),
    })
}

fn run_sweep_generation(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let grid = config.grid.build()?;
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(grid.dim)?)?;
    let mut outcomes: Vec<PathOutcome> = Vec::new();
    let mut seeds = Vec::new();
    let mut records_csv = String::from("eps,path,t,xi,l2_dist,f1,f2,f3,f4,f5,generated\n");
    for (ei, &eps) in config.eps_list.iter().enumerate() {
        let prof = build_initial(&grid, &config.initial.spec()?, f.c0_bound(), eps, config.kappa)?;
        let g_bars = tail_bars(config, &grid, &prof);
        let results: Vec<(usize, u64, Result<GenerationOutcome>)> = (0..config.paths)
            .into_par_iter()
            .map(|p| {
                let seed = path_seed(config.root_seed, (ei * config.paths + p) as u64);
                let r = generation_single(
                    config,
                    f,
                    &kernel,
                    &grid,
                    &prof,
                    g_bars.as_ref(),
                    eps,
                    seed,
                );
                (p, seed, r)
            })
            .collect();
        for (p, seed, r) in results {
            seeds.push(seed);
            match r {
                Ok(out) => {
                    let rec = &out.record;
                    let flags = rec.gen_flags.unwrap_or([false; 5]);
                    records_csv.push_str(&format!(
                        "{eps},{p},{:.6},{},{},{},{},{},{},{},{}\n",
                        rec.t,
                        rec.xi.map(|v| format!("{v:.6}")).unwrap_or_default(),
                        rec.l2_dist.map(|v| format!("{v:.6}")).unwrap_or_default(),
                        flags[0] as u8,
                        flags[1] as u8,
                        flags[2] as u8,
                        flags[3] as u8,
                        flags[4] as u8,
                        rec.generated() as u8
                    ));
                    outcomes.push(PathOutcome {
                        eps,
                        path: p,
                        seed,
                        pass: rec.generated(),
                        monitor: out.monitor,
                        failure: None,
                        stat: rec.l2_dist,
                    });
                }
                Err(e) => outcomes.push(PathOutcome {
                    eps,
                    path: p,
                    seed,
                    pass: false,
                    monitor: MonitorState::default(),
                    failure: Some(e.to_string()),
                    stat: None,
                }),
            }
        }
    }
    sink.write("generation_records.csv", records_csv.as_bytes())?;
    let (eps_rows, trend) = aggregate(&outcomes, &config.eps_list);
    let mut dat = String::from("# eps pass_fraction\n");
    for r in &eps_rows {
        dat.push_str(&format!("{:.6} {:.6}\n", r.eps, r.pass_fraction));
    }
    sink.write("pass_fraction.dat", dat.as_bytes())?;
    Ok(RunReport {
        eps_rows,
        pass_trend_nondecreasing: trend,
        outcomes,
        seed_ledger: seeds,
        ..empty_report()
    })
}

// ------------------------------------------------------------ compare-sandwich

/// Fitted A-ratio constant: `C₅ = max |A(τ, ξ)| / (e^{μτ} - 1)` over a
/// deterministic geometric ξ-sweep.
pub fn fit_c5(f: &ReactionFunction, c1: f64, eps: f64, alpha: f64) -> Result<f64> {
    let tau_star = c1 * (1.0 / eps).ln();
    let step = 1e-3 * (1.0f64).min(1.0 / f.c_f());
    let lo = eps.powf(alpha);
    let hi = 2.0 * f.c0_bound();
    let n_xi = 32;
    let mut c5: f64 = 0.0;
    for s in 0..n_xi {
        let xi = lo * (hi / lo).powf(s as f64 / (n_xi - 1) as f64);
        for xi in [xi, -xi] {
            let traj = flow_ode(f, xi, tau_star, step)?;
            for (k, &tau) in traj.tau_grid.iter().enumerate() {
                if tau < 0.05 {
                    continue;
                }
                let denom = (f.mu() * tau).exp() - 1.0;
                c5 = c5.max(traj.a_ratio[k].abs() / denom);
            }
        }
    }
    Ok(c5)
}

/// 1-D shift amplitude: smallest `c_h` with
/// `μ c_h sech(x) ≥ C₅ u₀⁺'(x)² + |u₀⁺''(x)| + 2C₀ε^κ (1 + |u₀⁺'(x)|)`
/// across the lattice (the pointwise bracket the comparison argument needs).
/// The `ε^κ` terms bound the noise-driven `Y_xx` and `Y_ξx/Y_ξ`, which
/// vanish identically outside the kernel support.
fn fit_ch(
    f: &ReactionFunction,
    grid: &SpaceGrid,
    prof: &InitialProfile,
    c5: f64,
    eps: f64,
    kappa: f64,
    noise_radius: f64,
) -> f64 {
    let h = grid.spacing();
    let n = grid.n_total();
    let ek = eps.powf(kappa);
    let c0 = f.c0_bound();
    let mut c_h: f64 = 1.0;
    for i in 1..n - 1 {
        let x = grid.axis_coord(i);
        let d1 = (prof.u0_plus[i + 1] - prof.u0_plus[i - 1]) / (2.0 * h);
        let d2 = (prof.u0_plus[i + 1] - 2.0 * prof.u0_plus[i] + prof.u0_plus[i - 1]) / (h * h);
        let noise_terms = if x.abs() <= noise_radius {
            2.0 * c0 * ek * (1.0 + d1.abs())
        } else {
            0.0
        };
        let need = c5 * d1 * d1 + d2.abs() + noise_terms;
        c_h = c_h.max(need * x.cosh() / f.mu());
    }
    c_h
}

/// Sup norms of (u, |∇u|, |Δu|) by central differences on the tensor grid.
fn envelope_norms(grid: &SpaceGrid, u: &[f64]) -> (f64, f64, f64) {
    let n = grid.nodes_per_axis;
    let h = grid.spacing();
    let stride_of_axis = |a: usize| n.pow((grid.dim - 1 - a) as u32);
    let mut m0 = 0.0f64;
    let mut m1 = 0.0f64;
    let mut m2 = 0.0f64;
    for i in 0..u.len() {
        m0 = m0.max(u[i].abs());
        let mut grad2 = 0.0;
        let mut lap = 0.0;
        let mut interior = true;
        for a in 0..grid.dim {
            let s = stride_of_axis(a);
            let ai = (i / s) % n;
            if ai == 0 || ai + 1 == n {
                interior = false;
                break;
            }
            let d1 = (u[i + s] - u[i - s]) / (2.0 * h);
            grad2 += d1 * d1;
            lap += (u[i + s] - 2.0 * u[i] + u[i - s]) / (h * h);
        }
        if interior {
            m1 = m1.max(grad2.sqrt());
            m2 = m2.max(lap.abs());
        }
    }
    (m0, m1, m2)
}

fn sandwich_single(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    kernel: &CovarianceKernel,
    grid: &SpaceGrid,
    prof: &InitialProfile,
    kind: &ShiftKind,
    eps: f64,
    seed: u64,
) -> Result<(bool, f64, MonitorState)> {
    let horizon = horizon_of(config, eps);
    // the shared fast grid also drives the pair's flows from shifted
    // arguments deep in the wells, so size it against sup |f'|
    let dt_factor = config
        .solver
        .dt_factor
        .min(0.35 * f.c_f() / f.lipschitz_bound());
    let (dt, _n, slow_grid) = solver_grid(horizon, dt_factor * eps / f.c_f());
    let n_cp = config.solver.checkpoints.max(1);
    let cps: Vec<f64> = (1..=n_cp)
        .map(|k| horizon * k as f64 / n_cp as f64)
        .collect();
    let state = FieldState::new(grid.clone(), prof.u0.clone(), eps, config.gamma);
    let (traj, pair, monitor) = if config.solver.zero_noise {
        let traj = evolve(&state, f, &Forcing::None, horizon, dt, &cps)?;
        let pair = build_supersub(
            f,
            None,
            None,
            grid,
            prof,
            eps,
            config.gamma,
            kind.clone(),
            horizon,
        )?;
        (traj, pair, MonitorState::default())
    } else {
        let bundle = Arc::new(BrownianBundle::sample(
            &slow_grid,
            kernel.modes().len().max(1),
            seed,
        )?);
        let path = from_bundle(kernel, bundle.clone(), grid.point_set(), None)?;
        let traj = evolve(&state, f, &Forcing::Path(&path), horizon, dt, &cps)?;
        let monitor = field_monitors(config, f, eps, &traj, Some(&path));
        let fast = Arc::new(bundle.rescale_fast(eps));
        let pair = build_supersub(
            f,
            Some(kernel),
            Some(fast),
            grid,
            prof,
            eps,
            config.gamma,
            kind.clone(),
            horizon,
        )?;
        (traj, pair, monitor)
    };
    let report = check_sandwich(&traj, &pair, config.sandwich.tol)?;
    Ok((report.pass(), report.worst(), monitor))
}

fn run_compare_sandwich(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let grid = config.grid.build()?;
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(grid.dim)?)?;
    let mut outcomes = Vec::new();
    let mut seeds = Vec::new();
    let mut notes = Vec::new();
    let mut viol_csv = String::from("eps,path,pass,worst_violation\n");
    for (ei, &eps) in config.eps_list.iter().enumerate() {
        let prof = build_initial(&grid, &config.initial.spec()?, f.c0_bound(), eps, config.kappa)?;
        let c5 = match config.sandwich.c5 {
            Some(v) => v,
            None => fit_c5(f, config.c1, eps, config.alpha)?,
        };
        let kind = if grid.dim == 1 {
            let c_h = fit_ch(f, &grid, &prof, c5, eps, config.kappa, kernel.support_radius());
            notes.push(format!("eps {eps}: fitted C5 = {c5:.3}, c_h = {c_h:.3}"));
            ShiftKind::OneDFunctionH { c_h }
        } else {
            // positivity bracket with the measured envelope norms
            let (_, grad, lap) = envelope_norms(&grid, &prof.u0_plus);
            let c2 = select_c2_fitted(f.mu(), c5, grad, lap, f.c0_bound(), eps, config.kappa);
            notes.push(format!(
                "eps {eps}: fitted C5 = {c5:.3}, |grad u0+| = {grad:.3}, |lap u0+| = {lap:.3}, C2 = {c2}"
            ));
            ShiftKind::DdConstantC2(c2)
        };
        let results: Vec<(usize, u64, Result<(bool, f64, MonitorState)>)> = (0..config.paths)
            .into_par_iter()
            .map(|p| {
                let seed = path_seed(config.root_seed, (ei * config.paths + p) as u64);
                let r = sandwich_single(config, f, &kernel, &grid, &prof, &kind, eps, seed);
                (p, seed, r)
            })
            .collect();
        for (p, seed, r) in results {
            seeds.push(seed);
            match r {
                Ok((pass, worst, monitor)) => {
                    viol_csv.push_str(&format!("{eps},{p},{},{worst:.6e}\n", pass as u8));
                    outcomes.push(PathOutcome {
                        eps,
                        path: p,
                        seed,
                        pass,
                        monitor,
                        failure: None,
                        stat: Some(worst),
                    });
                }
                Err(e) => outcomes.push(PathOutcome {
                    eps,
                    path: p,
                    seed,
                    pass: false,
                    monitor: MonitorState::default(),
                    failure: Some(e.to_string()),
                    stat: None,
                }),
            }
        }
    }
    sink.write("sandwich_violations.csv", viol_csv.as_bytes())?;
    let (eps_rows, trend) = aggregate(&outcomes, &config.eps_list);
    Ok(RunReport {
        eps_rows,
        pass_trend_nondecreasing: trend,
        outcomes,
        seed_ledger: seeds,
        notes,
        ..empty_report()
    })
}

// ------------------------------------------------------------- track-interface

struct TrackOutcome {
    records: Vec<InterfaceRecord>,
    monitor: MonitorState,
    xi_start: f64,
    xi_end: f64,
}

fn track_single(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    kernel: &CovarianceKernel,
    grid: &SpaceGrid,
    prof: &InitialProfile,
    g_bars: Option<&(Vec<f64>, Vec<f64>)>,
    eps: f64,
    seed: u64,
) -> Result<TrackOutcome> {
    // phase 1: generation at the fine step
    let gen = generation_single(config, f, kernel, grid, prof, g_bars, eps, seed)?;
    let t_star = gen.final_state.t;
    // phase 2: metastable motion at the coarse step out to the rescaled horizon
    let t_horizon = t_star + config.limit_sde.t_end * eps.powf(-2.0 * config.gamma - 1.0);
    let dt_long = eps * eps * config.solver.dt_long_factor;
    let span = t_horizon - t_star;
    let n_steps = (span / dt_long).ceil().max(1.0) as usize;
    let dt_long = span / n_steps as f64;
    let n_cp = config.limit_sde.track_checkpoints.max(2);
    let cps: Vec<f64> = (0..n_cp)
        .map(|k| t_star + span * k as f64 / (n_cp - 1) as f64)
        .collect();
    let traj = if config.solver.zero_noise {
        evolve(&gen.final_state, f, &Forcing::None, t_horizon, dt_long, &cps)?
    } else {
        let grid2: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt_long).collect();
        let bundle = Arc::new(BrownianBundle::sample(
            &grid2,
            kernel.modes().len().max(1),
            derive_seed(seed, 0x10_000),
        )?);
        let path = from_bundle(kernel, bundle, grid.point_set(), None)?;
        evolve(&gen.final_state, f, &Forcing::Path(&path), t_horizon, dt_long, &cps)?
    };
    let records = track_zero(&traj, prof.zero.unwrap_or(0.0))?;
    let xi_start = records.first().and_then(|r| r.xi).unwrap_or(f64::NAN);
    let xi_end = records.last().and_then(|r| r.xi).unwrap_or(f64::NAN);
    Ok(TrackOutcome {
        records,
        monitor: gen.monitor,
        xi_start,
        xi_end,
    })
}

fn run_track_interface(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let (outcomes, seeds, csvs) = track_ensemble(config, f)?;
    for (p, csv) in csvs {
        sink.write(&format!("interface_{p:04}.csv"), csv.as_bytes())?;
    }
    let (eps_rows, _) = aggregate(&outcomes, &config.eps_list[..1]);
    Ok(RunReport {
        eps_rows,
        outcomes,
        seed_ledger: seeds,
        ..empty_report()
    })
}

#[allow(clippy::type_complexity)]
fn track_ensemble(
    config: &ExperimentConfig,
    f: &ReactionFunction,
) -> Result<(Vec<PathOutcome>, Vec<u64>, Vec<(usize, String)>)> {
    let eps = config.eps_list[0];
    let grid = config.grid.build()?;
    if grid.dim != 1 {
        return Err(Error::Config("interface tracking is 1-D".into()));
    }
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(1)?)?;
    let prof = build_initial(&grid, &config.initial.spec()?, f.c0_bound(), eps, config.kappa)?;
    let g_bars = tail_bars(config, &grid, &prof);
    let results: Vec<(usize, u64, Result<TrackOutcome>)> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let seed = path_seed(config.root_seed, p as u64);
            let r = track_single(config, f, &kernel, &grid, &prof, g_bars.as_ref(), eps, seed);
            (p, seed, r)
        })
        .collect();
    let mut outcomes = Vec::new();
    let mut seeds = Vec::new();
    let mut csvs = Vec::new();
    for (p, seed, r) in results {
        seeds.push(seed);
        match r {
            Ok(out) => {
                let mut csv = String::from("t,xi,l2_dist\n");
                for rec in &out.records {
                    csv.push_str(&format!(
                        "{:.8},{:.8},{:.8}\n",
                        rec.t,
                        rec.xi.unwrap_or(f64::NAN),
                        rec.l2_dist.unwrap_or(f64::NAN)
                    ));
                }
                csvs.push((p, csv));
                outcomes.push(PathOutcome {
                    eps,
                    path: p,
                    seed,
                    pass: true,
                    monitor: out.monitor,
                    failure: None,
                    stat: Some(out.xi_end - out.xi_start),
                });
            }
            Err(e) => outcomes.push(PathOutcome {
                eps,
                path: p,
                seed,
                pass: false,
                monitor: MonitorState::default(),
                failure: Some(e.to_string()),
                stat: None,
            }),
        }
    }
    Ok((outcomes, seeds, csvs))
}

// ------------------------------------------------------------------- limit-law

fn run_limit_law(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    sink: &OutSink,
) -> Result<RunReport> {
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(1)?)?;
    if kernel.separable_factor().is_none() {
        return Err(Error::Config(
            "limit-law needs the separable a(x) W_t noise (rank-one kernel)".into(),
        ));
    }
    let (outcomes, seeds, csvs) = track_ensemble(config, f)?;
    for (p, csv) in csvs {
        sink.write(&format!("interface_{p:04}.csv"), csv.as_bytes())?;
    }
    let deltas: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.pass)
        .filter_map(|o| o.stat)
        .collect();
    if deltas.len() < 8 {
        return Err(Error::Config(format!(
            "limit-law needs >= 8 successful paths, got {}",
            deltas.len()
        )));
    }
    // split-sample: calibrate (α₁, α₂) on the first half, verify on the rest
    let half = deltas.len() / 2;
    let (cal, ver) = deltas.split_at(half);
    let xi0 = config.initial.center;
    let a_of = |x: f64| -> f64 { kernel.separable_factor().map(|g| g(&[x])).unwrap_or(0.0) };
    let h = 1e-6;
    let ap_of = move |x: f64| (a_of(x + h) - a_of(x - h)) / (2.0 * h);
    let t_resc = config.limit_sde.t_end;
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var_of = |v: &[f64]| {
        let m = mean_of(v);
        v.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let a0 = a_of(xi0);
    let ap0 = ap_of(xi0);
    let alpha1 = (var_of(cal) / (a0 * a0 * t_resc)).sqrt();
    let alpha2 = if ap0.abs() > 1e-9 {
        mean_of(cal) / (a0 * ap0 * t_resc)
    } else {
        config.limit_sde.alpha2
    };
    let (sde_mean, sde_var) = limit_sde_moments(
        &a_of,
        &ap_of,
        alpha1,
        alpha2,
        xi0,
        t_resc,
        config.limit_sde.sde_dt,
        config.limit_sde.sde_paths,
        derive_seed(config.root_seed, 0xABCD),
    );
    let (pde_mean, pde_var) = (mean_of(ver), var_of(ver));
    let n_v = ver.len() as f64;
    let n_s = config.limit_sde.sde_paths as f64;
    let se_mean = (pde_var / n_v + sde_var / n_s).sqrt();
    let se_var = (2.0 * pde_var * pde_var / (n_v - 1.0) + 2.0 * sde_var * sde_var / (n_s - 1.0))
        .sqrt();
    let mean_z = (pde_mean - sde_mean) / se_mean;
    let var_z = (pde_var - sde_var) / se_var;
    let pass = mean_z.abs() <= 3.0 && var_z.abs() <= 3.0;
    let limit = LimitLawReport {
        alpha1_calibrated: alpha1,
        alpha2_calibrated: alpha2,
        pde_mean,
        pde_var,
        sde_mean,
        sde_var,
        mean_z,
        var_z,
        pass,
    };
    let mut dat = String::from("# side mean var n\n");
    dat.push_str(&format!("pde {pde_mean:.8e} {pde_var:.8e} {n_v}\n"));
    dat.push_str(&format!("sde {sde_mean:.8e} {sde_var:.8e} {n_s}\n"));
    sink.write("limit_law.dat", dat.as_bytes())?;
    let (eps_rows, _) = aggregate(&outcomes, &config.eps_list[..1]);
    Ok(RunReport {
        eps_rows,
        outcomes,
        seed_ledger: seeds,
        limit_law: Some(limit),
        notes: vec![format!(
            "calibration-consistency check: alpha1/alpha2 fitted on half the paths"
        )],
        ..empty_report()
    })
}

// --------------------------------------------------------- trajectory dumping

/// CSV dump of a scalar trajectory (behind --dump-trajectories).
pub fn dump_trajectory_csv(traj: &crate::scalar::ScalarTrajectory) -> String {
    let mut csv = String::from("tau,y,y_xi,a_ratio,z\n");
    for k in 0..traj.values.len() {
        let z = traj
            .z
            .as_ref()
            .map(|zz| format!("{:.8e}", zz[0][k]))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{:.8},{:.8e},{:.8e},{:.8e},{z}\n",
            traj.tau_grid[k], traj.values[k], traj.y_xi[k], traj.a_ratio[k]
        ));
    }
    csv
}

/// Dump a few sample SDE trajectories for one realization (first path).
pub fn dump_sample_trajectories(
    config: &ExperimentConfig,
    f: &ReactionFunction,
    out_dir: &Path,
) -> Result<()> {
    let eps = config.eps_list[0];
    let kernel = crate::noise::kernel::build_kernel(&config.kernel.descriptor(1)?)?;
    let tau_star = config.c1 * (1.0 / eps).ln();
    let step = 1e-3;
    let n = (tau_star / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(tau_star)).collect();
    let path = crate::noise::path::sample_derivative_path(
        &kernel,
        &grid,
        crate::noise::path::PointSet::one_d(&[0.2]),
        0,
        path_seed(config.root_seed, 0),
    )?;
    std::fs::create_dir_all(out_dir)?;
    for (i, xi) in [-0.5, eps.powf(config.alpha), 0.5].into_iter().enumerate() {
        let traj = flow_sde_on_path(f, &path, 0, xi, eps, config.gamma)?;
        std::fs::write(
            out_dir.join(format!("trajectory_{i}.csv")),
            dump_trajectory_csv(&traj),
        )?;
    }
    Ok(())
}
