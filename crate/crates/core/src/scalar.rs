//! Scalar comparison dynamics in fast time `τ = t/ε`.
//!
//! Three flows share one trajectory type: the deterministic `Y' = f(Y)`,
//! the noisy `dY^ε = f(Y^ε) dτ + ε^{γ+1/2} dW̃_τ(x)` (Euler-Maruyama), and
//! the random ODE `Y^{ε,δ}` forced by the mollified path (drift integrated
//! by RK4 halves around the exact mollified increment, so the noise sums
//! telescope and the pathwise Gronwall envelope survives discretization).
//!
//! Because the forcing never depends on ξ, the ξ-derivative obeys
//! `Y_ξ = exp(∫ f'(Y))` and `A = Y_ξξ/Y_ξ = ∫ Y_ξ f''(Y)`; both are filled
//! along every trajectory by trapezoid quadrature. `Y_ξ > 0` always.

use crate::error::{Error, Result};
use crate::noise::kernel::CovarianceKernel;
use crate::noise::mollify::MollifiedPath;
use crate::noise::path::{sample_derivative_path, NoisePath, PointSet};
use crate::reaction::ReactionFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowVariant {
    Deterministic,
    Sde,
    Mollified,
}

/// One integrated scalar trajectory with its ξ-derivative quantities.
#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub tau_grid: Vec<f64>,
    pub xi: f64,
    /// spatial anchor (empty for the deterministic flow)
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Y_ξ = exp(∫ f'(Y)), strictly positive
    pub y_xi: Vec<f64>,
    /// A = Y_ξξ / Y_ξ = ∫ Y_ξ f''(Y)
    pub a_ratio: Vec<f64>,
    /// spatial derivative processes Z_i, one series per direction
    pub z: Option<Vec<Vec<f64>>>,
    pub variant: FlowVariant,
}

impl ScalarTrajectory {
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Value at the largest grid time ≤ tau.
    pub fn at(&self, tau: f64) -> f64 {
        let k = match self
            .tau_grid
            .binary_search_by(|t| t.partial_cmp(&tau).unwrap())
        {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        };
        self.values[k.min(self.values.len() - 1)]
    }
}

fn rk4_step(f: &ReactionFunction, y: f64, h: f64) -> f64 {
    let k1 = f.f(y);
    let k2 = f.f(y + 0.5 * h * k1);
    let k3 = f.f(y + 0.5 * h * k2);
    let k4 = f.f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn check_xi_range(f: &ReactionFunction, xi: f64) -> Result<()> {
    let b = 2.0 * f.c0_bound();
    if !(-b..=b).contains(&xi) {
        return Err(Error::Precondition(format!(
            "xi = {xi} outside [-2C0, 2C0] = [{}, {}]",
            -b, b
        )));
    }
    Ok(())
}

fn guard(f: &ReactionFunction, y: f64, tau: f64) -> Result<()> {
    let bound = 2.0 * f.c0_bound() + 1.0;
    if !y.is_finite() || y.abs() > bound {
        return Err(Error::FlowDivergence {
            value: y,
            bound,
            tau,
        });
    }
    Ok(())
}

struct XiQuadrature {
    log_y_xi: f64,
    a: f64,
    prev_df: f64,
    prev_g: f64,
}

impl XiQuadrature {
    fn new(f: &ReactionFunction, y0: f64) -> Self {
        XiQuadrature {
            log_y_xi: 0.0,
            a: 0.0,
            prev_df: f.df(y0),
            prev_g: 1.0 * f.d2f(y0),
        }
    }

    fn advance(&mut self, f: &ReactionFunction, y_new: f64, h: f64) -> (f64, f64) {
        let df_new = f.df(y_new);
        self.log_y_xi += 0.5 * h * (self.prev_df + df_new);
        let y_xi_new = self.log_y_xi.exp();
        let g_new = y_xi_new * f.d2f(y_new);
        self.a += 0.5 * h * (self.prev_g + g_new);
        self.prev_df = df_new;
        self.prev_g = g_new;
        (y_xi_new, self.a)
    }
}

/// Classical RK4 for the comparison ODE `Y' = f(Y)`, `Y(0) = ξ`, with the
/// ξ-derivative quadratures filled along the way.
pub fn flow_ode(
    f: &ReactionFunction,
    xi: f64,
    tau_end: f64,
    step: f64,
) -> Result<ScalarTrajectory> {
    check_xi_range(f, xi)?;
    let max_step = 1e-3 * (1.0f64).min(1.0 / f.c_f());
    if step > max_step + 1e-15 {
        return Err(Error::StepSize {
            step,
            why: format!("flow_ode requires step <= {max_step:.3e}"),
        });
    }
    let n = (tau_end / step).ceil().max(1.0) as usize;
    let mut tau_grid = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut y_xi = Vec::with_capacity(n + 1);
    let mut a_ratio = Vec::with_capacity(n + 1);
    tau_grid.push(0.0);
    values.push(xi);
    y_xi.push(1.0);
    a_ratio.push(0.0);
    let mut quad = XiQuadrature::new(f, xi);
    let mut y = xi;
    for k in 0..n {
        let tau1 = ((k + 1) as f64 * step).min(tau_end);
        let h = tau1 - tau_grid[k];
        y = rk4_step(f, y, h);
        guard(f, y, tau1)?;
        let (yx, a) = quad.advance(f, y, h);
        tau_grid.push(tau1);
        values.push(y);
        y_xi.push(yx);
        a_ratio.push(a);
    }
    Ok(ScalarTrajectory {
        tau_grid,
        xi,
        x: Vec::new(),
        values,
        y_xi,
        a_ratio,
        z: None,
        variant: FlowVariant::Deterministic,
    })
}

/// `dY^ε = f(Y^ε) dτ + ε^{γ+1/2} dW̃_τ(x)` on an already sampled path;
/// `point` indexes the path's point set. The Gaussian increment is added
/// exactly between RK4 drift halves: the noise sums telescope as in
/// Euler-Maruyama (strong order 0.5 is unchanged) while the drift stays
/// fourth order, so the zero-noise limit reproduces [`flow_ode`]. The `Z_i`
/// processes are integrated alongside when the path carries derivative
/// noise.
pub fn flow_sde_on_path(
    f: &ReactionFunction,
    path: &NoisePath,
    point: usize,
    xi: f64,
    eps: f64,
    gamma: f64,
) -> Result<ScalarTrajectory> {
    check_xi_range(f, xi)?;
    let tau_grid = path.time_grid().to_vec();
    let n = path.n_steps();
    if n > 0 {
        let max_dt = tau_grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0f64, f64::max);
        if max_dt * f.c_f() > 0.1 {
            return Err(Error::StepSize {
                step: max_dt,
                why: "flow_sde requires step * C_f <= 0.1".into(),
            });
        }
    }
    let amp = eps.powf(gamma + 0.5);
    let has_z = path.derivative_direction().is_some();
    let mut values = Vec::with_capacity(n + 1);
    let mut y_xi = Vec::with_capacity(n + 1);
    let mut a_ratio = Vec::with_capacity(n + 1);
    let mut z_series: Vec<f64> = Vec::with_capacity(if has_z { n + 1 } else { 0 });
    values.push(xi);
    y_xi.push(1.0);
    a_ratio.push(0.0);
    if has_z {
        z_series.push(0.0);
    }
    let mut quad = XiQuadrature::new(f, xi);
    let mut y = xi;
    let mut z = 0.0;
    for k in 0..n {
        let h = tau_grid[k + 1] - tau_grid[k];
        if has_z {
            z += f.df(y) * z * h + amp * path.derivative_increment(k, point).unwrap();
        }
        y = rk4_step(f, y, 0.5 * h);
        y += amp * path.increment(k, point);
        y = rk4_step(f, y, 0.5 * h);
        guard(f, y, tau_grid[k + 1])?;
        let (yx, a) = quad.advance(f, y, h);
        values.push(y);
        y_xi.push(yx);
        a_ratio.push(a);
        if has_z {
            z_series.push(z);
        }
    }
    Ok(ScalarTrajectory {
        tau_grid,
        xi,
        x: path.points().point(point).to_vec(),
        values,
        y_xi,
        a_ratio,
        z: if has_z { Some(vec![z_series]) } else { None },
        variant: FlowVariant::Sde,
    })
}

/// Sample a fresh path at the anchor `x` and integrate the SDE flow.
/// Deterministic per seed; the derivative noise is jointly sampled so `Z`
/// rides the same Brownian modes.
#[allow(clippy::too_many_arguments)]
pub fn flow_sde(
    f: &ReactionFunction,
    kernel: &CovarianceKernel,
    xi: f64,
    x: &[f64],
    eps: f64,
    gamma: f64,
    tau_end: f64,
    step: f64,
    seed: u64,
) -> Result<ScalarTrajectory> {
    let n = (tau_end / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(tau_end)).collect();
    let path = sample_derivative_path(kernel, &grid, PointSet::single(x), 0, seed)?;
    flow_sde_on_path(f, &path, 0, xi, eps, gamma)
}

/// Random ODE `Y' = f(Y) + ε^{γ+1/2} Ẇ^(δ)(τ, x)`: RK4 drift halves around
/// the exact mollified increment.
#[allow(clippy::too_many_arguments)]
pub fn flow_mollified(
    f: &ReactionFunction,
    mollified: &MollifiedPath,
    point: usize,
    xi: f64,
    eps: f64,
    gamma: f64,
    tau_end: f64,
    step: f64,
) -> Result<ScalarTrajectory> {
    check_xi_range(f, xi)?;
    let span = *mollified.base().time_grid().last().unwrap();
    if span + 1e-12 < tau_end {
        return Err(Error::Precondition(format!(
            "mollified path covers [0, {span}], need [0, {tau_end}]"
        )));
    }
    let amp = eps.powf(gamma + 0.5);
    let n = (tau_end / step).ceil().max(1.0) as usize;
    let mut tau_grid = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut y_xi = Vec::with_capacity(n + 1);
    let mut a_ratio = Vec::with_capacity(n + 1);
    tau_grid.push(0.0);
    values.push(xi);
    y_xi.push(1.0);
    a_ratio.push(0.0);
    let mut quad = XiQuadrature::new(f, xi);
    let mut y = xi;
    for k in 0..n {
        let t0 = tau_grid[k];
        let t1 = ((k + 1) as f64 * step).min(tau_end);
        let h = t1 - t0;
        y = rk4_step(f, y, 0.5 * h);
        y += amp * mollified.increment(t0, t1, point);
        y = rk4_step(f, y, 0.5 * h);
        guard(f, y, t1)?;
        let (yx, a) = quad.advance(f, y, h);
        tau_grid.push(t1);
        values.push(y);
        y_xi.push(yx);
        a_ratio.push(a);
    }
    Ok(ScalarTrajectory {
        tau_grid,
        xi,
        x: mollified.base().points().point(point).to_vec(),
        values,
        y_xi,
        a_ratio,
        z: None,
        variant: FlowVariant::Mollified,
    })
}

/// Recompute `(Y_ξ, A)` from a trajectory's values by the closed quadratures
/// `Y_ξ = exp(∫ f'(Y))`, `A = ∫ Y_ξ f''(Y)`.
pub fn xi_derivative(traj: &ScalarTrajectory, f: &ReactionFunction) -> (Vec<f64>, Vec<f64>) {
    let n = traj.values.len();
    let mut y_xi = Vec::with_capacity(n);
    let mut a_ratio = Vec::with_capacity(n);
    y_xi.push(1.0);
    a_ratio.push(0.0);
    let mut quad = XiQuadrature::new(f, traj.values[0]);
    for k in 1..n {
        let h = traj.tau_grid[k] - traj.tau_grid[k - 1];
        let (yx, a) = quad.advance(f, traj.values[k], h);
        y_xi.push(yx);
        a_ratio.push(a);
    }
    (y_xi, a_ratio)
}

/// The admissible interval `(α/μ + κ/p, 1/μ)` for the generation constant
/// `C₁`, plus a trajectory check at its midpoint: `|Y(C₁|log ε|, ξ) - 1| ≤
/// ε^κ` for `ξ = ε^α` and `ξ = 2C₀`.
pub fn ode_generation_time(
    f: &ReactionFunction,
    alpha: f64,
    kappa: f64,
    eps: f64,
) -> Result<((f64, f64), bool)> {
    if !(kappa > alpha && alpha > 0.5) {
        return Err(Error::Parameter(format!(
            "need kappa > alpha > 1/2, got kappa = {kappa}, alpha = {alpha}"
        )));
    }
    if kappa <= 1.0 {
        return Err(Error::Parameter(format!("need kappa > 1, got {kappa}")));
    }
    let lo = alpha / f.mu() + kappa / f.p_decay();
    let hi = 1.0 / f.mu();
    if lo >= hi {
        return Err(Error::Parameter(format!(
            "empty admissible interval: alpha/mu + kappa/p = {lo:.4} >= 1/mu = {hi:.4}"
        )));
    }
    let c1 = 0.5 * (lo + hi);
    let ok = generation_time_check(f, c1, alpha, kappa, eps)?;
    Ok(((lo, hi), ok))
}

/// Trajectory check of the generation estimate for a chosen `C₁`.
pub fn generation_time_check(
    f: &ReactionFunction,
    c1: f64,
    alpha: f64,
    kappa: f64,
    eps: f64,
) -> Result<bool> {
    let tau_star = c1 * (1.0 / eps).ln();
    let step = 1e-3 * (1.0f64).min(1.0 / f.c_f());
    let tol = eps.powf(kappa);
    for xi in [eps.powf(alpha), 2.0 * f.c0_bound()] {
        let traj = flow_ode(f, xi, tau_star, step)?;
        if (traj.last() - 1.0).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sup over `[0, tau_end]` of `Y(τ, ξ + ε^{β+δ}) - Y(τ, ξ)` (two RK4 runs).
pub fn ode_initial_stability(
    f: &ReactionFunction,
    xi: f64,
    alpha: f64,
    beta: f64,
    delta_exp: f64,
    eps: f64,
    tau_end: f64,
) -> Result<f64> {
    let pert = eps.powf(beta + delta_exp);
    let min_delta = 2.0 * alpha * f.c_f() / f.mu();
    if delta_exp < min_delta {
        return Err(Error::Precondition(format!(
            "delta_exp = {delta_exp} < 2 alpha C_f / mu = {min_delta}"
        )));
    }
    let lo = eps.powf(alpha);
    let hi = 2.0 * f.c0_bound() - pert;
    if !(lo..=hi).contains(&xi) {
        return Err(Error::Precondition(format!(
            "xi = {xi} outside case (i) range [{lo}, {hi}]"
        )));
    }
    let step = 1e-3 * (1.0f64).min(1.0 / f.c_f());
    let a = flow_ode(f, xi, tau_end, step)?;
    let b = flow_ode(f, xi + pert, tau_end, step)?;
    let mut sup = f64::NEG_INFINITY;
    for k in 0..a.values.len() {
        sup = sup.max(b.values[k] - a.values[k]);
    }
    Ok(sup)
}

/// Central-difference suprema of `|Y_x|`, `|Y_xx|`, `|Y_ξx / Y_ξ|` over a
/// family of trajectories sharing one realization on a uniform 1-D x-lattice,
/// restricted to `τ ≤ window_end`.
pub fn spatial_derivative_bounds(
    trajs: &[ScalarTrajectory],
    window_end: f64,
) -> Result<(f64, f64, f64)> {
    if trajs.len() < 8 {
        return Err(Error::Resolution(format!(
            "need at least 8 x-points inside the support, got {}",
            trajs.len()
        )));
    }
    let h = trajs[1].x[0] - trajs[0].x[0];
    for w in trajs.windows(2) {
        if ((w[1].x[0] - w[0].x[0]) - h).abs() > 1e-9 * h.abs() {
            return Err(Error::Precondition("x-lattice must be uniform".into()));
        }
        if w[0].tau_grid.len() != w[1].tau_grid.len() {
            return Err(Error::Precondition(
                "trajectories must share the tau grid".into(),
            ));
        }
    }
    let n_t = trajs[0].tau_grid.len();
    let (mut sup_yx, mut sup_yxx, mut sup_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..n_t {
        if trajs[0].tau_grid[k] > window_end {
            break;
        }
        for i in 1..trajs.len() - 1 {
            let ym = trajs[i - 1].values[k];
            let y0 = trajs[i].values[k];
            let yp = trajs[i + 1].values[k];
            sup_yx = sup_yx.max(((yp - ym) / (2.0 * h)).abs());
            sup_yxx = sup_yxx.max(((yp - 2.0 * y0 + ym) / (h * h)).abs());
            let lm = trajs[i - 1].y_xi[k].ln();
            let lp = trajs[i + 1].y_xi[k].ln();
            sup_ratio = sup_ratio.max(((lp - lm) / (2.0 * h)).abs());
        }
    }
    Ok((sup_yx, sup_yxx, sup_ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::kernel::{build_kernel, KernelDescriptor, ModeSpec};
    use crate::noise::mollify::mollify;
    use crate::noise::path::derive_seed;
    use std::sync::Arc;

    /// Separation of variables for the cubic: Y(τ,ξ) = ξ/√(ξ² + (1-ξ²)e^{-2τ}).
    fn cubic_closed_form(tau: f64, xi: f64) -> f64 {
        xi / (xi * xi + (1.0 - xi * xi) * (-2.0 * tau).exp()).sqrt()
    }

    fn cubic() -> ReactionFunction {
        ReactionFunction::cubic(1.5)
    }

    fn bump_kernel() -> CovarianceKernel {
        build_kernel(&KernelDescriptor::Separable {
            amplitude: 1.0,
            factor: ModeSpec::bump(1, 1.0),
        })
        .unwrap()
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let f = cubic();
        let t0 = flow_ode(&f, 0.0, 3.0, 1e-3).unwrap();
        let t1 = flow_ode(&f, 1.0, 3.0, 1e-3).unwrap();
        for k in 0..t0.values.len() {
            assert_eq!(t0.values[k], 0.0);
            assert!((t1.values[k] - 1.0).abs() < 1e-14);
        }
        // at the unstable zero, Y_ξ = e^{μτ} = e^τ
        let tau = *t0.tau_grid.last().unwrap();
        assert!((t0.y_xi.last().unwrap() - tau.exp()).abs() < 1e-6 * tau.exp());
    }

    #[test]
    fn cubic_flow_matches_closed_form() {
        let f = cubic();
        let traj = flow_ode(&f, 0.5, 2.0, 1e-4).unwrap();
        let got = traj.last();
        assert!((got - 0.97361).abs() < 5e-6, "Y(2, 0.5) = {got}");
        for (k, &tau) in traj.tau_grid.iter().enumerate() {
            let expect = cubic_closed_form(tau, 0.5);
            assert!(
                (traj.values[k] - expect).abs() < 1e-8,
                "tau = {tau}: {} vs {expect}",
                traj.values[k]
            );
        }
    }

    #[test]
    fn flow_rejects_too_large_steps_and_bad_xi() {
        let f = cubic();
        assert!(matches!(
            flow_ode(&f, 0.5, 1.0, 0.01),
            Err(Error::StepSize { .. })
        ));
        assert!(matches!(
            flow_ode(&f, 3.5, 1.0, 1e-3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn generation_interval_empty_for_cubic() {
        let f = cubic();
        let err = ode_generation_time(&f, 0.6, 1.1, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)), "{err}");
    }

    #[test]
    fn generation_hypotheses_enforced() {
        let f = cubic();
        // kappa <= 1
        assert!(ode_generation_time(&f, 0.51, 0.52, 1e-3).is_err());
        // scaled cubic with mu = 4, p = 8 still empty: 0.51/4 + 1.01/8 = 0.2538 > 0.25
        let g = ReactionFunction::odd_polynomial(&[4.0, -4.0], 1.5);
        assert!((g.mu() - 4.0).abs() < 1e-12 && (g.p_decay() - 8.0).abs() < 1e-12);
        assert!(ode_generation_time(&g, 0.51, 1.01, 1e-3).is_err());
    }

    #[test]
    fn generation_time_check_passes_for_steep_well() {
        let f = ReactionFunction::steep_well(1.5);
        let ((lo, hi), _) = ode_generation_time(&f, 0.51, 1.01, 1e-3).unwrap();
        assert!((lo - 0.5605).abs() < 1e-9, "lo = {lo}");
        assert_eq!(hi, 1.0);
        assert!(generation_time_check(&f, 0.7, 0.51, 1.01, 1e-3).unwrap());
    }

    #[test]
    fn initial_stability_gap() {
        let f = cubic();
        let eps = 0.01f64;
        let (alpha, beta) = (0.6, 0.5);
        let delta = 2.0 * alpha * f.c_f() / f.mu();
        // gap at tau = 0 is the initial separation
        let pert = eps.powf(beta + delta);
        let sup = ode_initial_stability(&f, 1.0, alpha, beta, delta, eps, 5.0).unwrap();
        assert!(sup >= pert - 1e-15);
        // from xi = 1 any perturbation decays monotonically
        let a = flow_ode(&f, 1.0, 5.0, 1e-3).unwrap();
        let b = flow_ode(&f, 1.0 + pert, 5.0, 1e-3).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..a.values.len() {
            let gap = b.values[k] - a.values[k];
            assert!(gap <= prev + 1e-15);
            prev = gap;
        }
        // sup gap / eps^beta stays <= 1 as eps halves
        for &e in &[0.02f64, 0.01, 0.005] {
            let s = ode_initial_stability(&f, e.powf(alpha) + 0.05, alpha, beta, delta, e, 6.0)
                .unwrap();
            assert!(s <= e.powf(beta), "eps {e}: sup {s} vs {}", e.powf(beta));
        }
    }

    #[test]
    fn sde_with_vanishing_noise_is_the_ode() {
        let f = cubic();
        let k = bump_kernel();
        let traj = flow_sde(&f, &k, 0.5, &[0.2], 0.01, 400.0, 2.0, 1e-3, 5).unwrap();
        let ode = flow_ode(&f, 0.5, 2.0, 1e-3).unwrap();
        for i in 0..traj.values.len() {
            assert!(
                (traj.values[i] - ode.values[i]).abs() < 1e-10,
                "index {i}: {} vs {}",
                traj.values[i],
                ode.values[i]
            );
        }
    }

    #[test]
    fn sde_is_bit_reproducible_per_seed() {
        let f = cubic();
        let k = bump_kernel();
        let a = flow_sde(&f, &k, 0.0, &[0.1], 0.02, 1.0, 1.5, 1e-3, 77).unwrap();
        let b = flow_sde(&f, &k, 0.0, &[0.1], 0.02, 1.0, 1.5, 1e-3, 77).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.z.as_ref().unwrap(), b.z.as_ref().unwrap());
    }

    #[test]
    fn sde_variance_matches_linearized_oracle() {
        // Var[Y^ε(τ) - Y(τ)] ≈ ε^{2γ+1} Q(x,x) ∫_0^τ exp(2∫_s^τ f'(Y)) ds
        let f = cubic();
        let k = bump_kernel();
        let (eps, gamma, tau, xi, x) = (0.01f64, 1.0f64, 1.0f64, 0.5f64, [0.2]);
        let step = 1e-3;
        let ode = flow_ode(&f, xi, tau, step).unwrap();
        // quadrature of the variation-of-constants formula
        let n = ode.values.len();
        let mut integral = 0.0;
        for s in 0..n - 1 {
            // exp(2∫_s^τ f'(Y)) = (Y_ξ(τ)/Y_ξ(s))^2
            let amp = (ode.y_xi[n - 1] / ode.y_xi[s]).powi(2);
            let amp2 = (ode.y_xi[n - 1] / ode.y_xi[s + 1]).powi(2);
            integral += 0.5 * (amp + amp2) * (ode.tau_grid[s + 1] - ode.tau_grid[s]);
        }
        let predicted = eps.powf(2.0 * gamma + 1.0) * k.q(&x, &x) * integral;
        let n_paths = 10_000;
        let mut acc = 0.0;
        for s in 0..n_paths {
            let t = flow_sde(
                &f,
                &k,
                xi,
                &x,
                eps,
                gamma,
                tau,
                step,
                derive_seed(1009, s as u64),
            )
            .unwrap();
            let d = t.last() - ode.last();
            acc += d * d;
        }
        let var = acc / n_paths as f64;
        assert!(
            (var - predicted).abs() <= 0.2 * predicted,
            "var {var:.3e} vs predicted {predicted:.3e}"
        );
    }

    #[test]
    fn xi_derivative_matches_finite_differences() {
        let f = cubic();
        let h = 1e-5;
        let base = flow_ode(&f, 0.5, 2.0, 1e-4).unwrap();
        let up = flow_ode(&f, 0.5 + h, 2.0, 1e-4).unwrap();
        let dn = flow_ode(&f, 0.5 - h, 2.0, 1e-4).unwrap();
        assert_eq!(base.y_xi[0], 1.0);
        assert_eq!(base.a_ratio[0], 0.0);
        let (y_xi, a_ratio) = xi_derivative(&base, &f);
        for k in (0..base.values.len()).step_by(500) {
            let fd = (up.values[k] - dn.values[k]) / (2.0 * h);
            assert!(
                (y_xi[k] - fd).abs() <= 1e-3 * fd.abs().max(1e-12),
                "k {k}: y_xi {} vs fd {fd}",
                y_xi[k]
            );
            // A = d/dξ ln Y_ξ
            let fd_ln = (up.y_xi[k].ln() - dn.y_xi[k].ln()) / (2.0 * h);
            assert!(
                (a_ratio[k] - fd_ln).abs() <= 1e-2 * fd_ln.abs().max(1e-9),
                "k {k}: A {} vs fd {fd_ln}",
                a_ratio[k]
            );
        }
    }

    #[test]
    fn y_xi_positive_along_noisy_trajectories() {
        let f = cubic();
        let k = bump_kernel();
        for seed in 0..10 {
            let t = flow_sde(&f, &k, -0.8, &[0.0], 0.02, 0.6, 3.0, 1e-3, seed).unwrap();
            assert!(t.y_xi.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn mollified_flow_with_zero_noise_is_the_ode() {
        let f = cubic();
        let k = bump_kernel();
        // a point outside the kernel support sees a zero path
        let grid: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-3).collect();
        let path = Arc::new(
            crate::noise::path::sample_path(&k, &grid, PointSet::one_d(&[1.3]), 3).unwrap(),
        );
        let m = mollify(path, 0.01, 0.4).unwrap();
        let traj = flow_mollified(&f, &m, 0, 0.5, 0.02, 1.0, 3.0, 1e-3).unwrap();
        let ode = flow_ode(&f, 0.5, 3.0, 1e-3).unwrap();
        for i in 0..traj.values.len() {
            assert!((traj.values[i] - ode.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn mollified_vs_sde_obeys_gronwall_envelope() {
        // |Y^{ε,δ} - Y^ε| ≤ ε^{γ - C_f C₁} δ on [0, C₁ |log ε|], same ω;
        // the fast path is mollified at tolerance ε^{-1/2} δ.
        let f = cubic();
        let k = bump_kernel();
        let (eps, gamma, c1) = (0.02f64, 0.6f64, 0.4f64);
        let tau_star = c1 * (1.0 / eps).ln();
        let step = 1e-3;
        let n = (tau_star / step).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(tau_star)).collect();
        for seed in [3u64, 17, 23] {
            let path = Arc::new(
                crate::noise::path::sample_path(&k, &grid, PointSet::one_d(&[0.2]), seed)
                    .unwrap(),
            );
            let sde = flow_sde_on_path(&f, &path, 0, 0.5, eps, gamma).unwrap();
            for delta in [1e-2, 1e-3] {
                let m = mollify(path.clone(), delta / eps.sqrt(), 0.4).unwrap();
                let mol = flow_mollified(&f, &m, 0, 0.5, eps, gamma, tau_star, step).unwrap();
                let envelope = eps.powf(gamma - f.c_f() * c1) * delta;
                let mut sup = 0.0f64;
                for i in 0..sde.values.len() {
                    sup = sup.max((mol.values[i] - sde.values[i]).abs());
                }
                assert!(
                    sup <= envelope,
                    "seed {seed} delta {delta}: sup {sup:.3e} > envelope {envelope:.3e}"
                );
            }
        }
    }

    #[test]
    fn mollified_a_ratio_obeys_exponential_envelope() {
        // |A^{ε,δ}(τ)| <= C₅ (e^{μτ} - 1) with C₅ fitted over a deterministic
        // ξ-sweep; finite and stable under ε-halving
        let f = cubic();
        let k = bump_kernel();
        let fit = |eps: f64| -> f64 {
            let tau_star = 0.4 * (1.0f64 / eps).ln();
            let mut c5: f64 = 0.0;
            let n = (tau_star / 1e-3).ceil() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * 1e-3).min(tau_star)).collect();
            let path = Arc::new(
                crate::noise::path::sample_path(&k, &grid, PointSet::one_d(&[0.2]), 7).unwrap(),
            );
            let m = mollify(path, eps.powf(-0.5) * 1e-3, 0.4).unwrap();
            for s in 0..8 {
                let xi = eps.powf(0.6) * (3.0 / eps.powf(0.6)).powf(s as f64 / 7.0);
                for xi in [xi, -xi] {
                    let traj = flow_mollified(&f, &m, 0, xi, eps, 1.0, tau_star, 1e-3).unwrap();
                    for (k, &tau) in traj.tau_grid.iter().enumerate() {
                        if tau < 0.05 {
                            continue;
                        }
                        c5 = c5.max(traj.a_ratio[k].abs() / ((f.mu() * tau).exp() - 1.0));
                    }
                }
            }
            c5
        };
        let a = fit(0.02);
        let b = fit(0.01);
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() / a < 0.5, "C5 unstable under halving: {a} vs {b}");
    }

    #[test]
    fn spatial_derivative_sup_scales_with_predicted_exponent() {
        // log-log slope of mean sup|Y_x| across eps within 25% of
        // gamma + 1/2 - beta - C_f C1
        let f = cubic();
        let k = bump_kernel();
        let (gamma, c1, beta) = (0.6, 0.8, 0.02);
        let predicted = gamma + 0.5 - beta - f.c_f() * c1;
        let xs: Vec<f64> = (0..9).map(|i| 0.0 + 0.05 * i as f64).collect();
        let pts = PointSet::one_d(&xs);
        let n_paths = 20;
        let mut series = Vec::new();
        for &eps in &[0.04f64, 0.02, 0.01] {
            let tau_star = c1 * (1.0 / eps).ln();
            let n = (tau_star / 1e-3).ceil() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * 1e-3).min(tau_star)).collect();
            let mut acc = 0.0;
            for p in 0..n_paths {
                let bundle = Arc::new(
                    crate::noise::path::BrownianBundle::sample(&grid, 1, derive_seed(71, p))
                        .unwrap(),
                );
                let path =
                    crate::noise::path::from_bundle(&k, bundle, pts.clone(), None).unwrap();
                let trajs: Vec<ScalarTrajectory> = (0..xs.len())
                    .map(|i| flow_sde_on_path(&f, &path, i, 0.0, eps, gamma).unwrap())
                    .collect();
                let (yx, _, _) = spatial_derivative_bounds(&trajs, tau_star).unwrap();
                acc += yx;
            }
            series.push((eps, acc / n_paths as f64));
        }
        let (slope, _, _) = crate::harness::scaling_regression(&series).unwrap();
        assert!(
            (slope - predicted).abs() <= 0.25 * predicted,
            "slope {slope:.3} vs predicted {predicted:.3}"
        );
    }

    #[test]
    fn spatial_bounds_zero_for_zero_noise() {
        let f = cubic();
        let k = bump_kernel();
        let n_x = 9;
        let trajs: Vec<ScalarTrajectory> = (0..n_x)
            .map(|i| {
                let x = [2.0 + 0.01 * i as f64]; // outside support: zero forcing
                flow_sde(&f, &k, 0.5, &x, 0.02, 1.0, 2.0, 1e-3, 5).unwrap()
            })
            .collect();
        let (yx, yxx, ratio) = spatial_derivative_bounds(&trajs, 2.0).unwrap();
        assert_eq!(yx, 0.0);
        assert_eq!(yxx, 0.0);
        assert_eq!(ratio, 0.0);
    }

    #[test]
    fn spatial_bounds_need_eight_points() {
        let f = cubic();
        let k = bump_kernel();
        let trajs: Vec<ScalarTrajectory> = (0..4)
            .map(|i| flow_sde(&f, &k, 0.5, &[0.1 * i as f64], 0.02, 1.0, 1.0, 1e-3, 5).unwrap())
            .collect();
        assert!(matches!(
            spatial_derivative_bounds(&trajs, 1.0),
            Err(Error::Resolution(_))
        ));
    }
}
