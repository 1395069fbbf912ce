//! IMEX field solver for `du = (Δu + f(u)/ε) dt + ε^γ dW`.
//!
//! Diffusion is backward Euler (tridiagonal in 1-D, per-axis ADI factors in
//! d ≥ 2), the stiff reaction advances by one explicit RK4 substep of
//! `u' = f(u)/ε` over `dt`, and the noise enters as the exact Q-Wiener
//! increment of the step. Each implicit factor is an M-matrix and the RK4
//! reaction map is increasing under the `dt·C_f/ε ≤ 0.2` budget, so the
//! discrete scheme preserves nodewise order — the property the super/sub
//! comparison tests lean on.
//!
//! Boundaries: truncated-line runs clamp `u(±L) = ±1` through Dirichlet
//! boundary rows; box runs in d ≥ 2 use ghost-node Neumann rows.

pub mod tridiag;

use crate::error::{Error, Result};
use crate::noise::mollify::MollifiedPath;
use crate::noise::path::{NoisePath, PointSet};
use crate::reaction::ReactionFunction;
use tridiag::TridiagFactor;

/// Boundary handling of the spatial operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// ghost-node symmetry, any dimension
    Neumann,
    /// clamped `u(±L) = ±1`, 1-D only
    FarfieldPm1,
}

/// Tensor lattice on `[-extent, extent]^dim` with inclusive endpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpaceGrid {
    pub dim: usize,
    pub extent: f64,
    pub nodes_per_axis: usize,
    pub boundary: Boundary,
}

impl SpaceGrid {
    pub fn line(extent: f64, nodes: usize, boundary: Boundary) -> Self {
        SpaceGrid {
            dim: 1,
            extent,
            nodes_per_axis: nodes,
            boundary,
        }
    }

    pub fn box_2d(extent: f64, nodes: usize) -> Self {
        SpaceGrid {
            dim: 2,
            extent,
            nodes_per_axis: nodes,
            boundary: Boundary::Neumann,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.nodes_per_axis - 1) as f64
    }

    pub fn n_total(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing()
    }

    /// Row-major node coordinates.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let n = self.nodes_per_axis;
        let mut idx = flat;
        let mut coords = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            coords[a] = self.axis_coord(idx % n);
            idx /= n;
        }
        coords
    }

    pub fn point_set(&self) -> PointSet {
        let mut coords = Vec::with_capacity(self.n_total() * self.dim);
        for i in 0..self.n_total() {
            coords.extend(self.node(i));
        }
        PointSet::new(self.dim, coords)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return Err(Error::Config("grid needs at least 8 nodes per axis".into()));
        }
        if self.dim == 0 || self.dim > 3 {
            return Err(Error::Config("grid dimension must be 1, 2 or 3".into()));
        }
        if self.boundary == Boundary::FarfieldPm1 && self.dim != 1 {
            return Err(Error::Config("far-field boundary is 1-D only".into()));
        }
        Ok(())
    }
}

/// The field at one time.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: SpaceGrid,
    pub u: Vec<f64>,
    pub t: f64,
    pub eps: f64,
    pub gamma: f64,
    pub step_count: usize,
}

impl FieldState {
    pub fn new(grid: SpaceGrid, u: Vec<f64>, eps: f64, gamma: f64) -> Self {
        FieldState {
            grid,
            u,
            t: 0.0,
            eps,
            gamma,
            step_count: 0,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Trapezoid L² norm of `u - other` over the grid.
    pub fn l2_distance(&self, other: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let w = h.powi(self.grid.dim as i32);
        let mut acc = 0.0;
        for (i, &v) in self.u.iter().enumerate() {
            let d = v - other[i];
            acc += w * d * d;
        }
        acc.sqrt()
    }
}

/// Initial data with Neumann-compatible envelopes and the 1-D certificates.
#[derive(Debug, Clone)]
pub struct InitialProfile {
    pub u0: Vec<f64>,
    pub u0_plus: Vec<f64>,
    pub u0_minus: Vec<f64>,
    /// unique zero ξ₀ (far-field 1-D case)
    pub zero: Option<f64>,
    /// tail certificates (g₁, g₂) on the lattice: |u0 ∓ 1| ≤ ε^κ g_{1,2}
    pub tails: Option<(Vec<f64>, Vec<f64>)>,
}

/// Closed-form initial data shapes.
#[derive(Clone)]
pub enum InitialSpec {
    /// `tanh(slope (x - center))` in the first axis
    Tanh { center: f64, slope: f64 },
    /// linear ramp clipped to ±1
    LinearRamp { center: f64, slope: f64 },
    /// constant value (Neumann reductions)
    Constant(f64),
    /// explicit node values
    Nodes(Vec<f64>),
    /// arbitrary profile of the first axis coordinate
    Closed(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// radial profile `tanh((r0² - |x|²)/w)` (d ≥ 2)
    RadialTanh { r0: f64, w: f64 },
}

impl std::fmt::Debug for InitialSpec {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialSpec::Tanh { center, slope } => {
                write!(fm, "Tanh{{center: {center}, slope: {slope}}}")
            }
            InitialSpec::LinearRamp { center, slope } => {
                write!(fm, "LinearRamp{{center: {center}, slope: {slope}}}")
            }
            InitialSpec::Constant(c) => write!(fm, "Constant({c})"),
            InitialSpec::Nodes(_) => write!(fm, "Nodes(..)"),
            InitialSpec::Closed(_) => write!(fm, "Closed(..)"),
            InitialSpec::RadialTanh { r0, w } => write!(fm, "RadialTanh{{r0: {r0}, w: {w}}}"),
        }
    }
}

/// Evaluate an initial spec on the grid.
fn eval_initial(grid: &SpaceGrid, spec: &InitialSpec) -> Result<Vec<f64>> {
    let n = grid.n_total();
    let mut u0 = Vec::with_capacity(n);
    for i in 0..n {
        let p = grid.node(i);
        let v = match spec {
            InitialSpec::Tanh { center, slope } => (slope * (p[0] - center)).tanh(),
            InitialSpec::LinearRamp { center, slope } => {
                (slope * (p[0] - center)).clamp(-1.0, 1.0)
            }
            InitialSpec::Constant(c) => *c,
            InitialSpec::Nodes(vals) => {
                if vals.len() != n {
                    return Err(Error::InitialCondition(format!(
                        "node count {} != grid size {n}",
                        vals.len()
                    )));
                }
                vals[i]
            }
            InitialSpec::Closed(f) => f(p[0]),
            InitialSpec::RadialTanh { r0, w } => {
                let r2: f64 = p.iter().map(|c| c * c).sum();
                ((r0 * r0 - r2) / w).tanh()
            }
        };
        u0.push(v);
    }
    Ok(u0)
}

/// Discrete sup norms of (u, u', u'') along the first axis (1-D) or all axes
/// (d ≥ 2, gradient components and pure second differences).
fn discrete_norms(grid: &SpaceGrid, u: &[f64]) -> (f64, f64, f64) {
    let h = grid.spacing();
    let n = grid.nodes_per_axis;
    let mut m0 = 0.0f64;
    let mut m1 = 0.0f64;
    let mut m2 = 0.0f64;
    for &v in u {
        m0 = m0.max(v.abs());
    }
    let stride_of_axis = |a: usize| n.pow((grid.dim - 1 - a) as u32);
    for a in 0..grid.dim {
        let stride = stride_of_axis(a);
        for i in 0..u.len() {
            let ai = (i / stride) % n;
            if ai >= 1 && ai + 1 < n {
                m1 = m1.max(((u[i + stride] - u[i - stride]) / (2.0 * h)).abs());
                m2 = m2.max(((u[i + stride] - 2.0 * u[i] + u[i - stride]) / (h * h)).abs());
            }
        }
    }
    (m0, m1, m2)
}

/// Validate and assemble initial data.
///
/// Far-field 1-D grids get the full interface battery: the each-norm `C₀`
/// bound, a unique lattice sign change inside `[-1, 1]` locating `ξ₀`,
/// `|u0| ≥ c√ε` outside a `c'√ε` neighborhood of `ξ₀`, far-field clamps at
/// `±L`, and tail certificates `g₁, g₂`. Neumann grids check the norms and
/// build the flattened-collar envelopes `u0^± `.
pub fn build_initial(
    grid: &SpaceGrid,
    spec: &InitialSpec,
    c0: f64,
    eps: f64,
    kappa: f64,
) -> Result<InitialProfile> {
    grid.validate()?;
    let u0 = eval_initial(grid, spec)?;
    let (m0, m1, m2) = discrete_norms(grid, &u0);
    for (name, val) in [("||u0||", m0), ("||u0'||", m1), ("||u0''||", m2)] {
        if val > c0 + 1e-9 {
            return Err(Error::InitialCondition(format!(
                "{name} = {val:.4} exceeds C0 = {c0}"
            )));
        }
    }

    match grid.boundary {
        Boundary::FarfieldPm1 => {
            let n = grid.n_total();
            // far-field clamps
            if (u0[0] + 1.0).abs() > 1e-6 || (u0[n - 1] - 1.0).abs() > 1e-6 {
                return Err(Error::InitialCondition(format!(
                    "far-field values u0(-L) = {:.3e}, u0(L) = {:.3e} not within 1e-6 of ∓1",
                    u0[0],
                    u0[n - 1]
                )));
            }
            // unique sign change, located in [-1, 1]
            let mut zero = None;
            let mut changes = 0;
            for i in 0..n - 1 {
                if u0[i] == 0.0 || u0[i] * u0[i + 1] < 0.0 {
                    changes += 1;
                    let x0 = grid.axis_coord(i);
                    let x1 = grid.axis_coord(i + 1);
                    let xi = if u0[i] == 0.0 {
                        x0
                    } else {
                        x0 + (x1 - x0) * (-u0[i]) / (u0[i + 1] - u0[i])
                    };
                    zero = Some(xi);
                }
            }
            if changes != 1 {
                return Err(Error::InitialCondition(format!(
                    "need a unique sign change, found {changes}"
                )));
            }
            let xi0 = zero.unwrap();
            if xi0.abs() > 1.0 {
                return Err(Error::InitialCondition(format!(
                    "zero ξ₀ = {xi0:.4} outside [-1, 1]"
                )));
            }
            // |u0| >= c sqrt(eps) away from the zero
            let (c_low, c_prime) = (0.25, 2.0);
            for i in 0..n {
                let x = grid.axis_coord(i);
                if (x - xi0).abs() >= c_prime * eps.sqrt()
                    && u0[i].abs() < c_low * eps.sqrt()
                {
                    return Err(Error::InitialCondition(format!(
                        "|u0({x:.4})| = {:.3e} < {:.3e} outside the interface band",
                        u0[i].abs(),
                        c_low * eps.sqrt()
                    )));
                }
            }
            // tail certificates
            let ek = eps.powf(kappa);
            let g1: Vec<f64> = (0..n)
                .map(|i| {
                    if grid.axis_coord(i) >= 1.0 {
                        (u0[i] - 1.0).abs() / ek
                    } else {
                        0.0
                    }
                })
                .collect();
            let g2: Vec<f64> = (0..n)
                .map(|i| {
                    if grid.axis_coord(i) <= -1.0 {
                        (u0[i] + 1.0).abs() / ek
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(InitialProfile {
                u0_plus: u0.clone(),
                u0_minus: u0.clone(),
                u0,
                zero: Some(xi0),
                tails: Some((g1, g2)),
            })
        }
        Boundary::Neumann => {
            let (plus, minus) = neumann_envelopes(grid, &u0);
            Ok(InitialProfile {
                u0_plus: plus,
                u0_minus: minus,
                u0,
                zero: None,
                tails: None,
            })
        }
    }
}

/// Collar width of the Neumann envelopes in grid cells: at least 4, growing
/// with resolution so the blend curvature stays a physical quantity instead
/// of an O(1/h) grid artifact.
fn collar_cells(n: usize) -> usize {
    (n / 16).max(4).min(n / 2 - 1)
}

/// Flatten a collar at each face: the envelope blends toward the running
/// extremum along the inward normal through a smooth cos² taper whose first
/// two weights are 1 (discrete zero normal derivative); the interior is
/// untouched.
fn neumann_envelopes(grid: &SpaceGrid, u0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.nodes_per_axis;
    let m = collar_cells(n);
    let blend: Vec<f64> = (0..=m)
        .map(|k| {
            if k <= 1 {
                1.0
            } else {
                let z = (k - 1) as f64 / (m - 1) as f64;
                (0.5 * std::f64::consts::PI * z).cos().powi(2)
            }
        })
        .collect();
    let stride_of_axis = |a: usize| n.pow((grid.dim - 1 - a) as u32);
    let mut plus = u0.to_vec();
    let mut minus = u0.to_vec();
    for a in 0..grid.dim {
        let stride = stride_of_axis(a);
        let lines = u0.len() / n;
        for line in 0..lines {
            // base index of this line: lines are enumerated over the other axes
            let mut base = 0;
            let mut rem = line;
            for b in (0..grid.dim).rev() {
                if b == a {
                    continue;
                }
                base += (rem % n) * stride_of_axis(b);
                rem /= n;
            }
            for (end, dir) in [(0usize, 1isize), (n - 1, -1isize)] {
                let idx = |k: usize| {
                    (base as isize + (end as isize + dir * k as isize) * stride as isize) as usize
                };
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                for k in 0..=m {
                    hi = hi.max(plus[idx(k)]);
                    lo = lo.min(minus[idx(k)]);
                }
                for k in 0..=m {
                    let w = blend[k];
                    let pv = plus[idx(k)];
                    let mv = minus[idx(k)];
                    plus[idx(k)] = pv + w * (hi - pv);
                    minus[idx(k)] = mv + w * (lo - mv);
                }
            }
        }
    }
    (plus, minus)
}

/// Time forcing of a field run.
pub enum Forcing<'a> {
    None,
    /// raw Q-Wiener path on the grid's point set; its time grid must refine dt
    Path(&'a NoisePath),
    /// mollified path; base time grid must refine dt
    Mollified(&'a MollifiedPath),
}

/// A checkpointed field run.
#[derive(Debug)]
pub struct FieldTrajectory {
    pub states: Vec<FieldState>,
    /// per-step (t, sup|u|) series for the monitors
    pub sup_series: Vec<(f64, f64)>,
}

impl FieldTrajectory {
    pub fn last(&self) -> &FieldState {
        self.states.last().unwrap()
    }
}

/// First time the sup norm exceeds `2 C₀` (τ₁ for raw runs, τ₅ for mollified
/// runs); `None` is the ∞ marker.
pub fn boundedness_monitor(traj: &FieldTrajectory, c0: f64) -> Option<f64> {
    traj.sup_series
        .iter()
        .find(|(_, s)| *s > 2.0 * c0)
        .map(|(t, _)| *t)
}

struct AxisSolver {
    factor: TridiagFactor,
}

fn build_axis_solver(grid: &SpaceGrid, dt: f64) -> AxisSolver {
    let n = grid.nodes_per_axis;
    let h = grid.spacing();
    let lam = dt / (h * h);
    let mut sub = vec![-lam; n - 1];
    let mut diag = vec![1.0 + 2.0 * lam; n];
    let mut sup = vec![-lam; n - 1];
    match grid.boundary {
        Boundary::Neumann => {
            // ghost symmetry: Δu_0 = 2(u_1 - u_0)/h²
            sup[0] = -2.0 * lam;
            sub[n - 2] = -2.0 * lam;
        }
        Boundary::FarfieldPm1 => {
            // Dirichlet rows
            diag[0] = 1.0;
            sup[0] = 0.0;
            diag[n - 1] = 1.0;
            sub[n - 2] = 0.0;
        }
    }
    AxisSolver {
        factor: TridiagFactor::new(sub, diag, sup),
    }
}

/// One explicit RK4 substep of `u' = f(u)/ε` over `dt`, nodewise. Increasing
/// in `u` for `dt·C_f/ε` within the stability budget.
fn reaction_substep(f: &ReactionFunction, u: &mut [f64], dt_over_eps: f64) {
    for v in u.iter_mut() {
        let y = *v;
        let k1 = f.f(y);
        let k2 = f.f(y + 0.5 * dt_over_eps * k1);
        let k3 = f.f(y + 0.5 * dt_over_eps * k2);
        let k4 = f.f(y + dt_over_eps * k3);
        *v = y + dt_over_eps / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

/// The noise path's own clock starts at the run's current time, so its span
/// must cover the run `duration`, not the absolute end time.
fn forcing_stride(path_grid: &[f64], dt: f64, duration: f64) -> Result<usize> {
    if path_grid.len() < 2 {
        return Err(Error::Config("noise path has no steps".into()));
    }
    let pd = path_grid[1] - path_grid[0];
    let ratio = dt / pd;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "noise grid mismatch: dt = {dt:.3e} is not a multiple of the path step {pd:.3e}"
        )));
    }
    let span = *path_grid.last().unwrap();
    if span * (1.0 + 1e-9) + 1e-12 < duration {
        return Err(Error::Config(format!(
            "noise path covers a span of {span:.4}, run needs {duration:.4}"
        )));
    }
    Ok(stride)
}

/// Advance the field to `t_end`, checkpointing at `checkpoint_times` (the
/// final state is always checkpointed).
pub fn evolve(
    state: &FieldState,
    f: &ReactionFunction,
    forcing: &Forcing<'_>,
    t_end: f64,
    dt: f64,
    checkpoint_times: &[f64],
) -> Result<FieldTrajectory> {
    state.grid.validate()?;
    let eps = state.eps;
    if dt * f.c_f() / eps > 0.2 + 1e-12 {
        return Err(Error::StepSize {
            step: dt,
            why: format!("need dt*C_f/eps <= 0.2, got {}", dt * f.c_f() / eps),
        });
    }
    let n_steps = ((t_end - state.t) / dt).round().max(0.0) as usize;
    let amp = eps.powf(state.gamma);
    let n_nodes = state.grid.n_total();

    let duration = t_end - state.t;
    let stride = match forcing {
        Forcing::None => 0,
        Forcing::Path(p) => {
            if p.points().len() != n_nodes {
                return Err(Error::Config(
                    "noise path points do not match the grid".into(),
                ));
            }
            forcing_stride(p.time_grid(), dt, duration)?
        }
        Forcing::Mollified(m) => {
            if m.base().points().len() != n_nodes {
                return Err(Error::Config(
                    "mollified path points do not match the grid".into(),
                ));
            }
            forcing_stride(m.base().time_grid(), dt, duration)?
        }
    };

    let axis = build_axis_solver(&state.grid, dt);
    let n = state.grid.nodes_per_axis;
    let stride_of_axis = |a: usize| n.pow((state.grid.dim - 1 - a) as u32);

    let mut u = state.u.clone();
    let mut t = state.t;
    let mut states = Vec::new();
    let mut sup_series = Vec::with_capacity(n_steps + 1);
    let snapshot = |u: &Vec<f64>, t: f64, k: usize| FieldState {
        grid: state.grid.clone(),
        u: u.clone(),
        t,
        eps,
        gamma: state.gamma,
        step_count: k,
    };
    sup_series.push((t, u.iter().fold(0.0f64, |m, &v| m.max(v.abs()))));
    let mut next_cp = 0usize;

    for k in 0..n_steps {
        // reaction
        reaction_substep(f, &mut u, dt / eps);
        // noise increment over [t, t+dt]
        match forcing {
            Forcing::None => {}
            Forcing::Path(p) => {
                let k0 = k * stride;
                let k1 = (k + 1) * stride;
                for (i, v) in u.iter_mut().enumerate() {
                    *v += amp * (p.value(k1, i) - p.value(k0, i));
                }
            }
            Forcing::Mollified(m) => {
                let k0 = k * stride;
                let k1 = (k + 1) * stride;
                for (i, v) in u.iter_mut().enumerate() {
                    *v += amp * (m.value_at_index(k1, i) - m.value_at_index(k0, i));
                }
            }
        }
        // boundary rows before the implicit solve
        if state.grid.boundary == Boundary::FarfieldPm1 {
            u[0] = -1.0;
            u[n_nodes - 1] = 1.0;
        }
        // implicit diffusion: per-axis backward Euler sweeps
        for a in 0..state.grid.dim {
            let s = stride_of_axis(a);
            let lines = n_nodes / n;
            for line in 0..lines {
                let mut base = 0;
                let mut rem = line;
                for b in (0..state.grid.dim).rev() {
                    if b == a {
                        continue;
                    }
                    base += (rem % n) * stride_of_axis(b);
                    rem /= n;
                }
                axis.factor.solve_strided(&mut u, base, s);
            }
        }
        t = state.t + (k + 1) as f64 * dt;
        // blow-up guard
        let sup = u.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if !sup.is_finite() || sup > 10.0 {
            return Err(Error::BlowUp {
                t,
                step: k + 1,
                diag: format!("sup|u| = {sup:.3e}, dt = {dt:.3e}, eps = {eps:.3e}"),
            });
        }
        sup_series.push((t, sup));
        while next_cp < checkpoint_times.len() && checkpoint_times[next_cp] <= t + 0.5 * dt {
            states.push(snapshot(&u, t, k + 1));
            next_cp += 1;
        }
    }
    if states.last().map(|s| s.step_count) != Some(n_steps) {
        states.push(snapshot(&u, t, n_steps));
    }
    Ok(FieldTrajectory { states, sup_series })
}

/// Sup-norm gap series between a raw and a mollified run sharing the same
/// discretization and checkpoints.
pub fn mollified_vs_raw_gap(
    raw: &FieldTrajectory,
    delta_run: &FieldTrajectory,
) -> Result<Vec<(f64, f64)>> {
    if raw.states.len() != delta_run.states.len() {
        return Err(Error::Config("checkpoint counts differ".into()));
    }
    let mut gaps = Vec::with_capacity(raw.states.len());
    for (a, b) in raw.states.iter().zip(&delta_run.states) {
        if (a.t - b.t).abs() > 1e-12 || a.u.len() != b.u.len() {
            return Err(Error::Config("mismatched discretization".into()));
        }
        let gap = a
            .u
            .iter()
            .zip(&b.u)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        gaps.push((a.t, gap));
    }
    Ok(gaps)
}

/// Check the pathwise gap envelope `ε^{1+γ-C_f C₁} |log ε| δ` on
/// `t ≤ C₁ ε |log ε|`.
pub fn gap_envelope_ok(
    gaps: &[(f64, f64)],
    eps: f64,
    gamma: f64,
    c_f: f64,
    c1: f64,
    delta: f64,
) -> bool {
    let log_eps = (1.0 / eps).ln();
    let horizon = c1 * eps * log_eps;
    let envelope = eps.powf(1.0 + gamma - c_f * c1) * log_eps * delta;
    gaps.iter()
        .filter(|(t, _)| *t <= horizon + 1e-12)
        .all(|(_, g)| *g <= envelope)
}
