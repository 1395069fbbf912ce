//! Experiment orchestration: configs, stopping-time monitors, scaling
//! regressions, Monte Carlo sweeps, and reproducible reporting.

pub mod experiments;

use crate::error::{Error, Result};
use crate::field::{Boundary, SpaceGrid};
use crate::noise::kernel::{KernelDescriptor, ModeSpec};
use crate::reaction::ReactionFunction;
use serde::{Deserialize, Serialize};

pub use experiments::{run_experiment, RunReport};

/// Experiment selector; names double as CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SampleNoise,
    Evolve,
    SweepGeneration,
    CompareSandwich,
    TrackInterface,
    LimitLaw,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sample-noise" => Ok(Self::SampleNoise),
            "evolve" => Ok(Self::Evolve),
            "sweep-generation" => Ok(Self::SweepGeneration),
            "compare-sandwich" => Ok(Self::CompareSandwich),
            "track-interface" => Ok(Self::TrackInterface),
            "limit-law" => Ok(Self::LimitLaw),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SampleNoise => "sample-noise",
            Self::Evolve => "evolve",
            Self::SweepGeneration => "sweep-generation",
            Self::CompareSandwich => "compare-sandwich",
            Self::TrackInterface => "track-interface",
            Self::LimitLaw => "limit-law",
        }
    }
}

/// How strictly the generation-theorem constant hypotheses are enforced.
/// `Strict` rejects configs whose `(α, κ, C₁)` fall outside the admissible
/// window; `Desk` records the violations in the report and runs anyway (the
/// asymptotic constants regime is generally unreachable at desk-scale ε with
/// the cubic default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisMode {
    Strict,
    #[default]
    Desk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactionConfig {
    /// `cubic`, `steep-well`, or `odd-polynomial`
    pub kind: String,
    /// odd-power coefficients when kind = odd-polynomial
    pub coeffs: Vec<f64>,
    pub c0: f64,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        ReactionConfig {
            kind: "cubic".into(),
            coeffs: vec![],
            c0: 1.5,
        }
    }
}

impl ReactionConfig {
    pub fn build(&self) -> Result<ReactionFunction> {
        match self.kind.as_str() {
            "odd-polynomial" => Ok(ReactionFunction::odd_polynomial(&self.coeffs, self.c0)),
            name => ReactionFunction::by_name(name, self.c0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// `separable-bump` or `modes`
    pub kind: String,
    pub radius: f64,
    pub amplitude: f64,
    /// for kind = modes: list of (weight, axis polynomial coefficients)
    pub modes: Vec<ModeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeEntry {
    pub weight: f64,
    pub poly: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: "separable-bump".into(),
            radius: 1.0,
            amplitude: 1.0,
            modes: vec![],
        }
    }
}

impl KernelConfig {
    pub fn descriptor(&self, dim: usize) -> Result<KernelDescriptor> {
        match self.kind.as_str() {
            "separable-bump" => Ok(KernelDescriptor::Separable {
                amplitude: self.amplitude,
                factor: ModeSpec::bump(dim, self.radius),
            }),
            "modes" => Ok(KernelDescriptor::ModeSum {
                modes: self
                    .modes
                    .iter()
                    .map(|m| {
                        (
                            m.weight,
                            ModeSpec {
                                axis_polys: vec![m.poly.clone(); dim],
                                radius: self.radius,
                            },
                        )
                    })
                    .collect(),
            }),
            other => Err(Error::Config(format!("unknown kernel kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extent: f64,
    pub nodes: usize,
    /// `farfield` or `neumann`
    pub boundary: String,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: 1,
            extent: 10.0,
            nodes: 2048,
            boundary: "farfield".into(),
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<SpaceGrid> {
        let boundary = match self.boundary.as_str() {
            "farfield" => Boundary::FarfieldPm1,
            "neumann" => Boundary::Neumann,
            other => return Err(Error::Config(format!("unknown boundary `{other}`"))),
        };
        Ok(SpaceGrid {
            dim: self.dim,
            extent: self.extent,
            nodes_per_axis: self.nodes,
            boundary,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// dt = dt_factor * eps / C_f
    pub dt_factor: f64,
    /// explicit horizon; defaults to C₁ ε |log ε|
    pub t_end: Option<f64>,
    pub checkpoints: usize,
    /// post-generation step dt_long = eps² * dt_long_factor
    pub dt_long_factor: f64,
    /// suppress the stochastic forcing entirely
    pub zero_noise: bool,
    /// time span and steps of sample-noise runs
    pub sample_t_end: f64,
    pub sample_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_factor: 0.02,
            t_end: None,
            checkpoints: 8,
            dt_long_factor: 10.0,
            zero_noise: false,
            sample_t_end: 1.0,
            sample_steps: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `tanh`, `linear-ramp`, `constant`, `radial-tanh`
    pub kind: String,
    pub center: f64,
    pub slope: f64,
    pub value: f64,
    pub r0: f64,
    pub width: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: "tanh".into(),
            center: 0.0,
            slope: 1.0,
            value: 0.0,
            r0: 1.3,
            width: 1.3,
        }
    }
}

impl InitialConfig {
    pub fn spec(&self) -> Result<crate::field::InitialSpec> {
        use crate::field::InitialSpec;
        match self.kind.as_str() {
            "tanh" => Ok(InitialSpec::Tanh {
                center: self.center,
                slope: self.slope,
            }),
            "linear-ramp" => Ok(InitialSpec::LinearRamp {
                center: self.center,
                slope: self.slope,
            }),
            "constant" => Ok(InitialSpec::Constant(self.value)),
            "radial-tanh" => Ok(InitialSpec::RadialTanh {
                r0: self.r0,
                w: self.width,
            }),
            other => Err(Error::Config(format!("unknown initial kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// threshold coefficient C in `u0 ≥ C ε^β`
    pub c_thresh: f64,
    /// multiplies ε^κ in predicate conditions (i)-(iii)
    pub tol_factor: f64,
    /// tail certificates: ḡ = tail_scale * g + tail_floor * e^{-(|x|-1)}
    pub tail_scale: f64,
    pub tail_floor: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            c_thresh: 1.0,
            tol_factor: 1.0,
            tail_scale: 2.0,
            tail_floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandwichConfig {
    pub tol: f64,
    /// fitted A-ratio constant C₅; `None` fits it from a ξ-sweep
    pub c5: Option<f64>,
    /// δ' slack of the τ₃ monitor threshold `2C₀ + δ'`
    pub delta_prime: f64,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        SandwichConfig {
            tol: 1e-3,
            c5: None,
            delta_prime: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSdeConfig {
    /// rescaled-time horizon T of the interface law
    pub t_end: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sde_dt: f64,
    pub sde_paths: usize,
    /// checkpoints of the long phase
    pub track_checkpoints: usize,
}

impl Default for LimitSdeConfig {
    fn default() -> Self {
        LimitSdeConfig {
            t_end: 0.01,
            alpha1: 3.0 / std::f64::consts::SQRT_2,
            alpha2: 0.0,
            sde_dt: 1e-5,
            sde_paths: 10_000,
            track_checkpoints: 41,
        }
    }
}

/// Top-level experiment configuration (TOML on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub root_seed: u64,
    pub out_dir: Option<String>,
    pub paths: usize,
    pub eps_list: Vec<f64>,
    pub gamma: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub c1: f64,
    pub hypothesis_mode: HypothesisMode,
    pub dump_trajectories: bool,
    pub reaction: ReactionConfig,
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub initial: InitialConfig,
    pub generation: GenerationConfig,
    pub sandwich: SandwichConfig,
    pub limit_sde: LimitSdeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::SampleNoise,
            root_seed: 1,
            out_dir: None,
            paths: 1,
            eps_list: vec![0.02],
            gamma: 1.2,
            kappa: 1.05,
            alpha: 0.6,
            c1: 0.9,
            hypothesis_mode: HypothesisMode::Desk,
            dump_trajectories: false,
            reaction: ReactionConfig::default(),
            kernel: KernelConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            initial: InitialConfig::default(),
            generation: GenerationConfig::default(),
            sandwich: SandwichConfig::default(),
            limit_sde: LimitSdeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Theorem-hypothesis violations for the generation experiments:
    /// `κ > α > 1/2`, `κ > 1`, and `C₁ ∈ (α/μ + κ/p, 1/μ)`.
    pub fn hypothesis_violations(&self, f: &ReactionFunction) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.kappa > self.alpha && self.alpha > 0.5) {
            v.push(format!(
                "need kappa > alpha > 1/2, got kappa = {}, alpha = {}",
                self.kappa, self.alpha
            ));
        }
        if self.kappa <= 1.0 {
            v.push(format!("need kappa > 1, got {}", self.kappa));
        }
        let lo = self.alpha / f.mu() + self.kappa / f.p_decay();
        let hi = 1.0 / f.mu();
        if !(self.c1 > lo && self.c1 < hi) {
            v.push(format!("need C1 in ({lo:.4}, {hi:.4}), got {}", self.c1));
        }
        v
    }

    /// Validate basics; at `Strict` the hypothesis violations are fatal for
    /// generation-flavored experiments.
    pub fn validate(&self, f: &ReactionFunction) -> Result<Vec<String>> {
        if self.eps_list.is_empty() {
            return Err(Error::Config("eps_list is empty".into()));
        }
        for &e in &self.eps_list {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("eps = {e} outside (0, 1)")));
            }
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be >= 1".into()));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0 / f.mu()) {
            return Err(Error::Config(format!(
                "C1 = {} outside (0, 1/mu = {})",
                self.c1,
                1.0 / f.mu()
            )));
        }
        let viol = self.hypothesis_violations(f);
        let generationish = matches!(
            self.experiment,
            ExperimentKind::SweepGeneration | ExperimentKind::CompareSandwich
        );
        if self.hypothesis_mode == HypothesisMode::Strict && generationish && !viol.is_empty() {
            return Err(Error::Parameter(format!(
                "strict hypothesis mode: {}",
                viol.join("; ")
            )));
        }
        Ok(viol)
    }

    /// FNV-1a over the canonical JSON serialization.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

/// First-hit times of the stopping-time monitors. τ₁/τ₅/τ₆ live in slow
/// time, τ₂/τ₃/τ₄/τ₇ in fast time; `None` marks "never hit".
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MonitorState {
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau3: Option<f64>,
    pub tau5: Option<f64>,
    pub tau7: Option<f64>,
}

impl MonitorState {
    /// τ₄ = τ₂ ∧ τ₃.
    pub fn tau4(&self) -> Option<f64> {
        min_opt(self.tau2, self.tau3)
    }

    /// τ₆ = τ₁ ∧ τ₅.
    pub fn tau6(&self) -> Option<f64> {
        min_opt(self.tau1, self.tau5)
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) => Some(x),
        (None, Some(y)) => Some(y),
        (None, None) => None,
    }
}

/// Instantaneous observables feeding [`monitor_step`].
#[derive(Debug, Clone, Copy)]
pub struct Observables {
    pub t_slow: f64,
    pub tau_fast: f64,
    /// sup |u| of the raw field
    pub sup_u: Option<f64>,
    /// sup |Y^ε - Y| over the (ξ, x) window
    pub sup_y_dev: Option<f64>,
    /// sup |Y^{ε,δ}|
    pub sup_y_moll: Option<f64>,
    /// sup |u^{ε,δ}| of the mollified field
    pub sup_u_moll: Option<f64>,
    /// discrete Sobolev surrogate of the driving noise
    pub noise_norm: Option<f64>,
}

impl Observables {
    pub fn none(t_slow: f64, tau_fast: f64) -> Self {
        Observables {
            t_slow,
            tau_fast,
            sup_u: None,
            sup_y_dev: None,
            sup_y_moll: None,
            sup_u_moll: None,
            noise_norm: None,
        }
    }
}

/// Monitor thresholds, fixed per run.
#[derive(Debug, Clone, Copy)]
pub struct MonitorThresholds {
    /// 2C₀ for τ₁ and τ₅
    pub two_c0: f64,
    /// ε^κ for τ₂
    pub eps_kappa: f64,
    /// 2C₀ + δ' for τ₃
    pub moll_bound: f64,
    /// ε^{-β} for τ₇
    pub noise_bound: f64,
}

/// Record first threshold crossings; idempotent after a hit.
pub fn monitor_step(
    state: &MonitorState,
    thresholds: &MonitorThresholds,
    obs: &Observables,
) -> MonitorState {
    let mut next = *state;
    let hit = |slot: &mut Option<f64>, value: Option<f64>, bound: f64, time: f64| {
        if slot.is_none() {
            if let Some(v) = value {
                if v > bound {
                    *slot = Some(time);
                }
            }
        }
    };
    hit(&mut next.tau1, obs.sup_u, thresholds.two_c0, obs.t_slow);
    hit(
        &mut next.tau2,
        obs.sup_y_dev,
        thresholds.eps_kappa,
        obs.tau_fast,
    );
    hit(
        &mut next.tau3,
        obs.sup_y_moll,
        thresholds.moll_bound,
        obs.tau_fast,
    );
    hit(
        &mut next.tau5,
        obs.sup_u_moll,
        thresholds.two_c0,
        obs.t_slow,
    );
    hit(
        &mut next.tau7,
        obs.noise_norm,
        thresholds.noise_bound,
        obs.tau_fast,
    );
    next
}

/// Discrete Sobolev surrogate of a noise snapshot on a uniform 1-D lattice:
/// the H³ lattice norm via central differences (the τ₇ threshold only needs
/// the ε^{-β} scaling).
pub fn discrete_h3_norm(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 4 {
        return values.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += values[i] * values[i] * h;
    }
    for i in 1..n - 1 {
        let d1 = (values[i + 1] - values[i - 1]) / (2.0 * h);
        let d2 = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h);
        acc += (d1 * d1 + d2 * d2) * h;
    }
    for i in 2..n - 2 {
        let d3 = (values[i + 2] - 2.0 * values[i + 1] + 2.0 * values[i - 1] - values[i - 2])
            / (2.0 * h * h * h);
        acc += d3 * d3 * h;
    }
    acc.sqrt()
}

/// Least-squares fit of `log statistic` against `log eps`.
pub fn scaling_regression(series: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if series.len() < 3 {
        return Err(Error::Precondition(
            "regression needs at least 3 eps values".into(),
        ));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(e, s) in series {
        if s <= 0.0 {
            return Err(Error::LogDomain { value: s, eps: e });
        }
        lo = lo.min(e);
        hi = hi.max(e);
    }
    if hi / lo < 4.0 - 1e-12 {
        return Err(Error::Precondition(format!(
            "eps range must span >= 4x, got {:.2}x",
            hi / lo
        )));
    }
    let n = series.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(e, s) in series {
        let x = e.ln();
        let y = s.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ss_tot = syy - sy * sy / n;
    let ss_res: f64 = series
        .iter()
        .map(|&(e, s)| {
            let r = s.ln() - (slope * e.ln() + intercept);
            r * r
        })
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((slope, intercept, r2))
}

/// Per-path seed: `root ⊕ counter`, the counter running over the
/// (eps, path) lattice in row-major order.
pub fn path_seed(root_seed: u64, counter: u64) -> u64 {
    root_seed ^ counter
}
