//! Covariance kernels `Q(x,y)` for Q-Wiener processes.
//!
//! Kernels are built from descriptors of two shapes: a separable product
//! `Q(x,y) = a(x) a(y)` with `a` smooth and compactly supported, or a finite
//! mode sum `Q(x,y) = Σ c_k e_k(x) e_k(y)` with `c_k ≥ 0`. Both carry analytic
//! mixed derivative kernels `Q_i(x,y) = ∂x_i ∂y_i Q` and
//! `∂x_i² ∂y_i² Q` assembled from factor derivatives, which the derivative
//! noise `∂W` and the mollifier bounds rely on.
//!
//! Raw closure-backed kernels are also accepted (and validated); they sample
//! through a dense Cholesky route instead of the exact mode expansion.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// One tensor-product mode `e(x) = Π_i p_i(x_i) bump(x_i / r)` where `bump`
/// is the standard smooth bump `exp(-1/(1-s²))` on `|s| < 1` and `p_i` a
/// polynomial (ascending coefficients; `[1]` is the plain bump).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModeSpec {
    pub axis_polys: Vec<Vec<f64>>,
    pub radius: f64,
}

impl ModeSpec {
    pub fn bump(dim: usize, radius: f64) -> Self {
        ModeSpec {
            axis_polys: vec![vec![1.0]; dim],
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.axis_polys.len()
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn bump_d1(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let w = 1.0 - s * s;
        bump(s) * (-2.0 * s / (w * w))
    } else {
        0.0
    }
}

fn bump_d2(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let w = 1.0 - s * s;
        let g = -2.0 * s / (w * w);
        // b'' = b (g² + g') with g' = -2/w² - 8s²/w³
        let gp = -2.0 / (w * w) - 8.0 * s * s / (w * w * w);
        bump(s) * (g * g + gp)
    } else {
        0.0
    }
}

fn poly_eval(c: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for &ck in c.iter().rev() {
        acc = acc * z + ck;
    }
    acc
}

fn poly_d1(c: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..c.len()).rev() {
        acc = acc * z + k as f64 * c[k];
    }
    acc
}

fn poly_d2(c: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for k in (2..c.len()).rev() {
        acc = acc * z + (k * (k - 1)) as f64 * c[k];
    }
    acc
}

/// Compiled mode: evaluates `e`, `∂_i e`, `∂_i² e` at a point.
#[derive(Debug, Clone)]
pub struct Mode {
    spec: ModeSpec,
}

impl Mode {
    fn axis_value(&self, axis: usize, z: f64) -> f64 {
        poly_eval(&self.spec.axis_polys[axis], z) * bump(z / self.spec.radius)
    }

    fn axis_d1(&self, axis: usize, z: f64) -> f64 {
        let r = self.spec.radius;
        let p = &self.spec.axis_polys[axis];
        poly_d1(p, z) * bump(z / r) + poly_eval(p, z) * bump_d1(z / r) / r
    }

    fn axis_d2(&self, axis: usize, z: f64) -> f64 {
        let r = self.spec.radius;
        let p = &self.spec.axis_polys[axis];
        poly_d2(p, z) * bump(z / r)
            + 2.0 * poly_d1(p, z) * bump_d1(z / r) / r
            + poly_eval(p, z) * bump_d2(z / r) / (r * r)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| self.axis_value(i, xi))
            .product()
    }

    pub fn d1(&self, x: &[f64], direction: usize) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if i == direction {
                    self.axis_d1(i, xi)
                } else {
                    self.axis_value(i, xi)
                }
            })
            .product()
    }

    pub fn d2(&self, x: &[f64], direction: usize) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if i == direction {
                    self.axis_d2(i, xi)
                } else {
                    self.axis_value(i, xi)
                }
            })
            .product()
    }
}

type RawKernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Kernel construction descriptor. The two structured forms guarantee
/// positive semidefiniteness by construction; `Raw` is validated numerically.
#[derive(Clone)]
pub enum KernelDescriptor {
    /// `Q(x,y) = a(x) a(y)` with `a = amplitude * mode`.
    Separable { amplitude: f64, factor: ModeSpec },
    /// `Q(x,y) = Σ c_k e_k(x) e_k(y)`, `c_k ≥ 0`.
    ModeSum { modes: Vec<(f64, ModeSpec)> },
    /// Closure-backed kernel (no derivative kernels, dense sampling route).
    Raw {
        dim: usize,
        support_radius: f64,
        q: RawKernelFn,
    },
}

/// A validated covariance kernel.
#[derive(Clone)]
pub struct CovarianceKernel {
    modes: Vec<(f64, Mode)>,
    raw: Option<RawKernelFn>,
    dim: usize,
    support_radius: f64,
}

impl std::fmt::Debug for CovarianceKernel {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("CovarianceKernel")
            .field("dim", &self.dim)
            .field("n_modes", &self.modes.len())
            .field("raw", &self.raw.is_some())
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl CovarianceKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Mode weights and factors (empty for raw kernels).
    pub fn modes(&self) -> &[(f64, Mode)] {
        &self.modes
    }

    pub fn has_modes(&self) -> bool {
        !self.modes.is_empty()
    }

    /// The separable factor `a` with `Q(x,y) = a(x)a(y)`, when rank one.
    pub fn separable_factor(&self) -> Option<impl Fn(&[f64]) -> f64 + '_> {
        if self.modes.len() == 1 {
            let (c, m) = &self.modes[0];
            let s = c.sqrt();
            Some(move |x: &[f64]| s * m.value(x))
        } else {
            None
        }
    }

    /// `Q(x,y)`.
    pub fn q(&self, x: &[f64], y: &[f64]) -> f64 {
        if let Some(raw) = &self.raw {
            return raw(x, y);
        }
        self.modes
            .iter()
            .map(|(c, m)| c * m.value(x) * m.value(y))
            .sum()
    }

    /// Mixed first derivative `Q_i(x,y) = ∂x_i ∂y_i Q(x,y)`.
    pub fn q_dx_dy(&self, x: &[f64], y: &[f64], direction: usize) -> Result<f64> {
        if self.modes.is_empty() {
            return Err(Error::KernelCapability(
                "raw kernel has no derivative kernels".into(),
            ));
        }
        if direction >= self.dim {
            return Err(Error::KernelCapability(format!(
                "direction {direction} out of range for dim {}",
                self.dim
            )));
        }
        Ok(self
            .modes
            .iter()
            .map(|(c, m)| c * m.d1(x, direction) * m.d1(y, direction))
            .sum())
    }

    /// Mixed second derivative `∂x_i² ∂y_i² Q(x,y)`.
    pub fn q_dxx_dyy(&self, x: &[f64], y: &[f64], direction: usize) -> Result<f64> {
        if self.modes.is_empty() {
            return Err(Error::KernelCapability(
                "raw kernel has no derivative kernels".into(),
            ));
        }
        if direction >= self.dim {
            return Err(Error::KernelCapability(format!(
                "direction {direction} out of range for dim {}",
                self.dim
            )));
        }
        Ok(self
            .modes
            .iter()
            .map(|(c, m)| c * m.d2(x, direction) * m.d2(y, direction))
            .sum())
    }
}

/// Build and validate a kernel from its descriptor.
pub fn build_kernel(descriptor: &KernelDescriptor) -> Result<CovarianceKernel> {
    let kernel = match descriptor {
        KernelDescriptor::Separable { amplitude, factor } => {
            if *amplitude <= 0.0 {
                return Err(Error::KernelConfig("amplitude must be > 0".into()));
            }
            CovarianceKernel {
                dim: factor.dim(),
                support_radius: factor.radius,
                modes: vec![(amplitude * amplitude, Mode { spec: factor.clone() })],
                raw: None,
            }
        }
        KernelDescriptor::ModeSum { modes } => {
            if modes.is_empty() {
                return Err(Error::KernelConfig("mode sum needs at least one mode".into()));
            }
            let dim = modes[0].1.dim();
            let mut support_radius: f64 = 0.0;
            let mut compiled = Vec::with_capacity(modes.len());
            for (c, spec) in modes {
                if *c < 0.0 {
                    return Err(Error::KernelPsd(format!("mode weight {c} < 0")));
                }
                if spec.dim() != dim {
                    return Err(Error::KernelConfig("modes disagree on dimension".into()));
                }
                support_radius = support_radius.max(spec.radius);
                compiled.push((*c, Mode { spec: spec.clone() }));
            }
            CovarianceKernel {
                dim,
                support_radius,
                modes: compiled,
                raw: None,
            }
        }
        KernelDescriptor::Raw {
            dim,
            support_radius,
            q,
        } => CovarianceKernel {
            dim: *dim,
            support_radius: *support_radius,
            modes: Vec::new(),
            raw: Some(q.clone()),
        },
    };
    validate_kernel(&kernel)?;
    Ok(kernel)
}

/// Lattice used by the kernel invariant checks: 17 points per axis spanning
/// 1.2x the support, capped at 64 total points.
fn test_lattice(kernel: &CovarianceKernel) -> Vec<Vec<f64>> {
    let r = kernel.support_radius * 1.2;
    let per_axis = match kernel.dim {
        1 => 33,
        2 => 8,
        _ => 4,
    };
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -r + 2.0 * r * i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut pts = vec![vec![]];
    for _ in 0..kernel.dim {
        let mut next = Vec::new();
        for p in &pts {
            for &a in &axis {
                let mut q = p.clone();
                q.push(a);
                next.push(q);
            }
        }
        pts = next;
    }
    pts.truncate(64.max(per_axis));
    pts
}

fn validate_kernel(kernel: &CovarianceKernel) -> Result<()> {
    let pts = test_lattice(kernel);
    let n = pts.len();

    // symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let a = kernel.q(&pts[i], &pts[j]);
            let b = kernel.q(&pts[j], &pts[i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::KernelConfig(format!(
                    "symmetry fails: Q(x,y) = {a}, Q(y,x) = {b}"
                )));
            }
        }
    }

    // positive semidefiniteness of the Gram matrix
    let gram = DMatrix::from_fn(n, n, |i, j| kernel.q(&pts[i], &pts[j]));
    let eig = gram.symmetric_eigenvalues();
    let max_eig = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_eig <= 0.0 {
        return Err(Error::KernelPsd("kernel vanishes on the test lattice".into()));
    }
    if min_eig < -1e-9 * max_eig {
        return Err(Error::KernelPsd(format!(
            "min eigenvalue {min_eig:.3e} < -1e-9 * max eigenvalue {max_eig:.3e}"
        )));
    }

    // compact support
    let far = vec![kernel.support_radius * 1.5; kernel.dim];
    let inside = vec![0.1 * kernel.support_radius; kernel.dim];
    if kernel.q(&far, &inside).abs() > 0.0 || kernel.q(&far, &far).abs() > 0.0 {
        return Err(Error::KernelConfig(
            "kernel does not vanish outside its support radius".into(),
        ));
    }

    // diagonal positivity strictly inside the support. The derivative
    // kernels of a rank-one factor vanish on the factor's critical set, so
    // for those we require nonnegativity everywhere plus positivity
    // somewhere in the interior.
    if kernel.has_modes() {
        let interior: Vec<&Vec<f64>> = pts
            .iter()
            .filter(|p| p.iter().all(|&c| c.abs() < 0.9 * kernel.support_radius))
            .collect();
        let mut any_d1 = vec![false; kernel.dim];
        let mut any_d2 = vec![false; kernel.dim];
        for p in &interior {
            if kernel.q(p, p) <= 0.0 {
                return Err(Error::KernelConfig(format!(
                    "Q(x,x) not positive at interior point {p:?}"
                )));
            }
            for dir in 0..kernel.dim {
                let d1 = kernel.q_dx_dy(p, p, dir)?;
                let d2 = kernel.q_dxx_dyy(p, p, dir)?;
                if d1 < -1e-12 || d2 < -1e-12 {
                    return Err(Error::KernelConfig(format!(
                        "derivative kernel negative on the diagonal at {p:?}"
                    )));
                }
                any_d1[dir] = any_d1[dir] || d1 > 0.0;
                any_d2[dir] = any_d2[dir] || d2 > 0.0;
            }
        }
        if !(any_d1.iter().all(|&b| b) && any_d2.iter().all(|&b| b)) {
            return Err(Error::KernelConfig(
                "derivative kernels vanish identically on the diagonal".into(),
            ));
        }
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_bump_is_rank_one_psd() {
        let k = build_kernel(&KernelDescriptor::Separable {
            amplitude: 1.0,
            factor: ModeSpec::bump(1, 1.0),
        })
        .unwrap();
        // rank-1 Gram matrices are PSD; Q(x,y) = a(x)a(y)
        let a0 = bump(0.0);
        assert!((k.q(&[0.0], &[0.0]) - a0 * a0).abs() < 1e-15);
        assert!(k.separable_factor().is_some());
        assert_eq!(k.q(&[1.2], &[0.0]), 0.0);
    }

    #[test]
    fn two_mode_sum_gram_eigenvalues_nonnegative() {
        let k = build_kernel(&KernelDescriptor::ModeSum {
            modes: vec![
                (1.0, ModeSpec::bump(1, 1.0)),
                (
                    1.0,
                    ModeSpec {
                        axis_polys: vec![vec![0.0, 1.0]],
                        radius: 1.0,
                    },
                ),
            ],
        })
        .unwrap();
        // oracle: eigen-decomposition of the 64-point Gram matrix
        let pts = test_lattice(&k);
        let n = pts.len();
        let gram = DMatrix::from_fn(n, n, |i, j| k.q(&pts[i], &pts[j]));
        let eig = gram.symmetric_eigenvalues();
        let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-12, "min eigenvalue {min_eig}");
        assert!(k.separable_factor().is_none());
    }

    #[test]
    fn antisymmetric_raw_kernel_rejected() {
        let err = build_kernel(&KernelDescriptor::Raw {
            dim: 1,
            support_radius: 1.0,
            q: Arc::new(|x: &[f64], y: &[f64]| x[0] - y[0]),
        })
        .unwrap_err();
        match err {
            Error::KernelConfig(msg) => assert!(msg.contains("symmetry"), "{msg}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn negative_mode_weight_rejected_as_psd_violation() {
        let err = build_kernel(&KernelDescriptor::ModeSum {
            modes: vec![(-1.0, ModeSpec::bump(1, 1.0))],
        })
        .unwrap_err();
        assert!(matches!(err, Error::KernelPsd(_)));
    }

    #[test]
    fn derivative_kernel_matches_finite_differences() {
        let k = build_kernel(&KernelDescriptor::Separable {
            amplitude: 2.0,
            factor: ModeSpec::bump(1, 1.0),
        })
        .unwrap();
        let h = 1e-5;
        for &x in &[-0.6, -0.2, 0.3, 0.7] {
            for &y in &[-0.5, 0.1, 0.4] {
                let fd = (k.q(&[x + h], &[y + h]) - k.q(&[x + h], &[y - h])
                    - k.q(&[x - h], &[y + h])
                    + k.q(&[x - h], &[y - h]))
                    / (4.0 * h * h);
                let an = k.q_dx_dy(&[x], &[y], 0).unwrap();
                assert!(
                    (fd - an).abs() < 1e-5 * (1.0 + an.abs()),
                    "x={x} y={y}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn direction_out_of_range_is_capability_error() {
        let k = build_kernel(&KernelDescriptor::Separable {
            amplitude: 1.0,
            factor: ModeSpec::bump(1, 1.0),
        })
        .unwrap();
        assert!(matches!(
            k.q_dx_dy(&[0.0], &[0.0], 1),
            Err(Error::KernelCapability(_))
        ));
    }

    #[test]
    fn tensor_mode_2d_derivatives() {
        let k = build_kernel(&KernelDescriptor::Separable {
            amplitude: 1.0,
            factor: ModeSpec::bump(2, 1.0),
        })
        .unwrap();
        let x = [0.3, -0.2];
        let h = 1e-5;
        let fd = (k.q(&[x[0], x[1] + h], &[x[0], x[1] + h])
            - 2.0 * k.q(&[x[0], x[1] + h], &[x[0], x[1] - h])
            + k.q(&[x[0], x[1] - h], &[x[0], x[1] - h]))
            / (4.0 * h * h);
        let an = k.q_dx_dy(&x, &x, 1).unwrap();
        assert!((fd - an).abs() < 2e-4 * (1.0 + an.abs()), "fd {fd} vs {an}");
    }
}
