//! Prefactored Thomas solves for the implicit diffusion sweeps.

/// Tridiagonal system with constant coefficients per row, factored once and
/// solved many times (one solve per grid line per step).
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    sub: Vec<f64>,
    sup: Vec<f64>,
    /// eliminated diagonal
    diag: Vec<f64>,
}

impl TridiagFactor {
    /// Factor the matrix given by (sub, diag, sup); `sub[i]` couples row i+1
    /// to i, `sup[i]` couples row i to i+1.
    pub fn new(sub: Vec<f64>, mut diag: Vec<f64>, sup: Vec<f64>) -> Self {
        let n = diag.len();
        assert!(n >= 2 && sub.len() == n - 1 && sup.len() == n - 1);
        for i in 1..n {
            let m = sub[i - 1] / diag[i - 1];
            diag[i] -= m * sup[i - 1];
        }
        TridiagFactor { sub, sup, diag }
    }

    /// Solve in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = self.diag.len();
        debug_assert_eq!(rhs.len(), n);
        for i in 1..n {
            let m = self.sub[i - 1] / self.diag_orig(i - 1);
            rhs[i] -= m * rhs[i - 1];
        }
        rhs[n - 1] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sup[i] * rhs[i + 1]) / self.diag[i];
        }
    }

    fn diag_orig(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Strided solve: treats `data[offset + k*stride]` for k in 0..n as the
    /// right-hand side. Used for the y-sweeps of the ADI splitting.
    pub fn solve_strided(&self, data: &mut [f64], offset: usize, stride: usize) {
        let n = self.diag.len();
        for i in 1..n {
            let m = self.sub[i - 1] / self.diag[i - 1];
            let prev = data[offset + (i - 1) * stride];
            data[offset + i * stride] -= m * prev;
        }
        data[offset + (n - 1) * stride] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            let next = data[offset + (i + 1) * stride];
            data[offset + i * stride] = (data[offset + i * stride] - self.sup[i] * next) / self.diag[i];
        }
    }
}
