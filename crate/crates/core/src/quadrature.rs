//! Gauss rules on symmetric tridiagonal Jacobi matrices and composite
//! Gauss–Legendre integration.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Eigenvalues (ascending) of the Jacobi matrix with diagonal `diag` and
/// off-diagonal `off`, paired with the squared first eigenvector components.
pub fn golub_welsch(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1));
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
    }
    for (i, &b) in off.iter().enumerate() {
        j[(i, i + 1)] = b;
        j[(i + 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|c| (eig.eigenvalues[c], eig.eigenvectors[(0, c)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Legendre `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "node count must be at least 1");
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (mut x, _) = golub_welsch(&vec![0.0; n], &off);
    let mut w = vec![0.0; n];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            let (p, dp) = legendre(n, *xi);
            let step = p / dp;
            *xi -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        let (_, dp) = legendre(n, *xi);
        *wi = 2.0 / ((1.0 - *xi * *xi) * dp * dp);
    }
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let a = 0.5 * (x[j] - x[i]);
        let b = 0.5 * (w[i] + w[j]);
        x[i] = -a;
        x[j] = a;
        w[i] = b;
        w[j] = b;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A fixed Gauss–Legendre rule reused across panels.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl PanelRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self { x, w }
    }

    /// Nodes and weights of `panels` equal panels on `[a, b]`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let h = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.x.len());
        let mut ws = Vec::with_capacity(panels * self.x.len());
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in self.x.iter().zip(&self.w) {
                xs.push(lo + 0.5 * h * (x + 1.0));
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }

    /// `(∫ f, ∫ |f|)` over `[a, b]` with `panels` equal panels.
    pub fn integrate_complex(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        f: &mut impl FnMut(f64) -> Complex64,
    ) -> (Complex64, f64) {
        let h = (b - a) / panels as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut abs = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in self.x.iter().zip(&self.w) {
                let v = f(lo + 0.5 * h * (x + 1.0)) * (0.5 * h * w);
                sum += v;
                abs += v.norm();
            }
        }
        (sum, abs)
    }
}

/// Result of a panel-doubling integration.
#[derive(Debug, Clone, Copy)]
pub struct Doubled {
    pub value: Complex64,
    /// `∫|f|`, the scale the error is measured against.
    pub scale: f64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Integrates `f` on `[a, b]` starting from `panels` panels and doubling
/// until two successive estimates agree to `tol · ∫|f|` (absolute floor
/// `atol`), or `max_panels` is reached.
pub fn integrate_doubling(
    rule: &PanelRule,
    a: f64,
    b: f64,
    mut panels: usize,
    max_panels: usize,
    tol: f64,
    atol: f64,
    mut f: impl FnMut(f64) -> Complex64,
) -> Doubled {
    let (mut prev, _) = rule.integrate_complex(a, b, panels, &mut f);
    loop {
        let next_panels = panels * 2;
        let (cur, scale) = rule.integrate_complex(a, b, next_panels, &mut f);
        let error = (cur - prev).norm();
        let converged = error <= tol * scale || error <= atol;
        if converged || next_panels >= max_panels {
            return Doubled { value: cur, scale, error, panels: next_panels, converged };
        }
        prev = cur;
        panels = next_panels;
    }
}
