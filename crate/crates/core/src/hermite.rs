//! L²-normalized Hermite functions, the spectrum of `H = −Δ + |x|²`, and
//! Gauss–Hermite quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::golub_welsch;

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
/// π^{-1/4}
pub const PI_M_QUARTER: f64 = 0.751_125_544_464_942_5;
const RESCALE_BITS: i32 = 600;

/// A multi-index `α ∈ ℕ₀^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α|`
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `2|α| + d`
    pub fn eigenvalue(&self) -> u32 {
        2 * self.degree() + self.dim() as u32
    }
}

/// The eigenspace of `H` at `λ = 2k + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenLevel {
    pub d: usize,
    pub lambda: u32,
    pub k: u32,
    pub dim: usize,
}

impl EigenLevel {
    pub fn new(d: usize, lambda: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        let k = level_degree(d, lambda)?;
        Ok(Self { d, lambda, k, dim: level_dimension(d, k) })
    }
}

/// `k = (λ − d)/2`, or a spectrum error when `λ ∉ 2ℕ₀ + d`.
pub fn level_degree(d: usize, lambda: u32) -> Result<u32> {
    let d32 = d as u32;
    if lambda < d32 || (lambda - d32) % 2 != 0 {
        return Err(Error::Spectrum { lambda, d });
    }
    Ok((lambda - d32) / 2)
}

/// A value `mant · 2^exp2` that cannot underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mant: f64,
    pub exp2: i32,
}

impl Scaled {
    /// Nearest `f64`; flushes to zero (or subnormal) when out of range.
    pub fn value(self) -> f64 {
        ldexp(self.mant, self.exp2)
    }

    pub fn ln_abs(self) -> f64 {
        self.mant.abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    pub fn signum(self) -> f64 {
        if self.mant == 0.0 {
            0.0
        } else {
            self.mant.signum()
        }
    }
}

/// `x · 2^e` without intermediate overflow or premature underflow.
pub fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 && x != 0.0 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    if e < -1022 {
        // two steps keep gradual underflow
        x * 2f64.powi(-1022) * 2f64.powi(e + 1022)
    } else {
        x * 2f64.powi(e)
    }
}

/// `e^{-x²/2}` as `(m, q)` with `m · 2^q`, using an exact square and a
/// split `ln 2` so the result stays accurate when `x²` is large.
fn gaussian_factor(x: f64) -> (f64, i32) {
    let p = x * x;
    let e = x.mul_add(x, -p);
    let half = 0.5 * p;
    let q = (-half / std::f64::consts::LN_2).round();
    let r = (-half - q * LN2_HI) - q * LN2_LO;
    (r.exp() * (-0.5 * e).exp(), q as i32)
}

/// Runs the normalized three-term recurrence, reporting `h_n(x)` for
/// `n = 0..=n_max` in scaled form.
fn recurrence(n_max: usize, x: f64, mut emit: impl FnMut(usize, Scaled)) {
    let (g, q) = gaussian_factor(x);
    let mut exp2 = q;
    let mut prev = 0.0;
    let mut cur = PI_M_QUARTER * g;
    emit(0, Scaled { mant: cur, exp2 });
    for n in 0..n_max {
        let nf = n as f64;
        let next = if n == 0 {
            std::f64::consts::SQRT_2 * x * cur
        } else {
            x * (2.0 / (nf + 1.0)).sqrt() * cur - (nf / (nf + 1.0)).sqrt() * prev
        };
        prev = cur;
        cur = next;
        if cur.abs() > 2f64.powi(RESCALE_BITS) {
            let s = 2f64.powi(-RESCALE_BITS);
            prev *= s;
            cur *= s;
            exp2 += RESCALE_BITS;
        }
        emit(n + 1, Scaled { mant: cur, exp2 });
    }
}

/// `h_0(x), …, h_{n_max}(x)`, each kept in scaled form.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1DEval {
    pub n_max: usize,
    pub x: f64,
    pub scaled: Vec<Scaled>,
}

impl Basis1DEval {
    pub fn value(&self, n: usize) -> f64 {
        self.scaled[n].value()
    }

    pub fn values(&self) -> Vec<f64> {
        self.scaled.iter().map(|s| s.value()).collect()
    }
}

pub fn hermite_eval_1d(n_max: usize, x: f64) -> Result<Basis1DEval> {
    if !x.is_finite() {
        return Err(Error::Input(format!("evaluation point {x} is not finite")));
    }
    let mut scaled = Vec::with_capacity(n_max + 1);
    recurrence(n_max, x, |_, s| scaled.push(s));
    Ok(Basis1DEval { n_max, x, scaled })
}

/// Plain `f64` values `h_0(x)..=h_{n_max}(x)` written into `out`.
pub fn hermite_row(n_max: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() > n_max);
    recurrence(n_max, x, |n, s| out[n] = s.value());
}

/// `Φ_α(x) = ∏ h_{α_i}(x_i)`.
pub fn phi_eval(alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
    if alpha.dim() != x.len() {
        return Err(Error::Input(format!(
            "multi-index has {} entries but the point has {}",
            alpha.dim(),
            x.len()
        )));
    }
    let mut out = 1.0;
    for (&a, &xi) in alpha.0.iter().zip(x) {
        out *= hermite_eval_1d(a as usize, xi)?.value(a as usize);
    }
    Ok(out)
}

/// `C(k + d − 1, d − 1)`
pub fn level_dimension(d: usize, k: u32) -> usize {
    assert!(d >= 1, "dimension must be at least 1");
    let (n, r) = (k as u128 + d as u128 - 1, d as u128 - 1);
    let r = r.min(n - r);
    let mut c: u128 = 1;
    for i in 0..r {
        c = c * (n - i) / (i + 1);
    }
    c as usize
}

/// All `α` with `|α| = (λ − d)/2`, in ascending lexicographic order.
pub fn enumerate_level(d: usize, lambda: u32) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    let k = level_degree(d, lambda)?;
    let mut out = Vec::with_capacity(level_dimension(d, k));
    let mut cur = vec![0u32; d];
    fill(&mut cur, 0, k, &mut out);
    Ok(out)
}

fn fill(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in 0..=left {
        cur[pos] = a;
        fill(cur, pos + 1, left - a, out);
    }
}

/// Gauss–Hermite rule for the weight `e^{-x²}`: exact for polynomials of
/// degree ≤ 2n − 1. Nodes ascend.
pub fn gauss_hermite_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Input("node count must be at least 1".into()));
    }
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let (mut nodes, _) = golub_welsch(&vec![0.0; n], &off);
    let mut weights = vec![0.0; n];
    let mut h = vec![Scaled { mant: 0.0, exp2: 0 }; n + 1];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        // Newton on h_n, with h_n' = √(2n) h_{n-1} − x h_n
        for _ in 0..3 {
            recurrence(n, *x, |m, s| h[m] = s);
            let hn = h[n].mant;
            let hm = ldexp(h[n - 1].mant, h[n - 1].exp2 - h[n].exp2);
            let dn = (2.0 * n as f64).sqrt() * hm - *x * hn;
            if dn == 0.0 {
                break;
            }
            let step = hn / dn;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        recurrence(n, *x, |m, s| h[m] = s);
        // w = e^{-x²} / (n h_{n-1}²), with e^{-x²} = (e^{-x²/2})² cancelled in scaled form
        let hm = h[n - 1];
        let (g, q) = gaussian_factor(*x);
        let ratio = g * g / (n as f64 * hm.mant * hm.mant);
        *w = ldexp(ratio, 2 * q - 2 * hm.exp2);
    }
    // symmetry: exact zero at the centre of odd rules, mirrored pairs
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}
