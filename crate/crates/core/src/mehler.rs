//! The projection kernel `Π_λ(x, y)`, by the Mehler time integral split
//! into dyadic cutoff pieces and by the direct eigenfunction sum.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{enumerate_level, hermite_row, level_degree};
use crate::quadrature::{integrate_doubling, PanelRule};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn bump_half(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`, `C^∞` in between.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = bump_half(u);
        a / (a + bump_half(1.0 - u))
    }
}

/// `ρ = 1` on `t ≤ 1/4`, `ρ = 0` on `t ≥ 1/2`.
pub fn rho(t: f64) -> f64 {
    smooth_step(2.0 - 4.0 * t)
}

/// `ψ(t) = ρ(t/2) − ρ(t)`, supported in `[1/4, 1]`; `Σ_j ψ(2^j t) = 1` for `t > 0`.
pub fn psi(t: f64) -> f64 {
    rho(0.5 * t) - rho(t)
}

/// `Σ_{j ≥ 4} ψ(2^j u)` for `u > 0`, zero otherwise.
fn dyadic_tail(u: f64) -> f64 {
    if u > 0.0 {
        rho(8.0 * u)
    } else {
        0.0
    }
}

/// Which end of `(−π, π)` a cutoff piece sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kappa {
    /// Away from `0` and `±π`.
    Zero,
    /// `t ∈ (0, ·)`
    Plus,
    /// `t ∈ (·, 0)`
    Minus,
    /// `t` near `+π`
    PlusPi,
    /// `t` near `−π`
    MinusPi,
}

impl Kappa {
    pub const ALL: [Kappa; 5] = [Kappa::Zero, Kappa::Plus, Kappa::Minus, Kappa::PlusPi, Kappa::MinusPi];
    pub const ENDS: [Kappa; 4] = [Kappa::Plus, Kappa::Minus, Kappa::PlusPi, Kappa::MinusPi];

    /// `+1` for pieces on the positive half line.
    fn side(self) -> f64 {
        match self {
            Kappa::Plus | Kappa::PlusPi | Kappa::Zero => 1.0,
            Kappa::Minus | Kappa::MinusPi => -1.0,
        }
    }

    fn near_pi(self) -> bool {
        matches!(self, Kappa::PlusPi | Kappa::MinusPi)
    }
}

/// The dyadic partition of unity on `(−π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffBank {
    pub j_min: u32,
    pub j_max: u32,
}

impl Default for CutoffBank {
    fn default() -> Self {
        Self { j_min: 4, j_max: 14 }
    }
}

impl CutoffBank {
    pub fn new(j_max: u32) -> Result<Self> {
        if j_max < 4 || j_max > 40 {
            return Err(Error::Input(format!("j_max = {j_max} must lie in [4, 40]")));
        }
        Ok(Self { j_min: 4, j_max })
    }

    /// `ψ^0(t) = 1 − Σ_{j≥4}(ψ(2^j t) + ψ(−2^j t) + ψ(2^j(t+π)) + ψ(2^j(π−t)))`.
    pub fn psi0(t: f64) -> f64 {
        1.0 - dyadic_tail(t) - dyadic_tail(-t) - dyadic_tail(t + PI) - dyadic_tail(PI - t)
    }

    /// Value of `ψ_j^κ` at `t ∈ (−π, π)`.
    pub fn piece(&self, kappa: Kappa, j: u32, t: f64) -> f64 {
        let s = 2f64.powi(j as i32);
        match kappa {
            Kappa::Zero => Self::psi0(t),
            Kappa::Plus => psi(s * t),
            Kappa::Minus => psi(-s * t),
            Kappa::PlusPi => psi(s * (PI - t)),
            Kappa::MinusPi => psi(s * (t + PI)),
        }
    }

    /// Sum of the truncated family at `t`.
    pub fn partition_sum(&self, t: f64) -> f64 {
        let mut acc = Self::psi0(t);
        for j in self.j_min..=self.j_max {
            for k in Kappa::ENDS {
                acc += self.piece(k, j, t);
            }
        }
        acc
    }

    /// The part of the family with `j > j_max`, as a function of the
    /// distance `u > 0` to the nearest singular time.
    pub fn remainder(&self, u: f64) -> f64 {
        rho(2f64.powi(self.j_max as i32) * u)
    }
}

/// Quadrature controls for one oscillatory piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscIntegralSpec {
    /// Minimum Gauss–Legendre panels per piece.
    pub panels: usize,
    /// Relative tolerance, measured against `∫|integrand|`.
    pub tolerance: f64,
    pub j_max: u32,
    /// Pieces whose phase is monotone with total turning above this many
    /// radians are treated as negligible.
    pub skip_phase: f64,
}

impl Default for OscIntegralSpec {
    fn default() -> Self {
        Self { panels: 8, tolerance: 1e-10, j_max: 14, skip_phase: 600.0 }
    }
}

impl OscIntegralSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels < 8 {
            return Err(Error::Input(format!("panels = {} must be at least 8", self.panels)));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Input(format!("tolerance = {} must lie in (0, 1)", self.tolerance)));
        }
        if !(self.skip_phase > 0.0) {
            return Err(Error::Input("skip_phase must be positive".into()));
        }
        CutoffBank::new(self.j_max).map(|_| ())
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_singular(t: f64) -> Result<()> {
    if !t.is_finite() || t.sin() == 0.0 || t == 0.0 || t.abs() >= PI {
        return Err(Error::Singularity(t));
    }
    Ok(())
}

/// `φ_λ(x, y, t) = λt/2 + (|x|²+|y|²)/2 · cot t − ⟨x,y⟩ csc t`.
pub fn mehler_phase(lambda: f64, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Input("points have different dimensions".into()));
    }
    check_singular(t)?;
    let g = PairGeometry::new(lambda, x, y);
    Ok(g.phase(t))
}

/// `(2πi sin t)^{-d/2}` on the principal branch.
pub fn amplitude(t: f64, d: usize) -> Result<Complex64> {
    check_singular(t)?;
    Ok(amplitude_c(Complex64::new(t, 0.0), d))
}

fn amplitude_c(t: Complex64, d: usize) -> Complex64 {
    (2.0 * PI * I * t.sin()).powf(-(d as f64) / 2.0)
}

/// Everything about `(x, y)` the phase needs, in cancellation-free form.
#[derive(Debug, Clone, Copy)]
struct PairGeometry {
    lambda: f64,
    d: usize,
    /// `(|x|² + |y|²)/2`
    half_sum: f64,
    /// `⟨x, y⟩`
    inner: f64,
    /// `|x − y|²`
    dist_minus: f64,
    /// `|x + y|²`
    dist_plus: f64,
}

impl PairGeometry {
    fn new(lambda: f64, x: &[f64], y: &[f64]) -> Self {
        let dist_minus = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let dist_plus = x.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum();
        Self {
            lambda,
            d: x.len(),
            half_sum: 0.5 * (dot(x, x) + dot(y, y)),
            inner: dot(x, y),
            dist_minus,
            dist_plus,
        }
    }

    /// `λt/2 + (A cos t − B)/sin t` with `A cos t − B = |x∓y|²/2 − 2A sin²(t/2)`.
    fn core(&self, dist: f64, t: Complex64) -> Complex64 {
        let h = (0.5 * t).sin();
        0.5 * self.lambda * t + (0.5 * dist - 2.0 * self.half_sum * h * h) / t.sin()
    }

    /// Phase near the singular time `0` (`near_pi = false`) or near `π`,
    /// in terms of the local coordinate `s` (`t = s` or `t = π − s`).
    fn local_phase(&self, near_pi: bool, s: Complex64) -> Complex64 {
        if near_pi {
            0.5 * self.lambda * PI - self.core(self.dist_plus, s)
        } else {
            self.core(self.dist_minus, s)
        }
    }

    fn phase(&self, t: f64) -> f64 {
        let (sign, u) = if t < 0.0 { (-1.0, -t) } else { (1.0, t) };
        let v = if u > FRAC_PI_2 {
            self.local_phase(true, Complex64::new(PI - u, 0.0))
        } else {
            self.local_phase(false, Complex64::new(u, 0.0))
        };
        sign * v.re
    }

    /// `∂_t φ_λ = λ/2 − (A − B cos t)/sin² t`, written near `0` or `π`.
    fn local_phase_slope(&self, near_pi: bool, s: f64) -> f64 {
        let (dist, sign) = if near_pi { (self.dist_plus, -1.0) } else { (self.dist_minus, 1.0) };
        // A − B cos s = |x∓y|²/2 + 2B sin²(s/2) with B → ±B
        let b = if near_pi { -self.inner } else { self.inner };
        let h = (0.5 * s).sin();
        let sn = s.sin();
        // slope of the local phase in s (sign flips with t = π − s)
        sign * (0.5 * self.lambda - (0.5 * dist + 2.0 * b * h * h) / (sn * sn))
    }
}

/// `(2π sin s)^{-d/2} e^{i(φ − πd/4)}`: the amplitude times the phase factor
/// for real `s ∈ (0, π)`, without complex powers.
fn real_axis_term(g: &PairGeometry, near_pi: bool, s: f64) -> Complex64 {
    let modulus = (2.0 * PI * s.sin()).powf(-(g.d as f64) / 2.0);
    let phase = g.local_phase(near_pi, Complex64::new(s, 0.0)).re - 0.25 * PI * g.d as f64;
    Complex64::from_polar(modulus, phase)
}

/// The integrand `(cutoff · a)(t) e^{iφ_λ(t)}` written in the local
/// coordinate `s > 0` of piece `kappa`.
fn local_integrand(g: &PairGeometry, kappa: Kappa, cutoff: f64, s: f64) -> Complex64 {
    if cutoff == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let v = real_axis_term(g, kappa.near_pi(), s) * cutoff;
    if kappa.side() < 0.0 {
        v.conj()
    } else {
        v
    }
}

/// Result of one oscillatory piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceValue {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
    pub skipped: bool,
}

fn local_support(kappa: Kappa, j: u32) -> (f64, f64) {
    match kappa {
        Kappa::Zero => (1.0 / 32.0, PI - 1.0 / 32.0),
        _ => (2f64.powi(-(j as i32) - 2), 2f64.powi(-(j as i32))),
    }
}

/// Turning of the local phase over `[lo, hi]`: `(min |φ'|, ∫|φ'|, monotone)`.
fn phase_turning(g: &PairGeometry, near_pi: bool, lo: f64, hi: f64) -> (f64, f64, bool) {
    const N: usize = 33;
    let h = (hi - lo) / (N - 1) as f64;
    let mut min = f64::INFINITY;
    let mut total = 0.0;
    let mut pos = false;
    let mut neg = false;
    for i in 0..N {
        let s = lo + h * i as f64;
        let v = g.local_phase_slope(near_pi, s);
        min = min.min(v.abs());
        total += v.abs() * if i == 0 || i == N - 1 { 0.5 * h } else { h };
        pos |= v > 0.0;
        neg |= v < 0.0;
    }
    (min, total, !(pos && neg))
}

/// Radians of phase per Gauss–Legendre panel on the first pass.
const RADIANS_PER_PANEL: f64 = 6.0;

/// `∫_lo^hi f` over sub-intervals `[lo, 2lo], [2lo, 4lo], …`, each with
/// panels sized to its own phase turning, since `|φ'|` grows like `s^{-2}`
/// toward the singular time.
fn graded(
    g: &PairGeometry,
    near_pi: bool,
    lo: f64,
    hi: f64,
    spec: &OscIntegralSpec,
    rule: &PanelRule,
    what: &dyn Fn() -> String,
    f: impl Fn(f64) -> Complex64,
) -> Result<PieceValue> {
    let mut out = PieceValue { value: Complex64::new(0.0, 0.0), error: 0.0, panels: 0, skipped: false };
    let mut a = lo;
    while a < hi {
        let b = (2.0 * a).min(hi);
        let (_, total, _) = phase_turning(g, near_pi, a, b);
        let panels = ((total / RADIANS_PER_PANEL).ceil() as usize).max(2);
        let r = integrate_doubling(rule, a, b, panels, 1 << 22, spec.tolerance, ABS_FLOOR * spec.tolerance, &f);
        if !r.converged {
            return Err(Error::Accuracy {
                what: what(),
                achieved: r.error / r.scale.max(f64::MIN_POSITIVE),
                best: r.value.re,
            });
        }
        out.value += r.value;
        out.error += r.error;
        out.panels += r.panels;
        a = b;
    }
    Ok(out)
}

/// Absolute error floor, relative to the tolerance, for sub-integrals whose
/// value is far below any kernel value of interest.
const ABS_FLOOR: f64 = 1e-6;

fn piece_with(
    g: &PairGeometry,
    kappa: Kappa,
    j: u32,
    spec: &OscIntegralSpec,
    rule: &PanelRule,
) -> Result<PieceValue> {
    let (lo, hi) = local_support(kappa, j);
    if kappa == Kappa::Zero {
        // t ∈ (0, π/2] in the coordinate s = t, t ∈ [π/2, π) in s = π − t;
        // the t < 0 half is the complex conjugate, so the piece is 2 Re
        let mut out = PieceValue { value: Complex64::new(0.0, 0.0), error: 0.0, panels: 0, skipped: false };
        for near_pi in [false, true] {
            let what = || format!("piece κ=0, near π = {near_pi}");
            let r = graded(g, near_pi, lo, FRAC_PI_2, spec, rule, &what, |s| {
                let t = if near_pi { PI - s } else { s };
                let c = CutoffBank::psi0(t);
                if c == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    real_axis_term(g, near_pi, s) * c
                }
            })?;
            out.value += 2.0 * r.value.re;
            out.error += 2.0 * r.error;
            out.panels += r.panels;
        }
        return Ok(out);
    }
    let near_pi = kappa.near_pi();
    let (min_slope, _, monotone) = phase_turning(g, near_pi, lo, hi);
    if monotone && min_slope * (hi - lo) > spec.skip_phase {
        return Ok(PieceValue { value: Complex64::new(0.0, 0.0), error: 0.0, panels: 0, skipped: true });
    }
    let scale = 2f64.powi(j as i32);
    let what = || format!("piece κ={kappa:?}, j={j}");
    graded(g, near_pi, lo, hi, spec, rule, &what, |s| local_integrand(g, kappa, psi(scale * s), s))
}

/// `(1/2π) ∫ (ψ_j^κ a)(t) e^{iφ_λ(x,y,t)} dt`.
pub fn kernel_piece(
    lambda: u32,
    j: u32,
    kappa: Kappa,
    x: &[f64],
    y: &[f64],
    spec: &OscIntegralSpec,
) -> Result<PieceValue> {
    check_pair(lambda, x, y)?;
    spec.validate()?;
    if kappa == Kappa::Zero && j != 4 {
        return Err(Error::Input("the κ = 0 piece only exists at j = 4".into()));
    }
    if j < 4 {
        return Err(Error::Input(format!("dyadic level j = {j} must be at least 4")));
    }
    let g = PairGeometry::new(lambda as f64, x, y);
    CutoffBank::new(j)?; // rejects levels beyond the bank
    let rule = PanelRule::new(16);
    let mut p = piece_with(&g, kappa, j, spec, &rule)?;
    p.value /= 2.0 * PI;
    p.error /= 2.0 * PI;
    Ok(p)
}

fn check_pair(lambda: u32, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Input("points must be non-empty and of equal dimension".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite coordinate".into()));
    }
    level_degree(x.len(), lambda).map(|_| ())
}

/// Contribution of `Σ_{j > j_max}` at the `Plus` (or `PlusPi`) end. Only
/// the real part is meaningful; the mirrored end contributes the conjugate.
///
/// The sharp part on `(0, ε₀]` is moved onto the arc `s = ε₀ e^{-iθ}`,
/// `θ ∈ [0, π/2]`: along the ray `s ∈ (0, −iε₀]` the integrand times `ds`
/// is purely imaginary, so the real part equals the arc integral.
fn tail_end(
    g: &PairGeometry,
    bank: &CutoffBank,
    near_pi: bool,
    spec: &OscIntegralSpec,
    rule: &PanelRule,
) -> Result<PieceValue> {
    let eps0 = 2f64.powi(-(bank.j_max as i32) - 2);
    let (min_slope, total, monotone) = phase_turning(g, near_pi, eps0, 2.0 * eps0);
    if monotone && min_slope * eps0 > spec.skip_phase {
        return Ok(PieceValue { value: Complex64::new(0.0, 0.0), error: 0.0, panels: 0, skipped: true });
    }
    let kappa = if near_pi { Kappa::PlusPi } else { Kappa::Plus };
    let panels = spec.panels.max((total / RADIANS_PER_PANEL).ceil() as usize);
    let smooth = integrate_doubling(rule, eps0, 2.0 * eps0, panels, 1 << 22, spec.tolerance, ABS_FLOOR * spec.tolerance, |s| {
        local_integrand(g, kappa, bank.remainder(s), s)
    });
    // near π the local amplitude is ā(s) = (−2πi sin s)^{-d/2}, continued
    // from the real axis, and the exponent is conjugated
    let arc_integrand = |theta: f64| -> Complex64 {
        let s = eps0 * Complex64::new(0.0, -theta).exp();
        let ds = -I * s;
        if near_pi {
            let z = -2.0 * PI * I * s.sin();
            let mut arg = z.arg();
            if arg > 0.0 {
                arg -= 2.0 * PI;
            }
            let amp = (-(g.d as f64) / 2.0 * Complex64::new(z.norm().ln(), arg)).exp();
            let rot = (-I * 0.5 * g.lambda * PI).exp();
            rot * amp * (I * g.core(g.dist_plus, s)).exp() * ds
        } else {
            amplitude_c(s, g.d) * (I * g.local_phase(false, s)).exp() * ds
        }
    };
    // the arc integrand concentrates at θ ≲ ε₀/|x−y|²; grade panels geometrically
    let dist = if near_pi { g.dist_plus } else { g.dist_minus };
    let omega = (0.5 * dist / eps0).max(1.0);
    let mut arc = Complex64::new(0.0, 0.0);
    let mut arc_err = 0.0;
    let mut hi = FRAC_PI_2;
    let floor = 1e-3 / omega;
    let mut converged = smooth.converged;
    loop {
        let lo = if hi * 0.5 < floor { 0.0 } else { hi * 0.5 };
        let r = integrate_doubling(rule, lo, hi, 1, 1 << 12, spec.tolerance, ABS_FLOOR * spec.tolerance, |th| arc_integrand(th));
        converged &= r.converged;
        // orientation θ: π/2 → 0
        arc -= r.value;
        arc_err += r.error;
        if lo == 0.0 {
            break;
        }
        hi = lo;
    }
    if !converged {
        return Err(Error::Accuracy {
            what: format!("tail beyond j_max at κ={kappa:?}"),
            achieved: smooth.error.max(arc_err),
            best: (smooth.value + arc).re,
        });
    }
    Ok(PieceValue {
        value: Complex64::new(arc.re + smooth.value.re, 0.0),
        error: smooth.error + arc_err,
        panels: smooth.panels,
        skipped: false,
    })
}

/// Output of the Mehler route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MehlerValue {
    pub value: Complex64,
    /// Summed quadrature error estimates (already divided by `2π`).
    pub error: f64,
    pub pieces_evaluated: usize,
    pub pieces_skipped: usize,
}

/// `Π_λ(x, y)` as the sum over `κ` and `4 ≤ j ≤ j_max` of the cutoff
/// pieces plus the exact remainder of the dyadic family beyond `j_max`.
pub fn kernel_mehler(lambda: u32, x: &[f64], y: &[f64], spec: &OscIntegralSpec) -> Result<MehlerValue> {
    check_pair(lambda, x, y)?;
    spec.validate()?;
    let g = PairGeometry::new(lambda as f64, x, y);
    let bank = CutoffBank::new(spec.j_max)?;
    let rule = PanelRule::new(16);
    let mut total = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;

    let p0 = piece_with(&g, Kappa::Zero, 4, spec, &rule)?;
    total += p0.value;
    error += p0.error;
    evaluated += 1;

    for end in [Kappa::Plus, Kappa::PlusPi] {
        let mut cut = false;
        for j in bank.j_min..=bank.j_max {
            if cut {
                skipped += 2;
                continue;
            }
            let p = piece_with(&g, end, j, spec, &rule)?;
            if p.skipped {
                // all finer pieces turn faster still
                cut = true;
                skipped += 2;
                continue;
            }
            // a(−t) = conj a(t) and φ(−t) = −φ(t): the mirrored piece is the conjugate
            let m = p.value.conj();
            total += p.value + m;
            error += 2.0 * p.error;
            evaluated += 2;
        }
        if cut {
            continue;
        }
        let t = tail_end(&g, &bank, end == Kappa::PlusPi, spec, &rule)?;
        if !t.skipped {
            // the mirrored end is the conjugate
            total += Complex64::new(2.0 * t.value.re, 0.0);
            error += 2.0 * t.error;
        }
    }
    Ok(MehlerValue {
        value: total / (2.0 * PI),
        error: error / (2.0 * PI),
        pieces_evaluated: evaluated,
        pieces_skipped: skipped,
    })
}

/// 1-D Hermite tables for each coordinate of `x`.
fn coordinate_tables(k: usize, x: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            let mut row = vec![0.0; k + 1];
            hermite_row(k, xi, &mut row);
            row
        })
        .collect()
}

/// `Σ_α Φ_α(x) Φ_α(y)` over the level, in enumeration order.
pub fn kernel_direct(lambda: u32, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(lambda, x, y)?;
    let level = enumerate_level(x.len(), lambda)?;
    let k = level_degree(x.len(), lambda)? as usize;
    let tx = coordinate_tables(k, x);
    let ty = coordinate_tables(k, y);
    let mut sum = 0.0;
    for alpha in &level {
        let mut px = 1.0;
        let mut py = 1.0;
        for (i, &a) in alpha.0.iter().enumerate() {
            px *= tx[i][a as usize];
            py *= ty[i][a as usize];
        }
        sum += px * py;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Direct,
    Mehler,
}

/// `𝔓_λ(x, y) = Π_λ(√λ x, √λ y)`.
pub fn kernel_rescaled(
    lambda: u32,
    x: &[f64],
    y: &[f64],
    route: Route,
    spec: &OscIntegralSpec,
) -> Result<Complex64> {
    let r = (lambda as f64).sqrt();
    let xs: Vec<f64> = x.iter().map(|v| v * r).collect();
    let ys: Vec<f64> = y.iter().map(|v| v * r).collect();
    match route {
        Route::Direct => Ok(Complex64::new(kernel_direct(lambda, &xs, &ys)?, 0.0)),
        Route::Mehler => Ok(kernel_mehler(lambda, &xs, &ys, spec)?.value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_modulus_at_quarter_period() {
        let a = amplitude(PI / 4.0, 1).unwrap();
        let want = (2.0 * PI * 0.5f64.sqrt()).powf(-0.5);
        assert!((a.norm() - want).abs() < 1e-15);
        assert!((want - 0.4745).abs() < 1e-4);
    }

    #[test]
    fn singular_times_rejected() {
        for t in [0.0, PI, -PI, 4.0, f64::NAN] {
            assert!(matches!(amplitude(t, 2), Err(Error::Singularity(_))), "t = {t}");
            assert!(mehler_phase(5.0, &[0.1], &[0.2], t).is_err());
        }
    }

    #[test]
    fn psi_is_supported_on_quarter_to_one() {
        for i in 0..=400 {
            let t = i as f64 / 100.0;
            let v = psi(t);
            assert!((0.0..=1.0).contains(&v));
            if !(0.25..=1.0).contains(&t) {
                assert_eq!(v, 0.0, "ψ({t})");
            }
        }
    }

    #[test]
    fn spec_bounds_enforced() {
        let bad = [
            OscIntegralSpec { panels: 4, ..Default::default() },
            OscIntegralSpec { tolerance: 1.0, ..Default::default() },
            OscIntegralSpec { j_max: 3, ..Default::default() },
        ];
        for s in bad {
            assert!(s.validate().is_err(), "{s:?}");
        }
        assert!(kernel_piece(5, 5, Kappa::Zero, &[0.1], &[0.1], &OscIntegralSpec::default()).is_err());
    }

    #[test]
    fn mirrored_pieces_are_conjugate() {
        let spec = OscIntegralSpec::default();
        let (x, y) = ([0.4, -0.2], [0.1, 0.3]);
        for j in [4, 6] {
            let p = kernel_piece(6, j, Kappa::Plus, &x, &y, &spec).unwrap().value;
            let m = kernel_piece(6, j, Kappa::Minus, &x, &y, &spec).unwrap().value;
            assert!((p - m.conj()).norm() < 1e-12 * (1.0 + p.norm()), "j={j}: {p} vs {m}");
        }
    }
}
