//! Randomized verification suites for the phase geometry: algebraic
//! identities at rounding level and analytic derivatives against
//! Richardson-extrapolated central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{
    d2p_ds2, discriminant_angle_form, discriminant_d, dp_ds, grad_sc, one_minus_cos_sc, phase_p,
    q_of, r_of, richardson_first, richardson_second, s_c, tau_pm, AdmissiblePair,
};

/// Sampling parameters for [`identity_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub samples: usize,
    pub d: usize,
    pub mu: f64,
    pub mu_tilde: f64,
    /// Largest angle between `x` and `y`; keeps `⟨x,y⟩ > 0` when `< π/2`.
    pub max_angle: f64,
    /// Times are drawn uniformly from `[s_margin, π − s_margin]`.
    pub s_margin: f64,
    pub seed: u64,
    pub algebraic_tol: f64,
    pub derivative_tol: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            samples: 1000,
            d: 3,
            mu: 1.0 / 16.0,
            mu_tilde: 1.0 / 64.0,
            max_angle: 1.0,
            s_margin: 0.2,
            seed: 0,
            algebraic_tol: 1e-12,
            derivative_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Algebraic,
    FiniteDifference,
}

/// The state at which an identity showed its largest error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub kind: CheckKind,
    pub description: String,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst: Option<WorstState>,
}

struct Acc {
    name: &'static str,
    kind: CheckKind,
    description: &'static str,
    tolerance: f64,
    samples: usize,
    max_error: f64,
    worst: Option<WorstState>,
}

impl Acc {
    fn new(name: &'static str, kind: CheckKind, description: &'static str, tolerance: f64) -> Self {
        Self { name, kind, description, tolerance, samples: 0, max_error: 0.0, worst: None }
    }

    fn record(&mut self, err: f64, x: &[f64], y: &[f64], s: f64) {
        self.samples += 1;
        // NaN counts as the worst possible error
        if !(err <= self.max_error) {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
            self.worst = Some(WorstState { x: x.to_vec(), y: y.to_vec(), s });
        }
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name.into(),
            kind: self.kind,
            description: self.description.into(),
            samples: self.samples,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.samples > 0 && self.max_error <= self.tolerance,
            worst: self.worst,
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dist(x: &[f64], y: &[f64], sign: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a + sign * b).powi(2)).sum::<f64>().sqrt()
}

/// `|a − b| / max(|b|, 1)`: relative for large values, absolute below one.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Runs every identity on `spec.samples` random admissible states.
pub fn identity_suite(spec: &SuiteSpec) -> Result<Vec<IdentityCheck>> {
    if spec.samples == 0 {
        return Err(Error::Input("sample count must be positive".into()));
    }
    if spec.d == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    if !(spec.mu_tilde > 0.0 && spec.mu_tilde <= spec.mu && spec.mu < 0.5) {
        return Err(Error::Input(format!(
            "need 0 < μ̃ ≤ μ < 1/2, got μ = {}, μ̃ = {}",
            spec.mu, spec.mu_tilde
        )));
    }
    if !(spec.max_angle >= 0.0 && spec.max_angle < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Input(format!("max_angle = {} outside [0, π/2)", spec.max_angle)));
    }
    if !(spec.s_margin > 0.0 && spec.s_margin < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Input(format!("s_margin = {} outside (0, π/2)", spec.s_margin)));
    }
    use CheckKind::*;
    let (ta, td) = (spec.algebraic_tol, spec.derivative_tol);
    let mut angle = Acc::new("discriminant_angle_form", Algebraic, "D(x,y) = 1 + <x,y>^2 - |x|^2 - |y|^2 equals -|x|^2|y|^2 sin^2(x,y) + (1-|x|^2)(1-|y|^2)", ta);
    let mut q_diag = Acc::new("q_at_inner_product", Algebraic, "Q(x,y,<x,y>) = -D(x,y)", ta);
    let mut product = Acc::new("tau_product", Algebraic, "tau+ tau- = 1", ta);
    let mut sum = Acc::new("tau_sum", Algebraic, "tau+ + tau- = (|x|^2+|y|^2)/<x,y>, relative", ta);
    let mut roots = Acc::new("tau_roots", Algebraic, "R(x,y,tau+-) = 0, relative to tau+^2", ta);
    let mut gap = Acc::new("tau_minus_gap", Algebraic, "1 - tau- from the root formula equals 2|x-y|/(|x+y|+|x-y|)", ta);
    let mut plus_gap = Acc::new("tau_plus_gap", Algebraic, "tau+ - cos S_c = |x+y||x-y|/<x,y> = sin^2 S_c / cos S_c, relative", ta);
    let mut sym = Acc::new("s_c_symmetry", Algebraic, "S_c(x,y) = S_c(y,x)", 0.0);
    let mut inflect = Acc::new("inflection_at_s_c", Algebraic, "d2P/ds2 vanishes at s = S_c, relative to 1/sin^3 S_c", ta);
    let mut stationary = Acc::new("slope_at_s_c", Algebraic, "2 sin^2 S_c dP/ds(S_c) + Q(x,y,cos S_c) = 0", ta);
    let mut d1 = Acc::new("dp_ds_finite_difference", FiniteDifference, "dP/ds = -Q(x,y,cos s)/(2 sin^2 s) against Richardson differences of P", td);
    let mut d2 = Acc::new("d2p_ds2_finite_difference", FiniteDifference, "factored d2P/ds2 against Richardson second differences of P", td);
    let mut grad = Acc::new("grad_s_c_finite_difference", FiniteDifference, "closed-form gradient of S_c against Richardson differences, relative to its largest entry", td);
    let mut swap = Acc::new("grad_s_c_swap", Algebraic, "d_y S_c(x,y) = d_x S_c(y,x), relative", ta);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (spec.s_margin, std::f64::consts::PI - spec.s_margin);
    let step1 = f64::EPSILON.cbrt();
    let step2 = f64::EPSILON.powf(1.0 / 6.0);
    for _ in 0..spec.samples {
        let pair = AdmissiblePair::sample(&mut rng, spec.d, spec.mu, spec.mu_tilde, spec.max_angle);
        let s = rng.random_range(lo..hi);
        let (x, y) = (&pair.x[..], &pair.y[..]);
        let (xx, yy, b) = (dot(x, x), dot(y, y), dot(x, y));
        let dd = discriminant_d(x, y);

        angle.record((dd - discriminant_angle_form(x, y)).abs(), x, y, s);
        q_diag.record((q_of(x, y, b) + dd).abs(), x, y, s);

        let (tp, tm) = tau_pm(x, y)?;
        product.record((tp * tm - 1.0).abs(), x, y, s);
        sum.record(rel(tp + tm, (xx + yy) / b), x, y, s);
        let rscale = tp * tp;
        roots.record(r_of(x, y, tp).abs().max(r_of(x, y, tm).abs()) / rscale, x, y, s);
        let pm = dist(x, y, 1.0) * dist(x, y, -1.0);
        let omc = one_minus_cos_sc(x, y);
        gap.record(((1.0 - tm) - omc).abs(), x, y, s);

        let sc = s_c(x, y)?;
        let (cs, ss) = (sc.cos(), sc.sin());
        let lhs = tp - cs;
        plus_gap.record(rel(lhs, pm / b).max(rel(lhs, ss * ss / cs)), x, y, s);
        sym.record((sc - s_c(y, x)?).abs(), x, y, s);
        inflect.record(d2p_ds2(x, y, sc)?.abs() * ss.powi(3), x, y, s);
        stationary.record((2.0 * ss * ss * dp_ds(x, y, sc)? + q_of(x, y, cs)).abs(), x, y, s);

        let p = |t: f64| phase_p(x, y, t).unwrap_or(f64::NAN);
        d1.record(rel(richardson_first(p, s, step1), dp_ds(x, y, s)?), x, y, s);
        d2.record(rel(richardson_second(p, s, step2), d2p_ds2(x, y, s)?), x, y, s);

        let (gx, gy) = grad_sc(x, y)?;
        let h = step1 * dist(x, y, -1.0);
        let gmax = gx.iter().chain(&gy).fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..spec.d {
            let fx = |t: f64| {
                let mut v = x.to_vec();
                v[i] = t;
                s_c(&v, y).unwrap_or(f64::NAN)
            };
            let fy = |t: f64| {
                let mut v = y.to_vec();
                v[i] = t;
                s_c(x, &v).unwrap_or(f64::NAN)
            };
            worst = worst.max((richardson_first(fx, x[i], h) - gx[i]).abs() / gmax);
            worst = worst.max((richardson_first(fy, y[i], h) - gy[i]).abs() / gmax);
        }
        grad.record(worst, x, y, s);
        let (gx_swapped, _) = grad_sc(y, x)?;
        let sw = gy.iter().zip(&gx_swapped).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / gmax;
        swap.record(sw, x, y, s);
    }
    Ok([angle, q_diag, product, sum, roots, gap, plus_gap, sym, inflect, stationary, d1, d2, grad, swap]
        .into_iter()
        .map(Acc::finish)
        .collect())
}
