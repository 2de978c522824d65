//! Closed-form geometry of the phase `P(x, y, s) = φ_1(x, y, s)`: its
//! `s`-derivatives, the discriminant `D`, the roots `τ±`, the inflection
//! time `S_c` and its gradient, and mixed-Hessian determinants.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x)
}

fn dist(x: &[f64], y: &[f64], sign: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a + sign * b).powi(2)).sum::<f64>().sqrt()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Input("points must be non-empty and of equal dimension".into()));
    }
    Ok(())
}

fn check_time(s: f64) -> Result<()> {
    if !s.is_finite() || s.sin() == 0.0 {
        return Err(Error::Singularity(s));
    }
    Ok(())
}

/// `P(x, y, s) = s/2 + (|x|²+|y|²)/2 · cot s − ⟨x,y⟩ csc s`.
pub fn phase_p(x: &[f64], y: &[f64], s: f64) -> Result<f64> {
    check_dims(x, y)?;
    check_time(s)?;
    let a = 0.5 * (norm2(x) + norm2(y));
    Ok(0.5 * s + (a * s.cos() - dot(x, y)) / s.sin())
}

/// `D(x, y) = 1 + ⟨x,y⟩² − |x|² − |y|²`.
pub fn discriminant_d(x: &[f64], y: &[f64]) -> f64 {
    let b = dot(x, y);
    1.0 + b * b - norm2(x) - norm2(y)
}

/// `−|x|²|y|² sin²∠(x,y) + (1 − |x|²)(1 − |y|²)`, with `|x|²|y|² sin²∠`
/// computed as the Gram determinant `|x|²|y|² − ⟨x,y⟩²`.
pub fn discriminant_angle_form(x: &[f64], y: &[f64]) -> f64 {
    let (xx, yy, b) = (norm2(x), norm2(y), dot(x, y));
    -(xx * yy - b * b) + (1.0 - xx) * (1.0 - yy)
}

/// `Q(x, y, τ) = (τ − ⟨x,y⟩)² − D(x, y)`.
pub fn q_of(x: &[f64], y: &[f64], tau: f64) -> f64 {
    let b = dot(x, y);
    (tau - b).powi(2) - discriminant_d(x, y)
}

/// `R(x, y, τ) = τ² − ⟨x,y⟩^{-1}(|x|²+|y|²)τ + 1`, whose roots are `τ±`.
pub fn r_of(x: &[f64], y: &[f64], tau: f64) -> f64 {
    tau * tau - (norm2(x) + norm2(y)) / dot(x, y) * tau + 1.0
}

/// `∂_s P = −Q(x, y, cos s)/(2 sin² s)`.
pub fn dp_ds(x: &[f64], y: &[f64], s: f64) -> Result<f64> {
    check_dims(x, y)?;
    check_time(s)?;
    let sn = s.sin();
    Ok(-q_of(x, y, s.cos()) / (2.0 * sn * sn))
}

/// `∂_s² P`: the factored form `−⟨x,y⟩(cos S_c − cos s)(τ⁺ − cos s)/sin³ s`
/// when `⟨x,y⟩ ≠ 0`, else `(cos s − ⟨x,y⟩)/sin s + Q(cos s) cos s/sin³ s`.
pub fn d2p_ds2(x: &[f64], y: &[f64], s: f64) -> Result<f64> {
    check_dims(x, y)?;
    check_time(s)?;
    let (c, sn) = (s.cos(), s.sin());
    let b = dot(x, y);
    if b != 0.0 && x != y {
        let (tp, tm) = tau_pm(x, y)?;
        Ok(-b * (tm - c) * (tp - c) / sn.powi(3))
    } else {
        Ok((c - b) / sn + q_of(x, y, c) * c / sn.powi(3))
    }
}

/// Roots of `R(x, y, ·)` in descending order.
pub fn tau_pm(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_dims(x, y)?;
    let b = dot(x, y);
    if b == 0.0 {
        return Err(Error::Domain("⟨x, y⟩ = 0: R has no finite roots".into()));
    }
    let sum = norm2(x) + norm2(y);
    let pm = dist(x, y, 1.0) * dist(x, y, -1.0);
    // the larger-magnitude root first, the other from τ⁺τ⁻ = 1
    let big = (sum + pm) / (2.0 * b);
    let small = 2.0 * b / (sum + pm);
    Ok(if big >= small { (big, small) } else { (small, big) })
}

/// `1 − cos S_c = 2|x−y|/(|x+y| + |x−y|)`.
pub fn one_minus_cos_sc(x: &[f64], y: &[f64]) -> f64 {
    let (dp, dm) = (dist(x, y, 1.0), dist(x, y, -1.0));
    2.0 * dm / (dp + dm)
}

/// `S_c = arccos τ⁻ ∈ (0, π/2)`, through `1 − cos S_c` to avoid cancellation.
pub fn s_c(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    let b = dot(x, y);
    if !(b > 0.0) {
        return Err(Error::Domain(format!("S_c needs ⟨x, y⟩ > 0, got {b}")));
    }
    let omc = one_minus_cos_sc(x, y);
    if !(omc > 0.0 && omc < 1.0) {
        return Err(Error::Domain(format!("cos S_c = {} outside (0, 1)", 1.0 - omc)));
    }
    Ok(2.0 * (0.5 * omc).sqrt().asin())
}

/// `(∂_x S_c, ∂_y S_c)` with `∂_x S_c = 𝔊(2x − 𝔄y)`, `𝔄 = (|x|²+|y|²)/⟨x,y⟩`,
/// `𝔊 = cos S_c/(sin S_c |x+y||x−y|)`.
pub fn grad_sc(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let sc = s_c(x, y)?;
    let pm = dist(x, y, 1.0) * dist(x, y, -1.0);
    if pm == 0.0 {
        return Err(Error::Domain("x = ±y: S_c is not differentiable".into()));
    }
    let a = (norm2(x) + norm2(y)) / dot(x, y);
    let g = sc.cos() / (sc.sin() * pm);
    let gx = x.iter().zip(y).map(|(xi, yi)| g * (2.0 * xi - a * yi)).collect();
    let gy = x.iter().zip(y).map(|(xi, yi)| g * (2.0 * yi - a * xi)).collect();
    Ok((gx, gy))
}

/// `(x, y, s)` with its cached geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
    pub discriminant: f64,
    pub q_at_s: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    /// `None` outside the regime `⟨x,y⟩ > 0`, `x ≠ y`.
    pub s_c: Option<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: f64) -> Result<Self> {
        check_dims(&x, &y)?;
        if !(s > 0.0 && s < PI) {
            return Err(Error::Domain(format!("s = {s} outside (0, π)")));
        }
        let (tau_plus, tau_minus) = tau_pm(&x, &y)?;
        Ok(Self {
            discriminant: discriminant_d(&x, &y),
            q_at_s: q_of(&x, &y, s.cos()),
            tau_plus,
            tau_minus,
            s_c: s_c(&x, &y).ok(),
            x,
            y,
            s,
        })
    }
}

/// A pair on two shells: `1 − |x| ∈ [μ, 2μ]`, `1 − |y| ∈ [μ̃, 2μ̃]`, `⟨x,y⟩ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: f64,
    pub mu_tilde: f64,
}

impl AdmissiblePair {
    pub fn new(x: Vec<f64>, y: Vec<f64>, mu: f64, mu_tilde: f64) -> Result<Self> {
        check_dims(&x, &y)?;
        let gap_x = 1.0 - norm2(&x).sqrt();
        let gap_y = 1.0 - norm2(&y).sqrt();
        let slack = 1e-12;
        if !(gap_x >= mu - slack && gap_x <= 2.0 * mu + slack) {
            return Err(Error::Domain(format!("1 − |x| = {gap_x} not in [μ, 2μ] with μ = {mu}")));
        }
        if !(gap_y >= mu_tilde - slack && gap_y <= 2.0 * mu_tilde + slack) {
            return Err(Error::Domain(format!("1 − |y| = {gap_y} not in [μ̃, 2μ̃] with μ̃ = {mu_tilde}")));
        }
        if !(dot(&x, &y) > 0.0) {
            return Err(Error::Domain("⟨x, y⟩ must be positive".into()));
        }
        Ok(Self { x, y, mu, mu_tilde })
    }

    /// Random pair on the shells with the angle drawn below `max_angle`.
    pub fn sample(rng: &mut ChaCha8Rng, d: usize, mu: f64, mu_tilde: f64, max_angle: f64) -> Self {
        let dir = random_unit(rng, d);
        let r = 1.0 - mu * (1.0 + rng.random::<f64>());
        let rho = 1.0 - mu_tilde * (1.0 + rng.random::<f64>());
        // a unit vector orthogonal to `dir`
        let mut perp = random_unit(rng, d);
        if d == 1 {
            perp = vec![0.0];
        } else {
            let c = dot(&perp, &dir);
            for (p, u) in perp.iter_mut().zip(&dir) {
                *p -= c * u;
            }
            let n = norm2(&perp).sqrt();
            perp.iter_mut().for_each(|p| *p /= n);
        }
        let theta = if d == 1 { 0.0 } else { max_angle * rng.random::<f64>() };
        let x: Vec<f64> = dir.iter().map(|u| r * u).collect();
        let y: Vec<f64> = dir
            .iter()
            .zip(&perp)
            .map(|(u, p)| rho * (theta.cos() * u + theta.sin() * p))
            .collect();
        Self { x, y, mu, mu_tilde }
    }
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v).sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// A Haar-random orthogonal matrix (QR of a Gaussian matrix, signs fixed).
pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub fn rotate(u: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|i| (0..x.len()).map(|j| u[(i, j)] * x[j]).sum()).collect()
}

/// Central difference of `f` at `t` with one Richardson level.
pub fn richardson_first(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    (4.0 * d(h) - d(2.0 * h)) / 3.0
}

/// Central second difference of `f` at `t` with one Richardson level.
pub fn richardson_second(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let f0 = f(t);
    let d = |h: f64| (f(t + h) - 2.0 * f0 + f(t - h)) / (h * h);
    (4.0 * d(h) - d(2.0 * h)) / 3.0
}

/// `det 𝔐` and the determinant of its `(1,1)` minor, where
/// `𝔐 = −sin S_c^l · ∂_x∂_yᵀ Φ_s`, `Φ_s(x, y) = P(x, y, S_c(x, y) + l_scale·s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianDets {
    pub det_full: f64,
    pub det_minor: f64,
}

pub fn mixed_hessian_dets(x: &[f64], y: &[f64], s: f64, l_scale: f64) -> Result<HessianDets> {
    check_dims(x, y)?;
    let d = x.len();
    if !(0.25..=1.0).contains(&s.abs()) {
        return Err(Error::Domain(format!("s = {s} outside 1/4 ≤ |s| ≤ 1")));
    }
    if !(l_scale > 0.0 && l_scale <= 1.0) {
        return Err(Error::Domain(format!("l_scale = {l_scale} outside (0, 1]")));
    }
    let sc = s_c(x, y)?;
    let sl = sc + l_scale * s;
    if !(sl > 0.0 && sl < PI) {
        return Err(Error::Domain(format!("S_c^l = {sl} outside (0, π)")));
    }
    let phi = |xv: &[f64], yv: &[f64]| -> Result<f64> {
        let t = s_c(xv, yv)? + l_scale * s;
        phase_p(xv, yv, t)
    };
    let scale = dist(x, y, -1.0);
    let h = f64::EPSILON.powf(0.25) * scale;
    if !(h > 0.0) || h < 1e-12 * scale.max(1.0) {
        return Err(Error::Domain("finite-difference step underflows".into()));
    }
    let cross = |i: usize, j: usize, h: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let mut xv = x.to_vec();
            let mut yv = y.to_vec();
            xv[i] += si * h;
            yv[j] += sj * h;
            acc += w * phi(&xv, &yv)?;
        }
        Ok(acc / (4.0 * h * h))
    };
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v = (4.0 * cross(i, j, h)? - cross(i, j, 2.0 * h)?) / 3.0;
            m[(i, j)] = -sl.sin() * v;
        }
    }
    let det_full = m.determinant();
    let det_minor = if d == 1 { 1.0 } else { m.view((1, 1), (d - 1, d - 1)).into_owned().determinant() };
    Ok(HessianDets { det_full, det_minor })
}

/// The aligned configuration `x = (r, 0, …)`, `y = (ρ, h, 0, …)` with
/// `r = 1 − 1.5μ`, `ρ = 1 − 1.5μ̃` and `h` chosen so that `D(x, y) = 0`.
pub fn aligned_pair(d: usize, mu: f64, mu_tilde: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if d < 2 {
        return Err(Error::Input("the aligned pair needs d ≥ 2".into()));
    }
    let r = 1.0 - 1.5 * mu;
    let rho = 1.0 - 1.5 * mu_tilde;
    let h = ((1.0 - r * r) * (1.0 - rho * rho)).sqrt();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    x[0] = r;
    y[0] = rho;
    y[1] = h;
    Ok((x, y))
}

/// A jittered copy of [`aligned_pair`] with a time `s`: shell gaps
/// `1.5μ(1 ± 10%)`, the transverse height by `±1%`, a random rotation
/// fixing `e₁` (it leaves the `(1,1)` minor of the mixed Hessian
/// unchanged) and `s` drawn from `±[1/4, 1]`.
pub fn perturbed_aligned_pair(
    rng: &mut ChaCha8Rng,
    d: usize,
    mu: f64,
    mu_tilde: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if d < 2 {
        return Err(Error::Input("the aligned pair needs d ≥ 2".into()));
    }
    let mut jitter = |width: f64| 1.0 + width * (rng.random::<f64>() - 0.5);
    let r = 1.0 - 1.5 * mu * jitter(0.2);
    let rho = 1.0 - 1.5 * mu_tilde * jitter(0.2);
    let h = ((1.0 - r * r) * (1.0 - rho * rho)).sqrt() * jitter(0.02);
    let tail = random_rotation(rng, d - 1);
    let mut u = DMatrix::<f64>::identity(d, d);
    u.view_mut((1, 1), (d - 1, d - 1)).copy_from(&tail);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    x[0] = r;
    y[0] = rho;
    y[1] = h;
    let s = (0.25 + 0.75 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    Ok((rotate(&u, &x), rotate(&u, &y), s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn phase_at_quarter_period() {
        let x = [0.3, -0.2];
        let y = [0.1, 0.5];
        let p = phase_p(&x, &y, PI / 2.0).unwrap();
        assert_relative_eq!(p, PI / 4.0 - dot(&x, &y), epsilon = 1e-15);
    }

    #[test]
    fn q_at_inner_product_is_minus_d() {
        let x = [0.3, 0.7, -0.1];
        let y = [0.2, 0.6, 0.0];
        assert_relative_eq!(q_of(&x, &y, dot(&x, &y)), -discriminant_d(&x, &y), epsilon = 1e-16);
    }

    #[test]
    fn discriminant_vanishes_on_unit_diagonal() {
        let x = [0.6, 0.8];
        assert!(discriminant_d(&x, &x).abs() < 1e-15);
    }

    #[test]
    fn tau_vieta() {
        let x = [0.9, 0.1, 0.0];
        let y = [0.85, 0.2, 0.05];
        let (tp, tm) = tau_pm(&x, &y).unwrap();
        assert!((tp * tm - 1.0).abs() < 1e-14);
        assert_relative_eq!(tp + tm, (norm2(&x) + norm2(&y)) / dot(&x, &y), max_relative = 1e-14);
        assert!(r_of(&x, &y, tp).abs() < 1e-12 && r_of(&x, &y, tm).abs() < 1e-12);
        assert!(matches!(tau_pm(&[1.0, 0.0], &[0.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn inflection_at_sc() {
        let x = [0.9, 0.1, 0.0];
        let y = [0.85, 0.2, 0.05];
        let sc = s_c(&x, &y).unwrap();
        assert!(d2p_ds2(&x, &y, sc).unwrap().abs() < 1e-12);
        let sc2 = s_c(&y, &x).unwrap();
        assert_eq!(sc, sc2);
    }

    #[test]
    fn sc_outside_regime() {
        assert!(s_c(&[0.5, 0.0], &[-0.5, 0.1]).is_err());
        assert!(s_c(&[0.5, 0.0], &[0.5, 0.0]).is_err());
        assert!(grad_sc(&[0.5, 0.0], &[0.5, 0.0]).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let x = [0.9, 0.1, 0.0];
        let y = [0.85, 0.2, 0.05];
        let (gx, gy) = grad_sc(&x, &y).unwrap();
        let h = 1e-3 * dist(&x, &y, -1.0);
        for i in 0..3 {
            let fx = |t: f64| {
                let mut v = x.to_vec();
                v[i] = t;
                s_c(&v, &y).unwrap()
            };
            let fy = |t: f64| {
                let mut v = y.to_vec();
                v[i] = t;
                s_c(&x, &v).unwrap()
            };
            assert!((richardson_first(fx, x[i], h) - gx[i]).abs() < 1e-7 * gx[i].abs().max(1.0));
            assert!((richardson_first(fy, y[i], h) - gy[i]).abs() < 1e-7 * gy[i].abs().max(1.0));
        }
    }

    #[test]
    fn aligned_pair_has_zero_discriminant() {
        let (x, y) = aligned_pair(3, 1.0 / 16.0, 1.0 / 256.0).unwrap();
        assert!(discriminant_d(&x, &y).abs() < 1e-15);
        AdmissiblePair::new(x, y, 1.0 / 16.0, 1.0 / 256.0).unwrap();
    }

    #[test]
    fn sampler_respects_shells() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = AdmissiblePair::sample(&mut rng, 3, 1.0 / 64.0, 1.0 / 256.0, 0.3);
            AdmissiblePair::new(p.x, p.y, p.mu, p.mu_tilde).unwrap();
        }
    }

    #[test]
    fn perturbed_pairs_stay_on_shells() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (x, y, s) = perturbed_aligned_pair(&mut rng, 3, 1.0 / 16.0, 1.0 / 256.0).unwrap();
            assert!((0.25..=1.0).contains(&s.abs()));
            assert!(x[1] == 0.0 || x[1].abs() < 1e-15);
            AdmissiblePair::new(x, y, 1.0 / 16.0, 1.0 / 256.0).unwrap();
        }
    }

    #[test]
    fn hessian_dets_reject_bad_time() {
        let (x, y) = aligned_pair(3, 1.0 / 16.0, 1.0 / 256.0).unwrap();
        assert!(mixed_hessian_dets(&x, &y, 0.1, 0.01).is_err());
        assert!(mixed_hessian_dets(&x, &y, 0.5, 0.0).is_err());
    }
}
