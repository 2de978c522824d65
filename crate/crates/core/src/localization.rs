//! Shells around the unit sphere, the weights `w_±`, and spherical product
//! grids resolving eigenfunctions of level `λ` at unit scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::level_degree;
use crate::quadrature::{gauss_legendre, PanelRule};

/// Default cap on grid points.
pub const DEFAULT_BUDGET: usize = 1 << 22;

/// Nodes per local wavelength used when none is given: enough for Gram
/// entries to 1e-6 at `d ≤ 2`; at `d = 3` the cost forces a coarser rule
/// that still resolves `L³` norms to 1e-4.
pub fn default_resolution(d: usize) -> f64 {
    if d >= 3 {
        6.0
    } else {
        8.0
    }
}
const RADIAL_PANEL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnulusKind {
    /// `1 − |u| ∈ [μ, 2μ]`
    Plus,
    /// `|u| − 1 ∈ [μ, 2μ]`
    Minus,
    /// `|1 − |u|| ≤ 2μ`
    Ring,
    /// `|u| ≥ 1 − μ`
    Exterior,
}

/// A shell at unit scale, or its `√λ`-dilate when `lambda` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub kind: AnnulusKind,
    pub mu: f64,
    pub lambda: Option<u32>,
}

/// Whether `μ = 2^{-n}` for some `n ≥ 0`.
pub fn is_dyadic(mu: f64) -> bool {
    mu > 0.0 && mu <= 1.0 && mu.log2().fract() == 0.0
}

impl AnnulusSpec {
    pub fn new(kind: AnnulusKind, mu: f64, lambda: Option<u32>) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Input(format!("μ = {mu} must lie in (0, 1]")));
        }
        if matches!(kind, AnnulusKind::Plus | AnnulusKind::Minus) && !is_dyadic(mu) {
            return Err(Error::Input(format!("μ = {mu} must be a power of 1/2")));
        }
        if lambda == Some(0) {
            return Err(Error::Input("λ must be positive".into()));
        }
        Ok(Self { kind, mu, lambda })
    }

    pub fn plus(mu: f64) -> Result<Self> {
        Self::new(AnnulusKind::Plus, mu, None)
    }

    /// Whether the unit-scale radius `r` lies in the set.
    pub fn contains_radius(&self, r: f64) -> bool {
        let mu = self.mu;
        match self.kind {
            AnnulusKind::Plus => (mu..=2.0 * mu).contains(&(1.0 - r)),
            AnnulusKind::Minus => (mu..=2.0 * mu).contains(&(r - 1.0)),
            AnnulusKind::Ring => (1.0 - r).abs() <= 2.0 * mu,
            AnnulusKind::Exterior => r >= 1.0 - mu,
        }
    }

    /// Unit-scale radial extent; `outer_cap` bounds the exterior set.
    pub fn radial_interval(&self, outer_cap: f64) -> (f64, f64) {
        let mu = self.mu;
        match self.kind {
            AnnulusKind::Plus => (1.0 - 2.0 * mu, 1.0 - mu),
            AnnulusKind::Minus => (1.0 + mu, 1.0 + 2.0 * mu),
            AnnulusKind::Ring => ((1.0 - 2.0 * mu).max(0.0), 1.0 + 2.0 * mu),
            AnnulusKind::Exterior => (1.0 - mu, outer_cap.max(1.0 - mu)),
        }
    }
}

/// Exact membership, in the coordinates the annulus is given in (unit or `√λ` scale).
pub fn annulus_contains(spec: &AnnulusSpec, x: &[f64]) -> bool {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = match spec.lambda {
        Some(l) => r / (l as f64).sqrt(),
        None => r,
    };
    spec.contains_radius(r)
}

/// A region at unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { radius: f64 },
    Shell(AnnulusSpec),
}

impl Region {
    pub fn radial_interval(&self) -> (f64, f64) {
        match self {
            Region::Ball { radius } => (0.0, *radius),
            Region::Shell(s) => s.radial_interval(2.0),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Region::Ball { radius } => r <= *radius,
            Region::Shell(s) => s.contains_radius(r),
        }
    }

    /// Analytic volume.
    pub fn volume(&self, d: usize) -> f64 {
        let (a, b) = self.radial_interval();
        let unit = match d {
            1 => 2.0,
            2 => PI,
            3 => 4.0 * PI / 3.0,
            _ => {
                let h = d as f64 / 2.0;
                PI.powf(h) / gamma_half_int(d + 2)
            }
        };
        unit * (b.powi(d as i32) - a.powi(d as i32))
    }
}

/// `Γ(n/2)` for integer `n ≥ 1`.
fn gamma_half_int(n: usize) -> f64 {
    if n == 1 {
        PI.sqrt()
    } else if n == 2 {
        1.0
    } else {
        (n as f64 / 2.0 - 1.0) * gamma_half_int(n - 2)
    }
}

/// `w_±(x) = 1 + λ^{-1/3}(λ − |x|²)_±`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub lambda: f64,
    /// `+1` for the positive part, `−1` for the negative part.
    pub sign: i8,
    pub exponent: f64,
}

pub fn weight_w(spec: &WeightSpec, x: &[f64]) -> f64 {
    let gap = spec.lambda - x.iter().map(|v| v * v).sum::<f64>();
    let part = if spec.sign >= 0 { gap.max(0.0) } else { (-gap).max(0.0) };
    1.0 + spec.lambda.powf(-1.0 / 3.0) * part
}

impl WeightSpec {
    /// `w_±(x)^exponent`
    pub fn powered(&self, x: &[f64]) -> f64 {
        weight_w(self, x).powf(self.exponent)
    }
}

/// Quadrature nodes (row-major `n × d`) and positive weights at unit scale.
///
/// Points come in `2^d` reflected copies of `orbit` positive-orthant
/// points: point `σ·orbit + i` is point `i` with the coordinates in the bit
/// set `σ` negated, and carries the same weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub region: Region,
    pub lambda: u32,
    pub resolution: f64,
    pub orbit: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    /// The same rule in unscaled coordinates `x = √λ u`.
    pub fn scaled(&self) -> Grid {
        let s = (self.lambda as f64).sqrt();
        Grid {
            points: self.points.iter().map(|v| v * s).collect(),
            weights: self.weights.iter().map(|w| w * s.powi(self.d as i32)).collect(),
            ..self.clone()
        }
    }

    /// CSV with columns `x1..xd, weight`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header: Vec<String> = (1..=self.d).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.point(i).iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(format!("{:.17e}", self.weights[i]));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Local radial wavenumber of level-`λ` eigenfunctions at unit scale, with
/// an Airy-scale floor `λ^{2/3}` that also covers the forbidden region.
fn local_wavenumber(lambda: f64, r: f64) -> f64 {
    lambda * (1.0 - r * r).max(0.0).sqrt() + lambda.powf(2.0 / 3.0)
}

/// Radial Gauss–Legendre panels on `[r0, r1]` with equal increments of
/// accumulated phase and `resolution` nodes per local wavelength.
pub fn radial_rule(lambda: f64, r0: f64, r1: f64, resolution: f64) -> (Vec<f64>, Vec<f64>) {
    const SAMPLES: usize = 4000;
    let h = (r1 - r0) / SAMPLES as f64;
    let mut phase = vec![0.0; SAMPLES + 1];
    for i in 0..SAMPLES {
        let a = r0 + h * i as f64;
        phase[i + 1] = phase[i] + 0.5 * h * (local_wavenumber(lambda, a) + local_wavenumber(lambda, a + h));
    }
    let total = phase[SAMPLES];
    let nodes = (resolution * total / (2.0 * PI)).ceil().max(RADIAL_PANEL as f64) as usize;
    let panels = nodes.div_ceil(RADIAL_PANEL);
    // panel edges by inverse interpolation of the accumulated phase
    let mut edges = Vec::with_capacity(panels + 1);
    let mut idx = 0;
    for p in 0..=panels {
        let target = total * p as f64 / panels as f64;
        if p == panels {
            edges.push(r1);
            break;
        }
        while idx + 1 < SAMPLES && phase[idx + 1] < target {
            idx += 1;
        }
        let (p0, p1) = (phase[idx], phase[idx + 1]);
        let frac = if p1 > p0 { (target - p0) / (p1 - p0) } else { 0.0 };
        edges.push(r0 + h * (idx as f64 + frac.clamp(0.0, 1.0)));
    }
    edges[0] = r0;
    let rule = PanelRule::new(RADIAL_PANEL);
    let mut r = Vec::with_capacity(panels * RADIAL_PANEL);
    let mut w = Vec::with_capacity(panels * RADIAL_PANEL);
    for e in edges.windows(2) {
        let (xs, ws) = rule.composite(e[0], e[1], 1);
        r.extend(xs);
        w.extend(ws);
    }
    (r, w)
}

/// Directions with all coordinates positive, and weights, whose images
/// under the `2^d` coordinate reflections form a rule on `𝕊^{d−1}` exact for
/// spherical polynomials of degree ≤ `degree` (`d ≤ 3`). No node lies on a
/// coordinate plane, so the reflected copies are distinct.
pub fn orthant_rule(d: usize, degree: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // offset azimuths with a multiple of 4 nodes avoid both axes
    let n_az = (degree + 1).next_multiple_of(4);
    let azimuths = || (0..n_az / 4).map(move |j| 2.0 * PI * (j as f64 + 0.5) / n_az as f64);
    match d {
        1 => Ok((vec![1.0], vec![1.0])),
        2 => {
            let dirs = azimuths().flat_map(|t| [t.cos(), t.sin()]).collect();
            Ok((dirs, vec![2.0 * PI / n_az as f64; n_az / 4]))
        }
        3 => {
            // an even polar count keeps z = 0 out of the rule
            let n_pol = (degree + 2).div_ceil(2).next_multiple_of(2);
            let (z, wz) = gauss_legendre(n_pol);
            let mut dirs = Vec::new();
            let mut w = Vec::new();
            for (zi, wi) in z.iter().zip(&wz).filter(|(z, _)| **z > 0.0) {
                let s = (1.0 - zi * zi).sqrt();
                for t in azimuths() {
                    dirs.extend([s * t.cos(), s * t.sin(), *zi]);
                    w.push(wi * 2.0 * PI / n_az as f64);
                }
            }
            Ok((dirs, w))
        }
        _ => Err(Error::Input(format!("spherical grids support d ≤ 3, got d = {d}"))),
    }
}

/// Applies the reflection `σ` (bit `b` set: negate coordinate `b`).
pub fn reflect(sigma: usize, x: &[f64], out: &mut Vec<f64>) {
    out.extend(x.iter().enumerate().map(|(b, v)| if sigma >> b & 1 == 1 { -v } else { *v }));
}

/// The full rule on `𝕊^{d−1}`: all reflections of [`orthant_rule`].
pub fn sphere_rule(d: usize, degree: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (fd, fw) = orthant_rule(d, degree)?;
    let mut dirs = Vec::with_capacity(fd.len() << d);
    let mut w = Vec::with_capacity(fw.len() << d);
    for sigma in 0..1usize << d {
        for x in fd.chunks(d) {
            reflect(sigma, x, &mut dirs);
        }
        w.extend_from_slice(&fw);
    }
    Ok((dirs, w))
}

/// Angular exactness degree used at `resolution` for level degree `k`.
pub fn angular_degree(k: u32, resolution: f64) -> usize {
    ((resolution * k as f64 / 2.0).ceil() as usize).max(2)
}

/// Spherical product grid of `region` at unit scale for level `λ`.
pub fn build_grid(d: usize, lambda: u32, region: Region, resolution: f64, budget: usize) -> Result<Grid> {
    if !(resolution >= 2.0) {
        return Err(Error::Input(format!("resolution = {resolution} must be at least 2")));
    }
    let k = level_degree(d, lambda)?;
    let (r0, r1) = region.radial_interval();
    if !(r1 > r0) {
        return Err(Error::Input("empty radial interval".into()));
    }
    let (rs, wr) = radial_rule(lambda as f64, r0, r1, resolution);
    let (dirs, wa) = orthant_rule(d, angular_degree(k, resolution))?;
    let orbit = rs.len() * wa.len();
    let n = orbit << d;
    if n > budget {
        return Err(Error::Resource(format!("grid needs {n} points, budget is {budget}")));
    }
    let mut fund = Vec::with_capacity(orbit * d);
    let mut fund_w = Vec::with_capacity(orbit);
    for (r, w) in rs.iter().zip(&wr) {
        let jac = r.powi(d as i32 - 1);
        for (a, dir) in wa.iter().zip(dirs.chunks(d)) {
            fund.extend(dir.iter().map(|c| c * r));
            fund_w.push(w * jac * a);
        }
    }
    let mut points = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    for sigma in 0..1usize << d {
        for x in fund.chunks(d) {
            reflect(sigma, x, &mut points);
        }
        weights.extend_from_slice(&fund_w);
    }
    Ok(Grid { d, points, weights, region, lambda, resolution, orbit })
}

/// Shell grid for an annulus spec.
pub fn build_annulus_grid(d: usize, lambda: u32, spec: &AnnulusSpec, resolution: f64, budget: usize) -> Result<Grid> {
    build_grid(d, lambda, Region::Shell(*spec), resolution, budget)
}

/// Pointwise product with the indicator of `spec` (grid at unit scale).
pub fn indicator_times(grid: &Grid, values: &[f64], spec: &AnnulusSpec) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(Error::Input(format!("{} values on a grid of {} points", values.len(), grid.len())));
    }
    let unit = AnnulusSpec { lambda: None, ..*spec };
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &v)| if annulus_contains(&unit, grid.point(i)) { v } else { 0.0 })
        .collect())
}
