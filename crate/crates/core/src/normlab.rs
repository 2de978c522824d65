//! Finite-rank discretizations of localized projections and mixed-norm
//! operator estimates.
//!
//! Operators are built at unit scale: `B` holds the unit-normalized basis
//! `λ^{d/4} Φ_α(√λ u)`, so `P = B_out B_inᵀ W_in` is the dilated orthogonal
//! projection and `𝔓_λ = λ^{-d/2} P` has the kernel `Π_λ(√λ u, √λ v)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{enumerate_level, hermite_row, level_degree, EigenLevel};
use crate::localization::{build_grid, Grid, Region};

/// Above this many basis entries, factors are regenerated chunk by chunk.
pub const DENSE_ENTRY_LIMIT: usize = 1 << 27;
const CHUNK: usize = 8192;

/// Samples on a grid, paired with its weights.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub grid: Arc<Grid>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, grid: Arc<Grid>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!("{} values on a grid of {} points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("grid function has non-finite samples".into()));
        }
        Ok(Self { values, grid })
    }

    /// `(Σ w_i |f_i|^p)^{1/p}`
    pub fn norm(&self, p: f64) -> f64 {
        weighted_norm(&self.values, &self.grid.weights, p)
    }

    /// `Σ w_i f_i g_i`
    pub fn pairing(&self, other: &GridFunction) -> f64 {
        pairing(&self.values, &other.values, &self.grid.weights)
    }
}

/// Overflow-safe weighted `p`-norm.
pub fn weighted_norm(f: &[f64], w: &[f64], p: f64) -> f64 {
    let m = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = f.iter().zip(w).map(|(v, w)| w * pow_abs(v / m, p)).sum();
    m * s.powf(1.0 / p)
}

fn pairing(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(g).zip(w).map(|((a, b), w)| w * a * b).sum()
}

/// Norming element of `g` in `L^q(w)`: `|g|^{q−1} sgn(g) / ‖g‖_q^{q−1}`, so
/// that `Σ w u g = ‖g‖_q` and `‖u‖_{q'} = 1`.
pub fn dual_q(g: &GridFunction, q: f64) -> Result<GridFunction> {
    let values = dual_values(&g.values, &g.grid.weights, q)?;
    Ok(GridFunction { values, grid: Arc::clone(&g.grid) })
}

fn dual_values(g: &[f64], w: &[f64], q: f64) -> Result<Vec<f64>> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Input(format!("dual exponent q = {q} must lie in (1, ∞)")));
    }
    let n = weighted_norm(g, w, q);
    if n == 0.0 {
        return Err(Error::Degenerate("cannot norm the zero function".into()));
    }
    Ok(g.iter().map(|v| pow_abs(v / n, q - 1.0) * v.signum()).collect())
}

/// `q' = q/(q − 1)`
pub fn conjugate(q: f64) -> f64 {
    q / (q - 1.0)
}

/// Evaluates the unit-normalized level basis at unit-scale points.
#[derive(Debug, Clone)]
pub struct LevelBasis {
    pub level: EigenLevel,
    /// Exponents per basis function, flattened `rank × d`.
    alphas: Vec<usize>,
}

impl LevelBasis {
    pub fn new(d: usize, lambda: u32) -> Result<Self> {
        let level = EigenLevel::new(d, lambda)?;
        let alphas = enumerate_level(d, lambda)?
            .into_iter()
            .flat_map(|a| a.0.into_iter().map(|e| e as usize))
            .collect();
        Ok(Self { level, alphas })
    }

    pub fn rank(&self) -> usize {
        self.level.dim
    }

    /// Writes `λ^{d/4} Φ_α(√λ u)` for every `α` into `out`.
    pub fn fill(&self, u: &[f64], tables: &mut [f64], out: &mut [f64]) {
        let d = self.level.d;
        let k = self.level.k as usize;
        let lam = self.level.lambda as f64;
        let sl = lam.sqrt();
        for (i, &ui) in u.iter().enumerate() {
            hermite_row(k, sl * ui, &mut tables[i * (k + 1)..(i + 1) * (k + 1)]);
        }
        let norm = lam.powf(d as f64 / 4.0);
        for (o, a) in out.iter_mut().zip(self.alphas.chunks(d)) {
            let mut v = norm;
            for (i, &e) in a.iter().enumerate() {
                v *= tables[i * (k + 1) + e];
            }
            *o = v;
        }
    }

    /// The `rank × m` block of basis values for points `start..start + m`.
    fn block(&self, grid: &Grid, start: usize, m: usize) -> DMatrix<f64> {
        let r = self.rank();
        let d = self.level.d;
        let k = self.level.k as usize;
        let mut mat = DMatrix::<f64>::zeros(r, m);
        mat.as_mut_slice().par_chunks_mut(r).enumerate().for_each_init(
            || vec![0.0; d * (k + 1)],
            |tables, (j, col)| self.fill(grid.point(start + j), tables, col),
        );
        mat
    }

    /// Basis indices grouped by parity class `c = Σ_b (α_b mod 2)·2^b`:
    /// `Φ_α(σx) = (−1)^{|c ∧ σ|} Φ_α(x)` for the reflection `σ`.
    fn parity_classes(&self) -> Vec<Vec<usize>> {
        let d = self.level.d;
        let mut classes = vec![Vec::new(); 1 << d];
        for (a, alpha) in self.alphas.chunks(d).enumerate() {
            let c = alpha.iter().enumerate().fold(0, |c, (b, &e)| c | (e % 2) << b);
            classes[c].push(a);
        }
        classes
    }
}

/// In-place unnormalized Walsh–Hadamard transform across the class (or
/// reflection) index: `out[σ] = Σ_c (−1)^{|c ∧ σ|} in[c]`. The transform is
/// symmetric, so the same map carries classes to reflections and back.
fn hadamard(blocks: &mut [DMatrix<f64>]) {
    let n = blocks.len();
    let mut h = 1;
    while h < n {
        for i in 0..n {
            if i & h == 0 {
                let (lo, hi) = blocks.split_at_mut(i + h);
                let (a, b) = (&mut lo[i], &mut hi[0]);
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = u + v;
                    *y = u - v;
                }
            }
        }
        h <<= 1;
    }
}

/// The basis sampled on the positive-orthant points of a reflection-symmetric
/// grid, split by parity class and either stored or regenerated on demand.
/// The other `2^d − 1` reflected copies follow from parity, and the classes
/// decouple, so every product costs one orbit's worth of work.
#[derive(Debug, Clone)]
pub struct Factor {
    pub grid: Arc<Grid>,
    basis: Arc<LevelBasis>,
    classes: Arc<Vec<Vec<usize>>>,
    /// Per class, `rank_c × orbit` values.
    dense: Option<Arc<Vec<DMatrix<f64>>>>,
    /// Orbit points per regenerated block.
    chunk: usize,
}

impl Factor {
    pub fn new(grid: Arc<Grid>, basis: Arc<LevelBasis>) -> Self {
        assert_eq!(grid.orbit << grid.d, grid.len(), "grid is not a union of reflected orbits");
        let classes = Arc::new(basis.parity_classes());
        let mut f = Self { grid, basis, classes, dense: None, chunk: CHUNK };
        if f.grid.orbit * f.basis.rank() <= DENSE_ENTRY_LIMIT {
            f.dense = Some(Arc::new(f.assemble()));
        }
        f
    }

    pub fn is_streamed(&self) -> bool {
        self.dense.is_none()
    }

    fn copies(&self) -> usize {
        1 << self.grid.d
    }

    /// All class blocks over the orbit, filled chunk by chunk so the peak
    /// stays near one copy.
    fn assemble(&self) -> Vec<DMatrix<f64>> {
        let n = self.grid.orbit;
        let mut out: Vec<DMatrix<f64>> = self.classes.iter().map(|rows| DMatrix::zeros(rows.len(), n)).collect();
        let mut start = 0;
        while start < n {
            let m = CHUNK.min(n - start);
            for (o, b) in out.iter_mut().zip(self.class_blocks(start, m)) {
                o.columns_mut(start, m).copy_from(&b);
            }
            start += m;
        }
        out
    }

    fn class_blocks(&self, start: usize, m: usize) -> Vec<DMatrix<f64>> {
        let b = self.basis.block(&self.grid, start, m);
        self.classes.iter().map(|rows| b.select_rows(rows.iter())).collect()
    }

    /// Visits `(first orbit index, per-class blocks)` in a fixed order.
    fn for_each_block(&self, mut f: impl FnMut(usize, &[DMatrix<f64>])) {
        match &self.dense {
            Some(m) => f(0, m),
            None => {
                let n = self.grid.orbit;
                let mut start = 0;
                while start < n {
                    let m = self.chunk.min(n - start);
                    f(start, &self.class_blocks(start, m));
                    start += m;
                }
            }
        }
    }

    /// `Bᵀ X` for an `n × R` matrix `X` on the full grid.
    fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let r = x.ncols();
        let orbit = self.grid.orbit;
        let mut acc: Vec<DMatrix<f64>> = self.classes.iter().map(|rows| DMatrix::zeros(rows.len(), r)).collect();
        self.for_each_block(|s, blocks| {
            let m = blocks[0].ncols();
            let mut y: Vec<DMatrix<f64>> =
                (0..self.copies()).map(|sigma| x.rows(sigma * orbit + s, m).into_owned()).collect();
            hadamard(&mut y);
            for ((a, b), u) in acc.iter_mut().zip(blocks).zip(&y) {
                if b.nrows() > 0 {
                    *a += b * u;
                }
            }
        });
        let mut out = DMatrix::zeros(self.basis.rank(), r);
        for (rows, a) in self.classes.iter().zip(&acc) {
            for (i, &row) in rows.iter().enumerate() {
                out.row_mut(row).copy_from(&a.row(i));
            }
        }
        out
    }

    /// `B C` on the full grid for an `rank × R` matrix `C`.
    fn expand(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let r = c.ncols();
        let orbit = self.grid.orbit;
        let parts: Vec<DMatrix<f64>> = self.classes.iter().map(|rows| c.select_rows(rows.iter())).collect();
        let mut out = DMatrix::zeros(self.grid.len(), r);
        self.for_each_block(|s, blocks| {
            let m = blocks[0].ncols();
            let mut h: Vec<DMatrix<f64>> = blocks
                .iter()
                .zip(&parts)
                .map(|(b, p)| if b.nrows() > 0 { b.tr_mul(p) } else { DMatrix::zeros(m, r) })
                .collect();
            hadamard(&mut h);
            for (sigma, g) in h.iter().enumerate() {
                out.rows_mut(sigma * orbit + s, m).copy_from(g);
            }
        });
        out
    }

    /// `Bᵀ W B`, block diagonal over parity classes.
    pub fn gram(&self) -> DMatrix<f64> {
        let rank = self.basis.rank();
        let mut acc: Vec<DMatrix<f64>> = self.classes.iter().map(|rows| DMatrix::zeros(rows.len(), rows.len())).collect();
        let w = &self.grid.weights;
        self.for_each_block(|s, blocks| {
            for (a, b) in acc.iter_mut().zip(blocks) {
                let mut bw = b.clone();
                for (j, mut col) in bw.column_iter_mut().enumerate() {
                    col *= w[s + j];
                }
                *a += &bw * b.transpose();
            }
        });
        let copies = self.copies() as f64;
        let mut g = DMatrix::zeros(rank, rank);
        for (rows, a) in self.classes.iter().zip(&acc) {
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &rj) in rows.iter().enumerate() {
                    g[(ri, rj)] = copies * a[(i, j)];
                }
            }
        }
        g.symmetrize();
        g
    }

    /// All basis values on the full grid, `rank × n`.
    fn full_block(&self) -> DMatrix<f64> {
        self.basis.block(&self.grid, 0, self.grid.len())
    }
}

trait Symmetrize {
    fn symmetrize(&mut self);
}

impl Symmetrize for DMatrix<f64> {
    fn symmetrize(&mut self) {
        let n = self.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

/// `T = scale · B_out B_inᵀ W_in`, the discretized `χ_out 𝔓_λ χ_in`.
#[derive(Debug, Clone)]
pub struct LowRankOperator {
    pub lambda: u32,
    pub d: usize,
    pub rank: usize,
    /// `λ^{-d/2}`: kernel factor between the unit-normalized basis and `𝔓_λ`.
    pub scale: f64,
    pub out_factor: Factor,
    pub in_factor: Factor,
}

/// Builds the finite-rank discretization of `χ_out 𝔓_λ χ_in` on unit-scale grids.
pub fn assemble(lambda: u32, d: usize, in_region: Region, out_region: Region, resolution: f64, budget: usize) -> Result<LowRankOperator> {
    let basis = Arc::new(LevelBasis::new(d, lambda)?);
    let in_grid = Arc::new(build_grid(d, lambda, in_region, resolution, budget)?);
    let in_factor = Factor::new(Arc::clone(&in_grid), Arc::clone(&basis));
    let out_factor = if in_region == out_region {
        in_factor.clone()
    } else {
        Factor::new(Arc::new(build_grid(d, lambda, out_region, resolution, budget)?), Arc::clone(&basis))
    };
    Ok(LowRankOperator {
        lambda,
        d,
        rank: basis.rank(),
        scale: (lambda as f64).powf(-(d as f64) / 2.0),
        out_factor,
        in_factor,
    })
}

impl LowRankOperator {
    pub fn in_grid(&self) -> &Arc<Grid> {
        &self.in_factor.grid
    }

    pub fn out_grid(&self) -> &Arc<Grid> {
        &self.out_factor.grid
    }

    /// `χ_in 𝔓_λ χ_out`, the adjoint for the weighted pairings.
    pub fn adjoint(&self) -> LowRankOperator {
        LowRankOperator { out_factor: self.in_factor.clone(), in_factor: self.out_factor.clone(), ..self.clone() }
    }

    /// `T F` column-wise, `F` sampled on the input grid.
    pub fn apply_block(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut wf = f.clone();
        for (i, mut row) in wf.row_iter_mut().enumerate() {
            row *= self.in_factor.grid.weights[i];
        }
        self.out_factor.expand(&self.in_factor.project(&wf)) * self.scale
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !Arc::ptr_eq(&f.grid, &self.in_factor.grid) && *f.grid != *self.in_factor.grid {
            return Err(Error::Input("function lives on a different grid".into()));
        }
        let col = DMatrix::from_column_slice(f.values.len(), 1, &f.values);
        let out = self.apply_block(&col);
        Ok(GridFunction { values: out.as_slice().to_vec(), grid: Arc::clone(&self.out_factor.grid) })
    }

    /// Gram matrices `(B_inᵀ W_in B_in, B_outᵀ W_out B_out)`.
    pub fn grams(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let gi = self.in_factor.gram();
        let go = if Arc::ptr_eq(&self.in_factor.grid, &self.out_factor.grid) { gi.clone() } else { self.out_factor.gram() };
        (gi, go)
    }

    /// Largest singular value of `λ^{d/2} T` between the weighted `L²` spaces.
    pub fn top_singular_value(&self) -> f64 {
        let (gi, go) = self.grams();
        let hi = sqrt_psd(&gi);
        let m = &hi * go * &hi;
        top_eigenvalue(m).max(0.0).sqrt()
    }

    /// `‖P² − P‖` on the weighted `L²` space for `P = λ^{d/2} T` with
    /// identical grids.
    pub fn idempotence_defect(&self) -> Result<f64> {
        if *self.in_factor.grid != *self.out_factor.grid {
            return Err(Error::Input("idempotence needs equal input and output grids".into()));
        }
        let (g, _) = self.grams();
        let eig = SymmetricEigen::new(g);
        Ok(eig.eigenvalues.iter().map(|&e| (e * (e - 1.0)).abs()).fold(0.0, f64::max))
    }

    /// `(Σ_x w_x (Σ_y w_y |K(x, y)|^{p'})^{q/p'})^{1/q}`: a rigorous upper
    /// bound for `‖T‖_{p→q}` on the grids (Hölder in `y`, then `L^q` in `x`).
    /// Materializes the kernel row by row; meant for small operators.
    pub fn holder_bound(&self, p: f64, q: f64) -> f64 {
        let pc = conjugate(p);
        let bo = self.out_factor.full_block();
        let bi = self.in_factor.full_block();
        let wi = &self.in_factor.grid.weights;
        let row_norms: Vec<f64> = (0..bo.ncols())
            .map(|x| {
                let kx = bi.tr_mul(&bo.column(x)) * self.scale;
                weighted_norm(kx.as_slice(), wi, pc)
            })
            .collect();
        weighted_norm(&row_norms, &self.out_factor.grid.weights, q)
    }
}

fn top_eigenvalue(m: DMatrix<f64>) -> f64 {
    let mut m = m;
    m.symmetrize();
    SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn sqrt_psd(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(g.clone());
    let s = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// An operator-norm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub p: f64,
    pub q: f64,
    pub iterations: usize,
    /// Last relative change of the best restart.
    pub residual: f64,
    pub restarts_agreeing: usize,
    /// Whether every Rayleigh ratio sequence was non-decreasing.
    pub monotone: bool,
}

/// `‖χ_A Π_λ‖_{2→2}` from the top eigenvalue of `∫_A Φ_α Φ_β`.
pub fn norm_2_2_gram(lambda: u32, d: usize, region: Region, resolution: f64, budget: usize) -> Result<NormEstimate> {
    let basis = Arc::new(LevelBasis::new(d, lambda)?);
    let grid = Arc::new(build_grid(d, lambda, region, resolution, budget)?);
    let g = Factor::new(grid, basis).gram();
    Ok(NormEstimate {
        value: top_eigenvalue(g).max(0.0).sqrt(),
        p: 2.0,
        q: 2.0,
        iterations: 0,
        residual: 0.0,
        restarts_agreeing: 1,
        monotone: true,
    })
}

/// Settings of the mixed-norm power method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerSpec {
    fn default() -> Self {
        Self { restarts: 8, tol: 1e-6, max_iter: 500, seed: 0 }
    }
}

/// Relative slack allowed in the per-iteration monotonicity check.
const MONOTONE_SLACK: f64 = 1e-10;

/// Lower bound for `‖T‖_{p→q}` by the alternating dual-vector iteration
/// `f ↦ dual_{p'}(T* dual_q(T f))`, run from `restarts` random starts.
pub fn norm_p_q_power(op: &LowRankOperator, p: f64, q: f64, spec: &PowerSpec) -> Result<NormEstimate> {
    if !(p > 1.0 && p <= 2.0 && q >= 2.0 && q.is_finite()) {
        return Err(Error::Input(format!("need 1 < p ≤ 2 ≤ q < ∞, got p = {p}, q = {q}")));
    }
    if !(spec.tol > 0.0) || spec.restarts == 0 || spec.max_iter == 0 {
        return Err(Error::Input("power method needs tol > 0, restarts ≥ 1 and max_iter ≥ 1".into()));
    }
    if p == 2.0 {
        power_coefficient(op, q, spec)
    } else {
        power_grid(op, p, q, spec)
    }
}

fn gaussian_block(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        for v in out.column_mut(c).iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    out
}

/// Per-restart bookkeeping shared by both iteration routes.
struct Tracker {
    ratio: Vec<f64>,
    change: Vec<f64>,
    done: Vec<bool>,
    monotone: bool,
    iterations: usize,
}

impl Tracker {
    fn new(r: usize) -> Self {
        Self { ratio: vec![0.0; r], change: vec![f64::INFINITY; r], done: vec![false; r], monotone: true, iterations: 0 }
    }

    fn update(&mut self, c: usize, ratio: f64, tol: f64) {
        let old = self.ratio[c];
        if old > 0.0 && ratio < old * (1.0 - MONOTONE_SLACK) {
            self.monotone = false;
        }
        self.change[c] = if old > 0.0 { (ratio - old).abs() / ratio } else { f64::INFINITY };
        self.ratio[c] = ratio;
        if self.change[c] < tol {
            self.done[c] = true;
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.ratio.len()).filter(|&c| !self.done[c]).collect()
    }

    fn finish(&self, p: f64, q: f64, tol: f64) -> Result<NormEstimate> {
        let (best, &value) = self
            .ratio
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one restart");
        if !value.is_finite() {
            return Err(Error::Degenerate("operator produced a non-finite ratio".into()));
        }
        let residual = self.change[best];
        if !self.done[best] {
            return Err(Error::Accuracy { what: format!("power iteration for ({p}, {q})"), achieved: residual, best: value });
        }
        let restarts_agreeing = self.ratio.iter().filter(|&&r| r >= value * (1.0 - 2.0 * tol)).count();
        Ok(NormEstimate { value, p, q, iterations: self.iterations, residual, restarts_agreeing, monotone: self.monotone })
    }
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// `p = 2`: iterates stay in the range of `T*`, so `f = B_in c` is carried
/// by its coefficients and each step is one pass over the output grid.
fn power_coefficient(op: &LowRankOperator, q: f64, spec: &PowerSpec) -> Result<NormEstimate> {
    let r = op.rank;
    let (g_in, _) = op.grams();
    let out = &op.out_factor;
    let wo = &out.grid.weights[..];
    let mut c = gaussian_block(r, spec.restarts, spec.seed);
    let mut tr = Tracker::new(spec.restarts);
    for it in 0..spec.max_iter {
        let active = tr.active();
        if active.is_empty() {
            break;
        }
        tr.iterations = it + 1;
        let ra = active.len();
        let ca = select_columns(&c, &active);
        // ‖f‖₂ = √(cᵀ G c) and Bᵀ W_in f = G c
        let gc = &g_in * &ca;
        let fnorm: Vec<f64> = (0..ra).map(|j| ca.column(j).dot(&gc.column(j)).max(0.0).sqrt()).collect();
        let mut g = out.expand(&(gc * op.scale));
        let gnorm: Vec<f64> = g
            .column_iter()
            .map(|col| col.iter().zip(wo).map(|(v, w)| w * pow_abs(*v, q)).sum::<f64>().powf(1.0 / q))
            .collect();
        if gnorm.iter().any(|&g| g == 0.0 || !g.is_finite()) {
            return Err(Error::Degenerate("power iterate collapsed to zero".into()));
        }
        // W_out dual_q(T f), in place
        for (mut col, &n) in g.column_iter_mut().zip(&gnorm) {
            for (v, w) in col.iter_mut().zip(wo) {
                *v = w * pow_abs(*v / n, q - 1.0) * v.signum();
            }
        }
        for (j, &col) in active.iter().enumerate() {
            tr.update(col, gnorm[j] / fnorm[j], spec.tol);
        }
        // c' ∝ B_outᵀ W_out dual_q(T f), normalized so ‖B_in c'‖₂ = 1
        let mut next = out.project(&g);
        let gn = &g_in * &next;
        for j in 0..ra {
            let n = next.column(j).dot(&gn.column(j)).max(0.0).sqrt();
            if n == 0.0 {
                return Err(Error::Degenerate("adjoint iterate collapsed to zero".into()));
            }
            next.column_mut(j).scale_mut(1.0 / n);
        }
        for (j, &col) in active.iter().enumerate() {
            if !tr.done[col] {
                c.set_column(col, &next.column(j));
            }
        }
    }
    tr.finish(2.0, q, spec.tol)
}

/// `|v|^e`, exact multiplication for the small integer exponents in use.
fn pow_abs(v: f64, e: f64) -> f64 {
    let a = v.abs();
    if e == 1.0 {
        a
    } else if e == 2.0 {
        a * a
    } else if e == 3.0 {
        a * a * a
    } else {
        a.powf(e)
    }
}

/// General `p`: iterates live on the input grid.
fn power_grid(op: &LowRankOperator, p: f64, q: f64, spec: &PowerSpec) -> Result<NormEstimate> {
    let pc = conjugate(p);
    let wi = op.in_factor.grid.weights.clone();
    let wo = op.out_factor.grid.weights.clone();
    let adj = op.adjoint();
    let mut f = gaussian_block(wi.len(), spec.restarts, spec.seed);
    for mut col in f.column_iter_mut() {
        let n = weighted_norm(col.as_slice(), &wi, p);
        col.scale_mut(1.0 / n);
    }
    let mut tr = Tracker::new(spec.restarts);
    for it in 0..spec.max_iter {
        let active = tr.active();
        if active.is_empty() {
            break;
        }
        tr.iterations = it + 1;
        let fa = select_columns(&f, &active);
        let mut g = op.apply_block(&fa);
        for (j, &col) in active.iter().enumerate() {
            let fnorm = weighted_norm(fa.column(j).as_slice(), &wi, p);
            let gc = g.column(j);
            let gnorm = weighted_norm(gc.as_slice(), &wo, q);
            tr.update(col, gnorm / fnorm, spec.tol);
            let u = dual_values(gc.as_slice(), &wo, q)?;
            g.set_column(j, &DVector::from_vec(u));
        }
        let v = adj.apply_block(&g);
        for (j, &col) in active.iter().enumerate() {
            if tr.done[col] {
                continue;
            }
            let next = dual_values(v.column(j).as_slice(), &wi, pc)?;
            f.set_column(col, &DVector::from_vec(next));
        }
    }
    tr.finish(p, q, spec.tol)
}

/// `‖Π_λ‖_{p→q}` from `‖𝔓_λ‖_{p→q}` (unit-scale kernel `Π_λ(√λ u, √λ v)`).
pub fn unscaled_norm(value: f64, lambda: u32, d: usize, p: f64, q: f64) -> f64 {
    value * (lambda as f64).powf(-(d as f64) / 2.0 * (1.0 / p - 1.0 / q - 1.0))
}

/// Log-log least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
}

pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<ScalingFit> {
    if samples.len() < 3 {
        return Err(Error::Input(format!("need at least 3 samples, got {}", samples.len())));
    }
    if samples.iter().any(|&(t, v)| !(t > 0.0 && v > 0.0 && t.is_finite() && v.is_finite())) {
        return Err(Error::Input("samples must be positive and finite".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::Input("abscissas are degenerate".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(ScalingFit { samples: samples.to_vec(), slope, intercept, stderr, r_squared })
}

/// One line of a sweep data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub lambda: u32,
    pub mu: Option<f64>,
    pub mu_tilde: Option<f64>,
    pub p: f64,
    pub q: f64,
    pub norm: f64,
    pub residual: f64,
    pub restarts_agreeing: usize,
}

impl SweepRow {
    fn new(d: usize, lambda: u32, mu: Option<f64>, mu_tilde: Option<f64>, est: &NormEstimate, norm: f64) -> Self {
        Self { d, lambda, mu, mu_tilde, p: est.p, q: est.q, norm, residual: est.residual, restarts_agreeing: est.restarts_agreeing }
    }
}

/// Sweep rows with the fit of `norm` against the sweep parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub fit: ScalingFit,
    /// Notes on inputs outside the asymptotic regime.
    pub regime_notes: Vec<String>,
}

/// `‖χ⁺_{λ,μ} Π_λ‖_{2→2}` over `μ`, fitted against `μ`.
pub fn mu_sweep(lambda: u32, d: usize, mus: &[f64], resolution: f64, budget: usize) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(mus.len());
    for &mu in mus {
        let spec = crate::localization::AnnulusSpec::plus(mu)?;
        let est = norm_2_2_gram(lambda, d, Region::Shell(spec), resolution, budget)?;
        rows.push(SweepRow::new(d, lambda, Some(mu), None, &est, est.value));
    }
    let fit = fit_exponent(&rows.iter().map(|r| (r.mu.unwrap_or(1.0), r.norm)).collect::<Vec<_>>())?;
    let notes = regime_notes(lambda, mus);
    Ok(SweepResult { rows, fit, regime_notes: notes })
}

fn regime_notes(lambda: u32, mus: &[f64]) -> Vec<String> {
    let floor = (lambda as f64).powf(-2.0 / 3.0);
    mus.iter()
        .filter(|&&m| m < floor)
        .map(|m| format!("regime-relaxed: μ = {m} is below λ^(-2/3) = {floor:.4}"))
        .collect()
}

/// `‖Π_λ‖_{2→q}` on the unit-scale ball of radius 2, fitted against `λ`.
pub fn endpoint_sweep(d: usize, lambdas: &[u32], q: f64, resolution: f64, budget: usize, power: &PowerSpec) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(lambdas.len());
    let ball = Region::Ball { radius: 2.0 };
    for &lambda in lambdas {
        level_degree(d, lambda)?;
        let op = assemble(lambda, d, ball, ball, resolution, budget)?;
        let est = norm_p_q_power(&op, 2.0, q, power)?;
        rows.push(SweepRow::new(d, lambda, None, None, &est, unscaled_norm(est.value, lambda, d, 2.0, q)));
    }
    let fit = fit_exponent(&rows.iter().map(|r| (r.lambda as f64, r.norm)).collect::<Vec<_>>())?;
    Ok(SweepResult { rows, fit, regime_notes: Vec::new() })
}

/// `‖χ⁺_{λ,μ} 𝔓_λ χ⁺_{λ,μ̃}‖_{q'→q}` over `μ̃`, normalized by
/// `(μ μ̃)^{1/4 − (d+3)(1 − 2/q)/8}`, fitted against `μ̃/μ`.
pub fn asymmetry_profile(
    lambda: u32,
    d: usize,
    mu: f64,
    mu_tildes: &[f64],
    q: f64,
    resolution: f64,
    budget: usize,
    power: &PowerSpec,
) -> Result<SweepResult> {
    use crate::localization::AnnulusSpec;
    if d < 2 {
        return Err(Error::Input("asymmetry_profile needs d ≥ 2".into()));
    }
    let q_max = 2.0 * (d as f64 + 1.0) / (d as f64 - 1.0);
    if !(q > 2.0 && q <= q_max) {
        return Err(Error::Input(format!("q = {q} violates 2 < q ≤ 2(d+1)/(d−1) = {q_max}")));
    }
    if let Some(m) = mu_tildes.iter().find(|&&m| m > mu) {
        return Err(Error::Input(format!("μ̃ = {m} violates μ̃ ≤ μ = {mu}")));
    }
    let exponent = 0.25 - (d as f64 + 3.0) * (1.0 - 2.0 / q) / 8.0;
    let pc = conjugate(q);
    let out_region = Region::Shell(AnnulusSpec::plus(mu)?);
    let mut rows = Vec::with_capacity(mu_tildes.len());
    let mut samples = Vec::with_capacity(mu_tildes.len());
    for &mt in mu_tildes {
        let in_region = Region::Shell(AnnulusSpec::plus(mt)?);
        let op = assemble(lambda, d, in_region, out_region, resolution, budget)?;
        let est = norm_p_q_power(&op, pc, q, power)?;
        let ratio = est.value / (mu * mt).powf(exponent);
        rows.push(SweepRow::new(d, lambda, Some(mu), Some(mt), &est, est.value));
        samples.push((mt / mu, ratio));
    }
    let fit = fit_exponent(&samples)?;
    let mut all = vec![mu];
    all.extend_from_slice(mu_tildes);
    Ok(SweepResult { rows, fit, regime_notes: regime_notes(lambda, &all) })
}

/// `max_x |h_k(x)|`, located near the turning point `√(2k+1)`.
pub fn hermite_sup(k: u32) -> f64 {
    let kf = k as f64;
    let t = (2.0 * kf + 1.0).sqrt();
    let scale = kf.max(1.0).powf(-1.0 / 6.0);
    let mut buf = vec![0.0; k as usize + 1];
    let mut eval = |x: f64| {
        hermite_row(k as usize, x, &mut buf);
        buf[k as usize].abs()
    };
    // scan the last few oscillations before the turning point
    let (lo, hi) = (t - 8.0 * scale, t + 2.0 * scale);
    let n = 400;
    let mut best = (0.0, lo);
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let v = eval(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    // golden-section refinement inside the bracketing cell
    let h = (hi - lo) / n as f64;
    let (mut a, mut b) = (best.1 - h, best.1 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d);
        }
    }
    best.0.max(fc).max(fd)
}

/// `max|h_k|` against `λ = 2k + 1` over the given degrees.
pub fn sup_norm_sweep(ks: &[u32]) -> Result<ScalingFit> {
    fit_exponent(&ks.iter().map(|&k| ((2 * k + 1) as f64, hermite_sup(k))).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{AnnulusSpec, DEFAULT_BUDGET};

    fn ball_op(d: usize, lambda: u32) -> LowRankOperator {
        let b = Region::Ball { radius: 2.0 };
        assemble(lambda, d, b, b, 8.0, DEFAULT_BUDGET).unwrap()
    }

    #[test]
    fn identity_on_two_points() {
        let grid = Arc::new(Grid {
            d: 1,
            points: vec![1.0, -1.0],
            weights: vec![0.5, 0.5],
            region: Region::Ball { radius: 1.0 },
            lambda: 1,
            resolution: 2.0,
            orbit: 1,
        });
        let g = GridFunction::new(vec![3.0, -4.0], grid).unwrap();
        let u = dual_q(&g, 2.0).unwrap();
        assert!((u.pairing(&g) - g.norm(2.0)).abs() < 1e-12);
        let u3 = dual_q(&g, 3.0).unwrap();
        assert!((u3.pairing(&g) - g.norm(3.0)).abs() < 1e-12);
        // real nonnegative input: output ∝ g²
        let pos = GridFunction::new(vec![1.0, 2.0], Arc::clone(&g.grid)).unwrap();
        let u = dual_q(&pos, 3.0).unwrap();
        assert!((u.values[1] / u.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_dual_is_degenerate() {
        let grid = Arc::new(build_grid(1, 3, Region::Ball { radius: 2.0 }, 4.0, 1000).unwrap());
        let z = GridFunction::new(vec![0.0; grid.len()], grid).unwrap();
        assert!(matches!(dual_q(&z, 3.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ball_projection_is_orthogonal() {
        for (d, lambda) in [(1, 21), (2, 20)] {
            let op = ball_op(d, lambda);
            assert_eq!(op.rank, crate::hermite::level_dimension(d, (lambda - d as u32) / 2));
            let sv = op.top_singular_value();
            assert!((sv - 1.0).abs() < 1e-6, "d={d} σ={sv} defect={:?}", op.idempotence_defect());
            assert!(op.idempotence_defect().unwrap() < 1e-6);
        }
    }

    #[test]
    fn gram_and_power_agree_at_two_two() {
        let out = Region::Shell(AnnulusSpec::plus(0.25).unwrap());
        let op = assemble(12, 2, Region::Ball { radius: 2.0 }, out, 8.0, DEFAULT_BUDGET).unwrap();
        let gram = norm_2_2_gram(12, 2, out, 8.0, DEFAULT_BUDGET).unwrap();
        let spec = PowerSpec { tol: 1e-12, max_iter: 5000, ..Default::default() };
        let pw = norm_p_q_power(&op, 2.0, 2.0, &spec).unwrap();
        // 𝔓 carries λ^{-d/2}; (2.10) at p = q = 2 multiplies by λ^{d/2}
        let v = unscaled_norm(pw.value, 12, 2, 2.0, 2.0);
        assert!((v - gram.value).abs() < 1e-6 * gram.value, "{v} vs {}", gram.value);
        let exact = op.top_singular_value();
        assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
        assert!(pw.monotone);
    }

    #[test]
    fn streamed_and_stored_factors_agree() {
        let basis = Arc::new(LevelBasis::new(3, 21).unwrap());
        let grid = Arc::new(build_grid(3, 21, Region::Ball { radius: 2.0 }, 6.0, DEFAULT_BUDGET).unwrap());
        let stored = Factor::new(Arc::clone(&grid), basis);
        let mut streamed = stored.clone();
        streamed.dense = None;
        streamed.chunk = 333;
        assert!(grid.orbit > 3 * streamed.chunk);
        let c = gaussian_block(stored.basis.rank(), 3, 1);
        let (a, b) = (stored.expand(&c), streamed.expand(&c));
        assert_eq!(a, b);
        // block accumulation regroups the sums, so only rounding differs
        let (pa, pb) = (stored.project(&a), streamed.project(&a));
        assert!((&pa - pb).abs().max() < 1e-12 * pa.abs().max());
        let (ga, gb) = (stored.gram(), streamed.gram());
        assert!((ga - gb).abs().max() < 1e-13);
    }

    #[test]
    fn parity_products_match_the_full_grid() {
        let basis = Arc::new(LevelBasis::new(3, 9).unwrap());
        let grid = Arc::new(build_grid(3, 9, Region::Ball { radius: 2.0 }, 6.0, DEFAULT_BUDGET).unwrap());
        let f = Factor::new(Arc::clone(&grid), Arc::clone(&basis));
        let full = f.full_block();
        let c = gaussian_block(basis.rank(), 2, 4);
        let direct = full.tr_mul(&c);
        assert!((f.expand(&c) - &direct).abs().max() < 1e-12);
        let x = gaussian_block(grid.len(), 2, 5);
        assert!((f.project(&x) - &full * &x).abs().max() < 1e-10);
        let mut wb = full.clone();
        for (j, mut col) in wb.column_iter_mut().enumerate() {
            col *= grid.weights[j];
        }
        assert!((f.gram() - &wb * full.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let s: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 9.0].iter().map(|&t| (t, t * t)).collect();
        let f = fit_exponent(&s).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.stderr < 1e-12);
        let c: Vec<(f64, f64)> = [1.0, 2.0, 3.0].iter().map(|&t| (t, 7.0)).collect();
        assert!(fit_exponent(&c).unwrap().slope.abs() < 1e-12);
        assert!(fit_exponent(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn sup_of_low_degree() {
        // h_0 peaks at the origin with π^{-1/4}; the scan starts left of it
        let v = hermite_sup(0);
        assert!((v - crate::hermite::PI_M_QUARTER).abs() < 1e-12);
    }
}
