//! The linearized operator A₀ about a standard bubble: its discretization as
//! a pencil with boundary rows, the spectrum, the analytic null space, the
//! second variation and the sign checks that feed into stability.

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use crate::fd::{integrate, simpson_weights, sinc, stencil, DiffOp, StencilRow};
use crate::geometry::{level_set_jet, BubbleParams, StandardBubble};
use crate::perturbation::{ArcGrid, ArcSamples, End};
use crate::{Error, Result};

/// Stencil accuracy of the pencil rows.
const PENCIL_ORDER: usize = 2;

/// Discretized eigenproblem A v = λ M v. Rows of A in `boundary` carry the
/// twelve junction conditions; M is the identity elsewhere and zero there.
#[derive(Clone, Debug)]
pub struct DiscretePencil {
    pub a: DMatrix<f64>,
    pub m_diag: Vec<f64>,
    /// Flattened node index of each boundary row, in row order: p₊ rows
    /// 𝔊₁..𝔊₆, then p₋.
    pub boundary: [usize; 12],
    pub grid: ArcGrid,
    pub bubble: StandardBubble,
}

/// Node that hosts boundary row `slot` (0..6) at `end`: slot 2i, 2i+1 are the
/// two outermost nodes of arc i.
fn boundary_node(grid: &ArcGrid, end: End, slot: usize) -> usize {
    let i = slot / 2;
    let n = grid.n[i];
    let k = match end {
        End::Minus => slot % 2,
        End::Plus => n - 2 + slot % 2,
    };
    grid.offset(i) + k
}

fn end_row(grid: &ArcGrid, i: usize, end: End, d: usize) -> StencilRow {
    let n = grid.n[i];
    let mut row = stencil(n, grid.h[i], end.node(n), d, PENCIL_ORDER);
    row.start += grid.offset(i);
    row
}

fn add_row(dst: &mut [f64], row: &StencilRow, scale: f64) {
    for (j, w) in row.w.iter().enumerate() {
        dst[row.start + j] += scale * w;
    }
}

/// The six linear junction conditions at one end, as dense rows over all
/// nodes.
fn junction_rows(bubble: &StandardBubble, grid: &ArcGrid, end: End) -> [Vec<f64>; 6] {
    let total = grid.total();
    let (k, q, s) = (bubble.kappa, bubble.q, end.sign());
    let e = |i: usize, d: usize| end_row(grid, i, end, d);
    let mut rows: [Vec<f64>; 6] = Default::default();
    for r in rows.iter_mut() {
        *r = vec![0.0; total];
    }
    // q_i ρ_i ± ρ_i' and (ρ_i'' + κ_i²ρ_i)' per arc
    let conormal = |i: usize, dst: &mut Vec<f64>, sign: f64| {
        add_row(dst, &e(i, 0), sign * q[i]);
        add_row(dst, &e(i, 1), sign * s);
    };
    let flux = |i: usize, dst: &mut Vec<f64>, sign: f64| {
        add_row(dst, &e(i, 3), sign);
        add_row(dst, &e(i, 1), sign * k[i] * k[i]);
    };
    for i in 0..3 {
        add_row(&mut rows[0], &e(i, 0), 1.0);
        add_row(&mut rows[3], &e(i, 2), 1.0);
        add_row(&mut rows[3], &e(i, 0), k[i] * k[i]);
    }
    conormal(0, &mut rows[1], 1.0);
    conormal(1, &mut rows[1], -1.0);
    conormal(1, &mut rows[2], 1.0);
    conormal(2, &mut rows[2], -1.0);
    flux(0, &mut rows[4], 1.0);
    flux(1, &mut rows[4], -1.0);
    flux(1, &mut rows[5], 1.0);
    flux(2, &mut rows[5], -1.0);
    rows
}

pub fn assemble_pencil(bubble: &StandardBubble, grid: &ArcGrid) -> DiscretePencil {
    let total = grid.total();
    let mut a = DMatrix::zeros(total, total);
    let mut m_diag = vec![0.0; total];
    for i in 0..3 {
        let (n, h, k2) = (grid.n[i], grid.h[i], bubble.kappa[i].powi(2));
        let off = grid.offset(i);
        for j in 2..n - 2 {
            let row = off + j;
            let d4 = stencil(n, h, j, 4, PENCIL_ORDER);
            let d2 = stencil(n, h, j, 2, PENCIL_ORDER);
            for (c, w) in d4.w.iter().enumerate() {
                a[(row, off + d4.start + c)] += w;
            }
            for (c, w) in d2.w.iter().enumerate() {
                a[(row, off + d2.start + c)] += k2 * w;
            }
            m_diag[row] = 1.0;
        }
    }
    let mut boundary = [0; 12];
    for (e, end) in End::BOTH.into_iter().enumerate() {
        for (slot, row) in junction_rows(bubble, grid, end).into_iter().enumerate() {
            let node = boundary_node(grid, end, slot);
            boundary[6 * e + slot] = node;
            a.row_mut(node).copy_from_slice(&row);
        }
    }
    DiscretePencil { a, m_diag, boundary, grid: grid.clone(), bubble: bubble.clone() }
}

fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

impl DiscretePencil {
    pub fn size(&self) -> usize {
        self.m_diag.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// The 12 boundary rows as a 12×N matrix.
    pub fn boundary_rows(&self) -> DMatrix<f64> {
        DMatrix::from_fn(12, self.size(), |r, c| self.a[(self.boundary[r], c)])
    }

    pub fn boundary_rank(&self) -> usize {
        rank(&self.boundary_rows(), 1e-10)
    }

    /// Principal-part coefficient matrices of the boundary rows at each end,
    /// grouped by derivative order 0..=3: entry (row, i) is the coefficient of
    /// ∂ˣᵈρ_i. These are read off by applying the rows to (x ∓ l_i)ᵈ/d!.
    pub fn normality_matrices(&self) -> [[DMatrix<f64>; 4]; 2] {
        let groups: [&[usize]; 4] = [&[0], &[1, 2], &[3], &[4, 5]];
        let order = [0, 1, 1, 2, 3, 3];
        let mut out: [[DMatrix<f64>; 4]; 2] = Default::default();
        for e in 0..2 {
            let end = End::BOTH[e];
            for (d, rows) in groups.iter().enumerate() {
                let mut m = DMatrix::zeros(rows.len(), 3);
                for i in 0..3 {
                    let xe = end.sign() * self.bubble.half_len[i];
                    let fact = (1..=d).product::<usize>() as f64;
                    let mut u = vec![0.0; self.size()];
                    let off = self.grid.offset(i);
                    for (k, &x) in self.grid.x[i].iter().enumerate() {
                        u[off + k] = (x - xe).powi(d as i32) / fact;
                    }
                    for (r, &slot) in rows.iter().enumerate() {
                        debug_assert_eq!(order[slot], d);
                        let node = self.boundary[6 * e + slot];
                        m[(r, i)] = self.a.row(node).iter().zip(&u).map(|(a, b)| a * b).sum();
                    }
                }
                out[e][d] = m;
            }
        }
        out
    }

    /// True when every order group has full row rank (the normality
    /// condition).
    pub fn is_normal(&self) -> bool {
        self.normality_matrices().iter().flatten().all(|m| rank(m, 1e-8) == m.nrows())
    }
}

/// The pencil reduced to interior unknowns: boundary rows are solved for
/// the 12 boundary nodes, which removes the infinite eigenvalues.
pub struct Condensed {
    /// S = A_II − A_IB A_BB⁻¹ A_BI.
    pub s: DMatrix<f64>,
    pub interior: Vec<usize>,
    boundary: Vec<usize>,
    /// −A_BB⁻¹ A_BI, lifting interior values to the boundary nodes.
    lift: DMatrix<f64>,
    size: usize,
}

impl Condensed {
    pub fn new(p: &DiscretePencil) -> Result<Self> {
        let boundary: Vec<usize> = p.boundary.to_vec();
        let interior: Vec<usize> = (0..p.size()).filter(|k| p.m_diag[*k] != 0.0).collect();
        let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| p.a[(r[i], c[j])]);
        let a_bb = sub(&boundary, &boundary);
        let a_bi = sub(&boundary, &interior);
        let lu = a_bb.lu();
        let x = lu
            .solve(&a_bi)
            .ok_or_else(|| Error::Numerical("boundary block of the pencil is singular".into()))?;
        let s = sub(&interior, &interior) - sub(&interior, &boundary) * &x;
        Ok(Condensed { s, interior, boundary, lift: -x, size: p.size() })
    }

    /// Full nodal vector from interior values.
    pub fn lift(&self, vi: &DVector<f64>) -> Vec<f64> {
        let vb = &self.lift * vi;
        let mut out = vec![0.0; self.size];
        for (k, &j) in self.interior.iter().enumerate() {
            out[j] = vi[k];
        }
        for (k, &j) in self.boundary.iter().enumerate() {
            out[j] = vb[k];
        }
        out
    }

    pub fn restrict(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.interior.len(), self.interior.iter().map(|&j| v[j]))
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let q = m.qr().q();
    q.columns(0, cols).into_owned()
}

/// Sines of the principal angles between the column spans of `a` and `b`,
/// largest first (asin-based, accurate for small angles).
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormalize(a.clone());
    let qb = orthonormalize(b.clone());
    let resid = &qa - &qb * (qb.transpose() * &qa);
    let mut s: Vec<f64> = resid.svd(false, false).singular_values.iter().map(|v| v.min(1.0).asin()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn random_block(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Orthonormal basis of the invariant subspace for the `m` eigenvalues of
/// `s` nearest zero, by block inverse iteration.
fn near_null_subspace(s: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let lu = s.clone().lu();
    let mut q = orthonormalize(random_block(s.nrows(), m, 0x5eed));
    for _ in 0..60 {
        let y = lu.solve(&q).ok_or_else(|| Error::Numerical("condensed operator is singular".into()))?;
        let next = orthonormalize(y);
        let moved = principal_angles(&next, &q)[0];
        q = next;
        if moved < 1e-13 {
            break;
        }
    }
    Ok(q)
}

/// Right eigenvector of `s` for the isolated real eigenvalue `lambda`.
fn inverse_iteration(s: &DMatrix<f64>, lambda: f64, seed: u64) -> Result<DVector<f64>> {
    let n = s.nrows();
    let shift = lambda + 1e-9 * lambda.abs().max(1e-12);
    let lu = (s - DMatrix::identity(n, n) * shift).lu();
    let mut v = random_block(n, 1, seed).column(0).into_owned();
    v.normalize_mut();
    for _ in 0..4 {
        v = lu.solve(&v).ok_or_else(|| Error::Numerical("shifted operator is singular".into()))?;
        v.normalize_mut();
    }
    Ok(v)
}

/// One eigenpair (or, in the null cluster, one basis vector of the
/// near-null eigenspace).
#[derive(Clone, Debug)]
pub struct Mode {
    pub lambda: Complex<f64>,
    /// Full nodal vector, unit max-norm, largest entry positive.
    pub vector: Vec<f64>,
    pub is_null: bool,
    pub c: [f64; 3],
    /// Max departure of ∂²u + κ²u from its per-arc mean, relative to the
    /// largest |∂²u + κ²u|.
    pub c_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct ModeReport {
    /// All finite eigenvalues, sorted by modulus.
    pub eigenvalues: Vec<Complex<f64>>,
    /// The first k eigenpairs.
    pub modes: Vec<Mode>,
    pub near_null_count: usize,
    pub null_tol: f64,
    /// Smallest eigenvalue outside the null cluster.
    pub lambda6: Complex<f64>,
    /// Principal angles between the computed near-null eigenspace and the
    /// analytic null basis.
    pub principal_angles: Vec<f64>,
    /// max |Im λ| / max |λ|.
    pub imag_ratio: f64,
    /// Every eigenvalue outside the cluster has Re λ > 0.
    pub stable_rest: bool,
}

impl ModeReport {
    pub fn max_principal_angle(&self) -> f64 {
        self.principal_angles.first().copied().unwrap_or(f64::NAN)
    }

    pub fn null_modes(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.is_null)
    }
}

/// null_tol(h) = (λ₆/4)·(h/h₀)², h₀ the spacing at 64 nodes per arc.
pub fn null_tolerance(lambda6: f64, n: usize) -> f64 {
    let ratio = 63.0 / (n - 1) as f64;
    0.25 * lambda6 * ratio * ratio
}

fn to_samples(grid: &ArcGrid, v: &[f64]) -> ArcSamples {
    grid.unflatten(v)
}

fn normalize_sign(mut v: Vec<f64>) -> Vec<f64> {
    let k = (0..v.len()).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
    let s = v[k];
    if s != 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Eigenpairs nearest zero. The 12 boundary rows are condensed out, which
/// removes the infinite eigenvalues of the singular-mass pencil; the
/// remaining operator is solved densely.
pub fn spectrum(pencil: &DiscretePencil, k: usize) -> Result<ModeReport> {
    if k == 0 || k > 20 {
        return Err(Error::Domain(format!("k must be in 1..=20, got {k}")));
    }
    let cond = Condensed::new(pencil)?;
    let mut eigenvalues: Vec<Complex<f64>> = cond
        .s
        .clone()
        .schur()
        .complex_eigenvalues()
        .iter()
        .copied()
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .collect();
    if eigenvalues.len() < 6 {
        return Err(Error::Numerical("too few finite eigenvalues".into()));
    }
    eigenvalues.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let n_ref = pencil.grid.n.iter().copied().max().unwrap_or(64);
    let null_tol = null_tolerance(eigenvalues[5].norm(), n_ref);
    let m = eigenvalues.iter().take_while(|z| z.norm() <= null_tol).count();
    let lambda6 = eigenvalues[m];
    let max_abs = eigenvalues.last().map(|z| z.norm()).unwrap_or(1.0);
    let imag_ratio = eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / max_abs;
    let stable_rest = eigenvalues[m..].iter().all(|z| z.re > 0.0);

    let basis = null_basis(&pencil.bubble, &pencil.grid);
    let vmat = DMatrix::from_fn(pencil.size(), 5, |r, c| basis[c][r]);
    let (null_vectors, principal) = if m > 0 {
        let q = near_null_subspace(&cond.s, m)?;
        let lifted: Vec<Vec<f64>> = (0..m).map(|c| cond.lift(&q.column(c).into_owned())).collect();
        let lm = DMatrix::from_fn(pencil.size(), m, |r, c| lifted[c][r]);
        (lifted, principal_angles(&lm, &vmat))
    } else {
        (Vec::new(), Vec::new())
    };

    let mut modes = Vec::with_capacity(k);
    for (j, v) in null_vectors.into_iter().enumerate().take(k) {
        modes.push(make_mode(pencil, eigenvalues[j], normalize_sign(v), true));
    }
    let rest: Vec<Result<Mode>> = (m..k.min(eigenvalues.len()))
        .into_par_iter()
        .map(|j| {
            let v = inverse_iteration(&cond.s, eigenvalues[j].re, j as u64)?;
            Ok(make_mode(pencil, eigenvalues[j], normalize_sign(cond.lift(&v)), false))
        })
        .collect();
    for r in rest {
        modes.push(r?);
    }
    Ok(ModeReport {
        eigenvalues,
        modes,
        near_null_count: m,
        null_tol,
        lambda6,
        principal_angles: principal,
        imag_ratio,
        stable_rest,
    })
}

fn make_mode(pencil: &DiscretePencil, lambda: Complex<f64>, vector: Vec<f64>, is_null: bool) -> Mode {
    let u = to_samples(&pencil.grid, &vector);
    let (c, dev) = c_of(&pencil.bubble, &pencil.grid, &u);
    let scale = curvature_variation(&pencil.bubble, &pencil.grid, &u)
        .iter()
        .flatten()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    Mode { lambda, vector, is_null, c, c_deviation: if scale > 0.0 { dev / scale } else { 0.0 } }
}

/// v^(1..5) sampled on the grid and flattened: translations (cos, sin κ_i x),
/// rotation, and the r- and γ-derivatives of the level sets.
pub fn null_basis(bubble: &StandardBubble, grid: &ArcGrid) -> [Vec<f64>; 5] {
    let BubbleParams { r, gamma, .. } = bubble.params;
    let k = bubble.kappa;
    // o₃ = r sin(π/3)/sin γ: the normal component of a rotation about O₁.
    let o3 = r * FRAC_PI_3.sin() / gamma.sin();
    // o_i sin(κ_i x)/o₃ with o_i sin(κ_i x) = m_i sin(κ_i x) − x sinc(κ_i x),
    // which stays finite as κ₂ → 0
    let rot = |i: usize, x: f64| {
        let m = bubble.canonical_point(i, 0.0).x;
        (m * (k[i] * x).sin() - x * sinc(k[i] * x)) / o3
    };
    let jet = |i: usize, x: f64| level_set_jet(r, gamma, i, bubble.canonical_point(i, x));
    let fields: [Box<dyn Fn(usize, f64) -> f64 + Sync>; 5] = [
        Box::new(|i, x| (k[i] * x).cos()),
        Box::new(|i, x| (k[i] * x).sin()),
        Box::new(rot),
        Box::new(|i, x| -jet(i, x).d_r),
        Box::new(|i, x| -jet(i, x).d_gamma),
    ];
    fields.map(|f| grid.flatten(&grid.sample(|i, x| f(i, x))))
}

/// ∂²u_i + κ_i²u_i with 4th-order differences.
pub fn curvature_variation(bubble: &StandardBubble, grid: &ArcGrid, u: &ArcSamples) -> ArcSamples {
    let mut out = grid.zeros();
    for i in 0..3 {
        let d2 = DiffOp::new(grid.n[i], grid.h[i], 2, 4);
        let k2 = bubble.kappa[i].powi(2);
        for (o, (a, b)) in out[i].iter_mut().zip(d2.apply(&u[i]).iter().zip(&u[i])) {
            *o = a + k2 * b;
        }
    }
    out
}

/// Per-arc constants c_i = mean of ∂²u_i + κ_i²u_i over interior nodes, and
/// the largest departure from those means.
pub fn c_of(bubble: &StandardBubble, grid: &ArcGrid, u: &ArcSamples) -> ([f64; 3], f64) {
    let w = curvature_variation(bubble, grid, u);
    let mut c = [0.0; 3];
    let mut dev = 0.0f64;
    for i in 0..3 {
        let inner = &w[i][1..grid.n[i] - 1];
        c[i] = inner.iter().sum::<f64>() / inner.len() as f64;
        dev = inner.iter().fold(dev, |d, v| d.max((v - c[i]).abs()));
    }
    (c, dev)
}

/// ∫u_i dx per arc (Simpson).
pub fn arc_integrals(grid: &ArcGrid, u: &ArcSamples) -> [f64; 3] {
    std::array::from_fn(|i| integrate(&simpson_weights(grid.n[i], grid.h[i]), &u[i]))
}

/// The second variation I(u, v) = Σ∫(u′v′ − κ²uv) + Σ_{p±}Σ q_i u_i v_i.
pub fn bilinear_i(bubble: &StandardBubble, grid: &ArcGrid, u: &ArcSamples, v: &ArcSamples) -> f64 {
    let mut total = 0.0;
    for i in 0..3 {
        let n = grid.n[i];
        let d1 = DiffOp::new(n, grid.h[i], 1, 6);
        let w = simpson_weights(n, grid.h[i]);
        let (du, dv) = (d1.apply(&u[i]), d1.apply(&v[i]));
        let k2 = bubble.kappa[i].powi(2);
        total += (0..n).map(|k| w[k] * (du[k] * dv[k] - k2 * u[i][k] * v[i][k])).sum::<f64>();
        for end in End::BOTH {
            let k = end.node(n);
            total += bubble.q[i] * u[i][k] * v[i][k];
        }
    }
    total
}

/// Relative defect of ∫|∂(∂²u + κ²u)|² = λ I(u, u) for an eigenpair.
pub fn rayleigh_defect(pencil: &DiscretePencil, lambda: f64, vector: &[f64]) -> f64 {
    let (grid, bubble) = (&pencil.grid, &pencil.bubble);
    let u = grid.unflatten(vector);
    let w = curvature_variation(bubble, grid, &u);
    let mut lhs = 0.0;
    for i in 0..3 {
        let d1 = DiffOp::new(grid.n[i], grid.h[i], 1, 4);
        let dw = d1.apply(&w[i]);
        let sq: Vec<f64> = dw.iter().map(|v| v * v).collect();
        lhs += integrate(&simpson_weights(grid.n[i], grid.h[i]), &sq);
    }
    let rhs = lambda * bilinear_i(bubble, grid, &u, &u);
    (lhs - rhs).abs() / rhs.abs().max(lhs.abs())
}

/// D = [[∫v⁴₁−∫v⁴₂, ∫v⁵₁−∫v⁵₂], [∫v⁴₂−∫v⁴₃, ∫v⁵₂−∫v⁵₃]] and its determinant.
pub fn matrix_d(bubble: &StandardBubble, grid: &ArcGrid) -> (Matrix2<f64>, f64) {
    let basis = null_basis(bubble, grid);
    let s4 = arc_integrals(grid, &grid.unflatten(&basis[3]));
    let s5 = arc_integrals(grid, &grid.unflatten(&basis[4]));
    let d = Matrix2::new(s4[0] - s4[1], s5[0] - s5[1], s4[1] - s4[2], s5[1] - s5[2]);
    (d, d.determinant())
}

/// A random smooth perturbation in the discrete constraint set: Σu_i = 0 at
/// both junctions and equal integrals over the three arcs.
pub fn sample_constraint_set(grid: &ArcGrid, rng: &mut impl Rng) -> ArcSamples {
    const MODES: usize = 6;
    // u_i(x) = Σ_m a_im P_m(x/l_i) with Chebyshev polynomials P_m
    let cheb = |m: usize, t: f64| (m as f64 * t.clamp(-1.0, 1.0).acos()).cos();
    let dim = 3 * MODES;
    let mut a = DVector::from_fn(dim, |j, _| rng.gen_range(-1.0..1.0) / (1 + j % MODES) as f64);
    let basis_values = |i: usize, m: usize| -> Vec<f64> {
        let l = grid.x[i][grid.n[i] - 1];
        grid.x[i].iter().map(|&x| cheb(m, x / l)).collect()
    };
    let mut c = DMatrix::zeros(4, dim);
    for i in 0..3 {
        let w = simpson_weights(grid.n[i], grid.h[i]);
        for m in 0..MODES {
            let b = basis_values(i, m);
            let col = i * MODES + m;
            c[(0, col)] = b[grid.n[i] - 1];
            c[(1, col)] = b[0];
            let int = integrate(&w, &b);
            match i {
                0 => c[(2, col)] = int,
                1 => {
                    c[(2, col)] = -int;
                    c[(3, col)] = int;
                }
                _ => c[(3, col)] = -int,
            }
        }
    }
    let cct = &c * c.transpose();
    if let Some(y) = cct.lu().solve(&(&c * &a)) {
        a -= c.transpose() * y;
    }
    let mut u = grid.zeros();
    for i in 0..3 {
        for m in 0..MODES {
            let b = basis_values(i, m);
            for (o, v) in u[i].iter_mut().zip(b) {
                *o += a[i * MODES + m] * v;
            }
        }
    }
    u
}

/// Outcome of a check that may be unable to decide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct SemisimplicityReport {
    pub near_null_count: usize,
    pub max_angle: f64,
    pub angle_tol: f64,
    /// Smallest relative residual of S u = z over u ⊥ N, z ∈ N.
    pub residual_floor: f64,
    pub verdict: Verdict,
}

/// Floors above this say no null vector lies in the range; below
/// `FLOOR_JORDAN` a generalized eigenvector is present. In between the rank
/// decision is not trusted.
pub const FLOOR_SEMISIMPLE: f64 = 1e-2;
pub const FLOOR_JORDAN: f64 = 1e-4;

/// min over unit z ∈ N of min_{u ⊥ N} ‖S u − z‖, where N is spanned by the
/// `m` smallest right singular vectors of `s`. Zero exactly when some null
/// vector is in the range of S restricted to N⊥, i.e. when a Jordan chain
/// sits on top of it.
pub fn residual_floor(s: &DMatrix<f64>, m: usize) -> f64 {
    let n = s.nrows();
    let svd = s.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let z = DMatrix::from_fn(n, m, |r, c| vt[(idx[c], r)]);
    // orthonormal complement of N
    let mut basis = DMatrix::zeros(n, n);
    basis.columns_mut(0, m).copy_from(&z);
    basis.columns_mut(m, n - m).copy_from(&(DMatrix::identity(n, n) - &z * z.transpose()).columns(0, n - m));
    let comp = orthonormalize(basis).columns(m, n - m).into_owned();
    let range = orthonormalize(s * comp);
    // left complement of the range of S on N⊥
    let mut w = random_block(n, m, 0xf100);
    for _ in 0..2 {
        w = &w - &range * (range.transpose() * &w);
        w = orthonormalize(w);
    }
    (w.transpose() * &z).svd(false, false).singular_values.min()
}

pub fn classify_floor(floor: f64) -> Verdict {
    if floor >= FLOOR_SEMISIMPLE {
        Verdict::Pass
    } else if floor <= FLOOR_JORDAN {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// (a) the near-null eigenspace matches span{v^(1..5)}; (b) no null vector
/// is in the range, so the zero eigenvalue is semi-simple.
pub fn semisimplicity_check(pencil: &DiscretePencil, report: &ModeReport) -> Result<SemisimplicityReport> {
    let cond = Condensed::new(pencil)?;
    let m = report.near_null_count;
    let n = pencil.grid.n.iter().copied().max().unwrap_or(64);
    let angle_tol = 1e-2 * (127.0 / (n - 1) as f64).powi(2);
    let max_angle = report.max_principal_angle();
    let residual_floor = if m > 0 { residual_floor(&cond.s, m) } else { 0.0 };
    let mut verdict = classify_floor(residual_floor);
    if verdict == Verdict::Pass && (m != 5 || !(max_angle <= angle_tol)) {
        verdict = Verdict::Fail;
    }
    Ok(SemisimplicityReport { near_null_count: m, max_angle, angle_tol, residual_floor, verdict })
}

/// Determinant of the half-line problem λu_i + l̃_i⁴ u_i'''' = 0 (l̃_i =
/// l₁/l_i) under the principal parts of the six junction conditions,
/// restricted to decaying exponentials; rows are scaled to unit length.
pub fn ls_determinant(lambda: Complex<f64>, ratios: [f64; 3]) -> Result<Complex<f64>> {
    if lambda.norm() == 0.0 {
        return Err(Error::Domain("λ = 0 is excluded".into()));
    }
    if lambda.re < -1e-14 * lambda.norm() {
        return Err(Error::Domain(format!("λ = {lambda} is outside the closed right half plane")));
    }
    if ratios.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("length ratios must be positive, got {ratios:?}")));
    }
    let root = (-lambda).powf(0.25);
    let mut omegas = [[Complex::new(0.0, 0.0); 2]; 3];
    for (i, om) in omegas.iter_mut().enumerate() {
        let mut decaying: Vec<Complex<f64>> = (0..4)
            .map(|k| root * Complex::new(0.0, 1.0).powi(k) / ratios[i])
            .filter(|w| w.re < 0.0)
            .collect();
        decaying.sort_by(|a, b| a.im.total_cmp(&b.im));
        if decaying.len() != 2 {
            return Err(Error::Numerical(format!("found {} decaying roots", decaying.len())));
        }
        *om = [decaying[0], decaying[1]];
    }
    // ∂ᵈu_i → (l̃_i ω)ᵈ on column (i, j)
    let mut m = nalgebra::DMatrix::<Complex<f64>>::zeros(6, 6);
    for i in 0..3 {
        for j in 0..2 {
            let col = 2 * i + j;
            let d = |k: i32| (omegas[i][j] * ratios[i]).powi(k);
            m[(0, col)] = d(0);
            m[(3, col)] = d(2);
            let pair = |row: usize, a: usize, b: usize, k: i32, mm: &mut DMatrix<Complex<f64>>| {
                if i == a {
                    mm[(row, col)] += d(k);
                }
                if i == b {
                    mm[(row, col)] -= d(k);
                }
            };
            pair(1, 0, 1, 1, &mut m);
            pair(2, 1, 2, 1, &mut m);
            pair(4, 0, 1, 3, &mut m);
            pair(5, 1, 2, 3, &mut m);
        }
    }
    for mut row in m.row_iter_mut() {
        let norm = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        row /= Complex::new(norm, 0.0);
    }
    Ok(m.determinant())
}

/// Lopatinskii–Shapiro length ratios l̃_i = l₁/l_i of a bubble.
pub fn ls_ratios(bubble: &StandardBubble) -> [f64; 3] {
    let l = bubble.half_len;
    [1.0, l[0] / l[1], l[0] / l[2]]
}

/// Deterministic grid of `radii × angles` points λ = ρe^{iφ} with ρ
/// log-spaced in [1e−2, 1e2] and φ uniform in [−π/2, π/2] (both ends
/// included), paired with |det|.
pub fn ls_grid(ratios: [f64; 3], radii: usize, angles: usize) -> Result<Vec<(Complex<f64>, f64)>> {
    let mut out = Vec::with_capacity(radii * angles);
    for a in 0..radii {
        let rho = 10f64.powf(-2.0 + 4.0 * a as f64 / (radii.max(2) - 1) as f64);
        for b in 0..angles {
            let phi = -FRAC_PI_2 + PI * b as f64 / (angles.max(2) - 1) as f64;
            let lambda = Complex::from_polar(rho, phi);
            out.push((lambda, ls_determinant(lambda, ratios)?.norm()));
        }
    }
    Ok(out)
}

/// ‖A_h v^(k)‖∞ over interior and boundary rows, k = 1..=5.
pub fn null_residuals(bubble: &StandardBubble, grid: &ArcGrid) -> [f64; 5] {
    let pencil = assemble_pencil(bubble, grid);
    null_basis(bubble, grid).map(|v| pencil.apply(&v).iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Null residuals at n, 2n, 4n and the successive reduction ratios.
#[derive(Clone, Debug)]
pub struct NullConvergence {
    pub n: [usize; 3],
    pub residuals: [[f64; 5]; 3],
    pub ratios: [[f64; 5]; 2],
}

impl NullConvergence {
    /// Every ratio inside `[lo, hi]` (second order: about 4).
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.ratios.iter().flatten().all(|r| (lo..=hi).contains(r))
    }
}

pub fn null_convergence(params: BubbleParams, n0: usize) -> Result<NullConvergence> {
    let bubble = StandardBubble::new(params)?;
    let n = [n0, 2 * n0, 4 * n0];
    let mut residuals = [[0.0; 5]; 3];
    for (res, &m) in residuals.iter_mut().zip(&n) {
        *res = null_residuals(&bubble, &ArcGrid::new(&bubble, m)?);
    }
    let ratios = [0, 1].map(|j| std::array::from_fn(|k| residuals[j][k] / residuals[j + 1][k]));
    Ok(NullConvergence { n, residuals, ratios })
}

/// One line of the sign suite.
#[derive(Clone, Debug)]
pub struct SignRow {
    pub gamma: f64,
    pub id: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
pub struct SignReport {
    pub rows: Vec<SignRow>,
}

impl SignReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SignRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Default sweep: 25 equally spaced interior points of (0, 2π/3).
pub fn gamma_sweep(count: usize) -> Vec<f64> {
    let top = 2.0 * FRAC_PI_3;
    (0..count).map(|k| top * (k as f64 + 0.5) / count as f64).collect()
}

/// Quadrature resolution for the sign suite.
pub const SIGN_SUITE_NODES: usize = 512;

fn sign_rows(gamma: f64, n: usize) -> Result<Vec<SignRow>> {
    let bubble = StandardBubble::new(BubbleParams::new(1.0, gamma))?;
    let grid = ArcGrid::new(&bubble, n)?;
    let basis = null_basis(&bubble, &grid);
    let v4 = grid.unflatten(&basis[3]);
    let v5 = grid.unflatten(&basis[4]);
    let s4 = arc_integrals(&grid, &v4);
    let s5 = arc_integrals(&grid, &v5);
    let (c4, _) = c_of(&bubble, &grid, &v4);
    let (c5, _) = c_of(&bubble, &grid, &v5);
    let dot = |c: [f64; 3], s: [f64; 3]| c[0] * s[0] + c[1] * s[1] + c[2] * s[2];
    let (_, det) = matrix_d(&bubble, &grid);
    // area derivatives by central differences of the closed-form areas
    let area = |r: f64, g: f64| StandardBubble::new(BubbleParams::new(r, g)).map(|b| b.enclosed_areas());
    let e = 1e-6;
    let (rp, rm) = (area(1.0 + e, gamma)?, area(1.0 - e, gamma)?);
    let (gp, gm) = (area(1.0, gamma + e)?, area(1.0, gamma - e)?);
    let da_dr = [(rp[0] - rm[0]) / (2.0 * e), (rp[1] - rm[1]) / (2.0 * e)];
    let da_dg = [(gp[0] - gm[0]) / (2.0 * e), (gp[1] - gm[1]) / (2.0 * e)];
    let zero_tol = 1e-10;
    let checks: Vec<(&'static str, f64, bool)> = vec![
        ("v4.i.int1>0", s4[0], s4[0] > 0.0),
        ("v4.i.int2<0", s4[1], s4[1] < 0.0),
        ("v4.i.int3<0", s4[2], s4[2] < 0.0),
        ("v4.ii.int1-int2>0", s4[0] - s4[1], s4[0] - s4[1] > 0.0),
        ("v4.ii.int2-int3>0", s4[1] - s4[2], s4[1] - s4[2] > 0.0),
        ("v4.iii.sum_c_int>0", dot(c4, s4), dot(c4, s4) > 0.0),
        ("v5.i.int1=0", s5[0], s5[0].abs() <= zero_tol),
        ("v5.i.int2<0", s5[1], s5[1] < 0.0),
        ("v5.i.int3>0", s5[2], s5[2] > 0.0),
        ("v5.ii.int1-int2>0", s5[0] - s5[1], s5[0] - s5[1] > 0.0),
        ("v5.ii.int2-int3<0", s5[1] - s5[2], s5[1] - s5[2] < 0.0),
        ("v5.iii.sum_c_int>0", dot(c5, s5), dot(c5, s5) > 0.0),
        ("I(v4,v4)<0", bilinear_i(&bubble, &grid, &v4, &v4), bilinear_i(&bubble, &grid, &v4, &v4) < 0.0),
        ("I(v5,v5)<0", bilinear_i(&bubble, &grid, &v5, &v5), bilinear_i(&bubble, &grid, &v5, &v5) < 0.0),
        ("detD<0", det, det < 0.0),
        ("dA1/dr>0", da_dr[0], da_dr[0] > 0.0),
        ("dA2/dr>0", da_dr[1], da_dr[1] > 0.0),
        ("dA1/dgamma>0", da_dg[0], da_dg[0] > 0.0),
        ("dA2/dgamma<0", da_dg[1], da_dg[1] < 0.0),
    ];
    Ok(checks.into_iter().map(|(id, value, pass)| SignRow { gamma, id, value, pass }).collect())
}

/// Sign checks for v^(4), v^(5), negativity of I on them, det D < 0 and the
/// area-derivative signs, for each γ (r = 1), in parallel.
pub fn sign_suite(gamma_values: &[f64]) -> Result<SignReport> {
    sign_suite_at(gamma_values, SIGN_SUITE_NODES)
}

pub fn sign_suite_at(gamma_values: &[f64], n: usize) -> Result<SignReport> {
    if let Some(g) = gamma_values.iter().find(|g| !(**g > 0.0 && **g < 2.0 * FRAC_PI_3)) {
        return Err(Error::Domain(format!("γ = {g} is outside (0, 2π/3)")));
    }
    let per: Vec<Result<Vec<SignRow>>> = gamma_values.par_iter().map(|&g| sign_rows(g, n)).collect();
    let mut rows = Vec::new();
    for r in per {
        rows.extend(r?);
    }
    Ok(SignReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(gamma: f64, n: usize) -> (StandardBubble, ArcGrid) {
        let b = StandardBubble::new(BubbleParams::new(1.0, gamma)).unwrap();
        let g = ArcGrid::new(&b, n).unwrap();
        (b, g)
    }

    #[test]
    fn constant_vector_hits_only_the_sum_rows() {
        let (b, g) = setup(1.2, 32);
        let p = assemble_pencil(&b, &g);
        let out = p.apply(&vec![1.0; p.size()]);
        for e in 0..2 {
            assert!((out[p.boundary[6 * e]] - 3.0).abs() < 1e-12);
        }
        for (k, v) in out.iter().enumerate() {
            if p.m_diag[k] != 0.0 {
                assert!(v.abs() < 1e-9 * 3.0f64.max(b.kappa.iter().map(|k| k * k).sum()), "row {k}: {v}");
            }
        }
    }

    #[test]
    fn boundary_rows_are_normal() {
        let (b, g) = setup(0.9, 32);
        let p = assemble_pencil(&b, &g);
        assert_eq!(p.boundary_rank(), 12);
        assert!(p.is_normal());
    }

    #[test]
    fn artificial_jordan_block_is_detected() {
        let (b, g) = setup(FRAC_PI_3, 48);
        let p = assemble_pencil(&b, &g);
        let report = spectrum(&p, 6).unwrap();
        let cond = Condensed::new(&p).unwrap();
        let s = &cond.s;
        assert_eq!(classify_floor(residual_floor(s, 5)), Verdict::Pass);

        // S_J = S − λ₆ w w̃ᵀ + z w̃ᵀ maps w onto the null vector z.
        let l6 = report.lambda6.re;
        let w = inverse_iteration(s, l6, 1).unwrap();
        let mut wl = inverse_iteration(&s.transpose(), l6, 2).unwrap();
        wl /= wl.dot(&w);
        let z = near_null_subspace(s, 5).unwrap().column(0).into_owned();
        let sj = s - (&w * wl.transpose()) * l6 + &z * wl.transpose();
        let floor = residual_floor(&sj, 5);
        assert_eq!(classify_floor(floor), Verdict::Fail, "floor {floor:e}");
    }

    #[test]
    fn ls_determinant_examples() {
        let one = ls_determinant(Complex::new(1.0, 0.0), [1.0; 3]).unwrap();
        assert!(one.norm() > 1e-8);
        for l in [Complex::new(0.0, 1.0), Complex::new(0.0, -1.0)] {
            assert!(ls_determinant(l, [1.0; 3]).unwrap().norm() > 1e-8);
        }
        assert!(matches!(ls_determinant(Complex::new(0.0, 0.0), [1.0; 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn v4_second_variation_at_symmetric_bubble() {
        let (b, g) = setup(FRAC_PI_3, 512);
        let basis = null_basis(&b, &g);
        let v4 = g.unflatten(&basis[3]);
        let i44 = bilinear_i(&b, &g, &v4, &v4);
        assert!((i44 + 8.0 * PI / 3.0 + 3f64.sqrt()).abs() < 1e-6, "{i44}");
        let (c, _) = c_of(&b, &g, &v4);
        assert!((c[0] - 1.0).abs() < 1e-6 && c[1].abs() < 1e-6 && (c[2] + 1.0).abs() < 1e-6, "{c:?}");
    }
}
