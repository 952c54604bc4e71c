//! Equilibrium chart over a reference bubble and the stability experiment.

use std::f64::consts::FRAC_PI_3;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::flow::{residuals_from, diagnostics_from, evaluate, project_admissible, step_implicit};
use crate::flow::{FlowConfig, FlowState};
use crate::geometry::{bubble_for_areas, level_set_jet, BubbleParams, StandardBubble, Vec2};
use crate::linops::{assemble_pencil, null_basis, spectrum};
use crate::perturbation::{ArcGrid, ArcSamples, PerturbationField, Reference, Tangential};
use crate::{Error, Result};

/// A nearby standard bubble expressed as a graph field over the reference.
#[derive(Clone, Debug)]
pub struct ChartPoint {
    pub params5: BubbleParams,
    pub field: PerturbationField,
}

/// Root of `a t² + b t + c = 0` nearest to zero, or None.
fn nearest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if c == 0.0 {
        return Some(0.0);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = b + b.signum() * disc.sqrt();
    if q == 0.0 {
        return None;
    }
    // −2c/q is the small root; the other (q/(−2a)) only matters when a ≠ 0
    Some(-2.0 * c / q)
}

/// Solve G_i(target frame of p + t d) = 0 for t nearest zero (p, d in world
/// coordinates). G_i is quadratic along any line.
fn ray_root(target: &StandardBubble, i: usize, p: Vec2, d: Vec2) -> Option<f64> {
    let BubbleParams { r, gamma, .. } = target.params;
    let y0 = target.to_canonical(p);
    let dy = target.to_canonical(p + d) - y0;
    let at = |y: Vec2| level_set_jet(r, gamma, i, y);
    let (g0, z) = (at(y0), at(Vec2::zeros()));
    let lead = at(dy).value - z.value - z.grad.dot(&dy);
    nearest_root(lead, g0.grad.dot(&dy), g0.value)
}

fn check_chart_ball(reference: &StandardBubble, p: &BubbleParams) -> Result<()> {
    let q = reference.params;
    let d = [p.a1 - q.a1, p.a2 - q.a2, p.r - q.r, p.gamma - q.gamma, p.theta - q.theta];
    let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dist > 0.1 * q.r * (1.0 + 1e-12) {
        return Err(Error::ChartDomain(format!(
            "parameters at distance {dist:.3e} from the reference, chart radius is {:.3e}",
            0.1 * q.r
        )));
    }
    p.validate()
}

fn chart_pass(reference: &Reference, target: &StandardBubble, field: &PerturbationField) -> Result<ArcSamples> {
    let rb = &reference.bubble;
    let mut rho = reference.grid.zeros();
    for i in 0..3 {
        for k in 0..reference.grid.n[i] {
            let c = reference.tangential(field, i, k)[0];
            let base = reference.sigma[i][k] + reference.tangent[i][k] * c;
            let p = rb.to_world(base);
            let d = rb.rotate_to_world(reference.normal[i][k]);
            rho[i][k] = ray_root(target, i, p, d).ok_or_else(|| {
                Error::ChartDomain(format!("no root of G_{} on the normal ray at node {k}", i + 1))
            })?;
        }
    }
    Ok(rho)
}

/// ρ(a₁, a₂, r, γ, θ): every node moves along its (tangentially shifted)
/// normal ray to the target circle; μ = 𝓙ρ at the junctions is iterated to a
/// fixed point.
pub fn equilibrium_chart(reference: &Reference, params5: BubbleParams) -> Result<ChartPoint> {
    check_chart_ball(&reference.bubble, &params5)?;
    let target = StandardBubble::new(params5)?;
    let tol = 1e-12 * reference.bubble.params.r;
    let mut field = PerturbationField::zeros(&reference.grid);
    for _ in 0..100 {
        let mut next = PerturbationField::admissible(chart_pass(reference, &target, &field)?);
        let change = (0..3)
            .map(|i| (next.mu_plus[i] - field.mu_plus[i]).abs().max((next.mu_minus[i] - field.mu_minus[i]).abs()))
            .fold(0.0, f64::max);
        if change <= tol {
            next.sync_mu();
            return Ok(ChartPoint { params5, field: next });
        }
        field = next;
    }
    Err(Error::ChartDomain("junction fixed point did not converge".into()))
}


/// Finite-difference derivatives of the chart against the tangent basis.
#[derive(Clone, Debug)]
pub struct ChartDerivativeReport {
    /// ‖∂_p chart − (normalized v)‖∞ for p = a₁, a₂, r, γ, θ.
    pub errors: [f64; 5],
    pub max_error: f64,
    /// Numerical rank of the five sampled derivative columns.
    pub rank: usize,
}

/// Step of the central differences in `chart_derivative_check`.
pub const CHART_FD_STEP: f64 = 1e-5;

/// Central differences of the chart in (a₁, a₂, r, γ, θ), compared nodewise
/// with −v¹, −v², v⁴, v⁵ and −o₃v³ (o₃ = r sin(π/3)/sin γ) respectively.
pub fn chart_derivative_check(reference: &Reference) -> Result<ChartDerivativeReport> {
    let grid = &reference.grid;
    let base = reference.bubble.params;
    let basis = null_basis(&reference.bubble, grid);
    let o3 = base.r * FRAC_PI_3.sin() / base.gamma.sin();
    // (parameter index into to_array, basis vector, factor)
    let targets: [(usize, usize, f64); 5] = [(0, 0, -1.0), (1, 1, -1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 2, -o3)];
    let mut errors = [0.0; 5];
    let mut cols = DMatrix::zeros(grid.total(), 5);
    for (c, &(p, b, factor)) in targets.iter().enumerate() {
        let shifted = |sign: f64| -> Result<Vec<f64>> {
            let mut a = base.to_array();
            a[p] += sign * CHART_FD_STEP;
            Ok(grid.flatten(&equilibrium_chart(reference, BubbleParams::from_array(a))?.field.rho))
        };
        let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
        for k in 0..grid.total() {
            let d = (plus[k] - minus[k]) / (2.0 * CHART_FD_STEP);
            cols[(k, c)] = d;
            errors[c] = f64::max(errors[c], (d - factor * basis[b][k]).abs());
        }
    }
    let sv = cols.svd(false, false).singular_values;
    let rank = sv.iter().filter(|&&v| v > 1e-8 * sv.max()).count();
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(ChartDerivativeReport { errors, max_error, rank })
}

/// Initial perturbation of a stability run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Recipe {
    /// Random smooth field (low Chebyshev modes per arc) scaled to sup-norm ε.
    Generic,
    /// ε·v^(k), k = 1..=5.
    NullMode(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConfig {
    pub bubble: BubbleParams,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub tangential: Tangential,
    pub recipe: Recipe,
    /// Keep world-frame curves every this many steps (0 = never).
    pub snapshot_every: usize,
    pub flow: FlowConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            bubble: BubbleParams::new(1.0, FRAC_PI_3),
            n: 64,
            dt: 1e-3,
            t_end: 5.0,
            epsilon: 1e-2,
            seed: 7,
            tangential: Tangential::default(),
            recipe: Recipe::Generic,
            snapshot_every: 0,
            flow: FlowConfig::default(),
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Domain(format!("{key}: {why}")));
        let BubbleParams { a1, a2, r, gamma, theta } = self.bubble;
        if !(r > 0.0 && r.is_finite()) {
            return bad("r", format!("must be positive, got {r}"));
        }
        if !(gamma > 0.0 && gamma < 2.0 * FRAC_PI_3) {
            return bad("gamma", format!("must lie in (0, 2π/3), got {gamma}"));
        }
        for (key, v) in [("a1", a1), ("a2", a2), ("theta", theta)] {
            if !v.is_finite() {
                return bad(key, format!("must be finite, got {v}"));
            }
        }
        if self.n < 16 {
            return bad("n", format!("need at least 16 nodes per arc, got {}", self.n));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be positive, got {}", self.t_end));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 0.05 * r) {
            return bad("epsilon", format!("must be in [0, 0.05 r], got {}", self.epsilon));
        }
        if let Tangential::Cutoff(w) = self.tangential {
            if !(w > 0.0 && w <= 0.3) {
                return bad("window", format!("must be in (0, 0.3], got {w}"));
            }
        }
        if let Recipe::NullMode(k) = self.recipe {
            if !(1..=5).contains(&k) {
                return bad("recipe", format!("null mode index must be 1..=5, got {k}"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// One row of the trajectory trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub length: f64,
    pub a1: f64,
    pub a2: f64,
    pub max_g: f64,
    pub compat: f64,
    /// ‖ρ(t) − ρ_∞‖∞, ρ_∞ the chart field of the fitted limit.
    pub dist_to_eq: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    /// (step, world-frame curves) at the requested cadence, first and last
    /// step always included when snapshots are on.
    pub snapshots: Vec<(usize, [Vec<Vec2>; 3])>,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub config: StabilityConfig,
    pub trace: FlowTrace,
    /// Smallest eigenvalue outside the null cluster at the same n.
    pub lambda6: f64,
    /// −slope of log ‖ρ(t) − ρ_∞‖∞ over t ∈ [T/2, T].
    pub fitted_rate: f64,
    pub limit_params: BubbleParams,
    /// Level-set RMS residual of the final curves at `limit_params`.
    pub limit_residual: f64,
    /// max_t |A_j(t) − A_j(0)|/A_j(0).
    pub area_error: f64,
    /// |A_j(limit_params) − A_j(0)|/A_j(0).
    pub limit_area_error: f64,
    /// Largest single-step increase of the length (0 when monotone).
    pub length_violation: f64,
    pub initial_areas: [f64; 2],
    pub final_areas: [f64; 2],
}

/// Per-step length increase tolerated as round-off.
pub const LENGTH_TOLERANCE: f64 = 1e-10;

impl StabilityReport {
    pub fn length_monotone(&self) -> bool {
        self.length_violation <= LENGTH_TOLERANCE
    }

    pub fn rate_ratio(&self) -> f64 {
        self.fitted_rate / self.lambda6
    }

    /// Flat key=value summary.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let e = |v: f64| format!("{v:.16e}");
        let p = self.limit_params;
        let c = &self.config;
        vec![
            ("a1", e(c.bubble.a1)),
            ("a2", e(c.bubble.a2)),
            ("r", e(c.bubble.r)),
            ("gamma", e(c.bubble.gamma)),
            ("theta", e(c.bubble.theta)),
            ("n", c.n.to_string()),
            ("dt", e(c.dt)),
            ("t_end", e(c.t_end)),
            ("epsilon", e(c.epsilon)),
            ("seed", c.seed.to_string()),
            ("steps", self.trace.rows.len().saturating_sub(1).to_string()),
            ("lambda6", e(self.lambda6)),
            ("fitted_rate", e(self.fitted_rate)),
            ("rate_ratio", e(self.rate_ratio())),
            ("limit_a1", e(p.a1)),
            ("limit_a2", e(p.a2)),
            ("limit_r", e(p.r)),
            ("limit_gamma", e(p.gamma)),
            ("limit_theta", e(p.theta)),
            ("limit_residual", e(self.limit_residual)),
            ("area_error", e(self.area_error)),
            ("limit_area_error", e(self.limit_area_error)),
            ("length_violation", e(self.length_violation)),
            ("length_monotone", self.length_monotone().to_string()),
            ("norm", "sup-norm of rho; stands in for the C^{4+alpha} norm".to_string()),
        ]
    }
}

fn chebyshev(m: usize, t: f64) -> f64 {
    (m as f64 * t.clamp(-1.0, 1.0).acos()).cos()
}

/// Raw (not yet admissible) initial field for a recipe.
pub fn recipe_field(bubble: &StandardBubble, grid: &ArcGrid, recipe: Recipe, epsilon: f64, seed: u64) -> ArcSamples {
    match recipe {
        Recipe::NullMode(k) => {
            let v = &null_basis(bubble, grid)[k - 1];
            let mut u = grid.unflatten(v);
            u.iter_mut().flatten().for_each(|x| *x *= epsilon);
            u
        }
        Recipe::Generic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coef: Vec<[f64; 6]> = (0..3)
                .map(|_| std::array::from_fn(|m| rng.gen_range(-1.0..1.0) / (1 + m) as f64))
                .collect();
            let mut u = grid.sample(|i, x| {
                let t = x / bubble.half_len[i];
                (0..6).map(|m| coef[i][m] * chebyshev(m, t)).sum()
            });
            let top = u.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            if top > 0.0 {
                u.iter_mut().flatten().for_each(|x| *x *= epsilon / top);
            }
            u
        }
    }
}

fn world_curves(reference: &Reference, field: &PerturbationField) -> [Vec<Vec2>; 3] {
    reference.canonical_curves(field).map(|c| c.into_iter().map(|p| reference.bubble.to_world(p)).collect())
}

fn level_set_residuals(curves: &[Vec<Vec2>; 3], p: [f64; 5]) -> Option<Vec<f64>> {
    let target = StandardBubble::new(BubbleParams::from_array(p)).ok()?;
    let BubbleParams { r, gamma, .. } = target.params;
    Some(
        curves
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |q| (i, *q)))
            .map(|(i, q)| level_set_jet(r, gamma, i, target.to_canonical(q)).value)
            .collect(),
    )
}

/// Standard bubble whose level sets best fit the curves (Gauss–Newton over
/// all five parameters). Start: (r, γ) from the polygon areas, centre and
/// orientation from the junction chord.
pub fn fit_limit(curves: &[Vec<Vec2>; 3], areas: [f64; 2]) -> Result<(BubbleParams, f64)> {
    let (r0, g0) = bubble_for_areas(areas[0], areas[1])?;
    let canon = StandardBubble::new(BubbleParams::new(r0, g0))?;
    let (pp, pm) = (curves[0][curves[0].len() - 1], curves[0][0]);
    let chord = pp - pm;
    let theta = chord.y.atan2(chord.x) - std::f64::consts::FRAC_PI_2;
    let mid_canon = 0.5 * (canon.junctions[0] + canon.junctions[1]);
    let (s, c) = theta.sin_cos();
    let mid = 0.5 * (pp + pm);
    let a = mid - Vec2::new(c * mid_canon.x - s * mid_canon.y, s * mid_canon.x + c * mid_canon.y);
    let mut p = [a.x, a.y, r0, g0, theta];
    let eval = |p: [f64; 5]| level_set_residuals(curves, p).ok_or_else(|| Error::Numerical("limit fit left the valid parameter range".into()));
    let mut res = DVector::from_vec(eval(p)?);
    for _ in 0..40 {
        let step = 1e-7;
        let mut jac = DMatrix::zeros(res.len(), 5);
        for k in 0..5 {
            let (mut hi, mut lo) = (p, p);
            hi[k] += step;
            lo[k] -= step;
            let col = (DVector::from_vec(eval(hi)?) - DVector::from_vec(eval(lo)?)) / (2.0 * step);
            jac.set_column(k, &col);
        }
        let dx = jac
            .svd(true, true)
            .solve(&res, 1e-14)
            .map_err(|e| Error::Numerical(format!("limit fit: {e}")))?;
        for k in 0..5 {
            p[k] -= dx[k];
        }
        res = DVector::from_vec(eval(p)?);
        if dx.amax() < 1e-13 {
            break;
        }
    }
    let rms = (res.norm_squared() / res.len() as f64).sqrt();
    Ok((BubbleParams::from_array(p), rms))
}

/// Least-squares slope of log y against t.
fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (*a, b.ln())).collect();
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt).powi(2)));
    sxy / sxx
}

/// Perturb the standard bubble, evolve, identify the limit on the
/// equilibrium manifold and measure the relaxation rate.
/// Independent runs in parallel; each run is sequential. Results keep the
/// order of `configs`.
pub fn stability_sweep(configs: &[StabilityConfig]) -> Vec<Result<StabilityReport>> {
    configs.par_iter().map(stability_run).collect()
}

pub fn stability_run(config: &StabilityConfig) -> Result<StabilityReport> {
    config.validate()?;
    let bubble = StandardBubble::new(config.bubble)?;
    let grid = ArcGrid::new(&bubble, config.n)?.with_tangential(config.tangential)?;
    let reference = Reference::new(&bubble, &grid)?;
    let raw = recipe_field(&bubble, &grid, config.recipe, config.epsilon, config.seed);
    let field = project_admissible(&reference, &raw)?;
    let mut state = FlowState::new(&reference, field)?;

    let mut rows = Vec::with_capacity(config.steps() + 1);
    let mut fields = Vec::with_capacity(config.steps() + 1);
    let mut snapshots = Vec::new();
    let mut record = |state: &FlowState, step: usize, last: bool| -> Result<()> {
        let ev = evaluate(&reference, &state.field)?;
        let (length, a1, a2) = diagnostics_from(&reference, &state.field, &ev);
        let res = residuals_from(&ev, &state.field);
        rows.push(TraceRow { t: state.t, length, a1, a2, max_g: res.max_g(), compat: res.max_compat(), dist_to_eq: f64::NAN });
        fields.push(grid.flatten(&state.field.rho));
        if config.snapshot_every > 0 && (step % config.snapshot_every == 0 || last) {
            snapshots.push((step, world_curves(&reference, &state.field)));
        }
        Ok(())
    };
    let steps = config.steps();
    record(&state, 0, steps == 0)?;
    for step in 1..=steps {
        state = step_implicit(&reference, &state, config.dt, &config.flow)?;
        record(&state, step, step == steps)?;
    }

    let initial_areas = [rows[0].a1, rows[0].a2];
    let last = *rows.last().expect("at least one row");
    let final_areas = [last.a1, last.a2];
    let (limit_params, limit_residual) = fit_limit(&world_curves(&reference, &state.field), final_areas)?;
    let rho_inf = grid.flatten(&equilibrium_chart(&reference, limit_params)?.field.rho);
    for (row, f) in rows.iter_mut().zip(&fields) {
        row.dist_to_eq = f.iter().zip(&rho_inf).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
    }
    let half = config.t_end / 2.0;
    let (ts, ds): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.t >= half - 1e-12).map(|r| (r.t, r.dist_to_eq)).unzip();
    let fitted_rate = -log_slope(&ts, &ds);

    let pencil = assemble_pencil(&bubble, &grid);
    let lambda6 = spectrum(&pencil, 6)?.lambda6.re;

    let rel = |a: [f64; 2]| {
        (0..2).map(|j| ((a[j] - initial_areas[j]) / initial_areas[j]).abs()).fold(0.0, f64::max)
    };
    let area_error = rows.iter().map(|r| rel([r.a1, r.a2])).fold(0.0, f64::max);
    let limit_area_error = rel(StandardBubble::new(limit_params)?.enclosed_areas());
    let length_violation = rows.windows(2).map(|w| w[1].length - w[0].length).fold(0.0, f64::max);

    Ok(StabilityReport {
        config: config.clone(),
        trace: FlowTrace { rows, snapshots },
        lambda6,
        fitted_rate,
        limit_params,
        limit_residual,
        area_error,
        limit_area_error,
        length_violation,
        initial_areas,
        final_areas,
    })
}
