//! Graph perturbations over a reference bubble.
//!
//! A perturbed arc is `Φ_i = σ_i + ρ_i n_i* + c_i(x) T_i*` with tangential
//! coefficient `c_i = μ_i⁺ w₊(x) + μ_i⁻ w₋(x)`. The weights make `c_i T_i*`
//! equal μ times the outer conormal at each end (w₊(l) = 1, w₋(−l) = −1, and
//! each weight vanishes at the other end). μ is slaved to the endpoint
//! values of ρ through the junction matrix 𝓙.

use crate::fd::{simpson_weights, DiffOp};
use crate::geometry::{StandardBubble, Vec2};
use crate::{Error, Result};

const INV_SQRT3: f64 = 0.577_350_269_189_625_8;

/// One sample vector per arc.
pub type ArcSamples = [Vec<f64>; 3];

/// μ = −(1/√3)·[[0,1,−1],[−1,0,1],[1,−1,0]]·ρ.
pub fn jay_apply(rho: [f64; 3]) -> [f64; 3] {
    [
        -INV_SQRT3 * (rho[1] - rho[2]),
        -INV_SQRT3 * (rho[2] - rho[0]),
        -INV_SQRT3 * (rho[0] - rho[1]),
    ]
}

pub fn jay_matrix() -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0) * -INV_SQRT3
}

/// Uniform per-arc grids on `[−l_i, l_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcGrid {
    pub n: [usize; 3],
    pub x: ArcSamples,
    pub h: [f64; 3],
    pub tangential: Tangential,
}

/// Widest window that keeps the middle 40% of each arc free; narrower windows
/// make the tangential terms markedly harder to resolve at n = 64.
pub const DEFAULT_WINDOW: f64 = 0.3;

/// How the junction values μ± are spread along an arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tangential {
    /// μ± acts only inside an end window (fraction of the arc length) through
    /// a quintic cutoff; the middle of the arc carries no tangential motion.
    Cutoff(f64),
    /// c(x) interpolates linearly between the two ends. Smooth everywhere, so
    /// equilibria of the continuous problem stay discrete equilibria to the
    /// stencil order.
    Linear,
}

impl Tangential {
    pub fn validate(self) -> Result<Self> {
        if let Tangential::Cutoff(w) = self {
            if !(w > 0.0 && w <= 0.3) {
                return Err(Error::Domain(format!("window fraction must be in (0, 0.3], got {w}")));
            }
        }
        Ok(self)
    }
}

impl Default for Tangential {
    fn default() -> Self {
        Tangential::Linear
    }
}

impl ArcGrid {
    /// `n` nodes on every arc.
    pub fn new(bubble: &StandardBubble, n: usize) -> Result<Self> {
        Self::with_counts(bubble, [n; 3])
    }

    pub fn with_counts(bubble: &StandardBubble, n: [usize; 3]) -> Result<Self> {
        if n.iter().any(|&k| k < 16) {
            return Err(Error::Domain(format!("need at least 16 nodes per arc, got {n:?}")));
        }
        let mut x: ArcSamples = Default::default();
        let mut h = [0.0; 3];
        for i in 0..3 {
            let l = bubble.half_len[i];
            h[i] = 2.0 * l / (n[i] - 1) as f64;
            x[i] = (0..n[i]).map(|k| -l + k as f64 * h[i]).collect();
            x[i][n[i] - 1] = l;
        }
        Ok(ArcGrid { n, x, h, tangential: Tangential::default() })
    }

    pub fn with_tangential(mut self, tangential: Tangential) -> Result<Self> {
        self.tangential = tangential.validate()?;
        Ok(self)
    }

    pub fn with_window(self, window: f64) -> Result<Self> {
        self.with_tangential(Tangential::Cutoff(window))
    }

    pub fn total(&self) -> usize {
        self.n.iter().sum()
    }

    /// Offset of arc `i` in a flattened vector.
    pub fn offset(&self, i: usize) -> usize {
        self.n[..i].iter().sum()
    }

    pub fn zeros(&self) -> ArcSamples {
        [vec![0.0; self.n[0]], vec![0.0; self.n[1]], vec![0.0; self.n[2]]]
    }

    pub fn flatten(&self, u: &ArcSamples) -> Vec<f64> {
        u.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn unflatten(&self, v: &[f64]) -> ArcSamples {
        let mut out = self.zeros();
        let mut k = 0;
        for arc in out.iter_mut() {
            let m = arc.len();
            arc.copy_from_slice(&v[k..k + m]);
            k += m;
        }
        out
    }

    /// Sample `f(arc, x)` on the grid.
    pub fn sample(&self, f: impl Fn(usize, f64) -> f64) -> ArcSamples {
        let mut out = self.zeros();
        for i in 0..3 {
            for (o, &x) in out[i].iter_mut().zip(&self.x[i]) {
                *o = f(i, x);
            }
        }
        out
    }
}

/// Which triple junction: `Plus` sits at x = +l_i.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Plus,
    Minus,
}

impl End {
    pub const BOTH: [End; 2] = [End::Plus, End::Minus];

    pub fn sign(self) -> f64 {
        match self {
            End::Plus => 1.0,
            End::Minus => -1.0,
        }
    }

    pub fn node(self, n: usize) -> usize {
        match self {
            End::Plus => n - 1,
            End::Minus => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationField {
    pub rho: ArcSamples,
    pub mu_plus: [f64; 3],
    pub mu_minus: [f64; 3],
}

impl PerturbationField {
    /// A field with μ = 𝓙ρ at both junctions.
    pub fn admissible(rho: ArcSamples) -> Self {
        let mut f = PerturbationField { rho, mu_plus: [0.0; 3], mu_minus: [0.0; 3] };
        f.sync_mu();
        f
    }

    pub fn zeros(grid: &ArcGrid) -> Self {
        Self::admissible(grid.zeros())
    }

    pub fn endpoint(&self, end: End) -> [f64; 3] {
        let v = |i: usize| self.rho[i][end.node(self.rho[i].len())];
        [v(0), v(1), v(2)]
    }

    pub fn mu(&self, end: End) -> [f64; 3] {
        match end {
            End::Plus => self.mu_plus,
            End::Minus => self.mu_minus,
        }
    }

    /// Recompute μ from the endpoint values of ρ.
    pub fn sync_mu(&mut self) {
        self.mu_plus = jay_apply(self.endpoint(End::Plus));
        self.mu_minus = jay_apply(self.endpoint(End::Minus));
    }

    pub fn sup_norm(&self) -> f64 {
        self.rho.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Quintic smoothstep cutoff: χ(0) = 1, χ(1) = 0, first and second
/// derivatives vanish at both ends. Returns (χ, χ', χ'').
pub fn quintic_cutoff(t: f64) -> (f64, f64, f64) {
    let [c, dc, ddc, _, _] = quintic_cutoff_jet(t);
    (c, dc, ddc)
}

/// χ and its first four derivatives.
pub fn quintic_cutoff_jet(t: f64) -> [f64; 5] {
    if t <= 0.0 {
        return [1.0, 0.0, 0.0, 0.0, 0.0];
    }
    if t >= 1.0 {
        return [0.0; 5];
    }
    let t2 = t * t;
    [
        1.0 - t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        -30.0 * t2 * (1.0 - t) * (1.0 - t),
        -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
        -60.0 * (1.0 - 6.0 * t + 6.0 * t2),
        360.0 - 720.0 * t,
    ]
}

/// Sampled tangential weights w± and their first four x-derivatives, indexed
/// like `End::BOTH` (plus first).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentialProfile {
    pub kind: Tangential,
    pub w: [[Vec<[f64; 5]>; 3]; 2],
}

impl TangentialProfile {
    /// c and its first four derivatives at node k of arc i, for junction
    /// values μ± of that arc.
    #[inline]
    pub fn coefficient(&self, i: usize, k: usize, mu_plus: f64, mu_minus: f64) -> [f64; 5] {
        let (p, m) = (&self.w[0][i][k], &self.w[1][i][k]);
        std::array::from_fn(|d| mu_plus * p[d] + mu_minus * m[d])
    }
}

/// Signed cutoff on an arc of half-length `l`: +1 at x = l, −1 at x = −l,
/// zero outside the end windows of width `2·l·fraction`.
pub fn signed_cutoff(l: f64, fraction: f64, x: f64) -> [f64; 5] {
    let w = 2.0 * l * fraction;
    let t = (l - x.abs()) / w;
    let c = quintic_cutoff_jet(t);
    let sg = x.signum();
    // dt/dx = −sg/w
    [sg * c[0], -c[1] / w, sg * c[2] / w.powi(2), -c[3] / w.powi(3), sg * c[4] / w.powi(4)]
}

/// Weight of `end` at x and its first four derivatives.
pub fn tangential_weight(kind: Tangential, l: f64, end: End, x: f64) -> [f64; 5] {
    match kind {
        Tangential::Linear => [0.5 * (end.sign() + x / l), 0.5 / l, 0.0, 0.0, 0.0],
        Tangential::Cutoff(fraction) => {
            // the nearer end owns the node; ties at x = 0 sit outside both windows
            let owner = if x >= 0.0 { End::Plus } else { End::Minus };
            if owner == end {
                signed_cutoff(l, fraction, x)
            } else {
                [0.0; 5]
            }
        }
    }
}

pub fn tangential_profile(bubble: &StandardBubble, grid: &ArcGrid, kind: Tangential) -> Result<TangentialProfile> {
    let kind = kind.validate()?;
    let w = End::BOTH.map(|end| {
        std::array::from_fn(|i| {
            let l = bubble.half_len[i];
            grid.x[i].iter().map(|&x| tangential_weight(kind, l, end, x)).collect()
        })
    });
    Ok(TangentialProfile { kind, w })
}

/// Accuracy order of the flow's derivative operators. Sixth order keeps the
/// chart-field residual near 1e-6 at n = 64; higher orders lose to round-off
/// in the one-sided fourth-derivative rows.
pub const FD_ORDER: usize = 6;

/// Reference bubble with its grid, cutoff and cached node geometry
/// (canonical frame), shared by the flow and chart code.
#[derive(Clone, Debug)]
pub struct Reference {
    pub bubble: StandardBubble,
    pub grid: ArcGrid,
    pub profile: TangentialProfile,
    pub sigma: [Vec<Vec2>; 3],
    pub tangent: [Vec<Vec2>; 3],
    pub normal: [Vec<Vec2>; 3],
    /// Derivative operators of orders 1..=4, all of accuracy `FD_ORDER`.
    pub d1: [DiffOp; 3],
    pub d2: [DiffOp; 3],
    pub d3: [DiffOp; 3],
    pub d4: [DiffOp; 3],
    pub quad: ArcSamples,
}

impl Reference {
    pub fn new(bubble: &StandardBubble, grid: &ArcGrid) -> Result<Self> {
        let profile = tangential_profile(bubble, grid, grid.tangential)?;
        let geo = |f: &dyn Fn(usize, f64) -> Vec2, i: usize| -> Vec<Vec2> {
            grid.x[i].iter().map(|&x| f(i, x)).collect()
        };
        let pt = |i, x| bubble.canonical_point(i, x);
        let tg = |i, x| bubble.canonical_tangent(i, x);
        let nm = |i, x| bubble.canonical_normal(i, x);
        let op = |d: usize, i: usize| DiffOp::new(grid.n[i], grid.h[i], d, FD_ORDER);
        Ok(Reference {
            bubble: bubble.clone(),
            grid: grid.clone(),
            profile,
            sigma: [geo(&pt, 0), geo(&pt, 1), geo(&pt, 2)],
            tangent: [geo(&tg, 0), geo(&tg, 1), geo(&tg, 2)],
            normal: [geo(&nm, 0), geo(&nm, 1), geo(&nm, 2)],
            d1: [op(1, 0), op(1, 1), op(1, 2)],
            d2: [op(2, 0), op(2, 1), op(2, 2)],
            d3: [op(3, 0), op(3, 1), op(3, 2)],
            d4: [op(4, 0), op(4, 1), op(4, 2)],
            quad: [
                simpson_weights(grid.n[0], grid.h[0]),
                simpson_weights(grid.n[1], grid.h[1]),
                simpson_weights(grid.n[2], grid.h[2]),
            ],
        })
    }

    /// The tangential coefficient and its first four derivatives at node k of
    /// arc i.
    #[inline]
    pub fn tangential(&self, field: &PerturbationField, i: usize, k: usize) -> [f64; 5] {
        self.profile.coefficient(i, k, field.mu_plus[i], field.mu_minus[i])
    }

    /// Canonical-frame curve points Φ_i at the nodes.
    pub fn canonical_curves(&self, field: &PerturbationField) -> [Vec<Vec2>; 3] {
        let mut out: [Vec<Vec2>; 3] = Default::default();
        for i in 0..3 {
            out[i] = (0..self.grid.n[i])
                .map(|k| {
                    let c = self.tangential(field, i, k)[0];
                    self.sigma[i][k] + self.normal[i][k] * field.rho[i][k] + self.tangent[i][k] * c
                })
                .collect();
        }
        out
    }

    /// J_i = |∂_xΦ_i| at the nodes, failing on fold-over.
    pub fn metric(&self, field: &PerturbationField) -> Result<ArcSamples> {
        let mut out = self.grid.zeros();
        for i in 0..3 {
            let k = self.bubble.kappa[i];
            let drho = self.d1[i].apply(&field.rho[i]);
            for j in 0..self.grid.n[i] {
                let [c, dc, ..] = self.tangential(field, i, j);
                let alpha = 1.0 - k * field.rho[i][j] + dc;
                let beta = drho[j] + k * c;
                if alpha <= 0.0 {
                    return Err(Error::FoldOver { arc: i, node: j });
                }
                out[i][j] = (alpha * alpha + beta * beta).sqrt();
            }
        }
        Ok(out)
    }
}

/// World-frame polylines Φ_i at the grid nodes.
pub fn push_forward(
    bubble: &StandardBubble,
    grid: &ArcGrid,
    field: &PerturbationField,
) -> Result<[Vec<Vec2>; 3]> {
    let reference = Reference::new(bubble, grid)?;
    reference.metric(field)?;
    let mut curves = reference.canonical_curves(field);
    for c in curves.iter_mut() {
        for p in c.iter_mut() {
            *p = bubble.to_world(*p);
        }
    }
    Ok(curves)
}

/// Largest pairwise distance between the endpoint images at either junction.
pub fn junction_mismatch(curves: &[Vec<Vec2>; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for pick in [0usize, 1] {
        let p: Vec<Vec2> = curves
            .iter()
            .map(|c| if pick == 0 { c[0] } else { c[c.len() - 1] })
            .collect();
        for a in 0..3 {
            for b in a + 1..3 {
                worst = worst.max((p[a] - p[b]).norm());
            }
        }
    }
    worst
}

/// Split a junction displacement q into normal parts ρ_i = ⟨q, n_i*⟩ and
/// conormal parts μ_i = ⟨q, ν_i⟩ (world frame).
pub fn decompose_junction_displacement(bubble: &StandardBubble, end: End, q: Vec2) -> ([f64; 3], [f64; 3]) {
    let mut rho = [0.0; 3];
    let mut mu = [0.0; 3];
    for i in 0..3 {
        let x = end.sign() * bubble.half_len[i];
        let n = bubble.rotate_to_world(bubble.canonical_normal(i, x));
        let nu = bubble.rotate_to_world(bubble.canonical_tangent(i, x)) * end.sign();
        rho[i] = q.dot(&n);
        mu[i] = q.dot(&nu);
    }
    (rho, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BubbleParams;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_3;

    fn setup() -> (StandardBubble, ArcGrid) {
        let b = StandardBubble::new(BubbleParams::new(1.0, FRAC_PI_3)).unwrap();
        let g = ArcGrid::new(&b, 33).unwrap();
        (b, g)
    }

    #[test]
    fn jay_examples() {
        assert_eq!(jay_apply([2.0, 2.0, 2.0]), [0.0, 0.0, 0.0]);
        let mu = jay_apply([1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(mu[1], INV_SQRT3, epsilon = 1e-16);
        assert_abs_diff_eq!(mu[2], -INV_SQRT3, epsilon = 1e-16);
    }

    #[test]
    fn grid_endpoints_exact() {
        let (b, g) = setup();
        for i in 0..3 {
            assert_eq!(g.x[i][0], -b.half_len[i]);
            assert_eq!(*g.x[i].last().unwrap(), b.half_len[i]);
        }
        assert!(ArcGrid::new(&b, 8).is_err());
    }

    #[test]
    fn weights_give_the_outer_conormal_at_each_end() {
        let (b, g) = setup();
        for kind in [Tangential::Cutoff(0.2), Tangential::Linear] {
            let p = tangential_profile(&b, &g, kind).unwrap();
            for i in 0..3 {
                let n = g.n[i];
                // c T* at the ends must equal μ·(outer conormal) = ±μ T*
                assert_eq!(p.coefficient(i, n - 1, 1.0, 0.0)[0], 1.0);
                assert_eq!(p.coefficient(i, 0, 0.0, 1.0)[0], -1.0);
                assert_eq!(p.coefficient(i, n - 1, 0.0, 1.0)[0], 0.0);
                assert_eq!(p.coefficient(i, 0, 1.0, 0.0)[0], 0.0);
            }
        }
        let cut = tangential_profile(&b, &g, Tangential::Cutoff(0.2)).unwrap();
        assert_eq!(cut.coefficient(0, g.n[0] / 2, 1.0, 1.0), [0.0; 5]);
        assert!(tangential_profile(&b, &g, Tangential::Cutoff(0.31)).is_err());
    }

    #[test]
    fn zero_field_samples_reference() {
        let (b, g) = setup();
        let c = push_forward(&b, &g, &PerturbationField::zeros(&g)).unwrap();
        for i in 0..3 {
            for (p, &x) in c[i].iter().zip(&g.x[i]) {
                assert_abs_diff_eq!((p - b.arc_point(i, x).unwrap()).norm(), 0.0, epsilon = 1e-15);
            }
        }
        assert!(junction_mismatch(&c) < 1e-15);
    }

    #[test]
    fn missing_mu_opens_the_junction() {
        let (b, g) = setup();
        let eps = 1e-6;
        let mut rho = g.zeros();
        rho[0][g.n[0] - 1] = eps;
        rho[2][g.n[2] - 1] = -eps;
        let open = PerturbationField { rho: rho.clone(), mu_plus: [0.0; 3], mu_minus: [0.0; 3] };
        let c_open = push_forward(&b, &g, &open).unwrap();
        // ρ_i n_i at unit angles 2π/3 apart: every pairwise gap is ε
        assert!((junction_mismatch(&c_open) - eps).abs() < 1e-3 * eps);
        let closed = PerturbationField::admissible(rho);
        let c_closed = push_forward(&b, &g, &closed).unwrap();
        assert!(junction_mismatch(&c_closed) < 1e-15);
        // the true junction moved by 2ε/√3 along arc 2
        let moved = (c_closed[1][g.n[1] - 1] - c_open[1][g.n[1] - 1]).norm();
        assert!((moved - 2.0 * eps * INV_SQRT3).abs() < 1e-3 * eps);
    }

    #[test]
    fn contact_decomposition_recovers_jay() {
        for gamma in [0.5, FRAC_PI_3, 1.7] {
            let b = StandardBubble::new(BubbleParams { a1: 0.2, a2: -0.1, r: 1.3, gamma, theta: 0.7 }).unwrap();
            for end in End::BOTH {
                let (rho, mu) = decompose_junction_displacement(&b, end, Vec2::new(0.3, -0.8));
                assert_abs_diff_eq!(rho.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
                let j = jay_apply(rho);
                for i in 0..3 {
                    assert_abs_diff_eq!(mu[i], j[i], epsilon = 1e-14);
                }
            }
        }
    }
}
