//! Closed-form geometry of standard planar double bubbles.
//!
//! Everything is computed in the canonical frame — θ = 0, centre of arc 1 at
//! the origin, junctions symmetric about the x-axis — and then mapped rigidly
//! into the world frame (rotate by θ, translate by (a₁, a₂)).
//!
//! Each arc is parameterized by signed arc length `x ∈ [−l_i, l_i]` with
//! `x = +l_i` at the upper junction p₊. In the canonical frame an arc with
//! curvature κ and midpoint `(m, 0)` is
//!
//! ```text
//! σ(x) = (m + (cos κx − 1)/κ, sin κx / κ),   n(x) = −(cos κx, sin κx)
//! ```
//!
//! written with `sinc` so that the flat middle arc at γ = π/3 needs no branch.

use std::f64::consts::{FRAC_PI_3, PI};

use crate::fd::{sin_defect, sinc};
use crate::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SIN_PI3: f64 = 0.866_025_403_784_438_6;
const TWO_PI3: f64 = 2.0 * FRAC_PI_3;

/// Width of the γ = π/3 limit branch.
pub const SYMMETRIC_BRANCH: f64 = 1e-8;

pub fn near_symmetric(gamma: f64) -> bool {
    (gamma - FRAC_PI_3).abs() < SYMMETRIC_BRANCH
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BubbleParams {
    pub a1: f64,
    pub a2: f64,
    pub r: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl BubbleParams {
    /// Canonically placed bubble (a = 0, θ = 0).
    pub fn new(r: f64, gamma: f64) -> Self {
        BubbleParams { a1: 0.0, a2: 0.0, r, gamma, theta: 0.0 }
    }

    /// Order: a1, a2, r, gamma, theta.
    pub fn to_array(&self) -> [f64; 5] {
        [self.a1, self.a2, self.r, self.gamma, self.theta]
    }

    pub fn from_array(p: [f64; 5]) -> Self {
        BubbleParams { a1: p[0], a2: p[1], r: p[2], gamma: p[3], theta: p[4] }
    }

    pub fn validate(&self) -> Result<()> {
        check_domain(self.r, self.gamma)?;
        if !(self.a1.is_finite() && self.a2.is_finite() && self.theta.is_finite()) {
            return Err(Error::Domain("non-finite translation or rotation".into()));
        }
        Ok(())
    }
}

fn check_domain(r: f64, gamma: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    if !(gamma > 0.0 && gamma < TWO_PI3) {
        return Err(Error::Domain(format!("gamma must lie in (0, 2π/3), got {gamma}")));
    }
    Ok(())
}

pub fn curvature_triple(r: f64, gamma: f64) -> Result<[f64; 3]> {
    check_domain(r, gamma)?;
    let k1 = -1.0 / r;
    let sp = (gamma + FRAC_PI_3).sin();
    Ok([k1, k1 * (gamma - FRAC_PI_3).sin() / sp, k1 * (gamma - PI).sin() / sp])
}

pub fn arc_lengths(r: f64, gamma: f64) -> Result<[f64; 3]> {
    check_domain(r, gamma)?;
    let sp = (gamma + FRAC_PI_3).sin();
    let l2 = if near_symmetric(gamma) {
        // (γ−π/3)/sin(γ−π/3) → 1
        r * sp
    } else {
        r * sp * (gamma - FRAC_PI_3) / (gamma - FRAC_PI_3).sin()
    };
    Ok([r * (gamma + FRAC_PI_3), l2, r * sp * (gamma - PI) / (gamma - PI).sin()])
}

/// q_i = −(κ_j − κ_k)/√3 for cyclic (i, j, k).
pub fn junction_constants(kappa: [f64; 3]) -> [f64; 3] {
    let q = |i: usize| -(kappa[(i + 1) % 3] - kappa[(i + 2) % 3]) / SQRT3;
    [q(0), q(1), q(2)]
}

/// The cotangent closed forms of the junction constants.
pub fn junction_constants_cot(r: f64, gamma: f64) -> Result<[f64; 3]> {
    let k = curvature_triple(r, gamma)?;
    let cot = |t: f64| t.cos() / t.sin();
    let q2 = if near_symmetric(gamma) {
        k[0] / SIN_PI3
    } else {
        cot(gamma - FRAC_PI_3) * k[1]
    };
    Ok([cot(gamma + FRAC_PI_3) * k[0], q2, cot(gamma - PI) * k[2]])
}

fn rotate(theta: f64, v: Vec2) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StandardBubble {
    pub params: BubbleParams,
    pub kappa: [f64; 3],
    pub half_len: [f64; 3],
    pub q: [f64; 3],
    /// World-frame centres; the middle one is absent when κ₂ = 0.
    pub centers: [Option<Vec2>; 3],
    pub radii: [Option<f64>; 3],
    /// `[p₊, p₋]` in the world frame.
    pub junctions: [Vec2; 2],
    /// Canonical-frame x-coordinate of each arc midpoint.
    midpoint: [f64; 3],
}

pub fn standard_bubble(params: BubbleParams) -> Result<StandardBubble> {
    StandardBubble::new(params)
}

impl StandardBubble {
    pub fn new(params: BubbleParams) -> Result<Self> {
        params.validate()?;
        let BubbleParams { r, gamma, .. } = params;
        let kappa = curvature_triple(r, gamma)?;
        let half_len = arc_lengths(r, gamma)?;
        let q = junction_constants(kappa);

        let sg = gamma.sin();
        let o3 = SIN_PI3 / sg * r;
        let r3 = (TWO_PI3 - gamma).sin() / sg * r;
        let (o2, r2) = if near_symmetric(gamma) {
            (None, None)
        } else {
            let s = (gamma - FRAC_PI_3).sin();
            (Some(TWO_PI3.sin() / s * r), Some(((TWO_PI3 - gamma).sin() / s).abs() * r))
        };
        let midpoint = [
            -r,
            r * (0.5 * gamma).sin() / (0.5 * gamma - PI / 6.0).cos(),
            r * (SIN_PI3 + (gamma + FRAC_PI_3).sin()) / sg,
        ];

        let mut b = StandardBubble {
            params,
            kappa,
            half_len,
            q,
            centers: [None; 3],
            radii: [Some(r), r2, Some(r3)],
            junctions: [Vec2::zeros(); 2],
            midpoint,
        };
        b.centers = [
            Some(b.to_world(Vec2::zeros())),
            o2.map(|o| b.to_world(Vec2::new(o, 0.0))),
            Some(b.to_world(Vec2::new(o3, 0.0))),
        ];
        let pc = Vec2::new(-r * (gamma + FRAC_PI_3).cos(), r * (gamma + FRAC_PI_3).sin());
        b.junctions = [b.to_world(pc), b.to_world(Vec2::new(pc.x, -pc.y))];
        Ok(b)
    }

    pub fn to_world(&self, v: Vec2) -> Vec2 {
        rotate(self.params.theta, v) + Vec2::new(self.params.a1, self.params.a2)
    }

    pub fn to_canonical(&self, p: Vec2) -> Vec2 {
        rotate(-self.params.theta, p - Vec2::new(self.params.a1, self.params.a2))
    }

    pub fn rotate_to_world(&self, v: Vec2) -> Vec2 {
        rotate(self.params.theta, v)
    }

    fn check_x(&self, i: usize, x: f64) -> Result<()> {
        if i > 2 {
            return Err(Error::Range(format!("arc index {i} out of range")));
        }
        let l = self.half_len[i];
        if x.abs() > l * (1.0 + 1e-14) {
            return Err(Error::Range(format!("|x| = {} exceeds l_{} = {l}", x.abs(), i + 1)));
        }
        Ok(())
    }

    /// σ_i(x) in the canonical frame (no range check).
    pub fn canonical_point(&self, i: usize, x: f64) -> Vec2 {
        let k = self.kappa[i];
        let hx = 0.5 * k * x;
        Vec2::new(self.midpoint[i] - x * hx.sin() * sinc(hx), x * sinc(k * x))
    }

    /// Unit tangent dσ/dx in the canonical frame.
    pub fn canonical_tangent(&self, i: usize, x: f64) -> Vec2 {
        let (s, c) = (self.kappa[i] * x).sin_cos();
        Vec2::new(-s, c)
    }

    /// n_i*(x) = −(cos κ_i x, sin κ_i x) in the canonical frame.
    pub fn canonical_normal(&self, i: usize, x: f64) -> Vec2 {
        let (s, c) = (self.kappa[i] * x).sin_cos();
        Vec2::new(-c, -s)
    }

    pub fn arc_point(&self, i: usize, x: f64) -> Result<Vec2> {
        self.check_x(i, x)?;
        Ok(self.to_world(self.canonical_point(i, x)))
    }

    pub fn normal_at(&self, i: usize, x: f64) -> Result<Vec2> {
        self.check_x(i, x)?;
        Ok(rotate(self.params.theta, self.canonical_normal(i, x)))
    }

    pub fn tangent_at(&self, i: usize, x: f64) -> Result<Vec2> {
        self.check_x(i, x)?;
        Ok(rotate(self.params.theta, self.canonical_tangent(i, x)))
    }

    /// ½∫(σ × σ') dx over arc i in the direction of increasing x.
    fn green_integral(&self, i: usize) -> f64 {
        let (k, l, m) = (self.kappa[i], self.half_len[i], self.midpoint[i]);
        let u = k * l;
        // ∫ m cos κx + (1 − cos κx)/κ
        0.5 * (2.0 * m * l * sinc(u) + 2.0 * l * l * sin_defect(u))
    }

    /// Areas (A₁, A₂) of the regions bounded by arcs 1–2 and arcs 2–3.
    pub fn enclosed_areas(&self) -> [f64; 2] {
        let g = [self.green_integral(0), self.green_integral(1), self.green_integral(2)];
        [g[1] - g[0], g[2] - g[1]]
    }

    pub fn total_length(&self) -> f64 {
        2.0 * self.half_len.iter().sum::<f64>()
    }
}

pub fn arc_point(bubble: &StandardBubble, i: usize, x: f64) -> Result<Vec2> {
    bubble.arc_point(i, x)
}

pub fn normal_at(bubble: &StandardBubble, i: usize, x: f64) -> Result<Vec2> {
    bubble.normal_at(i, x)
}

pub fn enclosed_areas(bubble: &StandardBubble) -> [f64; 2] {
    bubble.enclosed_areas()
}

/// Value, gradient and parameter derivatives of a level-set function G_i.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetJet {
    pub value: f64,
    pub grad: Vec2,
    pub d_r: f64,
    pub d_gamma: f64,
}

/// Level-set functions of the canonical bubble (r, γ): Γ_i ⊂ {G_i = 0},
/// ∇G_i = n_i* on Γ_i and G₁ + G₂ + G₃ ≡ 0. All derivatives are exact for
/// arbitrary σ, not only on the arcs.
pub fn level_set_jet(r: f64, gamma: f64, i: usize, sigma: Vec2) -> LevelSetJet {
    let s2 = sigma.norm_squared();
    match i {
        0 => LevelSetJet {
            value: (s2 - r * r) / (2.0 * r),
            grad: sigma / r,
            d_r: -s2 / (2.0 * r * r) - 0.5,
            d_gamma: 0.0,
        },
        1 | 2 => {
            let (sp, cp) = (gamma + FRAC_PI_3).sin_cos();
            let (sm, cm) = (gamma - FRAC_PI_3).sin_cos();
            let (spi, cpi) = (gamma - PI).sin_cos();
            // G = (A|σ|² + 2 r B σ₁ − r² C)/(2 r sin(γ+π/3))
            let (a, b, c, da, dc) = if i == 1 {
                (sm, -SIN_PI3, spi, cm, cpi)
            } else {
                (spi, SIN_PI3, sm, cpi, cm)
            };
            let num = a * s2 + 2.0 * r * b * sigma.x - r * r * c;
            let den = 2.0 * r * sp;
            LevelSetJet {
                value: num / den,
                grad: (a * sigma + Vec2::new(r * b, 0.0)) / (r * sp),
                d_r: -a * s2 / (2.0 * r * r * sp) - c / (2.0 * sp),
                d_gamma: (da * s2 - r * r * dc) / den - num * cp / (den * sp),
            }
        }
        _ => panic!("arc index {i} out of range"),
    }
}

/// Standard bubble with prescribed areas: returns (r, γ).
pub fn bubble_for_areas(a1: f64, a2: f64) -> Result<(f64, f64)> {
    if !(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
        return Err(Error::Domain(format!("areas must be positive, got ({a1}, {a2})")));
    }
    let unit = StandardBubble::new(BubbleParams::new(1.0, FRAC_PI_3))?.enclosed_areas()[0];
    // Solve on the normalised problem so that the scaling law holds exactly.
    let scale = ((a1 + a2) / (2.0 * unit)).sqrt();
    let t = [a1 / (scale * scale), a2 / (scale * scale)];
    if a1 == a2 {
        return Ok((scale, FRAC_PI_3));
    }
    let areas = |r: f64, g: f64| -> Result<[f64; 2]> {
        Ok(StandardBubble::new(BubbleParams::new(r, g))?.enclosed_areas())
    };
    let resid = |v: [f64; 2]| ((v[0] - t[0]).powi(2) + (v[1] - t[1]).powi(2)).sqrt();
    let tol = 1e-12 * (t[0] + t[1]);
    let (mut r, mut g) = (1.0, FRAC_PI_3);
    let mut f = areas(r, g)?;
    for _ in 0..100 {
        let res = resid(f);
        if res <= tol {
            return Ok((scale * r, g));
        }
        let hr = 1e-6 * r;
        let hg = 1e-6;
        let (fr_p, fr_m) = (areas(r + hr, g)?, areas(r - hr, g)?);
        let (fg_p, fg_m) = (
            areas(r, (g + hg).min(TWO_PI3 - 1e-12))?,
            areas(r, (g - hg).max(1e-12))?,
        );
        let j = nalgebra::Matrix2::new(
            (fr_p[0] - fr_m[0]) / (2.0 * hr),
            (fg_p[0] - fg_m[0]) / (2.0 * hg),
            (fr_p[1] - fr_m[1]) / (2.0 * hr),
            (fg_p[1] - fg_m[1]) / (2.0 * hg),
        );
        let rhs = nalgebra::Vector2::new(t[0] - f[0], t[1] - f[1]);
        let step = j
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular area Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let (rn, gn) = (r + lambda * step.x, g + lambda * step.y);
            if rn > 0.0 && gn > 0.0 && gn < TWO_PI3 {
                let fnew = areas(rn, gn)?;
                if resid(fnew) < res || lambda < 1e-3 {
                    r = rn;
                    g = gn;
                    f = fnew;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::Numerical(format!(
                    "area Newton stalled at r = {}, gamma = {g}",
                    scale * r
                )));
            }
        }
    }
    if resid(f) <= tol {
        Ok((scale * r, g))
    } else {
        Err(Error::Numerical(format!(
            "area Newton did not converge: last iterate r = {}, gamma = {g}",
            scale * r
        )))
    }
}

/// sin(γ+π/3) + sin(γ−π/3) + sin(γ−π) and the cosine analogue; both vanish.
pub fn trig_sums(gamma: f64) -> (f64, f64) {
    let a = [gamma + FRAC_PI_3, gamma - FRAC_PI_3, gamma - PI];
    (a.iter().map(|t| t.sin()).sum(), a.iter().map(|t| t.cos()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn canon(gamma: f64) -> StandardBubble {
        StandardBubble::new(BubbleParams::new(1.0, gamma)).unwrap()
    }

    #[test]
    fn symmetric_curvatures_and_lengths() {
        let k = curvature_triple(1.0, FRAC_PI_3).unwrap();
        assert_abs_diff_eq!(k[0], -1.0);
        assert_abs_diff_eq!(k[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[2], 1.0, epsilon = 1e-15);
        let l = arc_lengths(1.0, FRAC_PI_3).unwrap();
        assert_abs_diff_eq!(l[0], 2.0 * PI / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[1], SQRT3 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[2], 2.0 * PI / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn right_angle_case() {
        let k = curvature_triple(1.0, PI / 2.0).unwrap();
        // sin(π/6)/sin(5π/6) = 1, sin(−π/2)/sin(5π/6) = −2
        assert_abs_diff_eq!(k[1], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k[2], 2.0, epsilon = 1e-14);
        let b = canon(PI / 2.0);
        let o3 = b.centers[2].unwrap();
        assert_abs_diff_eq!(o3.x, SIN_PI3, epsilon = 1e-14);
        assert_abs_diff_eq!(b.radii[2].unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(curvature_triple(1.0, 0.0).is_err());
        assert!(curvature_triple(1.0, TWO_PI3).is_err());
        assert!(curvature_triple(-1.0, 1.0).is_err());
        assert!(canon(1.0).arc_point(0, 3.0).is_err());
    }

    #[test]
    fn l2_continuous_across_branch() {
        for d in [-1e-8, -0.5e-8, 0.5e-8, 1e-8, 2e-8] {
            let l = arc_lengths(1.0, FRAC_PI_3 + d).unwrap();
            assert!((l[1] - SQRT3 / 2.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn q_symmetric_values() {
        let q = junction_constants([-1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(q[0], 1.0 / SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], -2.0 / SQRT3, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 1.0 / SQRT3, epsilon = 1e-15);
        let qc = junction_constants_cot(1.0, FRAC_PI_3).unwrap();
        assert_abs_diff_eq!(qc[1], -1.0 / SIN_PI3, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_frame() {
        let b = canon(FRAC_PI_3);
        assert!(b.centers[1].is_none());
        assert_abs_diff_eq!(b.centers[2].unwrap().x, 1.0, epsilon = 1e-15);
        for x in [-0.8, 0.0, 0.5] {
            let p = b.arc_point(1, x).unwrap();
            assert_abs_diff_eq!(p.x, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(p.y, x, epsilon = 1e-15);
        }
        let p = b.arc_point(0, 0.0).unwrap();
        assert_abs_diff_eq!(p.x, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.junctions[0].y, SIN_PI3, epsilon = 1e-15);
        assert_abs_diff_eq!(b.junctions[1].y, -SIN_PI3, epsilon = 1e-15);
        let n = b.normal_at(0, 0.0).unwrap();
        assert_abs_diff_eq!(n.x, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn sigma_matches_centre_formula_off_symmetry() {
        // σ₂(x) = (sin(π/3) r/sin(γ−π/3) + cos(κ₂x)/κ₂, sin(κ₂x)/κ₂)
        let g = 1.3;
        let b = canon(g);
        let k2 = b.kappa[1];
        for x in [-0.5, 0.1, 0.6] {
            let p = b.canonical_point(1, x);
            let px = SIN_PI3 / (g - FRAC_PI_3).sin() + (k2 * x).cos() / k2;
            assert_abs_diff_eq!(p.x, px, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, (k2 * x).sin() / k2, epsilon = 1e-12);
        }
    }

    #[test]
    fn green_areas_symmetric() {
        let a = canon(FRAC_PI_3).enclosed_areas();
        let exact = 2.0 * PI / 3.0 + SQRT3 / 4.0;
        assert_abs_diff_eq!(a[0], exact, epsilon = 1e-14);
        assert_abs_diff_eq!(a[1], exact, epsilon = 1e-14);
    }

    #[test]
    fn level_sets_sum_to_zero_and_vanish() {
        let b = canon(0.9);
        let s = Vec2::new(0.3, -0.7);
        let sum: f64 = (0..3).map(|i| level_set_jet(1.0, 0.9, i, s).value).sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-15);
        for i in 0..3 {
            let x = 0.3 * b.half_len[i];
            let j = level_set_jet(1.0, 0.9, i, b.canonical_point(i, x));
            assert_abs_diff_eq!(j.value, 0.0, epsilon = 1e-14);
            let n = b.canonical_normal(i, x);
            assert_abs_diff_eq!((j.grad - n).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn inverse_areas_examples() {
        let a = 2.0 * PI / 3.0 + SQRT3 / 4.0;
        let (r, g) = bubble_for_areas(a, a).unwrap();
        assert_eq!(g, FRAC_PI_3);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        let (r, _) = bubble_for_areas(4.0 * a, 4.0 * a).unwrap();
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-12);
        assert!(bubble_for_areas(-1.0, 1.0).is_err());
    }
}
