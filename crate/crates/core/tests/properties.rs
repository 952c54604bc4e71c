use std::f64::consts::FRAC_PI_3;

use bubbleflow::flow::{boundary_residuals, project_admissible, stationary_residual};
use bubbleflow::geometry::{bubble_for_areas, level_set_jet};
use bubbleflow::io::fmt_f64;
use bubbleflow::lab::{equilibrium_chart, recipe_field, stability_run, stability_sweep, Recipe};
use bubbleflow::linops::{bilinear_i, c_of, curvature_variation, null_basis, sample_constraint_set};
use bubbleflow::perturbation::{decompose_junction_displacement, jay_apply, End, Reference};
use bubbleflow::{ArcGrid, BubbleParams, StabilityConfig, StandardBubble, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(gamma: f64, n: usize) -> (StandardBubble, ArcGrid) {
    let b = StandardBubble::new(BubbleParams::new(1.0, gamma)).unwrap();
    let g = ArcGrid::new(&b, n).unwrap();
    (b, g)
}

fn sup<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn second_variation_is_positive_on_the_constraint_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for gamma in [0.4, FRAC_PI_3, 1.7] {
        let (b, g) = setup(gamma, 256);
        for _ in 0..25 {
            let u = sample_constraint_set(&g, &mut rng);
            let norm2: f64 = u.iter().flatten().map(|v| v * v).sum::<f64>() * g.h[0];
            let i = bilinear_i(&b, &g, &u, &u);
            assert!(i > 1e-6 * norm2, "γ = {gamma}: I(u, u) = {i:e}");
        }
    }
}

#[test]
fn null_fields_have_constant_curvature_variation() {
    // ∂²v + κ²v is constant on every arc, up to the stencil error
    for gamma in [0.6, FRAC_PI_3, 1.5] {
        let mut prev = [f64::INFINITY; 5];
        for n in [64, 128] {
            let (b, g) = setup(gamma, n);
            for (k, v) in null_basis(&b, &g).iter().enumerate() {
                let u = g.unflatten(v);
                let scale = sup(curvature_variation(&b, &g, &u).iter().flatten()).max(1.0);
                let (_, dev) = c_of(&b, &g, &u);
                assert!(dev / scale < 1e-3, "γ = {gamma}, v{}: {dev:e}", k + 1);
                assert!(dev <= prev[k] / 4.0 || dev < 1e-11, "γ = {gamma}, v{} not converging", k + 1);
                prev[k] = dev;
            }
        }
    }
}

#[test]
fn translation_and_rotation_fields_have_zero_constants() {
    let (b, g) = setup(1.1, 128);
    let basis = null_basis(&b, &g);
    for v in &basis[..3] {
        let (c, _) = c_of(&b, &g, &g.unflatten(v));
        assert!(c.iter().all(|c| c.abs() < 1e-6), "{c:?}");
    }
}

#[test]
fn chart_fields_are_discrete_equilibria() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (b, g) = setup(FRAC_PI_3, 64);
    let reference = Reference::new(&b, &g).unwrap();
    for _ in 0..20 {
        let mut d: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = rng.gen_range(0.0..0.08);
        d.iter_mut().for_each(|v| *v *= radius / len);
        let mut p = b.params.to_array();
        p.iter_mut().zip(d).for_each(|(p, d)| *p += d);
        let cp = equilibrium_chart(&reference, BubbleParams::from_array(p)).unwrap();
        let res = stationary_residual(&reference, &cp.field).unwrap();
        assert!(res <= 1e-6, "{p:?}: {res:e}");
    }
}

#[test]
fn projection_is_admissible_and_fixes_admissible_data() {
    let (b, g) = setup(1.2, 64);
    let reference = Reference::new(&b, &g).unwrap();
    for seed in [1, 2, 3] {
        let raw = recipe_field(&b, &g, Recipe::Generic, 1e-2, seed);
        let field = project_admissible(&reference, &raw).unwrap();
        let res = boundary_residuals(&reference, &field).unwrap().max_all();
        assert!(res <= 1e-8, "seed {seed}: {res:e}");
        // projecting again leaves the field where it is
        let again = project_admissible(&reference, &field.rho).unwrap();
        let moved = (0..3).flat_map(|i| (0..g.n[i]).map(move |k| (i, k))).map(|(i, k)| (again.rho[i][k] - field.rho[i][k]).abs()).fold(0.0, f64::max);
        assert!(moved <= 1e-9, "seed {seed}: moved {moved:e}");
    }
}

#[test]
fn chart_fields_survive_projection() {
    let (b, g) = setup(FRAC_PI_3, 64);
    let reference = Reference::new(&b, &g).unwrap();
    let cp = equilibrium_chart(&reference, BubbleParams { a1: 0.01, r: 1.02, ..b.params }).unwrap();
    let proj = project_admissible(&reference, &cp.field.rho).unwrap();
    let moved = (0..3).map(|i| sup(proj.rho[i].iter().zip(&cp.field.rho[i]).map(|(a, b)| a - b).collect::<Vec<_>>().iter())).fold(0.0, f64::max);
    assert!(moved <= 1e-6, "{moved:e}");
}

#[test]
fn oversized_data_is_rejected() {
    let (b, g) = setup(1.0, 64);
    let reference = Reference::new(&b, &g).unwrap();
    let raw = g.sample(|_, _| 0.2);
    assert!(project_admissible(&reference, &raw).is_err());
}

#[test]
fn translation_mode_flows_to_a_translated_bubble() {
    let cfg = StabilityConfig { recipe: Recipe::NullMode(1), t_end: 0.5, ..StabilityConfig::default() };
    let rep = stability_run(&cfg).unwrap();
    let trace = &rep.trace.rows;
    let (l0, l1) = (trace[0].length, trace.last().unwrap().length);
    assert!(((l1 - l0) / l0).abs() <= 1e-6, "length {l0} -> {l1}");
    assert!(rep.area_error <= 1e-5, "{}", rep.area_error);
    // v¹ = ∂_{a₁} of the chart up to sign: a pure shift along x
    let p = rep.limit_params;
    assert!((p.a1.abs() - cfg.epsilon).abs() <= 1e-3 * cfg.epsilon.max(1e-3) + 1e-5, "{p:?}");
    assert!(p.a2.abs() <= 1e-5 && (p.r - 1.0).abs() <= 1e-5 && (p.gamma - FRAC_PI_3).abs() <= 1e-5 && p.theta.abs() <= 1e-5, "{p:?}");
}

#[test]
fn sweeps_match_single_runs() {
    let configs: Vec<StabilityConfig> =
        (1..=3).map(|seed| StabilityConfig { seed, t_end: 0.05, ..StabilityConfig::default() }).collect();
    let swept = stability_sweep(&configs);
    for (cfg, rep) in configs.iter().zip(swept) {
        let single = stability_run(cfg).unwrap();
        assert_eq!(rep.unwrap().trace.rows, single.trace.rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_forms_are_consistent(r in 0.2f64..5.0, gamma in 0.05f64..2.04) {
        let b = StandardBubble::new(BubbleParams::new(r, gamma)).unwrap();
        prop_assert!(b.kappa.iter().sum::<f64>().abs() * r <= 1e-12);
        prop_assert!(b.q.iter().sum::<f64>().abs() * r <= 1e-12);
        // the three arcs meet at 120°: unit tangents leaving a junction sum to zero
        for i in 0..3 {
            let l = b.half_len[i];
            prop_assert!((b.arc_point(i, l).unwrap() - b.junctions[0]).norm() <= 1e-12 * r);
            prop_assert!((b.arc_point(i, -l).unwrap() - b.junctions[1]).norm() <= 1e-12 * r);
        }
        let t: Vec<Vec2> = (0..3).map(|i| b.tangent_at(i, b.half_len[i]).unwrap()).collect();
        prop_assert!((t[0] + t[1] + t[2]).norm() <= 1e-12);
    }

    #[test]
    fn inverse_area_problem_round_trips(r in 0.3f64..3.0, gamma in 0.1f64..2.0) {
        let a = StandardBubble::new(BubbleParams::new(r, gamma)).unwrap().enclosed_areas();
        let (r2, g2) = bubble_for_areas(a[0], a[1]).unwrap();
        prop_assert!(((r2 - r) / r).abs() <= 1e-9 && (g2 - gamma).abs() <= 1e-9);
    }

    #[test]
    fn level_sets_scale_with_r(r in 0.3f64..3.0, gamma in 0.2f64..2.0, x in -2.0f64..3.0, y in -2.0f64..2.0, i in 0usize..3) {
        // G_i(r, γ; rσ) = r G_i(1, γ; σ)
        let s = Vec2::new(x, y);
        let lhs = level_set_jet(r, gamma, i, s * r).value;
        let rhs = r * level_set_jet(1.0, gamma, i, s).value;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn junction_moves_satisfy_the_junction_map(
        qx in -1.0f64..1.0, qy in -1.0f64..1.0, gamma in 0.1f64..2.0, theta in -3.0f64..3.0,
    ) {
        // any rigid move of a triple junction has Σρ = 0 and μ = 𝓙ρ
        let b = StandardBubble::new(BubbleParams { theta, ..BubbleParams::new(1.0, gamma) }).unwrap();
        for end in End::BOTH {
            let (rho, mu) = decompose_junction_displacement(&b, end, Vec2::new(qx, qy));
            prop_assert!(rho.iter().sum::<f64>().abs() <= 1e-14);
            let j = jay_apply(rho);
            prop_assert!((0..3).all(|i| (j[i] - mu[i]).abs() <= 1e-14));
        }
    }

    #[test]
    fn floats_format_losslessly(v in proptest::num::f64::NORMAL) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
