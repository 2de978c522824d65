//! Phase geometry and localization sets: closed forms against each other,
//! symmetries, and finite-difference derivatives on sampled admissible pairs.

use hermproj_core::checks::{identity_suite, SuiteSpec};
use hermproj_core::localization::{
    annulus_contains, build_grid, indicator_times, weight_w, AnnulusKind, AnnulusSpec, Region, WeightSpec,
};
use hermproj_core::phase::{
    aligned_pair, discriminant_angle_form, discriminant_d, grad_sc, mixed_hessian_dets, phase_p, q_of,
    random_rotation, rotate, s_c, tau_pm, AdmissiblePair,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Admissible pairs with shells drawn from `{1/64, …, 1/1024}`.
fn admissible() -> impl Strategy<Value = AdmissiblePair> {
    (2usize..=3, 6i32..=10, 6i32..=10, 0.0f64..0.8, any::<u64>()).prop_map(|(d, a, b, angle, seed)| {
        let (mu, mt) = (2f64.powi(-a.min(b)), 2f64.powi(-a.max(b)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AdmissiblePair::sample(&mut rng, d, mu, mt, angle)
    })
}

#[test]
fn identity_suite_passes_in_each_dimension() {
    for d in 1..=3 {
        let spec = SuiteSpec { d, samples: 300, seed: 17 + d as u64, ..Default::default() };
        for c in identity_suite(&spec).unwrap() {
            assert!(c.passed, "d={d} {}: {:e} > {:e} at {:?}", c.name, c.max_error, c.tolerance, c.worst);
        }
    }
}

#[test]
fn critical_time_scales_like_root_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..1000 {
        let d = rng.random_range(2..=3);
        let mu = 2f64.powi(-rng.random_range(6..=9));
        let mt = mu * 2f64.powi(-rng.random_range(0..=2));
        let p = AdmissiblePair::sample(&mut rng, d, mu, mt, 1.0);
        let r = s_c(&p.x, &p.y).unwrap() / dist(&p.x, &p.y).sqrt();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    assert!(lo >= 0.5 && hi <= 3.0, "S_c/|x−y|^{{1/2}} ranged over [{lo}, {hi}]");
}

#[test]
fn pinned_hessian_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = aligned_pair(3, 2f64.powi(-4), 2f64.powi(-8)).unwrap();
    let l = 0.1 * 2f64.powi(-4);
    for s in [0.25, -0.5, 1.0] {
        let base = mixed_hessian_dets(&x, &y, s, l).unwrap();
        assert!((0.2..=5.0).contains(&base.det_minor), "{base:?}");
        for _ in 0..3 {
            let u = random_rotation(&mut rng, 3);
            let r = mixed_hessian_dets(&rotate(&u, &x), &rotate(&u, &y), s, l).unwrap();
            assert!((r.det_full - base.det_full).abs() < 1e-4 * base.det_full.abs(), "{r:?} vs {base:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn discriminant_forms_agree(v in proptest::collection::vec(-1.5f64..1.5, 6), d in 1usize..=3) {
        let (x, y) = (&v[..d], &v[3..3 + d]);
        let (a, b) = (discriminant_d(x, y), discriminant_angle_form(x, y));
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        prop_assert!((q_of(x, y, dot(x, y)) + a).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn roots_obey_vieta(p in admissible()) {
        let (tp, tm) = tau_pm(&p.x, &p.y).unwrap();
        let sum = (dot(&p.x, &p.x) + dot(&p.y, &p.y)) / dot(&p.x, &p.y);
        prop_assert!((tp * tm - 1.0).abs() < 1e-14);
        prop_assert!((tp + tm - sum).abs() < 1e-14 * sum);
        prop_assert!(tp >= 1.0 && tm > -1.0 && tm < 1.0);
    }

    #[test]
    fn critical_time_closed_forms(p in admissible()) {
        let sc = s_c(&p.x, &p.y).unwrap();
        prop_assert!(sc > 0.0 && sc < std::f64::consts::FRAC_PI_2);
        prop_assert_eq!(sc, s_c(&p.y, &p.x).unwrap());
        let (tp, _) = tau_pm(&p.x, &p.y).unwrap();
        let lhs = tp - sc.cos();
        let rhs = sc.sin().powi(2) / sc.cos();
        prop_assert!((lhs - rhs).abs() < 1e-10 * rhs.max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gradient_swap_and_rotation(p in admissible(), seed in any::<u64>()) {
        prop_assume!(dist(&p.x, &p.y) > 1e-6);
        let (gx, gy) = grad_sc(&p.x, &p.y).unwrap();
        let (hx, _) = grad_sc(&p.y, &p.x).unwrap();
        for (a, b) in gy.iter().zip(&hx) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
        let u = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed), p.x.len());
        let (rx, _) = grad_sc(&rotate(&u, &p.x), &rotate(&u, &p.y)).unwrap();
        let want = rotate(&u, &gx);
        let scale = gx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in rx.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn phase_is_rotation_invariant(p in admissible(), s in 0.1f64..3.0, seed in any::<u64>()) {
        let u = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed), p.x.len());
        let a = phase_p(&p.x, &p.y, s).unwrap();
        let b = phase_p(&rotate(&u, &p.x), &rotate(&u, &p.y), s).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn scaled_membership_matches_unit_scale(
        kind in prop_oneof![Just(AnnulusKind::Plus), Just(AnnulusKind::Minus), Just(AnnulusKind::Ring), Just(AnnulusKind::Exterior)],
        n in 0i32..6, lambda in 1u32..500, x in proptest::collection::vec(-40.0f64..40.0, 1..4),
    ) {
        let mu = 2f64.powi(-n);
        let scaled = AnnulusSpec::new(kind, mu, Some(lambda)).unwrap();
        let unit = AnnulusSpec::new(kind, mu, None).unwrap();
        let u: Vec<f64> = x.iter().map(|v| v / (lambda as f64).sqrt()).collect();
        prop_assert_eq!(annulus_contains(&scaled, &x), annulus_contains(&unit, &u));
    }

    #[test]
    fn weights_split_at_the_sphere(lambda in 1.0f64..1e4, x in proptest::collection::vec(-200.0f64..200.0, 1..4)) {
        let plus = WeightSpec { lambda, sign: 1, exponent: 1.0 };
        let minus = WeightSpec { lambda, sign: -1, exponent: 1.0 };
        let (a, b) = (weight_w(&plus, &x), weight_w(&minus, &x));
        prop_assert!(a >= 1.0 && b >= 1.0);
        prop_assert_eq!(a.min(b), 1.0);
    }
}

#[test]
fn grids_reproduce_region_volumes() {
    let regions = [
        Region::Ball { radius: 2.0 },
        Region::Shell(AnnulusSpec::plus(0.25).unwrap()),
        Region::Shell(AnnulusSpec::plus(1.0 / 32.0).unwrap()),
        Region::Shell(AnnulusSpec::new(AnnulusKind::Minus, 0.125, None).unwrap()),
        Region::Shell(AnnulusSpec::new(AnnulusKind::Ring, 0.0625, None).unwrap()),
    ];
    for d in 1..=3 {
        for region in regions {
            let g = build_grid(d, 2 * 4 + d as u32, region, 4.0, 1 << 22).unwrap();
            assert!(g.weights.iter().all(|&w| w > 0.0));
            assert!((0..g.len()).all(|i| region.contains(g.point(i))), "d={d} {region:?}");
            let (sum, vol) = (g.weights.iter().sum::<f64>(), region.volume(d));
            assert!((sum - vol).abs() < 0.01 * vol, "d={d} {region:?}: {sum} vs {vol}");
            // point σ·orbit + i is point i reflected in the coordinates of σ
            for sigma in 0..1usize << d {
                for i in (0..g.orbit).step_by(97) {
                    let (p, q) = (g.point(i), g.point(sigma * g.orbit + i));
                    for b in 0..d {
                        let s = if sigma >> b & 1 == 1 { -1.0 } else { 1.0 };
                        assert_eq!(q[b], s * p[b]);
                    }
                }
            }
        }
    }
}

#[test]
fn dyadic_shells_are_disjoint_and_cover_the_ball() {
    let grid = build_grid(2, 10, Region::Ball { radius: 2.0 }, 4.0, 1 << 22).unwrap();
    let ones = vec![1.0; grid.len()];
    let shells: Vec<AnnulusSpec> = (0..8).map(|n| AnnulusSpec::plus(2f64.powi(-n)).unwrap()).collect();
    let ring = AnnulusSpec::new(AnnulusKind::Exterior, 2f64.powi(-7), None).unwrap();
    let parts: Vec<Vec<f64>> = shells.iter().map(|s| indicator_times(&grid, &ones, s).unwrap()).collect();
    let ext = indicator_times(&grid, &ones, &ring).unwrap();
    for i in 0..grid.len() {
        let r = dot(grid.point(i), grid.point(i)).sqrt();
        if r == 0.0 {
            continue;
        }
        // plus shells overlap only on their shared boundary radii
        let hits: f64 = parts.iter().map(|p| p[i]).sum();
        let boundary = shells.iter().any(|s| (1.0 - r - s.mu).abs() < 1e-15 || (1.0 - r - 2.0 * s.mu).abs() < 1e-15);
        if !boundary {
            assert!(hits <= 1.0, "r = {r}");
            assert!(hits + ext[i] >= 1.0, "r = {r} uncovered");
        }
        for p in &parts {
            assert_eq!(indicator_times(&grid, p, &shells[0]).unwrap()[i], p[i] * parts[0][i]);
        }
    }
}
