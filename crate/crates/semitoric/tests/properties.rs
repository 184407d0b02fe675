//! Property suites: Poisson brackets, commuting flows, lattice closure,
//! exact polygon round trips and invariance under H → aH + λJ.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semitoric::dynamics::{flow_raw, seed_on_fiber, torus_period_basis};
use semitoric::fibration::column_extent;
use semitoric::invariants::{semitoric_invariants, InvariantOptions, MonteCarloOptions};
use semitoric::models::{builtin, PhasePoint, ValueWindow, Which};
use semitoric::polygons::{q, Cut, Pt, RationalPolygon, WeightedPolygon};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// {J, H} = 0 to 1e-12 at random points of every builtin.
    #[test]
    fn poisson_bracket_vanishes(seed in any::<u64>(), which in 0usize..5) {
        let id = ["spin-oscillator", "spherical-pendulum", "s2xs2-hyperbolic", "cp2-toric", "cp1-toric"][which];
        let s = builtin(id).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = s.manifold.random_point(&mut rng, 1.5);
        let b = s.bracket_raw(Which::J, Which::H, &p);
        prop_assert!(b.abs() < 1e-12, "{id}: {{J,H}} = {b:e}");
    }

    /// φ_J^a ∘ φ_H^b = φ_H^b ∘ φ_J^a to 1e-8.
    #[test]
    fn flows_commute(seed in any::<u64>(), a in 0.1f64..3.0, b in 0.1f64..3.0) {
        let s = builtin("spin-oscillator").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = s.manifold.random_point(&mut rng, 1.0);
        let x = flow_raw(&s, Which::H, &flow_raw(&s, Which::J, &p, a, 1e-12).unwrap(), b, 1e-12).unwrap();
        let y = flow_raw(&s, Which::J, &flow_raw(&s, Which::H, &p, b, 1e-12).unwrap(), a, 1e-12).unwrap();
        prop_assert!(dist(&x, &y) < 1e-8, "{}", dist(&x, &y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Flowing by a lattice vector (τ1, τ2) closes the orbit to 1e-7.
    #[test]
    fn period_lattice_closes(j in -0.8f64..0.8, frac in 0.1f64..0.9) {
        let s = builtin("spin-oscillator").unwrap();
        let col = column_extent(&s, j, None).unwrap();
        let c = (j, col.lo + frac * col.len());
        let seed = seed_on_fiber(&s, c, None).unwrap();
        let p = PhasePoint::projected(s.manifold, seed);
        let lat = torus_period_basis(&s, c, &p).unwrap();
        let back = flow_raw(&s, Which::J, &flow_raw(&s, Which::H, &p.coords, lat.tau2(), 1e-13).unwrap(), lat.tau1(), 1e-13).unwrap();
        prop_assert!(dist(&back, &p.coords) < 1e-7, "{}", dist(&back, &p.coords));
    }
}

fn random_polygon(pts: &[(i64, i64)]) -> Option<RationalPolygon> {
    let pts: Vec<Pt> = pts.iter().map(|&(x, y)| Pt::int(x, y)).collect();
    RationalPolygon::hull(&pts).ok().filter(|p| p.vertices().len() >= 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// JSON, T^k and cut flips round-trip exactly.
    #[test]
    fn polygon_round_trips(pts in prop::collection::vec((-6i64..6, -6i64..6), 3..9), k in -3i64..4) {
        let poly = random_polygon(&pts);
        prop_assume!(poly.is_some());
        let poly = poly.unwrap();
        let json = serde_json::to_string(&poly).unwrap();
        let back: RationalPolygon = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &poly);
        prop_assert_eq!(poly.apply_t(k).apply_t(-k), poly.clone());

        let (lo, hi) = poly.x_extent();
        let (lo, hi) = (lo.unwrap(), hi.unwrap());
        let x = (&lo + &hi) / q(2);
        prop_assume!(x > lo && x < hi);
        let wp = WeightedPolygon::new(poly, vec![Cut { x, sign: 1 }], Some(vec![k])).unwrap();
        let json = serde_json::to_string(&wp).unwrap();
        let back: WeightedPolygon = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &wp);
        if let Ok(f) = wp.flip(0) {
            prop_assert_eq!(f.cuts[0].sign, -1);
            prop_assert_eq!(f.flip(0).unwrap(), wp);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    /// The invariants of (J, aH + λJ) equal those of (J, H).
    #[test]
    fn invariants_survive_reparametrization(lambda in -0.3f64..0.3, scale in 0.5f64..2.0) {
        let s = builtin("spin-oscillator").unwrap();
        let opts = InvariantOptions {
            window: Some(ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap()),
            monte_carlo: MonteCarloOptions { samples: 200_000, seed: 11 },
            ..InvariantOptions::default()
        };
        let a = semitoric_invariants(&s, &opts).unwrap();
        let r = s.reparametrized(lambda, scale);
        let hs = 1.6 * scale + 2.0 * lambda.abs();
        let opts_r = InvariantOptions { window: Some(ValueWindow::new(-2.0, 2.0, -hs, hs).unwrap()), ..opts };
        let b = semitoric_invariants(&r, &opts_r).unwrap();
        prop_assert!(a.matches(&b, 0.01), "{:?} vs {:?}", a.taylor_linear, b.taylor_linear);
    }
}
