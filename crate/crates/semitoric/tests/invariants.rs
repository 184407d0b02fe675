use std::f64::consts::{FRAC_PI_2, LN_2};

use semitoric::fibration::{bifurcation_diagram, develop_affine, DevelopOptions};
use semitoric::invariants::*;
use semitoric::models::{builtin, ValueWindow};
use semitoric::polygons::{canonical_weighted_class, Pt, WeightedPolygon};
use semitoric::Error;

fn spin_window() -> ValueWindow {
    ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap()
}

#[test]
fn spin_taylor_linear_terms() {
    let s = builtin("spin-oscillator").unwrap();
    let t = taylor_linear_invariant(&s, (1.0, 0.0), TaylorOptions::default()).unwrap();
    let (x, y) = t.coefficients;
    assert!((x - 5.0 * LN_2).abs() < 0.02 * 5.0 * LN_2, "{x}");
    assert!((y - FRAC_PI_2).abs() < 0.02 * FRAC_PI_2, "{y}");
    // τ2 grows like −ln r / α with α = 1/2: 2 ln 2 per halving of r
    for w in t.raw_tau2.windows(2) {
        assert!((w[1] - w[0] - 2.0 * LN_2).abs() < 1e-3, "{:?}", t.raw_tau2);
    }
}

#[test]
fn spin_height_by_both_methods() {
    let s = builtin("spin-oscillator").unwrap();
    let d = bifurcation_diagram(&s, spin_window(), 64).unwrap();
    let dev = develop_affine(&s, &d, &[1], DevelopOptions::default()).unwrap();
    let h = height_invariant(&s, &dev, 0, MonteCarloOptions::default()).unwrap();
    assert!((h.polygon - 1.0).abs() < 1e-6, "{}", h.polygon);
    let mc = h.monte_carlo.unwrap();
    assert!(mc.sigma <= 0.01 * mc.value);
    assert!((mc.value - h.polygon).abs() <= 3.0 * mc.sigma);
}

#[test]
fn twisting_follows_the_cut_flip() {
    let s = builtin("spin-oscillator").unwrap();
    let d = bifurcation_diagram(&s, spin_window(), 64).unwrap();
    let up = develop_affine(&s, &d, &[1], DevelopOptions::default()).unwrap();
    let down = develop_affine(&s, &d, &[-1], DevelopOptions::default()).unwrap();
    let ku = twisting_indices(&s, &up).unwrap();
    let kd = twisting_indices(&s, &down).unwrap();
    assert_eq!(kd[0], ku[0] + 1);
    let wu = WeightedPolygon { twisting: Some(ku), ..up.polygon.clone() };
    let wd = WeightedPolygon { twisting: Some(kd), ..down.polygon.clone() };
    let cu = canonical_weighted_class(&wu).unwrap();
    let cd = canonical_weighted_class(&wd).unwrap();
    assert_eq!(cu.representative, cd.representative);
}

#[test]
fn spin_record() {
    let s = builtin("spin-oscillator").unwrap();
    let inv = semitoric_invariants(&s, &InvariantOptions::default()).unwrap();
    assert_eq!(inv.m_f, 1);
    assert_eq!(inv.twisting, vec![1]);
    assert_eq!(inv.sign_representatives.len(), 2);
    assert_eq!(inv.sign_representatives[1].cuts[0].sign, -1);
    let rep = &inv.polygon_class.representative;
    assert_eq!(rep.polygon.vertices(), &[Pt::int(1, 2), Pt::int(-1, 0)]);
}

#[test]
fn cp2_record() {
    let s = builtin("cp2-toric").unwrap();
    let inv = semitoric_invariants(&s, &InvariantOptions::default()).unwrap();
    assert_eq!(inv.m_f, 0);
    assert!(inv.taylor_linear.is_empty() && inv.heights.is_empty() && inv.twisting.is_empty());
    let mut v: Vec<Pt> = inv.polygon_class.representative.polygon.vertices().to_vec();
    v.sort();
    assert_eq!(v, vec![Pt::int(0, 0), Pt::int(0, 1), Pt::int(1, 0)]);
}

#[test]
fn non_semitoric_is_refused() {
    let s = builtin("s2xs2-hyperbolic").unwrap();
    let opts = InvariantOptions {
        window: Some(ValueWindow::new(-1.5, 1.5, -1.5, 1.5).unwrap()),
        ..InvariantOptions::default()
    };
    assert!(matches!(semitoric_invariants(&s, &opts), Err(Error::Precondition(_))));
}

#[test]
fn monte_carlo_needs_the_spin_parametrisation() {
    let s = builtin("cp2-toric").unwrap();
    let r = sublevel_volume(&s, 0.5, 0.2, MonteCarloOptions { samples: 10, seed: 0 });
    assert!(matches!(r, Err(Error::Unsupported(_))));
}
