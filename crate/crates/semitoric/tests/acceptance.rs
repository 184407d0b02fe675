//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! quantities and the runtime against its budget.

use std::f64::consts::{FRAC_PI_2, LN_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semitoric::dynamics::{flow_raw, seed_on_fiber, torus_period_basis};
use semitoric::fibration::{
    bifurcation_diagram, column_extent, develop_affine, hausdorff, monodromy, DevelopOptions,
};
use semitoric::invariants::*;
use semitoric::models::{builtin, PhasePoint, ValueWindow, Which};
use semitoric::polygons::{canonical_weighted_class, is_delzant, q, Cut, Pt, RationalPolygon, WeightedPolygon};
use semitoric::quantum::convergence_study;
use semitoric::singularities::{find_critical_points, is_semitoric, SearchRegion};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn spin_window() -> ValueWindow {
    ValueWindow::new(-2.0, 2.0, -1.5, 1.5).unwrap()
}

fn criterion_1() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let found = find_critical_points(&s, SearchRegion::from_window(spin_window()), 8, 1e-12).map_err(|e| e.to_string())?;
    let r0: Vec<_> = found.rank0().collect();
    let ff: Vec<_> = r0.iter().filter(|p| p.is_focus_focus()).collect();
    let ee: Vec<_> = r0.iter().filter(|p| p.is_elliptic_elliptic()).collect();
    let err = |v: (f64, f64), t: (f64, f64)| (v.0 - t.0).abs().max((v.1 - t.1).abs());
    let (eff, eee) = match (ff.first(), ee.first()) {
        (Some(f), Some(e)) => (err(f.value, (1.0, 0.0)), err(e.value, (-1.0, 0.0))),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    check(
        r0.len() == 2 && ff.len() == 1 && ee.len() == 1 && eff < 1e-6 && eee < 1e-6,
        format!("{} rank-0 points; FF error {eff:.1e}, EE error {eee:.1e}", r0.len()),
    )
}

fn criterion_2() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let t = taylor_linear_invariant(&s, (1.0, 0.0), TaylorOptions::default()).map_err(|e| e.to_string())?;
    let (x, y) = t.coefficients;
    let (ex, ey) = ((x - 5.0 * LN_2).abs() / (5.0 * LN_2), (y - FRAC_PI_2).abs() / FRAC_PI_2);
    check(
        ex < 0.02 && ey < 0.02,
        format!("({x:.6}, {y:.6}); relative errors {ex:.1e}, {ey:.1e} (limit 2e-2)"),
    )
}

fn criterion_3() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let d = bifurcation_diagram(&s, spin_window(), 64).map_err(|e| e.to_string())?;
    let s_max = 2.0 + 7f64.sqrt();
    let n = 4000;
    let curve = |s: f64, sign: f64| ((s * s - 3.0) / (2.0 * s), sign * (s * s - 1.0) / (2.0 * s.powf(1.5)));
    let mut reference: Vec<(f64, f64)> = (0..=n).rev().map(|k| curve(1.0 + (s_max - 1.0) * k as f64 / n as f64, -1.0)).collect();
    reference.extend((1..=n).map(|k| curve(1.0 + (s_max - 1.0) * k as f64 / n as f64, 1.0)));
    let hd = hausdorff(&d.boundary_polyline(), &reference);
    let limit = 2.0 * d.spacing();
    check(hd < limit, format!("Hausdorff {hd:.4} against limit {limit:.4}"))
}

fn criterion_4() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let r = monodromy(&s, (1.0, 0.0), 0.3, 24).map_err(|e| e.to_string())?;
    let t = monodromy(&s, (0.0, 0.2), 0.1, 16).map_err(|e| e.to_string())?;
    check(
        r.is_elementary_shear() && r.max_residual < 0.05 && t.matrix == [[1, 0], [0, 1]] && t.max_residual < 0.05,
        format!(
            "around (1,0): {:?} (residual {:.1e}); non-enclosing: {:?} (residual {:.1e})",
            r.matrix, r.max_residual, t.matrix, t.max_residual
        ),
    )
}

fn criterion_5() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let w = ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap();
    let d = bifurcation_diagram(&s, w, 64).map_err(|e| e.to_string())?;
    let up = develop_affine(&s, &d, &[1], DevelopOptions::default()).map_err(|e| e.to_string())?;
    let down = develop_affine(&s, &d, &[-1], DevelopOptions::default()).map_err(|e| e.to_string())?;
    let flipped = up.polygon.flip(0).map_err(|e| e.to_string())?;
    let exact = flipped == down.polygon;
    let ku = twisting_indices(&s, &up).map_err(|e| e.to_string())?;
    let kd = twisting_indices(&s, &down).map_err(|e| e.to_string())?;
    let cu = canonical_weighted_class(&WeightedPolygon { twisting: Some(ku.clone()), ..up.polygon.clone() }).map_err(|e| e.to_string())?;
    let cd = canonical_weighted_class(&WeightedPolygon { twisting: Some(kd.clone()), ..down.polygon.clone() }).map_err(|e| e.to_string())?;
    let verts = |p: &WeightedPolygon| p.polygon.vertices().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    check(
        exact && cu.representative == cd.representative,
        format!(
            "Δ+ = [{}], Δ− = [{}], t_ℓ¹(Δ+) = Δ−: {exact}; twisting {ku:?}/{kd:?}; classes equal: {}",
            verts(&up.polygon),
            verts(&down.polygon),
            cu.representative == cd.representative
        ),
    )
}

fn criterion_6() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let w = ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap();
    let d = bifurcation_diagram(&s, w, 64).map_err(|e| e.to_string())?;
    let dev = develop_affine(&s, &d, &[1], DevelopOptions::default()).map_err(|e| e.to_string())?;
    let h = height_invariant(&s, &dev, 0, MonteCarloOptions { samples: 1_000_000, seed: 2024 }).map_err(|e| e.to_string())?;
    let mc = h.monte_carlo.ok_or("no Monte Carlo estimate")?;
    let rel = mc.sigma / mc.value;
    check(
        (mc.value - h.polygon).abs() <= 3.0 * mc.sigma && rel <= 0.01,
        format!(
            "polygon {:.6}, Monte Carlo {:.6} ± {:.1e} ({} samples, σ/h = {rel:.1e})",
            h.polygon, mc.value, mc.sigma, mc.samples
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for l in 1..=3 {
        let p = RationalPolygon::hull(&[Pt::int(0, 0), Pt::int(l, 0), Pt::int(0, l)]).map_err(|e| e.to_string())?;
        let r = is_delzant(&p).map_err(|e| e.to_string())?;
        ok &= r.delzant;
        notes.push(format!("λ={l}: {}", r.delzant));
    }
    let p = RationalPolygon::hull(&[Pt::int(0, 0), Pt::int(1, 0), Pt::int(0, 2)]).map_err(|e| e.to_string())?;
    let r = is_delzant(&p).map_err(|e| e.to_string())?;
    let bad: Vec<_> = r.vertices.iter().filter(|v| !v.smooth).collect();
    let cert = bad.iter().any(|v| v.det == "-2");
    ok &= !r.delzant && cert;
    let certs: Vec<String> = bad.iter().map(|v| format!("{} det={}", v.vertex, v.det)).collect();
    notes.push(format!("(0,0),(1,0),(0,2): {} [{}]", r.delzant, certs.join(", ")));
    check(ok, notes.join("; "))
}

fn criterion_8() -> Outcome {
    let spin = builtin("spin-oscillator").unwrap();
    let a = is_semitoric(&spin, SearchRegion::from_window(spin_window())).map_err(|e| e.to_string())?;
    let ss = builtin("s2xs2-hyperbolic").unwrap();
    let b = is_semitoric(&ss, SearchRegion::from_window(ValueWindow::new(-1.5, 1.5, -1.5, 1.5).unwrap())).map_err(|e| e.to_string())?;
    let pend = builtin("spherical-pendulum").unwrap();
    let c = is_semitoric(&pend, SearchRegion::from_window(ValueWindow::new(-2.0, 2.0, -2.0, 3.0).unwrap())).map_err(|e| e.to_string())?;
    let hyper = b.reasons.iter().any(|r| r.starts_with("hyperbolic-block")) && b.certificate.iter().any(|p| p.williamson.1 > 0);
    let proper = c.reasons.iter().any(|r| r.starts_with("non-proper-J"));
    check(
        a.semitoric && !b.semitoric && hyper && !c.semitoric && proper,
        format!(
            "spin: {}; S²×S²: {} ({}); pendulum: {} ({})",
            a.semitoric,
            b.semitoric,
            b.reasons.first().cloned().unwrap_or_default(),
            c.semitoric,
            c.reasons.first().cloned().unwrap_or_default()
        ),
    )
}

fn criterion_9() -> Outcome {
    let s = builtin("spin-oscillator").unwrap();
    let w = ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap();
    let d = bifurcation_diagram(&s, w, 64).map_err(|e| e.to_string())?;
    let dev = develop_affine(&s, &d, &[1], DevelopOptions::default()).map_err(|e| e.to_string())?;
    let qw = ValueWindow::new(-1.5, 2.0, -3.0, 3.0).unwrap();
    let (rep, _) = convergence_study(&[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], 128, qw, &dev.polygon.polygon, &[(1.0, 1)])
        .map_err(|e| e.to_string())?;
    let counts = rep.entries.iter().all(|e| e.counts_preserved);
    let comm = rep.entries.iter().map(|e| e.commutator).fold(0.0, f64::max);
    let last = rep.entries.last().unwrap();
    let dists: Vec<String> = rep.entries.iter().map(|e| format!("ħ={}: {:.4}", e.hbar, e.hausdorff)).collect();
    check(
        counts && comm < 1e-12 && rep.monotone && last.hausdorff < 5.0 * last.hbar,
        format!(
            "Hausdorff [{}], monotone {}, final/ħ = {:.3} (limit 5); max commutator {comm:.1e}; counts preserved {counts}",
            dists.join(", "),
            rep.monotone,
            rep.final_ratio
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let spin = builtin("spin-oscillator").unwrap();

    let mut bracket: f64 = 0.0;
    for id in ["spin-oscillator", "spherical-pendulum", "s2xs2-hyperbolic", "cp2-toric", "cp1-toric"] {
        let s = builtin(id).unwrap();
        for _ in 0..200 {
            let p = s.manifold.random_point(&mut rng, 1.5);
            bracket = bracket.max(s.bracket_raw(Which::J, Which::H, &p).abs());
        }
    }

    let mut commute: f64 = 0.0;
    for _ in 0..10 {
        let p = spin.manifold.random_point(&mut rng, 1.0);
        let (a, b) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let f = |w: Which, p: &[f64], t: f64| flow_raw(&spin, w, p, t, 1e-12).unwrap();
        let x = f(Which::H, &f(Which::J, &p, a), b);
        let y = f(Which::J, &f(Which::H, &p, b), a);
        commute = commute.max(dist(&x, &y));
    }

    let mut closure: f64 = 0.0;
    for _ in 0..5 {
        let j = rng.random_range(-0.8..0.8);
        let col = column_extent(&spin, j, None).ok_or("no column")?;
        let c = (j, col.lo + rng.random_range(0.1..0.9) * col.len());
        let seed = seed_on_fiber(&spin, c, None).map_err(|e| e.to_string())?;
        let p = PhasePoint::projected(spin.manifold, seed);
        let lat = torus_period_basis(&spin, c, &p).map_err(|e| e.to_string())?;
        let h = flow_raw(&spin, Which::H, &p.coords, lat.tau2(), 1e-13).map_err(|e| e.to_string())?;
        let back = flow_raw(&spin, Which::J, &h, lat.tau1(), 1e-13).map_err(|e| e.to_string())?;
        closure = closure.max(dist(&back, &p.coords));
    }

    let mut round_trips = 0;
    let mut round_ok = true;
    while round_trips < 50 {
        let pts: Vec<Pt> = (0..6).map(|_| Pt::int(rng.random_range(-6..6), rng.random_range(-6..6))).collect();
        let Ok(poly) = RationalPolygon::hull(&pts) else { continue };
        if poly.vertices().len() < 3 {
            continue;
        }
        let k = rng.random_range(-3i64..4);
        let back: RationalPolygon = serde_json::from_str(&serde_json::to_string(&poly).unwrap()).unwrap();
        round_ok &= back == poly && poly.apply_t(k).apply_t(-k) == poly;
        let (lo, hi) = poly.x_extent();
        let x = (lo.unwrap() + hi.unwrap()) / q(2);
        if let Ok(wp) = WeightedPolygon::new(poly, vec![Cut { x, sign: 1 }], Some(vec![k])) {
            if let Ok(f) = wp.flip(0) {
                round_ok &= f.flip(0).map(|g| g == wp).unwrap_or(false);
            }
            let back: WeightedPolygon = serde_json::from_str(&serde_json::to_string(&wp).unwrap()).unwrap();
            round_ok &= back == wp;
        }
        round_trips += 1;
    }

    let opts = InvariantOptions {
        window: Some(ValueWindow::new(-2.0, 2.0, -1.6, 1.6).unwrap()),
        monte_carlo: MonteCarloOptions { samples: 200_000, seed: 11 },
        ..InvariantOptions::default()
    };
    let base = semitoric_invariants(&spin, &opts).map_err(|e| e.to_string())?;
    let mut iso = true;
    for (lambda, scale) in [(0.25, 1.0), (-0.2, 1.5)] {
        let r = spin.reparametrized(lambda, scale);
        let hs = 1.6 * scale + 2.0 * f64::abs(lambda);
        let o = InvariantOptions { window: Some(ValueWindow::new(-2.0, 2.0, -hs, hs).unwrap()), ..opts.clone() };
        let b = semitoric_invariants(&r, &o).map_err(|e| e.to_string())?;
        iso &= base.matches(&b, 0.01);
    }

    check(
        bracket < 1e-12 && commute < 1e-8 && closure < 1e-7 && round_ok && iso,
        format!(
            "|{{J,H}}| ≤ {bracket:.1e} (1e-12); flow commutator {commute:.1e} (1e-8); lattice closure {closure:.1e} (1e-7); \
             {round_trips} exact polygon round trips: {round_ok}; H → aH + λJ invariance (1%): {iso}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "spin-oscillator singularity census", Duration::from_secs(10), criterion_1),
        (2, "Taylor linear invariant", Duration::from_secs(300), criterion_2),
        (3, "momentum-image boundary", Duration::from_secs(120), criterion_3),
        (4, "monodromy", Duration::from_secs(300), criterion_4),
        (5, "polygon pipeline", Duration::from_secs(600), criterion_5),
        (6, "height dual-method agreement", Duration::from_secs(300), criterion_6),
        (7, "Delzant checks", Duration::from_secs(60), criterion_7),
        (8, "semitoric gate", Duration::from_secs(600), criterion_8),
        (9, "quantum convergence", Duration::from_secs(600), criterion_9),
        (10, "property suites", Duration::from_secs(1800), criterion_10),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let dt = t.elapsed();
        let outcome = match outcome {
            Ok(m) if dt > budget => Err(format!("{m}; over budget")),
            o => o,
        };
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{tag} criterion {n:>2} ({name}): {msg} [{:.2}s / {}s]", dt.as_secs_f64(), budget.as_secs());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
