use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semitoric::fibration::column_extent;
use semitoric::invariants::{sublevel_volume, MonteCarloOptions};
use semitoric::models::{builtin, ValueWindow};
use semitoric::quantum::*;
use semitoric::Error;

fn window(j0: f64, j1: f64, h0: f64, h1: f64) -> ValueWindow {
    ValueWindow::new(j0, j1, h0, h1).unwrap()
}

#[test]
fn commutator_at_the_largest_size() {
    let ops = build_operators(64, 256).unwrap();
    assert!(ops.commutator_residual() < 1e-12);
}

#[test]
fn spectrum_lies_in_the_classical_image() {
    let s = builtin("spin-oscillator").unwrap();
    let h = 1.0 / 16.0;
    let spec = joint_spectrum(h, 96, window(-1.5, 2.0, -3.0, 3.0)).unwrap();
    for col in &spec.columns {
        let ext = column_extent(&s, col.lambda_j, None).expect("column over λ_J");
        for &v in &col.values {
            assert!(v > ext.lo - 2.0 * h && v < ext.hi + 2.0 * h, "({}, {v}) outside [{}, {}]", col.lambda_j, ext.lo, ext.hi);
        }
    }
    // the lowest column sits one ħ to the right of the elliptic-elliptic value
    assert!((spec.columns[0].lambda_j - (-1.0 + h)).abs() < 1e-12);
}

/// Eigenvalues in a regular rectangle against the Bohr–Sommerfeld count from
/// Monte Carlo sublevel volumes: each column contributes ΔV/ħ up to ±1.
#[test]
fn weyl_count_in_a_regular_rectangle() {
    let s = builtin("spin-oscillator").unwrap();
    let (h0, h1) = (-0.15, 0.15);
    let mut counts = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let spec = joint_spectrum(h, 128, window(-0.5, 0.5, h0, h1)).unwrap();
        let mut expected = 0.0;
        for col in &spec.columns {
            let mc = MonteCarloOptions { samples: 200_000, seed: 5 };
            let a = sublevel_volume(&s, col.lambda_j, h1, mc).unwrap();
            let b = sublevel_volume(&s, col.lambda_j, h0, mc).unwrap();
            expected += (a.value - b.value) / h;
        }
        let n = spec.points.len() as f64;
        let slack = spec.columns.len() as f64 + 0.05 * expected;
        assert!((n - expected).abs() <= slack, "ħ = {h}: {n} points, expected {expected:.1}");
        counts.push(n);
    }
    let ratio = counts[1] / counts[0];
    assert!((3.4..4.6).contains(&ratio), "count ratio {ratio}");
}

#[test]
fn spectrum_is_symmetric_in_h() {
    let spec = joint_spectrum(1.0 / 16.0, 96, window(-1.5, 2.0, -3.0, 3.0)).unwrap();
    for &(j, v) in &spec.points {
        assert!(spec.points.iter().any(|&(a, b)| a == j && (b + v).abs() < 1e-9), "({j}, {v})");
    }
}

#[test]
fn stable_under_doubling_the_basis() {
    let w = window(-1.5, 1.5, -3.0, 3.0);
    let a = joint_spectrum(1.0 / 8.0, 32, w).unwrap();
    let b = joint_spectrum(1.0 / 8.0, 64, w).unwrap();
    assert_eq!(a.points.len(), b.points.len());
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9);
    }
    assert!(a.drift < 1e-9);
}

#[test]
fn truncated_window_is_refused() {
    let r = joint_spectrum(1.0 / 8.0, 8, window(-1.5, 3.0, -3.0, 3.0));
    assert!(matches!(r, Err(Error::Resolution(_))), "{r:?}");
}

#[test]
fn empty_window_gives_no_points() {
    let spec = joint_spectrum(1.0 / 8.0, 32, window(-3.0, -2.0, -1.0, 1.0)).unwrap();
    assert!(spec.points.is_empty());
    assert!(matches!(recover_polygon(&spec, &[]), Err(Error::Precondition(_))));
}

/// Dense oracle: permute the basis, diagonalize Ĵ, compress Ĥ to each
/// eigenspace and compare with the block solver.
#[test]
fn dense_oracle_after_basis_permutation() {
    let ops = build_operators(4, 16).unwrap();
    let (j, h) = ops.dense();
    let n = j.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let p = DMatrix::from_fn(n, n, |r, c| if perm[r] == c { 1.0 } else { 0.0 });
    let jp = &p * &j * p.transpose();
    let hp = &p * &h * p.transpose();
    let ej = SymmetricEigen::new(jp);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ej.eigenvalues[a].total_cmp(&ej.eigenvalues[b]));
    let w = window(-1.0, 3.0, -10.0, 10.0);
    let mut dense_points = Vec::new();
    let mut i = 0;
    while i < n {
        let lj = ej.eigenvalues[order[i]];
        let mut group = vec![order[i]];
        while i + group.len() < n && (ej.eigenvalues[order[i + group.len()]] - lj).abs() < 1e-9 {
            group.push(order[i + group.len()]);
        }
        i += group.len();
        if lj < w.j.0 || lj > w.j.1 {
            continue;
        }
        let v = DMatrix::from_fn(n, group.len(), |r, c| ej.eigenvectors[(r, group[c])]);
        let block = v.transpose() * &hp * &v;
        let mut ev: Vec<f64> = SymmetricEigen::new(block).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        dense_points.extend(ev.into_iter().map(|e| (lj, e)));
    }
    let spec = joint_spectrum(0.5, 16, w).unwrap();
    assert_eq!(spec.points.len(), dense_points.len());
    for (a, b) in spec.points.iter().zip(&dense_points) {
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12, "{a:?} vs {b:?}");
    }
}

#[test]
fn toric_sphere_segment() {
    for d in [8, 16, 32] {
        let h = 2.0 / d as f64;
        let (v, seg) = toric_segment(d).unwrap();
        assert_eq!(v.len(), d);
        assert!((seg.0 + 1.0).abs() < h && (seg.1 - 1.0).abs() < h);
        for w in v.windows(2) {
            assert!((w[1] - w[0] - h).abs() < 1e-14);
        }
    }
}

#[test]
fn recovery_keeps_counts_and_flips() {
    let spec = joint_spectrum(1.0 / 8.0, 64, window(-1.5, 2.0, -3.0, 3.0)).unwrap();
    let up = recover_polygon(&spec, &[(1.0, 1)]).unwrap();
    let down = recover_polygon(&spec, &[(1.0, -1)]).unwrap();
    assert_eq!(up.counts_in, up.counts_out);
    assert_eq!(down.polygon, up.polygon.flip(0).unwrap());
}
