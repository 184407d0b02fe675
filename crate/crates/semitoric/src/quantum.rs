//! Quantization of the coupled spin-oscillator and polygon recovery from its
//! joint spectrum.
//!
//! The Hilbert space is ℂ^d ⊗ span{h_0, …, h_{N−1}} (spin representation of
//! dimension d = 2s + 1 times Hermite functions), indexed m'·N + n with
//! m = m' − s. The sphere coordinates are x̂ = ħS_x, ŷ = −ħS_y, ẑ = ħS_z with
//! ħ = 1/(s + ½) = 2/d, so that x̂² + ŷ² + ẑ² = 1 − ħ²/4 and the spin and
//! oscillator carry the same ħ. The sign of ŷ gives [x̂, ŷ] = −iħẑ, the
//! orientation in which Ĵ and Ĥ commute. Then
//!
//!   Ĵ = ħ(n + ½) + ħm,    Ĥ = ½ħ√(ħ/2) (S₊ a + S₋ a†),
//!
//! so Ĵ is diagonal in the product basis and Ĥ preserves k = n + m'. Blocks
//! with k < N are untouched by the truncation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::ValueWindow;
use crate::polygons::{exact_rational, Cut, RationalPolygon, WeightedPolygon};
use crate::Error;

/// Relative gap below which Ĵ eigenvalues are one cluster.
pub const CLUSTER_TOL: f64 = 1e-10;

/// Spin dimension matching ħ = 2/d.
pub fn spin_dim_for(hbar: f64) -> Result<usize, Error> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Config(format!("ħ must be positive, got {hbar}")));
    }
    let d = 2.0 / hbar;
    if (d - d.round()).abs() > 1e-9 || d.round() < 2.0 {
        return Err(Error::Config(format!("ħ = {hbar} is not 2/d for an integer spin dimension d ≥ 2")));
    }
    Ok(d.round() as usize)
}

#[derive(Clone, Debug)]
pub struct Operators {
    pub hbar: f64,
    pub spin_dim: usize,
    pub truncation: usize,
    /// Diagonal of Ĵ in the product basis.
    pub j_diag: Vec<f64>,
    /// Nonzero entries (row, col, value) of Ĥ, both triangles.
    pub h_entries: Vec<(usize, usize, f64)>,
}

impl Operators {
    pub fn dim(&self) -> usize {
        self.spin_dim * self.truncation
    }

    pub fn index(&self, mp: usize, n: usize) -> usize {
        mp * self.truncation + n
    }

    /// Dense (Ĵ, Ĥ). Only sensible for small sizes.
    pub fn dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let j = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.j_diag.clone()));
        let mut h = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.h_entries {
            h[(r, c)] = v;
        }
        (j, h)
    }

    /// ‖[Ĵ, Ĥ]‖_F / (‖Ĵ‖_F ‖Ĥ‖_F); with Ĵ diagonal, [Ĵ, Ĥ]_rc = (J_r − J_c) H_rc.
    pub fn commutator_residual(&self) -> f64 {
        let c: f64 = self
            .h_entries
            .iter()
            .map(|&(r, k, v)| ((self.j_diag[r] - self.j_diag[k]) * v).powi(2))
            .sum();
        let nj: f64 = self.j_diag.iter().map(|x| x * x).sum();
        let nh: f64 = self.h_entries.iter().map(|e| e.2 * e.2).sum();
        c.sqrt() / (nj.sqrt() * nh.sqrt())
    }
}

/// Ĵ and Ĥ for the spin-oscillator at spin dimension `spin_dim` (ħ = 2/spin_dim)
/// and `truncation` Hermite functions.
pub fn build_operators(spin_dim: usize, truncation: usize) -> Result<Operators, Error> {
    if spin_dim < 2 || truncation < 8 {
        return Err(Error::Config(format!(
            "need spin_dim ≥ 2 and N ≥ 8, got {spin_dim} and {truncation}"
        )));
    }
    let hbar = 2.0 / spin_dim as f64;
    let s = (spin_dim as f64 - 1.0) / 2.0;
    let nn = truncation;
    let mut j_diag = vec![0.0; spin_dim * nn];
    let mut h_entries = Vec::new();
    let c = 0.5 * hbar * (hbar / 2.0).sqrt();
    for mp in 0..spin_dim {
        let m = mp as f64 - s;
        for n in 0..nn {
            j_diag[mp * nn + n] = hbar * (n as f64 + 0.5) + hbar * m;
            // S₊ a : (m', n) → (m' + 1, n − 1)
            if mp + 1 < spin_dim && n >= 1 {
                let v = c * (s * (s + 1.0) - m * (m + 1.0)).sqrt() * (n as f64).sqrt();
                let (a, b) = (mp * nn + n, (mp + 1) * nn + n - 1);
                h_entries.push((b, a, v));
                h_entries.push((a, b, v));
            }
        }
    }
    Ok(Operators {
        hbar,
        spin_dim,
        truncation,
        j_diag,
        h_entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumColumn {
    pub lambda_j: f64,
    /// Eigenvalues of Ĥ on this Ĵ-eigenspace inside the window, ascending.
    pub values: Vec<f64>,
    /// Dimension of the whole eigenspace.
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpectrum {
    pub hbar: f64,
    pub spin_dim: usize,
    pub truncation: usize,
    pub window: ValueWindow,
    /// Sorted by λ_J then λ_H.
    pub points: Vec<(f64, f64)>,
    pub columns: Vec<SpectrumColumn>,
    /// Largest point displacement between N and 2N inside the window.
    pub drift: f64,
    pub commutator: f64,
}

impl JointSpectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda_j,lambda_h,column\n");
        for (i, c) in self.columns.iter().enumerate() {
            for v in &c.values {
                s.push_str(&format!("{:.15e},{:.15e},{i}\n", c.lambda_j, v));
            }
        }
        s
    }

    pub fn counts(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.values.len()).collect()
    }
}

/// Clusters of Ĵ eigenvalues as (value, basis indices), ascending.
fn clusters(ops: &Operators) -> Result<Vec<(f64, Vec<usize>)>, Error> {
    let mut order: Vec<usize> = (0..ops.j_diag.len()).collect();
    order.sort_by(|&a, &b| ops.j_diag[a].total_cmp(&ops.j_diag[b]));
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut spread = 0.0f64;
    for i in order {
        let v = ops.j_diag[i];
        match out.last_mut() {
            Some((c, idx)) if (v - *c).abs() <= CLUSTER_TOL * c.abs().max(1.0) => {
                spread = spread.max((v - *c).abs());
                idx.push(i);
            }
            _ => out.push((v, vec![i])),
        }
    }
    for w in out.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap <= 10.0 * spread || (gap - ops.hbar).abs() > 1e-9 {
            return Err(Error::Consistency(format!(
                "Ĵ clusters at {} and {} are not on the ladder of spacing ħ",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(out)
}

fn spectrum_raw(ops: &Operators, window: ValueWindow) -> Result<Vec<SpectrumColumn>, Error> {
    let d = ops.spin_dim;
    let clusters = clusters(ops)?;
    let inside: Vec<(usize, &(f64, Vec<usize>))> = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.0 >= window.j.0 && c.0 <= window.j.1)
        .collect();
    for &(k, (lj, idx)) in &inside {
        if idx.len() < (k + 1).min(d) {
            return Err(Error::Resolution(format!(
                "the Ĵ = {lj} eigenspace is cut by the truncation N = {}; increase N",
                ops.truncation
            )));
        }
    }
    let mut pos = vec![usize::MAX; ops.dim()];
    let mut owner = vec![usize::MAX; ops.dim()];
    for (ci, (_, c)) in inside.iter().enumerate() {
        for (p, &i) in c.1.iter().enumerate() {
            pos[i] = p;
            owner[i] = ci;
        }
    }
    let mut blocks: Vec<DMatrix<f64>> = inside.iter().map(|(_, c)| DMatrix::zeros(c.1.len(), c.1.len())).collect();
    for &(r, c, v) in &ops.h_entries {
        if owner[r] != usize::MAX && owner[r] == owner[c] {
            blocks[owner[r]][(pos[r], pos[c])] = v;
        } else if owner[r] != owner[c] && (owner[r] != usize::MAX || owner[c] != usize::MAX) {
            return Err(Error::Consistency("Ĥ couples different Ĵ-eigenspaces".into()));
        }
    }
    let cols = inside
        .par_iter()
        .zip(blocks.into_par_iter())
        .map(|((_, c), b)| {
            let n = b.nrows();
            let eig = SymmetricEigen::try_new(b, 1e-15, 10_000 + 100 * n)
                .ok_or_else(|| Error::EigenSolver(format!("no convergence on the Ĵ = {} block", c.0)))?;
            let mut values: Vec<f64> = eig
                .eigenvalues
                .iter()
                .copied()
                .filter(|v| *v >= window.h.0 && *v <= window.h.1)
                .collect();
            values.sort_by(f64::total_cmp);
            Ok(SpectrumColumn {
                lambda_j: c.0,
                values,
                multiplicity: n,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(cols)
}

/// Joint spectrum of (Ĵ, Ĥ) inside `window`, certified against truncation 2N.
pub fn joint_spectrum(hbar: f64, truncation: usize, window: ValueWindow) -> Result<JointSpectrum, Error> {
    let d = spin_dim_for(hbar)?;
    let ops = build_operators(d, truncation)?;
    let columns = spectrum_raw(&ops, window)?;
    let check = spectrum_raw(&build_operators(d, 2 * truncation)?, window)?;
    let flat = |c: &[SpectrumColumn]| -> Vec<(f64, f64)> {
        c.iter()
            .flat_map(|col| col.values.iter().map(move |&v| (col.lambda_j, v)))
            .collect()
    };
    let points = flat(&columns);
    let other = flat(&check);
    if points.len() != other.len() {
        return Err(Error::Resolution(format!(
            "window holds {} points at N = {truncation} but {} at 2N",
            points.len(),
            other.len()
        )));
    }
    let drift = points
        .iter()
        .zip(&other)
        .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
        .fold(0.0, f64::max);
    if drift >= 1e-8 {
        return Err(Error::Resolution(format!("points move by {drift:.2e} between N and 2N")));
    }
    Ok(JointSpectrum {
        hbar: ops.hbar,
        spin_dim: d,
        truncation,
        window,
        points,
        columns,
        drift,
        commutator: ops.commutator_residual(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPolygon {
    pub polygon: WeightedPolygon,
    /// The developed lattice, one point per eigenvalue.
    pub developed: Vec<(f64, f64)>,
    pub counts_in: Vec<usize>,
    pub counts_out: Vec<usize>,
}

/// Develops each λ_J-column into consecutive heights ħ(j + ½), j = 0, 1, …
/// above a common horizontal base, and returns the convex hull. The base is
/// the continuation of the column bottoms, which suits spectra whose lower
/// boundary is a single edge (upward cuts). Cuts with sign −1 are applied
/// afterwards by the cut flip.
pub fn recover_polygon(spec: &JointSpectrum, cuts: &[(f64, i8)]) -> Result<RecoveredPolygon, Error> {
    if spec.points.is_empty() {
        return Err(Error::Precondition("empty joint spectrum".into()));
    }
    let h = spec.hbar;
    let counts_in = spec.counts();
    let mut developed = Vec::with_capacity(spec.points.len());
    let mut counts_out = Vec::with_capacity(counts_in.len());
    for c in &spec.columns {
        let before = developed.len();
        developed.extend((0..c.values.len()).map(|j| (c.lambda_j, h * (j as f64 + 0.5))));
        counts_out.push(developed.len() - before);
    }
    if counts_in != counts_out {
        return Err(Error::Consistency("development changed a column count".into()));
    }
    let pts: Vec<_> = developed
        .iter()
        .map(|&(x, y)| crate::polygons::Pt::new(exact_rational(x), exact_rational(y)))
        .collect();
    let hull = RationalPolygon::hull(&pts)?;
    let mut sorted: Vec<(f64, i8)> = cuts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cut_list: Vec<Cut> = sorted
        .iter()
        .map(|&(x, _)| Cut {
            x: exact_rational(x),
            sign: 1,
        })
        .collect();
    let mut polygon = WeightedPolygon::new(hull, cut_list, None)?;
    for (i, &(_, s)) in sorted.iter().enumerate() {
        if s < 0 {
            polygon = polygon.flip(i)?;
        }
    }
    Ok(RecoveredPolygon {
        polygon,
        developed,
        counts_in,
        counts_out,
    })
}

/// Region of `poly` with x0 ≤ x ≤ x1, as a closed vertex list. Rays are
/// followed for `reach` before closing.
pub fn clip_to_strip(poly: &RationalPolygon, x0: f64, x1: f64, reach: f64) -> Vec<(f64, f64)> {
    let mut pts = poly.boundary_f64(reach);
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let clip = |pts: Vec<(f64, f64)>, inside: &dyn Fn(f64) -> bool, x: f64| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            if inside(a.0) {
                out.push(a);
            }
            if inside(a.0) != inside(b.0) {
                let t = (x - a.0) / (b.0 - a.0);
                out.push((x, a.1 + t * (b.1 - a.1)));
            }
        }
        out
    };
    let pts = clip(pts, &|x| x >= x0, x0);
    clip(pts, &|x| x <= x1, x1)
}

/// Hausdorff distance between the convex hulls of two point sets, from the
/// support functions.
pub fn convex_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let support = |s: &[(f64, f64)], c: f64, d: f64| s.iter().map(|p| p.0 * c + p.1 * d).fold(f64::NEG_INFINITY, f64::max);
    let mut dirs: Vec<f64> = (0..8192).map(|k| 2.0 * PI * k as f64 / 8192.0).collect();
    for s in [a, b] {
        for i in 0..s.len() {
            let (p, q) = (s[i], s[(i + 1) % s.len()]);
            if p != q {
                dirs.push((q.0 - p.0).atan2(-(q.1 - p.1)));
                dirs.push((p.0 - q.0).atan2(q.1 - p.1));
            }
        }
    }
    dirs.iter()
        .map(|&t| (support(a, t.cos(), t.sin()) - support(b, t.cos(), t.sin())).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub hbar: f64,
    pub spin_dim: usize,
    pub truncation: usize,
    pub points: usize,
    pub columns: usize,
    pub hausdorff: f64,
    pub commutator: f64,
    pub drift: f64,
    pub counts_preserved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    /// Hausdorff distances strictly decrease as ħ decreases.
    pub monotone: bool,
    /// Last Hausdorff distance over its ħ.
    pub final_ratio: f64,
}

/// Recovers the polygon at each ħ and measures it against `classical`
/// restricted to the J-range of `window`.
pub fn convergence_study(
    hbars: &[f64],
    truncation: usize,
    window: ValueWindow,
    classical: &RationalPolygon,
    cuts: &[(f64, i8)],
) -> Result<(ConvergenceReport, Vec<(JointSpectrum, RecoveredPolygon)>), Error> {
    if hbars.is_empty() {
        return Err(Error::Config("no ħ values given".into()));
    }
    let mut order = hbars.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let reach = 4.0 * (window.j.1 - window.j.0).abs() + 10.0;
    let target = clip_to_strip(classical, window.j.0, window.j.1, reach);
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for &h in &order {
        let spec = joint_spectrum(h, truncation, window)?;
        let rec = recover_polygon(&spec, cuts)?;
        let ours = clip_to_strip(&rec.polygon.polygon, window.j.0, window.j.1, reach);
        entries.push(ConvergenceEntry {
            hbar: spec.hbar,
            spin_dim: spec.spin_dim,
            truncation,
            points: spec.points.len(),
            columns: spec.columns.len(),
            hausdorff: convex_hausdorff(&ours, &target),
            commutator: spec.commutator,
            drift: spec.drift,
            counts_preserved: rec.counts_in == rec.counts_out,
        });
        runs.push((spec, rec));
    }
    let monotone = entries.windows(2).all(|w| w[1].hausdorff < w[0].hausdorff);
    let last = entries.last().unwrap();
    let final_ratio = last.hausdorff / last.hbar;
    Ok((
        ConvergenceReport {
            entries,
            monotone,
            final_ratio,
        },
        runs,
    ))
}

/// Spectrum of ẑ alone (the toric sphere), and the segment it spans.
pub fn toric_segment(spin_dim: usize) -> Result<(Vec<f64>, (f64, f64)), Error> {
    if spin_dim < 2 {
        return Err(Error::Config("need spin_dim ≥ 2".into()));
    }
    let hbar = 2.0 / spin_dim as f64;
    let s = (spin_dim as f64 - 1.0) / 2.0;
    let z = DMatrix::from_fn(spin_dim, spin_dim, |r, c| if r == c { hbar * (r as f64 - s) } else { 0.0 });
    let eig = SymmetricEigen::try_new(z, 1e-15, 1000).ok_or_else(|| Error::EigenSolver("ẑ".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let seg = (v[0], v[v.len() - 1]);
    Ok((v, seg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_commutator_small() {
        let ops = build_operators(6, 10).unwrap();
        let (j, h) = ops.dense();
        let c = &j * &h - &h * &j;
        assert!(c.norm() / (j.norm() * h.norm()) < 1e-14);
        assert!((&h - h.transpose()).norm() == 0.0);
        assert!(ops.commutator_residual() < 1e-14);
    }

    #[test]
    fn oscillator_and_spin_ladders() {
        let ops = build_operators(4, 12).unwrap();
        let h = ops.hbar;
        // m' = s + m with m = 0 does not exist for even d; use the n-ladder at fixed m'
        for n in 0..12 {
            let a = ops.j_diag[ops.index(0, n)] - ops.j_diag[ops.index(0, 0)];
            assert!((a - h * n as f64).abs() < 1e-14);
        }
        let (_, seg) = toric_segment(4).unwrap();
        assert!((seg.0 + 0.75).abs() < 1e-15 && (seg.1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_of_squares() {
        let a = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let b = [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (0.0, 1.0)];
        assert!((convex_hausdorff(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spin_dim_from_hbar() {
        assert_eq!(spin_dim_for(0.125).unwrap(), 16);
        assert!(spin_dim_for(0.3).is_err());
        assert!(spin_dim_for(-1.0).is_err());
    }
}
