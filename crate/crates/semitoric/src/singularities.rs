//! Critical points of the momentum map, Williamson types and the semitoric gate.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{PhasePoint, SystemModel, ValueWindow, Which};
use crate::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub point: PhasePoint,
    pub rank: u8,
    /// (k_e, k_h, k_f)
    pub williamson: (u8, u8, u8),
    pub nondegenerate: bool,
    pub value: (f64, f64),
    /// Eigenvalues (re, im) of the linearization used for the classification.
    pub eigen_data: Vec<(f64, f64)>,
}

impl CriticalPointRecord {
    pub fn is_focus_focus(&self) -> bool {
        self.rank == 0 && self.williamson == (0, 0, 1)
    }

    pub fn is_elliptic_elliptic(&self) -> bool {
        self.rank == 0 && self.williamson == (2, 0, 0)
    }

    pub fn type_name(&self) -> String {
        let (e, h, f) = self.williamson;
        let mut parts = Vec::new();
        parts.extend(std::iter::repeat_n("elliptic", e as usize));
        parts.extend(std::iter::repeat_n("hyperbolic", h as usize));
        parts.extend(std::iter::repeat_n("focus-focus", f as usize));
        if parts.is_empty() {
            "degenerate".into()
        } else {
            parts.join("-")
        }
    }
}

/// Where to look: chart seeds within `chart_radius` on flat and momentum
/// factors, optionally keeping only points whose value lies in `window`.
#[derive(Clone, Copy, Debug)]
pub struct SearchRegion {
    pub chart_radius: f64,
    pub window: Option<ValueWindow>,
}

impl SearchRegion {
    pub fn chart(chart_radius: f64) -> Self {
        SearchRegion {
            chart_radius,
            window: None,
        }
    }

    /// Seeds covering the preimage of `window`; the chart radius is taken from
    /// the window size.
    pub fn from_window(window: ValueWindow) -> Self {
        let m = [window.j.0, window.j.1, window.h.0, window.h.1]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        SearchRegion {
            chart_radius: (2.0 * m + 1.0).sqrt().max(1.0),
            window: Some(window),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub seeds: usize,
    pub converged: usize,
    pub diverged: usize,
    pub merged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPointRecord>,
    pub diagnostics: SearchDiagnostics,
}

impl CriticalSearch {
    pub fn rank0(&self) -> impl Iterator<Item = &CriticalPointRecord> {
        self.points.iter().filter(|p| p.rank == 0)
    }

    pub fn focus_focus_values(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.rank0().filter(|p| p.is_focus_focus()).map(|p| p.value).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

const RESIDUAL_TOL: f64 = 1e-10;
const MERGE_DIST: f64 = 1e-6;

fn field_residual(system: &SystemModel, which: Which, p: &[f64]) -> f64 {
    let mut x = vec![0.0; p.len()];
    system.vector_field_raw(which, p, &mut x);
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Damped Gauss–Newton with a central-difference Jacobian. `extra` unknowns
/// are appended after the coordinates and are not projected.
pub(crate) fn gauss_newton<R>(system: &SystemModel, start: Vec<f64>, extra: usize, residual: R, tol: f64) -> Option<Vec<f64>>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let m = system.manifold;
    let d = system.dim();
    let mut z = start;
    m.project(&mut z[..d]);
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = residual(&z);
    let n = d + extra;
    for _ in 0..80 {
        let rn = norm(&r);
        if !rn.is_finite() {
            return None;
        }
        if rn < tol {
            return Some(z);
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), n);
        let mut zp = z.clone();
        for k in 0..n {
            let orig = zp[k];
            zp[k] = orig + h;
            let rp = residual(&zp);
            zp[k] = orig - h;
            let rm = residual(&zp);
            zp[k] = orig;
            for i in 0..r.len() {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac.svd(true, true).solve(&DVector::from_column_slice(&r), 1e-12).ok()?;
        let sn = step.norm();
        let mut damp = if sn > 0.5 { 0.5 / sn } else { 1.0 };
        // backtracking on the residual norm
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = z.clone();
            for k in 0..n {
                trial[k] -= damp * step[k];
            }
            m.project(&mut trial[..d]);
            let rt = residual(&trial);
            if norm(&rt) < rn || damp < 1e-3 {
                z = trial;
                r = rt;
                accepted = true;
                break;
            }
            damp *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    (norm(&r) < tol).then_some(z)
}

fn rank0_residual(system: &SystemModel, p: &[f64]) -> Vec<f64> {
    let d = p.len();
    let mut out = vec![0.0; 2 * d];
    let (a, b) = out.split_at_mut(d);
    system.vector_field_raw(Which::J, p, a);
    system.vector_field_raw(Which::H, p, b);
    out.extend(system.manifold.constraints(p));
    out
}

fn rank1_residual(system: &SystemModel, z: &[f64]) -> Vec<f64> {
    let d = z.len() - 1;
    let (p, th) = (&z[..d], z[d]);
    let mut out = vec![0.0; d];
    system.vector_field_raw(Which::Combination(th.cos(), th.sin()), p, &mut out);
    out.extend(system.manifold.constraints(p));
    out
}

/// Singular values of dF restricted to the tangent space.
pub fn differential_singular_values(system: &SystemModel, p: &[f64]) -> Vec<f64> {
    let basis = system.manifold.tangent_basis(p);
    let d = p.len();
    let mut gj = vec![0.0; d];
    let mut gh = vec![0.0; d];
    system.j.gradient(p, &mut gj);
    system.h.gradient(p, &mut gh);
    let df = DMatrix::<f64>::from_fn(2, basis.len(), |i, k| {
        let g = if i == 0 { &gj } else { &gh };
        g.iter().zip(basis[k].iter()).map(|(a, b)| a * b).sum::<f64>()
    });
    let mut s: Vec<f64> = df.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rank of dF with the scale-aware threshold 1e−7·max(1, σ_max).
pub fn differential_rank(system: &SystemModel, p: &[f64]) -> usize {
    let s = differential_singular_values(system, p);
    let thr = 1e-7 * s[0].max(1.0);
    s.iter().filter(|&&v| v > thr).count()
}

/// Critical points of F inside `region`, from a `grid`-per-axis seed grid.
pub fn find_critical_points(
    system: &SystemModel,
    region: SearchRegion,
    grid: usize,
    tol: f64,
) -> Result<CriticalSearch, Error> {
    if grid < 8 {
        return Err(Error::Config(format!("grid must be at least 8 per axis, got {grid}")));
    }
    if !(region.chart_radius > 0.0 && region.chart_radius.is_finite()) {
        return Err(Error::Config("search region must be bounded".into()));
    }
    let tol = tol.min(1e-11);
    let d = system.dim();
    let seeds = system.manifold.chart_seeds(grid, region.chart_radius);
    let mut diag = SearchDiagnostics::default();

    let rank0: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| gauss_newton(system, s.clone(), 0, |p| rank0_residual(system, p), tol))
        .collect();

    // Rank-one search on a coarser grid, four initial directions each.
    let coarse = system.manifold.chart_seeds((grid / 2).max(4), region.chart_radius);
    let thetas = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
    let n_dof = system.manifold.leaf_dim() / 2;
    let jobs: Vec<Vec<f64>> = coarse
        .iter()
        .filter(|_| n_dof >= 2)
        .flat_map(|s| {
            thetas.iter().map(move |&t| {
                let mut z = s.clone();
                z.push(t);
                z
            })
        })
        .collect();
    let rank1: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|z| gauss_newton(system, z.clone(), 1, |w| rank1_residual(system, w), tol))
        .collect();
    diag.seeds = seeds.len() + jobs.len();

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for r in rank0.into_iter().chain(rank1.into_iter().map(|o| o.map(|mut z| {
        z.truncate(d);
        z
    }))) {
        match r {
            Some(p) => {
                diag.converged += 1;
                candidates.push(p);
            }
            None => diag.diverged += 1,
        }
    }

    let classified: Vec<Option<CriticalPointRecord>> = candidates
        .par_iter()
        .map(|p| {
            let pt = PhasePoint {
                manifold: system.manifold,
                coords: p.clone(),
            };
            classify_critical_point(system, &pt).ok()
        })
        .collect();

    let mut points: Vec<CriticalPointRecord> = Vec::new();
    for rec in classified.into_iter().flatten() {
        if let Some(w) = &region.window {
            if !w.contains(rec.value) {
                continue;
            }
        }
        if !system.domain.contains_value(rec.value.0, rec.value.1) {
            continue;
        }
        let dup = points.iter().any(|q| {
            if q.rank != rec.rank {
                return false;
            }
            if rec.rank == 0 {
                dist(&q.point.coords, &rec.point.coords) < MERGE_DIST
            } else {
                // rank-one points come in J-orbits; one record per value and type
                (q.value.0 - rec.value.0).abs() < MERGE_DIST
                    && (q.value.1 - rec.value.1).abs() < MERGE_DIST
                    && q.williamson == rec.williamson
            }
        });
        if dup {
            diag.merged += 1;
        } else {
            points.push(rec);
        }
    }
    points.sort_by(|a, b| {
        a.rank
            .cmp(&b.rank)
            .then(a.value.0.total_cmp(&b.value.0))
            .then(a.value.1.total_cmp(&b.value.1))
            .then_with(|| {
                a.point
                    .coords
                    .iter()
                    .zip(&b.point.coords)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    Ok(CriticalSearch {
        points,
        diagnostics: diag,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Hessian of `which` restricted to the tangent space at a critical point of
/// it, with the constraint curvature (Lagrange multiplier) term included.
fn tangent_hessian(system: &SystemModel, which: Which, p: &[f64], basis: &[DVector<f64>]) -> DMatrix<f64> {
    let m = system.manifold;
    let d = p.len();
    let mut g = vec![0.0; d];
    system.gradient_raw(which, p, &mut g);
    let mut hess = system.hessian(which, p);
    let normals = m.constraint_gradients(p);
    if !normals.is_empty() {
        let nmat = DMatrix::from_fn(d, normals.len(), |i, k| normals[k][i]);
        let lambda = nmat
            .svd(true, true)
            .solve(&DVector::from_column_slice(&g), 1e-14)
            .expect("SVD solve");
        for (k, h) in m.constraint_hessians().into_iter().enumerate() {
            hess -= h * lambda[k];
        }
    }
    let b = DMatrix::from_fn(d, basis.len(), |i, k| basis[k][i]);
    b.transpose() * hess * b
}

fn omega_matrix(system: &SystemModel, p: &[f64], basis: &[DVector<f64>]) -> DMatrix<f64> {
    let pinv = system.manifold.poisson_pinv(p);
    let n = basis.len();
    DMatrix::from_fn(n, n, |i, k| -(basis[i].transpose() * &pinv * &basis[k])[(0, 0)])
}

fn eigenvalues(m: DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut e: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    e
}

/// Williamson type from the spectrum of Ω⁻¹A. Returns `None` when the
/// spectrum is borderline (zero, colliding, or not in ±λ, ±λ̄ quadruples).
fn williamson_from_spectrum(ev: &[Complex<f64>]) -> Option<(u8, u8, u8)> {
    let scale = ev.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if scale < 1e-9 {
        return None;
    }
    let tol = 1e-6 * scale.max(1.0);
    for z in ev {
        if z.norm() < tol {
            return None;
        }
        let has = |w: Complex<f64>| ev.iter().any(|u| (u - w).norm() < 1e3 * tol);
        if !has(-z) || !has(z.conj()) {
            return None;
        }
    }
    for i in 0..ev.len() {
        for k in i + 1..ev.len() {
            if (ev[i] - ev[k]).norm() < tol {
                return None;
            }
        }
    }
    let imag = ev.iter().filter(|z| z.re.abs() < tol).count();
    let real = ev.iter().filter(|z| z.im.abs() < tol).count();
    let complex = ev.len() - imag - real;
    Some(((imag / 2) as u8, (real / 2) as u8, (complex / 4) as u8))
}

/// Classifies a critical point (rank 0 or 1) by its Williamson type.
pub fn classify_critical_point(system: &SystemModel, m: &PhasePoint) -> Result<CriticalPointRecord, Error> {
    system.check_point(m)?;
    let p = &m.coords;
    let rank = differential_rank(system, p);
    let value = system.f_raw(p);
    let basis = system.manifold.tangent_basis(p);
    let omega = omega_matrix(system, p, &basis);
    let omega_inv = omega
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("symplectic form is degenerate at the point".into()))?;
    let n_dof = basis.len() / 2;
    if rank >= n_dof {
        return Err(Error::Precondition("dF has full rank at the point".into()));
    }
    match rank {
        0 => {
            let res = field_residual(system, Which::J, p) + field_residual(system, Which::H, p);
            if res > RESIDUAL_TOL {
                return Err(Error::Precondition(format!("point is not critical (residual {res:.2e})")));
            }
            let qj = tangent_hessian(system, Which::J, p, &basis);
            let qh = tangent_hessian(system, Which::H, p, &basis);
            let mut result = None;
            let mut eig = Vec::new();
            for (a, b) in [(1.0, SQRT_2 - 1.0), (1.0, 3f64.sqrt() - 1.0)] {
                eig = eigenvalues(&omega_inv * (&qj * a + &qh * b));
                result = williamson_from_spectrum(&eig);
                if result.is_some() {
                    break;
                }
            }
            // Q_J and Q_H must span a two-dimensional space (for two degrees of freedom).
            let independent = if n_dof >= 2 {
                let (nj, nh) = (qj.norm(), qh.norm());
                nj > 1e-9 && nh > 1e-9 && {
                    let c = qj.dot(&qh) / (nj * nh);
                    1.0 - c.abs() > 1e-9
                }
            } else {
                true
            };
            let ok = result.is_some_and(|(e, h, f)| (e + h + 2 * f) as usize == n_dof) && independent;
            Ok(CriticalPointRecord {
                point: m.clone(),
                rank: 0,
                williamson: result.unwrap_or((0, 0, 0)),
                nondegenerate: ok,
                value,
                eigen_data: eig.iter().map(|z| (z.re, z.im)).collect(),
            })
        }
        1 => {
            // the critical combination g = aJ + bH and the regular k = −bJ + aH
            let d = p.len();
            let mut gj = vec![0.0; d];
            let mut gh = vec![0.0; d];
            system.gradient_raw(Which::J, p, &mut gj);
            system.gradient_raw(Which::H, p, &mut gh);
            let tan = |g: &[f64]| -> DVector<f64> {
                DVector::from_iterator(basis.len(), basis.iter().map(|e| e.iter().zip(g).map(|(x, y)| x * y).sum()))
            };
            let (tj, th) = (tan(&gj), tan(&gh));
            // null vector of [tj th]
            let mtx = DMatrix::from_columns(&[tj.clone(), th.clone()]);
            let svd = mtx.svd(false, true);
            let vt = svd.v_t.expect("v_t");
            let (a, b) = (vt[(1, 0)], vt[(1, 1)]);
            let g = Which::Combination(a, b);
            let k = Which::Combination(-b, a);
            let res = field_residual(system, g, p);
            if res > RESIDUAL_TOL * (1.0 + tj.norm() + th.norm()) {
                return Err(Error::Precondition(format!("point is not critical (residual {res:.2e})")));
            }
            let mut xk = vec![0.0; d];
            system.vector_field_raw(k, p, &mut xk);
            let v = tan(&xk);
            let n = basis.len();
            // w ⟂ v (euclidean) with ω(v, w) = 0: null space of the 2×n system
            let ov = omega.transpose() * &v;
            let cons = DMatrix::from_fn(2, n, |i, c| if i == 0 { v[c] } else { ov[c] });
            let svd = cons.svd(false, true);
            let vt = svd.v_t.expect("v_t");
            let full = DMatrix::from_fn(n, n, |i, c| if i < vt.nrows() { vt[(i, c)] } else { 0.0 });
            // complete to an orthonormal basis; the last n − 2 rows span the null space
            let qr = full.transpose().qr();
            let q = qr.q();
            let w: Vec<DVector<f64>> = (2..n).map(|c| q.column(c).into_owned()).collect();
            let qg = tangent_hessian(system, g, p, &basis);
            let red = DMatrix::from_fn(w.len(), w.len(), |i, c| (w[i].transpose() * &qg * &w[c])[(0, 0)]);
            let ored = DMatrix::from_fn(w.len(), w.len(), |i, c| (w[i].transpose() * &omega * &w[c])[(0, 0)]);
            let eig = match ored.clone().try_inverse() {
                Some(inv) => eigenvalues(inv * &red),
                None => Vec::new(),
            };
            let det = red.determinant();
            let scale = red.norm().powi(2).max(1e-300);
            let (typ, ok) = if w.len() != 2 || det.abs() < 1e-6 * scale {
                ((0, 0, 0), false)
            } else if det > 0.0 {
                ((1, 0, 0), true)
            } else {
                ((0, 1, 0), true)
            };
            Ok(CriticalPointRecord {
                point: m.clone(),
                rank: 1,
                williamson: typ,
                nondegenerate: ok,
                value,
                eigen_data: eig.iter().map(|z| (z.re, z.im)).collect(),
            })
        }
        _ => Err(Error::Precondition("dF has full rank at the point".into())),
    }
}

/// Local scales at a focus-focus point: with M_f = Ω⁻¹Q_f the linearisations,
/// H ≈ β·J + α·q where q is the hyperbolic generator, so that
/// β = −tr(M_H M_J)/4 and α² = tr(M_H²)/4 + β². Returns (α, β) with α > 0.
pub fn eliasson_scales(system: &SystemModel, m: &PhasePoint) -> Result<(f64, f64), Error> {
    let rec = classify_critical_point(system, m)?;
    if !rec.is_focus_focus() {
        return Err(Error::Precondition(format!("{} point is not focus-focus", rec.type_name())));
    }
    let p = &m.coords;
    let basis = system.manifold.tangent_basis(p);
    let omega_inv = omega_matrix(system, p, &basis)
        .try_inverse()
        .ok_or_else(|| Error::Precondition("symplectic form is degenerate at the point".into()))?;
    let mj = &omega_inv * tangent_hessian(system, Which::J, p, &basis);
    let mh = &omega_inv * tangent_hessian(system, Which::H, p, &basis);
    let beta = -(&mh * &mj).trace() / 4.0;
    let a2 = (&mh * &mh).trace() / 4.0 + beta * beta;
    if a2 <= 0.0 {
        return Err(Error::Precondition("H has no hyperbolic part at the point".into()));
    }
    Ok((a2.sqrt(), beta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemitoricVerdict {
    pub semitoric: bool,
    pub certificate: Vec<CriticalPointRecord>,
    /// One entry per violation: `non-proper-J`, `hyperbolic-block at …`, `degenerate at …`.
    pub reasons: Vec<String>,
    pub caveats: Vec<String>,
}

/// Decides whether `system` is semitoric on the searched region.
pub fn is_semitoric(system: &SystemModel, region: SearchRegion) -> Result<SemitoricVerdict, Error> {
    let search = find_critical_points(system, region, 8, 1e-12)?;
    let mut reasons = Vec::new();
    let mut certificate = Vec::new();
    if !system.j_is_proper {
        reasons.push("non-proper-J: J is not a proper map".to_string());
    }
    for rec in &search.points {
        let at = format!("F = ({:.6}, {:.6})", rec.value.0, rec.value.1);
        if !rec.nondegenerate {
            reasons.push(format!("degenerate {} point at {at}", if rec.rank == 0 { "rank-0" } else { "rank-1" }));
            certificate.push(rec.clone());
        } else if rec.williamson.1 > 0 {
            reasons.push(format!("hyperbolic-block ({}) at {at}", rec.type_name()));
            certificate.push(rec.clone());
        }
    }
    if certificate.is_empty() {
        certificate = search.points.iter().filter(|r| r.rank == 0).cloned().collect();
    }
    let caveats = vec![format!(
        "search covered chart radius {} with {} seeds",
        region.chart_radius, search.diagnostics.seeds
    )];
    Ok(SemitoricVerdict {
        semitoric: reasons.is_empty(),
        certificate,
        reasons,
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, Manifold};

    #[test]
    fn spin_poles() {
        let s = builtin("spin-oscillator").unwrap();
        let n = PhasePoint::new(Manifold::SphereR2, vec![0.0, 0.0, 1.0, 0.0, 0.0], 1e-12).unwrap();
        let r = classify_critical_point(&s, &n).unwrap();
        assert_eq!((r.rank, r.williamson, r.nondegenerate), (0, (0, 0, 1), true));
        let sp = PhasePoint::new(Manifold::SphereR2, vec![0.0, 0.0, -1.0, 0.0, 0.0], 1e-12).unwrap();
        let r = classify_critical_point(&s, &sp).unwrap();
        assert_eq!((r.rank, r.williamson, r.nondegenerate), (0, (2, 0, 0), true));
    }

    #[test]
    fn spectrum_quadruples() {
        let z = |a: f64, b: f64| Complex::new(a, b);
        let ff = [z(-0.5, -1.0), z(-0.5, 1.0), z(0.5, -1.0), z(0.5, 1.0)];
        assert_eq!(williamson_from_spectrum(&ff), Some((0, 0, 1)));
        let eh = [z(-2.0, 0.0), z(0.0, -1.0), z(0.0, 1.0), z(2.0, 0.0)];
        assert_eq!(williamson_from_spectrum(&eh), Some((1, 1, 0)));
        let broken = [z(-2.0, 0.0), z(0.0, -1.0), z(0.0, 1.0), z(3.0, 0.0)];
        assert_eq!(williamson_from_spectrum(&broken), None);
        let collide = [z(0.0, -1.0), z(0.0, -1.0), z(0.0, 1.0), z(0.0, 1.0)];
        assert_eq!(williamson_from_spectrum(&collide), None);
    }

    #[test]
    fn spin_scales() {
        let s = builtin("spin-oscillator").unwrap();
        let n = PhasePoint::new(Manifold::SphereR2, vec![0.0, 0.0, 1.0, 0.0, 0.0], 1e-12).unwrap();
        let (a, b) = eliasson_scales(&s, &n).unwrap();
        assert!((a - 0.5).abs() < 1e-9 && b.abs() < 1e-9, "{a} {b}");
        let t = s.reparametrized(0.1, 2.0);
        let (a, b) = eliasson_scales(&t, &n).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b - 0.1).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn regular_point_is_rejected() {
        let s = builtin("spin-oscillator").unwrap();
        let p = PhasePoint::projected(Manifold::SphereR2, vec![0.3, 0.4, 0.5, 0.7, -0.2]);
        assert!(matches!(classify_critical_point(&s, &p), Err(Error::Precondition(_))));
    }

    #[test]
    fn spin_census() {
        let s = builtin("spin-oscillator").unwrap();
        let w = ValueWindow::new(-2.0, 2.0, -1.5, 1.5).unwrap();
        let found = find_critical_points(&s, SearchRegion::from_window(w), 8, 1e-12).unwrap();
        let r0: Vec<_> = found.rank0().collect();
        assert_eq!(r0.len(), 2, "{:?}", r0);
        assert_eq!(found.focus_focus_values().len(), 1);
        let r1: Vec<_> = found.points.iter().filter(|p| p.rank == 1).collect();
        assert!(!r1.is_empty());
        for p in r1 {
            assert_eq!((p.williamson, p.nondegenerate), ((1, 0, 0), true), "{:?}", p.value);
        }
    }

    #[test]
    fn cp1_poles() {
        let s = builtin("cp1-toric").unwrap();
        let found = find_critical_points(&s, SearchRegion::chart(1.0), 8, 1e-12).unwrap();
        let v: Vec<_> = found.points.iter().map(|p| (p.rank, p.williamson, p.value.0.round())).collect();
        assert_eq!(v, vec![(0, (1, 0, 0), -1.0), (0, (1, 0, 0), 1.0)]);
    }

    #[test]
    fn semitoric_gate() {
        let spin = builtin("spin-oscillator").unwrap();
        let w = ValueWindow::new(-2.0, 2.0, -1.5, 1.5).unwrap();
        let v = is_semitoric(&spin, SearchRegion::from_window(w)).unwrap();
        assert!(v.semitoric, "{:?}", v.reasons);

        let hyp = builtin("s2xs2-hyperbolic").unwrap();
        let v = is_semitoric(&hyp, SearchRegion::chart(1.0)).unwrap();
        assert!(!v.semitoric);
        assert!(v.certificate.iter().any(|r| r.williamson.1 >= 1));
        assert!(v.reasons.iter().any(|r| r.starts_with("hyperbolic-block")), "{:?}", v.reasons);

        let pend = builtin("spherical-pendulum").unwrap();
        let v = is_semitoric(&pend, SearchRegion::chart(2.0)).unwrap();
        assert!(!v.semitoric);
        assert!(v.reasons.iter().any(|r| r.starts_with("non-proper-J")));
        let ff: Vec<_> = v.certificate.iter().filter(|r| r.is_focus_focus()).collect();
        eprintln!("{:?}", v.reasons);
        assert_eq!(ff.len(), 1);
    }
}
