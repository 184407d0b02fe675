//! Flows, first-return maps and period lattices of regular tori.

pub mod dop853;
mod tableau;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::{PhasePoint, SystemModel, Which, MAX_DIM};
use crate::Error;
pub use dop853::{Control, DenseStep, Dop853, StepInfo};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowResult {
    pub endpoint: PhasePoint,
    pub elapsed: f64,
    /// max |F(p_t) − F(p_0)| over accepted steps.
    pub conservation_drift: f64,
    pub steps: usize,
}

fn rhs<'a>(system: &'a SystemModel, which: Which) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    move |_, y, dy| system.vector_field_raw(which, y, dy)
}

/// Integrates the Hamiltonian flow of `which` for time `t`.
pub fn flow(system: &SystemModel, which: Which, p: &PhasePoint, t: f64, tol: f64) -> Result<FlowResult, Error> {
    if !(tol > 0.0) {
        return Err(Error::Config("flow tolerance must be positive".into()));
    }
    system.check_point(p)?;
    if t == 0.0 {
        return Ok(FlowResult {
            endpoint: p.clone(),
            elapsed: 0.0,
            conservation_drift: 0.0,
            steps: 0,
        });
    }
    let f0 = system.f_raw(&p.coords);
    let mut drift: f64 = 0.0;
    let m = system.manifold;
    let out = Dop853::new(tol).integrate(
        rhs(system, which),
        |y| m.project(y),
        0.0,
        &p.coords,
        t,
        |s| {
            let f = system.f_raw(s.y1);
            drift = drift.max((f.0 - f0.0).abs()).max((f.1 - f0.1).abs());
            Control::Continue
        },
    )?;
    Ok(FlowResult {
        endpoint: PhasePoint {
            manifold: m,
            coords: out.y,
        },
        elapsed: out.t,
        conservation_drift: drift,
        steps: out.steps,
    })
}

/// Raw flow on coordinate slices.
pub fn flow_raw(system: &SystemModel, which: Which, p: &[f64], t: f64, tol: f64) -> Result<Vec<f64>, Error> {
    let m = system.manifold;
    Ok(Dop853::new(tol)
        .integrate(rhs(system, which), |y| m.project(y), 0.0, p, t, |_| Control::Continue)?
        .y)
}

/// The Hamiltonian S¹-action generated by J.
///
/// When X_J is linear in the ambient coordinates (all builtins) the action is
/// `exp(sG)`; otherwise it falls back to numerical integration.
#[derive(Clone, Debug)]
pub struct CircleAction {
    generator: Option<DMatrix<f64>>,
    system: SystemModel,
    /// Rotations by 2πk/8, used to average out invariants.
    samples: Vec<DMatrix<f64>>,
}

impl CircleAction {
    pub fn new(system: &SystemModel) -> Self {
        let d = system.dim();
        let mut g = DMatrix::zeros(d, d);
        let mut xp = vec![0.0; d];
        let mut xm = vec![0.0; d];
        let h = 1e-3;
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = h;
            system.vector_field_raw(Which::J, &e, &mut xp);
            e[j] = -h;
            system.vector_field_raw(Which::J, &e, &mut xm);
            for i in 0..d {
                g[(i, j)] = (xp[i] - xm[i]) / (2.0 * h);
            }
        }
        // Linearity check on a few deterministic points.
        let mut linear = true;
        for k in 0..6 {
            let p: Vec<f64> = (0..d).map(|i| ((k * 7 + i * 3) as f64 * 0.37).sin()).collect();
            system.vector_field_raw(Which::J, &p, &mut xp);
            let gp = &g * DVector::from_column_slice(&p);
            let err = (0..d).map(|i| (gp[i] - xp[i]).abs()).fold(0.0, f64::max);
            if err > 1e-9 {
                linear = false;
            }
        }
        let generator = linear.then_some(g);
        let mut act = CircleAction {
            generator,
            system: system.clone(),
            samples: Vec::new(),
        };
        if let Some(g) = &act.generator {
            act.samples = (0..8).map(|k| (g * (TAU * k as f64 / 8.0)).exp()).collect();
        }
        act
    }

    pub fn is_linear(&self) -> bool {
        self.generator.is_some()
    }

    /// φ_J^s(p).
    pub fn rotate(&self, s: f64, p: &[f64]) -> Vec<f64> {
        match &self.generator {
            Some(g) => {
                let r = (g * s).exp() * DVector::from_column_slice(p);
                let mut v: Vec<f64> = r.iter().copied().collect();
                self.system.manifold.project(&mut v);
                v
            }
            None => flow_raw(&self.system, Which::J, p, s, 1e-12).unwrap_or_else(|_| p.to_vec()),
        }
    }

    /// Orbit averages of the coordinates and of their pairwise products.
    /// These are J-invariant and separate J-orbits of the builtin systems.
    pub fn invariants(&self, p: &[f64]) -> Vec<f64> {
        let d = p.len();
        let rotated: Vec<Vec<f64>> = if self.samples.is_empty() {
            (0..8).map(|k| self.rotate(TAU * k as f64 / 8.0, p)).collect()
        } else {
            let v = DVector::from_column_slice(p);
            self.samples.iter().map(|r| (r * &v).iter().copied().collect()).collect()
        };
        let mut out = Vec::with_capacity(d + d * (d + 1) / 2);
        for i in 0..d {
            out.push(rotated.iter().map(|q| q[i]).sum::<f64>() / 8.0);
        }
        for i in 0..d {
            for j in i..d {
                out.push(rotated.iter().map(|q| q[i] * q[j]).sum::<f64>() / 8.0);
            }
        }
        out
    }

    /// The time s ∈ [0, 2π) with φ_J^s(a) closest to b, and that distance.
    pub fn solve_time(&self, a: &[f64], b: &[f64]) -> (f64, f64) {
        let dist = |s: f64| -> f64 {
            self.rotate(s, a)
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
        };
        let n = 72;
        let (mut best, mut best_d) = (0.0, f64::INFINITY);
        for k in 0..n {
            let s = TAU * k as f64 / n as f64;
            let d = dist(s);
            if d < best_d {
                best = s;
                best_d = d;
            }
        }
        // golden-section refinement, then Newton on the derivative
        let (mut lo, mut hi) = (best - TAU / n as f64, best + TAU / n as f64);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let m1 = hi - gr * (hi - lo);
            let m2 = lo + gr * (hi - lo);
            if dist(m1) < dist(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let mut s = 0.5 * (lo + hi);
        let d = a.len();
        let mut xj = vec![0.0; d];
        for _ in 0..4 {
            let q = self.rotate(s, a);
            self.system.vector_field_raw(Which::J, &q, &mut xj);
            let diff: Vec<f64> = q.iter().zip(b).map(|(x, y)| x - y).collect();
            let num: f64 = diff.iter().zip(&xj).map(|(x, y)| x * y).sum();
            let den: f64 = xj.iter().map(|x| x * x).sum();
            if den < 1e-300 {
                break;
            }
            s -= num / den;
        }
        let s = s.rem_euclid(TAU);
        (s, dist(s).sqrt())
    }
}

/// A codimension-one section for first-return maps.
#[derive(Clone, Debug)]
pub enum Section {
    /// {q : ⟨q − point, normal⟩ = 0}.
    Hyperplane { point: Vec<f64>, normal: Vec<f64> },
    /// {q : ⟨R(q) − R(a), w⟩ = 0} for the J-invariants R; it contains the
    /// J-orbit of `a`. Crossings count only when |R(q) − R(a)| is small
    /// relative to the excursion observed so far.
    JOrbit {
        reference: Vec<f64>,
        direction: Vec<f64>,
        action: Box<CircleAction>,
    },
}

impl Section {
    fn value(&self, q: &[f64]) -> f64 {
        match self {
            Section::Hyperplane { point, normal } => {
                q.iter().zip(point).zip(normal).map(|((a, b), n)| (a - b) * n).sum()
            }
            Section::JOrbit {
                reference,
                direction,
                action,
            } => action
                .invariants(q)
                .iter()
                .zip(reference)
                .zip(direction)
                .map(|((a, b), n)| (a - b) * n)
                .sum(),
        }
    }

    fn offset(&self, q: &[f64]) -> f64 {
        match self {
            Section::Hyperplane { point, .. } => dist(q, point),
            Section::JOrbit { reference, action, .. } => dist(&action.invariants(q), reference),
        }
    }

    /// Section through `p` normal to the H-flow direction.
    pub fn hyperplane_through(system: &SystemModel, p: &[f64]) -> Section {
        let mut x = vec![0.0; p.len()];
        system.vector_field_raw(Which::H, p, &mut x);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Section::Hyperplane {
            point: p.to_vec(),
            normal: x.iter().map(|v| v / n).collect(),
        }
    }

    /// Section containing the J-orbit of `a`, transversal to the H-flow.
    pub fn j_orbit_through(system: &SystemModel, a: &[f64], action: CircleAction) -> Result<Section, Error> {
        let d = a.len();
        let mut x = vec![0.0; d];
        system.vector_field_raw(Which::H, a, &mut x);
        let eps = 1e-5;
        let plus: Vec<f64> = a.iter().zip(&x).map(|(p, v)| p + eps * v).collect();
        let minus: Vec<f64> = a.iter().zip(&x).map(|(p, v)| p - eps * v).collect();
        let (rp, rm) = (action.invariants(&plus), action.invariants(&minus));
        let w: Vec<f64> = rp.iter().zip(&rm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
        let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-9 {
            return Err(Error::DegenerateTorus(
                "H-flow is tangent to the J-orbit at the seed".into(),
            ));
        }
        Ok(Section::JOrbit {
            reference: action.invariants(a),
            direction: w.iter().map(|v| v / n).collect(),
            action: Box::new(action),
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Options for return maps and lattices.
#[derive(Clone, Copy, Debug)]
pub struct ReturnOptions {
    pub tol: f64,
    pub time_budget: f64,
    pub h_max: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions {
            tol: 1e-12,
            time_budget: 400.0,
            h_max: 0.25,
        }
    }
}

/// First crossing of `section` by the H-flow from `p`, in the orientation of
/// the flow at `p`. The crossing time is refined on the dense output.
pub fn first_return_map(
    system: &SystemModel,
    section: &Section,
    p: &PhasePoint,
    opts: ReturnOptions,
) -> Result<(PhasePoint, f64), Error> {
    system.check_point(p)?;
    let (q, t) = first_return_raw(system, Which::H, section, &p.coords, opts)?;
    Ok((
        PhasePoint {
            manifold: system.manifold,
            coords: q,
        },
        t,
    ))
}

pub(crate) fn first_return_raw(
    system: &SystemModel,
    which: Which,
    section: &Section,
    p: &[f64],
    opts: ReturnOptions,
) -> Result<(Vec<f64>, f64), Error> {
    let d = p.len();
    let m = system.manifold;
    let mut x = vec![0.0; d];
    system.vector_field_raw(which, p, &mut x);
    let eps = 1e-6;
    let ahead: Vec<f64> = p.iter().zip(&x).map(|(a, v)| a + eps * v).collect();
    let behind: Vec<f64> = p.iter().zip(&x).map(|(a, v)| a - eps * v).collect();
    let orient = (section.value(&ahead) - section.value(&behind)).signum();
    if orient == 0.0 {
        return Err(Error::DegenerateTorus("section is not transversal at the start".into()));
    }
    let mut excursion: f64 = 0.0;
    let mut found: Option<(Vec<f64>, f64)> = None;
    let mut buf = vec![0.0; d];
    let res = Dop853::new(opts.tol)
        .with_dense()
        .with_h_max(opts.h_max)
        .integrate(
            rhs(system, which),
            |y| m.project(y),
            0.0,
            p,
            opts.time_budget,
            |s| {
                let g0 = orient * section.value(s.y0);
                let g1 = orient * section.value(s.y1);
                excursion = excursion.max(section.offset(s.y1));
                if !(g0 < 0.0 && g1 >= 0.0) {
                    return Control::Continue;
                }
                let dense = s.dense.expect("dense output requested");
                let (mut lo, mut hi) = (s.t0, s.t1);
                let (mut glo, mut ghi) = (g0, g1);
                let at = |t: f64, out: &mut Vec<f64>| -> f64 {
                    dense.eval(t, out);
                    m.project(out);
                    orient * section.value(out)
                };
                // Illinois false position, guarded by bisection
                let mut side = 0;
                let mut exact = None;
                for it in 0..200 {
                    let mut t = if it % 4 == 3 {
                        0.5 * (lo + hi)
                    } else {
                        hi - ghi * (hi - lo) / (ghi - glo)
                    };
                    if !(t > lo && t < hi) {
                        t = 0.5 * (lo + hi);
                    }
                    let g = at(t, &mut buf);
                    if g == 0.0 {
                        exact = Some(t);
                        break;
                    }
                    if g >= 0.0 {
                        hi = t;
                        ghi = g;
                        if side == 1 {
                            glo *= 0.5;
                        }
                        side = 1;
                    } else {
                        lo = t;
                        glo = g;
                        if side == -1 {
                            ghi *= 0.5;
                        }
                        side = -1;
                    }
                    if hi - lo < 1e-14 * hi.abs().max(1.0) {
                        break;
                    }
                }
                let t = exact.unwrap_or(0.5 * (lo + hi));
                if t < 1e-6 {
                    // the start point itself, up to rounding
                    return Control::Continue;
                }
                at(t, &mut buf);
                let off = section.offset(&buf);
                let accept = match section {
                    Section::Hyperplane { .. } => true,
                    Section::JOrbit { .. } => off <= (1e-3 * excursion).max(1e-7),
                };
                if accept {
                    found = Some((buf.clone(), t));
                    Control::Stop
                } else {
                    Control::Continue
                }
            },
        );
    res?;
    found.ok_or_else(|| {
        Error::NonCompactFiber(format!(
            "no return to the section within t = {}",
            opts.time_budget
        ))
    })
}

/// Basis of the closing-time lattice at a regular value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodLattice {
    pub value: (f64, f64),
    /// Rows (t1, t2) with φ_J^{t1}∘φ_H^{t2} = id on the torus.
    pub basis: [[f64; 2]; 2],
    pub residual: f64,
    pub seed: Vec<f64>,
}

impl PeriodLattice {
    pub fn tau1(&self) -> f64 {
        self.basis[1][0]
    }

    pub fn tau2(&self) -> f64 {
        self.basis[1][1]
    }
}

fn value_residual(system: &SystemModel, p: &[f64], c: (f64, f64)) -> f64 {
    let (j, h) = system.f_raw(p);
    (j - c.0).abs().max((h - c.1).abs())
}

/// A point of Λ_c = F⁻¹(c), found by minimum-norm Newton from `hint` or from
/// chart seeds. Among converged seeds the most regular one is returned.
pub fn seed_on_fiber(system: &SystemModel, c: (f64, f64), hint: Option<&[f64]>) -> Result<Vec<f64>, Error> {
    if let Some(h) = hint {
        if let Some(p) = newton_to_fiber(system, c, h) {
            return Ok(p);
        }
    }
    let radius = 1.0 + 2.0 * (c.0.abs() + c.1.abs()).sqrt();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in system.manifold.chart_seeds(4, radius) {
        if let Some(p) = newton_to_fiber(system, c, &s) {
            let r = regularity(system, &p);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, p));
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::NotRegular(format!("could not locate a point with F = ({}, {})", c.0, c.1))
    })
}

/// |X_J ∧ X_H| / (|X_J| |X_H|) scaled by the smaller field norm.
pub fn regularity(system: &SystemModel, p: &[f64]) -> f64 {
    let d = p.len();
    let mut a = [0.0; MAX_DIM];
    let mut b = [0.0; MAX_DIM];
    system.vector_field_raw(Which::J, p, &mut a[..d]);
    system.vector_field_raw(Which::H, p, &mut b[..d]);
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    (aa * bb - ab * ab).max(0.0).sqrt()
}

fn newton_to_fiber(system: &SystemModel, c: (f64, f64), start: &[f64]) -> Option<Vec<f64>> {
    let m = system.manifold;
    let d = start.len();
    let mut p = start.to_vec();
    m.project(&mut p);
    let mut gj = vec![0.0; d];
    let mut gh = vec![0.0; d];
    for _ in 0..60 {
        let (j, h) = system.f_raw(&p);
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut res: Vec<f64> = Vec::new();
        system.j.gradient(&p, &mut gj);
        system.h.gradient(&p, &mut gh);
        rows.push(DVector::from_column_slice(&gj));
        res.push(j - c.0);
        rows.push(DVector::from_column_slice(&gh));
        res.push(h - c.1);
        for (g, r) in m.constraint_gradients(&p).into_iter().zip(m.constraints(&p)) {
            rows.push(g);
            res.push(r);
        }
        let err = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if !err.is_finite() {
            return None;
        }
        if err < 1e-14 {
            break;
        }
        let jac = DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]);
        let rhs = DVector::from_column_slice(&res);
        let step = jac.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let norm = step.norm();
        let damp = if norm > 0.5 { 0.5 / norm } else { 1.0 };
        for k in 0..d {
            p[k] -= damp * step[k];
        }
        m.project(&mut p);
    }
    (value_residual(system, &p, c) < 1e-11 && system.domain.contains_value(c.0, c.1)).then_some(p)
}

/// Lattice basis at `c` from `seed` without the second-seed verification.
pub fn period_lattice_at(
    system: &SystemModel,
    c: (f64, f64),
    seed: &[f64],
    action: &CircleAction,
    opts: ReturnOptions,
) -> Result<PeriodLattice, Error> {
    if value_residual(system, seed, c) > 1e-8 {
        return Err(Error::Precondition(format!(
            "seed is not on the fiber over ({}, {})",
            c.0, c.1
        )));
    }
    let section = Section::j_orbit_through(system, seed, action.clone())?;
    let (b, t2) = first_return_raw(system, Which::H, &section, seed, opts)?;
    // b = φ_J^{-t1}(seed)  ⇒  seed = φ_J^{t1}(b)
    let (s, _) = action.solve_time(seed, &b);
    let t1 = (TAU - s).rem_euclid(TAU);
    let closed = action.rotate(t1, &b);
    let residual = dist(&closed, seed);
    Ok(PeriodLattice {
        value: c,
        basis: [[TAU, 0.0], [t1, t2]],
        residual,
        seed: seed.to_vec(),
    })
}

/// Period lattice at the regular value `c`, verified from a second seed.
pub fn torus_period_basis(system: &SystemModel, c: (f64, f64), seed: &PhasePoint) -> Result<PeriodLattice, Error> {
    system.check_point(seed)?;
    let action = CircleAction::new(system);
    let opts = ReturnOptions::default();
    let lat = period_lattice_at(system, c, &seed.coords, &action, opts)?;
    if lat.residual > 1e-7 {
        return Err(Error::DegenerateTorus(format!(
            "closure residual {:.2e} at ({}, {})",
            lat.residual, c.0, c.1
        )));
    }
    let moved = action.rotate(1.0, &seed.coords);
    let second = flow_raw(system, Which::H, &moved, 0.37 * lat.tau2(), 1e-13)?;
    let other = period_lattice_at(system, c, &second, &action, opts)?;
    let d1 = angle_diff(other.tau1(), lat.tau1());
    let d2 = (other.tau2() - lat.tau2()).abs();
    if d1 > 1e-6 || d2 > 1e-6 {
        return Err(Error::Consistency(format!(
            "lattice depends on the seed: Δτ1 = {d1:.2e}, Δτ2 = {d2:.2e}"
        )));
    }
    Ok(lat)
}

/// |a − b| modulo 2π.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}
