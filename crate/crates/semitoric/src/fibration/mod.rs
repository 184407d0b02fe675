//! Image of the momentum map: boundary columns, critical values, regular
//! samples, monodromy, and the developing map of the affine structure.

mod develop;

pub use develop::{develop_affine, DevSample, DevelopOptions, DevelopingMap, Focus, Knot, PathSample, Reference};

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{period_lattice_at, seed_on_fiber, CircleAction, PeriodLattice, ReturnOptions};
use crate::models::{Domain, SystemModel, ValueWindow, Which};
use crate::polygons::svg::{Canvas, SvgStyle};
use crate::singularities::{find_critical_points, gauss_newton, SearchRegion};
use crate::Error;

/// Extent of F(M) ∩ {J = j}: the minimum and maximum of H on the level set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnExtent {
    pub j: f64,
    pub lo: f64,
    pub hi: f64,
    /// Where the extremum is attained; `None` when it comes from the domain cap
    /// or is infinite.
    pub lo_point: Option<Vec<f64>>,
    pub hi_point: Option<Vec<f64>>,
}

impl ColumnExtent {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton (minimum norm) onto {J = j} ∩ M.
fn project_to_level(system: &SystemModel, j: f64, start: &[f64]) -> Option<Vec<f64>> {
    let m = system.manifold;
    let d = start.len();
    let mut p = start.to_vec();
    m.project(&mut p);
    let mut gj = vec![0.0; d];
    for _ in 0..40 {
        let (jv, _) = system.f_raw(&p);
        let mut rows = vec![];
        let mut res = vec![jv - j];
        system.j.gradient(&p, &mut gj);
        rows.push(DVector::from_column_slice(&gj));
        for (g, r) in m.constraint_gradients(&p).into_iter().zip(m.constraints(&p)) {
            rows.push(g);
            res.push(r);
        }
        let err = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if !err.is_finite() {
            return None;
        }
        if err < 1e-13 {
            return Some(p);
        }
        let jac = DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]);
        let step = jac.svd(true, true).solve(&DVector::from_column_slice(&res), 1e-12).ok()?;
        let n = step.norm();
        let damp = if n > 0.5 { 0.5 / n } else { 1.0 };
        for k in 0..d {
            p[k] -= damp * step[k];
        }
        m.project(&mut p);
    }
    let (jv, _) = system.f_raw(&p);
    ((jv - j).abs() < 1e-11).then_some(p)
}

enum Ascent {
    Found(Vec<f64>),
    /// The objective exceeded the given limit.
    Limit,
    Escaped,
}

/// Projected gradient ascent of `sign·H` on the level set, then a KKT polish.
fn level_extremum(system: &SystemModel, j: f64, start: &[f64], sign: f64, limit: f64) -> Option<Ascent> {
    let m = system.manifold;
    let d = start.len();
    let mut p = project_to_level(system, j, start)?;
    let obj = |p: &[f64]| sign * system.f_raw(p).1;
    let mut gj = vec![0.0; d];
    let mut gh = vec![0.0; d];
    let mut step = 0.2;
    let mut mu = 0.0;
    for _ in 0..80 {
        if obj(&p) > limit {
            return Some(Ascent::Limit);
        }
        if p.iter().map(|v| v * v).sum::<f64>() > 1e8 {
            return Some(Ascent::Escaped);
        }
        system.j.gradient(&p, &mut gj);
        system.h.gradient(&p, &mut gh);
        m.project_tangent(&p, &mut gj);
        m.project_tangent(&p, &mut gh);
        let jj = dot(&gj, &gj);
        mu = if jj > 1e-300 { dot(&gh, &gj) / jj } else { 0.0 };
        let g: Vec<f64> = gh.iter().zip(&gj).map(|(h, jv)| sign * (h - mu * jv)).collect();
        let gn = dot(&g, &g).sqrt();
        if gn < 1e-9 {
            break;
        }
        let mut moved = false;
        while step > 1e-10 {
            let trial: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + step * b / gn.max(1.0)).collect();
            if let Some(t) = project_to_level(system, j, &trial) {
                if obj(&t) > obj(&p) {
                    p = t;
                    step *= 1.5;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let mut z = p.clone();
    z.push(mu);
    let residual = |z: &[f64]| {
        let (p, mu) = (&z[..d], z[d]);
        let mut out = vec![0.0; d];
        system.vector_field_raw(Which::Combination(-mu, 1.0), p, &mut out);
        out.push(system.f_raw(p).0 - j);
        out.extend(m.constraints(p));
        out
    };
    if let Some(z) = gauss_newton(system, z, 1, residual, 1e-12) {
        // the polish may land on a saddle; keep it only if it is no worse
        if obj(&z[..d]) >= obj(&p) - 1e-9 {
            p = z[..d].to_vec();
        }
    }
    Some(Ascent::Found(p))
}

fn domain_caps(domain: &Domain, j: f64) -> (f64, f64) {
    match *domain {
        Domain::Full => (f64::NEG_INFINITY, f64::INFINITY),
        Domain::HalfSpace { a, b, c } => {
            if b > 0.0 {
                (f64::NEG_INFINITY, (c - a * j) / b)
            } else if b < 0.0 {
                ((c - a * j) / b, f64::INFINITY)
            } else if a * j <= c {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            }
        }
    }
}

fn seed_radius(j: f64) -> f64 {
    1.0 + 2.0 * (j.abs() + 1.0).sqrt()
}

/// Minimum and maximum of H on {J = j}, or `None` if the level set is empty
/// (within the domain). `hint` is a nearby column used for continuation.
pub fn column_extent(system: &SystemModel, j: f64, hint: Option<&ColumnExtent>) -> Option<ColumnExtent> {
    let (cap_lo, cap_hi) = domain_caps(&system.domain, j);
    if cap_lo > cap_hi {
        return None;
    }
    let seeds = system.manifold.chart_seeds(3, seed_radius(j));
    let side = |sign: f64, hinted: Option<&Vec<f64>>| -> Option<(f64, Option<Vec<f64>>)> {
        let limit = if sign > 0.0 { cap_hi } else { -cap_lo };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut capped = false;
        let mut escaped = false;
        let mut reached = false;
        let mut try_seed = |s: &[f64], best: &mut Option<(f64, Vec<f64>)>| match level_extremum(system, j, s, sign, limit) {
            Some(Ascent::Found(p)) => {
                reached = true;
                let v = sign * system.f_raw(&p).1;
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    *best = Some((v, p));
                }
            }
            Some(Ascent::Limit) => {
                reached = true;
                capped = true;
            }
            Some(Ascent::Escaped) => {
                reached = true;
                escaped = true;
            }
            None => {}
        };
        if let Some(h) = hinted {
            try_seed(h, &mut best);
        }
        // the hint alone is trusted only when it converged
        if best.is_none() || hinted.is_none() {
            for s in &seeds {
                try_seed(s, &mut best);
            }
        } else {
            for s in seeds.iter().step_by(9) {
                try_seed(s, &mut best);
            }
        }
        if !reached {
            return None;
        }
        if capped {
            return Some((limit * sign, None));
        }
        if escaped {
            return Some((sign * f64::INFINITY, None));
        }
        best.map(|(v, p)| {
            if v > limit {
                (limit * sign, None)
            } else {
                (sign * v, Some(p))
            }
        })
    };
    let (hi, hi_point) = side(1.0, hint.and_then(|h| h.hi_point.as_ref()))?;
    let (lo, lo_point) = side(-1.0, hint.and_then(|h| h.lo_point.as_ref()))?;
    if lo > hi + 1e-12 {
        return None;
    }
    Some(ColumnExtent {
        j,
        lo,
        hi,
        lo_point,
        hi_point,
    })
}

/// Bisection for the edge of J(M) between an empty abscissa and a non-empty
/// column.
pub fn locate_column_edge(system: &SystemModel, empty: f64, full: &ColumnExtent) -> ColumnExtent {
    let (mut a, mut b) = (empty, full.j);
    let mut best = full.clone();
    while (b - a).abs() > 1e-11 {
        let mid = 0.5 * (a + b);
        match column_extent(system, mid, Some(&best)) {
            Some(c) => {
                b = mid;
                best = c;
            }
            None => a = mid,
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub value: (f64, f64),
    pub rank: u8,
    /// Williamson type, e.g. `focus-focus` or `elliptic-elliptic`.
    pub kind: String,
    pub nondegenerate: bool,
    /// A critical point over the value.
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub system: String,
    pub window: ValueWindow,
    pub resolution: usize,
    pub columns: Vec<ColumnExtent>,
    /// Where J(M) ends inside the window, if it does.
    pub left_edge: Option<ColumnExtent>,
    pub right_edge: Option<ColumnExtent>,
    /// Graphs of the column extremes, left to right.
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
    pub critical_values: Vec<CriticalValue>,
    pub regular_samples: Vec<(f64, f64)>,
}

impl BifurcationDiagram {
    pub fn focus_focus_values(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .critical_values
            .iter()
            .filter(|c| c.rank == 0 && c.kind == "focus-focus")
            .map(|c| c.value)
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    pub fn rank0_values(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.critical_values.iter().filter(|c| c.rank == 0).map(|c| c.value).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    /// Lower graph left to right, then the upper graph back; finite points only.
    pub fn boundary_polyline(&self) -> Vec<(f64, f64)> {
        let fin = |p: &&(f64, f64)| p.1.is_finite();
        let mut out: Vec<(f64, f64)> = self.lower.iter().filter(fin).copied().collect();
        out.extend(self.upper.iter().rev().filter(fin).copied());
        out
    }

    /// Column grid spacing in J.
    pub fn spacing(&self) -> f64 {
        (self.window.j.1 - self.window.j.0) / self.resolution as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,j,h,tag\n");
        for p in &self.lower {
            s += &format!("lower,{},{},\n", p.0, p.1);
        }
        for p in &self.upper {
            s += &format!("upper,{},{},\n", p.0, p.1);
        }
        for c in &self.critical_values {
            s += &format!("critical,{},{},rank{}-{}\n", c.value.0, c.value.1, c.rank, c.kind);
        }
        for p in &self.regular_samples {
            s += &format!("regular,{},{},\n", p.0, p.1);
        }
        s
    }

    pub fn to_svg(&self, comment: &str) -> String {
        let w = self.window;
        let mut c = Canvas::new(SvgStyle::new(w.j, w.h));
        let clip = |v: &[(f64, f64)]| -> Vec<(f64, f64)> {
            v.iter()
                .filter(|p| p.1.is_finite())
                .map(|&(x, y)| (x, y.clamp(w.h.0, w.h.1)))
                .collect()
        };
        let region: Vec<(f64, f64)> = clip(&self.boundary_polyline());
        if region.len() >= 3 {
            c.polygon(&region, "#dde8f4");
        }
        c.polyline(&clip(&self.lower), "#1f4e79", false);
        c.polyline(&clip(&self.upper), "#1f4e79", false);
        for v in &self.critical_values {
            if v.rank == 0 {
                let col = if v.kind == "focus-focus" { "#c0392b" } else { "#1f4e79" };
                c.dot(v.value, 4.0, col);
            }
        }
        c.finish(comment)
    }
}

/// Bifurcation diagram of F over `window` with `resolution` columns.
pub fn bifurcation_diagram(system: &SystemModel, window: ValueWindow, resolution: usize) -> Result<BifurcationDiagram, Error> {
    if resolution < 4 {
        return Err(Error::Config(format!("resolution must be at least 4, got {resolution}")));
    }
    let search = find_critical_points(system, SearchRegion::from_window(window), 8, 1e-12)?;
    let mut critical_values: Vec<CriticalValue> = Vec::new();
    for r in &search.points {
        let dup = critical_values.iter().any(|c| {
            c.rank == r.rank && c.kind == r.type_name() && (c.value.0 - r.value.0).hypot(c.value.1 - r.value.1) < 1e-8
        });
        if !dup {
            critical_values.push(CriticalValue {
                value: r.value,
                rank: r.rank,
                kind: r.type_name(),
                nondegenerate: r.nondegenerate,
                point: r.point.coords.clone(),
            });
        }
    }

    let dj = (window.j.1 - window.j.0) / resolution as f64;
    let mut columns: Vec<Option<ColumnExtent>> = Vec::with_capacity(resolution);
    let mut prev: Option<ColumnExtent> = None;
    for k in 0..resolution {
        let j = window.j.0 + (k as f64 + 0.5) * dj;
        let col = column_extent(system, j, prev.as_ref());
        prev = col.clone();
        columns.push(col);
    }
    let first = columns.iter().position(|c| c.is_some());
    let last = columns.iter().rposition(|c| c.is_some());
    let (left_edge, right_edge) = match (first, last) {
        (Some(f), Some(l)) => {
            let le = if f > 0 {
                Some(locate_column_edge(system, columns[f - 1].as_ref().map_or(window.j.0 + (f as f64 - 0.5) * dj, |c| c.j), columns[f].as_ref().unwrap()))
            } else {
                let edge = column_extent(system, window.j.0, columns[f].as_ref());
                match edge {
                    None => Some(locate_column_edge(system, window.j.0, columns[f].as_ref().unwrap())),
                    Some(_) => None,
                }
            };
            let re = if l + 1 < resolution {
                Some(locate_column_edge(system, window.j.0 + (l as f64 + 1.5) * dj, columns[l].as_ref().unwrap()))
            } else {
                let edge = column_extent(system, window.j.1, columns[l].as_ref());
                match edge {
                    None => Some(locate_column_edge(system, window.j.1, columns[l].as_ref().unwrap())),
                    Some(_) => None,
                }
            };
            (le, re)
        }
        _ => (None, None),
    };
    let columns: Vec<ColumnExtent> = columns.into_iter().flatten().collect();

    let mut lower: Vec<(f64, f64)> = columns.iter().map(|c| (c.j, c.lo)).collect();
    let mut upper: Vec<(f64, f64)> = columns.iter().map(|c| (c.j, c.hi)).collect();
    for e in left_edge.iter().chain(right_edge.iter()) {
        lower.push((e.j, e.lo));
        upper.push((e.j, e.hi));
    }
    // rank-0 values on the boundary become corners of the graphs
    for v in critical_values.iter().filter(|c| c.rank == 0) {
        let (j, h) = v.value;
        if let Some(col) = column_extent(system, j, None) {
            if (col.lo - h).abs() < 1e-6 {
                lower.push((j, h));
            }
            if (col.hi - h).abs() < 1e-6 {
                upper.push((j, h));
            }
        }
    }
    for g in [&mut lower, &mut upper] {
        g.sort_by(|a, b| a.0.total_cmp(&b.0));
        g.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
    }

    let dh = (window.h.1 - window.h.0) / resolution as f64;
    let mut regular_samples = Vec::new();
    for col in &columns {
        for i in 0..resolution {
            let h = window.h.0 + (i as f64 + 0.5) * dh;
            if h <= col.lo + 0.5 * dh || h >= col.hi - 0.5 * dh {
                continue;
            }
            let near = critical_values.iter().any(|c| (c.value.0 - col.j).hypot(c.value.1 - h) < 1e-3);
            if !near && system.domain.contains_value(col.j, h) {
                regular_samples.push((col.j, h));
            }
        }
    }
    Ok(BifurcationDiagram {
        system: system.name.clone(),
        window,
        resolution,
        columns,
        left_edge,
        right_edge,
        lower,
        upper,
        critical_values,
        regular_samples,
    })
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Distance from `p` to an open polyline (or to its single point).
pub fn distance_to_polyline(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => (p.0 - line[0].0).hypot(p.1 - line[0].1),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Symmetric Hausdorff distance between two polylines, measured from their
/// vertices to the other polyline.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let one = |x: &[(f64, f64)], y: &[(f64, f64)]| x.iter().map(|&p| distance_to_polyline(p, y)).fold(0.0, f64::max);
    one(a, b).max(one(b, a))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonodromyResult {
    pub center: (f64, f64),
    pub radius: f64,
    /// Loop values with their lattices, τ1 lifted continuously.
    pub loop_values: Vec<(f64, f64)>,
    pub lattices: Vec<PeriodLattice>,
    /// Integer matrix M with B_end = M·B_start (rows are lattice vectors).
    pub matrix: [[i64; 2]; 2],
    /// Largest distance of an entry of the real transport matrix from M.
    pub max_residual: f64,
}

impl MonodromyResult {
    /// Whether M is GL(2, ℤ)-conjugate to [[1, 0], [1, 1]] or its inverse:
    /// unipotent, ≠ I, with the entries of M − I coprime.
    pub fn is_elementary_shear(&self) -> bool {
        let m = self.matrix;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let n = [m[0][0] - 1, m[0][1], m[1][0], m[1][1] - 1];
        let g = n.iter().fold(0i64, |a, &b| num_integer::gcd(a, b));
        det == 1 && m[0][0] + m[1][1] == 2 && g == 1
    }
}

/// Transports the period lattice once around the circle of `radius` about
/// `center` in `steps` steps.
pub fn monodromy(system: &SystemModel, center: (f64, f64), radius: f64, steps: usize) -> Result<MonodromyResult, Error> {
    if steps < 8 || radius <= 0.0 {
        return Err(Error::Config("monodromy needs radius > 0 and at least 8 steps".into()));
    }
    let action = CircleAction::new(system);
    let opts = ReturnOptions::default();
    let mut values = Vec::with_capacity(steps + 1);
    let mut lattices: Vec<PeriodLattice> = Vec::with_capacity(steps + 1);
    let mut hint: Option<Vec<f64>> = None;
    for k in 0..=steps {
        let th = TAU * k as f64 / steps as f64;
        let c = (center.0 + radius * th.cos(), center.1 + radius * th.sin());
        if !system.domain.contains_value(c.0, c.1) {
            return Err(Error::NotRegular(format!("loop leaves the domain at ({}, {})", c.0, c.1)));
        }
        let seed = seed_on_fiber(system, c, hint.as_deref())?;
        let mut lat = period_lattice_at(system, c, &seed, &action, opts)?;
        if lat.residual > 1e-6 {
            return Err(Error::NotRegular(format!(
                "torus closure residual {:.1e} at ({}, {})",
                lat.residual, c.0, c.1
            )));
        }
        if let Some(prev) = lattices.last() {
            let raw = lat.tau1();
            let lifted = raw + TAU * ((prev.tau1() - raw) / TAU).round();
            if (lifted - prev.tau1()).abs() > PI / 2.0 || (lat.tau2() - prev.tau2()).abs() > 0.2 * prev.tau2().abs() {
                return Err(Error::RefineStep {
                    msg: format!("lattice jumps between steps {} and {k}", k - 1),
                    suggested_steps: 2 * steps,
                });
            }
            lat.basis[1][0] = lifted;
        }
        hint = Some(seed);
        values.push(c);
        lattices.push(lat);
    }
    let b = |l: &PeriodLattice| Matrix2::new(l.basis[0][0], l.basis[0][1], l.basis[1][0], l.basis[1][1]);
    let b0 = b(&lattices[0]);
    let b1 = b(lattices.last().unwrap());
    let m = b1 * b0.try_inverse().ok_or_else(|| Error::DegenerateTorus("singular lattice basis".into()))?;
    let mut matrix = [[0i64; 2]; 2];
    let mut max_residual = 0.0f64;
    for i in 0..2 {
        for k in 0..2 {
            let r = m[(i, k)].round();
            matrix[i][k] = r as i64;
            max_residual = max_residual.max((m[(i, k)] - r).abs());
        }
    }
    if max_residual >= 0.05 {
        return Err(Error::Consistency(format!(
            "transport matrix is not integral (residual {max_residual:.3})"
        )));
    }
    Ok(MonodromyResult {
        center,
        radius,
        loop_values: values,
        lattices,
        matrix,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;

    fn spin_curve(s: f64) -> (f64, f64, f64) {
        let j = (s * s - 3.0) / (2.0 * s);
        let h = (s * s - 1.0) / (2.0 * s.powf(1.5));
        (j, h, -h)
    }

    #[test]
    fn spin_columns_match_the_rank_one_curve() {
        let s = builtin("spin-oscillator").unwrap();
        for sv in [1.2, 1.7, 2.5, 3.3] {
            let (j, h, _) = spin_curve(sv);
            let c = column_extent(&s, j, None).unwrap();
            assert!((c.hi - h).abs() < 1e-9, "{j}: {} vs {h}", c.hi);
            assert!((c.lo + h).abs() < 1e-9, "{j}: {} vs {}", c.lo, -h);
        }
        assert!(column_extent(&s, -1.2, None).is_none());
    }

    #[test]
    fn cp2_columns_are_capped() {
        let s = builtin("cp2-toric").unwrap();
        let c = column_extent(&s, 0.25, None).unwrap();
        assert!(c.lo.abs() < 1e-9 && (c.hi - 0.75).abs() < 1e-12 && c.hi_point.is_none());
        assert!(column_extent(&s, 1.2, None).is_none());
        assert!(column_extent(&s, -0.1, None).is_none());
    }

    #[test]
    fn spin_focus_focus_monodromy() {
        let s = builtin("spin-oscillator").unwrap();
        let r = monodromy(&s, (1.0, 0.0), 0.3, 24).unwrap();
        assert!(r.max_residual < 0.05);
        assert!(r.is_elementary_shear(), "{:?}", r.matrix);
        let trivial = monodromy(&s, (0.0, 0.2), 0.1, 16).unwrap();
        assert_eq!(trivial.matrix, [[1, 0], [0, 1]]);
    }

    #[test]
    fn hausdorff_of_shifted_segments() {
        let a = [(0.0, 0.0), (1.0, 0.0)];
        let b = [(0.0, 0.1), (1.0, 0.1)];
        assert!((hausdorff(&a, &b) - 0.1).abs() < 1e-15);
    }
}
