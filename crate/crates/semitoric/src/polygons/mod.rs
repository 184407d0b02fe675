//! Exact convex polygonal sets over ℚ, Delzant checks, the transformations
//! T^k and t_ℓ^n, and canonical forms of weighted polygons.

pub mod svg;

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::Error;
pub use svg::{polygon_svg, Canvas, SvgStyle};

pub type Q = BigRational;

/// A point or direction with rational coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pt {
    pub x: Q,
    pub y: Q,
}

impl Pt {
    pub fn new(x: Q, y: Q) -> Self {
        Pt { x, y }
    }

    pub fn int(x: i64, y: i64) -> Self {
        Pt::new(q(x), q(y))
    }

    pub fn frac(xn: i64, xd: i64, yn: i64, yd: i64) -> Self {
        Pt::new(Q::new(xn.into(), xd.into()), Q::new(yn.into(), yd.into()))
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64().unwrap_or(f64::NAN), self.y.to_f64().unwrap_or(f64::NAN))
    }

    fn sub(&self, o: &Pt) -> Pt {
        Pt::new(&self.x - &o.x, &self.y - &o.y)
    }

    fn add(&self, o: &Pt) -> Pt {
        Pt::new(&self.x + &o.x, &self.y + &o.y)
    }

    fn scale(&self, s: &Q) -> Pt {
        Pt::new(&self.x * s, &self.y * s)
    }
}

impl fmt::Display for Pt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub fn q(n: i64) -> Q {
    Q::from_integer(n.into())
}

fn cross(a: &Pt, b: &Pt) -> Q {
    &a.x * &b.y - &a.y * &b.x
}

/// Primitive integer vector along a rational direction.
pub fn primitive(d: &Pt) -> Result<(BigInt, BigInt), Error> {
    if d.x.is_zero() && d.y.is_zero() {
        return Err(Error::Precondition("zero edge vector".into()));
    }
    let l = d.x.denom().lcm(d.y.denom());
    let a = (&d.x * Q::from_integer(l.clone())).to_integer();
    let b = (&d.y * Q::from_integer(l)).to_integer();
    let g = a.gcd(&b);
    Ok((a / &g, b / &g))
}

/// Unbounded ends of a polygonal set. The boundary is traversed
/// counterclockwise as: the ray `v₀ + t·first` (t from ∞ down to 0), the
/// vertex chain, then `v_last + t·last`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rays {
    pub first: Pt,
    pub last: Pt,
}

/// Convex polygonal set with rational vertices, listed counterclockwise
/// without collinear vertices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalPolygon {
    vertices: Vec<Pt>,
    rays: Option<Rays>,
}

impl RationalPolygon {
    /// Validates convexity, removes repeated and collinear vertices.
    pub fn new(vertices: Vec<Pt>, rays: Option<Rays>) -> Result<Self, Error> {
        if vertices.is_empty() {
            return Err(Error::Precondition("polygon needs at least one vertex".into()));
        }
        let mut p = RationalPolygon { vertices, rays };
        p.dedup();
        p.simplify();
        if let Some(v) = p.first_reflex() {
            return Err(Error::NonConvex { vertex: v.to_string() });
        }
        if p.rays.is_none() && p.vertices.len() >= 3 {
            // a bounded polygon must turn left overall
            let area = p.twice_area();
            if !area.is_positive() {
                return Err(Error::Precondition("vertices are not counterclockwise".into()));
            }
        }
        Ok(p)
    }

    /// Convex hull of finitely many points (counterclockwise, starting at the
    /// lexicographically smallest).
    pub fn hull(points: &[Pt]) -> Result<Self, Error> {
        let mut pts = points.to_vec();
        pts.sort();
        pts.dedup();
        if pts.len() < 3 {
            return RationalPolygon::new(pts, None);
        }
        let mut lower: Vec<Pt> = Vec::new();
        for p in &pts {
            while lower.len() >= 2 && !cross(&lower[lower.len() - 1].sub(&lower[lower.len() - 2]), &p.sub(&lower[lower.len() - 1])).is_positive() {
                lower.pop();
            }
            lower.push(p.clone());
        }
        let mut upper: Vec<Pt> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2 && !cross(&upper[upper.len() - 1].sub(&upper[upper.len() - 2]), &p.sub(&upper[upper.len() - 1])).is_positive() {
                upper.pop();
            }
            upper.push(p.clone());
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        RationalPolygon::new(lower, None)
    }

    pub fn vertices(&self) -> &[Pt] {
        &self.vertices
    }

    pub fn rays(&self) -> Option<&Rays> {
        self.rays.as_ref()
    }

    pub fn is_bounded(&self) -> bool {
        self.rays.is_none()
    }

    fn twice_area(&self) -> Q {
        let n = self.vertices.len();
        (0..n).fold(Q::zero(), |a, i| a + cross(&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    fn dedup(&mut self) {
        self.vertices.dedup();
        if self.rays.is_none() {
            while self.vertices.len() > 1 && self.vertices.first() == self.vertices.last() {
                self.vertices.pop();
            }
        }
    }

    /// Incoming and outgoing edge directions at vertex `i`.
    fn neighbours(&self, i: usize) -> (Option<Pt>, Option<Pt>) {
        let n = self.vertices.len();
        let v = &self.vertices[i];
        let prev = match (&self.rays, i) {
            (Some(r), 0) => Some(r.first.scale(&q(-1))),
            (None, _) if n >= 2 => Some(v.sub(&self.vertices[(i + n - 1) % n])),
            (_, _) if i > 0 => Some(v.sub(&self.vertices[i - 1])),
            _ => None,
        };
        let next = match (&self.rays, i) {
            (Some(r), j) if j + 1 == n => Some(r.last.clone()),
            (None, _) if n >= 2 => Some(self.vertices[(i + 1) % n].sub(v)),
            (_, _) if i + 1 < n => Some(self.vertices[i + 1].sub(v)),
            _ => None,
        };
        (prev, next)
    }

    fn simplify(&mut self) {
        loop {
            let n = self.vertices.len();
            if n < 2 && self.rays.is_none() {
                return;
            }
            let mut removed = false;
            for i in 0..n {
                if self.vertices.len() <= 1 || (self.rays.is_none() && self.vertices.len() <= 2) {
                    return;
                }
                if let (Some(a), Some(b)) = self.neighbours(i) {
                    let dot = &a.x * &b.x + &a.y * &b.y;
                    if cross(&a, &b).is_zero() && dot.is_positive() {
                        self.vertices.remove(i);
                        removed = true;
                        break;
                    }
                }
            }
            if !removed {
                return;
            }
        }
    }

    fn first_reflex(&self) -> Option<Pt> {
        if self.rays.is_none() && self.vertices.len() <= 2 {
            return None;
        }
        for i in 0..self.vertices.len() {
            if let (Some(a), Some(b)) = self.neighbours(i) {
                let c = cross(&a, &b);
                let dot = &a.x * &b.x + &a.y * &b.y;
                if c.is_negative() || (c.is_zero() && !dot.is_positive()) {
                    return Some(self.vertices[i].clone());
                }
            }
        }
        if let Some(r) = &self.rays {
            // total turning from −first to last is at most π
            if cross(&r.last, &r.first).is_negative() {
                return Some(self.vertices[0].clone());
            }
        }
        None
    }

    fn map_affine<F: Fn(&Pt) -> Pt, G: Fn(&Pt) -> Pt>(&self, point: F, dir: G) -> Result<Self, Error> {
        let vertices = self.vertices.iter().map(point).collect();
        let rays = self.rays.as_ref().map(|r| Rays {
            first: dir(&r.first),
            last: dir(&r.last),
        });
        RationalPolygon::new(vertices, rays)
    }

    /// (x, y) ↦ (x, y + k·x).
    pub fn apply_t(&self, k: i64) -> Self {
        let k = q(k);
        let f = |p: &Pt| Pt::new(p.x.clone(), &p.y + &k * &p.x);
        self.map_affine(f, f).expect("T^k preserves convexity")
    }

    pub fn translate(&self, dx: &Q, dy: &Q) -> Self {
        let shift = Pt::new(dx.clone(), dy.clone());
        self.map_affine(|p| p.add(&shift), |d| d.clone())
            .expect("translations preserve convexity")
    }

    /// t_ℓ^n for the vertical line x = x0: identity on the left, T^n about
    /// the line on the right.
    pub fn apply_cut_transform(&self, x0: &Q, n: i64) -> Result<Self, Error> {
        let nq = q(n);
        let shear = |p: &Pt| -> Pt {
            if &p.x > x0 {
                Pt::new(p.x.clone(), &p.y + &nq * (&p.x - x0))
            } else {
                p.clone()
            }
        };
        // split edges and rays that cross the line
        let m = self.vertices.len();
        let mut pts: Vec<Pt> = Vec::new();
        let crossing = |a: &Pt, b: &Pt| -> Option<Pt> {
            if (&a.x < x0 && &b.x > x0) || (&a.x > x0 && &b.x < x0) {
                let t = (x0 - &a.x) / (&b.x - &a.x);
                Some(Pt::new(x0.clone(), &a.y + t * (&b.y - &a.y)))
            } else {
                None
            }
        };
        let through_ray = |v: &Pt, d: &Pt| -> Option<Pt> {
            if d.x.is_zero() {
                return None;
            }
            let t = (x0 - &v.x) / &d.x;
            t.is_positive().then(|| v.add(&d.scale(&t)))
        };
        if let Some(r) = &self.rays {
            if let Some(c) = through_ray(&self.vertices[0], &r.first) {
                pts.push(c);
            }
        }
        for i in 0..m {
            pts.push(self.vertices[i].clone());
            let next = if i + 1 < m {
                Some(&self.vertices[i + 1])
            } else if self.rays.is_none() && m > 2 {
                Some(&self.vertices[0])
            } else {
                None
            };
            if let Some(b) = next {
                if let Some(c) = crossing(&self.vertices[i], b) {
                    pts.push(c);
                }
            }
        }
        if let Some(r) = &self.rays {
            if let Some(c) = through_ray(&self.vertices[m - 1], &r.last) {
                pts.push(c);
            }
        }
        let vertices: Vec<Pt> = pts.iter().map(shear).collect();
        let rays = self.rays.as_ref().map(|r| {
            let t = |d: &Pt| Pt::new(d.x.clone(), &d.y + &nq * &d.x);
            // a ray ends on the right of the line iff it heads right, or it
            // starts on the right and is vertical
            let first_right = r.first.x.is_positive() || (r.first.x.is_zero() && &pts[0].x > x0);
            let last_right = r.last.x.is_positive() || (r.last.x.is_zero() && &pts[pts.len() - 1].x > x0);
            Rays {
                first: if first_right { t(&r.first) } else { r.first.clone() },
                last: if last_right { t(&r.last) } else { r.last.clone() },
            }
        });
        RationalPolygon::new(vertices, rays)
    }

    /// Leftmost vertex, lowest among ties.
    pub fn leftmost_bottom(&self) -> usize {
        (0..self.vertices.len())
            .min_by(|&a, &b| {
                let (p, r) = (&self.vertices[a], &self.vertices[b]);
                p.x.cmp(&r.x).then(p.y.cmp(&r.y))
            })
            .expect("non-empty")
    }

    /// Exact x-extent; `None` for an unbounded side.
    pub fn x_extent(&self) -> (Option<Q>, Option<Q>) {
        let mut lo = self.vertices.iter().map(|p| p.x.clone()).min();
        let mut hi = self.vertices.iter().map(|p| p.x.clone()).max();
        if let Some(r) = &self.rays {
            for d in [&r.first, &r.last] {
                if d.x.is_negative() {
                    lo = None;
                }
                if d.x.is_positive() {
                    hi = None;
                }
            }
        }
        (lo, hi)
    }

    /// Boundary segments as (start, direction, bounded?) in ccw order.
    fn boundary_pieces(&self) -> Vec<(Pt, Pt, bool)> {
        let m = self.vertices.len();
        let mut out = Vec::new();
        if let Some(r) = &self.rays {
            out.push((self.vertices[0].clone(), r.first.clone(), false));
        }
        for i in 0..m {
            let next = if i + 1 < m {
                Some(&self.vertices[i + 1])
            } else if self.rays.is_none() && m > 1 {
                Some(&self.vertices[0])
            } else {
                None
            };
            if let Some(b) = next {
                out.push((self.vertices[i].clone(), b.sub(&self.vertices[i]), true));
            }
        }
        if let Some(r) = &self.rays {
            out.push((self.vertices[m - 1].clone(), r.last.clone(), false));
        }
        out
    }

    /// The interval Δ ∩ {x = x0} as (bottom, top), `None` if empty or
    /// unbounded vertically.
    pub fn vertical_section(&self, x0: &Q) -> Option<(Q, Q)> {
        let mut ys: Vec<Q> = Vec::new();
        for (a, d, bounded) in self.boundary_pieces() {
            if d.x.is_zero() {
                if &a.x == x0 {
                    ys.push(a.y.clone());
                    if bounded {
                        ys.push(&a.y + &d.y);
                    } else {
                        return None;
                    }
                }
                continue;
            }
            let t = (x0 - &a.x) / &d.x;
            if t.is_negative() || (bounded && t > Q::one()) {
                continue;
            }
            ys.push(&a.y + t * &d.y);
        }
        let lo = ys.iter().min()?.clone();
        let hi = ys.iter().max()?.clone();
        Some((lo, hi))
    }

    /// Float samples of the boundary for plotting, rays cut at length `reach`.
    pub fn boundary_f64(&self, reach: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if let Some(r) = &self.rays {
            let (x, y) = self.vertices[0].to_f64();
            let (dx, dy) = unit(r.first.to_f64());
            out.push((x + reach * dx, y + reach * dy));
        }
        out.extend(self.vertices.iter().map(|p| p.to_f64()));
        if let Some(r) = &self.rays {
            let (x, y) = self.vertices[self.vertices.len() - 1].to_f64();
            let (dx, dy) = unit(r.last.to_f64());
            out.push((x + reach * dx, y + reach * dy));
        } else if let Some(f) = out.first().copied() {
            out.push(f);
        }
        out
    }
}

fn unit((x, y): (f64, f64)) -> (f64, f64) {
    let n = x.hypot(y);
    (x / n, y / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexReport {
    pub vertex: String,
    /// Primitive integer vectors towards the previous and the next vertex.
    pub edges: [[String; 2]; 2],
    /// det(u1, u2)
    pub det: String,
    pub simple: bool,
    pub smooth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelzantReport {
    pub delzant: bool,
    pub vertices: Vec<VertexReport>,
}

/// Report at vertex `v` with incoming and outgoing edge directions. With
/// `twist ≠ 0` the edge pointing right is replaced by its image under T^twist.
fn vertex_report(v: &Pt, incoming: &Pt, outgoing: &Pt, twist: i64) -> Result<VertexReport, Error> {
    let (mut a1, mut b1) = primitive(&incoming.scale(&q(-1)))?;
    let (mut a2, mut b2) = primitive(outgoing)?;
    let t = BigInt::from(twist);
    if a1.is_positive() {
        b1 += &t * &a1;
    } else if a2.is_positive() {
        b2 += &t * &a2;
    }
    let g1 = a1.gcd(&b1);
    let g2 = a2.gcd(&b2);
    (a1, b1, a2, b2) = (a1 / &g1, b1 / &g1, a2 / &g2, b2 / &g2);
    let det = &a1 * &b2 - &b1 * &a2;
    Ok(VertexReport {
        vertex: v.to_string(),
        edges: [[a1.to_string(), b1.to_string()], [a2.to_string(), b2.to_string()]],
        smooth: det.abs() == BigInt::one(),
        det: det.to_string(),
        simple: true,
    })
}

/// Delzant test (simple, rational, smooth) for a bounded polygon.
pub fn is_delzant(polygon: &RationalPolygon) -> Result<DelzantReport, Error> {
    if !polygon.is_bounded() {
        return Err(Error::Unsupported("Delzant check needs a bounded polygon".into()));
    }
    let n = polygon.vertices.len();
    if n < 3 {
        return Ok(DelzantReport {
            delzant: false,
            vertices: Vec::new(),
        });
    }
    let mut reports = Vec::with_capacity(n);
    for i in 0..n {
        let (prev, next) = polygon.neighbours(i);
        reports.push(vertex_report(&polygon.vertices[i], &prev.expect("bounded"), &next.expect("bounded"), 0)?);
    }
    Ok(DelzantReport {
        delzant: reports.iter().all(|r| r.smooth && r.simple),
        vertices: reports,
    })
}

/// A vertical cut x = `x` whose half-line points up (`sign = 1`) or down.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cut {
    pub x: Q,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WeightedPolygon {
    pub polygon: RationalPolygon,
    pub cuts: Vec<Cut>,
    pub twisting: Option<Vec<i64>>,
}

impl WeightedPolygon {
    pub fn new(polygon: RationalPolygon, cuts: Vec<Cut>, twisting: Option<Vec<i64>>) -> Result<Self, Error> {
        let wp = WeightedPolygon {
            polygon,
            cuts,
            twisting,
        };
        wp.check()?;
        Ok(wp)
    }

    fn check(&self) -> Result<(), Error> {
        for w in self.cuts.windows(2) {
            if w[0].x >= w[1].x {
                return Err(Error::Precondition("cut abscissas must increase strictly".into()));
            }
        }
        let (lo, hi) = self.polygon.x_extent();
        for c in &self.cuts {
            if c.sign != 1 && c.sign != -1 {
                return Err(Error::Precondition("cut signs are ±1".into()));
            }
            if lo.as_ref().is_some_and(|l| &c.x <= l) || hi.as_ref().is_some_and(|h| &c.x >= h) {
                return Err(Error::Precondition(format!("cut x = {} is not interior", c.x)));
            }
        }
        if let Some(k) = &self.twisting {
            if k.len() != self.cuts.len() {
                return Err(Error::Precondition("one twisting index per cut".into()));
            }
        }
        Ok(())
    }

    /// Flips the sign of cut `i`, transforming the polygon by t_ℓ^{±1}.
    ///
    /// The twisting indices at the flipped cut and at every cut to its right
    /// shift by the same unit, since μ changes by T^{±1} right of ℓ_i and the
    /// privileged momentum map at c_i changes branch.
    pub fn flip(&self, i: usize) -> Result<Self, Error> {
        let c = &self.cuts[i];
        // ε = +1 → −1 is t_ℓ^{+1}; the reverse is t_ℓ^{−1}
        let u = c.sign as i64;
        let polygon = self.polygon.apply_cut_transform(&c.x, u)?;
        let mut cuts = self.cuts.clone();
        cuts[i].sign = -c.sign;
        let twisting = self.twisting.as_ref().map(|k| {
            k.iter()
                .enumerate()
                .map(|(j, &kj)| if j >= i { kj + u } else { kj })
                .collect()
        });
        Ok(WeightedPolygon {
            polygon,
            cuts,
            twisting,
        })
    }

    /// Global T^k; twisting indices shift by k.
    pub fn apply_t(&self, k: i64) -> Self {
        WeightedPolygon {
            polygon: self.polygon.apply_t(k),
            cuts: self.cuts.clone(),
            twisting: self.twisting.as_ref().map(|t| t.iter().map(|v| v + k).collect()),
        }
    }

    pub fn translate_vertical(&self, dy: &Q) -> Self {
        WeightedPolygon {
            polygon: self.polygon.translate(&Q::zero(), dy),
            ..self.clone()
        }
    }
}

/// Canonical representative of the orbit under sign flips and vertical-line
/// preserving integral affine maps, with a log of the applied transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalClass {
    pub representative: WeightedPolygon,
    pub log: Vec<String>,
}

/// All signs +1; then T^k so the bottom edge leaving the leftmost-bottom
/// vertex has slope in [0, 1); then a vertical shift putting that vertex on
/// y = 0. Abscissas are never translated since J is fixed.
pub fn canonical_weighted_class(wp: &WeightedPolygon) -> Result<CanonicalClass, Error> {
    let mut cur = wp.clone();
    let mut log = Vec::new();
    for i in (0..cur.cuts.len()).rev() {
        if cur.cuts[i].sign == -1 {
            cur = cur.flip(i)?;
            log.push(format!("flip cut {i} at x = {} (t_ℓ^-1)", cur.cuts[i].x));
        }
    }
    let v = cur.polygon.leftmost_bottom();
    let (_, next) = cur.polygon.neighbours(v);
    if let Some(d) = next {
        if !d.x.is_zero() {
            let slope = &d.y / &d.x;
            let k = -slope.floor().to_integer().to_i64().expect("slope fits in i64");
            if k != 0 {
                cur = cur.apply_t(k);
                log.push(format!("T^{k}"));
            }
        }
    }
    let v = &cur.polygon.vertices[cur.polygon.leftmost_bottom()];
    if !v.y.is_zero() {
        let dy = -v.y.clone();
        log.push(format!("translate y by {dy}"));
        cur = cur.translate_vertical(&dy);
    }
    Ok(CanonicalClass {
        representative: cur,
        log,
    })
}

/// Best rational approximation with denominator ≤ `max_den`, accepted only
/// within `tol`.
pub fn snap_rational(x: f64, max_den: u64, tol: f64) -> Option<Q> {
    if !x.is_finite() {
        return None;
    }
    // continued fraction convergents
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    let mut best: Option<(i128, i128)> = None;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i128;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        best = Some((h2, k2));
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    let (n, d) = best?;
    ((n as f64 / d as f64 - x).abs() <= tol).then(|| Q::new(n.into(), d.into()))
}

/// Exact rational value of a finite float.
pub fn exact_rational(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

/// Candidate list of semitoric ingredients.
#[derive(Clone, Debug)]
pub struct Ingredients {
    pub m_f: usize,
    /// (X, Y) coefficients of the linear Taylor term; no constant term is stored.
    pub taylor_linear: Vec<(f64, f64)>,
    pub taylor_constant: Option<f64>,
    pub polygon: WeightedPolygon,
    pub heights: Vec<f64>,
    pub twisting: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngredientVerdict {
    pub valid: bool,
    pub reasons: Vec<String>,
}

/// Checks ingredients (i)–(v) of a semitoric list; the polygon part checks
/// the necessary local conditions: Delzant corners away from cuts and, at a
/// corner on a cut in the cut direction, a straight or smooth corner after
/// unfolding the right edge by T^ε.
pub fn validate_ingredients(ing: &Ingredients) -> IngredientVerdict {
    let mut reasons = Vec::new();
    let m = ing.m_f;
    let wp = &ing.polygon;
    if wp.cuts.len() != m {
        reasons.push(format!("polygon has {} cuts, m_f = {m}", wp.cuts.len()));
    }
    if ing.taylor_linear.len() != m {
        reasons.push(format!("{} Taylor records for m_f = {m}", ing.taylor_linear.len()));
    }
    for (i, &(x, y)) in ing.taylor_linear.iter().enumerate() {
        if !(x.is_finite() && (0.0..std::f64::consts::TAU).contains(&y)) {
            reasons.push(format!("Taylor record {i}: Y coefficient {y} outside [0, 2π)"));
        }
    }
    if ing.taylor_constant.is_some_and(|c| c != 0.0) {
        reasons.push("Taylor series has a constant term".into());
    }
    if ing.heights.len() != m {
        reasons.push(format!("{} heights for m_f = {m}", ing.heights.len()));
    }
    if ing.twisting.len() != m {
        reasons.push(format!("{} twisting indices for m_f = {m}", ing.twisting.len()));
    }
    if let Err(e) = wp.check() {
        reasons.push(e.to_string());
    }
    for (cut, &h) in wp.cuts.iter().zip(&ing.heights) {
        match wp.polygon.vertical_section(&cut.x) {
            Some((lo, hi)) => {
                let len = hi - lo;
                let hq = if h.is_finite() { exact_rational(h) } else { Q::zero() };
                if !(hq.is_positive() && hq < len) {
                    reasons.push(format!("height {h} not in (0, {len}) at x = {}", cut.x));
                }
            }
            None => reasons.push(format!("cut x = {} does not meet the polygon in a segment", cut.x)),
        }
    }
    let poly = &wp.polygon;
    for i in 0..poly.vertices.len() {
        let (prev, next) = poly.neighbours(i);
        let (Some(prev), Some(next)) = (prev, next) else {
            continue;
        };
        let v = &poly.vertices[i];
        let mut twist = 0;
        if let Some(c) = wp.cuts.iter().find(|c| c.x == v.x) {
            // top corner for an upward cut, bottom corner for a downward one
            let on_top = match poly.vertical_section(&v.x) {
                Some((lo, hi)) => v.y == hi && v.y != lo,
                None => false,
            };
            if (c.sign == 1) == on_top {
                twist = c.sign as i64;
            }
        }
        match vertex_report(v, &prev, &next, twist) {
            Ok(r) => {
                let straight = twist != 0 && r.det == "0";
                if !(r.smooth || straight) {
                    reasons.push(format!("corner {} is not smooth (det {})", r.vertex, r.det));
                }
            }
            Err(e) => reasons.push(e.to_string()),
        }
    }
    IngredientVerdict {
        valid: reasons.is_empty(),
        reasons,
    }
}

// JSON schema: fractions are strings "p/q".

#[derive(Serialize, Deserialize)]
struct PolygonJson {
    vertices: Vec<[String; 2]>,
    rays: Option<RaysJson>,
}

#[derive(Serialize, Deserialize)]
struct RaysJson {
    first: [String; 2],
    last: [String; 2],
}

#[derive(Serialize, Deserialize)]
struct CutJson {
    x: String,
    sign: i8,
}

#[derive(Serialize, Deserialize)]
struct WeightedJson {
    vertices: Vec<[String; 2]>,
    rays: Option<RaysJson>,
    cuts: Vec<CutJson>,
    twisting: Option<Vec<i64>>,
}

fn pt_json(p: &Pt) -> [String; 2] {
    [p.x.to_string(), p.y.to_string()]
}

fn parse_q(s: &str) -> Result<Q, Error> {
    s.trim()
        .parse::<Q>()
        .map_err(|_| Error::Config(format!("`{s}` is not a fraction")))
}

fn json_pt(a: &[String; 2]) -> Result<Pt, Error> {
    Ok(Pt::new(parse_q(&a[0])?, parse_q(&a[1])?))
}

impl Serialize for RationalPolygon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolygonJson {
            vertices: self.vertices.iter().map(pt_json).collect(),
            rays: self.rays.as_ref().map(|r| RaysJson {
                first: pt_json(&r.first),
                last: pt_json(&r.last),
            }),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = PolygonJson::deserialize(d)?;
        polygon_from_json(j.vertices, j.rays).map_err(serde::de::Error::custom)
    }
}

fn polygon_from_json(vertices: Vec<[String; 2]>, rays: Option<RaysJson>) -> Result<RationalPolygon, Error> {
    let vertices = vertices.iter().map(json_pt).collect::<Result<Vec<_>, _>>()?;
    let rays = match rays {
        Some(r) => Some(Rays {
            first: json_pt(&r.first)?,
            last: json_pt(&r.last)?,
        }),
        None => None,
    };
    RationalPolygon::new(vertices, rays)
}

impl Serialize for WeightedPolygon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WeightedJson {
            vertices: self.polygon.vertices.iter().map(pt_json).collect(),
            rays: self.polygon.rays.as_ref().map(|r| RaysJson {
                first: pt_json(&r.first),
                last: pt_json(&r.last),
            }),
            cuts: self
                .cuts
                .iter()
                .map(|c| CutJson {
                    x: c.x.to_string(),
                    sign: c.sign,
                })
                .collect(),
            twisting: self.twisting.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightedPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = WeightedJson::deserialize(d)?;
        let build = || -> Result<WeightedPolygon, Error> {
            let polygon = polygon_from_json(j.vertices, j.rays)?;
            let cuts = j
                .cuts
                .iter()
                .map(|c| Ok(Cut { x: parse_q(&c.x)?, sign: c.sign }))
                .collect::<Result<Vec<_>, Error>>()?;
            WeightedPolygon::new(polygon, cuts, j.twisting)
        };
        build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(l: i64) -> RationalPolygon {
        RationalPolygon::hull(&[Pt::int(0, 0), Pt::int(l, 0), Pt::int(0, l)]).unwrap()
    }

    /// Δ for the spin-oscillator with an upward cut at x = 1.
    fn spin_plus() -> WeightedPolygon {
        let p = RationalPolygon::new(
            vec![Pt::int(1, 2), Pt::int(-1, 0)],
            Some(Rays {
                first: Pt::int(1, 0),
                last: Pt::int(1, 0),
            }),
        )
        .unwrap();
        WeightedPolygon::new(p, vec![Cut { x: q(1), sign: 1 }], Some(vec![0])).unwrap()
    }

    #[test]
    fn delzant_triangles() {
        for l in 1..=3 {
            assert!(is_delzant(&tri(l)).unwrap().delzant);
        }
        let sq = RationalPolygon::hull(&[Pt::int(0, 0), Pt::int(1, 0), Pt::int(1, 1), Pt::int(0, 1)]).unwrap();
        assert!(is_delzant(&sq).unwrap().delzant);
        let bad = RationalPolygon::hull(&[Pt::int(0, 0), Pt::int(1, 0), Pt::int(0, 2)]).unwrap();
        let r = is_delzant(&bad).unwrap();
        assert!(!r.delzant);
        let v = r.vertices.iter().find(|v| v.vertex == "(1, 0)").unwrap();
        assert_eq!(v.det, "-2");
        assert_eq!(v.edges, [["-1".to_string(), "0".to_string()], ["-1".to_string(), "2".to_string()]]);
    }

    #[test]
    fn collinear_and_reflex() {
        let p = RationalPolygon::new(vec![Pt::int(0, 0), Pt::int(1, 0), Pt::int(2, 0), Pt::int(0, 2)], None).unwrap();
        assert_eq!(p.vertices().len(), 3);
        let r = RationalPolygon::new(vec![Pt::int(0, 0), Pt::int(2, 0), Pt::int(1, 1), Pt::int(2, 2), Pt::int(0, 2)], None);
        assert!(matches!(r, Err(Error::NonConvex { .. })));
    }

    #[test]
    fn t_powers_compose() {
        let p = tri(2);
        assert_eq!(p.apply_t(0), p);
        assert_eq!(p.apply_t(2).apply_t(-5), p.apply_t(-3));
    }

    #[test]
    fn spin_flip_is_cut_transform() {
        let plus = spin_plus();
        let minus = plus.flip(0).unwrap();
        let expected = RationalPolygon::new(
            vec![Pt::int(-1, 0), Pt::int(1, 0)],
            Some(Rays {
                first: Pt::int(1, 1),
                last: Pt::int(1, 1),
            }),
        )
        .unwrap();
        assert_eq!(minus.polygon, expected);
        assert_eq!(minus.cuts[0].sign, -1);
        assert_eq!(minus.flip(0).unwrap(), plus);
        let a = canonical_weighted_class(&plus).unwrap();
        let b = canonical_weighted_class(&minus).unwrap();
        assert_eq!(a.representative, b.representative);
        assert_eq!(canonical_weighted_class(&a.representative).unwrap().representative, a.representative);
    }

    #[test]
    fn vertical_sections() {
        let p = spin_plus().polygon;
        assert_eq!(p.vertical_section(&q(1)), Some((q(0), q(2))));
        assert_eq!(p.vertical_section(&q(0)), Some((q(0), q(1))));
        assert_eq!(p.vertical_section(&q(5)), Some((q(0), q(2))));
        assert_eq!(p.vertical_section(&q(-2)), None);
        assert_eq!(tri(3).vertical_section(&Q::new(1.into(), 2.into())), Some((q(0), Q::new(5.into(), 2.into()))));
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_rational(0.3333333, 64, 1e-6), Some(Q::new(1.into(), 3.into())));
        assert_eq!(snap_rational(-1.9999999, 64, 1e-6), Some(q(-2)));
        assert_eq!(snap_rational(std::f64::consts::PI, 64, 1e-6), None);
    }

    #[test]
    fn ingredients() {
        let wp = spin_plus();
        let good = Ingredients {
            m_f: 1,
            taylor_linear: vec![(5.0 * 2f64.ln(), std::f64::consts::FRAC_PI_2)],
            taylor_constant: None,
            polygon: wp.clone(),
            heights: vec![1.0],
            twisting: vec![0],
        };
        let v = validate_ingredients(&good);
        assert!(v.valid, "{:?}", v.reasons);
        let at_edge = Ingredients {
            heights: vec![2.0],
            ..good.clone()
        };
        assert!(!validate_ingredients(&at_edge).valid);
        let no_cut = Ingredients {
            m_f: 0,
            taylor_linear: vec![],
            heights: vec![],
            twisting: vec![],
            ..good.clone()
        };
        assert!(!validate_ingredients(&no_cut).valid);
        let minus = Ingredients {
            polygon: wp.flip(0).unwrap(),
            ..good
        };
        let v = validate_ingredients(&minus);
        assert!(v.valid, "{:?}", v.reasons);
    }

    #[test]
    fn json_round_trip() {
        let wp = spin_plus().flip(0).unwrap();
        let s = serde_json::to_string(&wp).unwrap();
        let back: WeightedPolygon = serde_json::from_str(&s).unwrap();
        assert_eq!(back, wp);
        let t: RationalPolygon = serde_json::from_str(r#"{"vertices":[["0","0"],["3/2","0"],["0","3/2"]],"rays":null}"#).unwrap();
        assert!(is_delzant(&t).unwrap().delzant);
    }
}
