//! Developing map f = (J, μ2) of the integral affine structure on the regular
//! values, with vertical cuts at the focus-focus values.
//!
//! μ2 integrates the closed form (τ̃1 dJ + τ2 dH)/2π. Paths run along a
//! reference curve that passes below upward cuts and above downward ones, then
//! vertically; the logarithmic divergence of τ2 at each focus-focus value is
//! subtracted and integrated in closed form.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{column_extent, BifurcationDiagram, ColumnExtent};
use crate::dynamics::{period_lattice_at, seed_on_fiber, CircleAction, ReturnOptions};
use crate::models::{PhasePoint, SystemModel};
use crate::polygons::{exact_rational, snap_rational, Cut, Pt, RationalPolygon, Rays, WeightedPolygon, Q};
use crate::quad::gauss_legendre;
use crate::singularities::eliasson_scales;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevelopOptions {
    pub columns_per_segment: usize,
    /// Gauss–Legendre nodes per vertical panel.
    pub vertical_nodes: usize,
    /// Gauss–Legendre nodes per reference-path segment.
    pub path_nodes: usize,
    pub max_den: u64,
    pub snap_tol: f64,
    pub closure_tol: f64,
    pub straightness_tol: f64,
}

impl Default for DevelopOptions {
    fn default() -> Self {
        DevelopOptions {
            columns_per_segment: 6,
            vertical_nodes: 24,
            path_nodes: 6,
            max_den: 64,
            snap_tol: 1e-3,
            closure_tol: 1e-6,
            straightness_tol: 1e-4,
        }
    }
}

/// A focus-focus value with its local scales and cut direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Focus {
    pub value: (f64, f64),
    pub alpha: f64,
    pub beta: f64,
    pub sign: i8,
}

impl Focus {
    /// c_E = ΔJ + i·(ΔH − β·ΔJ)/α as (re, im).
    pub fn local(&self, c: (f64, f64)) -> (f64, f64) {
        let a = c.0 - self.value.0;
        (a, (c.1 - self.value.1 - self.beta * a) / self.alpha)
    }
}

/// Point of a path with the continued first period and the second one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub value: (f64, f64),
    pub tau1: f64,
    pub tau2: f64,
    /// τ1 as returned by the lattice computation, in [0, 2π).
    pub raw: f64,
    pub seed: Vec<f64>,
}

/// Knot of the reference path with its developed height (before the offset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub sample: PathSample,
    pub mu2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub knots: Vec<Knot>,
    /// Index of the knot below (ε = +1) or above (ε = −1) each focus value.
    pub focus_knots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevSample {
    pub value: (f64, f64),
    pub image: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DevelopingMap {
    pub cut_signs: Vec<i8>,
    pub focus: Vec<Focus>,
    pub base_point: (f64, f64),
    pub samples: Vec<DevSample>,
    pub focus_images: Vec<(f64, f64)>,
    pub polygon: WeightedPolygon,
    /// Subtracted from μ2 so that the lowest left vertex has height 0.
    pub offset: f64,
    pub closure_residual: f64,
    /// Largest deviation of developed boundary samples from their edge line.
    pub straightness: f64,
    pub reference: Reference,
    pub notes: Vec<String>,
    pub lattice_evaluations: usize,
}

/// Angle change from `a` to `b`, in (−π, π].
fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

pub(crate) struct Developer<'a> {
    system: &'a SystemModel,
    action: CircleAction,
    ret: ReturnOptions,
    pub focus: Vec<Focus>,
    evals: Cell<usize>,
}

impl<'a> Developer<'a> {
    pub fn new(system: &'a SystemModel, focus: Vec<Focus>) -> Self {
        Developer {
            system,
            action: CircleAction::new(system),
            ret: ReturnOptions::default(),
            focus,
            evals: Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evals.get()
    }

    /// Raw lattice row (τ1 ∈ [0, 2π), τ2) at a regular value.
    pub fn lattice(&self, c: (f64, f64), hint: Option<&[f64]>) -> Result<(f64, f64, Vec<f64>), Error> {
        self.evals.set(self.evals.get() + 1);
        let seed = seed_on_fiber(self.system, c, hint)?;
        let lat = period_lattice_at(self.system, c, &seed, &self.action, self.ret)?;
        if lat.residual > 1e-6 {
            return Err(Error::DegenerateTorus(format!(
                "closure residual {:.1e} at ({}, {})",
                lat.residual, c.0, c.1
            )));
        }
        let mut t1 = lat.tau1().rem_euclid(TAU);
        if TAU - t1 < 1e-8 {
            t1 = 0.0;
        }
        Ok((t1, lat.tau2(), seed))
    }

    pub fn start(&self, c: (f64, f64), hint: Option<&[f64]>) -> Result<PathSample, Error> {
        let (raw, tau2, seed) = self.lattice(c, hint)?;
        Ok(PathSample {
            value: c,
            tau1: raw,
            tau2,
            raw,
            seed,
        })
    }

    /// Angle swept by c − c_i, summed over the focus values, from a to b.
    fn swept(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        self.focus
            .iter()
            .map(|f| {
                let (x0, y0) = f.local(a);
                let (x1, y1) = f.local(b);
                wrap(y1.atan2(x1) - y0.atan2(x0))
            })
            .sum()
    }

    /// Continues τ̃1 from `from` to `c`. Near a focus value τ1 winds like
    /// −arg(c − c_i), so the increment is read off ψ = τ1 + Σ arg(c − c_i).
    fn step(&self, from: &PathSample, c: (f64, f64)) -> Result<PathSample, Error> {
        let (raw, tau2, seed) = self.lattice(c, Some(&from.seed))?;
        let sw = self.swept(from.value, c);
        let dpsi = wrap(raw - from.raw + sw);
        if dpsi.abs() > PI / 2.0 {
            return Err(Error::BranchTracking(format!(
                "τ1 changes by {dpsi:.3} between ({:.4}, {:.4}) and ({:.4}, {:.4})",
                from.value.0, from.value.1, c.0, c.1
            )));
        }
        Ok(PathSample {
            value: c,
            tau1: from.tau1 + dpsi - sw,
            tau2,
            raw,
            seed,
        })
    }

    pub fn continue_along(&self, from: &PathSample, path: &[(f64, f64)]) -> Result<Vec<PathSample>, Error> {
        let mut out: Vec<PathSample> = Vec::with_capacity(path.len());
        for &c in path {
            let s = self.step(out.last().unwrap_or(from), c)?;
            out.push(s);
        }
        Ok(out)
    }

    /// ∫ (τ̃1 dJ + τ2 dH)/2π along the straight segment from `from` to `to`.
    pub fn segment(&self, from: &PathSample, to: (f64, f64), nodes: usize) -> Result<(f64, PathSample), Error> {
        let (dx, dy) = (to.0 - from.value.0, to.1 - from.value.1);
        let rule = gauss_legendre(nodes, 0.0, 1.0);
        let pts: Vec<(f64, f64)> = rule
            .iter()
            .map(|&(s, _)| (from.value.0 + s * dx, from.value.1 + s * dy))
            .chain(std::iter::once(to))
            .collect();
        let samples = self.continue_along(from, &pts)?;
        let integral = rule
            .iter()
            .zip(&samples)
            .map(|(&(_, w), p)| w * (p.tau1 * dx + p.tau2 * dy))
            .sum::<f64>()
            / TAU;
        Ok((integral, samples.last().unwrap().clone()))
    }

    fn log_term(&self, c: (f64, f64)) -> f64 {
        self.focus
            .iter()
            .map(|f| {
                let (x, y) = f.local(c);
                0.5 * (x * x + y * y).ln() / f.alpha
            })
            .sum()
    }

    /// Σ_i (1/α_i) ∫_{h0}^{h1} ln|c_E,i(j, h)| dh in closed form.
    fn log_integral(&self, j: f64, h0: f64, h1: f64) -> f64 {
        self.focus
            .iter()
            .map(|f| {
                let (a, _) = f.local((j, h0));
                let prim = |h: f64| {
                    let s = f.local((j, h)).1;
                    if a == 0.0 {
                        if s == 0.0 {
                            0.0
                        } else {
                            f.alpha * (s * s.abs().ln() - s)
                        }
                    } else {
                        0.5 * f.alpha * (s * (a * a + s * s).ln() - 2.0 * s + 2.0 * a * (s / a).atan())
                    }
                };
                (prim(h1) - prim(h0)) / f.alpha
            })
            .sum()
    }

    /// ∫ τ2 dH / 2π along J = j from h0 to h1 (either order), starting from a
    /// seed near (j, h0). Panels are split at the focus heights.
    pub fn vertical(&self, j: f64, h0: f64, h1: f64, hint: &[f64], nodes: usize) -> Result<f64, Error> {
        if h0 == h1 {
            return Ok(0.0);
        }
        let (lo, hi) = (h0.min(h1), h0.max(h1));
        let mut cuts: Vec<f64> = vec![lo, hi];
        for f in &self.focus {
            if f.value.1 > lo && f.value.1 < hi {
                cuts.push(f.value.1);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut nodes_w: Vec<(f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            nodes_w.extend(gauss_legendre(nodes, w[0], w[1]));
        }
        // visit nodes outward from h0 so that each seed hints the next
        if h1 < h0 {
            nodes_w.reverse();
        }
        let mut seed = hint.to_vec();
        let mut total = 0.0;
        for (h, w) in nodes_w {
            let (_, t2, s) = self.lattice((j, h), Some(&seed))?;
            seed = s;
            total += w * (t2 + self.log_term((j, h)));
        }
        total -= self.log_integral(j, lo, hi);
        let sign = if h1 > h0 { 1.0 } else { -1.0 };
        Ok(sign * total / TAU)
    }
}

fn focus_data(system: &SystemModel, diagram: &BifurcationDiagram, cut_signs: &[i8]) -> Result<Vec<Focus>, Error> {
    let mut ff: Vec<&super::CriticalValue> = diagram
        .critical_values
        .iter()
        .filter(|c| c.rank == 0 && c.kind == "focus-focus")
        .collect();
    ff.sort_by(|a, b| a.value.0.total_cmp(&b.value.0));
    if ff.len() != cut_signs.len() {
        return Err(Error::Config(format!(
            "{} cut signs given for {} focus-focus values",
            cut_signs.len(),
            ff.len()
        )));
    }
    for w in ff.windows(2) {
        if w[1].value.0 - w[0].value.0 < 1e-6 {
            return Err(Error::Unsupported("two focus-focus values share a J-value".into()));
        }
    }
    ff.iter()
        .zip(cut_signs)
        .map(|(c, &sign)| {
            if sign != 1 && sign != -1 {
                return Err(Error::Config(format!("cut sign must be ±1, got {sign}")));
            }
            let p = PhasePoint::projected(system.manifold, c.point.clone());
            let (alpha, beta) = eliasson_scales(system, &p)?;
            Ok(Focus {
                value: c.value,
                alpha,
                beta,
                sign,
            })
        })
        .collect()
}

/// y = s·x + b with rational coefficients.
#[derive(Clone, Debug, PartialEq)]
struct Line {
    s: Q,
    b: Q,
}

impl Line {
    fn at(&self, x: &Q) -> Q {
        &self.s * x + &self.b
    }

    fn meet(&self, other: &Line) -> Option<Q> {
        let ds = &self.s - &other.s;
        (!ds.is_zero()).then(|| (&other.b - &self.b) / ds)
    }
}

fn fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let s = sxy / sxx;
    let b = my - s * mx;
    let r = points.iter().fold(0.0f64, |a, p| a.max((p.1 - s * p.0 - b).abs()));
    (s, b, r)
}

fn snap(x: f64, opts: &DevelopOptions, what: &str, notes: &mut Vec<String>) -> Q {
    snap_rational(x, opts.max_den, opts.snap_tol).unwrap_or_else(|| {
        notes.push(format!("{what} {x} has no rational within {} (denominator ≤ {}); kept as a float", opts.snap_tol, opts.max_den));
        exact_rational(x)
    })
}

/// Per-column data for the developing map.
struct Column {
    extent: ColumnExtent,
    knot: usize,
    top: f64,
    bottom: f64,
}

/// Develops the regular values of `diagram` into the plane with cut signs ε.
pub fn develop_affine(
    system: &SystemModel,
    diagram: &BifurcationDiagram,
    cut_signs: &[i8],
    opts: DevelopOptions,
) -> Result<DevelopingMap, Error> {
    let focus = focus_data(system, diagram, cut_signs)?;
    let dev = Developer::new(system, focus.clone());
    let mut notes = Vec::new();

    // J-extent of the developed region
    let window = diagram.window;
    let (x_lo, left_bounded) = match &diagram.left_edge {
        Some(e) => (e.j, true),
        None => (window.j.0, false),
    };
    let (x_hi, right_bounded) = match &diagram.right_edge {
        Some(e) => (e.j, true),
        None => (window.j.1, false),
    };
    if !left_bounded && !right_bounded {
        return Err(Error::Unsupported("J(M) is unbounded on both sides of the window".into()));
    }
    if diagram.columns.iter().any(|c| !c.lo.is_finite() || !c.hi.is_finite()) {
        return Err(Error::Unsupported("columns of F(M) are unbounded in H".into()));
    }
    let mut breaks: Vec<f64> = vec![x_lo, x_hi];
    for v in diagram.rank0_values() {
        if v.0 > x_lo + 1e-6 && v.0 < x_hi - 1e-6 {
            breaks.push(v.0);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    // fraction of the column at which the reference curve runs, interpolated
    // between focus abscissas
    let qs: Vec<(f64, f64)> = {
        let mut v = Vec::new();
        for f in &focus {
            let col = column_extent(system, f.value.0, None)
                .ok_or_else(|| Error::Consistency("empty column through a focus value".into()))?;
            let frac = ((f.value.1 - col.lo) / col.len()).clamp(0.05, 0.95);
            v.push((f.value.0, if f.sign > 0 { 0.5 * frac } else { 0.5 * (1.0 + frac) }));
        }
        v
    };
    let q_at = |x: f64| -> f64 {
        match qs.len() {
            0 => 0.5,
            _ => {
                if x <= qs[0].0 {
                    return qs[0].1;
                }
                for w in qs.windows(2) {
                    if x <= w[1].0 {
                        let t = (x - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                qs.last().unwrap().1
            }
        }
    };

    // knots: the column abscissas and the focus abscissas
    let n = opts.columns_per_segment.max(3);
    let mut abscissas: Vec<(f64, Option<usize>, Option<usize>)> = Vec::new(); // (x, segment, focus)
    for (k, w) in breaks.windows(2).enumerate() {
        for i in 0..n {
            abscissas.push((w[0] + (w[1] - w[0]) * (i as f64 + 0.5) / n as f64, Some(k), None));
        }
    }
    for (i, f) in focus.iter().enumerate() {
        abscissas.push((f.value.0, None, Some(i)));
    }
    abscissas.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut extents: Vec<ColumnExtent> = Vec::with_capacity(abscissas.len());
    let mut prev: Option<ColumnExtent> = None;
    for &(x, _, _) in &abscissas {
        let e = column_extent(system, x, prev.as_ref())
            .ok_or_else(|| Error::Consistency(format!("empty column at J = {x} inside J(M)")))?;
        prev = Some(e.clone());
        extents.push(e);
    }
    let ref_points: Vec<(f64, f64)> = extents.iter().map(|e| (e.j, e.lo + q_at(e.j) * e.len())).collect();

    // reference path
    let base = ref_points[0];
    let first = dev.start(base, extents[0].lo_point.as_deref().or(extents[0].hi_point.as_deref()))?;
    let mut knots = vec![Knot {
        sample: first,
        mu2: 0.0,
    }];
    for &c in &ref_points[1..] {
        let last = knots.last().unwrap();
        let (integral, sample) = dev.segment(&last.sample, c, opts.path_nodes)?;
        let mu2 = last.mu2 + integral;
        knots.push(Knot { sample, mu2 });
    }
    let focus_knots: Vec<usize> = (0..focus.len())
        .map(|i| abscissas.iter().position(|a| a.2 == Some(i)).unwrap())
        .collect();

    // columns: developed top and bottom
    let mut columns: Vec<Column> = Vec::new();
    for (k, a) in abscissas.iter().enumerate() {
        if a.1.is_none() {
            continue;
        }
        let e = &extents[k];
        let kn = &knots[k];
        let r = kn.sample.value.1;
        let up = dev.vertical(e.j, r, e.hi, &kn.sample.seed, opts.vertical_nodes)?;
        let down = dev.vertical(e.j, r, e.lo, &kn.sample.seed, opts.vertical_nodes)?;
        columns.push(Column {
            extent: e.clone(),
            knot: k,
            top: kn.mu2 + up,
            bottom: kn.mu2 + down,
        });
    }

    // focus images
    let mut focus_images = Vec::new();
    for (i, f) in focus.iter().enumerate() {
        let kn = &knots[focus_knots[i]];
        let v = dev.vertical(f.value.0, kn.sample.value.1, f.value.1, &kn.sample.seed, opts.vertical_nodes)?;
        focus_images.push((f.value.0, kn.mu2 + v));
    }

    // closure on a contractible loop between two neighbouring columns
    let closure_residual = {
        let seg0: Vec<&Column> = columns.iter().take(2).collect();
        let (a, b) = (seg0[0], seg0[1]);
        let lo = a.extent.lo.max(b.extent.lo);
        let hi = a.extent.hi.min(b.extent.hi);
        let hm = lo + 0.6 * (hi - lo);
        let ka = &knots[a.knot];
        let kb = &knots[b.knot];
        // route 1: up at a, across to b
        let vpts: Vec<(f64, f64)> = gauss_legendre(4, ka.sample.value.1, hm)
            .into_iter()
            .map(|(h, _)| (a.extent.j, h))
            .chain(std::iter::once((a.extent.j, hm)))
            .collect();
        let up_a = dev.continue_along(&ka.sample, &vpts)?;
        let v_a = dev.vertical(a.extent.j, ka.sample.value.1, hm, &ka.sample.seed, opts.vertical_nodes)?;
        let (across, _) = dev.segment(up_a.last().unwrap(), (b.extent.j, hm), opts.vertical_nodes)?;
        let route1 = ka.mu2 + v_a + across;
        // route 2: along the reference to b, then up
        let v_b = dev.vertical(b.extent.j, kb.sample.value.1, hm, &kb.sample.seed, opts.vertical_nodes)?;
        let route2 = kb.mu2 + v_b;
        (route1 - route2).abs()
    };
    if closure_residual > opts.closure_tol {
        return Err(Error::AffineStructure(format!(
            "contractible loop residual {closure_residual:.2e} exceeds {:.0e}",
            opts.closure_tol
        )));
    }

    // straight edges per segment
    let nseg = breaks.len() - 1;
    let mut top_fits = Vec::new();
    let mut bot_fits = Vec::new();
    let mut straightness = 0.0f64;
    for k in 0..nseg {
        let cols: Vec<&Column> = columns
            .iter()
            .filter(|c| abscissas[c.knot].1 == Some(k))
            .collect();
        let top: Vec<(f64, f64)> = cols.iter().map(|c| (c.extent.j, c.top)).collect();
        let bot: Vec<(f64, f64)> = cols.iter().map(|c| (c.extent.j, c.bottom)).collect();
        let t = fit(&top);
        let b = fit(&bot);
        straightness = straightness.max(t.2).max(b.2);
        top_fits.push(t);
        bot_fits.push(b);
    }
    if straightness > opts.straightness_tol {
        return Err(Error::AffineStructure(format!(
            "developed boundary is not straight (deviation {straightness:.2e}); a critical value may be missing"
        )));
    }
    let offset = if left_bounded {
        bot_fits[0].0 * x_lo + bot_fits[0].1
    } else {
        bot_fits[nseg - 1].0 * x_hi + bot_fits[nseg - 1].1
    };
    let mut line = |f: (f64, f64, f64), what: &str| Line {
        s: snap(f.0, &opts, &format!("{what} slope"), &mut notes),
        b: snap(f.1 - offset, &opts, &format!("{what} intercept"), &mut notes),
    };
    let tops: Vec<Line> = top_fits.iter().map(|&f| line(f, "top")).collect();
    let bots: Vec<Line> = bot_fits.iter().map(|&f| line(f, "bottom")).collect();
    let xq: Vec<Q> = breaks
        .iter()
        .map(|&x| snap_rational(x, opts.max_den, 1e-6).unwrap_or_else(|| exact_rational(x)))
        .collect();

    let chain = |lines: &[Line]| -> Result<Vec<Pt>, Error> {
        let mut v = Vec::new();
        for k in 0..lines.len() - 1 {
            let (l, r) = (&lines[k], &lines[k + 1]);
            match l.meet(r) {
                Some(x) => {
                    if (&x - &xq[k + 1]).abs() > exact_rational(1e-3) {
                        return Err(Error::AffineStructure(format!(
                            "edges meet at J = {} instead of {}",
                            x, xq[k + 1]
                        )));
                    }
                    let y = l.at(&x);
                    v.push(Pt::new(x, y));
                }
                None => {
                    if l.b != r.b {
                        return Err(Error::AffineStructure("parallel edges do not join".into()));
                    }
                }
            }
        }
        Ok(v)
    };
    let top_mid = chain(&tops)?;
    let bot_mid = chain(&bots)?;
    let end = |x: &Q, t: &Line, b: &Line| -> Vec<Pt> {
        let (yt, yb) = (t.at(x), b.at(x));
        if yt == yb {
            vec![Pt::new(x.clone(), yb)]
        } else {
            vec![Pt::new(x.clone(), yb), Pt::new(x.clone(), yt)]
        }
    };
    let mut bottom_chain: Vec<Pt> = Vec::new();
    let mut top_chain: Vec<Pt> = Vec::new();
    if left_bounded {
        let e = end(&xq[0], &tops[0], &bots[0]);
        bottom_chain.push(e[0].clone());
        top_chain.push(e.last().unwrap().clone());
    }
    bottom_chain.extend(bot_mid);
    top_chain.extend(top_mid);
    if right_bounded {
        let e = end(&xq[nseg], &tops[nseg - 1], &bots[nseg - 1]);
        bottom_chain.push(e[0].clone());
        top_chain.push(e.last().unwrap().clone());
    }
    let mut vertices: Vec<Pt> = bottom_chain.clone();
    let rays;
    if left_bounded && right_bounded {
        vertices.extend(top_chain.into_iter().rev());
        rays = None;
    } else if left_bounded {
        // start at the top right, go left, come back along the bottom
        vertices = top_chain.into_iter().rev().collect();
        vertices.extend(bottom_chain);
        rays = Some(Rays {
            first: Pt::new(Q::from_integer(1.into()), tops[nseg - 1].s.clone()),
            last: Pt::new(Q::from_integer(1.into()), bots[nseg - 1].s.clone()),
        });
    } else {
        vertices.extend(top_chain.into_iter().rev());
        rays = Some(Rays {
            first: Pt::new(Q::from_integer((-1).into()), -bots[0].s.clone()),
            last: Pt::new(Q::from_integer((-1).into()), -tops[0].s.clone()),
        });
    }
    vertices.dedup();
    if vertices.len() > 1 && vertices.first() == vertices.last() {
        vertices.pop();
    }
    let polygon = RationalPolygon::new(vertices, rays)?;
    let cuts: Vec<Cut> = focus
        .iter()
        .map(|f| Cut {
            x: snap_rational(f.value.0, opts.max_den, 1e-6).unwrap_or_else(|| exact_rational(f.value.0)),
            sign: f.sign,
        })
        .collect();
    let polygon = WeightedPolygon::new(polygon, cuts, None)?;

    let mut samples: Vec<DevSample> = knots
        .iter()
        .map(|k| DevSample {
            value: k.sample.value,
            image: (k.sample.value.0, k.mu2 - offset),
        })
        .collect();
    for c in &columns {
        samples.push(DevSample {
            value: (c.extent.j, c.extent.hi),
            image: (c.extent.j, c.top - offset),
        });
        samples.push(DevSample {
            value: (c.extent.j, c.extent.lo),
            image: (c.extent.j, c.bottom - offset),
        });
    }
    let focus_images = focus_images.into_iter().map(|(x, y)| (x, y - offset)).collect();
    Ok(DevelopingMap {
        cut_signs: cut_signs.to_vec(),
        focus,
        base_point: base,
        samples,
        focus_images,
        polygon,
        offset,
        closure_residual,
        straightness,
        reference: Reference { knots, focus_knots },
        notes,
        lattice_evaluations: dev.evaluations(),
    })
}

impl DevelopingMap {
    /// Developed image (J, μ2 − offset) of a regular value off the cuts, with
    /// the continued lattice row there.
    pub fn evaluate(&self, system: &SystemModel, c: (f64, f64), nodes: usize) -> Result<((f64, f64), PathSample), Error> {
        for f in &self.focus {
            let on_cut = (c.0 - f.value.0).abs() < 1e-9 && (c.1 - f.value.1) * f.sign as f64 >= 0.0;
            if on_cut {
                return Err(Error::Precondition("value lies on a cut".into()));
            }
        }
        let knots = &self.reference.knots;
        let k = knots
            .windows(2)
            .position(|w| w[0].sample.value.0 <= c.0 && c.0 <= w[1].sample.value.0)
            .ok_or_else(|| Error::Precondition(format!("J = {} is outside the developed range", c.0)))?;
        let (a, b) = (&knots[k].sample.value, &knots[k + 1].sample.value);
        let t = (c.0 - a.0) / (b.0 - a.0);
        let on_path = (c.0, a.1 + t * (b.1 - a.1));
        let dev = Developer::new(system, self.focus.clone());
        let (along, at) = dev.segment(&knots[k].sample, on_path, nodes)?;
        let up = dev.vertical(c.0, on_path.1, c.1, &at.seed, nodes)?;
        let vpts: Vec<(f64, f64)> = (1..=8).map(|i| (c.0, on_path.1 + (c.1 - on_path.1) * i as f64 / 8.0)).collect();
        let end = dev.continue_along(&at, &vpts)?.pop().unwrap();
        Ok(((c.0, knots[k].mu2 + along + up - self.offset), end))
    }

    /// Continues the lattice row from a reference knot along `path`.
    pub fn continue_from_knot(&self, system: &SystemModel, knot: usize, path: &[(f64, f64)]) -> Result<Vec<PathSample>, Error> {
        let dev = Developer::new(system, self.focus.clone());
        dev.continue_along(&self.reference.knots[knot].sample, path)
    }

    /// Columns `c1,c2,f2,tag`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c1,c2,f2,tag\n");
        for (i, k) in self.reference.knots.iter().enumerate() {
            let tag = if i == 0 { "base" } else { "reference" };
            s += &format!("{},{},{},{tag}\n", k.sample.value.0, k.sample.value.1, k.mu2 - self.offset);
        }
        for d in self.samples.iter().skip(self.reference.knots.len()) {
            s += &format!("{},{},{},boundary\n", d.value.0, d.value.1, d.image.1);
        }
        for (f, im) in self.focus.iter().zip(&self.focus_images) {
            s += &format!("{},{},{},focus-focus\n", f.value.0, f.value.1, im.1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_symmetric() {
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap(-PI), PI);
    }

    #[test]
    fn log_integral_matches_quadrature() {
        let system = crate::models::builtin("spin-oscillator").unwrap();
        let f = Focus {
            value: (1.0, 0.0),
            alpha: 0.5,
            beta: 0.3,
            sign: 1,
        };
        let dev = Developer::new(&system, vec![f.clone()]);
        for j in [1.0, 1.2] {
            let exact = dev.log_integral(j, -0.4, 0.7);
            let mid = 0.3 * (j - 1.0);
            let g = |h: f64| Ok(dev.log_term((j, h)));
            let num = crate::quad::tanh_sinh(-0.4, mid, 1e-12, g).unwrap().0 + crate::quad::tanh_sinh(mid, 0.7, 1e-12, g).unwrap().0;
            assert!((exact - num).abs() < 1e-9, "{exact} {num}");
        }
    }
}
