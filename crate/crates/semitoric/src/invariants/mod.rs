//! The semitoric invariants: number of focus-focus values, linear Taylor
//! terms, heights, the polygon class and twisting indices.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{period_lattice_at, seed_on_fiber, CircleAction, ReturnOptions};
use crate::fibration::{bifurcation_diagram, column_extent, develop_affine, DevelopOptions, DevelopingMap, Focus};
use crate::models::{Manifold, PhasePoint, SystemModel, ValueWindow};
use crate::polygons::{canonical_weighted_class, validate_ingredients, CanonicalClass, Ingredients, WeightedPolygon};
use crate::singularities::{eliasson_scales, find_critical_points, is_semitoric, SearchRegion};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorOptions {
    pub r0: f64,
    /// Angular samples per circle.
    pub samples: usize,
}

impl Default for TaylorOptions {
    fn default() -> Self {
        TaylorOptions { r0: 0.05, samples: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorEstimate {
    /// (coefficient of X, coefficient of Y); the second lies in [0, 2π).
    pub coefficients: (f64, f64),
    pub radii: Vec<f64>,
    /// Circle means of τ2 + ln|c| (Eliasson scale) per radius.
    pub sigma2: Vec<f64>,
    /// Circle means of ψ = τ1 + arg c per radius, lifted continuously.
    pub psi: Vec<f64>,
    /// Circle means of the raw τ2, which diverges as r → 0.
    pub raw_tau2: Vec<f64>,
}

/// Value at 0 of the interpolating polynomial through (x_k, y_k), with the
/// successive diagonal estimates.
fn neville_at_zero(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut diag = vec![y[0]];
    let mut table = vec![y.to_vec()];
    for m in 1..n {
        let prev = table.last().unwrap();
        let mut next = Vec::with_capacity(n - m);
        for i in 0..n - m {
            let v = (x[i + m] * prev[i] - x[i] * prev[i + 1]) / (x[i + m] - x[i]);
            next.push(v);
        }
        diag.push(next[0]);
        table.push(next);
    }
    diag
}

fn check_convergence(name: &str, diag: &[f64], r0: f64) -> Result<f64, Error> {
    let n = diag.len();
    let (a, b) = (diag[n - 1], diag[n - 2]);
    if (a - b).abs() > 0.05 * a.abs().max(1.0) {
        return Err(Error::Resolution(format!(
            "{name} extrapolation does not settle ({b} then {a}); try r0 smaller than {r0}"
        )));
    }
    Ok(a)
}

/// Linear Taylor coefficients at a focus-focus value with known local scales.
pub fn taylor_linear_from_focus(system: &SystemModel, focus: &Focus, opts: TaylorOptions) -> Result<TaylorEstimate, Error> {
    if !(opts.r0 > 0.0) || opts.samples < 4 {
        return Err(Error::Config("Taylor extraction needs r0 > 0 and at least 4 samples".into()));
    }
    let action = CircleAction::new(system);
    let ret = ReturnOptions::default();
    let radii: Vec<f64> = (0..4).map(|k| opts.r0 / (1u32 << k) as f64).collect();
    let (alpha, beta) = (focus.alpha, focus.beta);
    let mut sigma2 = Vec::new();
    let mut psi: Vec<f64> = Vec::new();
    let mut raw_tau2 = Vec::new();
    let mut hint: Option<Vec<f64>> = None;
    for &r in &radii {
        let (mut s2, mut t2sum) = (0.0, 0.0);
        let (mut cx, mut cy) = (0.0, 0.0);
        for k in 0..opts.samples {
            let th = TAU * (k as f64 + 0.5) / opts.samples as f64;
            let dj = r * th.cos();
            let c = (focus.value.0 + dj, focus.value.1 + beta * dj + alpha * r * th.sin());
            let seed = seed_on_fiber(system, c, hint.as_deref())?;
            let lat = period_lattice_at(system, c, &seed, &action, ret)?;
            hint = Some(seed);
            let t2 = lat.tau2();
            let t1e = lat.tau1() + beta * t2;
            s2 += alpha * t2 + r.ln();
            t2sum += t2;
            let p = t1e + th;
            cx += p.cos();
            cy += p.sin();
        }
        let n = opts.samples as f64;
        sigma2.push(s2 / n);
        raw_tau2.push(t2sum / n);
        let mean = cy.atan2(cx);
        let lifted = match psi.last() {
            Some(&prev) => mean + TAU * ((prev - mean) / TAU).round(),
            None => mean,
        };
        psi.push(lifted);
    }
    let x = check_convergence("σ2", &neville_at_zero(&radii, &sigma2), opts.r0)?;
    let p0 = check_convergence("ψ", &neville_at_zero(&radii, &psi), opts.r0)?;
    let y = (FRAC_PI_2 - p0).rem_euclid(TAU);
    Ok(TaylorEstimate {
        coefficients: (x, y),
        radii,
        sigma2,
        psi,
        raw_tau2,
    })
}

/// A nondegenerate focus-focus critical point over `c`.
pub fn locate_focus_focus(system: &SystemModel, c: (f64, f64)) -> Result<PhasePoint, Error> {
    let w = ValueWindow::new(c.0 - 0.05, c.0 + 0.05, c.1 - 0.05, c.1 + 0.05)?;
    let region = SearchRegion {
        chart_radius: SearchRegion::from_window(w).chart_radius.max(2.0),
        window: Some(w),
    };
    let search = find_critical_points(system, region, 8, 1e-12)?;
    search
        .points
        .into_iter()
        .filter(|p| p.rank == 0 && p.is_focus_focus() && p.nondegenerate)
        .min_by(|a, b| {
            let d = |p: &crate::singularities::CriticalPointRecord| (p.value.0 - c.0).hypot(p.value.1 - c.1);
            d(a).total_cmp(&d(b))
        })
        .filter(|p| (p.value.0 - c.0).hypot(p.value.1 - c.1) < 1e-6)
        .map(|p| p.point)
        .ok_or_else(|| Error::Precondition(format!("no nondegenerate focus-focus point over ({}, {})", c.0, c.1)))
}

/// Linear Taylor coefficients (X, Y) at the focus-focus value `c`.
pub fn taylor_linear_invariant(system: &SystemModel, c: (f64, f64), opts: TaylorOptions) -> Result<TaylorEstimate, Error> {
    let m = locate_focus_focus(system, c)?;
    let (alpha, beta) = eliasson_scales(system, &m)?;
    let focus = Focus {
        value: system.f_raw(&m.coords),
        alpha,
        beta,
        sign: 1,
    };
    taylor_linear_from_focus(system, &focus, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            samples: 1_000_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelVolume {
    /// Reduced Liouville volume of {J = j, H < h} divided by 2π.
    pub value: f64,
    pub sigma: f64,
    pub fraction: f64,
    pub samples: usize,
}

/// Whether J = (u² + v²)/2 + z on S² × ℝ², the case with an explicit
/// parametrisation of the level sets.
fn spin_type_j(system: &SystemModel) -> bool {
    if system.manifold != Manifold::SphereR2 {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..6).all(|_| {
        let p = system.manifold.random_point(&mut rng, 2.0);
        let j = system.j.value(&p);
        (j - (0.5 * (p[3] * p[3] + p[4] * p[4]) + p[2])).abs() < 1e-12
    })
}

/// Monte Carlo volume of {J = j, H < h}, reduced by the J-action and divided
/// by 2π. On {J = j} the Liouville measure is dz dθ dφ with z ∈ [−1, min(1, j)]
/// uniform, θ the sphere angle and φ the angle in the (u, v) plane.
pub fn sublevel_volume(system: &SystemModel, j: f64, h: f64, opts: MonteCarloOptions) -> Result<SublevelVolume, Error> {
    if !spin_type_j(system) {
        return Err(Error::Unsupported(
            "Monte Carlo heights need J = (u²+v²)/2 + z on S²×ℝ²".into(),
        ));
    }
    if j <= -1.0 {
        return Err(Error::Domain(format!("level J = {j} is empty or a point")));
    }
    if opts.samples == 0 {
        return Err(Error::Config("at least one Monte Carlo sample is needed".into()));
    }
    let zmax = j.min(1.0);
    let len = zmax + 1.0;
    let shards = 8usize;
    let counts: Vec<(usize, usize)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let n = opts.samples / shards + usize::from(k < opts.samples % shards);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            let mut below = 0usize;
            for _ in 0..n {
                let z = -1.0 + len * rng.random::<f64>();
                let th = TAU * rng.random::<f64>();
                let ph = TAU * rng.random::<f64>();
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let r = (2.0 * (j - z)).max(0.0).sqrt();
                let p = [rho * th.cos(), rho * th.sin(), z, r * ph.cos(), r * ph.sin()];
                if system.h.value(&p) < h {
                    below += 1;
                }
            }
            (below, n)
        })
        .collect();
    let (below, n) = counts.iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    let f = below as f64 / n as f64;
    Ok(SublevelVolume {
        value: f * len,
        sigma: len * (f * (1.0 - f) / n as f64).sqrt(),
        fraction: f,
        samples: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightEstimate {
    pub value: f64,
    /// From the developed polygon: image of c_i minus the bottom of Δ over J(c_i).
    pub polygon: f64,
    pub monte_carlo: Option<SublevelVolume>,
}

/// Height of the i-th focus-focus value, by the polygon and, when available,
/// by Monte Carlo; the two must agree within 3σ.
pub fn height_invariant(system: &SystemModel, dev: &DevelopingMap, i: usize, mc: MonteCarloOptions) -> Result<HeightEstimate, Error> {
    let f = dev
        .focus
        .get(i)
        .ok_or_else(|| Error::Config(format!("no focus-focus value with index {i}")))?;
    let x = &dev.polygon.cuts[i].x;
    let (lo, _) = dev
        .polygon
        .polygon
        .vertical_section(x)
        .ok_or_else(|| Error::Consistency("cut line misses the polygon".into()))?;
    let lo = num_traits::ToPrimitive::to_f64(&lo).unwrap_or(f64::NAN);
    let polygon = dev.focus_images[i].1 - lo;
    let monte_carlo = match sublevel_volume(system, f.value.0, f.value.1, mc) {
        Ok(v) => Some(v),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(v) = &monte_carlo {
        if (v.value - polygon).abs() > 3.0 * v.sigma + 1e-6 {
            return Err(Error::Consistency(format!(
                "height from the polygon ({polygon:.6}) and Monte Carlo ({:.6} ± {:.1e}) disagree",
                v.value, v.sigma
            )));
        }
    }
    Ok(HeightEstimate {
        value: polygon,
        polygon,
        monte_carlo,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistingEstimate {
    pub k: i64,
    /// Largest distance of a per-sample estimate from k.
    pub residual: f64,
    pub samples: usize,
}

/// arg in [lo, lo + 2π).
fn arg_from(y: f64, x: f64, lo: f64) -> f64 {
    lo + (y.atan2(x) - lo).rem_euclid(TAU)
}

/// Twisting index of each focus value relative to the polygon of `dev`,
/// with the fit residuals.
pub fn twisting_details(system: &SystemModel, dev: &DevelopingMap, taylor: &[TaylorEstimate]) -> Result<Vec<TwistingEstimate>, Error> {
    let mut out = Vec::new();
    for (i, f) in dev.focus.iter().enumerate() {
        let eps = f.sign as f64;
        // the privileged branch of arg: [π/2, 5π/2) for upward cuts,
        // [3π/2, 7π/2) for downward ones
        let arg_lo = if f.sign > 0 { FRAC_PI_2 } else { 3.0 * FRAC_PI_2 };
        let psi0 = FRAC_PI_2 - taylor[i].coefficients.1;
        let r = 0.1;
        let at = |phi: f64| {
            let dj = r * phi.cos();
            (f.value.0 + dj, f.value.1 + f.beta * dj + f.alpha * r * phi.sin())
        };
        let start_phi = -eps * FRAC_PI_2;
        let knot = dev.reference.focus_knots[i];
        let from = dev.reference.knots[knot].sample.value;
        let target = at(start_phi);
        let steps = ((target.1 - from.1).abs() / 0.05).ceil().max(1.0) as usize;
        let mut path: Vec<(f64, f64)> = (1..=steps)
            .map(|s| (from.0, from.1 + (target.1 - from.1) * s as f64 / steps as f64))
            .collect();
        let approach = path.len();
        // sweep 1.2 rad to each side of the start, away from the cut
        for d in [1.0, -1.0] {
            for s in 1..=6 {
                path.push(at(start_phi + d * 0.2 * s as f64));
            }
            for s in (0..6).rev() {
                path.push(at(start_phi + d * 0.2 * s as f64));
            }
        }
        let samples = dev.continue_from_knot(system, knot, &path)?;
        let ks: Vec<f64> = samples[approach - 1..]
            .iter()
            .map(|s| {
                let (x, y) = f.local(s.value);
                let t1e = s.raw + f.beta * s.tau2;
                let psi = t1e + y.atan2(x);
                let psi = psi + TAU * ((psi0 - psi) / TAU).round();
                let priv_e = psi - arg_from(y, x, arg_lo);
                let priv_jh = priv_e - f.beta * s.tau2;
                (s.tau1 - priv_jh) / TAU
            })
            .collect();
        let mean = ks.iter().sum::<f64>() / ks.len() as f64;
        let k = mean.round();
        let residual = ks.iter().fold(0.0f64, |a, v| a.max((v - k).abs()));
        if residual >= 0.05 {
            return Err(Error::BranchTracking(format!(
                "twisting index at ({}, {}) is not integral (residual {residual:.3})",
                f.value.0, f.value.1
            )));
        }
        out.push(TwistingEstimate {
            k: k as i64,
            residual,
            samples: ks.len(),
        });
    }
    Ok(out)
}

/// Twisting indices relative to the polygon of `dev`.
pub fn twisting_indices(system: &SystemModel, dev: &DevelopingMap) -> Result<Vec<i64>, Error> {
    let taylor = dev
        .focus
        .iter()
        .map(|f| taylor_linear_from_focus(system, f, TaylorOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(twisting_details(system, dev, &taylor)?.into_iter().map(|t| t.k).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantOptions {
    pub window: Option<ValueWindow>,
    pub resolution: usize,
    pub taylor: TaylorOptions,
    pub monte_carlo: MonteCarloOptions,
    pub develop: DevelopOptions,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        InvariantOptions {
            window: None,
            resolution: 64,
            taylor: TaylorOptions::default(),
            monte_carlo: MonteCarloOptions::default(),
            develop: DevelopOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemitoricInvariants {
    pub system: String,
    pub m_f: usize,
    pub focus_values: Vec<(f64, f64)>,
    pub taylor_linear: Vec<(f64, f64)>,
    pub heights: Vec<f64>,
    pub polygon_class: CanonicalClass,
    /// Twisting indices relative to the class representative.
    pub twisting: Vec<i64>,
    /// One representative per choice of cut signs, in binary order of ε
    /// (bit i set ⇔ ε_i = −1).
    pub sign_representatives: Vec<WeightedPolygon>,
    pub taylor_estimates: Vec<TaylorEstimate>,
    pub height_estimates: Vec<HeightEstimate>,
    pub twisting_estimates: Vec<TwistingEstimate>,
    pub window: ValueWindow,
    pub notes: Vec<String>,
}

/// Window around the rank-0 values, padded, trimmed to the J-support of F(M)
/// and with the H-range of the columns.
pub fn default_window(system: &SystemModel) -> Result<ValueWindow, Error> {
    let search = find_critical_points(system, SearchRegion::chart(2.0), 8, 1e-12)?;
    let vals: Vec<(f64, f64)> = search.rank0().map(|p| p.value).collect();
    if vals.is_empty() {
        return Err(Error::Precondition("no rank-0 critical values to centre a window on".into()));
    }
    let j0 = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min) - 1.0;
    let j1 = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let n = 32;
    let cols: Vec<(f64, f64, f64)> = (0..=n)
        .filter_map(|k| {
            let j = j0 + (j1 - j0) * k as f64 / n as f64;
            column_extent(system, j, None)
                .filter(|c| c.len() > 0.0)
                .map(|c| (j, c.lo, c.hi))
        })
        .collect();
    let (first, last) = match (cols.first(), cols.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::Precondition("F(M) misses the window around the rank-0 values".into())),
    };
    let h0 = cols.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let h1 = cols.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if !(h0.is_finite() && h1.is_finite()) {
        return Err(Error::Unsupported("columns of F(M) are unbounded in H".into()));
    }
    let step = (j1 - j0) / n as f64;
    let pad = 0.25 * (last - first).max(1.0);
    let lo = if first > j0 { first - step - pad } else { j0 };
    let hi = if last < j1 { last + step + pad } else { j1 };
    let hpad = 0.25 * (h1 - h0).max(1.0);
    ValueWindow::new(lo, hi, h0 - hpad, h1 + hpad)
}

/// All five invariants of a semitoric system.
pub fn semitoric_invariants(system: &SystemModel, opts: &InvariantOptions) -> Result<SemitoricInvariants, Error> {
    let window = match opts.window {
        Some(w) => w,
        None => default_window(system)?,
    };
    let verdict = is_semitoric(system, SearchRegion::from_window(window))?;
    if !verdict.semitoric {
        return Err(Error::Precondition(format!("system is not semitoric: {}", verdict.reasons.join("; "))));
    }
    let diagram = bifurcation_diagram(system, window, opts.resolution)?;
    let m_f = diagram.focus_focus_values().len();
    let signs = vec![1i8; m_f];
    let dev = develop_affine(system, &diagram, &signs, opts.develop)?;
    let taylor_estimates = dev
        .focus
        .iter()
        .map(|f| taylor_linear_from_focus(system, f, opts.taylor))
        .collect::<Result<Vec<_>, _>>()?;
    let height_estimates = (0..m_f)
        .map(|i| height_invariant(system, &dev, i, opts.monte_carlo))
        .collect::<Result<Vec<_>, _>>()?;
    let twisting_estimates = twisting_details(system, &dev, &taylor_estimates)?;
    let k: Vec<i64> = twisting_estimates.iter().map(|t| t.k).collect();
    let weighted = WeightedPolygon::new(dev.polygon.polygon.clone(), dev.polygon.cuts.clone(), Some(k))?;
    let polygon_class = canonical_weighted_class(&weighted)?;
    let rep = &polygon_class.representative;
    let twisting = rep.twisting.clone().unwrap_or_default();
    let mut sign_representatives = Vec::new();
    for mask in 0..(1usize << m_f) {
        let mut w = rep.clone();
        for i in 0..m_f {
            if mask >> i & 1 == 1 {
                w = w.flip(i)?;
            }
        }
        sign_representatives.push(w);
    }
    let taylor_linear: Vec<(f64, f64)> = taylor_estimates.iter().map(|t| t.coefficients).collect();
    let heights: Vec<f64> = height_estimates.iter().map(|h| h.value).collect();
    let mut notes = dev.notes.clone();
    if height_estimates.iter().any(|h| h.monte_carlo.is_none()) {
        notes.push("heights from the polygon only; no Monte Carlo sampler for this J".into());
    }
    let verdict = validate_ingredients(&Ingredients {
        m_f,
        taylor_linear: taylor_linear.clone(),
        taylor_constant: None,
        polygon: rep.clone(),
        heights: heights.clone(),
        twisting: twisting.clone(),
    });
    if !verdict.valid {
        return Err(Error::Consistency(format!("invariants fail validation: {}", verdict.reasons.join("; "))));
    }
    Ok(SemitoricInvariants {
        system: system.name.clone(),
        m_f,
        focus_values: dev.focus.iter().map(|f| f.value).collect(),
        taylor_linear,
        heights,
        polygon_class,
        twisting,
        sign_representatives,
        taylor_estimates,
        height_estimates,
        twisting_estimates,
        window,
        notes,
    })
}

impl SemitoricInvariants {
    /// Same invariants up to `tol` on the real-valued entries.
    pub fn matches(&self, other: &SemitoricInvariants, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(1.0);
        let angle = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(TAU);
            d.min(TAU - d) <= tol * PI
        };
        self.m_f == other.m_f
            && self
                .taylor_linear
                .iter()
                .zip(&other.taylor_linear)
                .all(|(a, b)| close(a.0, b.0) && angle(a.1, b.1))
            && self.heights.iter().zip(&other.heights).all(|(a, b)| close(*a, *b))
            && self.polygon_class.representative == other.polygon_class.representative
            && self.twisting == other.twisting
    }
}
