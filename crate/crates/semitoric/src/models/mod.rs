//! Phase spaces, integrable system records, Hamiltonian vector fields and
//! Poisson brackets.
//!
//! Every manifold is realised as a submanifold of some ℝᴺ cut out by Casimir
//! constraints of a linear Poisson tensor `P(p)`. Hamiltonian vector fields are
//! `X_f = ORIENTATION · P(p) ∇f` and brackets are `{f, g} = ∇fᵀ P ∇g`.

pub mod builtin;
pub mod expr;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr_shim::standard_normal;
use serde::{Deserialize, Serialize};

use crate::Error;

pub use builtin::{builtin, builtin_ids, BuiltinInfo, BUILTINS};
pub use expr::Expr;

/// Sign of the Hamiltonian vector field relative to the Poisson tensors below.
///
/// With `+1` the identity `ω(X_f, ·) = df` holds, X_J of the spin-oscillator
/// turns (x, y) and (u, v) clockwise with period 2π and {J, H} = 0. Flipping
/// it reverses every flow; period lattices are unchanged (they are groups)
/// but every transported monodromy matrix is replaced by its inverse.
pub const ORIENTATION: f64 = 1.0;

/// Largest ambient dimension among the supported manifolds.
pub const MAX_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    /// S² × ℝ² with coordinates (x, y, z, u, v).
    #[serde(rename = "s2xr2")]
    SphereR2,
    /// S² × S² with coordinates (x1, y1, z1, x2, y2, z2).
    #[serde(rename = "s2xs2")]
    SphereSphere,
    /// ℝ⁴ with canonical pairs (x1, xi1), (x2, xi2).
    #[serde(rename = "r4")]
    R4,
    /// T*S² as the coadjoint orbit |Γ| = 1, Γ·L = 0 of e(3)*; (gx, gy, gz, lx, ly, lz).
    #[serde(rename = "ts2")]
    CotangentSphere,
    /// S² alone (one degree of freedom), coordinates (x, y, z).
    #[serde(rename = "s2")]
    Sphere,
}

impl Manifold {
    pub const ALL: [Manifold; 5] = [
        Manifold::SphereR2,
        Manifold::SphereSphere,
        Manifold::R4,
        Manifold::CotangentSphere,
        Manifold::Sphere,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Manifold::SphereR2 => "s2xr2",
            Manifold::SphereSphere => "s2xs2",
            Manifold::R4 => "r4",
            Manifold::CotangentSphere => "ts2",
            Manifold::Sphere => "s2",
        }
    }

    pub fn from_id(id: &str) -> Option<Manifold> {
        Manifold::ALL.into_iter().find(|m| m.id() == id)
    }

    pub fn ambient_dim(self) -> usize {
        self.vars().len()
    }

    /// Dimension of the symplectic leaf (2 × degrees of freedom).
    pub fn leaf_dim(self) -> usize {
        match self {
            Manifold::Sphere => 2,
            _ => 4,
        }
    }

    pub fn vars(self) -> &'static [&'static str] {
        match self {
            Manifold::SphereR2 => &["x", "y", "z", "u", "v"],
            Manifold::SphereSphere => &["x1", "y1", "z1", "x2", "y2", "z2"],
            Manifold::R4 => &["x1", "xi1", "x2", "xi2"],
            Manifold::CotangentSphere => &["gx", "gy", "gz", "lx", "ly", "lz"],
            Manifold::Sphere => &["x", "y", "z"],
        }
    }

    /// Start indices of unit-sphere factors.
    pub fn sphere_blocks(self) -> &'static [usize] {
        match self {
            Manifold::SphereR2 | Manifold::Sphere => &[0],
            Manifold::SphereSphere => &[0, 3],
            Manifold::R4 => &[],
            Manifold::CotangentSphere => &[0],
        }
    }

    /// Canonical (q, p) index pairs of flat factors.
    fn flat_pairs(self) -> &'static [(usize, usize)] {
        match self {
            Manifold::SphereR2 => &[(3, 4)],
            Manifold::R4 => &[(0, 1), (2, 3)],
            _ => &[],
        }
    }

    pub fn n_constraints(self) -> usize {
        self.ambient_dim() - self.leaf_dim()
    }

    pub fn constraints(self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .sphere_blocks()
            .iter()
            .map(|&a| p[a] * p[a] + p[a + 1] * p[a + 1] + p[a + 2] * p[a + 2] - 1.0)
            .collect();
        if self == Manifold::CotangentSphere {
            out.push(p[0] * p[3] + p[1] * p[4] + p[2] * p[5]);
        }
        out
    }

    pub fn constraint_gradients(self, p: &[f64]) -> Vec<DVector<f64>> {
        let d = self.ambient_dim();
        let mut out = Vec::new();
        for &a in self.sphere_blocks() {
            let mut g = DVector::zeros(d);
            for k in 0..3 {
                g[a + k] = 2.0 * p[a + k];
            }
            out.push(g);
        }
        if self == Manifold::CotangentSphere {
            out.push(DVector::from_column_slice(&[p[3], p[4], p[5], p[0], p[1], p[2]]));
        }
        out
    }

    pub fn constraint_hessians(self) -> Vec<DMatrix<f64>> {
        let d = self.ambient_dim();
        let mut out = Vec::new();
        for &a in self.sphere_blocks() {
            let mut h = DMatrix::zeros(d, d);
            for k in 0..3 {
                h[(a + k, a + k)] = 2.0;
            }
            out.push(h);
        }
        if self == Manifold::CotangentSphere {
            let mut h = DMatrix::zeros(d, d);
            for k in 0..3 {
                h[(k, 3 + k)] = 1.0;
                h[(3 + k, k)] = 1.0;
            }
            out.push(h);
        }
        out
    }

    pub fn constraint_residual(self, p: &[f64]) -> f64 {
        self.constraints(p).iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `out = ORIENTATION · P(p) g`.
    pub fn poisson_apply(self, p: &[f64], g: &[f64], out: &mut [f64]) {
        match self {
            Manifold::CotangentSphere => {
                let (gm, lm) = ([p[0], p[1], p[2]], [p[3], p[4], p[5]]);
                let (dg, dl) = ([g[0], g[1], g[2]], [g[3], g[4], g[5]]);
                let a = cross(gm, dl);
                let b = cross(lm, dl);
                let c = cross(gm, dg);
                for k in 0..3 {
                    out[k] = ORIENTATION * a[k];
                    out[3 + k] = ORIENTATION * (b[k] + c[k]);
                }
            }
            _ => {
                for &a in self.sphere_blocks() {
                    let v = cross([p[a], p[a + 1], p[a + 2]], [g[a], g[a + 1], g[a + 2]]);
                    for k in 0..3 {
                        out[a + k] = ORIENTATION * v[k];
                    }
                }
                for &(q, m) in self.flat_pairs() {
                    out[q] = ORIENTATION * g[m];
                    out[m] = -ORIENTATION * g[q];
                }
            }
        }
    }

    /// Poisson tensor (with orientation) as a dense matrix.
    pub fn poisson_matrix(self, p: &[f64]) -> DMatrix<f64> {
        let d = self.ambient_dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.poisson_apply(p, &e, &mut col);
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Symplectic form on tangent vectors: ω(a, b) = −aᵀ P⁺ b.
    pub fn omega(self, p: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let pinv = self.poisson_pinv(p);
        let a = DVector::from_column_slice(a);
        let b = DVector::from_column_slice(b);
        -(a.transpose() * pinv * b)[(0, 0)]
    }

    pub fn poisson_pinv(self, p: &[f64]) -> DMatrix<f64> {
        self.poisson_matrix(p)
            .pseudo_inverse(1e-10)
            .expect("SVD of a small matrix")
    }

    /// Retraction onto the manifold.
    pub fn project(self, p: &mut [f64]) {
        for &a in self.sphere_blocks() {
            let n = (p[a] * p[a] + p[a + 1] * p[a + 1] + p[a + 2] * p[a + 2]).sqrt();
            if n > 0.0 {
                for k in 0..3 {
                    p[a + k] /= n;
                }
            }
        }
        if self == Manifold::CotangentSphere {
            let s = p[0] * p[3] + p[1] * p[4] + p[2] * p[5];
            for k in 0..3 {
                p[3 + k] -= s * p[k];
            }
        }
    }

    /// Orthonormal basis of the tangent space at `p` (Gram–Schmidt against
    /// the constraint normals, then the coordinate axes).
    pub fn tangent_basis(self, p: &[f64]) -> Vec<DVector<f64>> {
        let d = self.ambient_dim();
        let mut normals: Vec<DVector<f64>> = Vec::new();
        for g in self.constraint_gradients(p) {
            if let Some(v) = orthonormalize(&normals, g) {
                normals.push(v);
            }
        }
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            let all: Vec<DVector<f64>> = normals.iter().chain(basis.iter()).cloned().collect();
            if let Some(v) = orthonormalize(&all, e) {
                basis.push(v);
            }
            if basis.len() == self.leaf_dim() {
                break;
            }
        }
        basis
    }

    /// Orthogonal projection of an ambient vector onto the tangent space.
    pub fn project_tangent(self, p: &[f64], v: &mut [f64]) {
        let mut normals: Vec<DVector<f64>> = Vec::new();
        for g in self.constraint_gradients(p) {
            if let Some(n) = orthonormalize(&normals, g) {
                normals.push(n);
            }
        }
        for n in &normals {
            let s: f64 = n.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (x, a) in v.iter_mut().zip(n.iter()) {
                *x -= s * a;
            }
        }
    }

    /// Random point; flat and momentum factors are drawn in a ball of `radius`.
    pub fn random_point<R: Rng>(self, rng: &mut R, radius: f64) -> Vec<f64> {
        let d = self.ambient_dim();
        let mut p = vec![0.0; d];
        for &a in self.sphere_blocks() {
            let v = unit_vector(rng);
            p[a..a + 3].copy_from_slice(&v);
        }
        for &(q, m) in self.flat_pairs() {
            let r = radius * rng.random::<f64>().sqrt();
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            p[q] = r * t.cos();
            p[m] = r * t.sin();
        }
        if self == Manifold::CotangentSphere {
            for k in 3..6 {
                p[k] = radius * (2.0 * rng.random::<f64>() - 1.0);
            }
            self.project(&mut p);
        }
        p
    }

    /// Deterministic seeds: cell-centred grids in (z, θ) on spheres and in
    /// polar or box coordinates on flat factors, `n` points per chart axis.
    pub fn chart_seeds(self, n: usize, radius: f64) -> Vec<Vec<f64>> {
        let tau = std::f64::consts::TAU;
        let sphere = |i: usize, j: usize| -> [f64; 3] {
            let z = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
            let th = tau * (j as f64 + 0.25) / n as f64;
            let r = (1.0 - z * z).sqrt();
            [r * th.cos(), r * th.sin(), z]
        };
        let polar = |i: usize, j: usize| -> [f64; 2] {
            let r = radius * (i as f64 + 0.5) / n as f64;
            let t = tau * (j as f64 + 0.125) / n as f64;
            [r * t.cos(), r * t.sin()]
        };
        let boxed = |i: usize| -> f64 { -radius + 2.0 * radius * (i as f64 + 0.5) / n as f64 };
        let mut out = Vec::new();
        let grid4 = (0..n).flat_map(|a| {
            (0..n).flat_map(move |b| (0..n).flat_map(move |c| (0..n).map(move |d| (a, b, c, d))))
        });
        match self {
            Manifold::Sphere => {
                for i in 0..n {
                    for j in 0..n {
                        out.push(sphere(i, j).to_vec());
                    }
                }
            }
            Manifold::SphereR2 => {
                for (a, b, c, d) in grid4 {
                    let s = sphere(a, b);
                    let f = polar(c, d);
                    out.push(vec![s[0], s[1], s[2], f[0], f[1]]);
                }
            }
            Manifold::SphereSphere => {
                for (a, b, c, d) in grid4 {
                    let s = sphere(a, b);
                    let t = sphere(c, d);
                    out.push(vec![s[0], s[1], s[2], t[0], t[1], t[2]]);
                }
            }
            Manifold::R4 => {
                for (a, b, c, d) in grid4 {
                    out.push(vec![boxed(a), boxed(b), boxed(c), boxed(d)]);
                }
            }
            Manifold::CotangentSphere => {
                for (a, b, c, d) in grid4 {
                    let g = sphere(a, b);
                    let (e1, e2) = tangent_frame(g);
                    let (s, t) = (boxed(c), boxed(d));
                    let l: Vec<f64> = (0..3).map(|k| s * e1[k] + t * e2[k]).collect();
                    out.push(vec![g[0], g[1], g[2], l[0], l[1], l[2]]);
                }
            }
        }
        out
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Manifold::SphereR2 => "S²×ℝ²",
            Manifold::SphereSphere => "S²×S²",
            Manifold::R4 => "ℝ⁴",
            Manifold::CotangentSphere => "T*S²",
            Manifold::Sphere => "S²",
        })
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn orthonormalize(basis: &[DVector<f64>], mut v: DVector<f64>) -> Option<DVector<f64>> {
    for _ in 0..2 {
        for b in basis {
            let s = b.dot(&v);
            v -= b * s;
        }
    }
    let n = v.norm();
    (n > 1e-8).then(|| v / n)
}

fn tangent_frame(g: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if g[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(g, a);
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / n, e1[1] / n, e1[2] / n];
    (e1, cross(g, e1))
}

fn unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [standard_normal(rng), standard_normal(rng), standard_normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

mod rand_distr_shim {
    use rand::Rng;

    /// Box–Muller standard normal draw.
    pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// A point of a model phase space in ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub manifold: Manifold,
    pub coords: Vec<f64>,
}

impl PhasePoint {
    /// Checks dimension and constraints (tolerance `tol`).
    pub fn new(manifold: Manifold, coords: Vec<f64>, tol: f64) -> Result<Self, Error> {
        let p = PhasePoint { manifold, coords };
        p.validate(tol)?;
        Ok(p)
    }

    /// Projects onto the manifold first; for constructing points from
    /// approximate data.
    pub fn projected(manifold: Manifold, mut coords: Vec<f64>) -> Self {
        manifold.project(&mut coords);
        PhasePoint { manifold, coords }
    }

    pub fn validate(&self, tol: f64) -> Result<(), Error> {
        let d = self.manifold.ambient_dim();
        if self.coords.len() != d {
            return Err(Error::InvalidPoint(format!(
                "{} expects {d} coordinates, got {}",
                self.manifold,
                self.coords.len()
            )));
        }
        if self.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        let r = self.manifold.constraint_residual(&self.coords);
        if r > tol {
            return Err(Error::InvalidPoint(format!(
                "constraint residual {r:.3e} exceeds {tol:.1e} on {}",
                self.manifold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: PhasePoint,
    pub components: Vec<f64>,
}

impl TangentVector {
    /// Largest |⟨∇c_k, v⟩| over the constraint gradients.
    pub fn normal_residual(&self) -> f64 {
        self.base
            .manifold
            .constraint_gradients(&self.base.coords)
            .iter()
            .map(|g| {
                g.iter()
                    .zip(&self.components)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A smooth function on the ambient space with first and second derivatives.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64], out: &mut [f64]);
    fn hessian(&self, p: &[f64]) -> DMatrix<f64>;
    fn describe(&self) -> String;

    /// Domain-checked evaluation; the default only checks finiteness.
    fn try_value(&self, p: &[f64]) -> Result<f64, Error> {
        let v = self.value(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("{} is not finite here", self.describe())))
        }
    }
}

pub type Field = Arc<dyn ScalarField>;

/// `c + bᵀp + ½ pᵀ A p` with symmetric `A`; exact derivatives.
#[derive(Clone, Debug)]
pub struct QuadraticField {
    pub label: String,
    pub c: f64,
    pub b: DVector<f64>,
    pub a: DMatrix<f64>,
}

impl QuadraticField {
    pub fn new(label: &str, dim: usize) -> Self {
        QuadraticField {
            label: label.to_string(),
            c: 0.0,
            b: DVector::zeros(dim),
            a: DMatrix::zeros(dim, dim),
        }
    }

    pub fn linear(mut self, i: usize, coef: f64) -> Self {
        self.b[i] += coef;
        self
    }

    /// Adds `coef · p_i p_j` to the field.
    pub fn product(mut self, i: usize, j: usize, coef: f64) -> Self {
        if i == j {
            self.a[(i, i)] += 2.0 * coef;
        } else {
            self.a[(i, j)] += coef;
            self.a[(j, i)] += coef;
        }
        self
    }
}

impl ScalarField for QuadraticField {
    fn value(&self, p: &[f64]) -> f64 {
        let n = p.len();
        let mut v = self.c;
        for i in 0..n {
            v += self.b[i] * p[i];
            for j in 0..n {
                v += 0.5 * self.a[(i, j)] * p[i] * p[j];
            }
        }
        v
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        for i in 0..n {
            let mut g = self.b[i];
            for j in 0..n {
                g += self.a[(i, j)] * p[j];
            }
            out[i] = g;
        }
    }

    fn hessian(&self, _p: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// A parsed expression with symbolically differentiated gradient and Hessian.
#[derive(Clone, Debug)]
pub struct ParsedField {
    pub source: String,
    pub manifold: Manifold,
    pub expr: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

impl ScalarField for ParsedField {
    fn value(&self, p: &[f64]) -> f64 {
        self.expr.eval(p)
    }

    fn try_value(&self, p: &[f64]) -> Result<f64, Error> {
        self.expr.try_eval(p)
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g.eval(p);
        }
    }

    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.grad.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.hess[i][j - i].eval(p);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    fn describe(&self) -> String {
        self.source.clone()
    }
}

/// Parses an expression over the chart variables of `manifold` and
/// differentiates it symbolically.
pub fn parse_hamiltonian(source: &str, manifold: Manifold) -> Result<ParsedField, Error> {
    let vars = manifold.vars();
    let expr = expr::parse(source, vars)?;
    let grad: Vec<Expr> = (0..vars.len()).map(|i| expr.diff(i)).collect();
    let hess = (0..vars.len())
        .map(|i| (i..vars.len()).map(|j| grad[i].diff(j)).collect())
        .collect();
    Ok(ParsedField {
        source: source.to_string(),
        manifold,
        expr,
        grad,
        hess,
    })
}

/// `a·J + b·H` for two fields; used for isomorphic reparametrisations.
#[derive(Clone, Debug)]
pub struct Combination {
    pub terms: Vec<(f64, Field)>,
}

impl ScalarField for Combination {
    fn value(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(p)).sum()
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let mut tmp = [0.0; MAX_DIM];
        out.iter_mut().for_each(|x| *x = 0.0);
        for (c, f) in &self.terms {
            f.gradient(p, &mut tmp[..p.len()]);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += c * t;
            }
        }
    }

    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        for (c, f) in &self.terms {
            h += f.hessian(p) * *c;
        }
        h
    }

    fn describe(&self) -> String {
        self.terms
            .iter()
            .map(|(c, f)| format!("{c}·({})", f.describe()))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Which Hamiltonian generates a flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Which {
    J,
    H,
    /// a·J + b·H
    Combination(f64, f64),
}

impl Which {
    pub fn coefficients(self) -> (f64, f64) {
        match self {
            Which::J => (1.0, 0.0),
            Which::H => (0.0, 1.0),
            Which::Combination(a, b) => (a, b),
        }
    }
}

/// Optional restriction of the phase space to `a·J + b·H ≤ c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Full,
    HalfSpace { a: f64, b: f64, c: f64 },
}

impl Domain {
    pub fn contains_value(&self, j: f64, h: f64) -> bool {
        match *self {
            Domain::Full => true,
            Domain::HalfSpace { a, b, c } => a * j + b * h <= c + 1e-12,
        }
    }
}

/// Axis-parallel rectangle in the (J, H) value plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueWindow {
    pub j: (f64, f64),
    pub h: (f64, f64),
}

impl ValueWindow {
    pub fn new(j0: f64, j1: f64, h0: f64, h1: f64) -> Result<Self, Error> {
        if !(j0 < j1 && h0 < h1) || ![j0, j1, h0, h1].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("empty value window [{j0}, {j1}]×[{h0}, {h1}]")));
        }
        Ok(ValueWindow { j: (j0, j1), h: (h0, h1) })
    }

    pub fn contains(&self, c: (f64, f64)) -> bool {
        (self.j.0..=self.j.1).contains(&c.0) && (self.h.0..=self.h.1).contains(&c.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub constraint: f64,
    pub bracket: f64,
    pub derivative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            constraint: 1e-12,
            bracket: 1e-9,
            derivative: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), Error> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Config(format!("tolerance {key} must be positive")));
        }
        match key {
            "constraint" => self.constraint = value,
            "bracket" => self.bracket = value,
            "derivative" => self.derivative = value,
            _ => return Err(Error::Config(format!("unknown tolerance `{key}`"))),
        }
        Ok(())
    }
}

/// An integrable system F = (J, H) on a model phase space.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub name: String,
    pub manifold: Manifold,
    pub j: Field,
    pub h: Field,
    pub j_is_proper: bool,
    pub domain: Domain,
    pub tolerances: Tolerances,
}

impl SystemModel {
    pub fn new(name: &str, manifold: Manifold, j: Field, h: Field, j_is_proper: bool) -> Self {
        SystemModel {
            name: name.to_string(),
            manifold,
            j,
            h,
            j_is_proper,
            domain: Domain::Full,
            tolerances: Tolerances::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    /// The isomorphic system (J, scale·H + lambda·J).
    pub fn reparametrized(&self, lambda: f64, scale: f64) -> SystemModel {
        let h: Field = Arc::new(Combination {
            terms: vec![(scale, self.h.clone()), (lambda, self.j.clone())],
        });
        let domain = match self.domain {
            Domain::Full => Domain::Full,
            // a J + b H ≤ c  ⇔  (a − bλ/s) J + (b/s) H' ≤ c
            Domain::HalfSpace { a, b, c } => Domain::HalfSpace {
                a: a - b * lambda / scale,
                b: b / scale,
                c,
            },
        };
        SystemModel {
            name: format!("{} (H → {scale}·H + {lambda}·J)", self.name),
            h,
            domain,
            ..self.clone()
        }
    }

    pub fn check_point(&self, p: &PhasePoint) -> Result<(), Error> {
        if p.manifold != self.manifold {
            return Err(Error::InvalidPoint(format!(
                "point on {} given to a system on {}",
                p.manifold, self.manifold
            )));
        }
        p.validate(self.tolerances.constraint)
    }

    /// F(p) = (J(p), H(p)).
    pub fn eval_f(&self, p: &PhasePoint) -> Result<(f64, f64), Error> {
        self.check_point(p)?;
        Ok((self.j.try_value(&p.coords)?, self.h.try_value(&p.coords)?))
    }

    /// F without validation, for inner loops.
    pub fn f_raw(&self, p: &[f64]) -> (f64, f64) {
        (self.j.value(p), self.h.value(p))
    }

    /// Ambient gradient of a·J + b·H.
    pub fn gradient_raw(&self, which: Which, p: &[f64], out: &mut [f64]) {
        let (a, b) = which.coefficients();
        let n = p.len();
        let mut gj = [0.0; MAX_DIM];
        let mut gh = [0.0; MAX_DIM];
        if a != 0.0 {
            self.j.gradient(p, &mut gj[..n]);
        }
        if b != 0.0 {
            self.h.gradient(p, &mut gh[..n]);
        }
        for i in 0..n {
            out[i] = a * gj[i] + b * gh[i];
        }
    }

    /// Hamiltonian vector field of a·J + b·H without validation.
    pub fn vector_field_raw(&self, which: Which, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        let mut g = [0.0; MAX_DIM];
        self.gradient_raw(which, p, &mut g[..n]);
        self.manifold.poisson_apply(p, &g[..n], out);
    }

    pub fn hamiltonian_vector_field(&self, which: Which, p: &PhasePoint) -> Result<TangentVector, Error> {
        self.check_point(p)?;
        let mut out = vec![0.0; self.dim()];
        self.vector_field_raw(which, &p.coords, &mut out);
        Ok(TangentVector {
            base: p.clone(),
            components: out,
        })
    }

    /// {J, H}(p) = ω(X_J, X_H).
    pub fn poisson_bracket(&self, p: &PhasePoint) -> Result<f64, Error> {
        self.check_point(p)?;
        Ok(self.bracket_raw(Which::J, Which::H, &p.coords))
    }

    /// {f, g} = ∇fᵀ X_g for two combinations of J and H.
    pub fn bracket_raw(&self, f: Which, g: Which, p: &[f64]) -> f64 {
        let n = p.len();
        let mut gf = [0.0; MAX_DIM];
        let mut xg = [0.0; MAX_DIM];
        self.gradient_raw(f, p, &mut gf[..n]);
        self.vector_field_raw(g, p, &mut xg[..n]);
        (0..n).map(|i| gf[i] * xg[i]).sum()
    }

    pub fn hessian(&self, which: Which, p: &[f64]) -> DMatrix<f64> {
        let (a, b) = which.coefficients();
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        if a != 0.0 {
            h += self.j.hessian(p) * a;
        }
        if b != 0.0 {
            h += self.h.hessian(p) * b;
        }
        h
    }

    /// Builds a system from a JSON descriptor.
    pub fn from_descriptor(desc: &SystemDescriptor) -> Result<SystemModel, Error> {
        let manifold = Manifold::from_id(&desc.manifold)
            .ok_or_else(|| Error::Config(format!("unknown manifold `{}`", desc.manifold)))?;
        let field = |src: &str, take_h: bool| -> Result<Field, Error> {
            if let Some(sys) = builtin(src) {
                if sys.manifold != manifold {
                    return Err(Error::Config(format!(
                        "builtin `{src}` lives on {}, not {manifold}",
                        sys.manifold
                    )));
                }
                return Ok(if take_h { sys.h } else { sys.j });
            }
            Ok(Arc::new(parse_hamiltonian(src, manifold)?))
        };
        Ok(SystemModel::new(
            &desc.name,
            manifold,
            field(&desc.j, false)?,
            field(&desc.h, true)?,
            desc.j_is_proper,
        ))
    }
}

/// JSON system descriptor `{name, manifold, J, H, j_is_proper}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub name: String,
    pub manifold: String,
    #[serde(rename = "J")]
    pub j: String,
    #[serde(rename = "H")]
    pub h: String,
    pub j_is_proper: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spin_oscillator_values() {
        let s = builtin("spin-oscillator").unwrap();
        let f = |c: [f64; 5]| {
            s.eval_f(&PhasePoint::new(Manifold::SphereR2, c.to_vec(), 1e-12).unwrap())
                .unwrap()
        };
        assert_eq!(f([0.0, 0.0, 1.0, 0.0, 0.0]), (1.0, 0.0));
        assert_eq!(f([0.0, 0.0, -1.0, 0.0, 0.0]), (-1.0, 0.0));
        assert_eq!(f([1.0, 0.0, 0.0, 0.0, 0.0]), (0.0, 0.0));
    }

    #[test]
    fn off_manifold_point_is_rejected() {
        let s = builtin("spin-oscillator").unwrap();
        let p = PhasePoint {
            manifold: Manifold::SphereR2,
            coords: vec![0.0, 0.0, 1.1, 0.0, 0.0],
        };
        assert!(matches!(s.eval_f(&p), Err(Error::InvalidPoint(_))));
        let p = PhasePoint {
            manifold: Manifold::SphereR2,
            coords: vec![0.0, 0.0, 1.0],
        };
        assert!(matches!(s.eval_f(&p), Err(Error::InvalidPoint(_))));
    }

    #[test]
    fn j_field_fixes_north_pole_sphere_component() {
        let s = builtin("spin-oscillator").unwrap();
        let p = PhasePoint::new(Manifold::SphereR2, vec![0.0, 0.0, 1.0, 0.3, -0.2], 1e-12).unwrap();
        let x = s.hamiltonian_vector_field(Which::J, &p).unwrap();
        assert_eq!(&x.components[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&x.components[3..], &[-0.2, -0.3]);
    }

    #[test]
    fn vector_fields_are_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in builtin_ids() {
            let s = builtin(id).unwrap();
            for _ in 0..20 {
                let p = PhasePoint::projected(s.manifold, s.manifold.random_point(&mut rng, 1.5));
                for w in [Which::J, Which::H] {
                    let x = s.hamiltonian_vector_field(w, &p).unwrap();
                    assert!(x.normal_residual() < 1e-10, "{id}");
                }
            }
        }
    }

    #[test]
    fn parsed_fields_match_builtins() {
        let s = builtin("spin-oscillator").unwrap();
        let j = parse_hamiltonian("(u^2+v^2)/2 + z", Manifold::SphereR2).unwrap();
        let h = parse_hamiltonian("(u*x + v*y)/2", Manifold::SphereR2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = Manifold::SphereR2.random_point(&mut rng, 2.0);
            assert!((j.value(&p) - s.j.value(&p)).abs() < 1e-14);
            assert!((h.value(&p) - s.h.value(&p)).abs() < 1e-14);
            assert!((j.hessian(&p) - s.j.hessian(&p)).norm() < 1e-14);
        }
        let hyp = builtin("s2xs2-hyperbolic").unwrap();
        let f = parse_hamiltonian("x2*y2", Manifold::SphereSphere).unwrap();
        for _ in 0..20 {
            let p = Manifold::SphereSphere.random_point(&mut rng, 1.0);
            assert!((f.value(&p) - hyp.h.value(&p)).abs() < 1e-15);
        }
        let zero = parse_hamiltonian("0", Manifold::SphereR2).unwrap();
        let mut g = [1.0; 5];
        zero.gradient(&[0.0, 0.0, 1.0, 0.0, 0.0], &mut g);
        assert_eq!(g, [0.0; 5]);
    }

    #[test]
    fn bracket_with_itself_vanishes() {
        let j: Field = Arc::new(parse_hamiltonian("(u^2+v^2)/2 + z", Manifold::SphereR2).unwrap());
        let s = SystemModel::new("self", Manifold::SphereR2, j.clone(), j, true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = PhasePoint::projected(Manifold::SphereR2, Manifold::SphereR2.random_point(&mut rng, 2.0));
            assert!(s.poisson_bracket(&p).unwrap().abs() < 1e-12);
            assert_eq!(s.bracket_raw(Which::J, Which::J, &p.coords), 0.0);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"name":"spin","manifold":"s2xr2","J":"(u^2+v^2)/2 + z","H":"spin-oscillator","j_is_proper":true}"#;
        let d: SystemDescriptor = serde_json::from_str(json).unwrap();
        let s = SystemModel::from_descriptor(&d).unwrap();
        let p = [0.6, 0.0, 0.8, 1.0, 0.5];
        assert!((s.h.value(&p) - 0.3).abs() < 1e-15);
        let bad = SystemDescriptor {
            manifold: "t3".into(),
            ..d
        };
        assert!(matches!(SystemModel::from_descriptor(&bad), Err(Error::Config(_))));
    }
}
