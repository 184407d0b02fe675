//! Quadrature wrappers for fallible, expensive integrands.

use std::cell::RefCell;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::Error;

/// Gauss–Legendre nodes and weights on [a, b].
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (m + r * x, r * w))
        .collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

/// n-point Gauss–Legendre on [a, b], integrand evaluated in parallel.
pub fn gl_par<F>(n: usize, a: f64, b: f64, f: F) -> Result<f64, Error>
where
    F: Fn(f64) -> Result<f64, Error> + Sync,
{
    let parts: Result<Vec<f64>, Error> = gauss_legendre(n, a, b)
        .into_par_iter()
        .map(|(x, w)| f(x).map(|v| w * v))
        .collect();
    Ok(parts?.iter().sum())
}

/// Double-exponential (tanh-sinh) quadrature; tolerates integrable endpoint
/// singularities such as log(b − x).
pub fn tanh_sinh<F>(a: f64, b: f64, tol: f64, f: F) -> Result<(f64, f64), Error>
where
    F: Fn(f64) -> Result<f64, Error>,
{
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let out = quadrature::double_exponential::integrate(
        |x| {
            if failure.borrow().is_some() {
                return 0.0;
            }
            match f(x) {
                Ok(v) => v,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        a,
        b,
        tol,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok((out.integral, out.error_estimate)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let v = gl_par(5, -1.0, 2.0, |x| Ok(x.powi(9) - 3.0 * x * x)).unwrap();
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn log_endpoint_singularity() {
        let (v, _) = tanh_sinh(0.0, 1.0, 1e-12, |x| Ok(-(x.ln()))).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn errors_propagate() {
        let r = tanh_sinh(0.0, 1.0, 1e-8, |x| {
            if x > 0.5 {
                Err(Error::Domain("boom".into()))
            } else {
                Ok(x)
            }
        });
        assert!(r.is_err());
    }
}
