//! Adaptive Dormand–Prince 8(5,3) integrator with dense output.
//!
//! Step-size control and the error norm follow Hairer–Wanner; an optional
//! projection is applied to every accepted state.

use super::tableau::{A, B, C, D, E3, E5, STAGES, STAGES_EXT};
use crate::Error;

#[derive(Clone, Copy, Debug)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Build the 7th-order interpolant for every accepted step.
    pub dense: bool,
}

impl Dop853 {
    pub fn new(tol: f64) -> Self {
        Dop853 {
            rtol: tol,
            atol: tol,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            dense: false,
        }
    }

    pub fn with_dense(mut self) -> Self {
        self.dense = true;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Interpolant over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t_old: f64,
    pub h: f64,
    y_old: Vec<f64>,
    f: [Vec<f64>; 7],
}

impl DenseStep {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let x = (t - self.t_old) / self.h;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, f) in self.f.iter().rev().enumerate() {
            for (o, fk) in out.iter_mut().zip(f) {
                *o += fk;
            }
            let s = if i % 2 == 0 { x } else { 1.0 - x };
            out.iter_mut().for_each(|v| *v *= s);
        }
        for (o, y) in out.iter_mut().zip(&self.y_old) {
            *o += y;
        }
    }
}

/// What the observer sees after each accepted step.
pub struct StepInfo<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub dense: Option<&'a DenseStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
    pub stopped: bool,
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

impl Dop853 {
    /// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
    pub fn integrate<F, P, O>(
        &self,
        mut f: F,
        mut project: P,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        mut observer: O,
    ) -> Result<Outcome, Error>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        P: FnMut(&mut [f64]),
        O: FnMut(&StepInfo) -> Control,
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        project(&mut y);
        let mut t = t0;
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut out = Outcome {
            t,
            y: y.clone(),
            steps: 0,
            rejected: 0,
            stopped: false,
        };
        if t_end == t0 {
            return Ok(out);
        }
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; STAGES_EXT];
        let mut fcur = vec![0.0; n];
        f(t, &y, &mut fcur);
        let mut h = self.initial_step(&mut f, t, &y, &fcur, dir, (t_end - t0).abs());
        let mut y_new = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut partial: Vec<(f64, Vec<f64>)> = vec![(t, y.clone())];
        let mut step_rejected = false;
        loop {
            if out.steps + out.rejected >= self.max_steps {
                return Err(Error::Integration {
                    t,
                    msg: format!("step budget {} exhausted", self.max_steps),
                    partial,
                });
            }
            let min_step = 10.0 * f64::EPSILON * t.abs().max(1.0);
            if h < min_step {
                return Err(Error::Integration {
                    t,
                    msg: format!("step size {h:.3e} underflow"),
                    partial,
                });
            }
            h = h.min(self.h_max).min((t_end - t).abs());
            let hs = h * dir;
            // stages
            k[0].copy_from_slice(&fcur);
            for s in 1..STAGES {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    tmp[i] = y[i] + hs * acc;
                }
                let (_, tail) = k.split_at_mut(s);
                f(t + C[s] * hs, &tmp, &mut tail[0]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate().take(STAGES) {
                    acc += B[s] * ks[i];
                }
                y_new[i] = y[i] + hs * acc;
            }
            f(t + hs, &y_new, &mut k[STAGES]);
            // error norm
            let mut e5 = 0.0;
            let mut e3 = 0.0;
            for i in 0..n {
                let sc = self.atol + y[i].abs().max(y_new[i].abs()) * self.rtol;
                let mut a5 = 0.0;
                let mut a3 = 0.0;
                for (s, ks) in k.iter().enumerate().take(STAGES + 1) {
                    a5 += E5[s] * ks[i];
                    a3 += E3[s] * ks[i];
                }
                e5 += (a5 / sc).powi(2);
                e3 += (a3 / sc).powi(2);
            }
            let err = if e5 == 0.0 && e3 == 0.0 {
                0.0
            } else {
                h * e5 / ((e5 + 0.01 * e3) * n as f64).sqrt()
            };
            if err >= 1.0 || !err.is_finite() {
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-1.0 / 8.0)).max(0.2)
                } else {
                    0.2
                };
                h *= fac;
                step_rejected = true;
                out.rejected += 1;
                continue;
            }
            let mut fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-1.0 / 8.0)).min(10.0)
            };
            if step_rejected {
                fac = fac.min(1.0);
            }
            step_rejected = false;

            let dense = if self.dense {
                Some(self.dense_step(&mut f, &mut k, t, hs, &y, &y_new))
            } else {
                None
            };
            let t_new = if (t_end - (t + hs)).abs() <= 1e-14 * t_end.abs().max(1.0) {
                t_end
            } else {
                t + hs
            };
            let before = y_new.clone();
            project(&mut y_new);
            if before != y_new {
                f(t_new, &y_new, &mut fcur);
            } else {
                fcur.copy_from_slice(&k[STAGES]);
            }
            out.steps += 1;
            let ctrl = observer(&StepInfo {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_new,
                dense: dense.as_ref(),
            });
            std::mem::swap(&mut y, &mut y_new);
            t = t_new;
            if partial.len() < 20_000 {
                partial.push((t, y.clone()));
            }
            if ctrl == Control::Stop {
                out.stopped = true;
                break;
            }
            if t == t_end {
                break;
            }
            h *= fac;
        }
        out.t = t;
        out.y = y;
        Ok(out)
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], f0: &[f64], dir: f64, span: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let sc: Vec<f64> = y.iter().map(|v| self.atol + v.abs() * self.rtol).collect();
        let d0 = rms(y.iter().zip(&sc).map(|(a, s)| a / s), n);
        let d1 = rms(f0.iter().zip(&sc).map(|(a, s)| a / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
        let mut f1 = vec![0.0; n];
        f(t + dir * h0, &y1, &mut f1);
        let d2 = rms(
            f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| (a - b) / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(span).min(self.h_max)
    }

    fn dense_step<F>(&self, f: &mut F, k: &mut [Vec<f64>], t: f64, hs: f64, y: &[f64], y_new: &[f64]) -> DenseStep
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let mut tmp = vec![0.0; n];
        for s in STAGES + 1..STAGES_EXT {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                tmp[i] = y[i] + hs * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            f(t + C[s] * hs, &tmp, &mut tail[0]);
        }
        let mut fs: [Vec<f64>; 7] = Default::default();
        let f_old = &k[0];
        let f_new = &k[STAGES];
        fs[0] = (0..n).map(|i| y_new[i] - y[i]).collect();
        fs[1] = (0..n).map(|i| hs * f_old[i] - fs[0][i]).collect();
        fs[2] = (0..n)
            .map(|i| 2.0 * fs[0][i] - hs * (f_new[i] + f_old[i]))
            .collect();
        for (r, drow) in D.iter().enumerate() {
            fs[3 + r] = (0..n)
                .map(|i| hs * drow.iter().zip(k.iter()).map(|(d, ks)| d * ks[i]).sum::<f64>())
                .collect();
        }
        DenseStep {
            t_old: t,
            h: hs,
            y_old: y.to_vec(),
            f: fs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let tau = std::f64::consts::TAU;
        let out = Dop853::new(1e-12)
            .integrate(harmonic, |_| {}, 0.0, &[1.0, 0.0], tau, |_| Control::Continue)
            .unwrap();
        assert_eq!(out.t, tau);
        assert!((out.y[0] - 1.0).abs() < 1e-10 && out.y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let out = Dop853::new(1e-12)
            .integrate(harmonic, |_| {}, 0.0, &[1.0, 0.0], -1.0, |_| Control::Continue)
            .unwrap();
        assert!((out.y[0] - 1f64.cos()).abs() < 1e-10);
        assert!((out.y[1] - 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_matches_solution_inside_steps() {
        let mut worst: f64 = 0.0;
        Dop853::new(1e-11)
            .with_dense()
            .integrate(harmonic, |_| {}, 0.0, &[1.0, 0.0], 10.0, |s| {
                let d = s.dense.unwrap();
                let mut y = [0.0; 2];
                for q in 1..10 {
                    let t = s.t0 + (s.t1 - s.t0) * q as f64 / 10.0;
                    d.eval(t, &mut y);
                    worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
                }
                Control::Continue
            })
            .unwrap();
        assert!(worst < 1e-9, "dense error {worst}");
    }

    #[test]
    fn zero_span_is_identity() {
        let out = Dop853::new(1e-10)
            .integrate(harmonic, |_| {}, 2.0, &[0.3, 0.4], 2.0, |_| Control::Continue)
            .unwrap();
        assert_eq!(out.y, vec![0.3, 0.4]);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn stiff_blowup_reports_partial_trajectory() {
        let r = Dop853::new(1e-10).integrate(
            |_, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            |_| {},
            0.0,
            &[1.0],
            2.0,
            |_| Control::Continue,
        );
        match r {
            Err(Error::Integration { partial, t, .. }) => {
                assert!(t < 1.0 + 1e-6 && !partial.is_empty(), "{t}");
            }
            Err(e) => panic!("{e}"),
            Ok(o) => panic!("finished at {} with {:?}", o.t, o.y),
        }
    }
}
