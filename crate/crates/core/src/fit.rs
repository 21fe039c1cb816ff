//! Least-squares fit of the cross-correlation decay `1 + B exp(-tau^2 / tau_c^2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::Estimate;

pub const MAX_ITERATIONS: u32 = 200;
const GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weights `1 / std_error^2`.
    #[default]
    InverseVariance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub b: f64,
    /// Seconds.
    pub tau_c: f64,
    /// `sqrt(sum w r^2)` at the optimum.
    pub residual_norm: f64,
    /// Covariance of `(B, tau_c)`.
    pub covariance: [[f64; 2]; 2],
    pub iterations: u32,
}

impl DecayFit {
    pub fn model(&self, tau: f64) -> f64 {
        decay_model(tau, self.b, self.tau_c)
    }

    pub fn std_errors(&self) -> (f64, f64) {
        (self.covariance[0][0].sqrt(), self.covariance[1][1].sqrt())
    }
}

pub fn decay_model(tau: f64, b: f64, tau_c: f64) -> f64 {
    1.0 + b * (-(tau / tau_c).powi(2)).exp()
}

struct Problem {
    tau: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    uniform: bool,
    /// tau_c is optimized as `s * tau_scale` to keep the normal matrix balanced.
    tau_scale: f64,
}

impl Problem {
    fn objective(&self, b: f64, s: f64) -> f64 {
        self.tau
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| w * (y - decay_model(t, b, s * self.tau_scale)).powi(2))
            .sum()
    }

    /// Returns `(J^T W J, J^T W r)` with `r = y - model`.
    fn normal_equations(&self, b: f64, s: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for ((&t, &y), &w) in self.tau.iter().zip(&self.y).zip(&self.w) {
            let x = t / (s * self.tau_scale);
            let e = (-x * x).exp();
            let r = y - 1.0 - b * e;
            let j = [e, 2.0 * b * e * x * x / s];
            for a in 0..2 {
                jtr[a] += w * j[a] * r;
                for c in 0..2 {
                    jtj[a][c] += w * j[a] * j[c];
                }
            }
        }
        (jtj, jtr)
    }
}

fn solve2(m: [[f64; 2]; 2], v: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([(m[1][1] * v[0] - m[0][1] * v[1]) / det, (m[0][0] * v[1] - m[1][0] * v[0]) / det])
}

fn invert2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let c0 = solve2(m, [1.0, 0.0])?;
    let c1 = solve2(m, [0.0, 1.0])?;
    Some([[c0[0], c1[0]], [c0[1], c1[1]]])
}

/// Initial `(B, tau_c)`: amplitude from the largest point, width from the
/// first crossing of half amplitude.
fn initial_guess(tau: &[f64], y: &[f64]) -> (f64, f64) {
    let mut order: Vec<usize> = (0..tau.len()).collect();
    order.sort_by(|&i, &j| tau[i].total_cmp(&tau[j]));
    let b0 = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
    let half = 1.0 + b0 / 2.0;
    let mut tau_half = None;
    for pair in order.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        if y[i] >= half && y[j] < half {
            let f = (y[i] - half) / (y[i] - y[j]);
            tau_half = Some(tau[i] + f * (tau[j] - tau[i]));
            break;
        }
    }
    let tau_max = tau[*order.last().unwrap()];
    let tau_half = tau_half.unwrap_or(tau_max).max(tau_max * 1e-3);
    (b0, tau_half / std::f64::consts::LN_2.sqrt())
}

/// Fits `1 + B exp(-tau^2 / tau_c^2)` to `(tau seconds, g_si)` points by
/// damped Gauss-Newton.
pub fn fit_memory_decay(points: &[(f64, Estimate)], weighting: Weighting) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate("need at least 3 points"));
    }
    let mut taus: Vec<f64> = points.iter().map(|p| p.0).collect();
    if points.iter().any(|(t, e)| !t.is_finite() || *t < 0.0 || !e.value.is_finite()) {
        return Err(Error::Degenerate("non-finite point"));
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    if taus.len() < 3 {
        return Err(Error::Degenerate("need at least 3 distinct delays"));
    }
    let y: Vec<f64> = points.iter().map(|p| p.1.value).collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Degenerate("constant data: tau_c is unidentifiable"));
    }
    let w = match weighting {
        Weighting::Uniform => vec![1.0; points.len()],
        Weighting::InverseVariance => points
            .iter()
            .map(|(_, e)| {
                if e.std_error > 0.0 && e.std_error.is_finite() {
                    Ok(e.std_error.powi(-2))
                } else {
                    Err(Error::Domain {
                        name: "std_error",
                        value: e.std_error,
                        domain: "(0, inf) for weighted fits",
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let tau = points.iter().map(|p| p.0).collect::<Vec<_>>();
    let (b0, tau_c0) = initial_guess(&tau, &y);
    let prob = Problem {
        tau_scale: *taus.last().unwrap(),
        tau,
        y,
        w,
        uniform: weighting == Weighting::Uniform,
    };

    let (mut b, mut s) = (b0, tau_c0 / prob.tau_scale);
    let mut f = prob.objective(b, s);
    let scale = {
        let wy: f64 = prob.y.iter().zip(&prob.w).map(|(y, w)| w * y * y).sum::<f64>().sqrt();
        let wj: f64 = prob.w.iter().sum::<f64>().sqrt() * (1.0 + b0.abs());
        (wy * wj).max(f64::MIN_POSITIVE)
    };
    let mut grad_norm = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        let (jtj, jtr) = prob.normal_equations(b, s);
        grad_norm = jtr[0].hypot(jtr[1]);
        if grad_norm < GRADIENT_TOL * scale {
            return finish(&prob, b, s, f, it);
        }
        let Some(step) = solve2(jtj, jtr) else { break };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-12 {
            let (nb, ns) = (b + lambda * step[0], s + lambda * step[1]);
            if ns > 0.0 {
                let nf = prob.objective(nb, ns);
                if nf <= f {
                    // A step that changes nothing representable means we sit
                    // on the optimum to machine precision.
                    let stalled = nb == b && ns == s;
                    (b, s, f) = (nb, ns, nf);
                    accepted = !stalled;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if grad_norm < 1e-6 * scale {
                return finish(&prob, b, s, f, it);
            }
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS as usize,
        gradient_norm: grad_norm,
    })
}

fn finish(prob: &Problem, b: f64, s: f64, f: f64, iterations: u32) -> Result<DecayFit> {
    let (jtj, _) = prob.normal_equations(b, s);
    let inv = invert2(jtj).ok_or(Error::Degenerate("singular normal matrix at optimum"))?;
    let n = prob.y.len();
    // Without weights the residual variance is estimated from the fit.
    let sigma2 = if prob.uniform && n > 2 {
        f / (n - 2) as f64
    } else {
        1.0
    };
    // Map the covariance of (B, s) to (B, tau_c = s * tau_scale).
    let k = prob.tau_scale;
    let covariance = [
        [sigma2 * inv[0][0], sigma2 * inv[0][1] * k],
        [sigma2 * inv[1][0] * k, sigma2 * inv[1][1] * k * k],
    ];
    Ok(DecayFit {
        b,
        tau_c: s * k,
        residual_norm: f.sqrt(),
        covariance,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn est(value: f64, std_error: f64) -> Estimate {
        Estimate {
            value,
            std_error,
            n_samples: 0,
        }
    }

    fn grid(n: usize, tau_max: f64) -> Vec<f64> {
        (0..n).map(|i| tau_max * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_recovery() {
        let pts: Vec<_> = grid(12, 80e-6)
            .into_iter()
            .map(|t| (t, est(decay_model(t, 16.0, 31.5e-6), 0.0)))
            .collect();
        let fit = fit_memory_decay(&pts, Weighting::Uniform).unwrap();
        assert!((fit.b / 16.0 - 1.0).abs() < 1e-9);
        assert!((fit.tau_c / 31.5e-6 - 1.0).abs() < 1e-9);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn weighted_needs_positive_errors() {
        let pts: Vec<_> = grid(5, 80e-6)
            .into_iter()
            .map(|t| (t, est(decay_model(t, 16.0, 31.5e-6), 0.0)))
            .collect();
        assert!(matches!(fit_memory_decay(&pts, Weighting::InverseVariance), Err(Error::Domain { .. })));
    }

    #[test]
    fn noisy_recovery_and_error_bars() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.03).unwrap();
        let mut pulls = Vec::new();
        for _ in 0..50 {
            let pts: Vec<_> = grid(20, 80e-6)
                .into_iter()
                .map(|t| {
                    let m = decay_model(t, 16.0, 31.5e-6);
                    (t, est(m * (1.0 + noise.sample(&mut rng)), 0.03 * m))
                })
                .collect();
            let fit = fit_memory_decay(&pts, Weighting::InverseVariance).unwrap();
            assert!((fit.tau_c / 31.5e-6 - 1.0).abs() < 0.05);
            pulls.push((fit.tau_c - 31.5e-6) / fit.std_errors().1);
        }
        let rms = (pulls.iter().map(|p| p * p).sum::<f64>() / pulls.len() as f64).sqrt();
        assert!(rms > 0.6 && rms < 1.5, "rms pull {rms}");
    }

    #[test]
    fn constant_data_is_degenerate() {
        let pts: Vec<_> = grid(6, 1e-5).into_iter().map(|t| (t, est(1.0, 0.1))).collect();
        assert!(matches!(fit_memory_decay(&pts, Weighting::InverseVariance), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_points() {
        let pts = [(0.0, est(17.0, 1.0)), (1e-5, est(15.0, 1.0)), (1e-5, est(14.0, 1.0))];
        assert!(matches!(fit_memory_decay(&pts, Weighting::Uniform), Err(Error::Degenerate(_))));
        assert!(fit_memory_decay(&pts[..2], Weighting::Uniform).is_err());
    }

    #[test]
    fn initial_guess_from_half_amplitude() {
        let tau = grid(200, 100e-6);
        let y: Vec<f64> = tau.iter().map(|&t| decay_model(t, 16.0, 31.5e-6)).collect();
        let (b0, tc0) = initial_guess(&tau, &y);
        assert_eq!(b0, 16.0);
        assert!((tc0 / 31.5e-6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn starts_far_from_optimum() {
        // Only the tail is sampled, so the half-amplitude guess is poor.
        let pts: Vec<_> = grid(10, 60e-6)
            .into_iter()
            .map(|t| t + 20e-6)
            .map(|t| (t, est(decay_model(t, 16.0, 31.5e-6), 0.0)))
            .collect();
        let fit = fit_memory_decay(&pts, Weighting::Uniform).unwrap();
        assert!((fit.tau_c / 31.5e-6 - 1.0).abs() < 1e-9);
    }
}
