//! Weighted nonlinear least squares (Levenberg-Marquardt) with box bounds
//! and deterministic multi-start.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITER: usize = 300;

/// Box constraint for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const FREE: Bound = Bound { lower: f64::NEG_INFINITY, upper: f64::INFINITY };
    pub const POSITIVE: Bound = Bound { lower: 1e-300, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma uncertainties from the inverse normal matrix.
    pub sigmas: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// Data and model for a least-squares problem.
pub struct Problem<'a, F> {
    pub model: F,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Per-point standard deviations.
    pub sigma: &'a [f64],
    pub bounds: &'a [Bound],
    /// Scale the covariance by the reduced chi-square (use when `sigma` is
    /// only a relative weighting).
    pub scale_covariance: bool,
}

impl<F: Fn(&[f64], f64) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(self.sigma).map(|((&x, &y), &s)| (y - (self.model)(p, x)) / s),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.x.len();
        let mut jac = DMatrix::zeros(n, p.len());
        let mut work = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-7 * p[j].abs().max(1e-3);
            let (lo, hi) = (self.bounds[j].clamp(p[j] - h), self.bounds[j].clamp(p[j] + h));
            if hi == lo {
                continue;
            }
            work[j] = hi;
            let fp: Vec<f64> = self.x.iter().map(|&x| (self.model)(&work, x)).collect();
            work[j] = lo;
            for (i, &x) in self.x.iter().enumerate() {
                jac[(i, j)] = (fp[i] - (self.model)(&work, x)) / ((hi - lo) * self.sigma[i]);
            }
            work[j] = p[j];
        }
        jac
    }

    /// Single Levenberg-Marquardt descent from `start`.
    pub fn solve(&self, start: &[f64]) -> Result<FitResult> {
        let np = start.len();
        if self.x.len() != self.y.len() || self.x.len() != self.sigma.len() || self.bounds.len() != np {
            return Err(Error::Domain("inconsistent fit problem dimensions".into()));
        }
        if self.x.len() <= np {
            return Err(Error::Domain(format!("{} points cannot determine {np} parameters", self.x.len())));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Domain("standard deviations must be positive".into()));
        }
        let mut p: Vec<f64> = start.iter().zip(self.bounds).map(|(v, b)| b.clamp(*v)).collect();
        let mut r = self.residuals(&p);
        let mut chi2 = r.norm_squared();
        if !chi2.is_finite() {
            return Err(Error::Domain("model is not finite at the starting point".into()));
        }
        let mut lambda = 1e-3;
        let mut iterations = 0;
        for it in 0..MAX_ITER {
            iterations = it + 1;
            let jac = self.jacobian(&p);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &r;
            let mut improved = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for k in 0..np {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
                }
                let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = p.iter().zip(step.iter()).zip(self.bounds).map(|((v, d), b)| b.clamp(v + d)).collect();
                let r_trial = self.residuals(&trial);
                let chi2_trial = r_trial.norm_squared();
                if chi2_trial.is_finite() && chi2_trial <= chi2 {
                    let gain = chi2 - chi2_trial;
                    let moved = trial.iter().zip(&p).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1e-300));
                    p = trial;
                    r = r_trial;
                    chi2 = chi2_trial;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = moved && gain > 1e-12 * chi2.max(1e-300);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let jac = self.jacobian(&p);
        let dof = self.x.len() - np;
        let normal = jac.transpose() * &jac;
        // parameters the data cannot constrain get zero variance from the pseudo-inverse
        let mut covariance = match normal.clone().try_inverse() {
            Some(c) if c.iter().all(|v| v.is_finite()) => c,
            _ => {
                let eps = 1e-12 * normal.amax();
                normal.pseudo_inverse(eps).map_err(|_| Error::FitFailure { starts: 1, best_residual: chi2 })?
            }
        };
        if self.scale_covariance {
            covariance *= chi2 / dof as f64;
        }
        let sigmas = (0..np).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();
        Ok(FitResult { params: p, sigmas, covariance, chi2, dof, iterations })
    }

    /// Runs [`solve`](Self::solve) from each start and keeps the lowest chi-square.
    pub fn solve_multistart(&self, starts: &[Vec<f64>]) -> Result<FitResult> {
        let mut best: Option<FitResult> = None;
        for s in starts {
            if let Ok(fit) = self.solve(s) {
                if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                    best = Some(fit);
                }
            }
        }
        best.ok_or(Error::FitFailure { starts: starts.len(), best_residual: f64::INFINITY })
    }
}

/// Five deterministic starts: the heuristic guess and scaled perturbations.
pub fn perturbed_starts(guess: &[f64], bounds: &[Bound]) -> Vec<Vec<f64>> {
    const FACTORS: [f64; 5] = [1.0, 0.5, 2.0, 0.75, 1.5];
    FACTORS
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            guess
                .iter()
                .zip(bounds)
                .enumerate()
                // alternate the direction per parameter so starts are not collinear
                .map(|(j, (v, b))| b.clamp(if (j + k) % 2 == 0 { v * f } else { v / f }))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential_exactly() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * (-t / 1.7).exp() + 0.2).collect();
        let sigma = vec![0.01; x.len()];
        let bounds = [Bound::POSITIVE, Bound::POSITIVE, Bound::FREE];
        let problem = Problem {
            model: |p: &[f64], t: f64| p[0] * (-t / p[1]).exp() + p[2],
            x: &x,
            y: &y,
            sigma: &sigma,
            bounds: &bounds,
            scale_covariance: false,
        };
        let fit = problem.solve_multistart(&perturbed_starts(&[1.0, 1.0, 0.0], &bounds)).unwrap();
        assert!((fit.params[0] - 3.0).abs() < 1e-6 && (fit.params[1] - 1.7).abs() < 1e-6, "{fit:?}");
        assert!(fit.chi2 < 1e-10);
    }

    #[test]
    fn bounds_are_respected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|t| -2.0 + 0.0 * t).collect();
        let sigma = vec![1.0; x.len()];
        let bounds = [Bound::new(0.0, 10.0)];
        let problem = Problem { model: |p: &[f64], _t: f64| p[0], x: &x, y: &y, sigma: &sigma, bounds: &bounds, scale_covariance: false };
        let fit = problem.solve(&[5.0]).unwrap();
        assert_eq!(fit.params[0], 0.0);
    }
}
