//! Regularized empirical minimax solver.
//!
//! Each histogram expert faces `min over y in Y of max over lambda in
//! [0, lambda_max]` of the empirical average of the regularized Lagrangian
//! over its matched sample. The scalar dual admits an exact inner
//! maximization, which turns the outer problem into an ordinary convex
//! minimization solved by projected gradient descent with backtracking.

use crate::error::{Error, Result};
use crate::model::{project_decision, LossSpec, ProblemGeometry};

/// Default solver tolerance on the iterate step norm.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 10_000;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// The empirical objective one expert minimaxes: a matched sample, the loss
/// pair, and the regularization weight `rho = 1/n + 1/h + 1/k`.
pub struct EmpiricalObjective<'a> {
    pub points: Vec<&'a [f64]>,
    /// Positive multiplicities; repeated observations collapse to one
    /// weighted point without changing any sample mean.
    pub weights: Vec<f64>,
    pub total_weight: f64,
    pub spec: &'a LossSpec,
    pub geometry: &'a ProblemGeometry,
    pub rho: f64,
}

/// Result of a saddle solve.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    pub y: Vec<f64>,
    pub lambda: f64,
    pub value: f64,
    pub iterations: usize,
    /// Last step norm; at most the tolerance when `converged` is set.
    pub residual: f64,
    pub converged: bool,
}

impl<'a> EmpiricalObjective<'a> {
    pub fn new(
        points: Vec<&'a [f64]>,
        spec: &'a LossSpec,
        geometry: &'a ProblemGeometry,
        rho: f64,
    ) -> Result<Self> {
        let weights = vec![1.0; points.len()];
        Self::new_weighted(points, weights, spec, geometry, rho)
    }

    pub fn new_weighted(
        points: Vec<&'a [f64]>,
        weights: Vec<f64>,
        spec: &'a LossSpec,
        geometry: &'a ProblemGeometry,
        rho: f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("empirical objective needs a nonempty sample".into()));
        }
        if rho < 0.0 {
            return Err(Error::Config("rho must be nonnegative".into()));
        }
        if weights.len() != points.len() || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("sample weights must be positive, one per point".into()));
        }
        let total_weight = weights.iter().sum();
        Ok(EmpiricalObjective {
            points,
            weights,
            total_weight,
            spec,
            geometry,
            rho,
        })
    }

    /// Sample means of `u` and `c` at `y`.
    pub fn means(&self, y: &[f64]) -> (f64, f64) {
        let mut u = 0.0;
        let mut c = 0.0;
        for (x, &w) in self.points.iter().zip(&self.weights) {
            u += w * self.spec.main_loss(y, x);
            c += w * self.spec.constraint_loss(y, x);
        }
        (u / self.total_weight, c / self.total_weight)
    }

    /// Sample means and mean gradients at `y` in one pass.
    pub fn stats(&self, y: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let m = y.len();
        let mut u = 0.0;
        let mut c = 0.0;
        let mut gu = vec![0.0; m];
        let mut gc = vec![0.0; m];
        for (x, &w) in self.points.iter().zip(&self.weights) {
            u += w * self.spec.main_loss(y, x);
            c += w * self.spec.constraint_loss(y, x);
            for (acc, g) in gu.iter_mut().zip(self.spec.main_gradient(y, x)) {
                *acc += w * g;
            }
            for (acc, g) in gc.iter_mut().zip(self.spec.constraint_gradient(y, x)) {
                *acc += w * g;
            }
        }
        let n = self.total_weight;
        gu.iter_mut().for_each(|g| *g /= n);
        gc.iter_mut().for_each(|g| *g /= n);
        (u / n, c / n, gu, gc)
    }

    /// Exact maximizer of `lambda * (c_bar - gamma) - rho * lambda^2` over
    /// `[0, lambda_max]` given the sample mean constraint loss at `y`.
    pub fn inner_lambda_from_mean(&self, c_mean: f64) -> f64 {
        let slack = c_mean - self.geometry.gamma;
        if self.rho > 0.0 {
            (slack / (2.0 * self.rho)).clamp(0.0, self.geometry.lambda_max)
        } else if slack > 0.0 {
            self.geometry.lambda_max
        } else {
            // ties (slack == 0) resolve to 0, matching complementary slackness
            0.0
        }
    }

    /// Exact inner maximizer at `y`.
    pub fn inner_lambda(&self, y: &[f64]) -> f64 {
        let (_, c_mean) = self.means(y);
        self.inner_lambda_from_mean(c_mean)
    }

    /// `g(y) = u_bar(y) + rho ||y||^2 + max_lambda [lambda (c_bar(y) - gamma) - rho lambda^2]`.
    fn g_from_means(&self, y: &[f64], u_mean: f64, c_mean: f64) -> f64 {
        let lam = self.inner_lambda_from_mean(c_mean);
        let y_norm2: f64 = y.iter().map(|v| v * v).sum();
        u_mean + self.rho * y_norm2 + lam * (c_mean - self.geometry.gamma) - self.rho * lam * lam
    }

    pub fn g_value(&self, y: &[f64]) -> f64 {
        let (u_mean, c_mean) = self.means(y);
        self.g_from_means(y, u_mean, c_mean)
    }

    /// Envelope gradient `grad g(y) = grad u_bar + 2 rho y + lambda*(y) grad c_bar`.
    pub fn g_gradient(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (u_mean, c_mean, gu, gc) = self.stats(y);
        let lam = self.inner_lambda_from_mean(c_mean);
        let mut grad = gu;
        for (i, g) in grad.iter_mut().enumerate() {
            *g += 2.0 * self.rho * y[i] + lam * gc[i];
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient {grad:?} at y={y:?}")));
        }
        Ok((self.g_from_means(y, u_mean, c_mean), grad))
    }

    /// Projected gradient descent on `g` with backtracking line search
    /// (halving from 1.0, Armijo constant 1e-4). `warm_start` seeds the
    /// iterate; the default start is the projection of the origin.
    pub fn solve_saddle(
        &self,
        tol: f64,
        max_iters: usize,
        warm_start: Option<&[f64]>,
    ) -> Result<SaddlePoint> {
        let mut y = match warm_start {
            Some(w) => project_decision(w, self.geometry)?.0,
            None => default_prediction(self.geometry)?.0 .0,
        };
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for iter in 1..=max_iters {
            iterations = iter;
            let (g_y, grad) = self.g_gradient(&y)?;
            let mut step = 1.0;
            let mut y_next = y.clone();
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = y
                    .iter()
                    .zip(&grad)
                    .map(|(&yi, &gi)| yi - step * gi)
                    .collect();
                let trial = project_decision(&trial, self.geometry)?.0;
                let decrement: f64 = grad
                    .iter()
                    .zip(trial.iter().zip(&y))
                    .map(|(&gi, (&ti, &yi))| gi * (ti - yi))
                    .sum();
                let g_trial = self.g_value(&trial);
                if g_trial <= g_y + ARMIJO_C * decrement {
                    y_next = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            residual = y
                .iter()
                .zip(&y_next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            y = y_next;
            if !accepted || residual <= tol {
                converged = residual <= tol;
                break;
            }
        }
        let (u_mean, c_mean) = self.means(&y);
        let lambda = self.inner_lambda_from_mean(c_mean);
        let value = self.g_from_means(&y, u_mean, c_mean);
        Ok(SaddlePoint {
            y,
            lambda,
            value,
            iterations,
            residual,
            converged,
        })
    }
}

/// The fixed fallback pair `(y_0, lambda_0)`: the projection of the origin
/// onto the decision set, and a zero dual. Used whenever a matched set is
/// empty or no context is available yet.
pub fn default_prediction(geometry: &ProblemGeometry) -> Result<(crate::model::Decision, f64)> {
    let origin = vec![0.0; geometry.decision_dim];
    Ok((project_decision(&origin, geometry)?, 0.0))
}
