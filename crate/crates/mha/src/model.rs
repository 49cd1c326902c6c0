//! Problem geometry, loss contracts and the instantaneous Lagrangian.
//!
//! Everything downstream (partitions, experts, aggregator, oracle) consumes
//! the types defined here. All values are immutable after construction and
//! all operations are pure.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for set-membership checks (double-precision noise floor).
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Convex compact decision sets with exact Euclidean projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionSet {
    /// Axis-aligned box with per-coordinate bounds.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Probability simplex `{ y >= 0, sum y = 1 }`.
    Simplex,
}

/// Geometry of one problem instance: the observation cube `[-D, D]^d`,
/// the decision set `Y` in `R^m`, the dual interval `[0, lambda_max]`
/// and the constraint threshold `gamma`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemGeometry {
    /// Observation dimension `d`.
    pub obs_dim: usize,
    /// Half-width `D` of the observation cube.
    pub obs_half_width: f64,
    /// Decision dimension `m`.
    pub decision_dim: usize,
    pub decision_set: DecisionSet,
    /// Upper end of the dual interval.
    pub lambda_max: f64,
    /// Constraint threshold.
    pub gamma: f64,
}

impl ProblemGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.decision_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if !(self.obs_half_width > 0.0) {
            return Err(Error::Config("D must be positive".into()));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::Config("lambda_max must be positive".into()));
        }
        match &self.decision_set {
            DecisionSet::Box { lower, upper } => {
                if lower.len() != self.decision_dim || upper.len() != self.decision_dim {
                    return Err(Error::Config(
                        "box bounds must match the decision dimension".into(),
                    ));
                }
                for (lo, hi) in lower.iter().zip(upper) {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::Config("box bounds must be finite with lo <= hi".into()));
                    }
                }
            }
            DecisionSet::Simplex => {}
        }
        Ok(())
    }

    /// True when every coordinate of `x` lies in `[-D, D]` and the length matches `d`.
    pub fn contains_observation(&self, x: &[f64]) -> bool {
        x.len() == self.obs_dim
            && x.iter()
                .all(|&v| v >= -self.obs_half_width && v <= self.obs_half_width)
    }
}

/// One sample of the observation process; a point in `[-D, D]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn new(coords: Vec<f64>, geometry: &ProblemGeometry) -> Result<Self> {
        if !geometry.contains_observation(&coords) {
            return Err(Error::OutOfRange(format!("{coords:?}")));
        }
        Ok(Observation(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// A point inside the decision set `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision(pub Vec<f64>);

impl Decision {
    pub fn new(y: Vec<f64>, geometry: &ProblemGeometry) -> Result<Self> {
        let projected = project_decision(&y, geometry)?;
        let dist2: f64 = y
            .iter()
            .zip(&projected.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist2.sqrt() > FEASIBILITY_TOL {
            return Err(Error::Config(format!(
                "decision {y:?} lies outside the decision set (distance {})",
                dist2.sqrt()
            )));
        }
        Ok(Decision(y))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// The scalar dual variable, confined to `[0, lambda_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVar(pub f64);

impl DualVar {
    pub fn new(lambda: f64, geometry: &ProblemGeometry) -> Result<Self> {
        if !(0.0..=geometry.lambda_max).contains(&lambda) {
            return Err(Error::Config(format!(
                "lambda {lambda} outside [0, {}]",
                geometry.lambda_max
            )));
        }
        Ok(DualVar(lambda))
    }
}

pub type LossFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// The pair of loss functions `(u, c)`, both continuous and convex in the
/// decision for every fixed observation, with optional analytic gradients in
/// the decision. When a gradient is absent, central finite differences with
/// step `1e-6 * (1 + ||y||)` are used.
#[derive(Clone)]
pub struct LossSpec {
    pub main: LossFn,
    pub constraint: LossFn,
    pub main_grad: Option<GradFn>,
    pub constraint_grad: Option<GradFn>,
    /// Human-readable tag for traces and summaries.
    pub name: String,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec").field("name", &self.name).finish()
    }
}

fn finite_difference(f: &LossFn, y: &[f64], x: &[f64]) -> Vec<f64> {
    let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = 1e-6 * (1.0 + norm);
    let mut grad = vec![0.0; y.len()];
    let mut probe = y.to_vec();
    for i in 0..y.len() {
        probe[i] = y[i] + step;
        let hi = f(&probe, x);
        probe[i] = y[i] - step;
        let lo = f(&probe, x);
        probe[i] = y[i];
        grad[i] = (hi - lo) / (2.0 * step);
    }
    grad
}

impl LossSpec {
    pub fn main_loss(&self, y: &[f64], x: &[f64]) -> f64 {
        (self.main)(y, x)
    }

    pub fn constraint_loss(&self, y: &[f64], x: &[f64]) -> f64 {
        (self.constraint)(y, x)
    }

    pub fn main_gradient(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        match &self.main_grad {
            Some(g) => g(y, x),
            None => finite_difference(&self.main, y, x),
        }
    }

    pub fn constraint_gradient(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        match &self.constraint_grad {
            Some(g) => g(y, x),
            None => finite_difference(&self.constraint, y, x),
        }
    }
}

/// Instantaneous Lagrangian `l(y, lambda, x) = u(y,x) + lambda * (c(y,x) - gamma)`.
pub fn lagrangian(spec: &LossSpec, y: &[f64], lambda: f64, x: &[f64], gamma: f64) -> Result<f64> {
    let u = spec.main_loss(y, x);
    let c = spec.constraint_loss(y, x);
    let value = u + lambda * (c - gamma);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "l(y, lambda, x) = {value} at y={y:?}, lambda={lambda}, x={x:?}"
        )));
    }
    Ok(value)
}

/// Lagrangian plus the strictly convex-concave regularizer
/// `rho * (||y||^2 - lambda^2)`.
pub fn regularized_lagrangian(
    spec: &LossSpec,
    y: &[f64],
    lambda: f64,
    x: &[f64],
    gamma: f64,
    rho: f64,
) -> Result<f64> {
    debug_assert!(rho >= 0.0);
    let base = lagrangian(spec, y, lambda, x, gamma)?;
    let y_norm2: f64 = y.iter().map(|v| v * v).sum();
    Ok(base + rho * (y_norm2 - lambda * lambda))
}

/// Euclidean projection onto the decision set. Idempotent; returns `v`
/// unchanged when already feasible.
pub fn project_decision(v: &[f64], geometry: &ProblemGeometry) -> Result<Decision> {
    if v.len() != geometry.decision_dim {
        return Err(Error::Config(format!(
            "vector of length {} projected onto a {}-dimensional set",
            v.len(),
            geometry.decision_dim
        )));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("non-finite vector {v:?}")));
    }
    let projected = match &geometry.decision_set {
        DecisionSet::Box { lower, upper } => v
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&c, (&lo, &hi))| c.clamp(lo, hi))
            .collect(),
        DecisionSet::Simplex => project_simplex(v),
    };
    Ok(Decision(projected))
}

// Sort-based simplex projection (Held/Wolfe/Crowder pivot rule).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&c| (c - theta).max(0.0)).collect()
}
