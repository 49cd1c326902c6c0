//! Independent computation of the feasible optimal value and the optimal
//! dual for processes with computable conditional laws.
//!
//! For an i.i.d. process the conditional law given the past collapses to the
//! marginal; for an order-1 Markov chain it is the transition row of the
//! previous state, with the outer expectation weighted by the stationary
//! law. Each conditioning state is solved by dual bisection: for fixed
//! `lambda` the Lagrangian expectation is minimized over the decision set by
//! projected gradient, and `lambda` is bisected on the sign of the expected
//! constraint slack. A brute-force grid search cross-checks the value in low
//! dimension; a discrepancy fails the run loudly.

use crate::error::{Error, Result};
use crate::model::{project_decision, DecisionSet, LossSpec, ProblemGeometry};
use crate::process::Law;

const CONSTRAINT_TOL: f64 = 1e-6;
const INNER_TOL: f64 = 1e-8;
const INNER_MAX_ITERS: usize = 100_000;
const BISECTION_MAX_ITERS: usize = 200;
const CROSS_CHECK_TOL: f64 = 1e-3;

/// A finite conditional law: support points with probabilities.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    pub points: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn expect_u(&self, spec: &LossSpec, y: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * spec.main_loss(y, x))
            .sum()
    }

    pub fn expect_c(&self, spec: &LossSpec, y: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * spec.constraint_loss(y, x))
            .sum()
    }

    fn grad_lagrangian(&self, spec: &LossSpec, y: &[f64], lambda: f64) -> Vec<f64> {
        let mut grad = vec![0.0; y.len()];
        for (x, p) in self.points.iter().zip(&self.probs) {
            let gu = spec.main_gradient(y, x);
            let gc = spec.constraint_gradient(y, x);
            for i in 0..grad.len() {
                grad[i] += p * (gu[i] + lambda * gc[i]);
            }
        }
        grad
    }
}

/// Result for one conditioning state.
#[derive(Debug, Clone)]
pub struct StateResult {
    /// Stationary weight of this state (1 for i.i.d.).
    pub weight: f64,
    pub decision: Vec<f64>,
    pub lambda: f64,
    pub expected_u: f64,
    pub expected_c: f64,
    /// Bisection trace of `(lambda, E[c(y_lambda)])` pairs.
    pub trace: Vec<(f64, f64)>,
}

/// The feasible optimum: minimal expected main loss subject to the expected
/// constraint staying at or below the threshold, averaged over conditioning
/// states.
#[derive(Debug, Clone)]
pub struct FeasibleOptimum {
    /// The optimal value; meaningful only when `feasible` holds.
    pub value: f64,
    /// Stationary-weighted optimal dual.
    pub lambda_star: f64,
    pub per_state: Vec<StateResult>,
    pub feasible: bool,
}

fn minimize_for_lambda(
    law: &DiscreteLaw,
    spec: &LossSpec,
    geometry: &ProblemGeometry,
    lambda: f64,
    warm: &[f64],
) -> Result<Vec<f64>> {
    let mut y = project_decision(warm, geometry)?.0;
    let objective = |y: &[f64]| law.expect_u(spec, y) + lambda * law.expect_c(spec, y);
    for _ in 0..INNER_MAX_ITERS {
        let grad = law.grad_lagrangian(spec, &y, lambda);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("oracle gradient at y={y:?}")));
        }
        let f_y = objective(&y);
        let mut step = 1.0;
        let mut advanced = false;
        let mut y_next = y.clone();
        for _ in 0..60 {
            let trial: Vec<f64> = y.iter().zip(&grad).map(|(&a, &g)| a - step * g).collect();
            let trial = project_decision(&trial, geometry)?.0;
            let decrement: f64 = grad
                .iter()
                .zip(trial.iter().zip(&y))
                .map(|(&g, (&t, &a))| g * (t - a))
                .sum();
            if objective(&trial) <= f_y + 1e-4 * decrement {
                y_next = trial;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        let moved: f64 = y
            .iter()
            .zip(&y_next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        y = y_next;
        if !advanced || moved <= INNER_TOL {
            break;
        }
    }
    Ok(y)
}

fn solve_state(
    law: &DiscreteLaw,
    spec: &LossSpec,
    geometry: &ProblemGeometry,
    weight: f64,
) -> Result<(StateResult, bool)> {
    let gamma = geometry.gamma;
    let start = vec![0.0; geometry.decision_dim];
    let mut trace = Vec::new();

    let y_zero = minimize_for_lambda(law, spec, geometry, 0.0, &start)?;
    let c_zero = law.expect_c(spec, &y_zero);
    trace.push((0.0, c_zero));
    if c_zero <= gamma {
        // unconstrained optimum is already feasible
        let result = StateResult {
            weight,
            decision: y_zero.clone(),
            lambda: 0.0,
            expected_u: law.expect_u(spec, &y_zero),
            expected_c: c_zero,
            trace,
        };
        return Ok((result, true));
    }

    let y_max = minimize_for_lambda(law, spec, geometry, geometry.lambda_max, &y_zero)?;
    let c_max = law.expect_c(spec, &y_max);
    trace.push((geometry.lambda_max, c_max));
    if c_max - gamma > CONSTRAINT_TOL {
        // even the hardest allowed penalty cannot reach the threshold
        let result = StateResult {
            weight,
            decision: y_max.clone(),
            lambda: geometry.lambda_max,
            expected_u: law.expect_u(spec, &y_max),
            expected_c: c_max,
            trace,
        };
        return Ok((result, false));
    }

    let mut lo = 0.0;
    let mut hi = geometry.lambda_max;
    let mut y = y_max;
    let mut lambda = geometry.lambda_max;
    let mut c_val = c_max;
    for _ in 0..BISECTION_MAX_ITERS {
        // the slackness product lambda (E[c] - gamma) must close to
        // tolerance, so the residual target shrinks as lambda grows
        if (c_val - gamma).abs() * lambda.max(1.0) <= CONSTRAINT_TOL {
            break;
        }
        lambda = 0.5 * (lo + hi);
        y = minimize_for_lambda(law, spec, geometry, lambda, &y)?;
        c_val = law.expect_c(spec, &y);
        trace.push((lambda, c_val));
        if c_val > gamma {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    let result = StateResult {
        weight,
        decision: y.clone(),
        lambda,
        expected_u: law.expect_u(spec, &y),
        expected_c: c_val,
        trace,
    };
    Ok((result, true))
}

/// Enumerated feasible minimum over a coarse grid with a fine local
/// refinement; independent of the bisection path.
fn grid_feasible_minimum(
    law: &DiscreteLaw,
    spec: &LossSpec,
    geometry: &ProblemGeometry,
) -> Option<f64> {
    let coarse = grid_scan(law, spec, geometry, None, 1e-3)?;
    let refined = grid_scan(law, spec, geometry, Some((&coarse.1, 2e-3)), 1e-6);
    Some(refined.map(|r| r.0).unwrap_or(coarse.0))
}

fn grid_scan(
    law: &DiscreteLaw,
    spec: &LossSpec,
    geometry: &ProblemGeometry,
    window: Option<(&[f64], f64)>,
    step: f64,
) -> Option<(f64, Vec<f64>)> {
    let m = geometry.decision_dim;
    let ranges: Vec<(f64, f64)> = match &geometry.decision_set {
        DecisionSet::Box { lower, upper } => lower.iter().zip(upper).map(|(&a, &b)| (a, b)).collect(),
        DecisionSet::Simplex => vec![(0.0, 1.0); m],
    };
    let ranges: Vec<(f64, f64)> = match window {
        Some((center, radius)) => ranges
            .iter()
            .zip(center)
            .map(|(&(a, b), &c)| ((c - radius).max(a), (c + radius).min(b)))
            .collect(),
        None => ranges,
    };
    let counts: Vec<usize> = ranges
        .iter()
        .map(|(a, b)| ((b - a) / step).ceil() as usize + 1)
        .collect();
    if counts.iter().product::<usize>() > 50_000_000 {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; m];
    loop {
        let y: Vec<f64> = idx
            .iter()
            .zip(&ranges)
            .zip(&counts)
            .map(|((&i, &(a, b)), &c)| {
                if c == 1 {
                    a
                } else {
                    a + (b - a) * i as f64 / (c - 1) as f64
                }
            })
            .collect();
        let feasible_point = match &geometry.decision_set {
            DecisionSet::Box { .. } => true,
            DecisionSet::Simplex => {
                let sum: f64 = y.iter().sum();
                (sum - 1.0).abs() <= step
            }
        };
        if feasible_point && law.expect_c(spec, &y) <= geometry.gamma + CONSTRAINT_TOL {
            let value = law.expect_u(spec, &y);
            if best.as_ref().map(|(v, _)| value < *v).unwrap_or(true) {
                best = Some((value, y));
            }
        }
        // odometer increment
        let mut carry = true;
        for i in (0..m).rev() {
            if carry {
                idx[i] += 1;
                if idx[i] >= counts[i] {
                    idx[i] = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }
    best
}

/// Conditional laws with outer weights for the supported process families.
fn conditional_laws(law: &Law) -> Vec<(f64, DiscreteLaw)> {
    match law {
        Law::Iid { points, probs } => vec![(
            1.0,
            DiscreteLaw {
                points: points.clone(),
                probs: probs.clone(),
            },
        )],
        Law::Markov {
            states,
            transition,
            stationary,
        } => stationary
            .iter()
            .zip(transition)
            .map(|(&pi, row)| {
                (
                    pi,
                    DiscreteLaw {
                        points: states.clone(),
                        probs: row.clone(),
                    },
                )
            })
            .collect(),
    }
}

/// Solves the constrained problem per conditioning state and averages.
/// Infeasibility (no decision meets the threshold even at `lambda_max`) is an
/// explicit result, never a silent number.
pub fn solve_feasible_optimum(
    law: &Law,
    spec: &LossSpec,
    geometry: &ProblemGeometry,
) -> Result<FeasibleOptimum> {
    geometry.validate()?;
    let mut per_state = Vec::new();
    let mut feasible = true;
    let mut value = 0.0;
    let mut lambda_star = 0.0;
    for (weight, cond) in conditional_laws(law) {
        let (state, state_feasible) = solve_state(&cond, spec, geometry, weight)?;
        feasible &= state_feasible;
        value += weight * state.expected_u;
        lambda_star += weight * state.lambda;
        if state_feasible && geometry.decision_dim <= 2 {
            if let Some(grid_value) = grid_feasible_minimum(&cond, spec, geometry) {
                if (grid_value - state.expected_u).abs() > CROSS_CHECK_TOL {
                    return Err(Error::Numeric(format!(
                        "oracle cross-check mismatch: bisection {} vs grid {}",
                        state.expected_u, grid_value
                    )));
                }
            }
        }
        per_state.push(state);
    }
    Ok(FeasibleOptimum {
        value,
        lambda_star,
        per_state,
        feasible,
    })
}

/// `lambda* (E[c(y*)] - gamma) = 0` per conditioning state, to tolerance.
pub fn check_complementary_slackness(
    result: &FeasibleOptimum,
    geometry: &ProblemGeometry,
) -> bool {
    result
        .per_state
        .iter()
        .all(|s| (s.lambda * (s.expected_c - geometry.gamma)).abs() <= CONSTRAINT_TOL)
}
