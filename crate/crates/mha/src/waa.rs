//! The two simultaneous weak-aggregating-algorithm instances: exponential
//! weights with learning rate `1/sqrt(n)`, loss-minimizing on the decision
//! side and loss-maximizing on the dual side.
//!
//! Weights are computed in log-space and normalized by log-sum-exp, which is
//! observationally identical to the raw exponential form and cannot
//! under/overflow for finite losses.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Lower cumulative loss gets more weight.
    Decision,
    /// Higher cumulative loss gets more weight.
    Dual,
}

/// A normalized, strictly positive weight vector over experts.
#[derive(Debug, Clone)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Weights after `n >= 1` rounds: `log w_e = log alpha_e -/+ l_e / sqrt(n)`
/// with the sign set by the side, normalized to a probability vector.
pub fn update_weights(
    cumulative_losses: &[f64],
    alphas: &[f64],
    n: usize,
    side: Side,
) -> Result<WeightVector> {
    if cumulative_losses.len() != alphas.len() {
        return Err(Error::Config("loss and prior lengths differ".into()));
    }
    if n == 0 {
        return Err(Error::Config("weight update needs n >= 1".into()));
    }
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Config("prior weights must be strictly positive".into()));
    }
    let rate = 1.0 / (n as f64).sqrt();
    let sign = match side {
        Side::Decision => -1.0,
        Side::Dual => 1.0,
    };
    let log_w: Vec<f64> = alphas
        .iter()
        .zip(cumulative_losses)
        .map(|(&a, &l)| a.ln() + sign * rate * l)
        .collect();
    let norm = log_sum_exp(&log_w);
    Ok(WeightVector(log_w.iter().map(|lw| (lw - norm).exp()).collect()))
}

/// Convex combinations of the expert predictions under the two weight
/// vectors. The mixture decision stays in the (convex) decision set and the
/// mixture dual stays in `[0, lambda_max]` automatically.
pub fn aggregate(
    predictions: &[(Vec<f64>, f64)],
    decision_weights: &WeightVector,
    dual_weights: &WeightVector,
) -> (Vec<f64>, f64) {
    let m = predictions[0].0.len();
    let mut y = vec![0.0; m];
    let mut lambda = 0.0;
    for (e, (ye, le)) in predictions.iter().enumerate() {
        let py = decision_weights.0[e];
        for (acc, &v) in y.iter_mut().zip(ye) {
            *acc += py * v;
        }
        lambda += dual_weights.0[e] * le;
    }
    (y, lambda)
}
