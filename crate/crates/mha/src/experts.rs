//! The truncated grid of histogram experts plus the two constant experts.
//!
//! A grid expert `(k, h)` quantizes the last `k` observations at partition
//! level `h`, gathers every past round whose quantized window matches, and
//! plays the regularized empirical saddle point over that sample with
//! `rho = 1/n + 1/h + 1/k`. The two constant experts anchor the dual range:
//! one always plays `(y_0, lambda_max)`, the other `(y_0, 0)`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{LossSpec, ProblemGeometry};
use crate::partition::{quantize_window, ContextIndex, ContextString, PartitionFamily};
use crate::saddle::{default_prediction, EmpiricalObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpertId {
    Grid { k: usize, h: u32 },
    /// Always plays `(y_0, lambda_max)`.
    ConstMax,
    /// Always plays `(y_0, 0)`.
    ConstZero,
}

impl std::fmt::Display for ExpertId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpertId::Grid { k, h } => write!(f, "grid({k},{h})"),
            ExpertId::ConstMax => write!(f, "const_max"),
            ExpertId::ConstZero => write!(f, "const_zero"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: crate::saddle::DEFAULT_TOL,
            max_iters: crate::saddle::DEFAULT_MAX_ITERS,
        }
    }
}

/// Matched observations for one context, collapsed to distinct points with
/// multiplicities so solver passes cost `O(distinct)` instead of `O(matched)`.
#[derive(Debug, Default)]
struct WeightedSample {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    slots: HashMap<Vec<u64>, usize>,
}

impl WeightedSample {
    fn add(&mut self, x: &[f64]) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        match self.slots.entry(key) {
            std::collections::hash_map::Entry::Occupied(e) => self.weights[*e.get()] += 1.0,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(self.points.len());
                self.points.push(x.to_vec());
                self.weights.push(1.0);
            }
        }
    }
}

/// Mutable per-expert state: the context index, warm-start cache, the last
/// prediction pair and the two cumulative losses tracked by the aggregator.
#[derive(Debug)]
pub struct ExpertState {
    pub id: ExpertId,
    index: Option<ContextIndex>,
    /// Per-context compressed copy of the matched sample, grown one round
    /// at a time alongside the index.
    samples: HashMap<ContextString, WeightedSample>,
    rounds_consumed: usize,
    warm_starts: HashMap<ContextString, Vec<f64>>,
    pub last_prediction: (Vec<f64>, f64),
    /// `sum_i l(y^i_e, lambda_i, x_i)` — the expert's decision against the
    /// aggregate dual.
    pub cum_y_loss: f64,
    /// `sum_i l(y_i, lambda^i_e, x_i)` — the expert's dual against the
    /// aggregate decision.
    pub cum_lambda_loss: f64,
    pub solve_errors: usize,
}

impl ExpertState {
    pub fn new(id: ExpertId, geometry: &ProblemGeometry) -> Result<Self> {
        let (y0, _) = default_prediction(geometry)?;
        let lambda0 = match id {
            ExpertId::ConstMax => geometry.lambda_max,
            _ => 0.0,
        };
        let index = match id {
            ExpertId::Grid { k, h } => Some(ContextIndex::new(k, h)),
            _ => None,
        };
        Ok(ExpertState {
            id,
            index,
            samples: HashMap::new(),
            rounds_consumed: 0,
            warm_starts: HashMap::new(),
            last_prediction: (y0.0, lambda0),
            cum_y_loss: 0.0,
            cum_lambda_loss: 0.0,
            solve_errors: 0,
        })
    }

    /// Prediction pair for round `n` given the history `x_1 .. x_{n-1}`.
    ///
    /// A solver error is absorbed: the previous prediction is replayed and
    /// the error counted, so one bad solve cannot kill a long run.
    pub fn predict(
        &mut self,
        family: &PartitionFamily,
        history: &[Vec<f64>],
        n: usize,
        geometry: &ProblemGeometry,
        spec: &LossSpec,
        solver: &SolverConfig,
    ) -> Result<(Vec<f64>, f64)> {
        let (k, h) = match self.id {
            ExpertId::ConstMax | ExpertId::ConstZero => return Ok(self.last_prediction.clone()),
            ExpertId::Grid { k, h } => (k, h),
        };
        let index = self.index.as_mut().expect("grid expert has an index");
        index.sync(family, history)?;
        // mirror the index growth into the compressed per-context samples:
        // round i joins the context its preceding k-window quantizes to
        for i in (self.rounds_consumed + 1)..=history.len() {
            if let Some(w) = quantize_window(family, history, i, k, h)? {
                self.samples.entry(w).or_default().add(&history[i - 1]);
            }
        }
        self.rounds_consumed = history.len();
        let context = quantize_window(family, history, n, k, h)?;
        let sample = context.as_ref().and_then(|w| self.samples.get(w));
        let sample = match sample {
            Some(s) if !s.points.is_empty() => s,
            _ => {
                let (y0, _) = default_prediction(geometry)?;
                self.last_prediction = (y0.0, 0.0);
                return Ok(self.last_prediction.clone());
            }
        };
        let points: Vec<&[f64]> = sample.points.iter().map(|p| p.as_slice()).collect();
        let rho = 1.0 / n as f64 + 1.0 / h as f64 + 1.0 / k as f64;
        let objective =
            EmpiricalObjective::new_weighted(points, sample.weights.clone(), spec, geometry, rho)?;
        let context = context.expect("matched set implies a context");
        let warm = self.warm_starts.get(&context).map(|y| y.as_slice());
        match objective.solve_saddle(solver.tol, solver.max_iters, warm) {
            Ok(sp) => {
                self.warm_starts.insert(context, sp.y.clone());
                self.last_prediction = (sp.y, sp.lambda);
            }
            Err(err) => {
                self.solve_errors += 1;
                eprintln!("expert {} solve failed at round {n}: {err}", self.id);
            }
        }
        Ok(self.last_prediction.clone())
    }

    /// Adds the two round addends to the cumulative losses.
    pub fn update_cumulative(&mut self, own_y_loss: f64, own_lambda_loss: f64) -> Result<()> {
        if !own_y_loss.is_finite() || !own_lambda_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "cumulative addends ({own_y_loss}, {own_lambda_loss}) for expert {}",
                self.id
            )));
        }
        self.cum_y_loss += own_y_loss;
        self.cum_lambda_loss += own_lambda_loss;
        Ok(())
    }
}

/// The full truncated expert set in a fixed order, with strictly positive
/// prior weights summing to one: the two constants take 1/8 each and the
/// grid shares the remaining 3/4 proportionally to `2^-(k+h)`.
#[derive(Debug)]
pub struct ExpertBank {
    pub experts: Vec<ExpertState>,
    pub alphas: Vec<f64>,
}

impl ExpertBank {
    pub fn new(geometry: &ProblemGeometry, truncation_k: usize, truncation_h: u32) -> Result<Self> {
        if truncation_k == 0 || truncation_h == 0 {
            return Err(Error::Config("expert truncation must be positive".into()));
        }
        let mut experts = vec![
            ExpertState::new(ExpertId::ConstMax, geometry)?,
            ExpertState::new(ExpertId::ConstZero, geometry)?,
        ];
        let mut raw = Vec::new();
        for k in 1..=truncation_k {
            for h in 1..=truncation_h {
                experts.push(ExpertState::new(ExpertId::Grid { k, h }, geometry)?);
                raw.push(2f64.powi(-((k + h as usize) as i32)));
            }
        }
        let grid_mass: f64 = raw.iter().sum();
        let mut alphas = vec![0.125, 0.125];
        alphas.extend(raw.iter().map(|w| 0.75 * w / grid_mass));
        Ok(ExpertBank { experts, alphas })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }
}
