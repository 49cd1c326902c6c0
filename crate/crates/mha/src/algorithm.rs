//! The online round loop: expert predictions, double aggregation, loss
//! accounting and weight updates, plus the simple comparison strategies the
//! harness runs against.

use rayon::prelude::*;

use crate::error::Result;
use crate::experts::{ExpertBank, ExpertId, ExpertState, SolverConfig};
use crate::model::{lagrangian, LossSpec, ProblemGeometry};
use crate::partition::PartitionFamily;
use crate::waa::{aggregate, update_weights, Side, WeightVector};

/// Per-round record emitted after the observation is revealed.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub n: usize,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub u_loss: f64,
    pub c_loss: f64,
    pub l_loss: f64,
    /// `min_e (1/n) sum_i l(y^i_e, lambda_i, x_i)` over the expert bank.
    pub best_expert_avg_l: f64,
    /// Shannon entropy of the decision-side mixture at prediction time.
    pub weight_entropy_y: f64,
}

/// A sequential prediction strategy: called as predict / observe pairs.
pub trait Strategy {
    fn name(&self) -> String;
    /// Prediction pair for the upcoming round.
    fn predict(&mut self) -> Result<(Vec<f64>, f64)>;
    /// Reveal the observation for the round just predicted.
    fn observe(&mut self, x: &[f64]) -> Result<()>;
}

/// The aggregating strategy: a truncated histogram expert bank combined by
/// two exponential-weights mixtures with learning rate `1/sqrt(n)`.
pub struct MhaStrategy {
    pub geometry: ProblemGeometry,
    pub spec: LossSpec,
    pub solver: SolverConfig,
    family: PartitionFamily,
    bank: ExpertBank,
    history: Vec<Vec<f64>>,
    round: usize,
    pending: Option<Pending>,
}

struct Pending {
    expert_predictions: Vec<(Vec<f64>, f64)>,
    y: Vec<f64>,
    lambda: f64,
    entropy_y: f64,
}

impl MhaStrategy {
    pub fn new(
        geometry: ProblemGeometry,
        spec: LossSpec,
        truncation_k: usize,
        truncation_h: u32,
        solver: SolverConfig,
    ) -> Result<Self> {
        geometry.validate()?;
        let family = PartitionFamily::new(&geometry);
        let bank = ExpertBank::new(&geometry, truncation_k, truncation_h)?;
        Ok(MhaStrategy {
            geometry,
            spec,
            solver,
            family,
            bank,
            history: Vec::new(),
            round: 0,
            pending: None,
        })
    }

    /// Current weight vectors; the prior before the first loss is suffered.
    pub fn weights(&self) -> Result<(WeightVector, WeightVector)> {
        if self.round == 0 {
            let prior = WeightVector(self.bank.alphas.clone());
            return Ok((prior.clone(), prior));
        }
        let y_losses: Vec<f64> = self.bank.experts.iter().map(|e| e.cum_y_loss).collect();
        let l_losses: Vec<f64> = self.bank.experts.iter().map(|e| e.cum_lambda_loss).collect();
        Ok((
            update_weights(&y_losses, &self.bank.alphas, self.round, Side::Decision)?,
            update_weights(&l_losses, &self.bank.alphas, self.round, Side::Dual)?,
        ))
    }

    pub fn experts(&self) -> &[ExpertState] {
        &self.bank.experts
    }

    pub fn rounds_played(&self) -> usize {
        self.round
    }

    /// Full round step: predict, reveal, account. Returns the round record.
    pub fn step(&mut self, x: &[f64]) -> Result<RoundRecord> {
        self.predict()?;
        self.observe_record(x)
    }

    fn predict_inner(&mut self) -> Result<(Vec<f64>, f64)> {
        let n = self.round + 1;
        let family = &self.family;
        let history = &self.history;
        let geometry = &self.geometry;
        let spec = &self.spec;
        let solver = &self.solver;
        // expert solves are independent within a round
        let expert_predictions: Vec<(Vec<f64>, f64)> = self
            .bank
            .experts
            .par_iter_mut()
            .map(|e| e.predict(family, history, n, geometry, spec, solver))
            .collect::<Result<_>>()?;
        let (wy, wl) = self.weights()?;
        let (y, lambda) = aggregate(&expert_predictions, &wy, &wl);
        let entropy_y = wy.entropy();
        self.pending = Some(Pending {
            expert_predictions,
            y: y.clone(),
            lambda,
            entropy_y,
        });
        Ok((y, lambda))
    }

    /// Reveal the observation and return the full record for the round.
    pub fn observe_record(&mut self, x: &[f64]) -> Result<RoundRecord> {
        let pending = self
            .pending
            .take()
            .expect("observe called without a pending prediction");
        let n = self.round + 1;
        let gamma = self.geometry.gamma;
        let u_loss = self.spec.main_loss(&pending.y, x);
        let c_loss = self.spec.constraint_loss(&pending.y, x);
        let l_loss = lagrangian(&self.spec, &pending.y, pending.lambda, x, gamma)?;
        for (e, (ye, le)) in self
            .bank
            .experts
            .iter_mut()
            .zip(&pending.expert_predictions)
        {
            let own_y = lagrangian(&self.spec, ye, pending.lambda, x, gamma)?;
            let own_lambda = lagrangian(&self.spec, &pending.y, *le, x, gamma)?;
            e.update_cumulative(own_y, own_lambda)?;
        }
        self.history.push(x.to_vec());
        self.round = n;
        let best_expert_avg_l = self
            .bank
            .experts
            .iter()
            .map(|e| e.cum_y_loss / n as f64)
            .fold(f64::INFINITY, f64::min);
        Ok(RoundRecord {
            n,
            y: pending.y,
            lambda: pending.lambda,
            u_loss,
            c_loss,
            l_loss,
            best_expert_avg_l,
            weight_entropy_y: pending.entropy_y,
        })
    }
}

impl Strategy for MhaStrategy {
    fn name(&self) -> String {
        "mha".into()
    }

    fn predict(&mut self) -> Result<(Vec<f64>, f64)> {
        match &self.pending {
            Some(p) => Ok((p.y.clone(), p.lambda)),
            None => self.predict_inner(),
        }
    }

    fn observe(&mut self, x: &[f64]) -> Result<()> {
        self.observe_record(x)?;
        Ok(())
    }
}

/// One histogram (or constant) expert run on its own, playing its own dual.
pub struct SingleExpertStrategy {
    geometry: ProblemGeometry,
    spec: LossSpec,
    solver: SolverConfig,
    family: PartitionFamily,
    expert: ExpertState,
    history: Vec<Vec<f64>>,
    round: usize,
}

impl SingleExpertStrategy {
    pub fn new(
        geometry: ProblemGeometry,
        spec: LossSpec,
        id: ExpertId,
        solver: SolverConfig,
    ) -> Result<Self> {
        let family = PartitionFamily::new(&geometry);
        let expert = ExpertState::new(id, &geometry)?;
        Ok(SingleExpertStrategy {
            geometry,
            spec,
            solver,
            family,
            expert,
            history: Vec::new(),
            round: 0,
        })
    }
}

impl Strategy for SingleExpertStrategy {
    fn name(&self) -> String {
        format!("expert:{}", self.expert.id)
    }

    fn predict(&mut self) -> Result<(Vec<f64>, f64)> {
        self.expert.predict(
            &self.family,
            &self.history,
            self.round + 1,
            &self.geometry,
            &self.spec,
            &self.solver,
        )
    }

    fn observe(&mut self, x: &[f64]) -> Result<()> {
        self.history.push(x.to_vec());
        self.round += 1;
        Ok(())
    }
}

/// A fixed decision and dual, oblivious to the data.
pub struct ConstantStrategy {
    pub label: String,
    pub y: Vec<f64>,
    pub lambda: f64,
}

impl Strategy for ConstantStrategy {
    fn name(&self) -> String {
        format!("const:{}", self.label)
    }

    fn predict(&mut self) -> Result<(Vec<f64>, f64)> {
        Ok((self.y.clone(), self.lambda))
    }

    fn observe(&mut self, _x: &[f64]) -> Result<()> {
        Ok(())
    }
}
