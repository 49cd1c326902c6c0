//! Batch experiment runner: configuration, the built-in loss library,
//! CSV traces, key=value summaries, and strategy comparison tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algorithm::{ConstantStrategy, MhaStrategy, SingleExpertStrategy, Strategy};
use crate::error::{Error, Result};
use crate::experts::{ExpertId, SolverConfig};
use crate::model::{lagrangian, LossSpec, ProblemGeometry};
use crate::oracle::{solve_feasible_optimum, FeasibleOptimum};
use crate::process::ProcessSpec;

/// Trace format tag written as the first line of every trace file.
pub const TRACE_VERSION: &str = "# mha trace v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSelection {
    /// One of: `quadratic_tracking` (`u = ||y - x||^2`), `linear_cost`
    /// (`u = y . x`).
    pub main: String,
    /// One of: `ridge_constraint` (`c = ||y||^2`), `linear_cost`
    /// (`c = y . x`), `variance_proxy` (`c = ||y||^2 * ||x||^2 / (d D^2)`).
    pub constraint: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: crate::saddle::DEFAULT_TOL,
            max_iters: crate::saddle::DEFAULT_MAX_ITERS,
        }
    }
}

impl From<SolverSettings> for SolverConfig {
    fn from(s: SolverSettings) -> Self {
        SolverConfig {
            tol: s.tol,
            max_iters: s.max_iters,
        }
    }
}

fn default_truncation_k() -> usize {
    5
}
fn default_truncation_h() -> u32 {
    5
}

/// One experiment, fully determined by this file plus the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_truncation_k")]
    pub truncation_k: usize,
    #[serde(default = "default_truncation_h")]
    pub truncation_h: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub geometry: ProblemGeometry,
    pub loss: LossSelection,
    pub process: ProcessSpec,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        self.geometry.validate()?;
        self.process.validate(&self.geometry)?;
        self.build_loss_spec()?;
        Ok(())
    }

    /// Resolves the named losses to concrete functions with analytic
    /// gradients.
    pub fn build_loss_spec(&self) -> Result<LossSpec> {
        build_loss_spec(&self.loss, &self.geometry)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn build_loss_spec(selection: &LossSelection, geometry: &ProblemGeometry) -> Result<LossSpec> {
    let main = loss_by_name(&selection.main, geometry)?;
    let constraint = loss_by_name(&selection.constraint, geometry)?;
    Ok(LossSpec {
        main: main.0,
        constraint: constraint.0,
        main_grad: Some(main.1),
        constraint_grad: Some(constraint.1),
        name: format!("{}+{}", selection.main, selection.constraint),
    })
}

type NamedLoss = (crate::model::LossFn, crate::model::GradFn);

fn loss_by_name(name: &str, geometry: &ProblemGeometry) -> Result<NamedLoss> {
    match name {
        // u(y, x) = ||y - x||^2, needs m == d
        "quadratic_tracking" => {
            if geometry.decision_dim != geometry.obs_dim {
                return Err(Error::Config(
                    "quadratic_tracking needs matching decision and observation dimensions".into(),
                ));
            }
            Ok((
                Arc::new(|y: &[f64], x: &[f64]| {
                    y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
                }),
                Arc::new(|y: &[f64], x: &[f64]| {
                    y.iter().zip(x).map(|(a, b)| 2.0 * (a - b)).collect()
                }),
            ))
        }
        // y . x, linear (hence convex) in y; needs m == d
        "linear_cost" => {
            if geometry.decision_dim != geometry.obs_dim {
                return Err(Error::Config(
                    "linear_cost needs matching decision and observation dimensions".into(),
                ));
            }
            Ok((
                Arc::new(|y: &[f64], x: &[f64]| dot(y, x)),
                Arc::new(|_: &[f64], x: &[f64]| x.to_vec()),
            ))
        }
        // c(y, x) = ||y||^2
        "ridge_constraint" => Ok((
            Arc::new(|y: &[f64], _: &[f64]| norm2(y)),
            Arc::new(|y: &[f64], _: &[f64]| y.iter().map(|v| 2.0 * v).collect()),
        )),
        // c(y, x) = ||y||^2 * ||x||^2 / (d * D^2), an observation-scaled ridge
        "variance_proxy" => {
            let scale = 1.0 / (geometry.obs_dim as f64 * geometry.obs_half_width.powi(2));
            Ok((
                Arc::new(move |y: &[f64], x: &[f64]| norm2(y) * norm2(x) * scale),
                Arc::new(move |y: &[f64], x: &[f64]| {
                    let s = norm2(x) * scale;
                    y.iter().map(|v| 2.0 * v * s).collect()
                }),
            ))
        }
        other => Err(Error::Config(format!("unknown loss name: {other}"))),
    }
}

/// Final aggregates of one run, mirrored into the summary file.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub rounds: usize,
    pub avg_u: f64,
    pub avg_c: f64,
    pub avg_l: f64,
    pub final_lambda: f64,
    pub solve_errors: usize,
    pub oracle: Option<FeasibleOptimum>,
}

impl ExperimentSummary {
    pub fn to_key_values(&self, config: &ExperimentConfig) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("rounds", self.rounds.to_string());
        push("seed", config.seed.to_string());
        push("loss_main", config.loss.main.clone());
        push("loss_constraint", config.loss.constraint.clone());
        push("gamma", config.geometry.gamma.to_string());
        push("avg_u", self.avg_u.to_string());
        push("avg_c", self.avg_c.to_string());
        push("avg_l", self.avg_l.to_string());
        push("final_lambda", self.final_lambda.to_string());
        push("solve_errors", self.solve_errors.to_string());
        match &self.oracle {
            Some(oracle) => {
                push("oracle_feasible", oracle.feasible.to_string());
                push("oracle_v_star", oracle.value.to_string());
                push("oracle_lambda_star", oracle.lambda_star.to_string());
                push("gap_u", (self.avg_u - oracle.value).to_string());
                push("gap_c", (self.avg_c - config.geometry.gamma).to_string());
            }
            None => push("oracle_feasible", "unavailable".into()),
        }
        out
    }
}

fn trace_header(m: usize) -> String {
    let mut columns = vec!["n".to_string()];
    columns.extend((0..m).map(|i| format!("y_{i}")));
    for c in [
        "lambda",
        "u_loss",
        "c_loss",
        "l_loss",
        "avg_u",
        "avg_c",
        "best_expert_avg_l",
        "weight_entropy_y",
    ] {
        columns.push(c.to_string());
    }
    columns.join(",")
}

/// Runs Algorithm-style rounds over the configured process and writes
/// `trace.csv`, `summary.txt` and (when the law is computable) `oracle.txt`
/// into the output directory.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let spec = config.build_loss_spec()?;
    let sequence = config
        .process
        .generate(&config.geometry, config.seed, config.horizon)?;
    let mut strategy = MhaStrategy::new(
        config.geometry.clone(),
        spec.clone(),
        config.truncation_k,
        config.truncation_h,
        config.solver.into(),
    )?;

    let trace_path = out_dir.join("trace.csv");
    let mut trace = fs::File::create(&trace_path)?;
    writeln!(trace, "{TRACE_VERSION}")?;
    writeln!(trace, "{}", trace_header(config.geometry.decision_dim))?;

    let mut sum_u = 0.0;
    let mut sum_c = 0.0;
    let mut sum_l = 0.0;
    let mut final_lambda = 0.0;
    for x in &sequence {
        let record = match strategy.step(x) {
            Ok(r) => r,
            Err(err) => {
                // leave a partial-trace marker so downstream tooling can tell
                // an aborted run from a finished one
                writeln!(trace, "# aborted: {err}")?;
                return Err(err);
            }
        };
        sum_u += record.u_loss;
        sum_c += record.c_loss;
        sum_l += record.l_loss;
        final_lambda = record.lambda;
        let n = record.n as f64;
        let mut row = vec![record.n.to_string()];
        row.extend(record.y.iter().map(|v| v.to_string()));
        for v in [
            record.lambda,
            record.u_loss,
            record.c_loss,
            record.l_loss,
            sum_u / n,
            sum_c / n,
            record.best_expert_avg_l,
            record.weight_entropy_y,
        ] {
            row.push(v.to_string());
        }
        writeln!(trace, "{}", row.join(","))?;
    }

    let oracle = match config.process.stationary_law() {
        Ok(law) => Some(solve_feasible_optimum(&law, &spec, &config.geometry)?),
        Err(Error::UnsupportedLaw(_)) => None,
        Err(e) => return Err(e),
    };
    let solve_errors = strategy.experts().iter().map(|e| e.solve_errors).sum();
    let n = config.horizon as f64;
    let summary = ExperimentSummary {
        rounds: config.horizon,
        avg_u: sum_u / n,
        avg_c: sum_c / n,
        avg_l: sum_l / n,
        final_lambda,
        solve_errors,
        oracle,
    };
    fs::write(out_dir.join("summary.txt"), summary.to_key_values(config))?;
    if let Some(oracle) = &summary.oracle {
        fs::write(out_dir.join("oracle.txt"), oracle_key_values(oracle))?;
    }
    Ok(summary)
}

fn oracle_key_values(oracle: &FeasibleOptimum) -> String {
    let mut out = String::new();
    out.push_str(&format!("feasible={}\n", oracle.feasible));
    out.push_str(&format!("v_star={}\n", oracle.value));
    out.push_str(&format!("lambda_star={}\n", oracle.lambda_star));
    for (i, s) in oracle.per_state.iter().enumerate() {
        out.push_str(&format!(
            "state_{i}.weight={}\nstate_{i}.decision={:?}\nstate_{i}.lambda={}\nstate_{i}.expected_u={}\nstate_{i}.expected_c={}\n",
            s.weight, s.decision, s.lambda, s.expected_u, s.expected_c
        ));
    }
    out
}

/// Which strategies the comparison table runs on the shared sequence.
#[derive(Debug, Clone)]
pub enum StrategySpec {
    Mha,
    Expert(ExpertId),
    Constant { label: String, y: Vec<f64>, lambda: f64 },
}

impl StrategySpec {
    /// `mha`, `const_max`, `const_zero`, `grid:K,H`, or
    /// `fixed:<y comma-separated>:<lambda>`.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "mha" {
            return Ok(StrategySpec::Mha);
        }
        if text == "const_max" {
            return Ok(StrategySpec::Expert(ExpertId::ConstMax));
        }
        if text == "const_zero" {
            return Ok(StrategySpec::Expert(ExpertId::ConstZero));
        }
        if let Some(rest) = text.strip_prefix("grid:") {
            let (k, h) = rest
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("bad grid strategy: {text}")))?;
            let k = k
                .parse()
                .map_err(|_| Error::Config(format!("bad grid k in: {text}")))?;
            let h = h
                .parse()
                .map_err(|_| Error::Config(format!("bad grid h in: {text}")))?;
            return Ok(StrategySpec::Expert(ExpertId::Grid { k, h }));
        }
        if let Some(rest) = text.strip_prefix("fixed:") {
            let (ys, lambda) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::Config(format!("bad fixed strategy: {text}")))?;
            let y: std::result::Result<Vec<f64>, _> = ys.split(',').map(str::parse).collect();
            let y = y.map_err(|_| Error::Config(format!("bad fixed decision in: {text}")))?;
            let lambda = lambda
                .parse()
                .map_err(|_| Error::Config(format!("bad fixed lambda in: {text}")))?;
            return Ok(StrategySpec::Constant {
                label: rest.to_string(),
                y,
                lambda,
            });
        }
        Err(Error::Config(format!("unknown strategy: {text}")))
    }

    fn build(&self, config: &ExperimentConfig, spec: &LossSpec) -> Result<Box<dyn Strategy>> {
        Ok(match self {
            StrategySpec::Mha => Box::new(MhaStrategy::new(
                config.geometry.clone(),
                spec.clone(),
                config.truncation_k,
                config.truncation_h,
                config.solver.into(),
            )?),
            StrategySpec::Expert(id) => Box::new(SingleExpertStrategy::new(
                config.geometry.clone(),
                spec.clone(),
                *id,
                config.solver.into(),
            )?),
            StrategySpec::Constant { label, y, lambda } => Box::new(ConstantStrategy {
                label: label.clone(),
                y: y.clone(),
                lambda: *lambda,
            }),
        })
    }
}

/// One row of the comparison table: final averages under the shared
/// sequence, each strategy playing its own dual.
#[derive(Debug, Clone)]
pub struct StrategyRow {
    pub name: String,
    pub avg_u: f64,
    pub avg_c: f64,
    pub avg_l: f64,
}

pub fn compare_strategies(
    config: &ExperimentConfig,
    strategies: &[StrategySpec],
) -> Result<Vec<StrategyRow>> {
    config.validate()?;
    let spec = config.build_loss_spec()?;
    let sequence = config
        .process
        .generate(&config.geometry, config.seed, config.horizon)?;
    let mut rows = Vec::new();
    for strategy_spec in strategies {
        let mut strategy = strategy_spec.build(config, &spec)?;
        let mut sum_u = 0.0;
        let mut sum_c = 0.0;
        let mut sum_l = 0.0;
        for x in &sequence {
            let (y, lambda) = strategy.predict()?;
            sum_u += spec.main_loss(&y, x);
            sum_c += spec.constraint_loss(&y, x);
            sum_l += lagrangian(&spec, &y, lambda, x, config.geometry.gamma)?;
            strategy.observe(x)?;
        }
        let n = config.horizon as f64;
        rows.push(StrategyRow {
            name: strategy.name(),
            avg_u: sum_u / n,
            avg_c: sum_c / n,
            avg_l: sum_l / n,
        });
    }
    Ok(rows)
}

pub fn write_comparison_csv(rows: &[StrategyRow], path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "strategy,avg_u,avg_c,avg_l")?;
    for row in rows {
        writeln!(file, "{},{},{},{}", row.name, row.avg_u, row.avg_c, row.avg_l)?;
    }
    Ok(())
}
