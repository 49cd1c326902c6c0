//! Seedable generators of stationary ergodic observation sequences.
//!
//! Three families: i.i.d. draws from a finite support, finite-state Markov
//! chains whose states are points in the cube, and AR(1) clipped to the
//! cube. Generation is deterministic given the seed; the generator is
//! ChaCha12 seeded with the configured 64-bit value, so traces replicate
//! across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemGeometry;

const AR1_BURN_IN: usize = 10_000;
const STATIONARY_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// Independent draws from a finite support.
    Iid {
        points: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    /// Finite-state chain started from its stationary law, so the sequence
    /// is stationary from round 1.
    Markov {
        states: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
    },
    /// Per-coordinate AR(1) with Gaussian noise, clipped to the cube after
    /// a fixed burn-in.
    Ar1 { phi: f64, sigma: f64 },
}

/// Closed-form law of a process, as consumed by the oracle: the marginal for
/// i.i.d., and the stationary law plus one-step conditional rows for Markov.
#[derive(Debug, Clone)]
pub enum Law {
    Iid {
        points: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    Markov {
        states: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|&p| p < 0.0) {
        return Err(Error::Config(format!("{what}: negative probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("{what}: probabilities sum to {total}")));
    }
    Ok(())
}

fn check_points_in_cube(points: &[Vec<f64>], geometry: &ProblemGeometry) -> Result<()> {
    for p in points {
        if !geometry.contains_observation(p) {
            return Err(Error::Config(format!("support point {p:?} outside the cube")));
        }
    }
    Ok(())
}

/// Primitivity check: some boolean power of the adjacency pattern within
/// `s^2` steps has all entries positive (irreducible and aperiodic).
fn check_primitive(transition: &[Vec<f64>]) -> Result<()> {
    let s = transition.len();
    let mut reach: Vec<Vec<bool>> = transition
        .iter()
        .map(|row| row.iter().map(|&p| p > 0.0).collect())
        .collect();
    let adjacency = reach.clone();
    for _ in 0..s * s {
        if reach.iter().all(|row| row.iter().all(|&b| b)) {
            return Ok(());
        }
        let mut next = vec![vec![false; s]; s];
        for i in 0..s {
            for j in 0..s {
                next[i][j] = (0..s).any(|k| reach[i][k] && adjacency[k][j]);
            }
        }
        reach = next;
    }
    Err(Error::Config(
        "transition matrix is reducible or periodic".into(),
    ))
}

/// Stationary distribution by power iteration to L1 residual 1e-12.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = transition.len();
    let mut pi = vec![1.0 / s as f64; s];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; s];
        for i in 0..s {
            for j in 0..s {
                next[j] += pi[i] * transition[i][j];
            }
        }
        let residual: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual <= STATIONARY_RESIDUAL {
            return Ok(pi);
        }
    }
    Err(Error::Numeric("stationary power iteration did not converge".into()))
}

impl ProcessSpec {
    pub fn validate(&self, geometry: &ProblemGeometry) -> Result<()> {
        match self {
            ProcessSpec::Iid { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::Config("iid support and probabilities mismatch".into()));
                }
                check_distribution(probs, "iid")?;
                check_points_in_cube(points, geometry)
            }
            ProcessSpec::Markov { states, transition } => {
                if states.is_empty() || transition.len() != states.len() {
                    return Err(Error::Config("markov states and transition mismatch".into()));
                }
                for row in transition {
                    if row.len() != states.len() {
                        return Err(Error::Config("transition matrix is not square".into()));
                    }
                    check_distribution(row, "markov row")?;
                }
                check_points_in_cube(states, geometry)?;
                check_primitive(transition)
            }
            ProcessSpec::Ar1 { phi, sigma } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::Config("ar1 needs |phi| < 1".into()));
                }
                if !(*sigma > 0.0) {
                    return Err(Error::Config("ar1 needs sigma > 0".into()));
                }
                Ok(())
            }
        }
    }

    /// Generates `n` observations deterministically from the seed.
    pub fn generate(
        &self,
        geometry: &ProblemGeometry,
        seed: u64,
        n: usize,
    ) -> Result<Vec<Vec<f64>>> {
        self.validate(geometry)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        match self {
            ProcessSpec::Iid { points, probs } => {
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(points[sample_index(&mut rng, probs)].clone());
                }
                Ok(out)
            }
            ProcessSpec::Markov { states, transition } => {
                let stationary = stationary_distribution(transition)?;
                let mut state = sample_index(&mut rng, &stationary);
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(states[state].clone());
                    state = sample_index(&mut rng, &transition[state]);
                }
                Ok(out)
            }
            ProcessSpec::Ar1 { phi, sigma } => {
                let d = geometry.obs_dim;
                let bound = geometry.obs_half_width;
                let normal = Normal::new(0.0, *sigma)
                    .map_err(|e| Error::Config(format!("ar1 noise: {e}")))?;
                let mut state = vec![0.0; d];
                let mut out = Vec::with_capacity(n);
                for step in 0..AR1_BURN_IN + n {
                    for coord in state.iter_mut() {
                        *coord = (*phi * *coord + normal.sample(&mut rng)).clamp(-bound, bound);
                    }
                    if step >= AR1_BURN_IN {
                        out.push(state.clone());
                    }
                }
                Ok(out)
            }
        }
    }

    /// The closed-form law, where it exists.
    pub fn stationary_law(&self) -> Result<Law> {
        match self {
            ProcessSpec::Iid { points, probs } => Ok(Law::Iid {
                points: points.clone(),
                probs: probs.clone(),
            }),
            ProcessSpec::Markov { states, transition } => Ok(Law::Markov {
                states: states.clone(),
                transition: transition.clone(),
                stationary: stationary_distribution(transition)?,
            }),
            ProcessSpec::Ar1 { .. } => Err(Error::UnsupportedLaw(
                "ar1 has no closed-form conditional law here; it is sampled only".into(),
            )),
        }
    }
}

fn sample_index(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}
