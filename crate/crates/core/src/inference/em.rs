//! EM over products of Bernoulli factors `P(interact) = alpha * gamma`.
//!
//! Both the grid model and the list baseline reduce to a bag of observations,
//! each tying one relevance parameter to one examination parameter and
//! recording whether the result was interacted with. Everything model
//! specific lives in how the observations are keyed.

use rayon::prelude::*;

use crate::clamp_prob;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Observation {
    pub alpha: u32,
    pub gamma: u32,
    pub interacted: bool,
}

/// Observation ids grouped by parameter, in insertion order.
#[derive(Debug)]
struct Groups {
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl Groups {
    fn build(len: usize, keys: impl Iterator<Item = u32> + Clone) -> Self {
        let mut offsets = vec![0usize; len + 1];
        for k in keys.clone() {
            offsets[k as usize + 1] += 1;
        }
        for j in 0..len {
            offsets[j + 1] += offsets[j];
        }
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; offsets[len]];
        for (obs, k) in keys.enumerate() {
            members[cursor[k as usize]] = obs as u32;
            cursor[k as usize] += 1;
        }
        Self { offsets, members }
    }

    fn get(&self, j: usize) -> &[u32] {
        &self.members[self.offsets[j]..self.offsets[j + 1]]
    }
}

#[derive(Debug)]
pub(crate) struct Problem {
    observations: Vec<Observation>,
    by_alpha: Groups,
    by_gamma: Groups,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub iterations: usize,
    pub init_value: f64,
    pub convergence_epsilon: Option<f64>,
}

#[derive(Debug)]
pub(crate) struct Outcome {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Log-likelihood at the initial parameters and after every round.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

const CHUNK: usize = 8192;

impl Problem {
    pub fn new(observations: Vec<Observation>, n_alpha: usize, n_gamma: usize) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyData);
        }
        let by_alpha = Groups::build(n_alpha, observations.iter().map(|o| o.alpha));
        let by_gamma = Groups::build(n_gamma, observations.iter().map(|o| o.gamma));
        Ok(Self {
            observations,
            by_alpha,
            by_gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Summed in fixed-size chunks so the result does not depend on how many
    /// threads run the map.
    pub fn log_likelihood(&self, alpha: &[f64], gamma: &[f64]) -> f64 {
        let partial: Vec<f64> = self
            .observations
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|o| {
                        let p = alpha[o.alpha as usize] * gamma[o.gamma as usize];
                        if o.interacted {
                            p.ln()
                        } else {
                            (1.0 - p).ln()
                        }
                    })
                    .sum::<f64>()
            })
            .collect();
        partial.iter().sum()
    }

    fn update(&self, alpha: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let obs = &self.observations;
        let next_alpha = (0..alpha.len())
            .into_par_iter()
            .map(|j| {
                let members = self.by_alpha.get(j);
                let a = alpha[j];
                let mass: f64 = members
                    .iter()
                    .map(|&id| {
                        let o = obs[id as usize];
                        if o.interacted {
                            1.0
                        } else {
                            let g = gamma[o.gamma as usize];
                            a * (1.0 - g) / (1.0 - a * g)
                        }
                    })
                    .sum();
                clamp_prob(mass / members.len() as f64)
            })
            .collect();
        let next_gamma = (0..gamma.len())
            .into_par_iter()
            .map(|j| {
                let members = self.by_gamma.get(j);
                let g = gamma[j];
                let mass: f64 = members
                    .iter()
                    .map(|&id| {
                        let o = obs[id as usize];
                        if o.interacted {
                            1.0
                        } else {
                            let a = alpha[o.alpha as usize];
                            g * (1.0 - a) / (1.0 - a * g)
                        }
                    })
                    .sum();
                clamp_prob(mass / members.len() as f64)
            })
            .collect();
        (next_alpha, next_gamma)
    }

    pub fn run(&self, settings: Settings) -> Result<Outcome> {
        let mut alpha = vec![settings.init_value; self.by_alpha.offsets.len() - 1];
        let mut gamma = vec![settings.init_value; self.by_gamma.offsets.len() - 1];
        let mut trace = Vec::with_capacity(settings.iterations + 1);
        trace.push(self.log_likelihood(&alpha, &gamma));
        let mut iterations = 0;
        for _ in 0..settings.iterations {
            let (next_alpha, next_gamma) = self.update(&alpha, &gamma);
            let change = mean_abs_change(&alpha, &next_alpha, &gamma, &next_gamma);
            alpha = next_alpha;
            gamma = next_gamma;
            iterations += 1;
            let ll = self.log_likelihood(&alpha, &gamma);
            if !ll.is_finite() {
                return Err(Error::Numerical(format!(
                    "log-likelihood became {ll} at iteration {iterations}"
                )));
            }
            trace.push(ll);
            if settings.convergence_epsilon.is_some_and(|eps| change < eps) {
                break;
            }
        }
        Ok(Outcome {
            alpha,
            gamma,
            trace,
            iterations,
        })
    }
}

fn mean_abs_change(a0: &[f64], a1: &[f64], g0: &[f64], g1: &[f64]) -> f64 {
    let n = a0.len() + g0.len();
    let total: f64 = a0
        .iter()
        .zip(a1)
        .chain(g0.iter().zip(g1))
        .map(|(x, y)| (x - y).abs())
        .sum();
    total / n as f64
}
