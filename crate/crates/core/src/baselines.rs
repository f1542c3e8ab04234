//! User browsing model baseline on the linearized page.
//!
//! The page is read as a list in Z-shape order. Examination of rank `r`
//! depends on `r` and its distance to the closest interacted rank above it,
//! with the virtual start one step before rank 0. Interactions are taken in
//! ascending rank order, since a list model cannot express revisits.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::grid::Session;
use crate::inference::{check_prob, prepare_sessions, EmConfig, Interner, Observation, Problem};
use crate::path::{DirectionPolicy, Linearization};

#[derive(Clone, Debug, PartialEq)]
pub struct UbmParameters {
    alpha: BTreeMap<(String, String), f64>,
    gamma: BTreeMap<(u32, u32), f64>,
    default_value: f64,
    policy: DirectionPolicy,
    truncation: usize,
}

impl UbmParameters {
    pub fn new(policy: DirectionPolicy, truncation: usize, default_value: f64) -> Self {
        Self {
            alpha: BTreeMap::new(),
            gamma: BTreeMap::new(),
            default_value,
            policy,
            truncation,
        }
    }

    pub fn policy(&self) -> DirectionPolicy {
        self.policy
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn alpha(&self, query: &str, image: &str) -> f64 {
        self.alpha
            .get(&(query.to_owned(), image.to_owned()))
            .copied()
            .unwrap_or(self.default_value)
    }

    /// Examination probability of `rank` at `distance` from the last interaction.
    pub fn gamma(&self, rank: usize, distance: usize) -> f64 {
        self.gamma
            .get(&(rank as u32, distance as u32))
            .copied()
            .unwrap_or(self.default_value)
    }

    pub fn set_alpha(&mut self, query: &str, image: &str, value: f64) -> Result<()> {
        check_prob(value)?;
        self.alpha.insert((query.to_owned(), image.to_owned()), value);
        Ok(())
    }

    pub fn set_gamma(&mut self, rank: u32, distance: u32, value: f64) -> Result<()> {
        check_prob(value)?;
        if distance == 0 || distance > rank + 1 {
            return Err(Error::InvalidConfig(format!(
                "distance {distance} impossible at rank {rank}"
            )));
        }
        self.gamma.insert((rank, distance), value);
        Ok(())
    }

    pub fn alphas(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.alpha.iter().map(|((q, u), &v)| (q.as_str(), u.as_str(), v))
    }

    pub fn gammas(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.gamma.iter().map(|(&k, &v)| (k, v))
    }

    /// Per-rank interaction probabilities of a session, indexed in reading
    /// order, conditioned on the interactions observed above each rank.
    pub fn predict(&self, session: &Session) -> Vec<f64> {
        let lin = Linearization::new(session.layout(), self.policy);
        let mut out = vec![0.0; lin.len()];
        for step in list_walk(session, &lin) {
            let image = &session.image_ids()[step.row_major];
            out[step.row_major] =
                crate::clamp_prob(self.alpha(session.query_id(), image) * self.gamma(step.rank, step.distance));
        }
        out
    }
}

struct ListStep {
    rank: usize,
    distance: usize,
    row_major: usize,
    interacted: bool,
}

fn list_walk(session: &Session, lin: &Linearization) -> Vec<ListStep> {
    let layout = session.layout();
    let interacted: BTreeSet<usize> = session
        .events()
        .iter()
        .map(|e| lin.scan_index(layout.row_major(e.position)))
        .collect();
    // Virtual start sits one step before rank 0.
    let mut last: isize = -1;
    (0..lin.len())
        .map(|rank| {
            let hit = interacted.contains(&rank);
            let step = ListStep {
                rank,
                distance: (rank as isize - last) as usize,
                row_major: lin.row_major(rank),
                interacted: hit,
            };
            if hit {
                last = rank as isize;
            }
            step
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct UbmFit {
    pub params: UbmParameters,
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub dropped_events: usize,
}

/// Fits the list baseline on Z-shape linearized pages.
pub fn ubm_fit(sessions: &[Session], config: &EmConfig) -> Result<UbmFit> {
    ubm_fit_with_policy(sessions, config, DirectionPolicy::zshape())
}

pub fn ubm_fit_with_policy(
    sessions: &[Session],
    config: &EmConfig,
    policy: DirectionPolicy,
) -> Result<UbmFit> {
    config.validate()?;
    let (sessions, dropped_events) = prepare_sessions(sessions, config)?;
    let mut alphas: Interner<(String, String)> = Interner::default();
    let mut gammas: Interner<(u32, u32)> = Interner::default();
    let mut observations = Vec::new();
    for s in &sessions {
        let lin = Linearization::new(s.layout(), policy);
        for step in list_walk(s, &lin) {
            let image = s.image_ids()[step.row_major].clone();
            observations.push(Observation {
                alpha: alphas.slot((s.query_id().to_owned(), image)),
                gamma: gammas.slot((step.rank as u32, step.distance as u32)),
                interacted: step.interacted,
            });
        }
    }
    let problem = Problem::new(observations, alphas.len(), gammas.len())?;
    let outcome = problem.run(config.settings())?;
    let mut params = UbmParameters::new(policy, config.truncation, config.init_value);
    params.alpha = alphas.into_keys().into_iter().zip(outcome.alpha).collect();
    params.gamma = gammas.into_keys().into_iter().zip(outcome.gamma).collect();
    Ok(UbmFit {
        params,
        log_likelihood: outcome.trace,
        iterations: outcome.iterations,
        dropped_events,
    })
}

/// Log-likelihood of `sessions` under the list model.
pub fn ubm_log_likelihood(sessions: &[Session], params: &UbmParameters) -> Result<f64> {
    let mut ll = 0.0;
    for s in sessions {
        let (s, _) = s.truncated(params.truncation())?;
        let lin = Linearization::new(s.layout(), params.policy());
        for step in list_walk(&s, &lin) {
            let image = &s.image_ids()[step.row_major];
            let p = params.alpha(s.query_id(), image) * params.gamma(step.rank, step.distance);
            ll += if step.interacted { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(ll)
}
