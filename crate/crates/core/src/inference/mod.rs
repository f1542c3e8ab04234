//! EM estimation of result relevance and path examination probabilities.
//!
//! Between two adjacent interaction signals at scan indices `m` and `n`, every
//! result strictly inside the path was passed over and the result at `n` was
//! interacted with. A result at index `i` is interacted with iff it is both
//! examined (probability `gamma[i, m, n]`) and relevant (probability
//! `alpha[query, image]`), so the pair contributes
//!
//! ```text
//! prod_{i strictly between m and n} (1 - alpha_i * gamma_imn) * alpha_n * gamma_nmn
//! ```
//!
//! to the session likelihood. The final pair of a session runs to the virtual
//! end of the page, where nothing is interacted with, and only contributes its
//! interior.

mod em;
pub mod persist;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_sequence, Session};
use crate::path::{linearize, scan_range, DirectionPolicy, ImagePath};

pub(crate) use em::{Observation, Problem, Settings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub iterations: usize,
    pub init_value: f64,
    /// Only the first `truncation` results of a page in reading order are modelled.
    pub truncation: usize,
    /// Stop early once the mean absolute parameter change drops below this.
    pub convergence_epsilon: Option<f64>,
    /// Sessions without any interaction still contribute skip evidence along
    /// the whole page unless this is off.
    pub include_empty_sessions: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            init_value: 0.5,
            truncation: 100,
            convergence_epsilon: None,
            include_empty_sessions: true,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.init_value > 0.0 && self.init_value < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "initial value {} outside (0, 1)",
                self.init_value
            )));
        }
        if self.truncation == 0 {
            return Err(Error::InvalidConfig("truncation must be at least 1".into()));
        }
        if let Some(eps) = self.convergence_epsilon {
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::InvalidConfig("convergence epsilon must be positive".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn settings(&self) -> Settings {
        Settings {
            iterations: self.iterations,
            init_value: self.init_value,
            convergence_epsilon: self.convergence_epsilon,
        }
    }
}

/// Examination parameter key: position `i` on the path from `m` to `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GammaKey {
    pub i: u32,
    pub m: u32,
    pub n: u32,
}

impl GammaKey {
    pub fn new(i: usize, m: usize, n: usize) -> Self {
        Self {
            i: i as u32,
            m: m as u32,
            n: n as u32,
        }
    }

    pub fn on_path(&self) -> bool {
        self.m.min(self.n) <= self.i && self.i <= self.m.max(self.n)
    }
}

/// Fitted relevance and examination parameters of the grid model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    alpha: BTreeMap<(String, String), f64>,
    gamma: BTreeMap<GammaKey, f64>,
    default_value: f64,
    policy: DirectionPolicy,
    truncation: usize,
}

impl ParameterStore {
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

    /// Relevance of `image` for `query`; unseen pairs read the default.
    pub fn alpha(&self, query: &str, image: &str) -> f64 {
        self.alpha
            .get(&(query.to_owned(), image.to_owned()))
            .copied()
            .unwrap_or(self.default_value)
    }

    pub fn alpha_entry(&self, query: &str, image: &str) -> Option<f64> {
        self.alpha.get(&(query.to_owned(), image.to_owned())).copied()
    }

    /// Examination probability of index `i` on the path `m -> n`. Zero off
    /// the path, the default for unseen keys on it.
    pub fn gamma(&self, i: usize, m: usize, n: usize) -> f64 {
        let key = GammaKey::new(i, m, n);
        if !key.on_path() {
            return 0.0;
        }
        self.gamma.get(&key).copied().unwrap_or(self.default_value)
    }

    pub fn set_alpha(&mut self, query: &str, image: &str, value: f64) -> Result<()> {
        check_prob(value)?;
        self.alpha.insert((query.to_owned(), image.to_owned()), value);
        Ok(())
    }

    pub fn set_gamma(&mut self, key: GammaKey, value: f64) -> Result<()> {
        check_prob(value)?;
        if !key.on_path() {
            return Err(Error::InvalidConfig(format!(
                "gamma key ({}, {}, {}) lies off its path",
                key.i, key.m, key.n
            )));
        }
        self.gamma.insert(key, value);
        Ok(())
    }

    pub fn alphas(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.alpha.iter().map(|((q, u), &v)| (q.as_str(), u.as_str(), v))
    }

    pub fn gammas(&self) -> impl Iterator<Item = (GammaKey, f64)> + '_ {
        self.gamma.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_alpha(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_gamma(&self) -> usize {
        self.gamma.len()
    }
}

pub(crate) fn check_prob(value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("probability {value} outside [0, 1]")))
    }
}

/// One result on one image path: skipped (interior) or interacted (the end).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Occurrence<'a> {
    pub query_id: &'a str,
    pub image_id: &'a str,
    pub i: usize,
    pub m: usize,
    pub n: usize,
    pub is_endpoint: bool,
}

pub(crate) fn session_occurrences<'a>(
    session: &'a Session,
    policy: DirectionPolicy,
) -> impl Iterator<Item = Occurrence<'a>> + 'a {
    let layout = session.layout();
    let sequence = build_sequence(session).expect("session positions are validated on construction");
    let query = session.query_id();
    let pairs: Vec<_> = sequence
        .pairs()
        .map(|(a, b, terminal)| {
            let m = linearize(layout, a, policy).expect("valid position");
            let n = linearize(layout, b, policy).expect("valid position");
            (m, n, terminal)
        })
        .collect();
    let lin = crate::path::Linearization::new(layout, policy);
    pairs.into_iter().flat_map(move |(m, n, terminal)| {
        let image = |i: usize| session.image_ids()[lin.row_major(i)].as_str();
        let interior = scan_range(m, n).skip(1).filter(move |&i| i != n);
        let interior: Vec<_> = interior
            .map(|i| Occurrence {
                query_id: query,
                image_id: image(i),
                i,
                m,
                n,
                is_endpoint: false,
            })
            .collect();
        let end = (!terminal).then(|| Occurrence {
            query_id: query,
            image_id: image(n),
            i: n,
            m,
            n,
            is_endpoint: true,
        });
        interior.into_iter().chain(end)
    })
}

/// All path occurrences of the given sessions, in session and time order.
/// The start of every path was already accounted for by the previous pair and
/// is not repeated; the virtual end emits nothing.
pub fn extract_occurrences<'a>(
    sessions: &'a [Session],
    policy: DirectionPolicy,
) -> impl Iterator<Item = Occurrence<'a>> + 'a {
    sessions
        .iter()
        .flat_map(move |s| session_occurrences(s, policy))
}

/// Applies truncation and the empty-session filter ahead of fitting.
pub(crate) fn prepare_sessions(
    sessions: &[Session],
    config: &EmConfig,
) -> Result<(Vec<Session>, usize)> {
    let mut dropped = 0;
    let mut prepared = Vec::with_capacity(sessions.len());
    for s in sessions {
        let (t, d) = s.truncated(config.truncation)?;
        dropped += d;
        if config.include_empty_sessions || !t.events().is_empty() {
            prepared.push(t);
        }
    }
    Ok((prepared, dropped))
}

/// Interns string and index keys into dense parameter slots, first-seen order.
pub(crate) struct Interner<K> {
    index: HashMap<K, u32>,
    keys: Vec<K>,
}

impl<K> Default for Interner<K> {
    fn default() -> Self {
        Self {
            index: HashMap::new(),
            keys: Vec::new(),
        }
    }
}

impl<K: std::hash::Hash + Eq + Clone> Interner<K> {
    pub fn slot(&mut self, key: K) -> u32 {
        if let Some(&j) = self.index.get(&key) {
            return j;
        }
        let j = self.keys.len() as u32;
        self.index.insert(key.clone(), j);
        self.keys.push(key);
        j
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn into_keys(self) -> Vec<K> {
        self.keys
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub params: ParameterStore,
    /// Log-likelihood before the first round and after every round.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    /// Events outside the truncated page.
    pub dropped_events: usize,
    pub sessions: usize,
    pub occurrences: usize,
}

/// Fits the grid model with EM.
pub fn em_fit(
    sessions: &[Session],
    config: &EmConfig,
    policy: DirectionPolicy,
) -> Result<FitReport> {
    config.validate()?;
    let (sessions, dropped_events) = prepare_sessions(sessions, config)?;
    let mut alphas: Interner<(String, String)> = Interner::default();
    let mut gammas: Interner<GammaKey> = Interner::default();
    let mut observations = Vec::new();
    for occ in extract_occurrences(&sessions, policy) {
        let alpha = alphas.slot((occ.query_id.to_owned(), occ.image_id.to_owned()));
        let gamma = gammas.slot(GammaKey::new(occ.i, occ.m, occ.n));
        observations.push(Observation {
            alpha,
            gamma,
            interacted: occ.is_endpoint,
        });
    }
    let problem = Problem::new(observations, alphas.len(), gammas.len())?;
    let outcome = problem.run(config.settings())?;

    let mut params = ParameterStore::new(policy, config.truncation, config.init_value);
    for (key, value) in alphas.into_keys().into_iter().zip(outcome.alpha) {
        params.alpha.insert(key, value);
    }
    for (key, value) in gammas.into_keys().into_iter().zip(outcome.gamma) {
        params.gamma.insert(key, value);
    }
    Ok(FitReport {
        params,
        log_likelihood: outcome.trace,
        iterations: outcome.iterations,
        dropped_events,
        sessions: sessions.len(),
        occurrences: problem.len(),
    })
}

/// Probability of the path between two adjacent signals. With `terminal` set
/// the path ends at the virtual end and only its interior counts.
pub fn pair_likelihood(
    session: &Session,
    path: &ImagePath,
    params: &ParameterStore,
    terminal: bool,
) -> f64 {
    let (m, n) = (path.start_lin, path.end_lin);
    let q = session.query_id();
    let image = |k: usize| session.image_at(path.positions[k]);
    let last = path.positions.len() - 1;
    let mut p = 1.0;
    for (k, i) in path.indices().enumerate() {
        if k == 0 && last > 0 {
            continue;
        }
        if k == last {
            if !terminal {
                p *= params.alpha(q, image(k)) * params.gamma(i, m, n);
            }
        } else {
            p *= 1.0 - params.alpha(q, image(k)) * params.gamma(i, m, n);
        }
    }
    p
}

/// Log-likelihood of one session under `params`, built pair by pair.
pub fn session_log_likelihood(
    session: &Session,
    params: &ParameterStore,
    policy: DirectionPolicy,
) -> Result<f64> {
    let sequence = build_sequence(session)?;
    let mut ll = 0.0;
    for (a, b, terminal) in sequence.pairs() {
        let path = crate::path::build_path(session.layout(), a, b, policy)?;
        ll += pair_likelihood(session, &path, params, terminal).ln();
    }
    Ok(ll)
}

/// Total log-likelihood of `sessions`, truncated to the page size the
/// parameters were fitted on.
pub fn log_likelihood(
    sessions: &[Session],
    params: &ParameterStore,
    policy: DirectionPolicy,
) -> Result<f64> {
    let per_session = sessions
        .par_iter()
        .map(|s| {
            let (t, _) = s.truncated(params.truncation())?;
            session_log_likelihood(&t, params, policy)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_session.iter().sum())
}
