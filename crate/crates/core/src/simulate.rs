//! Synthetic interaction logs drawn from known parameters.
//!
//! A simulated user starts before the first result and repeatedly picks a
//! vertical direction (down with probability `p_down`, always down from the
//! start), then walks the scan order in that direction. Each result passed is
//! examined with a probability that decays with its distance from the last
//! interaction and, once examined, interacted with according to its true
//! relevance. The first interaction becomes the next signal. A walk that runs
//! off the page, or the signal budget running out, ends the session.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EventKind, GridLayout, InteractionEvent, Session};
use crate::inference::persist::{format_value, TruthParams};
use crate::path::{delinearize, DirectionPolicy, Linearization, PathDirection};

/// How true relevance is assigned to the images of a query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    /// Each image draws one of these values uniformly.
    Levels(Vec<f64>),
    Uniform { low: f64, high: f64 },
    Fixed(f64),
}

impl AlphaSpec {
    fn values(&self) -> Vec<f64> {
        match self {
            AlphaSpec::Levels(v) => v.clone(),
            AlphaSpec::Uniform { low, high } => vec![*low, *high],
            AlphaSpec::Fixed(v) => vec![*v],
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            AlphaSpec::Levels(v) => v[rng.gen_range(0..v.len())],
            AlphaSpec::Uniform { low, high } => rng.gen_range(*low..=*high),
            AlphaSpec::Fixed(v) => *v,
        }
    }
}

/// Examination probability `base * decay^(offset - 1)` with a separate base
/// for each vertical direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFamily {
    pub down: f64,
    pub up: f64,
    pub decay: f64,
}

impl GammaFamily {
    pub const ALWAYS: GammaFamily = GammaFamily {
        down: 1.0,
        up: 1.0,
        decay: 1.0,
    };

    pub fn probability(&self, offset: usize, direction: PathDirection) -> f64 {
        let base = match direction {
            PathDirection::Down => self.down,
            PathDirection::Up => self.up,
        };
        (base * self.decay.powi(offset.saturating_sub(1) as i32)).clamp(0.0, 1.0)
    }
}

impl Default for GammaFamily {
    fn default() -> Self {
        Self {
            down: 0.9,
            up: 0.8,
            decay: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub queries: usize,
    pub sessions_per_query: usize,
    pub rows: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub alpha: AlphaSpec,
    pub gamma: GammaFamily,
    pub p_down: f64,
    /// Cap on interactions per session. A capped session still reads as
    /// ending at the bottom of the page, so keep it above typical lengths.
    pub max_signals: usize,
    /// Probability that an interaction is logged as a click rather than a hover.
    pub click_probability: f64,
    /// Scan order the simulated users follow.
    pub policy: DirectionPolicy,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            queries: 20,
            sessions_per_query: 2000,
            rows: 10,
            min_width: 4,
            max_width: 6,
            alpha: AlphaSpec::Levels((0..10).map(|k| 0.05 + 0.1 * k as f64).collect()),
            gamma: GammaFamily::default(),
            p_down: 0.681,
            max_signals: 100,
            click_probability: 0.15,
            policy: DirectionPolicy::zshape(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        prob("p_down", self.p_down)?;
        prob("click_probability", self.click_probability)?;
        prob("gamma.down", self.gamma.down)?;
        prob("gamma.up", self.gamma.up)?;
        prob("gamma.decay", self.gamma.decay)?;
        let alphas = self.alpha.values();
        if alphas.is_empty() {
            return Err(Error::InvalidConfig("alpha needs at least one level".into()));
        }
        for a in alphas {
            prob("alpha", a)?;
        }
        if let AlphaSpec::Uniform { low, high } = self.alpha {
            if low > high {
                return Err(Error::InvalidConfig("alpha.uniform low exceeds high".into()));
            }
        }
        if self.rows == 0 || self.min_width == 0 || self.min_width > self.max_width {
            return Err(Error::InvalidConfig("layout needs rows and 1 <= min_width <= max_width".into()));
        }
        if self.queries == 0 {
            return Err(Error::InvalidConfig("queries must be at least 1".into()));
        }
        Ok(())
    }
}

/// The fixed result page of one simulated query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPlan {
    pub query_id: String,
    pub layout: GridLayout,
    /// Row-major image ids.
    pub image_ids: Vec<String>,
    /// Row-major true relevance.
    pub alpha: Vec<f64>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for `(seed, a, b)`.
pub fn derived_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ a) ^ b.rotate_left(32)))
}

const PLAN_STREAM: u64 = u64::MAX;

pub fn plan_query(config: &SimConfig, query_index: usize) -> QueryPlan {
    let mut rng = derived_rng(config.seed, PLAN_STREAM, query_index as u64);
    let rows: Vec<usize> = (0..config.rows)
        .map(|_| rng.gen_range(config.min_width..=config.max_width))
        .collect();
    let layout = GridLayout::new(rows).expect("widths are positive");
    let query_id = format!("q{query_index:03}");
    let image_ids = (0..layout.total())
        .map(|k| format!("{query_id}-i{k:03}"))
        .collect();
    let alpha = (0..layout.total()).map(|_| config.alpha.draw(&mut rng)).collect();
    QueryPlan {
        query_id,
        layout,
        image_ids,
        alpha,
    }
}

/// Draws one session for `plan`.
pub fn simulate_session<R: Rng>(
    plan: &QueryPlan,
    config: &SimConfig,
    session_id: &str,
    rng: &mut R,
) -> Result<Session> {
    let layout = &plan.layout;
    let lin = Linearization::new(layout, config.policy);
    let total = layout.total();
    let mut current: Option<usize> = None;
    let mut events = Vec::new();
    let mut clock = 0u64;
    while events.len() < config.max_signals {
        let down = current.is_none() || rng.gen_bool(config.p_down);
        let found = if down {
            let start = current.map_or(0, |m| m + 1);
            walk(start..total, |i| i as isize - current.map_or(-1, |m| m as isize), PathDirection::Down, plan, &lin, config, rng)
        } else {
            let m = current.expect("up moves follow a signal");
            walk((0..m).rev(), |i| (m - i) as isize, PathDirection::Up, plan, &lin, config, rng)
        };
        let Some(next) = found else { break };
        clock += rng.gen_range(300..3000);
        let kind = if rng.gen_bool(config.click_probability) {
            EventKind::Click
        } else {
            EventKind::Hover
        };
        let position = delinearize(layout, next, config.policy)?;
        events.push(InteractionEvent::new(clock, kind, position));
        current = Some(next);
    }
    Session::new(session_id, &plan.query_id, layout.clone(), events, plan.image_ids.clone())
}

fn walk<I, O, R>(
    order: I,
    offset: O,
    direction: PathDirection,
    plan: &QueryPlan,
    lin: &Linearization,
    config: &SimConfig,
    rng: &mut R,
) -> Option<usize>
where
    I: Iterator<Item = usize>,
    O: Fn(usize) -> isize,
    R: Rng,
{
    for i in order {
        let examine = config.gamma.probability(offset(i) as usize, direction);
        if rng.gen_bool(examine) && rng.gen_bool(plan.alpha[lin.row_major(i)]) {
            return Some(i);
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub plans: Vec<QueryPlan>,
    pub sessions: Vec<Session>,
}

impl SimOutput {
    /// True relevance keyed by query and image.
    pub fn true_alpha(&self) -> BTreeMap<(String, String), f64> {
        self.plans
            .iter()
            .flat_map(|p| {
                p.image_ids
                    .iter()
                    .zip(&p.alpha)
                    .map(|(u, &a)| ((p.query_id.clone(), u.clone()), a))
            })
            .collect()
    }

    pub fn truth(&self, config: &SimConfig) -> TruthParams {
        let meta = vec![
            ("seed".to_owned(), config.seed.to_string()),
            ("p_down".to_owned(), format_value(config.p_down)),
            ("gamma_down".to_owned(), format_value(config.gamma.down)),
            ("gamma_up".to_owned(), format_value(config.gamma.up)),
            ("gamma_decay".to_owned(), format_value(config.gamma.decay)),
            ("policy".to_owned(), config.policy.name().to_owned()),
        ];
        TruthParams {
            alpha: self.true_alpha(),
            meta,
        }
    }
}

/// Simulates every query of `config`. Each session has its own random stream,
/// so the output does not depend on the number of worker threads.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let plans: Vec<QueryPlan> = (0..config.queries).map(|q| plan_query(config, q)).collect();
    let n = config.sessions_per_query;
    let sessions = (0..plans.len() * n)
        .into_par_iter()
        .map(|k| {
            let (q, s) = (k / n, k % n);
            let plan = &plans[q];
            let mut rng = derived_rng(config.seed, q as u64, s as u64);
            simulate_session(plan, config, &format!("{}-s{s:05}", plan.query_id), &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutput { plans, sessions })
}
