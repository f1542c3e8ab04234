//! Grid-based user browsing model for two-dimensional image result pages.
//!
//! Results on an image search page are laid out in rows of varying width.
//! Users interact with results (clicks and cursor hovers) in an order that
//! can jump back up the page. The model treats every pair of adjacent
//! interaction signals as a one-directional walk over the results between
//! them and estimates, with EM, how attractive every image is for its query
//! and how likely each position on such a walk is to be examined.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod grid;
pub mod inference;
pub mod logio;
pub mod metrics;
pub mod path;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{
    build_sequence, transition_distance, EventKind, GridLayout, GridPosition, InteractionEvent,
    InteractionSequence, Session,
};
pub use inference::{em_fit, log_likelihood, EmConfig, FitReport, ParameterStore};
pub use path::{build_path, delinearize, linearize, DirectionPolicy, ImagePath, RowDirection};

/// Lower clamp applied to every probability the model estimates or predicts.
pub const PROB_FLOOR: f64 = 1e-6;

/// Clamps a probability into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}
