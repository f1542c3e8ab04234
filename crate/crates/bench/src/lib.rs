//! Fixtures shared by the benchmarks.

use gubm::simulate::{simulate, SimConfig};
use gubm::Session;

/// Simulated log of `queries * sessions_per_query` sessions on the default
/// ten-row page.
pub fn simulated_log(queries: usize, sessions_per_query: usize, seed: u64) -> Vec<Session> {
    let config = SimConfig {
        queries,
        sessions_per_query,
        seed,
        ..Default::default()
    };
    simulate(&config).expect("default config is valid").sessions
}
