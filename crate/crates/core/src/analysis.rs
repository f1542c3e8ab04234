//! Descriptive statistics over interaction logs.
//!
//! All measures are computed over adjacent *interaction* signals (clicks and
//! hovers, consecutive repeats collapsed, virtual endpoints excluded). They
//! are interaction-based analogues of eye-tracking measures, not the same
//! quantities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::grid::{build_sequence, transition_distance, EventKind, Session};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DirectionStats {
    pub down_pairs: usize,
    pub up_pairs: usize,
    pub same_row_pairs: usize,
    /// Fractions over pairs that change row; zero when there are none.
    pub down_fraction: f64,
    pub up_fraction: f64,
    /// No pair changes row.
    pub empty: bool,
}

fn signal_pairs(session: &Session) -> Vec<(crate::GridPosition, crate::GridPosition)> {
    let seq = build_sequence(session).expect("validated session");
    seq.interactions().windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn direction_stats(sessions: &[Session]) -> DirectionStats {
    let mut stats = DirectionStats::default();
    for s in sessions {
        for (a, b) in signal_pairs(s) {
            match b.row.cmp(&a.row) {
                std::cmp::Ordering::Greater => stats.down_pairs += 1,
                std::cmp::Ordering::Less => stats.up_pairs += 1,
                std::cmp::Ordering::Equal => stats.same_row_pairs += 1,
            }
        }
    }
    let moving = stats.down_pairs + stats.up_pairs;
    if moving == 0 {
        stats.empty = true;
    } else {
        stats.down_fraction = stats.down_pairs as f64 / moving as f64;
        stats.up_fraction = stats.up_pairs as f64 / moving as f64;
    }
    stats
}

/// Fraction of adjacent interaction pairs at each transition distance.
pub fn transition_distance_histogram(sessions: &[Session]) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut total = 0usize;
    for s in sessions {
        for (a, b) in signal_pairs(s) {
            *counts.entry(transition_distance(a, b)).or_default() += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .map(|(d, n)| (d, n as f64 / total as f64))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InteractionCounts {
    pub sessions: usize,
    /// Sessions with at least one click.
    pub click_sessions: usize,
    /// Sessions with at least one hover.
    pub hover_sessions: usize,
    pub clicks: usize,
    pub hovers: usize,
}

impl InteractionCounts {
    pub fn click_session_fraction(&self) -> f64 {
        ratio(self.click_sessions, self.sessions)
    }

    pub fn hover_session_fraction(&self) -> f64 {
        ratio(self.hover_sessions, self.sessions)
    }

    /// Hover events per click event; zero without clicks.
    pub fn hover_click_ratio(&self) -> f64 {
        ratio(self.hovers, self.clicks)
    }

    pub fn merge(&self, other: &InteractionCounts) -> InteractionCounts {
        InteractionCounts {
            sessions: self.sessions + other.sessions,
            click_sessions: self.click_sessions + other.click_sessions,
            hover_sessions: self.hover_sessions + other.hover_sessions,
            clicks: self.clicks + other.clicks,
            hovers: self.hovers + other.hovers,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn interaction_counts(sessions: &[Session]) -> InteractionCounts {
    let mut c = InteractionCounts::default();
    for s in sessions {
        c.sessions += 1;
        let clicks = s.events().iter().filter(|e| e.kind == EventKind::Click).count();
        let hovers = s.events().len() - clicks;
        c.clicks += clicks;
        c.hovers += hovers;
        c.click_sessions += usize::from(clicks > 0);
        c.hover_sessions += usize::from(hovers > 0);
    }
    c
}

pub fn direction_tsv(stats: &DirectionStats) -> String {
    let mut out = String::from("measure\tvalue\n");
    let _ = writeln!(out, "interaction_pairs_down\t{}", stats.down_pairs);
    let _ = writeln!(out, "interaction_pairs_up\t{}", stats.up_pairs);
    let _ = writeln!(out, "interaction_pairs_same_row\t{}", stats.same_row_pairs);
    let _ = writeln!(out, "down_fraction\t{:.6}", stats.down_fraction);
    let _ = writeln!(out, "up_fraction\t{:.6}", stats.up_fraction);
    let _ = writeln!(out, "empty\t{}", stats.empty);
    out
}

pub fn distance_tsv(histogram: &BTreeMap<usize, f64>) -> String {
    let mut out = String::from("interaction_distance\tfraction\n");
    for (d, f) in histogram {
        let _ = writeln!(out, "{d}\t{f:.6}");
    }
    out
}

pub fn counts_tsv(c: &InteractionCounts) -> String {
    let mut out = String::from("measure\tvalue\n");
    let _ = writeln!(out, "sessions\t{}", c.sessions);
    let _ = writeln!(out, "click_sessions\t{}", c.click_sessions);
    let _ = writeln!(out, "hover_sessions\t{}", c.hover_sessions);
    let _ = writeln!(out, "clicks\t{}", c.clicks);
    let _ = writeln!(out, "hovers\t{}", c.hovers);
    let _ = writeln!(out, "click_session_fraction\t{:.6}", c.click_session_fraction());
    let _ = writeln!(out, "hover_session_fraction\t{:.6}", c.hover_session_fraction());
    let _ = writeln!(out, "hover_click_ratio\t{:.6}", c.hover_click_ratio());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridLayout, InteractionEvent};
    use crate::simulate::{simulate, AlphaSpec, GammaFamily, SimConfig};

    fn session(events: &[(EventKind, (usize, usize))]) -> Session {
        let layout = GridLayout::new(vec![4, 4, 4]).unwrap();
        let ids = (0..12).map(|k| format!("i{k}")).collect();
        let events = events
            .iter()
            .enumerate()
            .map(|(t, &(k, p))| InteractionEvent::new(t as u64, k, p))
            .collect();
        Session::new("s", "q", layout, events, ids).unwrap()
    }

    #[test]
    fn all_downward() {
        let s = session(&[
            (EventKind::Hover, (0, 1)),
            (EventKind::Hover, (1, 3)),
            (EventKind::Hover, (1, 0)),
            (EventKind::Click, (2, 2)),
        ]);
        let d = direction_stats(&[s]);
        assert_eq!((d.down_fraction, d.up_fraction), (1.0, 0.0));
        assert_eq!(d.same_row_pairs, 1);
        assert!(!d.empty);
    }

    #[test]
    fn no_moving_pairs_is_flagged() {
        let d = direction_stats(&[session(&[(EventKind::Hover, (0, 1))])]);
        assert!(d.empty);
    }

    #[test]
    fn single_pair_histogram() {
        let s = session(&[(EventKind::Hover, (0, 0)), (EventKind::Hover, (0, 3))]);
        let h = transition_distance_histogram(&[s]);
        assert_eq!(h, BTreeMap::from([(3, 1.0)]));
        assert!(transition_distance_histogram(&[session(&[])]).is_empty());
    }

    #[test]
    fn forced_unit_steps() {
        let config = SimConfig {
            queries: 1,
            sessions_per_query: 5,
            rows: 3,
            min_width: 5,
            max_width: 5,
            alpha: AlphaSpec::Fixed(1.0),
            gamma: GammaFamily::ALWAYS,
            p_down: 1.0,
            max_signals: 15,
            ..Default::default()
        };
        let out = simulate(&config).unwrap();
        let h = transition_distance_histogram(&out.sessions);
        assert_eq!(h, BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn simulated_direction_split() {
        let config = SimConfig {
            queries: 4,
            sessions_per_query: 500,
            p_down: 0.7,
            seed: 33,
            ..Default::default()
        };
        let d = direction_stats(&simulate(&config).unwrap().sessions);
        assert!(d.down_pairs + d.up_pairs >= 10_000);
        assert!((d.down_fraction - 0.7).abs() <= 0.02, "{d:?}");
        assert!((d.down_fraction + d.up_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn counts() {
        let mut sessions = Vec::new();
        for k in 0..10 {
            let events: Vec<_> = if k < 4 {
                vec![(EventKind::Hover, (0, 1)), (EventKind::Click, (0, 1))]
            } else {
                vec![(EventKind::Hover, (1, 1))]
            };
            sessions.push(session(&events));
        }
        let c = interaction_counts(&sessions);
        assert_eq!(c.click_session_fraction(), 0.4);
        assert_eq!(c.hover_sessions, 10);
        assert_eq!(c.hovers, 10);
        assert_eq!(c.clicks, 4);
        assert_eq!(interaction_counts(&[]), InteractionCounts::default());
        let split = interaction_counts(&sessions[..3]).merge(&interaction_counts(&sessions[3..]));
        assert_eq!(split, c);
    }

    #[test]
    fn simulated_hover_click_ratio() {
        let config = SimConfig {
            queries: 4,
            sessions_per_query: 1000,
            seed: 17,
            ..Default::default()
        };
        let out = simulate(&config).unwrap();
        let c = interaction_counts(&out.sessions);
        assert!(c.clicks + c.hovers > 20_000);
        let expected = 0.85 / 0.15;
        assert!((c.hover_click_ratio() - expected).abs() < 0.3, "{}", c.hover_click_ratio());
    }
}
