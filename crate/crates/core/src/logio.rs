//! Session logs, annotation files and train/test split manifests.
//!
//! A log is line-oriented JSON. The first line is the header
//! `{"format":"gubm-log","version":1}`; every following line holds one
//! session:
//!
//! ```text
//! {"session_id":"s1","query_id":"q1","rows":[4,5],"images":["a","b",...],
//!  "events":[{"t_ms":120,"kind":"hover","row":0,"col":2}, ...]}
//! ```
//!
//! `images` lists the image ids of the page in row-major order. Event kinds are
//! `click` or `hover`. Events are sorted by `t_ms` on ingest (stable for ties).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EventKind, GridLayout, InteractionEvent, Session};
use crate::metrics::AnnotationRecord;
use crate::simulate::derived_rng;

pub const LOG_FORMAT: &str = "gubm-log";
pub const LOG_VERSION: u32 = 1;
pub const SPLIT_MAGIC: &str = "#gubm-split v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogEvent {
    t_ms: u64,
    kind: EventKind,
    row: usize,
    col: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    session_id: String,
    query_id: String,
    rows: Vec<usize>,
    images: Vec<String>,
    events: Vec<LogEvent>,
}

fn header_line() -> String {
    serde_json::to_string(&Header {
        format: LOG_FORMAT.to_owned(),
        version: LOG_VERSION,
    })
    .expect("header serializes")
}

pub fn write_sessions<W: Write>(mut w: W, sessions: &[Session]) -> Result<()> {
    writeln!(w, "{}", header_line())?;
    for s in sessions {
        let line = LogLine {
            session_id: s.session_id().to_owned(),
            query_id: s.query_id().to_owned(),
            rows: s.layout().row_counts().to_vec(),
            images: s.image_ids().to_vec(),
            events: s
                .events()
                .iter()
                .map(|e| LogEvent {
                    t_ms: e.timestamp,
                    kind: e.kind,
                    row: e.position.row,
                    col: e.position.col,
                })
                .collect(),
        };
        let text = serde_json::to_string(&line).map_err(|e| Error::Io(e.into()))?;
        writeln!(w, "{text}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sessions(path: impl AsRef<Path>, sessions: &[Session]) -> Result<()> {
    let file = File::create(path)?;
    write_sessions(std::io::BufWriter::new(file), sessions)
}

/// Parses every session of a log without filtering.
pub fn read_sessions<R: BufRead>(r: R) -> Result<Vec<Session>> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty log: missing header"))??;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(Error::parse(
            1,
            format!("unsupported log {} v{}", header.format, header.version),
        ));
    }
    let mut sessions = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: LogLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let layout = GridLayout::new(raw.rows).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let events = raw
            .events
            .into_iter()
            .map(|e| InteractionEvent::new(e.t_ms, e.kind, (e.row, e.col)))
            .collect();
        let session = Session::new(raw.session_id, raw.query_id, layout, events, raw.images)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        sessions.push(session);
    }
    Ok(sessions)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadFilters {
    /// Queries with fewer sessions are dropped.
    pub min_sessions_per_query: usize,
    /// Keep at most this many sessions per query, first in file order.
    pub max_sessions_per_query: Option<usize>,
    /// Click-only mode: hover events are removed before anything else.
    pub drop_hovers: bool,
    /// Hovers followed by the next event sooner than this are removed. The
    /// last event of a session has no measurable dwell and is kept.
    pub min_hover_dwell_ms: u64,
    /// Restrict pages to their first `k` results.
    pub truncation: Option<usize>,
}

impl Default for LoadFilters {
    fn default() -> Self {
        Self {
            min_sessions_per_query: 10,
            max_sessions_per_query: Some(1000),
            drop_hovers: false,
            min_hover_dwell_ms: 0,
            truncation: Some(100),
        }
    }
}

impl LoadFilters {
    /// No filtering at all.
    pub fn none() -> Self {
        Self {
            min_sessions_per_query: 0,
            max_sessions_per_query: None,
            drop_hovers: false,
            min_hover_dwell_ms: 0,
            truncation: None,
        }
    }
}

fn filter_events(session: &Session, filters: &LoadFilters) -> Result<Session> {
    if !filters.drop_hovers && filters.min_hover_dwell_ms == 0 {
        return Ok(session.clone());
    }
    let events = session.events();
    let kept = events
        .iter()
        .enumerate()
        .filter(|(k, e)| match e.kind {
            EventKind::Click => true,
            EventKind::Hover if filters.drop_hovers => false,
            EventKind::Hover => match events.get(k + 1) {
                Some(next) => next.timestamp - e.timestamp >= filters.min_hover_dwell_ms,
                None => true,
            },
        })
        .map(|(_, e)| *e)
        .collect();
    session.with_events(kept)
}

/// Event filters and truncation per session, then the per-query session
/// thresholds. Output keeps file order.
pub fn apply_filters(sessions: Vec<Session>, filters: &LoadFilters) -> Result<Vec<Session>> {
    let mut prepared = Vec::with_capacity(sessions.len());
    for s in &sessions {
        let mut s = filter_events(s, filters)?;
        if let Some(k) = filters.truncation {
            s = s.truncated(k)?.0;
        }
        prepared.push(s);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in &prepared {
        *counts.entry(s.query_id()).or_default() += 1;
    }
    let keep_query: HashMap<String, bool> = counts
        .into_iter()
        .map(|(q, n)| (q.to_owned(), n >= filters.min_sessions_per_query))
        .collect();
    let mut taken: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::with_capacity(prepared.len());
    for s in prepared {
        if !keep_query[s.query_id()] {
            continue;
        }
        let n = taken.entry(s.query_id().to_owned()).or_default();
        if filters.max_sessions_per_query.is_some_and(|cap| *n >= cap) {
            continue;
        }
        *n += 1;
        out.push(s);
    }
    Ok(out)
}

pub fn load_sessions(path: impl AsRef<Path>, filters: &LoadFilters) -> Result<Vec<Session>> {
    let file = File::open(path)?;
    let sessions = read_sessions(BufReader::new(file))?;
    apply_filters(sessions, filters)
}

/// Reads whitespace-separated `query image topical quality` lines. Blank lines
/// and lines starting with `#` are skipped. Repeated judgements of one pair
/// resolve to the label given by a strict majority of them; without one, the
/// highest label (topical first, then quality) wins. Output is sorted by
/// query then image.
pub fn read_annotations<R: BufRead>(r: R) -> Result<Vec<AnnotationRecord>> {
    let mut votes: BTreeMap<(String, String), Vec<(u8, u8)>> = BTreeMap::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let label = |s: &str| -> Result<u8> {
            s.parse()
                .map_err(|_| Error::parse(lineno, format!("bad label {s:?}")))
        };
        let (topical, quality) = (label(fields[2])?, label(fields[3])?);
        crate::metrics::merge_relevance(topical, quality)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        votes
            .entry((fields[0].to_owned(), fields[1].to_owned()))
            .or_default()
            .push((topical, quality));
    }
    votes
        .into_iter()
        .map(|((q, u), labels)| {
            let (t, g) = resolve_votes(&labels);
            AnnotationRecord::new(q, u, t, g)
        })
        .collect()
}

pub(crate) fn resolve_votes(labels: &[(u8, u8)]) -> (u8, u8) {
    let mut counts: BTreeMap<(u8, u8), usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if let Some((&label, _)) = counts.iter().find(|(_, &n)| 2 * n > labels.len()) {
        return label;
    }
    *counts.keys().next_back().expect("at least one label")
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    read_annotations(BufReader::new(File::open(path)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fold {
    Train,
    Test,
}

impl Fold {
    pub fn name(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Test => "test",
        }
    }
}

impl std::str::FromStr for Fold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Fold::Train),
            "test" => Ok(Fold::Test),
            other => Err(Error::InvalidConfig(format!("unknown fold {other:?}"))),
        }
    }
}

/// Session ids of each fold, in log order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub assignments: Vec<(String, Fold)>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Splits the sessions of every query `train:test`, shuffling each query's
/// sessions with a stream derived from `seed` and the query id.
pub fn split_sessions(sessions: &[Session], train: u32, test: u32, seed: u64) -> Result<SplitManifest> {
    if train + test == 0 {
        return Err(Error::InvalidConfig("split ratio must not be 0:0".into()));
    }
    let mut by_query: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, s) in sessions.iter().enumerate() {
        by_query.entry(s.query_id()).or_default().push(k);
    }
    let mut folds = vec![Fold::Test; sessions.len()];
    for (query, mut members) in by_query {
        let mut rng = derived_rng(seed, fnv1a(query), 0);
        members.shuffle(&mut rng);
        let n_train = (members.len() as u64 * u64::from(train) * 2 + u64::from(train + test))
            / (2 * u64::from(train + test));
        for &k in &members[..n_train as usize] {
            folds[k] = Fold::Train;
        }
    }
    Ok(SplitManifest {
        assignments: sessions
            .iter()
            .zip(folds)
            .map(|(s, f)| (s.session_id().to_owned(), f))
            .collect(),
    })
}

impl SplitManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from(SPLIT_MAGIC);
        out.push('\n');
        for (id, fold) in &self.assignments {
            out.push_str(fold.name());
            out.push('\t');
            out.push_str(id);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(SPLIT_MAGIC) {
            return Err(Error::parse(1, format!("expected {SPLIT_MAGIC:?} header")));
        }
        let mut assignments = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (fold, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 2, "expected fold<TAB>session_id"))?;
            let fold = fold.parse().map_err(|e: Error| Error::parse(idx + 2, e.to_string()))?;
            assignments.push((id.to_owned(), fold));
        }
        Ok(Self { assignments })
    }

    /// Sessions assigned to `fold`. Sessions absent from the manifest are left out.
    pub fn select(&self, sessions: &[Session], fold: Fold) -> Vec<Session> {
        let wanted: HashMap<&str, Fold> = self
            .assignments
            .iter()
            .map(|(id, f)| (id.as_str(), *f))
            .collect();
        sessions
            .iter()
            .filter(|s| wanted.get(s.session_id()) == Some(&fold))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::grid::GridPosition;

    fn session(id: &str, query: &str, events: &[(u64, EventKind, (usize, usize))]) -> Session {
        let layout = GridLayout::new(vec![3, 2]).unwrap();
        let ids = (0..5).map(|k| format!("{query}-{k}")).collect();
        let events = events
            .iter()
            .map(|&(t, k, p)| InteractionEvent::new(t, k, p))
            .collect();
        Session::new(id, query, layout, events, ids).unwrap()
    }

    fn many(query: &str, n: usize) -> Vec<Session> {
        (0..n)
            .map(|k| session(&format!("{query}-s{k}"), query, &[(0, EventKind::Hover, (0, 1))]))
            .collect()
    }

    #[test]
    fn header_and_line_format() {
        let s = session("s1", "q1", &[(5, EventKind::Click, (1, 0))]);
        let mut buf = Vec::new();
        write_sessions(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "{\"format\":\"gubm-log\",\"version\":1}\n\
{\"session_id\":\"s1\",\"query_id\":\"q1\",\"rows\":[3,2],\"images\":[\"q1-0\",\"q1-1\",\"q1-2\",\"q1-3\",\"q1-4\"],\
\"events\":[{\"t_ms\":5,\"kind\":\"click\",\"row\":1,\"col\":0}]}\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let good = "{\"format\":\"gubm-log\",\"version\":1}\n";
        let line = |events: &str| {
            format!("{{\"session_id\":\"s\",\"query_id\":\"q\",\"rows\":[2],\"images\":[\"a\",\"b\"],\"events\":[{events}]}}\n")
        };
        let cases = [
            format!("{good}{}not json\n", line("")),
            format!("{good}{}{}", line(""), line("{\"t_ms\":1,\"kind\":\"scroll\",\"row\":0,\"col\":0}")),
            format!("{good}{}{}", line(""), line("{\"t_ms\":1,\"kind\":\"hover\",\"row\":0,\"col\":5}")),
        ];
        for text in cases {
            match read_sessions(text.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 3, "{text}"),
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(read_sessions("{\"format\":\"other\",\"version\":1}\n".as_bytes()).is_err());
        assert!(read_sessions("".as_bytes()).is_err());
    }

    #[test]
    fn unsorted_events_sorted_on_ingest() {
        let text = "{\"format\":\"gubm-log\",\"version\":1}\n\
{\"session_id\":\"s\",\"query_id\":\"q\",\"rows\":[3],\"images\":[\"a\",\"b\",\"c\"],\"events\":[\
{\"t_ms\":9,\"kind\":\"hover\",\"row\":0,\"col\":2},{\"t_ms\":1,\"kind\":\"hover\",\"row\":0,\"col\":0},\
{\"t_ms\":9,\"kind\":\"click\",\"row\":0,\"col\":1}]}\n";
        let s = &read_sessions(text.as_bytes()).unwrap()[0];
        let cols: Vec<_> = s.events().iter().map(|e| e.position.col).collect();
        assert_eq!(cols, [0, 2, 1]);
    }

    #[test]
    fn min_sessions_drops_query() {
        let mut sessions = many("small", 9);
        sessions.extend(many("big", 10));
        let out = apply_filters(sessions, &LoadFilters::default()).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|s| s.query_id() == "big"));
    }

    #[test]
    fn max_sessions_caps_in_file_order() {
        let out = apply_filters(many("q", 1500), &LoadFilters::default()).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out[999].session_id(), "q-s999");
    }

    #[test]
    fn hover_drop_keeps_clicks() {
        let s = session(
            "s",
            "q",
            &[
                (1, EventKind::Hover, (0, 0)),
                (2, EventKind::Hover, (0, 1)),
                (3, EventKind::Click, (0, 1)),
                (4, EventKind::Hover, (1, 1)),
            ],
        );
        let filters = LoadFilters {
            drop_hovers: true,
            ..LoadFilters::none()
        };
        let out = apply_filters(vec![s], &filters).unwrap();
        assert_eq!(out[0].events().len(), 1);
        assert_eq!(out[0].events()[0].kind, EventKind::Click);
    }

    #[test]
    fn hover_dwell_filter() {
        let s = session(
            "s",
            "q",
            &[
                (0, EventKind::Hover, (0, 0)),
                (50, EventKind::Hover, (0, 1)),
                (500, EventKind::Click, (0, 2)),
                (510, EventKind::Hover, (1, 1)),
            ],
        );
        let filters = LoadFilters {
            min_hover_dwell_ms: 100,
            ..LoadFilters::none()
        };
        let out = apply_filters(vec![s], &filters).unwrap();
        let kept: Vec<_> = out[0].events().iter().map(|e| e.position).collect();
        assert_eq!(kept, [GridPosition::new(0, 1), GridPosition::new(0, 2), GridPosition::new(1, 1)]);
    }

    #[test]
    fn truncation_filter() {
        let s = session("s", "q", &[(0, EventKind::Hover, (1, 1))]);
        let filters = LoadFilters {
            truncation: Some(4),
            ..LoadFilters::none()
        };
        let out = apply_filters(vec![s], &filters).unwrap();
        assert_eq!(out[0].layout().total(), 4);
        assert!(out[0].events().is_empty());
    }

    #[test]
    fn annotation_examples() {
        let text = "q1 img7 2 3\nq1\timg8\t0\t4\n# comment\n\n";
        let records = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].relevance(), 3);
        assert_eq!(records[1].relevance(), 0);
    }

    #[test]
    fn annotation_range_errors_carry_line() {
        match read_annotations("q i 1 1\nq j 3 0\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_annotations("q i 1\n".as_bytes()).is_err());
        assert!(read_annotations("q i 2 5\n".as_bytes()).is_err());
    }

    #[test]
    fn duplicate_without_majority_takes_max() {
        for quality in 0..=4 {
            let text = format!("q u 1 {quality}\nq u 2 3\n");
            let records = read_annotations(text.as_bytes()).unwrap();
            assert_eq!(records.len(), 1);
            assert_eq!(records[0].relevance(), 3);
        }
    }

    /// Exhaustive check of the vote resolver over every multiset of up to
    /// three labels drawn from a small label set.
    #[test]
    fn vote_resolver_exhaustive() {
        let labels = [(0u8, 0u8), (1, 2), (2, 1), (2, 4)];
        let mut cases = Vec::new();
        for a in 0..4 {
            cases.push(vec![labels[a]]);
            for b in 0..4 {
                cases.push(vec![labels[a], labels[b]]);
                for c in 0..4 {
                    cases.push(vec![labels[a], labels[b], labels[c]]);
                }
            }
        }
        for case in cases {
            let got = resolve_votes(&case);
            let majority = labels
                .iter()
                .find(|l| case.iter().filter(|x| x == l).count() * 2 > case.len());
            let expected = match majority {
                Some(&l) => l,
                None => *case.iter().max().unwrap(),
            };
            assert_eq!(got, expected, "{case:?}");
        }
    }

    #[test]
    fn split_is_seeded_and_stratified() {
        let mut sessions = many("a", 10);
        sessions.extend(many("b", 20));
        let m1 = split_sessions(&sessions, 7, 3, 42).unwrap();
        let m2 = split_sessions(&sessions, 7, 3, 42).unwrap();
        assert_eq!(m1, m2);
        let train = m1.select(&sessions, Fold::Train);
        let test = m1.select(&sessions, Fold::Test);
        assert_eq!(train.iter().filter(|s| s.query_id() == "a").count(), 7);
        assert_eq!(train.iter().filter(|s| s.query_id() == "b").count(), 14);
        assert_eq!(test.len(), 9);
        let m3 = split_sessions(&sessions, 7, 3, 43).unwrap();
        assert_ne!(m1, m3);
        assert_eq!(SplitManifest::from_text(&m1.to_text()).unwrap(), m1);
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(
            widths in proptest::collection::vec(1usize..5, 1..4),
            raw in proptest::collection::vec((0u64..10_000, proptest::bool::ANY, 0usize..100), 0..8),
        ) {
            let layout = GridLayout::new(widths).unwrap();
            let total = layout.total();
            let events: Vec<_> = raw
                .iter()
                .map(|&(t, click, k)| {
                    let k = k % total;
                    let row = layout.row_of(k);
                    let kind = if click { EventKind::Click } else { EventKind::Hover };
                    InteractionEvent::new(t, kind, (row, k - layout.row_offset(row)))
                })
                .collect();
            let ids = (0..total).map(|k| format!("img-{k}")).collect();
            let s = Session::new("sid", "qid", layout, events, ids).unwrap();
            let mut buf = Vec::new();
            write_sessions(&mut buf, std::slice::from_ref(&s)).unwrap();
            let back = read_sessions(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0], &s);
        }
    }
}
