//! Grid layouts, positions and interaction sessions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of results shown in each row of a result page.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GridLayout {
    row_counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl GridLayout {
    pub fn new(row_counts: Vec<usize>) -> Result<Self> {
        if row_counts.is_empty() {
            return Err(Error::InvalidLayout("layout has no rows".into()));
        }
        if let Some(row) = row_counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidLayout(format!("row {row} is empty")));
        }
        let mut offsets = Vec::with_capacity(row_counts.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &n in &row_counts {
            acc += n;
            offsets.push(acc);
        }
        Ok(Self {
            row_counts,
            offsets,
        })
    }

    /// A layout with `rows` rows of `width` results each.
    pub fn uniform(rows: usize, width: usize) -> Result<Self> {
        Self::new(vec![width; rows])
    }

    pub fn row_counts(&self) -> &[usize] {
        &self.row_counts
    }

    pub fn num_rows(&self) -> usize {
        self.row_counts.len()
    }

    pub fn row_len(&self, row: usize) -> usize {
        self.row_counts[row]
    }

    /// Number of results before `row` in reading order.
    pub fn row_offset(&self, row: usize) -> usize {
        self.offsets[row]
    }

    pub fn total(&self) -> usize {
        self.offsets[self.row_counts.len()]
    }

    pub fn contains(&self, p: GridPosition) -> bool {
        p.row < self.num_rows() && p.col < self.row_counts[p.row]
    }

    pub fn check(&self, p: GridPosition) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::PositionOutOfBounds(p))
        }
    }

    /// Row-major (left-to-right reading order) index of a position.
    pub fn row_major(&self, p: GridPosition) -> usize {
        self.offsets[p.row] + p.col
    }

    /// The row that holds row-major index `k`.
    pub fn row_of(&self, k: usize) -> usize {
        debug_assert!(k < self.total());
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    /// Layout restricted to the first `k` results in reading order. The last
    /// kept row may be partial, holding its leftmost columns.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("truncation must keep at least one result".into()));
        }
        if k >= self.total() {
            return Ok(self.clone());
        }
        let mut rows = Vec::new();
        let mut left = k;
        for &n in &self.row_counts {
            if left == 0 {
                break;
            }
            let take = n.min(left);
            rows.push(take);
            left -= take;
        }
        Self::new(rows)
    }

    /// Virtual end signal: the last column of the last row.
    pub fn last_position(&self) -> GridPosition {
        let row = self.num_rows() - 1;
        GridPosition::new(row, self.row_counts[row] - 1)
    }
}

impl TryFrom<Vec<usize>> for GridLayout {
    type Error = Error;

    fn try_from(rows: Vec<usize>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<GridLayout> for Vec<usize> {
    fn from(layout: GridLayout) -> Self {
        layout.row_counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPosition {
    pub row: usize,
    pub col: usize,
}

impl GridPosition {
    pub const ORIGIN: GridPosition = GridPosition { row: 0, col: 0 };

    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<(usize, usize)> for GridPosition {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// Chebyshev distance between two positions, the transition distance used
/// to measure how far the eye jumps between examined results.
pub fn transition_distance(a: GridPosition, b: GridPosition) -> usize {
    a.row.abs_diff(b.row).max(a.col.abs_diff(b.col))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Click,
    Hover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InteractionEvent {
    /// Milliseconds since the session started.
    pub timestamp: u64,
    pub kind: EventKind,
    pub position: GridPosition,
}

impl InteractionEvent {
    pub fn new(timestamp: u64, kind: EventKind, position: impl Into<GridPosition>) -> Self {
        Self {
            timestamp,
            kind,
            position: position.into(),
        }
    }
}

/// One query session: the page that was shown and what the user did on it.
///
/// Events are kept sorted by timestamp (stable for ties). Image ids are stored
/// in row-major order and cover the whole layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    session_id: String,
    query_id: String,
    layout: GridLayout,
    events: Vec<InteractionEvent>,
    image_ids: Vec<String>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        query_id: impl Into<String>,
        layout: GridLayout,
        mut events: Vec<InteractionEvent>,
        image_ids: Vec<String>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        let query_id = query_id.into();
        let invalid = |reason: String| Error::InvalidSession {
            session_id: session_id.clone(),
            reason,
        };
        if !valid_id(&session_id) {
            return Err(invalid("session id must be non-empty without whitespace".into()));
        }
        if !valid_id(&query_id) {
            return Err(invalid(format!("bad query id {query_id:?}")));
        }
        if image_ids.len() != layout.total() {
            return Err(invalid(format!(
                "{} image ids for a layout of {} results",
                image_ids.len(),
                layout.total()
            )));
        }
        if let Some(bad) = image_ids.iter().find(|id| !valid_id(id)) {
            return Err(invalid(format!("bad image id {bad:?}")));
        }
        if let Some((index, e)) = events
            .iter()
            .enumerate()
            .find(|(_, e)| !layout.contains(e.position))
        {
            return Err(Error::EventOutOfBounds {
                index,
                position: e.position,
            });
        }
        events.sort_by_key(|e| e.timestamp);
        Ok(Self {
            session_id,
            query_id,
            layout,
            events,
            image_ids,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    /// Image ids in row-major order.
    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn image_at(&self, p: GridPosition) -> &str {
        &self.image_ids[self.layout.row_major(p)]
    }

    /// Same page and ids with a different event list.
    pub fn with_events(&self, events: Vec<InteractionEvent>) -> Result<Self> {
        Session::new(
            self.session_id.clone(),
            self.query_id.clone(),
            self.layout.clone(),
            events,
            self.image_ids.clone(),
        )
    }

    /// Restricts the session to the first `k` results in reading order.
    /// Returns the truncated session and the number of dropped events.
    pub fn truncated(&self, k: usize) -> Result<(Session, usize)> {
        let layout = self.layout.truncated(k)?;
        if layout.total() == self.layout.total() {
            return Ok((self.clone(), 0));
        }
        let events: Vec<_> = self
            .events
            .iter()
            .copied()
            .filter(|e| layout.contains(e.position))
            .collect();
        let dropped = self.events.len() - events.len();
        let image_ids = self.image_ids[..layout.total()].to_vec();
        let session = Session {
            session_id: self.session_id.clone(),
            query_id: self.query_id.clone(),
            layout,
            events,
            image_ids,
        };
        Ok((session, dropped))
    }
}

/// Interaction signals of a session framed by the virtual start `(0, 0)` and
/// the virtual end at the last cell of the page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSequence {
    signals: Vec<GridPosition>,
}

impl InteractionSequence {
    pub fn signals(&self) -> &[GridPosition] {
        &self.signals
    }

    /// Real signals, without the virtual endpoints.
    pub fn interactions(&self) -> &[GridPosition] {
        &self.signals[1..self.signals.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.len() == 2
    }

    /// Adjacent signal pairs in time order. The flag is set on the final pair,
    /// whose second signal is the virtual end.
    pub fn pairs(&self) -> impl Iterator<Item = (GridPosition, GridPosition, bool)> + '_ {
        let last = self.signals.len() - 2;
        self.signals
            .windows(2)
            .enumerate()
            .map(move |(t, w)| (w[0], w[1], t == last))
    }
}

/// Builds the interaction sequence of a session. Consecutive signals at the
/// same position (a hover followed by a click on one image) collapse into one.
pub fn build_sequence(session: &Session) -> Result<InteractionSequence> {
    let layout = session.layout();
    let mut signals = Vec::with_capacity(session.events().len() + 2);
    signals.push(GridPosition::ORIGIN);
    let mut previous: Option<GridPosition> = None;
    for (index, e) in session.events().iter().enumerate() {
        if !layout.contains(e.position) {
            return Err(Error::EventOutOfBounds {
                index,
                position: e.position,
            });
        }
        if previous != Some(e.position) {
            signals.push(e.position);
            previous = Some(e.position);
        }
    }
    signals.push(layout.last_position());
    Ok(InteractionSequence { signals })
}
