//! Linearization of grid positions and image paths between interaction signals.
//!
//! Each row is scanned in a fixed horizontal direction; joining the rows top to
//! bottom turns the grid into a list. The path between two adjacent interaction
//! signals is then the run of list positions between them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridLayout, GridPosition};

/// Horizontal scan direction of a single row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowDirection {
    LeftToRight,
    RightToLeft,
}

impl RowDirection {
    pub fn flipped(self) -> Self {
        match self {
            RowDirection::LeftToRight => RowDirection::RightToLeft,
            RowDirection::RightToLeft => RowDirection::LeftToRight,
        }
    }
}

/// Assignment of a scan direction to every row of a page. Serialized by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DirectionPolicy {
    LeftToRight,
    RightToLeft,
    /// Adjacent rows scan in opposite directions; `first_row` fixes row 0.
    ZShape { first_row: RowDirection },
}

impl DirectionPolicy {
    /// Z-shape with row 0 scanning left to right.
    pub const fn zshape() -> Self {
        DirectionPolicy::ZShape {
            first_row: RowDirection::LeftToRight,
        }
    }

    pub fn row_direction(&self, row: usize) -> RowDirection {
        match *self {
            DirectionPolicy::LeftToRight => RowDirection::LeftToRight,
            DirectionPolicy::RightToLeft => RowDirection::RightToLeft,
            DirectionPolicy::ZShape { first_row } => {
                if row.is_multiple_of(2) {
                    first_row
                } else {
                    first_row.flipped()
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DirectionPolicy::LeftToRight => "ltor",
            DirectionPolicy::RightToLeft => "rtol",
            DirectionPolicy::ZShape {
                first_row: RowDirection::LeftToRight,
            } => "zshape",
            DirectionPolicy::ZShape {
                first_row: RowDirection::RightToLeft,
            } => "zshape-rtol",
        }
    }
}

impl Default for DirectionPolicy {
    fn default() -> Self {
        Self::zshape()
    }
}

impl fmt::Display for DirectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for DirectionPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DirectionPolicy> for String {
    fn from(p: DirectionPolicy) -> String {
        p.name().to_owned()
    }
}

impl FromStr for DirectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ltor" => Ok(DirectionPolicy::LeftToRight),
            "rtol" => Ok(DirectionPolicy::RightToLeft),
            "zshape" => Ok(DirectionPolicy::zshape()),
            "zshape-rtol" => Ok(DirectionPolicy::ZShape {
                first_row: RowDirection::RightToLeft,
            }),
            other => Err(Error::InvalidConfig(format!("unknown direction policy {other:?}"))),
        }
    }
}

/// Maps `p` to its scan index under `policy`.
pub fn linearize(layout: &GridLayout, p: GridPosition, policy: DirectionPolicy) -> Result<usize> {
    layout.check(p)?;
    Ok(linearize_unchecked(layout, p, policy))
}

fn linearize_unchecked(layout: &GridLayout, p: GridPosition, policy: DirectionPolicy) -> usize {
    let before = layout.row_offset(p.row);
    match policy.row_direction(p.row) {
        RowDirection::LeftToRight => before + p.col,
        RowDirection::RightToLeft => before + layout.row_len(p.row) - p.col - 1,
    }
}

/// Inverse of [`linearize`].
pub fn delinearize(layout: &GridLayout, k: usize, policy: DirectionPolicy) -> Result<GridPosition> {
    let total = layout.total();
    if k >= total {
        return Err(Error::IndexOutOfBounds { index: k, total });
    }
    let row = layout.row_of(k);
    let within = k - layout.row_offset(row);
    let col = match policy.row_direction(row) {
        RowDirection::LeftToRight => within,
        RowDirection::RightToLeft => layout.row_len(row) - within - 1,
    };
    Ok(GridPosition::new(row, col))
}

/// Precomputed two-way mapping between row-major and scan indices for one
/// layout and policy.
#[derive(Clone, Debug)]
pub struct Linearization {
    to_scan: Vec<usize>,
    to_row_major: Vec<usize>,
}

impl Linearization {
    pub fn new(layout: &GridLayout, policy: DirectionPolicy) -> Self {
        let total = layout.total();
        let mut to_scan = vec![0; total];
        let mut to_row_major = vec![0; total];
        for row in 0..layout.num_rows() {
            for col in 0..layout.row_len(row) {
                let p = GridPosition::new(row, col);
                let rm = layout.row_major(p);
                let k = linearize_unchecked(layout, p, policy);
                to_scan[rm] = k;
                to_row_major[k] = rm;
            }
        }
        Self {
            to_scan,
            to_row_major,
        }
    }

    pub fn scan_index(&self, row_major: usize) -> usize {
        self.to_scan[row_major]
    }

    pub fn row_major(&self, scan: usize) -> usize {
        self.to_row_major[scan]
    }

    pub fn len(&self) -> usize {
        self.to_scan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_scan.is_empty()
    }
}

/// Vertical direction of a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathDirection {
    /// Start index is at or before the end index.
    Down,
    Up,
}

/// The results between two adjacent interaction signals, both ends included,
/// in the order they are passed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePath {
    pub start_lin: usize,
    pub end_lin: usize,
    pub positions: Vec<GridPosition>,
    pub direction: PathDirection,
}

impl ImagePath {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Scan indices along the path, from start to end.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        scan_range(self.start_lin, self.end_lin)
    }
}

/// Scan indices from `m` to `n` inclusive, walking in whichever direction
/// leads from one to the other.
pub fn scan_range(m: usize, n: usize) -> impl DoubleEndedIterator<Item = usize> + Clone {
    let up = n < m;
    let (lo, hi) = if up { (n, m) } else { (m, n) };
    let len = hi - lo + 1;
    (0..len).map(move |step| if up { m - step } else { m + step })
}

pub fn build_path(
    layout: &GridLayout,
    a: GridPosition,
    b: GridPosition,
    policy: DirectionPolicy,
) -> Result<ImagePath> {
    let m = linearize(layout, a, policy)?;
    let n = linearize(layout, b, policy)?;
    let positions = scan_range(m, n)
        .map(|k| delinearize(layout, k, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImagePath {
        start_lin: m,
        end_lin: n,
        positions,
        direction: if m <= n {
            PathDirection::Down
        } else {
            PathDirection::Up
        },
    })
}
