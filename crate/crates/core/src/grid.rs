//! Grid coordinates, headings and orientation sets.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A cell coordinate. Rows grow southwards, columns grow eastwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub row: i32,
    pub col: i32,
}

impl Coord {
    pub const fn new(row: i32, col: i32) -> Self {
        Coord { row, col }
    }

    pub fn step(self, h: Heading, n: i32) -> Coord {
        let (dr, dc) = h.delta();
        Coord::new(self.row + dr * n, self.col + dc * n)
    }

    pub fn offset(self, dr: i32, dc: i32) -> Coord {
        Coord::new(self.row + dr, self.col + dc)
    }

    pub fn chebyshev(self, other: Coord) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub fn right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub fn left(self) -> Heading {
        self.right().opposite()
    }

    pub fn opposite(self) -> Heading {
        self.right().right()
    }

    pub fn axis(self) -> Axis {
        match self {
            Heading::East | Heading::West => Axis::Horizontal,
            Heading::North | Heading::South => Axis::Vertical,
        }
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Signed position of `c` along this heading; larger is further ahead.
    pub fn along(self, c: Coord) -> i32 {
        match self {
            Heading::North => -c.row,
            Heading::East => c.col,
            Heading::South => c.row,
            Heading::West => -c.col,
        }
    }

    /// Position of `c` across this heading; larger is further to the right.
    pub fn across(self, c: Coord) -> i32 {
        self.right().along(c)
    }

    pub fn from_char(ch: char) -> Option<Heading> {
        match ch {
            '^' => Some(Heading::North),
            '>' => Some(Heading::East),
            'v' => Some(Heading::South),
            '<' => Some(Heading::West),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Heading::North => '^',
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
        }
    }
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

/// A subset of the four headings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Orientations(pub u8);

impl Orientations {
    pub const EMPTY: Orientations = Orientations(0);

    pub fn single(h: Heading) -> Self {
        Orientations(h.bit())
    }

    pub fn contains(self, h: Heading) -> bool {
        self.0 & h.bit() != 0
    }

    pub fn insert(&mut self, h: Heading) {
        self.0 |= h.bit();
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Heading> {
        Heading::ALL.into_iter().filter(move |h| self.contains(*h))
    }
}
