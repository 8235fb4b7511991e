//! Retro Coder: per-sprite programs made of single-condition if-then rules.
//!
//! ```text
//! IF (exists_in_map(PACMAN)) THEN follow_entity(PACMAN)
//! IF (is_neighboring(GHOST)) THEN change_to_entity(PACMAN)
//! ```

mod parser;
mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Position, SpriteId};

pub use parser::{parse_program, ParseError, ParseErrorKind};
pub use printer::{print_program, print_rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    /// Column and row offsets of one step.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
            Direction::Left => "LEFT",
            Direction::Right => "RIGHT",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Direction> {
        Direction::ALL
            .into_iter()
            .find(|d| d.keyword().eq_ignore_ascii_case(word))
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// The `IF` half of a rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// Some cell of the frame holds the entity.
    ExistsInMap(SpriteId),
    /// A 4-connected neighbour of the evaluating instance holds the entity.
    Neighboring(SpriteId),
    /// Somewhere in the frame the first entity touches the second.
    Neighbours(SpriteId, SpriteId),
    /// The evaluating instance sits at the given cell.
    ExistsInPosition(Position),
}

/// The `THEN` half of a rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    FollowEntity(SpriteId),
    FollowDirection(Direction),
    ChangeToEntity(SpriteId),
    FollowTargetLocation(Position),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub condition: Condition,
    pub action: Action,
}

impl Rule {
    pub const fn new(condition: Condition, action: Action) -> Self {
        Rule { condition, action }
    }
}

/// Ordered rules; every rule whose condition holds fires, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Self {
        Program { rules }
    }

    pub fn empty() -> Self {
        Program::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl From<Vec<Rule>> for Program {
    fn from(rules: Vec<Rule>) -> Self {
        Program { rules }
    }
}
