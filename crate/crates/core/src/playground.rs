//! Interactive session over a learned model: the human moves the player,
//! every programmed sprite advances through the interpreter once per tick.
//!
//! Transport lives elsewhere; this module owns the state machine and the JSON
//! wire messages.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dsl::Direction;
use crate::error::{Error, Result};
use crate::grid::{Grid, Position, SpriteId};
use crate::interpreter::{step, ProgramSet};

pub const DEFAULT_TICK: Duration = Duration::from_millis(250);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ended,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Action { dir: String },
    Reset,
    State,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Snapshot {
        tick: u64,
        width: usize,
        height: usize,
        /// Row-major sprite ids.
        cells: Vec<u16>,
        sprites: Vec<String>,
    },
    Ack {
        tick: u64,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Clone, Debug)]
pub struct SessionState {
    initial: Grid,
    grid: Grid,
    tick: u64,
    programs: ProgramSet,
    sprites: Vec<String>,
    player: SpriteId,
    player_pos: Position,
    tick_period: Duration,
    pending: Option<Direction>,
    status: Status,
}

impl SessionState {
    /// `initial` must hold exactly one `player` cell, and `player` must be
    /// exogenous in `programs`.
    pub fn new(
        initial: Grid,
        programs: ProgramSet,
        sprites: Vec<String>,
        player: SpriteId,
        tick_period: Duration,
    ) -> Result<Self> {
        initial.check_ids(programs.sprite_count())?;
        if sprites.len() != programs.sprite_count() {
            return Err(Error::InvalidConfig(format!(
                "{} sprite names for {} sprites",
                sprites.len(),
                programs.sprite_count()
            )));
        }
        if !programs.is_exogenous(player) {
            return Err(Error::InvalidConfig(format!(
                "player sprite {player} is not exogenous"
            )));
        }
        let found: Vec<Position> = initial.iter().filter(|&(_, s)| s == player).map(|(p, _)| p).collect();
        let player_pos = match found[..] {
            [p] => p,
            _ => {
                return Err(Error::InvalidConfig(
                    "initial grid must contain exactly one player".into(),
                ))
            }
        };
        Ok(SessionState {
            grid: initial.clone(),
            initial,
            tick: 0,
            programs,
            sprites,
            player,
            player_pos,
            tick_period,
            pending: None,
            status: Status::Running,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn tick_period(&self) -> Duration {
        self.tick_period
    }

    pub fn player_position(&self) -> Position {
        self.player_pos
    }

    pub fn pending(&self) -> Option<Direction> {
        self.pending
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn end(&mut self) {
        self.status = Status::Ended;
    }

    /// Advances one tick: player move, interpreter step, player re-overlay.
    pub fn tick(&mut self) {
        if self.status == Status::Ended {
            return;
        }
        let empty = self.programs.empty_id();
        if let Some(dir) = self.pending.take() {
            let (dc, dr) = dir.delta();
            let col = self.player_pos.col as i64 + dc as i64;
            let row = self.player_pos.row as i64 + dr as i64;
            if let (Ok(col), Ok(row)) = (u16::try_from(col), u16::try_from(row)) {
                let dest = Position::new(col, row);
                if self.grid.contains(dest) && self.grid.get(dest) == empty {
                    self.grid.set(self.player_pos, empty);
                    self.grid.set(dest, self.player);
                    self.player_pos = dest;
                }
            }
        }
        self.grid = step(&self.grid, &self.programs).expect("session grid ids are validated on creation");
        for i in 0..self.grid.cells().len() {
            if self.grid.cells()[i] == self.player && self.grid.position_of(i) != self.player_pos {
                self.grid.cells_mut()[i] = empty;
            }
        }
        self.grid.set(self.player_pos, self.player);
        self.tick += 1;
    }

    pub fn reset(&mut self) {
        self.grid = self.initial.clone();
        self.tick = 0;
        self.pending = None;
        self.status = Status::Running;
        self.player_pos = self
            .initial
            .iter()
            .find(|&(_, s)| s == self.player)
            .map(|(p, _)| p)
            .expect("initial grid holds the player");
    }

    pub fn snapshot(&self) -> ServerMessage {
        ServerMessage::Snapshot {
            tick: self.tick,
            width: self.grid.width(),
            height: self.grid.height(),
            cells: self.grid.cells().iter().map(|s| s.0).collect(),
            sprites: self.sprites.clone(),
        }
    }

    /// Exactly one reply per message; malformed input leaves the state as is.
    pub fn handle_message(&mut self, text: &str) -> ServerMessage {
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                return ServerMessage::Error {
                    message: format!("malformed message: {e}"),
                }
            }
        };
        match msg {
            ClientMessage::Action { dir } => match Direction::from_keyword(&dir) {
                Some(d) => {
                    self.pending = Some(d);
                    ServerMessage::Ack { tick: self.tick }
                }
                None => ServerMessage::Error {
                    message: format!("unknown direction `{dir}`"),
                },
            },
            ClientMessage::Reset => {
                self.reset();
                self.snapshot()
            }
            ClientMessage::State => self.snapshot(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{generate, Domain, FixtureSpec};
    use proptest::prelude::*;

    fn chase_session() -> SessionState {
        let f = generate(&FixtureSpec::new(Domain::Chase, 7)).unwrap();
        let player = f.trace.sprite_id("PLAYER").unwrap();
        SessionState::new(
            f.trace.episodes()[0][0].clone(),
            f.reference.clone(),
            f.trace.sprites().to_vec(),
            player,
            DEFAULT_TICK,
        )
        .unwrap()
    }

    fn chaser_distance(s: &SessionState) -> u32 {
        let chaser = s.grid().iter().find(|&(_, id)| id == SpriteId(1)).map(|(p, _)| p).unwrap();
        chaser.manhattan(s.player_position())
    }

    #[test]
    fn chaser_closes_in_on_a_stationary_player() {
        let mut s = chase_session();
        let mut d = chaser_distance(&s);
        for _ in 0..20 {
            s.tick();
            let next = chaser_distance(&s);
            assert!(next <= d);
            d = next;
        }
        assert!(d <= 2);
    }

    #[test]
    fn actions_move_the_player_and_borders_clamp() {
        let mut s = chase_session();
        let start = s.player_position();
        assert_eq!(s.handle_message(r#"{"type":"action","dir":"up"}"#), ServerMessage::Ack { tick: 0 });
        s.tick();
        let after = s.player_position();
        assert!(after == start || after.row + 1 == start.row);
        for _ in 0..10 {
            s.handle_message(r#"{"type":"action","dir":"up"}"#);
            s.tick();
        }
        let top = s.player_position();
        s.handle_message(r#"{"type":"action","dir":"up"}"#);
        s.tick();
        assert_eq!(s.player_position(), top);
    }

    #[test]
    fn last_action_in_a_tick_wins() {
        let mut s = chase_session();
        s.handle_message(r#"{"type":"action","dir":"up"}"#);
        s.handle_message(r#"{"type":"action","dir":"left"}"#);
        assert_eq!(s.pending(), Some(Direction::Left));
        s.tick();
        assert_eq!(s.pending(), None);
    }

    #[test]
    fn reset_restores_the_initial_snapshot() {
        let mut s = chase_session();
        let initial = s.snapshot();
        for i in 0..50 {
            let dir = ["up", "left", "down", "right"][i % 4];
            s.handle_message(&format!(r#"{{"type":"action","dir":"{dir}"}}"#));
            s.tick();
        }
        assert_eq!(s.tick_count(), 50);
        assert_eq!(s.handle_message(r#"{"type":"reset"}"#), initial);
        assert_eq!(s.handle_message(r#"{"type":"state"}"#), initial);
    }

    #[test]
    fn malformed_messages_get_errors() {
        let mut s = chase_session();
        for bad in ["", "{", r#"{"type":"jump"}"#, r#"{"type":"action","dir":"north"}"#, r#"{"type":"action"}"#] {
            assert!(matches!(s.handle_message(bad), ServerMessage::Error { .. }), "{bad}");
        }
        assert_eq!(s.pending(), None);
    }

    #[test]
    fn snapshot_wire_format() {
        let s = chase_session();
        let v: serde_json::Value = serde_json::from_str(&s.snapshot().to_json()).unwrap();
        assert_eq!(v["type"], "snapshot");
        assert_eq!(v["width"], 8);
        assert_eq!(v["cells"].as_array().unwrap().len(), 64);
        assert_eq!(v["sprites"][0], "PLAYER");
    }

    #[test]
    fn ended_sessions_do_not_advance() {
        let mut s = chase_session();
        s.end();
        s.tick();
        assert_eq!(s.tick_count(), 0);
    }

    #[test]
    fn session_requires_one_exogenous_player() {
        let f = generate(&FixtureSpec::new(Domain::Chase, 7)).unwrap();
        let g = f.trace.episodes()[0][0].clone();
        let names = f.trace.sprites().to_vec();
        assert!(SessionState::new(g.clone(), f.reference.clone(), names.clone(), SpriteId(1), DEFAULT_TICK).is_err());
        let mut two = g.clone();
        let free = two.iter().find(|&(_, s)| s == f.trace.empty_id()).map(|(p, _)| p).unwrap();
        two.set(free, SpriteId(0));
        assert!(SessionState::new(two, f.reference.clone(), names, SpriteId(0), DEFAULT_TICK).is_err());
    }

    proptest! {
        #[test]
        fn random_clients_keep_the_grid_valid(msgs in prop::collection::vec(0usize..7, 0..60)) {
            let mut s = chase_session();
            let texts = [
                r#"{"type":"action","dir":"up"}"#,
                r#"{"type":"action","dir":"down"}"#,
                r#"{"type":"action","dir":"left"}"#,
                r#"{"type":"action","dir":"right"}"#,
                r#"{"type":"reset"}"#,
                r#"{"type":"state"}"#,
                "garbage",
            ];
            let mut last_tick = 0;
            for m in msgs {
                s.handle_message(texts[m]);
                s.tick();
                prop_assert!(s.grid().check_ids(5).is_ok());
                let players = s.grid().cells().iter().filter(|&&c| c == SpriteId(0)).count();
                prop_assert_eq!(players, 1);
                prop_assert_eq!(s.grid().get(s.player_position()), SpriteId(0));
                if m != 4 {
                    prop_assert!(s.tick_count() > last_tick);
                }
                last_tick = s.tick_count();
            }
        }
    }
}
