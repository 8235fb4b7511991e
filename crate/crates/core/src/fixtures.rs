//! Seeded synthetic worlds whose dynamics are known DSL programs.
//!
//! Each frame is produced by running the reference programs on the previous
//! frame and then applying the random moves of the player, plane or ghost.
//! Outside the adversarial world, a learner that recovers the reference
//! programs predicts every frame exactly.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::{Action, Condition, Direction, Program, Rule};
use crate::error::{Error, Result};
use crate::grid::{Grid, Position, SpriteId, Trace};
use crate::interpreter::{step, ProgramSet};
use crate::tokenizer::SpriteAtlas;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// A chaser follows the player; a pellet next to the player turns into a
    /// player cell and is eaten.
    Chase,
    /// Pellets scroll up a two-column river past a plane; fuel next to a
    /// pellet disappears.
    Scroll,
    /// Chase plus a randomly wandering ghost no program can describe.
    Adversarial,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Chase => "chase",
            Domain::Scroll => "scroll",
            Domain::Adversarial => "adversarial",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "chase" => Some(Domain::Chase),
            "scroll" => Some(Domain::Scroll),
            "adversarial" => Some(Domain::Adversarial),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixtureSpec {
    pub domain: Domain,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub episodes: usize,
    pub frames_per_episode: usize,
    pub pellets: usize,
    /// Fuel tanks (scroll) or walls (chase).
    pub obstacles: usize,
}

impl FixtureSpec {
    pub fn new(domain: Domain, seed: u64) -> Self {
        match domain {
            Domain::Chase | Domain::Adversarial => FixtureSpec {
                domain,
                seed,
                width: 8,
                height: 8,
                episodes: 5,
                frames_per_episode: 40,
                pellets: 4,
                obstacles: 2,
            },
            Domain::Scroll => FixtureSpec {
                domain,
                seed,
                width: 8,
                height: 8,
                episodes: 25,
                frames_per_episode: 8,
                pellets: 5,
                obstacles: 4,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub trace: Trace,
    /// Programs that generated the endogenous dynamics.
    pub reference: ProgramSet,
}

impl Fixture {
    /// Synthetic atlas for rendering this fixture.
    pub fn atlas(&self, cell: u32) -> Result<SpriteAtlas> {
        SpriteAtlas::synthetic(
            self.trace.sprites().to_vec(),
            self.trace.empty_id(),
            self.trace.exogenous_ids().to_vec(),
            cell,
            Some((self.trace.width() as u32, self.trace.height() as u32)),
        )
    }
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    match spec.domain {
        Domain::Chase | Domain::Adversarial => generate_chase_world(spec),
        Domain::Scroll => generate_scroll_world(spec),
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn random_empty_cell(g: &Grid, empty: SpriteId, rng: &mut ChaCha8Rng, ok: impl Fn(Position) -> bool) -> Option<Position> {
    let free: Vec<Position> = g.iter().filter(|&(p, s)| s == empty && ok(p)).map(|(p, _)| p).collect();
    free.choose(rng).copied()
}

fn locate(g: &Grid, s: SpriteId) -> Option<Position> {
    g.cells().iter().position(|&c| c == s).map(|i| g.position_of(i))
}

fn offset(g: &Grid, p: Position, d: Direction) -> Option<Position> {
    let (dc, dr) = d.delta();
    let c = p.col as i64 + dc as i64;
    let r = p.row as i64 + dr as i64;
    let q = Position::new(u16::try_from(c).ok()?, u16::try_from(r).ok()?);
    g.contains(q).then_some(q)
}

/// One random 4-neighbour step into an empty cell, or no move.
fn wander(g: &Grid, p: Position, empty: SpriteId, rng: &mut ChaCha8Rng) -> Option<Position> {
    let d = *Direction::ALL.choose(rng).expect("four directions");
    offset(g, p, d).filter(|&q| g.get(q) == empty)
}

fn check_size(spec: &FixtureSpec, min_w: usize, min_h: usize) -> Result<()> {
    if spec.width < min_w || spec.height < min_h || spec.width > u16::MAX as usize || spec.height > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "{} world needs a grid of at least {min_w}x{min_h}",
            spec.domain.name()
        )));
    }
    if spec.frames_per_episode < 2 || spec.episodes == 0 {
        return Err(Error::InvalidConfig(
            "fixtures need at least one episode of two frames".into(),
        ));
    }
    Ok(())
}

/// Dictionary `PLAYER, CHASER, PELLET, [GHOST,] WALL, EMPTY`; player and walls
/// are exogenous. The ghost has no reference program.
pub fn generate_chase_world(spec: &FixtureSpec) -> Result<Fixture> {
    check_size(spec, 4, 4)?;
    let adversarial = spec.domain == Domain::Adversarial;
    let dict = if adversarial {
        names(&["PLAYER", "CHASER", "PELLET", "GHOST", "WALL", "EMPTY"])
    } else {
        names(&["PLAYER", "CHASER", "PELLET", "WALL", "EMPTY"])
    };
    let id = |n: &str| SpriteId(dict.iter().position(|d| d == n).expect("known sprite") as u16);
    let (player, chaser, pellet, wall, empty) = (id("PLAYER"), id("CHASER"), id("PELLET"), id("WALL"), id("EMPTY"));
    let ghost = adversarial.then(|| id("GHOST"));
    let exogenous = vec![player, wall];

    let mut reference = ProgramSet::new(dict.len(), empty, &exogenous);
    reference.insert(
        chaser,
        Program::new(vec![Rule::new(Condition::ExistsInMap(player), Action::FollowEntity(player))]),
    )?;
    reference.insert(
        pellet,
        Program::new(vec![Rule::new(Condition::Neighboring(player), Action::ChangeToEntity(player))]),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut episodes = Vec::with_capacity(spec.episodes);
    for _ in 0..spec.episodes {
        let mut g = Grid::filled(spec.width, spec.height, empty);
        let place = |g: &mut Grid, s: SpriteId, rng: &mut ChaCha8Rng, ok: &dyn Fn(Position) -> bool| {
            if let Some(p) = random_empty_cell(g, empty, rng, ok) {
                g.set(p, s);
            }
        };
        for _ in 0..spec.obstacles {
            place(&mut g, wall, &mut rng, &|_| true);
        }
        place(&mut g, player, &mut rng, &|_| true);
        let player_at = locate(&g, player);
        // Keep the chaser off the player's doorstep so episodes start with a chase.
        place(&mut g, chaser, &mut rng, &|p| player_at.is_none_or(|q| p.manhattan(q) >= 3));
        let mut pellets: Vec<Position> = Vec::new();
        for _ in 0..spec.pellets {
            let ok = |p: Position| {
                pellets.iter().all(|&q| p.manhattan(q) >= 3) && player_at.is_none_or(|q| p.manhattan(q) >= 2)
            };
            if let Some(p) = random_empty_cell(&g, empty, &mut rng, ok) {
                g.set(p, pellet);
                pellets.push(p);
            }
        }
        if let Some(ghost) = ghost {
            place(&mut g, ghost, &mut rng, &|_| true);
        }

        let mut frames = Vec::with_capacity(spec.frames_per_episode);
        frames.push(g.clone());
        while frames.len() < spec.frames_per_episode {
            let prev = frames.last().expect("episode has a first frame");
            let mut next = step(prev, &reference)?;

            if let Some(ghost) = ghost {
                if let Some(at) = locate(&next, ghost) {
                    if let Some(to) = wander(&next, at, empty, &mut rng) {
                        next.set(at, empty);
                        next.set(to, ghost);
                    }
                }
            }

            if let Some(at) = locate(prev, player) {
                // A pellet next to the player has turned into a player cell: eat it.
                let eaten = next.iter().find(|&(p, s)| s == player && p != at).map(|(p, _)| p);
                let to = eaten.or_else(|| wander(&next, at, empty, &mut rng));
                if let Some(to) = to {
                    next.set(at, empty);
                    next.set(to, player);
                }
                let stray: Vec<Position> =
                    next.iter().filter(|&(p, s)| s == player && p != to.unwrap_or(at)).map(|(p, _)| p).collect();
                for p in stray {
                    next.set(p, empty);
                }
            }
            frames.push(next);
        }
        episodes.push(frames);
    }

    let trace = Trace::new(spec.width, spec.height, dict, empty, exogenous, episodes)?;
    Ok(Fixture {
        spec: spec.clone(),
        trace,
        reference,
    })
}

/// Dictionary `PLANE, FUEL, PELLET, EMPTY`; the plane is exogenous.
pub fn generate_scroll_world(spec: &FixtureSpec) -> Result<Fixture> {
    check_size(spec, 4, 5)?;
    let dict = names(&["PLANE", "FUEL", "PELLET", "EMPTY"]);
    let (plane, fuel, pellet, empty) = (SpriteId(0), SpriteId(1), SpriteId(2), SpriteId(3));
    let mid = (spec.width / 2) as u16;
    let river = [mid - 1, mid];
    let banks = [mid - 2, mid + 1];
    let bottom = (spec.height - 1) as u16;

    let mut reference = ProgramSet::new(dict.len(), empty, &[plane]);
    reference.insert(
        fuel,
        Program::new(vec![Rule::new(Condition::Neighboring(pellet), Action::ChangeToEntity(empty))]),
    )?;
    let mut pellet_rules = vec![Rule::new(Condition::ExistsInMap(plane), Action::FollowDirection(Direction::Up))];
    pellet_rules.extend(
        river.iter().map(|&c| Rule::new(Condition::ExistsInPosition(Position::new(c, 0)), Action::ChangeToEntity(empty))),
    );
    reference.insert(pellet, Program::new(pellet_rules))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut episodes = Vec::with_capacity(spec.episodes);
    for _ in 0..spec.episodes {
        let mut g = Grid::filled(spec.width, spec.height, empty);
        g.set(Position::new(*river.choose(&mut rng).expect("two columns"), bottom), plane);
        let (mut pellet_col, mut pellet_row) = (0, 0);
        // Pellets start clear of the top row, the first two stacked in one column.
        let lane = |p: Position| river.contains(&p.col) && (2..bottom).contains(&p.row);
        for i in 0..spec.pellets {
            let spot = if i == 1 {
                let below = Position::new(pellet_col, pellet_row + 1);
                Some(below).filter(|&q| lane(q) && g.get(q) == empty)
            } else {
                None
            };
            let spot = spot.or_else(|| random_empty_cell(&g, empty, &mut rng, |p| lane(p) && (i > 0 || p.row + 1 < bottom)));
            if let Some(p) = spot {
                g.set(p, pellet);
                if i == 0 {
                    (pellet_col, pellet_row) = (p.col, p.row);
                }
            }
        }
        let mut tanks: Vec<Position> = Vec::new();
        for _ in 0..spec.obstacles {
            let ok = |p: Position| banks.contains(&p.col) && p.row < bottom && tanks.iter().all(|&q| p.manhattan(q) >= 2);
            if let Some(p) = random_empty_cell(&g, empty, &mut rng, ok) {
                g.set(p, fuel);
                tanks.push(p);
            }
        }

        let mut frames = Vec::with_capacity(spec.frames_per_episode);
        frames.push(g);
        while frames.len() < spec.frames_per_episode {
            let prev = frames.last().expect("episode has a first frame");
            let mut next = step(prev, &reference)?;
            if let Some(at) = locate(prev, plane) {
                let to = Position::new(*river.choose(&mut rng).expect("two columns"), bottom);
                if rng.random_bool(0.5) && next.get(to) == empty {
                    next.set(at, empty);
                    next.set(to, plane);
                }
            }
            frames.push(next);
        }
        episodes.push(frames);
    }

    let trace = Trace::new(spec.width, spec.height, dict, empty, vec![plane], episodes)?;
    Ok(Fixture {
        spec: spec.clone(),
        trace,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{rollout, Approach};

    fn count(g: &Grid, s: SpriteId) -> usize {
        g.cells().iter().filter(|&&c| c == s).count()
    }

    #[test]
    fn generation_is_deterministic() {
        for d in [Domain::Chase, Domain::Scroll, Domain::Adversarial] {
            let a = generate(&FixtureSpec::new(d, 7)).unwrap();
            let b = generate(&FixtureSpec::new(d, 7)).unwrap();
            assert_eq!(a.trace, b.trace);
            let c = generate(&FixtureSpec::new(d, 8)).unwrap();
            assert_ne!(a.trace, c.trace);
        }
    }

    #[test]
    fn reference_programs_reproduce_their_worlds() {
        for d in [Domain::Chase, Domain::Scroll] {
            for seed in 0..5 {
                let f = generate(&FixtureSpec::new(d, seed)).unwrap();
                for mode in [Approach::TeacherForced, Approach::Autoregressive] {
                    let r = rollout(&f.trace, &f.reference, mode).unwrap();
                    assert_eq!(r.total_hamming(), 0, "{} seed {seed} mode {mode}", d.name());
                }
            }
        }
    }

    #[test]
    fn chase_world_has_one_player_and_one_chaser() {
        let f = generate(&FixtureSpec::new(Domain::Chase, 3)).unwrap();
        for frames in f.trace.episodes() {
            for g in frames {
                assert_eq!(count(g, SpriteId(0)), 1);
                assert_eq!(count(g, SpriteId(1)), 1);
                assert_eq!(count(g, SpriteId(3)), 2);
            }
        }
    }

    #[test]
    fn chase_world_pellets_get_eaten() {
        let f = generate(&FixtureSpec::new(Domain::Chase, 1)).unwrap();
        let eaten: usize = f
            .trace
            .episodes()
            .iter()
            .map(|e| count(&e[0], SpriteId(2)) - count(e.last().unwrap(), SpriteId(2)))
            .sum();
        assert!(eaten > 0);
    }

    #[test]
    fn chase_world_chaser_moves() {
        let f = generate(&FixtureSpec::new(Domain::Chase, 2)).unwrap();
        let moved = f.trace.episodes().iter().any(|e| e.windows(2).any(|w| {
            let at = |g: &Grid| g.iter().find(|&(_, s)| s == SpriteId(1)).map(|(p, _)| p);
            at(&w[0]) != at(&w[1])
        }));
        assert!(moved);
    }

    #[test]
    fn scroll_world_keeps_fuel_on_the_banks() {
        let f = generate(&FixtureSpec::new(Domain::Scroll, 4)).unwrap();
        for frames in f.trace.episodes() {
            for g in frames {
                for (p, s) in g.iter() {
                    match s.0 {
                        0 => assert!(p.row == 7 && (p.col == 3 || p.col == 4)),
                        1 => assert!(p.col == 2 || p.col == 5),
                        2 => assert!(p.col == 3 || p.col == 4),
                        _ => {}
                    }
                }
            }
            assert_eq!(count(frames.last().unwrap(), SpriteId(2)), 0);
        }
    }

    #[test]
    fn ghost_is_not_explained_by_the_reference() {
        let f = generate(&FixtureSpec::new(Domain::Adversarial, 5)).unwrap();
        assert!(!f.trace.is_exogenous(f.trace.sprite_id("GHOST").unwrap()));
        assert!(rollout(&f.trace, &f.reference, Approach::TeacherForced).unwrap().total_hamming() > 0);
    }

    #[test]
    fn tiny_grids_are_rejected() {
        let mut s = FixtureSpec::new(Domain::Scroll, 0);
        s.width = 3;
        assert!(generate(&s).is_err());
        let mut s = FixtureSpec::new(Domain::Chase, 0);
        s.frames_per_episode = 1;
        assert!(generate(&s).is_err());
    }
}
