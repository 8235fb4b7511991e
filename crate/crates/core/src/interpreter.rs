//! One-step semantics for a set of per-sprite programs.
//!
//! Every instance of a programmed sprite evaluates its rules against the
//! snapshot at its origin cell; the actions of all firing rules accumulate on
//! a pending instance. Instances are then committed in row-major origin order
//! onto a grid from which all of them were first removed.

use crate::dsl::{Action, Condition, Program};
use crate::error::{Error, Result};
use crate::grid::{Grid, Position, SpriteId};

/// Programs for the learnable sprites of one dictionary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramSet {
    programs: Vec<Option<Program>>,
    empty_id: SpriteId,
    exogenous: Vec<bool>,
}

impl ProgramSet {
    pub fn new(sprite_count: usize, empty_id: SpriteId, exogenous_ids: &[SpriteId]) -> Self {
        let mut exogenous = vec![false; sprite_count];
        for s in exogenous_ids {
            if let Some(slot) = exogenous.get_mut(s.index()) {
                *slot = true;
            }
        }
        ProgramSet {
            programs: vec![None; sprite_count],
            empty_id,
            exogenous,
        }
    }

    pub fn for_trace(trace: &crate::grid::Trace) -> Self {
        ProgramSet::new(trace.sprite_count(), trace.empty_id(), trace.exogenous_ids())
    }

    pub fn sprite_count(&self) -> usize {
        self.programs.len()
    }

    pub fn empty_id(&self) -> SpriteId {
        self.empty_id
    }

    pub fn is_exogenous(&self, s: SpriteId) -> bool {
        self.exogenous.get(s.index()).copied().unwrap_or(false)
    }

    /// Registers a program. The empty sprite and exogenous sprites cannot be
    /// programmed.
    pub fn insert(&mut self, sprite: SpriteId, program: Program) -> Result<()> {
        if sprite.index() >= self.programs.len() {
            return Err(Error::SpriteOutOfRange {
                id: sprite.index(),
                count: self.programs.len(),
            });
        }
        if sprite == self.empty_id || self.is_exogenous(sprite) {
            return Err(Error::InvalidConfig(format!(
                "sprite {sprite} is empty or exogenous and cannot hold a program"
            )));
        }
        self.programs[sprite.index()] = Some(program);
        Ok(())
    }

    pub fn remove(&mut self, sprite: SpriteId) -> Option<Program> {
        self.programs.get_mut(sprite.index()).and_then(Option::take)
    }

    pub fn get(&self, sprite: SpriteId) -> Option<&Program> {
        self.programs.get(sprite.index()).and_then(Option::as_ref)
    }

    /// `(sprite, program)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (SpriteId, &Program)> {
        self.programs
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|p| (SpriteId(i as u16), p)))
    }

    pub fn len(&self) -> usize {
        self.programs.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where a programmed instance started this step and what it has become so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingInstance {
    pub origin: Position,
    pub current_pos: Position,
    pub current_type: SpriteId,
}

impl PendingInstance {
    pub fn at(origin: Position, sprite: SpriteId) -> Self {
        PendingInstance {
            origin,
            current_pos: origin,
            current_type: sprite,
        }
    }
}

/// Per-snapshot lookup tables shared by every condition evaluated on it.
#[derive(Clone, Debug)]
pub struct SnapshotIndex {
    sprite_count: usize,
    present: Vec<bool>,
    // touching[a * l + b]: some a-cell has a 4-neighbour holding b
    touching: Vec<bool>,
}

impl SnapshotIndex {
    pub fn new(grid: &Grid, sprite_count: usize) -> Self {
        let l = sprite_count;
        let mut present = vec![false; l];
        let mut touching = vec![false; l * l];
        for (pos, s) in grid.iter() {
            let a = s.index();
            if a >= l {
                continue;
            }
            present[a] = true;
            for n in grid.neighbours(pos) {
                let b = grid.get(n).index();
                if b < l {
                    touching[a * l + b] = true;
                }
            }
        }
        SnapshotIndex {
            sprite_count: l,
            present,
            touching,
        }
    }

    fn present(&self, s: SpriteId) -> bool {
        self.present.get(s.index()).copied().unwrap_or(false)
    }

    fn touching(&self, a: SpriteId, b: SpriteId) -> bool {
        let l = self.sprite_count;
        a.index() < l && b.index() < l && self.touching[a.index() * l + b.index()]
    }
}

/// Evaluates `condition` for an instance at `self_pos` against `grid`.
pub fn eval_condition(condition: &Condition, grid: &Grid, self_pos: Position) -> bool {
    match *condition {
        Condition::ExistsInMap(e) => grid.contains_sprite(e),
        Condition::Neighboring(e) => grid.neighbours(self_pos).any(|n| grid.get(n) == e),
        Condition::Neighbours(a, b) => grid
            .iter()
            .any(|(p, s)| s == a && grid.neighbours(p).any(|n| grid.get(n) == b)),
        Condition::ExistsInPosition(p) => self_pos == p,
    }
}

fn eval_condition_indexed(
    condition: &Condition,
    grid: &Grid,
    index: &SnapshotIndex,
    self_pos: Position,
) -> bool {
    match *condition {
        Condition::ExistsInMap(e) => index.present(e),
        Condition::Neighboring(e) => grid.neighbours(self_pos).any(|n| grid.get(n) == e),
        Condition::Neighbours(a, b) => index.touching(a, b),
        Condition::ExistsInPosition(p) => self_pos == p,
    }
}

/// One cell from `from` toward `to`: along the axis with the larger gap,
/// horizontal on ties. Returns `from` when already there.
fn step_toward(from: Position, to: Position) -> Position {
    let dc = to.col as i32 - from.col as i32;
    let dr = to.row as i32 - from.row as i32;
    if dc == 0 && dr == 0 {
        return from;
    }
    if dc.abs() >= dr.abs() {
        Position::new((from.col as i32 + dc.signum()) as u16, from.row)
    } else {
        Position::new(from.col, (from.row as i32 + dr.signum()) as u16)
    }
}

/// Nearest cell holding `target` by Manhattan distance from `from`, ignoring
/// the instance's own origin; ties go to the first cell in row-major order.
fn nearest(grid: &Grid, target: SpriteId, from: Position, origin: Position) -> Option<Position> {
    grid.iter()
        .filter(|&(p, s)| s == target && p != origin)
        .min_by_key(|&(p, _)| from.manhattan(p))
        .map(|(p, _)| p)
}

/// Applies one action to a pending instance. Degenerate cases are no-ops.
pub fn apply_action(action: &Action, inst: PendingInstance, grid: &Grid) -> PendingInstance {
    let mut out = inst;
    match *action {
        Action::FollowEntity(e) => {
            if let Some(t) = nearest(grid, e, inst.current_pos, inst.origin) {
                out.current_pos = step_toward(inst.current_pos, t);
            }
        }
        Action::FollowDirection(d) => {
            let (dc, dr) = d.delta();
            let c = inst.current_pos.col as i32 + dc;
            let r = inst.current_pos.row as i32 + dr;
            if c >= 0 && r >= 0 && (c as usize) < grid.width() && (r as usize) < grid.height() {
                out.current_pos = Position::new(c as u16, r as u16);
            }
        }
        Action::ChangeToEntity(e) => out.current_type = e,
        Action::FollowTargetLocation(p) => {
            if grid.contains(p) {
                out.current_pos = step_toward(inst.current_pos, p);
            }
        }
    }
    out
}

/// Advances every programmed sprite by one tick.
pub fn step(grid: &Grid, programs: &ProgramSet) -> Result<Grid> {
    grid.check_ids(programs.sprite_count())?;
    if programs.empty_id.index() >= programs.sprite_count() {
        return Err(Error::SpriteOutOfRange {
            id: programs.empty_id.index(),
            count: programs.sprite_count(),
        });
    }
    let index = SnapshotIndex::new(grid, programs.sprite_count());
    Ok(step_indexed(grid, &index, programs, None))
}

/// [`step`] without validation, reusing a precomputed snapshot index.
/// `override_program` replaces (or adds) the program of one sprite.
pub(crate) fn step_indexed(
    grid: &Grid,
    index: &SnapshotIndex,
    programs: &ProgramSet,
    override_program: Option<(SpriteId, &Program)>,
) -> Grid {
    let lookup = |s: SpriteId| -> Option<&Program> {
        match override_program {
            Some((target, p)) if target == s => Some(p),
            _ => programs.get(s),
        }
    };

    let empty = programs.empty_id;
    let mut out = grid.clone();
    let mut pending = Vec::new();
    for (i, &s) in grid.cells().iter().enumerate() {
        if let Some(program) = lookup(s) {
            out.cells_mut()[i] = empty;
            pending.push((grid.position_of(i), s, program));
        }
    }

    let mut resolved = Vec::with_capacity(pending.len());
    for (origin, sprite, program) in pending {
        let mut inst = PendingInstance::at(origin, sprite);
        for rule in &program.rules {
            if eval_condition_indexed(&rule.condition, grid, index, origin) {
                inst = apply_action(&rule.action, inst, grid);
            }
        }
        resolved.push(inst);
    }

    for inst in resolved {
        if inst.current_type == empty {
            continue;
        }
        let dest = out.index_of(inst.current_pos);
        let home = out.index_of(inst.origin);
        if out.cells()[dest] == empty {
            out.cells_mut()[dest] = inst.current_type;
        } else if out.cells()[home] == empty {
            out.cells_mut()[home] = inst.current_type;
        }
    }
    out
}

/// Exogenous sprites leave the cells they held in `input` and reappear where
/// `truth` has them, but only on cells the prediction left empty.
pub fn overlay_exogenous(predicted: &mut Grid, input: &Grid, truth: &Grid, programs: &ProgramSet) {
    let empty = programs.empty_id;
    let cells = predicted.cells_mut();
    for (i, &s) in input.cells().iter().enumerate() {
        if programs.is_exogenous(s) && cells[i] == s {
            cells[i] = empty;
        }
    }
    for (i, &s) in truth.cells().iter().enumerate() {
        if programs.is_exogenous(s) && cells[i] == empty {
            cells[i] = s;
        }
    }
}
