//! Greedy hill-climbing over programs, one sprite at a time.
//!
//! For each target sprite the frames containing it are cut into consecutive
//! windows of `batch_size` frames. Within a window the search repeatedly
//! evaluates every neighbour of the current program (one rule appended or one
//! rule removed) and adopts the strictly best one until nothing improves; the
//! program then carries over to the next window.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dsl::{Action, Condition, Direction, Program, Rule};
use crate::error::{Error, Result};
use crate::grid::{FrameRef, Grid, Position, SpriteId, Trace};
use crate::interpreter::{overlay_exogenous, step_indexed, ProgramSet, SnapshotIndex};

pub const DEFAULT_BATCH_SIZE: usize = 3;
pub const DEFAULT_MAX_RULES: usize = 16;

/// Arguments the search may plug into conditions and actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Vec<SpriteId>,
    pub directions: Vec<Direction>,
    pub positions: Vec<Position>,
}

impl Vocabulary {
    /// Every sprite, every direction and every cell.
    pub fn full(sprite_count: usize, width: usize, height: usize) -> Self {
        Vocabulary {
            entities: (0..sprite_count as u16).map(SpriteId).collect(),
            directions: Direction::ALL.to_vec(),
            positions: (0..height as u16)
                .flat_map(|r| (0..width as u16).map(move |c| Position::new(c, r)))
                .collect(),
        }
    }

    /// Conditions in canonical order: existence, self-adjacency, pairwise
    /// adjacency, then positions.
    pub fn conditions(&self) -> Vec<Condition> {
        let e = &self.entities;
        let mut out: Vec<Condition> = Vec::new();
        out.extend(e.iter().map(|&s| Condition::ExistsInMap(s)));
        out.extend(e.iter().map(|&s| Condition::Neighboring(s)));
        out.extend(
            e.iter()
                .flat_map(|&a| e.iter().map(move |&b| Condition::Neighbours(a, b))),
        );
        out.extend(self.positions.iter().map(|&p| Condition::ExistsInPosition(p)));
        dedup_in_order(out)
    }

    /// Actions in canonical order: chase, directional move, transform, then
    /// move-to-target.
    pub fn actions(&self) -> Vec<Action> {
        let mut out: Vec<Action> = Vec::new();
        out.extend(self.entities.iter().map(|&s| Action::FollowEntity(s)));
        out.extend(self.directions.iter().map(|&d| Action::FollowDirection(d)));
        out.extend(self.entities.iter().map(|&s| Action::ChangeToEntity(s)));
        out.extend(self.positions.iter().map(|&p| Action::FollowTargetLocation(p)));
        dedup_in_order(out)
    }

    /// All single rules in `(condition, action)` order.
    pub fn rules(&self) -> Vec<Rule> {
        let actions = self.actions();
        self.conditions()
            .into_iter()
            .flat_map(|c| actions.iter().map(move |&a| Rule::new(c, a)))
            .collect()
    }
}

fn dedup_in_order<T: Eq + std::hash::Hash + Copy>(items: Vec<T>) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|x| seen.insert(*x)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub batch_size: usize,
    pub targets: Vec<SpriteId>,
    pub vocabulary: Vocabulary,
    pub max_rules: usize,
    /// Skip additions of a rule the program already contains.
    pub dedup_rules: bool,
}

impl SynthesisConfig {
    /// Defaults for a trace: every sprite that is neither empty nor exogenous
    /// is a target, with the full vocabulary.
    pub fn for_trace(trace: &Trace) -> Self {
        let targets = (0..trace.sprite_count() as u16)
            .map(SpriteId)
            .filter(|&s| s != trace.empty_id() && !trace.is_exogenous(s))
            .collect();
        SynthesisConfig {
            batch_size: DEFAULT_BATCH_SIZE,
            targets,
            vocabulary: Vocabulary::full(trace.sprite_count(), trace.width(), trace.height()),
            max_rules: DEFAULT_MAX_RULES,
            dedup_rules: false,
        }
    }

    pub fn validate(&self, trace: &Trace) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        let count = trace.sprite_count();
        for &s in self.targets.iter().chain(&self.vocabulary.entities) {
            if s.index() >= count {
                return Err(Error::SpriteOutOfRange {
                    id: s.index(),
                    count,
                });
            }
        }
        for &s in &self.targets {
            if s == trace.empty_id() || trace.is_exogenous(s) {
                return Err(Error::InvalidConfig(format!(
                    "target `{}` is empty or exogenous",
                    trace.sprite_name(s).unwrap_or("?")
                )));
            }
        }
        if let Some(p) = self
            .vocabulary
            .positions
            .iter()
            .find(|p| p.col as usize >= trace.width() || p.row as usize >= trace.height())
        {
            return Err(Error::InvalidConfig(format!("vocabulary position {p} is off the grid")));
        }
        Ok(())
    }
}

/// A single hill-climbing move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Edit {
    Add(Rule),
    Remove(usize),
}

impl Edit {
    pub fn apply(&self, program: &Program) -> Program {
        let mut rules = program.rules.clone();
        match *self {
            Edit::Add(rule) => rules.push(rule),
            Edit::Remove(i) => {
                rules.remove(i);
            }
        }
        Program::new(rules)
    }
}

/// Neighbour moves in canonical order: additions in vocabulary order, then
/// removals by rule index. Removals producing the same program are kept once.
pub fn neighbor_edits(program: &Program, cfg: &SynthesisConfig) -> Vec<Edit> {
    let mut out = Vec::new();
    if program.len() < cfg.max_rules {
        out.extend(
            cfg.vocabulary
                .rules()
                .into_iter()
                .filter(|r| !cfg.dedup_rules || !program.rules.contains(r))
                .map(Edit::Add),
        );
    }
    let mut seen = std::collections::HashSet::new();
    for i in 0..program.len() {
        let mut rest = program.rules.clone();
        rest.remove(i);
        if seen.insert(rest) {
            out.push(Edit::Remove(i));
        }
    }
    out
}

pub fn neighbor_programs(program: &Program, cfg: &SynthesisConfig) -> Vec<Program> {
    neighbor_edits(program, cfg)
        .iter()
        .map(|e| e.apply(program))
        .collect()
}

/// The identity predictor.
pub fn prior_frame_predict(grid: &Grid) -> Grid {
    grid.clone()
}

struct WindowFrame<'a> {
    current: &'a Grid,
    next: &'a Grid,
    index: SnapshotIndex,
}

fn window_frames<'a>(trace: &'a Trace, window: &[FrameRef]) -> Result<Vec<WindowFrame<'a>>> {
    window
        .iter()
        .map(|&r| {
            let episode = trace.episodes().get(r.episode).ok_or_else(|| {
                Error::InvalidWindow(format!("episode {} does not exist", r.episode))
            })?;
            match (episode.get(r.frame), episode.get(r.frame + 1)) {
                (Some(current), Some(next)) => Ok(WindowFrame {
                    current,
                    next,
                    index: SnapshotIndex::new(current, trace.sprite_count()),
                }),
                _ => Err(Error::InvalidWindow(format!(
                    "frame {} of episode {} has no successor",
                    r.frame, r.episode
                ))),
            }
        })
        .collect()
}

/// Sum of next-frame distances; stops early once `cutoff` is reached.
fn frames_loss(
    frames: &[WindowFrame<'_>],
    context: &ProgramSet,
    target: SpriteId,
    program: &Program,
    cutoff: u64,
) -> u64 {
    let mut total = 0;
    for f in frames {
        let mut predicted = step_indexed(f.current, &f.index, context, Some((target, program)));
        overlay_exogenous(&mut predicted, f.current, f.next, context);
        total += predicted
            .cells()
            .iter()
            .zip(f.next.cells())
            .filter(|(a, b)| a != b)
            .count() as u64;
        if total >= cutoff {
            return total;
        }
    }
    total
}

/// Total distance between the predictions of `context` (with `program`
/// installed for `target`) and the recorded successors of `window`.
/// Exogenous cells of each prediction come from the recorded successor.
pub fn window_loss(
    program: &Program,
    trace: &Trace,
    target: SpriteId,
    window: &[FrameRef],
    context: &ProgramSet,
) -> Result<u64> {
    if context.sprite_count() != trace.sprite_count() {
        return Err(Error::InvalidConfig(
            "program set and trace use different dictionaries".into(),
        ));
    }
    let frames = window_frames(trace, window)?;
    Ok(frames_loss(&frames, context, target, program, u64::MAX))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcceptedEdit {
    pub edit: Edit,
    /// Window loss after adopting the edit.
    pub loss: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowRecord {
    pub frames: Vec<FrameRef>,
    /// Loss of the program carried into the window.
    pub baseline: u64,
    pub accepted: Vec<AcceptedEdit>,
    pub final_loss: u64,
}

/// Outcome of learning one sprite.
#[derive(Clone, Debug)]
pub struct SpriteSynthesis {
    pub sprite: SpriteId,
    pub program: Program,
    pub windows: Vec<WindowRecord>,
    pub evaluated: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub duration: Duration,
    /// Set when the sprite never appears in a frame with a successor.
    pub warning: Option<String>,
}

impl SpriteSynthesis {
    /// One condition per rule, so this is also the condition count.
    pub fn rule_count(&self) -> usize {
        self.program.len()
    }
}

/// Learns a program for `sprite` with `context` providing the behaviour of
/// every other sprite.
pub fn synthesize_sprite(
    trace: &Trace,
    sprite: SpriteId,
    cfg: &SynthesisConfig,
    context: &ProgramSet,
) -> Result<SpriteSynthesis> {
    cfg.validate(trace)?;
    if !cfg.targets.contains(&sprite) {
        return Err(Error::InvalidConfig(format!(
            "sprite `{}` is not a synthesis target",
            trace.sprite_name(sprite).unwrap_or("?")
        )));
    }
    if context.sprite_count() != trace.sprite_count() {
        return Err(Error::InvalidConfig(
            "program set and trace use different dictionaries".into(),
        ));
    }

    let started = Instant::now();
    let occurrences = trace.occurrence_indices(sprite);
    let mut result = SpriteSynthesis {
        sprite,
        program: Program::empty(),
        windows: Vec::new(),
        evaluated: 0,
        accepted: 0,
        rejected: 0,
        duration: Duration::ZERO,
        warning: None,
    };
    if occurrences.is_empty() {
        result.warning = Some(format!(
            "sprite `{}` never occurs in a frame with a successor",
            trace.sprite_name(sprite).unwrap_or("?")
        ));
        return Ok(result);
    }

    let mut program = Program::empty();
    for window in occurrences.chunks(cfg.batch_size) {
        let frames = window_frames(trace, window)?;
        let baseline = frames_loss(&frames, context, sprite, &program, u64::MAX);
        let mut best = baseline;
        let mut accepted = Vec::new();

        while best > 0 {
            let edits = neighbor_edits(&program, cfg);
            let losses: Vec<u64> = edits
                .par_iter()
                .map(|e| frames_loss(&frames, context, sprite, &e.apply(&program), best))
                .collect();
            result.evaluated += edits.len() as u64;

            // First minimum in canonical order.
            let winner = losses
                .iter()
                .enumerate()
                .fold(None::<(usize, u64)>, |acc, (i, &l)| match acc {
                    Some((_, b)) if b <= l => acc,
                    _ => Some((i, l)),
                });
            match winner {
                Some((i, loss)) if loss < best => {
                    program = edits[i].apply(&program);
                    best = loss;
                    accepted.push(AcceptedEdit {
                        edit: edits[i],
                        loss,
                    });
                    result.accepted += 1;
                    result.rejected += edits.len() as u64 - 1;
                }
                _ => {
                    result.rejected += edits.len() as u64;
                    break;
                }
            }
        }

        result.windows.push(WindowRecord {
            frames: window.to_vec(),
            baseline,
            accepted,
            final_loss: best,
        });
    }

    result.program = program;
    result.duration = started.elapsed();
    Ok(result)
}

/// Programs for every target plus the per-sprite search records.
#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub order: Vec<SpriteId>,
    pub sprites: Vec<SpriteSynthesis>,
    pub programs: ProgramSet,
    pub duration: Duration,
}

impl SynthesisReport {
    pub fn sprite(&self, s: SpriteId) -> Option<&SpriteSynthesis> {
        self.sprites.iter().find(|r| r.sprite == s)
    }
}

/// Learns every target in dictionary order.
pub fn synthesize_all(trace: &Trace, cfg: &SynthesisConfig) -> Result<SynthesisReport> {
    let mut order = cfg.targets.clone();
    order.sort();
    order.dedup();
    synthesize_in_order(trace, cfg, &order)
}

/// Learns the given targets in sequence. Targets not yet learned take part
/// in every prediction as idle instances (empty programs); learned ones run
/// their program.
pub fn synthesize_in_order(
    trace: &Trace,
    cfg: &SynthesisConfig,
    order: &[SpriteId],
) -> Result<SynthesisReport> {
    cfg.validate(trace)?;
    let started = Instant::now();
    let mut context = ProgramSet::for_trace(trace);
    for &s in order {
        if !cfg.targets.contains(&s) {
            return Err(Error::InvalidConfig(format!(
                "sprite `{}` is not a synthesis target",
                trace.sprite_name(s).unwrap_or("?")
            )));
        }
        context.insert(s, Program::empty())?;
    }

    let mut sprites = Vec::with_capacity(order.len());
    for &s in order {
        let learned = synthesize_sprite(trace, s, cfg, &context)?;
        context.insert(s, learned.program.clone())?;
        sprites.push(learned);
    }
    Ok(SynthesisReport {
        order: order.to_vec(),
        sprites,
        programs: context,
        duration: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::grid_distance;

    const EMPTY: SpriteId = SpriteId(0);
    const A: SpriteId = SpriteId(1);
    const B: SpriteId = SpriteId(2);

    fn tiny_vocab() -> SynthesisConfig {
        SynthesisConfig {
            batch_size: 3,
            targets: vec![A],
            vocabulary: Vocabulary {
                entities: vec![B],
                directions: vec![Direction::Up],
                positions: vec![],
            },
            max_rules: 16,
            dedup_rules: false,
        }
    }

    #[test]
    fn vocabulary_cross_product() {
        let cfg = tiny_vocab();
        // exists(B), neighboring(B), neighbours(B,B) x follow(B), up, change(B)
        assert_eq!(cfg.vocabulary.conditions().len(), 3);
        assert_eq!(cfg.vocabulary.actions().len(), 3);
        assert_eq!(neighbor_programs(&Program::empty(), &cfg).len(), 9);
    }

    #[test]
    fn two_conditions_by_two_actions() {
        let mut cfg = tiny_vocab();
        cfg.vocabulary = Vocabulary {
            entities: vec![],
            directions: vec![],
            positions: vec![Position::new(0, 0), Position::new(1, 0)],
        };
        let empty = Program::empty();
        assert_eq!(neighbor_programs(&empty, &cfg).len(), 4);
        let one = neighbor_edits(&empty, &cfg)[0].apply(&empty);
        let n = neighbor_programs(&one, &cfg);
        assert_eq!(n.len(), 5);
        assert!(n.contains(&Program::empty()));
        assert!(!n.contains(&one));
    }

    #[test]
    fn pacman_scale_neighbor_count_matches_closed_form() {
        let (l, w, h) = (15usize, 8usize, 8usize);
        let cfg = SynthesisConfig {
            batch_size: 3,
            targets: vec![SpriteId(1)],
            vocabulary: Vocabulary::full(l, w, h),
            max_rules: 16,
            dedup_rules: false,
        };
        let c = l + l + l * l + w * h;
        let a = l + 4 + l + w * h;
        assert_eq!(neighbor_programs(&Program::empty(), &cfg).len(), c * a);
        let edits = neighbor_edits(&Program::empty(), &cfg);
        let p = edits[7].apply(&edits[3].apply(&Program::empty()));
        assert_eq!(neighbor_edits(&p, &cfg).len(), c * a + 2);
    }

    #[test]
    fn removals_deduplicate_and_max_rules_caps_additions() {
        let mut cfg = tiny_vocab();
        let r = Rule::new(Condition::ExistsInMap(B), Action::FollowEntity(B));
        let p = Program::new(vec![r, r]);
        let edits = neighbor_edits(&p, &cfg);
        assert_eq!(edits.iter().filter(|e| matches!(e, Edit::Remove(_))).count(), 1);
        cfg.max_rules = 2;
        assert_eq!(neighbor_edits(&p, &cfg), vec![Edit::Remove(0)]);
        cfg.max_rules = 16;
        cfg.dedup_rules = true;
        assert!(!neighbor_edits(&p, &cfg).contains(&Edit::Add(r)));
    }

    fn static_trace() -> Trace {
        let mut g = Grid::filled(3, 3, EMPTY);
        g.set(Position::new(1, 1), A);
        g.set(Position::new(2, 2), B);
        Trace::new(
            3,
            3,
            vec!["EMPTY".into(), "A".into(), "B".into()],
            EMPTY,
            vec![],
            vec![vec![g; 6]],
        )
        .unwrap()
    }

    #[test]
    fn static_sprite_learns_nothing() {
        let trace = static_trace();
        let cfg = SynthesisConfig::for_trace(&trace);
        let report = synthesize_all(&trace, &cfg).unwrap();
        assert!(report.sprites.iter().all(|s| s.program.is_empty()));
        for s in &report.sprites {
            assert!(s.windows.iter().all(|w| w.baseline == 0 && w.final_loss == 0));
        }
    }

    #[test]
    fn empty_program_loss_is_frame_to_frame_change() {
        let mut frames = Vec::new();
        for c in 0..3u16 {
            let mut g = Grid::filled(3, 3, EMPTY);
            g.set(Position::new(c, 0), A);
            g.set(Position::new(2 - c, 2), B);
            frames.push(g);
        }
        let trace = Trace::new(
            3,
            3,
            vec!["EMPTY".into(), "A".into(), "B".into()],
            EMPTY,
            vec![],
            vec![frames.clone()],
        )
        .unwrap();
        let window = [FrameRef::new(0, 0), FrameRef::new(0, 1)];
        let ctx = ProgramSet::for_trace(&trace);
        let loss = window_loss(&Program::empty(), &trace, A, &window, &ctx).unwrap();
        let expect: u64 = (0..2)
            .map(|i| grid_distance(&frames[i], &frames[i + 1]).unwrap())
            .sum();
        assert_eq!(loss, expect);
    }

    #[test]
    fn window_loss_rejects_final_frames() {
        let trace = static_trace();
        let ctx = ProgramSet::for_trace(&trace);
        let err = window_loss(&Program::empty(), &trace, A, &[FrameRef::new(0, 5)], &ctx);
        assert!(matches!(err, Err(Error::InvalidWindow(_))));
        let err = window_loss(&Program::empty(), &trace, A, &[FrameRef::new(3, 0)], &ctx);
        assert!(matches!(err, Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn absent_sprite_gets_warning() {
        let trace = static_trace();
        let mut cfg = SynthesisConfig::for_trace(&trace);
        cfg.targets.push(SpriteId(3));
        assert!(cfg.validate(&trace).is_err());

        let g = Grid::filled(3, 3, EMPTY);
        let trace = Trace::new(
            3,
            3,
            vec!["EMPTY".into(), "A".into()],
            EMPTY,
            vec![],
            vec![vec![g; 3]],
        )
        .unwrap();
        let cfg = SynthesisConfig::for_trace(&trace);
        let ctx = ProgramSet::for_trace(&trace);
        let r = synthesize_sprite(&trace, A, &cfg, &ctx).unwrap();
        assert!(r.program.is_empty());
        assert!(r.warning.is_some());
    }

    #[test]
    fn prior_frame_is_identity() {
        let trace = static_trace();
        let g = &trace.episodes()[0][0];
        assert_eq!(&prior_frame_predict(g), g);
    }
}
