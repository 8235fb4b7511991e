//! Symbolic frames: sprite ids, positions, grids and multi-episode traces.
//!
//! A [`Grid`] stores exactly one sprite id per cell, row-major, with the
//! origin at the top-left corner. A [`Trace`] groups grids into episodes and
//! carries the sprite dictionary they index into.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a sprite dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpriteId(pub u16);

impl SpriteId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u16> for SpriteId {
    fn from(v: u16) -> Self {
        SpriteId(v)
    }
}

impl fmt::Display for SpriteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cell coordinate; `col` grows rightward, `row` grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub col: u16,
    pub row: u16,
}

impl Position {
    pub const fn new(col: u16, row: u16) -> Self {
        Position { col, row }
    }

    pub fn manhattan(self, other: Position) -> u32 {
        (self.col as i32 - other.col as i32).unsigned_abs()
            + (self.row as i32 - other.row as i32).unsigned_abs()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<SpriteId>,
}

impl Grid {
    /// A grid with every cell set to `fill`.
    pub fn filled(width: usize, height: usize, fill: SpriteId) -> Self {
        Grid {
            width,
            height,
            cells: vec![fill; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<SpriteId>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::InvalidTrace(format!(
                "grid of {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            cells,
        })
    }

    /// Builds a grid from rows of raw ids. All rows must have the same length.
    pub fn from_rows<R: AsRef<[u16]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::InvalidTrace(format!(
                    "row {y} has {} cells, expected {width}",
                    row.len()
                )));
            }
            cells.extend(row.iter().copied().map(SpriteId));
        }
        Ok(Grid {
            width,
            height,
            cells,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn cells(&self) -> &[SpriteId] {
        &self.cells
    }

    #[inline]
    pub fn cells_mut(&mut self) -> &mut [SpriteId] {
        &mut self.cells
    }

    #[inline]
    pub fn contains(&self, pos: Position) -> bool {
        (pos.col as usize) < self.width && (pos.row as usize) < self.height
    }

    #[inline]
    pub fn index_of(&self, pos: Position) -> usize {
        pos.row as usize * self.width + pos.col as usize
    }

    #[inline]
    pub fn position_of(&self, index: usize) -> Position {
        Position::new((index % self.width) as u16, (index / self.width) as u16)
    }

    #[inline]
    pub fn get(&self, pos: Position) -> SpriteId {
        self.cells[self.index_of(pos)]
    }

    #[inline]
    pub fn set(&mut self, pos: Position, id: SpriteId) {
        let i = self.index_of(pos);
        self.cells[i] = id;
    }

    /// Iterates `(position, sprite)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (Position, SpriteId)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &s)| (self.position_of(i), s))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[SpriteId]> {
        self.cells.chunks(self.width.max(1))
    }

    pub fn contains_sprite(&self, s: SpriteId) -> bool {
        self.cells.contains(&s)
    }

    /// Returns the 4-connected neighbours of `pos` that lie inside the grid.
    pub fn neighbours(&self, pos: Position) -> impl Iterator<Item = Position> {
        let (w, h) = (self.width as i32, self.height as i32);
        let (c, r) = (pos.col as i32, pos.row as i32);
        [(0, -1), (0, 1), (-1, 0), (1, 0)]
            .into_iter()
            .filter_map(move |(dc, dr)| {
                let (nc, nr) = (c + dc, r + dr);
                (nc >= 0 && nr >= 0 && nc < w && nr < h).then(|| Position::new(nc as u16, nr as u16))
            })
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            })
        }
    }

    /// Fails if any cell references an id `>= sprite_count`.
    pub fn check_ids(&self, sprite_count: usize) -> Result<()> {
        match self.cells.iter().find(|s| s.index() >= sprite_count) {
            Some(s) => Err(Error::SpriteOutOfRange {
                id: s.index(),
                count: sprite_count,
            }),
            None => Ok(()),
        }
    }
}

/// Number of cells whose sprite ids differ.
pub fn grid_distance(a: &Grid, b: &Grid) -> Result<u64> {
    a.check_shape(b)?;
    Ok(a.cells
        .iter()
        .zip(&b.cells)
        .filter(|(x, y)| x != y)
        .count() as u64)
}

/// A frame reference inside a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub episode: usize,
    pub frame: usize,
}

impl FrameRef {
    pub const fn new(episode: usize, frame: usize) -> Self {
        FrameRef { episode, frame }
    }
}

/// Recorded episodes plus the sprite dictionary they reference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    width: usize,
    height: usize,
    sprites: Vec<String>,
    empty_id: SpriteId,
    exogenous_ids: Vec<SpriteId>,
    episodes: Vec<Vec<Grid>>,
}

impl Trace {
    /// Validates and builds a trace. `exogenous_ids` is sorted and deduplicated.
    pub fn new(
        width: usize,
        height: usize,
        sprites: Vec<String>,
        empty_id: SpriteId,
        mut exogenous_ids: Vec<SpriteId>,
        episodes: Vec<Vec<Grid>>,
    ) -> Result<Self> {
        let count = sprites.len();
        if count == 0 {
            return Err(Error::InvalidTrace("sprite dictionary is empty".into()));
        }
        if count > u16::MAX as usize {
            return Err(Error::InvalidTrace(format!("{count} sprites exceeds the id range")));
        }
        if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(Error::InvalidTrace(format!("unsupported grid size {width}x{height}")));
        }
        if empty_id.index() >= count {
            return Err(Error::InvalidTrace(format!("empty_id {empty_id} out of range")));
        }
        exogenous_ids.sort();
        exogenous_ids.dedup();
        if let Some(bad) = exogenous_ids.iter().find(|s| s.index() >= count) {
            return Err(Error::InvalidTrace(format!("exogenous id {bad} out of range")));
        }
        if exogenous_ids.contains(&empty_id) {
            return Err(Error::InvalidTrace("empty_id cannot be exogenous".into()));
        }
        for (e, episode) in episodes.iter().enumerate() {
            for (f, grid) in episode.iter().enumerate() {
                if grid.width != width || grid.height != height {
                    return Err(Error::InvalidTrace(format!(
                        "episode {e} frame {f} is {}x{}, expected {width}x{height}",
                        grid.width, grid.height
                    )));
                }
                grid.check_ids(count).map_err(|err| {
                    Error::InvalidTrace(format!("episode {e} frame {f}: {err}"))
                })?;
            }
        }
        Ok(Trace {
            width,
            height,
            sprites,
            empty_id,
            exogenous_ids,
            episodes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sprites(&self) -> &[String] {
        &self.sprites
    }

    pub fn sprite_count(&self) -> usize {
        self.sprites.len()
    }

    pub fn empty_id(&self) -> SpriteId {
        self.empty_id
    }

    pub fn exogenous_ids(&self) -> &[SpriteId] {
        &self.exogenous_ids
    }

    pub fn is_exogenous(&self, s: SpriteId) -> bool {
        self.exogenous_ids.binary_search(&s).is_ok()
    }

    /// Lookup table indexed by sprite id.
    pub fn exogenous_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.sprites.len()];
        for s in &self.exogenous_ids {
            mask[s.index()] = true;
        }
        mask
    }

    pub fn episodes(&self) -> &[Vec<Grid>] {
        &self.episodes
    }

    pub fn frame(&self, at: FrameRef) -> Option<&Grid> {
        self.episodes.get(at.episode)?.get(at.frame)
    }

    pub fn frame_count(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn dictionary(&self) -> Dictionary {
        Dictionary::new(self.sprites.clone(), self.width, self.height)
    }

    /// Looks up a sprite by exact name.
    pub fn sprite_id(&self, name: &str) -> Option<SpriteId> {
        self.sprites
            .iter()
            .position(|n| n == name)
            .map(|i| SpriteId(i as u16))
    }

    pub fn sprite_name(&self, s: SpriteId) -> Option<&str> {
        self.sprites.get(s.index()).map(String::as_str)
    }

    /// Same trace with a different exogenous set.
    pub fn with_exogenous(&self, exogenous_ids: Vec<SpriteId>) -> Result<Self> {
        Trace::new(
            self.width,
            self.height,
            self.sprites.clone(),
            self.empty_id,
            exogenous_ids,
            self.episodes.clone(),
        )
    }

    /// Frames that contain `s` and have a successor in the same episode,
    /// ordered by episode then frame.
    pub fn occurrence_indices(&self, s: SpriteId) -> Vec<FrameRef> {
        let mut out = Vec::new();
        for (e, episode) in self.episodes.iter().enumerate() {
            let usable = episode.len().saturating_sub(1);
            for (f, grid) in episode[..usable].iter().enumerate() {
                if grid.contains_sprite(s) {
                    out.push(FrameRef::new(e, f));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = TraceFile {
            version: TRACE_VERSION,
            width: self.width,
            height: self.height,
            sprites: self.sprites.clone(),
            empty_id: self.empty_id.0,
            exogenous_ids: self.exogenous_ids.iter().map(|s| s.0).collect(),
            episodes: self
                .episodes
                .iter()
                .map(|ep| {
                    ep.iter()
                        .map(|g| g.rows().map(|r| r.iter().map(|s| s.0).collect()).collect())
                        .collect()
                })
                .collect(),
        };
        let mut text = serde_json::to_string(&file).expect("trace serialization is infallible");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TraceFile =
            serde_json::from_str(text).map_err(|e| Error::json("trace file", e))?;
        if file.version != TRACE_VERSION {
            return Err(Error::InvalidTrace(format!(
                "unsupported trace version {}",
                file.version
            )));
        }
        let mut episodes = Vec::with_capacity(file.episodes.len());
        for (e, ep) in file.episodes.iter().enumerate() {
            let mut grids = Vec::with_capacity(ep.len());
            for (f, rows) in ep.iter().enumerate() {
                if rows.len() != file.height {
                    return Err(Error::InvalidTrace(format!(
                        "episode {e} frame {f} has {} rows, expected {}",
                        rows.len(),
                        file.height
                    )));
                }
                let grid = Grid::from_rows(rows)
                    .map_err(|err| Error::InvalidTrace(format!("episode {e} frame {f}: {err}")))?;
                grids.push(grid);
            }
            episodes.push(grids);
        }
        Trace::new(
            file.width,
            file.height,
            file.sprites,
            SpriteId(file.empty_id),
            file.exogenous_ids.into_iter().map(SpriteId).collect(),
            episodes,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trace::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path.display().to_string(), source),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

const TRACE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceFile {
    version: u32,
    width: usize,
    height: usize,
    sprites: Vec<String>,
    empty_id: u16,
    exogenous_ids: Vec<u16>,
    episodes: Vec<Vec<Vec<Vec<u16>>>>,
}

/// Sprite names plus grid bounds: everything needed to resolve and validate
/// program text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionary {
    names: Vec<String>,
    width: usize,
    height: usize,
}

impl Dictionary {
    pub fn new(names: Vec<String>, width: usize, height: usize) -> Self {
        Dictionary {
            names,
            width,
            height,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn lookup(&self, name: &str) -> Option<SpriteId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| SpriteId(i as u16))
    }

    pub fn name(&self, s: SpriteId) -> Option<&str> {
        self.names.get(s.index()).map(String::as_str)
    }

    pub fn contains_position(&self, p: Position) -> bool {
        (p.col as usize) < self.width && (p.row as usize) < self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u16]) -> Vec<SpriteId> {
        v.iter().copied().map(SpriteId).collect()
    }

    #[test]
    fn distance_identity_and_single_flip() {
        let a = Grid::from_rows(&[[0u16, 0], [0, 0]]).unwrap();
        let b = Grid::from_rows(&[[0u16, 1], [0, 0]]).unwrap();
        assert_eq!(grid_distance(&a, &a).unwrap(), 0);
        assert_eq!(grid_distance(&a, &b).unwrap(), 1);
    }

    #[test]
    fn distance_rejects_mismatched_shapes() {
        let a = Grid::filled(2, 2, SpriteId(0));
        let b = Grid::filled(3, 2, SpriteId(0));
        assert!(matches!(
            grid_distance(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn neighbours_clip_at_borders() {
        let g = Grid::filled(3, 3, SpriteId(0));
        assert_eq!(g.neighbours(Position::new(0, 0)).count(), 2);
        assert_eq!(g.neighbours(Position::new(1, 1)).count(), 4);
        assert_eq!(g.neighbours(Position::new(2, 1)).count(), 3);
    }

    fn ten_frame_trace(present: bool) -> Trace {
        let frame = if present {
            Grid::from_cells(2, 1, ids(&[1, 0])).unwrap()
        } else {
            Grid::filled(2, 1, SpriteId(0))
        };
        Trace::new(
            2,
            1,
            vec!["EMPTY".into(), "A".into()],
            SpriteId(0),
            vec![],
            vec![vec![frame; 10]],
        )
        .unwrap()
    }

    #[test]
    fn occurrences_of_absent_sprite() {
        assert!(ten_frame_trace(false).occurrence_indices(SpriteId(1)).is_empty());
    }

    #[test]
    fn occurrences_skip_episode_final_frame() {
        let occ = ten_frame_trace(true).occurrence_indices(SpriteId(1));
        let frames: Vec<usize> = occ.iter().map(|r| r.frame).collect();
        assert_eq!(frames, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn trace_rejects_unknown_keys_and_bad_ids() {
        let t = ten_frame_trace(true);
        let json = t.to_json();
        let extra = json.replacen("{", "{\"bogus\":1,", 1);
        assert!(Trace::from_json(&extra).is_err());
        let bad = json.replace("[[1,0]]", "[[7,0]]");
        assert!(matches!(Trace::from_json(&bad), Err(Error::InvalidTrace(_))));
        let version = json.replace("\"version\":1", "\"version\":2");
        assert!(Trace::from_json(&version).is_err());
    }

    #[test]
    fn trace_rejects_mismatched_dimensions() {
        let g = Grid::filled(3, 1, SpriteId(0));
        let err = Trace::new(2, 1, vec!["E".into()], SpriteId(0), vec![], vec![vec![g]]);
        assert!(err.is_err());
    }

    fn arb_grid(w: usize, h: usize, l: u16) -> impl Strategy<Value = Grid> {
        prop::collection::vec(0..l, w * h)
            .prop_map(move |v| Grid::from_cells(w, h, ids(&v)).unwrap())
    }

    fn arb_trace() -> impl Strategy<Value = Trace> {
        (1usize..5, 1usize..5, 1u16..6).prop_flat_map(|(w, h, l)| {
            let episodes = prop::collection::vec(prop::collection::vec(arb_grid(w, h, l), 0..4), 0..3);
            let exo = prop::collection::vec(0..l, 0..3);
            (episodes, exo).prop_map(move |(episodes, exo)| {
                let names = (0..l).map(|i| format!("S{i}")).collect();
                let exo = exo.into_iter().filter(|&s| s != 0).map(SpriteId).collect();
                Trace::new(w, h, names, SpriteId(0), exo, episodes).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            (a, b, c) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (arb_grid(w, h, 4), arb_grid(w, h, 4), arb_grid(w, h, 4))
            })
        ) {
            let ab = grid_distance(&a, &b).unwrap();
            prop_assert_eq!(grid_distance(&a, &a).unwrap(), 0);
            prop_assert_eq!(ab, grid_distance(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(grid_distance(&a, &c).unwrap() <= ab + grid_distance(&b, &c).unwrap());
        }

        #[test]
        fn trace_json_round_trips(trace in arb_trace()) {
            let text = trace.to_json();
            let back = Trace::from_json(&text).unwrap();
            prop_assert_eq!(&back, &trace);
            prop_assert_eq!(back.to_json(), text);
        }

        #[test]
        fn occurrences_never_include_final_frames(trace in arb_trace(), s in 0u16..6) {
            for r in trace.occurrence_indices(SpriteId(s)) {
                prop_assert!(r.frame + 1 < trace.episodes()[r.episode].len());
            }
        }
    }
}
