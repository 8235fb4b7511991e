//! Grid world models as small per-sprite rule programs.
//!
//! Frames are tokenized into grids of sprite ids, a hill-climbing search
//! learns one program per sprite from recorded episodes, and the interpreter
//! replays those programs to predict the next frame.

pub mod dsl;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod grid;
pub mod interpreter;
pub mod playground;
pub mod report;
pub mod synthesis;
pub mod tokenizer;

pub use dsl::{parse_program, print_program, Action, Condition, Direction, Program, Rule};
pub use error::{Error, Result};
pub use evaluation::{prediction_error, program_stats, rollout, Approach, PredictionError, RolloutResult};
pub use grid::{grid_distance, Dictionary, FrameRef, Grid, Position, SpriteId, Trace};
pub use interpreter::{step, ProgramSet};
pub use synthesis::{synthesize_all, SynthesisConfig, SynthesisReport};
pub use tokenizer::{render_grid, tokenize_frame, SpriteAtlas};
