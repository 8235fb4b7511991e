//! Rollouts of a learned model against recorded episodes, and the metrics
//! computed on them.

use std::fmt;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_distance, Grid, SpriteId, Trace};
use crate::interpreter::{overlay_exogenous, step, ProgramSet};
use crate::synthesis::prior_frame_predict;
use crate::tokenizer::{render_grid, SpriteAtlas};

/// How the model is fed during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// Every prediction starts from the recorded frame.
    TeacherForced,
    /// Only the first recorded frame is used; later steps feed on predictions.
    Autoregressive,
}

impl Approach {
    pub fn number(self) -> u8 {
        match self {
            Approach::TeacherForced => 1,
            Approach::Autoregressive => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Approach::TeacherForced),
            2 => Some(Approach::Autoregressive),
            _ => None,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeRollout {
    /// Predictions for frames `1..len`.
    pub predicted: Vec<Grid>,
    /// `hamming[t]` compares `predicted[t]` with recorded frame `t + 1`.
    pub hamming: Vec<u64>,
}

impl EpisodeRollout {
    pub fn total_hamming(&self) -> u64 {
        self.hamming.iter().sum()
    }

    /// First step whose prediction is wrong.
    pub fn first_divergence(&self) -> Option<usize> {
        self.hamming.iter().position(|&h| h > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RolloutResult {
    pub approach: Approach,
    pub episodes: Vec<EpisodeRollout>,
}

impl RolloutResult {
    pub fn total_hamming(&self) -> u64 {
        self.episodes.iter().map(EpisodeRollout::total_hamming).sum()
    }

    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(|e| e.hamming.len()).sum()
    }

    /// `(episode, step)` of the first wrong prediction.
    pub fn first_divergence(&self) -> Option<(usize, usize)> {
        self.episodes
            .iter()
            .enumerate()
            .find_map(|(e, ep)| ep.first_divergence().map(|t| (e, t)))
    }

    /// `(episode, step)` of the first step where this rollout is strictly
    /// worse than `other` on the same trace.
    pub fn first_excess_over(&self, other: &RolloutResult) -> Option<(usize, usize)> {
        self.episodes.iter().zip(&other.episodes).enumerate().find_map(|(e, (a, b))| {
            a.hamming.iter().zip(&b.hamming).position(|(x, y)| x > y).map(|t| (e, t))
        })
    }
}

fn check_compatible(trace: &Trace, programs: &ProgramSet) -> Result<()> {
    let exo_match = (0..trace.sprite_count() as u16)
        .map(SpriteId)
        .all(|s| trace.is_exogenous(s) == programs.is_exogenous(s));
    if programs.sprite_count() != trace.sprite_count()
        || programs.empty_id() != trace.empty_id()
        || !exo_match
    {
        return Err(Error::InvalidConfig(
            "program set and trace use different dictionaries".into(),
        ));
    }
    Ok(())
}

/// Predicts every episode of `trace`. Exogenous sprites are always placed
/// from the recorded next frame.
pub fn rollout(trace: &Trace, programs: &ProgramSet, approach: Approach) -> Result<RolloutResult> {
    check_compatible(trace, programs)?;
    let episodes = trace
        .episodes()
        .par_iter()
        .map(|frames| rollout_episode(frames, programs, approach))
        .collect::<Result<Vec<_>>>()?;
    Ok(RolloutResult { approach, episodes })
}

fn rollout_episode(frames: &[Grid], programs: &ProgramSet, approach: Approach) -> Result<EpisodeRollout> {
    let steps = frames.len().saturating_sub(1);
    let mut predicted: Vec<Grid> = Vec::with_capacity(steps);
    let mut hamming = Vec::with_capacity(steps);
    for t in 0..steps {
        let input = match (approach, predicted.last()) {
            (Approach::Autoregressive, Some(prev)) => prev,
            _ => &frames[t],
        };
        let truth = &frames[t + 1];
        let mut next = step(input, programs)?;
        overlay_exogenous(&mut next, input, truth, programs);
        hamming.push(grid_distance(&next, truth)?);
        predicted.push(next);
    }
    Ok(EpisodeRollout { predicted, hamming })
}

/// The predictor that returns its input unchanged, fed the recorded frames.
pub fn prior_frame_rollout(trace: &Trace) -> RolloutResult {
    let episodes = trace
        .episodes()
        .iter()
        .map(|frames| {
            let predicted: Vec<Grid> = frames.iter().take(frames.len().saturating_sub(1)).map(prior_frame_predict).collect();
            let hamming = predicted
                .iter()
                .zip(&frames[1..])
                .map(|(m, t)| grid_distance(m, t).expect("frames of one trace share a shape"))
                .collect();
            EpisodeRollout { predicted, hamming }
        })
        .collect();
    RolloutResult {
        approach: Approach::TeacherForced,
        episodes,
    }
}

/// Summed mean absolute difference between true and predicted frame deltas,
/// kept as an exact integer numerator over a common per-frame denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionError {
    pub abs_sum: u64,
    /// Pixels times channels in one frame.
    pub samples_per_frame: u64,
    pub frame_pairs: u64,
}

impl PredictionError {
    pub fn value(&self) -> f64 {
        if self.samples_per_frame == 0 {
            0.0
        } else {
            self.abs_sum as f64 / self.samples_per_frame as f64
        }
    }

    /// Adds another sequence measured on frames of the same size.
    pub fn combine(self, other: PredictionError) -> Result<PredictionError> {
        if self.frame_pairs == 0 {
            return Ok(other);
        }
        if other.frame_pairs == 0 {
            return Ok(self);
        }
        if self.samples_per_frame != other.samples_per_frame {
            return Err(Error::InvalidConfig(
                "prediction errors measured on different frame sizes".into(),
            ));
        }
        Ok(PredictionError {
            abs_sum: self.abs_sum + other.abs_sum,
            samples_per_frame: self.samples_per_frame,
            frame_pairs: self.frame_pairs + other.frame_pairs,
        })
    }
}

/// `sum_i mean |(T[i+1] - T[i]) - (M[i+1] - T[i])|` over all channels.
pub fn prediction_error(truth: &[RgbImage], model: &[RgbImage]) -> Result<PredictionError> {
    if truth.len() != model.len() {
        return Err(Error::InvalidConfig(format!(
            "{} ground-truth frames but {} model frames",
            truth.len(),
            model.len()
        )));
    }
    let Some(first) = truth.first() else {
        return Ok(PredictionError::default());
    };
    let (w, h) = first.dimensions();
    for img in truth.iter().chain(model) {
        if img.dimensions() != (w, h) {
            return Err(Error::ImageSize {
                got_width: img.width(),
                got_height: img.height(),
                want_width: w,
                want_height: h,
            });
        }
    }
    let mut abs_sum = 0u64;
    for i in 0..truth.len() - 1 {
        let (t0, t1, m1) = (truth[i].as_raw(), truth[i + 1].as_raw(), model[i + 1].as_raw());
        abs_sum += t0
            .iter()
            .zip(t1)
            .zip(m1)
            .map(|((&a, &b), &m)| {
                let dt = b as i32 - a as i32;
                let dm = m as i32 - a as i32;
                (dt - dm).unsigned_abs() as u64
            })
            .sum::<u64>();
    }
    Ok(PredictionError {
        abs_sum,
        samples_per_frame: w as u64 * h as u64 * 3,
        frame_pairs: truth.len() as u64 - 1,
    })
}

/// Renders ground truth and predictions through `atlas` and measures them.
/// Each episode's model sequence starts with its recorded first frame.
pub fn rollout_prediction_error(
    trace: &Trace,
    result: &RolloutResult,
    atlas: &SpriteAtlas,
) -> Result<PredictionError> {
    let mut total = PredictionError::default();
    for (frames, ep) in trace.episodes().iter().zip(&result.episodes) {
        let truth: Vec<RgbImage> = frames
            .iter()
            .map(|g| render_grid(g, atlas))
            .collect::<Result<_>>()?;
        let mut model = Vec::with_capacity(truth.len());
        if let Some(t0) = truth.first() {
            model.push(t0.clone());
        }
        for g in &ep.predicted {
            model.push(render_grid(g, atlas)?);
        }
        total = total.combine(prediction_error(&truth, &model)?)?;
    }
    Ok(total)
}

/// Rule counts (one condition per rule) and their spread across programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub rule_counts: Vec<(SpriteId, usize)>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

pub fn program_stats(programs: &ProgramSet) -> ProgramStats {
    let rule_counts: Vec<(SpriteId, usize)> = programs.iter().map(|(s, p)| (s, p.len())).collect();
    let (mean, std_dev) = mean_std(rule_counts.iter().map(|&(_, n)| n as f64));
    ProgramStats {
        rule_counts,
        mean,
        std_dev,
    }
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}
