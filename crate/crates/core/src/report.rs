//! JSON documents written by the tools: synthesis reports (which double as
//! program files), timing sidecars, evaluation reports and rollouts.
//!
//! Everything except the timing sidecar is a pure function of its inputs, so
//! repeated runs produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsl::{parse_program, print_program, print_rule};
use crate::error::{Error, Result};
use crate::evaluation::{program_stats, PredictionError, RolloutResult};
use crate::grid::{SpriteId, Trace};
use crate::interpreter::ProgramSet;
use crate::synthesis::{Edit, SynthesisConfig, SynthesisReport};

pub const REPORT_VERSION: u32 = 1;

fn names(trace: &Trace, ids: impl IntoIterator<Item = SpriteId>) -> Vec<String> {
    ids.into_iter()
        .map(|s| trace.sprite_name(s).unwrap_or("?").to_string())
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisFile {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub sprites: Vec<String>,
    pub empty: String,
    pub exogenous: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigEcho>,
    /// Sprites in the order their programs were learned.
    pub order: Vec<String>,
    pub programs: Vec<ProgramEntry>,
    pub stats: StatsEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub search: Vec<SearchEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub batch_size: usize,
    pub targets: Vec<String>,
    pub max_rules: usize,
    pub dedup_rules: bool,
    pub entities: Vec<String>,
    pub directions: Vec<String>,
    pub positions: Vec<[u16; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramEntry {
    pub sprite: String,
    pub rules: usize,
    pub program: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsEntry {
    pub mean_rules: f64,
    pub std_rules: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchEntry {
    pub sprite: String,
    pub evaluated: u64,
    pub accepted: u64,
    pub rejected: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub windows: Vec<WindowEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowEntry {
    /// `[episode, frame]` pairs.
    pub frames: Vec<[usize; 2]>,
    pub baseline: u64,
    pub final_loss: u64,
    pub accepted: Vec<EditEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditEntry {
    /// `add IF (...) THEN ...` or `remove <index>`.
    pub edit: String,
    pub loss: u64,
}

impl SynthesisFile {
    fn header(trace: &Trace, programs: &ProgramSet, order: &[SpriteId]) -> Self {
        let dict = trace.dictionary();
        let stats = program_stats(programs);
        SynthesisFile {
            version: REPORT_VERSION,
            width: trace.width(),
            height: trace.height(),
            sprites: trace.sprites().to_vec(),
            empty: names(trace, [trace.empty_id()]).remove(0),
            exogenous: names(trace, trace.exogenous_ids().iter().copied()),
            config: None,
            order: names(trace, order.iter().copied()),
            programs: programs
                .iter()
                .map(|(s, p)| ProgramEntry {
                    sprite: names(trace, [s]).remove(0),
                    rules: p.len(),
                    program: print_program(p, &dict),
                })
                .collect(),
            stats: StatsEntry {
                mean_rules: stats.mean,
                std_rules: stats.std_dev,
            },
            search: Vec::new(),
        }
    }

    /// A bare program file, as written for fixture reference programs.
    pub fn from_programs(trace: &Trace, programs: &ProgramSet) -> Self {
        let order: Vec<SpriteId> = programs.iter().map(|(s, _)| s).collect();
        Self::header(trace, programs, &order)
    }

    pub fn from_report(trace: &Trace, cfg: &SynthesisConfig, report: &SynthesisReport) -> Self {
        let dict = trace.dictionary();
        let mut file = Self::header(trace, &report.programs, &report.order);
        file.config = Some(ConfigEcho {
            batch_size: cfg.batch_size,
            targets: names(trace, cfg.targets.iter().copied()),
            max_rules: cfg.max_rules,
            dedup_rules: cfg.dedup_rules,
            entities: names(trace, cfg.vocabulary.entities.iter().copied()),
            directions: cfg.vocabulary.directions.iter().map(|d| d.keyword().to_string()).collect(),
            positions: cfg.vocabulary.positions.iter().map(|p| [p.col, p.row]).collect(),
        });
        file.search = report
            .sprites
            .iter()
            .map(|s| SearchEntry {
                sprite: names(trace, [s.sprite]).remove(0),
                evaluated: s.evaluated,
                accepted: s.accepted,
                rejected: s.rejected,
                warning: s.warning.clone(),
                windows: s
                    .windows
                    .iter()
                    .map(|w| WindowEntry {
                        frames: w.frames.iter().map(|f| [f.episode, f.frame]).collect(),
                        baseline: w.baseline,
                        final_loss: w.final_loss,
                        accepted: w
                            .accepted
                            .iter()
                            .map(|a| EditEntry {
                                edit: match a.edit {
                                    Edit::Add(rule) => format!("add {}", print_rule(&rule, &dict)),
                                    Edit::Remove(i) => format!("remove {i}"),
                                },
                                loss: a.loss,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        file
    }

    /// Rebuilds the program set against `trace`, whose dictionary and
    /// exogenous sprites must match the ones recorded here.
    pub fn program_set(&self, trace: &Trace) -> Result<ProgramSet> {
        let same = self.sprites == trace.sprites()
            && self.width == trace.width()
            && self.height == trace.height()
            && self.empty == names(trace, [trace.empty_id()])[0]
            && self.exogenous == names(trace, trace.exogenous_ids().iter().copied());
        if !same {
            return Err(Error::InvalidConfig(
                "program file was written for a different trace dictionary".into(),
            ));
        }
        let dict = trace.dictionary();
        let mut ps = ProgramSet::for_trace(trace);
        for entry in &self.programs {
            let s = dict
                .lookup(&entry.sprite)
                .ok_or_else(|| Error::UnknownSprite(entry.sprite.clone()))?;
            ps.insert(s, parse_program(&entry.program, &dict)?)?;
        }
        Ok(ps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types serialize") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: SynthesisFile = read_json(path.as_ref())?;
        if file.version != REPORT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported report version {}",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Wall-clock durations, kept out of the main report so that file stays
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingsFile {
    pub total_ms: f64,
    pub sprites: Vec<SpriteTiming>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteTiming {
    pub sprite: String,
    pub ms: f64,
}

impl TimingsFile {
    pub fn from_report(trace: &Trace, report: &SynthesisReport) -> Self {
        TimingsFile {
            total_ms: report.duration.as_secs_f64() * 1e3,
            sprites: report
                .sprites
                .iter()
                .map(|s| SpriteTiming {
                    sprite: names(trace, [s.sprite]).remove(0),
                    ms: s.duration.as_secs_f64() * 1e3,
                })
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// `report.json` becomes `report.timings.json`.
pub fn timings_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}.timings.json"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionErrorEntry {
    pub abs_sum: u64,
    pub samples_per_frame: u64,
    pub frame_pairs: u64,
    pub value: f64,
}

impl From<PredictionError> for PredictionErrorEntry {
    fn from(pe: PredictionError) -> Self {
        PredictionErrorEntry {
            abs_sum: pe.abs_sum,
            samples_per_frame: pe.samples_per_frame,
            frame_pairs: pe.frame_pairs,
            value: pe.value(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceEntry {
    pub episode: usize,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeEntry {
    pub episode: usize,
    pub hamming_total: u64,
    pub first_divergence: Option<usize>,
    pub hamming: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEntry {
    pub hamming_total: u64,
    pub prediction_error: Option<PredictionErrorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub version: u32,
    pub mode: u8,
    pub steps: usize,
    pub hamming_total: u64,
    pub mean_hamming_per_step: f64,
    pub first_divergence: Option<DivergenceEntry>,
    /// First step where this rollout is worse than teacher forcing.
    pub exceeds_teacher_forced: Option<DivergenceEntry>,
    pub prediction_error: Option<PredictionErrorEntry>,
    /// The prior-frame predictor on the same trace.
    pub baseline: BaselineEntry,
    pub programs: Vec<ProgramEntry>,
    pub stats: StatsEntry,
    pub episodes: Vec<EpisodeEntry>,
}

impl EvalFile {
    pub fn new(
        trace: &Trace,
        programs: &ProgramSet,
        result: &RolloutResult,
        prediction_error: Option<PredictionError>,
        baseline: &RolloutResult,
        baseline_error: Option<PredictionError>,
    ) -> Self {
        let header = SynthesisFile::from_programs(trace, programs);
        let steps = result.step_count();
        let total = result.total_hamming();
        EvalFile {
            version: REPORT_VERSION,
            mode: result.approach.number(),
            steps,
            hamming_total: total,
            mean_hamming_per_step: if steps == 0 { 0.0 } else { total as f64 / steps as f64 },
            first_divergence: result
                .first_divergence()
                .map(|(episode, step)| DivergenceEntry { episode, step }),
            exceeds_teacher_forced: None,
            prediction_error: prediction_error.map(Into::into),
            baseline: BaselineEntry {
                hamming_total: baseline.total_hamming(),
                prediction_error: baseline_error.map(Into::into),
            },
            programs: header.programs,
            stats: header.stats,
            episodes: result
                .episodes
                .iter()
                .enumerate()
                .map(|(episode, ep)| EpisodeEntry {
                    episode,
                    hamming_total: ep.total_hamming(),
                    first_divergence: ep.first_divergence(),
                    hamming: ep.hamming.clone(),
                })
                .collect(),
        }
    }

    pub fn with_teacher_forced(mut self, result: &RolloutResult, teacher_forced: &RolloutResult) -> Self {
        self.exceeds_teacher_forced = result
            .first_excess_over(teacher_forced)
            .map(|(episode, step)| DivergenceEntry { episode, step });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types serialize") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutFile {
    pub version: u32,
    pub mode: u8,
    pub width: usize,
    pub height: usize,
    pub sprites: Vec<String>,
    pub episodes: Vec<RolloutEpisode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutEpisode {
    pub hamming: Vec<u64>,
    /// Predicted frames `1..len`, each as rows of sprite ids.
    pub predicted: Vec<Vec<Vec<u16>>>,
}

impl RolloutFile {
    pub fn new(trace: &Trace, result: &RolloutResult) -> Self {
        RolloutFile {
            version: REPORT_VERSION,
            mode: result.approach.number(),
            width: trace.width(),
            height: trace.height(),
            sprites: trace.sprites().to_vec(),
            episodes: result
                .episodes
                .iter()
                .map(|ep| RolloutEpisode {
                    hamming: ep.hamming.clone(),
                    predicted: ep
                        .predicted
                        .iter()
                        .map(|g| g.rows().map(|r| r.iter().map(|s| s.0).collect()).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    /// Compact JSON, one document per file.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report types serialize") + "\n"
    }
}
