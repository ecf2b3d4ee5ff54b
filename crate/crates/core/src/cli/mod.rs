//! Experiment harness: run configuration, the four experiment recipes, and the
//! files a run leaves behind.
//!
//! A run directory contains
//!
//! ```text
//! runlog.csv        one row per episode (see RUNLOG_HEADER)
//! timing.csv        wall-clock seconds per episode
//! checkpoint.ckpt   final parameters and optimizer state
//! best.score.json   transcription of the highest-reward episode
//! best.mid          the same transcription as a type-0 MIDI file
//! pianoroll.csv     last episode, truth and agent keys (polyphonic agents only)
//! config.toml       the resolved configuration
//! ```

pub mod midi;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{
    evaluate, train_a2c, Checkpoint, EpisodeRecord, Hyperparams, Mode,
    Model, ParamSet, Selection,
};
use crate::env::{Env, EpisodeConfig, WorldScore};
use crate::error::{Error, Result};
use crate::features::HOP_SIZE;
use crate::metrics::extract_notes;
use crate::runlog::{RunLog, RunRow};
use crate::synth::SAMPLE_RATE;

/// Seconds per environment step.
pub const FRAME_SECONDS: f64 = HOP_SIZE as f64 / SAMPLE_RATE;

/// "Twinkle Twinkle Little Star", C4 to A4, one quarter note per 16 frames.
pub const TWINKLE_JSON: &str = include_str!("../../../../melodies/twinkle.score.json");

pub fn twinkle() -> WorldScore {
    WorldScore::from_json(TWINKLE_JSON).expect("bundled melody is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Random monophonic world, single-key agent.
    MonoMono,
    /// Fixed melody (Twinkle unless a score is given), single-key agent.
    FixedMelodyAdapt,
    /// Random monophonic world, per-key agent.
    MonoPoly,
    /// Random polyphonic world, per-key agent.
    PolyPoly,
}

impl Experiment {
    pub fn agent_mode(self) -> Mode {
        match self {
            Experiment::MonoMono | Experiment::FixedMelodyAdapt => Mode::Mono,
            Experiment::MonoPoly | Experiment::PolyPoly => Mode::Poly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Start from these parameters instead of a fresh initialization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_in: Option<PathBuf>,
    /// Score file for `fixed_melody_adapt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<PathBuf>,
    pub episode: EpisodeConfig,
    pub hyper: Hyperparams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::MonoMono,
            episodes: 1000,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_in: None,
            score: None,
            episode: EpisodeConfig::default(),
            hyper: Hyperparams::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a file and applies overrides. Relative input paths inside the
    /// file (`checkpoint_in`, `score`) are taken relative to the file's
    /// directory and made absolute; `output_dir` stays relative to the
    /// working directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.checkpoint_in, &mut config.score].into_iter().flatten() {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
            }
        }
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(episodes) = overrides.episodes {
            self.episodes = episodes;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
    }

    /// Episode configuration after the experiment's constraints are applied.
    pub fn resolved_episode(&self) -> Result<EpisodeConfig> {
        let mut episode = self.episode.clone();
        episode.seed = self.seed;
        let mono_world = self.experiment != Experiment::PolyPoly;
        if mono_world && episode.max_polyphony != 1 {
            return Err(Error::Config(format!(
                "{:?} needs a monophonic world, but episode.max_polyphony = {}",
                self.experiment, episode.max_polyphony
            )));
        }
        if !mono_world && episode.max_polyphony < 2 {
            return Err(Error::Config(
                "poly_poly needs episode.max_polyphony of at least 2".into(),
            ));
        }
        if self.score.is_some() && self.experiment != Experiment::FixedMelodyAdapt {
            return Err(Error::Config("a score file only applies to fixed_melody_adapt".into()));
        }
        if self.experiment == Experiment::FixedMelodyAdapt {
            let score = match &self.score {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    WorldScore::from_json(&text)?
                }
                None => twinkle(),
            };
            if score.observed_polyphony() > 1 {
                return Err(Error::Config("fixed_melody_adapt needs a monophonic score".into()));
            }
            episode.episode_frames = score.length_frames as usize;
            episode.score = Some(score);
        }
        if self.hyper.context != episode.context {
            return Err(Error::Config(format!(
                "hyper.context = {} but episode.context = {}",
                self.hyper.context, episode.context
            )));
        }
        episode.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.hyper.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(episode)
    }

    pub fn model(&self) -> Model {
        Model::new(self.experiment.agent_mode(), self.episode.layout(), self.hyper.hidden_units)
    }
}

/// Parameters a run starts from: the input checkpoint if given, otherwise a
/// seeded initialization.
pub fn initial_params(config: &RunConfig, model: &Model) -> Result<ParamSet> {
    match &config.checkpoint_in {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.model != *model {
                return Err(Error::Config(format!(
                    "checkpoint {} holds a {:?} model, the run needs {:?}",
                    path.display(),
                    ck.model,
                    model
                )));
            }
            Ok(ck.params)
        }
        None => Ok(model.init_params(config.seed)),
    }
}

pub struct RunOutcome {
    pub log: RunLog,
    pub params: ParamSet,
    pub best: Option<EpisodeRecord>,
    pub last: Option<EpisodeRecord>,
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    run_with(config, |_| {})
}

/// Trains per the experiment recipe and writes the run directory.
/// `progress` sees every finished episode.
pub fn run_with(config: &RunConfig, mut progress: impl FnMut(&RunRow)) -> Result<RunOutcome> {
    let episode = config.resolved_episode()?;
    let model = config.model();
    let params = initial_params(config, &model)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut last = None;
    let outcome = train_a2c(
        |_| Env::new(episode.clone()),
        &model,
        params,
        &config.hyper,
        config.episodes,
        config.seed,
        |rec, row| {
            progress(row);
            last = Some(rec.clone());
        },
    )?;

    write(&dir.join("config.toml"), config.to_toml()?.as_bytes())?;
    write(&dir.join("runlog.csv"), outcome.log.to_csv().as_bytes())?;
    write(&dir.join("timing.csv"), outcome.log.timing_csv().as_bytes())?;
    Checkpoint {
        model,
        hyper: config.hyper.clone(),
        seed: config.seed,
        params: outcome.params.clone(),
    }
    .save(&dir.join("checkpoint.ckpt"))?;
    if let Some(best) = &outcome.best {
        let score = transcription(best, &episode);
        write(&dir.join("best.score.json"), score.to_json()?.as_bytes())?;
        midi::export_midi(&score.notes, FRAME_SECONDS, &dir.join("best.mid"))?;
    }
    if model.mode == Mode::Poly {
        if let Some(rec) = &last {
            write(&dir.join("pianoroll.csv"), piano_roll_csv(rec, episode.base_pitch).as_bytes())?;
        }
    }
    Ok(RunOutcome {
        log: outcome.log,
        params: outcome.params,
        best: outcome.best,
        last,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The agent's keyboard over an episode, as a score.
pub fn transcription(record: &EpisodeRecord, episode: &EpisodeConfig) -> WorldScore {
    let notes = extract_notes(&record.keyboard, episode.base_pitch);
    let mut score = WorldScore {
        length_frames: record.keyboard.len() as u32,
        base_pitch: episode.base_pitch,
        keys: episode.keys,
        notes,
        max_polyphony: 1,
    };
    score.max_polyphony = score.observed_polyphony().max(1);
    score
}

pub const PIANO_ROLL_HEADER: &str = "frame,key,pitch,truth,agent";

/// Long-format piano roll: one row per (frame, key).
pub fn piano_roll_csv(record: &EpisodeRecord, base_pitch: i32) -> String {
    let mut out = String::from(PIANO_ROLL_HEADER);
    out.push('\n');
    for (t, (truth, agent)) in record.truth.iter().zip(&record.keyboard).enumerate() {
        for (k, (&y, &a)) in truth.iter().zip(agent).enumerate() {
            let _ = writeln!(out, "{t},{k},{},{},{}", base_pitch + k as i32, y as u8, a as u8);
        }
    }
    out
}

/// Greedy play of a checkpoint on the configured world, without learning.
pub fn eval_checkpoint(
    config: &RunConfig,
    checkpoint: &Checkpoint,
    episodes: usize,
) -> Result<(RunLog, Vec<EpisodeRecord>)> {
    let episode = config.resolved_episode()?;
    let model = config.model();
    if checkpoint.model != model {
        return Err(Error::Config(format!(
            "checkpoint holds a {:?} model, the configuration needs {:?}",
            checkpoint.model, model
        )));
    }
    let mut env = Env::new(episode)?;
    evaluate(&mut env, &model, &checkpoint.params, episodes, config.seed, Selection::Greedy)
}
