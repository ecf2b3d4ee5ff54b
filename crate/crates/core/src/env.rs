//! The play-along environment.
//!
//! A "world" score is rendered once per episode with the world instrument and
//! analysed into spectrogram frames. The agent then acts frame by frame on its
//! own instrument; after each action one hop of agent audio is rendered and the
//! agent frame over the most recent window is compared to the world frame at
//! the same time index.
//!
//! Frame `t` of either stream covers the window that ends with hop `t`, so an
//! agent whose keyboard equals the world's keyboard at every step produces
//! bit-identical frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    assemble_state, compress, EnvState, SpectrogramFrame, StateLayout, Stft, DEFAULT_CONTEXT,
    HOP_SIZE, WINDOW_SIZE,
};
use crate::rewards::RewardKind;
use crate::synth::{Instrument, InstrumentPreset, DEFAULT_VELOCITY, SAMPLE_RATE};

/// Binary key-press decision of length K. Monophonic policies map their
/// index onto this form (index K meaning all keys up).
pub type ActionVector = Vec<bool>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEvent {
    #[serde(rename = "onset")]
    pub onset_frame: u32,
    #[serde(rename = "offset")]
    pub offset_frame: u32,
    pub pitch: i32,
    pub velocity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldScore {
    pub length_frames: u32,
    pub base_pitch: i32,
    #[serde(rename = "K")]
    pub keys: usize,
    pub notes: Vec<NoteEvent>,
    /// Configured bound at generation time; for loaded files the observed maximum.
    #[serde(skip)]
    pub max_polyphony: usize,
}

impl WorldScore {
    pub fn validate(&self) -> Result<()> {
        for n in &self.notes {
            if n.offset_frame <= n.onset_frame {
                return Err(Error::domain(format!(
                    "note at frame {} ends at {}, not after its onset",
                    n.onset_frame, n.offset_frame
                )));
            }
            if n.pitch < self.base_pitch || n.pitch >= self.base_pitch + self.keys as i32 {
                return Err(Error::domain(format!(
                    "pitch {} outside the range {}..{}",
                    n.pitch,
                    self.base_pitch,
                    self.base_pitch + self.keys as i32
                )));
            }
            if !(1..=127).contains(&n.velocity) {
                return Err(Error::domain(format!("velocity {} outside 1..=127", n.velocity)));
            }
        }
        Ok(())
    }

    /// Largest number of simultaneously sounding notes at any frame.
    pub fn observed_polyphony(&self) -> usize {
        let end = self.notes.iter().map(|n| n.offset_frame).max().unwrap_or(0);
        (0..end)
            .map(|t| {
                self.notes
                    .iter()
                    .filter(|n| n.onset_frame <= t && t < n.offset_frame)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut score: WorldScore = serde_json::from_str(text)?;
        score.validate()?;
        score.max_polyphony = score.observed_polyphony();
        Ok(score)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ground-truth key activity at frame `t`. Frames past the score are silent.
pub fn truth_activity(score: &WorldScore, t: u32) -> Vec<bool> {
    let mut bits = vec![false; score.keys];
    for n in &score.notes {
        if n.onset_frame <= t && t < n.offset_frame {
            let key = (n.pitch - score.base_pitch) as usize;
            if let Some(b) = bits.get_mut(key) {
                *b = true;
            }
        }
    }
    bits
}

/// Number of distinct actions: `2^K` for the factorised keyboard, `K + 1`
/// for a single-key player (one action is "play nothing").
pub fn action_space_size(keys: usize, polyphonic: bool) -> u128 {
    if !polyphonic {
        keys as u128 + 1
    } else if keys >= 128 {
        u128::MAX
    } else {
        1u128 << keys
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub keys: usize,
    pub base_pitch: i32,
    pub episode_frames: usize,
    pub context: usize,
    pub world_preset: String,
    pub agent_preset: String,
    pub reward: RewardKind,
    pub max_polyphony: usize,
    pub seed: u64,
    /// Fixed world in place of random generation.
    #[serde(skip)]
    pub score: Option<WorldScore>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            keys: 12,
            base_pitch: 60,
            episode_frames: 256,
            context: DEFAULT_CONTEXT,
            world_preset: "piano".into(),
            agent_preset: "piano".into(),
            reward: RewardKind::CombinedHellingerCosine,
            max_polyphony: 1,
            seed: 0,
            score: None,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keys == 0 {
            return Err(Error::domain("tonal range must have at least one key"));
        }
        if self.episode_frames <= 2 * self.context {
            return Err(Error::domain(format!(
                "episode of {} frames is too short for context radius {}",
                self.episode_frames, self.context
            )));
        }
        if self.max_polyphony == 0 {
            return Err(Error::domain("max_polyphony must be at least 1"));
        }
        crate::synth::pitch_to_frequency(self.base_pitch)?;
        crate::synth::pitch_to_frequency(self.base_pitch + self.keys as i32 - 1)?;
        InstrumentPreset::by_name(&self.world_preset)?;
        InstrumentPreset::by_name(&self.agent_preset)?;
        if let Some(score) = &self.score {
            score.validate()?;
            if score.base_pitch != self.base_pitch || score.keys != self.keys {
                return Err(Error::domain("fixed score range differs from the configured range"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout {
            n_bins: WINDOW_SIZE / 2 + 1,
            context: self.context,
            keys: self.keys,
        }
    }
}

/// Random melody or chord sequence. Groups of 1..=max_polyphony notes start
/// together; the next group starts a random rest after the shortest note of
/// the current group ends. Older notes are cut short when a new group would
/// exceed the polyphony bound.
pub fn generate_world<R: Rng + ?Sized>(config: &EpisodeConfig, rng: &mut R) -> WorldScore {
    let length = config.episode_frames as u32;
    let base = config.base_pitch;
    let mut notes: Vec<NoteEvent> = Vec::new();
    let mut t: u32 = rng.random_range(0..=16);
    while t < length {
        // a pitch still sounding (or ending right now) cannot start again here
        let busy = |notes: &[NoteEvent], p: i32| {
            notes.iter().any(|n| n.pitch == p && n.offset_frame >= t)
        };
        let mut free: Vec<i32> = (0..config.keys as i32)
            .map(|k| base + k)
            .filter(|&p| !busy(&notes, p))
            .collect();
        let wanted = rng.random_range(1..=config.max_polyphony);
        if free.is_empty() {
            t += 1;
            continue;
        }
        let group = wanted.min(free.len());

        let mut active: Vec<usize> = (0..notes.len())
            .filter(|&i| notes[i].offset_frame > t)
            .collect();
        active.sort_by_key(|&i| notes[i].onset_frame);
        let excess = (active.len() + group).saturating_sub(config.max_polyphony);
        for &i in active.iter().take(excess) {
            notes[i].offset_frame = t;
        }

        let mut shortest = u32::MAX;
        for _ in 0..group {
            let pitch = free.swap_remove(rng.random_range(0..free.len()));
            let duration: u32 = rng.random_range(4..=32);
            shortest = shortest.min(duration);
            notes.push(NoteEvent {
                onset_frame: t,
                offset_frame: (t + duration).min(length),
                pitch,
                velocity: DEFAULT_VELOCITY,
            });
        }
        t += shortest + rng.random_range(0..=16);
    }
    notes.sort_by_key(|n| (n.onset_frame, n.pitch));
    WorldScore {
        length_frames: length,
        base_pitch: base,
        keys: config.keys,
        notes,
        max_polyphony: config.max_polyphony,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Ground truth for the frame the reward refers to; for measurement only.
    pub truth_frame: Vec<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Env {
    config: EpisodeConfig,
    #[serde(skip)]
    stft: Stft,
    score: Option<WorldScore>,
    /// Linear world magnitudes, used by the reward.
    world_frames: Vec<SpectrogramFrame>,
    /// Compressed world magnitudes, used by the state.
    world_features: Vec<SpectrogramFrame>,
    agent: Instrument,
    agent_window: Vec<f64>,
    t: usize,
    done: bool,
}

impl Env {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let agent = Instrument::new(
            InstrumentPreset::by_name(&config.agent_preset)?,
            config.keys,
            config.base_pitch,
            SAMPLE_RATE,
        )?;
        Ok(Env {
            stft: Stft::new(WINDOW_SIZE)?,
            score: None,
            world_frames: Vec::new(),
            world_features: Vec::new(),
            agent,
            agent_window: vec![0.0; WINDOW_SIZE],
            t: 0,
            done: false,
            config,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn layout(&self) -> StateLayout {
        self.config.layout()
    }

    pub fn score(&self) -> Option<&WorldScore> {
        self.score.as_ref()
    }

    pub fn world_frames(&self) -> &[SpectrogramFrame] {
        &self.world_frames
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Starts a new episode. The seed drives world generation unless the
    /// config carries a fixed score.
    pub fn reset(&mut self, seed: u64) -> Result<StepResult> {
        let score = match &self.config.score {
            Some(fixed) => fixed.clone(),
            None => generate_world(&self.config, &mut ChaCha8Rng::seed_from_u64(seed)),
        };
        let frames = self.config.episode_frames;
        let mut world = Instrument::new(
            InstrumentPreset::by_name(&self.config.world_preset)?,
            self.config.keys,
            self.config.base_pitch,
            SAMPLE_RATE,
        )?;
        let lead = WINDOW_SIZE - HOP_SIZE;
        let mut audio = vec![0.0; lead + frames * HOP_SIZE];
        for t in 0..frames {
            world.apply(&truth_activity(&score, t as u32))?;
            let start = lead + t * HOP_SIZE;
            world.render_into(&mut audio[start..start + HOP_SIZE]);
        }
        self.world_frames = self.stft.frames(&audio, HOP_SIZE)?;
        debug_assert_eq!(self.world_frames.len(), frames);
        self.world_features = self.world_frames.iter().map(|f| compress(f)).collect();
        self.score = Some(score);

        self.agent = Instrument::new(
            InstrumentPreset::by_name(&self.config.agent_preset)?,
            self.config.keys,
            self.config.base_pitch,
            SAMPLE_RATE,
        )?;
        self.agent_window.fill(0.0);
        self.t = 0;
        self.done = false;
        Ok(StepResult {
            state: self.observe(),
            reward: 0.0,
            done: false,
            truth_frame: vec![false; self.config.keys],
        })
    }

    fn observe(&self) -> EnvState {
        assemble_state(
            &self.world_features,
            self.stft.n_bins(),
            self.t,
            self.config.context,
            &self.agent.keyboard.pressed,
        )
    }

    pub fn step(&mut self, action: &[bool]) -> Result<StepResult> {
        let score = self
            .score
            .as_ref()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        if self.done {
            return Err(Error::Usage("step called after the episode ended".into()));
        }
        self.agent.apply(action)?;
        self.agent_window.copy_within(HOP_SIZE.., 0);
        let tail = WINDOW_SIZE - HOP_SIZE;
        self.agent.render_into(&mut self.agent_window[tail..]);
        let agent_frame = self.stft.frame(&self.agent_window);
        let reward = self
            .config
            .reward
            .evaluate(&self.world_frames[self.t], &agent_frame)?;
        let truth_frame = truth_activity(score, self.t as u32);

        self.t += 1;
        self.done = self.t >= self.config.episode_frames;
        Ok(StepResult {
            state: self.observe(),
            reward,
            done: self.done,
            truth_frame,
        })
    }

    /// Serialized internal state, for comparing environments.
    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
