//! Additive software instrument driven by absolute keyboard states.
//!
//! The instrument stands in for a MIDI-controlled sampler. Every voice is a
//! stack of harmonic partials under a linear ADSR envelope. Rendering is a
//! plain per-sample loop, so splitting a render into several calls yields
//! bit-identical output to a single call of the combined length.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: f64 = 16_000.0;

/// Every note is struck with the same velocity.
pub const DEFAULT_VELOCITY: u8 = 100;

/// Equal-tempered frequency of a MIDI pitch number, A4 = 69 = 440 Hz.
pub fn pitch_to_frequency(pitch: i32) -> Result<f64> {
    if !(0..=127).contains(&pitch) {
        return Err(Error::domain(format!("pitch {pitch} outside 0..=127")));
    }
    Ok(440.0 * 2f64.powf((pitch - 69) as f64 / 12.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentPreset {
    pub name: String,
    /// Relative amplitude per harmonic, fundamental first.
    pub partial_amplitudes: Vec<f64>,
    pub attack_s: f64,
    pub decay_s: f64,
    pub sustain_level: f64,
    pub release_s: f64,
    /// Harmonic `h` (1-based) is additionally scaled by `h^-decay_per_partial`.
    pub decay_per_partial: f64,
}

impl InstrumentPreset {
    pub fn validate(&self) -> Result<()> {
        let amps = &self.partial_amplitudes;
        if amps.is_empty() {
            return Err(Error::domain("preset needs at least one partial"));
        }
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) || amps[0] <= 0.0 {
            return Err(Error::domain(
                "partial amplitudes must be non-negative with a positive fundamental",
            ));
        }
        if !(0.0..=1.0).contains(&self.sustain_level) {
            return Err(Error::domain("sustain level must lie in [0, 1]"));
        }
        let times = [self.attack_s, self.decay_s, self.release_s];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::domain("envelope times must be finite and >= 0"));
        }
        if !self.decay_per_partial.is_finite() {
            return Err(Error::domain("decay_per_partial must be finite"));
        }
        Ok(())
    }

    /// Percussive, bright preset used for both world and agent by default.
    pub fn piano() -> Self {
        InstrumentPreset {
            name: "piano".into(),
            partial_amplitudes: vec![1.0; 8],
            attack_s: 0.005,
            decay_s: 1.5,
            sustain_level: 0.0,
            release_s: 0.05,
            decay_per_partial: 1.0,
        }
    }

    /// Hollow plucked preset: almost no fundamental, most energy in the third
    /// and fifth partials. Used as an unfamiliar world instrument.
    pub fn guitar() -> Self {
        InstrumentPreset {
            name: "guitar".into(),
            partial_amplitudes: vec![0.02, 0.2, 1.0, 0.2, 1.0, 0.2],
            attack_s: 0.003,
            decay_s: 0.8,
            sustain_level: 0.15,
            release_s: 0.08,
            decay_per_partial: 1.5,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "piano" => Ok(Self::piano()),
            "guitar" => Ok(Self::guitar()),
            other => Err(Error::domain(format!("unknown instrument preset `{other}`"))),
        }
    }

    /// Per-partial gain including the harmonic rolloff.
    fn partial_gains(&self) -> Vec<f64> {
        self.partial_amplitudes
            .iter()
            .enumerate()
            .map(|(h, a)| a * ((h + 1) as f64).powf(-self.decay_per_partial))
            .collect()
    }
}

/// Binary state of the agent's keys; key 0 sounds `base_pitch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyboardState {
    pub pressed: Vec<bool>,
    pub base_pitch: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyEvent {
    NoteOn { key: usize },
    NoteOff { key: usize },
}

impl KeyboardState {
    pub fn new(keys: usize, base_pitch: i32) -> Self {
        KeyboardState {
            pressed: vec![false; keys],
            base_pitch,
        }
    }

    pub fn len(&self) -> usize {
        self.pressed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pressed.is_empty()
    }

    /// The action is the new absolute key state; only transitions produce events.
    pub fn apply(&self, action: &[bool]) -> Result<(KeyboardState, Vec<KeyEvent>)> {
        if action.len() != self.pressed.len() {
            return Err(Error::domain(format!(
                "action has {} keys, keyboard has {}",
                action.len(),
                self.pressed.len()
            )));
        }
        let events = self
            .pressed
            .iter()
            .zip(action)
            .enumerate()
            .filter_map(|(key, (&was, &now))| match (was, now) {
                (false, true) => Some(KeyEvent::NoteOn { key }),
                (true, false) => Some(KeyEvent::NoteOff { key }),
                _ => None,
            })
            .collect();
        let next = KeyboardState {
            pressed: action.to_vec(),
            base_pitch: self.base_pitch,
        };
        Ok((next, events))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Attack,
    Decay,
    Sustain,
    Release,
    Dead,
}

/// One sounding note.
///
/// All partials are exact harmonics, so the phase of partial `h` is always `h`
/// times the fundamental phase; a single accumulator drives the whole stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiceState {
    pub pitch: i32,
    /// Fundamental phase in radians, kept in `[0, 2π)`.
    pub phase: f64,
    pub stage: Stage,
    pub stage_time_s: f64,
    pub amplitude_at_release: f64,
    pub gain: f64,
}

impl VoiceState {
    pub fn new(pitch: i32, velocity: u8) -> Self {
        VoiceState {
            pitch,
            phase: 0.0,
            stage: Stage::Attack,
            stage_time_s: 0.0,
            amplitude_at_release: 0.0,
            gain: velocity as f64 / 127.0,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.stage == Stage::Dead
    }

    pub fn is_held(&self) -> bool {
        matches!(self.stage, Stage::Attack | Stage::Decay | Stage::Sustain)
    }

    pub fn envelope(&self, preset: &InstrumentPreset) -> f64 {
        let t = self.stage_time_s;
        match self.stage {
            Stage::Attack => {
                if preset.attack_s > 0.0 {
                    (t / preset.attack_s).min(1.0)
                } else {
                    1.0
                }
            }
            Stage::Decay => {
                let frac = if preset.decay_s > 0.0 {
                    (t / preset.decay_s).min(1.0)
                } else {
                    1.0
                };
                1.0 - (1.0 - preset.sustain_level) * frac
            }
            Stage::Sustain => preset.sustain_level,
            Stage::Release => {
                if preset.release_s > 0.0 {
                    self.amplitude_at_release * (1.0 - t / preset.release_s).max(0.0)
                } else {
                    0.0
                }
            }
            Stage::Dead => 0.0,
        }
    }

    pub fn release(&mut self, preset: &InstrumentPreset) {
        if !self.is_held() {
            return;
        }
        self.amplitude_at_release = self.envelope(preset);
        self.stage = if preset.release_s > 0.0 {
            Stage::Release
        } else {
            Stage::Dead
        };
        self.stage_time_s = 0.0;
    }

    fn advance(&mut self, dt: f64, preset: &InstrumentPreset) {
        self.stage_time_s += dt;
        loop {
            let (limit, next) = match self.stage {
                Stage::Attack => (preset.attack_s, Stage::Decay),
                Stage::Decay => (preset.decay_s, Stage::Sustain),
                Stage::Release => (preset.release_s, Stage::Dead),
                Stage::Sustain | Stage::Dead => return,
            };
            if self.stage_time_s < limit {
                return;
            }
            self.stage_time_s -= limit;
            self.stage = next;
        }
    }
}

/// Sums all live voices into `out`, advancing phases and envelopes.
/// Voices that die during the buffer are dropped afterwards.
pub fn render_into(
    voices: &mut Vec<VoiceState>,
    preset: &InstrumentPreset,
    out: &mut [f64],
    sample_rate: f64,
) {
    out.fill(0.0);
    let dt = 1.0 / sample_rate;
    let gains = preset.partial_gains();
    let nyquist = sample_rate / 2.0;
    for voice in voices.iter_mut() {
        let f0 = pitch_to_frequency(voice.pitch).expect("voice pitch validated at note-on");
        let audible = gains
            .iter()
            .enumerate()
            .take_while(|(h, _)| f0 * ((*h + 1) as f64) < nyquist)
            .count();
        let increment = TAU * f0 / sample_rate;
        for sample in out.iter_mut() {
            if voice.is_dead() {
                break;
            }
            let level = voice.envelope(preset) * voice.gain;
            if level != 0.0 {
                *sample += level * harmonic_sum(&gains[..audible], voice.phase);
            }
            voice.phase += increment;
            if voice.phase >= TAU {
                voice.phase -= TAU;
            }
            voice.advance(dt, preset);
        }
    }
    voices.retain(|v| !v.is_dead());
}

/// `render_into` returning a fresh buffer.
pub fn render_frame(
    voices: &mut Vec<VoiceState>,
    preset: &InstrumentPreset,
    n_samples: usize,
    sample_rate: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; n_samples];
    render_into(voices, preset, &mut out, sample_rate);
    out
}

/// `Σ_h gains[h] · sin((h+1)·phase)` via the Chebyshev recurrence
/// `sin((n+1)x) = 2cos(x)sin(nx) − sin((n−1)x)`.
fn harmonic_sum(gains: &[f64], phase: f64) -> f64 {
    let (s1, c1) = phase.sin_cos();
    let two_cos = 2.0 * c1;
    let (mut prev, mut cur) = (0.0, s1);
    let mut acc = 0.0;
    for g in gains {
        acc += g * cur;
        let next = two_cos * cur - prev;
        prev = cur;
        cur = next;
    }
    acc
}

/// A keyboard plus its sounding voices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub preset: InstrumentPreset,
    pub keyboard: KeyboardState,
    pub voices: Vec<VoiceState>,
    pub sample_rate: f64,
}

impl Instrument {
    pub fn new(
        preset: InstrumentPreset,
        keys: usize,
        base_pitch: i32,
        sample_rate: f64,
    ) -> Result<Self> {
        preset.validate()?;
        pitch_to_frequency(base_pitch)?;
        pitch_to_frequency(base_pitch + keys as i32 - 1)?;
        Ok(Instrument {
            preset,
            keyboard: KeyboardState::new(keys, base_pitch),
            voices: Vec::new(),
            sample_rate,
        })
    }

    pub fn apply(&mut self, action: &[bool]) -> Result<Vec<KeyEvent>> {
        let (next, events) = self.keyboard.apply(action)?;
        for event in &events {
            match *event {
                KeyEvent::NoteOn { key } => {
                    let pitch = self.keyboard.base_pitch + key as i32;
                    self.voices.push(VoiceState::new(pitch, DEFAULT_VELOCITY));
                }
                KeyEvent::NoteOff { key } => {
                    let pitch = self.keyboard.base_pitch + key as i32;
                    let preset = &self.preset;
                    for v in self.voices.iter_mut().filter(|v| v.pitch == pitch) {
                        v.release(preset);
                    }
                }
            }
        }
        self.voices.retain(|v| !v.is_dead());
        self.keyboard = next;
        Ok(events)
    }

    pub fn render_into(&mut self, out: &mut [f64]) {
        render_into(&mut self.voices, &self.preset, out, self.sample_rate);
    }
}
