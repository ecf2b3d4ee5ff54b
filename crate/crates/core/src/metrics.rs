//! Framewise precision / recall / F1 and note extraction from key trajectories.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::env::NoteEvent;
use crate::error::{Error, Result};
use crate::synth::DEFAULT_VELOCITY;

/// True positives, false positives and false negatives over (frame, key) cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl AddAssign for FrameCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

impl FrameCounts {
    pub fn update(&mut self, predicted: &[bool], truth: &[bool]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::domain(format!(
                "prediction has {} keys, truth has {}",
                predicted.len(),
                truth.len()
            )));
        }
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(())
    }

    pub fn prf(&self) -> Prf {
        prf(*self)
    }
}

pub fn update_counts(
    mut counts: FrameCounts,
    predicted: &[bool],
    truth: &[bool],
) -> Result<FrameCounts> {
    counts.update(predicted, truth)?;
    Ok(counts)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Any 0/0 is taken as 0.
pub fn prf(c: FrameCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Each maximal run of consecutive active frames on a key becomes one note.
pub fn extract_notes(trajectory: &[Vec<bool>], base_pitch: i32) -> Vec<NoteEvent> {
    let keys = trajectory.iter().map(Vec::len).max().unwrap_or(0);
    let mut notes = Vec::new();
    for key in 0..keys {
        let mut start: Option<usize> = None;
        for (t, frame) in trajectory.iter().enumerate() {
            let on = frame.get(key).copied().unwrap_or(false);
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    notes.push(note(s, t, base_pitch + key as i32));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            notes.push(note(s, trajectory.len(), base_pitch + key as i32));
        }
    }
    notes.sort_by_key(|n| (n.onset_frame, n.pitch));
    notes
}

fn note(onset: usize, offset: usize, pitch: i32) -> NoteEvent {
    NoteEvent {
        onset_frame: onset as u32,
        offset_frame: offset as u32,
        pitch,
        velocity: DEFAULT_VELOCITY,
    }
}
