//! Per-episode training log and its CSV form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub episode: usize,
    /// Seed of the episode's world.
    pub seed: u64,
    pub mean_reward: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean policy entropy over the episode's steps.
    pub entropy: f64,
    /// Seconds since the start of the run when the episode's batch finished.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
}

/// Header of `runlog.csv`. Wall-clock time is kept out of this file so that
/// identical runs produce identical bytes; it goes to `timing.csv`.
pub const RUNLOG_HEADER: &str = "episode,seed,mean_reward,precision,recall,f1,entropy";
pub const TIMING_HEADER: &str = "episode,wall_seconds";

impl RunLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: RunRow) {
        self.rows.push(row);
    }

    /// Mean of a column over the last `n` rows (all rows if fewer).
    pub fn tail_mean(&self, n: usize, column: impl Fn(&RunRow) -> f64) -> Option<f64> {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(column).sum::<f64>() / tail.len() as f64)
    }

    /// Mean of a column over the first `n` rows.
    pub fn head_mean(&self, n: usize, column: impl Fn(&RunRow) -> f64) -> Option<f64> {
        let head = &self.rows[..n.min(self.rows.len())];
        if head.is_empty() {
            return None;
        }
        Some(head.iter().map(column).sum::<f64>() / head.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RUNLOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.episode, r.seed, r.mean_reward, r.precision, r.recall, r.f1, r.entropy
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from(TIMING_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.3}", r.episode, r.wall_seconds);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format { kind: "runlog", msg };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == RUNLOG_HEADER => {}
            other => return Err(bad(format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(bad(format!("line {}: expected 7 fields", i + 2)));
            }
            let num = |j: usize| -> Result<f64> {
                fields[j]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("line {}: {e}", i + 2)))
            };
            rows.push(RunRow {
                episode: fields[0].parse().map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
                seed: fields[1].parse().map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
                mean_reward: num(2)?,
                precision: num(3)?,
                recall: num(4)?,
                f1: num(5)?,
                entropy: num(6)?,
                wall_seconds: 0.0,
            });
        }
        Ok(RunLog { rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Pearson correlation of two equally long columns; `None` when fewer than
/// two rows or either column has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between episode reward and episode F1.
pub fn correlate(log: &RunLog) -> Option<f64> {
    let rewards: Vec<f64> = log.rows.iter().map(|r| r.mean_reward).collect();
    let f1: Vec<f64> = log.rows.iter().map(|r| r.f1).collect();
    pearson(&rewards, &f1)
}
