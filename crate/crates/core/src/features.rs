//! Magnitude spectrogram and observation assembly.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WINDOW_SIZE: usize = 1024;
pub const HOP_SIZE: usize = 512;
pub const DEFAULT_CONTEXT: usize = 1;

/// Linear magnitude bins `0..=window/2` of one analysis frame.
pub type SpectrogramFrame = Vec<f64>;

/// Hann-windowed FFT magnitude of fixed-size frames.
#[derive(Clone)]
pub struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft")
            .field("window_size", &self.window.len())
            .finish()
    }
}

impl Stft {
    pub fn new(window_size: usize) -> Result<Self> {
        if window_size < 2 || !window_size.is_power_of_two() {
            return Err(Error::domain(format!(
                "window size {window_size} is not a power of two >= 2"
            )));
        }
        let n = window_size as f64;
        // periodic Hann
        let window = (0..window_size)
            .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(window_size);
        Ok(Stft { window, fft })
    }

    pub fn window_size(&self) -> usize {
        self.window.len()
    }

    pub fn n_bins(&self) -> usize {
        self.window.len() / 2 + 1
    }

    /// Magnitude spectrum of exactly `window_size` samples.
    pub fn frame(&self, samples: &[f64]) -> SpectrogramFrame {
        assert_eq!(samples.len(), self.window.len());
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n_bins()].iter().map(|c| c.norm()).collect()
    }

    pub fn frames(&self, samples: &[f64], hop_size: usize) -> Result<Vec<SpectrogramFrame>> {
        let win = self.window.len();
        if hop_size == 0 {
            return Err(Error::domain("hop size must be positive"));
        }
        if samples.len() < win {
            return Err(Error::domain(format!(
                "buffer of {} samples is shorter than the window ({win})",
                samples.len()
            )));
        }
        let count = 1 + (samples.len() - win) / hop_size;
        Ok((0..count)
            .map(|f| self.frame(&samples[f * hop_size..f * hop_size + win]))
            .collect())
    }
}

/// Frame `f` covers `samples[f*hop .. f*hop + window]`.
pub fn stft_magnitude(
    samples: &[f64],
    window_size: usize,
    hop_size: usize,
) -> Result<Vec<SpectrogramFrame>> {
    Stft::new(window_size)?.frames(samples, hop_size)
}

/// Dynamic range compression applied to world frames before they enter the state.
pub fn compress(frame: &[f64]) -> SpectrogramFrame {
    frame.iter().map(|x| x.ln_1p()).collect()
}

/// Observation `(X_t, ΔX_t, k)` at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Columns `t-c ..= t+c`.
    pub context: Vec<SpectrogramFrame>,
    /// First-order time difference of `context`.
    pub delta: Vec<SpectrogramFrame>,
    pub keyboard: Vec<bool>,
}

/// Dimensions of a flattened state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_bins: usize,
    pub context: usize,
    pub keys: usize,
}

impl StateLayout {
    pub fn columns(&self) -> usize {
        2 * self.context + 1
    }

    /// Length of the X block (and of the ΔX block).
    pub fn block_len(&self) -> usize {
        self.columns() * self.n_bins
    }

    pub fn len(&self) -> usize {
        2 * self.block_len() + self.keys
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EnvState {
    pub fn layout(&self) -> StateLayout {
        StateLayout {
            n_bins: self.context.first().map_or(0, Vec::len),
            context: self.context.len() / 2,
            keys: self.keyboard.len(),
        }
    }
}

/// Builds the observation around frame `t`. Frames outside the sequence are
/// zero. Column 0 of the delta is taken against frame `t-c-1`.
pub fn assemble_state(
    frames: &[SpectrogramFrame],
    n_bins: usize,
    t: usize,
    context: usize,
    keyboard: &[bool],
) -> EnvState {
    let zero = vec![0.0; n_bins];
    let at = |i: isize| -> &[f64] {
        if i < 0 || i as usize >= frames.len() {
            &zero
        } else {
            &frames[i as usize]
        }
    };
    let start = t as isize - context as isize;
    let cols = 2 * context + 1;
    let mut ctx = Vec::with_capacity(cols);
    let mut delta = Vec::with_capacity(cols);
    for j in 0..cols as isize {
        let cur = at(start + j);
        let prev = at(start + j - 1);
        ctx.push(cur.to_vec());
        delta.push(cur.iter().zip(prev).map(|(a, b)| a - b).collect());
    }
    EnvState {
        context: ctx,
        delta,
        keyboard: keyboard.to_vec(),
    }
}

/// X columns in time order, then ΔX columns, then the keyboard as 0/1.
pub fn flatten_state(state: &EnvState) -> Vec<f64> {
    let mut out = Vec::with_capacity(state.layout().len());
    flatten_into(state, &mut out);
    out
}

pub fn flatten_into(state: &EnvState, out: &mut Vec<f64>) {
    out.clear();
    for col in state.context.iter().chain(&state.delta) {
        out.extend_from_slice(col);
    }
    out.extend(state.keyboard.iter().map(|&k| if k { 1.0 } else { 0.0 }));
}

pub fn unflatten_state(vec: &[f64], layout: StateLayout) -> Result<EnvState> {
    if vec.len() != layout.len() {
        return Err(Error::domain(format!(
            "state vector has length {}, layout expects {}",
            vec.len(),
            layout.len()
        )));
    }
    let (blocks, keys) = vec.split_at(2 * layout.block_len());
    let mut cols = blocks.chunks(layout.n_bins.max(1)).map(<[f64]>::to_vec);
    let context = cols.by_ref().take(layout.columns()).collect();
    let delta = cols.take(layout.columns()).collect();
    Ok(EnvState {
        context,
        delta,
        keyboard: keys.iter().map(|&k| k != 0.0).collect(),
    })
}
