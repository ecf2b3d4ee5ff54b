//! Learning to transcribe music by playing along.
//!
//! An agent listens to a "world" track through a short spectrogram window and
//! plays a software instrument in response. Its reward is the similarity
//! between the world's spectrum and the spectrum of its own playing; no note
//! labels are used for learning. Ground truth is only used to measure
//! framewise precision, recall and F1.

pub mod agent;
pub mod cli;
pub mod env;
pub mod error;
pub mod features;
pub mod metrics;
pub mod rewards;
pub mod runlog;
pub mod synth;

pub use error::{Error, Result};
