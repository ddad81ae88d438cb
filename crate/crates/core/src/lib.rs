//! Link-level simulation of the orthogonal decode-and-forward relay channel.
//!
//! The destination receives the source signal and a relayed copy on
//! orthogonal channels. The relay decodes the message and re-encodes it,
//! possibly onto a different constellation than the source. The
//! crate provides the maximum-likelihood bit metric that marginalizes over
//! relay decoding errors for arbitrary compatible modulation pairs, the MRC,
//! MMSE and C-MRC linear combiners, and a Monte Carlo BER harness.
//!
//! Module layout follows the receive chain:
//!
//! - [`codec`]: convolutional code with its Viterbi decoder, plus the interleaver.
//! - [`modem`]: Gray-labeled constellations and Gaussian likelihoods.
//! - [`channel`]: Rayleigh block fading over AWGN links.
//! - [`relay`]: decode-and-forward and the residual BER lookup table.
//! - [`combining`]: ML sub-block LLRs and linear combiners.
//! - [`harness`]: configurable BER sweeps with CSV output.

pub mod channel;
pub mod codec;
pub mod combining;
mod error;
pub mod harness;
pub mod math;
pub mod modem;
mod par;
pub mod relay;
pub mod rng;

pub use error::{Error, Result};
