//! Core algorithms for a trigger-less streaming digitizer readout chain.
//!
//! This crate models the signal path of a multi-channel RF digitizer in
//! software: ADC tone synthesis, a lossless residual codec for sample
//! blocks, a framed stream protocol with CRC-32C integrity, coherent IQ
//! demodulation with stability statistics, and serial-link quality
//! analysis (PRBS generation/checking and eye scans).
//!
//! The crate is `no_std` (with `alloc`) so the algorithms can run both in
//! host-side tooling and in embedded firmware contexts. All randomness is
//! deterministic and seed-driven; there is no ambient entropy.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bits;
pub mod codec;
pub mod demod;
pub mod linkqual;
pub mod proto;
pub mod rng;
pub mod signal;

pub use codec::{compress_block, decompress_block, CodecError, CodecParams, CompressedBlock};
pub use demod::{DemodConfig, DemodError, IqMeasurement, StabilityReport, StreamDemodulator};
pub use linkqual::{ChannelModel, EyeScanResult, LinkQualError, Prbs31};
pub use proto::{FrameError, FrameHeader, FrameView, SequenceStatus, SequenceTracker};
pub use signal::{AdcConfig, SignalError, ToneSpec, WaveformBlock};
