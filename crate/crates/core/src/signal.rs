//! Quantized ADC stream synthesis.
//!
//! Models a 16-bit digitizer front end at desk scale: a configurable tone
//! (frequency, amplitude, phase, DC offset) plus additive Gaussian noise,
//! quantized to signed 16-bit codes on a symmetric +/-32767 scale.
//!
//! Sample timestamps are plain sample indices with index 0 at run start
//! (the role a PPS input plays in hardware); there is no wall-clock
//! discipline in the model.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand_distr::{Distribution, Normal};

use crate::rng::rng_from_seed;

const TWO_PI: f64 = 2.0 * PI;

/// Full-scale positive code of the symmetric 16-bit mapping.
pub const CODE_MAX: f64 = 32767.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalError {
    /// ADC configuration violates an invariant.
    InvalidAdcConfig(&'static str),
    /// Tone parameters violate an invariant for the given ADC config.
    InvalidTone(&'static str),
    /// A block of zero samples was requested.
    EmptyBlock,
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::InvalidAdcConfig(what) => write!(f, "invalid ADC config: {}", what),
            SignalError::InvalidTone(what) => write!(f, "invalid tone spec: {}", what),
            SignalError::EmptyBlock => write!(f, "requested block of zero samples"),
        }
    }
}

/// Static description of the converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcConfig {
    /// Sample rate in samples per second.
    pub sample_rate_hz: f64,
    /// Converter resolution; the code path is fixed at 16.
    pub bits: u8,
    /// Peak-to-peak input range in volts.
    pub full_scale_vpp: f64,
}

impl AdcConfig {
    pub fn new(sample_rate_hz: f64, full_scale_vpp: f64) -> Result<Self, SignalError> {
        let cfg = AdcConfig {
            sample_rate_hz,
            bits: 16,
            full_scale_vpp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(SignalError::InvalidAdcConfig("sample_rate_hz must be > 0"));
        }
        if self.bits != 16 {
            return Err(SignalError::InvalidAdcConfig("bits must be 16"));
        }
        if !self.full_scale_vpp.is_finite() || self.full_scale_vpp <= 0.0 {
            return Err(SignalError::InvalidAdcConfig("full_scale_vpp must be > 0"));
        }
        Ok(())
    }

    /// Half of the full-scale range: the voltage mapped to code 32767.
    pub fn half_scale_v(&self) -> f64 {
        self.full_scale_vpp / 2.0
    }
}

impl Default for AdcConfig {
    /// The hardware-nominal operating point: 1000 MSPS, 1.9 Vpp.
    fn default() -> Self {
        AdcConfig {
            sample_rate_hz: 1.0e9,
            bits: 16,
            full_scale_vpp: 1.9,
        }
    }
}

/// Stimulus description for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    pub freq_hz: f64,
    /// Peak amplitude in volts.
    pub amplitude_v: f64,
    pub phase_rad: f64,
    /// Standard deviation of additive Gaussian noise, volts.
    pub noise_sigma_v: f64,
    pub dc_offset_v: f64,
}

impl ToneSpec {
    pub fn validate_for(&self, cfg: &AdcConfig) -> Result<(), SignalError> {
        if self.amplitude_v.is_nan() || self.amplitude_v < 0.0 {
            return Err(SignalError::InvalidTone("amplitude_v must be >= 0"));
        }
        if self.noise_sigma_v.is_nan() || self.noise_sigma_v < 0.0 {
            return Err(SignalError::InvalidTone("noise_sigma_v must be >= 0"));
        }
        if !(0.0..cfg.sample_rate_hz / 2.0).contains(&self.freq_hz) {
            return Err(SignalError::InvalidTone("freq_hz must be in [0, fs/2)"));
        }
        Ok(())
    }
}

impl Default for ToneSpec {
    fn default() -> Self {
        ToneSpec {
            freq_hz: 0.0,
            amplitude_v: 0.0,
            phase_rad: 0.0,
            noise_sigma_v: 0.0,
            dc_offset_v: 0.0,
        }
    }
}

/// A contiguous run of codes for one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveformBlock {
    pub channel_id: u8,
    /// Samples since run start; the stream timestamp base.
    pub start_sample_index: u64,
    pub samples: Vec<i16>,
}

/// Quantizes a voltage to a signed 16-bit code.
///
/// The mapping is symmetric: +/-(full_scale/2) volts maps to +/-32767.
/// Rounding is half away from zero and out-of-range inputs saturate, so
/// -32768 is only reachable by clamping.
#[inline]
pub fn quantize_volts(v: f64, cfg: &AdcConfig) -> i16 {
    let x = v / cfg.half_scale_v() * CODE_MAX;
    // libm::round ties away from zero, unlike round-to-even hardware.
    let r = libm::round(x);
    r.clamp(-32768.0, 32767.0) as i16
}

/// Inverse of [`quantize_volts`] up to quantization error.
#[inline]
pub fn dequantize_code(code: i16, cfg: &AdcConfig) -> f64 {
    f64::from(code) / CODE_MAX * cfg.half_scale_v()
}

/// Ideal (unquantized, noiseless) tone value at an absolute sample index.
#[inline]
pub fn tone_value(tone: &ToneSpec, cfg: &AdcConfig, sample_index: u64) -> f64 {
    let t = sample_index as f64;
    tone.dc_offset_v
        + tone.amplitude_v * libm::cos(TWO_PI * tone.freq_hz * t / cfg.sample_rate_hz + tone.phase_rad)
}

/// Synthesizes one block of quantized samples.
///
/// Deterministic for a given seed: the same `(tone, cfg, start, n, seed)`
/// always yields the identical block.
pub fn synthesize_block(
    tone: &ToneSpec,
    cfg: &AdcConfig,
    channel_id: u8,
    start_sample_index: u64,
    n: usize,
    rng_seed: u64,
) -> Result<WaveformBlock, SignalError> {
    cfg.validate()?;
    tone.validate_for(cfg)?;
    if n == 0 {
        return Err(SignalError::EmptyBlock);
    }

    let mut samples = Vec::with_capacity(n);
    if tone.noise_sigma_v > 0.0 {
        let mut rng = rng_from_seed(rng_seed);
        // sigma > 0 and finite here, so construction cannot fail.
        let noise = Normal::new(0.0, tone.noise_sigma_v).expect("valid sigma");
        for i in 0..n {
            let idx = start_sample_index + i as u64;
            let v = tone_value(tone, cfg, idx) + noise.sample(&mut rng);
            samples.push(quantize_volts(v, cfg));
        }
    } else {
        for i in 0..n {
            let idx = start_sample_index + i as u64;
            samples.push(quantize_volts(tone_value(tone, cfg, idx), cfg));
        }
    }

    Ok(WaveformBlock {
        channel_id,
        start_sample_index,
        samples,
    })
}
