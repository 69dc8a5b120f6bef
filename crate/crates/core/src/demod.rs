//! Coherent IQ demodulation and stability statistics.
//!
//! The digital reference is an NCO at `f_if_hz` locked to the sample
//! index, and every measurement window spans an integer number of NCO
//! periods (coherent sampling), which makes the rectangular-window
//! correlation exact for noiseless tones:
//!
//! ```text
//! I = (2/N) * sum x[n] * cos(2*pi*f_if*(start+n)/fs)
//! Q = -(2/N) * sum x[n] * sin(2*pi*f_if*(start+n)/fs)
//! ```
//!
//! For `x[n] = A*cos(w*n + phi)` this recovers `I = A*cos(phi)`,
//! `Q = A*sin(phi)`.
//!
//! The NCO phase is tracked as a rational index `(M*(start+n)) mod N`
//! where `M = f_if*N/fs` is the integer cycles-per-window, so the phase
//! never drifts no matter how large the absolute sample index grows, and
//! one window's result depends only on `start mod (N/gcd)` rather than on
//! accumulated floating-point state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::signal::{AdcConfig, WaveformBlock, CODE_MAX};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemodError {
    /// Window length, rate or frequency out of range.
    InvalidConfig(&'static str),
    /// f_if * window_n / fs is not an integer >= 1.
    NonIntegerPeriodWindow,
    /// A window call received a slice of the wrong length.
    WindowLengthMismatch,
    /// Stability statistics over an all-zero amplitude set.
    MeanAmplitudeZero,
    /// Stability statistics over an empty measurement set.
    NoMeasurements,
}

impl fmt::Display for DemodError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemodError::InvalidConfig(what) => write!(f, "invalid demod config: {}", what),
            DemodError::NonIntegerPeriodWindow => {
                f.write_str("f_if * window_n / fs must be an integer >= 1")
            }
            DemodError::WindowLengthMismatch => f.write_str("window slice length != window_n"),
            DemodError::MeanAmplitudeZero => f.write_str("mean amplitude is zero"),
            DemodError::NoMeasurements => f.write_str("no measurements"),
        }
    }
}

/// Validated demodulation plan; construct via [`DemodConfig::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodConfig {
    f_if_hz: f64,
    fs_hz: f64,
    window_n: usize,
    cycles_per_window: u64,
}

impl DemodConfig {
    /// Relative slack allowed when checking the integer-period condition,
    /// absorbing rounding in configs written as decimal text.
    const PERIOD_TOL: f64 = 1e-6;

    pub fn new(f_if_hz: f64, fs_hz: f64, window_n: usize) -> Result<Self, DemodError> {
        if !fs_hz.is_finite() || fs_hz <= 0.0 {
            return Err(DemodError::InvalidConfig("fs_hz must be > 0"));
        }
        if !f_if_hz.is_finite() || f_if_hz <= 0.0 {
            return Err(DemodError::InvalidConfig("f_if_hz must be > 0"));
        }
        if window_n < 2 {
            return Err(DemodError::InvalidConfig("window_n must be >= 2"));
        }
        let cycles = f_if_hz * window_n as f64 / fs_hz;
        let m = libm::round(cycles);
        if m < 1.0 || (cycles - m).abs() > Self::PERIOD_TOL * cycles.max(1.0) {
            return Err(DemodError::NonIntegerPeriodWindow);
        }
        Ok(DemodConfig {
            f_if_hz,
            fs_hz,
            window_n,
            cycles_per_window: m as u64,
        })
    }

    pub fn f_if_hz(&self) -> f64 {
        self.f_if_hz
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn window_n(&self) -> usize {
        self.window_n
    }

    /// Integer number of NCO cycles in one window.
    pub fn cycles_per_window(&self) -> u64 {
        self.cycles_per_window
    }
}

/// NCO sample tables at the N distinct rational phases of one window.
struct NcoTables {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl NcoTables {
    fn new(window_n: usize) -> Self {
        let n = window_n as f64;
        let mut cos = Vec::with_capacity(window_n);
        let mut sin = Vec::with_capacity(window_n);
        for r in 0..window_n {
            let angle = TWO_PI * (r as f64) / n;
            cos.push(libm::cos(angle));
            sin.push(libm::sin(angle));
        }
        NcoTables { cos, sin }
    }
}

/// Phase table index of the first sample of a window starting at an
/// absolute sample index.
fn phase_index(cfg: &DemodConfig, start_index: u64) -> usize {
    let n = cfg.window_n as u128;
    let m = cfg.cycles_per_window as u128 % n;
    ((m * (start_index as u128 % n)) % n) as usize
}

fn window_sums_i16(
    samples: &[i16],
    tabs: &NcoTables,
    cfg: &DemodConfig,
    start_index: u64,
) -> (f64, f64) {
    let n = cfg.window_n;
    let step = (cfg.cycles_per_window % n as u64) as usize;
    let mut r = phase_index(cfg, start_index);
    let mut si = 0.0f64;
    let mut sq = 0.0f64;
    for &x in samples {
        let xf = f64::from(x);
        si += xf * tabs.cos[r];
        sq += xf * tabs.sin[r];
        r += step;
        if r >= n {
            r -= n;
        }
    }
    let scale = 2.0 / n as f64;
    (scale * si, -(scale * sq))
}

fn window_sums_f64(
    samples: &[f64],
    tabs: &NcoTables,
    cfg: &DemodConfig,
    start_index: u64,
) -> (f64, f64) {
    let n = cfg.window_n;
    let step = (cfg.cycles_per_window % n as u64) as usize;
    let mut r = phase_index(cfg, start_index);
    let mut si = 0.0f64;
    let mut sq = 0.0f64;
    for &xf in samples {
        si += xf * tabs.cos[r];
        sq += xf * tabs.sin[r];
        r += step;
        if r >= n {
            r -= n;
        }
    }
    let scale = 2.0 / n as f64;
    (scale * si, -(scale * sq))
}

/// Demodulates one window of ADC codes starting at an absolute sample
/// index. Returns `(i_value, q_value)` in code units.
pub fn iq_demod_window(
    samples: &[i16],
    cfg: &DemodConfig,
    start_index: u64,
) -> Result<(f64, f64), DemodError> {
    if samples.len() != cfg.window_n {
        return Err(DemodError::WindowLengthMismatch);
    }
    let tabs = NcoTables::new(cfg.window_n);
    Ok(window_sums_i16(samples, &tabs, cfg, start_index))
}

/// As [`iq_demod_window`] for real-valued (unquantized) samples; the
/// closed-form recovery `I = A cos(phi)`, `Q = A sin(phi)` is exact up
/// to float accumulation for these.
pub fn iq_demod_window_real(
    samples: &[f64],
    cfg: &DemodConfig,
    start_index: u64,
) -> Result<(f64, f64), DemodError> {
    if samples.len() != cfg.window_n {
        return Err(DemodError::WindowLengthMismatch);
    }
    let tabs = NcoTables::new(cfg.window_n);
    Ok(window_sums_f64(samples, &tabs, cfg, start_index))
}

/// Amplitude/phase measurement for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqMeasurement {
    pub channel_id: u8,
    pub window_start_sample_index: u64,
    /// In-phase correlation, code units.
    pub i_value: f64,
    /// Quadrature correlation, code units.
    pub q_value: f64,
    /// sqrt(I^2+Q^2) scaled to volts through the ADC code mapping.
    pub amplitude_v: f64,
    /// atan2(Q, I), normalized to (-pi, pi]; 0 for the zero vector.
    pub phase_rad: f64,
}

/// Converts raw I/Q correlations to amplitude (volts) and phase (rad).
pub fn amp_phase(i_value: f64, q_value: f64, adc: &AdcConfig) -> (f64, f64) {
    let amplitude_code = libm::sqrt(i_value * i_value + q_value * q_value);
    let amplitude_v = amplitude_code / CODE_MAX * adc.half_scale_v();
    let phase_rad = if i_value == 0.0 && q_value == 0.0 {
        0.0
    } else {
        let mut p = libm::atan2(q_value, i_value);
        if p <= -PI {
            p += TWO_PI;
        }
        p
    };
    (amplitude_v, phase_rad)
}

/// Assembles a full measurement record from one window's I/Q result.
pub fn measurement_from_iq(
    channel_id: u8,
    window_start_sample_index: u64,
    i_value: f64,
    q_value: f64,
    adc: &AdcConfig,
) -> IqMeasurement {
    let (amplitude_v, phase_rad) = amp_phase(i_value, q_value, adc);
    IqMeasurement {
        channel_id,
        window_start_sample_index,
        i_value,
        q_value,
        amplitude_v,
        phase_rad,
    }
}

struct ChannelAssembly {
    buf: Vec<i16>,
    /// Absolute index of buf[0].
    window_start: u64,
    /// Absolute index expected for the next pushed block.
    next_expected: u64,
}

/// Streaming demodulator: feeds on per-channel blocks in order, emits
/// one measurement per completed non-overlapping window and holds
/// partial windows until their remainder arrives.
pub struct StreamDemodulator {
    cfg: DemodConfig,
    adc: AdcConfig,
    tabs: NcoTables,
    channels: BTreeMap<u8, ChannelAssembly>,
}

impl StreamDemodulator {
    pub fn new(cfg: DemodConfig, adc: AdcConfig) -> Self {
        let tabs = NcoTables::new(cfg.window_n);
        StreamDemodulator {
            cfg,
            adc,
            tabs,
            channels: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &DemodConfig {
        &self.cfg
    }

    /// Consumes one block, appending any completed measurements to `out`.
    ///
    /// Blocks are expected contiguous per channel; on a discontinuity the
    /// partial window is dropped and assembly realigns at the new block.
    pub fn push_block(&mut self, block: &WaveformBlock, out: &mut Vec<IqMeasurement>) {
        let n = self.cfg.window_n;
        let state = self
            .channels
            .entry(block.channel_id)
            .or_insert(ChannelAssembly {
                buf: Vec::with_capacity(2 * n),
                window_start: block.start_sample_index,
                next_expected: block.start_sample_index,
            });

        if block.start_sample_index != state.next_expected {
            state.buf.clear();
            state.window_start = block.start_sample_index;
        }
        state.next_expected = block.start_sample_index + block.samples.len() as u64;
        state.buf.extend_from_slice(&block.samples);

        while state.buf.len() >= n {
            let (i, q) = window_sums_i16(&state.buf[..n], &self.tabs, &self.cfg, state.window_start);
            out.push(measurement_from_iq(
                block.channel_id,
                state.window_start,
                i,
                q,
                &self.adc,
            ));
            state.buf.drain(..n);
            state.window_start += n as u64;
        }
    }

    /// Samples buffered for a channel awaiting window completion.
    pub fn pending(&self, channel_id: u8) -> usize {
        self.channels.get(&channel_id).map_or(0, |s| s.buf.len())
    }
}

/// Batch demodulation of an in-order block stream.
pub fn measure_stream(
    blocks: &[WaveformBlock],
    cfg: &DemodConfig,
    adc: &AdcConfig,
) -> Vec<IqMeasurement> {
    let mut demod = StreamDemodulator::new(*cfg, *adc);
    let mut out = Vec::new();
    for block in blocks {
        demod.push_block(block, &mut out);
    }
    out
}

/// Amplitude/phase stability over a set of measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub n_windows: usize,
    pub amp_mean_v: f64,
    /// Population std of amplitude divided by mean amplitude.
    pub amp_rel_std: f64,
    /// Circular population std of phase, degrees.
    pub phase_std_deg: f64,
}

/// Wraps an angle difference into (-pi, pi] (with -pi mapped to +pi).
pub fn wrap_pi(x: f64) -> f64 {
    let mut r = libm::remainder(x, TWO_PI);
    if r <= -PI {
        r += TWO_PI;
    }
    r
}

/// Computes amplitude and phase stability statistics.
///
/// Phase spread is measured around the circular mean with wrapped
/// differences, so a phase ensemble straddling the +/-pi cut reports its
/// true small spread rather than an artifact near 2*pi.
pub fn stability_stats(measurements: &[IqMeasurement]) -> Result<StabilityReport, DemodError> {
    if measurements.is_empty() {
        return Err(DemodError::NoMeasurements);
    }
    let n = measurements.len() as f64;

    let amp_mean: f64 = measurements.iter().map(|m| m.amplitude_v).sum::<f64>() / n;
    if amp_mean == 0.0 {
        return Err(DemodError::MeanAmplitudeZero);
    }
    let amp_var: f64 = measurements
        .iter()
        .map(|m| {
            let d = m.amplitude_v - amp_mean;
            d * d
        })
        .sum::<f64>()
        / n;

    let sx: f64 = measurements.iter().map(|m| libm::cos(m.phase_rad)).sum();
    let sy: f64 = measurements.iter().map(|m| libm::sin(m.phase_rad)).sum();
    let circ_mean = if sx == 0.0 && sy == 0.0 {
        0.0
    } else {
        libm::atan2(sy, sx)
    };
    let phase_var: f64 = measurements
        .iter()
        .map(|m| {
            let d = wrap_pi(m.phase_rad - circ_mean);
            d * d
        })
        .sum::<f64>()
        / n;

    Ok(StabilityReport {
        n_windows: measurements.len(),
        amp_mean_v: amp_mean,
        amp_rel_std: libm::sqrt(amp_var) / amp_mean,
        phase_std_deg: libm::sqrt(phase_var) * 180.0 / PI,
    })
}
