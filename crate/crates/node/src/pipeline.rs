//! The two-node pipeline: digitizer-side block production
//! (synthesize → compress → frame → lane) and processor-side consumption
//! (deframe → decompress → demodulate → statistics), plus the loopback
//! bench that runs both in one process.
//!
//! Channels are assigned to lanes round-robin by their position in the
//! config, so each channel's frames travel one TCP stream and arrive in
//! order. Producers run flat out until their deadline; consumers read to
//! EOF, so every frame in flight is drained before reports are built.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ship_core::codec::{decode_codes, encode_codes};
use ship_core::demod::{wrap_pi, DemodConfig};
use ship_core::proto::{crc32c, Crc32c, SequenceTracker, FLAG_COMPRESSED};
use ship_core::rng::derive_seed;
use ship_core::signal::{synthesize_block, AdcConfig, ToneSpec, WaveformBlock};
use ship_core::{CodecParams, IqMeasurement, StreamDemodulator};

use crate::config::RunConfig;
use crate::pv::{self, PvServer, PvValue};
use crate::transport::{connect_lanes, FrameReader, LaneEvent, LaneWriter};

#[derive(Debug)]
pub enum PipelineError {
    ConnectionFailed(String),
    ConfigInvalid(String),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::ConnectionFailed(msg) => write!(f, "connection failed: {}", msg),
            PipelineError::ConfigInvalid(msg) => write!(f, "config invalid: {}", msg),
        }
    }
}

impl std::error::Error for PipelineError {}

/// Counters shared across lane threads, mirrored into telemetry PVs.
#[derive(Default)]
pub struct PipelineCounters {
    pub frames_sent: AtomicU64,
    pub raw_bits_sent: AtomicU64,
    pub payload_bits_sent: AtomicU64,
    pub gaps_detected: AtomicU64,
}

// ---------------------------------------------------------------------
// Producer side

/// Relative slack when deciding whether a tone repeats exactly per block.
const BLOCK_PERIOD_TOL: f64 = 1e-9;

/// True when every block of `block_size` samples carries identical codes,
/// letting the producer reuse one pre-encoded frame.
fn tone_is_block_periodic(tone: &ToneSpec, block_size: usize, fs_hz: f64) -> bool {
    if tone.noise_sigma_v != 0.0 {
        return false;
    }
    let cycles = tone.freq_hz * block_size as f64 / fs_hz;
    (cycles - cycles.round()).abs() <= BLOCK_PERIOD_TOL * cycles.max(1.0)
}

struct Template {
    /// Complete encoded frame; sequence and timestamp are patched and the
    /// CRC recomputed for every send.
    frame: Vec<u8>,
    /// Big-endian bytes of the block's codes, for the source checksum.
    code_bytes: Vec<u8>,
    payload_len: usize,
}

/// Per-channel production state on one lane.
struct ChannelProducer {
    id: u8,
    tone: ToneSpec,
    compression: bool,
    adc: AdcConfig,
    codec: CodecParams,
    base_seed: u64,
    seq: u32,
    next_start: u64,
    blocks: u64,
    samples: u64,
    raw_bits: u64,
    payload_bits: u64,
    frame_bytes: u64,
    checksum: Crc32c,
    template: Option<Template>,
    // Scratch buffers for the non-template path.
    code_bytes: Vec<u8>,
}

/// Serializes codes as big-endian byte pairs into `out` (cleared first).
fn codes_to_be_bytes(codes: &[i16], out: &mut Vec<u8>) {
    out.clear();
    out.reserve(codes.len() * 2);
    for &c in codes {
        out.extend_from_slice(&c.to_be_bytes());
    }
}

impl ChannelProducer {
    fn new(id: u8, tone: ToneSpec, cfg: &RunConfig) -> Self {
        ChannelProducer {
            id,
            tone,
            compression: cfg.compression_enabled,
            adc: cfg.adc,
            codec: cfg.codec,
            base_seed: cfg.seed,
            seq: 0,
            next_start: 0,
            blocks: 0,
            samples: 0,
            raw_bits: 0,
            payload_bits: 0,
            frame_bytes: 0,
            checksum: Crc32c::new(),
            template: None,
            code_bytes: Vec::new(),
        }
    }

    fn flags(&self) -> u8 {
        if self.compression {
            FLAG_COMPRESSED
        } else {
            0
        }
    }

    /// Applies a control change, invalidating the template if the
    /// waveform or encoding changed.
    fn apply_controls(&mut self, tone: ToneSpec, compression: bool) {
        if tone != self.tone || compression != self.compression {
            self.tone = tone;
            self.compression = compression;
            self.template = None;
        }
    }

    fn build_template(&mut self) -> Template {
        let block = synthesize_block(
            &self.tone,
            &self.adc,
            self.id,
            0,
            self.codec.block_size,
            0,
        )
        .expect("tone validated at config load");
        let mut code_bytes = Vec::new();
        codes_to_be_bytes(&block.samples, &mut code_bytes);
        let payload: Vec<u8> = if self.compression {
            encode_codes(&block.samples, &self.codec)
        } else {
            code_bytes.clone()
        };
        let frame = ship_core::proto::encode_frame(self.id, self.flags(), 0, 0, &payload)
            .expect("block payload below frame cap");
        Template {
            frame,
            code_bytes,
            payload_len: payload.len(),
        }
    }

    /// Produces and sends one block, updating counters and checksum.
    fn produce_one<W: io::Write>(&mut self, w: &mut LaneWriter<W>) -> io::Result<()> {
        let n = self.codec.block_size;
        if self.template.is_none()
            && tone_is_block_periodic(&self.tone, n, self.adc.sample_rate_hz)
        {
            self.template = Some(self.build_template());
        }

        let payload_len = if let Some(t) = self.template.as_mut() {
            let len = t.frame.len();
            t.frame[8..12].copy_from_slice(&self.seq.to_be_bytes());
            t.frame[12..20].copy_from_slice(&self.next_start.to_be_bytes());
            let crc = crc32c(&t.frame[..len - 4]);
            t.frame[len - 4..].copy_from_slice(&crc.to_be_bytes());
            w.send_prebuilt(&t.frame)?;
            self.checksum.update(&t.code_bytes);
            t.payload_len
        } else {
            let block = synthesize_block(
                &self.tone,
                &self.adc,
                self.id,
                self.next_start,
                n,
                derive_seed(self.base_seed, u64::from(self.id), self.blocks),
            )
            .expect("tone validated at config load");
            let mut code_bytes = std::mem::take(&mut self.code_bytes);
            codes_to_be_bytes(&block.samples, &mut code_bytes);
            self.checksum.update(&code_bytes);
            let payload_len = if self.compression {
                let payload = encode_codes(&block.samples, &self.codec);
                w.send(self.id, self.flags(), self.seq, self.next_start, &payload)?;
                payload.len()
            } else {
                w.send(self.id, self.flags(), self.seq, self.next_start, &code_bytes)?;
                code_bytes.len()
            };
            self.code_bytes = code_bytes;
            payload_len
        };

        self.seq = self.seq.wrapping_add(1);
        self.next_start += n as u64;
        self.blocks += 1;
        self.samples += n as u64;
        self.raw_bits += 16 * n as u64;
        self.payload_bits += 8 * payload_len as u64;
        self.frame_bytes += (28 + payload_len) as u64;
        Ok(())
    }
}

/// Per-channel summary from the sending side.
#[derive(Debug, Clone, Copy)]
pub struct SourceChannelStats {
    pub channel_id: u8,
    pub blocks: u64,
    pub samples: u64,
    pub checksum: u32,
}

#[derive(Debug, Default, Clone)]
pub struct DigitizerStats {
    pub frames_sent: u64,
    pub frame_bytes: u64,
    pub raw_bits: u64,
    pub payload_bits: u64,
    pub channels: Vec<SourceChannelStats>,
}

/// Reads the live control PVs for one channel, falling back to the
/// config tone for fields without a PV.
fn controls_from_pv(pv: &PvServer, id: u8, base: &ToneSpec) -> ToneSpec {
    let mut tone = *base;
    if let Ok(v) = pv.get_float(&pv::pv_ch(id, "nco_freq_hz")) {
        tone.freq_hz = v;
    }
    if let Ok(v) = pv.get_float(&pv::pv_ch(id, "bias_v")) {
        tone.dc_offset_v = v;
    }
    if let Ok(v) = pv.get_float(&pv::pv_ch(id, "noise_sigma_v")) {
        tone.noise_sigma_v = v;
    }
    tone
}

fn pv_compression(pv: &PvServer, fallback: bool) -> bool {
    match pv.get_rendered(pv::pv_compression_enabled()) {
        Ok((v, _)) => v == "true",
        Err(_) => fallback,
    }
}

fn pv_running(pv: &PvServer) -> bool {
    matches!(pv.get_rendered(pv::pv_run_state()), Ok((v, _)) if v == "running")
}

/// One producer lane: round-robin over its channels until the deadline.
fn run_producer_lane(
    stream: TcpStream,
    mut producers: Vec<ChannelProducer>,
    base_tones: Vec<ToneSpec>,
    deadline: Instant,
    pv: Option<PvServer>,
    counters: Arc<PipelineCounters>,
    publish_telemetry: bool,
) -> io::Result<DigitizerStats> {
    stream.set_nodelay(true).ok();
    let mut w = LaneWriter::new(stream);
    let mut iter: u64 = 0;
    while !producers.is_empty() {
        if Instant::now() >= deadline {
            break;
        }
        if let Some(pv) = &pv {
            if iter.is_multiple_of(16) {
                if !pv_running(pv) {
                    w.flush()?;
                    thread::sleep(Duration::from_millis(5));
                    continue;
                }
                let compression = pv_compression(pv, producers[0].compression);
                for (p, base) in producers.iter_mut().zip(&base_tones) {
                    let tone = controls_from_pv(pv, p.id, base);
                    p.apply_controls(tone, compression);
                }
                if publish_telemetry && iter.is_multiple_of(256) {
                    publish_producer_telemetry(pv, &counters);
                }
            }
        }
        for p in &mut producers {
            p.produce_one(&mut w)?;
            counters.frames_sent.fetch_add(1, Ordering::Relaxed);
        }
        // Periodic totals; cheap relative to block production.
        if iter.is_multiple_of(64) {
            let raw: u64 = producers.iter().map(|p| p.raw_bits).sum();
            let pay: u64 = producers.iter().map(|p| p.payload_bits).sum();
            counters.raw_bits_sent.store(raw, Ordering::Relaxed);
            counters.payload_bits_sent.store(pay, Ordering::Relaxed);
        }
        iter += 1;
    }
    if let (Some(pv), true) = (&pv, publish_telemetry) {
        publish_producer_telemetry(pv, &counters);
    }
    w.finish()?;

    Ok(DigitizerStats {
        frames_sent: producers.iter().map(|p| p.blocks).sum(),
        frame_bytes: producers.iter().map(|p| p.frame_bytes).sum(),
        raw_bits: producers.iter().map(|p| p.raw_bits).sum(),
        payload_bits: producers.iter().map(|p| p.payload_bits).sum(),
        channels: producers
            .iter()
            .map(|p| SourceChannelStats {
                channel_id: p.id,
                blocks: p.blocks,
                samples: p.samples,
                checksum: p.checksum.value(),
            })
            .collect(),
    })
}

fn publish_producer_telemetry(pv: &PvServer, counters: &PipelineCounters) {
    let frames = counters.frames_sent.load(Ordering::Relaxed);
    pv.set_internal(pv::pv_frames_sent(), PvValue::Int(frames as i64));
    let raw = counters.raw_bits_sent.load(Ordering::Relaxed);
    let pay = counters.payload_bits_sent.load(Ordering::Relaxed);
    if pay > 0 {
        pv.set_internal(
            pv::pv_compression_ratio(),
            PvValue::Float(raw as f64 / pay as f64),
        );
    }
}

// ---------------------------------------------------------------------
// Consumer side

/// Streaming per-channel statistics on the processor.
pub struct ChannelSink {
    pub channel_id: u8,
    pub blocks: u64,
    pub samples: u64,
    checksum: Crc32c,
    demod: StreamDemodulator,
    meas_scratch: Vec<IqMeasurement>,
    pub n_windows: u64,
    amp_mean: f64,
    amp_m2: f64,
    /// First-window phase; spreads are tracked as wrapped deviations
    /// from it, which matches population statistics for concentrated
    /// phase ensembles without a second pass.
    phase_ref: Option<f64>,
    dev_mean: f64,
    dev_m2: f64,
    pub last_amplitude_v: f64,
    pub last_phase_rad: f64,
    pub kept: Vec<IqMeasurement>,
    kept_cap: usize,
}

impl ChannelSink {
    fn new(channel_id: u8, demod_cfg: DemodConfig, adc: AdcConfig, kept_cap: usize) -> Self {
        ChannelSink {
            channel_id,
            blocks: 0,
            samples: 0,
            checksum: Crc32c::new(),
            demod: StreamDemodulator::new(demod_cfg, adc),
            meas_scratch: Vec::new(),
            n_windows: 0,
            amp_mean: 0.0,
            amp_m2: 0.0,
            phase_ref: None,
            dev_mean: 0.0,
            dev_m2: 0.0,
            last_amplitude_v: 0.0,
            last_phase_rad: 0.0,
            kept: Vec::new(),
            kept_cap,
        }
    }

    fn absorb(&mut self, m: &IqMeasurement) {
        self.n_windows += 1;
        let n = self.n_windows as f64;
        let d = m.amplitude_v - self.amp_mean;
        self.amp_mean += d / n;
        self.amp_m2 += d * (m.amplitude_v - self.amp_mean);

        let reference = *self.phase_ref.get_or_insert(m.phase_rad);
        let dev = wrap_pi(m.phase_rad - reference);
        let dd = dev - self.dev_mean;
        self.dev_mean += dd / n;
        self.dev_m2 += dd * (dev - self.dev_mean);

        self.last_amplitude_v = m.amplitude_v;
        self.last_phase_rad = m.phase_rad;
        if self.kept.len() < self.kept_cap {
            self.kept.push(*m);
        }
    }

    pub fn checksum_value(&self) -> u32 {
        self.checksum.value()
    }

    pub fn amp_mean_v(&self) -> f64 {
        self.amp_mean
    }

    pub fn amp_rel_std(&self) -> f64 {
        if self.n_windows == 0 || self.amp_mean == 0.0 {
            return 0.0;
        }
        (self.amp_m2 / self.n_windows as f64).sqrt() / self.amp_mean
    }

    pub fn phase_mean_rad(&self) -> f64 {
        match self.phase_ref {
            Some(r) => wrap_pi(r + self.dev_mean),
            None => 0.0,
        }
    }

    pub fn phase_std_deg(&self) -> f64 {
        if self.n_windows == 0 {
            return 0.0;
        }
        (self.dev_m2 / self.n_windows as f64).sqrt().to_degrees()
    }
}

#[derive(Default)]
pub struct ProcessorStats {
    pub frames: u64,
    pub frame_bytes: u64,
    pub payload_bytes: u64,
    pub raw_bits: u64,
    pub payload_bits: u64,
    pub crc_errors: u64,
    pub lane_errors: u64,
    pub decode_errors: u64,
    pub gap_events: u64,
    pub missing_total: u64,
    pub duplicates: u64,
    pub sinks: Vec<ChannelSink>,
}

impl ProcessorStats {
    fn merge(&mut self, mut other: ProcessorStats) {
        self.frames += other.frames;
        self.frame_bytes += other.frame_bytes;
        self.payload_bytes += other.payload_bytes;
        self.raw_bits += other.raw_bits;
        self.payload_bits += other.payload_bits;
        self.crc_errors += other.crc_errors;
        self.lane_errors += other.lane_errors;
        self.decode_errors += other.decode_errors;
        self.gap_events += other.gap_events;
        self.missing_total += other.missing_total;
        self.duplicates += other.duplicates;
        self.sinks.append(&mut other.sinks);
        self.sinks.sort_by_key(|s| s.channel_id);
    }

    pub fn sink(&self, channel_id: u8) -> Option<&ChannelSink> {
        self.sinks.iter().find(|s| s.channel_id == channel_id)
    }
}

/// One consumer lane: reads frames to EOF, folding them into sinks.
fn run_consumer_lane(
    stream: TcpStream,
    demod_cfg: DemodConfig,
    adc: AdcConfig,
    kept_cap: usize,
    pv: Option<PvServer>,
    counters: Arc<PipelineCounters>,
    publish_telemetry: bool,
) -> io::Result<ProcessorStats> {
    let mut reader = FrameReader::new(stream);
    let mut tracker = SequenceTracker::new();
    let mut sinks: BTreeMap<u8, ChannelSink> = BTreeMap::new();
    let mut stats = ProcessorStats::default();
    let mut scratch_bytes: Vec<u8> = Vec::new();

    loop {
        match reader.next_event()? {
            LaneEvent::Eof => break,
            LaneEvent::Corrupt(ship_core::proto::FrameError::CrcMismatch) => {
                stats.crc_errors += 1;
            }
            LaneEvent::Corrupt(_) => {
                stats.lane_errors += 1;
            }
            LaneEvent::Frame(frame) => {
                stats.frames += 1;
                stats.frame_bytes += (28 + frame.payload.len()) as u64;
                stats.payload_bytes += frame.payload.len() as u64;
                match tracker.observe(frame.channel_id, frame.sequence) {
                    ship_core::proto::SequenceStatus::Gap { missing } => {
                        stats.gap_events += 1;
                        stats.missing_total += u64::from(missing);
                        counters.gaps_detected.fetch_add(1, Ordering::Relaxed);
                    }
                    ship_core::proto::SequenceStatus::Duplicate => {
                        stats.duplicates += 1;
                    }
                    ship_core::proto::SequenceStatus::InOrder => {}
                }

                let sink = sinks.entry(frame.channel_id).or_insert_with(|| {
                    ChannelSink::new(frame.channel_id, demod_cfg, adc, kept_cap)
                });

                let samples: Vec<i16> = if frame.flags & FLAG_COMPRESSED != 0 {
                    match decode_codes(frame.payload) {
                        Ok(codes) => {
                            codes_to_be_bytes(&codes, &mut scratch_bytes);
                            sink.checksum.update(&scratch_bytes);
                            codes
                        }
                        Err(_) => {
                            stats.decode_errors += 1;
                            continue;
                        }
                    }
                } else {
                    if frame.payload.len() % 2 != 0 {
                        stats.decode_errors += 1;
                        continue;
                    }
                    sink.checksum.update(frame.payload);
                    frame
                        .payload
                        .chunks_exact(2)
                        .map(|b| i16::from_be_bytes([b[0], b[1]]))
                        .collect()
                };

                stats.raw_bits += 16 * samples.len() as u64;
                stats.payload_bits += 8 * frame.payload.len() as u64;
                sink.blocks += 1;
                sink.samples += samples.len() as u64;

                let block = WaveformBlock {
                    channel_id: frame.channel_id,
                    start_sample_index: frame.timestamp,
                    samples,
                };
                sink.demod.push_block(&block, &mut sink.meas_scratch);
                let mut scratch = std::mem::take(&mut sink.meas_scratch);
                for m in scratch.drain(..) {
                    sink.absorb(&m);
                }
                sink.meas_scratch = scratch;

                if publish_telemetry && stats.frames % 128 == 0 {
                    if let Some(pv) = &pv {
                        publish_consumer_telemetry(pv, &counters, &sinks);
                    }
                }
            }
        }
    }

    if let (Some(pv), true) = (&pv, publish_telemetry) {
        publish_consumer_telemetry(pv, &counters, &sinks);
    }
    stats.sinks = sinks.into_values().collect();
    Ok(stats)
}

fn publish_consumer_telemetry(
    pv: &PvServer,
    counters: &PipelineCounters,
    sinks: &BTreeMap<u8, ChannelSink>,
) {
    let gaps = counters.gaps_detected.load(Ordering::Relaxed);
    pv.set_internal(pv::pv_gaps_detected(), PvValue::Int(gaps as i64));
    for sink in sinks.values() {
        if sink.n_windows == 0 {
            continue;
        }
        let amp = pv::pv_ch(sink.channel_id, "last_amplitude_v");
        let phase = pv::pv_ch(sink.channel_id, "last_phase_rad");
        // Telemetry PVs exist only for configured channels; ignore
        // frames from channels the PV table does not know.
        if pv.get(&amp).is_ok() {
            pv.set_internal(&amp, PvValue::Float(sink.last_amplitude_v));
            pv.set_internal(&phase, PvValue::Float(sink.last_phase_rad));
        }
    }
}

// ---------------------------------------------------------------------
// Role runners

/// Options beyond the config file for one pipeline run.
pub struct RunOptions {
    pub duration_s: f64,
    pub seed: u64,
    /// PV table to couple to (controls read, telemetry published).
    pub pv: Option<PvServer>,
    /// Measurements retained per channel for CSV output.
    pub keep_measurements: usize,
}

impl RunOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        RunOptions {
            duration_s: cfg.duration_s,
            seed: cfg.seed,
            pv: None,
            keep_measurements: 0,
        }
    }
}

fn lane_channels(cfg: &RunConfig, lane: usize) -> Vec<ChannelProducer> {
    cfg.channels
        .iter()
        .enumerate()
        .filter(|(i, _)| i % cfg.lanes == lane)
        .map(|(_, ch)| ChannelProducer::new(ch.channel_id, ch.tone, cfg))
        .collect()
}

/// Runs the digitizer role over pre-connected lanes.
pub fn run_digitizer(
    cfg: &RunConfig,
    lanes: Vec<TcpStream>,
    opts: &RunOptions,
) -> Result<DigitizerStats, PipelineError> {
    if opts.duration_s <= 0.0 {
        return Err(PipelineError::ConfigInvalid(
            "duration must be > 0".to_string(),
        ));
    }
    if cfg.channels.is_empty() {
        return Err(PipelineError::ConfigInvalid(
            "digitizer requires at least one channel".to_string(),
        ));
    }
    let counters = Arc::new(PipelineCounters::default());
    let deadline = Instant::now() + Duration::from_secs_f64(opts.duration_s);
    let mut handles = Vec::new();
    for (lane_idx, stream) in lanes.into_iter().enumerate() {
        let producers = lane_channels(cfg, lane_idx);
        let base_tones: Vec<ToneSpec> = producers.iter().map(|p| p.tone).collect();
        let pv = opts.pv.clone();
        let counters = Arc::clone(&counters);
        handles.push(thread::spawn(move || {
            run_producer_lane(
                stream,
                producers,
                base_tones,
                deadline,
                pv,
                counters,
                lane_idx == 0,
            )
        }));
    }
    let mut total = DigitizerStats::default();
    for handle in handles {
        let stats = handle
            .join()
            .expect("producer lane panicked")
            .map_err(|e| PipelineError::ConnectionFailed(format!("producer lane: {}", e)))?;
        total.frames_sent += stats.frames_sent;
        total.frame_bytes += stats.frame_bytes;
        total.raw_bits += stats.raw_bits;
        total.payload_bits += stats.payload_bits;
        total.channels.extend(stats.channels);
    }
    total.channels.sort_by_key(|c| c.channel_id);
    Ok(total)
}

/// Runs the processor role over accepted lanes until EOF on all of them.
pub fn run_processor(
    cfg: &RunConfig,
    lanes: Vec<TcpStream>,
    opts: &RunOptions,
) -> Result<ProcessorStats, PipelineError> {
    let counters = Arc::new(PipelineCounters::default());
    let mut handles = Vec::new();
    for (lane_idx, stream) in lanes.into_iter().enumerate() {
        let demod_cfg = cfg.demod;
        let adc = cfg.adc;
        let kept = opts.keep_measurements;
        let pv = opts.pv.clone();
        let counters = Arc::clone(&counters);
        handles.push(thread::spawn(move || {
            run_consumer_lane(stream, demod_cfg, adc, kept, pv, counters, lane_idx == 0)
        }));
    }
    let mut total = ProcessorStats::default();
    for handle in handles {
        let stats = handle
            .join()
            .expect("consumer lane panicked")
            .map_err(|e| PipelineError::ConnectionFailed(format!("consumer lane: {}", e)))?;
        total.merge(stats);
    }
    Ok(total)
}

// ---------------------------------------------------------------------
// Loopback bench

/// Everything measured by one loopback bench run.
#[derive(Debug, Clone)]
pub struct ChannelReport {
    pub channel_id: u8,
    pub blocks_sent: u64,
    pub samples_sent: u64,
    pub samples_received: u64,
    pub source_checksum: u32,
    pub sink_checksum: u32,
    pub checksum_match: bool,
    pub n_windows: u64,
    pub amp_mean_v: f64,
    pub amp_rel_std: f64,
    pub phase_mean_rad: f64,
    pub phase_std_deg: f64,
    pub expected_amplitude_v: f64,
    pub expected_phase_rad: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub wall_s: f64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub bytes_out: u64,
    pub bytes_in: u64,
    pub payload_bytes: u64,
    /// Payload bits through the link per wall second.
    pub throughput_bps: f64,
    /// Frame bits (header + payload + CRC) per wall second.
    pub wire_bps: f64,
    pub compression_ratio: f64,
    pub gaps_detected: u64,
    pub missing_total: u64,
    pub duplicates: u64,
    pub crc_errors: u64,
    pub lane_errors: u64,
    pub decode_errors: u64,
    pub all_checksums_match: bool,
    pub channels: Vec<ChannelReport>,
}

impl BenchReport {
    /// The bench's contract: a clean run has no gaps and no CRC damage.
    pub fn clean(&self) -> bool {
        self.gaps_detected == 0
            && self.crc_errors == 0
            && self.lane_errors == 0
            && self.decode_errors == 0
    }
}

/// Runs digitizer and processor in one process over loopback TCP and
/// reports what moved. The processor-side stats come back too, carrying
/// any measurements kept for CSV output.
pub fn run_pipeline_bench(
    cfg: &RunConfig,
    opts: &RunOptions,
) -> Result<(BenchReport, ProcessorStats), PipelineError> {
    if opts.duration_s <= 0.0 {
        return Err(PipelineError::ConfigInvalid(
            "duration must be > 0".to_string(),
        ));
    }
    if cfg.channels.is_empty() {
        return Err(PipelineError::ConfigInvalid(
            "bench requires at least one channel".to_string(),
        ));
    }
    if let Some(pv) = &opts.pv {
        // A bench run starts itself; a standalone digitizer waits for
        // the operator instead.
        let _ = pv.put(pv::pv_run_state(), "running");
    }

    let listener = TcpListener::bind("127.0.0.1:0")
        .map_err(|e| PipelineError::ConnectionFailed(format!("bind: {}", e)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| PipelineError::ConnectionFailed(format!("local_addr: {}", e)))?;

    let consumer_cfg = cfg.clone();
    let consumer_opts = RunOptions {
        duration_s: opts.duration_s,
        seed: opts.seed,
        pv: opts.pv.clone(),
        keep_measurements: opts.keep_measurements,
    };
    let n_lanes = cfg.lanes;
    let consumer = thread::spawn(move || -> Result<ProcessorStats, PipelineError> {
        let mut lanes = Vec::with_capacity(n_lanes);
        for _ in 0..n_lanes {
            let (stream, _) = listener
                .accept()
                .map_err(|e| PipelineError::ConnectionFailed(format!("accept: {}", e)))?;
            lanes.push(stream);
        }
        run_processor(&consumer_cfg, lanes, &consumer_opts)
    });

    let started = Instant::now();
    let lanes = connect_lanes(&addr.to_string(), cfg.lanes, Duration::from_secs(10))
        .map_err(|e| PipelineError::ConnectionFailed(format!("connect: {}", e)))?;
    let digitizer = run_digitizer(cfg, lanes, opts)?;
    let processor = consumer.join().expect("consumer thread panicked")?;
    let wall_s = started.elapsed().as_secs_f64();

    let mut channels = Vec::new();
    let mut all_match = true;
    for src in &digitizer.channels {
        let sink = processor.sink(src.channel_id);
        let (samples_received, sink_checksum) = match sink {
            Some(s) => (s.samples, s.checksum_value()),
            None => (0, 0),
        };
        let checksum_match =
            sink.is_some() && samples_received == src.samples && sink_checksum == src.checksum;
        all_match &= checksum_match;
        let ch_cfg = cfg.channel(src.channel_id).expect("configured channel");
        let (n_windows, amp_mean_v, amp_rel_std, phase_mean_rad, phase_std_deg) = match sink {
            Some(s) => (
                s.n_windows,
                s.amp_mean_v(),
                s.amp_rel_std(),
                s.phase_mean_rad(),
                s.phase_std_deg(),
            ),
            None => (0, 0.0, 0.0, 0.0, 0.0),
        };
        channels.push(ChannelReport {
            channel_id: src.channel_id,
            blocks_sent: src.blocks,
            samples_sent: src.samples,
            samples_received,
            source_checksum: src.checksum,
            sink_checksum,
            checksum_match,
            n_windows,
            amp_mean_v,
            amp_rel_std,
            phase_mean_rad,
            phase_std_deg,
            expected_amplitude_v: ch_cfg.tone.amplitude_v,
            expected_phase_rad: ch_cfg.tone.phase_rad,
        });
    }

    let compression_ratio = if processor.payload_bits > 0 {
        processor.raw_bits as f64 / processor.payload_bits as f64
    } else {
        0.0
    };

    let report = BenchReport {
        wall_s,
        frames_sent: digitizer.frames_sent,
        frames_received: processor.frames,
        bytes_out: digitizer.frame_bytes,
        bytes_in: processor.frame_bytes,
        payload_bytes: processor.payload_bytes,
        throughput_bps: processor.payload_bytes as f64 * 8.0 / wall_s,
        wire_bps: processor.frame_bytes as f64 * 8.0 / wall_s,
        compression_ratio,
        gaps_detected: processor.gap_events,
        missing_total: processor.missing_total,
        duplicates: processor.duplicates,
        crc_errors: processor.crc_errors,
        lane_errors: processor.lane_errors,
        decode_errors: processor.decode_errors,
        all_checksums_match: all_match,
        channels,
    };
    Ok((report, processor))
}

/// Keeps per-channel demodulated measurements around for CSV output.
pub fn collected_measurements(stats: &ProcessorStats) -> Vec<IqMeasurement> {
    let mut all: Vec<IqMeasurement> = stats
        .sinks
        .iter()
        .flat_map(|s| s.kept.iter().copied())
        .collect();
    all.sort_by_key(|m| (m.channel_id, m.window_start_sample_index));
    all
}
