//! Framed stream protocol: CRC-32C, frame encode/decode, per-channel
//! sequence tracking and bandwidth-budget arithmetic.
//!
//! # Wire format
//!
//! Network byte order throughout. One frame:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SHIP" (0x53 0x48 0x49 0x50)
//! 4       1     version (1)
//! 5       1     channel_id
//! 6       1     flags (bit0: payload is a compressed block)
//! 7       1     reserved (0)
//! 8       4     sequence, per-channel, wraps mod 2^32
//! 12      8     timestamp (start sample index of the payload)
//! 20      4     payload_len (< 2^24)
//! 24      n     payload
//! 24+n    4     CRC-32C over all preceding bytes of the frame
//! ```
//!
//! Frames are self-delimiting on a reliable byte stream: read 24 header
//! bytes, then `payload_len + 4` more.

use alloc::vec::Vec;
use core::fmt;

pub const FRAME_MAGIC: [u8; 4] = *b"SHIP";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 24;
pub const FRAME_CRC_LEN: usize = 4;
/// Hard cap on payload size; larger blocks must be split upstream.
pub const MAX_PAYLOAD_LEN: usize = (1 << 24) - 1;
/// Flag bit: the payload is a serialized compressed block rather than
/// raw sample bytes.
pub const FLAG_COMPRESSED: u8 = 0x01;

// ---------------------------------------------------------------------
// CRC-32C (Castagnoli), reflected, init 0xFFFFFFFF, final xor 0xFFFFFFFF.
// Check value: crc32c(b"123456789") == 0xE3069283.

/// Reflected form of the Castagnoli polynomial 0x1EDC6F41.
const CRC32C_POLY_REFLECTED: u32 = 0x82F6_3B78;

const fn crc32c_tables() -> [[u32; 256]; 8] {
    let mut t = [[0u32; 256]; 8];
    let mut i = 0usize;
    while i < 256 {
        let mut crc = i as u32;
        let mut j = 0;
        while j < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ CRC32C_POLY_REFLECTED
            } else {
                crc >> 1
            };
            j += 1;
        }
        t[0][i] = crc;
        i += 1;
    }
    let mut s = 1usize;
    while s < 8 {
        let mut i = 0usize;
        while i < 256 {
            t[s][i] = t[0][(t[s - 1][i] & 0xFF) as usize] ^ (t[s - 1][i] >> 8);
            i += 1;
        }
        s += 1;
    }
    t
}

static CRC_TABLES: [[u32; 256]; 8] = crc32c_tables();

/// Advances a raw (inverted) CRC state over `bytes`, eight at a time.
fn crc32c_advance(mut crc: u32, bytes: &[u8]) -> u32 {
    let mut data = bytes;
    while data.len() >= 8 {
        let c = crc.to_le_bytes();
        crc = CRC_TABLES[7][usize::from(c[0] ^ data[0])]
            ^ CRC_TABLES[6][usize::from(c[1] ^ data[1])]
            ^ CRC_TABLES[5][usize::from(c[2] ^ data[2])]
            ^ CRC_TABLES[4][usize::from(c[3] ^ data[3])]
            ^ CRC_TABLES[3][usize::from(data[4])]
            ^ CRC_TABLES[2][usize::from(data[5])]
            ^ CRC_TABLES[1][usize::from(data[6])]
            ^ CRC_TABLES[0][usize::from(data[7])];
        data = &data[8..];
    }
    for &b in data {
        crc = CRC_TABLES[0][usize::from((crc as u8) ^ b)] ^ (crc >> 8);
    }
    crc
}

/// One-shot CRC-32C of a byte slice.
pub fn crc32c(bytes: &[u8]) -> u32 {
    !crc32c_advance(!0, bytes)
}

/// Incremental CRC-32C for running checksums over streamed data.
#[derive(Debug, Clone, Copy)]
pub struct Crc32c {
    state: u32,
}

impl Crc32c {
    pub fn new() -> Self {
        Crc32c { state: !0 }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.state = crc32c_advance(self.state, bytes);
    }

    /// Current CRC value; the stream may still be extended afterwards.
    pub fn value(&self) -> u32 {
        !self.state
    }
}

impl Default for Crc32c {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------
// Frames

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    /// Payload exceeds the 2^24 - 1 byte cap.
    PayloadTooLarge,
    /// First four bytes are not "SHIP".
    BadMagic,
    /// Version byte differs from 1.
    UnsupportedVersion,
    /// Fewer bytes available than the frame declares.
    Truncated,
    /// Stored CRC does not match the frame contents.
    CrcMismatch,
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::PayloadTooLarge => f.write_str("payload exceeds frame cap"),
            FrameError::BadMagic => f.write_str("bad frame magic"),
            FrameError::UnsupportedVersion => f.write_str("unsupported frame version"),
            FrameError::Truncated => f.write_str("frame truncated"),
            FrameError::CrcMismatch => f.write_str("frame CRC mismatch"),
        }
    }
}

/// Parsed fixed-size frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub channel_id: u8,
    pub flags: u8,
    pub sequence: u32,
    pub timestamp: u64,
    pub payload_len: u32,
}

impl FrameHeader {
    /// Total frame length on the wire, header and CRC included.
    pub fn frame_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload_len as usize + FRAME_CRC_LEN
    }
}

/// A decoded frame borrowing its payload from the input buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameView<'a> {
    pub channel_id: u8,
    pub flags: u8,
    pub sequence: u32,
    pub timestamp: u64,
    pub payload: &'a [u8],
}

/// Encodes one frame into `out` (cleared first). The buffer form lets
/// hot paths reuse one allocation per lane.
pub fn encode_frame_into(
    out: &mut Vec<u8>,
    channel_id: u8,
    flags: u8,
    sequence: u32,
    timestamp: u64,
    payload: &[u8],
) -> Result<(), FrameError> {
    if payload.len() > MAX_PAYLOAD_LEN {
        return Err(FrameError::PayloadTooLarge);
    }
    out.clear();
    out.reserve(FRAME_HEADER_LEN + payload.len() + FRAME_CRC_LEN);
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(channel_id);
    out.push(flags);
    out.push(0); // reserved
    out.extend_from_slice(&sequence.to_be_bytes());
    out.extend_from_slice(&timestamp.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    let crc = crc32c(out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(())
}

pub fn encode_frame(
    channel_id: u8,
    flags: u8,
    sequence: u32,
    timestamp: u64,
    payload: &[u8],
) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::new();
    encode_frame_into(&mut out, channel_id, flags, sequence, timestamp, payload)?;
    Ok(out)
}

/// Parses and validates the 24-byte header at the start of `bytes`.
pub fn parse_frame_header(bytes: &[u8]) -> Result<FrameHeader, FrameError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(FrameError::Truncated);
    }
    if bytes[0..4] != FRAME_MAGIC {
        return Err(FrameError::BadMagic);
    }
    if bytes[4] != FRAME_VERSION {
        return Err(FrameError::UnsupportedVersion);
    }
    let payload_len = u32::from_be_bytes([bytes[20], bytes[21], bytes[22], bytes[23]]);
    if payload_len as usize > MAX_PAYLOAD_LEN {
        return Err(FrameError::PayloadTooLarge);
    }
    Ok(FrameHeader {
        channel_id: bytes[5],
        flags: bytes[6],
        sequence: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
        timestamp: u64::from_be_bytes([
            bytes[12], bytes[13], bytes[14], bytes[15], bytes[16], bytes[17], bytes[18], bytes[19],
        ]),
        payload_len,
    })
}

/// Decodes and CRC-verifies the frame at the start of `bytes`, returning
/// the view and the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(FrameView<'_>, usize), FrameError> {
    let header = parse_frame_header(bytes)?;
    let total = header.frame_len();
    if bytes.len() < total {
        return Err(FrameError::Truncated);
    }
    let body_len = total - FRAME_CRC_LEN;
    let stored = u32::from_be_bytes([
        bytes[body_len],
        bytes[body_len + 1],
        bytes[body_len + 2],
        bytes[body_len + 3],
    ]);
    if crc32c(&bytes[..body_len]) != stored {
        return Err(FrameError::CrcMismatch);
    }
    Ok((
        FrameView {
            channel_id: header.channel_id,
            flags: header.flags,
            sequence: header.sequence,
            timestamp: header.timestamp,
            payload: &bytes[FRAME_HEADER_LEN..body_len],
        },
        total,
    ))
}

// ---------------------------------------------------------------------
// Sequence tracking

/// Classification of one received sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceStatus {
    InOrder,
    /// `missing` frames were skipped before this one.
    Gap { missing: u32 },
    /// Sequence at or behind the last seen one (replay or reordering).
    Duplicate,
}

/// Per-channel sequence-number tracker with mod-2^32 wraparound.
///
/// The first frame seen on a channel establishes its baseline and counts
/// as in order. A forward jump of d reports `Gap { missing: d }`;
/// anything at or behind the expected position (difference of 2^31 or
/// more interpreted as backwards) is a duplicate and does not move the
/// tracking point.
pub struct SequenceTracker {
    last: [Option<u32>; 256],
    frames: u64,
    gap_events: u64,
    missing_total: u64,
    duplicates: u64,
}

impl SequenceTracker {
    pub fn new() -> Self {
        SequenceTracker {
            last: [None; 256],
            frames: 0,
            gap_events: 0,
            missing_total: 0,
            duplicates: 0,
        }
    }

    pub fn observe(&mut self, channel_id: u8, sequence: u32) -> SequenceStatus {
        self.frames += 1;
        let slot = &mut self.last[usize::from(channel_id)];
        let status = match *slot {
            None => {
                *slot = Some(sequence);
                SequenceStatus::InOrder
            }
            Some(prev) => {
                let expected = prev.wrapping_add(1);
                let delta = sequence.wrapping_sub(expected);
                if delta == 0 {
                    *slot = Some(sequence);
                    SequenceStatus::InOrder
                } else if delta < 0x8000_0000 {
                    *slot = Some(sequence);
                    SequenceStatus::Gap { missing: delta }
                } else {
                    SequenceStatus::Duplicate
                }
            }
        };
        match status {
            SequenceStatus::Gap { missing } => {
                self.gap_events += 1;
                self.missing_total += u64::from(missing);
            }
            SequenceStatus::Duplicate => self.duplicates += 1,
            SequenceStatus::InOrder => {}
        }
        status
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames
    }

    pub fn gap_events(&self) -> u64 {
        self.gap_events
    }

    pub fn missing_total(&self) -> u64 {
        self.missing_total
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }
}

impl Default for SequenceTracker {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------
// Bandwidth accounting

/// Raw data rate of a converter set, in bits per second.
pub fn required_rate(channels: u32, sample_rate_hz: f64, bits_per_sample: u32) -> f64 {
    f64::from(channels) * sample_rate_hz * f64::from(bits_per_sample)
}

/// Aggregate usable rate of a lane group after line-coding overhead.
pub fn lane_budget(n_lanes: u32, per_lane_bps: f64, encoding_overhead_factor: f64) -> f64 {
    assert!(n_lanes >= 1, "lane group cannot be empty");
    assert!(encoding_overhead_factor > 0.0);
    f64::from(n_lanes) * per_lane_bps / encoding_overhead_factor
}

/// Line rate each lane must carry for a total payload rate, including
/// line-coding overhead (e.g. 1.25 for 8b/10b).
pub fn per_lane_line_rate(total_bps: f64, n_lanes: u32, encoding_overhead_factor: f64) -> f64 {
    assert!(n_lanes >= 1, "lane group cannot be empty");
    total_bps / f64::from(n_lanes) * encoding_overhead_factor
}

/// Required-versus-available comparison for one link plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthBudget {
    pub required_bps: f64,
    pub available_bps: f64,
    pub feasible: bool,
}

impl BandwidthBudget {
    pub fn new(required_bps: f64, available_bps: f64) -> Self {
        BandwidthBudget {
            required_bps,
            available_bps,
            feasible: required_bps <= available_bps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Bit-at-a-time reference CRC, written independently of the table
    /// implementation above.
    fn crc32c_bitwise(bytes: &[u8]) -> u32 {
        let mut crc: u32 = 0xFFFF_FFFF;
        for &b in bytes {
            crc ^= u32::from(b);
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb != 0 {
                    crc ^= 0x82F6_3B78;
                }
            }
        }
        !crc
    }

    #[test]
    fn crc_check_values() {
        assert_eq!(crc32c(b""), 0x0000_0000);
        assert_eq!(crc32c(b"123456789"), 0xE306_9283);
    }

    #[test]
    fn crc_matches_bitwise_oracle() {
        let mut data = Vec::new();
        let mut state = 0xACE1u32;
        for len in [0usize, 1, 3, 7, 8, 9, 63, 64, 100, 1021] {
            data.clear();
            for _ in 0..len {
                state = state.wrapping_mul(48271) % 0x7FFF_FFFF;
                data.push((state >> 7) as u8);
            }
            assert_eq!(crc32c(&data), crc32c_bitwise(&data), "len {}", len);
        }
    }

    #[test]
    fn incremental_crc_equals_one_shot() {
        let data: Vec<u8> = (0..=255u8).cycle().take(1000).collect();
        for split in [0usize, 1, 7, 8, 500, 999, 1000] {
            let mut inc = Crc32c::new();
            inc.update(&data[..split]);
            inc.update(&data[split..]);
            assert_eq!(inc.value(), crc32c(&data));
        }
    }

    #[test]
    fn golden_empty_frame() {
        let frame = encode_frame(0, 0, 0, 0, b"").unwrap();
        assert_eq!(frame.len(), 28);
        assert_eq!(&frame[0..4], b"SHIP");
        let crc = u32::from_be_bytes([frame[24], frame[25], frame[26], frame[27]]);
        assert_eq!(crc, crc32c_bitwise(&frame[..24]));
        let (view, used) = decode_frame(&frame).unwrap();
        assert_eq!(used, 28);
        assert_eq!(view.payload, b"");
    }

    #[test]
    fn frame_roundtrip_preserves_fields() {
        let payload = vec![0xA5u8; 313];
        let frame = encode_frame(7, FLAG_COMPRESSED, 0xDEAD_BEEF, 0x0102_0304_0506_0708, &payload)
            .unwrap();
        let (view, used) = decode_frame(&frame).unwrap();
        assert_eq!(used, frame.len());
        assert_eq!(view.channel_id, 7);
        assert_eq!(view.flags, FLAG_COMPRESSED);
        assert_eq!(view.sequence, 0xDEAD_BEEF);
        assert_eq!(view.timestamp, 0x0102_0304_0506_0708);
        assert_eq!(view.payload, &payload[..]);
    }

    #[test]
    fn corruption_never_passes_silently() {
        let payload: Vec<u8> = (0..64u8).collect();
        let frame = encode_frame(3, 1, 41, 99, &payload).unwrap();
        for i in 0..frame.len() {
            for mask in [0xFFu8, 0x01] {
                let mut bad = frame.clone();
                bad[i] ^= mask;
                assert!(
                    decode_frame(&bad).is_err(),
                    "flip at byte {} mask {:#x} accepted",
                    i,
                    mask
                );
            }
        }
    }

    #[test]
    fn specific_corruptions_map_to_specific_errors() {
        let frame = encode_frame(1, 0, 5, 6, b"abcdef").unwrap();

        let mut bad_magic = frame.clone();
        bad_magic[0] = b'X';
        assert_eq!(decode_frame(&bad_magic), Err(FrameError::BadMagic));

        let mut bad_version = frame.clone();
        bad_version[4] = 2;
        assert_eq!(decode_frame(&bad_version), Err(FrameError::UnsupportedVersion));

        let mut bad_payload = frame.clone();
        bad_payload[FRAME_HEADER_LEN] ^= 0x40;
        assert_eq!(decode_frame(&bad_payload), Err(FrameError::CrcMismatch));

        assert_eq!(decode_frame(&frame[..10]), Err(FrameError::Truncated));
        assert_eq!(
            decode_frame(&frame[..frame.len() - 1]),
            Err(FrameError::Truncated)
        );
    }

    #[test]
    fn payload_cap_is_enforced() {
        let too_big = vec![0u8; 1 << 24];
        assert_eq!(
            encode_frame(0, 0, 0, 0, &too_big),
            Err(FrameError::PayloadTooLarge)
        );
        let just_fits = vec![0u8; MAX_PAYLOAD_LEN];
        assert!(encode_frame(0, 0, 0, 0, &just_fits).is_ok());
    }

    #[test]
    fn sequence_tracking_examples() {
        let mut t = SequenceTracker::new();
        assert_eq!(t.observe(0, 0), SequenceStatus::InOrder);
        assert_eq!(t.observe(0, 1), SequenceStatus::InOrder);
        assert_eq!(t.observe(0, 2), SequenceStatus::InOrder);

        let mut t = SequenceTracker::new();
        assert_eq!(t.observe(0, 0), SequenceStatus::InOrder);
        assert_eq!(t.observe(0, 3), SequenceStatus::Gap { missing: 2 });
        assert_eq!(t.gap_events(), 1);
        assert_eq!(t.missing_total(), 2);

        let mut t = SequenceTracker::new();
        assert_eq!(t.observe(0, 0xFFFF_FFFF), SequenceStatus::InOrder);
        assert_eq!(t.observe(0, 0), SequenceStatus::InOrder);

        let mut t = SequenceTracker::new();
        t.observe(0, 5);
        assert_eq!(t.observe(0, 5), SequenceStatus::Duplicate);
        assert_eq!(t.observe(0, 3), SequenceStatus::Duplicate);
        // Tracking point did not move backwards.
        assert_eq!(t.observe(0, 6), SequenceStatus::InOrder);
        assert_eq!(t.duplicates(), 2);
    }

    #[test]
    fn channels_track_independently() {
        let mut t = SequenceTracker::new();
        assert_eq!(t.observe(0, 10), SequenceStatus::InOrder);
        assert_eq!(t.observe(1, 0), SequenceStatus::InOrder);
        assert_eq!(t.observe(0, 11), SequenceStatus::InOrder);
        assert_eq!(t.observe(1, 2), SequenceStatus::Gap { missing: 1 });
    }

    #[test]
    fn bandwidth_arithmetic_is_exact() {
        assert_eq!(required_rate(4, 1.0e9, 16), 64.0e9);
        let two_ch = required_rate(2, 1.0e9, 16);
        assert_eq!(two_ch, 32.0e9);
        assert_eq!(per_lane_line_rate(two_ch, 4, 1.25), 10.0e9);
        assert_eq!(required_rate(0, 1.0e9, 16), 0.0);

        assert_eq!(lane_budget(8, 16.3e9, 1.0), 130.4e9);
        assert_eq!(lane_budget(4, 16.25e9, 1.0), 65.0e9);
        assert_eq!(lane_budget(1, 0.0, 1.0), 0.0);

        let b = BandwidthBudget::new(64.0e9, 65.0e9);
        assert!(b.feasible);
        let b = BandwidthBudget::new(64.0e9, 63.0e9);
        assert!(!b.feasible);
    }
}
