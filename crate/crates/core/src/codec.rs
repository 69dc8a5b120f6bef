//! Lossless block codec for 16-bit sample streams.
//!
//! Scheme: a fixed linear predictor (order 0, 1 or 2) turns each block
//! into small residuals, residuals are zigzag-mapped to unsigned values
//! and Rice-coded with a per-block parameter `k` chosen to minimize the
//! encoded size. Blocks that do not compress (e.g. full-scale uniform
//! noise) escape to a RAW mode that stores the codes verbatim, so the
//! output is never larger than the input plus a fixed header.
//!
//! # Bitstream layout
//!
//! Bits are packed most-significant-bit-first within bytes. Every block
//! is independently decodable:
//!
//! ```text
//! offset  size  field
//! 0       1     magic 0xC5
//! 1       1     mode: 0 = RAW, 1 = PREDICTIVE
//! 2       1     predictor order (0 in RAW mode)
//! 3       1     rice k (0 in RAW mode)
//! 4       4     n_samples, big-endian
//! 8       2*p   seed samples, one signed 16-bit big-endian per
//!               predictor order p (PREDICTIVE only)
//! ...           payload: RAW -> n_samples codes as signed 16-bit
//!               big-endian; PREDICTIVE -> Rice-coded zigzag residuals,
//!               zero-padded to a byte boundary
//! ```

use alloc::vec::Vec;
use core::fmt;

use crate::bits::{BitReader, BitWriter};
use crate::signal::WaveformBlock;

pub const BLOCK_MAGIC: u8 = 0xC5;
pub const MODE_RAW: u8 = 0;
pub const MODE_PREDICTIVE: u8 = 1;
/// Largest permitted Rice parameter.
pub const MAX_RICE_K: u8 = 30;
/// Header bytes before the seed samples.
pub const BASE_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecError {
    /// The bitstream ended before the declared sample count was decoded.
    TruncatedBitstream,
    /// Unknown magic, mode, order or parameter out of range.
    MalformedHeader,
    /// Structurally valid stream whose content cannot come from the
    /// encoder (e.g. a residual that reconstructs outside i16).
    CorruptStream,
    /// compression_ratio with a zero denominator.
    ZeroCompressedSize,
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::TruncatedBitstream => f.write_str("bitstream truncated"),
            CodecError::MalformedHeader => f.write_str("malformed block header"),
            CodecError::CorruptStream => f.write_str("corrupt residual stream"),
            CodecError::ZeroCompressedSize => f.write_str("compressed size is zero"),
        }
    }
}

/// Encoder tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    /// Samples per block when a stream is being chunked for compression.
    pub block_size: usize,
    /// Force one predictor order, or `None` to pick the best per block.
    pub predictor_order: Option<u8>,
    /// Upper bound for the per-block Rice parameter search.
    pub k_max: u8,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams {
            block_size: 4096,
            predictor_order: None,
            k_max: MAX_RICE_K,
        }
    }
}

impl CodecParams {
    pub fn validate(&self) -> bool {
        self.block_size >= 2
            && self.k_max <= MAX_RICE_K
            && self.predictor_order.is_none_or(|o| o <= 2)
    }
}

/// One losslessly encoded block plus the stream identity it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedBlock {
    pub channel_id: u8,
    pub start_sample_index: u64,
    /// Self-contained serialized block (header + payload).
    pub bytes: Vec<u8>,
}

/// Parsed fixed header of a serialized block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub mode: u8,
    pub predictor_order: u8,
    pub rice_k: u8,
    pub n_samples: u32,
}

impl CompressedBlock {
    pub fn header(&self) -> Result<BlockHeader, CodecError> {
        parse_header(&self.bytes).map(|(h, _)| h)
    }

    pub fn compressed_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }

    pub fn raw_bits(&self) -> Result<u64, CodecError> {
        Ok(u64::from(self.header()?.n_samples) * 16)
    }
}

/// Maps a signed residual to an unsigned value with small magnitudes
/// staying small: 0, -1, 1, -2, ... become 0, 1, 2, 3, ...
#[inline]
pub fn zigzag_map(residual: i32) -> u32 {
    (residual.wrapping_shl(1) ^ (residual >> 31)) as u32
}

/// Inverse of [`zigzag_map`].
#[inline]
pub fn zigzag_unmap(u: u32) -> i32 {
    ((u >> 1) as i32) ^ -((u & 1) as i32)
}

/// Appends the Rice code of `u` with parameter `k`: the quotient
/// `u >> k` in unary (ones then a zero), then the k low bits.
#[inline]
pub fn rice_encode_value(w: &mut BitWriter, u: u32, k: u8) {
    debug_assert!(k <= MAX_RICE_K);
    w.push_unary(u >> k);
    if k > 0 {
        w.push(u64::from(u & ((1u32 << k) - 1)), u32::from(k));
    }
}

/// Encoded length of `u` at parameter `k`, in bits.
#[inline]
pub fn rice_len(u: u32, k: u8) -> u64 {
    u64::from(u >> k) + 1 + u64::from(k)
}

/// Picks the Rice parameter minimizing total encoded size, breaking ties
/// toward smaller `k`. Exact, not heuristic: total length at every `k`
/// is reconstructed from per-bit-position population counts.
pub fn choose_k(residual_zigzags: &[u32], k_max: u8) -> u8 {
    choose_k_with_cost(residual_zigzags, k_max).0
}

/// As [`choose_k`], also returning the total payload size at that `k`.
pub fn choose_k_with_cost(residual_zigzags: &[u32], k_max: u8) -> (u8, u64) {
    assert!(!residual_zigzags.is_empty(), "choose_k over empty sequence");
    assert!(k_max <= MAX_RICE_K);

    // bitcount[b] = how many values have bit b set. The quotient sum at
    // parameter k is then sum over b >= k of bitcount[b] * 2^(b-k),
    // which makes the exhaustive scan O(32) after one pass over data.
    let mut bitcount = [0u64; 32];
    for &u in residual_zigzags {
        let mut m = u;
        while m != 0 {
            let b = m.trailing_zeros() as usize;
            bitcount[b] += 1;
            m &= m - 1;
        }
    }
    let n = residual_zigzags.len() as u64;

    let mut best_k = 0u8;
    let mut best_bits = u64::MAX;
    for k in 0..=k_max {
        let mut quotient_bits = 0u64;
        for (off, &count) in bitcount[usize::from(k)..].iter().enumerate() {
            quotient_bits += count << off;
        }
        let total = n * (1 + u64::from(k)) + quotient_bits;
        if total < best_bits {
            best_bits = total;
            best_k = k;
        }
    }
    (best_k, best_bits)
}

/// Zigzag-mapped residuals of `codes` under the fixed predictor of the
/// given order. Differencing is done in 32-bit, so 16-bit deltas never
/// wrap.
fn residual_zigzags(codes: &[i16], order: u8) -> Vec<u32> {
    let n = codes.len();
    let p = usize::from(order);
    let mut out = Vec::with_capacity(n.saturating_sub(p));
    match order {
        0 => {
            for &x in codes {
                out.push(zigzag_map(i32::from(x)));
            }
        }
        1 => {
            for i in 1..n {
                out.push(zigzag_map(i32::from(codes[i]) - i32::from(codes[i - 1])));
            }
        }
        2 => {
            for i in 2..n {
                let r = i32::from(codes[i]) - 2 * i32::from(codes[i - 1]) + i32::from(codes[i - 2]);
                out.push(zigzag_map(r));
            }
        }
        _ => unreachable!("predictor order above 2"),
    }
    out
}

/// Stored size in bits beyond the 8-byte base header for a predictive
/// candidate: byte-aligned seeds plus byte-padded Rice payload.
fn predictive_stored_bits(order: u8, rice_bits: u64) -> u64 {
    u64::from(order) * 16 + rice_bits.div_ceil(8) * 8
}

/// Serializes `codes` as one self-contained block.
///
/// Tries every allowed predictor order (or the one forced by `params`),
/// then falls back to RAW whenever no predictive candidate is strictly
/// smaller than the verbatim encoding, so the result never exceeds
/// `16 * n` payload bits plus the fixed header.
pub fn encode_codes(codes: &[i16], params: &CodecParams) -> Vec<u8> {
    assert!(!codes.is_empty(), "cannot encode an empty block");
    assert!(params.validate(), "invalid codec params");
    let n = codes.len();

    let forced;
    let orders: &[u8] = match params.predictor_order {
        Some(o) => {
            forced = [o];
            &forced
        }
        None => &[0, 1, 2],
    };

    let mut best: Option<(u8, u8, u64)> = None; // (order, k, stored_bits)
    for &order in orders {
        if usize::from(order) > n {
            continue;
        }
        let zz = residual_zigzags(codes, order);
        let (k, rice_bits) = if zz.is_empty() {
            (0u8, 0u64)
        } else {
            choose_k_with_cost(&zz, params.k_max)
        };
        let stored = predictive_stored_bits(order, rice_bits);
        let better = match best {
            None => true,
            Some((_, _, b)) => stored < b,
        };
        if better {
            best = Some((order, k, stored));
        }
    }

    let raw_bits = n as u64 * 16;
    let use_raw = match best {
        Some((_, _, stored)) => stored >= raw_bits,
        None => true,
    };

    if use_raw {
        let mut out = Vec::with_capacity(BASE_HEADER_LEN + 2 * n);
        out.extend_from_slice(&[BLOCK_MAGIC, MODE_RAW, 0, 0]);
        out.extend_from_slice(&(n as u32).to_be_bytes());
        for &x in codes {
            out.extend_from_slice(&x.to_be_bytes());
        }
        return out;
    }

    let (order, k, stored) = best.expect("predictive candidate exists");
    let mut out = Vec::with_capacity(BASE_HEADER_LEN + (stored / 8 + 1) as usize);
    out.extend_from_slice(&[BLOCK_MAGIC, MODE_PREDICTIVE, order, k]);
    out.extend_from_slice(&(n as u32).to_be_bytes());
    for &seed in &codes[..usize::from(order)] {
        out.extend_from_slice(&seed.to_be_bytes());
    }
    let mut w = BitWriter::with_capacity((stored / 8) as usize + 1);
    match order {
        0 => {
            for &x in codes {
                rice_encode_value(&mut w, zigzag_map(i32::from(x)), k);
            }
        }
        1 => {
            for i in 1..n {
                let r = i32::from(codes[i]) - i32::from(codes[i - 1]);
                rice_encode_value(&mut w, zigzag_map(r), k);
            }
        }
        2 => {
            for i in 2..n {
                let r = i32::from(codes[i]) - 2 * i32::from(codes[i - 1]) + i32::from(codes[i - 2]);
                rice_encode_value(&mut w, zigzag_map(r), k);
            }
        }
        _ => unreachable!(),
    }
    out.extend_from_slice(&w.finish());
    out
}

fn parse_header(bytes: &[u8]) -> Result<(BlockHeader, usize), CodecError> {
    if bytes.len() < BASE_HEADER_LEN {
        return Err(CodecError::TruncatedBitstream);
    }
    if bytes[0] != BLOCK_MAGIC {
        return Err(CodecError::MalformedHeader);
    }
    let header = BlockHeader {
        mode: bytes[1],
        predictor_order: bytes[2],
        rice_k: bytes[3],
        n_samples: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
    };
    match header.mode {
        MODE_RAW => {
            if header.predictor_order != 0 || header.rice_k != 0 {
                return Err(CodecError::MalformedHeader);
            }
        }
        MODE_PREDICTIVE => {
            if header.predictor_order > 2 || header.rice_k > MAX_RICE_K {
                return Err(CodecError::MalformedHeader);
            }
        }
        _ => return Err(CodecError::MalformedHeader),
    }
    if header.n_samples == 0 {
        return Err(CodecError::MalformedHeader);
    }
    let seeds = if header.mode == MODE_PREDICTIVE {
        usize::from(header.predictor_order) * 2
    } else {
        0
    };
    Ok((header, BASE_HEADER_LEN + seeds))
}

/// Decodes one serialized block back to its exact codes.
pub fn decode_codes(bytes: &[u8]) -> Result<Vec<i16>, CodecError> {
    let (header, payload_off) = parse_header(bytes)?;
    let n = header.n_samples as usize;
    if bytes.len() < payload_off {
        return Err(CodecError::TruncatedBitstream);
    }

    if header.mode == MODE_RAW {
        let payload = &bytes[payload_off..];
        if payload.len() < 2 * n {
            return Err(CodecError::TruncatedBitstream);
        }
        let mut out = Vec::with_capacity(n);
        for c in payload[..2 * n].chunks_exact(2) {
            out.push(i16::from_be_bytes([c[0], c[1]]));
        }
        return Ok(out);
    }

    let order = usize::from(header.predictor_order);
    if order > n {
        return Err(CodecError::MalformedHeader);
    }
    let k = header.rice_k;
    let mut out: Vec<i16> = Vec::with_capacity(n);
    for c in bytes[BASE_HEADER_LEN..payload_off].chunks_exact(2) {
        out.push(i16::from_be_bytes([c[0], c[1]]));
    }

    let mut reader = BitReader::new(&bytes[payload_off..]);
    for _ in order..n {
        let q = reader
            .read_unary()
            .map_err(|_| CodecError::TruncatedBitstream)?;
        if q > u64::from(u32::MAX >> k) {
            return Err(CodecError::CorruptStream);
        }
        let rem = if k > 0 {
            reader
                .read(u32::from(k))
                .map_err(|_| CodecError::TruncatedBitstream)?
        } else {
            0
        };
        let u = ((q as u32) << k) | rem as u32;
        let r = zigzag_unmap(u);
        let predicted = match order {
            0 => 0,
            1 => i32::from(out[out.len() - 1]),
            2 => 2 * i32::from(out[out.len() - 1]) - i32::from(out[out.len() - 2]),
            _ => unreachable!(),
        };
        let x = predicted + r;
        if x < i32::from(i16::MIN) || x > i32::from(i16::MAX) {
            return Err(CodecError::CorruptStream);
        }
        out.push(x as i16);
    }
    Ok(out)
}

/// Compresses one waveform block, carrying its stream identity along.
pub fn compress_block(block: &WaveformBlock, params: &CodecParams) -> CompressedBlock {
    CompressedBlock {
        channel_id: block.channel_id,
        start_sample_index: block.start_sample_index,
        bytes: encode_codes(&block.samples, params),
    }
}

/// Exact inverse of [`compress_block`].
pub fn decompress_block(cb: &CompressedBlock) -> Result<WaveformBlock, CodecError> {
    Ok(WaveformBlock {
        channel_id: cb.channel_id,
        start_sample_index: cb.start_sample_index,
        samples: decode_codes(&cb.bytes)?,
    })
}

/// raw/compressed size quotient; rejects a zero denominator.
pub fn compression_ratio(raw_bits: u64, compressed_bits: u64) -> Result<f64, CodecError> {
    if compressed_bits == 0 {
        return Err(CodecError::ZeroCompressedSize);
    }
    Ok(raw_bits as f64 / compressed_bits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;

    /// Renders the first `bit_len` bits of a packed stream as '0'/'1'.
    fn bit_string(bytes: &[u8], bit_len: u64) -> String {
        let mut s = String::new();
        for i in 0..bit_len {
            let byte = bytes[(i / 8) as usize];
            let bit = (byte >> (7 - (i % 8))) & 1;
            s.push(if bit == 1 { '1' } else { '0' });
        }
        s
    }

    fn rice_bits(u: u32, k: u8) -> String {
        let mut w = BitWriter::new();
        rice_encode_value(&mut w, u, k);
        let len = w.bit_len();
        bit_string(&w.finish(), len)
    }

    #[test]
    fn zigzag_known_values() {
        assert_eq!(zigzag_map(0), 0);
        assert_eq!(zigzag_map(-1), 1);
        assert_eq!(zigzag_map(1), 2);
        assert_eq!(zigzag_map(-2), 3);
        assert_eq!(zigzag_map(5), 10);
    }

    #[test]
    fn zigzag_roundtrips_extremes() {
        for r in [
            0,
            1,
            -1,
            12345,
            -12345,
            i32::from(i16::MIN),
            i32::from(i16::MAX),
            i32::MAX,
            i32::MIN,
        ] {
            assert_eq!(zigzag_unmap(zigzag_map(r)), r, "r={}", r);
        }
    }

    #[test]
    fn rice_code_shapes() {
        assert_eq!(rice_bits(0, 0), "0");
        assert_eq!(rice_bits(5, 2), "1001");
        assert_eq!(rice_bits(7, 0), "11111110");
    }

    #[test]
    fn rice_len_matches_emitted_bits() {
        for u in [0u32, 1, 2, 7, 100, 4095, 1 << 20] {
            for k in [0u8, 1, 4, 12, 30] {
                let mut w = BitWriter::new();
                rice_encode_value(&mut w, u, k);
                assert_eq!(w.bit_len(), rice_len(u, k), "u={} k={}", u, k);
            }
        }
    }

    /// Straightforward oracle: sum encoded lengths for every k.
    fn exhaustive_best_k(zz: &[u32], k_max: u8) -> (u8, u64) {
        let mut best = (0u8, u64::MAX);
        for k in 0..=k_max {
            let total: u64 = zz.iter().map(|&u| rice_len(u, k)).sum();
            if total < best.1 {
                best = (k, total);
            }
        }
        best
    }

    #[test]
    fn choose_k_all_zeros() {
        assert_eq!(choose_k(&[0; 64], MAX_RICE_K), 0);
    }

    #[test]
    fn choose_k_matches_exhaustive_oracle() {
        assert_eq!(
            choose_k_with_cost(&[10, 10, 10, 10], MAX_RICE_K),
            exhaustive_best_k(&[10, 10, 10, 10], MAX_RICE_K)
        );

        // Random 12-bit values from a cheap deterministic generator.
        let mut state = 0x1234_5678u32;
        let mut zz = Vec::new();
        for _ in 0..4096 {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            zz.push(state >> 20);
        }
        assert_eq!(
            choose_k_with_cost(&zz, MAX_RICE_K),
            exhaustive_best_k(&zz, MAX_RICE_K)
        );
    }

    fn roundtrip(codes: &[i16], params: &CodecParams) -> Vec<u8> {
        let bytes = encode_codes(codes, params);
        assert_eq!(decode_codes(&bytes).unwrap(), codes, "roundtrip mismatch");
        bytes
    }

    #[test]
    fn constant_block_compresses_to_order_one() {
        let codes = vec![123i16; 4096];
        let bytes = roundtrip(&codes, &CodecParams::default());
        let (h, _) = parse_header(&bytes).unwrap();
        assert_eq!(h.mode, MODE_PREDICTIVE);
        assert_eq!(h.predictor_order, 1);
        assert_eq!(h.rice_k, 0);
        // 8 header + 2 seed + ceil(4095/8) payload bytes.
        assert_eq!(bytes.len(), 8 + 2 + 512);
        let ratio = compression_ratio(4096 * 16, bytes.len() as u64 * 8).unwrap();
        assert!(ratio > 10.0, "ratio {}", ratio);
    }

    #[test]
    fn uniform_noise_escapes_to_raw() {
        let mut state = 0x9E37_79B9u32;
        let mut codes = Vec::with_capacity(4096);
        for _ in 0..4096 {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            codes.push((state >> 16) as i16);
        }
        let bytes = roundtrip(&codes, &CodecParams::default());
        let (h, _) = parse_header(&bytes).unwrap();
        assert_eq!(h.mode, MODE_RAW);
        assert_eq!(bytes.len(), BASE_HEADER_LEN + 2 * codes.len());
    }

    #[test]
    fn tiny_and_degenerate_blocks_roundtrip() {
        let params = CodecParams::default();
        roundtrip(&[0], &params);
        roundtrip(&[-32768], &params);
        roundtrip(&[32767, -32768], &params);
        roundtrip(&[1, 2, 3], &params);
        for order in 0..=2u8 {
            let forced = CodecParams {
                predictor_order: Some(order),
                ..CodecParams::default()
            };
            roundtrip(&[7, -7, 7, -7, 7], &forced);
            // n == order edge: no residuals at all.
            if order > 0 {
                roundtrip(&vec![42i16; usize::from(order)], &forced);
            }
        }
    }

    #[test]
    fn alternating_full_scale_roundtrips_within_bound() {
        let mut codes = Vec::with_capacity(4096);
        for i in 0..4096 {
            codes.push(if i % 2 == 0 { 32767 } else { -32768 });
        }
        let bytes = roundtrip(&codes, &CodecParams::default());
        assert!(bytes.len() as u64 * 8 <= 4096 * 16 + BASE_HEADER_LEN as u64 * 8);
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(compression_ratio(65536, 65536).unwrap(), 1.0);
        let r = compression_ratio(65536, 4224).unwrap();
        assert!((r - 15.51).abs() < 0.01, "r={}", r);
        assert_eq!(compression_ratio(0, 100).unwrap(), 0.0);
        assert_eq!(
            compression_ratio(100, 0),
            Err(CodecError::ZeroCompressedSize)
        );
    }

    #[test]
    fn truncation_is_detected() {
        let codes = vec![123i16; 256];
        let bytes = encode_codes(&codes, &CodecParams::default());
        // Remove the last byte: the final residuals are gone.
        assert_eq!(
            decode_codes(&bytes[..bytes.len() - 1]),
            Err(CodecError::TruncatedBitstream)
        );
        assert_eq!(
            decode_codes(&bytes[..5]),
            Err(CodecError::TruncatedBitstream)
        );

        // Alternating full-scale rails cannot be predicted and escape to
        // RAW; a short RAW payload must also be caught.
        let alt: Vec<i16> = (0..64)
            .map(|i| if i % 2 == 0 { 32767 } else { -32768 })
            .collect();
        let raw = encode_codes(&alt, &CodecParams::default());
        assert_eq!(raw[1], MODE_RAW);
        assert_eq!(
            decode_codes(&raw[..raw.len() - 1]),
            Err(CodecError::TruncatedBitstream)
        );
    }

    #[test]
    fn malformed_headers_are_rejected() {
        let good = encode_codes(&[1, 2, 3, 4], &CodecParams::default());

        let mut bad_magic = good.clone();
        bad_magic[0] = 0x00;
        assert_eq!(decode_codes(&bad_magic), Err(CodecError::MalformedHeader));

        let mut bad_mode = good.clone();
        bad_mode[1] = 9;
        assert_eq!(decode_codes(&bad_mode), Err(CodecError::MalformedHeader));

        let mut bad_order = good.clone();
        bad_order[1] = MODE_PREDICTIVE;
        bad_order[2] = 3;
        assert_eq!(decode_codes(&bad_order), Err(CodecError::MalformedHeader));

        let mut bad_k = good.clone();
        bad_k[1] = MODE_PREDICTIVE;
        bad_k[3] = 31;
        assert_eq!(decode_codes(&bad_k), Err(CodecError::MalformedHeader));

        let mut zero_n = good;
        zero_n[4..8].copy_from_slice(&0u32.to_be_bytes());
        assert_eq!(decode_codes(&zero_n), Err(CodecError::MalformedHeader));
    }

    #[test]
    fn forced_order_is_respected() {
        let codes: Vec<i16> = (0..512).map(|i| (i * 7 % 200 - 100) as i16).collect();
        for order in 0..=2u8 {
            let params = CodecParams {
                predictor_order: Some(order),
                ..CodecParams::default()
            };
            let bytes = roundtrip(&codes, &params);
            let (h, _) = parse_header(&bytes).unwrap();
            if h.mode == MODE_PREDICTIVE {
                assert_eq!(h.predictor_order, order);
            }
        }
    }

    #[test]
    fn ramp_prefers_second_order() {
        let codes: Vec<i16> = (0..4096).map(|i| (i % 20000 - 10000) as i16).collect();
        let bytes = roundtrip(&codes, &CodecParams::default());
        let (h, _) = parse_header(&bytes).unwrap();
        assert_eq!(h.mode, MODE_PREDICTIVE);
        // A pure ramp has zero second difference.
        assert_eq!(h.predictor_order, 2);
        assert_eq!(h.rice_k, 0);
    }

    #[test]
    fn sine_blocks_compress_at_any_frequency() {
        use crate::signal::{synthesize_block, AdcConfig, ToneSpec};
        let cfg = AdcConfig::new(1.0e8, 1.9).unwrap();
        for freq in [1.0e5, 1.3e6, 7.7e6, 2.5e7] {
            let tone = ToneSpec {
                freq_hz: freq,
                amplitude_v: 0.1,
                ..ToneSpec::default()
            };
            let block = synthesize_block(&tone, &cfg, 0, 0, 4096, 1).unwrap();
            let bytes = roundtrip(&block.samples, &CodecParams::default());
            let ratio =
                compression_ratio(block.samples.len() as u64 * 16, bytes.len() as u64 * 8).unwrap();
            assert!(ratio > 1.0, "freq {} ratio {}", freq, ratio);
        }
    }

    #[test]
    fn block_wrapper_carries_identity() {
        use crate::signal::WaveformBlock;
        let block = WaveformBlock {
            channel_id: 9,
            start_sample_index: 123_456_789_000,
            samples: vec![5i16; 100],
        };
        let cb = compress_block(&block, &CodecParams::default());
        assert_eq!(cb.header().unwrap().n_samples, 100);
        let back = decompress_block(&cb).unwrap();
        assert_eq!(back, block);
        let msg = format!("{}", CodecError::TruncatedBitstream);
        assert!(!msg.is_empty());
    }
}
