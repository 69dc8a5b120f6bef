//! MSB-first bit-level readers and writers used by the block codec.
//!
//! Bits are packed most significant bit first within each byte, and the
//! final byte of a stream is zero-padded on the right.

use alloc::vec::Vec;

/// Accumulating MSB-first bit writer.
///
/// Values are staged in a 64-bit accumulator and flushed to the output a
/// byte at a time, which keeps the per-bit cost low on hot encode paths.
pub struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    used: u32,
    bits_written: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter {
            out: Vec::new(),
            acc: 0,
            used: 0,
            bits_written: 0,
        }
    }

    pub fn with_capacity(bytes: usize) -> Self {
        BitWriter {
            out: Vec::with_capacity(bytes),
            acc: 0,
            used: 0,
            bits_written: 0,
        }
    }

    /// Appends the low `n` bits of `value`, most significant first.
    ///
    /// `n` must be at most 56 and `value` must fit in `n` bits.
    #[inline]
    pub fn push(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 56);
        debug_assert!(n == 64 || value >> n == 0);
        if n == 0 {
            return;
        }
        self.acc |= value << (64 - self.used - n);
        self.used += n;
        self.bits_written += u64::from(n);
        while self.used >= 8 {
            self.out.push((self.acc >> 56) as u8);
            self.acc <<= 8;
            self.used -= 8;
        }
    }

    /// Appends `q` one bits followed by a terminating zero bit.
    #[inline]
    pub fn push_unary(&mut self, q: u32) {
        let mut rem = q;
        while rem >= 32 {
            self.push(0xFFFF_FFFF, 32);
            rem -= 32;
        }
        // `rem` ones and the closing zero fit in one push (rem <= 31).
        self.push(((1u64 << rem) - 1) << 1, rem + 1);
    }

    /// Total number of bits pushed so far (before padding).
    pub fn bit_len(&self) -> u64 {
        self.bits_written
    }

    /// Flushes the accumulator, zero-padding the last byte, and returns
    /// the packed stream.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.out.push((self.acc >> 56) as u8);
        }
        self.out
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

/// Error returned when a reader runs past the end of its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBits;

/// MSB-first bit reader over a byte slice.
pub struct BitReader<'a> {
    data: &'a [u8],
    byte_pos: usize,
    acc: u64,
    acc_bits: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader {
            data,
            byte_pos: 0,
            acc: 0,
            acc_bits: 0,
        }
    }

    #[inline]
    fn refill(&mut self) {
        while self.acc_bits <= 56 && self.byte_pos < self.data.len() {
            self.acc |= u64::from(self.data[self.byte_pos]) << (56 - self.acc_bits);
            self.byte_pos += 1;
            self.acc_bits += 8;
        }
    }

    #[inline]
    fn advance(&mut self, n: u32) {
        debug_assert!(n <= self.acc_bits);
        if n == 64 {
            self.acc = 0;
        } else {
            self.acc <<= n;
        }
        self.acc_bits -= n;
    }

    /// Reads `n` bits (`n <= 56`) as an unsigned value.
    #[inline]
    pub fn read(&mut self, n: u32) -> Result<u64, OutOfBits> {
        debug_assert!(n <= 56);
        if n == 0 {
            return Ok(0);
        }
        if self.acc_bits < n {
            self.refill();
            if self.acc_bits < n {
                return Err(OutOfBits);
            }
        }
        let value = self.acc >> (64 - n);
        self.advance(n);
        Ok(value)
    }

    /// Reads a unary-coded quantity: the number of one bits before the
    /// next zero bit.
    #[inline]
    pub fn read_unary(&mut self) -> Result<u64, OutOfBits> {
        let mut q: u64 = 0;
        loop {
            if self.acc_bits == 0 {
                self.refill();
                if self.acc_bits == 0 {
                    return Err(OutOfBits);
                }
            }
            let ones = self.acc.leading_ones().min(self.acc_bits);
            if ones < self.acc_bits {
                // The terminating zero is inside the valid window.
                self.advance(ones + 1);
                return Ok(q + u64::from(ones));
            }
            q += u64::from(ones);
            self.advance(ones);
        }
    }

    /// Bits still available to read.
    pub fn bits_remaining(&self) -> u64 {
        (self.data.len() - self.byte_pos) as u64 * 8 + u64::from(self.acc_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn writer_packs_msb_first() {
        let mut w = BitWriter::new();
        w.push(0b101, 3);
        w.push(0b1, 1);
        w.push(0b0000, 4);
        assert_eq!(w.finish(), vec![0b1011_0000]);
    }

    #[test]
    fn writer_pads_final_byte_with_zeros() {
        let mut w = BitWriter::new();
        w.push(0b11, 2);
        assert_eq!(w.bit_len(), 2);
        assert_eq!(w.finish(), vec![0b1100_0000]);
    }

    #[test]
    fn writer_spans_byte_boundaries() {
        let mut w = BitWriter::new();
        w.push(0xABCD, 16);
        w.push(0x3, 2);
        w.push(0x1F, 5);
        let bytes = w.finish();
        assert_eq!(bytes, vec![0xAB, 0xCD, 0b1111_1110]);
    }

    #[test]
    fn unary_encoding_matches_definition() {
        let mut w = BitWriter::new();
        w.push_unary(0);
        w.push_unary(3);
        // 0 111 0 -> 0111 0000 after padding
        assert_eq!(w.finish(), vec![0b0111_0000]);
    }

    #[test]
    fn long_unary_runs_roundtrip() {
        for q in [0u32, 1, 7, 8, 31, 32, 33, 64, 200, 1000] {
            let mut w = BitWriter::new();
            w.push_unary(q);
            w.push(0x2A, 6);
            let bytes = w.finish();
            let mut r = BitReader::new(&bytes);
            assert_eq!(r.read_unary(), Ok(u64::from(q)));
            assert_eq!(r.read(6), Ok(0x2A));
        }
    }

    #[test]
    fn reader_roundtrips_mixed_widths() {
        let mut w = BitWriter::new();
        let fields: [(u64, u32); 6] = [(1, 1), (0, 3), (0x155, 9), (7, 3), (0xFFFF, 16), (0, 1)];
        for &(v, n) in &fields {
            w.push(v, n);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for &(v, n) in &fields {
            assert_eq!(r.read(n), Ok(v));
        }
    }

    #[test]
    fn reader_reports_exhaustion() {
        let bytes = [0xFFu8];
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read(8), Ok(0xFF));
        assert_eq!(r.read(1), Err(OutOfBits));
        // A stream of all ones never terminates a unary value.
        let mut r2 = BitReader::new(&bytes);
        assert_eq!(r2.read_unary(), Err(OutOfBits));
    }
}
