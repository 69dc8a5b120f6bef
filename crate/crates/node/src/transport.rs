//! TCP lane transport: buffered writers on the digitizer side, a
//! frame-at-a-time reader on the processor side.
//!
//! Each lane is one TCP stream carrying frames back to back. Frames are
//! length-prefixed by their own header, so a CRC failure costs one frame,
//! not the lane; only a header that fails structural validation (bad
//! magic/version) poisons the lane, since byte alignment is then lost.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use ship_core::proto::{
    decode_frame, parse_frame_header, FrameError, FrameView, FRAME_HEADER_LEN,
};

/// Application-side buffer per lane; large enough that syscall overhead
/// disappears at multi-gigabit loopback rates.
pub const LANE_BUF: usize = 256 * 1024;

/// Connects `n` lanes to `addr`, retrying until `timeout` so the two
/// sides of a pipeline can start in either order.
pub fn connect_lanes(addr: &str, n: usize, timeout: Duration) -> io::Result<Vec<TcpStream>> {
    let deadline = Instant::now() + timeout;
    let mut lanes = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            match TcpStream::connect(addr) {
                Ok(s) => {
                    s.set_nodelay(true).ok();
                    lanes.push(s);
                    break;
                }
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(e);
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
            }
        }
    }
    Ok(lanes)
}

/// What one read step on a lane produced.
pub enum LaneEvent<'a> {
    /// A structurally valid frame with verified CRC.
    Frame(FrameView<'a>),
    /// A recoverable or fatal per-frame error; `next_event` keeps
    /// returning frames afterwards only if alignment survived.
    Corrupt(FrameError),
    /// Clean end of stream (peer closed at a frame boundary), or a
    /// poisoned lane.
    Eof,
}

/// Reads back-to-back frames from a byte stream, reusing one buffer.
pub struct FrameReader<R: Read> {
    src: R,
    buf: Vec<u8>,
    poisoned: bool,
}

impl<R: Read> FrameReader<R> {
    pub fn new(src: R) -> Self {
        FrameReader {
            src,
            buf: Vec::with_capacity(LANE_BUF),
            poisoned: false,
        }
    }

    /// Fills `buf[start..end]` from the source. Returns how many bytes
    /// were read before EOF.
    fn fill(&mut self, start: usize, end: usize) -> io::Result<usize> {
        let mut at = start;
        while at < end {
            match self.src.read(&mut self.buf[at..end]) {
                Ok(0) => break,
                Ok(n) => at += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(at - start)
    }

    pub fn next_event(&mut self) -> io::Result<LaneEvent<'_>> {
        if self.poisoned {
            return Ok(LaneEvent::Eof);
        }
        self.buf.resize(FRAME_HEADER_LEN, 0);
        let got = self.fill(0, FRAME_HEADER_LEN)?;
        if got == 0 {
            return Ok(LaneEvent::Eof);
        }
        if got < FRAME_HEADER_LEN {
            self.poisoned = true;
            return Ok(LaneEvent::Corrupt(FrameError::Truncated));
        }
        let header = match parse_frame_header(&self.buf) {
            Ok(h) => h,
            Err(e) => {
                // Structural failure: byte alignment is gone.
                self.poisoned = true;
                return Ok(LaneEvent::Corrupt(e));
            }
        };
        let total = header.frame_len();
        self.buf.resize(total, 0);
        let body = self.fill(FRAME_HEADER_LEN, total)?;
        if body < total - FRAME_HEADER_LEN {
            self.poisoned = true;
            return Ok(LaneEvent::Corrupt(FrameError::Truncated));
        }
        match decode_frame(&self.buf) {
            Ok((view, consumed)) => {
                debug_assert_eq!(consumed, total);
                Ok(LaneEvent::Frame(view))
            }
            // Payload length was trusted, so alignment holds; one bad
            // frame is dropped and the lane continues.
            Err(FrameError::CrcMismatch) => Ok(LaneEvent::Corrupt(FrameError::CrcMismatch)),
            Err(e) => {
                self.poisoned = true;
                Ok(LaneEvent::Corrupt(e))
            }
        }
    }
}

/// Buffered frame writer for one lane.
pub struct LaneWriter<W: Write> {
    inner: io::BufWriter<W>,
    frame_buf: Vec<u8>,
}

impl<W: Write> LaneWriter<W> {
    pub fn new(sink: W) -> Self {
        LaneWriter {
            inner: io::BufWriter::with_capacity(LANE_BUF, sink),
            frame_buf: Vec::with_capacity(LANE_BUF),
        }
    }

    /// Encodes and writes one frame.
    pub fn send(
        &mut self,
        channel_id: u8,
        flags: u8,
        sequence: u32,
        timestamp: u64,
        payload: &[u8],
    ) -> io::Result<()> {
        ship_core::proto::encode_frame_into(
            &mut self.frame_buf,
            channel_id,
            flags,
            sequence,
            timestamp,
            payload,
        )
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, format!("{}", e)))?;
        self.inner.write_all(&self.frame_buf)
    }

    /// Writes an already-encoded frame (template fast path).
    pub fn send_prebuilt(&mut self, frame: &[u8]) -> io::Result<()> {
        self.inner.write_all(frame)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

impl LaneWriter<TcpStream> {
    /// Flushes and half-closes the lane so the reader sees EOF after the
    /// last frame.
    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()?;
        let stream = self.inner.into_inner().map_err(|e| e.into_error())?;
        stream.shutdown(std::net::Shutdown::Write)
    }
}

/// Binds a listener, resolving the address first.
pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<std::net::TcpListener> {
    std::net::TcpListener::bind(addr)
}
