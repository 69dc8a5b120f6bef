//! Process-variable table and line-protocol server for slow control.
//!
//! Protocol (newline-delimited UTF-8, one command per line):
//!
//! ```text
//! GET <name>          ->  OK <name> <value> <ts>
//! PUT <name> <value>  ->  OK                        (or ERR <code> <msg>)
//! MON <name>          ->  OK, then EVT <name> <value> <ts> per update
//! LIST                ->  OK <name> <name> ...
//! anything else       ->  ERR BADCMD <msg>
//! ```
//!
//! Timestamps are nanoseconds from a monotonic clock with origin at
//! server start, made strictly increasing per PV so event order is
//! reconstructible from the stream alone. Errors never close the
//! connection. Values are single whitespace-free tokens.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvError {
    UnknownPv,
    TypeMismatch,
    OutOfRange,
    ReadOnly,
    BadCmd,
}

impl PvError {
    /// Wire code used in `ERR <code> <msg>` replies.
    pub fn code(self) -> &'static str {
        match self {
            PvError::UnknownPv => "UNKNOWNPV",
            PvError::TypeMismatch => "TYPEMISMATCH",
            PvError::OutOfRange => "OUTOFRANGE",
            PvError::ReadOnly => "READONLY",
            PvError::BadCmd => "BADCMD",
        }
    }
}

impl fmt::Display for PvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PvValue {
    Float(f64),
    Int(i64),
    /// Index into the PV's declared choice list.
    Enum(usize),
    Str(String),
}

struct Pv {
    value: PvValue,
    /// Inclusive [lo, hi] bounds for Float/Int PVs.
    limits: Option<(f64, f64)>,
    /// Legal values for Enum PVs.
    choices: Vec<String>,
    /// Writable only by the process itself (telemetry), not via PUT.
    read_only: bool,
    timestamp_ns: u64,
}

impl Pv {
    fn render(&self) -> String {
        match &self.value {
            PvValue::Float(v) => format!("{}", v),
            PvValue::Int(v) => format!("{}", v),
            PvValue::Enum(i) => self.choices[*i].clone(),
            PvValue::Str(s) => s.clone(),
        }
    }
}

struct Table {
    pvs: HashMap<String, Pv>,
    /// Declaration order, for stable LIST output.
    order: Vec<String>,
    /// Monitor fan-out: formatted EVT lines per subscriber.
    subscribers: HashMap<String, Vec<Sender<String>>>,
}

/// Shared handle to one PV table. Cheap to clone; all clones observe
/// the same state.
#[derive(Clone)]
pub struct PvServer {
    inner: Arc<Shared>,
}

struct Shared {
    start: Instant,
    table: Mutex<Table>,
}

impl PvServer {
    pub fn new() -> Self {
        PvServer {
            inner: Arc::new(Shared {
                start: Instant::now(),
                table: Mutex::new(Table {
                    pvs: HashMap::new(),
                    order: Vec::new(),
                    subscribers: HashMap::new(),
                }),
            }),
        }
    }

    fn now_ns(&self) -> u64 {
        self.inner.start.elapsed().as_nanos() as u64
    }

    fn declare(&self, name: &str, pv: Pv) {
        let mut t = self.inner.table.lock().unwrap();
        assert!(
            !t.pvs.contains_key(name),
            "PV {} declared twice",
            name
        );
        t.order.push(name.to_string());
        t.pvs.insert(name.to_string(), pv);
    }

    pub fn declare_float(
        &self,
        name: &str,
        default: f64,
        limits: Option<(f64, f64)>,
        read_only: bool,
    ) {
        if let Some((lo, hi)) = limits {
            assert!(lo <= default && default <= hi, "default outside limits");
        }
        self.declare(
            name,
            Pv {
                value: PvValue::Float(default),
                limits,
                choices: Vec::new(),
                read_only,
                timestamp_ns: 0,
            },
        );
    }

    pub fn declare_int(&self, name: &str, default: i64, read_only: bool) {
        self.declare(
            name,
            Pv {
                value: PvValue::Int(default),
                limits: None,
                choices: Vec::new(),
                read_only,
                timestamp_ns: 0,
            },
        );
    }

    pub fn declare_enum(&self, name: &str, choices: &[&str], default: &str, read_only: bool) {
        let idx = choices
            .iter()
            .position(|c| *c == default)
            .expect("default must be a declared choice");
        self.declare(
            name,
            Pv {
                value: PvValue::Enum(idx),
                limits: None,
                choices: choices.iter().map(|c| c.to_string()).collect(),
                read_only,
                timestamp_ns: 0,
            },
        );
    }

    pub fn declare_str(&self, name: &str, default: &str, read_only: bool) {
        self.declare(
            name,
            Pv {
                value: PvValue::Str(default.to_string()),
                limits: None,
                choices: Vec::new(),
                read_only,
                timestamp_ns: 0,
            },
        );
    }

    /// Current value and timestamp, read atomically.
    pub fn get(&self, name: &str) -> Result<(PvValue, u64), PvError> {
        let t = self.inner.table.lock().unwrap();
        let pv = t.pvs.get(name).ok_or(PvError::UnknownPv)?;
        Ok((pv.value.clone(), pv.timestamp_ns))
    }

    pub fn get_float(&self, name: &str) -> Result<f64, PvError> {
        match self.get(name)?.0 {
            PvValue::Float(v) => Ok(v),
            _ => Err(PvError::TypeMismatch),
        }
    }

    /// Rendered value as it would appear on the wire.
    pub fn get_rendered(&self, name: &str) -> Result<(String, u64), PvError> {
        let t = self.inner.table.lock().unwrap();
        let pv = t.pvs.get(name).ok_or(PvError::UnknownPv)?;
        Ok((pv.render(), pv.timestamp_ns))
    }

    /// External write: type-checked, limit-checked, rejected on
    /// read-only PVs; notifies monitors on success.
    pub fn put(&self, name: &str, raw: &str) -> Result<(), PvError> {
        self.write_value(name, raw, false)
    }

    /// Internal write from the pipeline (telemetry); bypasses the
    /// read-only gate but still notifies monitors.
    pub fn set_internal(&self, name: &str, value: PvValue) {
        let mut t = self.inner.table.lock().unwrap();
        let now = self.now_ns();
        let pv = t.pvs.get_mut(name).expect("telemetry PV declared");
        pv.value = value;
        pv.timestamp_ns = pv.timestamp_ns.wrapping_add(1).max(now);
        let line = format!("EVT {} {} {}", name, pv.render(), pv.timestamp_ns);
        Self::notify(&mut t, name, &line);
    }

    fn write_value(&self, name: &str, raw: &str, internal: bool) -> Result<(), PvError> {
        let mut t = self.inner.table.lock().unwrap();
        let now = self.now_ns();
        let pv = t.pvs.get_mut(name).ok_or(PvError::UnknownPv)?;
        if pv.read_only && !internal {
            return Err(PvError::ReadOnly);
        }
        let new_value = match &pv.value {
            PvValue::Float(_) => {
                let v: f64 = raw.parse().map_err(|_| PvError::TypeMismatch)?;
                if !v.is_finite() {
                    return Err(PvError::TypeMismatch);
                }
                if let Some((lo, hi)) = pv.limits {
                    if v < lo || v > hi {
                        return Err(PvError::OutOfRange);
                    }
                }
                PvValue::Float(v)
            }
            PvValue::Int(_) => {
                let v: i64 = raw.parse().map_err(|_| PvError::TypeMismatch)?;
                if let Some((lo, hi)) = pv.limits {
                    if (v as f64) < lo || (v as f64) > hi {
                        return Err(PvError::OutOfRange);
                    }
                }
                PvValue::Int(v)
            }
            PvValue::Enum(_) => {
                // The token type is right (enums are strings); a token
                // outside the choice list is a range violation.
                let idx = pv
                    .choices
                    .iter()
                    .position(|c| c == raw)
                    .ok_or(PvError::OutOfRange)?;
                PvValue::Enum(idx)
            }
            PvValue::Str(_) => PvValue::Str(raw.to_string()),
        };
        pv.value = new_value;
        pv.timestamp_ns = pv.timestamp_ns.wrapping_add(1).max(now);
        let line = format!("EVT {} {} {}", name, pv.render(), pv.timestamp_ns);
        Self::notify(&mut t, name, &line);
        Ok(())
    }

    /// Sends `line` to every live subscriber of `name`, pruning dead ones.
    fn notify(t: &mut Table, name: &str, line: &str) {
        if let Some(subs) = t.subscribers.get_mut(name) {
            subs.retain(|tx| tx.send(line.to_string()).is_ok());
        }
    }

    /// Registers a monitor; the current value is delivered immediately,
    /// then every accepted put, in put order.
    pub fn monitor(&self, name: &str, tx: Sender<String>) -> Result<(), PvError> {
        let mut t = self.inner.table.lock().unwrap();
        let pv = t.pvs.get(name).ok_or(PvError::UnknownPv)?;
        let line = format!("EVT {} {} {}", name, pv.render(), pv.timestamp_ns);
        // Queue the snapshot before registering so no event precedes it.
        if tx.send(line).is_ok() {
            t.subscribers.entry(name.to_string()).or_default().push(tx);
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.inner.table.lock().unwrap().order.clone()
    }

    /// Parses and executes one protocol line; every output line (the
    /// reply, and any monitor registration snapshot) is pushed through
    /// `out` in order.
    pub fn handle_line(&self, line: &str, out: &Sender<String>) {
        let mut parts = line.split_whitespace();
        let verb = parts.next().unwrap_or("");
        let reply = match verb {
            "GET" => match parts.next() {
                Some(name) if parts.next().is_none() => match self.get_rendered(name) {
                    Ok((value, ts)) => format!("OK {} {} {}", name, value, ts),
                    Err(e) => format!("ERR {} {}", e.code(), name),
                },
                _ => format!("ERR {} usage: GET <name>", PvError::BadCmd.code()),
            },
            "PUT" => match (parts.next(), parts.next()) {
                (Some(name), Some(value)) if parts.next().is_none() => {
                    match self.put(name, value) {
                        Ok(()) => "OK".to_string(),
                        Err(e) => format!("ERR {} {} {}", e.code(), name, value),
                    }
                }
                _ => format!("ERR {} usage: PUT <name> <value>", PvError::BadCmd.code()),
            },
            "MON" => match parts.next() {
                Some(name) if parts.next().is_none() => {
                    // Reply first so the OK precedes the snapshot EVT.
                    match self.get(name) {
                        Ok(_) => {
                            let _ = out.send("OK".to_string());
                            let _ = self.monitor(name, out.clone());
                            return;
                        }
                        Err(e) => format!("ERR {} {}", e.code(), name),
                    }
                }
                _ => format!("ERR {} usage: MON <name>", PvError::BadCmd.code()),
            },
            "LIST" => {
                let mut s = String::from("OK");
                for name in self.names() {
                    s.push(' ');
                    s.push_str(&name);
                }
                s
            }
            "" => format!("ERR {} empty command", PvError::BadCmd.code()),
            other => format!("ERR {} unknown verb {}", PvError::BadCmd.code(), other),
        };
        let _ = out.send(reply);
    }
}

impl Default for PvServer {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------
// Standard PV set

/// PV name helpers for the declared control/telemetry set.
pub fn pv_run_state() -> &'static str {
    "ship.run_state"
}

pub fn pv_compression_enabled() -> &'static str {
    "ship.compression_enabled"
}

pub fn pv_frames_sent() -> &'static str {
    "ship.frames_sent"
}

pub fn pv_gaps_detected() -> &'static str {
    "ship.gaps_detected"
}

pub fn pv_compression_ratio() -> &'static str {
    "ship.compression_ratio"
}

pub fn pv_ch(channel_id: u8, field: &str) -> String {
    format!("ship.ch{}.{}", channel_id, field)
}

/// Declares the standard control and telemetry PVs for a set of
/// channels, defaults taken from the tone configuration.
pub fn declare_standard_pvs(
    server: &PvServer,
    channels: &[crate::config::ChannelConfig],
    adc: &ship_core::signal::AdcConfig,
    compression_enabled: bool,
) {
    server.declare_enum(pv_run_state(), &["stopped", "running"], "stopped", false);
    server.declare_enum(
        pv_compression_enabled(),
        &["false", "true"],
        if compression_enabled { "true" } else { "false" },
        false,
    );
    for ch in channels {
        let nyquist = adc.sample_rate_hz / 2.0;
        server.declare_float(
            &pv_ch(ch.channel_id, "nco_freq_hz"),
            ch.tone.freq_hz,
            Some((0.0, nyquist)),
            false,
        );
        server.declare_float(
            &pv_ch(ch.channel_id, "bias_v"),
            ch.tone.dc_offset_v,
            Some((-0.95, 0.95)),
            false,
        );
        server.declare_float(
            &pv_ch(ch.channel_id, "noise_sigma_v"),
            ch.tone.noise_sigma_v,
            Some((0.0, 1.0)),
            false,
        );
        server.declare_float(
            &pv_ch(ch.channel_id, "last_amplitude_v"),
            0.0,
            None,
            true,
        );
        server.declare_float(&pv_ch(ch.channel_id, "last_phase_rad"), 0.0, None, true);
    }
    server.declare_int(pv_frames_sent(), 0, true);
    server.declare_int(pv_gaps_detected(), 0, true);
    server.declare_float(pv_compression_ratio(), 0.0, None, true);
}

// ---------------------------------------------------------------------
// TCP front end

/// Serves the line protocol on `listener` until `shutdown` is set.
/// Returns the join handle of the accept loop.
pub fn serve(
    listener: TcpListener,
    server: PvServer,
    shutdown: Arc<AtomicBool>,
) -> std::thread::JoinHandle<()> {
    listener
        .set_nonblocking(true)
        .expect("nonblocking accept loop");
    std::thread::spawn(move || {
        loop {
            if shutdown.load(Ordering::Relaxed) {
                return;
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    let server = server.clone();
                    std::thread::spawn(move || handle_client(stream, server));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(std::time::Duration::from_millis(5));
                }
                Err(_) => return,
            }
        }
    })
}

fn handle_client(stream: TcpStream, server: PvServer) {
    // One write per reply, no Nagle: a reply split across two small
    // segments would otherwise stall on the peer's delayed ACK.
    stream.set_nodelay(true).ok();
    let reader = match stream.try_clone() {
        Ok(s) => BufReader::new(s),
        Err(_) => return,
    };
    let (tx, rx) = std::sync::mpsc::channel::<String>();

    // Writer half: serializes replies and monitor events.
    let mut write_half = stream;
    let writer = std::thread::spawn(move || {
        while let Ok(mut line) = rx.recv() {
            line.push('\n');
            if write_half.write_all(line.as_bytes()).is_err() {
                return;
            }
        }
    });

    for line in reader.lines() {
        let Ok(line) = line else { break };
        server.handle_line(&line, &tx);
    }
    drop(tx);
    let _ = writer.join();
}
