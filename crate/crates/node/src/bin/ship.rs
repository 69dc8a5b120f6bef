//! `ship` — digitizer/processor/bench/eyescan/pvctl front end.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use ship_core::linkqual::{eye_scan, ChannelModel, EyeScanResult};
use ship_core::rng::derive_seed;
use ship_node::config::{parse_config, RunConfig};
use ship_node::pipeline::{
    collected_measurements, run_digitizer, run_pipeline_bench, run_processor, RunOptions,
};
use ship_node::pv::{self, PvServer};
use ship_node::report;
use ship_node::transport::connect_lanes;

#[derive(Parser)]
#[command(
    name = "ship",
    version,
    about = "Streaming digitizer readout: produce, consume, bench, and qualify links"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize channel waveforms and stream framed blocks out.
    Digitizer(RunArgs),
    /// Receive framed blocks: validate, decompress, demodulate, report.
    Processor(RunArgs),
    /// Run digitizer and processor over loopback TCP and measure.
    Bench(BenchArgs),
    /// Scan receiver eyes and report open area per channel.
    Eyescan(EyeArgs),
    /// Command-line client for the PV slow-control protocol.
    Pvctl(PvArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV outputs (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serve slow control on this TCP port (overrides `[pv] port`).
    #[arg(long)]
    pv_port: Option<u16>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Exit nonzero when payload throughput lands below this, in bits/s.
    #[arg(long)]
    threshold_bps: Option<f64>,
}

#[derive(Args)]
struct EyeArgs {
    /// RMS sampling jitter, in UI.
    #[arg(long, default_value_t = 0.0)]
    jitter_ui: f64,
    /// RMS vertical noise, in normalized amplitude.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Horizontal grid points (odd, >= 3).
    #[arg(long, default_value_t = 65)]
    h_steps: usize,
    /// Vertical grid points (odd, >= 3).
    #[arg(long, default_value_t = 63)]
    v_steps: usize,
    /// BER threshold separating open from closed points.
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    /// Bits simulated per grid point.
    #[arg(long, default_value_t = 100_000)]
    bits: u64,
    /// Channel ids to scan (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    channels: Vec<u8>,
    /// Directory for per-channel grid CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PvArgs {
    /// host:port of the PV server.
    #[arg(long)]
    addr: String,
    #[command(subcommand)]
    verb: PvVerb,
}

#[derive(Subcommand)]
enum PvVerb {
    /// Read one PV.
    Get { name: String },
    /// Write one PV.
    Put { name: String, value: String },
    /// Subscribe to one PV and print events.
    Mon {
        name: String,
        /// Stop after this many lines (default: run until the peer closes).
        #[arg(long)]
        count: Option<u64>,
    },
    /// List declared PV names.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Digitizer(args) => cmd_digitizer(args),
        Cmd::Processor(args) => cmd_processor(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Eyescan(args) => cmd_eyescan(args),
        Cmd::Pvctl(args) => cmd_pvctl(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ship: {:#}", e);
            ExitCode::from(2)
        }
    }
}

/// Loads the config and applies CLI overrides.
fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(port) = args.pv_port {
        cfg.pv_port = Some(port);
    }
    Ok(cfg)
}

/// Starts the PV server when a port is configured. The returned guard
/// keeps the accept loop alive for the scope of the run.
struct PvGuard {
    server: PvServer,
    shutdown: Arc<AtomicBool>,
}

impl Drop for PvGuard {
    fn drop(&mut self) {
        self.shutdown
            .store(true, std::sync::atomic::Ordering::Relaxed);
    }
}

fn start_pv(cfg: &RunConfig) -> anyhow::Result<Option<PvGuard>> {
    let Some(port) = cfg.pv_port else {
        return Ok(None);
    };
    let server = PvServer::new();
    pv::declare_standard_pvs(&server, &cfg.channels, &cfg.adc, cfg.compression_enabled);
    let listener = TcpListener::bind(("127.0.0.1", port))
        .map_err(|e| anyhow::anyhow!("pv: bind 127.0.0.1:{}: {}", port, e))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    pv::serve(listener, server.clone(), Arc::clone(&shutdown));
    eprintln!("pv: serving on 127.0.0.1:{}", port);
    Ok(Some(PvGuard { server, shutdown }))
}

fn cmd_digitizer(args: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&args)?;
    let pv_guard = start_pv(&cfg)?;
    let mut opts = RunOptions::from_config(&cfg);
    if let Some(g) = &pv_guard {
        opts.pv = Some(g.server.clone());
        // A timed run starts itself; operators can still pause it.
        g.server
            .put(pv::pv_run_state(), "running")
            .expect("run_state is writable");
    }
    eprintln!(
        "digitizer: {} channel(s) over {} lane(s) to {} for {} s",
        cfg.channels.len(),
        cfg.lanes,
        cfg.endpoint,
        cfg.duration_s
    );
    let lanes = connect_lanes(&cfg.endpoint, cfg.lanes, Duration::from_secs(10))?;
    let stats = run_digitizer(&cfg, lanes, &opts)?;
    println!(
        "digitizer: sent {} frames, {} payload bits",
        stats.frames_sent, stats.payload_bits
    );
    for ch in &stats.channels {
        println!(
            "channel {}: {} blocks, {} samples, checksum {:08x}",
            ch.channel_id, ch.blocks, ch.samples, ch.checksum
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_processor(args: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&args)?;
    let pv_guard = start_pv(&cfg)?;
    let mut opts = RunOptions::from_config(&cfg);
    if let Some(g) = &pv_guard {
        opts.pv = Some(g.server.clone());
    }
    if cfg.out_dir.is_some() {
        opts.keep_measurements = 200_000;
    }
    let listener = TcpListener::bind(&cfg.endpoint)?;
    eprintln!(
        "processor: listening on {} for {} lane(s)",
        cfg.endpoint, cfg.lanes
    );
    let mut lanes = Vec::with_capacity(cfg.lanes);
    for _ in 0..cfg.lanes {
        let (stream, peer) = listener.accept()?;
        eprintln!("processor: lane connected from {}", peer);
        lanes.push(stream);
    }
    let stats = run_processor(&cfg, lanes, &opts)?;
    print!("{}", report::render_processor_text(&stats));
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let measurements = collected_measurements(&stats);
        std::fs::write(
            dir.join("measurements.csv"),
            report::measurements_csv(&measurements),
        )?;
        eprintln!("processor: wrote {}", dir.join("measurements.csv").display());
    }
    let clean = stats.gap_events == 0
        && stats.crc_errors == 0
        && stats.lane_errors == 0
        && stats.decode_errors == 0;
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&args.run)?;
    let pv_guard = start_pv(&cfg)?;
    let mut opts = RunOptions::from_config(&cfg);
    if let Some(g) = &pv_guard {
        opts.pv = Some(g.server.clone());
    }
    if cfg.out_dir.is_some() {
        opts.keep_measurements = 50_000;
    }
    let (report_data, proc_stats) = run_pipeline_bench(&cfg, &opts)?;
    print!("{}", report::render_bench_text(&report_data));

    let mut ok = report_data.clean() && report_data.all_checksums_match;
    if let Some(threshold) = args.threshold_bps {
        let met = report_data.throughput_bps >= threshold;
        println!(
            "threshold: {} required, {} measured -> {}",
            report::format_mbps(threshold),
            report::format_mbps(report_data.throughput_bps),
            if met { "met" } else { "NOT MET" }
        );
        ok &= met;
    }
    if let Some(dir) = &cfg.out_dir {
        let measurements = collected_measurements(&proc_stats);
        report::write_bench_outputs(dir, &report_data, &measurements)?;
        eprintln!("bench: wrote CSVs under {}", dir.display());
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_eyescan(args: EyeArgs) -> anyhow::Result<ExitCode> {
    let mut scans: Vec<(u8, EyeScanResult)> = Vec::new();
    for &ch in &args.channels {
        let model = ChannelModel::new(
            args.jitter_ui,
            args.noise,
            derive_seed(args.seed, u64::from(ch), 0),
        )
        .map_err(|e| anyhow::anyhow!("channel model: {}", e))?;
        let scan = eye_scan(&model, args.h_steps, args.v_steps, args.threshold, args.bits)
            .map_err(|e| anyhow::anyhow!("eye scan: {}", e))?;
        scans.push((ch, scan));
    }
    let rows: Vec<(u8, &EyeScanResult)> = scans.iter().map(|(c, s)| (*c, s)).collect();
    print!("{}", report::render_eye_table(&rows));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        for (ch, scan) in &scans {
            let path = dir.join(format!("eye_ch{}.csv", ch));
            std::fs::write(&path, report::eye_csv(scan))?;
            eprintln!("eyescan: wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_pvctl(args: PvArgs) -> anyhow::Result<ExitCode> {
    let stream = TcpStream::connect(&args.addr)?;
    stream.set_nodelay(true).ok();
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    let request = |w: &mut TcpStream, mut text: String| -> anyhow::Result<()> {
        text.push('\n');
        w.write_all(text.as_bytes())?;
        Ok(())
    };
    match args.verb {
        PvVerb::Get { name } => {
            request(&mut writer, format!("GET {}", name))?;
            reader.read_line(&mut line)?;
            print!("{}", line);
            Ok(exit_for_reply(&line))
        }
        PvVerb::Put { name, value } => {
            request(&mut writer, format!("PUT {} {}", name, value))?;
            reader.read_line(&mut line)?;
            print!("{}", line);
            Ok(exit_for_reply(&line))
        }
        PvVerb::List => {
            request(&mut writer, "LIST".to_string())?;
            reader.read_line(&mut line)?;
            print!("{}", line);
            Ok(exit_for_reply(&line))
        }
        PvVerb::Mon { name, count } => {
            request(&mut writer, format!("MON {}", name))?;
            reader.read_line(&mut line)?;
            print!("{}", line);
            if line.starts_with("ERR") {
                return Ok(ExitCode::FAILURE);
            }
            let mut seen = 0u64;
            loop {
                if let Some(limit) = count {
                    if seen >= limit {
                        break;
                    }
                }
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    break;
                }
                print!("{}", line);
                seen += 1;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for_reply(line: &str) -> ExitCode {
    if line.starts_with("OK") {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
