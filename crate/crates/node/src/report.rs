//! Rendering of run results: human summaries and CSV files.
//!
//! CSVs carry full-precision values (Rust's shortest round-trip float
//! form), so every derived figure in the human summary can be recomputed
//! from the CSV and reformatted to the identical string.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ship_core::linkqual::{eye_h_offset, eye_v_offset};
use ship_core::{EyeScanResult, IqMeasurement};

use crate::pipeline::{BenchReport, ProcessorStats};

/// Megabits per second with fixed precision; the one formatter shared by
/// summaries and their recomputation checks.
pub fn format_mbps(bps: f64) -> String {
    format!("{:.3} Mb/s", bps / 1e6)
}

// ---------------------------------------------------------------------
// Bench

pub fn render_bench_text(r: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "bench: {:.3} s wall, {} channel(s)",
        r.wall_s,
        r.channels.len()
    );
    let _ = writeln!(
        s,
        "frames:    {} sent, {} received",
        r.frames_sent, r.frames_received
    );
    let _ = writeln!(
        s,
        "payload:   {} bytes, {} ({} on the wire)",
        r.payload_bytes,
        format_mbps(r.throughput_bps),
        format_mbps(r.wire_bps)
    );
    let _ = writeln!(s, "ratio:     {:.4}", r.compression_ratio);
    let _ = writeln!(
        s,
        "integrity: {} gaps ({} missing), {} duplicates, {} crc errors, {} lane errors, {} decode errors",
        r.gaps_detected, r.missing_total, r.duplicates, r.crc_errors, r.lane_errors, r.decode_errors
    );
    let _ = writeln!(
        s,
        "checksums: {}",
        if r.all_checksums_match {
            "MATCH"
        } else {
            "MISMATCH"
        }
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<7}  {:>13}  {:>13}  {:>10}  {:>8}  {:>12}  {:>12}  {:>14}",
        "channel",
        "samples_sent",
        "samples_recv",
        "checksum",
        "windows",
        "amp_mean_v",
        "amp_rel_std",
        "phase_std_deg"
    );
    for ch in &r.channels {
        let _ = writeln!(
            s,
            "{:<7}  {:>13}  {:>13}  {:>10}  {:>8}  {:>12.6}  {:>12.3e}  {:>14.6}",
            ch.channel_id,
            ch.samples_sent,
            ch.samples_received,
            if ch.checksum_match { "match" } else { "DIFFER" },
            ch.n_windows,
            ch.amp_mean_v,
            ch.amp_rel_std,
            ch.phase_std_deg
        );
    }
    s
}

/// `key,value` rows; floats in shortest round-trip form.
pub fn bench_summary_csv(r: &BenchReport) -> String {
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "wall_s,{}", r.wall_s);
    let _ = writeln!(s, "frames_sent,{}", r.frames_sent);
    let _ = writeln!(s, "frames_received,{}", r.frames_received);
    let _ = writeln!(s, "bytes_out,{}", r.bytes_out);
    let _ = writeln!(s, "bytes_in,{}", r.bytes_in);
    let _ = writeln!(s, "payload_bytes,{}", r.payload_bytes);
    let _ = writeln!(s, "throughput_bps,{}", r.throughput_bps);
    let _ = writeln!(s, "wire_bps,{}", r.wire_bps);
    let _ = writeln!(s, "compression_ratio,{}", r.compression_ratio);
    let _ = writeln!(s, "gaps_detected,{}", r.gaps_detected);
    let _ = writeln!(s, "missing_total,{}", r.missing_total);
    let _ = writeln!(s, "duplicates,{}", r.duplicates);
    let _ = writeln!(s, "crc_errors,{}", r.crc_errors);
    let _ = writeln!(s, "lane_errors,{}", r.lane_errors);
    let _ = writeln!(s, "decode_errors,{}", r.decode_errors);
    let _ = writeln!(s, "checksums_match,{}", r.all_checksums_match);
    s
}

pub fn channel_stats_csv(r: &BenchReport) -> String {
    let mut s = String::from(
        "channel,blocks_sent,samples_sent,samples_received,source_checksum,sink_checksum,checksum_match,n_windows,amp_mean_v,amp_rel_std,phase_mean_rad,phase_std_deg\n",
    );
    for ch in &r.channels {
        let _ = writeln!(
            s,
            "{},{},{},{},{:08x},{:08x},{},{},{},{},{},{}",
            ch.channel_id,
            ch.blocks_sent,
            ch.samples_sent,
            ch.samples_received,
            ch.source_checksum,
            ch.sink_checksum,
            ch.checksum_match,
            ch.n_windows,
            ch.amp_mean_v,
            ch.amp_rel_std,
            ch.phase_mean_rad,
            ch.phase_std_deg
        );
    }
    s
}

// ---------------------------------------------------------------------
// Measurements

pub fn measurements_csv(measurements: &[IqMeasurement]) -> String {
    let mut s = String::from("channel,window_start_index,amplitude_v,phase_rad\n");
    for m in measurements {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            m.channel_id, m.window_start_sample_index, m.amplitude_v, m.phase_rad
        );
    }
    s
}

// ---------------------------------------------------------------------
// Processor

pub fn render_processor_text(stats: &ProcessorStats) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "processor: {} frames, {} payload bytes",
        stats.frames, stats.payload_bytes
    );
    let _ = writeln!(
        s,
        "integrity: {} gaps ({} missing), {} duplicates, {} crc errors, {} lane errors, {} decode errors",
        stats.gap_events,
        stats.missing_total,
        stats.duplicates,
        stats.crc_errors,
        stats.lane_errors,
        stats.decode_errors
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<7}  {:>8}  {:>13}  {:>10}  {:>8}  {:>12}  {:>14}",
        "channel", "blocks", "samples", "checksum", "windows", "amp_mean_v", "phase_std_deg"
    );
    for sink in &stats.sinks {
        let _ = writeln!(
            s,
            "{:<7}  {:>8}  {:>13}  {:>10}  {:>8}  {:>12.6}  {:>14.6}",
            sink.channel_id,
            sink.blocks,
            sink.samples,
            format!("{:08x}", sink.checksum_value()),
            sink.n_windows,
            sink.amp_mean_v(),
            sink.phase_std_deg()
        );
    }
    s
}

// ---------------------------------------------------------------------
// Eye scans

/// Grid CSV, one row per point: horizontal offset in UI, vertical offset,
/// measured BER.
pub fn eye_csv(scan: &EyeScanResult) -> String {
    let mut s = String::from("h_ui,v_offset,ber\n");
    for j in 0..scan.v_steps {
        for i in 0..scan.h_steps {
            let _ = writeln!(
                s,
                "{},{},{}",
                eye_h_offset(i, scan.h_steps),
                eye_v_offset(j, scan.v_steps),
                scan.ber_at(i, j)
            );
        }
    }
    s
}

/// Per-channel eye summary in the classic two-metric table layout.
pub fn render_eye_table(rows: &[(u8, &EyeScanResult)]) -> String {
    let mut s = String::new();
    if let Some((_, first)) = rows.first() {
        let _ = writeln!(
            s,
            "eye scan: {}x{} grid, BER threshold {:e}",
            first.h_steps, first.v_steps, first.ber_threshold
        );
    }
    s.push_str("Channel  Open Area  Open UI\n");
    for (channel, scan) in rows {
        let _ = writeln!(
            s,
            "{:<7}  {:<9}  {:.2}%",
            channel, scan.open_area, scan.open_ui_percent
        );
    }
    s
}

// ---------------------------------------------------------------------
// File output

/// Writes the bench CSVs (and measurements, when any were kept) under
/// `dir`, creating it if needed.
pub fn write_bench_outputs(
    dir: &Path,
    report: &BenchReport,
    measurements: &[IqMeasurement],
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("bench_summary.csv"), bench_summary_csv(report))?;
    fs::write(dir.join("channel_stats.csv"), channel_stats_csv(report))?;
    if !measurements.is_empty() {
        fs::write(dir.join("measurements.csv"), measurements_csv(measurements))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ChannelReport;

    fn sample_report() -> BenchReport {
        BenchReport {
            wall_s: 2.5,
            frames_sent: 1000,
            frames_received: 1000,
            bytes_out: 1_028_000,
            bytes_in: 1_028_000,
            payload_bytes: 1_000_000,
            throughput_bps: 1_000_000.0 * 8.0 / 2.5,
            wire_bps: 1_028_000.0 * 8.0 / 2.5,
            compression_ratio: 11.5,
            gaps_detected: 0,
            missing_total: 0,
            duplicates: 0,
            crc_errors: 0,
            lane_errors: 0,
            decode_errors: 0,
            all_checksums_match: true,
            channels: vec![ChannelReport {
                channel_id: 0,
                blocks_sent: 1000,
                samples_sent: 4_000_000,
                samples_received: 4_000_000,
                source_checksum: 0xdeadbeef,
                sink_checksum: 0xdeadbeef,
                checksum_match: true,
                n_windows: 4000,
                amp_mean_v: 0.5,
                amp_rel_std: 1e-5,
                phase_mean_rad: 0.3,
                phase_std_deg: 0.002,
                expected_amplitude_v: 0.5,
                expected_phase_rad: 0.3,
            }],
        }
    }

    /// The summary's throughput figure must be recomputable from the CSV
    /// alone and match to the last printed digit.
    #[test]
    fn summary_throughput_is_recomputable_from_csv() {
        let report = sample_report();
        let csv = bench_summary_csv(&report);
        let mut payload_bytes = None;
        let mut wall_s = None;
        let mut stored_bps = None;
        for line in csv.lines().skip(1) {
            let (key, value) = line.split_once(',').unwrap();
            match key {
                "payload_bytes" => payload_bytes = Some(value.parse::<u64>().unwrap()),
                "wall_s" => wall_s = Some(value.parse::<f64>().unwrap()),
                "throughput_bps" => stored_bps = Some(value.parse::<f64>().unwrap()),
                _ => {}
            }
        }
        let recomputed = payload_bytes.unwrap() as f64 * 8.0 / wall_s.unwrap();
        assert_eq!(recomputed, stored_bps.unwrap());
        let summary = render_bench_text(&report);
        assert!(
            summary.contains(&format_mbps(recomputed)),
            "summary should contain {:?}:\n{}",
            format_mbps(recomputed),
            summary
        );
    }

    #[test]
    fn channel_csv_has_one_row_per_channel() {
        let report = sample_report();
        let csv = channel_stats_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("channel,blocks_sent,"));
        assert!(lines[1].starts_with("0,1000,4000000,4000000,deadbeef,deadbeef,true,"));
    }

    #[test]
    fn measurements_csv_round_trips_values() {
        let ms = vec![IqMeasurement {
            channel_id: 2,
            window_start_sample_index: 5000,
            i_value: 100.0,
            q_value: -3.0,
            amplitude_v: 0.123456789012345,
            phase_rad: -0.000123456789,
        }];
        let csv = measurements_csv(&ms);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "channel,window_start_index,amplitude_v,phase_rad"
        );
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "2");
        assert_eq!(fields[1], "5000");
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.123456789012345);
        assert_eq!(fields[3].parse::<f64>().unwrap(), -0.000123456789);
    }

    #[test]
    fn eye_table_has_the_expected_columns() {
        let scan = EyeScanResult::from_grid(3, 3, 1e-3, vec![0.0; 9]);
        let table = render_eye_table(&[(0, &scan), (1, &scan)]);
        assert!(table.contains("Open Area  Open UI"), "{}", table);
        assert!(table.contains("100.00%"), "{}", table);
        let data_rows: Vec<&str> = table
            .lines()
            .filter(|l| l.starts_with(char::is_numeric))
            .collect();
        assert_eq!(data_rows.len(), 2);
        assert!(data_rows[0].starts_with("0        9"), "{}", table);
    }

    #[test]
    fn eye_csv_covers_the_whole_grid() {
        let scan = EyeScanResult::from_grid(5, 3, 1e-3, vec![0.0; 15]);
        let csv = eye_csv(&scan);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 15);
        assert_eq!(lines[0], "h_ui,v_offset,ber");
        // First row is the bottom-left corner of the grid.
        assert!(lines[1].starts_with("-0.5,-0.5,"), "{}", lines[1]);
    }
}
