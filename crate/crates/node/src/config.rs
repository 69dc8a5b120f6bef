//! Run configuration: a small line-based `key = value` format with
//! `[section]` headers, strict about unknown keys so typos fail loudly.
//!
//! Sections and keys (defaults in parentheses):
//!
//! ```text
//! role = digitizer|processor|bench      # required
//! duration_s = 5.0
//! seed = 1
//! out = <directory>                     # optional, no default
//!
//! [adc]
//! sample_rate_hz = 10e6
//! full_scale_vpp = 1.9
//!
//! [codec]
//! block_size = 4000
//! compression = true
//! predictor_order = <none|0|1|2>        # none = choose per block
//! k_max = 30
//!
//! [demod]
//! f_if_hz = 1e6
//! window_n = 1000
//!
//! [stream]
//! lanes = 2
//! endpoint = 127.0.0.1:7401
//!
//! [pv]
//! port = <u16>                          # section optional; PV server off without it
//!
//! [channel.N]                           # one section per channel, N = channel id 0..255
//! freq_hz = 1e6
//! amplitude_v = 0.5
//! phase_rad = 0.0
//! noise_sigma_v = 0.0
//! dc_offset_v = 0.0
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Values are
//! single tokens (no quoting).

use std::fmt;
use std::path::{Path, PathBuf};

use ship_core::demod::DemodConfig;
use ship_core::signal::{AdcConfig, ToneSpec};
use ship_core::CodecParams;

#[derive(Debug)]
pub enum ConfigError {
    /// Syntax or unknown-key failure, with the 1-based line number.
    Parse { line: usize, msg: String },
    /// A structurally valid file that breaks an invariant, named in msg.
    Validation { msg: String },
    Io(std::io::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, msg } => write!(f, "config line {}: {}", line, msg),
            ConfigError::Validation { msg } => write!(f, "config invalid: {}", msg),
            ConfigError::Io(e) => write!(f, "config io: {}", e),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        msg: msg.into(),
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Digitizer,
    Processor,
    Bench,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Digitizer => "digitizer",
            Role::Processor => "processor",
            Role::Bench => "bench",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub channel_id: u8,
    pub tone: ToneSpec,
}

/// Fully validated run description shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub role: Role,
    pub duration_s: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub adc: AdcConfig,
    pub codec: CodecParams,
    pub compression_enabled: bool,
    pub demod: DemodConfig,
    pub lanes: usize,
    pub endpoint: String,
    pub pv_port: Option<u16>,
    pub channels: Vec<ChannelConfig>,
}

impl RunConfig {
    /// The tone configured for `channel_id`, if declared.
    pub fn channel(&self, channel_id: u8) -> Option<&ChannelConfig> {
        self.channels.iter().find(|c| c.channel_id == channel_id)
    }
}

/// Raw (pre-validation) values accumulated by the parser.
struct Draft {
    role: Option<Role>,
    duration_s: f64,
    seed: u64,
    out_dir: Option<PathBuf>,
    sample_rate_hz: f64,
    full_scale_vpp: f64,
    block_size: usize,
    compression: bool,
    predictor_order: Option<u8>,
    k_max: u8,
    f_if_hz: f64,
    window_n: usize,
    lanes: usize,
    endpoint: String,
    pv_port: Option<u16>,
    channels: Vec<ChannelConfig>,
}

impl Default for Draft {
    fn default() -> Self {
        Draft {
            role: None,
            duration_s: 5.0,
            seed: 1,
            out_dir: None,
            sample_rate_hz: 10.0e6,
            full_scale_vpp: 1.9,
            block_size: 4000,
            compression: true,
            predictor_order: None,
            k_max: 30,
            f_if_hz: 1.0e6,
            window_n: 1000,
            lanes: 2,
            endpoint: String::from("127.0.0.1:7401"),
            pv_port: None,
            channels: Vec::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| parse_err(line, format!("invalid value {:?} for key {:?}", raw, key)))
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(
            line,
            format!("invalid value {:?} for key {:?} (expected true|false)", raw, key),
        )),
    }
}

/// What `[section]` the parser is currently inside.
enum Section {
    Top,
    Adc,
    Codec,
    Demod,
    Stream,
    Pv,
    Channel,
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut draft = Draft::default();
    let mut section = Section::Top;
    let mut seen_sections: Vec<String> = Vec::new();
    // Index into draft.channels while inside a [channel.N] section.
    let mut current_channel: Option<usize> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, "unterminated section header"))?
                .trim();
            if let Some(id_text) = name.strip_prefix("channel.") {
                let id: u8 = id_text.parse().map_err(|_| {
                    parse_err(lineno, format!("invalid channel id {:?}", id_text))
                })?;
                // Duplicate ids are possible to write; defer to validation
                // so the error names the broken invariant.
                draft.channels.push(ChannelConfig {
                    channel_id: id,
                    tone: ToneSpec::default(),
                });
                current_channel = Some(draft.channels.len() - 1);
                section = Section::Channel;
            } else {
                if seen_sections.iter().any(|s| s == name) {
                    return Err(parse_err(lineno, format!("duplicate section [{}]", name)));
                }
                seen_sections.push(name.to_string());
                current_channel = None;
                section = match name {
                    "adc" => Section::Adc,
                    "codec" => Section::Codec,
                    "demod" => Section::Demod,
                    "stream" => Section::Stream,
                    "pv" => Section::Pv,
                    _ => return Err(parse_err(lineno, format!("unknown section [{}]", name))),
                };
            }
            continue;
        }

        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(parse_err(lineno, format!("empty value for key {:?}", key)));
        }

        match section {
            Section::Top => match key {
                "role" => {
                    draft.role = Some(match value {
                        "digitizer" => Role::Digitizer,
                        "processor" => Role::Processor,
                        "bench" => Role::Bench,
                        _ => {
                            return Err(parse_err(
                                lineno,
                                format!(
                                    "invalid role {:?} (expected digitizer|processor|bench)",
                                    value
                                ),
                            ))
                        }
                    })
                }
                "duration_s" => draft.duration_s = parse_value(lineno, key, value)?,
                "seed" => draft.seed = parse_value(lineno, key, value)?,
                "out" => draft.out_dir = Some(PathBuf::from(value)),
                _ => return Err(parse_err(lineno, format!("unknown key {:?}", key))),
            },
            Section::Adc => match key {
                "sample_rate_hz" => draft.sample_rate_hz = parse_value(lineno, key, value)?,
                "full_scale_vpp" => draft.full_scale_vpp = parse_value(lineno, key, value)?,
                _ => return Err(parse_err(lineno, format!("unknown key {:?} in [adc]", key))),
            },
            Section::Codec => match key {
                "block_size" => draft.block_size = parse_value(lineno, key, value)?,
                "compression" => draft.compression = parse_bool(lineno, key, value)?,
                "predictor_order" => {
                    draft.predictor_order = if value == "none" {
                        None
                    } else {
                        Some(parse_value(lineno, key, value)?)
                    }
                }
                "k_max" => draft.k_max = parse_value(lineno, key, value)?,
                _ => return Err(parse_err(lineno, format!("unknown key {:?} in [codec]", key))),
            },
            Section::Demod => match key {
                "f_if_hz" => draft.f_if_hz = parse_value(lineno, key, value)?,
                "window_n" => draft.window_n = parse_value(lineno, key, value)?,
                _ => return Err(parse_err(lineno, format!("unknown key {:?} in [demod]", key))),
            },
            Section::Stream => match key {
                "lanes" => draft.lanes = parse_value(lineno, key, value)?,
                "endpoint" => draft.endpoint = value.to_string(),
                _ => {
                    return Err(parse_err(lineno, format!("unknown key {:?} in [stream]", key)))
                }
            },
            Section::Pv => match key {
                "port" => draft.pv_port = Some(parse_value(lineno, key, value)?),
                _ => return Err(parse_err(lineno, format!("unknown key {:?} in [pv]", key))),
            },
            Section::Channel => {
                let ch = &mut draft.channels[current_channel.expect("inside channel section")];
                match key {
                    "freq_hz" => ch.tone.freq_hz = parse_value(lineno, key, value)?,
                    "amplitude_v" => ch.tone.amplitude_v = parse_value(lineno, key, value)?,
                    "phase_rad" => ch.tone.phase_rad = parse_value(lineno, key, value)?,
                    "noise_sigma_v" => ch.tone.noise_sigma_v = parse_value(lineno, key, value)?,
                    "dc_offset_v" => ch.tone.dc_offset_v = parse_value(lineno, key, value)?,
                    _ => {
                        return Err(parse_err(
                            lineno,
                            format!("unknown key {:?} in [channel.*]", key),
                        ))
                    }
                }
            }
        }
    }

    validate(draft)
}

fn validate(draft: Draft) -> Result<RunConfig, ConfigError> {
    let role = draft.role.ok_or_else(|| invalid("role is required"))?;

    let adc = AdcConfig::new(draft.sample_rate_hz, draft.full_scale_vpp)
        .map_err(|e| invalid(format!("adc: {}", e)))?;

    let codec = CodecParams {
        block_size: draft.block_size,
        predictor_order: draft.predictor_order,
        k_max: draft.k_max,
    };
    if !codec.validate() {
        return Err(invalid(
            "codec: block_size must be >= 2, predictor_order <= 2, k_max <= 30",
        ));
    }

    let demod = DemodConfig::new(draft.f_if_hz, draft.sample_rate_hz, draft.window_n)
        .map_err(|e| invalid(format!("demod: {}", e)))?;

    if draft.lanes == 0 {
        return Err(invalid("stream: lanes must be >= 1"));
    }

    if draft.duration_s.is_nan() || draft.duration_s < 0.0 {
        return Err(invalid("duration_s must be >= 0"));
    }

    for (i, a) in draft.channels.iter().enumerate() {
        for b in &draft.channels[i + 1..] {
            if a.channel_id == b.channel_id {
                return Err(invalid(format!("duplicate channel_id {}", a.channel_id)));
            }
        }
        a.tone
            .validate_for(&adc)
            .map_err(|e| invalid(format!("channel.{}: {}", a.channel_id, e)))?;
    }

    if matches!(role, Role::Digitizer | Role::Bench) && draft.channels.is_empty() {
        return Err(invalid(format!("role {} requires at least one channel", role)));
    }

    Ok(RunConfig {
        role,
        duration_s: draft.duration_s,
        seed: draft.seed,
        out_dir: draft.out_dir,
        adc,
        codec,
        compression_enabled: draft.compression,
        demod,
        lanes: draft.lanes,
        endpoint: draft.endpoint,
        pv_port: draft.pv_port,
        channels: draft.channels,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config_str("role = bench\n[channel.0]\nfreq_hz = 1e6\n").unwrap();
        assert_eq!(cfg.role, Role::Bench);
        assert_eq!(cfg.duration_s, 5.0);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.adc.sample_rate_hz, 10.0e6);
        assert_eq!(cfg.adc.full_scale_vpp, 1.9);
        assert_eq!(cfg.codec.block_size, 4000);
        assert!(cfg.compression_enabled);
        assert_eq!(cfg.demod.window_n(), 1000);
        assert_eq!(cfg.lanes, 2);
        assert_eq!(cfg.endpoint, "127.0.0.1:7401");
        assert_eq!(cfg.pv_port, None);
        assert_eq!(cfg.channels.len(), 1);
        assert_eq!(cfg.channels[0].tone.freq_hz, 1.0e6);
    }

    #[test]
    fn full_config_roundtrips_every_key() {
        let text = "\
# full example
role = digitizer
duration_s = 2.5
seed = 99
out = results

[adc]
sample_rate_hz = 20e6
full_scale_vpp = 1.9

[codec]
block_size = 2000
compression = false
predictor_order = 2
k_max = 20

[demod]
f_if_hz = 2e6
window_n = 500

[stream]
lanes = 4
endpoint = 127.0.0.1:9000

[pv]
port = 7402

[channel.0]
freq_hz = 2e6
amplitude_v = 0.25
phase_rad = 0.5
noise_sigma_v = 0.001
dc_offset_v = 0.01

[channel.3]
freq_hz = 2e6
amplitude_v = 0.5
";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.role, Role::Digitizer);
        assert_eq!(cfg.duration_s, 2.5);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out_dir.as_deref(), Some(Path::new("results")));
        assert_eq!(cfg.adc.sample_rate_hz, 20.0e6);
        assert_eq!(cfg.codec.block_size, 2000);
        assert_eq!(cfg.codec.predictor_order, Some(2));
        assert_eq!(cfg.codec.k_max, 20);
        assert!(!cfg.compression_enabled);
        assert_eq!(cfg.demod.f_if_hz(), 2.0e6);
        assert_eq!(cfg.demod.window_n(), 500);
        assert_eq!(cfg.lanes, 4);
        assert_eq!(cfg.endpoint, "127.0.0.1:9000");
        assert_eq!(cfg.pv_port, Some(7402));
        assert_eq!(cfg.channels.len(), 2);
        assert_eq!(cfg.channels[1].channel_id, 3);
        assert_eq!(cfg.channels[0].tone.dc_offset_v, 0.01);
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line_number() {
        let text = "role = bench\n\n[adc]\nsample_rate_hz = 1e7\nbogus_key = 3\n";
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("bogus_key"), "{}", msg);
            }
            other => panic!("expected parse error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let cases = [
            ("role = bench\nnot a kv line\n", 2),
            ("[adc\nsample_rate_hz = 1\n", 1),
            ("role = bench\nduration_s = abc\n", 2),
            ("[unknown_section]\n", 1),
            ("role = bench\nrole =\n", 2),
        ];
        for (text, want_line) in cases {
            match parse_config_str(text) {
                Err(ConfigError::Parse { line, .. }) => assert_eq!(line, want_line, "{:?}", text),
                other => panic!("expected parse error for {:?}, got {:?}", text, other.is_ok()),
            }
        }
    }

    #[test]
    fn duplicate_channel_id_is_a_validation_error() {
        let text = "role = bench\n[channel.1]\nfreq_hz = 1e6\n[channel.1]\nfreq_hz = 2e6\n";
        match parse_config_str(text) {
            Err(ConfigError::Validation { msg }) => {
                assert!(msg.contains("duplicate channel_id 1"), "{}", msg)
            }
            other => panic!("expected validation error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn non_integer_period_window_is_a_validation_error() {
        let text = "role = bench\n[demod]\nf_if_hz = 1.0001e6\nwindow_n = 1000\n[channel.0]\nfreq_hz = 1e6\n";
        match parse_config_str(text) {
            Err(ConfigError::Validation { msg }) => {
                assert!(msg.contains("demod"), "{}", msg)
            }
            other => panic!("expected validation error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn digitizer_without_channels_is_rejected() {
        match parse_config_str("role = digitizer\n") {
            Err(ConfigError::Validation { msg }) => {
                assert!(msg.contains("at least one channel"), "{}", msg)
            }
            other => panic!("expected validation error, got {:?}", other.is_ok()),
        }
        // A processor consumes whatever arrives; channels are optional.
        assert!(parse_config_str("role = processor\n").is_ok());
    }

    #[test]
    fn overdriven_tone_is_rejected_at_load() {
        let text = "role = bench\n[channel.0]\nfreq_hz = 6e6\n";
        match parse_config_str(text) {
            Err(ConfigError::Validation { msg }) => {
                assert!(msg.contains("channel.0"), "{}", msg)
            }
            other => panic!("expected validation error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn file_and_string_parsers_agree() {
        let text = "role = bench\n[channel.0]\nfreq_hz = 1e6\namplitude_v = 0.5\n";
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, text).unwrap();
        assert_eq!(parse_config(&path).unwrap(), parse_config_str(text).unwrap());
    }
}
