use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::attendance::{FraudRules, Millis, DEFAULT_PAIRING_WINDOW_MS};
use crate::device::NodeParams;
use crate::ecosmart::{Calibration, CalibrationCurve, ControlConfig, HysteresisBand};
use crate::generator::{RemoteGenerator, TextGenerator, DEFAULT_TIMEOUT_MS};
use crate::quizgen::{DEFAULT_NUM_QUESTIONS, MAX_NUM_QUESTIONS};
use crate::retrieval::{SplitterParams, DEFAULT_K, EMBEDDING_DIM};

/// Environment variable consulted for the generator endpoint when the config
/// file leaves it out.
pub const GENERATOR_URL_ENV: &str = "SMARTCLASS_GENERATOR_URL";
/// Default environment variable holding the generator API key.
pub const GENERATOR_KEY_ENV: &str = "SMARTCLASS_GENERATOR_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttendanceConfig {
    pub pairing_window_ms: Millis,
    pub fraud_rules: FraudRules,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub splitter: SplitterParams,
    pub dims: usize,
    pub default_k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorMode {
    Stub,
    Remote { endpoint: String, api_key_env: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub id: String,
    pub timeout_ms: u64,
}

impl GeneratorConfig {
    /// The configured remote generator, if any. The API key is read from the
    /// environment at this point and never stored in the config.
    pub fn remote(&self) -> Option<Arc<dyn TextGenerator>> {
        match &self.mode {
            GeneratorMode::Stub => None,
            GeneratorMode::Remote { endpoint, api_key_env } => Some(Arc::new(RemoteGenerator::new(
                &self.id,
                endpoint,
                std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
                Duration::from_millis(self.timeout_ms),
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub http_addr: String,
    pub device_addr: String,
    /// Bearer token for administrative routes. Without one they are open.
    pub admin_token: Option<String>,
    /// Event log file. Without one the log lives in memory only.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformConfig {
    pub attendance: AttendanceConfig,
    pub control: ControlConfig,
    pub calibration: Calibration,
    pub retrieval: RetrievalConfig,
    pub default_questions: usize,
    pub generator: GeneratorConfig,
    pub device: NodeParams,
    pub server: ServerConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        let control = ControlConfig::default();
        Self {
            attendance: AttendanceConfig {
                pairing_window_ms: DEFAULT_PAIRING_WINDOW_MS,
                fraud_rules: FraudRules::default(),
            },
            device: NodeParams { poll_period_ms: control.poll_period_ms, ..NodeParams::default() },
            control,
            calibration: Calibration::default(),
            retrieval: RetrievalConfig { splitter: SplitterParams::default(), dims: EMBEDDING_DIM, default_k: DEFAULT_K },
            default_questions: DEFAULT_NUM_QUESTIONS,
            generator: GeneratorConfig {
                mode: GeneratorMode::Stub,
                id: "remote".into(),
                timeout_ms: DEFAULT_TIMEOUT_MS,
            },
            server: ServerConfig {
                http_addr: "127.0.0.1:8080".into(),
                device_addr: "127.0.0.1:7070".into(),
                admin_token: None,
                log_path: None,
            },
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct Raw {
    attendance: Option<RawAttendance>,
    ecosmart: Option<RawEco>,
    retrieval: Option<RawRetrieval>,
    quiz: Option<RawQuiz>,
    generator: Option<RawGenerator>,
    device: Option<RawDevice>,
    server: Option<RawServer>,
}

#[derive(Debug, Default, Deserialize)]
struct RawAttendance {
    pairing_window_ms: Option<Millis>,
    fraud_rules: Option<RawFraud>,
}

#[derive(Debug, Default, Deserialize)]
struct RawFraud {
    proxy_scan: Option<bool>,
    duplicate_tag: Option<bool>,
    shared_device: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
struct RawBand {
    on: Option<f64>,
    off: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawCurve {
    unit: Option<String>,
    points: Vec<(i64, f64)>,
}

#[derive(Debug, Default, Deserialize)]
struct RawEco {
    poll_period_ms: Option<u64>,
    humidity_enabled: Option<bool>,
    hvac: Option<RawBand>,
    lighting: Option<RawBand>,
    ventilation: Option<RawBand>,
    humidity: Option<RawBand>,
    lux_curve: Option<RawCurve>,
    air_curve: Option<RawCurve>,
}

#[derive(Debug, Default, Deserialize)]
struct RawRetrieval {
    chunk_size: Option<usize>,
    overlap: Option<usize>,
    dims: Option<usize>,
    default_k: Option<usize>,
    separators: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawQuiz {
    default_questions: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawGenerator {
    mode: Option<String>,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    timeout_ms: Option<u64>,
    id: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct RawDevice {
    sample_period_ms: Option<Millis>,
    stable_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawServer {
    http_addr: Option<String>,
    device_addr: Option<String>,
    admin_token: Option<String>,
    log_path: Option<PathBuf>,
}

fn band(
    name: &str,
    raw: Option<RawBand>,
    default: HysteresisBand,
    errors: &mut Vec<String>,
) -> HysteresisBand {
    let raw = raw.unwrap_or_default();
    let on = raw.on.unwrap_or(default.on_threshold());
    let off = raw.off.unwrap_or(default.off_threshold());
    HysteresisBand::new(on, off, default.direction()).unwrap_or_else(|e| {
        errors.push(format!("ecosmart.{name}: {e}"));
        default
    })
}

fn curve(name: &str, raw: Option<RawCurve>, default: CalibrationCurve, errors: &mut Vec<String>) -> CalibrationCurve {
    let Some(raw) = raw else { return default };
    let unit = raw.unit.unwrap_or_else(|| default.unit().to_string());
    CalibrationCurve::new(raw.points, &unit).unwrap_or_else(|e| {
        errors.push(format!("ecosmart.{name}: {e}"));
        default
    })
}

/// Dotted key path, without the markers serde_ignored adds for options.
fn key_path(path: &serde_ignored::Path) -> String {
    use serde_ignored::Path;
    match path {
        Path::Root => String::new(),
        Path::Some { parent } | Path::NewtypeStruct { parent } | Path::NewtypeVariant { parent } => key_path(parent),
        Path::Seq { parent, index } => format!("{}[{index}]", key_path(parent)),
        Path::Map { parent, key } => match key_path(parent) {
            p if p.is_empty() => key.clone(),
            p => format!("{p}.{key}"),
        },
    }
}

impl PlatformConfig {
    /// Parses a TOML config. Omitted fields take their defaults; every
    /// violation, including unknown keys, is reported together.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut errors = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        let raw: Raw = serde_ignored::deserialize(de, |path| errors.push(format!("unknown key {}", key_path(&path))))
            .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        let d = PlatformConfig::default();

        let att = raw.attendance.unwrap_or_default();
        let fraud = att.fraud_rules.unwrap_or_default();
        let attendance = AttendanceConfig {
            pairing_window_ms: att.pairing_window_ms.unwrap_or(d.attendance.pairing_window_ms),
            fraud_rules: FraudRules {
                proxy_scan: fraud.proxy_scan.unwrap_or(true),
                duplicate_tag: fraud.duplicate_tag.unwrap_or(true),
                shared_device: fraud.shared_device.unwrap_or(true),
            },
        };
        if attendance.pairing_window_ms == 0 {
            errors.push("attendance.pairing_window_ms: must be positive".into());
        }

        let eco = raw.ecosmart.unwrap_or_default();
        let dc = &d.control;
        let humidity_band = band("humidity", eco.humidity, dc.humidity_vent_band.expect("default band"), &mut errors);
        let control = ControlConfig {
            hvac_band: band("hvac", eco.hvac, dc.hvac_band, &mut errors),
            lighting_band: band("lighting", eco.lighting, dc.lighting_band, &mut errors),
            ventilation_band: band("ventilation", eco.ventilation, dc.ventilation_band, &mut errors),
            humidity_vent_band: eco.humidity_enabled.unwrap_or(true).then_some(humidity_band),
            poll_period_ms: eco.poll_period_ms.unwrap_or(dc.poll_period_ms),
        };
        if control.poll_period_ms == 0 {
            errors.push("ecosmart.poll_period_ms: must be positive".into());
        }
        let calibration = Calibration {
            lux: curve("lux_curve", eco.lux_curve, d.calibration.lux.clone(), &mut errors),
            air: curve("air_curve", eco.air_curve, d.calibration.air.clone(), &mut errors),
        };

        let ret = raw.retrieval.unwrap_or_default();
        let splitter = SplitterParams::new(
            ret.chunk_size.unwrap_or(d.retrieval.splitter.chunk_size()),
            ret.overlap.unwrap_or(d.retrieval.splitter.overlap()),
            ret.separators.unwrap_or_else(SplitterParams::default_separators),
        )
        .unwrap_or_else(|e| {
            errors.push(format!("retrieval: {e}"));
            SplitterParams::default()
        });
        let retrieval = RetrievalConfig {
            splitter,
            dims: ret.dims.unwrap_or(d.retrieval.dims),
            default_k: ret.default_k.unwrap_or(d.retrieval.default_k),
        };
        if retrieval.dims == 0 {
            errors.push("retrieval.dims: must be positive".into());
        }
        if retrieval.default_k == 0 {
            errors.push("retrieval.default_k: must be positive".into());
        }

        let default_questions = raw.quiz.unwrap_or_default().default_questions.unwrap_or(d.default_questions);
        if !(1..=MAX_NUM_QUESTIONS).contains(&default_questions) {
            errors.push(format!("quiz.default_questions: must be between 1 and {MAX_NUM_QUESTIONS}"));
        }

        let gen = raw.generator.unwrap_or_default();
        let mode = match gen.mode.as_deref().unwrap_or("stub") {
            "stub" => GeneratorMode::Stub,
            "remote" => {
                let endpoint = gen.endpoint.or_else(|| std::env::var(GENERATOR_URL_ENV).ok()).unwrap_or_default();
                if endpoint.trim().is_empty() {
                    errors.push(format!("generator.endpoint: required in remote mode (or set {GENERATOR_URL_ENV})"));
                }
                GeneratorMode::Remote {
                    endpoint,
                    api_key_env: gen.api_key_env.unwrap_or_else(|| GENERATOR_KEY_ENV.into()),
                }
            }
            other => {
                errors.push(format!("generator.mode: expected \"stub\" or \"remote\", got {other:?}"));
                GeneratorMode::Stub
            }
        };
        let generator = GeneratorConfig {
            mode,
            id: gen.id.unwrap_or(d.generator.id),
            timeout_ms: gen.timeout_ms.unwrap_or(d.generator.timeout_ms),
        };
        if generator.timeout_ms == 0 {
            errors.push("generator.timeout_ms: must be positive".into());
        }

        let dev = raw.device.unwrap_or_default();
        let device = NodeParams {
            sample_period_ms: dev.sample_period_ms.unwrap_or(d.device.sample_period_ms),
            stable_samples: dev.stable_samples.unwrap_or(d.device.stable_samples),
            poll_period_ms: control.poll_period_ms,
        };
        if device.sample_period_ms == 0 {
            errors.push("device.sample_period_ms: must be positive".into());
        }
        if device.stable_samples == 0 {
            errors.push("device.stable_samples: must be positive".into());
        }

        let srv = raw.server.unwrap_or_default();
        let server = ServerConfig {
            http_addr: srv.http_addr.unwrap_or(d.server.http_addr),
            device_addr: srv.device_addr.unwrap_or(d.server.device_addr),
            admin_token: srv.admin_token.filter(|t| !t.is_empty()),
            log_path: srv.log_path,
        };

        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        Ok(Self { attendance, control, calibration, retrieval, default_questions, generator, device, server })
    }
}

/// Reads and validates a TOML config file.
pub fn load_config(path: &Path) -> Result<PlatformConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    PlatformConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match PlatformConfig::from_toml_str(text) {
            Err(ConfigError::Invalid(list)) => list,
            other => panic!("expected invalid config, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = PlatformConfig::from_toml_str("").unwrap();
        assert_eq!(c.attendance.pairing_window_ms, 300_000);
        assert_eq!(c.retrieval.default_k, 4);
        assert_eq!(c.default_questions, 5);
        assert_eq!(c, PlatformConfig::default());
    }

    #[test]
    fn inverted_band_is_named() {
        let e = errors("[ecosmart.hvac]\non = 24.0\noff = 26.0\n");
        assert_eq!(e.len(), 1);
        assert!(e[0].starts_with("ecosmart.hvac"), "{e:?}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = errors("foo = 1\n");
        assert_eq!(e, vec!["unknown key foo".to_string()]);
        let e = errors("[retrieval]\nchunk = 3\n");
        assert_eq!(e, vec!["unknown key retrieval.chunk".to_string()]);
    }

    #[test]
    fn every_violation_is_listed() {
        let e = errors(
            "bar = true\n[ecosmart.lighting]\non = 500.0\noff = 400.0\n[retrieval]\nchunk_size = 10\noverlap = 10\n\
             [quiz]\ndefault_questions = 0\n[generator]\nmode = \"cloud\"\n",
        );
        assert_eq!(e.len(), 5, "{e:?}");
    }

    #[test]
    fn overrides_apply() {
        let c = PlatformConfig::from_toml_str(
            "[attendance]\npairing_window_ms = 60000\n[attendance.fraud_rules]\nproxy_scan = false\n\
             [ecosmart]\nhumidity_enabled = false\n[ecosmart.lux_curve]\npoints = [[0, 0.0], [4095, 1000.0]]\n\
             [device]\nstable_samples = 3\n[server]\nadmin_token = \"s3cret\"\n",
        )
        .unwrap();
        assert_eq!(c.attendance.pairing_window_ms, 60_000);
        assert!(!c.attendance.fraud_rules.proxy_scan);
        assert!(c.attendance.fraud_rules.duplicate_tag);
        assert!(c.control.humidity_vent_band.is_none());
        assert_eq!(c.calibration.lux.apply(4095).unwrap(), 1000.0);
        assert_eq!(c.device.stable_samples, 3);
        assert_eq!(c.server.admin_token.as_deref(), Some("s3cret"));
    }

    #[test]
    fn remote_mode_needs_endpoint() {
        let c = PlatformConfig::from_toml_str("[generator]\nmode = \"remote\"\nendpoint = \"http://127.0.0.1:9/gen\"\n")
            .unwrap();
        assert!(c.generator.remote().is_some());
        assert!(PlatformConfig::default().generator.remote().is_none());
    }
}
