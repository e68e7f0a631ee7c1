//! The integration hub: configuration, the append-only event log, the
//! platform state it folds into, the HTTP-style API, the device gateway and
//! the scripted scenario runner.

mod api;
mod config;
mod events;
mod gateway;
mod log;
mod platform;
mod scenario;

pub use api::{handle, ApiRequest, ApiResponse};
pub use config::{
    load_config, AttendanceConfig, ConfigError, GeneratorConfig, GeneratorMode, PlatformConfig, RetrievalConfig,
    ServerConfig, GENERATOR_KEY_ENV, GENERATOR_URL_ENV,
};
pub use events::{Applied, Category, NodeInfo, PlatformEvent, PlatformState, RoomEnvironment, SessionEntry, StateDigest};
pub use gateway::DeviceGateway;
pub use log::{encode_record, parse_log, read_log, EventLog, EventLogRecord, LogError, LOG_HEADER};
pub use platform::{replay, OpenSessionRequest, Platform, PlatformError, SampleOutcome};
pub use scenario::{run_scenario, NodeOutcome, Outcome, ScenarioError, ScenarioFile, ScenarioReport};
