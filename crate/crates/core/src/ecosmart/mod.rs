//! Classroom environment control.
//!
//! Raw sensor values are calibrated into physical units, range-checked into a
//! [`Reading`], and fed through [`control_step`], which drives HVAC cooling,
//! lighting and ventilation through hysteresis bands. [`run_scenario`] folds
//! the step over a whole trace for validation sweeps.

mod calibration;
mod control;
mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{calibrate, Calibration, CalibrationCurve, Channel, RawSample, RawValue};
pub use control::{
    control_step, Actuator, ActuatorCommand, ActuatorState, BandDirection, ControlConfig,
    HysteresisBand, Switch,
};
pub use scenario::{
    read_trace, run_scenario, write_command_log, CommandLogEntry, ScenarioOutcome, ToggleCounts,
    TraceRecord,
};

/// Largest value a 12-bit ADC reports.
pub const ADC_MAX: i64 = 4095;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcoError {
    #[error("raw value {raw} outside calibration domain [{min}, {max}]")]
    OutOfDomain { raw: i64, min: i64, max: i64 },
    #[error("invalid calibration curve: {0}")]
    InvalidCurve(String),
    #[error("channel {0:?} is digital and has no calibration curve")]
    DigitalChannel(Channel),
    #[error("invalid hysteresis band: {0}")]
    InvalidBand(String),
    #[error("{field} out of range: {value}")]
    RangeViolation { field: &'static str, value: f64 },
    #[error("trace record {index}: {source}")]
    Trace {
        index: usize,
        #[source]
        source: Box<EcoError>,
    },
    #[error("trace record {index}: timestamp goes backwards")]
    NonMonotonicTime { index: usize },
    #[error("scenario trace is empty")]
    EmptyTrace,
    #[error("trace file: {0}")]
    TraceFormat(String),
}

/// A sample set with physical units, not yet range-checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub timestamp: u64,
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub lux: f64,
    pub air_ppm: f64,
}

/// A range-checked reading. Only [`validate_reading`] builds one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub timestamp: u64,
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub lux: f64,
    pub air_ppm: f64,
}

/// Checks every field against its physical range; the error names the first
/// violated field. NaN is always a violation.
pub fn validate_reading(sample: SensorSample) -> Result<Reading, EcoError> {
    let checks: [(&'static str, f64, f64, f64); 4] = [
        ("temp_c", sample.temp_c, -40.0, 80.0),
        ("humidity_pct", sample.humidity_pct, 0.0, 100.0),
        ("lux", sample.lux, 0.0, f64::INFINITY),
        ("air_ppm", sample.air_ppm, 0.0, f64::INFINITY),
    ];
    for (field, value, lo, hi) in checks {
        if !(lo..=hi).contains(&value) || !value.is_finite() {
            return Err(EcoError::RangeViolation { field, value });
        }
    }
    Ok(Reading {
        timestamp: sample.timestamp,
        temp_c: sample.temp_c,
        humidity_pct: sample.humidity_pct,
        lux: sample.lux,
        air_ppm: sample.air_ppm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(temp_c: f64, humidity_pct: f64, lux: f64, air_ppm: f64) -> SensorSample {
        SensorSample { timestamp: 0, temp_c, humidity_pct, lux, air_ppm }
    }

    #[test]
    fn valid_reading() {
        let r = validate_reading(sample(22.5, 45.0, 500.0, 200.0)).unwrap();
        assert_eq!(r.temp_c, 22.5);
    }

    #[test]
    fn humidity_out_of_range() {
        match validate_reading(sample(22.5, 120.0, 500.0, 200.0)) {
            Err(EcoError::RangeViolation { field, .. }) => assert_eq!(field, "humidity_pct"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_interval_boundaries() {
        assert!(validate_reading(sample(-40.0, 0.0, 0.0, 0.0)).is_ok());
        assert!(validate_reading(sample(80.0, 100.0, 0.0, 0.0)).is_ok());
        assert!(validate_reading(sample(-40.01, 0.0, 0.0, 0.0)).is_err());
        assert!(validate_reading(sample(20.0, 50.0, -1.0, 0.0)).is_err());
        assert!(validate_reading(sample(f64::NAN, 50.0, 1.0, 0.0)).is_err());
        assert!(validate_reading(sample(20.0, 50.0, 1.0, f64::INFINITY)).is_err());
    }
}
