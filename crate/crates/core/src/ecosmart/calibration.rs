use serde::{Deserialize, Serialize};

use super::{EcoError, SensorSample, ADC_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    TempHumidity,
    Light,
    AirQuality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    /// 12-bit ADC count from an analog channel.
    Adc(i64),
    /// Already decoded by the digital temperature/humidity sensor.
    TempHumidity { temp_c: f64, humidity_pct: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub channel: Channel,
    pub raw: RawValue,
    pub timestamp: u64,
}

/// Monotone piecewise-linear map from ADC counts to a physical unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveSpec", into = "CurveSpec")]
pub struct CalibrationCurve {
    points: Vec<(i64, f64)>,
    unit: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveSpec {
    unit: String,
    points: Vec<(i64, f64)>,
}

impl TryFrom<CurveSpec> for CalibrationCurve {
    type Error = EcoError;
    fn try_from(s: CurveSpec) -> Result<Self, Self::Error> {
        CalibrationCurve::new(s.points, &s.unit)
    }
}

impl From<CalibrationCurve> for CurveSpec {
    fn from(c: CalibrationCurve) -> Self {
        CurveSpec { unit: c.unit, points: c.points }
    }
}

impl CalibrationCurve {
    /// Control points must number at least two, have strictly increasing raw
    /// values and non-decreasing outputs, and span exactly `[0, 4095]`.
    pub fn new(points: Vec<(i64, f64)>, unit: &str) -> Result<Self, EcoError> {
        let bad = |m: &str| Err(EcoError::InvalidCurve(m.to_string()));
        if points.len() < 2 {
            return bad("at least two control points required");
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("raw values must be strictly increasing");
        }
        if points.iter().any(|p| !p.1.is_finite()) {
            return bad("values must be finite");
        }
        if points.windows(2).any(|w| w[1].1 < w[0].1) {
            return bad("values must be non-decreasing");
        }
        if points[0].0 != 0 || points[points.len() - 1].0 != ADC_MAX {
            return bad("control points must span raw 0..=4095");
        }
        Ok(Self { points, unit: unit.to_string() })
    }

    /// Straight line from `(0, 0)` to `(4095, full_scale)`.
    pub fn linear(full_scale: f64, unit: &str) -> Result<Self, EcoError> {
        Self::new(vec![(0, 0.0), (ADC_MAX, full_scale)], unit)
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn points(&self) -> &[(i64, f64)] {
        &self.points
    }

    /// Interpolates between the bracketing control points; exact at each point.
    pub fn apply(&self, raw: i64) -> Result<f64, EcoError> {
        let (first, last) = (self.points[0], self.points[self.points.len() - 1]);
        if raw < first.0 || raw > last.0 {
            return Err(EcoError::OutOfDomain { raw, min: first.0, max: last.0 });
        }
        let i = self.points.partition_point(|p| p.0 <= raw);
        let (x0, y0) = self.points[i - 1];
        if x0 == raw || i == self.points.len() {
            return Ok(y0);
        }
        let (x1, y1) = self.points[i];
        let frac = (raw - x0) as f64 / (x1 - x0) as f64;
        // Clamp so rounding never steps outside the segment.
        Ok((y0 + frac * (y1 - y0)).clamp(y0, y1))
    }

    /// Default light curve for an LDR divider wired so brighter means higher counts.
    pub fn default_lux() -> Self {
        Self::new(
            vec![(0, 0.0), (1024, 200.0), (2048, 500.0), (3072, 1500.0), (4095, 10_000.0)],
            "lux",
        )
        .expect("static curve")
    }

    /// Default gas-sensor curve in ppm.
    pub fn default_air() -> Self {
        Self::new(
            vec![(0, 0.0), (1024, 300.0), (2048, 600.0), (3072, 1200.0), (4095, 5_000.0)],
            "ppm",
        )
        .expect("static curve")
    }
}

pub fn calibrate(channel: Channel, raw: i64, curve: &CalibrationCurve) -> Result<f64, EcoError> {
    match channel {
        Channel::TempHumidity => Err(EcoError::DigitalChannel(channel)),
        Channel::Light | Channel::AirQuality => curve.apply(raw),
    }
}

/// The pair of analog curves a room uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lux: CalibrationCurve,
    pub air: CalibrationCurve,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { lux: CalibrationCurve::default_lux(), air: CalibrationCurve::default_air() }
    }
}

impl Calibration {
    pub fn sample(
        &self,
        timestamp: u64,
        temp_c: f64,
        humidity_pct: f64,
        lux_raw: i64,
        air_raw: i64,
    ) -> Result<SensorSample, EcoError> {
        Ok(SensorSample {
            timestamp,
            temp_c,
            humidity_pct,
            lux: calibrate(Channel::Light, lux_raw, &self.lux)?,
            air_ppm: calibrate(Channel::AirQuality, air_raw, &self.air)?,
        })
    }
}
