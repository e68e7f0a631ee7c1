use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EcoError, Reading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandDirection {
    /// Actuator turns on when the metric rises to `on_threshold`.
    RisingActivates,
    /// Actuator turns on when the metric falls to `on_threshold`.
    FallingActivates,
}

/// Separate on and off thresholds with a nonzero deadband between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisBand {
    on_threshold: f64,
    off_threshold: f64,
    direction: BandDirection,
}

impl HysteresisBand {
    pub fn new(on_threshold: f64, off_threshold: f64, direction: BandDirection) -> Result<Self, EcoError> {
        if !on_threshold.is_finite() || !off_threshold.is_finite() {
            return Err(EcoError::InvalidBand("thresholds must be finite".into()));
        }
        let ok = match direction {
            BandDirection::RisingActivates => off_threshold < on_threshold,
            BandDirection::FallingActivates => off_threshold > on_threshold,
        };
        if !ok {
            return Err(EcoError::InvalidBand(format!(
                "{direction:?} needs off {} on {on_threshold}",
                match direction {
                    BandDirection::RisingActivates => format!("{off_threshold} <"),
                    BandDirection::FallingActivates => format!("{off_threshold} >"),
                }
            )));
        }
        Ok(Self { on_threshold, off_threshold, direction })
    }

    pub fn rising(on: f64, off: f64) -> Result<Self, EcoError> {
        Self::new(on, off, BandDirection::RisingActivates)
    }

    pub fn falling(on: f64, off: f64) -> Result<Self, EcoError> {
        Self::new(on, off, BandDirection::FallingActivates)
    }

    pub fn on_threshold(&self) -> f64 {
        self.on_threshold
    }

    pub fn off_threshold(&self) -> f64 {
        self.off_threshold
    }

    pub fn direction(&self) -> BandDirection {
        self.direction
    }

    pub fn reaches_on(&self, metric: f64) -> bool {
        match self.direction {
            BandDirection::RisingActivates => metric >= self.on_threshold,
            BandDirection::FallingActivates => metric <= self.on_threshold,
        }
    }

    pub fn reaches_off(&self, metric: f64) -> bool {
        match self.direction {
            BandDirection::RisingActivates => metric <= self.off_threshold,
            BandDirection::FallingActivates => metric >= self.off_threshold,
        }
    }

    /// Strictly between the two thresholds.
    pub fn in_deadband(&self, metric: f64) -> bool {
        !self.reaches_on(metric) && !self.reaches_off(metric)
    }

    /// Whether the band wants its actuator on, given whether it is on now.
    pub fn demand(&self, metric: f64, currently_on: bool) -> bool {
        if self.reaches_on(metric) {
            true
        } else if self.reaches_off(metric) {
            false
        } else {
            currently_on
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Switch {
    On,
    #[default]
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }

    fn from_bool(on: bool) -> Self {
        if on {
            Switch::On
        } else {
            Switch::Off
        }
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Switch::On => "on",
            Switch::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actuator {
    Hvac,
    Lighting,
    Ventilation,
}

impl Actuator {
    pub const ALL: [Actuator; 3] = [Actuator::Hvac, Actuator::Lighting, Actuator::Ventilation];

    pub fn name(self) -> &'static str {
        match self {
            Actuator::Hvac => "hvac",
            Actuator::Lighting => "lighting",
            Actuator::Ventilation => "ventilation",
        }
    }
}

impl std::str::FromStr for Actuator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Actuator::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown actuator {s:?}"))
    }
}

impl fmt::Display for Actuator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActuatorState {
    pub hvac_cooling: Switch,
    pub lighting: Switch,
    pub ventilation: Switch,
}

impl ActuatorState {
    pub fn get(&self, a: Actuator) -> Switch {
        match a {
            Actuator::Hvac => self.hvac_cooling,
            Actuator::Lighting => self.lighting,
            Actuator::Ventilation => self.ventilation,
        }
    }

    pub fn set(&mut self, a: Actuator, s: Switch) {
        match a {
            Actuator::Hvac => self.hvac_cooling = s,
            Actuator::Lighting => self.lighting = s,
            Actuator::Ventilation => self.ventilation = s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub actuator: Actuator,
    pub state: Switch,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub hvac_band: HysteresisBand,
    pub lighting_band: HysteresisBand,
    pub ventilation_band: HysteresisBand,
    /// Lets high humidity also demand ventilation.
    pub humidity_vent_band: Option<HysteresisBand>,
    pub poll_period_ms: u64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            hvac_band: HysteresisBand::rising(26.0, 24.0).expect("static band"),
            lighting_band: HysteresisBand::falling(300.0, 400.0).expect("static band"),
            ventilation_band: HysteresisBand::rising(600.0, 400.0).expect("static band"),
            humidity_vent_band: Some(HysteresisBand::rising(70.0, 60.0).expect("static band")),
            poll_period_ms: 1000,
        }
    }
}

/// One control tick. Each actuator follows its band; ventilation is on while
/// the air-quality band or the (optional) humidity band demands it. Commands
/// list only actuators whose state changed.
pub fn control_step(
    reading: &Reading,
    prev: &ActuatorState,
    config: &ControlConfig,
) -> (ActuatorState, Vec<ActuatorCommand>) {
    let mut next = *prev;
    let mut commands = Vec::new();

    let hvac_on = config.hvac_band.demand(reading.temp_c, prev.hvac_cooling.is_on());
    let light_on = config.lighting_band.demand(reading.lux, prev.lighting.is_on());
    let air_on = config.ventilation_band.demand(reading.air_ppm, prev.ventilation.is_on());
    let humid_on = config
        .humidity_vent_band
        .map(|b| b.demand(reading.humidity_pct, prev.ventilation.is_on()))
        .unwrap_or(false);

    let mut apply = |actuator: Actuator, on: bool, cause: String| {
        let s = Switch::from_bool(on);
        if prev.get(actuator) != s {
            next.set(actuator, s);
            commands.push(ActuatorCommand { actuator, state: s, cause });
        }
    };

    let hvac = &config.hvac_band;
    apply(
        Actuator::Hvac,
        hvac_on,
        if hvac_on {
            format!("temperature {:.1} C at or above {:.1} C", reading.temp_c, hvac.on_threshold)
        } else {
            format!("temperature {:.1} C at or below {:.1} C", reading.temp_c, hvac.off_threshold)
        },
    );

    let light = &config.lighting_band;
    apply(
        Actuator::Lighting,
        light_on,
        if light_on {
            format!("light {:.0} lux at or below {:.0} lux", reading.lux, light.on_threshold)
        } else {
            format!("light {:.0} lux at or above {:.0} lux", reading.lux, light.off_threshold)
        },
    );

    let air = &config.ventilation_band;
    let vent_cause = if air_on {
        format!("air quality {:.0} ppm at or above {:.0} ppm", reading.air_ppm, air.on_threshold)
    } else if humid_on {
        let h = config.humidity_vent_band.expect("demand implies band");
        format!("humidity {:.1} % at or above {:.1} %", reading.humidity_pct, h.on_threshold)
    } else {
        format!("air quality {:.0} ppm and humidity {:.1} % settled", reading.air_ppm, reading.humidity_pct)
    };
    apply(Actuator::Ventilation, air_on || humid_on, vent_cause);

    (next, commands)
}
