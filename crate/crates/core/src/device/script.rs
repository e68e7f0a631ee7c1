use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attendance::Millis;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorField {
    TempC,
    HumidityPct,
    LuxRaw,
    AirRaw,
}

impl FromStr for SensorField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "temp_c" => SensorField::TempC,
            "humidity_pct" => SensorField::HumidityPct,
            "lux_raw" => SensorField::LuxRaw,
            "air_raw" => SensorField::AirRaw,
            _ => return Err(format!("unknown sensor field {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// Pushbutton press standing in for an RFID read of `tag_uid`. The
    /// contact chatters for `bounces` cycles on press and on release.
    Press { tag_uid: String, hold_ms: Millis, bounces: u32 },
    /// A short spurious high level on the button line.
    Glitch { duration_ms: Millis },
    /// Direct RFID read, bypassing the button path.
    Scan { tag_uid: String },
    Wifi { mac: String, network_id: String },
    /// Sets every sensor value at once.
    Sensors { temp_c: f64, humidity_pct: f64, lux_raw: i64, air_raw: i64 },
    /// Moves one sensor linearly from its current value to `to`.
    Ramp { field: SensorField, to: f64, duration_ms: Millis },
    /// Last instant of the run; sensor reporting stops here.
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptAction {
    pub at: Millis,
    pub action: Action,
}

/// A node's scripted timeline in virtual time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub actions: Vec<ScriptAction>,
}

fn arg<T: FromStr>(parts: &[&str], i: usize, what: &str) -> Result<T, String> {
    let raw = parts.get(i).ok_or_else(|| format!("missing {what}"))?;
    raw.parse().map_err(|_| format!("invalid {what} {raw:?}"))
}

fn parse_action(parts: &[&str]) -> Result<Action, String> {
    let arity = |n: usize| {
        if parts.len() > n {
            Err(format!("too many arguments for {}", parts[0]))
        } else {
            Ok(())
        }
    };
    let action = match parts[0] {
        "press" => {
            arity(4)?;
            Action::Press {
                tag_uid: arg(parts, 1, "tag")?,
                hold_ms: arg(parts, 2, "hold time")?,
                bounces: if parts.len() > 3 { arg(parts, 3, "bounce count")? } else { 0 },
            }
        }
        "glitch" => {
            arity(2)?;
            Action::Glitch { duration_ms: arg(parts, 1, "duration")? }
        }
        "scan" => {
            arity(2)?;
            Action::Scan { tag_uid: arg(parts, 1, "tag")? }
        }
        "wifi" => {
            arity(3)?;
            Action::Wifi { mac: arg(parts, 1, "mac")?, network_id: arg(parts, 2, "network")? }
        }
        "sensors" => {
            arity(5)?;
            Action::Sensors {
                temp_c: arg(parts, 1, "temperature")?,
                humidity_pct: arg(parts, 2, "humidity")?,
                lux_raw: arg(parts, 3, "light count")?,
                air_raw: arg(parts, 4, "air count")?,
            }
        }
        "ramp" => {
            arity(4)?;
            Action::Ramp {
                field: parts.get(1).ok_or("missing field")?.parse()?,
                to: arg(parts, 2, "target")?,
                duration_ms: arg(parts, 3, "duration")?,
            }
        }
        "end" => {
            arity(1)?;
            Action::End
        }
        other => return Err(format!("unknown action {other:?}")),
    };
    match &action {
        Action::Press { hold_ms: 0, .. } => Err("hold time must be positive".into()),
        Action::Glitch { duration_ms: 0 } => Err("duration must be positive".into()),
        Action::Sensors { temp_c, humidity_pct, .. } if !temp_c.is_finite() || !humidity_pct.is_finite() => {
            Err("sensor values must be finite".into())
        }
        Action::Ramp { to, .. } if !to.is_finite() => Err("ramp target must be finite".into()),
        _ => Ok(action),
    }
}

impl FromStr for ScenarioScript {
    type Err = ScriptError;

    /// One action per line: `<virtual_ts_ms> <action> <args...>`. Blank lines
    /// and lines starting with `#` are skipped. Timestamps must not decrease.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut actions: Vec<ScriptAction> = Vec::new();
        for (i, line) in s.lines().enumerate() {
            let err = |message: String| ScriptError { line: i + 1, message };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let at: Millis = parts[0].parse().map_err(|_| err(format!("invalid timestamp {:?}", parts[0])))?;
            if parts.len() < 2 {
                return Err(err("missing action".into()));
            }
            if actions.last().is_some_and(|a| a.at > at) {
                return Err(err("timestamp goes backwards".into()));
            }
            let action = parse_action(&parts[1..]).map_err(err)?;
            actions.push(ScriptAction { at, action });
        }
        Ok(Self { actions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_action() {
        let s: ScenarioScript = "# attendance\n\
            1000 press 04a3b2c1 200 3\n\
            1500 glitch 20\n\
            1600 scan 04a3b2c1\n\
            2000 wifi aa:bb:cc:dd:ee:01 campus\n\
            \n\
            3000 sensors 22.5 45 2048 300\n\
            3000 ramp temp_c 30 10000\n\
            20000 end\n"
            .parse()
            .unwrap();
        assert_eq!(s.actions.len(), 7);
        assert_eq!(s.actions[0].action, Action::Press { tag_uid: "04a3b2c1".into(), hold_ms: 200, bounces: 3 });
        assert_eq!(s.actions[5].action, Action::Ramp { field: SensorField::TempC, to: 30.0, duration_ms: 10000 });
    }

    #[test]
    fn errors_name_the_line() {
        let e = "10 scan a\n5 scan b".parse::<ScenarioScript>().unwrap_err();
        assert_eq!(e.line, 2);
        let e = "10 teleport".parse::<ScenarioScript>().unwrap_err();
        assert!(e.message.contains("teleport"));
        assert!("x scan a".parse::<ScenarioScript>().is_err());
        assert!("1 press a 0".parse::<ScenarioScript>().is_err());
        assert!("1 sensors 1 2 3".parse::<ScenarioScript>().is_err());
        assert!("1 end now".parse::<ScenarioScript>().is_err());
        assert!("".parse::<ScenarioScript>().unwrap().actions.is_empty());
    }
}
