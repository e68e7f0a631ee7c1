use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    control_step, validate_reading, Actuator, ActuatorState, Calibration, ControlConfig, EcoError,
    SensorSample, Switch,
};

/// One line of a scenario trace file, with raw analog counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp_ms: u64,
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub lux_raw: i64,
    pub air_raw: i64,
}

impl TraceRecord {
    pub fn calibrate(&self, cal: &Calibration) -> Result<SensorSample, EcoError> {
        cal.sample(self.timestamp_ms, self.temp_c, self.humidity_pct, self.lux_raw, self.air_raw)
    }
}

/// Reads a trace file: CSV with header
/// `timestamp_ms,temp_c,humidity_pct,lux_raw,air_raw`. Lines starting with
/// `#` are comments.
pub fn read_trace<R: Read>(reader: R) -> Result<Vec<TraceRecord>, EcoError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<TraceRecord>, _>>()
        .map_err(|e| EcoError::TraceFormat(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandLogEntry {
    pub timestamp_ms: u64,
    pub actuator: Actuator,
    pub new_state: Switch,
    pub cause: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleCounts {
    pub hvac_cooling: usize,
    pub lighting: usize,
    pub ventilation: usize,
}

impl ToggleCounts {
    pub fn get(&self, a: Actuator) -> usize {
        match a {
            Actuator::Hvac => self.hvac_cooling,
            Actuator::Lighting => self.lighting,
            Actuator::Ventilation => self.ventilation,
        }
    }

    fn bump(&mut self, a: Actuator) {
        match a {
            Actuator::Hvac => self.hvac_cooling += 1,
            Actuator::Lighting => self.lighting += 1,
            Actuator::Ventilation => self.ventilation += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    /// State after each trace sample.
    pub states: Vec<ActuatorState>,
    pub commands: Vec<CommandLogEntry>,
    pub toggles: ToggleCounts,
}

impl ScenarioOutcome {
    pub fn final_state(&self) -> Option<ActuatorState> {
        self.states.last().copied()
    }

    pub fn command_log(&self) -> String {
        let mut buf = Vec::new();
        write_command_log(&mut buf, &self.commands).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Writes `timestamp_ms,actuator,new_state,cause` CSV lines with a header.
pub fn write_command_log<W: Write>(writer: W, commands: &[CommandLogEntry]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_ms", "actuator", "new_state", "cause"])?;
    for c in commands {
        w.write_record([
            c.timestamp_ms.to_string(),
            c.actuator.to_string(),
            c.new_state.to_string(),
            c.cause.clone(),
        ])?;
    }
    w.flush()
}

/// Folds [`control_step`] over `trace`. Range violations carry the index of
/// the offending sample.
pub fn run_scenario(
    trace: &[SensorSample],
    config: &ControlConfig,
    initial: ActuatorState,
) -> Result<ScenarioOutcome, EcoError> {
    if trace.is_empty() {
        return Err(EcoError::EmptyTrace);
    }
    let mut state = initial;
    let mut out = ScenarioOutcome { states: Vec::with_capacity(trace.len()), commands: Vec::new(), toggles: ToggleCounts::default() };
    let mut last_ts = None;
    for (index, sample) in trace.iter().enumerate() {
        if last_ts.is_some_and(|t| sample.timestamp < t) {
            return Err(EcoError::NonMonotonicTime { index });
        }
        last_ts = Some(sample.timestamp);
        let reading =
            validate_reading(*sample).map_err(|e| EcoError::Trace { index, source: Box::new(e) })?;
        let (next, commands) = control_step(&reading, &state, config);
        for c in commands {
            out.toggles.bump(c.actuator);
            out.commands.push(CommandLogEntry {
                timestamp_ms: sample.timestamp,
                actuator: c.actuator,
                new_state: c.state,
                cause: c.cause,
            });
        }
        state = next;
        out.states.push(state);
    }
    Ok(out)
}
