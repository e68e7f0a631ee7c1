use serde::{Deserialize, Serialize};

pub const DISPLAY_LINES: usize = 4;
pub const DISPLAY_COLUMNS: usize = 21;

pub const READY_TEXT: &str = "System Ready";
pub const TAKEN_TEXT: &str = "Attendance Taken!";

/// What the node's OLED panel is showing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DisplayState {
    #[default]
    Ready,
    AttendanceTaken,
    Text(Vec<String>),
}

/// Renders `state` within the 4 x 21 character budget. Extra lines and
/// characters are cut off.
pub fn render_display(state: &DisplayState) -> Vec<String> {
    let lines: Vec<String> = match state {
        DisplayState::Ready => vec![READY_TEXT.to_string()],
        DisplayState::AttendanceTaken => vec![TAKEN_TEXT.to_string()],
        DisplayState::Text(lines) => lines.clone(),
    };
    lines
        .into_iter()
        .take(DISPLAY_LINES)
        .map(|l| l.chars().take(DISPLAY_COLUMNS).collect())
        .collect()
}
