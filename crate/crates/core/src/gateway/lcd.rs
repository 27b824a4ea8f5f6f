use std::fmt;

use super::Reading;
use crate::Real;

pub const LCD_WIDTH: usize = 16;

/// Contents of a 16x2 character display.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LcdFrame {
    lines: [String; 2],
}

impl LcdFrame {
    /// Pads or truncates each line to exactly 16 printable ASCII characters.
    pub fn new(line1: &str, line2: &str) -> Self {
        LcdFrame { lines: [fit(line1), fit(line2)] }
    }

    pub fn lines(&self) -> &[String; 2] {
        &self.lines
    }
}

impl fmt::Display for LcdFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.lines[0], self.lines[1])
    }
}

fn fit(text: &str) -> String {
    let mut out: String = text
        .chars()
        .map(|c| if c.is_ascii_graphic() || c == ' ' { c } else { '?' })
        .take(LCD_WIDTH)
        .collect();
    while out.len() < LCD_WIDTH {
        out.push(' ');
    }
    out
}

fn segment<T: Real>(prefix: &str, value: Option<T>, unit: &str, width: usize) -> String {
    let text = match value {
        Some(v) => format!("{prefix}{v:.1}{unit}"),
        None => format!("{prefix}--"),
    };
    format!("{text:<width$}")
}

/// `T:22.0C P:1013.0` / `M:30.0% R:0`; absent values show as `--` and the
/// columns stay aligned.
pub fn render_lcd<T: Real>(r: &Reading<T>) -> LcdFrame {
    let line1 = format!(
        "{} {}",
        segment("T:", r.temperature, "C", 7),
        segment("P:", r.pressure, "", 8)
    );
    let rain = match r.rain {
        Some(true) => "1",
        Some(false) => "0",
        None => "-",
    };
    let line2 = format!("{} R:{rain}", segment("M:", r.moisture, "%", 7));
    LcdFrame::new(&line1, &line2)
}
