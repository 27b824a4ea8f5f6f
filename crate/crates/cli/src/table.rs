//! Fixed-width history table.

use std::fmt;

use agrisense_core::channel::{format_timestamp, FeedPage};
use agrisense_core::Sensor;

pub const COLUMNS: [&str; 5] = ["Time", "Temperature", "Moisture", "Pressure", "Rain"];
const SENSORS: [Sensor; 4] = [Sensor::Temperature, Sensor::Moisture, Sensor::Pressure, Sensor::Rain];
const ABSENT: &str = "--";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableView {
    /// Cells in column order; values are the service's strings untouched.
    pub rows: Vec<[String; 5]>,
}

impl TableView {
    /// The last `limit` entries of `page`, oldest first.
    pub fn from_page(page: &FeedPage, limit: usize) -> Self {
        let skip = page.feeds.len().saturating_sub(limit);
        let rows = page.feeds[skip..]
            .iter()
            .map(|entry| {
                let mut row: [String; 5] = Default::default();
                row[0] = format_timestamp(&entry.created_at);
                for (cell, sensor) in row[1..].iter_mut().zip(SENSORS) {
                    *cell = entry.field(usize::from(sensor.field())).unwrap_or(ABSENT).to_string();
                }
                row
            })
            .collect();
        TableView { rows }
    }

    fn widths(&self) -> [usize; 5] {
        let mut w = COLUMNS.map(str::len);
        for row in &self.rows {
            for (w, cell) in w.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        w
    }
}

impl fmt::Display for TableView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths = self.widths();
        let line = |f: &mut fmt::Formatter<'_>, cells: &[&str]| -> fmt::Result {
            let text: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            writeln!(f, "{}", text.join(" | ").trim_end())
        };
        line(f, &COLUMNS)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(f, "{}", rule.join("-+-"))?;
        for row in &self.rows {
            line(f, &row.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        Ok(())
    }
}
