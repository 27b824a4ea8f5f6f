//! Series export with optional moving-average overlay, plus a sparkline.

use std::str::FromStr;

use agrisense_core::analytics::{moving_average, ForecastConfig};
use agrisense_core::channel::{format_timestamp, FeedPage};
use chrono::{DateTime, Utc};
use rust_decimal::Decimal;

const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];
/// Extra digits kept when a mean does not terminate at the input precision.
const EXTRA_DIGITS: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("field must be between 1 and 8, got {0}")]
    Field(u8),
    #[error("entry {entry_id}: value {value:?} is not a decimal number")]
    Value { entry_id: u64, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub entry_id: u64,
    pub t: DateTime<Utc>,
    pub value: String,
    pub forecast: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub rows: Vec<PlotRow>,
    pub with_forecast: bool,
}

fn parse_decimal(text: &str) -> Option<Decimal> {
    let text = text.trim();
    Decimal::from_str(text).or_else(|_| Decimal::from_scientific(text)).ok()
}

/// Decimal text of a window mean: at the series' own precision when exact,
/// otherwise rounded to a couple of extra digits.
fn format_mean(mean: Decimal, scale: u32) -> String {
    let mut at_scale = mean.round_dp(scale);
    if at_scale == mean {
        at_scale.rescale(scale);
        return at_scale.to_string();
    }
    mean.round_dp(scale + EXTRA_DIGITS).normalize().to_string()
}

impl PlotSeries {
    /// Entries of `page` that carry `field`; with `forecast`, each row also
    /// gets the trailing mean ending at it (blank before the first full window).
    pub fn from_page(page: &FeedPage, field: u8, forecast: Option<&ForecastConfig>) -> Result<Self, PlotError> {
        if !(1..=8).contains(&field) {
            return Err(PlotError::Field(field));
        }
        let mut rows: Vec<PlotRow> = page
            .feeds
            .iter()
            .filter_map(|e| {
                e.field(usize::from(field)).map(|v| PlotRow {
                    entry_id: e.entry_id,
                    t: e.created_at,
                    value: v.to_string(),
                    forecast: None,
                })
            })
            .collect();
        if let Some(cfg) = forecast {
            let mut values = Vec::with_capacity(rows.len());
            for row in &rows {
                let d = parse_decimal(&row.value)
                    .ok_or_else(|| PlotError::Value { entry_id: row.entry_id, value: row.value.clone() })?;
                values.push(d);
            }
            let scale = values.iter().map(Decimal::scale).max().unwrap_or(0);
            let ma = moving_average(&values, cfg);
            for (row, mean) in rows.iter_mut().zip(ma.aligned(cfg.window)) {
                row.forecast = mean.map(|m| format_mean(m, scale));
            }
        }
        Ok(PlotSeries { rows, with_forecast: forecast.is_some() })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), PlotError> {
        let mut w = csv::Writer::from_writer(out);
        if self.with_forecast {
            w.write_record(["t", "value", "forecast"])?;
        } else {
            w.write_record(["t", "value"])?;
        }
        for row in &self.rows {
            let t = format_timestamp(&row.t);
            if self.with_forecast {
                w.write_record([t.as_str(), &row.value, row.forecast.as_deref().unwrap_or("")])?;
            } else {
                w.write_record([t.as_str(), &row.value])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, PlotError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv of utf-8 input"))
    }

    pub fn sparkline(&self) -> Option<String> {
        let values: Vec<f64> = self.rows.iter().filter_map(|r| r.value.trim().parse().ok()).collect();
        sparkline(&values)
    }
}

/// One bar per value scaled between the series minimum and maximum; `None`
/// for an empty series.
pub fn sparkline(values: &[f64]) -> Option<String> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = (BARS.len() - 1) as f64;
    Some(
        finite
            .iter()
            .map(|v| {
                let level = if hi > lo { ((v - lo) / (hi - lo) * top).round() as usize } else { 0 };
                BARS[level.min(BARS.len() - 1)]
            })
            .collect(),
    )
}
