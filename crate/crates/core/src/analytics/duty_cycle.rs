//! Forecast-driven sensor power schedules.
//!
//! Only the rain sensor is ever switched off: when the recent rain history is
//! dry and the pressure forecast stays at or above the fair-weather level,
//! it sleeps until the first forecast step that dips below that level.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::{Real, Sensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerState {
    On,
    Off,
}

/// Half-open interval `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleInterval {
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    pub state: PowerState,
}

impl ScheduleInterval {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.from <= t && t < self.to
    }

    pub fn duration(&self) -> TimeDelta {
        self.to - self.from
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("{sensor}: interval starting {from} is empty or reversed")]
    Empty { sensor: Sensor, from: DateTime<Utc> },
    #[error("{sensor}: intervals overlap at {at}")]
    Overlap { sensor: Sensor, at: DateTime<Utc> },
}

/// Per-sensor on/off intervals. Instants not covered by any interval
/// default to on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerSchedule {
    intervals: BTreeMap<Sensor, Vec<ScheduleInterval>>,
}

impl PowerSchedule {
    /// Validates and sorts the intervals of each sensor.
    pub fn new(mut intervals: BTreeMap<Sensor, Vec<ScheduleInterval>>) -> Result<Self, ScheduleError> {
        for (&sensor, list) in intervals.iter_mut() {
            list.sort_by_key(|i| i.from);
            for i in list.iter() {
                if i.from >= i.to {
                    return Err(ScheduleError::Empty { sensor, from: i.from });
                }
            }
            for pair in list.windows(2) {
                if pair[1].from < pair[0].to {
                    return Err(ScheduleError::Overlap { sensor, at: pair[1].from });
                }
            }
        }
        Ok(PowerSchedule { intervals })
    }

    /// Every sensor on over `[from, to)`.
    pub fn all_on(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        Self::uniform(from, to, PowerState::On)
    }

    /// Every sensor off over `[from, to)`.
    pub fn all_off(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        Self::uniform(from, to, PowerState::Off)
    }

    fn uniform(from: DateTime<Utc>, to: DateTime<Utc>, state: PowerState) -> Self {
        let intervals = Sensor::ALL
            .into_iter()
            .map(|s| (s, if from < to { vec![ScheduleInterval { from, to, state }] } else { Vec::new() }))
            .collect();
        PowerSchedule { intervals }
    }

    pub fn state_at(&self, sensor: Sensor, t: DateTime<Utc>) -> PowerState {
        self.intervals
            .get(&sensor)
            .and_then(|list| list.iter().find(|i| i.contains(t)))
            .map_or(PowerState::On, |i| i.state)
    }

    pub fn is_on(&self, sensor: Sensor, t: DateTime<Utc>) -> bool {
        self.state_at(sensor, t) == PowerState::On
    }

    pub fn intervals(&self, sensor: Sensor) -> &[ScheduleInterval] {
        self.intervals.get(&sensor).map_or(&[], Vec::as_slice)
    }

    /// True when no interval switches any sensor off.
    pub fn never_off(&self) -> bool {
        self.intervals
            .values()
            .flatten()
            .all(|i| i.state == PowerState::On)
    }

    /// Total scheduled off-time for `sensor`.
    pub fn off_time(&self, sensor: Sensor) -> TimeDelta {
        self.intervals(sensor)
            .iter()
            .filter(|i| i.state == PowerState::Off)
            .map(ScheduleInterval::duration)
            .fold(TimeDelta::zero(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycleConfig<T> {
    /// Number of most recent rain observations that must all be dry.
    pub lookback: usize,
    /// Pressure at or above which the forecast counts as fair weather (hPa).
    pub fair_weather_hpa: T,
    /// Time covered by one forecast step.
    pub step: TimeDelta,
}

impl<T: Real> Default for DutyCycleConfig<T> {
    fn default() -> Self {
        DutyCycleConfig {
            lookback: 6,
            fair_weather_hpa: T::lit(1013.0),
            step: TimeDelta::seconds(10),
        }
    }
}

/// Plans sensor power for `pressure_forecast.len()` steps starting at `start`.
///
/// The rain sensor stays on throughout unless the last `lookback` entries of
/// `rain_history` exist and are all dry. In that case it is off up to the
/// first forecast step below the fair-weather threshold and on from that
/// step onward. Every other sensor is on for the whole horizon.
pub fn plan_duty_cycle<T: Real>(
    start: DateTime<Utc>,
    pressure_forecast: &[T],
    rain_history: &[bool],
    cfg: &DutyCycleConfig<T>,
) -> PowerSchedule {
    let end = start + cfg.step * pressure_forecast.len() as i32;
    let mut schedule = PowerSchedule::all_on(start, end);

    let dry = rain_history.len() >= cfg.lookback
        && rain_history[rain_history.len() - cfg.lookback..].iter().all(|&r| !r);
    if !dry || pressure_forecast.is_empty() {
        return schedule;
    }
    let first_dip = pressure_forecast
        .iter()
        .position(|&p| !(p >= cfg.fair_weather_hpa))
        .unwrap_or(pressure_forecast.len());
    if first_dip == 0 {
        return schedule;
    }
    let wake = start + cfg.step * first_dip as i32;
    let mut rain = vec![ScheduleInterval { from: start, to: wake, state: PowerState::Off }];
    if wake < end {
        rain.push(ScheduleInterval { from: wake, to: end, state: PowerState::On });
    }
    schedule.intervals.insert(Sensor::Rain, rain);
    schedule
}
