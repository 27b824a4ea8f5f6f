//! Field environment generator.
//!
//! A scenario is either a seeded stochastic process bounded to per-parameter
//! ranges, or a scripted table of knots replayed with linear interpolation.
//! Scenario documents use a small line-oriented format:
//!
//! ```text
//! # comment
//! mode = scripted
//! duration_s = 3600
//! tick_s = 10
//! temp_min = 20
//! [script]
//! 0,24.5,1019.4,26.3,0
//! ```

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Real, Sensor};

pub const DEFAULT_TICK_S: u64 = 10;
pub const DEFAULT_DURATION_S: u64 = 3600;

const PAPER_HOUR: &str = include_str!("../scenarios/paper_hour.scn");

/// Names of the scenarios compiled into the crate.
pub const BUNDLED: &[&str] = &["paper_hour"];

/// Source text of a bundled scenario.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "paper_hour" => Some(PAPER_HOUR),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{parameter} value {value} outside [{min}, {max}]")]
    Range {
        parameter: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("t = {t} s outside scenario [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: u64 },
    #[error("operation requires a {0} scenario")]
    WrongMode(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> Range<T> {
    pub fn new(min: T, max: T) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: T) -> T {
        v.max(self.min).min(self.max)
    }

    pub fn midpoint(&self) -> T {
        (self.min + self.max) / T::lit(2.0)
    }

    pub fn span(&self) -> T {
        self.max - self.min
    }
}

/// Bounds for the three continuous parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranges<T> {
    pub temperature: Range<T>,
    pub pressure: Range<T>,
    pub moisture: Range<T>,
}

impl<T: Real> Default for Ranges<T> {
    fn default() -> Self {
        Ranges {
            temperature: Range::new(T::lit(20.0), T::lit(40.0)),
            pressure: Range::new(T::lit(1010.0), T::lit(1025.0)),
            moisture: Range::new(T::lit(10.0), T::lit(50.0)),
        }
    }
}

impl<T: Real> Ranges<T> {
    pub fn get(&self, sensor: Sensor) -> Option<&Range<T>> {
        match sensor {
            Sensor::Temperature => Some(&self.temperature),
            Sensor::Pressure => Some(&self.pressure),
            Sensor::Moisture => Some(&self.moisture),
            Sensor::Rain => None,
        }
    }

    /// True when every continuous field of `s` lies within its range.
    pub fn admits(&self, s: &EnvSample<T>) -> bool {
        self.temperature.contains(s.temperature)
            && self.pressure.contains(s.pressure)
            && self.moisture.contains(s.moisture)
    }
}

/// Ground-truth field state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample<T> {
    /// Seconds since scenario start.
    pub t: T,
    pub temperature: T,
    pub pressure: T,
    pub moisture: T,
    pub rain: bool,
}

impl<T: Real> EnvSample<T> {
    pub fn value(&self, sensor: Sensor) -> T {
        match sensor {
            Sensor::Temperature => self.temperature,
            Sensor::Pressure => self.pressure,
            Sensor::Moisture => self.moisture,
            Sensor::Rain => {
                if self.rain {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptRow<T> {
    pub t: u64,
    pub temperature: T,
    pub pressure: T,
    pub moisture: T,
    pub rain: bool,
}

/// Tuning of the bounded mean-reverting walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticParams<T> {
    /// Gaussian noise standard deviation per tick as a fraction of each range.
    pub noise_frac: T,
    /// Fraction of the distance to the range midpoint recovered per tick.
    pub reversion: T,
    /// Probability that the rain line keeps its state across a tick.
    pub rain_p_stay: f64,
    /// Moisture added per tick while it rains (percentage points).
    pub rain_moisture_ramp: T,
}

impl<T: Real> Default for StochasticParams<T> {
    fn default() -> Self {
        StochasticParams {
            noise_frac: T::lit(0.02),
            reversion: T::lit(0.05),
            rain_p_stay: 0.9,
            rain_moisture_ramp: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioMode<T> {
    Stochastic(StochasticParams<T>),
    Scripted(Vec<ScriptRow<T>>),
}

/// A validated scenario. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec<T> {
    pub name: Option<String>,
    pub mode: ScenarioMode<T>,
    pub seed: u64,
    pub duration_s: u64,
    pub tick_s: u64,
    pub ranges: Ranges<T>,
}

impl<T: Real> ScenarioSpec<T> {
    /// Default stochastic scenario: one hour at 10 s ticks, default ranges.
    pub fn stochastic(seed: u64) -> Self {
        ScenarioSpec {
            name: None,
            mode: ScenarioMode::Stochastic(StochasticParams::default()),
            seed,
            duration_s: DEFAULT_DURATION_S,
            tick_s: DEFAULT_TICK_S,
            ranges: Ranges::default(),
        }
    }

    /// Scripted scenario whose duration is the last row's timestamp.
    pub fn scripted(rows: Vec<ScriptRow<T>>, tick_s: u64, ranges: Ranges<T>) -> Result<Self, ScenarioError> {
        let duration_s = rows.last().map(|r| r.t).unwrap_or(0);
        let spec = ScenarioSpec {
            name: None,
            mode: ScenarioMode::Scripted(rows),
            seed: 0,
            duration_s,
            tick_s,
            ranges,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self.mode, ScenarioMode::Scripted(_))
    }

    /// Number of samples produced by [`ScenarioSpec::samples`].
    pub fn sample_count(&self) -> usize {
        (self.duration_s / self.tick_s) as usize + 1
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for sensor in [Sensor::Temperature, Sensor::Pressure, Sensor::Moisture] {
            let r = self.ranges.get(sensor).expect("continuous sensor");
            if !(r.min < r.max) {
                return Err(ScenarioError::Invalid(format!(
                    "{sensor} range min {} must be below max {}",
                    r.min, r.max
                )));
            }
        }
        if self.tick_s == 0 {
            return Err(ScenarioError::Invalid("tick_s must be positive".into()));
        }
        if self.duration_s < self.tick_s {
            return Err(ScenarioError::Invalid(format!(
                "duration_s {} shorter than tick_s {}",
                self.duration_s, self.tick_s
            )));
        }
        match &self.mode {
            ScenarioMode::Stochastic(p) => {
                if !(0.0..=1.0).contains(&p.rain_p_stay) {
                    return Err(ScenarioError::Invalid("rain_p_stay must lie in [0, 1]".into()));
                }
                if p.noise_frac < T::zero() || p.reversion < T::zero() || p.reversion > T::one() {
                    return Err(ScenarioError::Invalid(
                        "noise_frac must be >= 0 and reversion within [0, 1]".into(),
                    ));
                }
            }
            ScenarioMode::Scripted(rows) => {
                let first = rows
                    .first()
                    .ok_or_else(|| ScenarioError::Invalid("scripted scenario has no rows".into()))?;
                if first.t != 0 {
                    return Err(ScenarioError::Invalid("script must start at t = 0".into()));
                }
                for pair in rows.windows(2) {
                    if pair[1].t <= pair[0].t {
                        return Err(ScenarioError::Invalid(format!(
                            "script timestamps not strictly increasing at t = {}",
                            pair[1].t
                        )));
                    }
                }
                for row in rows {
                    check_range("temperature", row.temperature, &self.ranges.temperature)?;
                    check_range("pressure", row.pressure, &self.ranges.pressure)?;
                    check_range("moisture", row.moisture, &self.ranges.moisture)?;
                }
                let last = rows.last().expect("non-empty").t;
                if self.duration_s > last {
                    return Err(ScenarioError::Invalid(format!(
                        "duration_s {} extends past the last script row at {last}",
                        self.duration_s
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replays the script at `t` seconds.
    ///
    /// Continuous fields interpolate linearly between neighbouring rows;
    /// rain holds the value of the latest row at or before `t`.
    pub fn sample_at(&self, t: T) -> Result<EnvSample<T>, ScenarioError> {
        let rows = match &self.mode {
            ScenarioMode::Scripted(rows) => rows,
            ScenarioMode::Stochastic(_) => return Err(ScenarioError::WrongMode("scripted")),
        };
        let duration = T::from_u64(self.duration_s).expect("duration fits");
        if !(t >= T::zero() && t <= duration) {
            return Err(ScenarioError::TimeOutOfRange {
                t: t.as_f64(),
                duration: self.duration_s,
            });
        }
        let row_t = |r: &ScriptRow<T>| T::from_u64(r.t).expect("row time fits");
        // index of the first row strictly after t
        let after = rows.partition_point(|r| row_t(r) <= t);
        let lo = &rows[after - 1];
        if row_t(lo) == t || after == rows.len() {
            return Ok(EnvSample {
                t,
                temperature: lo.temperature,
                pressure: lo.pressure,
                moisture: lo.moisture,
                rain: lo.rain,
            });
        }
        let hi = &rows[after];
        let frac = (t - row_t(lo)) / (row_t(hi) - row_t(lo));
        let lerp = |a: T, b: T| a + (b - a) * frac;
        Ok(EnvSample {
            t,
            temperature: lerp(lo.temperature, hi.temperature),
            pressure: lerp(lo.pressure, hi.pressure),
            moisture: lerp(lo.moisture, hi.moisture),
            rain: lo.rain,
        })
    }

    /// Starting state of the stochastic walk: every range midpoint, dry.
    pub fn initial_state(&self) -> EnvSample<T> {
        EnvSample {
            t: T::zero(),
            temperature: self.ranges.temperature.midpoint(),
            pressure: self.ranges.pressure.midpoint(),
            moisture: self.ranges.moisture.midpoint(),
            rain: false,
        }
    }

    /// Every sample at `0, tick, 2*tick, ..` up to the duration.
    pub fn samples(&self) -> Samples<'_, T> {
        Samples {
            spec: self,
            index: 0,
            count: self.sample_count(),
            walk: match self.mode {
                ScenarioMode::Stochastic(_) => Some((ChaCha8Rng::seed_from_u64(self.seed), self.initial_state())),
                ScenarioMode::Scripted(_) => None,
            },
        }
    }
}

fn check_range<T: Real>(parameter: &'static str, value: T, range: &Range<T>) -> Result<(), ScenarioError> {
    if range.contains(value) {
        Ok(())
    } else {
        Err(ScenarioError::Range {
            parameter,
            value: value.as_f64(),
            min: range.min.as_f64(),
            max: range.max.as_f64(),
        })
    }
}

/// Advances the stochastic walk by one tick.
///
/// Each continuous field moves toward its range midpoint by `reversion` of
/// the gap plus Gaussian noise, then is clamped to its range. Rain keeps its
/// state with probability `rain_p_stay` and, while wet, ramps moisture up.
pub fn step<T: Real, R: Rng + ?Sized>(
    state: &EnvSample<T>,
    spec: &ScenarioSpec<T>,
    rng: &mut R,
) -> Result<EnvSample<T>, ScenarioError> {
    let params = match &spec.mode {
        ScenarioMode::Stochastic(p) => p,
        ScenarioMode::Scripted(_) => return Err(ScenarioError::WrongMode("stochastic")),
    };
    let mut walk = |value: T, range: &Range<T>| {
        let z: f64 = rng.sample(StandardNormal);
        let noise = params.noise_frac * range.span() * T::lit(z);
        range.clamp(value + params.reversion * (range.midpoint() - value) + noise)
    };
    let temperature = walk(state.temperature, &spec.ranges.temperature);
    let pressure = walk(state.pressure, &spec.ranges.pressure);
    let mut moisture = walk(state.moisture, &spec.ranges.moisture);

    let stay = rng.random_bool(params.rain_p_stay);
    let rain = if stay { state.rain } else { !state.rain };
    if rain {
        moisture = spec.ranges.moisture.clamp(moisture + params.rain_moisture_ramp);
    }
    Ok(EnvSample {
        t: state.t + T::from_u64(spec.tick_s).expect("tick fits"),
        temperature,
        pressure,
        moisture,
        rain,
    })
}

/// Iterator over a scenario's samples. Owns the stochastic generator state.
pub struct Samples<'a, T> {
    spec: &'a ScenarioSpec<T>,
    index: usize,
    count: usize,
    walk: Option<(ChaCha8Rng, EnvSample<T>)>,
}

impl<T: Real> Iterator for Samples<'_, T> {
    type Item = EnvSample<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.index >= self.count {
            return None;
        }
        let i = self.index;
        self.index += 1;
        match &mut self.walk {
            None => {
                let t = T::from_u64(i as u64 * self.spec.tick_s).expect("time fits");
                Some(self.spec.sample_at(t).expect("sample times lie within the duration"))
            }
            Some((rng, state)) => {
                if i > 0 {
                    *state = step(state, self.spec, rng).expect("stochastic mode");
                }
                Some(*state)
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.index;
        (left, Some(left))
    }
}

impl<T: Real> ExactSizeIterator for Samples<'_, T> {}

impl<T: Real> fmt::Display for ScenarioSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.is_scripted() { "scripted" } else { "stochastic" };
        write!(
            f,
            "{} ({mode}, {} s at {} s ticks)",
            self.name.as_deref().unwrap_or("unnamed"),
            self.duration_s,
            self.tick_s
        )
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario<T: Real>(source: &str) -> Result<ScenarioSpec<T>, ScenarioError> {
    let mut name = None;
    let mut mode: Option<&str> = None;
    let mut mode_pos = (0, 0);
    let mut seed = 0u64;
    let mut duration: Option<u64> = None;
    let mut tick = DEFAULT_TICK_S;
    let mut ranges = Ranges::<T>::default();
    let mut params = StochasticParams::<T>::default();
    let mut rows = Vec::new();
    let mut in_script = false;
    let mut saw_content = false;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        saw_content = true;
        let indent = content.len() - content.trim_start().len();
        if trimmed == "[script]" {
            in_script = true;
            continue;
        }
        if in_script {
            rows.push(parse_row::<T>(content, line_no)?);
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ScenarioError::Parse {
                line: line_no,
                column: indent + 1,
                message: format!("expected `key = value`, found {trimmed:?}"),
            });
        };
        let key = key.trim();
        let value_col = indent + trimmed.find('=').expect("split on '='") + 2 + (value.len() - value.trim_start().len());
        let value = value.trim();
        let err = |message: String| ScenarioError::Parse {
            line: line_no,
            column: value_col,
            message,
        };
        let num = |what: &str| -> Result<T, ScenarioError> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| err(format!("{what} expects a number, found {value:?}")))
        };
        let int = |what: &str| -> Result<u64, ScenarioError> {
            value
                .parse::<u64>()
                .map_err(|_| err(format!("{what} expects a non-negative integer, found {value:?}")))
        };
        match key {
            "name" => name = Some(value.to_string()),
            "mode" => {
                if value != "stochastic" && value != "scripted" {
                    return Err(err(format!("mode must be stochastic or scripted, found {value:?}")));
                }
                mode = Some(if value == "scripted" { "scripted" } else { "stochastic" });
                mode_pos = (line_no, value_col);
            }
            "seed" => seed = int(key)?,
            "duration_s" => duration = Some(int(key)?),
            "tick_s" => tick = int(key)?,
            "temp_min" => ranges.temperature.min = num(key)?,
            "temp_max" => ranges.temperature.max = num(key)?,
            "press_min" => ranges.pressure.min = num(key)?,
            "press_max" => ranges.pressure.max = num(key)?,
            "moist_min" => ranges.moisture.min = num(key)?,
            "moist_max" => ranges.moisture.max = num(key)?,
            "noise_frac" => params.noise_frac = num(key)?,
            "reversion" => params.reversion = num(key)?,
            "rain_p_stay" => params.rain_p_stay = num(key)?.as_f64(),
            "rain_moisture_ramp" => params.rain_moisture_ramp = num(key)?,
            other => {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    column: indent + 1,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
    }

    if !saw_content {
        return Err(ScenarioError::Parse {
            line: 1,
            column: 1,
            message: "empty scenario document".into(),
        });
    }
    let mode = mode.ok_or_else(|| ScenarioError::Parse {
        line: 1,
        column: 1,
        message: "missing `mode` key".into(),
    })?;

    let spec = match mode {
        "scripted" => {
            if rows.is_empty() {
                return Err(ScenarioError::Parse {
                    line: mode_pos.0,
                    column: mode_pos.1,
                    message: "scripted mode requires a [script] section with rows".into(),
                });
            }
            let last = rows.last().map(|r: &ScriptRow<T>| r.t).unwrap_or(0);
            ScenarioSpec {
                name,
                mode: ScenarioMode::Scripted(rows),
                seed,
                duration_s: duration.unwrap_or(last),
                tick_s: tick,
                ranges,
            }
        }
        _ => {
            if in_script {
                return Err(ScenarioError::Parse {
                    line: mode_pos.0,
                    column: mode_pos.1,
                    message: "stochastic mode does not take a [script] section".into(),
                });
            }
            ScenarioSpec {
                name,
                mode: ScenarioMode::Stochastic(params),
                seed,
                duration_s: duration.unwrap_or(DEFAULT_DURATION_S),
                tick_s: tick,
                ranges,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_row<T: Real>(content: &str, line: usize) -> Result<ScriptRow<T>, ScenarioError> {
    let mut cells = Vec::with_capacity(5);
    let mut col = 1;
    for cell in content.split(',') {
        let lead = cell.len() - cell.trim_start().len();
        cells.push((cell.trim(), col + lead));
        col += cell.len() + 1;
    }
    if cells.len() != 5 {
        return Err(ScenarioError::Parse {
            line,
            column: 1,
            message: format!("script row needs 5 columns (t_s,temp_c,press_hpa,moist_pct,rain), found {}", cells.len()),
        });
    }
    let parse_err = |(text, column): (&str, usize), what: &str| ScenarioError::Parse {
        line,
        column,
        message: format!("{what}: cannot parse {text:?}"),
    };
    let num = |cell: (&str, usize), what: &str| -> Result<T, ScenarioError> {
        cell.0
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(T::lit)
            .ok_or_else(|| parse_err(cell, what))
    };
    let t = cells[0].0.parse::<u64>().map_err(|_| parse_err(cells[0], "t_s"))?;
    let rain = match cells[4].0 {
        "0" => false,
        "1" => true,
        _ => return Err(parse_err(cells[4], "rain must be 0 or 1")),
    };
    Ok(ScriptRow {
        t,
        temperature: num(cells[1], "temp_c")?,
        pressure: num(cells[2], "press_hpa")?,
        moisture: num(cells[3], "moist_pct")?,
        rain,
    })
}
