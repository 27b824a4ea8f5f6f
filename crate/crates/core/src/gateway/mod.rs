//! Edge gateway: acquisition through the ADC model, local display and
//! indicators, power scheduling with energy accounting, and publishing.

mod lcd;
mod publish;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::adc::{AdcError, AdcFrontend};
use crate::analytics::{AlertRuleSet, Comparator, PowerSchedule};
use crate::env_sim::EnvSample;
use crate::{Real, Sensor};

pub use lcd::{render_lcd, LcdFrame, LCD_WIDTH};
pub use publish::{
    ChannelTransport, PublishOutcome, Publisher, RetryPolicy, TransportError, UpdateReply, UpdateRequest,
    DEFAULT_BACKLOG_CAPACITY,
};

/// One acquisition: engineering values reconstructed from converter codes.
/// Sensors that were powered off are absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading<T> {
    pub timestamp: DateTime<Utc>,
    pub temperature: Option<T>,
    pub pressure: Option<T>,
    pub moisture: Option<T>,
    pub rain: Option<bool>,
}

impl<T: Real> Reading<T> {
    pub fn empty(timestamp: DateTime<Utc>) -> Self {
        Reading { timestamp, temperature: None, pressure: None, moisture: None, rain: None }
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_none() && self.pressure.is_none() && self.moisture.is_none() && self.rain.is_none()
    }

    /// Numeric value of `sensor`; rain reads as 0 or 1.
    pub fn value(&self, sensor: Sensor) -> Option<T> {
        match sensor {
            Sensor::Temperature => self.temperature,
            Sensor::Pressure => self.pressure,
            Sensor::Moisture => self.moisture,
            Sensor::Rain => self.rain.map(|r| if r { T::one() } else { T::zero() }),
        }
    }

    pub fn set(&mut self, sensor: Sensor, value: Option<T>) {
        match sensor {
            Sensor::Temperature => self.temperature = value,
            Sensor::Pressure => self.pressure = value,
            Sensor::Moisture => self.moisture = value,
            Sensor::Rain => self.rain = value.map(|v| v >= T::lit(0.5)),
        }
    }

    /// Channel field values (index 0 is field1) as published decimal strings.
    pub fn to_fields(&self) -> [Option<String>; 8] {
        let mut fields: [Option<String>; 8] = Default::default();
        for sensor in Sensor::ALL {
            let text = match sensor {
                Sensor::Rain => self.rain.map(|r| if r { "1" } else { "0" }.to_string()),
                s => self.value(s).map(|v| format!("{v:.2}")),
            };
            fields[usize::from(sensor.field()) - 1] = text;
        }
        fields
    }

    /// Inverse of [`Reading::to_fields`]. Unparseable cells count as absent.
    pub fn from_fields(timestamp: DateTime<Utc>, fields: &[Option<String>; 8]) -> Self {
        let mut r = Reading::empty(timestamp);
        for sensor in Sensor::ALL {
            let v = fields[usize::from(sensor.field()) - 1]
                .as_deref()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .map(T::lit);
            r.set(sensor, v);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig<T> {
    /// Seconds between acquisitions; also the energy accounting interval.
    pub sample_interval_s: u64,
    pub endpoint: Option<String>,
    pub write_key: String,
    pub retry: RetryPolicy,
    pub backlog_capacity: usize,
    /// Draw of each sensor while powered, in milliwatts, indexed by
    /// [`Sensor::index`].
    pub power_mw: [T; 4],
}

impl<T: Real> Default for GatewayConfig<T> {
    fn default() -> Self {
        GatewayConfig {
            sample_interval_s: 10,
            endpoint: None,
            write_key: String::new(),
            retry: RetryPolicy::default(),
            backlog_capacity: DEFAULT_BACKLOG_CAPACITY,
            power_mw: [T::lit(5.0); 4],
        }
    }
}

impl<T: Real> GatewayConfig<T> {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.sample_interval_s == 0 {
            return Err(GatewayError::Config("sample interval must be positive".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config("max attempts must be at least 1".into()));
        }
        if self.power_mw.iter().any(|p| !(*p >= T::zero())) {
            return Err(GatewayError::Config("power draw must be non-negative".into()));
        }
        Ok(())
    }
}

/// Accumulated powered time per sensor. Energy is derived on demand as
/// on-time times configured draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger<T> {
    on_time_s: [u64; 4],
    power_mw: [T; 4],
}

impl<T: Real> EnergyLedger<T> {
    pub fn new(power_mw: [T; 4]) -> Self {
        EnergyLedger { on_time_s: [0; 4], power_mw }
    }

    pub fn on_time_s(&self, sensor: Sensor) -> u64 {
        self.on_time_s[sensor.index()]
    }

    /// Millijoules: seconds times milliwatts.
    pub fn energy_mj(&self, sensor: Sensor) -> T {
        T::from_u64(self.on_time_s(sensor)).expect("seconds fit") * self.power_mw[sensor.index()]
    }

    pub fn total_energy_mj(&self) -> T {
        Sensor::ALL.iter().fold(T::zero(), |acc, &s| acc + self.energy_mj(s))
    }

    fn advance(&mut self, sensor: Sensor, seconds: u64) {
        self.on_time_s[sensor.index()] += seconds;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Led {
    Heat,
    Rain,
    Dry,
}

/// LED states for a reading. Heat and dry thresholds come from the first
/// `temperature >` and `moisture <` rules in `rules`; a missing rule keeps
/// its LED off.
pub fn indicator_states<T: Real>(r: &Reading<T>, rules: &AlertRuleSet<T>) -> BTreeMap<Led, bool> {
    let heat = match (r.temperature, rules.find(Sensor::Temperature, Comparator::Above)) {
        (Some(t), Some(rule)) => t > rule.threshold,
        _ => false,
    };
    let dry = match (r.moisture, rules.find(Sensor::Moisture, Comparator::Below)) {
        (Some(m), Some(rule)) => m < rule.threshold,
        _ => false,
    };
    BTreeMap::from([(Led::Heat, heat), (Led::Rain, r.rain == Some(true)), (Led::Dry, dry)])
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("every sensor is powered off at {0}")]
    EmptyReading(DateTime<Utc>),
    #[error("acquisition at {now} precedes the previous one at {previous}")]
    TimeReversed {
        now: DateTime<Utc>,
        previous: DateTime<Utc>,
    },
    #[error(transparent)]
    Conversion(#[from] AdcError),
    #[error("invalid gateway config: {0}")]
    Config(String),
}

#[derive(Debug)]
struct GatewayState<T> {
    schedule: PowerSchedule,
    ledger: EnergyLedger<T>,
    last: Option<DateTime<Utc>>,
}

/// Acquisition side of the gateway. Schedule and ledger sit behind a mutex so
/// another thread may swap the schedule between cycles.
#[derive(Debug, Clone)]
pub struct Gateway<T> {
    config: GatewayConfig<T>,
    adc: AdcFrontend<T>,
    state: Arc<Mutex<GatewayState<T>>>,
}

impl<T: Real> Gateway<T> {
    pub fn new(config: GatewayConfig<T>, adc: AdcFrontend<T>) -> Result<Self, GatewayError> {
        config.validate()?;
        let state = GatewayState {
            schedule: PowerSchedule::default(),
            ledger: EnergyLedger::new(config.power_mw),
            last: None,
        };
        Ok(Gateway { config, adc, state: Arc::new(Mutex::new(state)) })
    }

    pub fn config(&self) -> &GatewayConfig<T> {
        &self.config
    }

    pub fn adc(&self) -> &AdcFrontend<T> {
        &self.adc
    }

    fn lock(&self) -> MutexGuard<'_, GatewayState<T>> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Replaces the active schedule; takes effect from the next cycle.
    pub fn apply_schedule(&self, schedule: PowerSchedule) {
        self.lock().schedule = schedule;
    }

    pub fn schedule(&self) -> PowerSchedule {
        self.lock().schedule.clone()
    }

    pub fn ledger(&self) -> EnergyLedger<T> {
        self.lock().ledger.clone()
    }

    /// Reads every powered sensor at `now`.
    ///
    /// Analog values go through the full converter chain so the reading
    /// carries what the hardware would report; rain is copied from the
    /// digital line. Each powered sensor is charged one sample interval.
    pub fn acquire_cycle(&self, now: DateTime<Utc>, env: &EnvSample<T>) -> Result<Reading<T>, GatewayError> {
        let mut state = self.lock();
        if let Some(previous) = state.last {
            if now < previous {
                return Err(GatewayError::TimeReversed { now, previous });
            }
        }
        let mut reading = Reading::empty(now);
        let powered: Vec<Sensor> = Sensor::ALL
            .into_iter()
            .filter(|&s| state.schedule.is_on(s, now))
            .collect();
        for &sensor in &powered {
            match sensor {
                Sensor::Rain => reading.rain = Some(env.rain),
                s => reading.set(s, Some(self.adc.convert(s, env.value(s))?)),
            }
        }
        state.last = Some(now);
        for sensor in powered {
            state.ledger.advance(sensor, self.config.sample_interval_s);
        }
        if reading.is_empty() {
            return Err(GatewayError::EmptyReading(now));
        }
        Ok(reading)
    }
}
