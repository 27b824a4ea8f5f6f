//! Drives a scenario through the gateway: acquire, display, evaluate,
//! publish, and (optionally) re-plan sensor power every forecast horizon.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};

use crate::analytics::{
    moving_average, plan_duty_cycle, AlertEvaluator, AlertEvent, AlertRuleSet, DutyCycleConfig, ForecastConfig,
    IrrigationCommand, PowerSchedule,
};
use crate::env_sim::{EnvSample, ScenarioSpec};
use crate::gateway::{
    indicator_states, render_lcd, ChannelTransport, EnergyLedger, Gateway, GatewayError, LcdFrame, Led,
    PublishOutcome, Publisher, Reading,
};
use crate::{Real, Sensor};

/// How simulated time maps onto wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pace {
    /// No waiting at all.
    Max,
    /// Simulated seconds per wall-clock second.
    Factor(f64),
}

impl std::str::FromStr for Pace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Pace::Max);
        }
        match s.trim_end_matches('x').parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Pace::Factor(f)),
            _ => Err(format!("speed must be `max` or a positive factor, got {s:?}")),
        }
    }
}

impl Pace {
    pub fn wall_time(&self, simulated: Duration) -> Option<Duration> {
        match self {
            Pace::Max => None,
            Pace::Factor(f) => Some(simulated.div_f64(*f)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions<T> {
    /// Wall-clock instant of scenario time zero.
    pub start: DateTime<Utc>,
    pub pace: Pace,
    /// Pressure smoothing for the duty-cycle planner; its horizon is the
    /// re-planning period in ticks.
    pub forecast: ForecastConfig,
    /// `None` keeps every sensor on.
    pub duty_cycle: Option<DutyCycleConfig<T>>,
    pub rules: AlertRuleSet<T>,
    pub moisture_floor: T,
    pub moisture_ceiling: T,
}

impl<T: Real> RunOptions<T> {
    pub fn new(start: DateTime<Utc>) -> Self {
        RunOptions {
            start,
            pace: Pace::Max,
            forecast: ForecastConfig::default(),
            duty_cycle: None,
            rules: AlertRuleSet::default(),
            moisture_floor: T::lit(20.0),
            moisture_ceiling: T::lit(40.0),
        }
    }
}

/// Everything that happened in one acquisition cycle.
#[derive(Debug, Clone)]
pub struct CycleRecord<T> {
    pub index: usize,
    pub at: DateTime<Utc>,
    pub env: EnvSample<T>,
    /// `None` when every sensor was powered off.
    pub reading: Option<Reading<T>>,
    pub lcd: Option<LcdFrame>,
    pub leds: BTreeMap<Led, bool>,
    pub alerts: Vec<AlertEvent>,
    pub irrigation: Option<IrrigationCommand>,
    pub outcome: Option<PublishOutcome>,
    pub ledger: EnergyLedger<T>,
}

#[derive(Debug, Clone)]
pub struct PlanRecord<T> {
    pub at: DateTime<Utc>,
    pub pressure_forecast: Vec<T>,
    pub schedule: PowerSchedule,
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub cycles: usize,
    pub readings: Vec<Reading<T>>,
    /// Entry ids acknowledged by the service, in delivery order.
    pub acknowledged: Vec<u64>,
    pub skipped_cycles: usize,
    pub backlog_left: usize,
    pub overflow_drops: u64,
    pub rejected: u64,
    pub alerts: Vec<AlertEvent>,
    pub plans: Vec<PlanRecord<T>>,
    pub ledger: EnergyLedger<T>,
    /// Energy the same run would have used with every sensor always on.
    pub always_on_energy_mj: T,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("gateway samples every {gateway} s but the scenario ticks every {scenario} s")]
    IntervalMismatch { gateway: u64, scenario: u64 },
}

pub fn run_scenario<T, C>(
    spec: &ScenarioSpec<T>,
    gateway: &Gateway<T>,
    publisher: &mut Publisher<C>,
    opts: &RunOptions<T>,
    mut observe: impl FnMut(&CycleRecord<T>),
) -> Result<RunReport<T>, PipelineError>
where
    T: Real,
    C: ChannelTransport,
{
    let interval = gateway.config().sample_interval_s;
    if interval != spec.tick_s {
        return Err(PipelineError::IntervalMismatch { gateway: interval, scenario: spec.tick_s });
    }
    let tick = TimeDelta::seconds(spec.tick_s as i64);
    let mut evaluator = AlertEvaluator::new(opts.rules.clone());
    let mut report = RunReport {
        cycles: 0,
        readings: Vec::new(),
        acknowledged: Vec::new(),
        skipped_cycles: 0,
        backlog_left: 0,
        overflow_drops: 0,
        rejected: 0,
        alerts: Vec::new(),
        plans: Vec::new(),
        ledger: gateway.ledger(),
        always_on_energy_mj: T::zero(),
    };
    let mut pressures: Vec<T> = Vec::new();
    let mut rain_seen: Vec<bool> = Vec::new();

    for (index, env) in spec.samples().enumerate() {
        let at = opts.start + tick * index as i32;
        if let Some(dc) = &opts.duty_cycle {
            if index % opts.forecast.horizon == 0 {
                let forecast = moving_average(&pressures, &opts.forecast).horizon;
                let cfg = DutyCycleConfig { step: tick, ..*dc };
                let schedule = plan_duty_cycle(at, &forecast, &rain_seen, &cfg);
                gateway.apply_schedule(schedule.clone());
                report.plans.push(PlanRecord { at, pressure_forecast: forecast, schedule });
            }
        }

        let mut record = CycleRecord {
            index,
            at,
            env,
            reading: None,
            lcd: None,
            leds: BTreeMap::new(),
            alerts: Vec::new(),
            irrigation: None,
            outcome: None,
            ledger: report.ledger.clone(),
        };
        report.cycles += 1;
        match gateway.acquire_cycle(at, &env) {
            Ok(reading) => {
                if let Some(p) = reading.pressure {
                    pressures.push(p);
                }
                if let Some(r) = reading.rain {
                    rain_seen.push(r);
                }
                record.lcd = Some(render_lcd(&reading));
                record.leds = indicator_states(&reading, &opts.rules);
                record.alerts = evaluator.ingest(&reading);
                if let Some(m) = reading.moisture {
                    // a sleeping rain sensor means no rain was expected
                    let rain = reading.rain.unwrap_or(false);
                    record.irrigation =
                        crate::analytics::irrigation_decide(rain, m, opts.moisture_floor, opts.moisture_ceiling, at)
                            .ok();
                }
                let outcome = publisher.publish(&reading);
                report.acknowledged.extend_from_slice(outcome.flushed());
                report.acknowledged.extend(outcome.entry_id());
                record.outcome = Some(outcome);
                report.alerts.extend(record.alerts.iter().cloned());
                report.readings.push(reading);
                record.reading = Some(reading);
            }
            Err(GatewayError::EmptyReading(_)) => report.skipped_cycles += 1,
            Err(e) => return Err(e.into()),
        }
        record.ledger = gateway.ledger();
        observe(&record);
        if let Some(wait) = opts.pace.wall_time(Duration::from_secs(spec.tick_s)) {
            std::thread::sleep(wait);
        }
    }

    match publisher.flush() {
        Ok(ids) => report.acknowledged.extend(ids),
        Err((_, ids)) => report.acknowledged.extend(ids),
    }
    report.backlog_left = publisher.backlog_len();
    report.overflow_drops = publisher.overflow_drops();
    report.rejected = publisher.rejected();
    report.ledger = gateway.ledger();
    let seconds = T::from_u64(report.cycles as u64 * interval).expect("seconds fit");
    report.always_on_energy_mj = Sensor::ALL
        .iter()
        .fold(T::zero(), |acc, s| acc + seconds * gateway.config().power_mw[s.index()]);
    Ok(report)
}
