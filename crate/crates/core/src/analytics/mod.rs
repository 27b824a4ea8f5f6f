//! Decision layer: forecasting, alerting, irrigation and sensor scheduling.

pub mod alerts;
pub mod duty_cycle;
pub mod forecast;
pub mod irrigation;

pub use alerts::{evaluate_alerts, AlertEvaluator, AlertEvent, AlertRule, AlertRuleSet, Comparator, RuleError};
pub use duty_cycle::{plan_duty_cycle, DutyCycleConfig, PowerSchedule, PowerState, ScheduleError, ScheduleInterval};
pub use forecast::{moving_average, Forecast, ForecastConfig};
pub use irrigation::{irrigation_decide, IrrigationAction, IrrigationCommand, IrrigationError};
