//! Core of the agrisense telemetry stack.
//!
//! The numeric modules are generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the type aliases at the crate root pin
//! the common `f64` instantiations. The moving-average forecaster only needs
//! field arithmetic and also runs over exact rationals.
//!
//! Data flows `env_sim` → `adc` → `gateway` → `channel` and the decision
//! layer in `analytics` is consumed by the gateway pipeline and by clients.

// negated comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adc;
pub mod analytics;
pub mod channel;
pub mod env_sim;
pub mod gateway;
pub mod pipeline;
pub mod scalar;
pub mod sensor;

pub use scalar::Real;
pub use sensor::Sensor;

pub type EnvSample = env_sim::EnvSample<f64>;
pub type ScenarioSpec = env_sim::ScenarioSpec<f64>;
pub type TransferFunction = adc::TransferFunction<f64>;
pub type AdcFrontend = adc::AdcFrontend<f64>;
pub type Reading = gateway::Reading<f64>;
pub type GatewayConfig = gateway::GatewayConfig<f64>;
pub type Gateway = gateway::Gateway<f64>;
pub type AlertRule = analytics::AlertRule<f64>;
pub type AlertRuleSet = analytics::AlertRuleSet<f64>;
pub type AlertEvaluator = analytics::AlertEvaluator<f64>;

pub type EnvSampleF32 = env_sim::EnvSample<f32>;
pub type ReadingF32 = gateway::Reading<f32>;
