//! Sustained-threshold alerting.
//!
//! A rule fires once when its condition has held for `sustain` consecutive
//! readings and re-arms only after a reading that does not violate it.
//! Readings without the rule's parameter leave the episode untouched.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::gateway::Reading;
use crate::{Real, Sensor};

pub const HEAT_MESSAGE: &str = "Temperature is high, consider cooling measures";
pub const DRY_MESSAGE: &str = "Soil moisture is low, consider irrigation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">", alias = "gt")]
    Above,
    #[serde(rename = "<", alias = "lt")]
    Below,
}

impl Comparator {
    pub fn violated<T: PartialOrd>(self, value: T, threshold: T) -> bool {
        match self {
            Comparator::Above => value > threshold,
            Comparator::Below => value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule {0:?}: sustain must be at least 1")]
    Sustain(String),
    #[error("rule {0:?}: message must not be empty")]
    EmptyMessage(String),
    #[error("duplicate rule id {0:?}")]
    DuplicateId(String),
    #[error("rule {0:?}: threshold must be finite")]
    Threshold(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRule<T> {
    pub id: String,
    pub parameter: Sensor,
    pub comparator: Comparator,
    pub threshold: T,
    #[serde(default = "default_sustain")]
    pub sustain: usize,
    pub message: String,
}

fn default_sustain() -> usize {
    3
}

impl<T: Real> AlertRule<T> {
    pub fn heat() -> Self {
        AlertRule {
            id: "heat".into(),
            parameter: Sensor::Temperature,
            comparator: Comparator::Above,
            threshold: T::lit(35.0),
            sustain: 3,
            message: HEAT_MESSAGE.into(),
        }
    }

    pub fn dry() -> Self {
        AlertRule {
            id: "dry".into(),
            parameter: Sensor::Moisture,
            comparator: Comparator::Below,
            threshold: T::lit(20.0),
            sustain: 3,
            message: DRY_MESSAGE.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.sustain == 0 {
            return Err(RuleError::Sustain(self.id.clone()));
        }
        if self.message.trim().is_empty() {
            return Err(RuleError::EmptyMessage(self.id.clone()));
        }
        if !self.threshold.is_finite() {
            return Err(RuleError::Threshold(self.id.clone()));
        }
        Ok(())
    }

    /// `None` when the reading lacks the parameter.
    pub fn violated_by(&self, reading: &Reading<T>) -> Option<bool> {
        reading
            .value(self.parameter)
            .map(|v| self.comparator.violated(v, self.threshold))
    }
}

/// Validated, ordered list of rules. Serialized as `[[rule]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRuleSet<T> {
    #[serde(rename = "rule")]
    rules: Vec<AlertRule<T>>,
}

impl<T: Real> Default for AlertRuleSet<T> {
    fn default() -> Self {
        AlertRuleSet { rules: vec![AlertRule::heat(), AlertRule::dry()] }
    }
}

impl<T: Real> AlertRuleSet<T> {
    pub fn new(rules: Vec<AlertRule<T>>) -> Result<Self, RuleError> {
        let set = AlertRuleSet { rules };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let mut ids = std::collections::HashSet::new();
        for rule in &self.rules {
            rule.validate()?;
            if !ids.insert(rule.id.as_str()) {
                return Err(RuleError::DuplicateId(rule.id.clone()));
            }
        }
        Ok(())
    }

    pub fn rules(&self) -> &[AlertRule<T>] {
        &self.rules
    }

    /// First rule on `parameter` using `comparator`.
    pub fn find(&self, parameter: Sensor, comparator: Comparator) -> Option<&AlertRule<T>> {
        self.rules
            .iter()
            .find(|r| r.parameter == parameter && r.comparator == comparator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub rule_id: String,
    pub first_violation: DateTime<Utc>,
    pub triggered_at: DateTime<Utc>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
struct Episode {
    run: usize,
    first: Option<DateTime<Utc>>,
    fired: bool,
}

/// Carries per-rule episode state across calls so readings can be fed
/// incrementally.
#[derive(Debug, Clone)]
pub struct AlertEvaluator<T> {
    rules: AlertRuleSet<T>,
    episodes: Vec<Episode>,
}

impl<T: Real> AlertEvaluator<T> {
    pub fn new(rules: AlertRuleSet<T>) -> Self {
        let episodes = vec![Episode::default(); rules.rules.len()];
        AlertEvaluator { rules, episodes }
    }

    pub fn rules(&self) -> &AlertRuleSet<T> {
        &self.rules
    }

    pub fn ingest(&mut self, reading: &Reading<T>) -> Vec<AlertEvent> {
        let mut events = Vec::new();
        for (rule, ep) in self.rules.rules.iter().zip(&mut self.episodes) {
            match rule.violated_by(reading) {
                None => {}
                Some(false) => *ep = Episode::default(),
                Some(true) => {
                    ep.run += 1;
                    let first = *ep.first.get_or_insert(reading.timestamp);
                    if ep.run >= rule.sustain && !ep.fired {
                        ep.fired = true;
                        events.push(AlertEvent {
                            rule_id: rule.id.clone(),
                            first_violation: first,
                            triggered_at: reading.timestamp,
                            message: rule.message.clone(),
                        });
                    }
                }
            }
        }
        events
    }
}

/// Offline evaluation of a whole time-ordered sequence.
pub fn evaluate_alerts<T: Real>(readings: &[Reading<T>], rules: &AlertRuleSet<T>) -> Vec<AlertEvent> {
    let mut evaluator = AlertEvaluator::new(rules.clone());
    readings.iter().flat_map(|r| evaluator.ingest(r)).collect()
}
