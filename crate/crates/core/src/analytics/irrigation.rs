use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IrrigationAction {
    Pause,
    Activate,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationCommand {
    pub action: IrrigationAction,
    pub reason: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("moisture floor {floor} must be below ceiling {ceiling}")]
pub struct IrrigationError {
    pub floor: f64,
    pub ceiling: f64,
}

/// Rain pauses irrigation outright. Without rain, moisture below `floor`
/// activates it, moisture at or above `ceiling` pauses it, and the band in
/// between holds the current state.
pub fn irrigation_decide<T: Real>(
    rain: bool,
    moisture: T,
    floor: T,
    ceiling: T,
    at: DateTime<Utc>,
) -> Result<IrrigationCommand, IrrigationError> {
    if !(floor < ceiling) {
        return Err(IrrigationError { floor: floor.as_f64(), ceiling: ceiling.as_f64() });
    }
    let (action, reason) = if rain {
        (IrrigationAction::Pause, "rain detected".to_string())
    } else if moisture < floor {
        (IrrigationAction::Activate, format!("moisture {moisture:.2}% below floor {floor}%"))
    } else if moisture >= ceiling {
        (IrrigationAction::Pause, format!("moisture {moisture:.2}% at or above ceiling {ceiling}%"))
    } else {
        (IrrigationAction::Hold, format!("moisture {moisture:.2}% within [{floor}, {ceiling})%"))
    };
    Ok(IrrigationCommand { action, reason, timestamp: at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decide(rain: bool, m: f64) -> IrrigationAction {
        irrigation_decide(rain, m, 20.0, 40.0, Utc::now()).unwrap().action
    }

    #[test]
    fn truth_table() {
        assert_eq!(decide(true, 12.67), IrrigationAction::Pause);
        assert_eq!(decide(true, 45.0), IrrigationAction::Pause);
        assert_eq!(decide(false, 12.67), IrrigationAction::Activate);
        assert_eq!(decide(false, 25.0), IrrigationAction::Hold);
        assert_eq!(decide(false, 40.0), IrrigationAction::Pause);
        assert_eq!(decide(false, 20.0), IrrigationAction::Hold);
    }

    #[test]
    fn thresholds_are_checked() {
        assert!(irrigation_decide(false, 30.0, 40.0, 20.0, Utc::now()).is_err());
        assert!(irrigation_decide(false, 30.0, 20.0, 20.0, Utc::now()).is_err());
        assert!(irrigation_decide(false, 30.0, f64::NAN, 20.0, Utc::now()).is_err());
    }

    #[test]
    fn nan_moisture_holds() {
        assert_eq!(decide(false, f64::NAN), IrrigationAction::Hold);
    }

    proptest! {
        #[test]
        fn never_activates_in_rain(m in -10.0f64..110.0) {
            prop_assert_ne!(decide(true, m), IrrigationAction::Activate);
        }
    }
}
