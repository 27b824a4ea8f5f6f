use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The four field sensors. The discriminant order doubles as the channel
/// field convention: field1 temperature, field2 pressure, field3 moisture,
/// field4 rain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Temperature,
    Pressure,
    Moisture,
    Rain,
}

impl Sensor {
    pub const ALL: [Sensor; 4] = [
        Sensor::Temperature,
        Sensor::Pressure,
        Sensor::Moisture,
        Sensor::Rain,
    ];

    /// Channel field number (1-based) carrying this sensor.
    pub fn field(self) -> u8 {
        match self {
            Sensor::Temperature => 1,
            Sensor::Pressure => 2,
            Sensor::Moisture => 3,
            Sensor::Rain => 4,
        }
    }

    pub fn from_field(field: u8) -> Option<Sensor> {
        Sensor::ALL.into_iter().find(|s| s.field() == field)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Temperature => "temperature",
            Sensor::Pressure => "pressure",
            Sensor::Moisture => "moisture",
            Sensor::Rain => "rain",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sensor::Temperature => "Temperature",
            Sensor::Pressure => "Pressure",
            Sensor::Moisture => "Moisture",
            Sensor::Rain => "Rain",
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sensor {0:?}")]
pub struct UnknownSensor(pub String);

impl FromStr for Sensor {
    type Err = UnknownSensor;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "temperature" | "temp" => Ok(Sensor::Temperature),
            "pressure" | "press" => Ok(Sensor::Pressure),
            "moisture" | "moist" => Ok(Sensor::Moisture),
            "rain" => Ok(Sensor::Rain),
            other => Err(UnknownSensor(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_mapping_round_trips() {
        for s in Sensor::ALL {
            assert_eq!(Sensor::from_field(s.field()), Some(s));
            assert_eq!(s.name().parse::<Sensor>().unwrap(), s);
        }
        assert_eq!(Sensor::from_field(5), None);
    }
}
