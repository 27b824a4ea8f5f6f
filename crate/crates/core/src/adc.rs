//! Sensor transfer maps and a model of the MCP3208 12-bit converter.
//!
//! Temperature, pressure and moisture sit on single-ended channels 0, 1 and
//! 2. Rain is a digital line and never passes through the converter.

use std::fmt;

use crate::env_sim::Range;
use crate::{Real, Sensor};

/// Number of codes of a 12-bit converter.
pub const CODES: u32 = 4096;
pub const MAX_CODE: u16 = 4095;
pub const DEFAULT_VREF: f64 = 3.3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdcError {
    #[error("{sensor} value {value} outside transfer range [{min}, {max}]")]
    OutOfRange {
        sensor: Sensor,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("channel {0} is not in 0..=7")]
    InvalidChannel(u8),
    #[error("code {0} exceeds 12 bits")]
    InvalidCode(u16),
    #[error("malformed frame: {0}")]
    Frame(&'static str),
    #[error("invalid transfer function: {0}")]
    Transfer(String),
    #[error("{0} has no analog channel")]
    NotAnalog(Sensor),
}

/// A 12-bit conversion result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AdcCode(u16);

impl AdcCode {
    pub const ZERO: AdcCode = AdcCode(0);
    pub const FULL_SCALE: AdcCode = AdcCode(MAX_CODE);

    pub fn new(value: u16) -> Result<Self, AdcError> {
        if value > MAX_CODE {
            Err(AdcError::InvalidCode(value))
        } else {
            Ok(AdcCode(value))
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for AdcCode {
    type Error = AdcError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        AdcCode::new(value)
    }
}

impl fmt::Display for AdcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Linear map between a sensor's engineering unit and its output voltage:
/// `volts = offset + scale * quantity` over `range`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferFunction<T> {
    pub kind: Sensor,
    pub offset: T,
    pub scale: T,
    pub range: Range<T>,
    pub vref: T,
}

impl<T: Real> TransferFunction<T> {
    pub fn new(kind: Sensor, offset: T, scale: T, range: Range<T>, vref: T) -> Result<Self, AdcError> {
        if kind == Sensor::Rain {
            return Err(AdcError::NotAnalog(kind));
        }
        if !(scale > T::zero()) {
            return Err(AdcError::Transfer("scale must be positive".into()));
        }
        if !(range.min < range.max) || !(vref > T::zero()) {
            return Err(AdcError::Transfer("empty range or non-positive vref".into()));
        }
        // allow rounding slack at the endpoints; to_voltage clamps it away
        let slack = vref * T::epsilon() * T::lit(16.0);
        let lo = offset + scale * range.min;
        let hi = offset + scale * range.max;
        if lo < -slack || hi > vref + slack {
            return Err(AdcError::Transfer(format!(
                "{kind} map spans [{lo}, {hi}] V, outside [0, {vref}] V"
            )));
        }
        Ok(TransferFunction { kind, offset, scale, range, vref })
    }

    /// LM35-style 10 mV/°C, 0..150 °C.
    pub fn temperature(vref: T) -> Self {
        Self::new(
            Sensor::Temperature,
            T::zero(),
            T::lit(0.01),
            Range::new(T::zero(), T::lit(150.0)),
            vref,
        )
        .expect("default temperature map")
    }

    /// 950..1050 hPa onto 0..vref.
    pub fn pressure(vref: T) -> Self {
        let (lo, hi) = (T::lit(950.0), T::lit(1050.0));
        let scale = vref / (hi - lo);
        Self::new(Sensor::Pressure, -scale * lo, scale, Range::new(lo, hi), vref).expect("default pressure map")
    }

    /// 0..100 % onto 0..vref.
    pub fn moisture(vref: T) -> Self {
        let scale = vref / T::lit(100.0);
        Self::new(
            Sensor::Moisture,
            T::zero(),
            scale,
            Range::new(T::zero(), T::lit(100.0)),
            vref,
        )
        .expect("default moisture map")
    }

    pub fn to_voltage(&self, quantity: T) -> Result<T, AdcError> {
        if !self.range.contains(quantity) {
            return Err(AdcError::OutOfRange {
                sensor: self.kind,
                value: quantity.as_f64(),
                min: self.range.min.as_f64(),
                max: self.range.max.as_f64(),
            });
        }
        Ok((self.offset + self.scale * quantity).max(T::zero()).min(self.vref))
    }

    pub fn from_voltage(&self, volts: T) -> T {
        (volts - self.offset) / self.scale
    }

    /// Engineering-unit width of one code.
    pub fn lsb(&self) -> T {
        self.vref / T::lit(CODES as f64) / self.scale
    }
}

/// `floor(v * 4096 / vref)` clamped to the 12-bit span.
///
/// # Panics
///
/// If `vref` is not positive.
pub fn quantize<T: Real>(v: T, vref: T) -> AdcCode {
    assert!(vref > T::zero(), "vref must be positive");
    let raw = (v * T::lit(CODES as f64) / vref).floor();
    if !(raw > T::zero()) {
        return AdcCode::ZERO;
    }
    AdcCode(raw.min(T::lit(MAX_CODE as f64)).to_u16().unwrap_or(MAX_CODE))
}

/// Bin-midpoint reconstruction `(code + 0.5) * vref / 4096`.
pub fn decode<T: Real>(code: AdcCode, vref: T) -> T {
    (T::lit(code.0 as f64) + T::lit(0.5)) * vref / T::lit(CODES as f64)
}

/// One 3-octet full-duplex exchange with the converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpiFrame {
    pub request: [u8; 3],
    pub response: [u8; 3],
}

const START_BIT: u8 = 0b0000_0100;
const SINGLE_ENDED: u8 = 0b0000_0010;

/// Builds the frame for a single-ended read of `channel` returning `sample`.
///
/// Request: `0000 0 1 S D2 | D1 D0 xx xxxx | xxxx xxxx` (start, SGL, channel
/// select). Response: `xxxx xxxx | xxx 0 B11..B8 | B7..B0` (null bit then
/// the code, most significant bit first).
pub fn spi_transaction(channel: u8, sample: AdcCode) -> Result<SpiFrame, AdcError> {
    if channel > 7 {
        return Err(AdcError::InvalidChannel(channel));
    }
    let request = [START_BIT | SINGLE_ENDED | (channel >> 2), (channel & 0b11) << 6, 0];
    let code = sample.value();
    let response = [0, ((code >> 8) & 0x0f) as u8, (code & 0xff) as u8];
    Ok(SpiFrame { request, response })
}

/// Recovers `(channel, code)` from a frame.
pub fn parse_frame(frame: &SpiFrame) -> Result<(u8, AdcCode), AdcError> {
    let [r0, r1, _] = frame.request;
    if r0 & 0b1111_1000 != 0 || r0 & START_BIT == 0 {
        return Err(AdcError::Frame("missing start bit"));
    }
    if r0 & SINGLE_ENDED == 0 {
        return Err(AdcError::Frame("differential mode is not modeled"));
    }
    let channel = ((r0 & 1) << 2) | (r1 >> 6);
    let [_, d1, d2] = frame.response;
    if d1 & 0b0001_0000 != 0 {
        return Err(AdcError::Frame("null bit set"));
    }
    let code = (u16::from(d1 & 0x0f) << 8) | u16::from(d2);
    Ok((channel, AdcCode(code)))
}

/// The converter plus the analog sensors wired to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcFrontend<T> {
    pub vref: T,
    pub temperature: TransferFunction<T>,
    pub pressure: TransferFunction<T>,
    pub moisture: TransferFunction<T>,
}

impl<T: Real> Default for AdcFrontend<T> {
    fn default() -> Self {
        Self::with_vref(T::lit(DEFAULT_VREF))
    }
}

impl<T: Real> AdcFrontend<T> {
    pub fn with_vref(vref: T) -> Self {
        AdcFrontend {
            vref,
            temperature: TransferFunction::temperature(vref),
            pressure: TransferFunction::pressure(vref),
            moisture: TransferFunction::moisture(vref),
        }
    }

    pub fn transfer(&self, sensor: Sensor) -> Option<&TransferFunction<T>> {
        match sensor {
            Sensor::Temperature => Some(&self.temperature),
            Sensor::Pressure => Some(&self.pressure),
            Sensor::Moisture => Some(&self.moisture),
            Sensor::Rain => None,
        }
    }

    pub fn channel(sensor: Sensor) -> Option<u8> {
        match sensor {
            Sensor::Rain => None,
            other => Some(other.index() as u8),
        }
    }

    /// Runs one reading through the full chain: engineering value → volts →
    /// code → SPI frame → code → volts → engineering value.
    pub fn convert(&self, sensor: Sensor, quantity: T) -> Result<T, AdcError> {
        let tf = self.transfer(sensor).ok_or(AdcError::NotAnalog(sensor))?;
        let channel = Self::channel(sensor).ok_or(AdcError::NotAnalog(sensor))?;
        let code = quantize(tf.to_voltage(quantity)?, self.vref);
        let (echo, code) = parse_frame(&spi_transaction(channel, code)?)?;
        debug_assert_eq!(echo, channel);
        Ok(tf.from_voltage(decode(code, self.vref)))
    }
}
