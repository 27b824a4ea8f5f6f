//! ThingSpeak-style channel store.
//!
//! Channels hold up to eight numeric fields per entry. Writes are
//! authenticated by a per-channel write key, rate limited, and made durable
//! in an append-only record log before they are acknowledged.

mod clock;
mod log;
mod store;
pub mod wire;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use self::clock::{Clock, ManualClock, SystemClock};
pub use self::log::{Durability, LogError, Record, RecordLog, MAX_RECORD_LEN};
pub use self::store::{ChannelStore, FeedQuery, LocalTransport, StoreConfig, UpdateResult};
pub use self::wire::{format_timestamp, parse_timestamp, FeedPage};

pub const FIELD_COUNT: usize = 8;
pub const KEY_LEN: usize = 16;
pub const DEFAULT_RESULTS: usize = 100;
pub const MAX_RESULTS: usize = 8000;

pub type Fields = [Option<String>; FIELD_COUNT];

/// Persisted channel definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub id: u64,
    pub name: String,
    pub write_key: String,
    pub read_key: Option<String>,
    /// Labels of field1..field8; unlabeled fields are disabled.
    pub labels: Fields,
}

impl ChannelMeta {
    pub fn field_enabled(&self, field: usize) -> bool {
        (1..=FIELD_COUNT).contains(&field) && self.labels[field - 1].is_some()
    }

    pub fn enabled_fields(&self) -> Vec<u8> {
        (1..=FIELD_COUNT as u8).filter(|&n| self.field_enabled(n as usize)).collect()
    }

    pub fn is_private(&self) -> bool {
        self.read_key.is_some()
    }
}

/// One stored record of a channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub entry_id: u64,
    pub created_at: DateTime<Utc>,
    pub fields: Fields,
}

impl FeedEntry {
    pub fn field(&self, n: usize) -> Option<&str> {
        n.checked_sub(1)
            .and_then(|i| self.fields.get(i))
            .and_then(|f| f.as_deref())
    }
}

/// Request to create a channel. Missing keys are generated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewChannel {
    #[serde(default)]
    pub id: Option<u64>,
    pub name: String,
    #[serde(default)]
    pub write_key: Option<String>,
    #[serde(default)]
    pub read_key: Option<String>,
    /// Field labels in order, field1 first.
    #[serde(default)]
    pub fields: Vec<String>,
}

impl NewChannel {
    /// A channel laid out with the sensor field convention.
    pub fn sensors(name: &str) -> Self {
        NewChannel {
            name: name.into(),
            fields: crate::Sensor::ALL.iter().map(|s| s.label().to_string()).collect(),
            ..Default::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid API key")]
    Unauthorized,
    #[error("channel {0} not found")]
    NotFound(u64),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("channel {0} already exists")]
    Conflict(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
