use std::net::SocketAddr;
use std::path::PathBuf;

use agrisense_core::channel::{ChannelMeta, ChannelStore, Durability, NewChannel, StoreConfig, StoreError};
use chrono::TimeDelta;
use serde::Deserialize;

/// `serve` configuration file:
///
/// ```toml
/// bind = "127.0.0.1:3000"
/// data_dir = "data"
/// rate_limit_s = 15
///
/// [[channel]]
/// id = 1
/// name = "farm"
/// write_key = "ABCDEFGH12345678"
/// fields = ["Temperature", "Pressure", "Moisture", "Rain"]
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_rate_limit")]
    pub rate_limit_s: u64,
    /// Skip fsync on append.
    #[serde(default)]
    pub buffered: bool,
    #[serde(default, rename = "channel")]
    pub channels: Vec<NewChannel>,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 3000))
}

fn default_rate_limit() -> u64 {
    15
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: default_bind(),
            data_dir: None,
            rate_limit_s: default_rate_limit(),
            buffered: false,
            channels: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            rate_limit: TimeDelta::seconds(self.rate_limit_s as i64),
            durability: if self.buffered { Durability::Buffered } else { Durability::Sync },
        }
    }
}

/// Creates each configured channel unless one with the same id or write key
/// already exists. Returns the channels that were created.
pub fn ensure_channels(store: &ChannelStore, channels: &[NewChannel]) -> Result<Vec<ChannelMeta>, StoreError> {
    let mut created = Vec::new();
    for spec in channels {
        let exists = store.channel_ids().into_iter().filter_map(|id| store.channel(id)).any(|m| {
            Some(m.id) == spec.id || spec.write_key.as_deref() == Some(m.write_key.as_str())
        });
        if !exists {
            created.push(store.create_channel(spec.clone())?);
        }
    }
    Ok(created)
}
