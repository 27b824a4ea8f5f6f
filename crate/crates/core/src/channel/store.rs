use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, TimeDelta, Timelike, Utc};
use rand::distr::{Alphanumeric, SampleString};

use super::log::{Durability, Record, RecordLog};
use super::wire::FeedPage;
use super::{
    ChannelMeta, Clock, FeedEntry, Fields, NewChannel, StoreError, SystemClock, DEFAULT_RESULTS, FIELD_COUNT,
    KEY_LEN, MAX_RESULTS,
};
use crate::gateway::{ChannelTransport, TransportError, UpdateReply, UpdateRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    /// Minimum service-clock spacing between accepted writes to a channel.
    /// Zero disables the limit.
    pub rate_limit: TimeDelta,
    pub durability: Durability,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { rate_limit: TimeDelta::seconds(15), durability: Durability::Sync }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateResult {
    Accepted(u64),
    RateLimited,
}

/// Parameters of a feed read.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedQuery {
    /// Number of most recent matching entries; defaults to 100, capped at 8000.
    pub results: Option<usize>,
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
    pub read_key: Option<String>,
    /// Restrict the page to one field.
    pub field: Option<u8>,
}

#[derive(Debug)]
struct WriterState {
    log: Option<RecordLog>,
    next_id: u64,
    last_accept: Option<DateTime<Utc>>,
    last_created: Option<DateTime<Utc>>,
}

#[derive(Debug)]
struct Slot {
    meta: ChannelMeta,
    // Writers serialize here; readers only touch `entries`, which is locked
    // for the duration of a Vec push.
    writer: Mutex<WriterState>,
    entries: RwLock<Vec<FeedEntry>>,
}

/// All channels of one service instance.
pub struct ChannelStore {
    dir: Option<PathBuf>,
    config: StoreConfig,
    clock: Arc<dyn Clock>,
    channels: RwLock<BTreeMap<u64, Arc<Slot>>>,
    keys: RwLock<HashMap<String, u64>>,
    // serializes channel creation so ids and key checks stay consistent
    create: Mutex<()>,
}

impl std::fmt::Debug for ChannelStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelStore")
            .field("dir", &self.dir)
            .field("config", &self.config)
            .field("channels", &self.channel_ids())
            .finish()
    }
}

fn log_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("channel-{id}.log"))
}

fn truncate_to_second(t: DateTime<Utc>) -> DateTime<Utc> {
    t.with_nanosecond(0).expect("zero nanoseconds is valid")
}

fn is_valid_key(key: &str) -> bool {
    key.len() == KEY_LEN && key.bytes().all(|b| b.is_ascii_alphanumeric())
}

fn generate_key() -> String {
    Alphanumeric.sample_string(&mut rand::rng(), KEY_LEN).to_ascii_uppercase()
}

impl ChannelStore {
    /// Store without persistence.
    pub fn in_memory(config: StoreConfig, clock: Arc<dyn Clock>) -> Self {
        ChannelStore {
            dir: None,
            config,
            clock,
            channels: RwLock::new(BTreeMap::new()),
            keys: RwLock::new(HashMap::new()),
            create: Mutex::new(()),
        }
    }

    /// Opens (or initializes) a store directory, replaying every channel log.
    ///
    /// Torn final records are discarded; corruption before the final record
    /// fails with the file and byte offset.
    pub fn open(dir: impl Into<PathBuf>, config: StoreConfig, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut store = ChannelStore::in_memory(config, clock);
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("channel-") && n.ends_with(".log"))
            })
            .collect();
        paths.sort();
        for path in paths {
            let (log, records) = RecordLog::open(&path, config.durability)?;
            let mut records = records.into_iter();
            let meta = match records.next() {
                Some(Record::Channel(meta)) => meta,
                // creation never completed
                None => {
                    drop(log);
                    std::fs::remove_file(&path)?;
                    continue;
                }
                Some(Record::Entry(_)) => {
                    return Err(StoreError::BadRequest(format!(
                        "{}: log does not start with a channel record",
                        path.display()
                    )))
                }
            };
            let mut entries = Vec::new();
            for record in records {
                match record {
                    Record::Entry(e) => {
                        let expected = entries.len() as u64 + 1;
                        if e.entry_id != expected {
                            return Err(StoreError::BadRequest(format!(
                                "{}: entry id {} where {expected} was expected",
                                path.display(),
                                e.entry_id
                            )));
                        }
                        entries.push(e);
                    }
                    Record::Channel(_) => {
                        return Err(StoreError::BadRequest(format!(
                            "{}: duplicate channel record",
                            path.display()
                        )))
                    }
                }
            }
            store.insert_slot(meta, Some(log), entries)?;
        }
        store.dir = Some(dir);
        Ok(store)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn insert_slot(&self, meta: ChannelMeta, log: Option<RecordLog>, entries: Vec<FeedEntry>) -> Result<(), StoreError> {
        let mut channels = self.channels.write().unwrap_or_else(|e| e.into_inner());
        let mut keys = self.keys.write().unwrap_or_else(|e| e.into_inner());
        if channels.contains_key(&meta.id) {
            return Err(StoreError::Conflict(format!("id {}", meta.id)));
        }
        if keys.contains_key(&meta.write_key) {
            return Err(StoreError::Conflict(format!("write key of channel {}", meta.id)));
        }
        let writer = WriterState {
            log,
            next_id: entries.len() as u64 + 1,
            last_accept: None,
            last_created: entries.last().map(|e| e.created_at),
        };
        keys.insert(meta.write_key.clone(), meta.id);
        channels.insert(
            meta.id,
            Arc::new(Slot { meta, writer: Mutex::new(writer), entries: RwLock::new(entries) }),
        );
        Ok(())
    }

    pub fn create_channel(&self, spec: NewChannel) -> Result<ChannelMeta, StoreError> {
        let _guard = self.create.lock().unwrap_or_else(|e| e.into_inner());
        if spec.name.trim().is_empty() {
            return Err(StoreError::BadRequest("channel name must not be empty".into()));
        }
        if spec.fields.is_empty() || spec.fields.len() > FIELD_COUNT {
            return Err(StoreError::BadRequest(format!("a channel needs 1..={FIELD_COUNT} field labels")));
        }
        let write_key = spec.write_key.unwrap_or_else(generate_key);
        if !is_valid_key(&write_key) {
            return Err(StoreError::BadRequest(format!("write key must be {KEY_LEN} alphanumeric characters")));
        }
        if let Some(read_key) = &spec.read_key {
            if !is_valid_key(read_key) || *read_key == write_key {
                return Err(StoreError::BadRequest(
                    "read key must be a distinct 16-character alphanumeric token".into(),
                ));
            }
        }
        let id = match spec.id {
            Some(0) => return Err(StoreError::BadRequest("channel ids start at 1".into())),
            Some(id) => id,
            None => self.channel_ids().last().map_or(1, |last| last + 1),
        };
        let mut labels: Fields = Default::default();
        for (slot, label) in labels.iter_mut().zip(spec.fields) {
            *slot = Some(label);
        }
        let meta = ChannelMeta { id, name: spec.name, write_key, read_key: spec.read_key, labels };
        {
            let channels = self.channels.read().unwrap_or_else(|e| e.into_inner());
            let keys = self.keys.read().unwrap_or_else(|e| e.into_inner());
            if channels.contains_key(&id) {
                return Err(StoreError::Conflict(format!("id {id}")));
            }
            if keys.contains_key(&meta.write_key) {
                return Err(StoreError::Conflict("write key already in use".into()));
            }
        }
        let log = match &self.dir {
            Some(dir) => {
                let mut log = RecordLog::create(&log_path(dir, id), self.config.durability)?;
                log.append(&Record::Channel(meta.clone()))?;
                Some(log)
            }
            None => None,
        };
        self.insert_slot(meta.clone(), log, Vec::new())?;
        Ok(meta)
    }

    pub fn channel_ids(&self) -> Vec<u64> {
        self.channels.read().unwrap_or_else(|e| e.into_inner()).keys().copied().collect()
    }

    pub fn channel(&self, id: u64) -> Option<ChannelMeta> {
        self.slot(id).map(|s| s.meta.clone())
    }

    fn slot(&self, id: u64) -> Option<Arc<Slot>> {
        self.channels.read().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }

    /// Appends one entry to the channel owning `write_key`.
    ///
    /// The entry is durable before `Accepted` is returned. Values are stored
    /// as the decimal text supplied.
    pub fn update(
        &self,
        write_key: &str,
        fields: &Fields,
        created_at: Option<DateTime<Utc>>,
    ) -> Result<UpdateResult, StoreError> {
        let id = *self
            .keys
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(write_key)
            .ok_or(StoreError::Unauthorized)?;
        let slot = self.slot(id).ok_or(StoreError::NotFound(id))?;

        let mut normalized: Fields = Default::default();
        for (n, value) in fields.iter().enumerate() {
            let Some(value) = value else { continue };
            let text = value.trim();
            if !slot.meta.field_enabled(n + 1) {
                return Err(StoreError::BadRequest(format!("field{} is not enabled on this channel", n + 1)));
            }
            if !text.parse::<f64>().is_ok_and(f64::is_finite) {
                return Err(StoreError::BadRequest(format!("field{} value {text:?} is not a number", n + 1)));
            }
            normalized[n] = Some(text.to_string());
        }
        if normalized.iter().all(Option::is_none) {
            return Err(StoreError::BadRequest("at least one field is required".into()));
        }

        let mut writer = slot.writer.lock().unwrap_or_else(|e| e.into_inner());
        let now = self.clock.now();
        if self.config.rate_limit > TimeDelta::zero() {
            if let Some(last) = writer.last_accept {
                if now - last < self.config.rate_limit {
                    return Ok(UpdateResult::RateLimited);
                }
            }
        }
        let created_at = truncate_to_second(created_at.unwrap_or(now));
        if let Some(previous) = writer.last_created {
            if created_at < previous {
                return Err(StoreError::BadRequest(format!(
                    "created_at {created_at} precedes the latest entry at {previous}"
                )));
            }
        }
        let entry = FeedEntry { entry_id: writer.next_id, created_at, fields: normalized };
        if let Some(log) = writer.log.as_mut() {
            log.append(&Record::Entry(entry.clone()))?;
        }
        writer.next_id += 1;
        writer.last_accept = Some(now);
        writer.last_created = Some(created_at);
        let id = entry.entry_id;
        slot.entries.write().unwrap_or_else(|e| e.into_inner()).push(entry);
        Ok(UpdateResult::Accepted(id))
    }

    /// The channel plus its most recent matching entries in ascending
    /// entry-id order.
    pub fn read_feeds(&self, channel_id: u64, query: &FeedQuery) -> Result<FeedPage, StoreError> {
        let slot = self.slot(channel_id).ok_or(StoreError::NotFound(channel_id))?;
        if let Some(required) = &slot.meta.read_key {
            if query.read_key.as_deref() != Some(required.as_str()) {
                return Err(StoreError::Unauthorized);
            }
        }
        let selection = match query.field {
            Some(n) if !slot.meta.field_enabled(n as usize) => {
                return Err(StoreError::BadRequest(format!("field{n} is not enabled on this channel")))
            }
            Some(n) => vec![n],
            None => slot.meta.enabled_fields(),
        };
        let results = query.results.unwrap_or(DEFAULT_RESULTS).min(MAX_RESULTS);
        let entries = slot.entries.read().unwrap_or_else(|e| e.into_inner());
        let in_window = |e: &&FeedEntry| {
            query.start.is_none_or(|s| e.created_at >= s) && query.end.is_none_or(|end| e.created_at <= end)
        };
        let matching: Vec<&FeedEntry> = entries.iter().filter(in_window).collect();
        let skip = matching.len().saturating_sub(results);
        let feeds = matching[skip..].iter().map(|&e| e.clone()).collect();
        Ok(FeedPage::new(slot.meta.clone(), feeds, selection))
    }

    /// Id that the next accepted write to `channel_id` will receive.
    pub fn next_entry_id(&self, channel_id: u64) -> Option<u64> {
        self.slot(channel_id)
            .map(|s| s.writer.lock().unwrap_or_else(|e| e.into_inner()).next_id)
    }
}

impl Default for ChannelStore {
    fn default() -> Self {
        ChannelStore::in_memory(StoreConfig::default(), Arc::new(SystemClock))
    }
}

/// In-process transport writing straight into a store.
#[derive(Debug, Clone)]
pub struct LocalTransport {
    pub store: Arc<ChannelStore>,
    pub write_key: String,
}

impl ChannelTransport for LocalTransport {
    fn update(&mut self, request: &UpdateRequest) -> Result<UpdateReply, TransportError> {
        match self.store.update(&self.write_key, &request.fields, request.created_at) {
            Ok(UpdateResult::Accepted(id)) => Ok(UpdateReply::Accepted(id)),
            Ok(UpdateResult::RateLimited) => Ok(UpdateReply::RateLimited),
            Err(e @ (StoreError::Unauthorized | StoreError::BadRequest(_) | StoreError::NotFound(_))) => {
                Ok(UpdateReply::Rejected(e.to_string()))
            }
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}
