//! JSON bodies of the feed endpoints and the timestamp format.
//!
//! ```json
//! {"channel":{"id":1,"name":"farm","field1":"Temperature"},
//!  "feeds":[{"created_at":"2024-12-15T10:00:00Z","entry_id":1,"field1":"22.04"}]}
//! ```
//!
//! Field values are decimal strings exactly as written; absent values of a
//! selected field are `null`.

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::Value;

use super::{ChannelMeta, FeedEntry, Fields, FIELD_COUNT};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Accepts `2024-12-15T10:00:00Z`, `2024-12-15 10:00:00` (UTC) and RFC 3339
/// with an offset.
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
        .map(|n| n.and_utc())
}

/// Public part of a channel as shown in feed pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelInfo {
    pub id: u64,
    pub name: String,
    pub labels: Fields,
}

impl From<&ChannelMeta> for ChannelInfo {
    fn from(meta: &ChannelMeta) -> Self {
        ChannelInfo { id: meta.id, name: meta.name.clone(), labels: meta.labels.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedPage {
    pub channel: ChannelInfo,
    pub feeds: Vec<FeedEntry>,
    /// Field numbers emitted for each entry.
    pub selection: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected feed shape: {0}")]
    Shape(String),
}

impl FeedPage {
    pub fn new(meta: ChannelMeta, feeds: Vec<FeedEntry>, selection: Vec<u8>) -> Self {
        FeedPage { channel: ChannelInfo::from(&meta), feeds, selection }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feed pages serialize")
    }

    pub fn from_json(body: &str) -> Result<Self, WireError> {
        let shape = |m: &str| WireError::Shape(m.to_string());
        let root: Value = serde_json::from_str(body)?;
        let channel = root.get("channel").and_then(Value::as_object).ok_or_else(|| shape("missing channel"))?;
        let id = channel.get("id").and_then(Value::as_u64).ok_or_else(|| shape("channel.id"))?;
        let name = channel.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
        let mut labels: Fields = Default::default();
        for (n, label) in labels.iter_mut().enumerate() {
            *label = channel.get(&format!("field{}", n + 1)).and_then(Value::as_str).map(str::to_string);
        }
        let feeds_json = root.get("feeds").and_then(Value::as_array).ok_or_else(|| shape("missing feeds"))?;
        let mut selection: Vec<u8> = Vec::new();
        let mut feeds = Vec::with_capacity(feeds_json.len());
        for item in feeds_json {
            let obj = item.as_object().ok_or_else(|| shape("feed entry is not an object"))?;
            let entry_id = obj.get("entry_id").and_then(Value::as_u64).ok_or_else(|| shape("entry_id"))?;
            let created_at = obj
                .get("created_at")
                .and_then(Value::as_str)
                .and_then(parse_timestamp)
                .ok_or_else(|| shape("created_at"))?;
            let mut fields: Fields = Default::default();
            for n in 1..=FIELD_COUNT as u8 {
                let Some(v) = obj.get(&format!("field{n}")) else { continue };
                if !selection.contains(&n) {
                    selection.push(n);
                }
                fields[n as usize - 1] = match v {
                    Value::Null => None,
                    Value::String(s) => Some(s.clone()),
                    Value::Number(num) => Some(num.to_string()),
                    _ => return Err(shape("field value must be a string or null")),
                };
            }
            feeds.push(FeedEntry { entry_id, created_at, fields });
        }
        selection.sort_unstable();
        Ok(FeedPage { channel: ChannelInfo { id, name, labels }, feeds, selection })
    }
}

struct ChannelJson<'a>(&'a ChannelInfo);

impl Serialize for ChannelJson<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("id", &self.0.id)?;
        map.serialize_entry("name", &self.0.name)?;
        for (n, label) in self.0.labels.iter().enumerate() {
            if let Some(label) = label {
                map.serialize_entry(&format!("field{}", n + 1), label)?;
            }
        }
        map.end()
    }
}

struct EntryJson<'a> {
    entry: &'a FeedEntry,
    selection: &'a [u8],
}

impl Serialize for EntryJson<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("created_at", &format_timestamp(&self.entry.created_at))?;
        map.serialize_entry("entry_id", &self.entry.entry_id)?;
        for &n in self.selection {
            map.serialize_entry(&format!("field{n}"), &self.entry.field(n as usize))?;
        }
        map.end()
    }
}

struct FeedsJson<'a>(&'a FeedPage);

impl Serialize for FeedsJson<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(
            self.0
                .feeds
                .iter()
                .map(|entry| EntryJson { entry, selection: &self.0.selection }),
        )
    }
}

impl Serialize for FeedPage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("channel", &ChannelJson(&self.channel))?;
        map.serialize_entry("feeds", &FeedsJson(self))?;
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn page() -> FeedPage {
        let mut labels: Fields = Default::default();
        labels[0] = Some("Temperature".into());
        labels[1] = Some("Pressure".into());
        let meta = ChannelMeta { id: 1, name: "farm".into(), write_key: "K".repeat(16), read_key: None, labels };
        let mut fields: Fields = Default::default();
        fields[0] = Some("22.04".into());
        let entry = FeedEntry {
            entry_id: 1,
            created_at: Utc.with_ymd_and_hms(2024, 12, 15, 10, 0, 0).unwrap(),
            fields,
        };
        FeedPage::new(meta, vec![entry], vec![1, 2])
    }

    #[test]
    fn serializes_the_documented_shape() {
        assert_eq!(
            page().to_json(),
            r#"{"channel":{"id":1,"name":"farm","field1":"Temperature","field2":"Pressure"},"feeds":[{"created_at":"2024-12-15T10:00:00Z","entry_id":1,"field1":"22.04","field2":null}]}"#
        );
    }

    #[test]
    fn parses_what_it_writes() {
        let p = page();
        assert_eq!(FeedPage::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn rejects_other_shapes() {
        assert!(FeedPage::from_json("[]").is_err());
        assert!(FeedPage::from_json(r#"{"channel":{"id":1},"feeds":[{"entry_id":1}]}"#).is_err());
        assert!(FeedPage::from_json("not json").is_err());
    }

    #[test]
    fn timestamp_formats() {
        let t = Utc.with_ymd_and_hms(2024, 12, 15, 10, 0, 0).unwrap();
        assert_eq!(format_timestamp(&t), "2024-12-15T10:00:00Z");
        assert_eq!(parse_timestamp("2024-12-15T10:00:00Z"), Some(t));
        assert_eq!(parse_timestamp("2024-12-15 10:00:00"), Some(t));
        assert_eq!(parse_timestamp("2024-12-15T12:00:00+02:00"), Some(t));
        assert_eq!(parse_timestamp("yesterday"), None);
    }
}
