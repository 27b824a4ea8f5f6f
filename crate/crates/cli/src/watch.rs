//! Polling alert watcher.

use std::io::Write;
use std::time::Duration;

use agrisense_core::analytics::AlertEvent;
use agrisense_core::channel::{format_timestamp, FeedPage};
use agrisense_core::{AlertEvaluator, AlertRuleSet, Reading};

use crate::client::{ClientError, ServiceClient};

pub const DEFAULT_POLL: Duration = Duration::from_secs(2);
const MAX_BACKOFF: Duration = Duration::from_secs(60);

pub fn alert_line(event: &AlertEvent) -> String {
    format!("{}  {}  {}", format_timestamp(&event.triggered_at), event.rule_id, event.message)
}

/// Feeds entries it has not seen yet (by entry id) through one evaluator, so
/// repeated polls of overlapping pages behave like a single offline pass.
#[derive(Debug, Clone)]
pub struct Watcher {
    evaluator: AlertEvaluator,
    last_id: u64,
}

impl Watcher {
    pub fn new(rules: AlertRuleSet) -> Self {
        Watcher { evaluator: AlertEvaluator::new(rules), last_id: 0 }
    }

    pub fn last_entry_id(&self) -> u64 {
        self.last_id
    }

    /// Events raised by the unseen entries of `page`. Also reports whether
    /// entries were missed because the page started past the next id.
    pub fn ingest(&mut self, page: &FeedPage) -> (Vec<AlertEvent>, bool) {
        let mut events = Vec::new();
        let mut gap = false;
        for entry in &page.feeds {
            if entry.entry_id <= self.last_id {
                continue;
            }
            gap |= self.last_id > 0 && entry.entry_id != self.last_id + 1;
            self.last_id = entry.entry_id;
            let reading = Reading::from_fields(entry.created_at, &entry.fields);
            events.extend(self.evaluator.ingest(&reading));
        }
        (events, gap)
    }
}

pub struct WatchOptions {
    pub channel: u64,
    pub results: usize,
    pub interval: Duration,
    /// Stop after this many successful polls; `None` runs forever.
    pub polls: Option<usize>,
}

/// Polls until `opts.polls` is reached. Alert lines go to `out`, outage
/// warnings to `err` once per outage.
pub fn watch(
    client: &ServiceClient,
    rules: AlertRuleSet,
    opts: &WatchOptions,
    out: &mut impl Write,
    err: &mut impl Write,
    mut sleep: impl FnMut(Duration),
) -> Result<(), ClientError> {
    let mut watcher = Watcher::new(rules);
    let mut done = 0;
    let mut backoff = opts.interval;
    let mut down = false;
    loop {
        match client.feeds(opts.channel, opts.results, None) {
            Ok(page) => {
                if down {
                    let _ = writeln!(err, "service reachable again");
                    down = false;
                }
                backoff = opts.interval;
                let (events, gap) = watcher.ingest(&page);
                if gap {
                    let _ = writeln!(err, "warning: entries were skipped between polls; raise --results");
                }
                for e in &events {
                    let _ = writeln!(out, "{}", alert_line(e));
                }
                let _ = out.flush();
                done += 1;
                if opts.polls.is_some_and(|n| done >= n) {
                    return Ok(());
                }
                sleep(opts.interval);
            }
            Err(e @ ClientError::Network { .. }) => {
                if !down {
                    let _ = writeln!(err, "warning: {e}; retrying");
                    down = true;
                }
                sleep(backoff);
                backoff = (backoff * 2).min(MAX_BACKOFF);
            }
            Err(e) => return Err(e),
        }
    }
}
