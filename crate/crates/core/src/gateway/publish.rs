//! Store-and-forward publishing.
//!
//! Readings that cannot be delivered within the retry budget wait in a
//! bounded backlog. The backlog is always drained oldest first before any
//! newer reading is sent, so acknowledged entries keep acquisition order.

use std::collections::VecDeque;
use std::time::Duration;

use chrono::{DateTime, Utc};

use super::Reading;
use crate::Real;

pub const DEFAULT_BACKLOG_CAPACITY: usize = 1000;

/// One channel write: field values (index 0 is field1) and an optional
/// timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateRequest {
    pub fields: [Option<String>; 8],
    pub created_at: Option<DateTime<Utc>>,
}

impl UpdateRequest {
    pub fn from_reading<T: Real>(r: &Reading<T>) -> Self {
        UpdateRequest { fields: r.to_fields(), created_at: Some(r.timestamp) }
    }
}

/// What the service answered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateReply {
    Accepted(u64),
    /// Write refused by the rate limiter; worth retrying later.
    RateLimited,
    /// Permanent refusal (bad key, malformed values); retrying cannot help.
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("service unreachable: {0}")]
pub struct TransportError(pub String);

pub trait ChannelTransport {
    fn update(&mut self, request: &UpdateRequest) -> Result<UpdateReply, TransportError>;
}

impl<C: ChannelTransport + ?Sized> ChannelTransport for &mut C {
    fn update(&mut self, request: &UpdateRequest) -> Result<UpdateReply, TransportError> {
        (**self).update(request)
    }
}

impl<C: ChannelTransport + ?Sized> ChannelTransport for Box<C> {
    fn update(&mut self, request: &UpdateRequest) -> Result<UpdateReply, TransportError> {
        (**self).update(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, backoff_base: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Wait after failed attempt number `attempt` (1-based): base, 2*base, ...
    pub fn delay(&self, attempt: u32) -> Duration {
        self.backoff_base
            .saturating_mul(1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublishOutcome {
    /// The reading was stored; `flushed` lists backlog entry ids delivered
    /// ahead of it.
    Acknowledged { entry_id: u64, flushed: Vec<u64> },
    /// Delivery failed; the reading waits in the backlog.
    Deferred { backlog: usize, reason: String, flushed: Vec<u64> },
    /// The service refused the reading permanently.
    Dropped { reason: String, flushed: Vec<u64> },
}

impl PublishOutcome {
    pub fn entry_id(&self) -> Option<u64> {
        match self {
            PublishOutcome::Acknowledged { entry_id, .. } => Some(*entry_id),
            _ => None,
        }
    }

    pub fn flushed(&self) -> &[u64] {
        match self {
            PublishOutcome::Acknowledged { flushed, .. }
            | PublishOutcome::Deferred { flushed, .. }
            | PublishOutcome::Dropped { flushed, .. } => flushed,
        }
    }
}

enum Delivery {
    Accepted(u64),
    Rejected(String),
    Failed(String),
}

type Sleeper = Box<dyn FnMut(Duration) + Send>;

pub struct Publisher<C> {
    transport: C,
    retry: RetryPolicy,
    capacity: usize,
    backlog: VecDeque<UpdateRequest>,
    overflow_drops: u64,
    rejected: u64,
    attempts: u64,
    sleep: Sleeper,
}

impl<C: ChannelTransport> Publisher<C> {
    pub fn new(transport: C, retry: RetryPolicy, capacity: usize) -> Self {
        Publisher {
            transport,
            retry,
            capacity: capacity.max(1),
            backlog: VecDeque::new(),
            overflow_drops: 0,
            rejected: 0,
            attempts: 0,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff wait, e.g. with a no-op under a simulated clock.
    pub fn with_sleeper(mut self, sleep: impl FnMut(Duration) + Send + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn transport(&self) -> &C {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut C {
        &mut self.transport
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.len()
    }

    /// Readings evicted because the backlog was full.
    pub fn overflow_drops(&self) -> u64 {
        self.overflow_drops
    }

    /// Readings the service refused permanently.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Transport calls made so far.
    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn publish<T: Real>(&mut self, reading: &Reading<T>) -> PublishOutcome {
        self.publish_request(UpdateRequest::from_reading(reading))
    }

    pub fn publish_request(&mut self, request: UpdateRequest) -> PublishOutcome {
        let flushed = match self.drain() {
            Ok(ids) => ids,
            Err((reason, flushed)) => {
                self.enqueue(request);
                return PublishOutcome::Deferred { backlog: self.backlog.len(), reason, flushed };
            }
        };
        match self.deliver(&request) {
            Delivery::Accepted(entry_id) => PublishOutcome::Acknowledged { entry_id, flushed },
            Delivery::Rejected(reason) => {
                self.rejected += 1;
                PublishOutcome::Dropped { reason, flushed }
            }
            Delivery::Failed(reason) => {
                self.enqueue(request);
                PublishOutcome::Deferred { backlog: self.backlog.len(), reason, flushed }
            }
        }
    }

    /// Sends backlogged readings, oldest first, until empty or a delivery
    /// fails. Returns the acknowledged ids.
    pub fn flush(&mut self) -> Result<Vec<u64>, (String, Vec<u64>)> {
        self.drain()
    }

    fn drain(&mut self) -> Result<Vec<u64>, (String, Vec<u64>)> {
        let mut ids = Vec::new();
        while let Some(front) = self.backlog.front().cloned() {
            match self.deliver(&front) {
                Delivery::Accepted(id) => {
                    ids.push(id);
                    self.backlog.pop_front();
                }
                Delivery::Rejected(_) => {
                    self.rejected += 1;
                    self.backlog.pop_front();
                }
                Delivery::Failed(reason) => return Err((reason, ids)),
            }
        }
        Ok(ids)
    }

    fn enqueue(&mut self, request: UpdateRequest) {
        if self.backlog.len() >= self.capacity {
            self.backlog.pop_front();
            self.overflow_drops += 1;
        }
        self.backlog.push_back(request);
    }

    fn deliver(&mut self, request: &UpdateRequest) -> Delivery {
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            self.attempts += 1;
            match self.transport.update(request) {
                Ok(UpdateReply::Accepted(id)) => return Delivery::Accepted(id),
                Ok(UpdateReply::Rejected(reason)) => return Delivery::Rejected(reason),
                Ok(UpdateReply::RateLimited) => last = "rate limited".into(),
                Err(e) => last = e.to_string(),
            }
            if attempt < self.retry.max_attempts {
                (self.sleep)(self.retry.delay(attempt));
            }
        }
        Delivery::Failed(last)
    }
}
