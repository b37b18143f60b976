//! In-process publish/subscribe with MQTT 3.1.1 topic-filter semantics.
//!
//! Every envelope published during tick `t` is released to matching
//! subscribers by `advance(t + 1)` and by no other call.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{AgentId, Message, MessageKind, Tick};

const SEPARATOR: char = '/';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("invalid topic filter `{0}`")]
    InvalidFilter(String),
    #[error("invalid publish topic `{0}`")]
    InvalidTopic(String),
    #[error("clock error: advance({now}) after advance({last})")]
    ClockError { now: Tick, last: Tick },
}

/// A concrete publish topic: nonempty segments, no wildcards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(path: impl Into<String>) -> Result<Topic, BusError> {
        let path = path.into();
        let ok = !path.is_empty()
            && path
                .split(SEPARATOR)
                .all(|seg| !seg.is_empty() && !seg.contains(['+', '#']));
        if ok {
            Ok(Topic(path))
        } else {
            Err(BusError::InvalidTopic(path))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split(SEPARATOR)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum FilterSegment {
    Level(String),
    /// `+`
    Single,
    /// `#`, only ever last
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFilter {
    raw: String,
    segments: Vec<FilterSegment>,
}

impl TopicFilter {
    pub fn new(raw: impl Into<String>) -> Result<TopicFilter, BusError> {
        let raw = raw.into();
        let invalid = || BusError::InvalidFilter(raw.clone());
        if raw.is_empty() {
            return Err(invalid());
        }
        let parts: Vec<&str> = raw.split(SEPARATOR).collect();
        let mut segments = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let seg = match *part {
                "+" => FilterSegment::Single,
                "#" if i + 1 == parts.len() => FilterSegment::Multi,
                "" => return Err(invalid()),
                p if p.contains(['+', '#']) => return Err(invalid()),
                p => FilterSegment::Level(p.to_string()),
            };
            segments.push(seg);
        }
        Ok(TopicFilter { raw, segments })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let levels: Vec<&str> = topic.segments().collect();
        // Wildcards at the first level never match `$`-prefixed topics.
        if levels[0].starts_with('$') && !matches!(self.segments[0], FilterSegment::Level(_)) {
            return false;
        }
        let mut i = 0;
        for seg in &self.segments {
            match seg {
                FilterSegment::Multi => return true,
                FilterSegment::Single => {
                    if i >= levels.len() {
                        return false;
                    }
                }
                FilterSegment::Level(name) => {
                    if levels.get(i) != Some(&name.as_str()) {
                        return false;
                    }
                }
            }
            i += 1;
        }
        i == levels.len()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Canonical topic for a message, derived from its kind and sender.
pub fn topic_for(message: &Message) -> Topic {
    let path = match &message.kind {
        MessageKind::AttentionRequest { sector, .. } => format!("ip2s/sector/{sector}/attention"),
        MessageKind::CameraClaim { camera, .. } => format!("ip2s/camera/{camera}/claim"),
        MessageKind::FireConfirmation { camera, .. } | MessageKind::NoConfirmation { camera, .. } => {
            format!("ip2s/camera/{camera}/confirmation")
        }
        MessageKind::AlarmTrigger { .. } => "ip2s/alarm/trigger".into(),
        MessageKind::RobotTask { .. } => "ip2s/robot/task".into(),
        MessageKind::LockdownCommand { .. } => "ip2s/cmd/lockdown".into(),
        MessageKind::Notification { .. } => "ip2s/notify".into(),
    };
    Topic::new(path).expect("agent ids are valid topic segments")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: Topic,
    pub message: Message,
    /// Per-publisher sequence number, strictly increasing.
    pub seq: u64,
    pub published_at: Tick,
}

impl Envelope {
    pub fn publisher(&self) -> &AgentId {
        &self.message.sender
    }

    pub fn trace_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.published_at,
            self.message.sender,
            self.seq,
            self.topic,
            self.message.to_json()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SubscriptionHandle(pub usize);

#[derive(Debug, Clone)]
struct Subscription {
    agent: AgentId,
    filter: TopicFilter,
    since: Tick,
}

/// Result of one `advance` call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delivery {
    /// Every envelope released this tick, ordered by (publisher, seq),
    /// whether or not anyone subscribed to it.
    pub released: Vec<Envelope>,
    /// Per-subscriber batches in the same order. Every subscribed agent has
    /// an entry, possibly empty.
    pub batches: BTreeMap<AgentId, Vec<Envelope>>,
}

impl Delivery {
    pub fn batch(&self, agent: &AgentId) -> &[Envelope] {
        self.batches.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Default)]
pub struct MessageBus {
    subscriptions: Vec<Subscription>,
    pending: Vec<Envelope>,
    next_seq: BTreeMap<AgentId, u64>,
    now: Tick,
    last_advanced: Option<Tick>,
}

impl MessageBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// The tick stamped on new publications.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn subscribe(&mut self, agent: &AgentId, filter: &str) -> Result<SubscriptionHandle, BusError> {
        let filter = TopicFilter::new(filter)?;
        self.subscriptions.push(Subscription {
            agent: agent.clone(),
            filter,
            since: self.now,
        });
        Ok(SubscriptionHandle(self.subscriptions.len() - 1))
    }

    pub fn publish(
        &mut self,
        sender: &AgentId,
        topic: &str,
        kind: MessageKind,
    ) -> Result<Envelope, BusError> {
        let topic = Topic::new(topic)?;
        Ok(self.enqueue(topic, Message::new(sender.clone(), self.now, kind)))
    }

    /// Publish on the canonical topic for the message kind.
    pub fn publish_message(&mut self, sender: &AgentId, kind: MessageKind) -> Envelope {
        let message = Message::new(sender.clone(), self.now, kind);
        self.enqueue(topic_for(&message), message)
    }

    fn enqueue(&mut self, topic: Topic, message: Message) -> Envelope {
        let seq = self.next_seq.entry(message.sender.clone()).or_insert(0);
        *seq += 1;
        let env = Envelope {
            topic,
            published_at: message.published_at,
            seq: *seq,
            message,
        };
        self.pending.push(env.clone());
        env
    }

    /// Release what was published at `now - 1`. Anything older that was
    /// never released (because ticks were skipped) is discarded.
    pub fn advance(&mut self, now: Tick) -> Result<Delivery, BusError> {
        if let Some(last) = self.last_advanced {
            if now <= last {
                return Err(BusError::ClockError { now, last });
            }
        }
        self.last_advanced = Some(now);
        self.now = now;

        let due_tick = now.prev();
        let mut released = Vec::new();
        self.pending.retain(|env| {
            if Some(env.published_at) == due_tick {
                released.push(env.clone());
                false
            } else {
                env.published_at >= now
            }
        });
        released.sort_by(|a, b| (a.publisher(), a.seq).cmp(&(b.publisher(), b.seq)));

        let mut batches: BTreeMap<AgentId, Vec<Envelope>> = BTreeMap::new();
        for sub in &self.subscriptions {
            batches.entry(sub.agent.clone()).or_default();
        }
        for env in &released {
            let mut receivers: Vec<&AgentId> = self
                .subscriptions
                .iter()
                .filter(|s| env.published_at >= s.since && s.filter.matches(&env.topic))
                .map(|s| &s.agent)
                .collect();
            receivers.sort();
            receivers.dedup();
            for agent in receivers {
                batches.get_mut(agent).expect("subscribed").push(env.clone());
            }
        }
        Ok(Delivery { released, batches })
    }
}
