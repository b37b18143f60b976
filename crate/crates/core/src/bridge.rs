//! Mirror of the in-process bus onto an external MQTT broker.
//!
//! Outbound: every envelope the bus released in the last step is republished
//! as JSON. Inbound: messages on `{prefix}/cmd/#` become lockdown commands or
//! robot tasks injected at the engine's next tick. Bridging is best-effort
//! and at-most-once.

use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rumqttc::{Client, Event, MqttOptions, Packet, QoS};
use thiserror::Error;

use crate::engine::Engine;
use crate::model::{id, Message, MessageKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("broker unreachable: {0}")]
    BridgeDown(String),
    #[error("bad broker uri `{0}`")]
    BadUri(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeConfig {
    pub enabled: bool,
    pub broker_uri: Option<String>,
    /// Replaces the leading `ip2s` segment of every topic.
    pub prefix: String,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            enabled: false,
            broker_uri: None,
            prefix: "ip2s".into(),
        }
    }
}

impl BridgeConfig {
    pub fn topic(&self, internal: &str) -> String {
        match internal.strip_prefix("ip2s") {
            Some(rest) => format!("{}{}", self.prefix, rest),
            None => internal.to_string(),
        }
    }

    pub fn command_filter(&self) -> String {
        format!("{}/cmd/#", self.prefix)
    }
}

/// A connection to some broker.
pub trait BrokerSession {
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<(), BridgeError>;
    /// Messages received on the command filter since the last call.
    fn drain_inbound(&mut self) -> Result<Vec<(String, Vec<u8>)>, BridgeError>;
}

pub struct Bridge {
    pub config: BridgeConfig,
    session: Option<Box<dyn BrokerSession>>,
}

impl Bridge {
    pub fn disabled() -> Self {
        Bridge {
            config: BridgeConfig::default(),
            session: None,
        }
    }

    pub fn new(config: BridgeConfig, session: Box<dyn BrokerSession>) -> Self {
        Bridge {
            config,
            session: Some(session),
        }
    }

    /// Connect to `config.broker_uri` with the bundled MQTT client.
    pub fn connect(config: BridgeConfig, timeout: Duration) -> Result<Self, BridgeError> {
        let uri = config
            .broker_uri
            .clone()
            .ok_or_else(|| BridgeError::BadUri(String::new()))?;
        let session = MqttSession::connect(&uri, &config.command_filter(), timeout)?;
        Ok(Bridge::new(config, Box::new(session)))
    }

    /// The session, when the bridge is enabled.
    pub fn session_mut(&mut self) -> Option<&mut Box<dyn BrokerSession>> {
        if self.config.enabled {
            self.session.as_mut()
        } else {
            None
        }
    }
}

/// Decode an inbound command. The `kind` field may be left out; it is
/// implied by the topic.
pub fn decode_command(config: &BridgeConfig, topic: &str, payload: &[u8]) -> Option<MessageKind> {
    let implied = if topic == format!("{}/cmd/lockdown", config.prefix) {
        "LockdownCommand"
    } else if topic == format!("{}/cmd/robot", config.prefix) {
        "RobotTask"
    } else {
        return None;
    };
    let mut value: serde_json::Value = serde_json::from_slice(payload).ok()?;
    let map = value.as_object_mut()?;
    map.entry("kind").or_insert_with(|| implied.into());
    let msg = Message::from_json(&value.to_string(), &id("Operator"), crate::model::Tick::ZERO).ok()?;
    (msg.kind.name() == implied).then_some(msg.kind)
}

/// Mirror the last step's deliveries out and pull commands in. Returns
/// (published, injected).
pub fn bridge_sync(engine: &mut Engine, bridge: &mut Bridge) -> Result<(usize, usize), BridgeError> {
    let config = bridge.config.clone();
    let Some(session) = bridge.session_mut() else {
        return Ok((0, 0));
    };
    let mut out = 0;
    for env in engine.released() {
        session.publish(&config.topic(env.topic.as_str()), env.message.to_json().as_bytes())?;
        out += 1;
    }
    let mut injected = 0;
    let at = engine.now();
    for (topic, payload) in session.drain_inbound()? {
        match decode_command(&config, &topic, &payload) {
            Some(kind) => {
                engine.inject(at, kind);
                injected += 1;
            }
            None => log::warn!("ignoring inbound message on {topic}"),
        }
    }
    Ok((out, injected))
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

/// Split `mqtt://host:port`, `tcp://host:port` or `host[:port]`.
pub fn parse_broker_uri(uri: &str) -> Result<(String, u16), BridgeError> {
    let rest = uri
        .strip_prefix("mqtt://")
        .or_else(|| uri.strip_prefix("tcp://"))
        .unwrap_or(uri);
    let bad = || BridgeError::BadUri(uri.to_string());
    if rest.is_empty() || rest.contains('/') {
        return Err(bad());
    }
    match rest.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() => Ok((host.to_string(), port.parse().map_err(|_| bad())?)),
        Some(_) => Err(bad()),
        None => Ok((rest.to_string(), 1883)),
    }
}

enum Incoming {
    Connected,
    Publish(String, Vec<u8>),
    Failed(String),
}

/// MQTT session over the `rumqttc` client. The network loop runs on its own
/// thread and hands received publishes over a channel.
pub struct MqttSession {
    client: Client,
    rx: Receiver<Incoming>,
}

impl MqttSession {
    pub fn connect(uri: &str, command_filter: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let (host, port) = parse_broker_uri(uri)?;
        let mut opts = MqttOptions::new(format!("ip2s-{}", std::process::id()), host, port);
        opts.set_keep_alive(Duration::from_secs(5));
        let (client, mut connection) = Client::new(opts, 256);
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for event in connection.iter() {
                let msg = match event {
                    Ok(Event::Incoming(Packet::ConnAck(_))) => Incoming::Connected,
                    Ok(Event::Incoming(Packet::Publish(p))) => Incoming::Publish(p.topic, p.payload.to_vec()),
                    Ok(_) => continue,
                    Err(e) => {
                        let _ = tx.send(Incoming::Failed(e.to_string()));
                        break;
                    }
                };
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        match rx.recv_timeout(timeout) {
            Ok(Incoming::Connected) => {}
            Ok(Incoming::Failed(e)) => return Err(BridgeError::BridgeDown(e)),
            Ok(Incoming::Publish(..)) => {}
            Err(RecvTimeoutError::Timeout) => return Err(BridgeError::BridgeDown(format!("no answer from {uri}"))),
            Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::BridgeDown(uri.to_string())),
        }
        client
            .subscribe(command_filter, QoS::AtMostOnce)
            .map_err(|e| BridgeError::BridgeDown(e.to_string()))?;
        Ok(MqttSession { client, rx })
    }
}

impl BrokerSession for MqttSession {
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<(), BridgeError> {
        self.client
            .publish(topic, QoS::AtMostOnce, false, payload.to_vec())
            .map_err(|e| BridgeError::BridgeDown(e.to_string()))
    }

    fn drain_inbound(&mut self) -> Result<Vec<(String, Vec<u8>)>, BridgeError> {
        let mut out = Vec::new();
        while let Ok(msg) = self.rx.try_recv() {
            match msg {
                Incoming::Publish(topic, payload) => out.push((topic, payload)),
                Incoming::Connected => {}
                Incoming::Failed(e) => return Err(BridgeError::BridgeDown(e)),
            }
        }
        Ok(out)
    }
}

impl Drop for MqttSession {
    fn drop(&mut self) {
        let _ = self.client.disconnect();
    }
}

#[derive(Debug, Default)]
struct LoopbackState {
    published: Vec<(String, Vec<u8>)>,
    inbound: VecDeque<(String, Vec<u8>)>,
}

/// In-memory broker stand-in. Clones share state, so a test can keep one
/// handle and give the other to a [`Bridge`].
#[derive(Debug, Clone, Default)]
pub struct LoopbackSession {
    state: Arc<Mutex<LoopbackState>>,
}

impl LoopbackSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn published(&self) -> Vec<(String, Vec<u8>)> {
        self.state.lock().expect("loopback lock").published.clone()
    }

    pub fn push_inbound(&self, topic: &str, payload: &str) {
        self.state
            .lock()
            .expect("loopback lock")
            .inbound
            .push_back((topic.to_string(), payload.as_bytes().to_vec()));
    }
}

impl BrokerSession for LoopbackSession {
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<(), BridgeError> {
        self.state
            .lock()
            .expect("loopback lock")
            .published
            .push((topic.to_string(), payload.to_vec()));
        Ok(())
    }

    fn drain_inbound(&mut self) -> Result<Vec<(String, Vec<u8>)>, BridgeError> {
        Ok(self.state.lock().expect("loopback lock").inbound.drain(..).collect())
    }
}
