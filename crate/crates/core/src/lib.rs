//! Multi-agent coordination for integrated fire and intrusion security, with
//! a deterministic discrete-event simulator.
//!
//! Sector agents watch their sensors, cameras cooperate to confirm what the
//! sectors report, an alarm center raises alarms and dispatches a robot, and
//! a notifier keeps operators informed. Agents talk over a topic bus with
//! MQTT filter semantics and one-tick delivery.

pub mod alarm;
pub mod bridge;
pub mod bus;
pub mod camera;
pub mod engine;
pub mod golden;
pub mod model;
pub mod robot;
pub mod scenario;
pub mod sector;

pub use engine::{run, Engine, Timeline};
pub use golden::{compare_timeline, parse_golden, CompareMode, Golden, Verdict};
pub use model::{Action, AgentId, MessageKind, Tick, TimelineEntry, Topology, TriggerCode};
pub use scenario::{load_scenario, Scenario, ScenarioError};
