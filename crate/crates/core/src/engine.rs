//! The tick loop.
//!
//! Phase order within a tick: world readings, bus delivery of the previous
//! tick's publications, injected commands, sectors, cameras, alarm, robot,
//! notifications. Everything published during a tick is delivered at the
//! next one.

use std::collections::BTreeMap;

use crate::alarm::{AlarmState, MemorySink, NotificationRecord, NotificationSink, Notifier};
use crate::bus::{Envelope, MessageBus};
use crate::camera::CameraState;
use crate::model::{id, AgentId, MessageKind, Severity, Tick, TimelineEntry};
use crate::robot::{RobotState, RobotTask};
use crate::scenario::Scenario;
use crate::sector::SectorState;

pub const ALARM_AGENT: &str = "Alarm";
pub const ROBOT_AGENT: &str = "Robot";
pub const NOTIFIER_AGENT: &str = "Notifier";

/// Complete record of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timeline {
    pub entries: Vec<TimelineEntry>,
    pub notifications: Vec<NotificationRecord>,
    /// One `published_at|sender|seq|topic|json` line per publication.
    pub bus_trace: Vec<String>,
}

impl Timeline {
    fn record(&mut self, mut entry: TimelineEntry) -> TimelineEntry {
        entry.step = self.entries.len() as u32 + 1;
        self.entries.push(entry.clone());
        entry
    }

    pub fn comparable(&self) -> impl Iterator<Item = &TimelineEntry> {
        self.entries.iter().filter(|e| e.is_comparable())
    }

    pub fn timeline_log(&self) -> String {
        join_lines(self.entries.iter().map(TimelineEntry::log_line))
    }

    pub fn notifications_log(&self) -> String {
        join_lines(self.notifications.iter().map(NotificationRecord::line))
    }

    pub fn bus_trace_log(&self) -> String {
        join_lines(self.bus_trace.iter().cloned())
    }
}

fn join_lines(lines: impl Iterator<Item = String>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

pub struct Engine {
    scenario: Scenario,
    bus: MessageBus,
    sectors: Vec<SectorState>,
    cameras: Vec<CameraState>,
    alarm: AlarmState,
    robot: RobotState,
    notifier: Notifier,
    next: Tick,
    timeline: Timeline,
    injections: BTreeMap<Tick, Vec<MessageKind>>,
    released: Vec<Envelope>,
    extra_sink: Option<Box<dyn NotificationSink>>,
}

impl Engine {
    pub fn new(scenario: Scenario) -> Self {
        let topology = &scenario.topology;
        let mut bus = MessageBus::new();
        let sectors: Vec<SectorState> = scenario
            .params
            .sector_order
            .iter()
            .map(|s| SectorState::new(s.clone()))
            .collect();
        for s in &sectors {
            bus.subscribe(&s.sector, "ip2s/camera/+/confirmation")
                .expect("static filter");
        }
        let cameras: Vec<CameraState> = topology
            .cameras
            .iter()
            .map(|spec| CameraState::new(spec, topology, scenario.params.reaction_delay(&spec.id)))
            .collect();
        for c in &cameras {
            bus.subscribe(&c.camera, "ip2s/sector/+/attention").expect("static filter");
            bus.subscribe(&c.camera, "ip2s/camera/+/claim").expect("static filter");
            bus.subscribe(&c.camera, "ip2s/camera/+/confirmation").expect("static filter");
        }
        let alarm = AlarmState::new(id(ALARM_AGENT));
        bus.subscribe(&alarm.agent, "ip2s/alarm/trigger").expect("static filter");
        let robot = RobotState::new(id(ROBOT_AGENT), topology, scenario.params.robot.clone());
        bus.subscribe(&robot.agent, "ip2s/robot/task").expect("static filter");

        let mut injections: BTreeMap<Tick, Vec<MessageKind>> = BTreeMap::new();
        for c in &scenario.commands {
            injections.entry(c.tick).or_default().push(c.message.clone());
        }
        Engine {
            bus,
            sectors,
            cameras,
            alarm,
            robot,
            notifier: Notifier::new(id(NOTIFIER_AGENT)),
            next: Tick::ZERO,
            timeline: Timeline::default(),
            injections,
            released: Vec::new(),
            extra_sink: None,
            scenario,
        }
    }

    /// Also forward notifications to `sink` (e.g. a file). Failures are
    /// logged and do not stop the run.
    pub fn with_sink(mut self, sink: Box<dyn NotificationSink>) -> Self {
        self.extra_sink = Some(sink);
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// The tick the next `step` will simulate.
    pub fn now(&self) -> Tick {
        self.next
    }

    pub fn finished(&self) -> bool {
        self.next.0 >= self.scenario.duration
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn into_timeline(self) -> Timeline {
        self.timeline
    }

    pub fn sectors(&self) -> &[SectorState] {
        &self.sectors
    }

    pub fn cameras(&self) -> &[CameraState] {
        &self.cameras
    }

    pub fn alarm(&self) -> &AlarmState {
        &self.alarm
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    /// Envelopes the bus released during the last step.
    pub fn released(&self) -> &[Envelope] {
        &self.released
    }

    /// Queue a lockdown or robot task for `tick`. Other kinds are ignored.
    pub fn inject(&mut self, tick: Tick, message: MessageKind) {
        if matches!(message, MessageKind::LockdownCommand { .. } | MessageKind::RobotTask { .. }) {
            self.injections.entry(tick).or_default().push(message);
        } else {
            log::warn!("ignoring injected {} message", message.name());
        }
    }

    fn publish(&mut self, sender: &AgentId, kind: MessageKind) {
        let env = self.bus.publish_message(sender, kind);
        self.timeline.bus_trace.push(env.trace_line());
    }

    /// Publish agent output; notifications are held for the notifier phase.
    fn emit(&mut self, sender: &AgentId, messages: Vec<MessageKind>, notes: &mut Vec<(AgentId, Severity, String)>) {
        for m in messages {
            match m {
                MessageKind::Notification { text, severity } => notes.push((sender.clone(), severity, text)),
                other => self.publish(sender, other),
            }
        }
    }

    /// Simulate one tick. Returns `None` once the scenario duration is used up.
    pub fn step(&mut self) -> Option<Vec<TimelineEntry>> {
        if self.finished() {
            return None;
        }
        let now = self.next;
        let topology = self.scenario.topology.clone();
        let mut entries: Vec<TimelineEntry> = Vec::new();
        let mut notes: Vec<(AgentId, Severity, String)> = Vec::new();

        // 1. world
        let readings: Vec<_> = self
            .sectors
            .iter()
            .map(|s| self.scenario.reading(&s.sector, now))
            .collect();

        // 2. bus
        let delivery = self.bus.advance(now).expect("engine ticks increase");

        // 3. injected commands
        let mut robot_injected = Vec::new();
        for cmd in self.injections.remove(&now).unwrap_or_default() {
            match cmd {
                MessageKind::LockdownCommand { scope } => {
                    for s in &mut self.sectors {
                        entries.extend(s.apply_lockdown(&scope, now));
                    }
                }
                MessageKind::RobotTask { mode, sector } => robot_injected.push(RobotTask { mode, sector }),
                _ => {}
            }
        }

        // 4. sectors
        for i in 0..self.sectors.len() {
            let agent = self.sectors[i].sector.clone();
            let mut msgs = Vec::new();
            for env in delivery.batch(&agent) {
                let out = self.sectors[i].handle_confirmation(&env.message.kind, now);
                entries.extend(out.entries);
                msgs.extend(out.messages);
            }
            match self.sectors[i].ingest_reading(&readings[i], &self.scenario.params.sector) {
                Ok(out) => {
                    entries.extend(out.entries);
                    msgs.extend(out.messages);
                }
                Err(e) => log::error!("{e}"),
            }
            entries.extend(
                self.sectors[i].check_suspicion_timeout(now, self.scenario.params.sector.suspicion_timeout),
            );
            self.emit(&agent, msgs, &mut notes);
        }

        // 5. cameras
        for c in &mut self.cameras {
            let batch: Vec<_> = delivery.batch(&c.camera).iter().map(|e| e.message.clone()).collect();
            entries.extend(c.update_priorities(&batch, now));
        }
        for i in 0..self.cameras.len() {
            if self.cameras[i].arbitration_due() == Some(now) {
                let (claim, es) = self.cameras[i].arbitrate(now);
                entries.extend(es);
                let agent = self.cameras[i].camera.clone();
                if let Some(claim) = claim {
                    self.publish(&agent, claim);
                }
            }
        }
        for i in 0..self.cameras.len() {
            let out = self.cameras[i].act(&self.scenario.params.camera, &self.scenario.visual, now);
            entries.extend(out.entries);
            let agent = self.cameras[i].camera.clone();
            self.emit(&agent, out.messages, &mut notes);
        }

        // 6. alarm
        let mut alarm_msgs = Vec::new();
        for env in delivery.batch(&self.alarm.agent.clone()) {
            if let MessageKind::AlarmTrigger { sector, alarm } = &env.message.kind {
                let out = self.alarm.handle_trigger(sector, *alarm, now);
                entries.extend(out.entries);
                alarm_msgs.extend(out.messages);
            }
        }
        let agent = self.alarm.agent.clone();
        self.emit(&agent, alarm_msgs, &mut notes);

        // 7. robot
        let mut robot_msgs = Vec::new();
        let out = self.robot.navigate_step(&topology, now);
        entries.extend(out.entries);
        robot_msgs.extend(out.messages);
        let delivered = delivery.batch(&self.robot.agent.clone()).iter().filter_map(|env| match &env.message.kind {
            MessageKind::RobotTask { mode, sector } => Some(RobotTask { mode: *mode, sector: sector.clone() }),
            _ => None,
        });
        let tasks: Vec<RobotTask> = robot_injected.into_iter().chain(delivered).collect();
        for task in tasks {
            match self.robot.enqueue_task(task, &topology, now) {
                Ok(out) => {
                    entries.extend(out.entries);
                    robot_msgs.extend(out.messages);
                }
                Err(e) => log::warn!("robot task rejected: {e}"),
            }
        }
        let agent = self.robot.agent.clone();
        self.emit(&agent, robot_msgs, &mut notes);

        // 8. notifications
        for (source, severity, text) in notes {
            let mut sink = MemorySink::default();
            let entry = self
                .notifier
                .notify(&source, severity, &text, now, &mut sink)
                .expect("memory sink cannot fail");
            if let Some(extra) = self.extra_sink.as_mut() {
                if let Err(e) = extra.deliver(&sink.records[0]) {
                    log::warn!("{e}");
                }
            }
            self.timeline.notifications.extend(sink.records);
            entries.push(entry);
            self.publish(&source, MessageKind::Notification { text, severity });
        }

        self.released = delivery.released;
        self.next = now.next();
        let recorded: Vec<TimelineEntry> = entries.into_iter().map(|e| self.timeline.record(e)).collect();
        for e in &recorded {
            log::debug!("{}", e.log_line());
        }
        Some(recorded)
    }

    /// Run to the end of the scenario.
    pub fn run_to_end(&mut self) -> &Timeline {
        while self.step().is_some() {}
        &self.timeline
    }

    /// Every violated invariant across all agents, empty when healthy.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut v = Vec::new();
        for s in &self.sectors {
            v.extend(s.check_invariants());
        }
        for c in &self.cameras {
            v.extend(c.check_invariants());
        }
        v.extend(self.alarm.check_invariants());
        v.extend(self.robot.check_invariants(&self.scenario.topology));
        v
    }
}

/// Run a scenario from start to finish.
pub fn run(scenario: &Scenario) -> Timeline {
    let mut engine = Engine::new(scenario.clone());
    engine.run_to_end();
    engine.into_timeline()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;

    #[test]
    fn zero_duration_gives_empty_timeline() {
        let t = run(&Scenario::new("empty", 0, Topology::case_study()));
        assert_eq!(t, Timeline::default());
    }

    #[test]
    fn quiet_world_records_nothing() {
        let mut e = Engine::new(Scenario::new("quiet", 20, Topology::case_study()));
        while let Some(entries) = e.step() {
            assert!(entries.is_empty());
        }
        assert!(e.check_invariants().is_empty());
    }

    #[test]
    fn step_past_end_returns_none() {
        let mut e = Engine::new(Scenario::new("short", 1, Topology::case_study()));
        assert!(e.step().is_some());
        assert!(e.step().is_none());
    }
}
