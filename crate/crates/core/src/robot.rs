//! Robot agent on a one-way ring circuit.
//!
//! Firefighting tasks always run before surveillance tasks. The robot only
//! moves forward along the circuit, so a task behind it is reached by going
//! round the ring.

use thiserror::Error;

use crate::model::{
    Action, AgentId, MessageKind, RobotMode, SectorId, Severity, Tick, TimelineEntry, Topology,
    TriggerCode, Waypoint,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RobotError {
    #[error("unknown sector `{0}`")]
    UnknownSector(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotTask {
    pub mode: RobotMode,
    pub sector: SectorId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Parked,
    Transit { to: usize },
    Surveilling { remaining: u32 },
    Searching { remaining: u32 },
    Extinguishing { remaining: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speed {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotParams {
    /// Surveillance round length in edge-ticks; driven at slow speed.
    pub surveil: u32,
    pub search: u32,
    pub extinguish: u32,
    /// Ticks per edge-tick at slow speed.
    pub slow_factor: u32,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            surveil: 2,
            search: 1,
            extinguish: 3,
            slow_factor: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotOutput {
    pub messages: Vec<MessageKind>,
    pub entries: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub agent: AgentId,
    /// Index into the topology circuit.
    pub position: usize,
    /// Ticks travelled along the edge leaving `position`.
    pub progress: u32,
    pub phase: Phase,
    pub queue: Vec<RobotTask>,
    pub speed: Speed,
    params: RobotParams,
}

impl RobotState {
    pub fn new(agent: AgentId, topology: &Topology, params: RobotParams) -> Self {
        RobotState {
            agent,
            position: topology.parking_index().unwrap_or(0),
            progress: 0,
            phase: Phase::Parked,
            queue: Vec::new(),
            speed: Speed::Fast,
            params,
        }
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    fn entry(&self, now: Tick, trigger: TriggerCode, action: Action) -> TimelineEntry {
        TimelineEntry::new(now, self.agent.clone(), trigger, action)
    }

    fn destination(&self, topology: &Topology) -> usize {
        match self.queue.first() {
            Some(task) => topology.sector_waypoint(&task.sector).expect("validated task"),
            None => topology.parking_index().expect("valid topology"),
        }
    }

    /// Queue a task, firefighting first and stable within each mode.
    pub fn enqueue_task(
        &mut self,
        task: RobotTask,
        topology: &Topology,
        now: Tick,
    ) -> Result<RobotOutput, RobotError> {
        if topology.sector_waypoint(&task.sector).is_none() {
            return Err(RobotError::UnknownSector(task.sector.to_string()));
        }
        let mut out = RobotOutput::default();
        if self.queue.contains(&task) {
            return Ok(out);
        }
        let old_head = self.queue.first().cloned();
        let at = match task.mode {
            RobotMode::Firefighting => self
                .queue
                .iter()
                .position(|t| t.mode == RobotMode::Surveillance)
                .unwrap_or(self.queue.len()),
            RobotMode::Surveillance => self.queue.len(),
        };
        self.queue.insert(at, task.clone());

        let action = match (&old_head, task.mode) {
            (None, RobotMode::Surveillance) => Action::MoveToSurveil { sector: task.sector.clone() },
            (None, RobotMode::Firefighting) => Action::DispatchRobot {
                mode: task.mode,
                sector: task.sector.clone(),
            },
            (Some(head), _) if head != &self.queue[0] => Action::UpdateCourse {
                mode: task.mode,
                sector: task.sector.clone(),
            },
            (Some(_), _) => Action::DispatchRobot {
                mode: task.mode,
                sector: task.sector.clone(),
            },
        };
        let redirect = matches!(action, Action::UpdateCourse { .. })
            && matches!(self.phase, Phase::Transit { .. } | Phase::Surveilling { .. });
        out.entries.push(self.entry(now, TriggerCode::Activation, action));
        if old_head.is_none() {
            if task.mode == RobotMode::Surveillance {
                out.messages.push(MessageKind::Notification {
                    text: format!("{} heading to {} with buzzer and lights on", self.agent, task.sector),
                    severity: Severity::Warning,
                });
            }
            self.begin_next(topology, now, &mut out);
        } else if redirect {
            self.speed = Speed::Fast;
            self.begin_next(topology, now, &mut out);
        }
        Ok(out)
    }

    /// Head for the next task (or home) and start it at once if already there.
    fn begin_next(&mut self, topology: &Topology, now: Tick, out: &mut RobotOutput) {
        let to = self.destination(topology);
        self.phase = Phase::Transit { to };
        if self.position == to && self.progress == 0 {
            self.on_waypoint(topology, now, out);
        }
    }

    /// Called whenever the robot sits exactly on its transit destination.
    fn on_waypoint(&mut self, topology: &Topology, now: Tick, out: &mut RobotOutput) {
        let Some(task) = self.queue.first().cloned() else {
            self.phase = Phase::Parked;
            self.speed = Speed::Fast;
            out.entries.push(self.entry(now, TriggerCode::RobotProgress, Action::Parked));
            out.messages.push(MessageKind::Notification {
                text: format!("{} parked", self.agent),
                severity: Severity::Info,
            });
            return;
        };
        debug_assert_eq!(topology.sector_waypoint(&task.sector), Some(self.position));
        match task.mode {
            RobotMode::Surveillance => {
                self.phase = Phase::Surveilling {
                    remaining: self.params.surveil.max(1) * self.params.slow_factor.max(1),
                };
                self.speed = Speed::Slow;
                out.entries.push(self.entry(
                    now,
                    TriggerCode::RobotProgress,
                    Action::StartSurveillance { sector: task.sector },
                ));
            }
            RobotMode::Firefighting => {
                self.phase = Phase::Searching {
                    remaining: self.params.search.max(1),
                };
                out.entries.push(self.entry(
                    now,
                    TriggerCode::RobotProgress,
                    Action::StartSearch { sector: task.sector },
                ));
            }
        }
    }

    fn finish_task(&mut self, topology: &Topology, now: Tick, out: &mut RobotOutput) {
        self.queue.remove(0);
        self.speed = Speed::Fast;
        if self.queue.is_empty() {
            out.entries.push(self.entry(now, TriggerCode::RobotProgress, Action::ReturnToParking));
        }
        self.begin_next(topology, now, out);
    }

    /// Advance one tick.
    pub fn navigate_step(&mut self, topology: &Topology, now: Tick) -> RobotOutput {
        let mut out = RobotOutput::default();
        match self.phase {
            Phase::Parked => {}
            Phase::Transit { to } => {
                if self.position == to && self.progress == 0 {
                    self.on_waypoint(topology, now, &mut out);
                    return out;
                }
                self.progress += 1;
                if self.progress >= topology.circuit[self.position].cost {
                    self.position = topology.next_waypoint(self.position);
                    self.progress = 0;
                    let waypoint = topology.circuit[self.position].waypoint.to_string();
                    out.entries
                        .push(self.entry(now, TriggerCode::RobotProgress, Action::Arrive { waypoint }));
                    if self.position == to {
                        self.on_waypoint(topology, now, &mut out);
                    }
                }
            }
            Phase::Surveilling { remaining } => {
                if remaining <= 1 {
                    let sector = self.queue[0].sector.clone();
                    out.entries.push(self.entry(
                        now,
                        TriggerCode::RobotProgress,
                        Action::SurveillanceDone { sector: sector.clone() },
                    ));
                    out.messages.push(MessageKind::Notification {
                        text: format!("{} finished surveillance round in {}", self.agent, sector),
                        severity: Severity::Info,
                    });
                    self.finish_task(topology, now, &mut out);
                } else {
                    self.phase = Phase::Surveilling { remaining: remaining - 1 };
                }
            }
            Phase::Searching { remaining } => {
                if remaining <= 1 {
                    self.phase = Phase::Extinguishing {
                        remaining: self.params.extinguish.max(1),
                    };
                    let sector = self.queue[0].sector.clone();
                    out.entries.push(self.entry(
                        now,
                        TriggerCode::RobotProgress,
                        Action::StartExtinguish { sector },
                    ));
                } else {
                    self.phase = Phase::Searching { remaining: remaining - 1 };
                }
            }
            Phase::Extinguishing { remaining } => {
                if remaining <= 1 {
                    let sector = self.queue[0].sector.clone();
                    out.entries.push(self.entry(
                        now,
                        TriggerCode::RobotProgress,
                        Action::FireOut { sector: sector.clone() },
                    ));
                    out.messages.push(MessageKind::Notification {
                        text: format!("{} put out the fire in {}", self.agent, sector),
                        severity: Severity::Info,
                    });
                    self.finish_task(topology, now, &mut out);
                } else {
                    self.phase = Phase::Extinguishing { remaining: remaining - 1 };
                }
            }
        }
        out
    }

    /// Ticks until the robot stands on `target`, following its current queue
    /// and then, if the target is not otherwise visited, a final visit to it.
    pub fn eta(&self, topology: &Topology, target: &Waypoint) -> Result<u64, RobotError> {
        let index = topology
            .waypoint_index(target)
            .ok_or_else(|| RobotError::UnknownSector(target.to_string()))?;
        let mut sim = self.clone();
        if sim.position == index && sim.progress == 0 {
            return Ok(0);
        }
        if let Waypoint::Sector(sector) = target {
            if !sim.queue.iter().any(|t| &t.sector == sector) {
                sim.queue.push(RobotTask {
                    mode: RobotMode::Surveillance,
                    sector: sector.clone(),
                });
                if sim.queue.len() == 1 {
                    let mut scratch = RobotOutput::default();
                    sim.begin_next(topology, Tick::ZERO, &mut scratch);
                }
            }
        }
        let lap: u64 = topology.circuit.iter().map(|l| u64::from(l.cost)).sum();
        let per_task = u64::from(
            self.params.surveil * self.params.slow_factor + self.params.search + self.params.extinguish,
        ) + 2;
        let bound = (lap + per_task) * (sim.queue.len() as u64 + 2);
        for elapsed in 1..=bound {
            sim.navigate_step(topology, Tick(elapsed));
            if sim.position == index && sim.progress == 0 {
                return Ok(elapsed);
            }
        }
        unreachable!("robot reaches every queued waypoint within one lap per task")
    }

    pub fn check_invariants(&self, topology: &Topology) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(first_surv) = self.queue.iter().position(|t| t.mode == RobotMode::Surveillance) {
            if self.queue[first_surv..].iter().any(|t| t.mode == RobotMode::Firefighting) {
                v.push("firefighting task queued behind surveillance".into());
            }
        }
        if self.phase == Phase::Parked
            && (Some(self.position) != topology.parking_index() || !self.queue.is_empty())
        {
            v.push("parked away from the station or with work queued".into());
        }
        if matches!(self.phase, Phase::Surveilling { .. })
            && self.queue.iter().any(|t| t.mode == RobotMode::Firefighting)
        {
            v.push("surveilling while a firefighting task waits".into());
        }
        v
    }
}
