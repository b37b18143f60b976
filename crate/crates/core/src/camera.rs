//! Camera agent: keeps a priority list of attention requests, claims one
//! sector at a time, yields a claimed sector to a peer when an unclaimed
//! request of the same priority class is available, then rotates, dwells and
//! reports what the detector saw.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{
    Action, CameraId, CameraSpec, Cause, Message, MessageKind, Priority, SectorId, Severity, Tick,
    TimelineEntry, Topology, TriggerCode,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CameraError {
    #[error("camera {0} has no target")]
    NoTarget(CameraId),
    #[error("camera {0} is not on target")]
    NotOnTarget(CameraId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorVerdict {
    pub flames: bool,
    pub person: bool,
}

/// Visual analysis of what a camera currently sees.
pub trait Detector {
    fn inspect(&self, camera: &CameraId, sector: &SectorId, tick: Tick) -> DetectorVerdict;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    /// Degrees per tick.
    pub rotation_speed: f64,
    /// Observation ticks spent on a target before giving up on it.
    pub dwell: u32,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            rotation_speed: 90.0,
            dwell: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRequest {
    pub sector: SectorId,
    pub cause: Cause,
    pub priority: Priority,
    pub tick: Tick,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraOutput {
    pub messages: Vec<MessageKind>,
    pub entries: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraState {
    pub camera: CameraId,
    /// Covered sectors and the heading that points at each.
    pub coverage: BTreeMap<SectorId, f64>,
    /// Priority class desc, then request tick desc, then sector asc.
    pub pending: Vec<PendingRequest>,
    pub peer_claims: BTreeMap<CameraId, SectorId>,
    pub heading: f64,
    pub target: Option<SectorId>,
    pub on_target: bool,
    pub dwell_remaining: u32,
    pub reaction_delay: u64,
    arbitration_due: Option<Tick>,
    window_opened: Option<Tick>,
    claim_in_window: bool,
    intruder_reported: bool,
}

fn normalize(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Signed shortest rotation from `from` to `to`, in (-180, 180].
fn shortest_arc(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

impl CameraState {
    pub fn new(spec: &CameraSpec, topology: &Topology, reaction_delay: u64) -> Self {
        let heading = spec.initial_heading.unwrap_or_else(|| {
            topology
                .sectors
                .iter()
                .find_map(|s| spec.coverage.get(s).copied())
                .unwrap_or(0.0)
        });
        CameraState {
            camera: spec.id.clone(),
            coverage: spec.coverage.clone(),
            pending: Vec::new(),
            peer_claims: BTreeMap::new(),
            heading: normalize(heading),
            target: None,
            on_target: false,
            dwell_remaining: 0,
            reaction_delay,
            arbitration_due: None,
            window_opened: None,
            claim_in_window: false,
            intruder_reported: false,
        }
    }

    pub fn arbitration_due(&self) -> Option<Tick> {
        self.arbitration_due
    }

    fn entry(&self, tick: Tick, trigger: TriggerCode, action: Action) -> TimelineEntry {
        TimelineEntry::new(tick, self.camera.clone(), trigger, action)
    }

    fn sort_pending(&mut self) {
        self.pending.sort_by(|a, b| {
            b.priority
                .cmp(&a.priority)
                .then(b.tick.cmp(&a.tick))
                .then(a.sector.cmp(&b.sector))
                .then(a.cause.cmp(&b.cause))
        });
    }

    /// Merge a delivery batch. Requests outside coverage are dropped; a
    /// request for an already pending (sector, cause) replaces it. The first
    /// in-coverage request schedules an arbitration `reaction_delay` ticks
    /// later.
    pub fn update_priorities(&mut self, batch: &[Message], now: Tick) -> Vec<TimelineEntry> {
        let mut got_request = false;
        for msg in batch {
            if let MessageKind::AttentionRequest { sector, cause, priority } = &msg.kind {
                if !self.coverage.contains_key(sector) {
                    continue;
                }
                got_request = true;
                let fresh = PendingRequest {
                    sector: sector.clone(),
                    cause: *cause,
                    priority: *priority,
                    tick: msg.published_at,
                };
                match self
                    .pending
                    .iter_mut()
                    .find(|p| &p.sector == sector && p.cause == *cause)
                {
                    Some(existing) if existing.tick <= fresh.tick => *existing = fresh,
                    Some(_) => {}
                    None => self.pending.push(fresh),
                }
            }
        }
        if got_request {
            self.sort_pending();
            if self.arbitration_due.is_none() {
                self.arbitration_due = Some(now.plus(self.reaction_delay));
                self.window_opened = Some(now);
            }
        }
        let mut contested = false;
        for msg in batch {
            match &msg.kind {
                MessageKind::CameraClaim { camera, sector } if camera != &self.camera => {
                    self.peer_claims.insert(camera.clone(), sector.clone());
                    if self.window_opened.is_some() {
                        self.claim_in_window = true;
                    }
                    contested |= self.target.as_ref() == Some(sector);
                }
                // A peer already confirmed this fire; no need for a second look
                // unless we are already on it.
                MessageKind::FireConfirmation { camera, sector } if camera != &self.camera => {
                    let current = self.target.as_ref();
                    self.pending.retain(|p| &p.sector != sector || Some(&p.sector) == current);
                }
                _ => {}
            }
        }
        // A peer took our target after we claimed it: yield too, if an
        // equal-priority alternative is free.
        if contested && self.arbitration_due.is_none() && self.choose() != self.target {
            self.arbitration_due = Some(now.plus(self.reaction_delay));
            self.window_opened = Some(now);
            self.claim_in_window = true;
        }
        vec![]
    }

    /// Target choice for the current pending list and peer claims.
    pub fn choose(&self) -> Option<SectorId> {
        let head = self.pending.first()?;
        let claimed: BTreeSet<&SectorId> = self.peer_claims.values().collect();
        if claimed.contains(&head.sector) {
            if let Some(alt) = self
                .pending
                .iter()
                .find(|p| p.priority == head.priority && !claimed.contains(&p.sector))
            {
                return Some(alt.sector.clone());
            }
        }
        Some(head.sector.clone())
    }

    fn set_target(&mut self, sector: Option<SectorId>) {
        if sector != self.target {
            self.target = sector;
            self.on_target = false;
            self.dwell_remaining = 0;
            self.intruder_reported = false;
        }
    }

    /// Pick a target and announce it. Keeps an ongoing dwell when the target
    /// does not change.
    pub fn arbitrate(&mut self, now: Tick) -> (Option<MessageKind>, Vec<TimelineEntry>) {
        let trigger = if self.claim_in_window {
            TriggerCode::AttentionRequestsAndClaim
        } else {
            TriggerCode::AttentionRequests
        };
        self.arbitration_due = None;
        self.window_opened = None;
        self.claim_in_window = false;

        let Some(sector) = self.choose() else {
            self.set_target(None);
            return (None, vec![]);
        };
        self.set_target(Some(sector.clone()));
        let claim = MessageKind::CameraClaim {
            camera: self.camera.clone(),
            sector: sector.clone(),
        };
        (Some(claim), vec![self.entry(now, trigger, Action::ClaimAndMove { sector })])
    }

    /// Turn towards the target along the shorter arc, at most
    /// `rotation_speed` degrees. Reaching the target starts the dwell.
    pub fn rotate_step(
        &mut self,
        params: &CameraParams,
        now: Tick,
    ) -> Result<(bool, Vec<TimelineEntry>), CameraError> {
        let target = self.target.clone().ok_or_else(|| CameraError::NoTarget(self.camera.clone()))?;
        let goal = normalize(self.coverage[&target]);
        let arc = shortest_arc(self.heading, goal);
        let mut entries = Vec::new();
        if arc.abs() <= params.rotation_speed || arc == 0.0 {
            if arc != 0.0 {
                self.heading = goal;
                entries.push(self.rotate_entry(now));
            }
            self.on_target = true;
            self.dwell_remaining = params.dwell.max(1);
            entries.push(self.entry(now, TriggerCode::RotationStep, Action::OnTarget { sector: target }));
            Ok((true, entries))
        } else {
            self.heading = normalize(self.heading + params.rotation_speed.copysign(arc));
            entries.push(self.rotate_entry(now));
            Ok((false, entries))
        }
    }

    fn rotate_entry(&self, now: Tick) -> TimelineEntry {
        self.entry(
            now,
            TriggerCode::RotationStep,
            Action::Rotate {
                decidegrees: (self.heading * 10.0).round() as i64,
            },
        )
    }

    /// One observation tick on target.
    pub fn observe(&mut self, verdict: DetectorVerdict, now: Tick) -> Result<CameraOutput, CameraError> {
        let Some(target) = self.target.clone() else {
            return Err(CameraError::NotOnTarget(self.camera.clone()));
        };
        if !self.on_target || self.dwell_remaining == 0 {
            return Err(CameraError::NotOnTarget(self.camera.clone()));
        }
        let mut out = CameraOutput::default();

        let intruder_pending = self
            .pending
            .iter()
            .any(|p| p.sector == target && p.cause == Cause::Intruder);
        if verdict.person && intruder_pending && !self.intruder_reported {
            self.intruder_reported = true;
            out.messages.push(MessageKind::Notification {
                text: format!("{} sees a person in {}", self.camera, target),
                severity: Severity::Critical,
            });
        }

        if verdict.flames {
            out.messages.push(MessageKind::FireConfirmation {
                camera: self.camera.clone(),
                sector: target.clone(),
            });
            out.entries.push(self.entry(
                now,
                TriggerCode::FlamesDetected,
                Action::SendFireConfirmation { sector: target.clone() },
            ));
            self.finish_target(&target, now, &mut out);
            return Ok(out);
        }

        self.dwell_remaining -= 1;
        if self.dwell_remaining == 0 {
            out.messages.push(MessageKind::NoConfirmation {
                camera: self.camera.clone(),
                sector: target.clone(),
            });
            out.entries.push(self.entry(
                now,
                TriggerCode::DwellElapsed,
                Action::NoConfirmation { sector: target.clone() },
            ));
            self.finish_target(&target, now, &mut out);
        }
        Ok(out)
    }

    /// Drop the examined sector's requests and move on to the next one.
    fn finish_target(&mut self, sector: &SectorId, now: Tick, out: &mut CameraOutput) {
        self.pending.retain(|p| &p.sector != sector);
        self.set_target(None);
        match self.choose() {
            Some(next) => {
                self.set_target(Some(next.clone()));
                out.messages.push(MessageKind::CameraClaim {
                    camera: self.camera.clone(),
                    sector: next.clone(),
                });
                out.entries.push(self.entry(now, TriggerCode::DwellElapsed, Action::Retarget { sector: next }));
            }
            None => out.entries.push(self.entry(now, TriggerCode::DwellElapsed, Action::StandBy)),
        }
    }

    /// One full camera tick after arbitration: rotate if needed, otherwise
    /// observe.
    pub fn act(
        &mut self,
        params: &CameraParams,
        detector: &dyn Detector,
        now: Tick,
    ) -> CameraOutput {
        let Some(target) = self.target.clone() else {
            return CameraOutput::default();
        };
        if !self.on_target {
            let (_, entries) = self.rotate_step(params, now).expect("target is set");
            return CameraOutput {
                messages: vec![],
                entries,
            };
        }
        let verdict = detector.inspect(&self.camera, &target, now);
        self.observe(verdict, now).expect("on target with dwell left")
    }

    pub fn check_invariants(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(t) = &self.target {
            if !self.coverage.contains_key(t) {
                v.push(format!("{} targets uncovered {}", self.camera, t));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.pending {
            if !seen.insert((&p.sector, p.cause)) {
                v.push(format!("{} has duplicate pending {} {}", self.camera, p.sector, p.cause));
            }
            if !self.coverage.contains_key(&p.sector) {
                v.push(format!("{} holds uncovered request {}", self.camera, p.sector));
            }
        }
        v
    }
}
