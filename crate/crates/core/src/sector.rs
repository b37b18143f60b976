//! Sector agent: turns a sector's sensor bundle into attention requests and
//! alarm triggers, and actuates the local suppressors once a camera has
//! confirmed a fire.

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{
    Action, AlarmKind, Cause, MessageKind, SectorId, SectorMode, SensorReading, Tick, TimelineEntry,
    TriggerCode,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SectorError {
    #[error("stale reading for {sector}: tick {got} is not after {last}")]
    StaleReading { sector: SectorId, got: Tick, last: Tick },
    #[error("reading for {got} delivered to sector agent {expected}")]
    WrongSector { expected: SectorId, got: SectorId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorParams {
    /// Baseline window length.
    pub window: usize,
    /// Readings needed before abnormality can be judged.
    pub min_baseline: usize,
    /// Temperature rise over the baseline mean, °C.
    pub delta_temperature: f64,
    /// Humidity drop under the baseline mean, percentage points.
    pub delta_humidity: f64,
    /// Consecutive normal readings that clear a fire suspicion.
    pub suspicion_timeout: usize,
}

impl Default for SectorParams {
    fn default() -> Self {
        SectorParams {
            window: 5,
            min_baseline: 3,
            delta_temperature: 10.0,
            delta_humidity: 15.0,
            suspicion_timeout: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Idle,
    FireSuspicion { since: Tick },
    FireAlarmed,
    IntruderAlarmed,
}

impl Condition {
    fn label(self) -> &'static str {
        match self {
            Condition::Idle => "Idle",
            Condition::FireSuspicion { .. } => "FireSuspicion",
            Condition::FireAlarmed => "FireAlarmed",
            Condition::IntruderAlarmed => "IntruderAlarmed",
        }
    }
}

/// The sector condition machine. Fire conditions outrank an intruder alarm;
/// a confirmed fire is terminal for the run.
pub fn transition_allowed(from: Condition, to: Condition) -> bool {
    use Condition::*;
    if from.label() == to.label() {
        return true;
    }
    matches!(
        (from, to),
        (Idle, FireSuspicion { .. })
            | (Idle, FireAlarmed)
            | (Idle, IntruderAlarmed)
            | (FireSuspicion { .. }, Idle)
            | (FireSuspicion { .. }, FireAlarmed)
            | (IntruderAlarmed, FireSuspicion { .. })
            | (IntruderAlarmed, FireAlarmed)
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    pub sector: SectorId,
    pub mode: SectorMode,
    pub condition: Condition,
    pub baseline: VecDeque<SensorReading>,
    pub suppressors_active: bool,
    last_tick: Option<Tick>,
    last_motion: bool,
    last_button: bool,
    /// Abnormality flags of the most recent readings, newest last.
    recent: VecDeque<bool>,
}

/// Outputs of one sector operation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SectorOutput {
    pub messages: Vec<MessageKind>,
    pub entries: Vec<TimelineEntry>,
}

/// True iff the reading is hotter than the baseline mean by more than
/// `delta_t` and drier by more than `delta_h`. With fewer than `min_baseline`
/// readings there is no baseline and the answer is false.
pub fn detect_abnormal<'a>(
    window: impl IntoIterator<Item = &'a SensorReading>,
    reading: &SensorReading,
    delta_t: f64,
    delta_h: f64,
    min_baseline: usize,
) -> bool {
    let (mut n, mut t_sum, mut h_sum) = (0usize, 0.0, 0.0);
    for r in window {
        n += 1;
        t_sum += r.temperature;
        h_sum += r.humidity;
    }
    if n == 0 || n < min_baseline {
        return false;
    }
    let t_mean = t_sum / n as f64;
    let h_mean = h_sum / n as f64;
    reading.temperature > t_mean + delta_t && reading.humidity < h_mean - delta_h
}

impl SectorState {
    pub fn new(sector: SectorId) -> Self {
        SectorState {
            sector,
            mode: SectorMode::Normal,
            condition: Condition::Idle,
            baseline: VecDeque::new(),
            suppressors_active: false,
            last_tick: None,
            last_motion: false,
            last_button: false,
            recent: VecDeque::new(),
        }
    }

    fn entry(&self, tick: Tick, trigger: TriggerCode, action: Action) -> TimelineEntry {
        TimelineEntry::new(tick, self.sector.clone(), trigger, action)
    }

    /// Motion and button are edge-triggered: a held PIR or button reports once.
    pub fn ingest_reading(
        &mut self,
        reading: &SensorReading,
        params: &SectorParams,
    ) -> Result<SectorOutput, SectorError> {
        if reading.sector != self.sector {
            return Err(SectorError::WrongSector {
                expected: self.sector.clone(),
                got: reading.sector.clone(),
            });
        }
        if let Some(last) = self.last_tick {
            if reading.tick <= last {
                return Err(SectorError::StaleReading {
                    sector: self.sector.clone(),
                    got: reading.tick,
                    last,
                });
            }
        }
        self.last_tick = Some(reading.tick);
        let tick = reading.tick;
        let s = self.sector.clone();
        let mut out = SectorOutput::default();

        if reading.motion && !self.last_motion {
            match self.mode {
                SectorMode::Normal => {
                    out.messages.push(MessageKind::attention(s.clone(), Cause::Motion));
                    out.entries.push(self.entry(
                        tick,
                        TriggerCode::MotionDetected,
                        Action::RequestAttention { sector: s.clone(), cause: Cause::Motion },
                    ));
                }
                SectorMode::Lockdown => {
                    out.messages.push(MessageKind::attention(s.clone(), Cause::Intruder));
                    out.messages.push(MessageKind::AlarmTrigger {
                        sector: s.clone(),
                        alarm: AlarmKind::Intruder,
                    });
                    out.entries.push(self.entry(
                        tick,
                        TriggerCode::MotionDetected,
                        Action::TriggerIntruderAlarm { sector: s.clone() },
                    ));
                    if self.condition == Condition::Idle {
                        self.condition = Condition::IntruderAlarmed;
                    }
                }
            }
        }
        self.last_motion = reading.motion;

        let abnormal = detect_abnormal(
            &self.baseline,
            reading,
            params.delta_temperature,
            params.delta_humidity,
            params.min_baseline,
        );
        if abnormal && matches!(self.condition, Condition::Idle | Condition::IntruderAlarmed) {
            self.condition = Condition::FireSuspicion { since: tick };
            out.messages.push(MessageKind::attention(s.clone(), Cause::FireSuspicion));
            out.entries.push(self.entry(
                tick,
                TriggerCode::AbnormalReadings,
                Action::RequestAttention { sector: s.clone(), cause: Cause::FireSuspicion },
            ));
        }

        if reading.button && !self.last_button && self.condition != Condition::FireAlarmed {
            self.condition = Condition::FireAlarmed;
            out.messages.push(MessageKind::AlarmTrigger {
                sector: s.clone(),
                alarm: AlarmKind::Fire,
            });
            out.entries.push(self.entry(
                tick,
                TriggerCode::ButtonPressed,
                Action::TriggerFireAlarm { sector: s.clone() },
            ));
        }
        self.last_button = reading.button;

        if !abnormal {
            self.baseline.push_back(reading.clone());
            while self.baseline.len() > params.window.max(1) {
                self.baseline.pop_front();
            }
        }
        self.recent.push_back(abnormal);
        while self.recent.len() > params.suspicion_timeout.max(1) {
            self.recent.pop_front();
        }
        Ok(out)
    }

    pub fn handle_confirmation(&mut self, msg: &MessageKind, now: Tick) -> SectorOutput {
        let mut out = SectorOutput::default();
        let MessageKind::FireConfirmation { sector, .. } = msg else {
            // NoConfirmation never changes state; clearing is reading-driven.
            return out;
        };
        if sector != &self.sector {
            return out;
        }
        let s = self.sector.clone();
        if self.condition != Condition::FireAlarmed {
            self.condition = Condition::FireAlarmed;
            out.messages.push(MessageKind::AlarmTrigger {
                sector: s.clone(),
                alarm: AlarmKind::Fire,
            });
            out.entries.push(self.entry(
                now,
                TriggerCode::FireConfirmation,
                Action::TriggerFireAlarm { sector: s.clone() },
            ));
        }
        if !self.suppressors_active {
            self.suppressors_active = true;
            out.entries.push(self.entry(
                now,
                TriggerCode::FireConfirmation,
                Action::TriggerSuppressors { sector: s },
            ));
        }
        out
    }

    /// Clear a fire suspicion once the last `timeout` readings were normal.
    pub fn check_suspicion_timeout(&mut self, now: Tick, timeout: usize) -> Vec<TimelineEntry> {
        let Condition::FireSuspicion { .. } = self.condition else {
            return vec![];
        };
        let timeout = timeout.max(1);
        let window_full = self.recent.len() >= timeout;
        let all_normal = self.recent.iter().rev().take(timeout).all(|abnormal| !abnormal);
        if window_full && all_normal {
            self.condition = Condition::Idle;
            vec![self.entry(
                now,
                TriggerCode::ReadingsNormalized,
                Action::ClearSuspicion { sector: self.sector.clone() },
            )]
        } else {
            vec![]
        }
    }

    pub fn apply_lockdown(&mut self, scope: &std::collections::BTreeSet<SectorId>, now: Tick) -> Vec<TimelineEntry> {
        if !scope.contains(&self.sector) || self.mode == SectorMode::Lockdown {
            return vec![];
        }
        self.mode = SectorMode::Lockdown;
        vec![self.entry(
            now,
            TriggerCode::LockdownSignal,
            Action::ChangeReactionState { mode: SectorMode::Lockdown },
        )]
    }

    pub fn check_invariants(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.suppressors_active && self.condition != Condition::FireAlarmed {
            v.push(format!("{}: suppressors active outside FireAlarmed", self.sector));
        }
        if let (Condition::FireSuspicion { since }, Some(last)) = (self.condition, self.last_tick) {
            if since > last {
                v.push(format!("{}: suspicion starts in the future", self.sector));
            }
        }
        v
    }
}
