//! Alarm center and notification agents.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{
    Action, AgentId, AlarmKind, MessageKind, RobotMode, SectorId, Severity, Tick, TimelineEntry,
    TriggerCode,
};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("notification sink {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmMode {
    Idle,
    AlarmActive,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlarmOutput {
    pub messages: Vec<MessageKind>,
    pub entries: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmState {
    pub agent: AgentId,
    pub active: BTreeSet<(SectorId, AlarmKind)>,
}

impl AlarmState {
    pub fn new(agent: AgentId) -> Self {
        AlarmState {
            agent,
            active: BTreeSet::new(),
        }
    }

    pub fn mode(&self) -> AlarmMode {
        if self.active.is_empty() {
            AlarmMode::Idle
        } else {
            AlarmMode::AlarmActive
        }
    }

    /// Raise an alarm. A repeat of an alarm that is already active does nothing.
    pub fn handle_trigger(&mut self, sector: &SectorId, kind: AlarmKind, now: Tick) -> AlarmOutput {
        let mut out = AlarmOutput::default();
        if !self.active.insert((sector.clone(), kind)) {
            return out;
        }
        let (mode, action, what) = match kind {
            AlarmKind::Fire => (
                RobotMode::Firefighting,
                Action::ActivateFireMeasures { sector: sector.clone() },
                "Fire",
            ),
            AlarmKind::Intruder => (
                RobotMode::Surveillance,
                Action::ActivateIntruderMeasures { sector: sector.clone() },
                "Intruder",
            ),
        };
        out.entries.push(TimelineEntry::new(
            now,
            self.agent.clone(),
            TriggerCode::SectorTrigger,
            action,
        ));
        out.messages.push(MessageKind::RobotTask {
            mode,
            sector: sector.clone(),
        });
        out.messages.push(MessageKind::Notification {
            text: format!("{what} alarm in {sector}"),
            severity: Severity::Critical,
        });
        log::info!("{what} alarm raised for {sector} at tick {now}");
        out
    }

    /// Operator acknowledgement. Returns whether anything was cleared.
    pub fn clear_alarm(&mut self, sector: &SectorId, kind: AlarmKind) -> bool {
        self.active.remove(&(sector.clone(), kind))
    }

    pub fn check_invariants(&self) -> Vec<String> {
        // Mode is derived from the active set, so only the set itself can be wrong.
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotificationRecord {
    pub tick: Tick,
    pub severity: Severity,
    pub source: AgentId,
    pub text: String,
}

impl NotificationRecord {
    /// `tick|severity|source|text`
    pub fn line(&self) -> String {
        format!("{}|{}|{}|{}", self.tick, self.severity, self.source, self.text)
    }
}

pub trait NotificationSink {
    fn deliver(&mut self, record: &NotificationRecord) -> Result<(), SinkError>;
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<NotificationRecord>,
}

impl NotificationSink for MemorySink {
    fn deliver(&mut self, record: &NotificationRecord) -> Result<(), SinkError> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Appends one line per notification to a file.
pub struct FileSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, SinkError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| SinkError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(FileSink {
            path,
            out: BufWriter::new(file),
        })
    }
}

impl NotificationSink for FileSink {
    fn deliver(&mut self, record: &NotificationRecord) -> Result<(), SinkError> {
        writeln!(self.out, "{}", record.line())
            .and_then(|_| self.out.flush())
            .map_err(|source| SinkError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Forwards notifications to a sink and logs one NOTIFY row per message.
#[derive(Debug, Clone)]
pub struct Notifier {
    pub agent: AgentId,
}

impl Notifier {
    pub fn new(agent: AgentId) -> Self {
        Notifier { agent }
    }

    pub fn notify(
        &self,
        source: &AgentId,
        severity: Severity,
        text: &str,
        now: Tick,
        sink: &mut dyn NotificationSink,
    ) -> Result<TimelineEntry, SinkError> {
        sink.deliver(&NotificationRecord {
            tick: now,
            severity,
            source: source.clone(),
            text: text.to_string(),
        })?;
        Ok(TimelineEntry::new(
            now,
            self.agent.clone(),
            TriggerCode::EventReport,
            Action::Notify { severity },
        ))
    }
}
