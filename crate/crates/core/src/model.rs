//! Shared domain vocabulary: identifiers, logical time, topology, sensor
//! readings, bus payloads and timeline records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown sector `{0}`")]
    UnknownSector(String),
    #[error("invalid identifier `{0}`: must be nonempty without whitespace or '/'")]
    InvalidId(String),
    #[error("invalid reading: {0}")]
    InvalidReading(String),
    #[error("unrecognised code `{0}`")]
    UnknownCode(String),
}

/// Logical simulation step. One tick is one scheduler round.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    pub fn next(self) -> Tick {
        Tick(self.0 + 1)
    }

    pub fn plus(self, ticks: u64) -> Tick {
        Tick(self.0 + ticks)
    }

    /// The previous tick, or `None` at the start of a run.
    pub fn prev(self) -> Option<Tick> {
        self.0.checked_sub(1).map(Tick)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Name of an agent (sectors and cameras are agents too). Used verbatim as a
/// topic segment, so it may not contain whitespace or '/'.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(String);

pub type SectorId = AgentId;
pub type CameraId = AgentId;

impl AgentId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty()
            || name.contains('/')
            || name.chars().any(char::is_whitespace)
            || name.contains('+')
            || name.contains('#')
        {
            return Err(ModelError::InvalidId(name));
        }
        Ok(AgentId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AgentId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        AgentId::new(value)
    }
}

impl From<AgentId> for String {
    fn from(value: AgentId) -> Self {
        value.0
    }
}

impl FromStr for AgentId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentId::new(s)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Shorthand for tests and fixtures; panics on an invalid name.
pub fn id(name: &str) -> AgentId {
    AgentId::new(name).expect("valid agent id")
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub id: CameraId,
    /// Covered sectors with the heading (degrees) that points at each one.
    pub coverage: BTreeMap<SectorId, f64>,
    /// Heading at the start of a run; defaults to the first covered sector
    /// in topology order.
    #[serde(default)]
    pub initial_heading: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Waypoint {
    Parking,
    Sector(SectorId),
}

impl Waypoint {
    pub fn sector(&self) -> Option<&SectorId> {
        match self {
            Waypoint::Parking => None,
            Waypoint::Sector(s) => Some(s),
        }
    }
}

impl fmt::Display for Waypoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waypoint::Parking => f.write_str("Parking"),
            Waypoint::Sector(s) => write!(f, "{s}"),
        }
    }
}

/// One stop on the robot circuit plus the travel cost (ticks at full speed)
/// of the edge leaving it towards the next stop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitLeg {
    pub waypoint: Waypoint,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub sectors: Vec<SectorId>,
    pub cameras: Vec<CameraSpec>,
    /// Cyclic: the last leg's edge leads back to the first waypoint.
    pub circuit: Vec<CircuitLeg>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TopologyViolation {
    DuplicateSector(SectorId),
    DuplicateCamera(CameraId),
    UncoveredSector(SectorId),
    CoverageOutsideSectors { camera: CameraId, sector: SectorId },
    CircuitIncomplete(SectorId),
    CircuitRepeats(SectorId),
    CircuitUnknownSector(SectorId),
    ParkingCount(usize),
    ZeroEdgeCost(usize),
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyViolation::DuplicateSector(s) => write!(f, "sector {s} declared twice"),
            TopologyViolation::DuplicateCamera(c) => write!(f, "camera {c} declared twice"),
            TopologyViolation::UncoveredSector(s) => write!(f, "sector {s} is covered by no camera"),
            TopologyViolation::CoverageOutsideSectors { camera, sector } => {
                write!(f, "camera {camera} covers unknown sector {sector}")
            }
            TopologyViolation::CircuitIncomplete(s) => write!(f, "circuit misses sector {s}"),
            TopologyViolation::CircuitRepeats(s) => write!(f, "circuit visits sector {s} more than once"),
            TopologyViolation::CircuitUnknownSector(s) => write!(f, "circuit visits unknown sector {s}"),
            TopologyViolation::ParkingCount(n) => {
                write!(f, "circuit must contain exactly one Parking waypoint, found {n}")
            }
            TopologyViolation::ZeroEdgeCost(i) => write!(f, "circuit edge {i} has zero travel cost"),
        }
    }
}

impl Topology {
    /// Every invariant violation, in a stable order. Empty means valid.
    pub fn validate(&self) -> Vec<TopologyViolation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for s in &self.sectors {
            if !seen.insert(s) {
                out.push(TopologyViolation::DuplicateSector(s.clone()));
            }
        }
        let mut cams = BTreeSet::new();
        for c in &self.cameras {
            if !cams.insert(&c.id) {
                out.push(TopologyViolation::DuplicateCamera(c.id.clone()));
            }
            for s in c.coverage.keys() {
                if !seen.contains(s) {
                    out.push(TopologyViolation::CoverageOutsideSectors {
                        camera: c.id.clone(),
                        sector: s.clone(),
                    });
                }
            }
        }
        for s in &self.sectors {
            if !self.cameras.iter().any(|c| c.coverage.contains_key(s)) {
                out.push(TopologyViolation::UncoveredSector(s.clone()));
            }
        }

        let mut visits: BTreeMap<&SectorId, usize> = BTreeMap::new();
        let mut parking = 0;
        for (i, leg) in self.circuit.iter().enumerate() {
            match &leg.waypoint {
                Waypoint::Parking => parking += 1,
                Waypoint::Sector(s) => {
                    if !seen.contains(s) {
                        out.push(TopologyViolation::CircuitUnknownSector(s.clone()));
                    }
                    *visits.entry(s).or_default() += 1;
                }
            }
            if leg.cost == 0 {
                out.push(TopologyViolation::ZeroEdgeCost(i));
            }
        }
        for s in &self.sectors {
            match visits.get(s) {
                None => out.push(TopologyViolation::CircuitIncomplete(s.clone())),
                Some(n) if *n > 1 => out.push(TopologyViolation::CircuitRepeats(s.clone())),
                _ => {}
            }
        }
        if parking != 1 {
            out.push(TopologyViolation::ParkingCount(parking));
        }
        out
    }

    pub fn has_sector(&self, s: &SectorId) -> bool {
        self.sectors.contains(s)
    }

    /// Cameras whose coverage contains `s`, in declaration order.
    pub fn covering_cameras(&self, s: &SectorId) -> Result<Vec<CameraId>, ModelError> {
        if !self.has_sector(s) {
            return Err(ModelError::UnknownSector(s.to_string()));
        }
        Ok(self
            .cameras
            .iter()
            .filter(|c| c.coverage.contains_key(s))
            .map(|c| c.id.clone())
            .collect())
    }

    pub fn camera(&self, c: &CameraId) -> Option<&CameraSpec> {
        self.cameras.iter().find(|spec| &spec.id == c)
    }

    pub fn parking_index(&self) -> Option<usize> {
        self.circuit
            .iter()
            .position(|leg| leg.waypoint == Waypoint::Parking)
    }

    pub fn waypoint_index(&self, w: &Waypoint) -> Option<usize> {
        self.circuit.iter().position(|leg| &leg.waypoint == w)
    }

    pub fn sector_waypoint(&self, s: &SectorId) -> Option<usize> {
        self.waypoint_index(&Waypoint::Sector(s.clone()))
    }

    pub fn next_waypoint(&self, index: usize) -> usize {
        (index + 1) % self.circuit.len()
    }

    /// The four-sector shop floor: a 360° camera in the middle, a side camera
    /// limited to Sector2 and Sector3, and a parking station between Sector4
    /// and Sector1 on a ring of equal three-tick edges.
    pub fn case_study() -> Topology {
        let s = |n: u32| id(&format!("Sector{n}"));
        let center = CameraSpec {
            id: id("Camera1"),
            coverage: [(s(1), 0.0), (s(2), 90.0), (s(3), 180.0), (s(4), 270.0)]
                .into_iter()
                .collect(),
            initial_heading: None,
        };
        let side = CameraSpec {
            id: id("Camera2"),
            coverage: [(s(2), 60.0), (s(3), 120.0)].into_iter().collect(),
            initial_heading: None,
        };
        let mut circuit = vec![CircuitLeg {
            waypoint: Waypoint::Parking,
            cost: 3,
        }];
        circuit.extend((1..=4).map(|n| CircuitLeg {
            waypoint: Waypoint::Sector(s(n)),
            cost: 3,
        }));
        Topology {
            sectors: (1..=4).map(s).collect(),
            cameras: vec![center, side],
            circuit,
        }
    }
}

// ---------------------------------------------------------------------------
// Readings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub sector: SectorId,
    pub tick: Tick,
    /// °C
    pub temperature: f64,
    /// % relative humidity
    pub humidity: f64,
    pub motion: bool,
    pub button: bool,
}

impl SensorReading {
    pub fn new(
        sector: SectorId,
        tick: Tick,
        temperature: f64,
        humidity: f64,
        motion: bool,
        button: bool,
    ) -> Result<Self, ModelError> {
        if !temperature.is_finite() {
            return Err(ModelError::InvalidReading(format!(
                "temperature {temperature} is not finite"
            )));
        }
        if !(0.0..=100.0).contains(&humidity) {
            return Err(ModelError::InvalidReading(format!(
                "humidity {humidity} outside [0, 100]"
            )));
        }
        Ok(SensorReading {
            sector,
            tick,
            temperature,
            humidity,
            motion,
            button,
        })
    }
}

// ---------------------------------------------------------------------------
// Message payloads
// ---------------------------------------------------------------------------

macro_rules! simple_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $(#[serde(rename = $text)] $variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownCode(other.to_string())),
                }
            }
        }
    };
}

simple_enum!(
    /// Ordered so that `Emergency > Routine`.
    Priority { Routine => "Routine", Emergency => "Emergency" }
);

simple_enum!(Cause {
    Motion => "Motion",
    FireSuspicion => "FireSuspicion",
    Intruder => "Intruder",
});

simple_enum!(AlarmKind { Fire => "Fire", Intruder => "Intruder" });

simple_enum!(RobotMode {
    Surveillance => "Surveillance",
    Firefighting => "Firefighting",
});

simple_enum!(Severity {
    Info => "info",
    Warning => "warning",
    Critical => "critical",
});

simple_enum!(SectorMode { Normal => "Normal", Lockdown => "Lockdown" });

impl Cause {
    pub fn priority(self) -> Priority {
        match self {
            Cause::Motion => Priority::Routine,
            Cause::FireSuspicion | Cause::Intruder => Priority::Emergency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MessageKind {
    AttentionRequest {
        sector: SectorId,
        cause: Cause,
        priority: Priority,
    },
    CameraClaim {
        camera: CameraId,
        sector: SectorId,
    },
    FireConfirmation {
        camera: CameraId,
        sector: SectorId,
    },
    NoConfirmation {
        camera: CameraId,
        sector: SectorId,
    },
    AlarmTrigger {
        sector: SectorId,
        alarm: AlarmKind,
    },
    RobotTask {
        mode: RobotMode,
        sector: SectorId,
    },
    LockdownCommand {
        scope: BTreeSet<SectorId>,
    },
    Notification {
        text: String,
        severity: Severity,
    },
}

impl MessageKind {
    /// Attention request whose priority class follows from its cause.
    pub fn attention(sector: SectorId, cause: Cause) -> MessageKind {
        MessageKind::AttentionRequest {
            sector,
            cause,
            priority: cause.priority(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::AttentionRequest { .. } => "AttentionRequest",
            MessageKind::CameraClaim { .. } => "CameraClaim",
            MessageKind::FireConfirmation { .. } => "FireConfirmation",
            MessageKind::NoConfirmation { .. } => "NoConfirmation",
            MessageKind::AlarmTrigger { .. } => "AlarmTrigger",
            MessageKind::RobotTask { .. } => "RobotTask",
            MessageKind::LockdownCommand { .. } => "LockdownCommand",
            MessageKind::Notification { .. } => "Notification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: AgentId,
    pub published_at: Tick,
}

impl Message {
    pub fn new(sender: AgentId, published_at: Tick, kind: MessageKind) -> Self {
        Message {
            kind,
            sender,
            published_at,
        }
    }

    /// Flat JSON object: the payload fields with a `kind` discriminator plus
    /// `sender` and `tick`.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(&self.kind).expect("message kinds serialize");
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("sender".into(), self.sender.as_str().into());
            map.insert("tick".into(), self.published_at.0.into());
        }
        value.to_string()
    }

    /// Inverse of [`Message::to_json`]. `sender` and `tick` are optional on
    /// input and default to the given values.
    pub fn from_json(
        text: &str,
        default_sender: &AgentId,
        default_tick: Tick,
    ) -> Result<Message, serde_json::Error> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let mut sender = default_sender.clone();
        let mut tick = default_tick;
        if let serde_json::Value::Object(map) = &mut value {
            if let Some(s) = map.remove("sender") {
                sender = serde_json::from_value(s)?;
            }
            if let Some(t) = map.remove("tick") {
                tick = serde_json::from_value(t)?;
            }
        }
        let kind = serde_json::from_value(value)?;
        Ok(Message::new(sender, tick, kind))
    }
}

// ---------------------------------------------------------------------------
// Timeline vocabulary
// ---------------------------------------------------------------------------

simple_enum!(
    /// What an agent reacted to. The last four codes are engine plumbing and
    /// only show up in full timelines.
    TriggerCode {
        MotionDetected => "MOTION_DETECTED",
        AbnormalReadings => "ABNORMAL_READINGS",
        AttentionRequests => "ATTENTION_REQUESTS",
        AttentionRequestsAndClaim => "ATTENTION_REQUESTS_AND_CLAIM",
        LockdownSignal => "LOCKDOWN_SIGNAL",
        SectorTrigger => "SECTOR_TRIGGER",
        Activation => "ACTIVATION",
        FlamesDetected => "FLAMES_DETECTED",
        FireConfirmation => "FIRE_CONFIRMATION",
        ButtonPressed => "BUTTON_PRESSED",
        ReadingsNormalized => "READINGS_NORMALIZED",
        RotationStep => "ROTATION_STEP",
        DwellElapsed => "DWELL_ELAPSED",
        RobotProgress => "ROBOT_PROGRESS",
        EventReport => "EVENT_REPORT",
    }
);

impl TriggerCode {
    pub fn is_plumbing(self) -> bool {
        matches!(
            self,
            TriggerCode::RotationStep
                | TriggerCode::DwellElapsed
                | TriggerCode::RobotProgress
                | TriggerCode::EventReport
        )
    }
}

/// What an agent did, with its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    RequestAttention { sector: SectorId, cause: Cause },
    ClaimAndMove { sector: SectorId },
    TriggerIntruderAlarm { sector: SectorId },
    TriggerFireAlarm { sector: SectorId },
    ChangeReactionState { mode: SectorMode },
    ActivateIntruderMeasures { sector: SectorId },
    ActivateFireMeasures { sector: SectorId },
    DispatchRobot { mode: RobotMode, sector: SectorId },
    MoveToSurveil { sector: SectorId },
    UpdateCourse { mode: RobotMode, sector: SectorId },
    SendFireConfirmation { sector: SectorId },
    TriggerSuppressors { sector: SectorId },
    ClearSuspicion { sector: SectorId },
    Notify { severity: Severity },
    // Micro-steps below are never compared against goldens.
    /// Heading after the step, in tenths of a degree.
    Rotate { decidegrees: i64 },
    OnTarget { sector: SectorId },
    NoConfirmation { sector: SectorId },
    Retarget { sector: SectorId },
    StandBy,
    Arrive { waypoint: String },
    StartSurveillance { sector: SectorId },
    StartSearch { sector: SectorId },
    StartExtinguish { sector: SectorId },
    FireOut { sector: SectorId },
    SurveillanceDone { sector: SectorId },
    ReturnToParking,
    Parked,
}

impl Action {
    pub fn code(&self) -> &'static str {
        match self {
            Action::RequestAttention { .. } => "REQUEST_ATTENTION",
            Action::ClaimAndMove { .. } => "CLAIM_AND_MOVE",
            Action::TriggerIntruderAlarm { .. } => "TRIGGER_INTRUDER_ALARM",
            Action::TriggerFireAlarm { .. } => "TRIGGER_FIRE_ALARM",
            Action::ChangeReactionState { .. } => "CHANGE_REACTION_STATE",
            Action::ActivateIntruderMeasures { .. } => "ACTIVATE_INTRUDER_MEASURES",
            Action::ActivateFireMeasures { .. } => "ACTIVATE_FIRE_MEASURES",
            Action::DispatchRobot { .. } => "DISPATCH_ROBOT",
            Action::MoveToSurveil { .. } => "MOVE_TO_SURVEIL",
            Action::UpdateCourse { .. } => "UPDATE_COURSE",
            Action::SendFireConfirmation { .. } => "SEND_FIRE_CONFIRMATION",
            Action::TriggerSuppressors { .. } => "TRIGGER_SUPPRESSORS",
            Action::ClearSuspicion { .. } => "CLEAR_SUSPICION",
            Action::Notify { .. } => "NOTIFY",
            Action::Rotate { .. } => "ROTATE",
            Action::OnTarget { .. } => "ON_TARGET",
            Action::NoConfirmation { .. } => "NO_CONFIRMATION",
            Action::Retarget { .. } => "RETARGET",
            Action::StandBy => "STAND_BY",
            Action::Arrive { .. } => "ARRIVE",
            Action::StartSurveillance { .. } => "START_SURVEILLANCE",
            Action::StartSearch { .. } => "START_SEARCH",
            Action::StartExtinguish { .. } => "START_EXTINGUISH",
            Action::FireOut { .. } => "FIRE_OUT",
            Action::SurveillanceDone { .. } => "SURVEILLANCE_DONE",
            Action::ReturnToParking => "RETURN_TO_PARKING",
            Action::Parked => "PARKED",
        }
    }

    /// Whether this action belongs to the vocabulary that golden timelines
    /// are written in.
    pub fn is_comparable(&self) -> bool {
        !matches!(
            self,
            Action::Rotate { .. }
                | Action::OnTarget { .. }
                | Action::NoConfirmation { .. }
                | Action::Retarget { .. }
                | Action::StandBy
                | Action::Arrive { .. }
                | Action::StartSurveillance { .. }
                | Action::StartSearch { .. }
                | Action::StartExtinguish { .. }
                | Action::FireOut { .. }
                | Action::SurveillanceDone { .. }
                | Action::ReturnToParking
                | Action::Parked
        )
    }

    fn args(&self) -> Vec<String> {
        match self {
            Action::RequestAttention { sector, cause } => vec![sector.to_string(), cause.to_string()],
            Action::ClaimAndMove { sector }
            | Action::TriggerIntruderAlarm { sector }
            | Action::TriggerFireAlarm { sector }
            | Action::ActivateIntruderMeasures { sector }
            | Action::ActivateFireMeasures { sector }
            | Action::MoveToSurveil { sector }
            | Action::SendFireConfirmation { sector }
            | Action::TriggerSuppressors { sector }
            | Action::ClearSuspicion { sector }
            | Action::OnTarget { sector }
            | Action::NoConfirmation { sector }
            | Action::Retarget { sector }
            | Action::StartSurveillance { sector }
            | Action::StartSearch { sector }
            | Action::StartExtinguish { sector }
            | Action::FireOut { sector }
            | Action::SurveillanceDone { sector } => vec![sector.to_string()],
            Action::ChangeReactionState { mode } => vec![mode.to_string()],
            Action::DispatchRobot { mode, sector } | Action::UpdateCourse { mode, sector } => {
                vec![mode.to_string(), sector.to_string()]
            }
            Action::Notify { severity } => vec![severity.to_string()],
            Action::Rotate { decidegrees } => {
                vec![format!("{}.{}", decidegrees / 10, decidegrees % 10)]
            }
            Action::Arrive { waypoint } => vec![waypoint.clone()],
            Action::StandBy | Action::ReturnToParking | Action::Parked => vec![],
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args = self.args();
        if args.is_empty() {
            f.write_str(self.code())
        } else {
            write!(f, "{}({})", self.code(), args.join(", "))
        }
    }
}

impl FromStr for Action {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::UnknownCode(s.to_string());
        let s = s.trim();
        let (code, args): (&str, Vec<&str>) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                let args = if inner.trim().is_empty() {
                    vec![]
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                (s[..open].trim(), args)
            }
            None => (s, vec![]),
        };
        let one = |args: &[&str]| -> Result<SectorId, ModelError> {
            match args {
                [a] => AgentId::new(*a),
                _ => Err(bad()),
            }
        };
        let two = |args: &[&str]| -> Result<(RobotMode, SectorId), ModelError> {
            match args {
                [m, a] => Ok((m.parse()?, AgentId::new(*a)?)),
                _ => Err(bad()),
            }
        };
        let none = |args: &[&str]| if args.is_empty() { Ok(()) } else { Err(bad()) };
        Ok(match code {
            "REQUEST_ATTENTION" => match args.as_slice() {
                [a, c] => Action::RequestAttention {
                    sector: AgentId::new(*a)?,
                    cause: c.parse()?,
                },
                _ => return Err(bad()),
            },
            "CLAIM_AND_MOVE" => Action::ClaimAndMove { sector: one(&args)? },
            "TRIGGER_INTRUDER_ALARM" => Action::TriggerIntruderAlarm { sector: one(&args)? },
            "TRIGGER_FIRE_ALARM" => Action::TriggerFireAlarm { sector: one(&args)? },
            "CHANGE_REACTION_STATE" => match args.as_slice() {
                [m] => Action::ChangeReactionState { mode: m.parse()? },
                _ => return Err(bad()),
            },
            "ACTIVATE_INTRUDER_MEASURES" => Action::ActivateIntruderMeasures { sector: one(&args)? },
            "ACTIVATE_FIRE_MEASURES" => Action::ActivateFireMeasures { sector: one(&args)? },
            "DISPATCH_ROBOT" => {
                let (mode, sector) = two(&args)?;
                Action::DispatchRobot { mode, sector }
            }
            "MOVE_TO_SURVEIL" => Action::MoveToSurveil { sector: one(&args)? },
            "UPDATE_COURSE" => {
                let (mode, sector) = two(&args)?;
                Action::UpdateCourse { mode, sector }
            }
            "SEND_FIRE_CONFIRMATION" => Action::SendFireConfirmation { sector: one(&args)? },
            "TRIGGER_SUPPRESSORS" => Action::TriggerSuppressors { sector: one(&args)? },
            "CLEAR_SUSPICION" => Action::ClearSuspicion { sector: one(&args)? },
            "NOTIFY" => match args.as_slice() {
                [sev] => Action::Notify { severity: sev.parse()? },
                _ => return Err(bad()),
            },
            "ROTATE" => match args.as_slice() {
                [deg] => {
                    let deg: f64 = deg.parse().map_err(|_| bad())?;
                    Action::Rotate {
                        decidegrees: (deg * 10.0).round() as i64,
                    }
                }
                _ => return Err(bad()),
            },
            "ON_TARGET" => Action::OnTarget { sector: one(&args)? },
            "NO_CONFIRMATION" => Action::NoConfirmation { sector: one(&args)? },
            "RETARGET" => Action::Retarget { sector: one(&args)? },
            "STAND_BY" => {
                none(&args)?;
                Action::StandBy
            }
            "ARRIVE" => match args.as_slice() {
                [w] => Action::Arrive { waypoint: w.to_string() },
                _ => return Err(bad()),
            },
            "START_SURVEILLANCE" => Action::StartSurveillance { sector: one(&args)? },
            "START_SEARCH" => Action::StartSearch { sector: one(&args)? },
            "START_EXTINGUISH" => Action::StartExtinguish { sector: one(&args)? },
            "FIRE_OUT" => Action::FireOut { sector: one(&args)? },
            "SURVEILLANCE_DONE" => Action::SurveillanceDone { sector: one(&args)? },
            "RETURN_TO_PARKING" => {
                none(&args)?;
                Action::ReturnToParking
            }
            "PARKED" => {
                none(&args)?;
                Action::Parked
            }
            _ => return Err(bad()),
        })
    }
}

/// One row of an agent timeline. `step` is zero until the entry is recorded
/// into a [`crate::engine::Timeline`], which numbers rows from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineEntry {
    pub step: u32,
    pub tick: Tick,
    pub agent: AgentId,
    pub trigger: TriggerCode,
    pub action: Action,
}

impl TimelineEntry {
    pub fn new(tick: Tick, agent: AgentId, trigger: TriggerCode, action: Action) -> Self {
        TimelineEntry {
            step: 0,
            tick,
            agent,
            trigger,
            action,
        }
    }

    pub fn is_comparable(&self) -> bool {
        self.action.is_comparable()
    }

    /// `tick|step|agent|TRIGGER|ACTION(args)`
    pub fn log_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.tick, self.step, self.agent, self.trigger, self.action
        )
    }

    /// Same agent, trigger and action, ignoring step and tick.
    pub fn same_row(&self, other: &TimelineEntry) -> bool {
        self.agent == other.agent && self.trigger == other.trigger && self.action == other.action
    }
}

impl fmt::Display for TimelineEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.step, self.agent, self.trigger, self.action)
    }
}
