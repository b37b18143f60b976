//! Scenario files: topology, scripted sensor values, camera ground truth,
//! operator commands and tuning parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::camera::{CameraParams, Detector, DetectorVerdict};
use crate::model::{
    AgentId, CameraId, CameraSpec, CircuitLeg, MessageKind, RobotMode, SectorId, SensorReading,
    Tick, Topology, TopologyViolation, Waypoint,
};
use crate::robot::RobotParams;
use crate::sector::SectorParams;

pub const DEFAULT_TEMPERATURE: f64 = 22.0;
pub const DEFAULT_HUMIDITY: f64 = 50.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("invalid topology: {}", .0.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "))]
    Topology(Vec<TopologyViolation>),
}

/// Sensor values from `tick` on. Unset fields keep their previous value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub tick: Tick,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub motion: Option<bool>,
    pub button: Option<bool>,
}

/// What a camera pointed at `sector` sees during `[from, to)`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualEvent {
    pub sector: SectorId,
    pub from: Tick,
    pub to: Option<Tick>,
    #[serde(default)]
    pub flames: bool,
    #[serde(default)]
    pub person: bool,
}

impl VisualEvent {
    fn active(&self, tick: Tick) -> bool {
        self.from <= tick && self.to.map_or(true, |to| tick < to)
    }
}

/// Camera detector backed by the scenario's visual ground truth.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub events: Vec<VisualEvent>,
}

impl Detector for GroundTruth {
    fn inspect(&self, _camera: &CameraId, sector: &SectorId, tick: Tick) -> DetectorVerdict {
        let mut v = DetectorVerdict::default();
        for e in self.events.iter().filter(|e| &e.sector == sector && e.active(tick)) {
            v.flames |= e.flames;
            v.person |= e.person;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub tick: Tick,
    pub message: MessageKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub sector: SectorParams,
    pub camera: CameraParams,
    pub robot: RobotParams,
    pub reaction_delay: BTreeMap<CameraId, u64>,
    /// Order in which sectors run within a tick.
    pub sector_order: Vec<SectorId>,
}

impl Params {
    pub fn defaults_for(topology: &Topology) -> Self {
        Params {
            sector: SectorParams::default(),
            camera: CameraParams::default(),
            robot: RobotParams::default(),
            reaction_delay: BTreeMap::new(),
            sector_order: topology.sectors.clone(),
        }
    }

    pub fn reaction_delay(&self, camera: &CameraId) -> u64 {
        self.reaction_delay.get(camera).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Ticks 0..duration are simulated.
    pub duration: u64,
    pub topology: Topology,
    pub keyframes: BTreeMap<SectorId, Vec<Keyframe>>,
    pub visual: GroundTruth,
    pub commands: Vec<Command>,
    pub params: Params,
}

impl Scenario {
    /// Quiet scenario on the given topology.
    pub fn new(name: &str, duration: u64, topology: Topology) -> Self {
        Scenario {
            name: name.into(),
            duration,
            params: Params::defaults_for(&topology),
            topology,
            keyframes: BTreeMap::new(),
            visual: GroundTruth::default(),
            commands: Vec::new(),
        }
    }

    /// Sensor reading for `sector` at `tick`, holding the last keyframe value.
    pub fn reading(&self, sector: &SectorId, tick: Tick) -> SensorReading {
        let (mut t, mut h, mut m, mut b) = (DEFAULT_TEMPERATURE, DEFAULT_HUMIDITY, false, false);
        if let Some(frames) = self.keyframes.get(sector) {
            for k in frames.iter().take_while(|k| k.tick <= tick) {
                t = k.temperature.unwrap_or(t);
                h = k.humidity.unwrap_or(h);
                m = k.motion.unwrap_or(m);
                b = k.button.unwrap_or(b);
            }
        }
        SensorReading::new(sector.clone(), tick, t, h, m, b).expect("keyframes validated on load")
    }
}

// ---------------------------------------------------------------------------
// TOML
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scenario: RawHeader,
    topology: Option<RawTopology>,
    #[serde(default)]
    sectors: BTreeMap<String, RawSector>,
    #[serde(default)]
    visual: Vec<VisualEvent>,
    #[serde(default)]
    commands: Vec<RawCommand>,
    #[serde(default)]
    params: RawParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    #[serde(default)]
    name: Option<String>,
    duration: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    file: Option<String>,
    sectors: Option<Vec<SectorId>>,
    cameras: Option<Vec<CameraSpec>>,
    circuit: Option<Vec<RawLeg>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeg {
    waypoint: String,
    cost: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSector {
    #[serde(default)]
    keyframes: Vec<Keyframe>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    tick: Tick,
    lockdown: Option<BTreeSet<SectorId>>,
    robot: Option<RawRobotCommand>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobotCommand {
    mode: RobotMode,
    sector: SectorId,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParams {
    baseline_window: Option<usize>,
    baseline_min: Option<usize>,
    delta_t: Option<f64>,
    delta_h: Option<f64>,
    suspicion_timeout: Option<usize>,
    rotation_speed: Option<f64>,
    dwell: Option<u32>,
    surveil_duration: Option<u32>,
    fire_search: Option<u32>,
    fire_extinguish: Option<u32>,
    sector_order: Option<Vec<SectorId>>,
    #[serde(default)]
    reaction_delay: BTreeMap<CameraId, u64>,
}

/// Line (1-based) of the first occurrence of `needle`, or 0.
fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .position(|l| l.contains(needle))
        .map_or(0, |i| i + 1)
}

fn toml_error(text: &str, err: toml::de::Error) -> ScenarioError {
    let line = err
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let message = err.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_default();
    ScenarioError::Parse {
        line,
        field,
        message,
    }
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn fail(&self, field: &str, needle: &str, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse {
            line: line_of(self.text, needle),
            field: field.into(),
            message: message.into(),
        }
    }
}

fn build_topology(raw: RawTopology, checker: &Checker, base: &Path) -> Result<Topology, ScenarioError> {
    if let Some(file) = raw.file {
        if raw.sectors.is_some() || raw.cameras.is_some() || raw.circuit.is_some() {
            return Err(checker.fail("topology.file", "file", "`file` excludes an inline topology"));
        }
        return load_topology(base.join(file));
    }
    let sectors = raw
        .sectors
        .ok_or_else(|| checker.fail("topology.sectors", "[topology]", "missing field"))?;
    let cameras = raw
        .cameras
        .ok_or_else(|| checker.fail("topology.cameras", "[topology]", "missing field"))?;
    let circuit = raw
        .circuit
        .ok_or_else(|| checker.fail("topology.circuit", "[topology]", "missing field"))?
        .into_iter()
        .map(|leg| {
            let waypoint = if leg.waypoint == "Parking" {
                Waypoint::Parking
            } else {
                Waypoint::Sector(
                    AgentId::new(leg.waypoint.clone())
                        .map_err(|e| checker.fail("topology.circuit.waypoint", &leg.waypoint, e.to_string()))?,
                )
            };
            Ok(CircuitLeg { waypoint, cost: leg.cost })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let topology = Topology {
        sectors,
        cameras,
        circuit,
    };
    let violations = topology.validate();
    if violations.is_empty() {
        Ok(topology)
    } else {
        Err(ScenarioError::Topology(violations))
    }
}

/// Load a standalone topology file (same keys as an inline `[topology]`).
pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawTopology = toml::from_str(&text).map_err(|e| toml_error(&text, e))?;
    if raw.file.is_some() {
        return Err(ScenarioError::Parse {
            line: line_of(&text, "file"),
            field: "file".into(),
            message: "topology files cannot include other files".into(),
        });
    }
    build_topology(raw, &Checker { text: &text }, path.parent().unwrap_or(Path::new(".")))
}

/// Read and validate a scenario file. A `topology.file` is resolved relative
/// to the scenario's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenario = parse_scenario(&text, base)?;
    if scenario.name.is_empty() {
        scenario.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(scenario)
}

pub fn parse_scenario(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let ck = Checker { text };

    let topology = match raw.topology {
        Some(t) => build_topology(t, &ck, base)?,
        None => Topology::case_study(),
    };

    let mut keyframes = BTreeMap::new();
    for (name, sector) in raw.sectors {
        let field = format!("sectors.{name}");
        let sid = AgentId::new(name.clone()).map_err(|e| ck.fail(&field, &name, e.to_string()))?;
        if !topology.has_sector(&sid) {
            return Err(ck.fail(&field, &name, "unknown sector"));
        }
        let mut frames = sector.keyframes;
        frames.sort_by_key(|k| k.tick);
        for pair in frames.windows(2) {
            if pair[0].tick == pair[1].tick {
                return Err(ck.fail(&format!("{field}.keyframes"), &name, format!("two keyframes at tick {}", pair[0].tick)));
            }
        }
        for k in &frames {
            let t = k.temperature.unwrap_or(DEFAULT_TEMPERATURE);
            let h = k.humidity.unwrap_or(DEFAULT_HUMIDITY);
            if let Err(e) = SensorReading::new(sid.clone(), k.tick, t, h, false, false) {
                return Err(ck.fail(&format!("{field}.keyframes"), &name, e.to_string()));
            }
        }
        keyframes.insert(sid, frames);
    }

    for v in &raw.visual {
        if !topology.has_sector(&v.sector) {
            return Err(ck.fail("visual.sector", v.sector.as_str(), "unknown sector"));
        }
    }

    let mut commands = Vec::new();
    for c in raw.commands {
        if c.tick.0 >= raw.scenario.duration {
            return Err(ck.fail("commands.tick", "[[commands]]", format!("tick {} is past the end of the run", c.tick)));
        }
        let message = match (c.lockdown, c.robot) {
            (Some(scope), None) => {
                if let Some(bad) = scope.iter().find(|s| !topology.has_sector(s)) {
                    return Err(ck.fail("commands.lockdown", bad.as_str(), "unknown sector"));
                }
                MessageKind::LockdownCommand { scope }
            }
            (None, Some(r)) => {
                if !topology.has_sector(&r.sector) {
                    return Err(ck.fail("commands.robot", r.sector.as_str(), "unknown sector"));
                }
                MessageKind::RobotTask {
                    mode: r.mode,
                    sector: r.sector,
                }
            }
            _ => {
                return Err(ck.fail(
                    "commands",
                    "[[commands]]",
                    "each command needs exactly one of `lockdown` or `robot`",
                ))
            }
        };
        commands.push(Command { tick: c.tick, message });
    }
    commands.sort_by_key(|c| c.tick);

    let p = raw.params;
    let mut params = Params::defaults_for(&topology);
    let s = &mut params.sector;
    s.window = p.baseline_window.unwrap_or(s.window);
    s.min_baseline = p.baseline_min.unwrap_or(s.min_baseline);
    s.delta_temperature = p.delta_t.unwrap_or(s.delta_temperature);
    s.delta_humidity = p.delta_h.unwrap_or(s.delta_humidity);
    s.suspicion_timeout = p.suspicion_timeout.unwrap_or(s.suspicion_timeout);
    let c = &mut params.camera;
    c.rotation_speed = p.rotation_speed.unwrap_or(c.rotation_speed);
    c.dwell = p.dwell.unwrap_or(c.dwell);
    let r = &mut params.robot;
    r.surveil = p.surveil_duration.unwrap_or(r.surveil);
    r.search = p.fire_search.unwrap_or(r.search);
    r.extinguish = p.fire_extinguish.unwrap_or(r.extinguish);

    if !(params.camera.rotation_speed.is_finite() && params.camera.rotation_speed > 0.0) {
        return Err(ck.fail("params.rotation_speed", "rotation_speed", "must be positive"));
    }
    for (name, value) in [
        ("dwell", params.camera.dwell),
        ("surveil_duration", params.robot.surveil),
        ("fire_search", params.robot.search),
        ("fire_extinguish", params.robot.extinguish),
    ] {
        if value == 0 {
            return Err(ck.fail(&format!("params.{name}"), name, "must be at least 1"));
        }
    }
    for cam in p.reaction_delay.keys() {
        if topology.camera(cam).is_none() {
            return Err(ck.fail("params.reaction_delay", cam.as_str(), "unknown camera"));
        }
    }
    params.reaction_delay = p.reaction_delay;
    if let Some(order) = p.sector_order {
        let mut seen = BTreeSet::new();
        for s in &order {
            if !topology.has_sector(s) || !seen.insert(s.clone()) {
                return Err(ck.fail("params.sector_order", "sector_order", format!("bad entry `{s}`")));
            }
        }
        let mut full = order;
        full.extend(topology.sectors.iter().filter(|s| !seen.contains(*s)).cloned());
        params.sector_order = full;
    }

    Ok(Scenario {
        name: raw.scenario.name.unwrap_or_default(),
        duration: raw.scenario.duration,
        topology,
        keyframes,
        visual: GroundTruth { events: raw.visual },
        commands,
        params,
    })
}
