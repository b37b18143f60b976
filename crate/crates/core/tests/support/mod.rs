//! Scenario builders and independent oracles shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ip2s::engine::Engine;
use ip2s::model::{
    id, Action, CameraSpec, Cause, CircuitLeg, MessageKind, RobotMode, SectorId, Tick, Topology, Waypoint,
};
use ip2s::robot::{RobotParams, RobotState, RobotTask};
use ip2s::scenario::{Command, Keyframe, Scenario, VisualEvent};
use ip2s::Timeline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Scenario building
// ---------------------------------------------------------------------------

pub fn keyframe(tick: u64) -> Keyframe {
    Keyframe { tick: Tick(tick), temperature: None, humidity: None, motion: None, button: None }
}

#[derive(Default)]
pub struct Script {
    frames: BTreeMap<SectorId, BTreeMap<u64, Keyframe>>,
}

impl Script {
    fn frame(&mut self, s: &SectorId, tick: u64) -> &mut Keyframe {
        self.frames.entry(s.clone()).or_default().entry(tick).or_insert_with(|| keyframe(tick))
    }

    pub fn motion_pulse(&mut self, s: &SectorId, tick: u64) {
        self.frame(s, tick).motion = Some(true);
        self.frame(s, tick + 1).motion = Some(false);
    }

    pub fn hot(&mut self, s: &SectorId, tick: u64) {
        let f = self.frame(s, tick);
        f.temperature = Some(60.0);
        f.humidity = Some(10.0);
    }

    pub fn apply(self, scenario: &mut Scenario) {
        for (s, frames) in self.frames {
            scenario.keyframes.insert(s, frames.into_values().collect());
        }
    }
}

/// Cameras' targets once arbitration on emergencies raised at tick 5 has
/// settled.
fn settled_targets(scenario: Scenario) -> Vec<Option<SectorId>> {
    let mut e = Engine::new(scenario);
    // Requests published at 5 arrive at 6; the slower camera arbitrates at 7,
    // its claim lands at 8 and a contested first mover re-arbitrates by 9.
    while e.now() <= Tick(10) {
        e.step();
    }
    e.cameras().iter().map(|c| c.target.clone()).collect()
}

fn sweep_scenario(emergencies: &[(SectorId, Cause)], routines: &[SectorId], delays: (u64, u64)) -> Scenario {
    let mut s = Scenario::new("sweep", 14, Topology::case_study());
    s.params.camera.dwell = 8;
    s.params.reaction_delay.insert(id("Camera1"), delays.0);
    s.params.reaction_delay.insert(id("Camera2"), delays.1);
    let mut script = Script::default();
    let mut locked = BTreeSet::new();
    for (sector, cause) in emergencies {
        match cause {
            Cause::FireSuspicion => script.hot(sector, 5),
            Cause::Intruder => {
                locked.insert(sector.clone());
                script.motion_pulse(sector, 5);
            }
            Cause::Motion => unreachable!("routine causes go in `routines`"),
        }
    }
    for r in routines {
        script.motion_pulse(r, 5);
    }
    script.apply(&mut s);
    if !locked.is_empty() {
        s.commands.push(Command { tick: Tick(1), message: MessageKind::LockdownCommand { scope: locked } });
    }
    s
}

fn coverage(t: &Topology) -> Vec<BTreeSet<SectorId>> {
    t.cameras.iter().map(|c| c.coverage.keys().cloned().collect()).collect()
}

/// All (camera1, camera2) target pairs drawn from the requested sectors each
/// camera can see; `None` when a camera sees none of them.
fn all_outcomes(cov: &[BTreeSet<SectorId>], requested: &BTreeSet<SectorId>) -> Vec<(Option<SectorId>, Option<SectorId>)> {
    let options = |c: &BTreeSet<SectorId>| -> Vec<Option<SectorId>> {
        let v: Vec<_> = c.intersection(requested).cloned().map(Some).collect();
        if v.is_empty() {
            vec![None]
        } else {
            v
        }
    };
    let mut out = Vec::new();
    for a in options(&cov[0]) {
        for b in options(&cov[1]) {
            out.push((a.clone(), b));
        }
    }
    out
}

/// Two emergencies on every jointly coverable sector pair, every cause
/// combination, both camera reaction orders: the engine's outcome must be
/// one of the brute-forced outcomes with distinct targets. Returns the
/// number of cases checked.
pub fn cooperation_sweep() -> Result<usize, String> {
    let t = Topology::case_study();
    let cov = coverage(&t);
    let causes = [Cause::FireSuspicion, Cause::Intruder];
    let mut cases = 0;
    for (i, a) in t.sectors.iter().enumerate() {
        for b in &t.sectors[i + 1..] {
            let requested: BTreeSet<SectorId> = [a.clone(), b.clone()].into();
            let distinct: Vec<_> = all_outcomes(&cov, &requested)
                .into_iter()
                .filter(|(x, y)| x.is_some() && y.is_some() && x != y)
                .collect();
            if distinct.is_empty() {
                continue; // not jointly coverable
            }
            for ca in causes {
                for cb in causes {
                    for delays in [(0, 1), (1, 0)] {
                        let s = sweep_scenario(&[(a.clone(), ca), (b.clone(), cb)], &[], delays);
                        let got = settled_targets(s);
                        let pair = (got[0].clone(), got[1].clone());
                        if !distinct.contains(&pair) {
                            return Err(format!(
                                "{a}:{ca} + {b}:{cb}, delays {delays:?}: targets {pair:?}, expected one of {distinct:?}"
                            ));
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(cases)
}

/// One emergency on a sector both cameras see, plus any set of routine
/// requests elsewhere: both cameras end up on the emergency.
pub fn emergency_convergence_sweep() -> Result<usize, String> {
    let t = Topology::case_study();
    let cov = coverage(&t);
    let mut cases = 0;
    for e in t.sectors.iter().filter(|s| cov.iter().all(|c| c.contains(*s))) {
        let others: Vec<SectorId> = t.sectors.iter().filter(|s| *s != e).cloned().collect();
        for mask in 0..(1u32 << others.len()) {
            let routines: Vec<SectorId> = others
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, s)| s.clone())
                .collect();
            for cause in [Cause::FireSuspicion, Cause::Intruder] {
                for delays in [(0, 1), (1, 0)] {
                    let got = settled_targets(sweep_scenario(&[(e.clone(), cause)], &routines, delays));
                    if got.iter().any(|t| t.as_ref() != Some(e)) {
                        return Err(format!("{e}:{cause} with routines {routines:?}, delays {delays:?}: {got:?}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(cases)
}

// ---------------------------------------------------------------------------
// Robot
// ---------------------------------------------------------------------------

pub fn ring(costs: &[u32]) -> Topology {
    let sectors: Vec<SectorId> = (1..costs.len()).map(|i| id(&format!("S{i}"))).collect();
    let mut circuit = vec![CircuitLeg { waypoint: Waypoint::Parking, cost: costs[0] }];
    for (i, s) in sectors.iter().enumerate() {
        circuit.push(CircuitLeg { waypoint: Waypoint::Sector(s.clone()), cost: costs[i + 1] });
    }
    Topology {
        cameras: vec![CameraSpec {
            id: id("C"),
            coverage: sectors.iter().map(|s| (s.clone(), 0.0)).collect(),
            initial_heading: None,
        }],
        sectors,
        circuit,
    }
}

/// Analytic arrival time for a robot dispatched from parking at tick 0 with
/// `requests` (in arrival order): walk the ring edge by edge, serving
/// firefighting requests first, then surveillance, then a final visit to the
/// target if nothing else takes the robot there.
pub fn eta_walk(t: &Topology, p: &RobotParams, requests: &[RobotTask], target: &Waypoint) -> u64 {
    let n = t.circuit.len();
    let target_idx = t.circuit.iter().position(|l| &l.waypoint == target).unwrap();
    let mut pos = t.circuit.iter().position(|l| l.waypoint == Waypoint::Parking).unwrap();
    if pos == target_idx {
        return 0;
    }
    let mut tasks: Vec<RobotTask> = Vec::new();
    for mode in [RobotMode::Firefighting, RobotMode::Surveillance] {
        for r in requests.iter().filter(|r| r.mode == mode) {
            if !tasks.contains(r) {
                tasks.push(r.clone());
            }
        }
    }
    if let Waypoint::Sector(s) = target {
        if !tasks.iter().any(|r| &r.sector == s) {
            tasks.push(RobotTask { mode: RobotMode::Surveillance, sector: s.clone() });
        }
    }
    let service = |r: &RobotTask| -> u64 {
        match r.mode {
            RobotMode::Surveillance => u64::from(p.surveil * p.slow_factor),
            RobotMode::Firefighting => u64::from(p.search + p.extinguish),
        }
    };
    let mut clock = 0u64;
    let mut next = 0;
    loop {
        while next < tasks.len() && t.circuit[pos].waypoint == Waypoint::Sector(tasks[next].sector.clone()) {
            clock += service(&tasks[next]);
            next += 1;
        }
        clock += u64::from(t.circuit[pos].cost);
        pos = (pos + 1) % n;
        if pos == target_idx {
            return clock;
        }
    }
}

/// Ticks until `robot` actually stands on `target`, by stepping it.
pub fn observed_arrival(robot: &RobotState, t: &Topology, target: &Waypoint) -> u64 {
    let idx = t.circuit.iter().position(|l| &l.waypoint == target).unwrap();
    let mut r = robot.clone();
    if r.position == idx && r.progress == 0 {
        return 0;
    }
    for k in 1..100_000u64 {
        r.navigate_step(t, Tick(k));
        if r.position == idx && r.progress == 0 {
            return k;
        }
    }
    panic!("robot never reached {target}");
}

pub struct EtaConfig {
    pub topology: Topology,
    pub params: RobotParams,
    pub requests: Vec<RobotTask>,
    pub target: Waypoint,
    pub advance: u64,
}

pub fn random_eta_config(rng: &mut ChaCha8Rng) -> EtaConfig {
    let n = rng.gen_range(1..=6);
    let costs: Vec<u32> = (0..=n).map(|_| rng.gen_range(1..=5)).collect();
    let topology = ring(&costs);
    let params = RobotParams {
        surveil: rng.gen_range(1..=3),
        search: rng.gen_range(1..=3),
        extinguish: rng.gen_range(1..=4),
        slow_factor: 2,
    };
    let requests = (0..rng.gen_range(0..=5))
        .map(|_| RobotTask {
            mode: if rng.gen_bool(0.4) { RobotMode::Firefighting } else { RobotMode::Surveillance },
            sector: topology.sectors[rng.gen_range(0..n)].clone(),
        })
        .collect();
    let target = topology.circuit[rng.gen_range(0..topology.circuit.len())].waypoint.clone();
    EtaConfig { topology, params, requests, target, advance: rng.gen_range(0..=8) }
}

/// eta() against the analytic walk (fresh dispatch) and against observed
/// arrival (fresh and after `advance` steps, queue frozen).
pub fn eta_oracle_check(seed: u64, configs: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..configs {
        let c = random_eta_config(&mut rng);
        let mut robot = RobotState::new(id("Robot"), &c.topology, c.params.clone());
        for r in &c.requests {
            robot.enqueue_task(r.clone(), &c.topology, Tick(0)).map_err(|e| e.to_string())?;
        }
        let eta = robot.eta(&c.topology, &c.target).map_err(|e| e.to_string())?;
        let walk = eta_walk(&c.topology, &c.params, &c.requests, &c.target);
        let seen = observed_arrival_with_target_task(&robot, &c.topology, &c.target);
        if eta != walk || eta != seen {
            return Err(format!("case {case}: eta {eta}, analytic {walk}, observed {seen}, target {}", c.target));
        }
        for k in 1..=c.advance {
            robot.navigate_step(&c.topology, Tick(k));
        }
        let eta = robot.eta(&c.topology, &c.target).map_err(|e| e.to_string())?;
        let seen = observed_arrival_with_target_task(&robot, &c.topology, &c.target);
        if eta != seen {
            return Err(format!("case {case} after {} steps: eta {eta}, observed {seen}", c.advance));
        }
    }
    Ok(())
}

/// Observed arrival once a surveillance visit to the target is queued, as
/// eta() assumes when nothing else leads there.
fn observed_arrival_with_target_task(robot: &RobotState, t: &Topology, target: &Waypoint) -> u64 {
    let mut r = robot.clone();
    let idx = t.circuit.iter().position(|l| &l.waypoint == target).unwrap();
    if !(r.position == idx && r.progress == 0) {
        if let Waypoint::Sector(s) = target {
            if !r.queue.iter().any(|q| &q.sector == s) {
                r.enqueue_task(RobotTask { mode: RobotMode::Surveillance, sector: s.clone() }, t, Tick(0))
                    .unwrap();
            }
        }
    }
    observed_arrival(&r, t, target)
}

/// Random interleavings of task arrivals and movement never leave the
/// robot surveilling while a firefighting task waits.
pub fn preemption_check(seed: u64, streams: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for stream in 0..streams {
        let n = rng.gen_range(1..=5);
        let costs: Vec<u32> = (0..=n).map(|_| rng.gen_range(1..=4)).collect();
        let t = ring(&costs);
        let mut robot = RobotState::new(id("Robot"), &t, RobotParams::default());
        for tick in 1..300u64 {
            robot.navigate_step(&t, Tick(tick));
            if rng.gen_bool(0.15) {
                let task = RobotTask {
                    mode: if rng.gen_bool(0.3) { RobotMode::Firefighting } else { RobotMode::Surveillance },
                    sector: t.sectors[rng.gen_range(0..n)].clone(),
                };
                robot.enqueue_task(task, &t, Tick(tick)).map_err(|e| e.to_string())?;
            }
            let v = robot.check_invariants(&t);
            if !v.is_empty() {
                return Err(format!("stream {stream} tick {tick}: {v:?}"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Whole-system fuzzing
// ---------------------------------------------------------------------------

pub fn fuzz_scenario(rng: &mut ChaCha8Rng, ticks: u64) -> Scenario {
    let mut topology = Topology::case_study();
    for leg in &mut topology.circuit {
        leg.cost = rng.gen_range(1..=4);
    }
    let mut s = Scenario::new("fuzz", ticks, topology);
    let sectors = s.topology.sectors.clone();
    for sector in &sectors {
        let mut frames = BTreeMap::new();
        for _ in 0..rng.gen_range(0..12) {
            let tick = rng.gen_range(0..ticks);
            let mut k = keyframe(tick);
            if rng.gen_bool(0.4) {
                k.temperature = Some(rng.gen_range(15.0..70.0));
                k.humidity = Some(rng.gen_range(5.0..80.0));
            }
            if rng.gen_bool(0.5) {
                k.motion = Some(rng.gen_bool(0.5));
            }
            if rng.gen_bool(0.05) {
                k.button = Some(rng.gen_bool(0.5));
            }
            frames.insert(tick, k);
        }
        s.keyframes.insert(sector.clone(), frames.into_values().collect());
    }
    for _ in 0..rng.gen_range(0..4) {
        let from = rng.gen_range(0..ticks);
        s.visual.events.push(VisualEvent {
            sector: sectors[rng.gen_range(0..sectors.len())].clone(),
            from: Tick(from),
            to: rng.gen_bool(0.7).then(|| Tick(from + rng.gen_range(1..40))),
            flames: rng.gen_bool(0.5),
            person: rng.gen_bool(0.5),
        });
    }
    for _ in 0..rng.gen_range(0..4) {
        let tick = Tick(rng.gen_range(0..ticks));
        let message = if rng.gen_bool(0.5) {
            let scope = sectors.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();
            MessageKind::LockdownCommand { scope }
        } else {
            MessageKind::RobotTask {
                mode: if rng.gen_bool(0.5) { RobotMode::Firefighting } else { RobotMode::Surveillance },
                sector: sectors[rng.gen_range(0..sectors.len())].clone(),
            }
        };
        s.commands.push(Command { tick, message });
    }
    s.commands.sort_by_key(|c| c.tick);
    for cam in ["Camera1", "Camera2"] {
        s.params.reaction_delay.insert(id(cam), rng.gen_range(0..=3));
    }
    s.params.camera.dwell = rng.gen_range(1..=4);
    s.params.camera.rotation_speed = rng.gen_range(20.0..200.0);
    s.params.sector.suspicion_timeout = rng.gen_range(1..=4);
    s.params.robot.search = rng.gen_range(1..=3);
    s.params.robot.extinguish = rng.gen_range(1..=3);
    s
}

/// Suppressors only after a camera confirmed that sector's fire, and
/// intruder alarms only from sectors already in lockdown.
pub fn check_safety(t: &Timeline) -> Result<(), String> {
    let mut confirmed = BTreeSet::new();
    let mut locked = BTreeSet::new();
    for e in &t.entries {
        match &e.action {
            Action::SendFireConfirmation { sector } => {
                confirmed.insert(sector.clone());
            }
            Action::ChangeReactionState { .. } => {
                locked.insert(e.agent.clone());
            }
            Action::TriggerSuppressors { sector } if !confirmed.contains(sector) => {
                return Err(format!("suppressors in {sector} without confirmation: {}", e.log_line()));
            }
            Action::TriggerIntruderAlarm { sector } if !locked.contains(sector) => {
                return Err(format!("intruder alarm from {sector} outside lockdown: {}", e.log_line()));
            }
            _ => {}
        }
    }
    // The bus must agree with the timeline about intruder alarms.
    let on_bus = t.bus_trace.iter().filter(|l| l.contains(r#""alarm":"Intruder""#)).count();
    let logged = t.entries.iter().filter(|e| matches!(e.action, Action::TriggerIntruderAlarm { .. })).count();
    if on_bus != logged {
        return Err(format!("{on_bus} intruder triggers on the bus, {logged} in the timeline"));
    }
    Ok(())
}

pub fn fuzz(seed: u64, scenarios: usize, ticks: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..scenarios {
        let s = fuzz_scenario(&mut rng, ticks);
        let mut e = Engine::new(s);
        while e.step().is_some() {
            let v = e.check_invariants();
            if !v.is_empty() {
                return Err(format!("scenario {i} tick {}: {v:?}", e.now().0 - 1));
            }
        }
        check_safety(e.timeline()).map_err(|m| format!("scenario {i}: {m}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bus
// ---------------------------------------------------------------------------

/// Reference matcher written straight from the MQTT 3.1.1 wording.
pub fn brute_force_match(filter: &str, topic: &str) -> bool {
    let f: Vec<&str> = filter.split('/').collect();
    let t: Vec<&str> = topic.split('/').collect();
    if t[0].starts_with('$') && (f[0] == "+" || f[0] == "#") {
        return false;
    }
    fn go(f: &[&str], t: &[&str]) -> bool {
        match (f.split_first(), t.split_first()) {
            (Some((&"#", _)), _) => true,
            (None, None) => true,
            (Some((&"+", fr)), Some((_, tr))) => go(fr, tr),
            (Some((fs, fr)), Some((ts, tr))) => fs == ts && go(fr, tr),
            _ => false,
        }
    }
    go(&f, &t)
}

const LEVELS: [&str; 5] = ["ip2s", "sector", "a", "b", "$SYS"];

/// Filter matching against the brute-force matcher, plus the delivery
/// contract (one-tick latency, per-publisher order, exactly once) on random
/// publication schedules. Returns the number of matcher cases.
pub fn bus_contract_check(seed: u64, cases: usize) -> Result<usize, String> {
    use ip2s::bus::{MessageBus, Topic, TopicFilter};
    use ip2s::model::Severity;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = |rng: &mut ChaCha8Rng| LEVELS[rng.gen_range(0..LEVELS.len())].to_string();
    for _ in 0..cases {
        let topic: Vec<String> = (0..rng.gen_range(1..5)).map(|_| level(&mut rng)).collect();
        let mut filter: Vec<String> = (0..rng.gen_range(0..5))
            .map(|_| if rng.gen_bool(0.3) { "+".to_string() } else { level(&mut rng) })
            .collect();
        if rng.gen_bool(0.3) || filter.is_empty() {
            filter.push("#".into());
        }
        let (f, t) = (filter.join("/"), topic.join("/"));
        let got = TopicFilter::new(f.clone()).map_err(|e| e.to_string())?.matches(&Topic::new(t.clone()).map_err(|e| e.to_string())?);
        if got != brute_force_match(&f, &t) {
            return Err(format!("filter {f} topic {t}: matcher says {got}"));
        }
    }

    const TOPICS: [&str; 3] = ["ip2s/sector/S1/attention", "ip2s/camera/C1/claim", "ip2s/notify"];
    const FILTERS: [&str; 4] = ["ip2s/#", "ip2s/sector/+/attention", "#", "ip2s/notify"];
    for _ in 0..200 {
        let mut bus = MessageBus::new();
        let subs: Vec<(SectorId, &str)> =
            (0..3).map(|i| (id(&format!("Sub{i}")), FILTERS[rng.gen_range(0..FILTERS.len())])).collect();
        for (agent, f) in &subs {
            bus.subscribe(agent, f).map_err(|e| e.to_string())?;
        }
        let mut published: Vec<(SectorId, u64, u64, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for tick in 0..10u64 {
            let d = bus.advance(Tick(tick)).map_err(|e| e.to_string())?;
            for (agent, f) in &subs {
                let filter = TopicFilter::new(*f).unwrap();
                let mut expected: Vec<_> = published
                    .iter()
                    .filter(|p| p.2 + 1 == tick && filter.matches(&Topic::new(p.3.clone()).unwrap()))
                    .map(|p| (p.0.clone(), p.1))
                    .collect();
                expected.sort();
                let got: Vec<_> = d.batch(agent).iter().map(|e| (e.publisher().clone(), e.seq)).collect();
                if got != expected {
                    return Err(format!("tick {tick} {agent}: got {got:?}, expected {expected:?}"));
                }
                for g in got {
                    if !seen.insert((agent.clone(), g.clone())) {
                        return Err(format!("{agent} saw {g:?} twice"));
                    }
                }
            }
            for _ in 0..rng.gen_range(0..4) {
                let sender = id(&format!("Pub{}", rng.gen_range(0..3)));
                let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
                let env = bus
                    .publish(&sender, topic, MessageKind::Notification { text: String::new(), severity: Severity::Info })
                    .map_err(|e| e.to_string())?;
                published.push((sender, env.seq, tick, topic.to_string()));
            }
        }
    }
    Ok(cases)
}
