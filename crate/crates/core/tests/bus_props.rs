use std::collections::BTreeMap;

use ip2s::bus::{BusError, MessageBus, Topic, TopicFilter};
use ip2s::model::{id, AgentId, MessageKind, Severity, Tick};
use proptest::prelude::*;

/// Reference matcher written straight from the MQTT 3.1.1 wording.
fn brute_force(filter: &str, topic: &str) -> bool {
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

fn level() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("ip2s".to_string()),
        Just("sector".to_string()),
        Just("a".to_string()),
        Just("b".to_string()),
        Just("$SYS".to_string()),
    ]
}

fn topic_str() -> impl Strategy<Value = String> {
    prop::collection::vec(level(), 1..5).prop_map(|v| v.join("/"))
}

fn filter_str() -> impl Strategy<Value = String> {
    let seg = prop_oneof![4 => level(), 2 => Just("+".to_string())];
    (prop::collection::vec(seg, 0..5), any::<bool>()).prop_filter_map("empty filter", |(mut v, hash)| {
        if hash {
            v.push("#".into());
        }
        (!v.is_empty()).then(|| v.join("/"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn filter_matching_agrees_with_brute_force(f in filter_str(), t in topic_str()) {
        let filter = TopicFilter::new(f.clone()).unwrap();
        let topic = Topic::new(t.clone()).unwrap();
        prop_assert_eq!(filter.matches(&topic), brute_force(&f, &t), "filter {} topic {}", f, t);
    }
}

#[test]
fn malformed_filters_and_topics_are_rejected() {
    for f in ["ip2s/#/x", "a/b#", "a/+b", "", "a//b"] {
        assert!(matches!(TopicFilter::new(f), Err(BusError::InvalidFilter(_))), "{f}");
    }
    let mut bus = MessageBus::new();
    assert!(matches!(
        bus.publish(&id("X"), "ip2s/+/x", MessageKind::Notification { text: "t".into(), severity: Severity::Info }),
        Err(BusError::InvalidTopic(_))
    ));
}

#[derive(Debug, Clone)]
struct Publication {
    tick: u64,
    publisher: usize,
    topic: usize,
}

const TOPICS: [&str; 4] = ["ip2s/sector/S1/attention", "ip2s/camera/C1/claim", "ip2s/notify", "other/x"];
const FILTERS: [&str; 5] = ["ip2s/#", "ip2s/sector/+/attention", "#", "ip2s/camera/+/claim", "ip2s/notify"];

fn publications() -> impl Strategy<Value = Vec<Publication>> {
    prop::collection::vec(
        (0u64..8, 0usize..3, 0usize..TOPICS.len()).prop_map(|(tick, publisher, topic)| Publication { tick, publisher, topic }),
        0..40,
    )
    .prop_map(|mut v| {
        v.sort_by_key(|p| p.tick);
        v
    })
}

/// Drive a bus through ticks 0..=9; returns per-tick per-subscriber
/// delivery logs as (publisher, seq, published_at, topic) tuples.
type Log = BTreeMap<(u64, AgentId), Vec<(AgentId, u64, Tick, String)>>;

fn drive(pubs: &[Publication], subs: &[(usize, usize)]) -> (Log, Vec<(AgentId, u64, Tick, String)>) {
    let mut bus = MessageBus::new();
    for (agent, filter) in subs {
        bus.subscribe(&id(&format!("Sub{agent}")), FILTERS[*filter]).unwrap();
    }
    let mut log = Log::new();
    let mut published = Vec::new();
    let mut next = 0;
    for tick in 0..=9u64 {
        let d = bus.advance(Tick(tick)).unwrap();
        for (agent, batch) in d.batches {
            log.insert(
                (tick, agent),
                batch
                    .iter()
                    .map(|e| (e.publisher().clone(), e.seq, e.published_at, e.topic.to_string()))
                    .collect(),
            );
        }
        while next < pubs.len() && pubs[next].tick == tick {
            let p = &pubs[next];
            let sender = id(&format!("Pub{}", p.publisher));
            let env = bus
                .publish(&sender, TOPICS[p.topic], MessageKind::Notification { text: format!("{next}"), severity: Severity::Info })
                .unwrap();
            published.push((sender, env.seq, env.published_at, env.topic.to_string()));
            next += 1;
        }
    }
    (log, published)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// One-tick latency, (publisher, seq) order and exactly-once delivery,
    /// against an oracle that recomputes every batch from the publish log.
    #[test]
    fn delivery_contract(pubs in publications(), subs in prop::collection::vec((0usize..3, 0usize..FILTERS.len()), 1..5)) {
        let (log, published) = drive(&pubs, &subs);
        for ((tick, agent), batch) in &log {
            let filters: Vec<TopicFilter> = subs
                .iter()
                .filter(|(a, _)| &id(&format!("Sub{a}")) == agent)
                .map(|(_, f)| TopicFilter::new(FILTERS[*f]).unwrap())
                .collect();
            let mut expected: Vec<_> = published
                .iter()
                .filter(|(_, _, at, topic)| {
                    at.0 + 1 == *tick && filters.iter().any(|f| f.matches(&Topic::new(topic.clone()).unwrap()))
                })
                .cloned()
                .collect();
            expected.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
            prop_assert_eq!(batch, &expected);
            for e in batch {
                prop_assert_eq!(e.2.0 + 1, *tick);
            }
        }
        // Exactly once: each subscriber sees each matching envelope once in total.
        let mut seen: BTreeMap<(AgentId, AgentId, u64), usize> = BTreeMap::new();
        for ((_, agent), batch) in &log {
            for e in batch {
                *seen.entry((agent.clone(), e.0.clone(), e.1)).or_default() += 1;
            }
        }
        prop_assert!(seen.values().all(|n| *n == 1));
    }

    #[test]
    fn per_publisher_seq_strictly_increases(pubs in publications()) {
        let (_, published) = drive(&pubs, &[(0, 0)]);
        let mut last: BTreeMap<AgentId, u64> = BTreeMap::new();
        for (p, seq, _, _) in published {
            if let Some(prev) = last.insert(p, seq) {
                prop_assert!(seq > prev);
            }
        }
    }

    #[test]
    fn identical_publish_sequences_give_identical_logs(pubs in publications()) {
        let subs = [(0, 0), (1, 1), (2, 2)];
        prop_assert_eq!(drive(&pubs, &subs), drive(&pubs, &subs));
    }
}

#[test]
fn advance_rejects_repeated_tick() {
    let mut bus = MessageBus::new();
    bus.advance(Tick(3)).unwrap();
    assert!(matches!(bus.advance(Tick(3)), Err(BusError::ClockError { .. })));
    assert!(matches!(bus.advance(Tick(2)), Err(BusError::ClockError { .. })));
}

#[test]
fn skipped_ticks_drop_stale_publications() {
    let mut bus = MessageBus::new();
    let a = id("A");
    bus.subscribe(&a, "#").unwrap();
    bus.advance(Tick(1)).unwrap();
    bus.publish_message(&a, MessageKind::Notification { text: "x".into(), severity: Severity::Info });
    // Jumping from 1 to 3 skips the only tick at which it could be observed.
    let d = bus.advance(Tick(3)).unwrap();
    assert!(d.batch(&a).is_empty());
    assert!(bus.advance(Tick(4)).unwrap().batch(&a).is_empty());
}

#[test]
fn late_subscriber_misses_earlier_publications() {
    let mut bus = MessageBus::new();
    let (a, b) = (id("A"), id("B"));
    bus.advance(Tick(0)).unwrap();
    bus.publish_message(&a, MessageKind::Notification { text: "early".into(), severity: Severity::Info });
    bus.advance(Tick(1)).unwrap();
    bus.subscribe(&b, "#").unwrap();
    let d = bus.advance(Tick(2)).unwrap();
    assert!(d.batch(&b).is_empty());
}
