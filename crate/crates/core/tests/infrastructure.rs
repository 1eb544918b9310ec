use humanoid_core::config::{ConfigServer, ParamValue};
use humanoid_core::messages::Message;
use humanoid_core::msgbus::{Bus, BusError};
use proptest::prelude::*;
use std::time::Duration;

const PATHS: [&str; 6] = ["/a/x", "/a/y", "/a/deep/z", "/b/x", "/b/y", "/ab"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Every set reaches every subscriber whose prefix covers the path,
    /// in order, with strictly increasing revisions.
    #[test]
    fn notifications_are_complete_and_ordered(sets in prop::collection::vec((0usize..PATHS.len(), -10.0f64..10.0), 0..60)) {
        let c = ConfigServer::new();
        for p in PATHS {
            c.float(p, 0.0, -5.0, 5.0).unwrap();
        }
        let prefixes = ["/", "/a", "/a/deep", "/b/x", "/ab"];
        let rxs: Vec<_> = prefixes.iter().map(|p| c.subscribe(p).unwrap()).collect();
        let start = c.revision();
        for &(i, v) in &sets {
            let stored = c.set(PATHS[i], v).unwrap();
            prop_assert_eq!(stored, ParamValue::from(v.clamp(-5.0, 5.0)));
        }
        prop_assert_eq!(c.revision(), start + sets.len() as u64);
        for (prefix, rx) in prefixes.iter().zip(&rxs) {
            let covered = |p: &str| *prefix == "/" || p == *prefix || p.starts_with(&format!("{prefix}/"));
            let want: Vec<(&str, f64)> = sets
                .iter()
                .filter(|(i, _)| covered(PATHS[*i]))
                .map(|&(i, v)| (PATHS[i], v.clamp(-5.0, 5.0)))
                .collect();
            let got: Vec<_> = rx.try_iter().collect();
            prop_assert_eq!(got.len(), want.len(), "prefix {}", prefix);
            for (g, (p, v)) in got.iter().zip(&want) {
                prop_assert_eq!(g.path.as_str(), *p);
                prop_assert_eq!(&g.value, &ParamValue::from(*v));
            }
            prop_assert!(got.windows(2).all(|w| w[0].revision < w[1].revision));
        }
    }
}

#[test]
fn handles_follow_remote_sets() {
    let c = ConfigServer::new();
    let h = c.float("/gait/freq", 1.5, 0.5, 3.0).unwrap();
    c.set("/gait/freq", 2.25).unwrap();
    assert_eq!(h.f64(), 2.25);
    c.set("/gait/freq", 9.0).unwrap();
    assert_eq!(h.f64(), 3.0);
    assert!(c.set("/gait/freq", f64::NAN).is_err());
    assert!(c.set("/gait/freq", "fast").is_err());
    assert!(c.set("/gait/nothing", 1.0).is_err());
    assert_eq!(h.f64(), 3.0);
}

#[test]
fn concurrent_publishers_lose_nothing_when_queue_is_large_enough() {
    let bus = Bus::new();
    let (threads, per_thread) = (4, 2500);
    let sub = bus.subscribe("/counts", "float", threads * per_thread).unwrap();
    std::thread::scope(|s| {
        for t in 0..threads {
            let bus = bus.clone();
            s.spawn(move || {
                for k in 0..per_thread {
                    bus.publish("/counts", k as f64, Message::Float((t * per_thread + k) as f64))
                        .unwrap();
                }
            });
        }
    });
    assert_eq!(sub.dropped(), 0);
    let got: Vec<usize> = sub
        .drain()
        .into_iter()
        .map(|m| match m.payload {
            Message::Float(v) => v as usize,
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(got.len(), threads * per_thread);
    // per publisher, order is preserved
    for t in 0..threads {
        let mine: Vec<usize> = got.iter().copied().filter(|v| v / per_thread == t).collect();
        assert!(mine.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(mine.len(), per_thread);
    }
}

#[test]
fn schemas_and_stamps_are_enforced() {
    let bus = Bus::new();
    let _sub = bus.subscribe("/x", "float", 4).unwrap();
    assert!(matches!(
        bus.publish("/x", 0.0, Message::Text("no".into())),
        Err(BusError::Schema { .. })
    ));
    assert!(matches!(bus.subscribe("/x", "text", 4), Err(BusError::Schema { .. })));
    assert!(matches!(bus.subscribe("/y", "float", 0), Err(BusError::QueueSize)));
    assert!(matches!(
        bus.publish("no/slash", 0.0, Message::Float(0.0)),
        Err(BusError::InvalidPath(_))
    ));
    let mut publisher = bus.advertise("/x", "float").unwrap();
    publisher.publish(1.0, Message::Float(1.0)).unwrap();
    publisher.publish(1.0, Message::Float(2.0)).unwrap();
    assert!(matches!(
        publisher.publish(0.5, Message::Float(3.0)),
        Err(BusError::StampRegression { .. })
    ));
}

#[test]
fn service_calls_respect_deadlines() {
    let bus = Bus::new();
    bus.register_service("/echo", |m| m).unwrap();
    bus.register_service("/slow", |m| {
        std::thread::sleep(Duration::from_millis(300));
        m
    })
    .unwrap();
    assert!(matches!(
        bus.register_service("/echo", |m| m),
        Err(BusError::DuplicateService(_))
    ));
    let reply = bus
        .call("/echo", Message::Float(4.0), Duration::from_millis(500))
        .unwrap();
    assert_eq!(reply, Message::Float(4.0));
    assert!(matches!(
        bus.call("/slow", Message::Empty, Duration::from_millis(20)),
        Err(BusError::Timeout(_))
    ));
    assert!(matches!(
        bus.call("/missing", Message::Empty, Duration::from_millis(20)),
        Err(BusError::Unavailable(_))
    ));
    assert!(matches!(
        bus.call("/echo", Message::Empty, Duration::ZERO),
        Err(BusError::Deadline)
    ));
    bus.unregister_service("/echo");
    assert!(bus.call("/echo", Message::Empty, Duration::from_millis(20)).is_err());
}
