//! In-process publish/subscribe topics and request/response services.
//!
//! Every topic carries exactly one payload schema, fixed the first time the
//! topic is advertised or subscribed. Subscribers own bounded queues: when a
//! queue is full the oldest message is dropped so readers always see the
//! freshest data. Services run their handler on a worker thread so a call can
//! be abandoned at its deadline without holding any bus lock.

use crate::messages::Message;
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, RwLock, Weak};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("invalid topic or service path `{0}`")]
    InvalidPath(String),
    #[error("schema mismatch on `{path}`: registered `{registered}`, got `{offered}`")]
    Schema {
        path: String,
        registered: &'static str,
        offered: &'static str,
    },
    #[error("queue size must be at least 1")]
    QueueSize,
    #[error("stamp regression on `{path}`: {stamp} < {last}")]
    StampRegression { path: String, stamp: f64, last: f64 },
    #[error("service `{0}` is unavailable")]
    Unavailable(String),
    #[error("service `{0}` timed out")]
    Timeout(String),
    #[error("deadline must be positive")]
    Deadline,
    #[error("service `{0}` is already registered")]
    DuplicateService(String),
}

/// A message as delivered to subscribers.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMessage {
    pub topic: String,
    /// Monotonic time in seconds.
    pub stamp: f64,
    pub payload: Message,
}

pub(crate) fn validate_path(path: &str) -> Result<(), BusError> {
    let ok = path.len() > 1
        && path.starts_with('/')
        && !path.ends_with('/')
        && path[1..].split('/').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        });
    if ok {
        Ok(())
    } else {
        Err(BusError::InvalidPath(path.to_string()))
    }
}

struct Queue {
    capacity: usize,
    items: Mutex<VecDeque<TopicMessage>>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl Queue {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Mutex::new(VecDeque::with_capacity(capacity.min(1024))),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        }
    }

    fn push(&self, msg: TopicMessage) {
        let mut items = self.items.lock().unwrap();
        if items.len() == self.capacity {
            items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        items.push_back(msg);
        drop(items);
        self.ready.notify_one();
    }
}

struct SubscriberSlot {
    id: u64,
    queue: Weak<Queue>,
}

#[derive(Default)]
struct Topic {
    schema: Option<&'static str>,
    subscribers: Vec<SubscriberSlot>,
}

type Handler = Arc<dyn Fn(Message) -> Message + Send + Sync>;

#[derive(Default)]
struct Inner {
    topics: Mutex<BTreeMap<String, Topic>>,
    monitors: Mutex<Vec<SubscriberSlot>>,
    services: RwLock<BTreeMap<String, Handler>>,
    next_id: AtomicU64,
}

/// Cloneable handle to one bus; all clones share topics and services.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    fn register_schema(&self, topic: &str, schema: &'static str) -> Result<(), BusError> {
        validate_path(topic)?;
        let mut topics = self.inner.topics.lock().unwrap();
        let entry = topics.entry(topic.to_string()).or_default();
        match entry.schema {
            None => {
                entry.schema = Some(schema);
                Ok(())
            }
            Some(s) if s == schema => Ok(()),
            Some(s) => Err(BusError::Schema {
                path: topic.to_string(),
                registered: s,
                offered: schema,
            }),
        }
    }

    /// Declares a topic with the given schema and returns a publisher that
    /// enforces non-decreasing stamps.
    pub fn advertise(&self, topic: &str, schema: &'static str) -> Result<Publisher, BusError> {
        self.register_schema(topic, schema)?;
        Ok(Publisher {
            bus: self.clone(),
            topic: topic.to_string(),
            last_stamp: f64::NEG_INFINITY,
        })
    }

    /// Fire-and-forget publish. The topic is auto-advertised with the
    /// payload's schema if it has none yet.
    pub fn publish(&self, topic: &str, stamp: f64, payload: Message) -> Result<(), BusError> {
        validate_path(topic)?;
        let queues: Vec<Arc<Queue>> = {
            let mut topics = self.inner.topics.lock().unwrap();
            let entry = topics.entry(topic.to_string()).or_default();
            let schema = payload.schema();
            match entry.schema {
                None => entry.schema = Some(schema),
                Some(s) if s != schema => {
                    return Err(BusError::Schema {
                        path: topic.to_string(),
                        registered: s,
                        offered: schema,
                    })
                }
                _ => {}
            }
            entry.subscribers.retain(|s| s.queue.strong_count() > 0);
            entry.subscribers.iter().filter_map(|s| s.queue.upgrade()).collect()
        };
        let monitors: Vec<Arc<Queue>> = {
            let mut mons = self.inner.monitors.lock().unwrap();
            mons.retain(|s| s.queue.strong_count() > 0);
            mons.iter().filter_map(|s| s.queue.upgrade()).collect()
        };
        if queues.is_empty() && monitors.is_empty() {
            return Ok(());
        }
        let msg = TopicMessage {
            topic: topic.to_string(),
            stamp,
            payload,
        };
        for q in queues.iter().chain(monitors.iter()) {
            q.push(msg.clone());
        }
        Ok(())
    }

    /// Subscribes to `topic`, registering `schema` for it. Only messages
    /// published after this call are delivered.
    pub fn subscribe(&self, topic: &str, schema: &'static str, queue_size: usize) -> Result<Subscription, BusError> {
        if queue_size == 0 {
            return Err(BusError::QueueSize);
        }
        self.register_schema(topic, schema)?;
        let queue = Arc::new(Queue::new(queue_size));
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let mut topics = self.inner.topics.lock().unwrap();
        topics
            .get_mut(topic)
            .expect("registered above")
            .subscribers
            .push(SubscriberSlot {
                id,
                queue: Arc::downgrade(&queue),
            });
        Ok(Subscription {
            bus: Arc::downgrade(&self.inner),
            topic: Some(topic.to_string()),
            id,
            queue,
        })
    }

    /// Receives every message published on any topic (used by bag recording).
    pub fn monitor(&self, queue_size: usize) -> Result<Subscription, BusError> {
        if queue_size == 0 {
            return Err(BusError::QueueSize);
        }
        let queue = Arc::new(Queue::new(queue_size));
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        self.inner.monitors.lock().unwrap().push(SubscriberSlot {
            id,
            queue: Arc::downgrade(&queue),
        });
        Ok(Subscription {
            bus: Arc::downgrade(&self.inner),
            topic: None,
            id,
            queue,
        })
    }

    /// Registered schema of a topic, if any.
    pub fn topic_schema(&self, topic: &str) -> Option<&'static str> {
        self.inner.topics.lock().unwrap().get(topic).and_then(|t| t.schema)
    }

    pub fn topics(&self) -> Vec<(String, &'static str)> {
        self.inner
            .topics
            .lock()
            .unwrap()
            .iter()
            .filter_map(|(k, t)| t.schema.map(|s| (k.clone(), s)))
            .collect()
    }

    pub fn register_service<F>(&self, service: &str, handler: F) -> Result<(), BusError>
    where
        F: Fn(Message) -> Message + Send + Sync + 'static,
    {
        validate_path(service)?;
        let mut services = self.inner.services.write().unwrap();
        if services.contains_key(service) {
            return Err(BusError::DuplicateService(service.to_string()));
        }
        services.insert(service.to_string(), Arc::new(handler));
        Ok(())
    }

    pub fn unregister_service(&self, service: &str) {
        self.inner.services.write().unwrap().remove(service);
    }

    /// Calls a service, returning its response or an error once `deadline`
    /// elapses. Exactly one of response, unavailable or timeout results.
    pub fn call(&self, service: &str, request: Message, deadline: Duration) -> Result<Message, BusError> {
        if deadline.is_zero() {
            return Err(BusError::Deadline);
        }
        let handler = self
            .inner
            .services
            .read()
            .unwrap()
            .get(service)
            .cloned()
            .ok_or_else(|| BusError::Unavailable(service.to_string()))?;
        let (tx, rx) = mpsc::sync_channel(1);
        std::thread::Builder::new()
            .name(format!("svc{service}"))
            .spawn(move || {
                let _ = tx.send(handler(request));
            })
            .map_err(|_| BusError::Unavailable(service.to_string()))?;
        match rx.recv_timeout(deadline) {
            Ok(resp) => Ok(resp),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(BusError::Timeout(service.to_string())),
            // handler panicked before answering
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(BusError::Unavailable(service.to_string())),
        }
    }
}

/// Publishing endpoint for one topic.
pub struct Publisher {
    bus: Bus,
    topic: String,
    last_stamp: f64,
}

impl Publisher {
    pub fn publish(&mut self, stamp: f64, payload: Message) -> Result<(), BusError> {
        if stamp < self.last_stamp {
            return Err(BusError::StampRegression {
                path: self.topic.clone(),
                stamp,
                last: self.last_stamp,
            });
        }
        self.bus.publish(&self.topic, stamp, payload)?;
        self.last_stamp = stamp;
        Ok(())
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }
}

/// Receiving end of a topic subscription. Dropping it stops delivery.
pub struct Subscription {
    bus: Weak<Inner>,
    topic: Option<String>,
    id: u64,
    queue: Arc<Queue>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<TopicMessage> {
        self.queue.items.lock().unwrap().pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<TopicMessage> {
        let deadline = Instant::now() + timeout;
        let mut items = self.queue.items.lock().unwrap();
        loop {
            if let Some(m) = items.pop_front() {
                return Some(m);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            items = self.queue.ready.wait_timeout(items, deadline - now).unwrap().0;
        }
    }

    /// Takes everything queued, oldest first.
    pub fn drain(&self) -> Vec<TopicMessage> {
        self.queue.items.lock().unwrap().drain(..).collect()
    }

    /// Most recent queued message, discarding older ones.
    pub fn latest(&self) -> Option<TopicMessage> {
        self.drain().pop()
    }

    pub fn len(&self) -> usize {
        self.queue.items.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Messages lost to overflow since subscription.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn topic(&self) -> Option<&str> {
        self.topic.as_deref()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        let Some(inner) = self.bus.upgrade() else {
            return;
        };
        match &self.topic {
            Some(t) => {
                if let Some(topic) = inner.topics.lock().unwrap().get_mut(t) {
                    topic.subscribers.retain(|s| s.id != self.id);
                }
            }
            None => inner.monitors.lock().unwrap().retain(|s| s.id != self.id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(x: f64) -> Message {
        Message::Float(x)
    }

    fn values(sub: &Subscription) -> Vec<f64> {
        sub.drain()
            .into_iter()
            .map(|m| match m.payload {
                Message::Float(v) => v,
                other => panic!("unexpected {other:?}"),
            })
            .collect()
    }

    #[test]
    fn fifo_delivery() {
        let bus = Bus::new();
        let sub = bus.subscribe("/a", "float", 10).unwrap();
        for i in 0..3 {
            bus.publish("/a", i as f64, f(i as f64)).unwrap();
        }
        assert_eq!(values(&sub), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn overflow_drops_oldest() {
        let bus = Bus::new();
        let sub = bus.subscribe("/a", "float", 2).unwrap();
        for i in 0..5 {
            bus.publish("/a", i as f64, f(i as f64)).unwrap();
        }
        assert_eq!(values(&sub), vec![3.0, 4.0]);
        assert_eq!(sub.dropped(), 3);
    }

    #[test]
    fn publish_without_subscribers_is_fine() {
        let bus = Bus::new();
        bus.publish("/a", 0.0, f(1.0)).unwrap();
    }

    #[test]
    fn no_replay_and_fan_out() {
        let bus = Bus::new();
        bus.publish("/a", 0.0, f(1.0)).unwrap();
        let s1 = bus.subscribe("/a", "float", 4).unwrap();
        let s2 = bus.subscribe("/a", "float", 4).unwrap();
        assert!(s1.try_recv().is_none());
        bus.publish("/a", 1.0, f(2.0)).unwrap();
        assert_eq!(values(&s1), vec![2.0]);
        assert_eq!(values(&s2), vec![2.0]);
    }

    #[test]
    fn dropping_handle_stops_delivery() {
        let bus = Bus::new();
        let s = bus.subscribe("/a", "float", 4).unwrap();
        drop(s);
        bus.publish("/a", 0.0, f(1.0)).unwrap();
        assert!(bus.inner.topics.lock().unwrap()["/a"].subscribers.is_empty());
    }

    #[test]
    fn schema_enforced() {
        let bus = Bus::new();
        let _s = bus.subscribe("/a", "float", 1).unwrap();
        let err = bus.publish("/a", 0.0, Message::Text("x".into())).unwrap_err();
        assert!(matches!(err, BusError::Schema { .. }));
        assert!(matches!(bus.subscribe("/a", "text", 1), Err(BusError::Schema { .. })));
        assert!(matches!(bus.subscribe("a", "float", 1), Err(BusError::InvalidPath(_))));
        assert!(matches!(bus.subscribe("/b", "float", 0), Err(BusError::QueueSize)));
    }

    #[test]
    fn publisher_rejects_stamp_regression() {
        let bus = Bus::new();
        let mut p = bus.advertise("/a", "float").unwrap();
        p.publish(1.0, f(0.0)).unwrap();
        p.publish(1.0, f(0.0)).unwrap();
        assert!(matches!(p.publish(0.5, f(0.0)), Err(BusError::StampRegression { .. })));
    }

    #[test]
    fn service_echo_unavailable_timeout() {
        let bus = Bus::new();
        bus.register_service("/echo", |m| m).unwrap();
        let d = Duration::from_millis(200);
        assert_eq!(bus.call("/echo", f(4.0), d).unwrap(), f(4.0));
        assert!(matches!(bus.call("/nope", f(0.0), d), Err(BusError::Unavailable(_))));
        bus.register_service("/slow", |m| {
            std::thread::sleep(Duration::from_millis(100));
            m
        })
        .unwrap();
        let r = bus.call("/slow", f(0.0), Duration::from_millis(50));
        assert!(matches!(r, Err(BusError::Timeout(_))));
    }

    #[test]
    fn monitor_sees_all_topics() {
        let bus = Bus::new();
        let mon = bus.monitor(10).unwrap();
        bus.publish("/a", 0.0, f(1.0)).unwrap();
        bus.publish("/b", 0.0, Message::Text("t".into())).unwrap();
        let got: Vec<String> = mon.drain().into_iter().map(|m| m.topic).collect();
        assert_eq!(got, vec!["/a", "/b"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Several publisher threads interleave; each subscriber must see
        // every publisher's sequence in order and, with a large enough
        // queue, completely.
        #[test]
        fn per_publisher_fifo(counts in proptest::collection::vec(1usize..40, 1..4), subs in 1usize..3) {
            let bus = Bus::new();
            let total: usize = counts.iter().sum();
            let subscribers: Vec<_> = (0..subs).map(|_| bus.subscribe("/t", "text", total).unwrap()).collect();
            let handles: Vec<_> = counts.iter().enumerate().map(|(p, &n)| {
                let bus = bus.clone();
                std::thread::spawn(move || {
                    for i in 0..n {
                        bus.publish("/t", 0.0, Message::Text(format!("{p}:{i}"))).unwrap();
                        if i % 7 == 0 { std::thread::yield_now(); }
                    }
                })
            }).collect();
            for h in handles { h.join().unwrap(); }
            for s in &subscribers {
                let msgs = s.drain();
                prop_assert_eq!(msgs.len(), total);
                let mut next = vec![0usize; counts.len()];
                for m in msgs {
                    let Message::Text(t) = m.payload else { unreachable!() };
                    let (p, i) = t.split_once(':').unwrap();
                    let (p, i): (usize, usize) = (p.parse().unwrap(), i.parse().unwrap());
                    prop_assert_eq!(i, next[p]);
                    next[p] += 1;
                }
            }
        }

        #[test]
        fn service_calls_always_terminate(sleep_ms in 0u64..30, deadline_ms in 1u64..30, registered in any::<bool>()) {
            let bus = Bus::new();
            if registered {
                bus.register_service("/s", move |m| { std::thread::sleep(Duration::from_millis(sleep_ms)); m }).unwrap();
            }
            let r = bus.call("/s", Message::Empty, Duration::from_millis(deadline_ms));
            match r {
                Ok(m) => prop_assert!(registered && m == Message::Empty),
                Err(BusError::Unavailable(_)) => prop_assert!(!registered),
                Err(BusError::Timeout(_)) => prop_assert!(registered),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
