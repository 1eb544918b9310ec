//! On-disk log of bus messages and plot samples.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "HBAG"            4 bytes magic
//! version           u32
//! header length     u32
//! header            JSON object (BagHeader)
//! repeated:
//!   record length   u32
//!   record          JSON object (BagRecord)
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a loaded bag
//! compares equal to the one that was saved. Non-finite values have no JSON
//! form and are refused at save time.

use super::plot::PlotStore;
use crate::messages::Message;
use crate::msgbus::{Bus, BusError, Subscription, TopicMessage};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"HBAG";
pub const VERSION: u32 = 1;
const MAX_BLOCK: u32 = 1 << 30;

#[derive(Debug, Error)]
pub enum BagError {
    #[error("bag i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a bag file (bad magic)")]
    Magic,
    #[error("unsupported bag version {0}")]
    Version(u32),
    #[error("corrupt bag header: {0}")]
    Header(String),
    #[error("corrupt record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("record {index} is not representable: {reason}")]
    Encode { index: usize, reason: String },
    #[error("records out of order at {0}")]
    Order(usize),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum BagData {
    Message(Message),
    Sample(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagRecord {
    pub stamp: f64,
    pub topic: String,
    pub data: BagData,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BagHeader {
    pub version: u32,
    pub start: f64,
    pub end: f64,
    /// schema name per topic; plot paths map to "sample"
    pub schemas: BTreeMap<String, String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bag {
    pub header: BagHeader,
    pub records: Vec<BagRecord>,
}

impl Bag {
    /// Builds a bag from records, sorting them stably by stamp.
    pub fn from_records(mut records: Vec<BagRecord>) -> Self {
        records.sort_by(|a, b| a.stamp.total_cmp(&b.stamp));
        let mut schemas = BTreeMap::new();
        for r in &records {
            let s = match &r.data {
                BagData::Message(m) => m.schema(),
                BagData::Sample(_) => "sample",
            };
            schemas.entry(r.topic.clone()).or_insert_with(|| s.to_string());
        }
        let header = BagHeader {
            version: VERSION,
            start: records.first().map_or(0.0, |r| r.stamp),
            end: records.last().map_or(0.0, |r| r.stamp),
            schemas,
            seed: None,
        };
        Self { header, records }
    }

    /// Plot samples with `from ≤ t ≤ to` for the given paths (all if empty).
    pub fn from_plots(store: &PlotStore, paths: &[String], from: f64, to: f64) -> Self {
        let all = if paths.is_empty() {
            store.paths()
        } else {
            paths.to_vec()
        };
        let mut records = Vec::new();
        for p in all {
            if let Ok(samples) = store.range(&p, from, to) {
                records.extend(samples.into_iter().map(|(t, v)| BagRecord {
                    stamp: t,
                    topic: p.clone(),
                    data: BagData::Sample(v),
                }));
            }
        }
        Self::from_records(records)
    }

    pub fn topics(&self) -> Vec<String> {
        self.header.schemas.keys().cloned().collect()
    }

    /// Record count per topic.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.topic.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn messages_on<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = (f64, &'a Message)> + 'a {
        self.records.iter().filter_map(move |r| match &r.data {
            BagData::Message(m) if r.topic == topic => Some((r.stamp, m)),
            _ => None,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, BagError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).map_err(|e| BagError::Header(e.to_string()))?;
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut last = f64::NEG_INFINITY;
        for (index, r) in self.records.iter().enumerate() {
            if r.stamp < last {
                return Err(BagError::Order(index));
            }
            last = r.stamp;
            let bytes = serde_json::to_vec(r).map_err(|e| BagError::Encode {
                index,
                reason: e.to_string(),
            })?;
            // JSON has no NaN/inf; serde_json writes them as null, which would
            // not load back. Decode once to catch that before anything is saved.
            let back: Result<BagRecord, _> = serde_json::from_slice(&bytes);
            if !back.is_ok_and(|b| b == *r) {
                return Err(BagError::Encode {
                    index,
                    reason: "non-finite value".into(),
                });
            }
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, BagError> {
        let mut cur = data;
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| BagError::Magic)?;
        if &magic != MAGIC {
            return Err(BagError::Magic);
        }
        let version = read_u32(&mut cur).map_err(|_| BagError::Header("truncated".into()))?;
        if version != VERSION {
            return Err(BagError::Version(version));
        }
        let hlen = read_u32(&mut cur).map_err(|_| BagError::Header("truncated".into()))?;
        if hlen > MAX_BLOCK || hlen as usize > cur.len() {
            return Err(BagError::Header("truncated".into()));
        }
        let (hbytes, rest) = cur.split_at(hlen as usize);
        let header: BagHeader = serde_json::from_slice(hbytes).map_err(|e| BagError::Header(e.to_string()))?;
        cur = rest;
        let mut records = Vec::new();
        let mut last = f64::NEG_INFINITY;
        while !cur.is_empty() {
            let index = records.len();
            let corrupt = |reason: String| BagError::Record { index, reason };
            let len = read_u32(&mut cur).map_err(|_| corrupt("truncated length".into()))?;
            if len as usize > cur.len() {
                return Err(corrupt(format!("length {len} exceeds remaining {} bytes", cur.len())));
            }
            let (body, rest) = cur.split_at(len as usize);
            let r: BagRecord = serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
            if r.stamp < last {
                return Err(corrupt("stamp regression".into()));
            }
            last = r.stamp;
            records.push(r);
            cur = rest;
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, file: &Path) -> Result<(), BagError> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(file)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(file: &Path) -> Result<Self, BagError> {
        Self::from_bytes(&std::fs::read(file)?)
    }
}

fn read_u32(cur: &mut &[u8]) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    cur.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Collects bus traffic into a bag.
pub struct BagRecorder {
    monitor: Option<Subscription>,
    filter: Option<BTreeSet<String>>,
    exclude: BTreeSet<String>,
    records: Vec<BagRecord>,
}

impl BagRecorder {
    /// Records `topics` (all topics if None).
    pub fn new(bus: &Bus, topics: Option<&[String]>, queue_size: usize) -> Result<Self, BagError> {
        Ok(Self {
            monitor: Some(bus.monitor(queue_size)?),
            filter: topics.map(|t| t.iter().cloned().collect()),
            exclude: BTreeSet::new(),
            records: Vec::new(),
        })
    }

    /// A recorder fed explicitly through [`BagRecorder::record`].
    pub fn detached(topics: Option<&[String]>) -> Self {
        Self {
            monitor: None,
            filter: topics.map(|t| t.iter().cloned().collect()),
            exclude: BTreeSet::new(),
            records: Vec::new(),
        }
    }

    /// Never records these topics (for bulky streams like camera images).
    pub fn exclude(mut self, topics: &[&str]) -> Self {
        self.exclude.extend(topics.iter().map(|t| t.to_string()));
        self
    }

    /// Moves queued bus messages into the bag.
    pub fn poll(&mut self) {
        let Some(mon) = &self.monitor else {
            return;
        };
        for m in mon.drain() {
            self.record(m);
        }
    }

    pub fn record(&mut self, m: TopicMessage) {
        if self.exclude.contains(&m.topic) {
            return;
        }
        if self.filter.as_ref().is_some_and(|f| !f.contains(&m.topic)) {
            return;
        }
        self.records.push(BagRecord {
            stamp: m.stamp,
            topic: m.topic,
            data: BagData::Message(m.payload),
        });
    }

    pub fn record_sample(&mut self, path: &str, stamp: f64, value: f64) {
        self.records.push(BagRecord {
            stamp,
            topic: path.to_string(),
            data: BagData::Sample(value),
        });
    }

    pub fn dropped(&self) -> u64 {
        self.monitor.as_ref().map_or(0, Subscription::dropped)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn finish(mut self) -> Bag {
        self.poll();
        Bag::from_records(self.records)
    }

    /// Snapshot of everything recorded so far.
    pub fn bag(&mut self) -> Bag {
        self.poll();
        Bag::from_records(self.records.clone())
    }
}

/// Plays a bag back onto a bus. Stamps keep their original spacing, shifted
/// so the first record lands at the replay start time.
pub struct Replayer {
    bag: Bag,
    next: usize,
    offset: Option<f64>,
    plots: Option<std::sync::Arc<PlotStore>>,
}

impl Replayer {
    pub fn new(bag: Bag) -> Self {
        Self {
            bag,
            next: 0,
            offset: None,
            plots: None,
        }
    }

    /// Also feed plot samples into a store.
    pub fn with_plots(mut self, store: std::sync::Arc<PlotStore>) -> Self {
        self.plots = Some(store);
        self
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.bag.records.len()
    }

    pub fn remaining(&self) -> usize {
        self.bag.records.len() - self.next
    }

    /// Publishes every record due at replay time `now`; returns how many.
    pub fn poll(&mut self, bus: &Bus, now: f64) -> Result<usize, BagError> {
        let offset = *self.offset.get_or_insert(now - self.bag.header.start);
        let mut n = 0;
        while let Some(r) = self.bag.records.get(self.next) {
            let t = r.stamp + offset;
            if t > now {
                break;
            }
            match &r.data {
                BagData::Message(m) => bus.publish(&r.topic, t, m.clone())?,
                BagData::Sample(v) => {
                    if let Some(p) = &self.plots {
                        let _ = p.record(&r.topic, t, *v);
                    }
                }
            }
            self.next += 1;
            n += 1;
        }
        Ok(n)
    }

    /// Replays in real time (scaled by `speed`) until done or stopped.
    pub fn run_wall_clock(&mut self, bus: &Bus, speed: f64, stop: &AtomicBool) -> Result<usize, BagError> {
        let speed = if speed > 0.0 { speed } else { 1.0 };
        let t0 = Instant::now();
        let start = self.bag.header.start;
        let mut total = 0;
        while !self.is_done() && !stop.load(Ordering::Relaxed) {
            let now = start + t0.elapsed().as_secs_f64() * speed;
            total += self.poll(bus, now)?;
            if let Some(r) = self.bag.records.get(self.next) {
                let wait = (r.stamp - now) / speed;
                std::thread::sleep(Duration::from_secs_f64(wait.clamp(0.0, 0.05)));
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_bag(n: usize) -> Bag {
        Bag::from_records(
            (0..n)
                .map(|i| BagRecord {
                    stamp: i as f64 * 0.008,
                    topic: "/x".into(),
                    data: BagData::Sample((i as f64).sin() / 3.0),
                })
                .collect(),
        )
    }

    #[test]
    fn roundtrip_and_determinism() {
        let bag = sample_bag(100);
        let a = bag.to_bytes().unwrap();
        assert_eq!(a, bag.to_bytes().unwrap());
        let back = Bag::from_bytes(&a).unwrap();
        assert_eq!(back, bag);
        assert_eq!(back.records.len(), 100);
    }

    #[test]
    fn bad_magic() {
        let mut a = sample_bag(3).to_bytes().unwrap();
        a[0] = b'X';
        assert!(matches!(Bag::from_bytes(&a), Err(BagError::Magic)));
    }

    #[test]
    fn corrupt_record_names_index() {
        let bag = sample_bag(5);
        let mut a = bag.to_bytes().unwrap();
        let n = a.len();
        a[n - 3] = b'#';
        match Bag::from_bytes(&a) {
            Err(BagError::Record { index, .. }) => assert_eq!(index, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nan_refused() {
        let bag = Bag::from_records(vec![BagRecord {
            stamp: 0.0,
            topic: "/x".into(),
            data: BagData::Sample(f64::NAN),
        }]);
        assert!(matches!(bag.to_bytes(), Err(BagError::Encode { index: 0, .. })));
    }
}
