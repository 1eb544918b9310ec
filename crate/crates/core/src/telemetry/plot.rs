//! Plot series in circular buffers, organized as a path tree, with floor
//! queries at past times.

use crate::msgbus::TopicMessage;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::RwLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("unknown plot path `{0}`")]
    UnknownPath(String),
    #[error("sample at {t} for `{path}` does not follow {last}")]
    NonMonotonic { path: String, t: f64, last: f64 },
    #[error("time {t} precedes the oldest retained sample at {oldest}")]
    OutOfWindow { t: f64, oldest: f64 },
    #[error("invalid plot path `{0}`")]
    InvalidPath(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub path: String,
    capacity: usize,
    samples: VecDeque<(f64, f64)>,
}

impl PlotSeries {
    pub fn new(path: &str, capacity: usize) -> Self {
        Self {
            path: path.to_string(),
            capacity: capacity.max(1),
            samples: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().copied()
    }

    pub fn record(&mut self, t: f64, value: f64) -> Result<(), PlotError> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(PlotError::NonMonotonic {
                    path: self.path.clone(),
                    t,
                    last,
                });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, value));
        Ok(())
    }

    /// Latest sample with time ≤ t.
    pub fn at(&self, t: f64) -> Result<(f64, f64), PlotError> {
        let oldest = self.samples.front().map(|s| s.0).unwrap_or(f64::INFINITY);
        if self.samples.is_empty() || t < oldest {
            return Err(PlotError::OutOfWindow { t, oldest });
        }
        let idx = self.samples.partition_point(|s| s.0 <= t);
        Ok(self.samples[idx - 1])
    }

    /// Samples with from ≤ time ≤ to.
    pub fn range(&self, from: f64, to: f64) -> Vec<(f64, f64)> {
        let lo = self.samples.partition_point(|s| s.0 < from);
        let hi = self.samples.partition_point(|s| s.0 <= to);
        self.samples.range(lo..hi.max(lo)).copied().collect()
    }
}

/// All plot series of a process; safe to share between threads.
pub struct PlotStore {
    capacity: usize,
    series: RwLock<BTreeMap<String, PlotSeries>>,
    rejected: std::sync::atomic::AtomicU64,
}

impl PlotStore {
    /// `capacity` samples per series (retention × source rate).
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            series: RwLock::new(BTreeMap::new()),
            rejected: Default::default(),
        }
    }

    pub fn record(&self, path: &str, t: f64, value: f64) -> Result<(), PlotError> {
        crate::msgbus::validate_path(path).map_err(|_| PlotError::InvalidPath(path.to_string()))?;
        let mut map = self.series.write().unwrap();
        let s = map
            .entry(path.to_string())
            .or_insert_with(|| PlotSeries::new(path, self.capacity));
        let r = s.record(t, value);
        if let Err(e) = &r {
            self.rejected.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            log::warn!("{e}");
        }
        r
    }

    /// Records only if `t` is newer than the last sample; returns whether it was.
    pub fn record_if_newer(&self, path: &str, t: f64, value: f64) -> bool {
        if crate::msgbus::validate_path(path).is_err() {
            return false;
        }
        let mut map = self.series.write().unwrap();
        let s = map
            .entry(path.to_string())
            .or_insert_with(|| PlotSeries::new(path, self.capacity));
        s.record(t, value).is_ok()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn at(&self, path: &str, t: f64) -> Result<(f64, f64), PlotError> {
        let map = self.series.read().unwrap();
        map.get(path)
            .ok_or_else(|| PlotError::UnknownPath(path.to_string()))?
            .at(t)
    }

    pub fn range(&self, path: &str, from: f64, to: f64) -> Result<Vec<(f64, f64)>, PlotError> {
        let map = self.series.read().unwrap();
        Ok(map
            .get(path)
            .ok_or_else(|| PlotError::UnknownPath(path.to_string()))?
            .range(from, to))
    }

    pub fn snapshot(&self, path: &str) -> Option<PlotSeries> {
        self.series.read().unwrap().get(path).cloned()
    }

    pub fn paths(&self) -> Vec<String> {
        self.series.read().unwrap().keys().cloned().collect()
    }

    /// Direct children of a tree node ("/" for the root), as full paths.
    pub fn children(&self, prefix: &str) -> Vec<String> {
        let base = prefix.trim_end_matches('/');
        let mut out = BTreeSet::new();
        for p in self.series.read().unwrap().keys() {
            if let Some(rest) = p.strip_prefix(base).and_then(|r| r.strip_prefix('/')) {
                let head = rest.split('/').next().unwrap_or(rest);
                out.insert(format!("{base}/{head}"));
            }
        }
        out.into_iter().collect()
    }
}

/// Bounded per-topic history of bus messages for past-state queries.
pub struct TopicHistory {
    capacity: usize,
    topics: RwLock<BTreeMap<String, VecDeque<TopicMessage>>>,
}

impl TopicHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            topics: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn push(&self, m: TopicMessage) {
        let mut map = self.topics.write().unwrap();
        let q = map.entry(m.topic.clone()).or_default();
        if q.back().is_some_and(|b| m.stamp < b.stamp) {
            return;
        }
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(m);
    }

    /// Latest message on `topic` stamped at or before `t` (None = newest).
    pub fn at(&self, topic: &str, t: Option<f64>) -> Result<TopicMessage, PlotError> {
        let map = self.topics.read().unwrap();
        let q = map
            .get(topic)
            .ok_or_else(|| PlotError::UnknownPath(topic.to_string()))?;
        let Some(t) = t else {
            return q
                .back()
                .cloned()
                .ok_or_else(|| PlotError::UnknownPath(topic.to_string()));
        };
        let idx = q.partition_point(|m| m.stamp <= t);
        if idx == 0 {
            return Err(PlotError::OutOfWindow {
                t,
                oldest: q.front().map(|m| m.stamp).unwrap_or(f64::INFINITY),
            });
        }
        Ok(q[idx - 1].clone())
    }

    pub fn topics(&self) -> Vec<String> {
        self.topics.read().unwrap().keys().cloned().collect()
    }
}
