//! Hierarchical parameter server.
//!
//! Parameters live under slash-separated paths (`/gait/maxVelX`). Interior
//! path segments are structural only: no parameter path may be a prefix of
//! another. Each successful mutation bumps the tree revision by one and is
//! pushed to every subscriber whose prefix covers the path. Subscribers get an
//! unbounded channel of their own, so a slow reader never stalls a setter.
//!
//! The on-disk form is a nested TOML document with keys in sorted order.
//! Values for paths that are not declared yet are kept as pending values and
//! applied when the parameter is declared.

use crate::messages::Message;
use crate::msgbus::Bus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock, Weak};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed parameter path `{0}`")]
    BadPath(String),
    #[error("`{path}` conflicts with existing parameter `{existing}`")]
    PathConflict { path: String, existing: String },
    #[error("invalid range for `{0}`")]
    BadRange(String),
    #[error("`{path}` already declared as {existing}, not {requested}")]
    TypeConflict {
        path: String,
        existing: &'static str,
        requested: &'static str,
    },
    #[error("parameter `{0}` not found")]
    NotFound(String),
    #[error("type mismatch for `{path}`: expected {expected}, got {got}")]
    TypeMismatch {
        path: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Float(_) => "float",
            ParamValue::Int(_) => "int",
            ParamValue::Bool(_) => "bool",
            ParamValue::Str(_) => "string",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Float(v) => Some(v),
            ParamValue::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    /// Coerces `self` to the type of `like`; ints widen to floats.
    fn coerce_to(self, like: &ParamValue) -> Option<ParamValue> {
        match (like, self) {
            (ParamValue::Float(_), ParamValue::Float(v)) => Some(ParamValue::Float(v)),
            (ParamValue::Float(_), ParamValue::Int(v)) => Some(ParamValue::Float(v as f64)),
            (ParamValue::Int(_), ParamValue::Int(v)) => Some(ParamValue::Int(v)),
            (ParamValue::Bool(_), ParamValue::Bool(v)) => Some(ParamValue::Bool(v)),
            (ParamValue::Str(_), ParamValue::Str(v)) => Some(ParamValue::Str(v)),
            _ => None,
        }
    }

    fn to_toml(&self) -> toml::Value {
        match self {
            ParamValue::Float(v) => toml::Value::Float(*v),
            ParamValue::Int(v) => toml::Value::Integer(*v),
            ParamValue::Bool(v) => toml::Value::Boolean(*v),
            ParamValue::Str(v) => toml::Value::String(v.clone()),
        }
    }

    fn from_toml(v: &toml::Value) -> Option<ParamValue> {
        match v {
            toml::Value::Float(f) => Some(ParamValue::Float(*f)),
            toml::Value::Integer(i) => Some(ParamValue::Int(*i)),
            toml::Value::Boolean(b) => Some(ParamValue::Bool(*b)),
            toml::Value::String(s) => Some(ParamValue::Str(s.clone())),
            _ => None,
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}
impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}
impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}
impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

/// Bounds for a numeric parameter; `step` is the UI increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl NumericRange {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max && self.step > 0.0
    }
}

/// Public view of one declared parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub path: String,
    pub value: ParamValue,
    pub range: Option<NumericRange>,
}

/// Change notification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigChange {
    pub path: String,
    pub value: ParamValue,
    pub revision: u64,
}

struct Param {
    value: ParamValue,
    range: Option<NumericRange>,
    caches: Vec<Weak<RwLock<ParamValue>>>,
}

struct Subscriber {
    prefix: String,
    tx: Sender<ConfigChange>,
}

#[derive(Default)]
struct State {
    params: BTreeMap<String, Param>,
    pending: BTreeMap<String, ParamValue>,
    revision: u64,
    subscribers: Vec<Subscriber>,
    warnings: Vec<String>,
    bus: Option<Bus>,
}

/// Shared parameter server. Clones refer to the same tree.
#[derive(Clone, Default)]
pub struct ConfigServer {
    state: Arc<Mutex<State>>,
}

/// Locally cached copy of one parameter, refreshed on every change.
#[derive(Clone, Debug)]
pub struct ParamHandle {
    path: String,
    cache: Arc<RwLock<ParamValue>>,
}

impl ParamHandle {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn value(&self) -> ParamValue {
        self.cache.read().unwrap().clone()
    }

    /// Numeric value; panics on non-numeric parameters.
    pub fn f64(&self) -> f64 {
        self.cache
            .read()
            .unwrap()
            .as_f64()
            .unwrap_or_else(|| panic!("{} is not numeric", self.path))
    }

    pub fn i64(&self) -> i64 {
        match *self.cache.read().unwrap() {
            ParamValue::Int(v) => v,
            ref other => panic!("{} is {}, not int", self.path, other.type_name()),
        }
    }

    pub fn bool(&self) -> bool {
        match *self.cache.read().unwrap() {
            ParamValue::Bool(v) => v,
            ref other => panic!("{} is {}, not bool", self.path, other.type_name()),
        }
    }

    pub fn string(&self) -> String {
        match &*self.cache.read().unwrap() {
            ParamValue::Str(v) => v.clone(),
            other => panic!("{} is {}, not string", self.path, other.type_name()),
        }
    }
}

fn check_path(path: &str) -> Result<(), ConfigError> {
    crate::msgbus::validate_path(path).map_err(|_| ConfigError::BadPath(path.to_string()))
}

/// True when `prefix` covers `path` segment-wise.
fn covers(prefix: &str, path: &str) -> bool {
    if prefix == "/" || prefix == path {
        return true;
    }
    path.len() > prefix.len() && path.starts_with(prefix) && path.as_bytes()[prefix.len()] == b'/'
}

fn clamp(value: ParamValue, range: Option<NumericRange>) -> (ParamValue, bool) {
    let Some(r) = range else {
        return (value, false);
    };
    match value {
        ParamValue::Float(v) => {
            let c = v.clamp(r.min, r.max);
            (ParamValue::Float(c), c != v)
        }
        ParamValue::Int(v) => {
            let c = (v as f64).clamp(r.min.ceil(), r.max.floor()) as i64;
            (ParamValue::Int(c), c != v)
        }
        other => (other, false),
    }
}

impl State {
    fn conflict_with(&self, path: &str) -> Option<String> {
        self.params
            .keys()
            .find(|k| k.as_str() != path && (covers(k, path) || covers(path, k)))
            .cloned()
    }

    fn apply(&mut self, path: &str, value: ParamValue) -> Result<(), ConfigError> {
        let param = self
            .params
            .get_mut(path)
            .ok_or_else(|| ConfigError::NotFound(path.to_string()))?;
        let got = value.type_name();
        let value = value.coerce_to(&param.value).ok_or_else(|| ConfigError::TypeMismatch {
            path: path.to_string(),
            expected: param.value.type_name(),
            got,
        })?;
        if let ParamValue::Float(v) = value {
            if !v.is_finite() {
                return Err(ConfigError::NonFinite(path.to_string()));
            }
        }
        let (value, clamped) = clamp(value, param.range);
        param.value = value.clone();
        param.caches.retain(|c| c.strong_count() > 0);
        for cache in param.caches.iter().filter_map(Weak::upgrade) {
            *cache.write().unwrap() = value.clone();
        }
        if clamped {
            let w = format!("{path}: value clamped to {value:?}");
            log::warn!("{w}");
            self.warnings.push(w);
        }
        self.revision += 1;
        let change = ConfigChange {
            path: path.to_string(),
            value,
            revision: self.revision,
        };
        self.subscribers
            .retain(|s| !covers(&s.prefix, path) || s.tx.send(change.clone()).is_ok());
        if let Some(bus) = &self.bus {
            let _ = bus.publish("/config/changes", self.revision as f64, Message::ConfigChange(change));
        }
        Ok(())
    }
}

impl ConfigServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Server whose startup values come from `file`.
    pub fn with_startup_file(file: &Path) -> Result<Self, ConfigError> {
        let server = Self::new();
        server.load(file)?;
        Ok(server)
    }

    /// Also publish every change on the bus topic `/config/changes`.
    pub fn attach_bus(&self, bus: &Bus) {
        self.state.lock().unwrap().bus = Some(bus.clone());
    }

    /// Declares a parameter. The startup/pending value wins over `default`
    /// when present and is clamped into `range`.
    pub fn declare(
        &self,
        path: &str,
        default: impl Into<ParamValue>,
        range: Option<NumericRange>,
    ) -> Result<ParamHandle, ConfigError> {
        check_path(path)?;
        let default = default.into();
        if let Some(r) = range {
            if !r.is_valid() || default.as_f64().is_none() {
                return Err(ConfigError::BadRange(path.to_string()));
            }
        }
        let mut st = self.state.lock().unwrap();
        if let Some(p) = st.params.get_mut(path) {
            if p.value.type_name() != default.type_name() {
                return Err(ConfigError::TypeConflict {
                    path: path.to_string(),
                    existing: p.value.type_name(),
                    requested: default.type_name(),
                });
            }
            let cache = Arc::new(RwLock::new(p.value.clone()));
            p.caches.push(Arc::downgrade(&cache));
            return Ok(ParamHandle {
                path: path.to_string(),
                cache,
            });
        }
        if let Some(existing) = st.conflict_with(path) {
            return Err(ConfigError::PathConflict {
                path: path.to_string(),
                existing,
            });
        }
        let stale: Vec<String> = st
            .pending
            .keys()
            .filter(|k| k.as_str() != path && (covers(k, path) || covers(path, k)))
            .cloned()
            .collect();
        for k in stale {
            st.warnings
                .push(format!("{k}: pending value dropped, conflicts with {path}"));
            st.pending.remove(&k);
        }
        let mut value = default.clone();
        if let Some(pending) = st.pending.remove(path) {
            match pending.coerce_to(&default) {
                Some(v) => {
                    let (v, clamped) = clamp(v, range);
                    if clamped {
                        let w = format!("{path}: startup value clamped to {v:?}");
                        log::warn!("{w}");
                        st.warnings.push(w);
                    }
                    value = v;
                }
                None => st
                    .warnings
                    .push(format!("{path}: startup value has wrong type, using default")),
            }
        } else {
            value = clamp(value, range).0;
        }
        let cache = Arc::new(RwLock::new(value.clone()));
        st.params.insert(
            path.to_string(),
            Param {
                value,
                range,
                caches: vec![Arc::downgrade(&cache)],
            },
        );
        Ok(ParamHandle {
            path: path.to_string(),
            cache,
        })
    }

    /// Declares a float parameter bounded to `[min, max]` with a UI step of
    /// one thousandth of the span.
    pub fn float(&self, path: &str, default: f64, min: f64, max: f64) -> Result<ParamHandle, ConfigError> {
        let step = if max > min { (max - min) / 1000.0 } else { 1.0 };
        self.declare(path, default, Some(NumericRange::new(min, max, step)))
    }

    pub fn get(&self, path: &str) -> Result<ParamValue, ConfigError> {
        self.state
            .lock()
            .unwrap()
            .params
            .get(path)
            .map(|p| p.value.clone())
            .ok_or_else(|| ConfigError::NotFound(path.to_string()))
    }

    /// Stores a (clamped) value and notifies covering subscribers, even when
    /// the value is unchanged.
    pub fn set(&self, path: &str, value: impl Into<ParamValue>) -> Result<ParamValue, ConfigError> {
        let mut st = self.state.lock().unwrap();
        st.apply(path, value.into())?;
        Ok(st.params[path].value.clone())
    }

    /// Change notifications for every path under `prefix` (`/` for all).
    pub fn subscribe(&self, prefix: &str) -> Result<Receiver<ConfigChange>, ConfigError> {
        if prefix != "/" {
            check_path(prefix)?;
        }
        let (tx, rx) = channel();
        self.state.lock().unwrap().subscribers.push(Subscriber {
            prefix: prefix.to_string(),
            tx,
        });
        Ok(rx)
    }

    pub fn revision(&self) -> u64 {
        self.state.lock().unwrap().revision
    }

    pub fn list(&self) -> Vec<ParamInfo> {
        self.state
            .lock()
            .unwrap()
            .params
            .iter()
            .map(|(k, p)| ParamInfo {
                path: k.clone(),
                value: p.value.clone(),
                range: p.range,
            })
            .collect()
    }

    pub fn pending(&self) -> BTreeMap<String, ParamValue> {
        self.state.lock().unwrap().pending.clone()
    }

    /// Warnings (clamps, dropped startup values) accumulated so far.
    pub fn warnings(&self) -> Vec<String> {
        self.state.lock().unwrap().warnings.clone()
    }

    /// Canonical text form: declared values plus non-conflicting pending ones.
    pub fn to_text(&self) -> String {
        let st = self.state.lock().unwrap();
        let mut flat: BTreeMap<&str, &ParamValue> = st.pending.iter().map(|(k, v)| (k.as_str(), v)).collect();
        for (k, p) in &st.params {
            flat.insert(k, &p.value);
        }
        serialize_tree(flat)
    }

    pub fn persist(&self, file: &Path) -> Result<(), ConfigError> {
        std::fs::write(file, self.to_text())?;
        Ok(())
    }

    pub fn load(&self, file: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(file)?;
        self.load_str(&text)
    }

    /// Applies a config document atomically: either every entry is applied
    /// (declared paths set, unknown ones kept pending) or nothing changes.
    pub fn load_str(&self, text: &str) -> Result<(), ConfigError> {
        let entries = parse_tree(text)?;
        let mut st = self.state.lock().unwrap();
        for (path, value) in &entries {
            if let Some(p) = st.params.get(path) {
                let checked = value
                    .clone()
                    .coerce_to(&p.value)
                    .ok_or_else(|| ConfigError::TypeMismatch {
                        path: path.clone(),
                        expected: p.value.type_name(),
                        got: value.type_name(),
                    })?;
                if matches!(checked, ParamValue::Float(v) if !v.is_finite()) {
                    return Err(ConfigError::NonFinite(path.clone()));
                }
            } else if let Some(existing) = st.conflict_with(path) {
                return Err(ConfigError::PathConflict {
                    path: path.clone(),
                    existing,
                });
            }
        }
        for (path, value) in entries {
            if st.params.contains_key(&path) {
                st.apply(&path, value).expect("validated above");
            } else {
                st.pending.insert(path, value);
            }
        }
        Ok(())
    }
}

fn serialize_tree<'a>(flat: BTreeMap<&'a str, &'a ParamValue>) -> String {
    let mut root = toml::Table::new();
    for (path, value) in flat {
        let segs: Vec<&str> = path[1..].split('/').collect();
        let mut table = &mut root;
        for seg in &segs[..segs.len() - 1] {
            // declared paths never use a leaf as an interior node
            let entry = table
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = toml::Value::Table(toml::Table::new());
            }
            table = entry.as_table_mut().expect("ensured above");
        }
        table.insert(segs[segs.len() - 1].to_string(), value.to_toml());
    }
    toml::to_string(&root).expect("tables of scalars always serialize")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Flattens a config document into `(path, value)` pairs.
pub fn parse_tree(text: &str) -> Result<Vec<(String, ParamValue)>, ConfigError> {
    let root: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let mut out = Vec::new();
    fn walk(prefix: &str, t: &toml::Table, text: &str, out: &mut Vec<(String, ParamValue)>) -> Result<(), ConfigError> {
        for (k, v) in t {
            let path = format!("{prefix}/{k}");
            match v {
                toml::Value::Table(sub) => walk(&path, sub, text, out)?,
                other => {
                    let value = ParamValue::from_toml(other).ok_or_else(|| ConfigError::Parse {
                        line: text
                            .find(&format!("{k} ="))
                            .or_else(|| text.find(k.as_str()))
                            .map(|o| line_of(text, o))
                            .unwrap_or(0),
                        message: format!("unsupported value type at {path}"),
                    })?;
                    check_path(&path)?;
                    out.push((path, value));
                }
            }
        }
        Ok(())
    }
    walk("", &root, text, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Option<NumericRange> {
        Some(NumericRange::new(0.0, 1.0, 0.01))
    }

    #[test]
    fn declare_default_file_override_and_clamp() {
        let s = ConfigServer::new();
        assert_eq!(s.declare("/gait/maxVelX", 0.2, unit()).unwrap().f64(), 0.2);

        let s = ConfigServer::new();
        s.load_str("[gait]\nmaxVelX = 0.3\n").unwrap();
        assert_eq!(s.declare("/gait/maxVelX", 0.2, unit()).unwrap().f64(), 0.3);

        let s = ConfigServer::new();
        s.load_str("[gait]\nmaxVelX = 1.5\n").unwrap();
        assert_eq!(s.declare("/gait/maxVelX", 0.2, unit()).unwrap().f64(), 1.0);
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn redeclare_type_conflict() {
        let s = ConfigServer::new();
        s.declare("/a/x", 1.0, None).unwrap();
        assert!(s.declare("/a/x", 2.0, None).is_ok());
        assert!(matches!(
            s.declare("/a/x", true, None),
            Err(ConfigError::TypeConflict { .. })
        ));
        assert!(matches!(
            s.declare("/a", 1.0, None),
            Err(ConfigError::PathConflict { .. })
        ));
        assert!(matches!(
            s.declare("/a/x/y", 1.0, None),
            Err(ConfigError::PathConflict { .. })
        ));
        assert!(matches!(s.declare("bad", 1.0, None), Err(ConfigError::BadPath(_))));
    }

    #[test]
    fn set_get_notify_prefix() {
        let s = ConfigServer::new();
        let h = s.declare("/gait/maxVelX", 0.2, unit()).unwrap();
        s.declare("/vision/gain", 1i64, Some(NumericRange::new(0.0, 10.0, 1.0)))
            .unwrap();
        let gait = s.subscribe("/gait").unwrap();
        let vision = s.subscribe("/vision").unwrap();
        let gaitx = s.subscribe("/gai").unwrap();
        s.set("/gait/maxVelX", 0.4).unwrap();
        assert_eq!(s.get("/gait/maxVelX").unwrap(), ParamValue::Float(0.4));
        assert_eq!(h.f64(), 0.4);
        let n: Vec<_> = gait.try_iter().collect();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].revision, 1);
        assert_eq!(vision.try_iter().count(), 0);
        assert_eq!(gaitx.try_iter().count(), 0);
        // identical value still notifies
        s.set("/gait/maxVelX", 0.4).unwrap();
        assert_eq!(gait.try_iter().count(), 1);
        assert_eq!(s.revision(), 2);
        assert_eq!(s.set("/gait/maxVelX", 7.0).unwrap(), ParamValue::Float(1.0));
    }

    #[test]
    fn set_errors() {
        let s = ConfigServer::new();
        s.declare("/a/b", 1.0, None).unwrap();
        assert!(matches!(s.set("/a/c", 1.0), Err(ConfigError::NotFound(_))));
        assert!(matches!(s.set("/a/b", true), Err(ConfigError::TypeMismatch { .. })));
        assert!(matches!(s.set("/a/b", f64::NAN), Err(ConfigError::NonFinite(_))));
        assert_eq!(s.revision(), 0);
        // ints widen to floats
        s.set("/a/b", 3i64).unwrap();
        assert_eq!(s.get("/a/b").unwrap(), ParamValue::Float(3.0));
    }

    #[test]
    fn save_mutate_load_restores() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.toml");
        let s = ConfigServer::new();
        s.declare("/gait/maxVelX", 0.2, unit()).unwrap();
        s.declare("/gait/enabled", true, None).unwrap();
        s.declare("/name", "op", None).unwrap();
        s.set("/gait/maxVelX", 0.7).unwrap();
        s.persist(&file).unwrap();
        s.set("/gait/maxVelX", 0.1).unwrap();
        s.set("/gait/enabled", false).unwrap();
        s.set("/name", "x").unwrap();
        s.load(&file).unwrap();
        assert_eq!(s.get("/gait/maxVelX").unwrap(), ParamValue::Float(0.7));
        assert_eq!(s.get("/gait/enabled").unwrap(), ParamValue::Bool(true));
        assert_eq!(s.get("/name").unwrap(), ParamValue::Str("op".into()));
        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.contains("enabled = true"), "{text}");
    }

    #[test]
    fn pending_values_apply_at_declare() {
        let s = ConfigServer::new();
        s.load_str("[new]\nparam = 42\n").unwrap();
        assert_eq!(s.declare("/new/param", 1i64, None).unwrap().i64(), 42);
    }

    #[test]
    fn corrupt_file_leaves_tree_unchanged() {
        let s = ConfigServer::new();
        s.declare("/a/b", 1.0, None).unwrap();
        let err = s.load_str("[a]\nb = 2.0\nc = = 3\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
        assert_eq!(s.get("/a/b").unwrap(), ParamValue::Float(1.0));
        // a type error anywhere also aborts the whole load
        assert!(s.load_str("[a]\nb = true\n").is_err());
        assert_eq!(s.revision(), 0);
    }

    #[test]
    fn notification_completeness_many_subscribers() {
        let s = ConfigServer::new();
        s.declare("/g/a", 0.0, None).unwrap();
        s.declare("/g/b/c", 0i64, None).unwrap();
        let subs: Vec<_> = ["/", "/g", "/g/b", "/g/b/c"]
            .iter()
            .map(|p| s.subscribe(p).unwrap())
            .collect();
        for i in 0..10 {
            s.set("/g/b/c", i as i64).unwrap();
        }
        for sub in &subs {
            let revs: Vec<u64> = sub.try_iter().map(|c| c.revision).collect();
            assert_eq!(revs, (1..=10).collect::<Vec<_>>());
        }
    }

    fn arb_value() -> impl Strategy<Value = ParamValue> {
        prop_oneof![
            any::<bool>().prop_map(ParamValue::Bool),
            any::<i64>().prop_map(ParamValue::Int),
            (-1e12f64..1e12).prop_map(ParamValue::Float),
            any::<f64>()
                .prop_filter("finite", |v| v.is_finite())
                .prop_map(ParamValue::Float),
            "[ -~]{0,12}".prop_map(ParamValue::Str),
        ]
    }

    fn arb_tree() -> impl Strategy<Value = BTreeMap<String, ParamValue>> {
        proptest::collection::btree_map(
            proptest::collection::vec("[a-zA-Z][a-zA-Z0-9_]{0,6}", 1..4),
            arb_value(),
            1..20,
        )
        .prop_map(|m| {
            let mut out: BTreeMap<String, ParamValue> = BTreeMap::new();
            for (segs, v) in m {
                let path = format!("/{}", segs.join("/"));
                if !out.keys().any(|k| covers(k, &path) || covers(&path, k)) {
                    out.insert(path, v);
                }
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn persistence_roundtrip(tree in arb_tree()) {
            let s = ConfigServer::new();
            for (p, v) in &tree {
                s.declare(p, v.clone(), None).unwrap();
            }
            let text = s.to_text();
            let s2 = ConfigServer::new();
            s2.load_str(&text).unwrap();
            for (p, v) in &tree {
                let got = s2.declare(p, v.clone(), None).unwrap().value();
                match (v, &got) {
                    (ParamValue::Float(a), ParamValue::Float(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                    _ => prop_assert_eq!(v, &got),
                }
            }
            prop_assert_eq!(s2.to_text(), text);
        }
    }
}
