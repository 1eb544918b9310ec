//! WebSocket gateway exposing the bus, the config server and the plot store
//! to remote clients as JSON text frames. See `docs/gateway_protocol.md`.

use super::plot::{PlotStore, TopicHistory};
use crate::config::{ConfigChange, ConfigServer, ParamValue};
use crate::messages::Message;
use crate::msgbus::{Bus, Subscription};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use tungstenite::{Message as WsMessage, WebSocket};

pub const PROTOCOL: &str = "humanoid-gateway";
pub const PROTOCOL_VERSION: u32 = 1;
const POLL: Duration = Duration::from_millis(5);
const SUB_QUEUE: usize = 4;
const MAX_RATE: f64 = 200.0;

/// Client → server frame.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Request {
    pub op: String,
    #[serde(default)]
    pub id: Option<Value>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub payload: Value,
}

/// Server → client frame (acks, errors and pushes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub payload: Value,
}

impl Frame {
    fn ack(id: Option<Value>, payload: Value) -> Self {
        Self {
            op: "ack".into(),
            id,
            path: None,
            payload,
        }
    }

    fn error(id: Option<Value>, message: impl Into<String>) -> Self {
        Self {
            op: "error".into(),
            id,
            path: None,
            payload: json!({ "message": message.into() }),
        }
    }

    fn push(op: &str, path: &str, payload: Value) -> Self {
        Self {
            op: op.into(),
            id: None,
            path: Some(path.to_string()),
            payload,
        }
    }
}

/// What the gateway can reach.
#[derive(Clone)]
pub struct GatewayContext {
    pub bus: Bus,
    pub config: ConfigServer,
    pub plots: Arc<PlotStore>,
    pub history: Arc<TopicHistory>,
    pub service_deadline: Duration,
}

impl GatewayContext {
    pub fn new(bus: Bus, config: ConfigServer, plots: Arc<PlotStore>, history: Arc<TopicHistory>) -> Self {
        Self {
            bus,
            config,
            plots,
            history,
            service_deadline: Duration::from_secs(2),
        }
    }
}

/// Running gateway. Dropping it stops the server and joins every thread.
pub struct Gateway {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    clients: Arc<AtomicUsize>,
    accept: Option<JoinHandle<()>>,
}

impl Gateway {
    /// Binds `addr` ("127.0.0.1:0" picks a free port).
    pub fn serve(addr: &str, ctx: GatewayContext) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let clients = Arc::new(AtomicUsize::new(0));
        let (s, c) = (stop.clone(), clients.clone());
        let accept = std::thread::Builder::new()
            .name("gateway-accept".into())
            .spawn(move || accept_loop(listener, ctx, s, c))?;
        log::info!("gateway listening on ws://{addr}");
        Ok(Self {
            addr,
            stop,
            clients,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    pub fn client_count(&self) -> usize {
        self.clients.load(Ordering::Relaxed)
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, ctx: GatewayContext, stop: Arc<AtomicBool>, clients: Arc<AtomicUsize>) {
    let mut handles: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (ctx, stop, clients) = (ctx.clone(), stop.clone(), clients.clone());
                let h = std::thread::Builder::new()
                    .name(format!("gateway-{peer}"))
                    .spawn(move || {
                        clients.fetch_add(1, Ordering::Relaxed);
                        if let Err(e) = serve_client(stream, ctx, &stop) {
                            log::debug!("gateway client {peer}: {e}");
                        }
                        clients.fetch_sub(1, Ordering::Relaxed);
                    });
                match h {
                    Ok(h) => handles.push(h),
                    Err(e) => log::warn!("gateway: cannot spawn client thread: {e}"),
                }
                handles.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::warn!("gateway accept: {e}");
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    }
    for h in handles {
        let _ = h.join();
    }
}

struct TopicStream {
    sub: Subscription,
    period: Duration,
    last: Option<Instant>,
}

struct PlotStream {
    period: Duration,
    last: Option<Instant>,
    since: f64,
}

/// Per-connection state.
pub struct Session {
    ctx: GatewayContext,
    topics: BTreeMap<String, TopicStream>,
    plots: BTreeMap<String, PlotStream>,
    config_rx: Option<Receiver<ConfigChange>>,
    cursor: Option<f64>,
}

fn period(payload: &Value, default_rate: f64) -> Result<Duration, String> {
    let rate = match payload.get("rate") {
        None | Some(Value::Null) => default_rate,
        Some(v) => v.as_f64().ok_or("rate must be a number")?,
    };
    if !(rate > 0.0) {
        return Err("rate must be positive".into());
    }
    Ok(Duration::from_secs_f64(1.0 / rate.min(MAX_RATE)))
}

fn due(last: Option<Instant>, period: Duration, now: Instant) -> bool {
    last.is_none_or(|l| now.duration_since(l) >= period)
}

impl Session {
    pub fn new(ctx: GatewayContext) -> Self {
        let config_rx = ctx.config.subscribe("/").ok();
        Self {
            ctx,
            topics: BTreeMap::new(),
            plots: BTreeMap::new(),
            config_rx,
            cursor: None,
        }
    }

    pub fn cursor(&self) -> Option<f64> {
        self.cursor
    }

    /// Handles one text frame and returns the reply.
    pub fn handle_text(&mut self, text: &str) -> Frame {
        let req: Request = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<Value>(text)
                    .ok()
                    .and_then(|v| v.get("id").cloned());
                return Frame::error(id, format!("malformed frame: {e}"));
            }
        };
        let id = req.id.clone();
        match self.handle(req) {
            Ok(payload) => Frame::ack(id, payload),
            Err(e) => Frame::error(id, e),
        }
    }

    fn path(req: &Request) -> Result<&str, String> {
        req.path.as_deref().ok_or_else(|| format!("`{}` needs a path", req.op))
    }

    fn handle(&mut self, req: Request) -> Result<Value, String> {
        let ctx = &self.ctx;
        match req.op.as_str() {
            "hello" => Ok(json!({ "protocol": PROTOCOL, "version": PROTOCOL_VERSION })),
            "topics" => Ok(json!(ctx
                .bus
                .topics()
                .into_iter()
                .map(|(t, s)| json!({ "topic": t, "schema": s }))
                .collect::<Vec<_>>())),
            "subscribe" => {
                let topic = Self::path(&req)?;
                let schema = ctx
                    .bus
                    .topic_schema(topic)
                    .ok_or_else(|| format!("unknown topic `{topic}`"))?;
                let period = period(&req.payload, 10.0)?;
                let sub = ctx.bus.subscribe(topic, schema, SUB_QUEUE).map_err(|e| e.to_string())?;
                self.topics.insert(
                    topic.to_string(),
                    TopicStream {
                        sub,
                        period,
                        last: None,
                    },
                );
                Ok(json!({ "topic": topic, "schema": schema }))
            }
            "unsubscribe" => {
                let topic = Self::path(&req)?;
                self.topics
                    .remove(topic)
                    .map(|_| Value::Null)
                    .ok_or_else(|| format!("not subscribed to `{topic}`"))
            }
            "config.list" => serde_json::to_value(ctx.config.list()).map_err(|e| e.to_string()),
            "config.get" => {
                let p = Self::path(&req)?;
                let v = ctx.config.get(p).map_err(|e| e.to_string())?;
                Ok(json!({ "value": v }))
            }
            "config.set" => {
                let p = Self::path(&req)?;
                let raw = req.payload.get("value").cloned().unwrap_or(req.payload.clone());
                let v: ParamValue = serde_json::from_value(raw).map_err(|e| format!("bad value: {e}"))?;
                let stored = ctx.config.set(p, v).map_err(|e| e.to_string())?;
                Ok(json!({ "value": stored }))
            }
            "config.save" | "config.load" => {
                let file = req
                    .payload
                    .get("file")
                    .and_then(Value::as_str)
                    .ok_or_else(|| format!("{} needs payload.file", req.op))?;
                let file = std::path::Path::new(file);
                if req.op == "config.save" {
                    ctx.config.persist(file).map_err(|e| e.to_string())?;
                } else {
                    ctx.config.load(file).map_err(|e| e.to_string())?;
                }
                Ok(json!({ "file": file, "revision": ctx.config.revision() }))
            }
            "plot.list" => {
                let p = req.path.as_deref().unwrap_or("/");
                if req.payload.get("all").and_then(Value::as_bool) == Some(true) {
                    Ok(json!(ctx.plots.paths()))
                } else {
                    Ok(json!(ctx.plots.children(p)))
                }
            }
            "plot.fetch" => {
                let p = Self::path(&req)?;
                let f = |k: &str| req.payload.get(k).and_then(Value::as_f64);
                if let (Some(from), Some(to)) = (f("from"), f("to")) {
                    let s = ctx.plots.range(p, from, to).map_err(|e| e.to_string())?;
                    return Ok(json!(s));
                }
                match f("t").or(self.cursor) {
                    Some(t) => {
                        let (ts, v) = ctx.plots.at(p, t).map_err(|e| e.to_string())?;
                        Ok(json!([[ts, v]]))
                    }
                    None => {
                        let s = ctx
                            .plots
                            .snapshot(p)
                            .ok_or_else(|| format!("unknown plot path `{p}`"))?;
                        Ok(json!(s.samples().collect::<Vec<_>>()))
                    }
                }
            }
            "plot.stream" => {
                let p = Self::path(&req)?;
                let snap = ctx
                    .plots
                    .snapshot(p)
                    .ok_or_else(|| format!("unknown plot path `{p}`"))?;
                let since = snap.samples().last().map_or(f64::NEG_INFINITY, |s| s.0);
                let period = period(&req.payload, 20.0)?;
                self.plots.insert(
                    p.to_string(),
                    PlotStream {
                        period,
                        last: None,
                        since,
                    },
                );
                Ok(Value::Null)
            }
            "plot.unstream" => {
                let p = Self::path(&req)?;
                self.plots
                    .remove(p)
                    .map(|_| Value::Null)
                    .ok_or_else(|| format!("not streaming `{p}`"))
            }
            "timewarp.set" => {
                let t = req.payload.get("t").unwrap_or(&req.payload);
                self.cursor = match t {
                    Value::Null => None,
                    v => Some(
                        v.as_f64()
                            .filter(|t| t.is_finite())
                            .ok_or("cursor must be a number or null")?,
                    ),
                };
                Ok(json!({ "t": self.cursor }))
            }
            "state.get" => {
                let topic = Self::path(&req)?;
                let m = ctx.history.at(topic, self.cursor).map_err(|e| e.to_string())?;
                Ok(json!({ "stamp": m.stamp, "message": m.payload }))
            }
            "bag.save" => {
                let file = req
                    .payload
                    .get("file")
                    .and_then(Value::as_str)
                    .ok_or("bag.save needs payload.file")?;
                let f = |k: &str| req.payload.get(k).and_then(Value::as_f64);
                let paths: Vec<String> = req
                    .payload
                    .get("paths")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                    .unwrap_or_default();
                let bag = super::bag::Bag::from_plots(
                    &ctx.plots,
                    &paths,
                    f("from").unwrap_or(f64::NEG_INFINITY),
                    f("to").or(self.cursor).unwrap_or(f64::INFINITY),
                );
                bag.save(std::path::Path::new(file)).map_err(|e| e.to_string())?;
                Ok(json!({ "file": file, "records": bag.records.len() }))
            }
            "call" => {
                let service = Self::path(&req)?;
                let msg: Message = if req.payload.is_null() {
                    Message::Empty
                } else {
                    serde_json::from_value(req.payload.clone()).map_err(|e| format!("bad request message: {e}"))?
                };
                let resp = ctx
                    .bus
                    .call(service, msg, ctx.service_deadline)
                    .map_err(|e| e.to_string())?;
                serde_json::to_value(resp).map_err(|e| e.to_string())
            }
            other => Err(format!("unknown op `{other}`")),
        }
    }

    /// Frames due for pushing at `now`.
    pub fn pending_pushes(&mut self, now: Instant) -> Vec<Frame> {
        let mut out = Vec::new();
        if let Some(rx) = &self.config_rx {
            while let Ok(c) = rx.try_recv() {
                out.push(Frame::push(
                    "config.changed",
                    &c.path,
                    json!({ "value": c.value, "revision": c.revision }),
                ));
            }
        }
        for (topic, s) in &mut self.topics {
            if !due(s.last, s.period, now) {
                continue;
            }
            if let Some(m) = s.sub.latest() {
                s.last = Some(now);
                out.push(Frame::push(
                    "push",
                    topic,
                    json!({ "stamp": m.stamp, "message": m.payload }),
                ));
            }
        }
        for (path, s) in &mut self.plots {
            if !due(s.last, s.period, now) {
                continue;
            }
            let Some(snap) = self.ctx.plots.snapshot(path) else {
                continue;
            };
            let fresh: Vec<(f64, f64)> = snap.samples().filter(|x| x.0 > s.since).collect();
            if let Some(&(t, _)) = fresh.last() {
                s.since = t;
                s.last = Some(now);
                out.push(Frame::push("plot.samples", path, json!(fresh)));
            }
        }
        out
    }
}

/// Blocking client for scripts and tests.
pub struct Client {
    ws: WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>,
    next_id: u64,
    /// push frames received while waiting for replies
    pub pushes: Vec<Frame>,
}

impl Client {
    pub fn connect(url: &str) -> Result<Self, tungstenite::Error> {
        let (ws, _) = tungstenite::connect(url)?;
        if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(5)))?;
        }
        Ok(Self {
            ws,
            next_id: 1,
            pushes: Vec::new(),
        })
    }

    pub fn send_text(&mut self, text: &str) -> Result<(), tungstenite::Error> {
        self.ws.send(WsMessage::text(text.to_string()))
    }

    /// Next frame from the server.
    pub fn read_frame(&mut self) -> Result<Frame, tungstenite::Error> {
        loop {
            if let WsMessage::Text(t) = self.ws.read()? {
                return serde_json::from_str(t.as_str())
                    .map_err(|e| tungstenite::Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)));
            }
        }
    }

    /// Sends a request and waits for its ack or error, stashing pushes.
    pub fn request(&mut self, op: &str, path: Option<&str>, payload: Value) -> Result<Frame, tungstenite::Error> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request {
            op: op.into(),
            id: Some(json!(id)),
            path: path.map(String::from),
            payload,
        };
        self.send_text(&serde_json::to_string(&req).expect("requests serialize"))?;
        loop {
            let f = self.read_frame()?;
            if f.id == Some(json!(id)) {
                return Ok(f);
            }
            self.pushes.push(f);
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

fn send(ws: &mut WebSocket<TcpStream>, f: &Frame) -> Result<(), tungstenite::Error> {
    let text = serde_json::to_string(f).expect("frames serialize");
    match ws.send(WsMessage::text(text)) {
        Err(e) if is_timeout(&e) => Ok(()),
        r => r,
    }
}

fn serve_client(stream: TcpStream, ctx: GatewayContext, stop: &AtomicBool) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    ws.get_ref().set_write_timeout(Some(Duration::from_millis(200)))?;
    let mut session = Session::new(ctx);
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(WsMessage::Text(t)) => {
                let reply = session.handle_text(t.as_str());
                send(&mut ws, &reply)?;
            }
            Ok(WsMessage::Binary(_)) => send(&mut ws, &Frame::error(None, "binary frames are not supported"))?,
            Ok(WsMessage::Close(_)) => break,
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        }
        for f in session.pending_pushes(Instant::now()) {
            send(&mut ws, &f)?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> GatewayContext {
        GatewayContext::new(
            Bus::new(),
            ConfigServer::new(),
            Arc::new(PlotStore::new(100)),
            Arc::new(TopicHistory::new(100)),
        )
    }

    #[test]
    fn malformed_and_unknown() {
        let mut s = Session::new(ctx());
        let f = s.handle_text("{nope");
        assert_eq!(f.op, "error");
        let f = s.handle_text(r#"{"op":"frobnicate","id":7}"#);
        assert_eq!((f.op.as_str(), f.id), ("error", Some(json!(7))));
        assert_eq!(s.handle_text(r#"{"op":"hello","id":1}"#).op, "ack");
    }

    #[test]
    fn config_set_clamps_and_pushes() {
        let c = ctx();
        c.config.float("/gait/max_vx", 0.2, 0.0, 1.0).unwrap();
        let mut a = Session::new(c.clone());
        let mut b = Session::new(c);
        let f = a.handle_text(r#"{"op":"config.set","id":1,"path":"/gait/max_vx","payload":{"value":3.0}}"#);
        assert_eq!(f.payload["value"], json!(1.0));
        let pushes = b.pending_pushes(Instant::now());
        assert_eq!(pushes.len(), 1);
        assert_eq!(pushes[0].op, "config.changed");
        assert_eq!(pushes[0].payload["value"], json!(1.0));
    }

    #[test]
    fn timewarp_cursor_routes_plot_queries() {
        let c = ctx();
        for t in 1..=3 {
            c.plots.record("/p", t as f64, t as f64 * 2.0).unwrap();
        }
        let mut s = Session::new(c);
        s.handle_text(r#"{"op":"timewarp.set","payload":{"t":2.5}}"#);
        let f = s.handle_text(r#"{"op":"plot.fetch","path":"/p"}"#);
        assert_eq!(f.payload, json!([[2.0, 4.0]]));
        s.handle_text(r#"{"op":"timewarp.set","payload":{"t":1.0}}"#);
        let f = s.handle_text(r#"{"op":"plot.fetch","path":"/p"}"#);
        assert_eq!(f.payload, json!([[1.0, 2.0]]));
    }
}
