//! WebSocket test client and bridge conformance scenarios.

use avsim::bridge::{BridgeServer, Frame};
use avsim::sim::{load_map_file, ScenarioSource, Simulator, METHODS};
use avsim::world::scene::SceneDescriptor;
use avsim::world::snapshot;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};
use tungstenite::{Message, WebSocket};

pub const TIMEOUT: Duration = Duration::from_secs(20);

pub fn scenario(seed: u64) -> Simulator {
    let map = load_map_file(&super::sim_dir().join("intersection.json")).unwrap();
    let scene = SceneDescriptor::parse(&super::read(super::sim_dir().join("intersection_scene.json"))).unwrap();
    let sensors: Value = serde_json::from_slice(&super::read(super::sim_dir().join("sensors.json"))).unwrap();
    let mut sim = Simulator::new(ScenarioSource { map, scene, sensors: Some(sensors) }, seed).unwrap();
    sim.default_pace = 0.0;
    sim
}

pub struct Client {
    pub ws: WebSocket<TcpStream>,
    /// Frames read while waiting for something else.
    pub backlog: Vec<(Frame, Option<Vec<u8>>)>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
        let (ws, _) = tungstenite::client(format!("ws://{addr}/"), stream).unwrap();
        Self { ws, backlog: Vec::new() }
    }

    pub fn send(&mut self, f: &Frame) {
        self.send_text(&f.encode());
    }

    pub fn send_text(&mut self, text: &str) {
        self.ws.send(Message::Text(text.into())).unwrap();
    }

    pub fn read_message(&mut self, deadline: Instant) -> Option<Message> {
        loop {
            match self.ws.read() {
                Ok(Message::Ping(_) | Message::Pong(_)) => {}
                Ok(m) => return Some(m),
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    if Instant::now() > deadline {
                        return None;
                    }
                }
                Err(e) => panic!("read failed: {e}"),
            }
        }
    }

    /// Next frame with its attachment, or `None` once `wait` passes in silence.
    pub fn next(&mut self, wait: Duration) -> Option<(Frame, Option<Vec<u8>>)> {
        let deadline = Instant::now() + wait;
        let text = match self.read_message(deadline)? {
            Message::Text(t) => t.to_string(),
            other => panic!("expected a text frame, got {other:?}"),
        };
        let frame = Frame::decode(&text).unwrap();
        let binary = match &frame {
            Frame::Publish { attachment: Some(n), .. } => match self.read_message(Instant::now() + TIMEOUT) {
                Some(Message::Binary(b)) => {
                    assert_eq!(b.len(), *n);
                    Some(b.to_vec())
                }
                other => panic!("expected a binary attachment, got {other:?}"),
            },
            _ => None,
        };
        Some((frame, binary))
    }

    pub fn wait_for(&mut self, mut pred: impl FnMut(&Frame) -> bool) -> (Frame, Option<Vec<u8>>) {
        if let Some(i) = self.backlog.iter().position(|(f, _)| pred(f)) {
            return self.backlog.remove(i);
        }
        let deadline = Instant::now() + TIMEOUT;
        while Instant::now() < deadline {
            if let Some(m) = self.next(Duration::from_millis(200)) {
                if pred(&m.0) {
                    return m;
                }
                self.backlog.push(m);
            }
        }
        panic!("timed out; backlog {:?}", self.backlog.iter().map(|b| &b.0).collect::<Vec<_>>());
    }

    pub fn call(&mut self, id: u64, method: &str, params: Value) -> Frame {
        self.send(&Frame::Call { id, method: method.into(), params });
        self.wait_for(|f| matches!(f, Frame::Result { id: i, .. } | Frame::Error { id: Some(i), .. } if *i == id)).0
    }

    pub fn ok(&mut self, id: u64, method: &str, params: Value) -> Value {
        match self.call(id, method, params) {
            Frame::Result { result, .. } => result,
            other => panic!("{method}: {other:?}"),
        }
    }

    /// Everything that arrives within `quiet` of silence.
    pub fn drain(&mut self, quiet: Duration) -> Vec<(Frame, Option<Vec<u8>>)> {
        let mut out = std::mem::take(&mut self.backlog);
        while let Some(m) = self.next(quiet) {
            out.push(m);
        }
        out
    }
}

/// A simulator served on a background thread behind a real socket.
pub struct Served {
    server: BridgeServer,
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<Simulator>>,
}

impl Served {
    pub fn start(mut sim: Simulator) -> Self {
        let server = BridgeServer::bind("127.0.0.1:0", sim.hub.clone()).unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            sim.serve_until(|_| flag.load(Ordering::Relaxed));
            sim
        });
        Self { server, stop, handle: Some(handle) }
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    pub fn finish(mut self) -> Simulator {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.take().unwrap().join().unwrap()
    }
}

pub fn wait_until(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + TIMEOUT;
    while !cond() {
        assert!(Instant::now() < deadline, "condition not reached");
        thread::sleep(Duration::from_millis(2));
    }
}

/// Calls every scenario-API method once over a socket and checks each call
/// gets exactly one response.
pub fn check_every_method() {
    let served = Served::start(Simulator::empty(1));
    let mut c = Client::connect(served.addr());
    let dir = tempfile::tempdir().unwrap();
    let sensors: Value = serde_json::from_slice(&super::read(super::sim_dir().join("sensors.json"))).unwrap();
    let mut id = 0;
    let mut next = || {
        id += 1;
        id
    };
    let mut called = BTreeSet::new();
    let mut ok = |c: &mut Client, method: &'static str, params: Value| {
        called.insert(method);
        c.ok(next(), method, params)
    };

    let r = ok(&mut c, "sim/load_scene", json!({
        "map_path": super::sim_dir().join("intersection.json"),
        "scene_path": super::sim_dir().join("intersection_scene.json"),
        "sensors": sensors,
        "seed": 3,
    }));
    assert_eq!(r["agents"], 9);
    assert_eq!(ok(&mut c, "sim/step", json!({"ticks": 10})), json!({"tick": 10, "sim_time": 0.1}));
    assert_eq!(ok(&mut c, "sim/run", json!({"seconds": 0.1, "pace": 0})), json!({"tick": 20, "sim_time": 0.2}));
    let snap = ok(&mut c, "sim/snapshot", json!({}));
    assert_eq!(snap["tick"], 20);
    ok(&mut c, "sim/step", json!({"ticks": 5}));
    assert_eq!(ok(&mut c, "sim/restore", json!({"data": snap["data"]}))["tick"], 20);
    assert_eq!(ok(&mut c, "sim/snapshot", json!({}))["digest"], snap["digest"]);
    assert_eq!(ok(&mut c, "sim/reset", json!({"seed": 4})), json!({"tick": 0, "seed": 4}));
    assert_eq!(ok(&mut c, "env/set", json!({"rain": 0.5}))["rain"], 0.5);
    let ped = ok(&mut c, "agent/spawn", json!({"kind": "pedestrian", "pose": {"x": 30.0, "y": 30.0}}))["id"].clone();
    ok(&mut c, "agent/follow_waypoints", json!({"id": ped, "waypoints": [[30.0, 40.0, 0.0], [40.0, 40.0, 0.0]], "speed": 1.0}));
    ok(&mut c, "agent/set_npc_params", json!({"id": 2, "target_speed": 4.0}));
    assert_eq!(ok(&mut c, "light/override", json!({"signal": "sig_s", "phase": "yellow"}))["phase"], "yellow");
    let lights = ok(&mut c, "query/lights", json!({}));
    assert_eq!(lights["sig_s"], json!({"phase": "yellow", "overridden": true}));
    ok(&mut c, "light/clear_override", json!({"signal": "sig_s"}));
    let agents = ok(&mut c, "query/agents", json!({}));
    assert!(agents.as_array().unwrap().iter().any(|a| a["id"] == ped));
    ok(&mut c, "agent/remove", json!({"id": ped}));
    assert!(ok(&mut c, "query/collisions", json!({})).is_array());
    assert_eq!(ok(&mut c, "query/map", json!({}))["lanes"].as_array().map(|l| l.len()), Some(20));
    assert_eq!(ok(&mut c, "query/metrics", json!({}))["seed"], 4);
    let out = dir.path().join("kitti");
    assert_eq!(ok(&mut c, "data/collect_kitti", json!({"out": out, "frames": 2}))["frames"], 2);
    assert!(out.join("label_2/000001.txt").is_file());

    let covered: BTreeSet<&str> = called.into_iter().collect();
    assert_eq!(covered, METHODS.iter().copied().collect::<BTreeSet<_>>());

    // Failures are answered too, each with its own code.
    let failures = [
        ("sim/teleport", json!({}), "unknown_method"),
        ("sim/step", json!({"ticks": -1}), "invalid_params"),
        ("agent/remove", json!({"id": 999}), "unknown_agent"),
        ("light/override", json!({"signal": "nope", "phase": "red"}), "unknown_signal"),
        ("sim/restore", json!({"data": "AAAA"}), "snapshot_corrupt"),
    ];
    for (method, params, code) in failures {
        let i = next();
        match c.call(i, method, params) {
            Frame::Error { id: Some(e), code: got, .. } => assert_eq!((e, got.as_str()), (i, code), "{method}"),
            other => panic!("{method}: {other:?}"),
        }
    }

    // Nothing answered twice, nothing unanswered.
    let rest = c.drain(Duration::from_millis(300));
    let mut per_id: BTreeMap<u64, usize> = BTreeMap::new();
    for (f, _) in &rest {
        if let Frame::Result { id, .. } | Frame::Error { id: Some(id), .. } = f {
            *per_id.entry(*id).or_default() += 1;
        }
    }
    assert!(per_id.is_empty(), "duplicate responses {per_id:?}");
    served.finish();
}

/// Sends and receives every frame type over real sockets.
pub fn check_every_frame_type() {
    let served = Served::start(scenario(5));
    let mut a = Client::connect(served.addr());
    let mut b = Client::connect(served.addr());

    // subscribe + publish with attachment
    a.send(&Frame::Subscribe { topic: "/lidar".into() });
    a.send(&Frame::Subscribe { topic: "/gps".into() });
    a.send(&Frame::Subscribe { topic: "/events".into() });
    a.ok(1, "sim/step", json!({"ticks": 10}));
    let (lidar, bin) = a.wait_for(|f| matches!(f, Frame::Publish { topic, .. } if topic == "/lidar"));
    let Frame::Publish { payload, attachment, .. } = lidar else { unreachable!() };
    assert_eq!(attachment, bin.as_ref().map(|b| b.len()));
    assert_eq!(payload["tick"], 10);
    let (gps, bin) = a.wait_for(|f| matches!(f, Frame::Publish { topic, .. } if topic == "/gps"));
    assert!(bin.is_none());
    let Frame::Publish { payload, .. } = gps else { unreachable!() };
    assert!(payload["lat"].as_f64().unwrap() > 37.0);

    // unsubscribe stops delivery
    a.send(&Frame::Unsubscribe { topic: "/lidar".into() });
    a.ok(2, "sim/step", json!({"ticks": 10}));
    let later = a.drain(Duration::from_millis(200));
    assert!(!later.iter().any(|(f, _)| matches!(f, Frame::Publish { topic, payload, .. } if topic == "/lidar" && payload["tick"] == 20)));

    // client publish on a non-chassis topic is relayed to other subscribers only
    a.send(&Frame::Subscribe { topic: "/notes".into() });
    b.send(&Frame::Subscribe { topic: "/notes".into() });
    b.ok(3, "query/lights", json!({}));
    b.send(&Frame::Publish { topic: "/notes".into(), payload: json!({"hello": 1}), attachment: None });
    let (note, _) = a.wait_for(|f| matches!(f, Frame::Publish { topic, .. } if topic == "/notes"));
    assert_eq!(note, Frame::Publish { topic: "/notes".into(), payload: json!({"hello": 1}), attachment: None });
    assert!(!b.drain(Duration::from_millis(200)).iter().any(|(f, _)| matches!(f, Frame::Publish { .. })));

    // chassis publish drives the ego
    let before = a.ok(4, "query/agents", json!({}))[0]["speed"].as_f64().unwrap();
    b.send(&Frame::Publish { topic: "/chassis".into(), payload: json!({"throttle": 1.0}), attachment: None });
    b.ok(5, "query/lights", json!({}));
    a.ok(6, "sim/step", json!({"ticks": 1}));
    let after = a.ok(7, "query/agents", json!({}))[0]["speed"].as_f64().unwrap();
    assert!(after > before);

    // events: spawning onto the ego produces a collision
    let ego = a.ok(8, "query/agents", json!({}))[0].clone();
    a.ok(9, "agent/spawn", json!({"kind": "pedestrian", "pose": {"x": ego["x"], "y": ego["y"]}}));
    a.ok(10, "sim/step", json!({"ticks": 1}));
    let (ev, _) = a.wait_for(|f| matches!(f, Frame::Event { .. }));
    assert!(matches!(ev, Frame::Event { name, .. } if name == "collision"));

    // malformed input, binary input and server-only frames are errors
    b.send_text("{not json");
    let (e, _) = b.wait_for(|f| matches!(f, Frame::Error { .. }));
    assert!(matches!(e, Frame::Error { id: None, code, .. } if code == "bad_frame"));
    b.ws.send(Message::Binary(vec![1u8, 2, 3].into())).unwrap();
    let (e, _) = b.wait_for(|f| matches!(f, Frame::Error { .. }));
    assert!(matches!(e, Frame::Error { code, .. } if code == "bad_frame"));
    b.send(&Frame::Result { id: 77, result: json!(1) });
    let (e, _) = b.wait_for(|f| matches!(f, Frame::Error { .. }));
    assert!(matches!(e, Frame::Error { id: Some(77), code, .. } if code == "bad_frame"));
    b.send(&Frame::Event { name: "x".into(), payload: Value::Null });
    let (e, _) = b.wait_for(|f| matches!(f, Frame::Error { .. }));
    assert!(matches!(e, Frame::Error { id: None, code, .. } if code == "bad_frame"));
    served.finish();
}

/// Frames from several connections apply in `(connection, sequence)` order
/// regardless of arrival order.
pub fn check_inbound_order() {
    let mut sim = Simulator::empty(1);
    let server = BridgeServer::bind("127.0.0.1:0", sim.hub.clone()).unwrap();
    let mut first = Client::connect(server.local_addr());
    wait_until(|| sim.hub.connections().len() == 1);
    let mut second = Client::connect(server.local_addr());
    wait_until(|| sim.hub.connections().len() == 2);
    let (c1, c2) = (sim.hub.connections()[0], sim.hub.connections()[1]);
    assert!(c1 < c2);

    // The later connection sends first; arrival order must not matter.
    let spawn = |k: u64| Frame::Call {
        id: k,
        method: "agent/spawn".into(),
        params: json!({"kind": "pedestrian", "pose": {"x": k as f64 * 10.0, "y": 0.0}}),
    };
    for k in 0..3 {
        second.send(&spawn(200 + k));
    }
    wait_until(|| sim.hub.pending() == 3);
    for k in 0..3 {
        first.send(&spawn(100 + k));
    }
    wait_until(|| sim.hub.pending() == 6);
    assert_eq!(sim.poll(), 6);

    let ids = |c: &mut Client, base: u64| -> Vec<u64> {
        (0..3)
            .map(|k| match c.wait_for(|f| matches!(f, Frame::Result { id, .. } if *id == base + k)).0 {
                Frame::Result { result, .. } => result["id"].as_u64().unwrap(),
                _ => unreachable!(),
            })
            .collect()
    };
    let (a, b) = (ids(&mut first, 100), ids(&mut second, 200));
    // Agent ids are handed out in processing order.
    assert_eq!([a, b].concat(), (1..=6).collect::<Vec<u64>>());
}

/// The world evolves identically with 0, 1 or 3 subscribers attached.
pub fn check_subscriber_independence() {
    let reference = {
        let mut sim = scenario(9);
        sim.advance(300, 0.0);
        snapshot(&sim.world)
    };
    let topics = ["/lidar", "/depth", "/semantic", "/gps", "/imu", "/radar", "/ground_truth", "/stop_count", "/events"];
    for subscribers in [1usize, 3] {
        let mut sim = scenario(9);
        let server = BridgeServer::bind("127.0.0.1:0", sim.hub.clone()).unwrap();
        let mut clients: Vec<Client> = (0..subscribers).map(|_| Client::connect(server.local_addr())).collect();
        for c in &mut clients {
            for t in topics {
                c.send(&Frame::Subscribe { topic: t.into() });
            }
            c.send(&Frame::Publish { topic: "/chatter".into(), payload: json!(1), attachment: None });
        }
        wait_until(|| topics.iter().all(|t| sim.hub.subscriber_count(t) == subscribers) && sim.hub.pending() == subscribers);
        sim.advance(300, 0.0);
        assert_eq!(snapshot(&sim.world), reference, "{subscribers} subscribers");
        let got = clients[0].drain(Duration::from_millis(100));
        assert!(got.iter().any(|(f, _)| matches!(f, Frame::Publish { topic, .. } if topic == "/lidar")));
    }
}
