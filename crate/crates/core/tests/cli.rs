mod common;

use avsim::bridge::Frame;
use avsim::mapio::opendrive;
use serde_json::json;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn avsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avsim")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(name: &str) -> PathBuf {
    common::sim_dir().join(name)
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_prints_final_tick_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = avsim(&["run", p(&manifest("empty_run.json")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "tick 100 sim_time 1");
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!((m["tick"].clone(), m["seed"].clone()), (json!(100), json!(1)));
}

#[test]
fn run_flags_override_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = avsim(&["run", p(&manifest("empty_run.json")), "--ticks", "7", "--seed", "9", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "tick 7 sim_time 0.07");
}

#[test]
fn missing_map_is_an_error() {
    let o = avsim(&["run", "--map", "/nonexistent/map.json", "--ticks", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/map.json"));
    let o = avsim(&["run", "--ticks", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_manifest_field_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, r#"{"ticks": 10, "tiks": 3}"#).unwrap();
    let o = avsim(&["run", p(&m)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tiks"));
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let doc = json!({
        "map": manifest("intersection.json"),
        "scene": manifest("intersection_scene.json"),
        "ticks": 300,
        "assertions": {"min_ego_stops": 3}
    });
    std::fs::write(&m, doc.to_string()).unwrap();
    let o = avsim(&["run", p(&m)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("min_ego_stops"));
}

#[test]
fn reruns_write_identical_metrics() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = avsim(&["run", p(&manifest("intersection_run.json")), "--ticks", "1500", "--out", p(dir.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join("metrics.json")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn map_convert_between_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.xodr");
    let osm = common::testdata().join("lanelet2_osm_map_format_import_export/intersection.osm");
    let o = avsim(&["map", "convert", p(&osm), p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("lanelet2 -> opendrive: 20 lanes, 4 signals"));
    let (m, _) = opendrive::import_opendrive(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(m.lanes.len(), 20);

    let o = avsim(&["map", "convert", p(&osm), p(&dir.path().join("x.xyz"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("x.xyz").exists());
}

#[test]
fn collect_kitti_writes_numbered_frames() {
    let collect = |frames: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = avsim(&[
            "collect-kitti",
            p(&manifest("intersection_run.json")),
            "--frames",
            frames,
            "--out",
            p(dir.path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (tree(dir.path()), dir)
    };
    let (a, dir) = collect("10");
    let labels: Vec<&str> = a.iter().filter(|(n, _)| n.starts_with("label_2")).map(|(n, _)| n.as_str()).collect();
    let expected: Vec<String> = (0..10).map(|i| format!("label_2/{i:06}.txt")).collect();
    assert_eq!(labels, expected);
    assert_eq!(a.len(), 50);
    assert!(dir.path().join("velodyne/000009.pcd").is_file());
    let (b, _) = collect("10");
    assert!(a == b, "datasets differ between runs");
    let (none, _) = collect("0");
    assert!(none.is_empty());
}

#[test]
fn serve_answers_over_websocket() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_avsim"))
        .args(["serve", p(&manifest("intersection_run.json")), "--port", &port.to_string()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    while !line.contains("bridge listening") {
        line.clear();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited");
    }
    let stream = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
    let (mut ws, _) = tungstenite::client(format!("ws://127.0.0.1:{port}/"), stream).unwrap();
    let call = Frame::Call { id: 1, method: "sim/step".into(), params: json!({"ticks": 25}) };
    ws.send(tungstenite::Message::Text(call.encode().into())).unwrap();
    let reply = loop {
        if let tungstenite::Message::Text(t) = ws.read().unwrap() {
            break Frame::decode(t.as_str()).unwrap();
        }
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(reply, Frame::Result { id: 1, result: json!({"tick": 25, "sim_time": 0.25}) });
}
