//! OpenDRIVE 1.4 subset.
//!
//! Import understands `planView` geometries `line` and `arc`, `laneOffset`,
//! lane sections with polynomial widths, lane/road/junction linkage and
//! `signal`/`signalReference` for stop signs, yield signs and traffic lights.
//! Everything else is dropped and reported. Lanes travel along the
//! reference line on the right side and against it on the left side.
//!
//! Export writes one single-lane road per lane whose reference line is the
//! lane centerline (a `laneOffset` of half the lane width shifts the center
//! lane), so geometry survives a round trip exactly up to float rounding.

use super::xml::{num, XmlWriter};
use super::{ensure_valid, FormatReport, MapIoError};
use crate::geometry::cross2;
use crate::mapcore::{
    HdMap, Lane, LanePoint, SignKind, SignalPhase, TrafficSign, TrafficSignal, TurnType,
    DEFAULT_SPEED_LIMIT,
};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Maximum chord error when tessellating curved geometry, meters.
pub const CHORD_TOLERANCE: f64 = 0.5;
/// Sample step along pieces whose lateral offset varies polynomially.
const POLY_STEP: f64 = 1.0;
/// Lane width written by the exporter.
pub const EXPORT_LANE_WIDTH: f64 = 3.5;
/// Collinearity threshold for merging consecutive export segments.
pub const COLLINEAR_EPS: f64 = 1e-12;

const LANE_ID_CODE: &str = "avsim:laneId";
const TURN_CODE: &str = "avsim:turnType";
const INITIAL_STATE_CODE: &str = "avsim:initialState";

#[derive(Debug, Clone, Copy)]
enum GeomKind {
    Line,
    Arc(f64),
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    s: f64,
    x: f64,
    y: f64,
    hdg: f64,
    length: f64,
    kind: GeomKind,
}

impl Geometry {
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let ds = s - self.s;
        match self.kind {
            GeomKind::Line => (
                self.x + self.hdg.cos() * ds,
                self.y + self.hdg.sin() * ds,
                self.hdg,
            ),
            GeomKind::Arc(k) if k.abs() < 1e-15 => (
                self.x + self.hdg.cos() * ds,
                self.y + self.hdg.sin() * ds,
                self.hdg,
            ),
            GeomKind::Arc(k) => {
                let h = self.hdg + k * ds;
                (
                    self.x + (h.sin() - self.hdg.sin()) / k,
                    self.y - (h.cos() - self.hdg.cos()) / k,
                    h,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Poly {
    s: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Poly {
    fn eval(&self, u: f64) -> f64 {
        self.a + u * (self.b + u * (self.c + u * self.d))
    }

    fn is_constant(&self) -> bool {
        self.b == 0.0 && self.c == 0.0 && self.d == 0.0
    }
}

/// Piecewise polynomial keyed by start offset; evaluated relative to the
/// start of the active piece.
fn eval_piecewise(pieces: &[Poly], s: f64) -> f64 {
    match pieces.iter().rev().find(|p| p.s <= s + 1e-12) {
        Some(p) => p.eval(s - p.s),
        None => pieces.first().map(|p| p.eval(0.0)).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone)]
struct OdLane {
    id: i32,
    ty: String,
    widths: Vec<Poly>,
    pred: Option<i32>,
    succ: Option<i32>,
    user_id: Option<String>,
    turn: Option<TurnType>,
    speed: Option<f64>,
}

#[derive(Debug, Clone)]
struct Section {
    s: f64,
    /// Sorted 1, 2, 3, …
    left: Vec<OdLane>,
    /// Sorted -1, -2, -3, …
    right: Vec<OdLane>,
}

impl Section {
    fn lane(&self, id: i32) -> Option<&OdLane> {
        if id > 0 {
            self.left.iter().find(|l| l.id == id)
        } else {
            self.right.iter().find(|l| l.id == id)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Contact {
    Start,
    End,
}

#[derive(Debug, Clone)]
struct RoadLink {
    is_junction: bool,
    id: String,
    contact: Contact,
}

#[derive(Debug, Clone)]
struct OdSignal {
    id: String,
    s: f64,
    kind: SignalKind,
    orientation: String,
    validity: Option<(i32, i32)>,
    initial: Option<SignalPhase>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SignalKind {
    Light,
    Sign(SignKind),
    Reference,
}

#[derive(Debug, Clone)]
struct Road {
    id: String,
    length: f64,
    pred: Option<RoadLink>,
    succ: Option<RoadLink>,
    geometries: Vec<Geometry>,
    lane_offsets: Vec<Poly>,
    sections: Vec<Section>,
    signals: Vec<OdSignal>,
    speed: Option<f64>,
}

impl Road {
    fn section_end(&self, k: usize) -> f64 {
        self.sections
            .get(k + 1)
            .map(|s| s.s)
            .unwrap_or(self.length)
    }

    fn reference(&self, s: f64) -> Option<(f64, f64, f64)> {
        let g = self
            .geometries
            .iter()
            .find(|g| s >= g.s - 1e-9 && s <= g.s + g.length + 1e-9)?;
        Some(g.eval(s.clamp(g.s, g.s + g.length)))
    }

    fn section_index(&self, s: f64) -> usize {
        self.sections
            .iter()
            .rposition(|sec| sec.s <= s + 1e-9)
            .unwrap_or(0)
    }

    /// Lateral extent `(t_inner, t_outer)` of a lane at `s`, signed.
    fn lane_extent(&self, k: usize, lane_id: i32, s: f64) -> (f64, f64) {
        let sec = &self.sections[k];
        let ds = s - sec.s;
        let mut t = eval_piecewise(&self.lane_offsets, s);
        let lanes = if lane_id > 0 { &sec.left } else { &sec.right };
        let sign = if lane_id > 0 { 1.0 } else { -1.0 };
        for l in lanes {
            let w = eval_piecewise(&l.widths, ds);
            if l.id == lane_id {
                return (t, t + sign * w);
            }
            t += sign * w;
        }
        (t, t)
    }
}

fn attr_f64(n: roxmltree::Node, key: &str) -> Option<f64> {
    n.attribute(key)
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

fn attr_i32(n: roxmltree::Node, key: &str) -> Option<i32> {
    n.attribute(key).and_then(|v| v.trim().parse::<i32>().ok())
}

fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    n.children().find(|c| c.has_tag_name(name))
}

fn children<'a, 'i>(
    n: roxmltree::Node<'a, 'i>,
    name: &'static str,
) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> {
    n.children().filter(move |c| c.has_tag_name(name))
}

fn user_data(n: roxmltree::Node, code: &str) -> Option<String> {
    children(n, "userData")
        .find(|u| u.attribute("code") == Some(code))
        .and_then(|u| u.attribute("value").map(str::to_string))
}

fn speed_to_mps(max: f64, unit: Option<&str>) -> f64 {
    match unit.unwrap_or("m/s") {
        "km/h" => max / 3.6,
        "mph" => max * 0.44704,
        _ => max,
    }
}

fn parse_poly(n: roxmltree::Node, s_key: &str) -> Poly {
    Poly {
        s: attr_f64(n, s_key).unwrap_or(0.0),
        a: attr_f64(n, "a").unwrap_or(0.0),
        b: attr_f64(n, "b").unwrap_or(0.0),
        c: attr_f64(n, "c").unwrap_or(0.0),
        d: attr_f64(n, "d").unwrap_or(0.0),
    }
}

fn parse_link(n: Option<roxmltree::Node>) -> Option<RoadLink> {
    let n = n?;
    Some(RoadLink {
        is_junction: n.attribute("elementType") == Some("junction"),
        id: n.attribute("elementId")?.to_string(),
        contact: match n.attribute("contactPoint") {
            Some("end") => Contact::End,
            _ => Contact::Start,
        },
    })
}

fn parse_lane(n: roxmltree::Node) -> Option<OdLane> {
    let link = child(n, "link");
    let mut widths: Vec<Poly> = children(n, "width").map(|w| parse_poly(w, "sOffset")).collect();
    widths.sort_by(|a, b| a.s.total_cmp(&b.s));
    Some(OdLane {
        id: attr_i32(n, "id")?,
        ty: n.attribute("type").unwrap_or("none").to_string(),
        widths,
        pred: link.and_then(|l| child(l, "predecessor")).and_then(|p| attr_i32(p, "id")),
        succ: link.and_then(|l| child(l, "successor")).and_then(|p| attr_i32(p, "id")),
        user_id: user_data(n, LANE_ID_CODE),
        turn: user_data(n, TURN_CODE).and_then(|t| match t.as_str() {
            "left" => Some(TurnType::Left),
            "right" => Some(TurnType::Right),
            "u_turn" => Some(TurnType::UTurn),
            "straight" => Some(TurnType::Straight),
            _ => None,
        }),
        speed: child(n, "speed")
            .and_then(|sp| attr_f64(sp, "max").map(|m| speed_to_mps(m, sp.attribute("unit")))),
    })
}

fn parse_geo_reference(text: &str) -> Option<(f64, f64)> {
    let mut lat = None;
    let mut lon = None;
    for tok in text.split_whitespace() {
        if let Some(v) = tok.strip_prefix("+lat_0=") {
            lat = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("+lon_0=") {
            lon = v.parse().ok();
        }
    }
    Some((lat?, lon?))
}

type LaneKey = (usize, usize, i32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    SStart,
    SEnd,
}

pub fn import_opendrive(xml: &[u8]) -> Result<(HdMap, FormatReport), MapIoError> {
    let text = std::str::from_utf8(xml).map_err(|e| MapIoError::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| MapIoError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "OpenDRIVE" {
        return Err(MapIoError::NotOpenDrive(root.tag_name().name().to_string()));
    }
    let mut report = FormatReport::default();

    let (lat0, lon0) = child(root, "header")
        .and_then(|h| child(h, "geoReference"))
        .and_then(|g| parse_geo_reference(&g.text().map(str::to_string).unwrap_or_else(|| {
            g.children().filter_map(|c| c.text()).collect::<String>()
        })))
        .unwrap_or((0.0, 0.0));
    let mut map = HdMap::new(lat0, lon0);

    // ---- parse roads ----
    let mut roads: Vec<Road> = Vec::new();
    for rn in children(root, "road") {
        let id = rn.attribute("id").unwrap_or_default().to_string();
        let loc = format!("road {id}");
        let plan = child(rn, "planView").ok_or_else(|| MapIoError::MissingPlanView(id.clone()))?;
        let mut geometries = Vec::new();
        for (gi, g) in children(plan, "geometry").enumerate() {
            let (Some(s), Some(x), Some(y), Some(hdg), Some(length)) = (
                attr_f64(g, "s"),
                attr_f64(g, "x"),
                attr_f64(g, "y"),
                attr_f64(g, "hdg"),
                attr_f64(g, "length"),
            ) else {
                report.drop(format!("{loc}/geometry {gi}"), "geometry with missing attributes");
                continue;
            };
            let shape = g.children().find(|c| c.is_element());
            let kind = match shape.map(|c| c.tag_name().name()) {
                Some("line") => GeomKind::Line,
                Some("arc") => match shape.and_then(|c| attr_f64(c, "curvature")) {
                    Some(k) => GeomKind::Arc(k),
                    None => {
                        report.drop(format!("{loc}/geometry {gi}"), "arc without curvature");
                        continue;
                    }
                },
                Some(other) => {
                    report.drop(format!("{loc}/geometry {gi}"), format!("{other} unsupported"));
                    continue;
                }
                None => {
                    report.drop(format!("{loc}/geometry {gi}"), "empty geometry");
                    continue;
                }
            };
            geometries.push(Geometry {
                s,
                x,
                y,
                hdg,
                length,
                kind,
            });
        }
        geometries.sort_by(|a, b| a.s.total_cmp(&b.s));
        let length = attr_f64(rn, "length")
            .unwrap_or_else(|| geometries.last().map(|g| g.s + g.length).unwrap_or(0.0));

        let link = child(rn, "link");
        let lanes_el = child(rn, "lanes");
        let mut lane_offsets: Vec<Poly> = lanes_el
            .map(|l| children(l, "laneOffset").map(|o| parse_poly(o, "s")).collect())
            .unwrap_or_default();
        lane_offsets.sort_by(|a, b| a.s.total_cmp(&b.s));
        let mut sections = Vec::new();
        for sec in lanes_el.into_iter().flat_map(|l| children(l, "laneSection")) {
            let side = |name: &str| -> Vec<OdLane> {
                child(sec, name)
                    .map(|n| children(n, "lane").filter_map(parse_lane).collect())
                    .unwrap_or_default()
            };
            let mut left = side("left");
            let mut right = side("right");
            left.sort_by_key(|l| l.id);
            right.sort_by_key(|l| -l.id);
            sections.push(Section {
                s: attr_f64(sec, "s").unwrap_or(0.0),
                left,
                right,
            });
        }
        sections.sort_by(|a, b| a.s.total_cmp(&b.s));

        let mut signals = Vec::new();
        if let Some(sigs) = child(rn, "signals") {
            for sig in sigs.children().filter(|c| c.is_element()) {
                let name = sig.tag_name().name();
                let sid = sig.attribute("id").unwrap_or_default().to_string();
                let sloc = format!("{loc}/{name} {sid}");
                let kind = match name {
                    "signal" => match sig.attribute("type").unwrap_or("") {
                        "1000001" | "trafficLight" | "traffic_light" => SignalKind::Light,
                        "206" | "stop" => SignalKind::Sign(SignKind::Stop),
                        "205" | "yield" => SignalKind::Sign(SignKind::Yield),
                        other => {
                            report.drop(sloc, format!("unsupported signal type `{other}`"));
                            continue;
                        }
                    },
                    "signalReference" => SignalKind::Reference,
                    other => {
                        report.drop(sloc, format!("unsupported element `{other}`"));
                        continue;
                    }
                };
                let validity = child(sig, "validity")
                    .and_then(|v| Some((attr_i32(v, "fromLane")?, attr_i32(v, "toLane")?)));
                signals.push(OdSignal {
                    id: sid,
                    s: attr_f64(sig, "s").unwrap_or(0.0),
                    kind,
                    orientation: sig.attribute("orientation").unwrap_or("none").to_string(),
                    validity,
                    initial: user_data(sig, INITIAL_STATE_CODE).and_then(|p| SignalPhase::parse(&p)),
                });
            }
        }
        let speed = child(rn, "type")
            .and_then(|t| child(t, "speed"))
            .and_then(|sp| attr_f64(sp, "max").map(|m| speed_to_mps(m, sp.attribute("unit"))));
        for other in rn.children().filter(|c| c.is_element()) {
            let n = other.tag_name().name();
            if !matches!(n, "link" | "planView" | "lanes" | "signals" | "type" | "userData") {
                report.drop(format!("{loc}/{n}"), "unsupported road child");
            }
        }

        roads.push(Road {
            id,
            length,
            pred: parse_link(link.and_then(|l| child(l, "predecessor"))),
            succ: parse_link(link.and_then(|l| child(l, "successor"))),
            geometries,
            lane_offsets,
            sections,
            signals,
            speed,
        });
    }
    for other in root.children().filter(|c| c.is_element()) {
        let n = other.tag_name().name();
        if !matches!(n, "header" | "road" | "junction" | "controller") {
            report.drop(format!("<{n}>"), "unsupported element");
        }
    }

    // ---- lanes ----
    let mut lane_ids: BTreeMap<LaneKey, String> = BTreeMap::new();
    for (ri, road) in roads.iter().enumerate() {
        for (k, sec) in road.sections.iter().enumerate() {
            let s0 = sec.s;
            let s1 = road.section_end(k);
            for lane in sec.left.iter().chain(&sec.right) {
                let loc = format!("road {}/section {k}/lane {}", road.id, lane.id);
                if lane.ty != "driving" {
                    report.drop(loc, format!("lane type `{}` not imported", lane.ty));
                    continue;
                }
                let mut pts = tessellate_lane(road, k, lane.id, s0, s1);
                if lane.id > 0 {
                    pts.reverse();
                }
                if pts.len() < 2 {
                    report.drop(loc, "lane has no supported geometry");
                    continue;
                }
                let id = lane
                    .user_id
                    .clone()
                    .unwrap_or_else(|| format!("{}_{}_{}", road.id, k, lane.id));
                if map.lanes.contains_key(&id) {
                    report.drop(loc, format!("duplicate lane id `{id}`"));
                    continue;
                }
                let mut l = Lane::new(id.clone(), pts);
                l.speed_limit = lane.speed.or(road.speed).unwrap_or(DEFAULT_SPEED_LIMIT);
                l.turn_type = lane.turn.unwrap_or_default();
                map.lanes.insert(id.clone(), l);
                lane_ids.insert((ri, k, lane.id), id);
            }
        }
    }

    // ---- connectivity ----
    let road_index: HashMap<&str, usize> =
        roads.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut joins: BTreeSet<((LaneKey, Side), (LaneKey, Side))> = BTreeSet::new();
    let mut join = |a: (LaneKey, Side), b: (LaneKey, Side)| {
        if a <= b {
            joins.insert((a, b));
        } else {
            joins.insert((b, a));
        }
    };
    let end_of = |road: &Road, contact: Contact| -> (usize, Side) {
        match contact {
            Contact::Start => (0, Side::SStart),
            Contact::End => (road.sections.len().saturating_sub(1), Side::SEnd),
        }
    };
    for (ri, road) in roads.iter().enumerate() {
        let nsec = road.sections.len();
        for k in 0..nsec {
            let sec = &road.sections[k];
            for lane in sec.left.iter().chain(&sec.right) {
                if k + 1 < nsec {
                    if let Some(m) = lane.succ {
                        join(((ri, k, lane.id), Side::SEnd), ((ri, k + 1, m), Side::SStart));
                    }
                }
                if k > 0 {
                    if let Some(m) = lane.pred {
                        join(((ri, k, lane.id), Side::SStart), ((ri, k - 1, m), Side::SEnd));
                    }
                }
                if k + 1 == nsec {
                    if let (Some(link), Some(m)) = (&road.succ, lane.succ) {
                        if !link.is_junction {
                            if let Some(&oi) = road_index.get(link.id.as_str()) {
                                let (ok, side) = end_of(&roads[oi], link.contact);
                                join(((ri, k, lane.id), Side::SEnd), ((oi, ok, m), side));
                            }
                        }
                    }
                }
                if k == 0 {
                    if let (Some(link), Some(m)) = (&road.pred, lane.pred) {
                        if !link.is_junction {
                            if let Some(&oi) = road_index.get(link.id.as_str()) {
                                let (ok, side) = end_of(&roads[oi], link.contact);
                                join(((ri, k, lane.id), Side::SStart), ((oi, ok, m), side));
                            }
                        }
                    }
                }
            }
        }
    }
    for jn in children(root, "junction") {
        let jid = jn.attribute("id").unwrap_or_default();
        for (ci, conn) in children(jn, "connection").enumerate() {
            let loc = format!("junction {jid}/connection {ci}");
            let (Some(inc), Some(con)) = (
                conn.attribute("incomingRoad").and_then(|r| road_index.get(r)).copied(),
                conn.attribute("connectingRoad").and_then(|r| road_index.get(r)).copied(),
            ) else {
                report.drop(loc, "connection references unknown road");
                continue;
            };
            let is_this = |l: &Option<RoadLink>| {
                l.as_ref().is_some_and(|l| l.is_junction && l.id == jid)
            };
            let inc_road = &roads[inc];
            let (inc_sec, inc_side) = if is_this(&inc_road.succ) {
                end_of(inc_road, Contact::End)
            } else if is_this(&inc_road.pred) {
                end_of(inc_road, Contact::Start)
            } else {
                report.drop(loc, "incoming road is not linked to this junction");
                continue;
            };
            let contact = match conn.attribute("contactPoint") {
                Some("end") => Contact::End,
                _ => Contact::Start,
            };
            let (con_sec, con_side) = end_of(&roads[con], contact);
            for ll in children(conn, "laneLink") {
                if let (Some(f), Some(t)) = (attr_i32(ll, "from"), attr_i32(ll, "to")) {
                    join(((inc, inc_sec, f), inc_side), ((con, con_sec, t), con_side));
                }
            }
        }
    }
    let travel_end = |key: &LaneKey| if key.2 < 0 { Side::SEnd } else { Side::SStart };
    for ((ka, sa), (kb, sb)) in joins {
        let (Some(a), Some(b)) = (lane_ids.get(&ka), lane_ids.get(&kb)) else {
            continue;
        };
        let a_end = sa == travel_end(&ka);
        let b_end = sb == travel_end(&kb);
        match (a_end, b_end) {
            (true, false) => map.connect(a, b)?,
            (false, true) => map.connect(b, a)?,
            _ => report.warn(
                format!("lanes {a} / {b}"),
                "link joins lanes with opposing travel directions; ignored",
            ),
        }
    }

    // ---- signals ----
    let mut lights: BTreeMap<String, TrafficSignal> = BTreeMap::new();
    let mut signs: BTreeMap<String, TrafficSign> = BTreeMap::new();
    let mut references: Vec<(String, Vec<String>)> = Vec::new();
    for (ri, road) in roads.iter().enumerate() {
        for sig in &road.signals {
            let loc = format!("road {}/signal {}", road.id, sig.id);
            if road.sections.is_empty() {
                report.drop(loc, "signal on road without lanes");
                continue;
            }
            let k = road.section_index(sig.s);
            let sec = &road.sections[k];
            let controlled: Vec<i32> = sec
                .left
                .iter()
                .chain(&sec.right)
                .map(|l| l.id)
                .filter(|&id| match sig.orientation.as_str() {
                    "+" => id < 0,
                    "-" => id > 0,
                    _ => true,
                })
                .filter(|&id| match sig.validity {
                    Some((a, b)) => id >= a.min(b) && id <= a.max(b),
                    None => true,
                })
                .filter(|&id| lane_ids.contains_key(&(ri, k, id)))
                .collect();
            let lane_names: Vec<String> = controlled
                .iter()
                .map(|id| lane_ids[&(ri, k, *id)].clone())
                .collect();
            if lane_names.is_empty() {
                report.drop(loc, "signal controls no imported lane");
                continue;
            }
            if sig.kind == SignalKind::Reference {
                references.push((sig.id.clone(), lane_names));
                continue;
            }
            let Some((x, y, h)) = road.reference(sig.s) else {
                report.drop(loc, "signal position outside supported geometry");
                continue;
            };
            let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for id in &controlled {
                let (a, b) = road.lane_extent(k, *id, sig.s);
                tmin = tmin.min(a.min(b));
                tmax = tmax.max(a.max(b));
            }
            let (nx, ny) = (-h.sin(), h.cos());
            let stop_line = [
                LanePoint::new(x + nx * tmin, y + ny * tmin, 0.0),
                LanePoint::new(x + nx * tmax, y + ny * tmax, 0.0),
            ];
            match sig.kind {
                SignalKind::Light => {
                    lights.insert(
                        sig.id.clone(),
                        TrafficSignal {
                            id: sig.id.clone(),
                            stop_line,
                            controlled_lane_ids: lane_names,
                            initial_state: sig.initial.unwrap_or(SignalPhase::Red),
                        },
                    );
                }
                SignalKind::Sign(kind) => {
                    signs.insert(
                        sig.id.clone(),
                        TrafficSign {
                            id: sig.id.clone(),
                            kind,
                            stop_line,
                            controlled_lane_ids: lane_names,
                        },
                    );
                }
                SignalKind::Reference => unreachable!(),
            }
        }
    }
    for (id, lanes) in references {
        let target = lights
            .get_mut(&id)
            .map(|l| &mut l.controlled_lane_ids)
            .or_else(|| signs.get_mut(&id).map(|s| &mut s.controlled_lane_ids));
        match target {
            Some(list) => list.extend(lanes),
            None => report.drop(format!("signalReference {id}"), "references unknown signal"),
        }
    }
    for l in lights.values_mut() {
        l.controlled_lane_ids.sort();
        l.controlled_lane_ids.dedup();
    }
    for s in signs.values_mut() {
        s.controlled_lane_ids.sort();
        s.controlled_lane_ids.dedup();
    }
    map.signals = lights;
    map.signs = signs;

    ensure_valid(&map)?;
    Ok((map, report))
}

/// Sample positions along `[s0, s1]` for one lane, then offset points.
fn tessellate_lane(road: &Road, k: usize, lane_id: i32, s0: f64, s1: f64) -> Vec<LanePoint> {
    let sec = &road.sections[k];
    let lane = sec.lane(lane_id).expect("lane exists in section");
    let sign = if lane_id > 0 { 1.0 } else { -1.0 };
    let inner: Vec<&OdLane> = if lane_id > 0 {
        sec.left.iter().filter(|l| l.id <= lane_id).collect()
    } else {
        sec.right.iter().filter(|l| l.id >= lane_id).collect()
    };
    let lateral_varies = road.lane_offsets.iter().any(|p| !p.is_constant())
        || inner.iter().any(|l| l.widths.iter().any(|w| !w.is_constant()));
    // Upper bound on |t| for chord-error sizing.
    let t_bound = road.lane_offsets.iter().map(|p| p.a.abs()).sum::<f64>()
        + inner
            .iter()
            .map(|l| l.widths.iter().map(|w| w.a.abs() + w.b.abs() * 100.0).fold(0.0, f64::max))
            .sum::<f64>();

    let mut breaks: Vec<f64> = vec![s0, s1];
    for g in &road.geometries {
        for b in [g.s, g.s + g.length] {
            if b > s0 && b < s1 {
                breaks.push(b);
            }
        }
    }
    for p in &road.lane_offsets {
        if p.s > s0 && p.s < s1 {
            breaks.push(p.s);
        }
    }
    for l in &inner {
        for w in &l.widths {
            let b = s0 + w.s;
            if b > s0 && b < s1 {
                breaks.push(b);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut samples: Vec<f64> = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let Some(g) = road
            .geometries
            .iter()
            .find(|g| mid >= g.s && mid <= g.s + g.length)
        else {
            continue;
        };
        let mut step = b - a;
        if let GeomKind::Arc(kappa) = g.kind {
            if kappa.abs() > 1e-15 {
                let r = 1.0 / kappa.abs() + t_bound;
                let theta = 2.0 * (1.0 - (CHORD_TOLERANCE / r).min(1.0)).acos();
                step = step.min(theta / kappa.abs());
            }
        }
        if lateral_varies {
            step = step.min(POLY_STEP);
        }
        let n = ((b - a) / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            samples.push(if i == n { b } else { a + (b - a) * i as f64 / n as f64 });
        }
    }

    let mut pts: Vec<LanePoint> = Vec::new();
    for s in samples {
        let Some((x, y, h)) = road.reference(s) else {
            continue;
        };
        let (t_in, t_out) = road.lane_extent(k, lane_id, s);
        let _ = (lane, sign);
        let t = 0.5 * (t_in + t_out);
        let p = LanePoint::new(x - h.sin() * t, y + h.cos() * t, 0.0);
        if pts.last().is_none_or(|q: &LanePoint| q.planar_distance(&p) > 1e-9) {
            pts.push(p);
        }
    }
    pts
}

/// Drops interior vertices whose neighbouring segments are collinear.
pub fn merge_collinear(pts: &[LanePoint]) -> Vec<LanePoint> {
    let mut out: Vec<LanePoint> = Vec::with_capacity(pts.len());
    for &p in pts {
        if out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let (ux, uy) = (b.x - a.x, b.y - a.y);
            let (vx, vy) = (p.x - b.x, p.y - b.y);
            let (lu, lv) = ((ux * ux + uy * uy).sqrt(), (vx * vx + vy * vy).sqrt());
            let cross = cross2(ux / lu, uy / lu, vx / lv, vy / lv);
            let dot = ux * vx + uy * vy;
            if cross.abs() < COLLINEAR_EPS && dot > 0.0 && a.z == b.z && b.z == p.z {
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

pub fn export_opendrive(map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError> {
    ensure_valid(map)?;
    let mut report = FormatReport::default();
    if !map.boundaries.is_empty() {
        report.warn(
            "boundaries",
            format!("{} boundary line(s) not representable; lane width fixed at {EXPORT_LANE_WIDTH} m", map.boundaries.len()),
        );
    }
    for r in map.pedestrian_routes.keys() {
        report.drop(format!("pedestrian_route {r}"), "pedestrian routes are not exported");
    }

    let road_of: BTreeMap<&str, usize> = map
        .lanes
        .keys()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i + 1))
        .collect();

    // Links that are 1:1 become road links; everything else goes through a
    // junction formed from connected link components.
    let is_simple = |from: &Lane, to: &str| {
        from.successors.len() == 1 && map.lanes[to].predecessors.len() == 1
    };
    let mut junction_of_end: BTreeMap<&str, usize> = BTreeMap::new();
    let mut junction_of_start: BTreeMap<&str, usize> = BTreeMap::new();
    let mut junctions: Vec<Vec<(&str, &str)>> = Vec::new();
    for lane in map.lanes.values() {
        for succ in &lane.successors {
            if is_simple(lane, succ) {
                continue;
            }
            let existing = junction_of_end
                .get(lane.id.as_str())
                .or_else(|| junction_of_start.get(succ.as_str()))
                .copied();
            let j = match existing {
                Some(j) => j,
                None => {
                    junctions.push(Vec::new());
                    junctions.len() - 1
                }
            };
            // Merge if both ends already belong to different junctions.
            if let (Some(&a), Some(&b)) = (
                junction_of_end.get(lane.id.as_str()),
                junction_of_start.get(succ.as_str()),
            ) {
                if a != b {
                    let moved = std::mem::take(&mut junctions[b]);
                    for (f, t) in &moved {
                        junction_of_end.insert(f, a);
                        junction_of_start.insert(t, a);
                    }
                    junctions[a].extend(moved);
                }
            }
            let j = junction_of_end.get(lane.id.as_str()).copied().unwrap_or(j);
            junction_of_end.insert(&lane.id, j);
            junction_of_start.insert(succ, j);
            junctions[j].push((&lane.id, succ));
        }
    }
    let junction_ids: BTreeMap<usize, usize> = junctions
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .enumerate()
        .map(|(n, (j, _))| (j, 1000 + n + 1))
        .collect();

    let any_z = map
        .lanes
        .values()
        .any(|l| l.centerline.iter().any(|p| p.z != 0.0));
    if any_z {
        report.warn("lanes", "elevation is not exported");
    }

    let mut w = XmlWriter::new();
    w.open("OpenDRIVE", &[]);
    w.open(
        "header",
        &[
            ("revMajor", "1".into()),
            ("revMinor", "4".into()),
            ("name", "avsim".into()),
            ("version", "1.00".into()),
        ],
    );
    w.text_element(
        "geoReference",
        &format!(
            "+proj=tmerc +lat_0={} +lon_0={} +k=1 +x_0=0 +y_0=0 +datum=WGS84 +units=m +no_defs",
            num(map.origin.lat),
            num(map.origin.lon)
        ),
    );
    w.close();

    // Signals live on the road of their first controlled lane.
    let mut road_signals: BTreeMap<&str, Vec<(String, f64, &'static str, Option<SignalPhase>, bool)>> =
        BTreeMap::new();
    let controls = map
        .signals
        .values()
        .map(|s| (&s.id, &s.stop_line, &s.controlled_lane_ids, "1000001", Some(s.initial_state)))
        .chain(map.signs.values().map(|s| {
            let ty = match s.kind {
                SignKind::Stop => "206",
                SignKind::Yield => "205",
            };
            (&s.id, &s.stop_line, &s.controlled_lane_ids, ty, None)
        }));
    for (id, line, lanes, ty, initial) in controls {
        let mid = line[0].lerp(&line[1], 0.5);
        for (i, lane_id) in lanes.iter().enumerate() {
            let lane = &map.lanes[lane_id];
            let (s, _, _) = lane.project(&mid, false);
            road_signals
                .entry(lane_id.as_str())
                .or_default()
                .push((id.clone(), s, ty, initial, i > 0));
        }
        report.warn(format!("signal {id}"), "stop line is rebuilt across the lane width on import");
    }

    for lane in map.lanes.values() {
        let rid = road_of[lane.id.as_str()];
        let pts = merge_collinear(&lane.centerline);
        let length: f64 = pts.windows(2).map(|w| w[0].planar_distance(&w[1])).sum();
        w.open(
            "road",
            &[
                ("name", lane.id.clone()),
                ("length", num(length)),
                ("id", rid.to_string()),
                ("junction", "-1".into()),
            ],
        );
        w.open("link", &[]);
        let pred_link = match lane.predecessors.as_slice() {
            [p] if is_simple(&map.lanes[p], &lane.id) => Some(("road", road_of[p.as_str()], "end")),
            [] => None,
            _ => junction_of_start
                .get(lane.id.as_str())
                .map(|j| ("junction", junction_ids[j], "")),
        };
        let succ_link = match lane.successors.as_slice() {
            [s] if is_simple(lane, s) => Some(("road", road_of[s.as_str()], "start")),
            [] => None,
            _ => junction_of_end
                .get(lane.id.as_str())
                .map(|j| ("junction", junction_ids[j], "")),
        };
        for (tag, l) in [("predecessor", pred_link), ("successor", succ_link)] {
            if let Some((kind, id, contact)) = l {
                let mut attrs = vec![("elementType", kind.to_string()), ("elementId", id.to_string())];
                if !contact.is_empty() {
                    attrs.push(("contactPoint", contact.to_string()));
                }
                w.empty(tag, &attrs);
            }
        }
        w.close();

        w.open("planView", &[]);
        let mut s = 0.0;
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = a.planar_distance(&b);
            w.open(
                "geometry",
                &[
                    ("s", num(s)),
                    ("x", num(a.x)),
                    ("y", num(a.y)),
                    ("hdg", num((b.y - a.y).atan2(b.x - a.x))),
                    ("length", num(len)),
                ],
            );
            w.empty("line", &[]);
            w.close();
            s += len;
        }
        w.close();

        w.open("lanes", &[]);
        let half = EXPORT_LANE_WIDTH / 2.0;
        w.empty(
            "laneOffset",
            &[("s", "0".into()), ("a", num(half)), ("b", "0".into()), ("c", "0".into()), ("d", "0".into())],
        );
        w.open("laneSection", &[("s", "0".into())]);
        w.open("center", &[]);
        w.empty("lane", &[("id", "0".into()), ("type", "none".into()), ("level", "false".into())]);
        w.close();
        w.open("right", &[]);
        w.open("lane", &[("id", "-1".into()), ("type", "driving".into()), ("level", "false".into())]);
        w.open("link", &[]);
        if pred_link.is_some() {
            w.empty("predecessor", &[("id", "-1".into())]);
        }
        if succ_link.is_some() {
            w.empty("successor", &[("id", "-1".into())]);
        }
        w.close();
        w.empty(
            "width",
            &[
                ("sOffset", "0".into()),
                ("a", num(EXPORT_LANE_WIDTH)),
                ("b", "0".into()),
                ("c", "0".into()),
                ("d", "0".into()),
            ],
        );
        w.empty(
            "speed",
            &[("sOffset", "0".into()), ("max", num(lane.speed_limit)), ("unit", "m/s".into())],
        );
        w.empty("userData", &[("code", LANE_ID_CODE.into()), ("value", lane.id.clone())]);
        let turn = match lane.turn_type {
            TurnType::Straight => "straight",
            TurnType::Left => "left",
            TurnType::Right => "right",
            TurnType::UTurn => "u_turn",
        };
        w.empty("userData", &[("code", TURN_CODE.into()), ("value", turn.into())]);
        w.close();
        w.close();
        w.close();
        w.close();

        if let Some(sigs) = road_signals.get(lane.id.as_str()) {
            w.open("signals", &[]);
            for (id, s, ty, initial, is_ref) in sigs {
                if *is_ref {
                    w.empty(
                        "signalReference",
                        &[("s", num(*s)), ("t", "0".into()), ("id", id.clone()), ("orientation", "+".into())],
                    );
                } else {
                    w.open(
                        "signal",
                        &[
                            ("s", num(*s)),
                            ("t", "0".into()),
                            ("id", id.clone()),
                            ("name", id.clone()),
                            ("dynamic", if initial.is_some() { "yes" } else { "no" }.into()),
                            ("orientation", "+".into()),
                            ("country", "DE".into()),
                            ("type", ty.to_string()),
                            ("subtype", "-1".into()),
                        ],
                    );
                    if let Some(p) = initial {
                        w.empty(
                            "userData",
                            &[("code", INITIAL_STATE_CODE.into()), ("value", p.as_str().into())],
                        );
                    }
                    w.close();
                }
            }
            w.close();
        }
        w.close();
    }

    for (j, conns) in junctions.iter().enumerate() {
        if conns.is_empty() {
            continue;
        }
        let jid = junction_ids[&j];
        w.open("junction", &[("id", jid.to_string()), ("name", format!("junction{jid}"))]);
        for (ci, (from, to)) in conns.iter().enumerate() {
            w.open(
                "connection",
                &[
                    ("id", ci.to_string()),
                    ("incomingRoad", road_of[from].to_string()),
                    ("connectingRoad", road_of[to].to_string()),
                    ("contactPoint", "start".into()),
                ],
            );
            w.empty("laneLink", &[("from", "-1".into()), ("to", "-1".into())]);
            w.close();
        }
        w.close();
    }

    Ok((w.finish(), report))
}
