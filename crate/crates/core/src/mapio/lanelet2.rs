//! Lanelet2 maps in OSM XML.
//!
//! Supported subset: `node` (lat/lon, optional `ele` tag), `way`, relations
//! `type=lanelet` with `left`/`right` way members, and
//! `type=regulatory_element` with `subtype=traffic_light` or
//! `subtype=traffic_sign` and a `ref_line` member. Lanelets with
//! `subtype=crosswalk|walkway` become pedestrian routes, as do ways tagged
//! `avsim:pedestrian_route`. Element ids are preserved through the
//! `avsim:id` tag when present; successor links are derived from boundary
//! endpoint coincidence.

use super::geo::LocalTangentPlane;
use super::xml::{num, XmlWriter};
use super::{ensure_valid, FormatReport, MapIoError};
use crate::mapcore::{
    BoundaryLine, BoundaryStyle, HdMap, Lane, LanePoint, PedestrianRoute, SignKind, SignalPhase,
    TrafficSign, TrafficSignal, TurnType, DEFAULT_SPEED_LIMIT,
};
use std::collections::{BTreeMap, HashMap};

/// Lane width used when a lane has no boundaries to export.
pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
/// Endpoint coincidence tolerance for deriving successor links, meters.
pub const LINK_TOLERANCE: f64 = 1e-6;

const ID_TAG: &str = "avsim:id";
const ROUTE_TAG: &str = "avsim:pedestrian_route";
const INITIAL_STATE_TAG: &str = "avsim:initial_state";

struct OsmNode {
    lat: f64,
    lon: f64,
    ele: f64,
}

struct OsmWay {
    nodes: Vec<String>,
    tags: HashMap<String, String>,
}

struct OsmMember {
    kind: String,
    reference: String,
    role: String,
}

struct OsmRelation {
    id: String,
    members: Vec<OsmMember>,
    tags: HashMap<String, String>,
}

fn tags_of(node: roxmltree::Node) -> HashMap<String, String> {
    node.children()
        .filter(|c| c.has_tag_name("tag"))
        .filter_map(|t| Some((t.attribute("k")?.to_string(), t.attribute("v")?.to_string())))
        .collect()
}

fn parse_f64(s: Option<&str>) -> Option<f64> {
    s.and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

/// Parses `speed_limit`: plain numbers are km/h, units `km/h`, `mph` and
/// `m/s` are recognized.
pub fn parse_speed_limit(raw: &str) -> Option<f64> {
    let s = raw.trim().to_ascii_lowercase();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e'))
        .unwrap_or(s.len());
    let value: f64 = s[..split].trim().parse().ok()?;
    let unit = s[split..].trim();
    let mps = match unit {
        "" | "km/h" | "kmh" | "kph" => value / 3.6,
        "mph" => value * 0.44704,
        "m/s" | "mps" => value,
        _ => return None,
    };
    (mps.is_finite() && mps > 0.0).then_some(mps)
}

fn style_from_tags(tags: &HashMap<String, String>) -> BoundaryStyle {
    let ty = tags.get("type").map(String::as_str).unwrap_or("");
    let sub = tags.get("subtype").map(String::as_str).unwrap_or("");
    match (ty, sub) {
        ("curbstone", _) | ("road_border", _) => BoundaryStyle::Curb,
        (_, "dashed") | (_, "dashed_solid") | (_, "solid_dashed") => BoundaryStyle::Dashed,
        (_, "solid_solid") | (_, "dashed_dashed") => BoundaryStyle::Double,
        _ => BoundaryStyle::Solid,
    }
}

fn style_tags(style: BoundaryStyle) -> (&'static str, &'static str) {
    match style {
        BoundaryStyle::Solid => ("line_thin", "solid"),
        BoundaryStyle::Dashed => ("line_thin", "dashed"),
        BoundaryStyle::Double => ("line_thin", "solid_solid"),
        BoundaryStyle::Curb => ("curbstone", "high"),
    }
}

fn turn_from_tag(v: Option<&String>) -> TurnType {
    match v.map(String::as_str) {
        Some("left") => TurnType::Left,
        Some("right") => TurnType::Right,
        Some("u_turn") | Some("uturn") => TurnType::UTurn,
        _ => TurnType::Straight,
    }
}

fn turn_tag(t: TurnType) -> &'static str {
    match t {
        TurnType::Straight => "straight",
        TurnType::Left => "left",
        TurnType::Right => "right",
        TurnType::UTurn => "u_turn",
    }
}

fn dedup_points(pts: &mut Vec<LanePoint>) -> bool {
    let before = pts.len();
    pts.dedup();
    before != pts.len()
}

/// Resamples a polyline to `n` points uniformly spaced in arc length.
fn resample(pts: &[LanePoint], n: usize) -> Vec<LanePoint> {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(&w[1]));
    }
    let total = *cum.last().unwrap();
    (0..n)
        .map(|i| {
            if i == 0 {
                return pts[0];
            }
            if i + 1 == n {
                return *pts.last().unwrap();
            }
            let target = total * i as f64 / (n - 1) as f64;
            let seg = cum.partition_point(|&c| c <= target).clamp(1, pts.len() - 1) - 1;
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
            pts[seg].lerp(&pts[seg + 1], t)
        })
        .collect()
}

/// Pointwise midpoint of the arc-length-resampled boundaries, with the
/// left boundary reversed first if it runs against the right one.
pub fn midline(left: &[LanePoint], right: &[LanePoint]) -> Vec<LanePoint> {
    let n = left.len().max(right.len()).max(2);
    let (l0, l1) = (left[0], *left.last().unwrap());
    let (r0, r1) = (right[0], *right.last().unwrap());
    let reversed = l0.distance(&r0) + l1.distance(&r1) > l0.distance(&r1) + l1.distance(&r0);
    let left: Vec<LanePoint> = if reversed {
        left.iter().rev().copied().collect()
    } else {
        left.to_vec()
    };
    let a = resample(&left, n);
    let b = resample(right, n);
    let mut mid: Vec<LanePoint> = a.iter().zip(&b).map(|(p, q)| p.lerp(q, 0.5)).collect();
    dedup_points(&mut mid);
    mid
}

/// Left and right boundaries of a lane as traversed in travel direction.
fn oriented_ends(left: &[LanePoint], right: &[LanePoint]) -> ([LanePoint; 2], [LanePoint; 2]) {
    let (l0, l1) = (left[0], *left.last().unwrap());
    let (r0, r1) = (right[0], *right.last().unwrap());
    if l0.distance(&r0) + l1.distance(&r1) > l0.distance(&r1) + l1.distance(&r0) {
        ([l1, l0], [r0, r1])
    } else {
        ([l0, l1], [r0, r1])
    }
}

pub fn import_lanelet2(xml: &[u8]) -> Result<(HdMap, FormatReport), MapIoError> {
    let text = std::str::from_utf8(xml).map_err(|e| MapIoError::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| MapIoError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let mut report = FormatReport::default();

    let mut nodes: HashMap<String, OsmNode> = HashMap::new();
    let mut first_node: Option<(f64, f64)> = None;
    let mut bounds_center: Option<(f64, f64)> = None;
    let mut ways: BTreeMap<String, OsmWay> = BTreeMap::new();
    let mut relations: Vec<OsmRelation> = Vec::new();

    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "bounds" => {
                if let (Some(a), Some(b), Some(c), Some(d)) = (
                    parse_f64(el.attribute("minlat")),
                    parse_f64(el.attribute("maxlat")),
                    parse_f64(el.attribute("minlon")),
                    parse_f64(el.attribute("maxlon")),
                ) {
                    bounds_center = Some(((a + b) / 2.0, (c + d) / 2.0));
                }
            }
            "node" => {
                let id = el.attribute("id").unwrap_or_default().to_string();
                match (parse_f64(el.attribute("lat")), parse_f64(el.attribute("lon"))) {
                    (Some(lat), Some(lon)) => {
                        let tags = tags_of(el);
                        let ele = parse_f64(tags.get("ele").map(String::as_str)).unwrap_or(0.0);
                        first_node.get_or_insert((lat, lon));
                        nodes.insert(id, OsmNode { lat, lon, ele });
                    }
                    _ => report.drop(format!("node {id}"), "missing or invalid lat/lon"),
                }
            }
            "way" => {
                let id = el.attribute("id").unwrap_or_default().to_string();
                let refs = el
                    .children()
                    .filter(|c| c.has_tag_name("nd"))
                    .filter_map(|c| c.attribute("ref").map(str::to_string))
                    .collect();
                ways.insert(
                    id,
                    OsmWay {
                        nodes: refs,
                        tags: tags_of(el),
                    },
                );
            }
            "relation" => {
                let members = el
                    .children()
                    .filter(|c| c.has_tag_name("member"))
                    .map(|m| OsmMember {
                        kind: m.attribute("type").unwrap_or_default().to_string(),
                        reference: m.attribute("ref").unwrap_or_default().to_string(),
                        role: m.attribute("role").unwrap_or_default().to_string(),
                    })
                    .collect();
                relations.push(OsmRelation {
                    id: el.attribute("id").unwrap_or_default().to_string(),
                    members,
                    tags: tags_of(el),
                });
            }
            other => report.drop(format!("<{other}>"), "unsupported element"),
        }
    }

    let is_lanelet = |r: &OsmRelation| r.tags.get("type").map(String::as_str) == Some("lanelet");
    if !relations.iter().any(is_lanelet) {
        return Err(MapIoError::NoLanelets);
    }

    let (lat0, lon0) = bounds_center.or(first_node).unwrap_or((0.0, 0.0));
    let ltp = LocalTangentPlane::new(lat0, lon0);
    let mut map = HdMap::new(lat0, lon0);

    let way_points = |way_id: &str, report: &mut FormatReport| -> Option<Vec<LanePoint>> {
        let way = ways.get(way_id)?;
        let mut pts = Vec::with_capacity(way.nodes.len());
        for r in &way.nodes {
            match nodes.get(r) {
                Some(n) => {
                    let (x, y) = ltp.to_local(n.lat, n.lon);
                    pts.push(LanePoint::new(x, y, n.ele));
                }
                None => {
                    report.warn(format!("way {way_id}"), format!("missing node {r}"));
                }
            }
        }
        if dedup_points(&mut pts) {
            report.warn(format!("way {way_id}"), "repeated consecutive nodes removed");
        }
        (pts.len() >= 2).then_some(pts)
    };
    let way_element_id = |way_id: &str| -> String {
        ways.get(way_id)
            .and_then(|w| w.tags.get(ID_TAG).cloned())
            .unwrap_or_else(|| way_id.to_string())
    };
    let relation_element_id =
        |r: &OsmRelation| r.tags.get(ID_TAG).cloned().unwrap_or_else(|| r.id.clone());

    let mut used_ways: std::collections::HashSet<String> = std::collections::HashSet::new();
    // lane id → (oriented left ends, oriented right ends)
    let mut lane_ends: BTreeMap<String, ([LanePoint; 2], [LanePoint; 2])> = BTreeMap::new();
    // regulatory relation id → controlled lane ids
    let mut reg_refs: HashMap<String, Vec<String>> = HashMap::new();

    for rel in relations.iter().filter(|r| is_lanelet(r)) {
        let loc = format!("relation {}", rel.id);
        let member = |role: &str| {
            rel.members
                .iter()
                .find(|m| m.kind == "way" && m.role == role)
                .map(|m| m.reference.clone())
        };
        let (Some(lw), Some(rw)) = (member("left"), member("right")) else {
            report.drop(loc, "lanelet without left/right way members");
            continue;
        };
        let (Some(left), Some(right)) = (way_points(&lw, &mut report), way_points(&rw, &mut report))
        else {
            report.drop(loc, "lanelet boundary has fewer than 2 resolvable nodes");
            continue;
        };
        let centerline = midline(&left, &right);
        if centerline.len() < 2 {
            report.drop(loc, "degenerate lanelet centerline");
            continue;
        }
        let id = relation_element_id(rel);
        let subtype = rel.tags.get("subtype").map(String::as_str).unwrap_or("road");
        if matches!(subtype, "crosswalk" | "walkway") {
            if map.pedestrian_routes.contains_key(&id) {
                report.drop(loc, format!("duplicate pedestrian route id {id}"));
                continue;
            }
            map.pedestrian_routes.insert(
                id.clone(),
                PedestrianRoute {
                    id,
                    waypoints: centerline,
                },
            );
            used_ways.insert(lw);
            used_ways.insert(rw);
            continue;
        }
        if map.lanes.contains_key(&id) {
            report.drop(loc, format!("duplicate lane id {id}"));
            continue;
        }
        for (way_id, pts) in [(&lw, &left), (&rw, &right)] {
            let bid = way_element_id(way_id);
            if !map.boundaries.contains_key(&bid) {
                map.boundaries.insert(
                    bid.clone(),
                    BoundaryLine {
                        id: bid,
                        polyline: pts.clone(),
                        style: style_from_tags(&ways[way_id.as_str()].tags),
                    },
                );
            }
            used_ways.insert(way_id.clone());
        }
        let speed_limit = match rel.tags.get("speed_limit") {
            Some(raw) => parse_speed_limit(raw).unwrap_or_else(|| {
                report.warn(loc.clone(), format!("unparseable speed_limit `{raw}`"));
                DEFAULT_SPEED_LIMIT
            }),
            None => DEFAULT_SPEED_LIMIT,
        };
        for m in rel
            .members
            .iter()
            .filter(|m| m.kind == "relation" && m.role == "regulatory_element")
        {
            reg_refs.entry(m.reference.clone()).or_default().push(id.clone());
        }
        lane_ends.insert(id.clone(), oriented_ends(&left, &right));
        map.lanes.insert(
            id.clone(),
            Lane {
                id,
                centerline,
                left_boundary_id: Some(way_element_id(&lw)),
                right_boundary_id: Some(way_element_id(&rw)),
                successors: Vec::new(),
                predecessors: Vec::new(),
                speed_limit,
                turn_type: turn_from_tag(rel.tags.get("turn_direction")),
            },
        );
    }

    // Successor links from endpoint coincidence, in lane id order.
    let ids: Vec<String> = lane_ends.keys().cloned().collect();
    for a in &ids {
        let (al, ar) = lane_ends[a];
        for b in &ids {
            if a == b {
                continue;
            }
            let (bl, br) = lane_ends[b];
            if al[1].distance(&bl[0]) <= LINK_TOLERANCE && ar[1].distance(&br[0]) <= LINK_TOLERANCE
            {
                map.connect(a, b)?;
            }
        }
    }

    for rel in relations.iter().filter(|r| !is_lanelet(r)) {
        let loc = format!("relation {}", rel.id);
        let ty = rel.tags.get("type").map(String::as_str).unwrap_or("");
        if ty != "regulatory_element" {
            report.drop(loc, format!("unsupported relation type `{ty}`"));
            continue;
        }
        let subtype = rel.tags.get("subtype").map(String::as_str).unwrap_or("");
        let line_way = rel
            .members
            .iter()
            .find(|m| m.kind == "way" && m.role == "ref_line")
            .map(|m| m.reference.clone());
        let Some(line_pts) = line_way.as_deref().and_then(|w| way_points(w, &mut report)) else {
            report.drop(loc, "regulatory element without usable ref_line");
            continue;
        };
        if let Some(w) = &line_way {
            used_ways.insert(w.clone());
        }
        let stop_line = [line_pts[0], *line_pts.last().unwrap()];
        let mut controlled = reg_refs.get(&rel.id).cloned().unwrap_or_default();
        controlled.sort();
        controlled.dedup();
        if controlled.is_empty() {
            report.drop(loc, "regulatory element not referenced by any lanelet");
            continue;
        }
        let id = relation_element_id(rel);
        match subtype {
            "traffic_light" => {
                let initial_state = rel
                    .tags
                    .get(INITIAL_STATE_TAG)
                    .and_then(|s| SignalPhase::parse(s))
                    .unwrap_or(SignalPhase::Red);
                map.signals.insert(
                    id.clone(),
                    TrafficSignal {
                        id,
                        stop_line,
                        controlled_lane_ids: controlled,
                        initial_state,
                    },
                );
            }
            "traffic_sign" => {
                let refers_subtype = rel
                    .members
                    .iter()
                    .find(|m| m.role == "refers")
                    .and_then(|m| ways.get(&m.reference))
                    .and_then(|w| w.tags.get("subtype").cloned());
                if let Some(m) = rel.members.iter().find(|m| m.role == "refers") {
                    used_ways.insert(m.reference.clone());
                }
                let kind = match rel
                    .tags
                    .get("sign_type")
                    .cloned()
                    .or(refers_subtype)
                    .as_deref()
                {
                    Some("stop") | Some("de206") | Some("usR1-1") => SignKind::Stop,
                    Some("yield") | Some("de205") | Some("usR1-2") => SignKind::Yield,
                    other => {
                        report.drop(loc, format!("unsupported traffic sign {other:?}"));
                        continue;
                    }
                };
                map.signs.insert(
                    id.clone(),
                    TrafficSign {
                        id,
                        kind,
                        stop_line,
                        controlled_lane_ids: controlled,
                    },
                );
            }
            other => report.drop(loc, format!("unsupported regulatory element `{other}`")),
        }
    }

    for (way_id, way) in &ways {
        if used_ways.contains(way_id) {
            continue;
        }
        if let Some(route_id) = way.tags.get(ROUTE_TAG) {
            match way_points(way_id, &mut report) {
                Some(pts) if !map.pedestrian_routes.contains_key(route_id) => {
                    map.pedestrian_routes.insert(
                        route_id.clone(),
                        PedestrianRoute {
                            id: route_id.clone(),
                            waypoints: pts,
                        },
                    );
                }
                _ => report.drop(format!("way {way_id}"), "unusable pedestrian route"),
            }
            continue;
        }
        report.drop(format!("way {way_id}"), "way not used by any lanelet");
    }

    ensure_valid(&map)?;
    Ok((map, report))
}

/// Left/right offset polylines at `±half_width` using vertex bisectors.
fn synthesize_boundaries(center: &[LanePoint], half_width: f64) -> (Vec<LanePoint>, Vec<LanePoint>) {
    let n = center.len();
    let heading = |i: usize| (center[i + 1].y - center[i].y).atan2(center[i + 1].x - center[i].x);
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let h = if i == 0 {
            heading(0)
        } else if i + 1 == n {
            heading(n - 2)
        } else {
            crate::geometry::mean_heading(heading(i - 1), heading(i))
        };
        let (nx, ny) = (-h.sin(), h.cos());
        let p = center[i];
        left.push(LanePoint::new(p.x + nx * half_width, p.y + ny * half_width, p.z));
        right.push(LanePoint::new(p.x - nx * half_width, p.y - ny * half_width, p.z));
    }
    (left, right)
}

pub fn export_lanelet2(map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError> {
    ensure_valid(map)?;
    let mut report = FormatReport::default();
    let ltp = LocalTangentPlane::new(map.origin.lat, map.origin.lon);

    // Boundaries to emit: the map's own plus synthesized ones.
    let mut boundaries: BTreeMap<String, BoundaryLine> = map.boundaries.clone();
    let mut lane_bounds: BTreeMap<&str, (String, String)> = BTreeMap::new();
    for lane in map.lanes.values() {
        let (l, r) = match (&lane.left_boundary_id, &lane.right_boundary_id) {
            (Some(l), Some(r)) => (l.clone(), r.clone()),
            _ => {
                let (left, right) = synthesize_boundaries(&lane.centerline, DEFAULT_LANE_WIDTH / 2.0);
                let l = lane
                    .left_boundary_id
                    .clone()
                    .unwrap_or_else(|| format!("{}__left", lane.id));
                let r = lane
                    .right_boundary_id
                    .clone()
                    .unwrap_or_else(|| format!("{}__right", lane.id));
                for (bid, pts) in [(&l, left), (&r, right)] {
                    boundaries.entry(bid.clone()).or_insert(BoundaryLine {
                        id: bid.clone(),
                        polyline: pts,
                        style: BoundaryStyle::Dashed,
                    });
                }
                report.warn(
                    format!("lane {}", lane.id),
                    format!("boundary synthesized at ±{} m", DEFAULT_LANE_WIDTH / 2.0),
                );
                (l, r)
            }
        };
        let expected = midline(&boundaries[&l].polyline, &boundaries[&r].polyline);
        let same = expected.len() == lane.centerline.len()
            && expected
                .iter()
                .zip(&lane.centerline)
                .all(|(a, b)| a.distance(b) <= LINK_TOLERANCE);
        if !same {
            report.warn(
                format!("lane {}", lane.id),
                "centerline is not the boundary midline; it will be recomputed on import",
            );
        }
        lane_bounds.insert(&lane.id, (l, r));
    }

    let mut w = XmlWriter::new();
    w.open(
        "osm",
        &[
            ("version", "0.6".into()),
            ("generator", "avsim".into()),
        ],
    );
    // Degenerate bounds: the center is exactly the map origin.
    w.empty(
        "bounds",
        &[
            ("minlat", num(map.origin.lat)),
            ("minlon", num(map.origin.lon)),
            ("maxlat", num(map.origin.lat)),
            ("maxlon", num(map.origin.lon)),
        ],
    );

    let mut next_id: u64 = 1;
    let mut node_xml: Vec<(u64, LanePoint)> = Vec::new();
    let mut alloc_nodes = |pts: &[LanePoint], next_id: &mut u64| -> Vec<u64> {
        pts.iter()
            .map(|p| {
                let id = *next_id;
                *next_id += 1;
                node_xml.push((id, *p));
                id
            })
            .collect()
    };

    let mut way_nodes: Vec<(String, Vec<u64>, Vec<(&str, String)>)> = Vec::new();
    let mut boundary_way: BTreeMap<String, u64> = BTreeMap::new();
    for b in boundaries.values() {
        let ids = alloc_nodes(&b.polyline, &mut next_id);
        let (ty, sub) = style_tags(b.style);
        way_nodes.push((
            b.id.clone(),
            ids,
            vec![("type", ty.into()), ("subtype", sub.into()), (ID_TAG, b.id.clone())],
        ));
    }
    let mut control_line_way: BTreeMap<(&str, &str), String> = BTreeMap::new();
    for s in map.signals.values() {
        let ids = alloc_nodes(&s.stop_line, &mut next_id);
        let key = format!("__signal_line_{}", s.id);
        way_nodes.push((key.clone(), ids, vec![("type", "stop_line".into())]));
        control_line_way.insert(("signal", &s.id), key);
    }
    for s in map.signs.values() {
        let ids = alloc_nodes(&s.stop_line, &mut next_id);
        let key = format!("__sign_line_{}", s.id);
        way_nodes.push((key.clone(), ids, vec![("type", "stop_line".into())]));
        control_line_way.insert(("sign", &s.id), key);
    }
    for r in map.pedestrian_routes.values() {
        let ids = alloc_nodes(&r.waypoints, &mut next_id);
        way_nodes.push((
            format!("__route_{}", r.id),
            ids,
            vec![("highway", "footway".into()), (ROUTE_TAG, r.id.clone())],
        ));
    }

    for (id, p) in &node_xml {
        let (lat, lon) = ltp.to_geodetic(p.x, p.y);
        w.open(
            "node",
            &[
                ("id", id.to_string()),
                ("lat", num(lat)),
                ("lon", num(lon)),
                ("version", "1".into()),
                ("visible", "true".into()),
            ],
        );
        w.empty("tag", &[("k", "ele".into()), ("v", num(p.z))]);
        w.close();
    }
    let mut way_id_of: BTreeMap<String, u64> = BTreeMap::new();
    for (key, nds, tags) in &way_nodes {
        let id = next_id;
        next_id += 1;
        way_id_of.insert(key.clone(), id);
        if boundaries.contains_key(key) {
            boundary_way.insert(key.clone(), id);
        }
        w.open(
            "way",
            &[
                ("id", id.to_string()),
                ("version", "1".into()),
                ("visible", "true".into()),
            ],
        );
        for n in nds {
            w.empty("nd", &[("ref", n.to_string())]);
        }
        for (k, v) in tags {
            w.empty("tag", &[("k", k.to_string()), ("v", v.clone())]);
        }
        w.close();
    }

    // Regulatory elements first so lanelets can reference their ids.
    let mut reg_id: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for s in map.signals.values() {
        reg_id.insert(("signal", &s.id), next_id);
        next_id += 1;
    }
    for s in map.signs.values() {
        reg_id.insert(("sign", &s.id), next_id);
        next_id += 1;
    }
    let mut lane_regs: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for s in map.signals.values() {
        for l in &s.controlled_lane_ids {
            lane_regs.entry(l).or_default().push(reg_id[&("signal", s.id.as_str())]);
        }
    }
    for s in map.signs.values() {
        for l in &s.controlled_lane_ids {
            lane_regs.entry(l).or_default().push(reg_id[&("sign", s.id.as_str())]);
        }
    }

    for lane in map.lanes.values() {
        let (l, r) = &lane_bounds[lane.id.as_str()];
        w.open(
            "relation",
            &[
                ("id", next_id.to_string()),
                ("version", "1".into()),
                ("visible", "true".into()),
            ],
        );
        next_id += 1;
        w.empty(
            "member",
            &[("type", "way".into()), ("ref", boundary_way[l].to_string()), ("role", "left".into())],
        );
        w.empty(
            "member",
            &[("type", "way".into()), ("ref", boundary_way[r].to_string()), ("role", "right".into())],
        );
        for reg in lane_regs.get(lane.id.as_str()).into_iter().flatten() {
            w.empty(
                "member",
                &[
                    ("type", "relation".into()),
                    ("ref", reg.to_string()),
                    ("role", "regulatory_element".into()),
                ],
            );
        }
        for (k, v) in [
            ("type", "lanelet".to_string()),
            ("subtype", "road".into()),
            ("location", "urban".into()),
            ("one_way", "yes".into()),
            ("speed_limit", format!("{} m/s", num(lane.speed_limit))),
            ("turn_direction", turn_tag(lane.turn_type).into()),
            (ID_TAG, lane.id.clone()),
        ] {
            w.empty("tag", &[("k", k.into()), ("v", v)]);
        }
        w.close();
    }

    let regs = map
        .signals
        .values()
        .map(|s| ("signal", &s.id, Some(s.initial_state), None))
        .chain(map.signs.values().map(|s| ("sign", &s.id, None, Some(s.kind))));
    for (kind, id, initial, sign_kind) in regs {
        w.open(
            "relation",
            &[
                ("id", reg_id[&(kind, id.as_str())].to_string()),
                ("version", "1".into()),
                ("visible", "true".into()),
            ],
        );
        let line = &way_id_of[&control_line_way[&(kind, id.as_str())]];
        w.empty(
            "member",
            &[("type", "way".into()), ("ref", line.to_string()), ("role", "ref_line".into())],
        );
        let mut tags = vec![("type", "regulatory_element".to_string()), (ID_TAG, id.clone())];
        if let Some(phase) = initial {
            tags.push(("subtype", "traffic_light".into()));
            tags.push((INITIAL_STATE_TAG, phase.as_str().into()));
        }
        if let Some(k) = sign_kind {
            tags.push(("subtype", "traffic_sign".into()));
            tags.push((
                "sign_type",
                match k {
                    SignKind::Stop => "stop".into(),
                    SignKind::Yield => "yield".into(),
                },
            ));
        }
        for (k, v) in tags {
            w.empty("tag", &[("k", k.into()), ("v", v)]);
        }
        w.close();
    }

    Ok((w.finish(), report))
}
