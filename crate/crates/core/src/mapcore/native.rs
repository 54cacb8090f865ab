//! Native map document: a single UTF-8 JSON object, `version` = 1.

use super::{
    validate, BoundaryLine, GeoOrigin, HdMap, Lane, MapError, PedestrianRoute, TrafficSign,
    TrafficSignal,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const NATIVE_VERSION: i64 = 1;

#[derive(Serialize)]
struct DocOut<'a> {
    version: i64,
    origin: GeoOrigin,
    lanes: Vec<&'a Lane>,
    boundaries: Vec<&'a BoundaryLine>,
    signals: Vec<&'a TrafficSignal>,
    signs: Vec<&'a TrafficSign>,
    pedestrian_routes: Vec<&'a PedestrianRoute>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocIn {
    #[allow(dead_code)]
    version: i64,
    origin: GeoOrigin,
    lanes: Vec<Lane>,
    boundaries: Vec<BoundaryLine>,
    signals: Vec<TrafficSignal>,
    signs: Vec<TrafficSign>,
    pedestrian_routes: Vec<PedestrianRoute>,
}

/// Serializes the map. Floats use shortest round-trip formatting so
/// [`load_native`] reproduces every coordinate bit for bit.
pub fn save_native(map: &HdMap) -> Vec<u8> {
    let doc = DocOut {
        version: NATIVE_VERSION,
        origin: map.origin,
        lanes: map.lanes.values().collect(),
        boundaries: map.boundaries.values().collect(),
        signals: map.signals.values().collect(),
        signs: map.signs.values().collect(),
        pedestrian_routes: map.pedestrian_routes.values().collect(),
    };
    serde_json::to_vec_pretty(&doc).expect("map serialization is infallible")
}

pub fn load_native(bytes: &[u8]) -> Result<HdMap, MapError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| MapError::Malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| MapError::Schema("top level must be an object".into()))?;
    match obj.get("version") {
        None => return Err(MapError::Schema("missing field `version`".into())),
        Some(v) => match v.as_i64() {
            Some(NATIVE_VERSION) => {}
            Some(found) => {
                return Err(MapError::Version {
                    found,
                    expected: NATIVE_VERSION,
                })
            }
            None => return Err(MapError::Schema("`version` must be an integer".into())),
        },
    }
    let doc: DocIn = serde_path_to_error::deserialize(value)
        .map_err(|e| MapError::Schema(format!("{}: {}", e.path(), e.inner())))?;

    let mut map = HdMap {
        origin: doc.origin,
        ..Default::default()
    };
    map.lanes = keyed("lane", doc.lanes, |l| &l.id)?;
    map.boundaries = keyed("boundary", doc.boundaries, |b| &b.id)?;
    map.signals = keyed("signal", doc.signals, |s| &s.id)?;
    map.signs = keyed("sign", doc.signs, |s| &s.id)?;
    map.pedestrian_routes = keyed("pedestrian_route", doc.pedestrian_routes, |r| &r.id)?;

    let violations = validate(&map);
    if !violations.is_empty() {
        return Err(MapError::Invalid(violations));
    }
    Ok(map)
}

fn keyed<T>(
    kind: &'static str,
    items: Vec<T>,
    id: impl Fn(&T) -> &String,
) -> Result<BTreeMap<String, T>, MapError> {
    let mut out = BTreeMap::new();
    for item in items {
        let key = id(&item).clone();
        if out.contains_key(&key) {
            return Err(MapError::DuplicateId { kind, id: key });
        }
        out.insert(key, item);
    }
    Ok(out)
}
