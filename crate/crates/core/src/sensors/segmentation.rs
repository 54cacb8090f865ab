//! Semantic segmentation camera and its color table.
//!
//! Every semantic class owns a base hue. Non-instanced classes render as
//! `HSL(hue, 0.9, 0.5)`. Instanced classes pick from a per-hue palette of
//! at least 10 000 distinct colors whose hue stays within ±9.5° of the base.

use super::camera::{render, CameraParams};
use crate::geometry::Pose;
use crate::world::WorldState;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

pub const SATURATION: f64 = 0.9;
pub const HUE_JITTER_DEG: f64 = 9.5;
pub const MIN_PALETTE: usize = 10_000;
/// Multiplier mapping instance ids into the palette; prime and larger than
/// any palette, so consecutive ids land on distinct entries.
const INSTANCE_STRIDE: u64 = 1_000_003;
pub const SKY: [u8; 3] = [0, 0, 0];

const DEFAULT_HUES: [(&str, f64); 10] = [
    ("road", 280.0),
    ("sidewalk", 320.0),
    ("building", 20.0),
    ("wall", 45.0),
    ("vegetation", 120.0),
    ("pole", 60.0),
    ("sign", 90.0),
    ("car", 200.0),
    ("pedestrian", 0.0),
    ("terrain", 160.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRule {
    pub instanced: BTreeSet<String>,
    /// Hue overrides in degrees.
    pub hues: BTreeMap<String, f64>,
}

impl Default for SegmentationRule {
    fn default() -> Self {
        Self {
            instanced: ["car", "pedestrian"].into_iter().map(String::from).collect(),
            hues: BTreeMap::new(),
        }
    }
}

impl SegmentationRule {
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (k, h) in &self.hues {
            if !(h.is_finite() && (0.0..360.0).contains(h)) {
                return Err(format!("hue for `{k}` must be in [0, 360)"));
            }
            if !seen.insert(h.to_bits()) {
                return Err(format!("hue {h} assigned to more than one class"));
            }
        }
        Ok(())
    }

    pub fn hue(&self, semantic: &str) -> f64 {
        if let Some(h) = self.hues.get(semantic) {
            return *h;
        }
        if let Some((_, h)) = DEFAULT_HUES.iter().find(|(n, _)| *n == semantic) {
            return *h;
        }
        // FNV-1a over the class name.
        let mut x: u64 = 0xcbf2_9ce4_8422_2325;
        for b in semantic.bytes() {
            x ^= b as u64;
            x = x.wrapping_mul(0x0100_0000_01b3);
        }
        (x % 3600) as f64 / 10.0
    }
}

pub fn hsl_to_rgb(h: f64, s: f64, l: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Hue of an RGB color in degrees, `None` for grays.
pub fn rgb_hue(c: [u8; 3]) -> Option<f64> {
    let [r, g, b] = c.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return None;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    Some(h * 60.0)
}

pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn build_palette(hue: f64) -> Vec<[u8; 3]> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let hue_steps = 77;
    let light_steps = 401;
    for li in 0..light_steps {
        let l = 0.3 + 0.4 * li as f64 / (light_steps - 1) as f64;
        for hi in 0..hue_steps {
            let dh = -HUE_JITTER_DEG + 2.0 * HUE_JITTER_DEG * hi as f64 / (hue_steps - 1) as f64;
            let c = hsl_to_rgb(hue + dh, SATURATION, l);
            if rgb_hue(c).is_some_and(|h| hue_distance(h, hue) <= 10.0) && seen.insert(c) {
                out.push(c);
            }
        }
    }
    assert!(out.len() >= MIN_PALETTE, "palette for hue {hue} has {} colors", out.len());
    out
}

/// Deterministic per-hue instance palette, built once and cached.
pub fn instance_palette(hue: f64) -> Arc<Vec<[u8; 3]>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<[u8; 3]>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().unwrap().get(&hue.to_bits()) {
        return p.clone();
    }
    let p = Arc::new(build_palette(hue));
    cache.lock().unwrap().entry(hue.to_bits()).or_insert(p).clone()
}

pub fn segmentation_color(semantic: &str, instance_id: u32, rule: &SegmentationRule) -> [u8; 3] {
    let hue = rule.hue(semantic);
    if !rule.instanced.contains(semantic) {
        return hsl_to_rgb(hue, SATURATION, 0.5);
    }
    let palette = instance_palette(hue);
    let idx = (instance_id as u64).wrapping_mul(INSTANCE_STRIDE) % palette.len() as u64;
    palette[idx as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn at(&self, u: u32, v: u32) -> [u8; 3] {
        self.data[(v * self.width + u) as usize]
    }
}

pub fn segmentation_image(
    world: &WorldState,
    pose: &Pose,
    p: &CameraParams,
    rule: &SegmentationRule,
    exclude: Option<u32>,
) -> ColorImage {
    let data = render(world, pose, p, exclude, |h| {
        h.map_or(SKY, |h| segmentation_color(&h.semantic, h.instance_id, rule))
    });
    ColorImage {
        width: p.width,
        height: p.height,
        data,
    }
}
