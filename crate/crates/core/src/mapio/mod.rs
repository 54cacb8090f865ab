//! Importers and exporters between [`HdMap`] and external HD-map formats.
//!
//! Codecs are looked up by format name through [`codec`]; Lanelet2 (OSM XML)
//! and OpenDRIVE 1.4 are built in.

pub mod geo;
pub mod lanelet2;
pub mod opendrive;
mod xml;

use crate::mapcore::{self, HdMap, MapError, Violation};
use serde::Serialize;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapIoError {
    #[error("XML parse error: {0}")]
    Xml(String),
    #[error("no lanelet relations found")]
    NoLanelets,
    #[error("road {0} has no planView")]
    MissingPlanView(String),
    #[error("not an OpenDRIVE document (root element `{0}`)")]
    NotOpenDrive(String),
    #[error("map failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("unsupported map format `{0}`")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Kind of a report entry; `Dropped` entries are counted in
/// [`FormatReport::dropped_elements`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    Dropped,
    Lossy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FormatWarning {
    /// Element locator, e.g. `relation 12` or `road 3/geometry 1`.
    pub locator: String,
    pub message: String,
    pub kind: WarningKind,
}

/// Accounting of what an import or export could not carry over.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FormatReport {
    pub warnings: Vec<FormatWarning>,
    pub dropped_elements: usize,
}

impl FormatReport {
    pub fn drop(&mut self, locator: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(FormatWarning {
            locator: locator.into(),
            message: message.into(),
            kind: WarningKind::Dropped,
        });
        self.dropped_elements += 1;
    }

    pub fn warn(&mut self, locator: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(FormatWarning {
            locator: locator.into(),
            message: message.into(),
            kind: WarningKind::Lossy,
        });
    }

    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

impl fmt::Display for FormatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} warning(s), {} dropped element(s)",
            self.warnings.len(),
            self.dropped_elements
        )?;
        for w in &self.warnings {
            writeln!(f, "  [{:?}] {}: {}", w.kind, w.locator, w.message)?;
        }
        Ok(())
    }
}

/// A map codec. Import and export are both optional so read-only or
/// write-only formats can be registered.
pub trait MapCodec: Sync {
    fn name(&self) -> &'static str;
    fn extensions(&self) -> &'static [&'static str];
    fn import(&self, bytes: &[u8]) -> Result<(HdMap, FormatReport), MapIoError>;
    fn export(&self, map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError>;
}

struct NativeCodec;
struct Lanelet2Codec;
struct OpenDriveCodec;

impl MapCodec for NativeCodec {
    fn name(&self) -> &'static str {
        "native"
    }
    fn extensions(&self) -> &'static [&'static str] {
        &["json"]
    }
    fn import(&self, bytes: &[u8]) -> Result<(HdMap, FormatReport), MapIoError> {
        Ok((mapcore::load_native(bytes)?, FormatReport::default()))
    }
    fn export(&self, map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError> {
        ensure_valid(map)?;
        Ok((mapcore::save_native(map), FormatReport::default()))
    }
}

impl MapCodec for Lanelet2Codec {
    fn name(&self) -> &'static str {
        "lanelet2"
    }
    fn extensions(&self) -> &'static [&'static str] {
        &["osm"]
    }
    fn import(&self, bytes: &[u8]) -> Result<(HdMap, FormatReport), MapIoError> {
        lanelet2::import_lanelet2(bytes)
    }
    fn export(&self, map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError> {
        lanelet2::export_lanelet2(map)
    }
}

impl MapCodec for OpenDriveCodec {
    fn name(&self) -> &'static str {
        "opendrive"
    }
    fn extensions(&self) -> &'static [&'static str] {
        &["xodr"]
    }
    fn import(&self, bytes: &[u8]) -> Result<(HdMap, FormatReport), MapIoError> {
        opendrive::import_opendrive(bytes)
    }
    fn export(&self, map: &HdMap) -> Result<(Vec<u8>, FormatReport), MapIoError> {
        opendrive::export_opendrive(map)
    }
}

static CODECS: [&dyn MapCodec; 3] = [&NativeCodec, &Lanelet2Codec, &OpenDriveCodec];

pub fn codecs() -> &'static [&'static dyn MapCodec] {
    &CODECS
}

/// Codec registered under `name`.
pub fn codec(name: &str) -> Result<&'static dyn MapCodec, MapIoError> {
    CODECS
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| MapIoError::UnsupportedFormat(name.to_string()))
}

/// Codec inferred from a file extension (`.json`, `.osm`, `.xodr`).
pub fn codec_for_path(path: &Path) -> Result<&'static dyn MapCodec, MapIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    CODECS
        .iter()
        .copied()
        .find(|c| c.extensions().contains(&ext.as_str()))
        .ok_or_else(|| MapIoError::UnsupportedFormat(format!(".{ext}")))
}

pub(crate) fn ensure_valid(map: &HdMap) -> Result<(), MapIoError> {
    let v = mapcore::validate(map);
    if v.is_empty() {
        Ok(())
    } else {
        Err(MapIoError::Validation(v))
    }
}
