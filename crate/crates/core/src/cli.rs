//! `avsim` command line: `run`, `map convert`, `collect-kitti`, `serve`.
//!
//! Exit codes: 0 success, 1 usage/file/parse error, 2 scenario assertion
//! failure.

use crate::bridge::{BridgeServer, DEFAULT_PORT};
use crate::datagen::Metrics;
use crate::mapio;
use crate::sim::{load_map_file, ApiError, ScenarioSource, Simulator};
use crate::world::scene::SceneDescriptor;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Manifest(String),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error(transparent)]
    Map(#[from] mapio::MapIoError),
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pass/fail checks evaluated on the final metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Assertions {
    pub max_collisions: Option<usize>,
    /// Bounds on the first ego's stop count.
    pub min_ego_stops: Option<u32>,
    pub max_ego_stops: Option<u32>,
}

impl Assertions {
    /// Messages for every failed assertion.
    pub fn check(&self, m: &Metrics) -> Vec<String> {
        let mut failed = Vec::new();
        if let Some(max) = self.max_collisions {
            if m.collisions.len() > max {
                failed.push(format!("{} collisions > max_collisions {max}", m.collisions.len()));
            }
        }
        let ego = m
            .agents
            .iter()
            .find(|a| a.kind == crate::agents::AgentKind::Ego)
            .and_then(|a| m.stop_counts.get(&a.id).copied());
        if let Some(min) = self.min_ego_stops {
            if ego.is_none_or(|s| s < min) {
                failed.push(format!("ego stops {ego:?} < min_ego_stops {min}"));
            }
        }
        if let Some(max) = self.max_ego_stops {
            if ego.is_some_and(|s| s > max) {
                failed.push(format!("ego stops {ego:?} > max_ego_stops {max}"));
            }
        }
        failed
    }
}

/// Run description. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub map: Option<PathBuf>,
    /// Codec name (`native`, `lanelet2`, `opendrive`); inferred from the
    /// extension when absent.
    pub map_format: Option<String>,
    pub scene: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub seed: u64,
    pub ticks: Option<u64>,
    pub seconds: Option<f64>,
    /// Output directory: metrics.json for `run`, the dataset for
    /// `collect-kitti`.
    pub out: Option<PathBuf>,
    /// Explicit metrics file path.
    pub metrics: Option<PathBuf>,
    pub serve: bool,
    pub port: Option<u16>,
    /// Wall-clock multiplier; 0 runs unpaced.
    pub pace: Option<f64>,
    pub assertions: Assertions,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run manifest.
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ticks: Option<u64>,
    /// Enable the WebSocket bridge.
    #[arg(long)]
    pub serve: bool,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunManifest, CliError> {
        let mut m = match &self.manifest {
            Some(path) => {
                let bytes = read(path)?;
                let de = &mut serde_json::Deserializer::from_slice(&bytes);
                let mut m: RunManifest = serde_path_to_error::deserialize(de)
                    .map_err(|e| CliError::Manifest(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                for p in [&mut m.map, &mut m.scene, &mut m.sensors, &mut m.out, &mut m.metrics]
                    .into_iter()
                    .flatten()
                {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
                m
            }
            None => RunManifest::default(),
        };
        if self.map.is_some() {
            m.map = self.map.clone();
        }
        if self.scene.is_some() {
            m.scene = self.scene.clone();
        }
        if self.sensors.is_some() {
            m.sensors = self.sensors.clone();
        }
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(t) = self.ticks {
            m.ticks = Some(t);
            m.seconds = None;
        }
        if self.serve {
            m.serve = true;
        }
        if self.port.is_some() {
            m.port = self.port;
        }
        if self.out.is_some() {
            m.out = self.out.clone();
        }
        Ok(m)
    }
}

impl RunManifest {
    pub fn source(&self) -> Result<ScenarioSource, CliError> {
        let map = match &self.map {
            None => crate::mapcore::HdMap::default(),
            Some(path) => match &self.map_format {
                None => load_map_file(path)?,
                Some(f) => mapio::codec(f)?.import(&read(path)?)?.0,
            },
        };
        let scene = match &self.scene {
            None => SceneDescriptor::default(),
            Some(p) => SceneDescriptor::parse(&read(p)?).map_err(ApiError::from)?,
        };
        let sensors = match &self.sensors {
            None => None,
            Some(p) => Some(
                serde_json::from_slice(&read(p)?)
                    .map_err(|e| CliError::Manifest(format!("{}: {e}", p.display())))?,
            ),
        };
        Ok(ScenarioSource { map, scene, sensors })
    }

    pub fn ticks(&self, tick_rate: u32) -> Result<u64, CliError> {
        let t = match (self.ticks, self.seconds) {
            (Some(t), _) => t,
            (None, Some(s)) if s.is_finite() && s > 0.0 => (s * tick_rate as f64).round() as u64,
            (None, Some(s)) => return Err(CliError::Manifest(format!("seconds must be positive, got {s}"))),
            (None, None) => return Err(CliError::Manifest("no duration: give `ticks` or `seconds`".into())),
        };
        if t == 0 {
            return Err(CliError::Manifest("duration must be positive".into()));
        }
        Ok(t)
    }

    fn metrics_path(&self) -> Option<PathBuf> {
        self.metrics
            .clone()
            .or_else(|| self.out.as_ref().map(|d| d.join("metrics.json")))
    }

    fn start_bridge(&self, sim: &Simulator) -> Result<Option<BridgeServer>, CliError> {
        if !self.serve {
            return Ok(None);
        }
        let port = self.port.unwrap_or(DEFAULT_PORT);
        let endpoint = format!("127.0.0.1:{port}");
        BridgeServer::bind(&endpoint, sim.hub.clone())
            .map(Some)
            .map_err(|source| CliError::Io {
                path: PathBuf::from(endpoint),
                source,
            })
    }
}

#[derive(Debug, Parser)]
#[command(name = "avsim", version, about = "Headless deterministic driving simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write metrics.
    Run(Overrides),
    /// Map utilities.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Run a scenario and write a KITTI-style dataset.
    CollectKitti {
        #[command(flatten)]
        run: Overrides,
        #[arg(long)]
        frames: u32,
    },
    /// Serve the bridge in stepped mode until interrupted.
    Serve(Overrides),
}

#[derive(Debug, Subcommand)]
pub enum MapCommand {
    /// Convert between formats inferred from the file extensions.
    Convert { input: PathBuf, output: PathBuf },
}

/// Outcome of `run`.
#[derive(Debug)]
pub struct RunOutcome {
    pub metrics: Metrics,
    pub failed_assertions: Vec<String>,
}

pub fn cmd_run(m: &RunManifest) -> Result<RunOutcome, CliError> {
    let mut sim = Simulator::new(m.source()?, m.seed)?;
    let ticks = m.ticks(sim.world.tick_rate)?;
    let server = m.start_bridge(&sim)?;
    let pace = m.pace.unwrap_or(if server.is_some() { 1.0 } else { 0.0 });
    sim.advance(ticks, pace);
    drop(server);
    let metrics = Metrics::of(&sim.world);
    if let Some(path) = m.metrics_path() {
        write(&path, metrics.to_json().as_bytes())?;
    }
    let failed_assertions = m.assertions.check(&metrics);
    Ok(RunOutcome {
        metrics,
        failed_assertions,
    })
}

pub fn cmd_map_convert(input: &Path, output: &Path) -> Result<String, CliError> {
    let from = mapio::codec_for_path(input)?;
    let to = mapio::codec_for_path(output)?;
    let (map, import_report) = from.import(&read(input)?)?;
    let (bytes, export_report) = to.export(&map)?;
    write(output, &bytes)?;
    let mut summary = format!(
        "{} -> {}: {} lanes, {} signals, {} signs, {} pedestrian routes\n",
        from.name(),
        to.name(),
        map.lanes.len(),
        map.signals.len(),
        map.signs.len(),
        map.pedestrian_routes.len()
    );
    for (stage, r) in [("import", &import_report), ("export", &export_report)] {
        summary += &format!("{stage}: {} dropped, {} warnings\n", r.dropped_elements, r.warnings.len());
        for w in &r.warnings {
            summary += &format!("  {}: {}\n", w.locator, w.message);
        }
    }
    Ok(summary)
}

pub fn cmd_collect_kitti(m: &RunManifest, frames: u32) -> Result<u32, CliError> {
    let out = m
        .out
        .clone()
        .ok_or_else(|| CliError::Manifest("collect-kitti needs an output directory (`out`)".into()))?;
    let mut sim = Simulator::new(m.source()?, m.seed)?;
    let server = m.start_bridge(&sim)?;
    let n = sim.collect_kitti(&out, frames, None)?;
    drop(server);
    Ok(n)
}

pub fn cmd_serve(m: &RunManifest) -> Result<(), CliError> {
    let mut sim = Simulator::new(m.source()?, m.seed)?;
    if let Some(p) = m.pace {
        sim.default_pace = p;
    }
    let serving = RunManifest {
        serve: true,
        ..m.clone()
    };
    let server = serving.start_bridge(&sim)?.expect("serve is set");
    eprintln!("bridge listening on ws://{}", server.local_addr());
    sim.serve_until(|_| false);
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(o) => o.resolve().and_then(|m| cmd_run(&m)).map(|r| {
            println!("tick {} sim_time {}", r.metrics.tick, r.metrics.sim_time);
            if r.failed_assertions.is_empty() {
                EXIT_OK
            } else {
                for f in &r.failed_assertions {
                    eprintln!("assertion failed: {f}");
                }
                EXIT_ASSERTION
            }
        }),
        Command::Map {
            command: MapCommand::Convert { input, output },
        } => cmd_map_convert(&input, &output).map(|s| {
            print!("{s}");
            EXIT_OK
        }),
        Command::CollectKitti { run, frames } => run.resolve().and_then(|m| cmd_collect_kitti(&m, frames)).map(|n| {
            println!("{n} frames written");
            EXIT_OK
        }),
        Command::Serve(o) => o.resolve().and_then(|m| cmd_serve(&m)).map(|_| EXIT_OK),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_manifest_values() {
        let o = Overrides {
            seed: Some(9),
            ticks: Some(5),
            ..Default::default()
        };
        let m = o.resolve().unwrap();
        assert_eq!(m.seed, 9);
        assert_eq!(m.ticks(100).unwrap(), 5);
    }

    #[test]
    fn zero_duration_rejected() {
        let m = RunManifest {
            ticks: Some(0),
            ..Default::default()
        };
        assert!(m.ticks(100).is_err());
        assert!(RunManifest::default().ticks(100).is_err());
    }

    #[test]
    fn cli_parses() {
        let c = Cli::try_parse_from(["avsim", "run", "--ticks", "100", "--seed", "3"]).unwrap();
        assert!(matches!(c.command, Command::Run(Overrides { ticks: Some(100), seed: Some(3), .. })));
        let c = Cli::try_parse_from(["avsim", "map", "convert", "a.osm", "b.xodr"]).unwrap();
        assert!(matches!(c.command, Command::Map { .. }));
        assert!(Cli::try_parse_from(["avsim", "collect-kitti", "--frames", "2"]).is_ok());
    }
}
