//! Scenario files.
//!
//! ```toml
//! name = "1-a"
//! resolution = 0.05          # meters per cell
//! baseline = false           # true disables the movable layer overrides
//!
//! [map]
//! cells_per_char = 5         # each character covers 5 x 5 cells
//! rows = ["#####", "#...#", "#####"]   # first row is north; '#' wall
//! # pgm = "map.pgm"          # alternative: P5 map, path relative to the file
//! # origin = [0.0, 0.0]
//!
//! [robot]
//! start = [x, y, theta]
//! goal = [x, y]
//!
//! [[bodies]]
//! center = [x, y]
//! half_extents = [hx, hy]
//! class = "light" | "heavy" | "immovable"
//!
//! [params.checker]           # any module parameter, see Config
//! drop_ratio = 0.3
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::geom::{circle_box_gap, Pose2, Vec2};
use crate::grid::{CostGrid, GridError, FREE};
use crate::harness::config::Config;
use crate::world::{Movability, MovableBody};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: invalid scenario: {message}")]
    Validation { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: map: {source}")]
    Map {
        path: String,
        #[source]
        source: GridError,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    resolution: f64,
    #[serde(default)]
    baseline: bool,
    map: MapSection,
    robot: RobotSection,
    #[serde(default)]
    bodies: Vec<BodySection>,
    #[serde(default)]
    params: Option<toml::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSection {
    #[serde(default)]
    rows: Option<Vec<String>>,
    #[serde(default)]
    pgm: Option<PathBuf>,
    #[serde(default = "one")]
    cells_per_char: usize,
    #[serde(default)]
    origin: Option<[f64; 2]>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSection {
    start: [f64; 3],
    goal: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodySection {
    center: [f64; 2],
    half_extents: [f64; 2],
    class: Movability,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub static_map: Arc<CostGrid>,
    pub resolution: f64,
    pub robot_start: Pose2,
    pub goal: Vec2,
    pub bodies: Vec<MovableBody>,
    pub config: Config,
    pub baseline_mode: bool,
}

impl Scenario {
    pub fn with_baseline(&self, baseline: bool) -> Scenario {
        Scenario {
            baseline_mode: baseline,
            ..self.clone()
        }
    }

    pub fn with_config(&self, config: Config) -> Scenario {
        Scenario {
            config,
            ..self.clone()
        }
    }
}

pub const BUNDLED: [(&str, &str); 7] = [
    ("1-a", include_str!("../../scenarios/1-a.toml")),
    ("1-b", include_str!("../../scenarios/1-b.toml")),
    ("1-c", include_str!("../../scenarios/1-c.toml")),
    ("2-a", include_str!("../../scenarios/2-a.toml")),
    ("2-b", include_str!("../../scenarios/2-b.toml")),
    ("2-c", include_str!("../../scenarios/2-c.toml")),
    ("3", include_str!("../../scenarios/3.toml")),
];

pub fn bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, text) =
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::Validation {
                path: name.to_owned(),
                message: format!("no bundled scenario named {name:?}"),
            })?;
    parse_scenario(text, name, None)
}

/// Loads a scenario from a file path, or a bundled scenario by name when no
/// such file exists.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    if !path.exists() {
        if let Some(name) = path
            .to_str()
            .filter(|n| BUNDLED.iter().any(|(b, _)| b == n))
        {
            return bundled(name);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_scenario(&text, &shown, path.parent())
}

pub fn parse_scenario(
    text: &str,
    shown: &str,
    base_dir: Option<&Path>,
) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: shown.to_owned(),
        message: e.to_string(),
    })?;
    let invalid = |message: String| ScenarioError::Validation {
        path: shown.to_owned(),
        message,
    };
    if !(file.resolution > 0.0) {
        return Err(invalid(format!(
            "resolution must be positive, got {}",
            file.resolution
        )));
    }
    let origin = file
        .map
        .origin
        .map_or(Vec2::ZERO, |o| Vec2::new(o[0], o[1]));
    let map_err = |source| ScenarioError::Map {
        path: shown.to_owned(),
        source,
    };
    let static_map = match (&file.map.rows, &file.map.pgm) {
        (Some(rows), None) => {
            CostGrid::from_ascii(rows, file.resolution, file.map.cells_per_char, origin)
                .map_err(map_err)?
        }
        (None, Some(pgm)) => {
            let p = base_dir.map_or_else(|| pgm.clone(), |d| d.join(pgm));
            let f = File::open(&p).map_err(|source| ScenarioError::Io {
                path: p.display().to_string(),
                source,
            })?;
            CostGrid::read_pgm(BufReader::new(f), file.resolution, origin).map_err(map_err)?
        }
        _ => return Err(invalid("map needs exactly one of `rows` or `pgm`".into())),
    };

    let config = match &file.params {
        Some(v) => Config::default()
            .merged(v)
            .map_err(|e| ScenarioError::Parse {
                path: shown.to_owned(),
                message: format!("params: {e}"),
            })?,
        None => Config::default(),
    };

    let start = Pose2::new(
        file.robot.start[0],
        file.robot.start[1],
        file.robot.start[2],
    );
    let goal = Vec2::new(file.robot.goal[0], file.robot.goal[1]);
    let meta = static_map.meta;
    for (what, p) in [("start", start.position()), ("goal", goal)] {
        match meta.world_to_cell(p) {
            Err(_) => {
                return Err(invalid(format!(
                    "{what} ({:.3}, {:.3}) lies outside the map",
                    p.x, p.y
                )))
            }
            Ok(c) if static_map.get(c) != FREE => {
                return Err(invalid(format!(
                    "{what} ({:.3}, {:.3}) is not on a free cell",
                    p.x, p.y
                )))
            }
            Ok(_) => {}
        }
    }

    let mut bodies = Vec::new();
    for (i, b) in file.bodies.iter().enumerate() {
        let half = Vec2::new(b.half_extents[0], b.half_extents[1]);
        if !(half.x > 0.0 && half.y > 0.0) {
            return Err(invalid(format!("body {i}: half extents must be positive")));
        }
        let body = MovableBody::new(i as u32, Vec2::new(b.center[0], b.center[1]), half, b.class);
        let bx = body.aabb();
        if meta.world_to_cell(bx.min).is_err()
            || meta.world_to_cell(bx.max - Vec2::new(1e-9, 1e-9)).is_err()
        {
            return Err(invalid(format!("body {i} extends outside the map")));
        }
        if circle_box_gap(start.position(), config.world.footprint_radius, &bx) < 0.0 {
            return Err(invalid(format!("body {i} overlaps the robot start")));
        }
        bodies.push(body);
    }

    Ok(Scenario {
        name: file.name,
        description: file.description,
        static_map: Arc::new(static_map),
        resolution: file.resolution,
        robot_start: start,
        goal,
        bodies,
        config,
        baseline_mode: file.baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r######"
name = "t"
resolution = 0.1
[map]
rows = ["#####", "#...#", "#####"]
[robot]
start = [0.15, 0.15, 0.0]
goal = [0.35, 0.15]
"######;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert_eq!(s.name, name);
            assert!(!s.bodies.is_empty());
        }
        let a = bundled("1-a").unwrap();
        assert_eq!(a.bodies.len(), 1);
        assert_eq!(a.bodies[0].class, Movability::Light);
        let b = bundled("2-b").unwrap();
        let center = b
            .bodies
            .iter()
            .find(|x| (x.center.y - 1.75).abs() < 1e-9)
            .unwrap();
        assert_eq!(center.class, Movability::Heavy);
    }

    #[test]
    fn goal_in_wall_is_rejected() {
        let bad = SMALL.replace("goal = [0.35, 0.15]", "goal = [0.05, 0.05]");
        assert!(matches!(
            parse_scenario(&bad, "t", None),
            Err(ScenarioError::Validation { .. })
        ));
        assert!(parse_scenario(SMALL, "t", None).is_ok());
    }

    #[test]
    fn parse_error_reports_location() {
        let err = parse_scenario("name = \"x\"\nresolution = [", "bad.toml", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn params_override_defaults() {
        let text = format!("{SMALL}\n[params.checker]\ncooldown = 1.0\n");
        let s = parse_scenario(&text, "t", None).unwrap();
        assert_eq!(s.config.checker.cooldown, 1.0);
        assert_eq!(s.config.checker.drop_ratio, 0.3);
    }
}
