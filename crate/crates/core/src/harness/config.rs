//! Layered TOML configuration.
//!
//! Every module's defaults live in [`Config::default`]. A scenario file's
//! `[params]` table and an optional config file are merged on top of them,
//! key by key, before deserialization, so any single value can be
//! overridden without restating the rest of its section.

use serde::{Deserialize, Serialize};

use crate::checker::CheckerParams;
use crate::layers::MovableLayerParams;
use crate::planning::{MppiParams, PlannerParams};
use crate::world::{ScanParams, WorldParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialParams {
    pub dt: f64,
    pub timeout: f64,
    /// Give up once no global path has existed for this long.
    pub no_path_abort: f64,
    /// Retry period for the global planner while no path exists.
    pub no_path_retry: f64,
    pub pose_noise: bool,
    /// Per-step random-walk sigma of the localization error, meters.
    pub sigma_xy: f64,
    /// Per-step random-walk sigma of the heading error, radians.
    pub sigma_theta: f64,
}

impl Default for TrialParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            timeout: 180.0,
            no_path_abort: 20.0,
            no_path_retry: 1.0,
            pose_noise: false,
            sigma_xy: 0.002,
            sigma_theta: 0.002,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub world: WorldParams,
    pub lidar: ScanParams,
    pub layers: MovableLayerParams,
    pub checker: CheckerParams,
    pub planner: PlannerParams,
    pub mppi: MppiParams,
    pub trial: TrialParams,
}

impl Config {
    /// Applies a TOML table of overrides on top of `self`.
    pub fn merged(&self, overrides: &toml::Value) -> Result<Config, toml::de::Error> {
        let mut base = toml::Value::try_from(self).expect("config serializes to TOML");
        merge(&mut base, overrides);
        base.try_into()
    }

    pub fn from_toml_str(s: &str) -> Result<Config, toml::de::Error> {
        let v: toml::Value = toml::from_str(s)?;
        Config::default().merged(&v)
    }
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
