//! Flat TOML configuration.
//!
//! Every key is optional and overrides the reference deployment. Numbers are
//! read in the key's base unit (W, Hz, m, rad, linear gain, dB for losses);
//! strings may carry an explicit unit suffix:
//!
//! | kind      | base   | suffixes                    |
//! |-----------|--------|-----------------------------|
//! | power     | W      | `W`, `mW`, `dBm`, `dBW`     |
//! | gain      | linear | `dB`                        |
//! | loss      | dB     | `dB`                        |
//! | frequency | Hz     | `Hz`, `kHz`, `MHz`, `GHz`   |
//! | angle     | rad    | `rad`, `deg`                |
//! | length    | m      | `m`, `km`                   |
//!
//! ```toml
//! num_ris_elements = 128
//! noise_power_uav = "-134 dBm"
//! antenna_gain = "4 dB"
//! uav_power_budget = 0.5
//! hap_position = ["1 km", 0, "18 km"]
//! sweep = [0, 4, 8, 12, 16, 20]
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{Error, Result};
use crate::pipeline::CsiSource;
use crate::scalar::{db_to_linear, dbm_to_watts};
use crate::scenario::{ArrayConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Power,
    Gain,
    Loss,
    Frequency,
    Angle,
    Length,
    Plain,
}

/// Scenario plus the run-level knobs that are not part of a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: Scenario<f64>,
    pub num_robots: usize,
    /// Replaces the experiment's default sweep when present.
    pub sweep: Option<Vec<f64>>,
    /// Per-measurement pilot SNR (linear).
    pub pilot_snr: f64,
    /// Overrides the experiment's default CSI source when present.
    pub csi: Option<CsiSource>,
    /// Estimated paths with activity below this are ignored for alignment.
    pub path_threshold: f64,
    /// Largest tolerated fraction of numerically failed trials per row.
    pub failure_threshold: f64,
    /// Step of the exhaustive phase search (rad).
    pub exhaustive_resolution: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let scenario = Scenario::reference();
        Self {
            num_robots: scenario.num_robots(),
            scenario,
            sweep: None,
            pilot_snr: db_to_linear(15.0),
            csi: None,
            path_threshold: 0.5,
            failure_threshold: 0.05,
            exhaustive_resolution: 1e-4,
        }
    }
}

fn parse_number_with_unit(key: &str, value: &Value, unit: Unit) -> Result<f64> {
    let bad = |msg: String| Error::Config(format!("{key}: {msg}"));
    match value {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        Value::String(s) => {
            let s = s.trim();
            // The unit starts at the first letter that cannot be an exponent marker.
            let split = s.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E').unwrap_or(s.len());
            let (num, suffix) = s.split_at(split);
            let x: f64 = num.trim().parse().map_err(|_| bad(format!("cannot parse number in {s:?}")))?;
            let suffix = suffix.trim();
            let converted = match (unit, suffix) {
                (_, "") => x,
                (Unit::Power, "W") => x,
                (Unit::Power, "mW") => x * 1e-3,
                (Unit::Power, "dBm") => dbm_to_watts(x),
                (Unit::Power, "dBW") => db_to_linear(x),
                (Unit::Gain, "dB") => db_to_linear(x),
                (Unit::Loss, "dB") => x,
                (Unit::Frequency, "Hz") => x,
                (Unit::Frequency, "kHz") => x * 1e3,
                (Unit::Frequency, "MHz") => x * 1e6,
                (Unit::Frequency, "GHz") => x * 1e9,
                (Unit::Angle, "rad") => x,
                (Unit::Angle, "deg") => x.to_radians(),
                (Unit::Length, "m") => x,
                (Unit::Length, "km") => x * 1e3,
                (u, other) => return Err(bad(format!("unit {other:?} is not valid for a {u:?} value"))),
            };
            Ok(converted)
        }
        other => Err(bad(format!("expected a number or a string with unit, got {other}"))),
    }
}

fn as_count(key: &str, value: &Value) -> Result<usize> {
    match value {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(Error::Config(format!("{key}: expected a non-negative integer, got {other}"))),
    }
}

fn as_vector<const D: usize>(key: &str, value: &Value, unit: Unit) -> Result<[f64; D]> {
    let items = value.as_array().ok_or_else(|| Error::Config(format!("{key}: expected an array of {D} values")))?;
    if items.len() != D {
        return Err(Error::Config(format!("{key}: expected {D} values, got {}", items.len())));
    }
    let mut out = [0.0; D];
    for (o, v) in out.iter_mut().zip(items) {
        *o = parse_number_with_unit(key, v, unit)?;
    }
    Ok(out)
}

/// Parses a config file's contents. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut cfg = SimulationConfig::default();
    let mut array = cfg.scenario.array;
    let mut scenario = cfg.scenario.clone();
    let s = &mut scenario;
    let mut carrier = array.carrier_frequency;

    for (key, value) in &table {
        let k = key.as_str();
        let num = |unit| parse_number_with_unit(k, value, unit);
        match k {
            "num_bs_antennas" => array.num_bs_antennas = as_count(k, value)?,
            "num_ris_elements" => array.num_ris_elements = as_count(k, value)?,
            "bs_spacing" => array.bs_spacing = num(Unit::Plain)?,
            "ris_spacing" => array.ris_spacing = num(Unit::Plain)?,
            "carrier_frequency" => carrier = num(Unit::Frequency)?,
            "bs_position" => s.bs_position = as_vector::<3>(k, value, Unit::Length)?,
            "hap_position" => s.hap_position = as_vector::<3>(k, value, Unit::Length)?,
            "uav_position" => s.uav_position = as_vector::<3>(k, value, Unit::Length)?,
            "area_center" => s.area_center = as_vector::<2>(k, value, Unit::Length)?,
            "area_side" => s.area_side = num(Unit::Length)?,
            "num_robots" => cfg.num_robots = as_count(k, value)?,
            "antenna_gain" => s.antenna_gain = num(Unit::Gain)?,
            "noise_power_uav" => s.noise_power_uav = num(Unit::Power)?,
            "noise_power_robot" => s.noise_power_robot = num(Unit::Power)?,
            "bs_power_budget" => s.bs_power_budget = num(Unit::Power)?,
            "uav_power_budget" => s.uav_power_budget = num(Unit::Power)?,
            "bs_packet_bits" => s.bs_packet_bits = num(Unit::Plain)?,
            "robot_packet_bits" => s.robot_packet_bits = num(Unit::Plain)?,
            "bs_blocklength_min" => s.bs_blocklength_min = as_count(k, value)?,
            "bs_blocklength_max" => s.bs_blocklength_max = as_count(k, value)?,
            "robot_blocklength_min" => s.robot_blocklength_min = as_count(k, value)?,
            "robot_blocklength_max" => s.robot_blocklength_max = as_count(k, value)?,
            "dep_threshold" => {
                let e = num(Unit::Plain)?;
                s.dep_threshold_uav = e;
                s.dep_threshold_robot = e;
            }
            "dep_threshold_uav" => s.dep_threshold_uav = num(Unit::Plain)?,
            "dep_threshold_robot" => s.dep_threshold_robot = num(Unit::Plain)?,
            "num_paths" => s.num_paths = as_count(k, value)?,
            "angular_spread" => s.angular_spread = num(Unit::Angle)?,
            "bs_hap_excess_loss" => s.bs_hap_excess_loss_db = num(Unit::Loss)?,
            "hap_uav_excess_loss" => s.hap_uav_excess_loss_db = num(Unit::Loss)?,
            "utg_intercept" => s.utg_path_loss.intercept_db = num(Unit::Loss)?,
            "utg_exponent" => s.utg_path_loss.exponent = num(Unit::Plain)?,
            "num_pilots" => s.num_pilots = as_count(k, value)?,
            "robot_seed" => s.rng_seed = as_count(k, value)? as u64,
            "pilot_snr" => cfg.pilot_snr = num(Unit::Gain)?,
            "path_threshold" => cfg.path_threshold = num(Unit::Plain)?,
            "failure_threshold" => cfg.failure_threshold = num(Unit::Plain)?,
            "exhaustive_resolution" => cfg.exhaustive_resolution = num(Unit::Angle)?,
            "csi" => {
                cfg.csi = Some(match value.as_str() {
                    Some("perfect") => CsiSource::Perfect,
                    Some("estimated") => CsiSource::Estimated,
                    _ => return Err(Error::Config(format!("csi: expected \"perfect\" or \"estimated\", got {value}"))),
                })
            }
            "sweep" => {
                let items = value.as_array().ok_or_else(|| Error::Config("sweep: expected an array".into()))?;
                let values = items.iter().map(|v| parse_number_with_unit(k, v, Unit::Plain)).collect::<Result<Vec<_>>>()?;
                if values.is_empty() {
                    return Err(Error::Config("sweep: must not be empty".into()));
                }
                cfg.sweep = Some(values);
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
    }

    cfg.scenario = scenario;
    cfg.scenario.array =
        ArrayConfig::new(array.num_bs_antennas, array.num_ris_elements, array.bs_spacing, array.ris_spacing, carrier)
            .map_err(|e| Error::Config(e.to_string()))?;
    if cfg.num_robots == 0 {
        return Err(Error::Config("num_robots must be at least 1".into()));
    }
    if !(cfg.pilot_snr > 0.0) {
        return Err(Error::Config("pilot_snr must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.failure_threshold) {
        return Err(Error::Config("failure_threshold must lie in [0, 1]".into()));
    }
    if !(cfg.exhaustive_resolution > 0.0) {
        return Err(Error::Config("exhaustive_resolution must be positive".into()));
    }
    let seed = cfg.scenario.rng_seed;
    cfg.scenario = cfg.scenario.clone().with_uniform_robots(cfg.num_robots, &mut ChaCha8Rng::seed_from_u64(seed));
    cfg.scenario.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
