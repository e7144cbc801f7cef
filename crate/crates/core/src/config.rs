//! Run configuration: system parameters, layout and experiment settings, with
//! JSON loading and dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LisError, Result};
use crate::scenario::{Layout, SystemConfig};

/// Sweep and sampling settings of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    /// Antenna counts swept, ascending.
    pub antennas: Vec<usize>,
    /// Pilot lengths of the pilot sweep; empty means every `t` in `[K, T]`.
    pub pilot_lengths: Vec<usize>,
    /// Independent device placements per sweep point.
    pub placements: u64,
    /// Channel realizations (coherence blocks) per placement.
    pub blocks: u64,
    /// Blocks per placement that also evaluate the closed-form curves; `None` means all.
    pub analytic_blocks: Option<u64>,
    /// Device count of the fixed-scheduling reference curve.
    pub fixed_devices: usize,
    /// Cap on the candidate devices placed per LIS for scheduling; `None` means `T`.
    pub max_devices: Option<usize>,
    /// Fading and noise draws per antenna count in the moment oracle.
    pub oracle_samples: u64,
    /// Also evaluate the scheduling objective with the mean interference.
    pub cross_check: bool,
    /// Write per-realization records next to the summaries.
    pub raw: bool,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            antennas: vec![100, 400, 900],
            pilot_lengths: Vec::new(),
            placements: 4,
            blocks: 10,
            analytic_blocks: None,
            fixed_devices: 20,
            max_devices: None,
            oracle_samples: 10_000,
            cross_check: false,
            raw: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub layout: Layout,
    pub experiment: ExperimentParams,
}

/// `(key, unit, description)` for every configuration key.
pub const KEY_DOCS: &[(&str, &str, &str)] = &[
    ("system.antennas", "count", "antennas per LIS unit M, a perfect square"),
    ("system.devices", "count", "devices (and units) per LIS K"),
    ("system.lis_count", "count", "number of LISs N (at most 4 with the built-in layout)"),
    ("system.coherence_len", "symbols", "coherence block length T"),
    ("system.pilot_len", "symbols", "pilot length t; null uses t = K"),
    ("system.half_side", "m", "half side length L of a unit"),
    ("system.carrier_freq", "Hz", "carrier frequency"),
    ("system.antenna_spacing", "m", "antenna spacing; null spreads the lattice over the unit (2L / sqrt(M))"),
    ("system.nlos_paths", "count", "dominant NLOS paths P"),
    ("system.pathloss_exp", "-", "NLOS path-loss exponent"),
    ("system.los_cutoff", "m", "distance beyond which LOS is absent"),
    ("system.pilot_snr", "linear", "pilot target SNR"),
    ("system.data_snr", "linear", "data target SNR"),
    ("system.inter_lis", "rician|nlos", "fading law of links between different LISs"),
    ("system.los_gating", "bool", "draw LOS existence of interference links from the distance law"),
    ("system.seed", "-", "master random seed"),
    ("layout.surface", "m", "LIS surface extent [x, y]"),
    ("layout.side_gap", "m", "gap between side-by-side LISs"),
    ("layout.facing_distance", "m", "distance between facing LIS planes"),
    ("layout.region", "m", "device region [width, depth, height] in front of each LIS"),
    ("layout.custom", "-", "explicit LIS poses [{origin: [x, y, z], facing: up|down}]; null uses the built-in layout"),
    ("experiment.antennas", "count", "antenna counts swept, ascending"),
    ("experiment.pilot_lengths", "symbols", "pilot lengths of the pilot sweep; empty means every t in [K, T]"),
    ("experiment.placements", "count", "independent device placements per sweep point"),
    ("experiment.blocks", "count", "channel realizations per placement"),
    ("experiment.analytic_blocks", "count", "blocks per placement that also evaluate closed forms; null means all"),
    ("experiment.fixed_devices", "count", "device count of the fixed-scheduling reference"),
    ("experiment.max_devices", "count", "cap on candidate devices per LIS for scheduling; null means T"),
    ("experiment.oracle_samples", "count", "draws per antenna count in the moment oracle"),
    ("experiment.cross_check", "bool", "also evaluate scheduling with the mean interference"),
    ("experiment.raw", "bool", "write per-realization records"),
];

/// Key reference for help output.
pub fn key_reference() -> String {
    let width = KEY_DOCS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (--set key=value; keys under `system.` may omit the prefix):\n");
    for (key, unit, doc) in KEY_DOCS {
        out.push_str(&format!("  {key:<width$}  [{unit}] {doc}\n"));
    }
    out
}

fn parse_error(e: serde_json::Error) -> LisError {
    let msg = e.to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
        .unwrap_or("config")
        .to_string();
    LisError::config(key, msg)
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LisError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value`. The value is parsed as JSON, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| LisError::config(assignment, "override must have the form key=value"))?;
        let key = key.trim();
        let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let path: Vec<&str> = key.split('.').collect();
        let full: Vec<&str> = if lookup(&tree, &path).is_some() {
            path
        } else {
            let mut p = vec!["system"];
            p.extend(&path);
            p
        };
        let slot = lookup_mut(&mut tree, &full).ok_or_else(|| LisError::config(key, "unknown configuration key"))?;
        *slot = value;
        *self = serde_json::from_value(tree).map_err(|e| LisError::config(key, e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.layout.validate()?;
        self.layout.poses(self.system.lis_count)?;
        let e = &self.experiment;
        if e.placements == 0 {
            return Err(LisError::config("experiment.placements", "must be at least 1"));
        }
        if e.blocks == 0 {
            return Err(LisError::config("experiment.blocks", "must be at least 1"));
        }
        if !e.antennas.windows(2).all(|w| w[0] < w[1]) {
            return Err(LisError::config("experiment.antennas", "must be strictly ascending"));
        }
        for &m in &e.antennas {
            self.system.with_antennas(m).validate().map_err(|_| {
                LisError::config("experiment.antennas", format!("{m} is not a positive perfect square"))
            })?;
        }
        if !e.pilot_lengths.windows(2).all(|w| w[0] < w[1]) {
            return Err(LisError::config("experiment.pilot_lengths", "must be strictly ascending"));
        }
        if let Some(&t) = e.pilot_lengths.iter().find(|&&t| t < self.system.devices || t > self.system.coherence_len) {
            return Err(LisError::config("experiment.pilot_lengths", format!("{t} is outside [K, T]")));
        }
        if e.oracle_samples < 2 {
            return Err(LisError::config("experiment.oracle_samples", "must be at least 2"));
        }
        Ok(())
    }
}

fn lookup<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(v, |node, seg| match node {
        Value::Object(map) => map.get(*seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn lookup_mut<'a>(v: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    path.iter().try_fold(v, |node, seg| match node {
        Value::Object(map) => map.get_mut(*seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
        _ => None,
    })
}
