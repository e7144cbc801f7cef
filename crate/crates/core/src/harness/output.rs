//! CSV and manifest writers. File names are prefixed with the experiment id.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::harness::experiments::{ExperimentOutput, ExperimentSpec};
use crate::harness::stats::Curve;

pub const CSV_HEADER: &str = "sweep_value,mean,variance,stderr,count,label";

/// File-name fragment of a curve label.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for p in &curve.points {
        let s = &p.summary;
        let _ = writeln!(out, "{},{},{},{},{},{}", s.sweep_value, s.mean, s.variance, s.stderr, s.count, csv_field(&s.label));
    }
    out
}

pub fn raw_csv(curves: &[Curve]) -> String {
    let mut out = String::from("label,sweep_value,placement,block,value\n");
    for c in curves {
        for p in &c.points {
            for s in &p.samples {
                let _ = writeln!(out, "{},{},{},{},{}", csv_field(&c.label), p.summary.sweep_value, s.placement, s.block, s.value);
            }
        }
    }
    out
}

/// Content hash of a text in the style of a git blob id, over SHA-256.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Writes one CSV per curve, optional raw records, the effective configuration
/// and a manifest. Returns the written paths.
pub fn write_output(dir: &Path, spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let id = spec.id.name();
    let mut written = Vec::new();
    let mut names = Vec::new();
    for c in &out.curves {
        let name = format!("{id}_{}.csv", slug(&c.label));
        std::fs::write(dir.join(&name), curve_csv(c))?;
        names.push(name.clone());
        written.push(dir.join(name));
    }
    if spec.run.experiment.raw {
        let name = format!("{id}_raw.csv");
        std::fs::write(dir.join(&name), raw_csv(&out.curves))?;
        names.push(name.clone());
        written.push(dir.join(name));
    }
    let config_text = spec.run.to_json_pretty();
    let config_name = format!("{id}_config.json");
    std::fs::write(dir.join(&config_name), &config_text)?;
    written.push(dir.join(&config_name));
    let manifest = json!({
        "experiment": id,
        "seed": spec.run.system.seed,
        "config_hash": content_hash(&config_text),
        "config_file": config_name,
        "spec": spec,
        "files": names,
        "notes": out.notes,
    });
    let manifest_name = dir.join(format!("{id}_manifest.json"));
    std::fs::write(&manifest_name, serde_json::to_string_pretty(&manifest)?)?;
    written.push(manifest_name);
    Ok(written)
}
