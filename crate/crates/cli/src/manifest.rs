//! Run manifests: the full configuration plus provenance keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use critex::Field;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.ini";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub tool_version: String,
    /// sha256 of the `u0` and `w` snapshot encodings.
    pub u0_sha256: String,
    pub w_sha256: String,
    pub timestamp: u64,
}

/// Hex sha256 of the snapshot bytes of `f`.
pub fn fingerprint(f: &Field) -> String {
    let mut bytes = Vec::new();
    f.write_snapshot(&mut bytes).expect("writing to memory");
    let digest = Sha256::digest(&bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig, u0: &Field, w: &Field) -> Self {
        Self {
            command: command.to_string(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            u0_sha256: fingerprint(u0),
            w_sha256: fingerprint(w),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        format!(
            "# Re-run with: critex {} <this file> --out <dir>\n[manifest]\ncommand_name = {}\ntoolversion_text = {}\ntimestamp_unix = {}\ngrid_text = N={} L={} n={}\nu0_sha256 = {}\nw_sha256 = {}\n\n{}",
            self.command,
            self.command,
            self.tool_version,
            self.timestamp,
            c.dim,
            c.half_width,
            c.points,
            self.u0_sha256,
            self.w_sha256,
            c.serialize()
        )
    }
}

/// Mismatches between recorded and recomputed fingerprints.
pub fn verify_fingerprints(recorded: &BTreeMap<String, String>, u0: &Field, w: &Field) -> Vec<String> {
    let mut bad = Vec::new();
    for (key, field) in [("u0_sha256", u0), ("w_sha256", w)] {
        if let Some(want) = recorded.get(key) {
            let got = fingerprint(field);
            if &got != want {
                bad.push(format!("{key}: manifest has {want}, data hashes to {got}"));
            }
        }
    }
    bad
}
