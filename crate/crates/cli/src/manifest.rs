//! Run manifests.
//!
//! The digest covers only what determines the results (tool version,
//! command, input and config digests, seeds). Wall-clock times and output
//! paths are recorded alongside but excluded, so identical runs share a
//! digest and produce identical files.

use std::time::Instant;

use obsdecomp::io::sha256_hex;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Deterministic inputs: digests of input files and configs, numeric flags.
    pub inputs: Value,
    pub seeds: Value,
    pub digest: String,
    /// Seconds per phase, in execution order.
    pub wall_clock: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Value, seeds: Value) -> Self {
        let tool = env!("CARGO_PKG_NAME");
        let version = env!("CARGO_PKG_VERSION");
        let keyed = json!({ "tool": tool, "version": version, "command": command, "inputs": inputs, "seeds": seeds });
        let digest = sha256_hex(keyed.to_string().as_bytes());
        Self { tool, version, command: command.to_owned(), inputs, seeds, digest, wall_clock: Vec::new() }
    }

    pub fn short(&self) -> &str {
        &self.digest[..16]
    }

    /// Runs `f` and records its duration under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.wall_clock.push((phase.to_owned(), start.elapsed().as_secs_f64()));
        out
    }
}
