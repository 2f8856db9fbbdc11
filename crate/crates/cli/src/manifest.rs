use std::path::Path;
use std::process::Command;

use serde::Serialize;
use serde_json::Value;

use crate::outcome::Outcome;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: Value,
    pub version: String,
    /// `git describe` of the working directory, when it is a checkout.
    pub git: Option<String>,
}

fn git_describe() -> Option<String> {
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub fn write(out: &Path, command: &str, seed: u64, config: Value) -> Outcome {
    std::fs::create_dir_all(out)?;
    let manifest = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        seed,
        config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        git: git_describe(),
    };
    std::fs::write(out.join(RUN_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
