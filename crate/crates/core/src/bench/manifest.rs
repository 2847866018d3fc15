use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ExperimentSpec;
use crate::conflict::PRNG;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HardwareInfo {
    pub os: String,
    pub arch: String,
    pub cpu_model: String,
    pub logical_cpus: usize,
    pub memory_bytes: Option<u64>,
}

impl HardwareInfo {
    pub fn detect() -> Self {
        let cpuinfo = std::fs::read_to_string("/proc/cpuinfo").unwrap_or_default();
        let meminfo = std::fs::read_to_string("/proc/meminfo").unwrap_or_default();
        Self {
            os: os_name(),
            arch: std::env::consts::ARCH.into(),
            cpu_model: cpu_model(&cpuinfo).unwrap_or_else(|| "unknown".into()),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            memory_bytes: mem_total(&meminfo),
        }
    }
}

fn os_name() -> String {
    let pretty = std::fs::read_to_string("/etc/os-release")
        .ok()
        .and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("PRETTY_NAME="))
                .map(|v| v.trim_matches('"').to_string())
        });
    match pretty {
        Some(p) => format!("{} ({p})", std::env::consts::OS),
        None => std::env::consts::OS.into(),
    }
}

fn cpu_model(cpuinfo: &str) -> Option<String> {
    cpuinfo.lines().find_map(|l| {
        let (k, v) = l.split_once(':')?;
        matches!(k.trim(), "model name" | "Model" | "cpu model").then(|| v.trim().to_string())
    })
}

fn mem_total(meminfo: &str) -> Option<u64> {
    let line = meminfo.lines().find(|l| l.starts_with("MemTotal:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Written next to the CSV: what ran, where, and with which generator.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub crate_version: &'static str,
    pub optimized: bool,
    pub started_at: chrono::DateTime<chrono::Utc>,
    pub prng: &'static str,
    pub spec: ExperimentSpec,
    pub hardware: HardwareInfo,
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION"),
            optimized: !cfg!(debug_assertions),
            started_at: chrono::Utc::now(),
            prng: PRNG,
            spec: spec.clone(),
            hardware: HardwareInfo::detect(),
        }
    }
}

/// `results.csv` -> `results.manifest.json`
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}
