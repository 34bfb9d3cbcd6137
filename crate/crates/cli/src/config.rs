//! Run configuration: a flat key = value file plus command-line overrides,
//! echoed into a manifest so every run can be reproduced bitwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use turnpike::cache::content_hash;
use turnpike::error::{Error, Result};
use turnpike::kv::{parse_extended_f64, Sections};

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "model",
    "p",
    "y0",
    "window",
    "grid_n",
    "refine",
    "horizon",
    "horizons",
    "slice_times",
    "n_paths",
    "dt",
    "t_max",
    "time_window",
    "epsilon",
    "seed",
    "initial_state",
    "measure",
    "out_dir",
    "cache_dir",
    "bs_rate",
    "bs_drift",
    "bs_vol",
    "t_grid",
    "utility",
    "utility_p",
    "gammas",
    "weights",
    "capitals",
    "dump_paths",
];

impl RunConfig {
    pub fn load(config_path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        if let Some(path) = config_path {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Invalid(format!("cannot read config {}: {e}", path.display()))
            })?;
            let sections = Sections::parse(&text)?;
            if let Some(top) = sections.section("") {
                for (k, v) in top {
                    values.insert(k.clone(), v.clone());
                }
            }
        }
        for (k, v) in overrides {
            values.insert(k.to_lowercase(), v.clone());
        }
        for key in values.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Invalid(format!("unknown configuration key `{key}`")));
            }
        }
        Ok(RunConfig { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(raw) => parse_extended_f64(raw)
                .ok_or_else(|| Error::Invalid(format!("{key}: bad number `{raw}`"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Invalid(format!("{key}: bad integer `{raw}`"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Invalid(format!("{key}: bad integer `{raw}`"))),
        }
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_owned()
    }

    /// Whitespace- or comma-separated list of numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    parse_extended_f64(s)
                        .ok_or_else(|| Error::Invalid(format!("{key}: bad number `{s}`")))
                })
                .collect(),
        }
    }

    pub fn window(&self) -> Result<turnpike::grid::Window> {
        let parts = self.f64_list_or("window", &[-8.0, 8.0])?;
        if parts.len() != 2 || !(parts[0] < parts[1]) {
            return Err(Error::Invalid("window must be two increasing numbers".into()));
        }
        Ok(turnpike::grid::Window {
            lo: parts[0],
            hi: parts[1],
        })
    }

    pub fn model_path(&self) -> Result<PathBuf> {
        self.raw("model")
            .map(PathBuf::from)
            .ok_or_else(|| Error::Invalid("no model file configured (key `model`)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.string_or("out_dir", "out"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        PathBuf::from(self.string_or("cache_dir", "cache"))
    }

    /// Canonical `key = value` listing of the resolved configuration.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes the reproduction manifest: command, resolved configuration,
    /// content hashes, and the crate version.
    pub fn write_manifest(&self, command: &str, model_descriptor: Option<&str>) -> Result<PathBuf> {
        let out_dir = self.out_dir();
        fs::create_dir_all(&out_dir)?;
        let canonical = self.canonical();
        let mut manifest = String::new();
        let _ = writeln!(manifest, "command = {command}");
        let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(manifest, "config_hash = {}", content_hash(&[&canonical]));
        if let Some(desc) = model_descriptor {
            let _ = writeln!(manifest, "model_hash = {}", content_hash(&[desc]));
        }
        manifest.push_str("\n# resolved configuration\n");
        manifest.push_str(&canonical);
        let path = out_dir.join("manifest.txt");
        fs::write(&path, manifest)?;
        Ok(path)
    }
}
