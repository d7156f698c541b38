//! Output files with provenance: `#`-prefixed CSV preambles, JSON envelopes
//! and a `.meta.json` sidecar next to every file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sa_ldp::config::ExperimentConfig;
pub use sa_ldp::sim::format_f64;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub struct Sink {
    pub dir: PathBuf,
    pub subcommand: &'static str,
    pub config: ExperimentConfig,
    pub hash: String,
    pub timestamp: Option<u64>,
    pub threads: usize,
}

impl Sink {
    pub fn new(dir: PathBuf, subcommand: &'static str, config: ExperimentConfig, no_timestamp: bool, threads: usize) -> Self {
        let hash = config.hash();
        let timestamp =
            (!no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Self { dir, subcommand, config, hash, timestamp, threads }
    }

    fn preamble(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# sa-ldp {} {}", env!("CARGO_PKG_VERSION"), self.subcommand);
        let _ = writeln!(s, "# config_hash: {}", self.hash);
        let _ = writeln!(s, "# seed: {}", self.config.seed);
        if let Some(t) = self.timestamp {
            let _ = writeln!(s, "# timestamp_unix: {t}");
        }
        let _ = writeln!(s, "# config:");
        for line in self.config.to_toml().lines() {
            let _ = writeln!(s, "#   {line}");
        }
        s
    }

    fn provenance(&self) -> Value {
        let mut v = json!({
            "tool": "sa-ldp",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config_hash": self.hash,
            "seed": self.config.seed,
        });
        if let Some(t) = self.timestamp {
            v["timestamp_unix"] = json!(t);
        }
        v
    }

    fn write(&self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        let mut meta = self.provenance();
        meta["schema_version"] = json!(SCHEMA_VERSION);
        meta["file"] = json!(name);
        meta["threads"] = json!(self.threads);
        meta["config"] = json!(self.config.to_toml());
        fs::write(sidecar(&path), serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
        Ok(path)
    }

    /// `body` starts with the header row.
    pub fn csv(&self, name: &str, body: &str) -> std::io::Result<PathBuf> {
        self.write(name, &(self.preamble() + body))
    }

    pub fn json(&self, name: &str, result: Value) -> std::io::Result<PathBuf> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": self.provenance(),
            "result": result,
        });
        self.write(name, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Appends one CSV row.
pub fn row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

pub fn numbered(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn cells(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| format_f64(*x))
}
