use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

/// Run record kept next to the data. It is written with status
/// `incomplete` before any output and rewritten when the run ends.
pub struct Manifest {
    path: PathBuf,
    body: Value,
    started: Instant,
}

impl Manifest {
    pub fn begin(path: &Path, subcommand: &str, config: Value, seed: u64) -> io::Result<Self> {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let body = json!({
            "subcommand": subcommand,
            "config": config,
            "seed": seed,
            "seed_hex": format!("{seed:#018x}"),
            "tool_version": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
            "started_unix": started_unix,
            "status": "incomplete",
            "outputs": [],
            "warnings": [],
        });
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let m = Manifest {
            path: path.to_path_buf(),
            body,
            started: Instant::now(),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.body).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&self.path, text)
    }

    pub fn add_output(&mut self, file: &Path) -> io::Result<()> {
        let name = file.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        self.body["outputs"].as_array_mut().expect("array").push(json!(name));
        self.write()
    }

    pub fn finish(mut self, status: &str, warnings: &[String], extra: Option<Value>) -> io::Result<()> {
        self.body["status"] = json!(status);
        self.body["warnings"] = json!(warnings);
        self.body["wall_clock_seconds"] = json!(self.started.elapsed().as_secs_f64());
        if let Some(v) = extra {
            self.body["summary"] = v;
        }
        self.write()
    }
}
