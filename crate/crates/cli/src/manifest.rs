use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use fleetroute::io::{self, RunManifest};

/// Collects a run manifest while a command executes.
pub struct Recorder {
    started: Instant,
    last: Instant,
    pub manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        let now = Instant::now();
        Recorder {
            started: now,
            last: now,
            manifest: RunManifest {
                command: command.to_string(),
                arguments: std::env::args().skip(1).collect(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                threads: rayon::current_num_threads(),
                ..Default::default()
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = io::file_hash(path)?;
        self.manifest.input_hashes.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn config(&mut self, path: &Path) -> Result<()> {
        self.manifest.config_hash = Some(io::file_hash(path)?);
        self.input(path)
    }

    /// Charges the time since the previous mark to `phase`.
    pub fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        *self.manifest.timings.entry(phase.to_string()).or_default() += (now - self.last).as_secs_f64();
        self.last = now;
    }

    /// Charges `seconds` measured elsewhere to `phase` and the rest of the
    /// time since the previous mark to `rest`.
    pub fn split(&mut self, phase: &str, seconds: f64, rest: &str) {
        let now = Instant::now();
        let elapsed = (now - self.last).as_secs_f64();
        let s = seconds.clamp(0.0, elapsed);
        *self.manifest.timings.entry(phase.to_string()).or_default() += s;
        *self.manifest.timings.entry(rest.to_string()).or_default() += elapsed - s;
        self.last = now;
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    /// The manifest file name as referenced from output files.
    pub fn reference(path: &Path) -> String {
        path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.mark("output");
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        io::write_json(path, "manifest", &self.manifest, None)?;
        Ok(())
    }
}

/// `--manifest` or `<output>.manifest.json`.
pub fn manifest_path(explicit: Option<&Path>, output: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = output.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
    }
}
