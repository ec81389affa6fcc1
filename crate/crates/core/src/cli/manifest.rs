use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataio::{render_key_values, write_atomic};
use crate::error::{Error, Result};

/// Record of one command run, written as `key=value` lines.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    started: Instant,
}

impl RunManifest {
    pub fn start(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn render(&self) -> String {
        let mut entries = vec![
            ("subcommand".to_string(), self.subcommand.clone()),
            ("version".to_string(), self.version.to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        entries.extend(self.config.iter().map(|(k, v)| (format!("config.{k}"), v.clone())));
        entries.push(("wall_time_s".to_string(), format!("{:.3}", self.wall_time_s)));
        entries.extend(
            self.outputs
                .iter()
                .map(|p| ("output".to_string(), p.display().to_string())),
        );
        render_key_values(&entries)
    }

    /// Stops the clock, checks every listed output exists, and writes the manifest.
    pub fn finish(mut self, path: &Path) -> Result<Self> {
        self.wall_time_s = self.started.elapsed().as_secs_f64();
        if let Some(missing) = self.outputs.iter().find(|p| !p.is_file()) {
            return Err(Error::io(
                missing,
                std::io::Error::new(std::io::ErrorKind::NotFound, "listed output was not written"),
            ));
        }
        write_atomic(path, self.render().as_bytes())?;
        Ok(self)
    }
}
