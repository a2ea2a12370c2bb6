//! Run directories and structured log lines.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{Provenance, ResolvedConfig, RunConfig};
use crate::error::{Error, Result};

/// Environment variable holding the default root for new run directories.
pub const RUN_ROOT_ENV: &str = "JERKROM_RUN_ROOT";
pub const DEFAULT_RUN_ROOT: &str = "runs";

pub const CONFIG_FILE: &str = "config.toml";
pub const CONFIGS_DIR: &str = "configs";
pub const LOG_FILE: &str = "log.txt";

/// Picks the run directory: `explicit` if given, otherwise a fresh
/// timestamped directory under `root`.
pub fn choose_run_dir(explicit: Option<&Path>, root: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => root.join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()),
    }
}

/// Refuses to touch an existing output unless `force` is set; with `force`
/// the old output is removed.
pub fn claim_output(path: &Path, force: bool) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(Error::config(
            "--force",
            format!("{} already exists; pass --force to overwrite", path.display()),
        ));
    }
    let removed = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    removed.map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes to JSON");
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Corruption {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Stores the resolved configuration of a run: `config.toml` once per run
/// directory and `configs/<command>.toml` for every command. A command whose
/// training fingerprint differs from the stored run config is refused
/// unless `force` is set, in which case `config.toml` is replaced.
pub fn record_config(run_dir: &Path, resolved: &ResolvedConfig, command: &str, force: bool) -> Result<()> {
    ensure_dir(&run_dir.join(CONFIGS_DIR))?;
    let path = run_dir.join(CONFIG_FILE);
    let text = resolved.config.to_toml();
    let stored = match std::fs::read_to_string(&path) {
        Ok(s) => Some(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&path, e)),
    };
    let fresh = match stored {
        None => true,
        Some(s) => {
            let old: RunConfig = toml::from_str(&s).map_err(|e| Error::Corruption {
                path: path.clone(),
                msg: e.message().to_string(),
            })?;
            if old.fingerprint() != resolved.config.fingerprint() {
                if !force {
                    return Err(Error::config(
                        "--force",
                        format!(
                            "{} was created with a different data/model/train configuration; pass --force to replace it",
                            path.display()
                        ),
                    ));
                }
                true
            } else {
                false
            }
        }
    };
    if fresh {
        write_text(&path, &text)?;
    }
    write_text(&run_dir.join(CONFIGS_DIR).join(format!("{command}.toml")), &text)?;
    #[derive(serde::Serialize)]
    struct Record<'a> {
        command: &'a str,
        fingerprint: String,
        data_fingerprint: String,
        #[serde(flatten)]
        provenance: &'a Provenance,
    }
    write_json(
        &run_dir.join(CONFIGS_DIR).join(format!("{command}.provenance.json")),
        &Record {
            command,
            fingerprint: resolved.config.fingerprint(),
            data_fingerprint: resolved.config.data_fingerprint(),
            provenance: &resolved.provenance,
        },
    )
}

/// Writes `timestamp level command key=value ...` lines to stderr and,
/// once a run directory is known, to its log file.
pub struct Logger {
    command: String,
    file: Option<File>,
    quiet: bool,
}

impl Logger {
    pub fn new(command: &str, quiet: bool) -> Self {
        Logger {
            command: command.to_string(),
            file: None,
            quiet,
        }
    }

    pub fn attach(&mut self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(LOG_FILE);
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        self.file = Some(f);
        Ok(())
    }

    pub fn line(&mut self, level: &str, event: &str, fields: &[(&str, String)]) {
        let mut s = format!(
            "{} {level} {} event={event}",
            chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ"),
            self.command
        );
        for (k, v) in fields {
            if v.contains(char::is_whitespace) || v.is_empty() {
                s.push_str(&format!(" {k}={v:?}"));
            } else {
                s.push_str(&format!(" {k}={v}"));
            }
        }
        if !self.quiet {
            eprintln!("{s}");
        }
        if let Some(f) = self.file.as_mut() {
            // A failing log write must not abort a long run.
            let _ = writeln!(f, "{s}");
        }
    }

    pub fn info(&mut self, event: &str, fields: &[(&str, String)]) {
        self.line("INFO", event, fields);
    }

    pub fn warn(&mut self, event: &str, fields: &[(&str, String)]) {
        self.line("WARN", event, fields);
    }

    pub fn error(&mut self, event: &str, fields: &[(&str, String)]) {
        self.line("ERROR", event, fields);
    }
}
