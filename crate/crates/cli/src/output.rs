//! Output files, run metadata and error reporting.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use lasercover_core::artifact_json;
use lasercover_core::trial::ConfigError;

use crate::{Common, Format, SeedArg};

pub const METADATA_FILE: &str = "metadata.json";

/// Failure of a command. `Input` covers bad configs and unreadable input files
/// (exit 2); everything else is a runtime failure (exit 1).
#[derive(Debug)]
pub enum CliError {
    Input { kind: &'static str, message: String, file: Option<PathBuf>, field: Option<String>, line: Option<usize> },
    Runtime { kind: &'static str, message: String },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: u8,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

impl CliError {
    pub fn config(e: ConfigError, file: Option<&Path>) -> Self {
        CliError::Input {
            kind: "config",
            field: e.field().map(str::to_owned),
            line: e.line(),
            message: e.to_string(),
            file: file.map(Path::to_path_buf),
        }
    }

    pub fn input(kind: &'static str, file: &Path, message: impl ToString) -> Self {
        CliError::Input { kind, message: message.to_string(), file: Some(file.to_path_buf()), field: None, line: None }
    }

    pub fn runtime(kind: &'static str, message: impl ToString) -> Self {
        CliError::Runtime { kind, message: message.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Runtime { .. } => 1,
        }
    }

    /// Human-readable line, then one JSON line for tools, both on stderr.
    pub fn report(&self) {
        let line = match self {
            CliError::Input { kind, message, file, field, line } => {
                match file {
                    Some(f) => eprintln!("error: {}: {message}", f.display()),
                    None => eprintln!("error: {message}"),
                }
                ErrorLine {
                    error: kind,
                    exit_code: 2,
                    message,
                    file: file.as_deref(),
                    field: field.as_deref(),
                    line: *line,
                }
            }
            CliError::Runtime { kind, message } => {
                eprintln!("error: {message}");
                ErrorLine { error: kind, exit_code: 1, message, file: None, field: None, line: None }
            }
        };
        eprintln!("{}", serde_json::to_string(&line).expect("error line serializes"));
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    started_unix: f64,
    finished_unix: f64,
    config: Option<&'a Path>,
    overrides: &'a [String],
    seed: Option<u64>,
    seed_generated: bool,
    outputs: &'a [String],
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// One command invocation: collects output files and writes `metadata.json` last.
///
/// Primary outputs depend only on inputs and the seed; the wall-clock times live in
/// the metadata file alone.
pub struct Run<'a> {
    common: &'a Common,
    command: &'static str,
    started: f64,
    seed: Option<(u64, bool)>,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(common: &'a Common, command: &'static str) -> Self {
        Self { common, command, started: now(), seed: None, outputs: Vec::new() }
    }

    /// `--seed`, a freshly drawn seed for `--seed random`, or `default`.
    pub fn seed(&mut self, default: u64) -> u64 {
        let (seed, generated) = match self.common.seed {
            Some(SeedArg::Fixed(s)) => (s, false),
            Some(SeedArg::Random) => (rand::random(), true),
            None => (default, false),
        };
        self.seed = Some((seed, generated));
        seed
    }

    pub fn writes_files(&self) -> bool {
        self.common.out.is_some()
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let Some(dir) = &self.common.out else { return Ok(()) };
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime("io", format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::runtime("io", format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_owned());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, artifact_json(value).as_bytes())
    }

    /// Prints the primary result on stdout when no output directory is set.
    pub fn primary(&self, json: impl FnOnce() -> String, csv: impl FnOnce() -> String) {
        if self.writes_files() {
            return;
        }
        match self.common.format {
            Format::Json => print!("{}", json()),
            Format::Csv => print!("{}", csv()),
        }
    }

    /// One-line summary, printed only when results went to files.
    pub fn summary(&self, text: &str) {
        if self.writes_files() {
            println!("{text}");
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if !self.writes_files() {
            return Ok(());
        }
        let outputs = std::mem::take(&mut self.outputs);
        let meta = Metadata {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            started_unix: self.started,
            finished_unix: now(),
            config: self.common.config.as_deref(),
            overrides: &self.common.overrides,
            seed: self.seed.map(|s| s.0),
            seed_generated: self.seed.is_some_and(|s| s.1),
            outputs: &outputs,
        };
        self.write_json(METADATA_FILE, &meta)
    }
}

/// CSV text of serializable rows.
pub fn csv_of<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is UTF-8")
}
