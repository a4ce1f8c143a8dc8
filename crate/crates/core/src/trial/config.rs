//! Trial configuration files (TOML or JSON) with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use super::TrialConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    /// `.json` is JSON; everything else is read as TOML.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}syntax error: {message}", at(*.line))]
    Syntax { line: Option<usize>, message: String },
    #[error("override {spec:?}: {message}")]
    Override { spec: String, message: String },
    #[error("{}{field}: {message}", at(*.line))]
    Field { field: String, line: Option<usize>, message: String },
    #[error("{}{field}: {message}", at(*.line))]
    Invalid { field: String, line: Option<usize>, message: String },
}

fn at(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl ConfigError {
    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } | ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Override { spec, .. } => spec.split('=').next(),
            _ => None,
        }
    }

    /// 1-based line in the config file, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. } | ConfigError::Field { line, .. } | ConfigError::Invalid { line, .. } => {
                *line
            }
            _ => None,
        }
    }
}

pub fn load_trial_config(path: &Path, overrides: &[String]) -> Result<TrialConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_trial_config(&text, ConfigFormat::from_path(path), overrides)
}

/// Parses, applies `key.path=value` overrides, deserializes and validates.
///
/// Override values are read as JSON when they parse as JSON and as plain strings
/// otherwise, so `human.aim_sigma=1.5` and `left_arm=robot` both work.
pub fn parse_trial_config(text: &str, format: ConfigFormat, overrides: &[String]) -> Result<TrialConfig, ConfigError> {
    let mut value: Value = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_owned(),
        })?,
        ConfigFormat::Json => serde_json::from_str(text)
            .map_err(|e| ConfigError::Syntax { line: Some(e.line()), message: e.to_string() })?,
    };
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    let locate = |field: &str| match format {
        ConfigFormat::Toml => locate_toml_key(text, field),
        ConfigFormat::Json => None,
    };
    let config: TrialConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        ConfigError::Field { line: locate(&field), field, message: e.inner().to_string() }
    })?;
    config.validate().map_err(|e| match e {
        ConfigError::Invalid { field, message, .. } => ConfigError::Invalid { line: locate(&field), field, message },
        other => other,
    })?;
    Ok(config)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Path segments of a `a.b[2].c` field path.
fn field_segments(field: &str) -> Vec<String> {
    field.replace('[', ".").replace(']', "").split('.').filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Line of the TOML key at `field`, or of the deepest table or key enclosing it.
///
/// Only plain `[table]`, `[[array]]` headers and `key = value` lines are recognised,
/// which covers hand-written config files.
fn locate_toml_key(text: &str, field: &str) -> Option<usize> {
    let target = field_segments(field);
    let mut table: Vec<String> = Vec::new();
    let mut array_counts: std::collections::HashMap<String, usize> = Default::default();
    let mut best: Option<(usize, usize)> = None;
    let unquote = |k: &str| k.trim().trim_matches('"').to_owned();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let path = if let Some(name) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            let name = name.trim().to_owned();
            let n = array_counts.entry(name.clone()).or_default();
            table = name.split('.').map(unquote).collect();
            table.push(n.to_string());
            *n += 1;
            table.clone()
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            table = name.split('.').map(unquote).collect();
            table.clone()
        } else if let Some((key, _)) = line.split_once('=').filter(|_| !line.starts_with('#')) {
            let mut p = table.clone();
            p.extend(key.split('.').map(unquote));
            p
        } else {
            continue;
        };
        let encloses = path.len() <= target.len() && target[..path.len()] == path[..];
        if encloses && best.is_none_or(|(depth, _)| path.len() > depth) {
            best = Some((path.len(), i + 1));
        }
    }
    best.map(|(_, line)| line)
}

fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::Override { spec: spec.to_owned(), message: message.to_owned() };
    let (key, raw) = spec.split_once('=').ok_or_else(|| err("expected key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(err("empty key segment"));
    }
    let new = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*seg).to_owned(), new);
                    return Ok(());
                }
                map.entry(*seg).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| err("array segments must be indices"))?;
                let slot = items.get_mut(idx).ok_or_else(|| err("array index out of range"))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => return Err(err("path runs through a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Arm;

    const SAMPLE: &str = r#"
version = 1
subjects = 5
seed = 7

[human]
aim_sigma = 2.0

[[patches]]
name = "cheek"
width = 76.0
height = 76.0
curvature_radius = 60.0
"#;

    #[test]
    fn toml_with_overrides() {
        let cfg = parse_trial_config(
            SAMPLE,
            ConfigFormat::Toml,
            &["human.drift_sigma=0.25".into(), "left_arm=robot".into(), "patches.0.width=70".into()],
        )
        .unwrap();
        assert_eq!(cfg.subjects, 5);
        assert_eq!(cfg.human.aim_sigma, 2.0);
        assert_eq!(cfg.human.drift_sigma, 0.25);
        assert_eq!(cfg.left_arm, Arm::Robot);
        assert_eq!(cfg.patches[0].width, 70.0);
        assert_eq!(cfg.patches.len(), 1);
    }

    #[test]
    fn json_matches_toml() {
        let t = parse_trial_config(SAMPLE, ConfigFormat::Toml, &[]).unwrap();
        let v: Value = toml::from_str(SAMPLE).unwrap();
        let j = parse_trial_config(&v.to_string(), ConfigFormat::Json, &[]).unwrap();
        assert_eq!(t, j);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_trial_config(SAMPLE, ConfigFormat::Toml, &["human.aim_sigma=\"wide\"".into()]).unwrap_err();
        assert_eq!(e.field(), Some("human.aim_sigma"));
        let e = parse_trial_config(SAMPLE, ConfigFormat::Toml, &["human.typo=1".into()]).unwrap_err();
        assert!(e.to_string().contains("typo"), "{e}");
        let e = parse_trial_config(SAMPLE, ConfigFormat::Toml, &["version=2".into()]).unwrap_err();
        assert_eq!(e.field(), Some("version"));
        let e = parse_trial_config(SAMPLE, ConfigFormat::Toml, &["subjects".into()]).unwrap_err();
        assert!(matches!(e, ConfigError::Override { .. }));
        let e = parse_trial_config("subjects = [", ConfigFormat::Toml, &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: Some(1), .. }));
    }

    #[test]
    fn errors_carry_the_file_line() {
        let e = parse_trial_config(&SAMPLE.replace("aim_sigma = 2.0", "aim_sigma = \"x\""), ConfigFormat::Toml, &[])
            .unwrap_err();
        assert_eq!((e.field(), e.line()), (Some("human.aim_sigma"), Some(7)));
        let e =
            parse_trial_config(&SAMPLE.replace("width = 76.0", "width = -1.0"), ConfigFormat::Toml, &[]).unwrap_err();
        assert_eq!((e.field(), e.line()), (Some("patches[0]"), Some(9)));
        let e =
            parse_trial_config(&SAMPLE.replace("subjects = 5", "subjects = 1"), ConfigFormat::Toml, &[]).unwrap_err();
        assert_eq!(e.line(), Some(3));
        assert!(e.to_string().starts_with("line 3: subjects"), "{e}");
        let e = parse_trial_config("{\n\"subjects\": }", ConfigFormat::Json, &[]).unwrap_err();
        assert_eq!(e.line(), Some(2));
    }
}
