//! Flat `key = value` config files and the range grammar shared by all
//! subcommands. Command-line flags always win over file values.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Union of the keys any subcommand reads; one file can drive several
/// subcommands, each picking its own subset. Unknown keys are rejected so
/// typos fail loudly instead of silently running defaults.
const KNOWN_KEYS: &[&str] = &[
    "alpha_range",
    "fidelity_range",
    "theta",
    "distance_range",
    "loss_db_per_km",
    "lambda",
    "scheme",
    "trials",
    "seed",
    "window",
    "format",
    "out",
];

pub struct FileConfig(HashMap<String, String>);

impl FileConfig {
    pub fn empty() -> Self {
        Self(HashMap::new())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut map = HashMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    index + 1
                ))
            })?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "{}:{}: unknown key {key}",
                    path.display(),
                    index + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// Grid grammar: `"x"` is the single point x, `"lo,hi,count"` is `count`
/// evenly spaced points from lo to hi inclusive.
pub fn parse_range(key: &str, spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("{key} = {spec:?}: {why}"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [single] => {
            let x: f64 = single.parse().map_err(|_| bad("not a number"))?;
            if !x.is_finite() {
                return Err(bad("not finite"));
            }
            Ok(vec![x])
        }
        [lo, hi, count] => {
            let lo: f64 = lo.parse().map_err(|_| bad("bad lower endpoint"))?;
            let hi: f64 = hi.parse().map_err(|_| bad("bad upper endpoint"))?;
            let count: usize = count.parse().map_err(|_| bad("bad point count"))?;
            if !lo.is_finite() || !hi.is_finite() {
                return Err(bad("endpoints must be finite"));
            }
            if count == 0 {
                return Err(bad("point count must be at least 1"));
            }
            if count == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect())
        }
        _ => Err(bad("expected \"x\" or \"lo,hi,count\"")),
    }
}

pub fn range_of(
    cli: &Option<String>,
    file: &FileConfig,
    key: &'static str,
    default: &str,
) -> Result<Vec<f64>, CliError> {
    let spec = cli
        .clone()
        .or_else(|| file.get(key).map(str::to_string))
        .unwrap_or_else(|| default.to_string());
    parse_range(key, &spec)
}

pub fn f64_of(
    cli: Option<f64>,
    file: &FileConfig,
    key: &'static str,
    default: f64,
) -> Result<f64, CliError> {
    match (cli, file.get(key)) {
        (Some(x), _) => Ok(x),
        (None, Some(text)) => text
            .parse()
            .map_err(|_| CliError::Config(format!("{key} = {text:?} is not a number"))),
        (None, None) => Ok(default),
    }
}

pub fn u64_of(
    cli: Option<u64>,
    file: &FileConfig,
    key: &'static str,
    default: u64,
) -> Result<u64, CliError> {
    match (cli, file.get(key)) {
        (Some(x), _) => Ok(x),
        (None, Some(text)) => text
            .parse()
            .map_err(|_| CliError::Config(format!("{key} = {text:?} is not a whole number"))),
        (None, None) => Ok(default),
    }
}

pub fn window_of(cli: Option<f64>, file: &FileConfig) -> Result<Option<f64>, CliError> {
    match (cli, file.get("window")) {
        (Some(x), _) => Ok(Some(x)),
        (None, Some(text)) => text
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("window = {text:?} is not a number"))),
        (None, None) => Ok(None),
    }
}

pub fn str_of(cli: &Option<String>, file: &FileConfig, key: &'static str, default: &str) -> String {
    cli.clone()
        .or_else(|| file.get(key).map(str::to_string))
        .unwrap_or_else(|| default.to_string())
}

pub fn path_of(cli: &Option<PathBuf>, file: &FileConfig) -> Option<PathBuf> {
    cli.clone().or_else(|| file.get("out").map(PathBuf::from))
}
