//! Flat `key = value` experiment configs: one assignment per line, `#`
//! starts a comment, dotted keys name sections (`sim.epoch_ts`). No nesting
//! and no quoting, so values cannot contain `#`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Syntax { line: usize, msg: String },
    Missing(String),
    Invalid { key: String, msg: String },
    Conflict(String),
    Unknown(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "config: {msg}"),
            ConfigError::Syntax { line, msg } => write!(f, "config line {line}: {msg}"),
            ConfigError::Missing(key) => write!(f, "config: missing key `{key}`"),
            ConfigError::Invalid { key, msg } => write!(f, "config key `{key}`: {msg}"),
            ConfigError::Conflict(msg) => write!(f, "config: {msg}"),
            ConfigError::Unknown(key) => write!(f, "config: unknown key `{key}`"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parsed but untyped config. Getters mark keys as read; `finish` rejects
/// anything left over so typos surface instead of silently defaulting.
#[derive(Debug)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    lines: BTreeMap<String, usize>,
    read: BTreeSet<String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<RawConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        RawConfig::parse(&text, base_dir)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<RawConfig, ConfigError> {
        let mut values = BTreeMap::new();
        let mut lines = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
            {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("bad key {key:?}"),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("empty value for `{key}`"),
                });
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            lines.insert(key, line_no);
        }
        Ok(RawConfig { values, lines, read: BTreeSet::new(), base_dir })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn opt_str(&mut self, key: &str) -> Option<String> {
        self.read.insert(key.to_string());
        self.values.get(key).cloned()
    }

    pub fn req_str(&mut self, key: &str) -> Result<String, ConfigError> {
        self.opt_str(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.opt_str(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| ConfigError::Invalid {
                key: key.to_string(),
                msg: format!("cannot parse {v:?}: {e}"),
            }),
        }
    }

    pub fn req<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn opt_bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.opt_str(key).as_deref() {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => Err(ConfigError::Invalid {
                key: key.to_string(),
                msg: format!("expected true or false, got {v:?}"),
            }),
        }
    }

    /// Comma-separated list, items trimmed.
    pub fn opt_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.opt_str(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
    }

    pub fn opt_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.opt_list(key) {
            None => Ok(None),
            Some(items) => items
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|e| ConfigError::Invalid {
                        key: key.to_string(),
                        msg: format!("cannot parse {s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()
                .map(Some),
        }
    }

    /// Path value, resolved against the config file's directory when
    /// relative.
    pub fn opt_path(&mut self, key: &str) -> Option<PathBuf> {
        self.opt_str(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    /// Errors on the first key that was never read by any getter.
    pub fn finish(&self) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !self.read.contains(key) {
                return Err(ConfigError::Unknown(key.clone()));
            }
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.get(key).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RawConfig {
        RawConfig::parse(text, PathBuf::from("/tmp")).unwrap()
    }

    #[test]
    fn parses_comments_blanks_and_dotted_keys() {
        let mut cfg = parse(
            "# run setup\n\
             sim.epoch_ts = 100   # cycles\n\
             \n\
             scheduler = edf-h\n",
        );
        assert_eq!(cfg.req::<u64>("sim.epoch_ts").unwrap(), 100);
        assert_eq!(cfg.req_str("scheduler").unwrap(), "edf-h");
        cfg.finish().unwrap();
        assert_eq!(cfg.line_of("scheduler"), Some(4));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            RawConfig::parse("just words\n", PathBuf::new()),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RawConfig::parse("a = 1\na = 2\n", PathBuf::new()),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            RawConfig::parse("a =\n", PathBuf::new()),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_keys_are_named() {
        let cfg = parse("sim.epoch_tz = 5\n");
        match cfg.finish() {
            Err(ConfigError::Unknown(k)) => assert_eq!(k, "sim.epoch_tz"),
            other => panic!("expected Unknown, got {other:?}"),
        }
    }

    #[test]
    fn typed_getters_report_the_key() {
        let mut cfg = parse("sim.seed = banana\n");
        match cfg.req::<u64>("sim.seed") {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "sim.seed"),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = RawConfig::parse("trace.path = t.csv\n", PathBuf::from("/data/run")).unwrap();
        assert_eq!(cfg.opt_path("trace.path").unwrap(), PathBuf::from("/data/run/t.csv"));
    }

    #[test]
    fn lists_split_on_commas() {
        let mut cfg = parse("tenants.targets = 0.7, 0.8,0.9\n");
        assert_eq!(cfg.opt_f64_list("tenants.targets").unwrap().unwrap(), vec![0.7, 0.8, 0.9]);
    }
}
