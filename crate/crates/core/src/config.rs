//! Plain key-value config files.
//!
//! Format: one `key = value` pair per line, `#` starts a comment, blank lines
//! ignored. Keys may repeat (collected in order) and may use dotted segments
//! for grouped values, e.g. `domain_ratio.math = 0.4`.

use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("missing required key {0:?}")]
    MissingKey(String),
    #[error("key {key:?}: cannot parse {value:?} as {ty}")]
    BadValue {
        key: String,
        value: String,
        ty: &'static str,
    },
    #[error("key {key:?}: invalid regex: {source}")]
    BadPattern {
        key: String,
        #[source]
        source: regex::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Parsed key-value config. Order of duplicate keys is preserved.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: Vec<(String, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    /// Last value for `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// All values for `key`, in file order.
    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    /// All `prefix.suffix = value` entries as `suffix -> value`, in sorted order.
    pub fn group(&self, prefix: &str) -> BTreeMap<String, String> {
        let dotted = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(&dotted)
                    .map(|suffix| (suffix.to_string(), v.clone()))
            })
            .collect()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    ty: "f64",
                })
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    ty: "u64",
                })
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    ty: "usize",
                })
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        Ok(self.get_u64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn require_u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.get_u64(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get_usize(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_dotted_keys() {
        let cfg = KvConfig::parse(
            "# curriculum\nmu_start = 0.9\n\nsigma = 0.2  # spread\ndomain_ratio.math = 0.5\ndomain_ratio.code = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.get("mu_start"), Some("0.9"));
        assert_eq!(cfg.require_f64("sigma").unwrap(), 0.2);
        let ratios = cfg.group("domain_ratio");
        assert_eq!(ratios.len(), 2);
        assert_eq!(ratios["math"], "0.5");
    }

    #[test]
    fn repeated_keys_keep_order_and_last_wins_for_get() {
        let cfg = KvConfig::parse("pattern = a\npattern = b\n").unwrap();
        assert_eq!(cfg.get_all("pattern"), vec!["a", "b"]);
        assert_eq!(cfg.get("pattern"), Some("b"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KvConfig::parse("ok = 1\nnot a pair\n").unwrap_err();
        match err {
            ConfigError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_numeric_value_names_the_key() {
        let cfg = KvConfig::parse("sigma = soft\n").unwrap();
        let err = cfg.require_f64("sigma").unwrap_err();
        assert!(err.to_string().contains("sigma"));
    }

    #[test]
    fn missing_required_key() {
        let cfg = KvConfig::parse("").unwrap();
        assert!(matches!(
            cfg.require_u64("total_steps"),
            Err(ConfigError::MissingKey(_))
        ));
    }
}
