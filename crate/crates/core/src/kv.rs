//! Minimal INI-style key/value reader used by model definition files and run
//! configurations: `[section]` headers, `key = value` lines, `#` comments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Sections {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Sections {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Sections::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(stripped) = line.strip_prefix('[') {
                let name = stripped.strip_suffix(']').ok_or_else(|| {
                    Error::Invalid(format!("line {}: unterminated section header", lineno + 1))
                })?;
                current = name.trim().to_lowercase();
                out.sections.entry(current.clone()).or_default();
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Invalid(format!(
                    "line {}: expected `key = value`, found `{line}`",
                    lineno + 1
                )));
            };
            let key = line[..eq].trim().to_lowercase();
            let value = line[eq + 1..].trim().to_owned();
            if key.is_empty() {
                return Err(Error::Invalid(format!("line {}: empty key", lineno + 1)));
            }
            out.sections
                .entry(current.clone())
                .or_default()
                .insert(key, value);
        }
        Ok(out)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => parse_extended_f64(raw)
                .map(Some)
                .ok_or_else(|| Error::Invalid(format!("[{section}] {key}: bad number `{raw}`"))),
        }
    }

    /// Canonical re-serialization, used for content hashing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, kvs) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in kvs {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Parses a float, accepting `inf`, `-inf`, and `+inf` spellings.
pub fn parse_extended_f64(raw: &str) -> Option<f64> {
    match raw.trim().to_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "\n# model\n[domain]\nlower = -inf # open left\nupper = inf\n\n[coefficients]\nb = -y\n";
        let s = Sections::parse(text).unwrap();
        assert_eq!(s.f64("domain", "lower").unwrap(), Some(f64::NEG_INFINITY));
        assert_eq!(s.get("coefficients", "b"), Some("-y"));
        assert_eq!(s.get("coefficients", "missing"), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Sections::parse("[oops\n").is_err());
        assert!(Sections::parse("novalue\n").is_err());
    }
}
