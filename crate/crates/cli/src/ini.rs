//! Minimal INI reader: `[section]` headers, `key = value` lines, and `#` or
//! `;` comments (whole-line, or inline after whitespace). Keys and section
//! names are case-insensitive; duplicates are rejected.

use std::collections::BTreeMap;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(lineno, "unterminated section header"))?
                    .trim()
                    .to_ascii_lowercase();
                if name.is_empty() {
                    return Err(CliError::config(lineno, "empty section name"));
                }
                if ini.sections.contains_key(&name) {
                    return Err(CliError::config(
                        lineno,
                        format!("section [{name}] appears twice"),
                    ));
                }
                ini.sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(lineno, format!("expected `key = value`, found `{line}`"))
            })?;
            let section = current
                .as_ref()
                .ok_or_else(|| CliError::config(lineno, "key outside of any [section]"))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(CliError::config(lineno, "empty key"));
            }
            let map = ini
                .sections
                .get_mut(section)
                .expect("section inserted above");
            if map.contains_key(&key) {
                return Err(CliError::config(
                    lineno,
                    format!("key `{key}` repeated in [{section}]"),
                ));
            }
            map.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line: lineno,
                },
            );
        }
        Ok(ini)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Fails on any section or key not in `allowed`, naming the valid ones.
    pub fn check_keys(&self, allowed: &[(&str, &[&str])]) -> Result<(), CliError> {
        for (section, keys) in &self.sections {
            let Some((_, valid)) = allowed.iter().find(|(s, _)| s == section) else {
                let names: Vec<&str> = allowed.iter().map(|(s, _)| *s).collect();
                return Err(CliError::Data(format!(
                    "unknown section [{section}] (valid: {})",
                    names.join(", ")
                )));
            };
            for (key, entry) in keys {
                if !valid.contains(&key.as_str()) {
                    return Err(CliError::config(
                        entry.line,
                        format!(
                            "unknown key `{key}` in [{section}] (valid: {})",
                            valid.join(", ")
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}
