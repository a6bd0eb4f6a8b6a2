//! Flat `key = value` configuration merged with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// One configurable parameter of a subcommand. `default: None` marks it
/// required.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
        help,
    }
}

pub const fn required(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: None,
        help,
    }
}

/// Flag spelling of a key: underscores become hyphens.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

/// `(key, value, line)` triples from a config file, in file order.
pub type Entries = Vec<(String, String, usize)>;

pub fn parse_config(text: &str, path: &Path) -> Result<Entries, CliError> {
    let mut out: Entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{line}: expected `key = value`, found `{trimmed}`",
                path.display()
            )));
        };
        let k = canonical(k);
        if k.is_empty() {
            return Err(CliError::Config(format!(
                "{}:{line}: empty key",
                path.display()
            )));
        }
        if let Some((_, _, first)) = out.iter().find(|(seen, _, _)| *seen == k) {
            return Err(CliError::Config(format!(
                "{}:{line}: duplicate key `{k}` (first set on line {first})",
                path.display()
            )));
        }
        out.push((k, v.trim().to_string(), line));
    }
    Ok(out)
}

/// Every key of a subcommand with its final value and where it came from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: &'static str,
    pub values: Vec<(Key, String, Origin)>,
}

impl Resolved {
    /// Defaults, then `file`, then `flags`. Unknown file keys and missing
    /// required keys are errors.
    pub fn merge(
        command: &'static str,
        keys: &[Key],
        file: Option<(&Path, Entries)>,
        flags: &[(&'static str, String)],
    ) -> Result<Self, CliError> {
        let mut values: Vec<(Key, Option<String>, Origin)> = keys
            .iter()
            .map(|k| (*k, k.default.map(str::to_string), Origin::Default))
            .collect();
        if let Some((path, entries)) = file {
            for (k, v, line) in entries {
                let Some(slot) = values.iter_mut().find(|s| s.0.name == k) else {
                    return Err(CliError::Config(format!(
                        "{}:{line}: unknown key `{k}` for `{command}`",
                        path.display()
                    )));
                };
                slot.1 = Some(v);
                slot.2 = Origin::File {
                    path: path.to_path_buf(),
                    line,
                };
            }
        }
        for (k, v) in flags {
            let slot = values
                .iter_mut()
                .find(|s| s.0.name == *k)
                .expect("flags are generated from the key table");
            slot.1 = Some(v.clone());
            slot.2 = Origin::Flag;
        }
        let mut out = Vec::with_capacity(values.len());
        for (k, v, origin) in values {
            match v {
                Some(v) => out.push((k, v, origin)),
                None => {
                    return Err(CliError::Config(format!(
                        "missing required `--{}` for `{command}`",
                        flag_name(k.name)
                    )))
                }
            }
        }
        Ok(Self {
            command,
            values: out,
        })
    }

    fn entry(&self, name: &str) -> &(Key, String, Origin) {
        self.values
            .iter()
            .find(|e| e.0.name == name)
            .unwrap_or_else(|| panic!("`{name}` is not a key of `{}`", self.command))
    }

    pub fn str(&self, name: &str) -> &str {
        &self.entry(name).1
    }

    fn bad(&self, name: &str, why: impl fmt::Display) -> CliError {
        let (_, v, origin) = self.entry(name);
        CliError::Config(format!(
            "invalid value `{v}` for `{name}` ({origin}): {why}"
        ))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.str(name).trim().parse().map_err(|e| self.bad(name, e))
    }

    /// Comma-separated list; empty means an empty list.
    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let s = self.str(name).trim();
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| t.trim().parse().map_err(|e| self.bad(name, e)))
            .collect()
    }

    /// Empty value means unset.
    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let s = self.str(name).trim();
        (!s.is_empty()).then(|| PathBuf::from(s))
    }

    pub fn choice<'a>(&self, name: &str, options: &[&'a str]) -> Result<&'a str, CliError> {
        let s = self.str(name).trim().to_ascii_lowercase();
        options
            .iter()
            .find(|o| **o == s)
            .copied()
            .ok_or_else(|| self.bad(name, format!("expected one of {}", options.join(", "))))
    }

    /// Rejects a value that parsed but is out of range.
    pub fn reject(&self, name: &str, why: impl fmt::Display) -> CliError {
        self.bad(name, why)
    }

    /// Replayable config text: every key with its resolved value.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v, _) in &self.values {
            s.push_str(&format!("{} = {v}\n", k.name));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[
        key("eta", "0.01", ""),
        key("n_values", "1,2,3", ""),
        required("sigma", ""),
    ];

    fn file(text: &str) -> Entries {
        parse_config(text, Path::new("c.cfg")).unwrap()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let r = Resolved::merge(
            "x",
            KEYS,
            Some((Path::new("c"), file(""))),
            &[("sigma", "2".into())],
        )
        .unwrap();
        assert_eq!(r.str("eta"), "0.01");
        assert_eq!(r.list::<usize>("n_values").unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn flags_beat_file() {
        let f = file("# comment\neta = 0.01\nsigma=1\n");
        let r = Resolved::merge(
            "x",
            KEYS,
            Some((Path::new("c"), f)),
            &[("eta", "0.1".into())],
        )
        .unwrap();
        assert_eq!(r.get::<f64>("eta").unwrap(), 0.1);
        assert_eq!(r.get::<f64>("sigma").unwrap(), 1.0);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let f = file("sigma = 1\n\netaa = 0.1\n");
        let e = Resolved::merge("x", KEYS, Some((Path::new("c.cfg"), f)), &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("c.cfg:3") && msg.contains("etaa"), "{msg}");
    }

    #[test]
    fn syntax_errors_name_their_line() {
        let e = parse_config("a = 1\njunk\n", Path::new("c.cfg")).unwrap_err();
        assert!(e.to_string().contains("c.cfg:2"));
        let e = parse_config("a = 1\na = 2\n", Path::new("c.cfg")).unwrap_err();
        assert!(e.to_string().contains("duplicate"));
    }

    #[test]
    fn hyphens_and_underscores_are_one_key() {
        let f = file("n-values = 4\nsigma = 1");
        let r = Resolved::merge("x", KEYS, Some((Path::new("c"), f)), &[]).unwrap();
        assert_eq!(r.list::<usize>("n_values").unwrap(), vec![4]);
    }

    #[test]
    fn missing_required() {
        let e = Resolved::merge("x", KEYS, None, &[]).unwrap_err();
        assert!(e.to_string().contains("--sigma"));
    }

    #[test]
    fn bad_values_report_origin() {
        let f = file("sigma = abc");
        let r = Resolved::merge("x", KEYS, Some((Path::new("c.cfg"), f)), &[]).unwrap();
        let e = r.get::<f64>("sigma").unwrap_err().to_string();
        assert!(e.contains("c.cfg:1") && e.contains("abc"), "{e}");
    }

    #[test]
    fn render_round_trips() {
        let r = Resolved::merge("x", KEYS, None, &[("sigma", "3".into())]).unwrap();
        let text = r.render();
        let again = Resolved::merge("x", KEYS, Some((Path::new("m"), file(&text))), &[]).unwrap();
        assert_eq!(again.render(), text);
    }
}
