//! Prompt templates with named placeholders.
//!
//! A template is plain text containing `{name}` placeholders. The set of
//! legal names is fixed per template role at parse time, so an unknown
//! placeholder is a configuration error surfaced when the template is loaded,
//! not at render time. Rendering substitutes every placeholder; there is no
//! escaping — braces that don't wrap a known identifier shape are literal.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{EhcError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A parsed template. Render with [`Template::render`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    /// Parses `source`, accepting only placeholders in `allowed`.
    ///
    /// A placeholder is `{` + ASCII identifier + `}`. Anything else —
    /// unmatched braces, `{with space}`, `{}` — is treated as literal text.
    /// A well-formed placeholder whose name is not allowed is a configuration
    /// error.
    pub fn parse(source: &str, allowed: &[&str]) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let bytes = source.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'{' {
                // Scan a candidate identifier up to the closing brace.
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                    let name = &source[i + 1..j];
                    if !allowed.contains(&name) {
                        return Err(EhcError::Config(format!(
                            "unknown placeholder {{{name}}} (allowed: {})",
                            allowed.join(", ")
                        )));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder(name.to_owned()));
                    i = j + 1;
                    continue;
                }
            }
            // Advance one full character (the text may be non-ASCII).
            let ch = source[i..].chars().next().expect("in-bounds index");
            literal.push(ch);
            i += ch.len_utf8();
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { segments })
    }

    /// Loads and parses a template file.
    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| {
            EhcError::Config(format!("cannot read template {}: {e}", path.display()))
        })?;
        Self::parse(&source, allowed).map_err(|e| {
            EhcError::Config(format!("template {}: {e}", path.display()))
        })
    }

    /// Substitutes placeholder values. Every placeholder that occurs in the
    /// template must have a value.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Placeholder(name) => match values.get(name.as_str()) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(EhcError::Usage(format!(
                            "no value supplied for placeholder {{{name}}}"
                        )))
                    }
                },
            }
        }
        Ok(out)
    }

    /// Placeholder names that actually occur, in first-occurrence order.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for segment in &self.segments {
            if let Segment::Placeholder(name) = segment {
                if !seen.contains(&name.as_str()) {
                    seen.push(name.as_str());
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, (*v).to_owned())).collect()
    }

    #[test]
    fn renders_placeholders_in_place() {
        let t = Template::parse("Task: {task}\nGo.", &["task"]).unwrap();
        let got = t.render(&values(&[("task", "count cubes")])).unwrap();
        assert_eq!(got, "Task: count cubes\nGo.");
    }

    #[test]
    fn unknown_placeholder_is_a_configuration_error() {
        let err = Template::parse("{task} {bogus}", &["task"]).unwrap_err();
        assert!(matches!(err, EhcError::Config(_)), "{err}");
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn malformed_braces_are_literal() {
        let t = Template::parse("a { b } {} {not closed", &["task"]).unwrap();
        let got = t.render(&BTreeMap::new()).unwrap();
        assert_eq!(got, "a { b } {} {not closed");
    }

    #[test]
    fn repeated_placeholders_render_repeatedly() {
        let t = Template::parse("{x} and {x}", &["x"]).unwrap();
        assert_eq!(t.render(&values(&[("x", "one")])).unwrap(), "one and one");
        assert_eq!(t.placeholders(), vec!["x"]);
    }

    #[test]
    fn missing_value_is_an_error() {
        let t = Template::parse("{task}", &["task"]).unwrap();
        assert!(t.render(&BTreeMap::new()).is_err());
    }

    #[test]
    fn non_ascii_literals_survive() {
        let t = Template::parse("αβ {task} γ", &["task"]).unwrap();
        assert_eq!(t.render(&values(&[("task", "x")])).unwrap(), "αβ x γ");
    }
}
