//! Versioned prompt templates shipped with the crate.
//!
//! Templates are plain text with `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

pub const DISTILL: &str = include_str!("../../prompts/distill.txt");
pub const LABEL: &str = include_str!("../../prompts/label.txt");
pub const PHRASE: &str = include_str!("../../prompts/phrase.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub distill: String,
    pub label: String,
    pub phrase: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet { distill: DISTILL.to_string(), label: LABEL.to_string(), phrase: PHRASE.to_string() }
    }
}

impl PromptSet {
    /// Load `distill.txt`, `label.txt` and `phrase.txt` from `dir`, falling
    /// back to the bundled template for any file that is missing.
    pub fn from_dir(dir: &Path) -> std::io::Result<PromptSet> {
        let load = |name: &str, fallback: &str| -> std::io::Result<String> {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback.to_string()),
                Err(e) => Err(e),
            }
        };
        Ok(PromptSet { distill: load("distill.txt", DISTILL)?, label: load("label.txt", LABEL)?, phrase: load("phrase.txt", PHRASE)? })
    }
}

/// Substitute `{{key}}` placeholders. Unknown placeholders are left alone.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = after[..end].trim();
                match vars.get(key) {
                    Some(v) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
