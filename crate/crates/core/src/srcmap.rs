//! Mapping of merged-file lines back to original files via `# N "file"`
//! line markers.

use regex::Regex;
use std::sync::OnceLock;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineMap {
    /// `(merged line of the first mapped line, file, original line)`, sorted.
    segments: Vec<(usize, String, usize)>,
    default_file: String,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^\s*#\s*(?:line\s+)?(\d+)\s+"([^"]*)""#).unwrap())
}

impl LineMap {
    /// Build from merged text; lines before the first marker map to
    /// `default_file` unchanged.
    pub fn from_source(text: &str, default_file: &str) -> Self {
        let mut segments = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if let Some(c) = marker_re().captures(line) {
                let orig: usize = c[1].parse().unwrap_or(1);
                segments.push((idx + 2, c[2].to_string(), orig));
            }
        }
        LineMap {
            segments,
            default_file: default_file.to_string(),
        }
    }

    /// Original `(file, line)` of a 1-based merged line.
    pub fn resolve(&self, line: usize) -> (String, usize) {
        match self.segments.iter().rev().find(|s| s.0 <= line) {
            Some((start, file, orig)) => (file.clone(), orig + (line - start)),
            None => (self.default_file.clone(), line),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_shift_lines() {
        let text = "/* banner */\n# 1 \"a.c\"\nint a;\nint b;\n# 10 \"b.c\"\nint c;\n";
        let m = LineMap::from_source(text, "cil.i");
        assert_eq!(m.resolve(1), ("cil.i".into(), 1));
        assert_eq!(m.resolve(3), ("a.c".into(), 1));
        assert_eq!(m.resolve(4), ("a.c".into(), 2));
        assert_eq!(m.resolve(6), ("b.c".into(), 10));
    }
}
