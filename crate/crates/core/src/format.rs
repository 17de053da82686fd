//! Shared layout of the plain-text index files.
//!
//! Every file starts with a `# rolesearch <kind> v<version>` header line.
//! Lines beginning with `@` carry `key<TAB>value` metadata, other lines
//! beginning with `#` are comments, and everything else is a tab-separated
//! data row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) struct TextFile {
    path: PathBuf,
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<(usize, String)>,
}

impl TextFile {
    pub fn read(path: &Path, kind: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, kind, &text)
    }

    pub fn parse(path: &Path, kind: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let expected = header(kind);
        match lines.next() {
            Some((_, first)) if first.trim_end() == expected => {}
            Some((_, first)) => {
                return Err(Error::format(path, 1, format!("expected header {expected:?}, found {first:?}")))
            }
            None => return Err(Error::format(path, 1, "empty file")),
        }
        let mut meta = BTreeMap::new();
        let mut rows = Vec::new();
        for (n, line) in lines {
            if let Some(kv) = line.strip_prefix('@') {
                let (k, v) = kv
                    .split_once('\t')
                    .ok_or_else(|| Error::format(path, n, "metadata line without a tab"))?;
                meta.insert(k.to_string(), v.to_string());
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else {
                rows.push((n, line.to_string()));
            }
        }
        Ok(TextFile {
            path: path.to_path_buf(),
            meta,
            rows,
        })
    }

    pub fn meta<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::format(&self.path, 1, format!("missing @{key}")))?;
        raw.parse()
            .map_err(|_| Error::format(&self.path, 1, format!("bad value for @{key}: {raw:?}")))
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::format(&self.path, line, message)
    }

    pub fn field<T: FromStr>(&self, line: usize, value: &str, what: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| self.error(line, format!("bad {what}: {value:?}")))
    }
}

pub(crate) fn header(kind: &str) -> String {
    format!("# rolesearch {kind} v{FORMAT_VERSION}")
}

/// Accumulates a text file in the shared layout.
pub(crate) struct TextWriter {
    buf: String,
}

impl TextWriter {
    pub fn new(kind: &str) -> Self {
        TextWriter {
            buf: format!("{}\n", header(kind)),
        }
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.buf, "# {text}");
        self
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.buf, "@{key}\t{value}");
        self
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) -> &mut Self {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push('\t');
            }
            let _ = write!(self.buf, "{f}");
        }
        self.buf.push('\n');
        self
    }

    pub fn finish(self) -> String {
        self.buf
    }

    pub fn save(self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Splits a space-separated list of ids.
pub(crate) fn parse_id_list(file: &TextFile, line: usize, field: &str) -> Result<Vec<u32>> {
    field
        .split_ascii_whitespace()
        .map(|t| file.field(line, t, "token id"))
        .collect()
}

pub(crate) fn join_ids(ids: &[u32]) -> String {
    let mut s = String::with_capacity(ids.len() * 5);
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{id}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_meta_and_rows() {
        let mut w = TextWriter::new("demo");
        w.comment("hello").meta("size", 3).row(&[&"a", &1]).row(&[&"b", &2]);
        let text = w.finish();
        let f = TextFile::parse(Path::new("x"), "demo", &text).unwrap();
        assert_eq!(f.meta::<usize>("size").unwrap(), 3);
        assert_eq!(f.rows, vec![(4, "a\t1".to_string()), (5, "b\t2".to_string())]);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = TextFile::parse(Path::new("x"), "demo", "# rolesearch other v1\n").err().unwrap();
        assert!(err.to_string().contains("expected header"));
    }
}
