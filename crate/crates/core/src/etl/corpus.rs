use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EtlError;

/// One ingested document. `entities` holds names that came pre-labeled
/// with the source (for example a per-article country tag).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<String>,
}

/// Parses line-delimited JSON records `{doc_id, title, body, entities?}`.
pub fn parse_jsonl(text: &str, source: &str) -> Result<Vec<RawDocument>, EtlError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(line).map_err(|e| EtlError::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

fn plain_document(path: &Path, text: &str) -> RawDocument {
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let title = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string();
    RawDocument {
        doc_id,
        title,
        body: text.to_string(),
        entities: Vec::new(),
    }
}

/// Loads every `*.jsonl` and `*.txt` file in `dir` (non-recursive, in file
/// name order) and validates the result.
///
/// Plain text files become one document each: the file stem is the doc id
/// and the first non-blank line is the title.
pub fn load_corpus(dir: &Path) -> Result<Vec<RawDocument>, EtlError> {
    let io = |path: &Path, source| EtlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();

    let mut docs = Vec::new();
    for path in paths {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "jsonl" => {
                let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                docs.extend(parse_jsonl(&text, &path.display().to_string())?);
            }
            "txt" => {
                let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                docs.push(plain_document(&path, &text));
            }
            _ => {}
        }
    }
    validate(&docs)?;
    Ok(docs)
}

/// Checks doc id uniqueness and non-empty bodies.
pub(crate) fn validate(docs: &[RawDocument]) -> Result<(), EtlError> {
    if docs.is_empty() {
        return Err(EtlError::EmptyCorpus);
    }
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(EtlError::DuplicateDocId(d.doc_id.clone()));
        }
        if d.body.split_whitespace().next().is_none() {
            return Err(EtlError::EmptyBody(d.doc_id.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_jsonl_and_plain_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.jsonl"),
            "{\"doc_id\":\"r1\",\"title\":\"IRAN: quake\",\"body\":\"A quake hit Tehran.\",\"entities\":[\"Iran\"]}\n\
             {\"doc_id\":\"r2\",\"body\":\"Markets rose.\"}\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("note.txt"), "\nHeadline here\nBody text.\n").unwrap();
        std::fs::write(dir.path().join("skip.bin"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].entities, vec!["Iran"]);
        assert_eq!(docs[1].title, "");
        assert_eq!(docs[2].doc_id, "note");
        assert_eq!(docs[2].title, "Headline here");
    }

    #[test]
    fn rejects_duplicates_and_blank_bodies() {
        let d = |id: &str, body: &str| RawDocument {
            doc_id: id.into(),
            title: String::new(),
            body: body.into(),
            entities: vec![],
        };
        assert!(matches!(validate(&[d("a", "x"), d("a", "y")]), Err(EtlError::DuplicateDocId(_))));
        assert!(matches!(validate(&[d("a", " \n\t")]), Err(EtlError::EmptyBody(_))));
        assert!(matches!(validate(&[]), Err(EtlError::EmptyCorpus)));
    }

    #[test]
    fn malformed_jsonl_reports_line() {
        let err = parse_jsonl("{\"doc_id\":\"a\",\"body\":\"x\"}\nnot json\n", "c.jsonl").unwrap_err();
        assert!(matches!(err, EtlError::Parse { line: 2, .. }));
    }
}
