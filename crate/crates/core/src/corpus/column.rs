use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tagged sentence of a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub lowercased: Vec<String>,
    pub tags: Vec<String>,
    pub task_id: usize,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<String>, task_id: usize) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::contract(format!(
                "sentence needs matching non-empty tokens/tags ({} vs {})",
                tokens.len(),
                tags.len()
            )));
        }
        if tokens.iter().any(String::is_empty) {
            return Err(Error::contract("empty token"));
        }
        let lowercased = tokens.iter().map(|t| t.to_lowercase()).collect();
        Ok(TaggedSentence {
            tokens,
            lowercased,
            tags,
            task_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Parse column-format text: `token<TAB>tag` (or `token tag`) per line,
/// blank lines between sentences. Tags are returned untouched.
pub fn parse_column_text(text: &str, origin: &Path) -> Result<Vec<TaggedSentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, out: &mut Vec<TaggedSentence>| -> Result<()> {
        if !tokens.is_empty() {
            out.push(TaggedSentence::new(std::mem::take(tokens), std::mem::take(tags), 0)?);
        }
        Ok(())
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut sentences)?;
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.trim().split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected `token<TAB>tag`, got {} field(s): {line:?}", fields.len()),
            });
        }
        tokens.push(fields[0].trim().to_string());
        tags.push(fields[1].trim().to_string());
    }
    flush(&mut tokens, &mut tags, &mut sentences)?;
    Ok(sentences)
}

pub fn read_column_file(path: impl AsRef<Path>) -> Result<Vec<TaggedSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_column_text(&text, path)
}

/// Write sentences back in column format.
pub fn write_column_file(path: impl AsRef<Path>, sentences: &[TaggedSentence]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<TaggedSentence>> {
        parse_column_text(text, Path::new("test.txt"))
    }

    #[test]
    fn frame_example() {
        let s = parse("please\tO\ncontinue\tB-TARGET\n\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tags, vec!["O", "B-TARGET"]);
        assert_eq!(s[0].tokens, vec!["please", "continue"]);
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n  \n").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("ok O\na b c\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("\tO\n").is_err());
    }

    #[test]
    fn keeps_case_and_lowercases() {
        let s = parse("The DET\nCat NOUN\n\nOnce ADV\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].tokens, vec!["The", "Cat"]);
        assert_eq!(s[0].lowercased, vec!["the", "cat"]);
        assert_eq!(s[1].tags, vec!["ADV"]);
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsv");
        let s = parse("a\tB-X\nb\tE-X\n\nc\tO\n").unwrap();
        write_column_file(&p, &s).unwrap();
        assert_eq!(read_column_file(&p).unwrap(), s);
    }
}
