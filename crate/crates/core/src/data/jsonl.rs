//! One JSON record per line: `{"tokens": [..], "label": n}` or
//! `{"text": "..", "label": n}`, optionally with `id` and `membership`.
//! Text is tokenized byte by byte.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Membership, Sample};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: Option<u64>,
    tokens: Option<Vec<u32>>,
    text: Option<String>,
    label: usize,
    #[serde(default)]
    membership: Membership,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: u64,
    tokens: &'a [u32],
    label: usize,
    #[serde(skip_serializing_if = "is_unknown")]
    membership: Membership,
}

fn is_unknown(m: &Membership) -> bool {
    *m == Membership::Unknown
}

/// Parses records; blank lines are skipped. Missing ids default to the
/// record's 0-based position.
pub fn read_jsonl<R: BufRead>(reader: R, vocab_size: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: line_no, reason };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let tokens = match (rec.tokens, rec.text) {
            (Some(t), None) => t,
            (None, Some(text)) => text.bytes().map(u32::from).collect(),
            _ => return Err(parse_err("exactly one of `tokens` or `text` is required".into())),
        };
        if let Some((pos, t)) = tokens.iter().enumerate().find(|(_, &t)| t as usize >= vocab_size) {
            return Err(parse_err(format!("token {t} at position {pos} is outside the vocabulary of size {vocab_size}")));
        }
        out.push(Sample {
            id: rec.id.unwrap_or(out.len() as u64),
            tokens,
            label: rec.label,
            membership: rec.membership,
        });
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path, vocab_size: usize) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), vocab_size)
}

pub fn write_jsonl<W: Write>(mut writer: W, samples: &[Sample]) -> Result<()> {
    for s in samples {
        let rec = OutRecord {
            id: s.id,
            tokens: &s.tokens,
            label: s.label,
            membership: s.membership,
        };
        let line = serde_json::to_string(&rec)?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<jsonl writer>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(read_jsonl("".as_bytes(), 256).unwrap().is_empty());
    }

    #[test]
    fn token_record_becomes_unlabeled_sample() {
        let s = read_jsonl(r#"{"tokens":[1,2,3],"label":0}"#.as_bytes(), 256).unwrap();
        assert_eq!(s, vec![Sample::new(0, vec![1, 2, 3], 0)]);
    }

    #[test]
    fn text_is_byte_tokenized() {
        let s = read_jsonl(r#"{"text":"hi","label":1}"#.as_bytes(), 256).unwrap();
        assert_eq!(s[0].tokens, vec![104, 105]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let input = "{\"tokens\":[1],\"label\":0}\n{\"tokens\":[300],\"label\":0}\n";
        assert!(matches!(read_jsonl(input.as_bytes(), 256), Err(Error::Parse { line: 2, .. })));
        let input = "{\"tokens\":[1],\"label\":0}\n\nnot json\n";
        assert!(matches!(read_jsonl(input.as_bytes(), 256), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn export_import_round_trip() {
        let samples = vec![
            Sample::new(7, vec![4, 5], 1).with_membership(Membership::Member),
            Sample::new(9, vec![6], 0),
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &samples).unwrap();
        assert_eq!(read_jsonl(buf.as_slice(), 256).unwrap(), samples);
    }
}
