//! Line-delimited corpus records and vocabulary files.
//!
//! One JSON object per line:
//! `{"uid": str, "x": [f64], "labels": [str], "true_dist"?: [f64],
//!   "old_label"?: str, "label_counter"?: {str: int}}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedExample, LabelDistribution, LabelVocab};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    uid: String,
    x: Vec<f64>,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_dist: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    old_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_counter: Option<BTreeMap<String, u32>>,
}

fn lookup(vocab: &LabelVocab, uid: &str, name: &str) -> Result<usize> {
    vocab
        .index_of(name)
        .ok_or_else(|| Error::record(uid, format!("label {name:?} is not in the vocabulary")))
}

impl Record {
    fn into_example(self, vocab: &LabelVocab) -> Result<AnnotatedExample> {
        let uid = self.uid;
        let annotations = self
            .labels
            .iter()
            .map(|l| lookup(vocab, &uid, l))
            .collect::<Result<Vec<_>>>()?;
        let true_dist = match self.true_dist {
            Some(p) => {
                if p.len() != vocab.len() {
                    return Err(Error::record(&uid, format!("true_dist has {} entries, vocabulary {}", p.len(), vocab.len())));
                }
                Some(LabelDistribution::new(p).map_err(|e| Error::record(&uid, e.to_string()))?)
            }
            None => None,
        };
        let old_label = self.old_label.map(|l| lookup(vocab, &uid, &l)).transpose()?;
        let label_counter = match self.label_counter {
            Some(map) => {
                let mut dense = vec![0u32; vocab.len()];
                for (name, count) in map {
                    dense[lookup(vocab, &uid, &name)?] += count;
                }
                Some(dense)
            }
            None => None,
        };
        Ok(AnnotatedExample {
            uid,
            features: self.x,
            annotations,
            true_dist,
            old_label,
            label_counter,
        })
    }

    fn from_example(e: &AnnotatedExample, vocab: &LabelVocab) -> Self {
        Record {
            uid: e.uid.clone(),
            x: e.features.clone(),
            labels: e.annotations.iter().map(|&a| vocab.name(a).to_string()).collect(),
            true_dist: e.true_dist.as_ref().map(|d| d.probs().to_vec()),
            old_label: e.old_label.map(|l| vocab.name(l).to_string()),
            label_counter: e.label_counter.as_ref().map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(i, &n)| (vocab.name(i).to_string(), n))
                    .collect()
            }),
        }
    }
}

/// Parses corpus records from a reader. Line numbers in errors are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R, vocab: &LabelVocab) -> Result<Vec<AnnotatedExample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let uid = match value.get("uid").and_then(|u| u.as_str()) {
            Some(u) => u.to_string(),
            None => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "record has no string \"uid\"".into(),
                })
            }
        };
        let record: Record = serde_json::from_value(value).map_err(|e| Error::Record {
            uid: uid.clone(),
            message: format!("line {lineno}: {e}"),
        })?;
        out.push(record.into_example(vocab)?);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, vocab: &LabelVocab) -> Result<Vec<AnnotatedExample>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), vocab)
}

pub fn write_corpus<W: Write>(mut w: W, pool: &[AnnotatedExample], vocab: &LabelVocab) -> std::io::Result<()> {
    for e in pool {
        let line = serde_json::to_string(&Record::from_example(e, vocab)).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn save_corpus(pool: &[AnnotatedExample], vocab: &LabelVocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(BufWriter::new(file), pool, vocab).map_err(|e| Error::io(path, e))
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<LabelVocab> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelVocab::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
}

pub fn save_vocab(vocab: &LabelVocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = vocab.names().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_pool, SyntheticConfig};

    #[test]
    fn round_trip_synthetic_pool() {
        let cfg = SyntheticConfig { n_examples: 40, seed: 5, ..Default::default() };
        let pool = generate_synthetic_pool(&cfg).unwrap();
        let vocab = cfg.vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        save_corpus(&pool, &vocab, &path).unwrap();
        assert_eq!(load_corpus(&path, &vocab).unwrap(), pool);

        let vpath = dir.path().join("vocab.txt");
        save_vocab(&vocab, &vpath).unwrap();
        assert_eq!(load_vocab(&vpath).unwrap(), vocab);
    }

    #[test]
    fn missing_x_names_uid() {
        let text = r#"{"uid": "a1", "x": [0.0], "labels": ["e"]}
{"uid": "b2", "labels": ["n"]}
"#;
        let err = parse_corpus(text.as_bytes(), &LabelVocab::nli()).unwrap_err();
        match err {
            Error::Record { uid, message } => {
                assert_eq!(uid, "b2");
                assert!(message.contains("line 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"uid\": \"a\", \"x\": [], \"labels\": []}\n{not json\n";
        match parse_corpus(text.as_bytes(), &LabelVocab::nli()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_names_uid() {
        let text = r#"{"uid": "q7", "x": [1.0], "labels": ["e", "z"]}"#;
        let err = parse_corpus(text.as_bytes(), &LabelVocab::nli()).unwrap_err();
        assert!(matches!(err, Error::Record { ref uid, .. } if uid == "q7"), "{err:?}");
    }

    #[test]
    fn chaos_style_counter() {
        let text = r#"{"uid": "s1", "x": [0.1, 0.2], "labels": [], "old_label": "e", "label_counter": {"n": 93, "e": 7}}"#;
        let pool = parse_corpus(text.as_bytes(), &LabelVocab::nli()).unwrap();
        let c = pool[0].label_counter.as_ref().unwrap();
        assert_eq!(c, &vec![7, 93, 0]);
        assert_eq!(c.iter().sum::<u32>(), 100);
        assert_eq!(pool[0].old_label, Some(0));
    }
}
