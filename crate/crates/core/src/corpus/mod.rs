//! Dataset loading, tokenization, and labeled/unlabeled pool bookkeeping.

mod pool;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pool::{split_pool, Pool};
pub use vocab::{split_tokens, Vocab, BOUNDARY_ID, PAD_ID, UNK_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One JSON object per line with `id`, `text`, and optional `label`.
    Jsonl,
    /// `label<TAB>text`; ids are zero-based line numbers.
    Tsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "tsv" => Ok(DatasetFormat::Tsv),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format `{other}` (expected jsonl or tsv)"
            ))),
        }
    }
}

impl DatasetFormat {
    /// Guess from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<RawRecord>,
    /// Class names indexed by class id, in first-occurrence order.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: serde_json::Value,
    text: String,
    #[serde(default)]
    label: Option<serde_json::Value>,
}

fn scalar_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&content, format, path)
}

/// Parse dataset text. `origin` is only used in error messages.
pub fn parse_dataset(content: &str, format: DatasetFormat, origin: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut raw: Vec<(String, String, Option<String>)> = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        match format {
            DatasetFormat::Jsonl => {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: JsonRecord =
                    serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
                let id = scalar_to_string(&rec.id)
                    .ok_or_else(|| parse_err(line_no, "`id` must be a string".into()))?;
                let label = match &rec.label {
                    None | Some(serde_json::Value::Null) => None,
                    Some(v) => Some(
                        scalar_to_string(v)
                            .ok_or_else(|| parse_err(line_no, "`label` must be a string".into()))?,
                    ),
                };
                raw.push((id, rec.text, label));
            }
            DatasetFormat::Tsv => {
                if line.is_empty() {
                    continue;
                }
                let (label, text) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err(line_no, "expected `label<TAB>text`".into()))?;
                if label.is_empty() {
                    return Err(parse_err(line_no, "empty label".into()));
                }
                raw.push((lineno.to_string(), text.to_string(), Some(label.to_string())));
            }
        }
    }

    let mut seen = HashSet::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut records = Vec::with_capacity(raw.len());
    for (id, text, label) in raw {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let label = label.map(|name| {
            *label_ids.entry(name.clone()).or_insert_with(|| {
                label_names.push(name);
                label_names.len() - 1
            })
        });
        records.push(RawRecord { id, text, label });
    }
    if label_names.len() == 1 {
        return Err(Error::DegenerateLabels(label_names.remove(0)));
    }
    Ok(Dataset {
        records,
        label_names,
    })
}

/// Append `test` to `train`, mapping test labels onto the training label
/// names (unseen names get new ids). `test_id_prefix` is prepended to every
/// test id. Returns the merged dataset and the number of training records.
pub fn merge_datasets(
    train: Dataset,
    test: Dataset,
    test_id_prefix: &str,
) -> Result<(Dataset, usize)> {
    let n_train = train.records.len();
    let mut label_names = train.label_names;
    let mut records = train.records;
    let mut seen: HashSet<String> = records.iter().map(|r| r.id.clone()).collect();
    for r in test.records {
        let id = format!("{test_id_prefix}{}", r.id);
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let label = r.label.map(|y| {
            let name = &test.label_names[y];
            match label_names.iter().position(|n| n == name) {
                Some(i) => i,
                None => {
                    label_names.push(name.clone());
                    label_names.len() - 1
                }
            }
        });
        records.push(RawRecord {
            id,
            text: r.text,
            label,
        });
    }
    Ok((
        Dataset {
            records,
            label_names,
        },
        n_train,
    ))
}

/// A tokenized sentence of exactly `max_len` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub id: String,
    pub tokens: Vec<u32>,
    pub real_len: usize,
    pub label: Option<usize>,
}

impl TokenSeq {
    pub fn max_len(&self) -> usize {
        self.tokens.len()
    }

    /// Non-padding token ids.
    pub fn real_tokens(&self) -> &[u32] {
        &self.tokens[..self.real_len]
    }

    /// Empty sentences are valid but carry no signal.
    pub fn is_empty(&self) -> bool {
        self.real_len == 0
    }
}

/// Tokenize, map OOV tokens to the unknown id, then truncate or right-pad.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    let (tokens, real_len, _) = vocab.encode(text, max_len);
    TokenSeq {
        id: String::new(),
        tokens,
        real_len,
        label: None,
    }
}

pub fn build_vocab(records: &[RawRecord], min_count: usize) -> Vocab {
    Vocab::from_texts(records.iter().map(|r| r.text.as_str()), min_count)
}

/// A tokenized dataset with an id index.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocab,
    pub seqs: Vec<TokenSeq>,
    pub label_names: Vec<String>,
    max_len: usize,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build the vocabulary over every record, then tokenize.
    pub fn build(dataset: &Dataset, max_len: usize, min_count: usize) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab = build_vocab(&dataset.records, min_count);
        Self::with_vocab(dataset, vocab, max_len)
    }

    pub fn with_vocab(dataset: &Dataset, vocab: Vocab, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        let mut truncated = 0usize;
        let seqs: Vec<TokenSeq> = dataset
            .records
            .iter()
            .map(|r| {
                let (tokens, real_len, dropped) = vocab.encode(&r.text, max_len);
                if dropped > 0 {
                    truncated += 1;
                }
                TokenSeq {
                    id: r.id.clone(),
                    tokens,
                    real_len,
                    label: r.label,
                }
            })
            .collect();
        if truncated > 0 {
            log::debug!("{truncated} sentence(s) truncated to {max_len} tokens");
        }
        let empty = seqs.iter().filter(|s| s.is_empty()).count();
        if empty > 0 {
            log::warn!("{empty} sentence(s) have no tokens");
        }
        let index = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        Ok(Corpus {
            vocab,
            seqs,
            label_names: dataset.label_names.clone(),
            max_len,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.seqs[idx].id
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.seqs.iter().map(|s| s.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, f: DatasetFormat) -> Result<Dataset> {
        parse_dataset(s, f, Path::new("mem"))
    }

    #[test]
    fn jsonl_first_label_maps_to_zero() {
        let ds = parse(
            "{\"id\":\"a1\",\"text\":\"good movie\",\"label\":\"pos\"}\n\
             {\"id\":\"a2\",\"text\":\"bad\",\"label\":\"neg\"}\n",
            DatasetFormat::Jsonl,
        )
        .unwrap();
        assert_eq!(
            ds.records[0],
            RawRecord {
                id: "a1".into(),
                text: "good movie".into(),
                label: Some(0)
            }
        );
        assert_eq!(ds.records[1].label, Some(1));
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn merge_maps_test_labels_by_name() {
        let train = parse("pos\ta\nneg\tb\n", DatasetFormat::Tsv).unwrap();
        let test = parse("neg\tc\nother\td\npos\te\n", DatasetFormat::Tsv).unwrap();
        let (m, n) = merge_datasets(train.clone(), test.clone(), "test:").unwrap();
        assert_eq!(n, 2);
        assert_eq!(m.label_names, vec!["pos", "neg", "other"]);
        let labels: Vec<_> = m.records.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![Some(0), Some(1), Some(1), Some(2), Some(0)]);
        assert_eq!(m.records[2].id, "test:0");
        assert!(matches!(
            merge_datasets(train, test, ""),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let err = parse(
            "{\"id\":\"a1\",\"text\":\"x\",\"label\":\"p\"}\n{\"id\":\"a1\",\"text\":\"y\",\"label\":\"n\"}",
            DatasetFormat::Jsonl,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "a1"));
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse(
            "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n",
            DatasetFormat::Jsonl,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn single_label_is_degenerate() {
        let err = parse("pos\ta\npos\tb\n", DatasetFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::DegenerateLabels(_)));
    }

    #[test]
    fn unlabeled_corpus_is_allowed() {
        let ds = parse("{\"id\":\"a\",\"text\":\"x\"}\n", DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.num_classes(), 0);
        assert_eq!(ds.records[0].label, None);
    }

    #[test]
    fn tsv_ids_are_line_numbers() {
        let ds = parse("pos\tgood\nneg\tbad\n", DatasetFormat::Tsv).unwrap();
        assert_eq!(ds.records[0].id, "0");
        assert_eq!(ds.records[1].id, "1");
        assert_eq!(ds.records[1].label, Some(1));
        assert!(matches!(
            parse("no tab here\n", DatasetFormat::Tsv).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn tokenize_pads_to_length() {
        let vocab = Vocab::from_texts(["good movie ."], 1);
        let s = tokenize("Good movie.", &vocab, 5);
        assert_eq!(s.real_len, 3);
        assert_eq!(s.tokens.len(), 5);
        assert_eq!(s.tokens[0], vocab.id("good"));
        assert_eq!(s.tokens[1], vocab.id("movie"));
        assert_eq!(s.tokens[2], vocab.id("."));
        assert_eq!(&s.tokens[3..], &[PAD_ID, PAD_ID]);
    }

    #[test]
    fn tokenize_truncates_at_128() {
        let text = (0..200).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let vocab = Vocab::from_texts([text.as_str()], 1);
        let (ids, real_len, dropped) = vocab.encode(&text, 128);
        assert_eq!(ids.len(), 128);
        assert_eq!(real_len, 128);
        assert_eq!(dropped, 72);
    }

    #[test]
    fn oov_maps_to_unknown() {
        let vocab = Vocab::from_texts(["a b"], 1);
        let s = tokenize("a zebra", &vocab, 4);
        assert_eq!(s.tokens[1], UNK_ID);
    }

    #[test]
    fn empty_text_is_flagged() {
        let vocab = Vocab::from_texts(["a"], 1);
        let s = tokenize("", &vocab, 3);
        assert!(s.is_empty());
        assert_eq!(s.tokens, vec![PAD_ID; 3]);
    }
}
