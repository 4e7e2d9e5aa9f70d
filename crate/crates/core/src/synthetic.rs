//! Synthetic topic-classification corpora for desk-scale experiments.
//!
//! Each class draws tokens from its own Zipf-weighted distribution over a
//! private word list plus a word list shared by all classes.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, RawRecord};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicCorpusConfig {
    pub classes: usize,
    /// Total distinct words across all classes.
    pub vocab_size: usize,
    /// Fraction of the vocabulary shared by every class.
    pub shared_fraction: f64,
    /// Probability mass each class puts on the shared words.
    pub shared_mass: f64,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for TopicCorpusConfig {
    fn default() -> Self {
        TopicCorpusConfig {
            classes: 4,
            vocab_size: 1000,
            shared_fraction: 0.3,
            shared_mass: 0.7,
            zipf_exponent: 1.0,
            min_len: 8,
            max_len: 48,
            train_size: 2000,
            test_size: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicCorpus {
    pub train: Dataset,
    pub test: Dataset,
}

impl TopicCorpus {
    /// Train records followed by test records, with one label space.
    pub fn combined(&self) -> (Dataset, Vec<String>) {
        let mut records = self.train.records.clone();
        records.extend(self.test.records.iter().cloned());
        let test_ids = self.test.records.iter().map(|r| r.id.clone()).collect();
        (
            Dataset {
                records,
                label_names: self.train.label_names.clone(),
            },
            test_ids,
        )
    }
}

fn word(i: usize) -> String {
    // letters only, so tokenization keeps each word whole
    let mut s = String::from("w");
    let mut n = i;
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}

pub fn generate_topic_corpus(cfg: &TopicCorpusConfig) -> Result<TopicCorpus> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if !(0.0..1.0).contains(&cfg.shared_fraction) || !(0.0..1.0).contains(&cfg.shared_mass) {
        return Err(Error::InvalidArgument(
            "shared_fraction and shared_mass must lie in [0, 1)".into(),
        ));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::InvalidArgument("need 1 <= min_len <= max_len".into()));
    }
    let n_shared = (cfg.vocab_size as f64 * cfg.shared_fraction).round() as usize;
    let per_class = (cfg.vocab_size - n_shared) / cfg.classes;
    if per_class == 0 {
        return Err(Error::InvalidArgument("vocabulary too small".into()));
    }

    let mut rng = seed::rng(cfg.seed);
    let shared: Vec<usize> = (0..n_shared).collect();
    let zipf = |n: usize| -> Vec<f64> {
        (1..=n)
            .map(|r| 1.0 / (r as f64).powf(cfg.zipf_exponent))
            .collect()
    };

    let mut samplers = Vec::with_capacity(cfg.classes);
    for c in 0..cfg.classes {
        let own: Vec<usize> = (0..per_class).map(|j| n_shared + c * per_class + j).collect();
        // each class ranks the shared words in its own order
        let mut shared_order = shared.clone();
        shared_order.shuffle(&mut rng);
        let sw = zipf(shared_order.len());
        let ow = zipf(own.len());
        let (ss, os): (f64, f64) = (sw.iter().sum(), ow.iter().sum());
        let mut words = Vec::new();
        let mut weights = Vec::new();
        for (w, x) in shared_order.iter().zip(&sw) {
            words.push(*w);
            weights.push(cfg.shared_mass * x / ss.max(f64::MIN_POSITIVE));
        }
        for (w, x) in own.iter().zip(&ow) {
            words.push(*w);
            weights.push((1.0 - cfg.shared_mass) * x / os);
        }
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("bad word weights: {e}")))?;
        samplers.push((words, dist));
    }

    let label_names: Vec<String> = (0..cfg.classes).map(|c| format!("topic{c}")).collect();
    let mut make = |n: usize, prefix: &str| -> Dataset {
        let records = (0..n)
            .map(|i| {
                // round-robin labels keep classes balanced
                let c = i % cfg.classes;
                let (words, dist) = &samplers[c];
                let len = rng.gen_range(cfg.min_len..=cfg.max_len);
                let text = (0..len)
                    .map(|_| word(words[dist.sample(&mut rng)]))
                    .collect::<Vec<_>>()
                    .join(" ");
                RawRecord {
                    id: format!("{prefix}{i}"),
                    text,
                    label: Some(c),
                }
            })
            .collect();
        Dataset {
            records,
            label_names: label_names.clone(),
        }
    };
    let train = make(cfg.train_size, "tr");
    let test = make(cfg.test_size, "te");
    Ok(TopicCorpus { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_tokens;
    use std::collections::HashSet;

    #[test]
    fn sizes_and_balance() {
        let tc = generate_topic_corpus(&TopicCorpusConfig::default()).unwrap();
        assert_eq!(tc.train.len(), 2000);
        assert_eq!(tc.test.len(), 500);
        let mut counts = [0usize; 4];
        for r in &tc.train.records {
            counts[r.label.unwrap()] += 1;
        }
        assert_eq!(counts, [500; 4]);
    }

    #[test]
    fn deterministic() {
        let cfg = TopicCorpusConfig {
            train_size: 50,
            test_size: 10,
            ..Default::default()
        };
        let a = generate_topic_corpus(&cfg).unwrap();
        let b = generate_topic_corpus(&cfg).unwrap();
        assert_eq!(a.train.records, b.train.records);
    }

    #[test]
    fn class_vocabularies_overlap_only_on_shared_words() {
        let cfg = TopicCorpusConfig {
            train_size: 400,
            test_size: 0,
            ..Default::default()
        };
        let tc = generate_topic_corpus(&cfg).unwrap();
        let vocab_of = |c: usize| -> HashSet<String> {
            tc.train
                .records
                .iter()
                .filter(|r| r.label == Some(c))
                .flat_map(|r| split_tokens(&r.text))
                .collect()
        };
        let shared: HashSet<String> = (0..300).map(word).collect();
        let v0 = vocab_of(0);
        let v1 = vocab_of(1);
        assert!(v0.intersection(&v1).all(|w| shared.contains(w)));
        assert!(v0.intersection(&v1).count() > 0);
    }

    #[test]
    fn words_are_single_tokens() {
        for i in [0, 25, 26, 700, 12345] {
            assert_eq!(split_tokens(&word(i)).len(), 1);
        }
        assert_ne!(word(26), word(0));
    }
}
