use std::collections::HashSet;

use coldstart_al::analysis::{diversity_jaccard, uncertainty_avg_entropy};
use coldstart_al::classifier::{init_model, predictive_entropy, softmax};
use coldstart_al::clustering::{count_distinct, kmeans, nearest_to_centers, Init};
use coldstart_al::corpus::{tokenize, Corpus, TokenSeq, Vocab, PAD_ID};
use coldstart_al::embeddings::{gradient_embedding, FeatureTable, Featurizer};
use coldstart_al::seed;
use coldstart_al::strategies::{sample_alps_from_nll, ClusterOptions};
use coldstart_al::surprisal_lm::{LmConfig, NgramLm, NllTable};
use coldstart_al::synthetic::{generate_topic_corpus, TopicCorpusConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn small_corpus(n: usize, seed: u64) -> Corpus {
    let topic = generate_topic_corpus(&TopicCorpusConfig {
        train_size: n,
        test_size: 4,
        vocab_size: 120,
        min_len: 4,
        max_len: 20,
        seed,
        ..TopicCorpusConfig::default()
    })
    .unwrap();
    Corpus::build(&topic.train, 32, 1).unwrap()
}

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-zA-Z]{1,6}|[.,!?]|  ", 0..80).prop_map(|w| w.join(" "))
}

fn points_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, d), 1..40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tokenize_has_exactly_l_positions(text in text_strategy(), l in 1usize..70) {
        let vocab = Vocab::from_texts([text.as_str()], 1);
        let seq = tokenize(&text, &vocab, l);
        prop_assert_eq!(seq.tokens.len(), l);
        prop_assert!(seq.real_len <= l);
        prop_assert!(seq.tokens[seq.real_len..].iter().all(|&t| t == PAD_ID));
        prop_assert!(seq.real_tokens().iter().all(|&t| t != PAD_ID));
    }

    #[test]
    fn vocabulary_is_deterministic_and_bijective(texts in proptest::collection::vec(text_strategy(), 1..8), min_count in 1usize..3) {
        let a = Vocab::from_texts(texts.iter().map(String::as_str), min_count);
        let b = Vocab::from_texts(texts.iter().map(String::as_str), min_count);
        prop_assert_eq!(&a, &b);
        for id in 0..a.len() as u32 {
            let tok = a.token(id).unwrap();
            if !Vocab::is_special(id) {
                prop_assert_eq!(a.id(tok), id);
            }
        }
    }

    #[test]
    fn lloyd_inertia_never_increases(points in points_strategy(), k in 1usize..6, seed in any::<u64>(), pp in any::<bool>()) {
        let k = k.min(count_distinct(&points));
        let init = if pp { Init::KMeansPlusPlus } else { Init::Random };
        let c = kmeans(&points, k, init, 50, seed).unwrap();
        for w in c.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "trace {:?}", c.inertia_trace);
        }
        prop_assert!((c.inertia - c.inertia_trace.last().copied().unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn k_equal_to_distinct_count_has_zero_inertia(points in points_strategy(), seed in any::<u64>()) {
        let mut pts = points.clone();
        pts.extend(points.iter().take(3).cloned());
        let k = count_distinct(&pts);
        let c = kmeans(&pts, k, Init::default(), 10, seed).unwrap();
        prop_assert!(c.inertia.abs() < 1e-12);
    }

    #[test]
    fn nearest_to_centers_is_distinct_greedy_argmin(points in points_strategy(), k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(points.len());
        let mut rng = seed::rng(seed);
        let d = points[0].len();
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let picks = nearest_to_centers(&points, &centers).unwrap();
        prop_assert_eq!(picks.len(), k);
        let mut taken = HashSet::new();
        for (c, &p) in centers.iter().zip(&picks) {
            let dist = |q: &Vec<f64>| q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let best = (0..points.len())
                .filter(|i| !taken.contains(i))
                .map(|i| dist(&points[i]))
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(dist(&points[p]), best);
            prop_assert!(taken.insert(p));
        }
    }

    #[test]
    fn entropy_is_bounded_by_ln_c(logits in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
        let p = softmax(&logits);
        let h = predictive_entropy(&p);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn gradient_has_one_negative_block(raw in proptest::collection::vec(0.01f64..1.0, 2..8), hidden in proptest::collection::vec(-3.0f64..3.0, 1..6)) {
        let s: f64 = raw.iter().sum();
        let conf: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let g = gradient_embedding(&conf, &hidden).unwrap();
        let d = hidden.len();
        let negative = (0..conf.len())
            .filter(|&i| conf[i] - if i == g.predicted { 1.0 } else { 0.0 } < 0.0)
            .count();
        prop_assert_eq!(negative, 1);
        for (i, block) in g.values.chunks(d).enumerate() {
            let scale = conf[i] - if i == g.predicted { 1.0 } else { 0.0 };
            for (v, h) in block.iter().zip(&hidden) {
                prop_assert_eq!(*v, scale * h);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alps_ignores_pool_order(seed in any::<u64>(), k in 1usize..12) {
        let corpus = small_corpus(60, 3);
        let lm = NgramLm::train(corpus.seqs.iter(), corpus.vocab.len(), LmConfig::default()).unwrap();
        let nll = NllTable::from_lm(&lm, &corpus);
        let pool: Vec<usize> = (0..corpus.len()).filter(|i| i % 4 != 0).collect();
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut seed::rng(seed ^ 1));
        let a = sample_alps_from_nll(&pool, &nll, k, 0.15, seed, ClusterOptions::default()).unwrap();
        let b = sample_alps_from_nll(&shuffled, &nll, k, 0.15, seed, ClusterOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn uncertainty_lies_between_batch_extremes(seed in any::<u64>(), size in 1usize..15) {
        let corpus = small_corpus(40, 5);
        let features = FeatureTable::hashed(&corpus, &Featurizer { dim: 16 }).unwrap();
        let model = init_model(16, 8, corpus.num_classes(), seed).unwrap();
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(&mut seed::rng(seed));
        let batch = &idx[..size];
        let hs: Vec<f64> = batch
            .iter()
            .map(|&i| predictive_entropy(&model.predict_proba(&features.get(i).values).unwrap()))
            .collect();
        let g = uncertainty_avg_entropy(&model, &features, batch).unwrap();
        let lo = hs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = hs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
    }

    #[test]
    fn diversity_is_symmetric(seed in any::<u64>(), cut in 1usize..39) {
        let corpus = small_corpus(40, 7);
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(&mut seed::rng(seed));
        let (a, b) = idx.split_at(cut);
        let x = diversity_jaccard(&corpus, a, b).unwrap();
        let y = diversity_jaccard(&corpus, b, a).unwrap();
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
    }
}

/// Training sentences score lower average NLL than random-token sentences of
/// the same length in at least 18 of 20 trials.
#[test]
fn lm_prefers_training_sentences_over_noise() {
    let corpus = small_corpus(150, 11);
    let lm = NgramLm::train(corpus.seqs.iter(), corpus.vocab.len(), LmConfig::default()).unwrap();
    let mut rng = seed::rng(99);
    let first_word = (0..corpus.vocab.len() as u32).find(|&i| !Vocab::is_special(i)).unwrap();
    let mean = |v: &[f64], n: usize| v[..n].iter().sum::<f64>() / n as f64;
    let mut wins = 0;
    for trial in 0..20 {
        let seq = &corpus.seqs[rng.gen_range(0..corpus.len())];
        let n = seq.real_len;
        let mut tokens: Vec<u32> = (0..n).map(|_| rng.gen_range(first_word..corpus.vocab.len() as u32)).collect();
        tokens.resize(seq.max_len(), PAD_ID);
        let noise = TokenSeq { id: format!("noise{trial}"), tokens, real_len: n, label: None };
        if mean(&lm.token_nll(seq).nll, n) < mean(&lm.token_nll(&noise).nll, n) {
            wins += 1;
        }
    }
    assert!(wins >= 18, "{wins}/20");
}
