use rand::seq::IndexedRandom;
use rand::Rng;

use hde::corpus::{extract_mentions, query_tokens, tokenize, EmbeddingProvider, PreparedSample, QuerySample};
use hde::synth::{generate, SynthConfig};
use hde::training::ModelConfig;

/// Small enough for finite differences and exhaustive checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        word_dim: 5,
        char_dim: 3,
        h: 4,
        layers: 2,
        epochs: 3,
        batch_size: 2,
        workers: 1,
        ..ModelConfig::default()
    }
}

/// Config used for the synthetic learning runs.
pub fn synth_config(seed: u64) -> ModelConfig {
    ModelConfig {
        word_dim: 32,
        char_dim: 0,
        h: 32,
        layers: 3,
        epochs: 30,
        seed,
        ..ModelConfig::default()
    }
}

pub fn sample(id: &str, subject: &str, docs: &[&str], cands: &[&str], answer: Option<usize>) -> QuerySample {
    let subject_tokens = tokenize(subject);
    QuerySample {
        id: id.into(),
        query_tokens: query_tokens("located_in", &subject_tokens),
        subject_tokens,
        relation: "located_in".into(),
        documents: docs.iter().map(|d| tokenize(d)).collect(),
        candidates: cands.iter().map(|c| tokenize(c)).collect(),
        answer_index: answer,
    }
}

/// Two documents, three candidates, one subject mention.
pub fn toy_sample() -> QuerySample {
    sample(
        "toy",
        "alpha",
        &["alpha met beta in gamma city .", "beta later moved to delta ."],
        &["beta", "gamma city", "delta"],
        Some(2),
    )
}

pub fn prepared(s: QuerySample) -> PreparedSample {
    PreparedSample::new(s, 300, None)
}

pub fn provider(c: &ModelConfig) -> EmbeddingProvider {
    c.embedding_provider().unwrap()
}

pub fn synth(hops: usize, n: usize, seed: u64) -> Vec<PreparedSample> {
    let cfg = SynthConfig {
        hops,
        num_samples: n,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg)
        .unwrap()
        .into_iter()
        .map(|s| PreparedSample::new(s.sample, 300, Some(s.follow)))
        .collect()
}

/// A random sample with at most 4 documents, 5 candidates and 10 mentions.
pub fn random_sample<R: Rng>(rng: &mut R, id: usize) -> PreparedSample {
    let n_docs = rng.random_range(1..=4);
    let n_cands = rng.random_range(2..=5);
    let cand_words = ["c0", "c1", "c2", "c3", "c4"];
    let candidates: Vec<Vec<String>> = (0..n_cands)
        .map(|i| {
            if rng.random_bool(0.2) {
                vec![cand_words[i].to_string(), "x".to_string()]
            } else {
                vec![cand_words[i].to_string()]
            }
        })
        .collect();
    let mut pool: Vec<&str> = vec!["s", "x", "w", "v"];
    pool.extend(&cand_words[..n_cands]);
    let documents: Vec<Vec<String>> = (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=7);
            (0..len).map(|_| pool.choose(rng).unwrap().to_string()).collect()
        })
        .collect();
    let subject_tokens = vec!["s".to_string()];
    let s = QuerySample {
        id: format!("random_{id}"),
        query_tokens: query_tokens("r", &subject_tokens),
        subject_tokens,
        relation: "r".into(),
        documents,
        candidates,
        answer_index: Some(rng.random_range(0..n_cands)),
    };
    s.validate().unwrap();
    let mut mentions = extract_mentions(&s);
    mentions.truncate(10);
    PreparedSample {
        sample: s,
        mentions,
        follow: None,
    }
}
