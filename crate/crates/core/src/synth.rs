//! Seeded synthetic multi-hop samples with a known reasoning chain.
//!
//! Every sentence has the form `x with y .` over numbered entity symbols.
//! A 2-hop sample links the subject to a bridge symbol in one document and the
//! bridge to the answer in another; a 1-hop sample puts subject and answer in
//! the same sentence. Wrong candidates sit in distractor documents next to
//! symbols that occur nowhere else.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{query_tokens, FollowType, QuerySample, RawRecord};
use crate::error::{Error, Result};

pub const RELATION: &str = "linked_to";
const LINK_WORD: &str = "with";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of distinct entity symbols available.
    pub vocab_size: usize,
    pub num_documents: usize,
    pub num_candidates: usize,
    /// Documents that hold the wrong candidates; the rest beyond the gold
    /// chain are filled with unrelated sentences.
    pub num_distractors: usize,
    pub hops: usize,
    pub num_samples: usize,
    pub seed: u64,
    /// Also list the bridge symbol among the candidates (2-hop only).
    pub bridge_candidate: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 200,
            num_documents: 4,
            num_candidates: 4,
            num_distractors: 2,
            hops: 2,
            num_samples: 100,
            seed: 0,
            bridge_candidate: true,
        }
    }
}

impl SynthConfig {
    fn chain_docs(&self) -> usize {
        self.hops
    }

    fn noise_docs(&self) -> usize {
        self.num_documents - self.chain_docs() - self.num_distractors
    }

    /// Entity symbols consumed by one sample.
    pub fn symbols_per_sample(&self) -> usize {
        let bridge = usize::from(self.hops == 2 && !self.bridge_candidate);
        // subject + candidates + one partner per wrong candidate + noise pairs
        let wrong = self.num_candidates - 1 - usize::from(self.hops == 2 && self.bridge_candidate);
        let empty_distractors = self.num_distractors.saturating_sub(wrong);
        1 + bridge + self.num_candidates + wrong + 2 * (self.noise_docs() + empty_distractors)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth: {m}")));
        if !(1..=2).contains(&self.hops) {
            return bad(format!("hops={} must be 1 or 2", self.hops));
        }
        if self.num_candidates < 2 {
            return bad("need at least 2 candidates".into());
        }
        if self.hops == 2 && self.bridge_candidate && self.num_candidates < 3 {
            return bad("a bridge candidate needs at least 3 candidates".into());
        }
        if self.num_distractors == 0 {
            return bad("need at least one distractor document".into());
        }
        if self.chain_docs() + self.num_distractors > self.num_documents {
            return bad(format!(
                "{} documents cannot hold a {}-document chain and {} distractors",
                self.num_documents,
                self.chain_docs(),
                self.num_distractors
            ));
        }
        let used = self.symbols_per_sample();
        if self.vocab_size < 10 * used {
            return bad(format!(
                "vocabulary of {} is below 10x the {used} symbols used per sample",
                self.vocab_size
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSample {
    pub sample: QuerySample,
    /// Document indices from the subject to the answer.
    pub gold_chain: Vec<usize>,
    pub follow: FollowType,
}

/// Sidecar label line for a generated sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthLabel {
    pub id: String,
    pub follow_type: FollowType,
    pub gold_chain: Vec<usize>,
}

impl SynthSample {
    pub fn label(&self) -> SynthLabel {
        SynthLabel {
            id: self.sample.id.clone(),
            follow_type: self.follow,
            gold_chain: self.gold_chain.clone(),
        }
    }
}

fn symbol(n: usize) -> String {
    format!("e{n}")
}

fn sentence(a: &str, b: &str) -> Vec<String> {
    vec![a.to_string(), LINK_WORD.to_string(), b.to_string(), ".".to_string()]
}

/// Generates `cfg.num_samples` samples; sample `i` depends only on
/// `(cfg, i)`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    (0..cfg.num_samples).map(|i| generate_one(cfg, i)).collect()
}

fn generate_one(cfg: &SynthConfig, index: usize) -> Result<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
    let vocab: Vec<usize> = (0..cfg.vocab_size).collect();
    let mut symbols = vocab
        .choose_multiple(&mut rng, cfg.symbols_per_sample())
        .map(|&n| symbol(n))
        .collect::<Vec<_>>()
        .into_iter();
    let mut take = || symbols.next().expect("symbol budget checked by validate");

    let subject = take();
    let answer = take();
    let bridge = (cfg.hops == 2).then(&mut take);
    let mut wrong: Vec<String> = Vec::new();
    if let (Some(b), true) = (&bridge, cfg.bridge_candidate) {
        wrong.push(b.clone());
    }
    while wrong.len() < cfg.num_candidates - 1 {
        wrong.push(take());
    }

    // Documents: chain first, then distractors, then noise; shuffled below.
    let mut docs: Vec<Vec<String>> = Vec::new();
    match &bridge {
        Some(b) => {
            docs.push(sentence(&subject, b));
            docs.push(sentence(b, &answer));
        }
        None => docs.push(sentence(&subject, &answer)),
    }
    let chain_len = docs.len();
    let mut distractors = vec![Vec::new(); cfg.num_distractors];
    let mut placed: Vec<&String> = wrong.iter().filter(|w| Some(*w) != bridge.as_ref()).collect();
    placed.shuffle(&mut rng);
    for (k, w) in placed.into_iter().enumerate() {
        // Every distractor gets one wrong candidate before any gets two.
        let slot = if k < cfg.num_distractors {
            k
        } else {
            rng.random_range(0..cfg.num_distractors)
        };
        let partner = take();
        distractors[slot].extend(sentence(&partner, w));
    }
    for d in distractors {
        docs.push(if d.is_empty() { sentence(&take(), &take()) } else { d });
    }
    for _ in 0..cfg.noise_docs() {
        docs.push(sentence(&take(), &take()));
    }

    let mut doc_order: Vec<usize> = (0..docs.len()).collect();
    doc_order.shuffle(&mut rng);
    let documents: Vec<Vec<String>> = doc_order.iter().map(|&i| docs[i].clone()).collect();
    let gold_chain = (0..chain_len)
        .map(|c| doc_order.iter().position(|&i| i == c).expect("permutation"))
        .collect();

    let mut candidates: Vec<String> = std::iter::once(answer.clone()).chain(wrong).collect();
    candidates.shuffle(&mut rng);
    let answer_index = candidates.iter().position(|c| *c == answer);

    let subject_tokens = vec![subject];
    let sample = QuerySample {
        id: format!("synth_{}hop_{}_{index}", cfg.hops, cfg.seed),
        query_tokens: query_tokens(RELATION, &subject_tokens),
        subject_tokens,
        relation: RELATION.to_string(),
        documents,
        candidates: candidates.into_iter().map(|c| vec![c]).collect(),
        answer_index,
    };
    sample.validate()?;
    Ok(SynthSample {
        sample,
        gold_chain,
        follow: if cfg.hops == 1 {
            FollowType::SingleFollow
        } else {
            FollowType::MultiFollow
        },
    })
}

fn contains(doc: &[String], token: &[String]) -> bool {
    doc.windows(token.len()).any(|w| w == token)
}

/// Checks the reasoning structure of one generated sample.
pub fn check_sample(s: &SynthSample) -> Result<()> {
    let q = &s.sample;
    let bad = |m: &str| Err(Error::Invalid(format!("{}: {m}", q.id)));
    let Some(a) = q.answer_index else {
        return bad("no answer");
    };
    let answer = &q.candidates[a];
    let subject = &q.subject_tokens;
    let together = q
        .documents
        .iter()
        .filter(|d| contains(d, subject) && contains(d, answer))
        .count();
    match s.follow {
        FollowType::SingleFollow => {
            if together == 0 || s.gold_chain.len() != 1 {
                return bad("answer does not share a document with the subject");
            }
        }
        FollowType::MultiFollow => {
            if together != 0 {
                return bad("answer shares a document with the subject");
            }
            let [first, second] = s.gold_chain[..] else {
                return bad("gold chain is not two documents long");
            };
            let (d1, d2) = (&q.documents[first], &q.documents[second]);
            if !contains(d1, subject) || !contains(d2, answer) {
                return bad("gold chain endpoints are wrong");
            }
            let shared: HashSet<&String> = d1.iter().filter(|t| d2.contains(t) && t.as_str() != LINK_WORD && t.as_str() != ".").collect();
            if shared.is_empty() {
                return bad("no bridge between the chain documents");
            }
        }
    }
    for (j, c) in q.candidates.iter().enumerate() {
        if !q.documents.iter().any(|d| contains(d, c)) {
            return bad(&format!("candidate {j} is never mentioned"));
        }
    }
    Ok(())
}

/// Accuracy of always picking the most-mentioned candidate (lowest index on
/// ties).
pub fn frequency_baseline(samples: &[QuerySample]) -> f64 {
    let mut correct = 0;
    let mut total = 0;
    for s in samples {
        let Some(a) = s.answer_index else { continue };
        let counts: Vec<usize> = s
            .candidates
            .iter()
            .map(|c| s.documents.iter().map(|d| d.windows(c.len()).filter(|w| *w == &c[..]).count()).sum())
            .collect();
        let mut best = 0;
        for (i, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = i;
            }
        }
        total += 1;
        correct += usize::from(best == a);
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// WikiHop-format records for the generated samples.
pub fn to_records(samples: &[SynthSample]) -> Vec<RawRecord> {
    samples.iter().map(|s| s.sample.to_record()).collect()
}
