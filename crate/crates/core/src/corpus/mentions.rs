use serde::{Deserialize, Serialize};

use super::sample::QuerySample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    Candidate(usize),
    Subject,
}

/// A located span `[start, end)` in one support document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub document_index: usize,
    pub start: usize,
    pub end: usize,
    pub source: MentionSource,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn source_tokens(sample: &QuerySample, source: MentionSource) -> Option<&[String]> {
    match source {
        MentionSource::Candidate(i) => sample.candidates.get(i).map(Vec::as_slice),
        MentionSource::Subject => Some(&sample.subject_tokens),
    }
}

/// Checks that a mention lies inside its document and spells its source.
pub fn mention_matches(sample: &QuerySample, m: &Mention) -> bool {
    let Some(doc) = sample.documents.get(m.document_index) else {
        return false;
    };
    let Some(src) = source_tokens(sample, m.source) else {
        return false;
    };
    m.start < m.end && m.end <= doc.len() && doc[m.start..m.end] == *src
}

/// Finds every exact token-level occurrence of each candidate and of the
/// query subject in every document.
///
/// Output is ordered by document, then start offset, then source (candidates
/// by index, subject last). Overlapping occurrences are all kept.
pub fn extract_mentions(sample: &QuerySample) -> Vec<Mention> {
    let sources: Vec<(MentionSource, &[String])> = sample
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (MentionSource::Candidate(i), c.as_slice()))
        .chain(std::iter::once((MentionSource::Subject, sample.subject_tokens.as_slice())))
        .filter(|(_, toks)| !toks.is_empty())
        .collect();

    let mut out = Vec::new();
    for (d, doc) in sample.documents.iter().enumerate() {
        for start in 0..doc.len() {
            for &(source, toks) in &sources {
                let end = start + toks.len();
                if end <= doc.len() && doc[start..end] == *toks {
                    out.push(Mention {
                        document_index: d,
                        start,
                        end,
                        source,
                    });
                }
            }
        }
    }
    out
}
