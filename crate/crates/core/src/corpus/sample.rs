use serde::{Deserialize, Serialize};

use super::tokenize::{SimpleTokenizer, Tokenizer};
use crate::error::{Error, Result};

/// One multiple-choice query: `(subject, relation, ?)` plus support documents
/// and candidate answers, all tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySample {
    pub id: String,
    pub query_tokens: Vec<String>,
    pub subject_tokens: Vec<String>,
    pub relation: String,
    pub documents: Vec<Vec<String>>,
    pub candidates: Vec<Vec<String>>,
    pub answer_index: Option<usize>,
}

impl QuerySample {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("sample {}: {msg}", self.id)));
        if self.documents.is_empty() {
            return bad("no support documents".into());
        }
        if self.candidates.len() < 2 {
            return bad(format!("{} candidate(s), need at least 2", self.candidates.len()));
        }
        if self.query_tokens.is_empty() || self.subject_tokens.is_empty() {
            return bad("empty query or subject".into());
        }
        if let Some(i) = self.documents.iter().position(Vec::is_empty) {
            return bad(format!("document {i} is empty"));
        }
        if let Some(i) = self.candidates.iter().position(Vec::is_empty) {
            return bad(format!("candidate {i} is empty"));
        }
        if let Some(a) = self.answer_index {
            if a >= self.candidates.len() {
                return bad(format!("answer index {a} out of range"));
            }
        }
        Ok(())
    }

    /// Truncates every document to at most `cap` tokens.
    pub fn truncate_documents(&mut self, cap: usize) {
        let cap = cap.max(1);
        for d in &mut self.documents {
            d.truncate(cap);
        }
    }

    pub fn to_record(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            query: format!("{} {}", self.relation, self.subject_tokens.join(" ")),
            answer: self.answer_index.map(|a| self.candidates[a].join(" ")),
            candidates: self.candidates.iter().map(|c| c.join(" ")).collect(),
            supports: self.documents.iter().map(|d| d.join(" ")).collect(),
        }
    }
}

/// A record in the public WikiHop JSON layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub candidates: Vec<String>,
    pub supports: Vec<String>,
}

/// Splits `"record_label get ready"` into the relation and subject tokens.
pub fn split_query(query: &str) -> Result<(String, Vec<String>)> {
    split_query_with(query, &SimpleTokenizer)
}

pub fn split_query_with(query: &str, tokenizer: &dyn Tokenizer) -> Result<(String, Vec<String>)> {
    let trimmed = query.trim();
    let (relation, rest) = match trimmed.split_once(char::is_whitespace) {
        Some((r, rest)) => (r, rest),
        None => return Err(Error::Query(query.to_string())),
    };
    let subject = tokenizer.tokenize(rest);
    if subject.is_empty() {
        return Err(Error::Query(query.to_string()));
    }
    Ok((relation.to_string(), subject))
}

/// Query tokens fed to the query encoder: relation words then the subject.
pub fn query_tokens(relation: &str, subject: &[String]) -> Vec<String> {
    relation
        .split('_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .chain(subject.iter().cloned())
        .collect()
}

impl RawRecord {
    pub fn to_sample(&self, tokenizer: &dyn Tokenizer) -> Result<QuerySample> {
        let (relation, subject_tokens) = split_query_with(&self.query, tokenizer)?;
        let documents: Vec<Vec<String>> = self.supports.iter().map(|s| tokenizer.tokenize(s)).collect();
        let candidates: Vec<Vec<String>> = self.candidates.iter().map(|c| tokenizer.tokenize(c)).collect();
        let answer_index = match &self.answer {
            None => None,
            Some(ans) => {
                let toks = tokenizer.tokenize(ans);
                match candidates.iter().position(|c| *c == toks) {
                    Some(i) => Some(i),
                    None => {
                        return Err(Error::UnknownAnswer {
                            id: self.id.clone(),
                            answer: ans.clone(),
                        })
                    }
                }
            }
        };
        let sample = QuerySample {
            id: self.id.clone(),
            query_tokens: query_tokens(&relation, &subject_tokens),
            subject_tokens,
            relation,
            documents,
            candidates,
            answer_index,
        };
        sample.validate()?;
        Ok(sample)
    }
}

/// Parses a WikiHop-format JSON array into tokenized samples.
pub fn parse_dataset(raw: &[u8]) -> Result<Vec<QuerySample>> {
    parse_dataset_with(raw, &SimpleTokenizer)
}

pub fn parse_dataset_with(raw: &[u8], tokenizer: &dyn Tokenizer) -> Result<Vec<QuerySample>> {
    let values: Vec<serde_json::Value> = serde_json::from_slice(raw)?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let record: RawRecord = serde_json::from_value(v).map_err(|e| Error::Record {
                index,
                message: e.to_string(),
            })?;
            record.to_sample(tokenizer).map_err(|e| match e {
                e @ Error::UnknownAnswer { .. } => e,
                other => Error::Record {
                    index,
                    message: other.to_string(),
                },
            })
        })
        .collect()
}

/// Serializes samples back to the WikiHop layout (tokens joined by spaces).
pub fn serialize_dataset(samples: &[QuerySample]) -> Result<Vec<u8>> {
    let records: Vec<RawRecord> = samples.iter().map(QuerySample::to_record).collect();
    Ok(serde_json::to_vec_pretty(&records)?)
}
