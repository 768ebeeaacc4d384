//! JSON-lines cache of tokenized samples with their mentions.
//!
//! Line 1 is a header `{"format":"hde-preprocessed","schema_version":N}`;
//! every following line is one [`PreparedSample`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::mentions::{extract_mentions, Mention};
use super::sample::QuerySample;
use crate::error::{Error, Result};

pub const CACHE_FORMAT: &str = "hde-preprocessed";
pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowType {
    SingleFollow,
    MultiFollow,
}

/// A sample ready for the model: tokens, mentions and an optional label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedSample {
    pub sample: QuerySample,
    pub mentions: Vec<Mention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow: Option<FollowType>,
}

impl PreparedSample {
    pub fn new(mut sample: QuerySample, max_doc_len: usize, follow: Option<FollowType>) -> Self {
        sample.truncate_documents(max_doc_len);
        let mentions = extract_mentions(&sample);
        PreparedSample {
            sample,
            mentions,
            follow,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
}

pub fn write_cache<W: Write>(mut w: W, samples: &[PreparedSample]) -> Result<()> {
    let header = Header {
        format: CACHE_FORMAT.into(),
        schema_version: CACHE_SCHEMA_VERSION,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache<R: BufRead>(r: R, name: &str) -> Result<Vec<PreparedSample>> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Invalid(format!("{name}: empty cache file")))??;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::Invalid(format!("{name}: bad cache header: {e}")))?;
    if header.format != CACHE_FORMAT {
        return Err(Error::Invalid(format!("{name}: not a preprocessed cache ({})", header.format)));
    }
    if header.schema_version != CACHE_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            file: name.to_string(),
            expected: CACHE_SCHEMA_VERSION,
            found: header.schema_version,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: PreparedSample = serde_json::from_str(&line).map_err(|e| Error::Record {
            index: i,
            message: e.to_string(),
        })?;
        s.sample.validate()?;
        out.push(s);
    }
    Ok(out)
}
