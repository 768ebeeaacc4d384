use std::collections::HashMap;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const OOV_STD: f64 = 0.5;

pub(crate) fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn seeded_vector(key: &[u8], seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(key, seed));
    let normal = Normal::new(0.0, OOV_STD).expect("valid std");
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Frozen token → vector lookup.
///
/// Each vector is a word part (`word_dim`, from a pretrained table or a
/// seeded random draw for out-of-vocabulary tokens) followed by a character
/// part (`char_dim`, the mean of seeded vectors of the token's boundary-padded
/// character trigrams). Nothing is mutable after construction, so a token
/// always maps to the same row.
#[derive(Clone, Debug)]
pub struct EmbeddingProvider {
    word_dim: usize,
    char_dim: usize,
    table: HashMap<String, Vec<f64>>,
    oov_seed: u64,
}

impl EmbeddingProvider {
    /// Provider with an empty table: every word part is a seeded draw.
    pub fn random(word_dim: usize, char_dim: usize, oov_seed: u64) -> Self {
        EmbeddingProvider {
            word_dim,
            char_dim,
            table: HashMap::new(),
            oov_seed,
        }
    }

    /// Loads a whitespace-separated `token v1 v2 …` text table (GloVe layout).
    pub fn from_text_table<R: BufRead>(reader: R, char_dim: usize, oov_seed: u64) -> Result<Self> {
        let mut table = HashMap::new();
        let mut word_dim = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("embedding line {}: {e}", lineno + 1)))?;
            match word_dim {
                None => word_dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Invalid(format!(
                        "embedding line {}: {} values, expected {d}",
                        lineno + 1,
                        values.len()
                    )))
                }
                _ => {}
            }
            table.insert(token.to_lowercase(), values);
        }
        let word_dim = word_dim.ok_or_else(|| Error::Invalid("empty embedding table".into()))?;
        Ok(EmbeddingProvider {
            word_dim,
            char_dim,
            table,
            oov_seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn char_dim(&self) -> usize {
        self.char_dim
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let mut v = match self.table.get(token) {
            Some(w) => w.clone(),
            None => seeded_vector(token.as_bytes(), self.oov_seed, self.word_dim),
        };
        if self.char_dim > 0 {
            let padded: Vec<char> = std::iter::once('<')
                .chain(token.chars())
                .chain(std::iter::once('>'))
                .collect();
            let mut acc = vec![0.0; self.char_dim];
            let trigrams: Vec<String> = padded.windows(3).map(|w| w.iter().collect()).collect();
            for tri in &trigrams {
                let key = format!("#char#{tri}");
                for (a, x) in acc.iter_mut().zip(seeded_vector(key.as_bytes(), self.oov_seed, self.char_dim)) {
                    *a += x;
                }
            }
            let n = trigrams.len().max(1) as f64;
            v.extend(acc.into_iter().map(|x| x / n));
        }
        v
    }

    /// Embeds a token sequence as an `l × d` matrix.
    pub fn embed(&self, tokens: &[String]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::Invalid("cannot embed an empty token sequence".into()));
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim());
        for t in tokens {
            data.extend(self.vector(t));
        }
        Tensor::new(tokens.len(), self.dim(), data)
    }

    /// Order-independent digest of the pretrained table and settings.
    pub fn fingerprint(&self) -> u64 {
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        let mut h = fnv1a(&(self.word_dim as u64).to_le_bytes(), self.oov_seed);
        h = fnv1a(&(self.char_dim as u64).to_le_bytes(), h);
        for k in keys {
            h = fnv1a(k.as_bytes(), h);
            for v in &self.table[k] {
                h = fnv1a(&v.to_le_bytes(), h);
            }
        }
        h
    }
}

/// Embeds a token sequence with `provider`.
pub fn embed(tokens: &[String], provider: &EmbeddingProvider) -> Result<Tensor> {
    provider.embed(tokens)
}
