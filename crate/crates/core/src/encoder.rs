//! Context encoding: per-role bidirectional GRUs, query co-attention,
//! self-attentive pooling and the subject-entity lift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingProvider, Mention, MentionSource, QuerySample};
use crate::error::{Error, Result};
use crate::nn::{BiGru, Linear, Mlp};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

/// Which input sequence a GRU encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    Document,
    Candidate,
}

/// Node family; selects the fusion GRU and pooling weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Candidate,
    Document,
    Entity,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub h: usize,
    pub input_dim: usize,
    encoders: Vec<BiGru>,
    fusion: Vec<BiGru>,
    attention: Vec<Mlp>,
    pub lift: Linear,
}

impl EncoderParams {
    /// `tie_roles` shares one sequence encoder across query, documents and
    /// candidates; `tie_families` shares fusion and pooling weights across
    /// node families.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        input_dim: usize,
        h: usize,
        tie_roles: bool,
        tie_families: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if h == 0 || !h.is_multiple_of(2) {
            return Err(Error::Config(format!("encoder width h={h} must be even and positive")));
        }
        let roles: &[&str] = if tie_roles {
            &["shared"]
        } else {
            &["query", "document", "candidate"]
        };
        let families: &[&str] = if tie_families {
            &["shared"]
        } else {
            &["candidate", "document", "entity"]
        };
        let encoders = roles
            .iter()
            .map(|r| BiGru::new(store, &format!("encoder.{r}"), input_dim, h, rng))
            .collect::<Result<_>>()?;
        let fusion = families
            .iter()
            .map(|f| BiGru::new(store, &format!("fusion.{f}"), h, h, rng))
            .collect::<Result<_>>()?;
        let attention = families
            .iter()
            .map(|f| Mlp::new(store, &format!("attention.{f}"), 2 * h, h, 1, rng))
            .collect::<Result<_>>()?;
        let lift = Linear::new(store, "lift", h, 2 * h, rng)?;
        Ok(EncoderParams {
            h,
            input_dim,
            encoders,
            fusion,
            attention,
            lift,
        })
    }

    pub fn encoder(&self, role: Role) -> &BiGru {
        let i = match role {
            Role::Query => 0,
            Role::Document => 1,
            Role::Candidate => 2,
        };
        &self.encoders[i.min(self.encoders.len() - 1)]
    }

    fn family_slot(&self, family: Family) -> usize {
        let i = match family {
            Family::Candidate => 0,
            Family::Document => 1,
            Family::Entity => 2,
        };
        i.min(self.fusion.len() - 1)
    }

    pub fn fusion(&self, family: Family) -> &BiGru {
        &self.fusion[self.family_slot(family)]
    }

    pub fn attention(&self, family: Family) -> &Mlp {
        &self.attention[self.family_slot(family)]
    }
}

/// Bidirectional GRU over the rows of `x` (l × d) → l × h.
pub fn gru_encode(tape: &mut Tape, x: Var, role: Role, params: &EncoderParams) -> Result<Var> {
    params.encoder(role).encode(tape, x)
}

/// Co-attention of a sequence encoding `h_x` (l_x × h) with the query
/// encoding `h_q` (l_q × h), returning `[C_x | D_x]` (l_x × 2h).
pub fn coattend(tape: &mut Tape, h_q: Var, h_x: Var, family: Family, params: &EncoderParams) -> Result<Var> {
    let (sq, sx) = (tape.shape(h_q), tape.shape(h_x));
    if sq[1] != params.h || sx[1] != params.h {
        return Err(Error::shape("coattend", sq, sx));
    }
    if sq[0] == 0 || sx[0] == 0 {
        return Err(Error::Invalid("coattend needs non-empty inputs".into()));
    }
    let affinity = tape.matmul_nt(h_x, h_q)?;
    let affinity_t = tape.transpose(affinity);
    let to_x = tape.softmax_rows(affinity_t);
    let c_q = tape.matmul(to_x, h_x)?;
    let to_q = tape.softmax_rows(affinity);
    let c_x = tape.matmul(to_q, h_q)?;
    let mixed = tape.matmul(to_q, c_q)?;
    let d_x = params.fusion(family).encode(tape, mixed)?;
    tape.concat_cols(c_x, d_x)
}

/// Attention-weighted sum of the rows of `s` (l × 2h) → 1 × 2h.
pub fn self_attentive_pool(tape: &mut Tape, s: Var, family: Family, params: &EncoderParams) -> Result<Var> {
    let shape = tape.shape(s);
    if shape[0] == 0 || shape[1] != 2 * params.h {
        return Err(Error::shape("self_attentive_pool", shape, [1, 2 * params.h]));
    }
    let scores = params.attention(family).apply(tape, s)?;
    let row = tape.transpose(scores);
    let weights = tape.softmax_rows(row);
    tape.matmul(weights, s)
}

/// `tanh(m · W + b)`, raising subject spans from h to 2h.
pub fn lift_subject(tape: &mut Tape, m: Var, params: &EncoderParams) -> Result<Var> {
    let z = params.lift.apply(tape, m)?;
    Ok(tape.tanh(z))
}

/// Frozen input embeddings for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleEmbeddings {
    pub query: Tensor,
    pub documents: Vec<Tensor>,
    pub candidates: Vec<Tensor>,
}

impl SampleEmbeddings {
    pub fn new(sample: &QuerySample, provider: &EmbeddingProvider) -> Result<Self> {
        Ok(SampleEmbeddings {
            query: provider.embed(&sample.query_tokens)?,
            documents: sample
                .documents
                .iter()
                .map(|d| provider.embed(d))
                .collect::<Result<_>>()?,
            candidates: sample
                .candidates
                .iter()
                .map(|c| provider.embed(c))
                .collect::<Result<_>>()?,
        })
    }
}

/// Initial node vectors as tape variables. `entities` is `None` when the
/// sample has no mentions.
#[derive(Clone, Copy, Debug)]
pub struct NodeVars {
    pub candidates: Var,
    pub documents: Var,
    pub entities: Option<Var>,
}

/// Initial node vectors as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeInit {
    pub candidate_vectors: Tensor,
    pub document_vectors: Tensor,
    pub entity_vectors: Tensor,
}

impl NodeVars {
    pub fn values(&self, tape: &Tape) -> NodeInit {
        let width = tape.shape(self.candidates)[1];
        NodeInit {
            candidate_vectors: tape.value(self.candidates).clone(),
            document_vectors: tape.value(self.documents).clone(),
            entity_vectors: match self.entities {
                Some(e) => tape.value(e).clone(),
                None => Tensor::zeros(0, width),
            },
        }
    }
}

/// Encodes every document, candidate and mention of a sample into initial
/// node vectors of width 2h.
pub fn encode_sample(
    tape: &mut Tape,
    mentions: &[Mention],
    emb: &SampleEmbeddings,
    params: &EncoderParams,
) -> Result<NodeVars> {
    let q_in = tape.constant(emb.query.clone());
    let h_q = gru_encode(tape, q_in, Role::Query, params)?;

    let mut doc_states = Vec::with_capacity(emb.documents.len());
    let mut doc_vectors = Vec::with_capacity(emb.documents.len());
    for d in &emb.documents {
        let x = tape.constant(d.clone());
        let h_s = gru_encode(tape, x, Role::Document, params)?;
        let s_ca = coattend(tape, h_q, h_s, Family::Document, params)?;
        doc_vectors.push(self_attentive_pool(tape, s_ca, Family::Document, params)?);
        doc_states.push(h_s);
    }

    let mut cand_vectors = Vec::with_capacity(emb.candidates.len());
    for c in &emb.candidates {
        let x = tape.constant(c.clone());
        let h_c = gru_encode(tape, x, Role::Candidate, params)?;
        let c_ca = coattend(tape, h_q, h_c, Family::Candidate, params)?;
        cand_vectors.push(self_attentive_pool(tape, c_ca, Family::Candidate, params)?);
    }

    let mut entity_vectors = Vec::with_capacity(mentions.len());
    for (i, m) in mentions.iter().enumerate() {
        let Some(&h_s) = doc_states.get(m.document_index) else {
            return Err(Error::Invalid(format!(
                "mention {i} references missing document {}",
                m.document_index
            )));
        };
        let len = tape.shape(h_s)[0];
        if m.start >= m.end || m.end > len {
            return Err(Error::Invalid(format!(
                "mention {i} span [{}, {}) outside document {} of length {len}",
                m.start, m.end, m.document_index
            )));
        }
        let span = tape.slice_rows(h_s, m.start, m.end)?;
        let rows = match m.source {
            MentionSource::Candidate(_) => coattend(tape, h_q, span, Family::Entity, params)?,
            MentionSource::Subject => lift_subject(tape, span, params)?,
        };
        entity_vectors.push(self_attentive_pool(tape, rows, Family::Entity, params)?);
    }

    Ok(NodeVars {
        candidates: tape.concat_rows(&cand_vectors)?,
        documents: tape.concat_rows(&doc_vectors)?,
        entities: if entity_vectors.is_empty() {
            None
        } else {
            Some(tape.concat_rows(&entity_vectors)?)
        },
    })
}
