//! The assembled model: encoder, graph message passing and score heads.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EmbeddingProvider, FollowType, PreparedSample};
use crate::encoder::{encode_sample, EncoderParams, SampleEmbeddings};
use crate::error::{Error, Result};
use crate::gnn::{message_pass, Adjacency, GnnParams};
use crate::graph::{build_graph, HdeGraph, NodeKind};
use crate::numerics::{ParamStore, Tape};
use crate::scoring::{accumulate_scores, ScoreHeads, ScoreLayout, ScoreVars};
use crate::training::{apply_ablation, ModelConfig, Wiring};

pub struct HdeModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub gnn: GnnParams,
    pub heads: ScoreHeads,
    pub wiring: Wiring,
}

impl HdeModel {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let wiring = apply_ablation(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(
            &mut store,
            config.input_dim(),
            config.h,
            config.tie_role_encoders,
            config.tie_family_weights,
            &mut rng,
        )?;
        let width = 2 * config.h;
        let gnn = GnnParams::new(
            &mut store,
            width,
            config.layers,
            wiring.tie_edge_types,
            config.per_layer_gnn,
            &mut rng,
        )?;
        let heads = ScoreHeads::new(&mut store, width, &mut rng)?;
        Ok(HdeModel {
            config: config.clone(),
            store,
            encoder,
            gnn,
            heads,
            wiring,
        })
    }

    /// Records the forward pass for one sample and returns its scores.
    pub fn forward(&self, tape: &mut Tape, input: &ModelInput) -> Result<ScoreVars> {
        self.forward_with(tape, input, &input.embeddings)
    }

    /// As [`forward`](Self::forward) with substitute input embeddings.
    pub fn forward_with(&self, tape: &mut Tape, input: &ModelInput, emb: &SampleEmbeddings) -> Result<ScoreVars> {
        let init = encode_sample(tape, input.graph.mentions(), emb, &self.encoder)?;
        let mut blocks = vec![init.candidates, init.documents];
        blocks.extend(init.entities);
        let full = tape.concat_rows(&blocks)?;
        let states = if self.wiring.use_graph {
            let start = match &input.kept_rows {
                Some(rows) => tape.gather_rows(full, rows.clone())?,
                None => full,
            };
            message_pass(tape, &input.adjacency, start, &self.gnn)?
        } else {
            full
        };
        accumulate_scores(tape, states, &input.layout, &self.heads, self.wiring.terms)
    }

    /// Scores for one sample without keeping the tape.
    pub fn scores(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let s = self.forward(&mut tape, input)?;
        Ok(tape.value(s.total).data().to_vec())
    }

    pub fn prepare(&self, sample: &PreparedSample, provider: &EmbeddingProvider) -> Result<ModelInput> {
        ModelInput::new(sample, provider, &self.wiring)
    }
}

/// Everything the forward pass needs for one sample, computed once.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub id: String,
    pub answer: Option<usize>,
    pub follow: Option<FollowType>,
    pub num_documents: usize,
    pub num_candidates: usize,
    pub embeddings: SampleEmbeddings,
    /// The complete graph, before any node-kind removal.
    pub graph: HdeGraph,
    /// Graph actually used for message passing and scoring.
    pub working_graph: HdeGraph,
    /// Rows of the complete node matrix kept in `working_graph`, if any were
    /// removed.
    pub kept_rows: Option<Arc<Vec<usize>>>,
    pub adjacency: Adjacency,
    pub layout: ScoreLayout,
}

impl ModelInput {
    pub fn new(prepared: &PreparedSample, provider: &EmbeddingProvider, wiring: &Wiring) -> Result<Self> {
        let sample = &prepared.sample;
        sample.validate()?;
        let graph = build_graph(sample, &prepared.mentions)?;
        let embeddings = SampleEmbeddings::new(sample, provider)?;
        let (c, s) = (graph.num_candidates(), graph.num_documents());
        let (working_graph, kept_rows) =
            if wiring.use_graph && !(wiring.keep_candidates && wiring.keep_documents && wiring.keep_entities) {
                let g = graph.restrict(|k| match k {
                    NodeKind::Candidate(_) => wiring.keep_candidates,
                    NodeKind::Document(_) => wiring.keep_documents,
                    NodeKind::Entity(_) => wiring.keep_entities,
                });
                let rows = g
                    .nodes()
                    .iter()
                    .map(|k| match *k {
                        NodeKind::Candidate(i) => i,
                        NodeKind::Document(i) => c + i,
                        NodeKind::Entity(i) => c + s + i,
                    })
                    .collect();
                (g, Some(Arc::new(rows)))
            } else {
                (graph.clone(), None)
            };
        if working_graph.num_nodes() == 0 {
            return Err(Error::Graph(format!("sample {}: no nodes left after ablation", sample.id)));
        }
        let adjacency = Adjacency::from_graph(&working_graph);
        let layout = ScoreLayout::from_graph(&working_graph)?;
        Ok(ModelInput {
            id: sample.id.clone(),
            answer: sample.answer_index,
            follow: prepared.follow,
            num_documents: s,
            num_candidates: c,
            embeddings,
            graph,
            working_graph,
            kept_rows,
            adjacency,
            layout,
        })
    }
}
