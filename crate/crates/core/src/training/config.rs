use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::scoring::ScoreTerms;

/// Model-level switches removing one component of the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_graph: bool,
    pub tie_edge_types: bool,
    pub drop_candidate_scores: bool,
    pub drop_entity_scores: bool,
    pub drop_candidate_nodes: bool,
    pub drop_document_nodes: bool,
    pub drop_entity_nodes: bool,
}

impl Ablation {
    /// The full model followed by each single-flag variant, with table labels.
    pub fn suite() -> Vec<(&'static str, Ablation)> {
        let one = |f: fn(&mut Ablation)| {
            let mut a = Ablation::default();
            f(&mut a);
            a
        };
        vec![
            ("full", Ablation::default()),
            ("no_graph", one(|a| a.no_graph = true)),
            ("tie_edge_types", one(|a| a.tie_edge_types = true)),
            ("drop_candidate_scores", one(|a| a.drop_candidate_scores = true)),
            ("drop_entity_scores", one(|a| a.drop_entity_scores = true)),
            ("drop_candidate_nodes", one(|a| a.drop_candidate_nodes = true)),
            ("drop_document_nodes", one(|a| a.drop_document_nodes = true)),
            ("drop_entity_nodes", one(|a| a.drop_entity_nodes = true)),
        ]
    }
}

/// Hyperparameters, embedding source and ablation flags for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word-embedding width; the model input width `d` is `word_dim + char_dim`.
    pub word_dim: usize,
    pub char_dim: usize,
    /// Encoder output width; node states are `2h` wide.
    pub h: usize,
    /// Message-passing layers.
    pub layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_doc_len: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    /// Drop probability on input embeddings while training.
    pub dropout: f64,
    /// Global gradient-norm cap per batch; 0 disables.
    pub grad_clip: f64,
    /// Worker threads for per-sample work; 0 uses every core.
    pub workers: usize,
    /// Whitespace-separated `token v1 … vN` table; random vectors when unset.
    pub embedding_path: Option<PathBuf>,
    pub embedding_seed: u64,
    pub no_graph: bool,
    pub tie_edge_types: bool,
    pub drop_candidate_scores: bool,
    pub drop_entity_scores: bool,
    pub drop_candidate_nodes: bool,
    pub drop_document_nodes: bool,
    pub drop_entity_nodes: bool,
    pub tie_role_encoders: bool,
    pub tie_family_weights: bool,
    pub per_layer_gnn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 300,
            char_dim: 100,
            h: 32,
            layers: 3,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 30,
            seed: 0,
            max_doc_len: 300,
            patience: 5,
            dropout: 0.0,
            grad_clip: 5.0,
            workers: 0,
            embedding_path: None,
            embedding_seed: 17,
            no_graph: false,
            tie_edge_types: false,
            drop_candidate_scores: false,
            drop_entity_scores: false,
            drop_candidate_nodes: false,
            drop_document_nodes: false,
            drop_entity_nodes: false,
            tie_role_encoders: false,
            tie_family_weights: false,
            per_layer_gnn: false,
        }
    }
}

/// How the model is assembled once ablations are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wiring {
    pub use_graph: bool,
    pub tie_edge_types: bool,
    pub terms: ScoreTerms,
    pub keep_candidates: bool,
    pub keep_documents: bool,
    pub keep_entities: bool,
}

impl ModelConfig {
    pub fn ablation(&self) -> Ablation {
        Ablation {
            no_graph: self.no_graph,
            tie_edge_types: self.tie_edge_types,
            drop_candidate_scores: self.drop_candidate_scores,
            drop_entity_scores: self.drop_entity_scores,
            drop_candidate_nodes: self.drop_candidate_nodes,
            drop_document_nodes: self.drop_document_nodes,
            drop_entity_nodes: self.drop_entity_nodes,
        }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.no_graph = a.no_graph;
        self.tie_edge_types = a.tie_edge_types;
        self.drop_candidate_scores = a.drop_candidate_scores;
        self.drop_entity_scores = a.drop_entity_scores;
        self.drop_candidate_nodes = a.drop_candidate_nodes;
        self.drop_document_nodes = a.drop_document_nodes;
        self.drop_entity_nodes = a.drop_entity_nodes;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ModelConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.h == 0 || !self.h.is_multiple_of(2) {
            return bad(format!("h={} must be even and positive", self.h));
        }
        if self.input_dim() == 0 {
            return bad("embedding width is zero".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return bad(format!("grad_clip {} must be non-negative", self.grad_clip));
        }
        if self.max_doc_len == 0 {
            return bad("max_doc_len must be positive".into());
        }
        apply_ablation(self).map(|_| ())
    }

    pub fn embedding_provider(&self) -> Result<EmbeddingProvider> {
        match &self.embedding_path {
            None => Ok(EmbeddingProvider::random(self.word_dim, self.char_dim, self.embedding_seed)),
            Some(path) => {
                let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let provider = EmbeddingProvider::from_text_table(BufReader::new(file), self.char_dim, self.embedding_seed)?;
                if provider.word_dim() != self.word_dim {
                    return Err(Error::Config(format!(
                        "embedding table is {}-dimensional, config says word_dim={}",
                        provider.word_dim(),
                        self.word_dim
                    )));
                }
                Ok(provider)
            }
        }
    }
}

/// Resolves the ablation flags into a model wiring, rejecting combinations
/// that leave nothing to score.
pub fn apply_ablation(config: &ModelConfig) -> Result<Wiring> {
    let a = config.ablation();
    let conflict = |m: &str| Err(Error::Config(format!("contradictory ablation flags: {m}")));
    if a.drop_candidate_scores && a.drop_entity_scores {
        return conflict("drop_candidate_scores and drop_entity_scores remove every score term");
    }
    if a.no_graph && (a.tie_edge_types || a.drop_candidate_nodes || a.drop_document_nodes || a.drop_entity_nodes) {
        return conflict("no_graph cannot be combined with graph-level flags");
    }
    if a.drop_candidate_nodes && (a.drop_entity_nodes || a.drop_entity_scores) {
        return conflict("drop_candidate_nodes leaves only the entity term, which is also removed");
    }
    if a.drop_entity_nodes && a.drop_candidate_scores {
        return conflict("drop_entity_nodes leaves only the candidate term, which is also removed");
    }
    Ok(Wiring {
        use_graph: !a.no_graph,
        tie_edge_types: a.tie_edge_types,
        terms: ScoreTerms {
            candidate: !a.drop_candidate_scores,
            entity: !a.drop_entity_scores,
        },
        keep_candidates: !a.drop_candidate_nodes,
        keep_documents: !a.drop_document_nodes,
        keep_entities: !a.drop_entity_nodes,
    })
}
