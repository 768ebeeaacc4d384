//! Candidate scores from final node states, the training loss and argmax
//! prediction.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::MentionSource;
use crate::error::{Error, Result};
use crate::graph::{HdeGraph, NodeKind};
use crate::nn::Mlp;
use crate::numerics::{shifted_log_sum_exp, ParamStore, Tape, Var};

/// Candidate head `f_C` and entity head `f_E`, both 2h → h → 1.
#[derive(Clone, Copy, Debug)]
pub struct ScoreHeads {
    pub candidate: Mlp,
    pub entity: Mlp,
}

impl ScoreHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, width: usize, rng: &mut R) -> Result<Self> {
        Ok(ScoreHeads {
            candidate: Mlp::new(store, "score.candidate", width, width / 2, 1, rng)?,
            entity: Mlp::new(store, "score.entity", width, width / 2, 1, rng)?,
        })
    }
}

/// Where each candidate's scoring rows live in the node-state matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreLayout {
    pub num_candidates: usize,
    /// Node row of candidate j, in candidate order; empty if candidate nodes
    /// are absent from the graph.
    pub candidate_rows: Arc<Vec<usize>>,
    /// Node rows of the candidate-mention entities.
    pub entity_rows: Arc<Vec<usize>>,
    /// For candidate j, positions into `entity_rows` of its mentions.
    pub entity_groups: Vec<Vec<usize>>,
}

impl ScoreLayout {
    pub fn from_graph(g: &HdeGraph) -> Result<Self> {
        let c = g.num_candidates();
        let mut candidate_rows = vec![None; c];
        let mut entity_rows = Vec::new();
        let mut entity_groups = vec![Vec::new(); c];
        for (n, kind) in g.nodes().iter().enumerate() {
            match *kind {
                NodeKind::Candidate(j) => candidate_rows[j] = Some(n),
                NodeKind::Entity(m) => {
                    if let MentionSource::Candidate(j) = g.mentions()[m].source {
                        entity_groups[j].push(entity_rows.len());
                        entity_rows.push(n);
                    }
                }
                NodeKind::Document(_) => {}
            }
        }
        let present = candidate_rows.iter().filter(|r| r.is_some()).count();
        let candidate_rows = match present {
            0 => Vec::new(),
            p if p == c => candidate_rows.into_iter().flatten().collect(),
            _ => return Err(Error::Graph("graph holds only some candidate nodes".into())),
        };
        Ok(ScoreLayout {
            num_candidates: c,
            candidate_rows: Arc::new(candidate_rows),
            entity_rows: Arc::new(entity_rows),
            entity_groups,
        })
    }
}

/// Which terms of the score sum are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoreTerms {
    pub candidate: bool,
    pub entity: bool,
}

impl Default for ScoreTerms {
    fn default() -> Self {
        ScoreTerms {
            candidate: true,
            entity: true,
        }
    }
}

/// The score column and the two terms it was summed from.
#[derive(Clone, Copy, Debug)]
pub struct ScoreVars {
    pub total: Var,
    pub candidate: Option<Var>,
    pub entity: Option<Var>,
}

/// `a_j = f_C(h_cand_j) + max_{e ∈ mentions(j)} f_E(h_e)`. Candidates without
/// mentions keep the first term alone.
pub fn accumulate_scores(
    tape: &mut Tape,
    states: Var,
    layout: &ScoreLayout,
    heads: &ScoreHeads,
    terms: ScoreTerms,
) -> Result<ScoreVars> {
    let rows = tape.shape(states)[0];
    let max_row = layout
        .candidate_rows
        .iter()
        .chain(layout.entity_rows.iter())
        .copied()
        .max();
    if max_row.is_some_and(|m| m >= rows) {
        return Err(Error::Graph(format!("layout refers past the {rows} node states")));
    }
    let candidate = if terms.candidate && !layout.candidate_rows.is_empty() {
        let h_c = tape.gather_rows(states, layout.candidate_rows.clone())?;
        Some(heads.candidate.apply(tape, h_c)?)
    } else {
        None
    };
    let entity = if terms.entity && !layout.entity_rows.is_empty() {
        let h_e = tape.gather_rows(states, layout.entity_rows.clone())?;
        let e = heads.entity.apply(tape, h_e)?;
        Some(tape.gather_max(e, &layout.entity_groups)?)
    } else {
        None
    };
    let total = match (candidate, entity) {
        (Some(c), Some(e)) => tape.add(c, e)?,
        (Some(c), None) => c,
        (None, Some(e)) => e,
        (None, None) => tape.constant(crate::numerics::Tensor::zeros(layout.num_candidates, 1)),
    };
    Ok(ScoreVars {
        total,
        candidate,
        entity,
    })
}

/// `−log softmax(scores)[answer]`, shifted by the maximum.
pub fn cross_entropy(scores: &[f64], answer: usize) -> Result<f64> {
    if answer >= scores.len() {
        return Err(Error::Invalid(format!(
            "answer {answer} out of range for {} scores",
            scores.len()
        )));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - scores[answer]) + shifted_log_sum_exp(scores))
}

/// Index of the largest score, lowest index on ties.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted_candidate: usize,
    pub scores: Vec<f64>,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, scores: Vec<f64>) -> Self {
        PredictionRecord {
            id: id.into(),
            predicted_candidate: predict(&scores),
            scores,
        }
    }
}

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (index, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            index,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
