use crate::error::{Error, Result};
use crate::scoring::PredictionRecord;

/// Majority vote per sample across models. The output's `scores` hold the
/// vote count of each candidate; ties go to the lowest candidate index.
pub fn ensemble_vote(models: &[Vec<PredictionRecord>]) -> Result<Vec<PredictionRecord>> {
    let Some(first) = models.first() else {
        return Err(Error::Invalid("ensemble needs at least one model".into()));
    };
    for (m, preds) in models.iter().enumerate() {
        if preds.len() != first.len() {
            return Err(Error::Invalid(format!(
                "model {m} has {} predictions, model 0 has {}",
                preds.len(),
                first.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for (i, anchor) in first.iter().enumerate() {
        let width = models.iter().map(|p| p[i].scores.len()).max().unwrap_or(0);
        let mut votes = vec![0.0; width.max(1)];
        for (m, preds) in models.iter().enumerate() {
            let p = &preds[i];
            if p.id != anchor.id {
                return Err(Error::Invalid(format!(
                    "id mismatch at position {i}: model 0 has {}, model {m} has {}",
                    anchor.id, p.id
                )));
            }
            if p.predicted_candidate >= votes.len() {
                votes.resize(p.predicted_candidate + 1, 0.0);
            }
            votes[p.predicted_candidate] += 1.0;
        }
        out.push(PredictionRecord::new(anchor.id.clone(), votes));
    }
    Ok(out)
}
