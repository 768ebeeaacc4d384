use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::FollowType;

/// Accuracy over one slice of a dataset; `accuracy` is null for empty slices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub count: usize,
}

impl Bucket {
    fn add(&mut self, correct: bool) {
        self.count += 1;
        self.correct += usize::from(correct);
        self.accuracy = Some(self.correct as f64 / self.count as f64);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: Bucket,
    pub single_follow: Bucket,
    pub multi_follow: Bucket,
    pub by_num_docs: BTreeMap<usize, Bucket>,
    pub by_num_candidates: BTreeMap<usize, Bucket>,
}

/// One scored sample as seen by [`Metrics::from_outcomes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub correct: bool,
    pub follow: Option<FollowType>,
    pub num_documents: usize,
    pub num_candidates: usize,
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Self {
        let mut m = Metrics::default();
        for o in outcomes {
            m.overall.add(o.correct);
            match o.follow {
                Some(FollowType::SingleFollow) => m.single_follow.add(o.correct),
                Some(FollowType::MultiFollow) => m.multi_follow.add(o.correct),
                None => {}
            }
            m.by_num_docs.entry(o.num_documents).or_default().add(o.correct);
            m.by_num_candidates.entry(o.num_candidates).or_default().add(o.correct);
        }
        m
    }

    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy.unwrap_or(0.0)
    }
}
