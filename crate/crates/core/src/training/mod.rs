//! Optimisation, evaluation, checkpoints and ensembling.

mod checkpoint;
mod config;
mod ensemble;
mod metrics;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{write_atomic, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{apply_ablation, Ablation, ModelConfig, Wiring};
pub use ensemble::ensemble_vote;
pub use metrics::{Bucket, Metrics, Outcome};
pub use optim::{global_norm, Adam};

use crate::corpus::{EmbeddingProvider, PreparedSample};
use crate::encoder::SampleEmbeddings;
use crate::error::{Error, Result};
use crate::model::{HdeModel, ModelInput};
use crate::numerics::{Gradients, Tape, Tensor};
use crate::parallel::Workers;
use crate::scoring::PredictionRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy (earliest on ties).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<PredictionRecord>,
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(model: &HdeModel, input: &ModelInput, emb: Option<&SampleEmbeddings>) -> Result<(f64, Gradients)> {
    let answer = input
        .answer
        .ok_or_else(|| Error::Invalid(format!("sample {} has no answer to train on", input.id)))?;
    let mut tape = Tape::new(&model.store);
    let scores = model.forward_with(&mut tape, input, emb.unwrap_or(&input.embeddings))?;
    let loss = tape.cross_entropy(scores.total, answer)?;
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value} on sample {}", input.id)));
    }
    Ok((value, tape.backward(loss)?))
}

/// Prepares inputs for `samples` in parallel.
pub fn prepare_inputs(
    model: &HdeModel,
    provider: &EmbeddingProvider,
    samples: &[PreparedSample],
    workers: &Workers,
) -> Result<Vec<ModelInput>> {
    workers.try_map(samples.len(), |i| model.prepare(&samples[i], provider))
}

/// Scores every input and summarises accuracy over those with answers.
pub fn evaluate(model: &HdeModel, inputs: &[ModelInput], workers: &Workers) -> Result<Evaluation> {
    let scores = workers.try_map(inputs.len(), |i| model.scores(&inputs[i]))?;
    let mut outcomes = Vec::with_capacity(inputs.len());
    let mut predictions = Vec::with_capacity(inputs.len());
    for (input, s) in inputs.iter().zip(scores) {
        let record = PredictionRecord::new(input.id.clone(), s);
        if let Some(a) = input.answer {
            outcomes.push(Outcome {
                correct: record.predicted_candidate == a,
                follow: input.follow,
                num_documents: input.num_documents,
                num_candidates: input.num_candidates,
            });
        }
        predictions.push(record);
    }
    Ok(Evaluation {
        metrics: Metrics::from_outcomes(&outcomes),
        predictions,
    })
}

/// Loads the checkpoint's model and evaluates it on `samples`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, samples: &[PreparedSample]) -> Result<Evaluation> {
    let model = ckpt.to_model()?;
    let provider = model.config.embedding_provider()?;
    let workers = Workers::new(model.config.workers)?;
    let inputs = prepare_inputs(&model, &provider, samples, &workers)?;
    evaluate(&model, &inputs, &workers)
}

fn dropout_embeddings(emb: &SampleEmbeddings, p: f64, rng: &mut ChaCha8Rng) -> SampleEmbeddings {
    let keep = 1.0 / (1.0 - p);
    let mut mask = |t: &Tensor| {
        let mut out = t.clone();
        for v in out.data_mut() {
            *v = if rng.random::<f64>() < p { 0.0 } else { *v * keep };
        }
        out
    };
    SampleEmbeddings {
        query: mask(&emb.query),
        documents: emb.documents.iter().map(&mut mask).collect(),
        candidates: emb.candidates.iter().map(&mut mask).collect(),
    }
}

/// Trains from scratch with the configured embedding source and worker pool.
pub fn train(config: &ModelConfig, train_set: &[PreparedSample], dev_set: &[PreparedSample]) -> Result<TrainOutcome> {
    let provider = config.embedding_provider()?;
    let workers = Workers::new(config.workers)?;
    train_with(config, &provider, train_set, dev_set, &workers)
}

pub fn train_with(
    config: &ModelConfig,
    provider: &EmbeddingProvider,
    train_set: &[PreparedSample],
    dev_set: &[PreparedSample],
    workers: &Workers,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Invalid("training and dev sets must be non-empty".into()));
    }
    let mut model = HdeModel::new(config)?;
    let train_inputs = prepare_inputs(&model, provider, train_set, workers)?;
    let dev_inputs = prepare_inputs(&model, provider, dev_set, workers)?;
    if let Some(bad) = train_inputs.iter().find(|i| i.answer.is_none()) {
        return Err(Error::Invalid(format!("training sample {} has no answer", bad.id)));
    }

    let mut adam = Adam::new(&model.store, config.learning_rate);
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results = workers.try_map(batch.len(), |j| {
                let input = &train_inputs[batch[j]];
                if config.dropout > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        config.seed ^ ((epoch as u64) << 40) ^ ((b as u64) << 20) ^ j as u64,
                    );
                    let emb = dropout_embeddings(&input.embeddings, config.dropout, &mut rng);
                    sample_gradients(&model, input, Some(&emb))
                } else {
                    sample_gradients(&model, input, None)
                }
            })?;
            let mut grads = Gradients::empty(model.store.len());
            for (loss, g) in &results {
                loss_sum += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if config.grad_clip > 0.0 {
                let norm = global_norm(&grads, &model.store);
                if norm > config.grad_clip {
                    grads.scale(config.grad_clip / norm);
                }
            }
            adam.step(&mut model.store, &grads);
        }
        let eval = evaluate(&model, &dev_inputs, workers)?;
        let dev_accuracy = eval.metrics.accuracy();
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_inputs.len() as f64,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} loss {:.4} dev {:.4} ({:.1}s)",
            log.epoch,
            log.train_loss,
            log.dev_accuracy,
            log.seconds
        );
        history.push(log);
        if best.as_ref().is_none_or(|b| dev_accuracy > b.dev_accuracy) {
            best = Some(Checkpoint::from_model(&model, epoch, dev_accuracy));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                log::info!("no dev improvement for {since_best} epochs, stopping");
                break;
            }
        }
    }
    let checkpoint = match best {
        Some(b) => b,
        None => Checkpoint::from_model(&model, 0, evaluate(&model, &dev_inputs, workers)?.metrics.accuracy()),
    };
    Ok(TrainOutcome { checkpoint, history })
}
