//! The optimization loop: batching, selective backpropagation, reporting.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradTable, Pathway, Tape};
use crate::data::{Dataset, Exemplar, Split};
use crate::error::{Error, Result};
use crate::eval::epe_stats;
use crate::geometry::Image;
use crate::model::{image_tensor, Model, MotionInput};
use crate::training::optimizer::{adam_update, AdamHyper, AdamState};
use crate::training::wta::{argmin, wta_select};

/// Knobs for the optimization loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Total optimizer steps to reach, counting any steps a resumed state
    /// has already taken.
    pub max_steps: u64,
    pub seed: u64,
    /// Steps between held-out evaluations.
    pub eval_interval: u64,
    /// Global-norm gradient clip; `None` leaves gradients untouched.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            max_steps: 1000,
            seed: 0,
            eval_interval: 100,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam_hyper().validate().map_err(|e| match e {
            Error::InvalidParameter(msg) => Error::Config(msg),
            other => other,
        })?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".to_string()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config(
                "eval interval must be at least 1".to_string(),
            ));
        }
        if let Some(limit) = self.clip_norm {
            if !limit.is_finite() || limit <= 0.0 {
                return Err(Error::Config(format!(
                    "clip norm must be positive and finite, got {limit}"
                )));
            }
        }
        Ok(())
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One training example borrowed from its dataset.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub source: &'a Image,
    pub target: &'a Image,
    pub motion: &'a MotionInput,
}

impl<'a> TrainItem<'a> {
    pub fn from_exemplar(exemplar: &'a Exemplar) -> Self {
        Self {
            source: &exemplar.source,
            target: &exemplar.target,
            motion: &exemplar.motion,
        }
    }
}

/// Metrics from one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// Mean winning loss over the batch.
    pub mean_loss: f64,
    /// How often each hypothesis won within the batch.
    pub winner_counts: Vec<usize>,
}

/// Runs one batch: forward, per-exemplar winner selection, backpropagation
/// restricted to shared parameters plus each winner's head, and a single
/// averaged optimizer update.
pub fn train_step(
    model: &mut Model,
    batch: &[TrainItem],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<StepMetrics> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::Contract(
            "a training batch needs at least one exemplar".to_string(),
        ));
    }
    let mut total: Option<GradTable<f32>> = None;
    let mut winner_counts = vec![0usize; model.hypothesis_count()];
    let mut loss_sum = 0.0;
    for item in batch {
        let source_t = image_tensor(item.source);
        let mut tape = Tape::new();
        let graph = model.build_graph(&mut tape, &source_t, item.motion)?;
        let target_node = tape.constant(image_tensor(item.target));
        let mut losses = Vec::with_capacity(graph.grids.len());
        for &grid in &graph.grids {
            let recon = tape.bilinear_sample(target_node, grid)?;
            losses.push(tape.euclidean_loss(recon, &source_t)?);
        }
        let loss_values: Vec<f64> = losses
            .iter()
            .map(|&node| tape.value(node).data()[0] as f64)
            .collect();
        if let Some(&bad) = loss_values.iter().find(|l| !l.is_finite()) {
            return Err(Error::Divergence {
                step: state.step(),
                loss: bad,
            });
        }
        let winner = argmin(&loss_values);
        winner_counts[winner] += 1;
        loss_sum += loss_values[winner];
        let grads = tape.backward(losses[winner], model.params(), |p| {
            p == Pathway::Shared || p == Pathway::Hypothesis(winner)
        })?;
        match &mut total {
            None => total = Some(grads),
            Some(t) => t.accumulate(&grads),
        }
    }
    let mut grads = total.expect("batch checked non-empty");
    grads.scale(1.0 / batch.len() as f32);
    if let Some(limit) = config.clip_norm {
        let norm = grads.global_norm() as f64;
        if norm.is_finite() && norm > limit {
            grads.scale((limit / norm) as f32);
        }
    }
    adam_update(model.params_mut(), &grads, state, &config.adam_hyper())?;
    Ok(StepMetrics {
        mean_loss: loss_sum / batch.len() as f64,
        winner_counts,
    })
}

/// One row of the training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    /// Optimizer steps completed when the row was taken.
    pub step: u64,
    /// Mean winning loss since the previous row; the forward-only probe
    /// loss for the initial row.
    pub train_loss: f64,
    /// Fraction of training wins per hypothesis since the previous row.
    pub winner_usage: Vec<f64>,
    /// Pixel-weighted mean endpoint error over the held-out split.
    pub heldout_epe: f64,
}

/// Everything `train` measured along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Initial row, one row per eval interval, and a final row.
    pub records: Vec<ReportRecord>,
    /// Fraction of held-out wins per hypothesis at the last evaluation.
    pub eval_winner_usage: Vec<f64>,
}

impl TrainReport {
    pub fn final_heldout_epe(&self) -> f64 {
        self.records
            .last()
            .expect("a report always holds its initial row")
            .heldout_epe
    }
}

/// Trains until the optimizer reaches `config.max_steps` total steps,
/// shuffling the training split each epoch and evaluating the held-out
/// split every `config.eval_interval` steps. Each report row is also
/// written to `sink` as one JSON line when a sink is given.
pub fn train(
    model: &mut Model,
    state: &mut AdamState,
    dataset: &Dataset,
    config: &TrainConfig,
    mut sink: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.image_size != model.config().input_size {
        return Err(Error::Config(format!(
            "dataset frames are {} px, model expects {} px",
            dataset.image_size,
            model.config().input_size
        )));
    }
    let train_items: Vec<&Exemplar> = dataset
        .exemplars
        .iter()
        .filter(|e| e.split == Split::Train)
        .collect();
    let eval_items: Vec<&Exemplar> = dataset
        .exemplars
        .iter()
        .filter(|e| e.split == Split::Eval)
        .collect();
    if train_items.is_empty() {
        return Err(Error::Contract(
            "the dataset has no training exemplars".to_string(),
        ));
    }
    if eval_items.is_empty() {
        return Err(Error::Contract(
            "the dataset has no held-out exemplars".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();

    let probe_len = train_items.len().min(config.batch_size);
    let (probe_loss, probe_counts) = probe(model, &train_items[..probe_len])?;
    let (initial_epe, initial_usage) = heldout_eval(model, &eval_items)?;
    let mut eval_winner_usage = initial_usage;
    let first = ReportRecord {
        step: state.step(),
        train_loss: probe_loss,
        winner_usage: usage_fractions(&probe_counts),
        heldout_epe: initial_epe,
    };
    write_record(&mut sink, &first)?;
    records.push(first);

    let mut interval_loss = 0.0;
    let mut interval_steps = 0u64;
    let mut interval_counts = vec![0usize; model.hypothesis_count()];
    'epochs: while state.step() < config.max_steps {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if state.step() >= config.max_steps {
                break 'epochs;
            }
            let batch: Vec<TrainItem> = chunk
                .iter()
                .map(|&i| TrainItem::from_exemplar(train_items[i]))
                .collect();
            let metrics = train_step(model, &batch, state, config)?;
            interval_loss += metrics.mean_loss;
            interval_steps += 1;
            for (acc, c) in interval_counts.iter_mut().zip(&metrics.winner_counts) {
                *acc += c;
            }
            let step = state.step();
            if step % config.eval_interval == 0 || step >= config.max_steps {
                let (epe, usage) = heldout_eval(model, &eval_items)?;
                eval_winner_usage = usage;
                let record = ReportRecord {
                    step,
                    train_loss: interval_loss / interval_steps as f64,
                    winner_usage: usage_fractions(&interval_counts),
                    heldout_epe: epe,
                };
                write_record(&mut sink, &record)?;
                records.push(record);
                interval_loss = 0.0;
                interval_steps = 0;
                interval_counts.fill(0);
            }
        }
    }
    Ok(TrainReport {
        records,
        eval_winner_usage,
    })
}

fn write_record(sink: &mut Option<&mut dyn Write>, record: &ReportRecord) -> Result<()> {
    if let Some(out) = sink.as_mut() {
        let line = serde_json::to_string(record).expect("plain record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io("training report sink", e))?;
    }
    Ok(())
}

fn usage_fractions(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Forward-only mean winning loss and winner counts over `items`.
fn probe(model: &Model, items: &[&Exemplar]) -> Result<(f64, Vec<usize>)> {
    let mut counts = vec![0usize; model.hypothesis_count()];
    let mut sum = 0.0;
    for exemplar in items {
        let set = model.forward(&exemplar.source, &exemplar.motion)?;
        let recons = set.reconstruct(&exemplar.target)?;
        let outcome = wta_select(&recons, &exemplar.source)?;
        counts[outcome.winner] += 1;
        sum += outcome.winning_loss;
    }
    Ok((sum / items.len() as f64, counts))
}

/// Pixel-weighted mean endpoint error and winner usage over `items`.
fn heldout_eval(model: &Model, items: &[&Exemplar]) -> Result<(f64, Vec<f64>)> {
    let mut weighted = 0.0;
    let mut pixels = 0usize;
    let mut counts = vec![0usize; model.hypothesis_count()];
    for exemplar in items {
        let set = model.forward(&exemplar.source, &exemplar.motion)?;
        let recons = set.reconstruct(&exemplar.target)?;
        let outcome = wta_select(&recons, &exemplar.source)?;
        counts[outcome.winner] += 1;
        let flow = set.export_flow(outcome.winner)?;
        let stats = epe_stats(&flow, &exemplar.flow)?;
        weighted += stats.mean * stats.count as f64;
        pixels += stats.count;
    }
    if pixels == 0 {
        return Err(Error::Contract(
            "held-out exemplars share no valid flow pixels".to_string(),
        ));
    }
    Ok((weighted / pixels as f64, usage_fractions(&counts)))
}
