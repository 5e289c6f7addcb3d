use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::curate::ListeningSequence;
use crate::error::{Error, Result};
use crate::scalar::{dot, log_sigmoid, sigmoid, Scalar};
use crate::seeds::sub_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig { dim: 64, window: 2, negatives: 5, epochs: 10, lr: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CbowModel<F> {
    /// Input ("context") vectors keyed by show id; these are the embeddings.
    pub input: EmbeddingTable<F>,
    /// Output ("center") vectors, same row order as `input`.
    pub output: EmbeddingTable<F>,
    pub loss_curve: Vec<f64>,
}

/// One training example over vocabulary rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbowExample {
    pub context: Vec<usize>,
    pub center: usize,
    pub negatives: Vec<usize>,
}

/// Negative-sampling CBOW loss for one example,
/// `-log s(u_c . h) - sum_n log s(-u_n . h)` with `h` the mean context
/// vector, and its gradient w.r.t. the input and output rows it touches.
#[allow(clippy::type_complexity)]
pub fn cbow_loss_grad<F: Scalar>(
    input: &Array2<F>,
    output: &Array2<F>,
    example: &CbowExample,
) -> (F, BTreeMap<usize, Vec<F>>, BTreeMap<usize, Vec<F>>) {
    let dim = input.ncols();
    let scale = F::one() / F::of(example.context.len() as f64);
    let mut hidden = vec![F::zero(); dim];
    for &c in &example.context {
        for (h, &v) in hidden.iter_mut().zip(input.row(c)) {
            *h = *h + v * scale;
        }
    }

    let mut loss = F::zero();
    let mut grad_hidden = vec![F::zero(); dim];
    let mut grad_output: BTreeMap<usize, Vec<F>> = BTreeMap::new();
    let targets = std::iter::once((example.center, true)).chain(example.negatives.iter().map(|&n| (n, false)));
    for (row, positive) in targets {
        let u = output.row(row);
        let u = u.as_slice().unwrap();
        let score = dot(u, &hidden);
        let coeff = if positive {
            loss = loss - log_sigmoid(score);
            sigmoid(score) - F::one()
        } else {
            loss = loss - log_sigmoid(-score);
            sigmoid(score)
        };
        for (g, &x) in grad_hidden.iter_mut().zip(u) {
            *g = *g + coeff * x;
        }
        let slot = grad_output.entry(row).or_insert_with(|| vec![F::zero(); dim]);
        for (g, &h) in slot.iter_mut().zip(&hidden) {
            *g = *g + coeff * h;
        }
    }

    let mut grad_input: BTreeMap<usize, Vec<F>> = BTreeMap::new();
    for &c in &example.context {
        let slot = grad_input.entry(c).or_insert_with(|| vec![F::zero(); dim]);
        for (g, &d) in slot.iter_mut().zip(&grad_hidden) {
            *g = *g + d * scale;
        }
    }
    (loss, grad_input, grad_output)
}

/// CBOW with negative sampling over show-id tokens. The vocabulary is every
/// show appearing in `sequences`; negatives follow the unigram^0.75 law.
pub fn train_cbow<F: Scalar>(sequences: &[ListeningSequence], config: &CbowConfig) -> Result<CbowModel<F>> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput("CBOW needs at least one sequence".into()));
    }
    if config.window == 0 {
        return Err(Error::config("CBOW window must be >= 1"));
    }
    if config.dim == 0 {
        return Err(Error::config("CBOW dimension must be >= 1"));
    }
    let vocab: Vec<u32> = sequences
        .iter()
        .flat_map(|s| s.shows.iter().map(|id| id.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocab.len() < 2 {
        return Err(Error::data(format!("CBOW vocabulary has {} show(s), need at least 2", vocab.len())));
    }
    let row_of: BTreeMap<u32, usize> = vocab.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let corpus: Vec<Vec<usize>> = sequences
        .iter()
        .map(|s| s.shows.iter().map(|id| row_of[&id.0]).collect())
        .collect();

    let mut counts = vec![0.0f64; vocab.len()];
    corpus.iter().flatten().for_each(|&r| counts[r] += 1.0);
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75))).expect("positive counts");

    let mut rng = sub_rng(config.seed, "cbow", 0);
    let mut input = EmbeddingTable::<F>::uniform("cbow", vocab.clone(), config.dim, &mut rng)?;
    let mut output = EmbeddingTable::<F>::uniform("cbow-output", vocab, config.dim, &mut rng)?;

    // (sequence, position) pairs that have at least one context token.
    let mut positions: Vec<(usize, usize)> = corpus
        .iter()
        .enumerate()
        .filter(|(_, seq)| seq.len() >= 2)
        .flat_map(|(s, seq)| (0..seq.len()).map(move |p| (s, p)))
        .collect();

    let lr = F::of(config.lr);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        positions.shuffle(&mut rng);
        let mut total = 0.0;
        for &(s, p) in &positions {
            let seq = &corpus[s];
            let lo = p.saturating_sub(config.window);
            let hi = (p + config.window + 1).min(seq.len());
            let context: Vec<usize> = (lo..hi).filter(|&q| q != p).map(|q| seq[q]).collect();
            let example = CbowExample {
                context,
                center: seq[p],
                negatives: (0..config.negatives).map(|_| noise.sample(&mut rng)).collect(),
            };
            let (loss, grad_in, grad_out) = cbow_loss_grad(input.matrix(), output.matrix(), &example);
            total += loss.as_f64();
            for (row, g) in grad_in {
                for (p, d) in input.matrix_mut().row_mut(row).iter_mut().zip(g) {
                    *p = *p - lr * d;
                }
            }
            for (row, g) in grad_out {
                for (p, d) in output.matrix_mut().row_mut(row).iter_mut().zip(g) {
                    *p = *p - lr * d;
                }
            }
        }
        let mean = if positions.is_empty() { 0.0 } else { total / positions.len() as f64 };
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("CBOW loss became non-finite in epoch {epoch}")));
        }
        loss_curve.push(mean);
    }
    if input.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("CBOW vectors became non-finite".into()));
    }
    Ok(CbowModel { input, output, loss_curve })
}
