use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{embed_batch, Network, Vocabulary};
use crate::curate::TrainingWindow;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::ids::ShowId;
use crate::scalar::Scalar;
use crate::seeds::sub_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 64, adam: AdamConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean cross-entropy per window, one entry per epoch.
    pub loss_curve: Vec<f64>,
}

struct Adam<F> {
    config: AdamConfig,
    step: i32,
    first: Vec<Array2<F>>,
    second: Vec<Array2<F>>,
}

impl<F: Scalar> Adam<F> {
    fn new(config: AdamConfig, network: &Network<F>) -> Self {
        let zeros = || network.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Adam { config, step: 0, first: zeros(), second: zeros() }
    }

    fn update(&mut self, network: &mut Network<F>, grads: &[Array2<F>]) {
        self.step += 1;
        let b1 = F::of(self.config.beta1);
        let b2 = F::of(self.config.beta2);
        let one = F::one();
        let correction1 = one - b1.powi(self.step);
        let correction2 = one - b2.powi(self.step);
        let lr = F::of(self.config.lr);
        let eps = F::of(self.config.eps);
        for (((param, grad), m), v) in network
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

/// Minimizes mean cross-entropy over `windows` with Adam. The window order is
/// reshuffled every epoch from `config.seed`.
pub fn train_seq<F: Scalar>(
    network: &mut Network<F>,
    windows: &[TrainingWindow],
    embeddings: &EmbeddingTable<F>,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no training windows".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    if vocab.len() != network.output_size() {
        return Err(Error::Dimension { expected: network.output_size(), got: vocab.len() });
    }
    let targets: Vec<usize> = windows
        .iter()
        .map(|w| {
            vocab
                .index_of(w.target)
                .ok_or_else(|| Error::data(format!("target show {} is outside the candidate set", w.target)))
        })
        .collect::<Result<_>>()?;
    for w in windows {
        if let Some(s) = w.inputs.iter().find(|s| embeddings.get(s.0).is_none()) {
            return Err(Error::data(format!("no embedding for input show {s}")));
        }
    }

    let mut adam = Adam::new(config.adam.clone(), network);
    let mut rng = sub_rng(config.seed, "train-order", 0);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<&[ShowId]> = batch.iter().map(|&i| windows[i].inputs.as_slice()).collect();
            let batch_targets: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let steps = embed_batch(embeddings, &inputs)?;
            let views: Vec<ArrayView2<'_, F>> = steps.iter().map(|s| s.view()).collect();
            let (loss, mut grads) = network.loss_and_gradient(&views, &batch_targets)?;
            let scale = F::one() / F::of(batch.len() as f64);
            grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * scale));
            adam.update(network, &grads);
            total += loss.as_f64();
        }
        let mean = total / windows.len() as f64;
        if !mean.is_finite() || !network.is_finite() {
            return Err(Error::Numeric(format!("training diverged in epoch {epoch}")));
        }
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { loss_curve })
}
