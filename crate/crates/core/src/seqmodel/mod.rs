//! Next-show models: a stacked LSTM over embedded show sequences and the
//! non-sequential MLP ablation that sees the same shows concatenated. Both end
//! in a dense ReLU stack and a softmax over the candidate shows.

mod dense;
mod lstm;
mod train;

pub use train::{train_seq, AdamConfig, TrainConfig, TrainOutcome};

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::ids::ShowId;
use crate::scalar::Scalar;
use crate::seeds::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqModelConfig {
    pub lstm_layers: usize,
    pub hidden: usize,
    pub dense_widths: Vec<usize>,
    pub output_size: usize,
    pub input_dim: usize,
}

impl SeqModelConfig {
    /// 2 x 64 LSTM, dense [64, 128].
    pub fn desk_scale(input_dim: usize, output_size: usize) -> Self {
        SeqModelConfig { lstm_layers: 2, hidden: 64, dense_widths: vec![64, 128], output_size, input_dim }
    }

    /// 3 x 512 LSTM, dense [512, 1024].
    pub fn paper_scale(input_dim: usize, output_size: usize) -> Self {
        SeqModelConfig { lstm_layers: 3, hidden: 512, dense_widths: vec![512, 1024], output_size, input_dim }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    /// Number of input shows `k`; the network input is `k * embedding_dim` wide.
    pub inputs: usize,
    pub embedding_dim: usize,
    pub output_size: usize,
}

impl MlpConfig {
    /// Widths [512, 1024, 1024].
    pub fn paper_scale(inputs: usize, embedding_dim: usize, output_size: usize) -> Self {
        MlpConfig { widths: vec![512, 1024, 1024], inputs, embedding_dim, output_size }
    }

    /// Widths [64, 128, 128]: the paper-scale shape at the same 1/8 ratio the
    /// desk-scale LSTM uses.
    pub fn desk_scale(inputs: usize, embedding_dim: usize, output_size: usize) -> Self {
        MlpConfig { widths: vec![64, 128, 128], inputs, embedding_dim, output_size }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Lstm(SeqModelConfig),
    Mlp(MlpConfig),
}

impl Architecture {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::config(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        match self {
            Architecture::Lstm(c) => {
                positive("lstm_layers", c.lstm_layers)?;
                positive("hidden", c.hidden)?;
                positive("output_size", c.output_size)?;
                positive("input_dim", c.input_dim)?;
                c.dense_widths.iter().try_for_each(|&w| positive("dense width", w))
            }
            Architecture::Mlp(c) => {
                positive("inputs", c.inputs)?;
                positive("embedding_dim", c.embedding_dim)?;
                positive("output_size", c.output_size)?;
                c.widths.iter().try_for_each(|&w| positive("width", w))
            }
        }
    }

    pub fn output_size(&self) -> usize {
        match self {
            Architecture::Lstm(c) => c.output_size,
            Architecture::Mlp(c) => c.output_size,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Lstm(c) => c.input_dim,
            Architecture::Mlp(c) => c.embedding_dim,
        }
    }

    fn lstm_layers(&self) -> usize {
        match self {
            Architecture::Lstm(c) => c.lstm_layers,
            Architecture::Mlp(_) => 0,
        }
    }

    /// Widths of the dense layers including the output layer.
    fn dense_outputs(&self) -> Vec<usize> {
        let (hidden, out) = match self {
            Architecture::Lstm(c) => (&c.dense_widths, c.output_size),
            Architecture::Mlp(c) => (&c.widths, c.output_size),
        };
        hidden.iter().copied().chain(std::iter::once(out)).collect()
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let mut layout = Vec::new();
        let mut width = match self {
            Architecture::Lstm(c) => {
                let mut in_dim = c.input_dim;
                for l in 0..c.lstm_layers {
                    layout.push((format!("lstm{l}.w"), (in_dim + c.hidden, 4 * c.hidden)));
                    layout.push((format!("lstm{l}.b"), (1, 4 * c.hidden)));
                    in_dim = c.hidden;
                }
                c.hidden
            }
            Architecture::Mlp(c) => c.inputs * c.embedding_dim,
        };
        let outputs = self.dense_outputs();
        for (j, &out) in outputs.iter().enumerate() {
            let name = if j + 1 == outputs.len() { "out".to_string() } else { format!("dense{j}") };
            layout.push((format!("{name}.w"), (width, out)));
            layout.push((format!("{name}.b"), (1, out)));
            width = out;
        }
        layout
    }
}

/// A model family plus its parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub architecture: Architecture,
    pub names: Vec<String>,
    pub tensors: Vec<Array2<F>>,
}

/// Per-tensor gradients, same layout as `Network::tensors`.
pub type Gradients<F> = Vec<Array2<F>>;

impl<F: Scalar> Network<F> {
    /// All parameters zero (the output is then uniform).
    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let (names, tensors) = architecture
            .layout()
            .into_iter()
            .map(|(name, shape)| (name, Array2::zeros(shape)))
            .unzip();
        Ok(Network { architecture, names, tensors })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero except LSTM forget
    /// gates, which start at 1.
    pub fn init(architecture: Architecture, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(architecture)?;
        let hidden = match &net.architecture {
            Architecture::Lstm(c) => c.hidden,
            Architecture::Mlp(_) => 0,
        };
        for (name, tensor) in net.names.iter().zip(net.tensors.iter_mut()) {
            if name.ends_with(".w") {
                let bound = 1.0 / (tensor.nrows() as f64).sqrt();
                tensor.mapv_inplace(|_| F::of(rng.gen_range(-bound..=bound)));
            } else if name.starts_with("lstm") {
                tensor.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(F::one());
            }
        }
        Ok(net)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn output_size(&self) -> usize {
        self.architecture.output_size()
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            architecture: self.architecture.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.mapv(|v| G::of(v.as_f64()))).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_inputs(&self, inputs: &[ArrayView2<'_, F>]) -> Result<usize> {
        if inputs.is_empty() {
            return Err(Error::config("model needs at least one input step"));
        }
        let batch = inputs[0].nrows();
        let dim = self.architecture.input_dim();
        for x in inputs {
            if x.ncols() != dim {
                return Err(Error::Dimension { expected: dim, got: x.ncols() });
            }
            if x.nrows() != batch {
                return Err(Error::Dimension { expected: batch, got: x.nrows() });
            }
        }
        if let Architecture::Mlp(c) = &self.architecture {
            if inputs.len() != c.inputs {
                return Err(Error::Dimension { expected: c.inputs, got: inputs.len() });
            }
        }
        Ok(batch)
    }

    /// Logits plus whatever the backward pass needs.
    fn forward_internal(&self, inputs: &[ArrayView2<'_, F>]) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_inputs(inputs)?;
        let lstm_layers = self.architecture.lstm_layers();
        let dense_layers = self.architecture.dense_outputs().len();
        let dense_start = 2 * lstm_layers;
        Ok(match &self.architecture {
            Architecture::Lstm(c) => {
                let owned: Vec<Array2<F>> = inputs.iter().map(|x| x.to_owned()).collect();
                let (last, lstm_cache) = lstm::forward(&self.tensors, lstm_layers, c.hidden, &owned);
                let (logits, dense_cache) = dense::forward(&self.tensors, dense_start, dense_layers, last);
                (logits, ForwardCache { lstm: Some(lstm_cache), dense: dense_cache })
            }
            Architecture::Mlp(_) => {
                let joined = concatenate(Axis(1), inputs).expect("row counts checked");
                let (logits, dense_cache) = dense::forward(&self.tensors, dense_start, dense_layers, joined);
                (logits, ForwardCache { lstm: None, dense: dense_cache })
            }
        })
    }

    /// Next-show probabilities for a batch. `inputs[t]` is the `batch x dim`
    /// matrix of step-`t` embeddings.
    pub fn forward(&self, inputs: &[ArrayView2<'_, F>]) -> Result<Array2<F>> {
        let (mut logits, _) = self.forward_internal(inputs)?;
        dense::softmax_rows(&mut logits);
        Ok(logits)
    }

    /// Summed cross-entropy `-sum_b log p(target_b)` and its exact gradient.
    pub fn loss_and_gradient(&self, inputs: &[ArrayView2<'_, F>], targets: &[usize]) -> Result<(F, Gradients<F>)> {
        let (logits, cache) = self.forward_internal(inputs)?;
        if targets.len() != logits.nrows() {
            return Err(Error::Dimension { expected: logits.nrows(), got: targets.len() });
        }
        let outputs = logits.ncols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= outputs) {
            return Err(Error::data(format!("target index {bad} outside output size {outputs}")));
        }
        let mut loss = F::zero();
        let mut d_logits = logits;
        for (mut row, &target) in d_logits.rows_mut().into_iter().zip(targets) {
            let max = row.iter().fold(F::neg_infinity(), |m, &v| if v > m { v } else { m });
            let log_sum = row.iter().fold(F::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
            loss = loss + log_sum - row[target];
            row.mapv_inplace(|v| (v - log_sum).exp());
            row[target] = row[target] - F::one();
        }

        let mut grads: Gradients<F> = self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        let lstm_layers = self.architecture.lstm_layers();
        let dense_layers = self.architecture.dense_outputs().len();
        let d_input = dense::backward(&self.tensors, &mut grads, 2 * lstm_layers, dense_layers, &cache.dense, d_logits);
        if let (Architecture::Lstm(c), Some(lstm_cache)) = (&self.architecture, &cache.lstm) {
            lstm::backward(&self.tensors, &mut grads, c.hidden, lstm_cache, d_input);
        }
        Ok((loss, grads))
    }

    /// Header line with the architecture as JSON, then one line per tensor:
    /// `name\trows\tcols\tv1\t...` at 17 significant digits.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.architecture)?;
        out.write_all(b"\n")?;
        for (name, tensor) in self.names.iter().zip(&self.tensors) {
            write!(out, "{name}\t{}\t{}", tensor.nrows(), tensor.ncols())?;
            for v in tensor.iter() {
                write!(out, "\t{:.16e}", v.as_f64())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::data("model file is empty"))??;
        let architecture: Architecture =
            serde_json::from_str(&header).map_err(|e| Error::data(format!("model header: {e}")))?;
        let mut net = Self::zeros(architecture)?;
        let mut seen = 0;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default();
            let slot = net
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::data(format!("unexpected tensor {name:?}")))?;
            let mut dims = [0usize; 2];
            for d in &mut dims {
                *d = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::data(format!("tensor {name}: bad shape")))?;
            }
            let tensor = &mut net.tensors[slot];
            if (dims[0], dims[1]) != tensor.dim() {
                return Err(Error::data(format!("tensor {name}: shape {dims:?} != {:?}", tensor.dim())));
            }
            let values: Vec<F> = fields
                .map(|f| f.parse::<f64>().map(F::of))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::data(format!("tensor {name}: {e}")))?;
            if values.len() != tensor.len() {
                return Err(Error::Dimension { expected: tensor.len(), got: values.len() });
            }
            *tensor = Array2::from_shape_vec(tensor.raw_dim(), values).expect("length checked");
            seen += 1;
        }
        if seen != net.tensors.len() {
            return Err(Error::data(format!("model file holds {seen} of {} tensors", net.tensors.len())));
        }
        Ok(net)
    }
}

struct ForwardCache<F> {
    lstm: Option<lstm::LstmCache<F>>,
    dense: dense::DenseCache<F>,
}

/// Candidate shows, in output-index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    shows: Vec<ShowId>,
    index: HashMap<ShowId, usize>,
}

impl Vocabulary {
    pub fn new(shows: &BTreeSet<ShowId>) -> Self {
        let shows: Vec<ShowId> = shows.iter().copied().collect();
        let index = shows.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Vocabulary { shows, index }
    }

    pub fn len(&self) -> usize {
        self.shows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shows.is_empty()
    }

    pub fn shows(&self) -> &[ShowId] {
        &self.shows
    }

    pub fn index_of(&self, show: ShowId) -> Option<usize> {
        self.index.get(&show).copied()
    }
}

/// Gathers the `k` step matrices for a batch of input windows.
pub fn embed_batch<F: Scalar>(embeddings: &EmbeddingTable<F>, windows: &[&[ShowId]]) -> Result<Vec<Array2<F>>> {
    let k = windows.first().map_or(0, |w| w.len());
    let dim = embeddings.dim();
    let mut steps = vec![Array2::zeros((windows.len(), dim)); k];
    for (b, window) in windows.iter().enumerate() {
        if window.len() != k {
            return Err(Error::Dimension { expected: k, got: window.len() });
        }
        for (t, show) in window.iter().enumerate() {
            let v = embeddings
                .get(show.0)
                .ok_or_else(|| Error::data(format!("no embedding for show {show}")))?;
            steps[t].row_mut(b).assign(&v);
        }
    }
    Ok(steps)
}

/// Shows sorted by descending probability, skipping `exclude`; ties go to
/// the lower show id.
pub fn rank_by_probability<F: Scalar>(probs: &[F], vocab: &Vocabulary, exclude: &BTreeSet<ShowId>) -> Vec<ShowId> {
    let mut scored: Vec<(F, ShowId)> = vocab
        .shows()
        .iter()
        .zip(probs)
        .filter(|(s, _)| !exclude.contains(s))
        .map(|(&s, &p)| (p, s))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, s)| s).collect()
}

/// A trained network with the lookups needed to serve recommendations.
pub struct Recommender<'a, F> {
    pub network: &'a Network<F>,
    pub embeddings: &'a EmbeddingTable<F>,
    pub vocab: &'a Vocabulary,
}

impl<F: Scalar> Recommender<'_, F> {
    pub fn probabilities(&self, inputs: &[ShowId]) -> Result<Vec<F>> {
        let steps = embed_batch(self.embeddings, &[inputs])?;
        let views: Vec<ArrayView2<'_, F>> = steps.iter().map(|s| s.view()).collect();
        Ok(self.network.forward(&views)?.row(0).to_vec())
    }

    pub fn recommend(&self, inputs: &[ShowId], exclude: &BTreeSet<ShowId>) -> Result<Vec<ShowId>> {
        let probs = self.probabilities(inputs)?;
        Ok(rank_by_probability(&probs, self.vocab, exclude))
    }

    /// Probabilities for many windows at once, batched for speed.
    pub fn batch_probabilities(&self, windows: &[&[ShowId]], batch_size: usize) -> Result<Vec<Vec<F>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(batch_size.max(1)) {
            let steps = embed_batch(self.embeddings, chunk)?;
            let views: Vec<ArrayView2<'_, F>> = steps.iter().map(|s| s.view()).collect();
            let probs = self.network.forward(&views)?;
            out.extend(probs.rows().into_iter().map(|r| r.to_vec()));
        }
        Ok(out)
    }
}
