//! Next-show networks: capacity, order sensitivity, determinism, and ranking.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use trajrec::curate::{Provenance, TrainingWindow};
use trajrec::embed::EmbeddingTable;
use trajrec::ids::{ShowId, UserId};
use trajrec::seeds::rng;
use trajrec::seqmodel::{
    rank_by_probability, train_seq, AdamConfig, Architecture, MlpConfig, Network, Recommender, SeqModelConfig,
    TrainConfig, Vocabulary,
};

const SHOWS: u32 = 20;
const DIM: usize = 8;

fn toy_embeddings(seed: u64) -> EmbeddingTable<f64> {
    let mut r = rng(seed);
    let vectors = Array2::from_shape_simple_fn((SHOWS as usize, DIM), || r.gen_range(-1.0..1.0));
    EmbeddingTable::new("toy", (0..SHOWS).collect(), vectors).unwrap()
}

/// 50 windows over distinct ordered input pairs with random targets.
fn toy_windows(seed: u64) -> Vec<TrainingWindow> {
    let mut r = rng(seed);
    let mut pairs: Vec<(u32, u32)> = (0..SHOWS).flat_map(|a| (0..SHOWS).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    pairs.shuffle(&mut r);
    pairs
        .into_iter()
        .take(50)
        .map(|(a, b)| {
            let target = loop {
                let t = r.gen_range(0..SHOWS);
                if t != a && t != b {
                    break t;
                }
            };
            TrainingWindow {
                inputs: vec![ShowId(a), ShowId(b)],
                target: ShowId(target),
                provenance: Provenance { user: UserId(0), topic: None, bracket: None },
            }
        })
        .collect()
}

fn vocab() -> Vocabulary {
    Vocabulary::new(&(0..SHOWS).map(ShowId).collect())
}

fn lstm() -> Architecture {
    Architecture::Lstm(SeqModelConfig { lstm_layers: 1, hidden: 32, dense_widths: vec![32], output_size: SHOWS as usize, input_dim: DIM })
}

fn mlp() -> Architecture {
    Architecture::Mlp(MlpConfig { widths: vec![32, 32], inputs: 2, embedding_dim: DIM, output_size: SHOWS as usize })
}

fn top1_accuracy(net: &Network<f64>, emb: &EmbeddingTable<f64>, windows: &[TrainingWindow]) -> f64 {
    let vocab = vocab();
    let rec = Recommender { network: net, embeddings: emb, vocab: &vocab };
    let hits = windows
        .iter()
        .filter(|w| rec.recommend(&w.inputs, &BTreeSet::new()).unwrap()[0] == w.target)
        .count();
    hits as f64 / windows.len() as f64
}

fn memorize(arch: Architecture) -> (f64, Vec<f64>) {
    let emb = toy_embeddings(1);
    let windows = toy_windows(2);
    let mut net = Network::<f64>::init(arch, &mut rng(3)).unwrap();
    let config = TrainConfig { epochs: 300, batch_size: 10, adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() }, seed: 4 };
    let outcome = train_seq(&mut net, &windows, &emb, &vocab(), &config).unwrap();
    (top1_accuracy(&net, &emb, &windows), outcome.loss_curve)
}

#[test]
fn lstm_memorizes_fifty_windows() {
    let (accuracy, curve) = memorize(lstm());
    assert!(accuracy >= 0.95, "accuracy {accuracy}");
    assert!(curve.last().unwrap() < curve.first().unwrap());
}

#[test]
fn mlp_memorizes_fifty_windows() {
    let (accuracy, curve) = memorize(mlp());
    assert!(accuracy >= 0.95, "accuracy {accuracy}");
    assert!(curve.last().unwrap() < curve.first().unwrap());
}

#[test]
fn zero_epochs_leaves_parameters_alone() {
    let emb = toy_embeddings(1);
    let mut net = Network::<f64>::init(lstm(), &mut rng(3)).unwrap();
    let before = net.clone();
    let config = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let outcome = train_seq(&mut net, &toy_windows(2), &emb, &vocab(), &config).unwrap();
    assert!(outcome.loss_curve.is_empty());
    assert_eq!(net.tensors, before.tensors);
}

#[test]
fn training_is_deterministic() {
    let emb = toy_embeddings(1);
    let config = TrainConfig { epochs: 3, batch_size: 7, ..TrainConfig::default() };
    let run = || {
        let mut net = Network::<f64>::init(lstm(), &mut rng(3)).unwrap();
        train_seq(&mut net, &toy_windows(2), &emb, &vocab(), &config).unwrap();
        net
    };
    assert_eq!(run().tensors, run().tensors);
}

#[test]
fn empty_window_set_is_rejected() {
    let emb = toy_embeddings(1);
    let mut net = Network::<f64>::init(lstm(), &mut rng(3)).unwrap();
    assert!(train_seq(&mut net, &[], &emb, &vocab(), &TrainConfig::default()).is_err());
}

#[test]
fn mlp_depends_on_input_order() {
    let emb = toy_embeddings(6);
    let mut changed = 0;
    for seed in 0..10 {
        let net = Network::<f64>::init(mlp(), &mut rng(seed)).unwrap();
        let vocab = vocab();
        let rec = Recommender { network: &net, embeddings: &emb, vocab: &vocab };
        let ab = rec.probabilities(&[ShowId(1), ShowId(2)]).unwrap();
        let ba = rec.probabilities(&[ShowId(2), ShowId(1)]).unwrap();
        let gap = ab.iter().zip(&ba).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        changed += (gap > 1e-9) as usize;
    }
    assert_eq!(changed, 10);
}

#[test]
fn recommend_rank_matches_count_oracle() {
    let emb = toy_embeddings(7);
    let vocab = vocab();
    for seed in 0..20 {
        let net = Network::<f64>::init(lstm(), &mut rng(seed)).unwrap();
        let rec = Recommender { network: &net, embeddings: &emb, vocab: &vocab };
        let inputs = [ShowId(seed as u32 % SHOWS), ShowId((seed as u32 + 5) % SHOWS)];
        let exclude: BTreeSet<ShowId> = inputs.iter().copied().collect();
        let probs = rec.probabilities(&inputs).unwrap();
        let ranked = rec.recommend(&inputs, &exclude).unwrap();
        assert_eq!(ranked, rank_by_probability(&probs, &vocab, &exclude));
        assert_eq!(ranked.len(), SHOWS as usize - 2);
        for target in (0..SHOWS).map(ShowId).filter(|s| !exclude.contains(s)) {
            let p = probs[target.0 as usize];
            let higher = (0..SHOWS)
                .map(ShowId)
                .filter(|s| !exclude.contains(s))
                .filter(|s| {
                    let q = probs[s.0 as usize];
                    q > p || (q == p && *s < target)
                })
                .count();
            let position = ranked.iter().position(|&s| s == target).unwrap() + 1;
            assert_eq!(position, higher + 1);
        }
    }
}

#[test]
fn softmax_outputs_are_distributions() {
    let emb = toy_embeddings(8);
    let vocab = vocab();
    for arch in [lstm(), mlp()] {
        for seed in 0..5 {
            let net = Network::<f64>::init(arch.clone(), &mut rng(seed)).unwrap();
            let rec = Recommender { network: &net, embeddings: &emb, vocab: &vocab };
            let p = rec.probabilities(&[ShowId(3), ShowId(4)]).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }
}
