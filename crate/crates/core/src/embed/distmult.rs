use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::{log_sigmoid, sigmoid, Scalar};
use crate::seeds::sub_rng;
use crate::synthcat::{KgTriple, KnowledgeGraph};

/// Trilinear DistMult score `sum_i h_i * r_i * t_i`.
pub fn distmult_score<F: Scalar>(head: &[F], relation: &[F], tail: &[F]) -> Result<F> {
    if relation.len() != head.len() {
        return Err(Error::Dimension { expected: head.len(), got: relation.len() });
    }
    if tail.len() != head.len() {
        return Err(Error::Dimension { expected: head.len(), got: tail.len() });
    }
    Ok(head
        .iter()
        .zip(relation)
        .zip(tail)
        .fold(F::zero(), |acc, ((&h, &r), &t)| acc + h * t * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistMultConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for DistMultConfig {
    fn default() -> Self {
        DistMultConfig { dim: 64, epochs: 100, lr: 0.05, negatives_per_positive: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct DistMultModel<F> {
    pub nodes: EmbeddingTable<F>,
    pub relations: EmbeddingTable<F>,
    /// Mean per-positive loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Gradient of one positive triple's loss, keyed by row.
#[derive(Debug, Clone, Default)]
pub struct TripleGrad<F> {
    pub nodes: BTreeMap<usize, Vec<F>>,
    pub relations: BTreeMap<usize, Vec<F>>,
}

fn accumulate<F: Scalar>(into: &mut BTreeMap<usize, Vec<F>>, row: usize, scale: F, a: &[F], b: &[F]) {
    let slot = into.entry(row).or_insert_with(|| vec![F::zero(); a.len()]);
    for ((g, &x), &y) in slot.iter_mut().zip(a).zip(b) {
        *g = *g + scale * x * y;
    }
}

/// Loss `-log s(score(pos)) - sum_neg log s(-score(neg))` for one positive and
/// its corruptions, with the gradient for every touched row.
pub fn distmult_loss_grad<F: Scalar>(
    nodes: &Array2<F>,
    relations: &Array2<F>,
    positive: KgTriple,
    negatives: &[KgTriple],
) -> (F, TripleGrad<F>) {
    let mut grad = TripleGrad::default();
    let mut loss = F::zero();
    let terms = std::iter::once((positive, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (triple, is_positive) in terms {
        let (hi, ri, ti) = (triple.head.index(), triple.relation.index(), triple.tail.index());
        let h = nodes.row(hi);
        let r = relations.row(ri);
        let t = nodes.row(ti);
        let (h, r, t) = (h.as_slice().unwrap(), r.as_slice().unwrap(), t.as_slice().unwrap());
        let score = distmult_score(h, r, t).expect("rows share the table width");
        // d loss / d score
        let coeff = if is_positive {
            loss = loss - log_sigmoid(score);
            sigmoid(score) - F::one()
        } else {
            loss = loss - log_sigmoid(-score);
            sigmoid(score)
        };
        accumulate(&mut grad.nodes, hi, coeff, r, t);
        accumulate(&mut grad.relations, ri, coeff, h, t);
        accumulate(&mut grad.nodes, ti, coeff, h, r);
    }
    (loss, grad)
}

/// Trains DistMult with negative-sampling logistic loss and plain SGD.
///
/// Node vectors start uniform in `[-0.5/dim, 0.5/dim]`. Relation vectors
/// start at all-ones: the trilinear form has a saddle at the origin and a
/// near-zero relation init stalls SGD there.
pub fn train_distmult<F: Scalar>(graph: &KnowledgeGraph, config: &DistMultConfig) -> Result<DistMultModel<F>> {
    if graph.triples.is_empty() {
        return Err(Error::EmptyInput("knowledge graph has no triples".into()));
    }
    if config.dim < 2 {
        return Err(Error::config("DistMult dimension must be >= 2"));
    }
    for t in &graph.triples {
        if t.head.index() >= graph.num_nodes || t.tail.index() >= graph.num_nodes {
            return Err(Error::data(format!("triple {t:?} references an unknown node")));
        }
        if t.relation.index() >= graph.num_relations {
            return Err(Error::data(format!("triple {t:?} references an unknown relation")));
        }
    }

    let mut rng = sub_rng(config.seed, "distmult", 0);
    let node_ids = (0..graph.num_nodes as u32).collect();
    let mut nodes = EmbeddingTable::<F>::uniform("kg-nodes", node_ids, config.dim, &mut rng)?;
    let mut relations =
        EmbeddingTable::<F>::dense("kg-relations", Array2::from_elem((graph.num_relations, config.dim), F::one()))?;

    let lr = F::of(config.lr);
    let mut order: Vec<usize> = (0..graph.triples.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut negatives = Vec::with_capacity(config.negatives_per_positive);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let positive = graph.triples[i];
            negatives.clear();
            for _ in 0..config.negatives_per_positive {
                negatives.push(corrupt(positive, graph.num_nodes, &mut rng));
            }
            let (loss, grad) = distmult_loss_grad(nodes.matrix(), relations.matrix(), positive, &negatives);
            total += loss.as_f64();
            apply(nodes.matrix_mut(), &grad.nodes, lr);
            apply(relations.matrix_mut(), &grad.relations, lr);
        }
        let mean = total / graph.triples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("DistMult loss became non-finite in epoch {epoch}")));
        }
        loss_curve.push(mean);
    }
    if nodes.matrix().iter().chain(relations.matrix().iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("DistMult parameters became non-finite".into()));
    }
    Ok(DistMultModel { nodes, relations, loss_curve })
}

/// Replaces the head or the tail (fair coin) with a uniformly drawn node.
fn corrupt(triple: KgTriple, num_nodes: usize, rng: &mut crate::seeds::Rng) -> KgTriple {
    let replacement = crate::ids::NodeId::from(rng.gen_range(0..num_nodes));
    if rng.gen_bool(0.5) {
        KgTriple { head: replacement, ..triple }
    } else {
        KgTriple { tail: replacement, ..triple }
    }
}

fn apply<F: Scalar>(matrix: &mut Array2<F>, grads: &BTreeMap<usize, Vec<F>>, lr: F) {
    for (&row, g) in grads {
        for (p, &d) in matrix.row_mut(row).iter_mut().zip(g) {
            *p = *p - lr * d;
        }
    }
}
