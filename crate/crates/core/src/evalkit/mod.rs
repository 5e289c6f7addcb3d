//! Ranking metrics, the end-to-end experiment driver, and sweeps over it.

mod experiment;
mod sweep;

pub use experiment::{
    build_corpus, build_embeddings, build_network, evaluation_windows, generate_world, run_experiment,
    run_experiment_with, split_users, Corpus, EvalWindow, GeneratedWorld,
};
pub use sweep::{run_sweep, write_sweep_csv, CellFailure, SweepAxis, SweepCell, SweepSpec};

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::curate::ListeningSequence;
use crate::error::{Error, Result};
use crate::ids::{ShowId, UserId};
use crate::seeds::{sub_rng, Rng};

pub const DEFAULT_K: usize = 20;

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput("no ranks to score".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::data("ranks are 1-based; found 0"));
    }
    Ok(())
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    check_ranks(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks at or above position `k`.
pub fn success_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check_ranks(ranks)?;
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// 1-based position of `target` in `ranked`.
pub fn rank_of_target(ranked: &[ShowId], target: ShowId) -> Result<usize> {
    ranked
        .iter()
        .position(|&s| s == target)
        .map(|p| p + 1)
        .ok_or(Error::MissingTarget(target.0))
}

/// Permutes every sequence's shows with Fisher-Yates. Each user draws from
/// its own stream seeded by `(seed, user)`; a user with several sequences
/// consumes that stream in input order.
pub fn shuffle_sequences(sequences: &[ListeningSequence], seed: u64) -> Vec<ListeningSequence> {
    let mut streams: HashMap<UserId, Rng> = HashMap::new();
    sequences
        .iter()
        .map(|seq| {
            let rng = streams
                .entry(seq.user)
                .or_insert_with(|| sub_rng(seed, "shuffle", seq.user.0 as u64));
            let mut out = seq.clone();
            out.shows.shuffle(rng);
            out
        })
        .collect()
}

/// `(rank, count)` for every rank that occurs, ascending.
pub fn rank_histogram(ranks: &[usize]) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for &r in ranks {
        *counts.entry(r).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

pub fn write_rank_histogram_csv<W: Write>(ranks: &[usize], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["rank", "count"])?;
    for (rank, count) in rank_histogram(ranks) {
        writer.write_record([rank.to_string(), count.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub model: String,
    /// "kg", "cbow", or "none" for the matrix-factorization baseline.
    pub embedding: String,
    pub constraint: String,
    pub input_length: usize,
    pub precision: String,
    pub shuffled: bool,
    pub n: usize,
    pub k: usize,
    pub mrr: f64,
    pub success_at_k: f64,
    /// Test sequences long enough to yield an evaluation window.
    pub candidate_windows: usize,
    pub dropped_out_of_vocabulary: usize,
    pub missing_targets: usize,
    /// `n / candidate_windows`.
    pub evaluable_fraction: f64,
    pub train_windows: usize,
    pub vocabulary_size: usize,
    /// Per-epoch training loss, or the factorization objective for "cf".
    pub loss_curve: Vec<f64>,
    pub ranks: Vec<usize>,
    /// Unix seconds at completion. The only field that differs between reruns.
    pub timestamp: u64,
}

impl EvalReport {
    pub fn without_timestamp(&self) -> EvalReport {
        EvalReport { timestamp: 0, ..self.clone() }
    }

    /// Recomputes the metrics from `ranks` and checks they match the stored ones exactly.
    pub fn verify(&self) -> Result<()> {
        if self.n != self.ranks.len() {
            return Err(Error::data(format!("report has n = {} but {} ranks", self.n, self.ranks.len())));
        }
        let m = mrr(&self.ranks)?;
        let s = success_at_k(&self.ranks, self.k)?;
        if m.to_bits() != self.mrr.to_bits() {
            return Err(Error::data(format!("stored mrr {} != recomputed {m}", self.mrr)));
        }
        if s.to_bits() != self.success_at_k.to_bits() {
            return Err(Error::data(format!("stored success_at_k {} != recomputed {s}", self.success_at_k)));
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!("mrr={:.4} sa{}={:.4} n={}", self.mrr, self.k, self.success_at_k, self.n)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Relative change of `shuffled` against `ordered`, `(s - o) / o`.
pub fn relative_delta(ordered: f64, shuffled: f64) -> f64 {
    if ordered == 0.0 {
        return if shuffled == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (shuffled - ordered) / ordered
}
