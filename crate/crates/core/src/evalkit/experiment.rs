use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{mrr, rank_of_target, shuffle_sequences, success_at_k, EvalReport, DEFAULT_K};
use crate::cfbase::{build_interaction_matrix, cf_rank, nmf_factorize, NmfConfig};
use crate::config::{EmbeddingKind, ExperimentConfig, ModelKind, Precision, Preset};
use crate::curate::{curate, drop_out_of_vocabulary, make_training_windows, Constraint, ListeningSequence, TrainingWindow, WindowMode};
use crate::embed::{train_cbow, train_distmult, CbowConfig, DistMultConfig, EmbeddingTable};
use crate::error::{Error, Result, Stage, StageExt};
use crate::ids::{ShowId, TopicId, UserId};
use crate::scalar::Scalar;
use crate::seeds::{sub_rng, sub_seed};
use crate::seqmodel::{
    rank_by_probability, train_seq, AdamConfig, Architecture, MlpConfig, Network, Recommender, SeqModelConfig,
    TrainConfig, Vocabulary,
};
use crate::synthcat::{generate_catalog, generate_streams, generate_users, StreamEvent, World};

pub struct GeneratedWorld {
    pub world: World,
    pub events: Vec<StreamEvent>,
}

pub fn generate_world(config: &ExperimentConfig) -> Result<GeneratedWorld> {
    let catalog = generate_catalog(&config.catalog, config.seed)?;
    let users = generate_users(&catalog, &config.population, config.num_users(), config.seed)?;
    let events = generate_streams(&catalog, &users, &config.streams, config.seed)?;
    Ok(GeneratedWorld { world: World { catalog, users }, events })
}

/// Disjoint seeded train and test user sets.
pub fn split_users(config: &ExperimentConfig, users: &[UserId]) -> Result<(BTreeSet<UserId>, BTreeSet<UserId>)> {
    let (train, test) = (config.split.train_users, config.split.test_users);
    if users.len() < train + test {
        return Err(Error::config(format!(
            "split needs {} users but the population has {}",
            train + test,
            users.len()
        )));
    }
    let mut ids = users.to_vec();
    ids.sort();
    ids.shuffle(&mut sub_rng(config.seed, "split", 0));
    Ok((ids[..train].iter().copied().collect(), ids[train..train + test].iter().copied().collect()))
}

/// Curated sequences divided by the user split.
pub struct Corpus {
    pub top_shows: BTreeSet<ShowId>,
    pub train: Vec<ListeningSequence>,
    pub test: Vec<ListeningSequence>,
}

pub fn build_corpus(config: &ExperimentConfig, world: &World, events: &[StreamEvent]) -> Result<Corpus> {
    let curated = curate(
        events,
        &world.catalog,
        &world.users,
        &config.curation.to_curation()?,
        config.streams.horizon_end,
    )?;
    let sequences = if config.shuffle {
        shuffle_sequences(&curated.sequences, config.seed)
    } else {
        curated.sequences
    };
    let ids: Vec<UserId> = world.users.iter().map(|u| u.id).collect();
    let (train_users, test_users) = split_users(config, &ids)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for seq in sequences {
        if train_users.contains(&seq.user) {
            train.push(seq);
        } else if test_users.contains(&seq.user) {
            test.push(seq);
        }
    }
    Ok(Corpus { top_shows: curated.top_shows, train, test })
}

/// A held-out window and the test sequence it came from.
pub struct EvalWindow {
    pub sequence: usize,
    pub window: TrainingWindow,
}

/// Final windows of the test sequences, with the count of long-enough
/// sequences and the count dropped for leaving the vocabulary.
pub fn evaluation_windows(corpus: &Corpus, k: usize) -> Result<(Vec<EvalWindow>, usize, usize)> {
    let mut windows = Vec::new();
    let mut candidates = 0;
    let mut dropped = 0;
    for (i, seq) in corpus.test.iter().enumerate() {
        let made = make_training_windows(std::slice::from_ref(seq), k, WindowMode::Evaluation)?;
        candidates += made.len();
        let (kept, lost) = drop_out_of_vocabulary(made, &corpus.top_shows);
        dropped += lost;
        windows.extend(kept.into_iter().map(|window| EvalWindow { sequence: i, window }));
    }
    Ok((windows, candidates, dropped))
}

/// Show embeddings for the configured kind. CBOW learns from the training
/// sequences plus the test sequences with their held-out shows removed.
pub fn build_embeddings<F: Scalar>(
    config: &ExperimentConfig,
    world: &World,
    corpus: &Corpus,
) -> Result<(EmbeddingTable<F>, Vec<f64>)> {
    let e = &config.embedding;
    match e.kind {
        EmbeddingKind::Kg => {
            let model = train_distmult::<F>(
                &world.catalog.knowledge_graph(),
                &DistMultConfig {
                    dim: e.dim,
                    epochs: e.kg_epochs,
                    lr: e.lr,
                    negatives_per_positive: e.negatives,
                    seed: sub_seed(config.seed, "kg", 0),
                },
            )?;
            let shows: Vec<u32> = corpus.top_shows.iter().map(|s| s.0).collect();
            Ok((model.nodes.select("kg", &shows)?, model.loss_curve))
        }
        EmbeddingKind::Cbow => {
            let mut sequences = corpus.train.clone();
            sequences.extend(corpus.test.iter().map(|s| {
                let mut s = s.clone();
                s.shows.pop();
                s
            }));
            let model = train_cbow::<F>(
                &sequences,
                &CbowConfig {
                    dim: e.dim,
                    window: e.cbow_window,
                    negatives: e.negatives,
                    epochs: e.cbow_epochs,
                    lr: e.lr,
                    seed: sub_seed(config.seed, "cbow", 0),
                },
            )?;
            Ok((model.input, model.loss_curve))
        }
    }
}

pub fn build_network<F: Scalar>(config: &ExperimentConfig, input_dim: usize, output_size: usize) -> Result<Network<F>> {
    let m = &config.model;
    let k = config.curation.k;
    let architecture = match m.kind {
        ModelKind::Rnn => {
            let mut c = match m.preset {
                Preset::Desk => SeqModelConfig::desk_scale(input_dim, output_size),
                Preset::Paper => SeqModelConfig::paper_scale(input_dim, output_size),
            };
            c.lstm_layers = m.lstm_layers.unwrap_or(c.lstm_layers);
            c.hidden = m.hidden.unwrap_or(c.hidden);
            c.dense_widths = m.dense_widths.clone().unwrap_or(c.dense_widths);
            Architecture::Lstm(c)
        }
        ModelKind::Mlp => {
            let mut c = match m.preset {
                Preset::Desk => MlpConfig::desk_scale(k, input_dim, output_size),
                Preset::Paper => MlpConfig::paper_scale(k, input_dim, output_size),
            };
            c.widths = m.mlp_widths.clone().unwrap_or(c.widths);
            Architecture::Mlp(c)
        }
        ModelKind::Cf => return Err(Error::config("the cf model has no network")),
    };
    Network::init(architecture, &mut sub_rng(config.seed, "init", 0))
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

struct Ranked {
    ranks: Vec<usize>,
    missing: usize,
    train_windows: usize,
    loss_curve: Vec<f64>,
}

fn train_network<F: Scalar>(
    config: &ExperimentConfig,
    windows: &[TrainingWindow],
    embeddings: &EmbeddingTable<F>,
    vocab: &Vocabulary,
    stream: u64,
) -> Result<(Network<F>, Vec<f64>)> {
    let mut network = build_network::<F>(config, embeddings.dim(), vocab.len()).stage(Stage::Train)?;
    let m = &config.model;
    let outcome = train_seq(
        &mut network,
        windows,
        embeddings,
        vocab,
        &TrainConfig {
            epochs: m.epochs,
            batch_size: m.batch_size,
            adam: AdamConfig { lr: m.lr, beta1: m.beta1, beta2: m.beta2, eps: m.eps },
            seed: sub_seed(config.seed, "train", stream),
        },
    )
    .stage(Stage::Train)?;
    Ok((network, outcome.loss_curve))
}

/// Rank of each window's target, or None when it is not rankable.
fn rank_windows<F: Scalar>(
    network: &Network<F>,
    embeddings: &EmbeddingTable<F>,
    vocab: &Vocabulary,
    eval: &[&EvalWindow],
) -> Result<Vec<Option<usize>>> {
    let recommender = Recommender { network, embeddings, vocab };
    let inputs: Vec<&[ShowId]> = eval.iter().map(|w| w.window.inputs.as_slice()).collect();
    let probs = recommender.batch_probabilities(&inputs, 256).stage(Stage::Rank)?;
    let mut out = Vec::with_capacity(eval.len());
    for (w, p) in eval.iter().zip(&probs) {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite probability".into()).at(Stage::Rank));
        }
        let exclude: BTreeSet<ShowId> = w.window.inputs.iter().copied().collect();
        let ranked = rank_by_probability(p, vocab, &exclude);
        match rank_of_target(&ranked, w.window.target) {
            Ok(r) => out.push(Some(r)),
            Err(Error::MissingTarget(_)) => out.push(None),
            Err(e) => return Err(e.at(Stage::Rank)),
        }
    }
    Ok(out)
}

fn rank_sequential<F: Scalar>(
    config: &ExperimentConfig,
    world: &World,
    corpus: &Corpus,
    eval: &[EvalWindow],
) -> Result<Ranked> {
    let k = config.curation.k;
    let vocab = Vocabulary::new(&corpus.top_shows);
    let (embeddings, _) = build_embeddings::<F>(config, world, corpus).stage(Stage::Embed)?;

    let train_windows = make_training_windows(&corpus.train, k, WindowMode::Training).stage(Stage::Curate)?;
    let (train_windows, _) = drop_out_of_vocabulary(train_windows, &corpus.top_shows);
    let n_train = train_windows.len();

    let (slots, loss_curve) = if config.curation.per_topic {
        // One network per topic; each test window is ranked by its topic's network.
        let mut groups: BTreeMap<Option<TopicId>, (Vec<TrainingWindow>, Vec<usize>)> = BTreeMap::new();
        for w in train_windows {
            groups.entry(w.provenance.topic).or_default().0.push(w);
        }
        for (i, w) in eval.iter().enumerate() {
            groups.entry(w.window.provenance.topic).or_default().1.push(i);
        }
        let mut slots = vec![None; eval.len()];
        let mut weighted = vec![0.0; config.model.epochs];
        for (topic, (windows, members)) in &groups {
            if members.is_empty() {
                continue;
            }
            let stream = topic.map_or(u64::MAX, |t| t.0 as u64 + 1);
            let (network, curve) = if windows.is_empty() {
                // Nothing to learn from: the untrained network still ranks.
                (build_network::<F>(config, embeddings.dim(), vocab.len()).stage(Stage::Train)?, Vec::new())
            } else {
                train_network(config, windows, &embeddings, &vocab, stream)?
            };
            for (acc, l) in weighted.iter_mut().zip(&curve) {
                *acc += l * windows.len() as f64;
            }
            let members_eval: Vec<&EvalWindow> = members.iter().map(|&i| &eval[i]).collect();
            for (&i, r) in members.iter().zip(rank_windows(&network, &embeddings, &vocab, &members_eval)?) {
                slots[i] = r;
            }
        }
        let trained: usize = groups.values().filter(|(_, m)| !m.is_empty()).map(|(w, _)| w.len()).sum();
        let curve = weighted.into_iter().map(|v| v / trained.max(1) as f64).collect();
        (slots, curve)
    } else {
        let (network, curve) = train_network(config, &train_windows, &embeddings, &vocab, 0)?;
        let all: Vec<&EvalWindow> = eval.iter().collect();
        (rank_windows(&network, &embeddings, &vocab, &all)?, curve)
    };
    let missing = slots.iter().filter(|r| r.is_none()).count();
    let ranks = slots.into_iter().flatten().collect();
    Ok(Ranked { ranks, missing, train_windows: n_train, loss_curve })
}

/// Matrix-factorization baseline. Rows are the training sequences followed by
/// the test sequences with their held-out show removed; each test row ranks
/// every show it has not already played.
fn rank_cf<F: Scalar>(config: &ExperimentConfig, corpus: &Corpus, eval: &[EvalWindow]) -> Result<Ranked> {
    let shows: Vec<ShowId> = corpus.top_shows.iter().copied().collect();
    let mut histories: Vec<Vec<ShowId>> = Vec::with_capacity(corpus.train.len() + corpus.test.len());
    let in_vocab = |s: &&ShowId| corpus.top_shows.contains(s);
    histories.extend(corpus.train.iter().map(|s| s.shows.iter().filter(in_vocab).copied().collect()));
    let offset = histories.len();
    histories.extend(corpus.test.iter().map(|s| {
        let history = &s.shows[..s.shows.len().saturating_sub(1)];
        history.iter().filter(in_vocab).copied().collect()
    }));
    let matrix = build_interaction_matrix(&histories, &shows).stage(Stage::Train)?;
    let factors = nmf_factorize::<F>(
        &matrix,
        &NmfConfig {
            rank: config.cf.rank,
            max_iters: config.cf.max_iters,
            tol: config.cf.tol,
            seed: sub_seed(config.seed, "nmf", 0),
        },
    )
    .stage(Stage::Train)?;
    if factors.objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite factorization objective".into()).at(Stage::Train));
    }

    let mut ranks = Vec::with_capacity(eval.len());
    let mut missing = 0;
    for w in eval {
        let row = offset + w.sequence;
        let exclude: BTreeSet<ShowId> = histories[row].iter().copied().collect();
        let ranked = cf_rank(factors.w.row(row), &factors.h, &shows, &exclude).stage(Stage::Rank)?;
        match rank_of_target(&ranked, w.window.target) {
            Ok(r) => ranks.push(r),
            Err(Error::MissingTarget(_)) => missing += 1,
            Err(e) => return Err(e.at(Stage::Rank)),
        }
    }
    Ok(Ranked { ranks, missing, train_windows: corpus.train.len(), loss_curve: factors.objective })
}

fn evaluate<F: Scalar>(config: &ExperimentConfig, generated: &GeneratedWorld) -> Result<EvalReport> {
    let world = &generated.world;
    let corpus = build_corpus(config, world, &generated.events).stage(Stage::Curate)?;
    let (eval, candidates, dropped) = evaluation_windows(&corpus, config.curation.k).stage(Stage::Curate)?;
    if eval.is_empty() {
        return Err(Error::EmptyInput("no evaluable test windows".into()).at(Stage::Curate));
    }
    let ranked = match config.model.kind {
        ModelKind::Cf => rank_cf::<F>(config, &corpus, &eval)?,
        ModelKind::Rnn | ModelKind::Mlp => rank_sequential::<F>(config, world, &corpus, &eval)?,
    };
    let ranks = ranked.ranks;
    let mrr = mrr(&ranks).stage(Stage::Metrics)?;
    let success = success_at_k(&ranks, DEFAULT_K).stage(Stage::Metrics)?;
    Ok(EvalReport {
        config_fingerprint: config.fingerprint(),
        model: config.model.kind.name().into(),
        embedding: match config.model.kind {
            ModelKind::Cf => "none".into(),
            _ => config.embedding.kind.name().into(),
        },
        constraint: match config.curation.constraint {
            Constraint::None => "none".into(),
            Constraint::Topic => "topic".into(),
        },
        input_length: config.curation.k,
        precision: config.precision.name().into(),
        shuffled: config.shuffle,
        n: ranks.len(),
        k: DEFAULT_K,
        mrr,
        success_at_k: success,
        candidate_windows: candidates,
        dropped_out_of_vocabulary: dropped,
        missing_targets: ranked.missing,
        evaluable_fraction: ranks.len() as f64 / candidates as f64,
        train_windows: ranked.train_windows,
        vocabulary_size: corpus.top_shows.len(),
        loss_curve: ranked.loss_curve,
        ranks,
        timestamp: now_unix(),
    })
}

/// Runs generate, curate, embed, train, rank, and score for one configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let generated = generate_world(config).stage(Stage::Generate)?;
    run_experiment_with(config, &generated)
}

/// As [`run_experiment`] over an already generated world, which must come
/// from the same data parameters.
pub fn run_experiment_with(config: &ExperimentConfig, generated: &GeneratedWorld) -> Result<EvalReport> {
    match config.precision {
        Precision::F32 => evaluate::<f32>(config, generated),
        Precision::F64 => evaluate::<f64>(config, generated),
    }
}
