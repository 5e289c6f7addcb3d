//! Embedding trainers and the factorization baseline against planted
//! structure and brute-force recomputation.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use trajrec::cfbase::{build_interaction_matrix, cf_rank, nmf_factorize, InteractionMatrix, NmfConfig};
use trajrec::curate::{read_sequences_jsonl, write_sequences_jsonl, ListeningSequence};
use trajrec::embed::{train_cbow, train_distmult, CbowConfig, DistMultConfig};
use trajrec::ids::{NodeId, ShowId, UserId};
use trajrec::seeds::rng;
use trajrec::synthcat::{KgTriple, KnowledgeGraph, MENTIONS, RELATED};

fn plain_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Shows 0..10 mention entities 20..25 and shows 10..20 mention 25..30.
fn two_cluster_graph() -> KnowledgeGraph {
    let mut r = rng(17);
    let mut triples = BTreeSet::new();
    for show in 0..20u32 {
        let base = if show < 10 { 20 } else { 25 };
        while triples.iter().filter(|t: &&KgTriple| t.head == NodeId(show)).count() < 3 {
            let tail = base + r.gen_range(0..5);
            triples.insert(KgTriple { head: NodeId(show), relation: MENTIONS, tail: NodeId(tail) });
        }
    }
    for e in 20..30u32 {
        let base = if e < 25 { 20 } else { 25 };
        let other = base + (e - base + 1) % 5;
        triples.insert(KgTriple { head: NodeId(e), relation: RELATED, tail: NodeId(other) });
    }
    KnowledgeGraph { num_nodes: 30, num_relations: 2, triples: triples.into_iter().collect() }
}

#[test]
fn distmult_separates_planted_clusters() {
    let graph = two_cluster_graph();
    let config = DistMultConfig { dim: 16, epochs: 200, lr: 0.05, negatives_per_positive: 5, seed: 3 };
    let model = train_distmult::<f64>(&graph, &config).unwrap();
    let vec_of = |id: u32| model.nodes.get(id).unwrap().to_vec();
    let (mut same, mut same_n, mut cross, mut cross_n) = (0.0, 0, 0.0, 0);
    for a in 0..20u32 {
        for b in a + 1..20 {
            let c = plain_cosine(&vec_of(a), &vec_of(b));
            if (a < 10) == (b < 10) {
                same += c;
                same_n += 1;
            } else {
                cross += c;
                cross_n += 1;
            }
        }
    }
    let (same, cross) = (same / same_n as f64, cross / cross_n as f64);
    assert!(same > cross, "same-cluster {same} vs cross-cluster {cross}");

    let curve = &model.loss_curve;
    assert_eq!(curve.len(), 200);
    assert!(curve.last().unwrap() < curve.first().unwrap());
    assert!(model.nodes.matrix().iter().all(|v| v.is_finite()));
}

#[test]
fn distmult_is_deterministic() {
    let graph = two_cluster_graph();
    let config = DistMultConfig { dim: 8, epochs: 5, seed: 9, ..DistMultConfig::default() };
    let a = train_distmult::<f64>(&graph, &config).unwrap();
    let b = train_distmult::<f64>(&graph, &config).unwrap();
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.relations, b.relations);
}

#[test]
fn cbow_alternating_pair_are_mutual_neighbours() {
    let a = ShowId(0);
    let b = ShowId(1);
    let mut r = rng(5);
    let mut sequences = vec![ListeningSequence::new(UserId(0), (0..40).map(|i| if i % 2 == 0 { a } else { b }).collect())];
    // Background traffic over other shows.
    for u in 1..20 {
        let shows = (0..12).map(|_| ShowId(r.gen_range(2..12))).collect();
        sequences.push(ListeningSequence::new(UserId(u), shows));
    }
    let config = CbowConfig { dim: 8, window: 2, negatives: 5, epochs: 60, lr: 0.05, seed: 4 };
    let model = train_cbow::<f64>(&sequences, &config).unwrap();
    let table = &model.input;
    let nearest = |id: u32| {
        let v = table.get(id).unwrap().to_vec();
        table
            .ids()
            .iter()
            .filter(|&&o| o != id)
            .map(|&o| (plain_cosine(&v, &table.get(o).unwrap().to_vec()), o))
            .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
            .unwrap()
            .1
    };
    assert_eq!(nearest(a.0), b.0);
    assert_eq!(nearest(b.0), a.0);
    assert!(model.loss_curve.last().unwrap() < model.loss_curve.first().unwrap());
}

fn random_binary(r: &mut trajrec::seeds::Rng, rows: usize, cols: usize, density: f64) -> Vec<Vec<ShowId>> {
    (0..rows)
        .map(|_| (0..cols as u32).filter(|_| r.gen_bool(density)).map(ShowId).collect())
        .collect()
}

#[test]
fn nmf_objective_never_increases() {
    let mut r = rng(31);
    for trial in 0..20 {
        let rows = r.gen_range(8..40);
        let cols = r.gen_range(6..30);
        let shows: Vec<ShowId> = (0..cols as u32).map(ShowId).collect();
        let x = build_interaction_matrix(&random_binary(&mut r, rows, cols, 0.3), &shows).unwrap();
        let rank = r.gen_range(1..=rows.min(cols).min(8));
        let config = NmfConfig { rank, max_iters: 60, tol: 0.0, seed: trial };
        let f = nmf_factorize::<f64>(&x, &config).unwrap();
        for pair in f.objective.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10, "trial {trial}: {} -> {}", pair[0], pair[1]);
        }
        assert!(f.w.iter().chain(f.h.iter()).all(|&v| v >= 0.0));
        // The logged objective is the true residual.
        let dense: Array2<f64> = x.to_dense();
        let residual = (&dense - &f.w.dot(&f.h)).mapv(|v| v * v).sum();
        assert!((residual - f.objective.last().unwrap()).abs() < 1e-8 * residual.max(1.0));
    }
}

#[test]
fn identity_factorizes_to_tiny_residual() {
    let shows = [ShowId(0), ShowId(1)];
    let x = build_interaction_matrix(&[vec![ShowId(0)], vec![ShowId(1)]], &shows).unwrap();
    let f = nmf_factorize::<f64>(&x, &NmfConfig { rank: 2, max_iters: 5000, tol: 0.0, seed: 1 }).unwrap();
    let residual = (&Array2::<f64>::eye(2) - &f.w.dot(&f.h)).mapv(|v| v * v).sum();
    assert!(residual < 1e-6, "residual {residual}");
}

#[test]
fn density_matches_sequence_file_recount() {
    let mut r = rng(8);
    let shows: Vec<ShowId> = (0..25).map(ShowId).collect();
    let sequences: Vec<ListeningSequence> = (0..30)
        .map(|u| {
            let mut picked: Vec<ShowId> = shows.iter().copied().filter(|_| r.gen_bool(0.25)).collect();
            picked.push(ShowId(25 + u)); // held-out target outside the matrix columns
            ListeningSequence::new(UserId(u), picked)
        })
        .collect();
    let mut file = Vec::new();
    write_sequences_jsonl(&sequences, &mut file).unwrap();
    let reread = read_sequences_jsonl(&file[..]).unwrap();
    let histories: Vec<Vec<ShowId>> = reread.iter().map(|s| s.shows[..s.shows.len() - 1].to_vec()).collect();
    let x: InteractionMatrix = build_interaction_matrix(&histories, &shows).unwrap();
    let recount: usize = reread.iter().map(|s| s.shows.len() - 1).sum();
    assert_eq!(x.density(), recount as f64 / (30.0 * 25.0));
    for (row, history) in histories.iter().enumerate() {
        for (col, show) in shows.iter().enumerate() {
            assert_eq!(x.get(row, col), history.contains(show));
        }
    }
}

#[test]
fn cf_rank_matches_brute_force_cosine() {
    let mut r = rng(44);
    for _ in 0..50 {
        let rank = 3;
        let h = Array2::from_shape_simple_fn((rank, 5), || r.gen_range(0.0..1.0));
        let user = Array1::from_shape_simple_fn(rank, || r.gen_range(0.0..1.0));
        let shows: Vec<ShowId> = [4, 9, 2, 7, 5].into_iter().map(ShowId).collect();
        let exclude: BTreeSet<ShowId> = [ShowId(2)].into();
        let ranked = cf_rank(user.view(), &h, &shows, &exclude).unwrap();

        let mut oracle: Vec<(f64, ShowId)> = (0..5)
            .filter(|&c| !exclude.contains(&shows[c]))
            .map(|c| (plain_cosine(user.as_slice().unwrap(), &h.column(c).to_vec()), shows[c]))
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        assert_eq!(ranked, oracle.into_iter().map(|(_, s)| s).collect::<Vec<_>>());
    }
}

proptest! {
    #[test]
    fn cf_rank_is_a_scale_invariant_permutation(
        values in proptest::collection::vec(0.0f64..1.0, 4 * 12),
        user in proptest::collection::vec(0.0f64..1.0, 4),
        scale in 0.01f64..100.0,
        excluded in proptest::collection::btree_set(0u32..12, 0..5),
    ) {
        let h = Array2::from_shape_vec((4, 12), values).unwrap();
        let shows: Vec<ShowId> = (0..12).map(ShowId).collect();
        let exclude: BTreeSet<ShowId> = excluded.into_iter().map(ShowId).collect();
        let u = Array1::from(user);
        let ranked = cf_rank(u.view(), &h, &shows, &exclude).unwrap();
        let as_set: BTreeSet<ShowId> = ranked.iter().copied().collect();
        let expected: BTreeSet<ShowId> = shows.iter().copied().filter(|s| !exclude.contains(s)).collect();
        prop_assert_eq!(ranked.len(), as_set.len());
        prop_assert_eq!(as_set, expected);
        let scaled = u.mapv(|v| v * scale);
        // Exact ties can flip under rounding; compare cosine order instead of ids.
        let rescored = cf_rank(scaled.view(), &h, &shows, &exclude).unwrap();
        let cos = |s: &ShowId| plain_cosine(u.as_slice().unwrap(), &h.column(s.0 as usize).to_vec());
        for (a, b) in ranked.iter().zip(&rescored) {
            prop_assert!((cos(a) - cos(b)).abs() < 1e-12);
        }
    }
}
