//! Analytic gradients against central finite differences, in double precision.

mod common;

use common::{fd_check, random_matrix};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use trajrec::embed::{cbow_loss_grad, distmult_loss_grad, CbowExample};
use trajrec::ids::{NodeId, RelationId};
use trajrec::seeds::rng;
use trajrec::seqmodel::{Architecture, MlpConfig, Network, SeqModelConfig};
use trajrec::synthcat::KgTriple;

const TOLERANCE: f64 = 1e-4;

fn network_check(arch: Architecture, k: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut net = Network::<f64>::init(arch.clone(), &mut r).unwrap();
    // Move biases off zero so every path carries gradient.
    for t in net.tensors.iter_mut() {
        t.mapv_inplace(|v| v + r.gen_range(-0.3..0.3));
    }
    let dim = arch.input_dim();
    let batch = 3;
    let inputs: Vec<Array2<f64>> = (0..k).map(|_| random_matrix(&mut r, batch, dim, 1.0)).collect();
    let targets: Vec<usize> = (0..batch).map(|_| r.gen_range(0..arch.output_size())).collect();
    let views: Vec<ArrayView2<'_, f64>> = inputs.iter().map(|x| x.view()).collect();
    let (_, grads) = net.loss_and_gradient(&views, &targets).unwrap();

    let mut worst: f64 = 0.0;
    let (mut skipped, mut probes) = (0, 0);
    for ti in 0..net.tensors.len() {
        let analytic = grads[ti].clone();
        let report = fd_check(&mut net, ti, &analytic, |n| n.loss_and_gradient(&views, &targets).unwrap().0);
        worst = worst.max(report.worst);
        skipped += report.skipped;
        probes += report.probes;
    }
    assert!(skipped * 50 <= probes, "seed {seed}: {skipped} of {probes} probes hit a kink");
    worst
}

#[test]
fn lstm_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let arch = Architecture::Lstm(SeqModelConfig {
            lstm_layers: 2,
            hidden: 4,
            dense_widths: vec![5],
            output_size: 6,
            input_dim: 3,
        });
        let err = network_check(arch, 2, seed);
        assert!(err < TOLERANCE, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let arch = Architecture::Mlp(MlpConfig { widths: vec![5, 4], inputs: 2, embedding_dim: 3, output_size: 6 });
        let err = network_check(arch, 2, seed);
        assert!(err < TOLERANCE, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn saturated_softmax_has_vanishing_gradient() {
    let arch = Architecture::Lstm(SeqModelConfig {
        lstm_layers: 1,
        hidden: 4,
        dense_widths: vec![],
        output_size: 5,
        input_dim: 3,
    });
    let mut net = Network::<f64>::init(arch, &mut rng(2)).unwrap();
    let out_bias = net.tensors.len() - 1;
    net.tensors[out_bias][[0, 2]] = 200.0;
    let x = random_matrix(&mut rng(3), 1, 3, 1.0);
    let (loss, grads) = net.loss_and_gradient(&[x.view(), x.view()], &[2]).unwrap();
    let norm: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
    assert!(loss < 1e-12);
    assert!(norm < 1e-12, "gradient norm {norm:e}");
}

#[test]
fn batch_gradient_is_sum_of_single_gradients() {
    let arch = Architecture::Lstm(SeqModelConfig {
        lstm_layers: 2,
        hidden: 4,
        dense_widths: vec![3],
        output_size: 5,
        input_dim: 3,
    });
    let mut r = rng(5);
    let net = Network::<f64>::init(arch, &mut r).unwrap();
    let inputs: Vec<Array2<f64>> = (0..2).map(|_| random_matrix(&mut r, 4, 3, 1.0)).collect();
    let targets = [0, 4, 2, 2];
    let views: Vec<ArrayView2<'_, f64>> = inputs.iter().map(|x| x.view()).collect();
    let (batch_loss, batch_grads) = net.loss_and_gradient(&views, &targets).unwrap();
    let mut sum_loss = 0.0;
    let mut sum_grads: Vec<Array2<f64>> = batch_grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
    for b in 0..4 {
        let single: Vec<ArrayView2<'_, f64>> = inputs.iter().map(|x| x.slice(ndarray::s![b..b + 1, ..])).collect();
        let (l, g) = net.loss_and_gradient(&single, &targets[b..b + 1]).unwrap();
        sum_loss += l;
        for (acc, gi) in sum_grads.iter_mut().zip(g) {
            *acc += &gi;
        }
    }
    assert!((batch_loss - sum_loss).abs() < 1e-12);
    for (a, b) in batch_grads.iter().zip(&sum_grads) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn distmult_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let dim = 4;
        let mut nodes = random_matrix(&mut r, 6, dim, 1.0);
        let mut relations = random_matrix(&mut r, 2, dim, 1.0);
        let triple = |h: u32, rel: u32, t: u32| KgTriple { head: NodeId(h), relation: RelationId(rel), tail: NodeId(t) };
        let positive = triple(0, 1, 3);
        // Corruptions that reuse the positive's head so rows are shared.
        let negatives = [triple(0, 1, 5), triple(2, 1, 3), triple(0, 1, 0)];
        let (_, grad) = distmult_loss_grad(&nodes, &relations, positive, &negatives);

        let mut worst: f64 = 0.0;
        let loss = |n: &Array2<f64>, rel: &Array2<f64>| distmult_loss_grad(n, rel, positive, &negatives).0;
        let eps = 1e-4;
        for row in 0..nodes.nrows() {
            for col in 0..dim {
                let analytic = grad.nodes.get(&row).map_or(0.0, |g| g[col]);
                let orig = nodes[[row, col]];
                nodes[[row, col]] = orig + eps;
                let up = loss(&nodes, &relations);
                nodes[[row, col]] = orig - eps;
                let down = loss(&nodes, &relations);
                nodes[[row, col]] = orig;
                worst = worst.max(common::relative_error(analytic, (up - down) / (2.0 * eps)));
            }
        }
        for row in 0..relations.nrows() {
            for col in 0..dim {
                let analytic = grad.relations.get(&row).map_or(0.0, |g| g[col]);
                let orig = relations[[row, col]];
                relations[[row, col]] = orig + eps;
                let up = loss(&nodes, &relations);
                relations[[row, col]] = orig - eps;
                let down = loss(&nodes, &relations);
                relations[[row, col]] = orig;
                worst = worst.max(common::relative_error(analytic, (up - down) / (2.0 * eps)));
            }
        }
        assert!(worst < TOLERANCE, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn cbow_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let dim = 4;
        let mut input = random_matrix(&mut r, 7, dim, 1.0);
        let mut output = random_matrix(&mut r, 7, dim, 1.0);
        // Repeated context row and a negative that collides with the center.
        let example = CbowExample { context: vec![1, 2, 2, 4], center: 3, negatives: vec![5, 3, 0] };
        let (_, grad_in, grad_out) = cbow_loss_grad(&input, &output, &example);
        let loss = |i: &Array2<f64>, o: &Array2<f64>| cbow_loss_grad(i, o, &example).0;

        let eps = 1e-4;
        let mut worst: f64 = 0.0;
        for row in 0..7 {
            for col in 0..dim {
                let orig = input[[row, col]];
                input[[row, col]] = orig + eps;
                let up = loss(&input, &output);
                input[[row, col]] = orig - eps;
                let down = loss(&input, &output);
                input[[row, col]] = orig;
                let analytic = grad_in.get(&row).map_or(0.0, |g| g[col]);
                worst = worst.max(common::relative_error(analytic, (up - down) / (2.0 * eps)));

                let orig = output[[row, col]];
                output[[row, col]] = orig + eps;
                let up = loss(&input, &output);
                output[[row, col]] = orig - eps;
                let down = loss(&input, &output);
                output[[row, col]] = orig;
                let analytic = grad_out.get(&row).map_or(0.0, |g| g[col]);
                worst = worst.max(common::relative_error(analytic, (up - down) / (2.0 * eps)));
            }
        }
        assert!(worst < TOLERANCE, "seed {seed}: max relative error {worst:e}");
    }
}
