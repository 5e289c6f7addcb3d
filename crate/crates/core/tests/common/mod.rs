//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use trajrec::seeds::Rng as SeededRng;
use trajrec::seqmodel::Network;

pub fn random_matrix(r: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-scale..scale))
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps near-zero components
/// from dominating through roundoff.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub struct FdReport {
    pub worst: f64,
    /// Probes whose step straddled a kink (e.g. a ReLU switching), where
    /// no finite difference is meaningful.
    pub skipped: usize,
    pub probes: usize,
}

/// Central differences at steps `h` and `h/2`, combined by Richardson
/// extrapolation. A probe is treated as straddling a kink when the two
/// estimates disagree far beyond smooth truncation error.
pub fn fd_derivative(mut eval: impl FnMut(f64) -> f64, h: f64) -> Option<f64> {
    let wide = (eval(h) - eval(-h)) / (2.0 * h);
    let narrow = (eval(h / 2.0) - eval(-h / 2.0)) / h;
    if (wide - narrow).abs() > 1e-3 * wide.abs().max(narrow.abs()) + 1e-7 {
        return None;
    }
    Some((4.0 * narrow - wide) / 3.0)
}

pub fn fd_check(
    net: &mut Network<f64>,
    tensor: usize,
    analytic: &Array2<f64>,
    loss: impl Fn(&Network<f64>) -> f64,
) -> FdReport {
    let mut report = FdReport { worst: 0.0, skipped: 0, probes: 0 };
    let shape = net.tensors[tensor].dim();
    for i in 0..shape.0 {
        for j in 0..shape.1 {
            let orig = net.tensors[tensor][[i, j]];
            let numeric = fd_derivative(
                |d| {
                    net.tensors[tensor][[i, j]] = orig + d;
                    loss(net)
                },
                1e-4,
            );
            net.tensors[tensor][[i, j]] = orig;
            report.probes += 1;
            match numeric {
                Some(n) => report.worst = report.worst.max(relative_error(analytic[[i, j]], n)),
                None => report.skipped += 1,
            }
        }
    }
    report
}

/// Reciprocal-rank mean by explicit accumulation in input order.
pub fn brute_mrr(ranks: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &r in ranks {
        sum += 1.0 / r as f64;
    }
    sum / ranks.len() as f64
}

pub fn brute_success(ranks: &[usize], k: usize) -> f64 {
    let mut hits = 0usize;
    for &r in ranks {
        if r <= k {
            hits += 1;
        }
    }
    hits as f64 / ranks.len() as f64
}
