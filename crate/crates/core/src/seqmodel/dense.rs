//! Feed-forward stack shared by both model families: ReLU after every hidden
//! layer, linear output layer, softmax over shows.

use ndarray::{Array2, Axis};

use crate::scalar::Scalar;

/// Inputs seen by each layer of the stack, kept for the backward pass.
pub(crate) struct DenseCache<F> {
    inputs: Vec<Array2<F>>,
}

/// `tensors[start..start + 2 * layers]` hold `(weight, bias)` pairs; the last
/// pair is the output layer. Returns the logits.
pub(crate) fn forward<F: Scalar>(
    tensors: &[Array2<F>],
    start: usize,
    layers: usize,
    x: Array2<F>,
) -> (Array2<F>, DenseCache<F>) {
    let mut inputs = Vec::with_capacity(layers);
    let mut current = x;
    for j in 0..layers {
        let w = &tensors[start + 2 * j];
        let b = &tensors[start + 2 * j + 1];
        let mut out = current.dot(w);
        out += b;
        if j + 1 < layers {
            out.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
        }
        inputs.push(current);
        current = out;
    }
    (current, DenseCache { inputs })
}

/// Backpropagates `d_logits` through the stack, accumulating into `grads`,
/// and returns the gradient w.r.t. the stack input.
pub(crate) fn backward<F: Scalar>(
    tensors: &[Array2<F>],
    grads: &mut [Array2<F>],
    start: usize,
    layers: usize,
    cache: &DenseCache<F>,
    d_logits: Array2<F>,
) -> Array2<F> {
    let mut delta = d_logits;
    for j in (0..layers).rev() {
        let x = &cache.inputs[j];
        grads[start + 2 * j] += &x.t().dot(&delta);
        grads[start + 2 * j + 1] += &delta.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dx = delta.dot(&tensors[start + 2 * j].t());
        if j > 0 {
            // x is the ReLU output of layer j-1.
            ndarray::Zip::from(&mut dx).and(x).for_each(|d, &a| {
                if a <= F::zero() {
                    *d = F::zero();
                }
            });
        }
        delta = dx;
    }
    delta
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows<F: Scalar>(logits: &mut Array2<F>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| if v > m { v } else { m });
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}
