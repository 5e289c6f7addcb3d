//! Stacked LSTM over a batch of sequences.
//!
//! Layer `l` keeps one weight matrix of shape `(in_l + hidden) x 4*hidden`
//! acting on `[x_t, h_{t-1}]`, and a `1 x 4*hidden` bias. Gate blocks are
//! ordered input, forget, cell, output.

use ndarray::{concatenate, s, Array2, Axis};

use crate::scalar::{sigmoid, Scalar};

struct StepCache<F> {
    /// `[x_t, h_{t-1}]`
    joined: Array2<F>,
    /// Gate activations `[i, f, g, o]` after their nonlinearities.
    gates: Array2<F>,
    c_prev: Array2<F>,
    tanh_c: Array2<F>,
}

pub(crate) struct LstmCache<F> {
    /// `layers[l][t]`
    layers: Vec<Vec<StepCache<F>>>,
    input_dims: Vec<usize>,
}

/// Runs every layer over the `k` steps in `inputs` (each `batch x in_dim`).
/// `tensors[2l]`, `tensors[2l + 1]` are layer `l`'s weight and bias.
/// Returns the top layer's final hidden state.
pub(crate) fn forward<F: Scalar>(
    tensors: &[Array2<F>],
    layers: usize,
    hidden: usize,
    inputs: &[Array2<F>],
) -> (Array2<F>, LstmCache<F>) {
    let batch = inputs[0].nrows();
    let mut sequence: Vec<Array2<F>> = inputs.to_vec();
    let mut caches = Vec::with_capacity(layers);
    let mut input_dims = Vec::with_capacity(layers);
    for l in 0..layers {
        let w = &tensors[2 * l];
        let b = &tensors[2 * l + 1];
        input_dims.push(sequence[0].ncols());
        let mut h = Array2::<F>::zeros((batch, hidden));
        let mut c = Array2::<F>::zeros((batch, hidden));
        let mut steps = Vec::with_capacity(sequence.len());
        let mut outputs = Vec::with_capacity(sequence.len());
        for x in &sequence {
            let joined = concatenate(Axis(1), &[x.view(), h.view()]).expect("batch rows agree");
            let mut gates = joined.dot(w);
            gates += b;
            gates.slice_mut(s![.., 0..2 * hidden]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * hidden..3 * hidden]).mapv_inplace(F::tanh);
            gates.slice_mut(s![.., 3 * hidden..]).mapv_inplace(sigmoid);

            let i = gates.slice(s![.., 0..hidden]);
            let f = gates.slice(s![.., hidden..2 * hidden]);
            let g = gates.slice(s![.., 2 * hidden..3 * hidden]);
            let o = gates.slice(s![.., 3 * hidden..]);
            let c_next = &f * &c + &i * &g;
            let tanh_c = c_next.mapv(F::tanh);
            let h_next = &o * &tanh_c;

            steps.push(StepCache { joined, gates, c_prev: std::mem::replace(&mut c, c_next), tanh_c });
            outputs.push(h_next.clone());
            h = h_next;
        }
        caches.push(steps);
        sequence = outputs;
    }
    let last = sequence.pop().expect("at least one step");
    (last, LstmCache { layers: caches, input_dims })
}

/// Backpropagation through time. `d_last` is the gradient w.r.t. the top
/// layer's final hidden state. Gradients accumulate into `grads`.
pub(crate) fn backward<F: Scalar>(
    tensors: &[Array2<F>],
    grads: &mut [Array2<F>],
    hidden: usize,
    cache: &LstmCache<F>,
    d_last: Array2<F>,
) {
    let layers = cache.layers.len();
    let steps = cache.layers[0].len();
    let batch = d_last.nrows();
    // Gradient arriving at each step's hidden output from the layer above.
    let mut from_above: Vec<Option<Array2<F>>> = vec![None; steps];
    from_above[steps - 1] = Some(d_last);

    for l in (0..layers).rev() {
        let w = &tensors[2 * l];
        let in_dim = cache.input_dims[l];
        let mut dh_next = Array2::<F>::zeros((batch, hidden));
        let mut dc_next = Array2::<F>::zeros((batch, hidden));
        let mut to_below: Vec<Option<Array2<F>>> = vec![None; steps];
        for t in (0..steps).rev() {
            let step = &cache.layers[l][t];
            let mut dh = dh_next;
            if let Some(d) = &from_above[t] {
                dh += d;
            }
            let i = step.gates.slice(s![.., 0..hidden]);
            let f = step.gates.slice(s![.., hidden..2 * hidden]);
            let g = step.gates.slice(s![.., 2 * hidden..3 * hidden]);
            let o = step.gates.slice(s![.., 3 * hidden..]);

            let one = F::one();
            let dc = &dh * &o * &step.tanh_c.mapv(|v| one - v * v) + &dc_next;
            let mut d_gates = Array2::<F>::zeros((batch, 4 * hidden));
            d_gates
                .slice_mut(s![.., 0..hidden])
                .assign(&(&dc * &g * &i.mapv(|v| v * (one - v))));
            d_gates
                .slice_mut(s![.., hidden..2 * hidden])
                .assign(&(&dc * &step.c_prev * &f.mapv(|v| v * (one - v))));
            d_gates
                .slice_mut(s![.., 2 * hidden..3 * hidden])
                .assign(&(&dc * &i * &g.mapv(|v| one - v * v)));
            d_gates
                .slice_mut(s![.., 3 * hidden..])
                .assign(&(&dh * &step.tanh_c * &o.mapv(|v| v * (one - v))));
            dc_next = &dc * &f;

            grads[2 * l] += &step.joined.t().dot(&d_gates);
            grads[2 * l + 1] += &d_gates.sum_axis(Axis(0)).insert_axis(Axis(0));
            let d_joined = d_gates.dot(&w.t());
            to_below[t] = Some(d_joined.slice(s![.., 0..in_dim]).to_owned());
            dh_next = d_joined.slice(s![.., in_dim..]).to_owned();
        }
        from_above = to_below;
    }
}
