//! Fully connected ELU networks over a flat parameter vector.
//!
//! A network only records its layer widths and where its parameters start in
//! the shared buffer. Each layer stores its weight matrix row-major as
//! `in × out`, followed by the `out` biases. Hidden layers use ELU and the
//! output layer is linear.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    offset: usize,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new(dims: Vec<usize>, offset: usize) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        Self { dims, offset }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_params()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.offset
            + self.dims[..=layer]
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum::<usize>()
    }

    pub fn layer<'a>(&self, params: &'a [f64], layer: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.layer_offset(layer);
        let w = ArrayView2::from_shape((i, o), &params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&params[off + i * o..off + i * o + o]);
        (w, b)
    }

    pub fn layer_mut<'a>(
        &self,
        params: &'a mut [f64],
        layer: usize,
    ) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.layer_offset(layer);
        let (w, b) = params[off..off + i * o + o].split_at_mut(i * o);
        (
            ArrayViewMut2::from_shape((i, o), w).unwrap(),
            ArrayViewMut1::from(b),
        )
    }

    /// Glorot-normal weights (variance `2 / (fan_in + fan_out)`), zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], r: &mut R) {
        for l in 0..self.n_layers() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let sd = (2.0 / (i + o) as f64).sqrt();
            let (mut w, mut b) = self.layer_mut(params, l);
            w.mapv_inplace(|_| sd * rng::normal(r));
            b.fill(0.0);
        }
    }

    fn affine(&self, params: &[f64], layer: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let (w, b) = self.layer(params, layer);
        let mut z = input.dot(&w);
        z += &b;
        if layer + 1 < self.n_layers() {
            z.mapv_inplace(elu);
        }
        z
    }

    pub fn forward(&self, params: &[f64], input: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.affine(params, 0, input);
        for l in 1..self.n_layers() {
            h = self.affine(params, l, h.view());
        }
        h
    }

    pub fn forward_trace(&self, params: &[f64], input: Array2<f64>) -> Trace {
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(input);
        for l in 0..self.n_layers() {
            let next = self.affine(params, l, acts[l].view());
            acts.push(next);
        }
        Trace { acts }
    }

    /// Accumulates `∂J/∂params` into `grads` given `∂J/∂output`; returns
    /// `∂J/∂input` when requested.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        grad_out: Array2<f64>,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let mut delta = grad_out;
        for l in (0..self.n_layers()).rev() {
            let a_in = &trace.acts[l];
            {
                let (mut gw, mut gb) = self.layer_mut(grads, l);
                general_mat_mul(1.0, &a_in.t(), &delta, 1.0, &mut gw);
                gb += &delta.sum_axis(Axis(0));
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            let (w, _) = self.layer(params, l);
            let mut da = delta.dot(&w.t());
            if l > 0 {
                // ELU'(x) = 1 for x > 0, exp(x) = a + 1 otherwise.
                Zip::from(&mut da).and(a_in).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d *= a + 1.0;
                    }
                });
            }
            delta = da;
        }
        Some(delta)
    }
}

/// Hands out consecutive parameter ranges.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    next: usize,
}

impl LayoutBuilder {
    pub fn mlp(&mut self, dims: Vec<usize>) -> Mlp {
        let m = Mlp::new(dims, self.next);
        self.next += m.n_params();
        m
    }

    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net() -> (Mlp, Vec<f64>) {
        let mlp = Mlp::new(vec![3, 4, 2, 1], 0);
        let mut p = vec![0.0; mlp.n_params()];
        mlp.init(&mut p, &mut rng::seeded(5));
        // nonzero biases so the ELU branches are both exercised
        for (k, v) in p.iter_mut().enumerate() {
            *v += 0.05 * ((k % 7) as f64 - 3.0);
        }
        (mlp, p)
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        let mlp = Mlp::new(vec![2, 2, 1], 0);
        // W1 = [[1, -1], [0.5, 2]], b1 = [0, -3], W2 = [[2], [1]], b2 = [0.5]
        let p = vec![1.0, -1.0, 0.5, 2.0, 0.0, -3.0, 2.0, 1.0, 0.5];
        let out = mlp.forward(&p, array![[1.0, 1.0]].view());
        // h = elu([1.5, -2.0]) = [1.5, e^-2 - 1]
        let want = 2.0 * 1.5 + ((-2.0f64).exp() - 1.0) + 0.5;
        assert!((out[[0, 0]] - want).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (mlp, p) = net();
        let x = array![[0.3, -1.2, 2.0], [-0.7, 0.1, -0.4]];
        // J = sum of outputs squared / 2
        let j = |p: &[f64], x: &Array2<f64>| mlp.forward(p, x.view()).mapv(|v| 0.5 * v * v).sum();
        let tr = mlp.forward_trace(&p, x.clone());
        let mut g = vec![0.0; p.len()];
        let gx = mlp.backward(&p, &tr, tr.output().clone(), &mut g, true).unwrap();
        let h = 1e-6;
        for k in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (j(&a, &x) - j(&b, &x)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
        for i in 0..2 {
            for c in 0..3 {
                let mut a = x.clone();
                let mut b = x.clone();
                a[[i, c]] += h;
                b[[i, c]] -= h;
                let fd = (j(&p, &a) - j(&p, &b)) / (2.0 * h);
                assert!((fd - gx[[i, c]]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn init_variance_and_zero_bias() {
        let mlp = Mlp::new(vec![200, 300], 0);
        let mut p = vec![1.0; mlp.n_params()];
        mlp.init(&mut p, &mut rng::seeded(1));
        let (w, b) = mlp.layer(&p, 0);
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 500.0).abs() < 2e-4);
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layout_is_contiguous() {
        let mut lb = LayoutBuilder::default();
        let a = lb.mlp(vec![2, 3, 1]);
        let b = lb.mlp(vec![4, 1]);
        assert_eq!(a.range().end, b.offset());
        assert_eq!(lb.len(), a.n_params() + b.n_params());
    }
}
