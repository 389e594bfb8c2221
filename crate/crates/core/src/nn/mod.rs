//! Minimal dense neural-network kernels.
//!
//! Everything learned in this crate (encoder, decoder, cost predictor, grasp
//! scorer) is built from these pieces: row-major [`Matrix`], [`Mlp`]
//! forward/backward, [`AdamState`], and power-iteration [`spectral_norm`].
//! All arithmetic is 64-bit; there is no autograd — each consumer wires the
//! backward passes it needs.

mod adam;
mod spectral;

pub use adam::{adam_step, AdamState, AdamVec};
pub use spectral::{spectral_norm, spectral_norm_warm, SpectralNorm};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("matrix entries must be finite".to_string()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc = w.mul_add(*xi, acc);
            }
            *o = acc;
        }
    }

    /// `out = self^T * x`.
    pub fn matvec_t(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (r, xr) in x.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o = w.mul_add(*xr, *o);
            }
        }
    }

    /// Frobenius inner product with a rank-one matrix `u v^T`, i.e. `u^T self v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, ur) in u.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut dot = 0.0;
            for (w, vc) in row.iter().zip(v) {
                dot = w.mul_add(*vc, dot);
            }
            acc = ur.mul_add(dot, acc);
        }
        acc
    }
}

/// Per-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed through the layer output `y = apply(z)`.
    /// For ReLU the derivative at exactly zero is taken as 0.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer widths plus one activation per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("MlpSpec needs at least two widths"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be >= 1"));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::config(format!(
                "expected {} activations for {} widths, got {}",
                widths.len() - 1,
                widths.len(),
                activations.len()
            )));
        }
        Ok(MlpSpec {
            widths,
            activations,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// A dense feed-forward network: weights, biases and the spec they follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer activations kept by [`Mlp::forward`] for the backward pass.
/// `acts[0]` is the input, `acts[l]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

/// Parameter gradients with the same shapes as the network they came from.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            weights: mlp
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in &mut w.data {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }
}

impl Mlp {
    /// Uniform Xavier-style init in `[-sqrt(6/(fan_in+fan_out)), +...]`,
    /// biases zero.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(spec.layer_count());
        let mut biases = Vec::with_capacity(spec.layer_count());
        for l in 0..spec.layer_count() {
            let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in);
            for x in w.data.iter_mut() {
                *x = rng.gen_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            spec,
            weights,
            biases,
        }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let weights = (0..spec.layer_count())
            .map(|l| Matrix::zeros(spec.widths[l + 1], spec.widths[l]))
            .collect();
        let biases = (0..spec.layer_count())
            .map(|l| vec![0.0; spec.widths[l + 1]])
            .collect();
        Mlp {
            spec,
            weights,
            biases,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.biases[layer]
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Forward pass; the cache holds everything `backward` needs.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::config(format!(
                "input length {} does not match first layer width {}",
                x.len(),
                self.spec.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.spec.layer_count() + 1);
        acts.push(x.to_vec());
        for l in 0..self.spec.layer_count() {
            let mut z = vec![0.0; self.spec.widths[l + 1]];
            self.weights[l].matvec(&acts[l], &mut z);
            let act = self.spec.activations[l];
            for (zi, b) in z.iter_mut().zip(&self.biases[l]) {
                *zi = act.apply(*zi + *b);
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, ForwardCache { acts }))
    }

    /// Convenience forward without keeping the cache.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Backward pass from `grad_output` (dL/d output). Returns parameter
    /// gradients and the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
    ) -> Result<(MlpGrads, Vec<f64>)> {
        if cache.acts.len() != self.spec.layer_count() + 1
            || cache
                .acts
                .iter()
                .zip(&self.spec.widths)
                .any(|(a, &w)| a.len() != w)
        {
            return Err(Error::usage(
                "forward cache does not match network shape (stale cache?)",
            ));
        }
        if grad_output.len() != self.spec.output_dim() {
            return Err(Error::usage(format!(
                "grad_output length {} does not match output width {}",
                grad_output.len(),
                self.spec.output_dim()
            )));
        }

        let mut grads = MlpGrads::zeros_like(self);
        let mut upstream = grad_output.to_vec();
        for l in (0..self.spec.layer_count()).rev() {
            let act = self.spec.activations[l];
            let y = &cache.acts[l + 1];
            let x = &cache.acts[l];
            // delta = dL/dz for this layer's pre-activation
            let mut delta = upstream;
            for (d, yi) in delta.iter_mut().zip(y) {
                *d *= act.derivative_from_output(*yi);
            }
            let gw = &mut grads.weights[l];
            for (r, dr) in delta.iter().enumerate() {
                let row = &mut gw.data[r * gw.cols..(r + 1) * gw.cols];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g = dr.mul_add(*xi, *g);
                }
            }
            for (g, d) in grads.biases[l].iter_mut().zip(&delta) {
                *g += *d;
            }
            let mut down = vec![0.0; x.len()];
            self.weights[l].matvec_t(&delta, &mut down);
            upstream = down;
        }
        Ok((grads, upstream))
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.data.len())
            .chain(self.biases.iter().map(|b| b.len()))
            .sum()
    }

    /// Appends all parameters in declaration order (per layer: weight
    /// row-major, then bias) to `out`.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in 0..self.spec.layer_count() {
            out.extend_from_slice(&self.weights[l].data);
            out.extend_from_slice(&self.biases[l]);
        }
    }

    /// Reads parameters back in the order produced by [`Mlp::write_params`].
    /// Returns the number of values consumed.
    pub fn read_params(&mut self, data: &[f64]) -> Result<usize> {
        let needed = self.param_count();
        if data.len() < needed {
            return Err(Error::usage(format!(
                "parameter blob too short: need {needed}, got {}",
                data.len()
            )));
        }
        let mut off = 0;
        for l in 0..self.spec.layer_count() {
            let wlen = self.weights[l].data.len();
            self.weights[l].data.copy_from_slice(&data[off..off + wlen]);
            off += wlen;
            let blen = self.biases[l].len();
            self.biases[l].copy_from_slice(&data[off..off + blen]);
            off += blen;
        }
        Ok(off)
    }

    /// Applies `f` to every (layer, tensor) pair, weights then bias per layer.
    pub(crate) fn visit_tensors_mut(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        for l in 0..self.weights.len() {
            f(l, &mut self.weights[l].data);
            f(l, &mut self.biases[l]);
        }
    }
}

impl MlpGrads {
    /// Flat view: weights then bias per layer; tensor `i` belongs to layer
    /// `i / 2`.
    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for l in 0..self.weights.len() {
            out.push(self.weights[l].data());
            out.push(self.biases[l].as_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::verify::oracles::finite_diff;

    fn spec(widths: &[usize], act: Activation) -> MlpSpec {
        MlpSpec::new(
            widths.to_vec(),
            vec![act; widths.len() - 1],
        )
        .unwrap()
    }

    #[test]
    fn identity_net_passes_input_through() {
        let mut mlp = Mlp::zeros(spec(&[2, 2], Activation::Identity));
        mlp.weight_mut(0).set(0, 0, 1.0);
        mlp.weight_mut(0).set(1, 1, 1.0);
        let (y, _) = mlp.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn single_sigmoid_unit_at_zero_is_half() {
        let mlp = Mlp::zeros(spec(&[1, 1], Activation::Sigmoid));
        let (y, _) = mlp.forward(&[5.0]).unwrap();
        assert_eq!(y, vec![0.5]);
    }

    #[test]
    fn forward_matches_layer_by_layer_oracle() {
        // Straightforward re-evaluation of the layer formulas, kept separate
        // from the implementation on purpose.
        let mut rng = rng_for(11, &[1]);
        let s = MlpSpec::new(
            vec![3, 5, 4, 2],
            vec![Activation::Sigmoid, Activation::Relu, Activation::Identity],
        )
        .unwrap();
        let mlp = Mlp::init(s.clone(), &mut rng);
        let x = vec![0.3, -0.8, 1.4];

        let mut cur = x.clone();
        for l in 0..s.layer_count() {
            let w = mlp.weight(l);
            let mut next = vec![0.0; s.widths[l + 1]];
            for (r, n) in next.iter_mut().enumerate() {
                let mut z = mlp.biases[l][r];
                for (c, xc) in cur.iter().enumerate() {
                    z += w.get(r, c) * xc;
                }
                *n = s.activations[l].apply(z);
            }
            cur = next;
        }

        let (y, _) = mlp.forward(&x).unwrap();
        for (a, b) in y.iter().zip(&cur) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let mlp = Mlp::zeros(spec(&[3, 2], Activation::Identity));
        let err = mlp.forward(&[1.0, 2.0]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn linear_backward_product_rule() {
        // y = w*x with w=3, x=2: dL/dw = x, dL/dx = w for grad_output 1.
        let mut mlp = Mlp::zeros(spec(&[1, 1], Activation::Identity));
        mlp.weight_mut(0).set(0, 0, 3.0);
        let (_, cache) = mlp.forward(&[2.0]).unwrap();
        let (grads, gx) = mlp.backward(&cache, &[1.0]).unwrap();
        assert_eq!(grads.weights[0].get(0, 0), 2.0);
        assert_eq!(gx[0], 3.0);
    }

    #[test]
    fn sigmoid_local_derivative_at_zero_is_quarter() {
        let mlp = Mlp::zeros(spec(&[1, 1], Activation::Sigmoid));
        let (_, cache) = mlp.forward(&[0.0]).unwrap();
        let (_, gx) = mlp.backward(&cache, &[1.0]).unwrap();
        // weight is 0 so dL/dx = w * sigma'(0) = 0; check the bias gradient
        // instead, which is exactly sigma'(0) = 1/4.
        let (grads, _) = mlp.backward(&cache, &[1.0]).unwrap();
        assert_eq!(grads.biases[0][0], 0.25);
        assert_eq!(gx[0], 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_for(23, &[7]);
        let s = MlpSpec::new(
            vec![4, 6, 3],
            vec![Activation::Sigmoid, Activation::Sigmoid],
        )
        .unwrap();
        let mlp = Mlp::init(s, &mut rng);
        let x = vec![0.2, -0.4, 0.9, -1.2];
        let target = vec![0.3, 0.6, 0.1];

        // L = 0.5 * ||y - t||^2
        let (y, cache) = mlp.forward(&x).unwrap();
        let grad_out: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let (grads, _) = mlp.backward(&cache, &grad_out).unwrap();

        let mut flat = Vec::new();
        mlp.write_params(&mut flat);
        let mut analytic = Vec::new();
        for l in 0..2 {
            analytic.extend_from_slice(grads.weights[l].data());
            analytic.extend_from_slice(&grads.biases[l]);
        }

        let loss = |p: &[f64]| {
            let mut m = mlp.clone();
            m.read_params(p).unwrap();
            let y = m.eval(&x).unwrap();
            0.5 * y
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let numeric = finite_diff(&flat, 1e-6, loss);
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / denom <= 1e-5,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let a = Mlp::zeros(spec(&[2, 2], Activation::Identity));
        let b = Mlp::zeros(spec(&[3, 2], Activation::Identity));
        let (_, cache) = b.forward(&[0.0, 0.0, 0.0]).unwrap();
        assert!(a.backward(&cache, &[1.0, 1.0]).is_err());
    }
}
