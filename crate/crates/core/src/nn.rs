//! Minimal time-distributed layers used by the frame-rate networks.
//!
//! Weight matrices are row-major `[out, in]`, matching the tensor layout of the model file.

use crate::error::{Error, Result};
use crate::weights::TensorStore;

/// Epsilon inside layer normalization.
pub const LAYER_NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    weight: Vec<f32>,
    bias: Vec<f32>,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new(weight: Vec<f32>, bias: Vec<f32>, in_dim: usize, out_dim: usize) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Schema(format!(
                "linear layer expects weight [{out_dim}, {in_dim}] and bias [{out_dim}], got {} and {}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub(crate) fn from_store(store: &TensorStore, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = store.expect(&format!("{prefix}.weight"), &[out_dim, in_dim])?;
        let bias = store.expect(&format!("{prefix}.bias"), &[out_dim])?;
        Self::new(weight.to_vec(), bias.to_vec(), in_dim, out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// `out = W x + b`.
    #[inline]
    pub fn forward(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim))
            .zip(&self.bias)
        {
            *o = dot(row, x) + b;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    gain: Vec<f32>,
    bias: Vec<f32>,
}

impl LayerNorm {
    pub fn new(gain: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if gain.len() != bias.len() {
            return Err(Error::Schema("layer norm gain/bias length mismatch".into()));
        }
        Ok(Self { gain, bias })
    }

    pub(crate) fn from_store(store: &TensorStore, prefix: &str, dim: usize) -> Result<Self> {
        let gain = store.expect(&format!("{prefix}.ln.gain"), &[dim])?;
        let bias = store.expect(&format!("{prefix}.ln.bias"), &[dim])?;
        Self::new(gain.to_vec(), bias.to_vec())
    }

    /// Normalizes `x` in place with biased variance.
    pub fn forward_inplace(&self, x: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((v, g), b) in x.iter_mut().zip(&self.gain).zip(&self.bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

/// `Linear -> LayerNorm -> ReLU` for every hidden layer, then a plain output `Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormMlp {
    hidden: Vec<(Linear, LayerNorm)>,
    output: Linear,
}

impl LayerNormMlp {
    pub fn new(hidden: Vec<(Linear, LayerNorm)>, output: Linear) -> Result<Self> {
        let mut width = hidden.first().map(|(l, _)| l.in_dim()).unwrap_or(output.in_dim());
        for (lin, ln) in &hidden {
            if lin.in_dim() != width || ln.gain.len() != lin.out_dim() {
                return Err(Error::Schema("layer widths do not chain".into()));
            }
            width = lin.out_dim();
        }
        if output.in_dim() != width {
            return Err(Error::Schema("output layer width does not chain".into()));
        }
        Ok(Self { hidden, output })
    }

    /// Loads `{prefix}.layer{j}` for `j < depth`; all but the last carry `.ln`.
    pub(crate) fn from_store(
        store: &TensorStore,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        depth: usize,
    ) -> Result<Self> {
        let mut hidden = Vec::with_capacity(depth.saturating_sub(1));
        let mut width = in_dim;
        for j in 0..depth - 1 {
            let name = format!("{prefix}.layer{j}");
            hidden.push((
                Linear::from_store(store, &name, width, hidden_dim)?,
                LayerNorm::from_store(store, &name, hidden_dim)?,
            ));
            width = hidden_dim;
        }
        let output = Linear::from_store(store, &format!("{prefix}.layer{}", depth - 1), width, out_dim)?;
        Self::new(hidden, output)
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.first().map(|(l, _)| l.in_dim()).unwrap_or(self.output.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim()
    }

    pub fn forward(&self, x: &[f32], out: &mut [f32]) {
        let mut cur = x.to_vec();
        for (lin, ln) in &self.hidden {
            let mut next = vec![0.0; lin.out_dim()];
            lin.forward(&cur, &mut next);
            ln.forward_inplace(&mut next);
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = next;
        }
        self.output.forward(&cur, out);
    }

    /// Applies the network independently to each row of `rows` (`n × in_dim`).
    pub fn forward_rows(&self, rows: &[f32]) -> Vec<f32> {
        let n = rows.len() / self.in_dim();
        let mut out = vec![0.0; n * self.out_dim()];
        for (x, o) in rows
            .chunks_exact(self.in_dim())
            .zip(out.chunks_exact_mut(self.out_dim()))
        {
            self.forward(x, o);
        }
        out
    }

    pub fn output_layer(&self) -> &Linear {
        &self.output
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_forward_small() {
        let l = Linear::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -0.5], 2, 2).unwrap();
        let mut out = [0.0; 2];
        l.forward(&[1.0, 1.0], &mut out);
        assert_eq!(out, [3.5, 6.5]);
    }

    #[test]
    fn linear_shape_mismatch() {
        assert!(matches!(
            Linear::new(vec![0.0; 3], vec![0.0; 2], 2, 2),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let ln = LayerNorm::new(vec![1.0; 4], vec![0.0; 4]).unwrap();
        let mut x = [1.0, 2.0, 3.0, 4.0];
        ln.forward_inplace(&mut x);
        let mean: f32 = x.iter().sum::<f32>() / 4.0;
        let var: f32 = x.iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(1e6), 1.0);
        assert_eq!(sigmoid(-1e6), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
