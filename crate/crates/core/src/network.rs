//! Fully connected feed-forward networks over a flat weight vector.
//!
//! Weight layout: layers run from the input side to the output side. Inside a
//! layer each destination neuron contributes its incoming weights (source
//! index ascending) immediately followed by its bias, so a layer with `fan_in`
//! inputs and `fan_out` neurons occupies `fan_out * (fan_in + 1)` consecutive
//! entries. This is the only ordering that reproduces the bundled worked
//! example (see `fixture`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" | "identity" => Ok(Activation::Linear),
            other => Err(Error::InvalidArchitecture(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    input_dim: usize,
    /// Hidden layer widths followed by the output width.
    layer_widths: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl NetworkArchitecture {
    pub fn new(
        input_dim: usize,
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArchitecture("input_dim must be >= 1".into()));
        }
        if layer_widths.is_empty() {
            return Err(Error::InvalidArchitecture(
                "at least one layer is required".into(),
            ));
        }
        if layer_widths.contains(&0) {
            return Err(Error::InvalidArchitecture("layer widths must be >= 1".into()));
        }
        Ok(Self {
            input_dim,
            layer_widths,
            hidden_activation,
            output_activation,
        })
    }

    /// Hidden activation as given, linear output.
    pub fn regression(
        input_dim: usize,
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
    ) -> Result<Self> {
        Self::new(input_dim, layer_widths, hidden_activation, Activation::Linear)
    }

    /// The 2-input (4, 4, 10, 1) tanh network used by the sanity experiment.
    pub fn reference() -> Self {
        Self::regression(2, vec![4, 4, 10, 1], Activation::Tanh).expect("valid")
    }

    /// One hidden layer of 100 ReLU units, as used for the cubic toy problem.
    pub fn toy() -> Self {
        Self::regression(1, vec![100, 1], Activation::Relu).expect("valid")
    }

    /// The 1-5-1 tanh network of the worked example.
    pub fn worked_example() -> Self {
        Self::regression(1, vec![5, 1], Activation::Tanh).expect("valid")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("non-empty")
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn with_hidden_activation(&self, activation: Activation) -> Self {
        Self {
            hidden_activation: activation,
            ..self.clone()
        }
    }

    /// `(fan_in, fan_out)` per layer, input side first.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input_dim)
            .chain(self.layer_widths.iter().copied())
            .zip(self.layer_widths.iter().copied())
    }

    /// Number of trainable parameters, biases included.
    pub fn weight_count(&self) -> usize {
        self.layer_shapes()
            .map(|(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layer_widths.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Splits a flat weight vector into per-layer `(W, b)` pairs, with `W`
    /// shaped `fan_out x fan_in`.
    pub fn unflatten(&self, weights: &[f64]) -> Result<Vec<DenseLayer>> {
        if weights.len() != self.weight_count() {
            return Err(Error::dims("flat weights", self.weight_count(), weights.len()));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layer_widths.len());
        for (fan_in, fan_out) in self.layer_shapes() {
            let mut w = Matrix::zeros(fan_out, fan_in);
            let mut b = Vector::zeros(fan_out);
            for neuron in 0..fan_out {
                for src in 0..fan_in {
                    w[(neuron, src)] = weights[offset + src];
                }
                b[neuron] = weights[offset + fan_in];
                offset += fan_in + 1;
            }
            layers.push(DenseLayer { weights: w, bias: b });
        }
        Ok(layers)
    }

    pub fn flatten(&self, layers: &[DenseLayer]) -> Result<Vec<f64>> {
        if layers.len() != self.layer_widths.len() {
            return Err(Error::dims("layer count", self.layer_widths.len(), layers.len()));
        }
        let mut out = Vec::with_capacity(self.weight_count());
        for ((fan_in, fan_out), layer) in self.layer_shapes().zip(layers) {
            if layer.weights.shape() != (fan_out, fan_in) || layer.bias.len() != fan_out {
                return Err(Error::dims(
                    "layer shape",
                    format!("{fan_out}x{fan_in}"),
                    format!("{}x{}", layer.weights.nrows(), layer.weights.ncols()),
                ));
            }
            for neuron in 0..fan_out {
                out.extend(layer.weights.row(neuron).iter());
                out.push(layer.bias[neuron]);
            }
        }
        Ok(out)
    }

    /// Evaluates the network on a batch (`samples x input_dim`), returning
    /// `samples x output_dim`.
    pub fn forward(&self, weights: &[f64], inputs: &Matrix) -> Result<Matrix> {
        if inputs.ncols() != self.input_dim {
            return Err(Error::dims("forward inputs", self.input_dim, inputs.ncols()));
        }
        let layers = self.unflatten(weights)?;
        let mut act = inputs.clone();
        for (idx, layer) in layers.iter().enumerate() {
            let activation = self.activation_for(idx);
            let mut z = &act * layer.weights.transpose();
            for mut row in z.row_iter_mut() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = activation.apply(*v + layer.bias[k]);
                }
            }
            act = z;
        }
        Ok(act)
    }

    /// Forward pass with outputs flattened sample-major into one vector.
    pub fn forward_flat(&self, weights: &[f64], inputs: &Matrix) -> Result<Vec<f64>> {
        let out = self.forward(weights, inputs)?;
        Ok(flatten_sample_major(&out))
    }

    /// Evaluates every column of `ensemble` (`N_m x N_e`) and returns the
    /// predictions as `N_d x N_e`, `N_d = samples * output_dim`.
    pub fn forward_ensemble(&self, ensemble: &Matrix, inputs: &Matrix) -> Result<Matrix> {
        NetworkModel::new(self.clone(), inputs.clone())?.evaluate_ensemble(ensemble)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vector,
}

/// Row-by-row flattening of a `samples x outputs` matrix.
pub fn flatten_sample_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for row in m.row_iter() {
        out.extend(row.iter());
    }
    out
}

/// Inverse of [`flatten_sample_major`].
pub fn unflatten_sample_major(values: &[f64], samples: usize, outputs: usize) -> Result<Matrix> {
    if values.len() != samples * outputs {
        return Err(Error::dims(
            "sample-major values",
            samples * outputs,
            values.len(),
        ));
    }
    Ok(Matrix::from_row_slice(samples, outputs, values))
}

/// Black-box access to a forward map `m -> g(m)`.
///
/// Only evaluations are exposed; the optimizer never sees derivatives.
pub trait ForwardModel: Sync {
    fn param_count(&self) -> usize;
    fn output_count(&self) -> usize;
    fn evaluate(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Evaluates each column of `params` (`param_count x N_e`).
    fn evaluate_ensemble(&self, params: &Matrix) -> Result<Matrix> {
        if params.nrows() != self.param_count() {
            return Err(Error::dims("ensemble rows", self.param_count(), params.nrows()));
        }
        let columns: Vec<Vec<f64>> = params
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let outputs = map_columns(&columns, |c| self.evaluate(c))?;
        let mut out = Matrix::zeros(self.output_count(), params.ncols());
        for (j, col) in outputs.iter().enumerate() {
            if col.len() != self.output_count() {
                return Err(Error::dims("forward output", self.output_count(), col.len()));
            }
            out.column_mut(j).copy_from_slice(col);
        }
        Ok(out)
    }
}

#[cfg(feature = "parallel")]
fn map_columns<F>(columns: &[Vec<f64>], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    columns.par_iter().map(|c| f(c)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_columns<F>(columns: &[Vec<f64>], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    columns.iter().map(|c| f(c)).collect()
}

/// A network bound to a fixed input batch.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    arch: NetworkArchitecture,
    inputs: Matrix,
}

impl NetworkModel {
    pub fn new(arch: NetworkArchitecture, inputs: Matrix) -> Result<Self> {
        if inputs.ncols() != arch.input_dim() {
            return Err(Error::dims("network inputs", arch.input_dim(), inputs.ncols()));
        }
        crate::numerics::ensure_finite(&inputs, "network inputs")?;
        Ok(Self { arch, inputs })
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }
}

impl ForwardModel for NetworkModel {
    fn param_count(&self) -> usize {
        self.arch.weight_count()
    }

    fn output_count(&self) -> usize {
        self.inputs.nrows() * self.arch.output_dim()
    }

    fn evaluate(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.arch.forward_flat(params, &self.inputs)
    }
}
