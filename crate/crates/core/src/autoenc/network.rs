use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    pub fn derivative_from_output(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z * z,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Network depth: AEN1 has only the code layer; AEN2..AEN4 add one to three
/// hidden layers on each side of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Depth {
    Aen1,
    Aen2,
    Aen3,
    Aen4,
}

impl Depth {
    pub const ALL: [Depth; 4] = [Depth::Aen1, Depth::Aen2, Depth::Aen3, Depth::Aen4];

    /// Hidden layers between the input and the code.
    pub fn encoder_hidden_layers(self) -> usize {
        match self {
            Depth::Aen1 => 0,
            Depth::Aen2 => 1,
            Depth::Aen3 => 2,
            Depth::Aen4 => 3,
        }
    }

    /// Total hidden layers including the code (1, 3, 5 or 7).
    pub fn hidden_layers(self) -> usize {
        2 * self.encoder_hidden_layers() + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Depth::Aen1 => "aen1",
            Depth::Aen2 => "aen2",
            Depth::Aen3 => "aen3",
            Depth::Aen4 => "aen4",
        }
    }
}

/// Hidden layer sizes from the geometric pyramid rule: encoder layer `j` of `m`
/// gets `round(p (K/p)^(j/(m+1)))` units, then the code `K`, then the mirror image.
pub fn pyramid_sizes(p: usize, k: usize, encoder_hidden: usize) -> Vec<usize> {
    let ratio = k as f64 / p as f64;
    let encoder: Vec<usize> = (1..=encoder_hidden)
        .map(|j| {
            let size = (p as f64 * ratio.powf(j as f64 / (encoder_hidden + 1) as f64)).round() as usize;
            size.max(k)
        })
        .collect();
    let mut sizes = encoder.clone();
    sizes.push(k);
    sizes.extend(encoder.iter().rev());
    sizes
}

/// One dense layer: `z_out = act(z_in W + b)` with `W` of shape in x out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: DMatrix::zeros(inputs, outputs),
            bias: DVector::zeros(outputs),
        }
    }
}

/// Weights and biases of a symmetric autoencoder plus its activations.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub layers: Vec<Layer>,
    /// Activation of every hidden layer (including the code).
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Index of the layer whose output is the code.
    pub code_layer: usize,
}

impl AutoencoderParams {
    /// Layer dimensions `[p, hidden..., p]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weights.nrows()];
        d.extend(self.layers.iter().map(|l| l.weights.ncols()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.layers[self.code_layer].weights.ncols()
    }

    /// All-zero parameters for the given layer dimensions.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let layers: Vec<Layer> = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        let code_layer = (layers.len() / 2).saturating_sub(1);
        Self {
            layers,
            hidden_activation: hidden,
            output_activation: output,
            code_layer,
        }
    }

    /// Uniform initialisation in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot(dims: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(dims, hidden, output);
        for layer in &mut params.layers {
            let (fan_in, fan_out) = layer.weights.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        params
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Layer outputs `Z^(0) = X, Z^(1), ..., Z^(L)`.
    pub(crate) fn activations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut outs = Vec::with_capacity(self.layers.len() + 1);
        outs.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = outs[l].clone() * &layer.weights;
            let act = self.activation(l);
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
                for v in row.iter_mut() {
                    *v = act.apply(*v);
                }
            }
            outs.push(z);
        }
        outs
    }

    /// Code (bottleneck output) and reconstruction.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(x)?;
        let mut outs = self.activations(x);
        let recon = outs.pop().expect("at least one layer");
        Ok((outs.swap_remove(self.code_layer + 1), recon))
    }

    /// Bottleneck activations only.
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut z = x.clone();
        for (l, layer) in self.layers.iter().enumerate().take(self.code_layer + 1) {
            let act = self.activation(l);
            z = z * &layer.weights;
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
                for v in row.iter_mut() {
                    *v = act.apply(*v);
                }
            }
        }
        Ok(z)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Penalty weights entering the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossWeights {
    /// l1 penalty on code activations.
    pub activity_l1: f64,
    /// Squared-l2 penalty on code activations.
    pub activity_l2: f64,
    /// Squared-l2 penalty on every weight matrix.
    pub weight_decay: f64,
}

/// Mean squared reconstruction error per observation: `(1/n) sum_t |x_t - xhat_t|^2`.
pub fn reconstruction_loss(params: &AutoencoderParams, x: &DMatrix<f64>) -> Result<f64> {
    let (_, recon) = params.forward(x)?;
    Ok((recon - x).norm_squared() / x.nrows().max(1) as f64)
}

/// Training loss and its gradient.
///
/// `L = (1/n)|X - Xhat|^2 + (l1/n) sum|code| + (l2/n) sum code^2 + wd sum_l |W_l|^2`.
pub fn loss_and_gradient(
    params: &AutoencoderParams,
    x: &DMatrix<f64>,
    weights: &LossWeights,
) -> Result<(f64, Vec<Layer>)> {
    params.check(x)?;
    let n = x.nrows().max(1) as f64;
    let outs = params.activations(x);
    let n_layers = params.layers.len();
    let recon = &outs[n_layers];
    let code = &outs[params.code_layer + 1];

    let diff = recon - x;
    let mut loss = diff.norm_squared() / n
        + weights.activity_l1 * code.iter().map(|v| v.abs()).sum::<f64>() / n
        + weights.activity_l2 * code.norm_squared() / n;
    loss += weights.weight_decay * params.layers.iter().map(|l| l.weights.norm_squared()).sum::<f64>();

    let mut grads: Vec<Layer> = params
        .layers
        .iter()
        .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
        .collect();
    // dL/dZ^(L)
    let mut d_out = diff * (2.0 / n);
    for l in (0..n_layers).rev() {
        if l == params.code_layer {
            let c = &outs[l + 1];
            d_out += c.map(|v| weights.activity_l1 * v.signum() * (v != 0.0) as u8 as f64 / n
                + 2.0 * weights.activity_l2 * v / n);
        }
        let act = params.activation(l);
        let z = &outs[l + 1];
        let delta = d_out.zip_map(z, |g, zv| g * act.derivative_from_output(zv));
        let layer = &params.layers[l];
        grads[l].weights = outs[l].transpose() * &delta + &layer.weights * (2.0 * weights.weight_decay);
        grads[l].bias = delta.row_sum().transpose();
        if l > 0 {
            d_out = delta * layer.weights.transpose();
        }
    }
    Ok((loss, grads))
}
