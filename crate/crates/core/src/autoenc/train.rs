use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{
    loss_and_gradient, pyramid_sizes, reconstruction_loss, Activation, AutoencoderParams, Depth, Layer, LossWeights,
};
use crate::linalg::select_rows;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor.
struct Adam {
    config: AdamConfig,
    step: i32,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    fn new(config: AdamConfig, params: &AutoencoderParams) -> Self {
        let zeros: Vec<Layer> = params
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, params: &mut AutoencoderParams, grads: &[Layer]) {
        self.step += 1;
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let apply = |theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= step_size * m_hat / (v_hat.sqrt() + epsilon);
            }
        };
        for (l, layer) in params.layers.iter_mut().enumerate() {
            apply(
                layer.weights.as_mut_slice(),
                self.m[l].weights.as_mut_slice(),
                self.v[l].weights.as_mut_slice(),
                grads[l].weights.as_slice(),
            );
            apply(
                layer.bias.as_mut_slice(),
                self.m[l].bias.as_mut_slice(),
                self.v[l].bias.as_mut_slice(),
                grads[l].bias.as_slice(),
            );
        }
    }
}

/// Architecture and training settings of one autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub code_dim: usize,
    pub depth: Depth,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub activity_l1: f64,
    pub activity_l2: f64,
    pub weight_decay: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl AutoencoderSpec {
    pub fn new(input_dim: usize, code_dim: usize, depth: Depth) -> Self {
        Self {
            input_dim,
            code_dim,
            depth,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            activity_l1: 0.0,
            activity_l2: 0.0,
            weight_decay: 1e-5,
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            seed: 0,
        }
    }

    /// Full layer dimensions `[p, hidden..., p]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(pyramid_sizes(self.input_dim, self.code_dim, self.depth.encoder_hidden_layers()));
        d.push(self.input_dim);
        d
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            activity_l1: self.activity_l1,
            activity_l2: self.activity_l2,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.code_dim == 0 || self.code_dim > self.input_dim {
            return Err(Error::InvalidParameter(format!(
                "code dimension {} must lie in 1..={}",
                self.code_dim, self.input_dim
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidParameter("batch size and max epochs must be positive".into()));
        }
        if self.activity_l1 < 0.0 || self.activity_l2 < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter("penalties must be non-negative".into()));
        }
        Ok(())
    }
}

/// What happened during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation reconstruction loss; entry 0 is the initialisation.
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Train with Adam on shuffled mini-batches and keep the parameters of the
/// epoch with the lowest validation reconstruction loss.
pub fn train(spec: &AutoencoderSpec, x_train: &DMatrix<f64>, x_val: &DMatrix<f64>) -> Result<AutoencoderParams> {
    train_with_report(spec, x_train, x_val).map(|(p, _)| p)
}

pub fn train_with_report(
    spec: &AutoencoderSpec,
    x_train: &DMatrix<f64>,
    x_val: &DMatrix<f64>,
) -> Result<(AutoencoderParams, TrainReport)> {
    spec.validate()?;
    for (name, x) in [("training", x_train), ("validation", x_val)] {
        if x.ncols() != spec.input_dim {
            return Err(Error::Shape(format!(
                "{name} data has {} columns, expected {}",
                x.ncols(),
                spec.input_dim
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} data")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut params = AutoencoderParams::glorot(&spec.dims(), spec.hidden_activation, spec.output_activation, &mut rng);
    let weights = spec.loss_weights();
    let mut adam = Adam::new(spec.adam, &params);

    let mut best_loss = reconstruction_loss(&params, x_val)?;
    let mut best_params = params.clone();
    let mut report = TrainReport {
        validation_losses: vec![best_loss],
        best_epoch: 0,
        epochs_run: 0,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    let mut since_best = 0usize;

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let xb = select_rows(x_train, batch);
            let (loss, grads) = loss_and_gradient(&params, &xb, &weights)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step_size: spec.adam.step_size,
                });
            }
            adam.update(&mut params, &grads);
        }
        let val = reconstruction_loss(&params, x_val)?;
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step_size: spec.adam.step_size,
            });
        }
        report.validation_losses.push(val);
        report.epochs_run = epoch;
        if val < best_loss {
            best_loss = val;
            best_params = params.clone();
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > spec.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((best_params, report))
}
