//! Symmetric tanh autoencoders whose bottleneck activations serve as latent
//! factors. Training is single-threaded and bit-reproducible for a fixed seed.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use network::{
    loss_and_gradient, pyramid_sizes, reconstruction_loss, Activation, AutoencoderParams, Depth, Layer, LossWeights,
};
pub use train::{train, train_with_report, AdamConfig, AutoencoderSpec, TrainReport};

use nalgebra::DMatrix;

use crate::Result;

/// Bottleneck activations of `x`.
pub fn encode(params: &AutoencoderParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    params.encode(x)
}

/// Code and reconstruction of `x`.
pub fn forward(params: &AutoencoderParams, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    params.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pyramid_rule_examples() {
        assert_eq!(pyramid_sizes(100, 5, 1), vec![22, 5, 22]);
        assert_eq!(pyramid_sizes(100, 5, 0), vec![5]);
        assert_eq!(pyramid_sizes(7, 7, 3), vec![7; 7]);
        // sizes never drop below the code
        assert!(pyramid_sizes(10, 9, 3).iter().all(|&s| s >= 9));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = AutoencoderParams::zeros(&[4, 3, 2, 3, 4], Activation::Tanh, Activation::Tanh);
        let x = DMatrix::from_fn(5, 4, |i, j| (i as f64 - j as f64) * 0.1);
        let (code, recon) = forward(&p, &x).unwrap();
        assert_eq!(code.shape(), (5, 2));
        assert!(code.iter().chain(recon.iter()).all(|v| *v == 0.0));
        assert!(encode(&p, &x).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_network_reconstructs_input() {
        let mut p = AutoencoderParams::zeros(&[3, 3, 3], Activation::Identity, Activation::Identity);
        p.layers[0].weights = DMatrix::identity(3, 3);
        p.layers[1].weights = DMatrix::identity(3, 3);
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 5.0);
        let (_, recon) = forward(&p, &x).unwrap();
        assert_eq!(recon, x);
    }

    #[test]
    fn encode_matches_forward_code_and_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = AutoencoderSpec::new(6, 2, Depth::Aen3);
        let p = AutoencoderParams::glorot(&spec.dims(), Activation::Tanh, Activation::Tanh, &mut rng);
        let x = DMatrix::from_fn(9, 6, |i, j| ((i * 6 + j) as f64).sin() * 3.0);
        let (code, recon) = forward(&p, &x).unwrap();
        assert_eq!(recon.shape(), x.shape());
        assert_eq!(encode(&p, &x).unwrap(), code);
        assert!(code.iter().all(|v| v.abs() < 1.0));
        assert!(forward(&p, &DMatrix::zeros(2, 5)).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = AutoencoderSpec::new(5, 2, Depth::Aen2);
        let p = AutoencoderParams::glorot(&spec.dims(), Activation::Tanh, Activation::Identity, &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), p);
        assert!(read_checkpoint("garbage\n".as_bytes()).is_err());
    }

    #[test]
    fn depth_layout() {
        for (d, hidden) in Depth::ALL.iter().zip([1, 3, 5, 7]) {
            assert_eq!(d.hidden_layers(), hidden);
            let spec = AutoencoderSpec::new(20, 3, *d);
            assert_eq!(spec.dims().len(), hidden + 2);
        }
    }
}
