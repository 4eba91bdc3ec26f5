use latentmv_core::autoenc::{
    loss_and_gradient, reconstruction_loss, train, train_with_report, Activation, AdamConfig, AutoencoderParams,
    AutoencoderSpec, Depth, LossWeights,
};
use latentmv_core::dimred::pca_fit;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(t: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(t, p, |_, _| StandardNormal.sample(&mut rng))
}

/// Largest relative gap between analytic and central-difference gradients.
fn worst_gradient_error(params: &AutoencoderParams, x: &DMatrix<f64>, w: &LossWeights) -> f64 {
    let (_, grads) = loss_and_gradient(params, x, w).unwrap();
    let h = 1e-6;
    let loss = |p: &AutoencoderParams| loss_and_gradient(p, x, w).unwrap().0;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((analytic - numeric).abs() / scale);
    };
    for l in 0..params.layers.len() {
        for i in 0..params.layers[l].weights.len() {
            let mut up = params.clone();
            up.layers[l].weights[i] += h;
            let mut down = params.clone();
            down.layers[l].weights[i] -= h;
            check(grads[l].weights[i], (loss(&up) - loss(&down)) / (2.0 * h));
        }
        for i in 0..params.layers[l].bias.len() {
            let mut up = params.clone();
            up.layers[l].bias[i] += h;
            let mut down = params.clone();
            down.layers[l].bias[i] -= h;
            check(grads[l].bias[i], (loss(&up) - loss(&down)) / (2.0 * h));
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_at_every_depth() {
    let x = gaussian(5, 4, 1) * 0.5;
    let weights = LossWeights {
        activity_l1: 1e-3,
        activity_l2: 1e-3,
        weight_decay: 1e-3,
    };
    for (i, depth) in Depth::ALL.into_iter().enumerate() {
        let spec = AutoencoderSpec::new(4, 2, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(10 + i as u64);
        let params = AutoencoderParams::glorot(&spec.dims(), Activation::Tanh, Activation::Tanh, &mut rng);
        let err = worst_gradient_error(&params, &x, &weights);
        assert!(err < 1e-4, "{depth:?}: {err:e}");
    }
}

#[test]
fn linear_autoencoder_matches_pca() {
    let (t, p, k) = (300, 10, 3);
    let x = gaussian(t, k, 2) * gaussian(k, p, 3) + gaussian(t, p, 4) * 0.1;
    let basis = pca_fit(&x, k).unwrap();
    let xc = latentmv_core::linalg::center_columns(&x, &basis.means);
    let pca_err = (&xc - &xc * &basis.weights * basis.weights.transpose()).norm_squared() / t as f64;

    let mut spec = AutoencoderSpec::new(p, k, Depth::Aen1);
    spec.hidden_activation = Activation::Identity;
    spec.output_activation = Activation::Identity;
    spec.weight_decay = 0.0;
    spec.adam = AdamConfig {
        step_size: 0.01,
        ..Default::default()
    };
    spec.max_epochs = 1500;
    spec.patience = 100;
    spec.seed = 5;
    let params = train(&spec, &x, &x).unwrap();
    let ae_err = reconstruction_loss(&params, &x).unwrap();
    assert!(ae_err <= 1.02 * pca_err, "autoencoder {ae_err} vs PCA {pca_err}");
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let x = gaussian(64, 6, 6).map(|v| 0.5 * v.tanh());
    let mut spec = AutoencoderSpec::new(6, 2, Depth::Aen2);
    spec.max_epochs = 60;
    spec.seed = 3;
    let (params, report) = train_with_report(&spec, &x, &x).unwrap();
    let val = reconstruction_loss(&params, &x).unwrap();
    assert!(val <= report.validation_losses[0]);
    let best = report.validation_losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(val, best);
    assert_eq!(report.validation_losses[report.best_epoch], best);

    // training drives the output towards 0.5 and past the validation target 0.1,
    // so the validation loss must turn up; stop at the first non-improvement
    spec.patience = 0;
    spec.max_epochs = 10_000;
    let x = x.map(|v| 0.5 + 0.01 * v);
    let shifted = x.map(|_| 0.1);
    let (params, report) = train_with_report(&spec, &x, &shifted).unwrap();
    assert!(report.stopped_early);
    assert!(report.best_epoch >= 1);
    assert_eq!(report.epochs_run, report.best_epoch + 1);
    let losses = &report.validation_losses;
    assert!(losses[report.epochs_run] >= losses[report.best_epoch]);
    assert_eq!(reconstruction_loss(&params, &shifted).unwrap(), losses[report.best_epoch]);
}

#[test]
fn training_is_reproducible() {
    let x = gaussian(50, 5, 7).map(|v| 0.4 * v);
    let mut spec = AutoencoderSpec::new(5, 2, Depth::Aen3);
    spec.max_epochs = 20;
    spec.seed = 42;
    assert_eq!(train(&spec, &x, &x).unwrap(), train(&spec, &x, &x).unwrap());
    let first = train(&spec, &x, &x).unwrap();
    spec.seed = 43;
    assert_ne!(first, train(&spec, &x, &x).unwrap());
}
