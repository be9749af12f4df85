//! Compares the analytic gradients of a small convolution with central differences.

use elacnn::nn::{Conv2d, Layer, Mode};
use elacnn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-2;

/// Loss `Σ out · probe`, so its gradient with respect to the output is `probe`.
fn loss(layer: &mut Layer, x: &Tensor, probe: &Tensor) -> f64 {
    let out = layer.forward(x, Mode::Eval).unwrap();
    out.data().iter().zip(probe.data()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut layer = Layer::Conv2d(Conv2d::glorot(3, 2, 4, &mut rng).unwrap());
    let x = Tensor::new(&[6, 7, 2], (0..84).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let probe = Tensor::new(&[4, 5, 4], (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

    layer.forward(&x, Mode::Train).unwrap();
    let grad_in = layer.backward(&probe).unwrap();

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut shifted = x.data().to_vec();
        shifted[i] += STEP as f32;
        let up = loss(&mut layer, &Tensor::new(x.dims(), shifted.clone()).unwrap(), &probe);
        shifted[i] -= 2.0 * STEP as f32;
        let down = loss(&mut layer, &Tensor::new(x.dims(), shifted).unwrap(), &probe);
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = f64::from(grad_in.data()[i]);
        worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6));
    }
    println!("input gradient: {} entries, worst relative error {worst:.2e}", x.len());
}
