use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Inverted dropout: in training each element is kept with probability
/// `1 - rate` and divided by `1 - rate`; in evaluation it is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f32,
    rng: ChaCha8Rng,
    cache: Cache,
}

#[derive(Clone, Debug)]
enum Cache {
    Empty,
    Identity,
    Kept(Vec<bool>),
}

impl Dropout {
    pub fn new(rate: f32, seed: u64) -> Result<Self> {
        ensure!((0.0..1.0).contains(&rate), "dropout rate {rate} is outside [0, 1)");
        Ok(Self { rate, rng: ChaCha8Rng::seed_from_u64(seed), cache: Cache::Empty })
    }

    pub fn rate(&self) -> f32 {
        self.rate
    }

    fn keep_prob(&self) -> f32 {
        1.0 - self.rate
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.cache = Cache::Identity;
            return Ok(x.clone());
        }
        let keep = self.keep_prob();
        let kept: Vec<bool> = (0..x.len()).map(|_| self.rng.gen::<f32>() < keep).collect();
        let data = x.data().iter().zip(&kept).map(|(&v, &k)| if k { v / keep } else { 0.0 }).collect();
        self.cache = Cache::Kept(kept);
        Tensor::new(x.dims(), data)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match &self.cache {
            Cache::Empty => Err(Error::State("dropout backward called before forward".into())),
            Cache::Identity => Ok(grad_out.clone()),
            Cache::Kept(kept) => {
                ensure!(kept.len() == grad_out.len(), "dropout gradient has {} elements, expected {}", grad_out.len(), kept.len());
                let keep = self.keep_prob();
                let data = grad_out.data().iter().zip(kept).map(|(&g, &k)| if k { g / keep } else { 0.0 }).collect();
                Tensor::new(grad_out.dims(), data)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let x = Tensor::from_slice(&[1.0, -2.0, 3.5]).unwrap();
        let mut d = Dropout::new(0.0, 1).unwrap();
        assert_eq!(d.forward(&x, Mode::Train).unwrap(), x);
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn eval_is_bitwise_identity() {
        let x = Tensor::from_slice(&[0.1, -0.0, f32::MIN_POSITIVE]).unwrap();
        let mut d = Dropout::new(0.5, 1).unwrap();
        let y = d.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.to_bits(), x.to_bits());
        assert_eq!(d.backward(&x).unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn train_mean_is_preserved() {
        let x = Tensor::full(&[100_000], 1.0);
        let mut d = Dropout::new(0.25, 9).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        let mean = y.data().iter().map(|&v| f64::from(v)).sum::<f64>() / 1e5;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!((23_000..27_000).contains(&dropped));
    }

    #[test]
    fn backward_uses_the_same_mask() {
        let x = Tensor::full(&[64], 2.0);
        let mut d = Dropout::new(0.5, 3).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        let g = d.backward(&Tensor::full(&[64], 1.0)).unwrap();
        for (yv, gv) in y.data().iter().zip(g.data()) {
            assert_eq!(*yv == 0.0, *gv == 0.0);
            if *gv != 0.0 {
                assert_eq!(*gv, 2.0);
            }
        }
    }

    #[test]
    fn errors() {
        assert!(Dropout::new(1.0, 0).is_err());
        assert!(Dropout::new(-0.1, 0).is_err());
        assert!(matches!(Dropout::new(0.5, 0).unwrap().backward(&Tensor::zeros(&[1])), Err(Error::State(_))));
    }
}
