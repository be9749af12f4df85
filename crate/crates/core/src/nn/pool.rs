use super::{batch_view, with_batch};
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// 2×2 max pooling with stride 2 over `(height, width, channels)` maps.
///
/// Ties go to the first position in row-major window order, and backward
/// routes each output gradient to that position only.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    // per output element, the flat input offset of its maximum
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        ensure!(input.len() == 3, "max pooling input must be (height, width, channels), got {input:?}");
        ensure!(
            input[0] % 2 == 0 && input[1] % 2 == 0,
            "2x2 pooling needs even extents, got {}x{}",
            input[0],
            input[1]
        );
        Ok(vec![input[0] / 2, input[1] / 2, input[2]])
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (out, argmax) = self.pool(x)?;
        self.argmax = Some((argmax, x.dims().to_vec()));
        Ok(out)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.pool(x).map(|(out, _)| out)
    }

    fn pool(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (n, item, batched) = batch_view(x, 3, "maxpool2d")?;
        let out_item = self.output_dims(&item)?;
        let (h, w, c) = (item[0], item[1], item[2]);
        let (oh, ow) = (out_item[0], out_item[1]);
        let src = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(out.capacity());
        for s in 0..n {
            let base = s * h * w * c;
            for y in 0..oh {
                for xo in 0..ow {
                    for ch in 0..c {
                        let at = |dy: usize, dx: usize| base + ((2 * y + dy) * w + 2 * xo + dx) * c + ch;
                        let mut best = at(0, 0);
                        for idx in [at(0, 1), at(1, 0), at(1, 1)] {
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                        out.push(src[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        Ok((with_batch(n, &out_item, batched, out)?, argmax))
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (argmax, in_dims) =
            self.argmax.as_ref().ok_or_else(|| Error::State("maxpool backward called before forward".into()))?;
        ensure!(grad_out.len() == argmax.len(), "pool gradient has {} elements, expected {}", grad_out.len(), argmax.len());
        let mut grad_in = vec![0.0f32; in_dims.iter().product()];
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            grad_in[idx] += g;
        }
        Tensor::new(in_dims, grad_in)
    }
}
