use super::batch_view;
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// `max(0, x)` elementwise.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Numerically stable softmax of a vector: `exp(x - max x)` normalised to sum 1.
pub fn softmax(x: &[f32]) -> Vec<f32> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Rectified linear unit. The derivative at exactly zero is taken as zero.
#[derive(Clone, Debug, Default)]
pub struct Relu {
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.active = Some(x.data().iter().map(|&v| v > 0.0).collect());
        relu(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let active = self.active.as_ref().ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        ensure!(active.len() == grad_out.len(), "relu gradient has {} elements, expected {}", grad_out.len(), active.len());
        let data = grad_out.data().iter().zip(active).map(|(&g, &on)| if on { g } else { 0.0 }).collect();
        Tensor::new(grad_out.dims(), data)
    }
}

/// Softmax over the last axis of a vector or a batch of vectors.
#[derive(Clone, Debug, Default)]
pub struct Softmax {
    output: Option<Tensor>,
}

impl Softmax {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.output = Some(out.clone());
        Ok(out)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (_, item, _) = batch_view(x, 1, "softmax")?;
        let data = x.data().chunks_exact(item[0]).flat_map(softmax).collect();
        Tensor::new(x.dims(), data)
    }

    /// Vector-Jacobian product: `p ⊙ (g − ⟨g, p⟩)` per row.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let p = self.output.as_ref().ok_or_else(|| Error::State("softmax backward called before forward".into()))?;
        ensure!(grad_out.shape() == p.shape(), "softmax gradient shape {} does not match {}", grad_out.shape(), p.shape());
        let width = *p.dims().last().expect("shapes are never empty");
        let mut data = Vec::with_capacity(p.len());
        for (pr, gr) in p.data().chunks_exact(width).zip(grad_out.data().chunks_exact(width)) {
            let dot: f32 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
            data.extend(pr.iter().zip(gr).map(|(&pi, &gi)| pi * (gi - dot)));
        }
        Tensor::new(p.dims(), data)
    }
}
