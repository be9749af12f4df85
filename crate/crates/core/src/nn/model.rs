use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{batch_view, with_batch, Conv2d, Dense, Dropout, MaxPool2d, Mode, Relu, Softmax};
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Input shape of the classifier: `(height, width, channels)`.
///
/// Nothing else is consistent with the published parameter counts: a 256-unit
/// dense layer with 29,491,456 parameters reads 115,200 = 60·60·32 features,
/// which un-pools to 120×120 and, through two valid 5×5 convolutions, to 128×128.
pub const PAPER_INPUT: [usize; 3] = [128, 128, 3];

const KERNEL: usize = 5;
const FILTERS: usize = 32;
const HIDDEN: usize = 256;
const CLASSES: usize = 2;

/// Collapses `(height, width, channels)` into one feature axis.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_item: Option<Vec<usize>>,
}

impl Flatten {
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (n, item, batched) = batch_view(x, 3, "flatten")?;
        with_batch(n, &[item.iter().product()], batched, x.data().to_vec())
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.input_item = Some(x.dims()[x.rank() - 3..].to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let item = self.input_item.as_ref().ok_or_else(|| Error::State("flatten backward called before forward".into()))?;
        let (n, _, batched) = batch_view(grad_out, 1, "flatten")?;
        with_batch(n, item, batched, grad_out.data().to_vec())
    }
}

/// One stage of the network.
#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu(Relu),
    MaxPool2d(MaxPool2d),
    Dropout(Dropout),
    Flatten(Flatten),
    Dense(Dense),
    Softmax(Softmax),
}

impl Layer {
    /// Stable name used in archives and tables.
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu(_) => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax(_) => "softmax",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(l) => l.param_count(),
            Layer::Dense(l) => l.param_count(),
            _ => 0,
        }
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(l) => l.output_dims(input),
            Layer::MaxPool2d(l) => l.output_dims(input),
            Layer::Flatten(_) => {
                ensure!(input.len() == 3, "flatten expects a rank-3 input, got {input:?}");
                Ok(vec![input.iter().product()])
            }
            Layer::Dense(l) => {
                ensure!(input == [l.in_features()], "dense layer expects {} features, got {input:?}", l.in_features());
                Ok(vec![l.out_features()])
            }
            Layer::Relu(_) | Layer::Dropout(_) | Layer::Softmax(_) => Ok(input.to_vec()),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Softmax(l) => l.forward(x),
        }
    }

    /// Evaluation-mode forward pass that leaves the layer untouched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.infer(x),
            Layer::Relu(_) => Ok(super::relu(x)),
            Layer::MaxPool2d(l) => l.infer(x),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::Softmax(l) => l.infer(x),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::MaxPool2d(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
            Layer::Dense(l) => l.backward(grad_out),
            Layer::Softmax(l) => l.backward(grad_out),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![l.weights(), l.bias()],
            Layer::Dense(l) => vec![l.weights(), l.bias()],
            _ => vec![],
        }
    }

    fn gradients(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![l.grad_weights(), l.grad_bias()],
            Layer::Dense(l) => vec![l.grad_weights(), l.grad_bias()],
            _ => vec![],
        }
    }
}

/// One row of a model summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub kind: &'static str,
    pub output_dims: Vec<usize>,
    pub param_count: usize,
}

/// The tamper classifier: conv → relu → conv → relu → pool → dropout →
/// flatten → dense → relu → dropout → dense → softmax.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<Layer>,
    mode: Mode,
    seed: u64,
    config_digest: String,
}

/// Builds the 12-stage classifier with seeded Glorot-uniform weights and zero biases.
pub fn build_paper_model(seed: u64) -> Model {
    Model::paper(seed)
}

impl Model {
    /// See [`build_paper_model`].
    pub fn paper(seed: u64) -> Self {
        Self::paper_with_init(seed, true)
    }

    /// The classifier with all parameters zero, ready to be filled from an archive.
    pub(crate) fn paper_zeroed(seed: u64) -> Self {
        Self::paper_with_init(seed, false)
    }

    fn paper_with_init(seed: u64, init: bool) -> Self {
        Self::try_paper(seed, init).expect("the fixed architecture is valid")
    }

    fn try_paper(seed: u64, init: bool) -> Result<Self> {
        let [h, w, c] = PAPER_INPUT;
        let pooled = ((h - 2 * (KERNEL - 1)) / 2) * ((w - 2 * (KERNEL - 1)) / 2) * FILTERS;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = |cin| {
            if init { Conv2d::glorot(KERNEL, cin, FILTERS, &mut rng) } else { Conv2d::new(KERNEL, cin, FILTERS) }
        };
        let conv1 = conv(c)?;
        let conv2 = conv(FILTERS)?;
        let mut dense = |fin, fout| if init { Dense::glorot(fin, fout, &mut rng) } else { Dense::new(fin, fout) };
        let hidden = dense(pooled, HIDDEN)?;
        let output = dense(HIDDEN, CLASSES)?;
        let layers = vec![
            Layer::Conv2d(conv1),
            Layer::Relu(Relu::new()),
            Layer::Conv2d(conv2),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::Dropout(Dropout::new(0.25, dropout_seed(seed, 5))?),
            Layer::Flatten(Flatten::default()),
            Layer::Dense(hidden),
            Layer::Relu(Relu::new()),
            Layer::Dropout(Dropout::new(0.5, dropout_seed(seed, 9))?),
            Layer::Dense(output),
            Layer::Softmax(Softmax::new()),
        ];
        Ok(Self { layers, mode: Mode::Eval, seed, config_digest: String::new() })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Digest of the configuration this model was trained under (empty if untrained).
    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn set_config_digest(&mut self, digest: impl Into<String>) {
        self.config_digest = digest.into();
    }

    /// Trainable parameter count of each layer that has parameters, in order.
    pub fn param_counts(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| l.param_count() > 0).map(Layer::param_count).collect()
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Per-layer kind, output shape and parameter count for a given input shape.
    pub fn summary(&self, input: &[usize]) -> Result<Vec<LayerSummary>> {
        let mut dims = input.to_vec();
        let mut rows = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            dims = layer.output_dims(&dims)?;
            rows.push(LayerSummary { kind: layer.kind(), output_dims: dims.clone(), param_count: layer.param_count() });
        }
        Ok(rows)
    }

    /// All trainable tensors in layer order, weights before bias.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    /// Gradients from the last [`Model::backward`], aligned with [`Model::parameters`].
    pub fn gradients(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::gradients).collect()
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(l) => out.extend(l.params_mut()),
                Layer::Dense(l) => out.extend(l.params_mut()),
                _ => {}
            }
        }
        out
    }

    /// Parameters paired with their gradients, for an optimiser step.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(l) => out.extend(l.parts_mut()),
                Layer::Dense(l) => out.extend(l.parts_mut()),
                _ => {}
            }
        }
        out
    }

    /// Replaces every parameter tensor; shapes must match [`Model::parameters`].
    pub fn load_parameters(&mut self, params: Vec<Tensor>) -> Result<()> {
        let mut slots = self.parameters_mut();
        ensure!(slots.len() == params.len(), "expected {} parameter tensors, got {}", slots.len(), params.len());
        for (slot, p) in slots.iter().zip(&params) {
            ensure!(slot.shape() == p.shape(), "parameter shape {} does not match {}", p.shape(), slot.shape());
        }
        for (slot, p) in slots.iter_mut().zip(params) {
            **slot = p;
        }
        Ok(())
    }

    /// Class probabilities for one `(128, 128, 3)` example, giving `(2)`, or a
    /// batch `(n, 128, 128, 3)`, giving `(n, 2)`. Activations are cached for
    /// [`Model::backward`]; dropout follows the model's mode.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mode = self.mode;
        let mut layers = self.layers.iter_mut();
        let first = layers.next().expect("model has layers");
        let mut h = first.forward(x, mode)?;
        for layer in layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Evaluation-mode forward pass with no caching and no mutation.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut layers = self.layers.iter();
        let mut h = layers.next().expect("model has layers").infer(x)?;
        for layer in layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let item = if x.rank() == 4 { &x.dims()[1..] } else { x.dims() };
        ensure!(item == PAPER_INPUT, "model input must be {PAPER_INPUT:?} per example, got {}", x.shape());
        Ok(())
    }

    /// Back-propagates the gradient of the loss with respect to the logits
    /// (the softmax input) and stores the gradient of every parameter.
    ///
    /// With the cross-entropy loss this is `p − y` per example, scaled by
    /// `1/n` for a batch mean.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let (last, rest) = self.layers.split_last_mut().expect("model has layers");
        ensure!(matches!(last, Layer::Softmax(_)), "model does not end in softmax");
        let item = grad_logits.dims().last().copied();
        ensure!(
            grad_logits.rank() <= 2 && item == Some(CLASSES),
            "logit gradient must be ({CLASSES}) or (n, {CLASSES}), got {}",
            grad_logits.shape()
        );
        let (first, middle) = rest.split_first_mut().expect("model has layers");
        let mut g = grad_logits.clone();
        for layer in middle.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        match first {
            Layer::Conv2d(conv) => conv.backward_params_only(&g),
            other => other.backward(&g).map(|_| ()),
        }
    }
}

fn dropout_seed(seed: u64, layer_index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(layer_index)
}
